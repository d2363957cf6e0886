#include "limtr/grad_check.hpp"

#include <cmath>

namespace limtr {

GradCheckReport grad_check(const std::function<double()>& loss_fn,
                           const std::function<void()>& grad_fn,
                           const std::vector<GradCheckTarget>& targets, double step) {
    GradCheckReport report;

    grad_fn();
    std::vector<std::vector<double>> analytic;
    analytic.reserve(targets.size());
    for (const auto& t : targets) analytic.emplace_back(t.grads, t.grads + t.count);

    for (size_t ti = 0; ti < targets.size(); ++ti) {
        const auto& t = targets[ti];
        for (size_t i = 0; i < t.count; ++i) {
            const double orig = t.values[i];
            t.values[i] = orig + step;
            const double f_plus = loss_fn();
            t.values[i] = orig - step;
            const double f_minus = loss_fn();
            t.values[i] = orig;

            const double numeric = (f_plus - f_minus) / (2.0 * step);
            const double a = analytic[ti][i];
            if (!std::isfinite(numeric) || !std::isfinite(a)) {
                report.finite = false;
                report.failure = t.name + "[" + std::to_string(i) + "]";
                return report;
            }
            const double denom = std::max({std::fabs(a), std::fabs(numeric), 0.01});
            const double rel = std::fabs(a - numeric) / denom;
            ++report.checked;
            if (rel > report.max_rel_error) {
                report.max_rel_error = rel;
                report.worst = t.name + "[" + std::to_string(i) + "]";
            }
        }
    }
    return report;
}

}  // namespace limtr
