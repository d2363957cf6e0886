#include "limtr/optim.hpp"

#include <cmath>
#include <stdexcept>

namespace limtr {

void OptimConfig::validate() const {
    if (!(beta1 > 0.0 && beta1 < 1.0) || !(beta2 > 0.0 && beta2 < 1.0))
        throw std::invalid_argument("OptimConfig: betas must lie in (0,1)");
    if (!(warmup_fraction >= 0.0 && warmup_fraction < 1.0))
        throw std::invalid_argument("OptimConfig: warmup_fraction must lie in [0,1)");
    if (lr_peak <= 0.0) throw std::invalid_argument("OptimConfig: lr_peak must be positive");
    if (epochs < 1 || batch_size < 2)
        throw std::invalid_argument("OptimConfig: epochs >= 1 and batch_size >= 2 required");
}

double lr_schedule(int step, int total_steps, const OptimConfig& config) {
    if (step < 0 || step > total_steps)
        throw std::invalid_argument("lr_schedule: step out of [0, total_steps]");
    const int warmup =
        static_cast<int>(std::ceil(config.warmup_fraction * static_cast<double>(total_steps)));
    if (warmup > 0 && step <= warmup)
        return config.lr_peak * (static_cast<double>(step) / static_cast<double>(warmup));
    if (total_steps == warmup) return config.lr_peak;
    return config.lr_peak * (static_cast<double>(total_steps - step) /
                             static_cast<double>(total_steps - warmup));
}

void AdamW::step(ParamStore& store, int t, double lr_t) {
    if (t < 1) throw std::invalid_argument("AdamW::step: t must be >= 1");
    if (m_.empty()) {
        for (const auto& p : store.params) {
            m_.emplace_back(p->value.shape);
            v_.emplace_back(p->value.shape);
        }
    }
    if (m_.size() != store.params.size())
        throw std::logic_error("AdamW::step: parameter count changed");

    double clip_factor = 1.0;
    if (config_.grad_clip > 0.0) {
        double sq = 0.0;
        for (const auto& p : store.params) {
            if (!p->trainable) continue;
            for (double g : p->grad.data) sq += g * g;
        }
        const double norm = std::sqrt(sq);
        if (norm > config_.grad_clip) clip_factor = config_.grad_clip / norm;
    }

    const double bc1 = 1.0 - std::pow(config_.beta1, t);
    const double bc2 = 1.0 - std::pow(config_.beta2, t);
    for (size_t i = 0; i < store.params.size(); ++i) {
        Param& p = *store.params[i];
        if (!p.trainable) continue;
        if (!p.grad.all_finite())
            throw std::runtime_error("non-finite gradient for parameter " + p.name);
        double* m = m_[i].ptr();
        double* v = v_[i].ptr();
        double* w = p.value.ptr();
        const double* g = p.grad.ptr();
        const size_t n = p.value.numel();
        for (size_t j = 0; j < n; ++j) {
            const double gj = g[j] * clip_factor;
            m[j] = config_.beta1 * m[j] + (1.0 - config_.beta1) * gj;
            v[j] = config_.beta2 * v[j] + (1.0 - config_.beta2) * gj * gj;
            const double m_hat = m[j] / bc1;
            const double v_hat = v[j] / bc2;
            w[j] -= lr_t * config_.weight_decay * w[j];
            w[j] -= lr_t * m_hat / (std::sqrt(v_hat) + config_.eps);
        }
    }
}

}  // namespace limtr
