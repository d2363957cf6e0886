#pragma once

#include <functional>
#include <string>
#include <vector>

namespace limtr {

// One flat array of values to perturb, with the matching analytic gradient
// buffer. Works for parameters and for inputs alike.
struct GradCheckTarget {
    std::string name;
    double* values = nullptr;
    const double* grads = nullptr;
    size_t count = 0;
};

struct GradCheckReport {
    double max_rel_error = 0.0;
    size_t checked = 0;
    std::string worst;  // "name[i]" of the worst element
    bool finite = true;
    std::string failure;  // set when a non-finite value was encountered

    bool passed(double tolerance) const { return finite && max_rel_error < tolerance; }
};

// Central finite differences: loss_fn evaluates the scalar objective for the
// current values (forward only, 64-bit); grad_fn runs forward+backward and
// leaves analytic gradients in the targets' grad buffers. Relative error per
// element is |a-n| / max(|a|, |n|, 0.01); the floor keeps finite-difference
// roundoff from dominating near-zero gradients.
GradCheckReport grad_check(const std::function<double()>& loss_fn,
                           const std::function<void()>& grad_fn,
                           const std::vector<GradCheckTarget>& targets, double step);

}  // namespace limtr
