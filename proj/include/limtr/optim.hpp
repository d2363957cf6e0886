#pragma once

#include <cstdint>
#include <vector>

#include "limtr/nn.hpp"

namespace limtr {

struct OptimConfig {
    double lr_peak = 3e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.01;
    double warmup_fraction = 0.05;
    int epochs = 60;
    int batch_size = 32;  // targets per optimizer step
    uint64_t seed = 0;
    double grad_clip = 0.0;  // global-norm clip; 0 disables (default)

    void validate() const;
};

// Linear warmup to lr_peak over ceil(warmup_fraction * total_steps) steps,
// then linear decay to exactly 0 at total_steps.
double lr_schedule(int step, int total_steps, const OptimConfig& config);

// Decoupled weight decay plus bias-corrected Adam; eps sits next to the
// square root in the denominator (update = m_hat / (sqrt(v_hat) + eps)).
class AdamW {
public:
    explicit AdamW(const OptimConfig& config) : config_(config) { config.validate(); }

    // t is the 1-based step index. Throws on non-finite gradients, naming
    // the parameter.
    void step(ParamStore& store, int t, double lr_t);

private:
    OptimConfig config_;
    std::vector<Tensor> m_, v_;
};

}  // namespace limtr
