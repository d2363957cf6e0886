#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "limtr/rng.hpp"
#include "limtr/tensor.hpp"

namespace limtr {

enum class Mode { kTrain, kEval };

// Named parameter with its gradient buffer. BatchNorm running statistics are
// registered as non-trainable so the optimizer and gradient checks skip them
// while checkpointing still captures them.
struct Param {
    std::string name;
    Tensor value;
    Tensor grad;
    bool trainable = true;
};

class ParamStore {
public:
    Param& add(const std::string& name, std::vector<size_t> shape, bool trainable = true);
    Param* find(const std::string& name);
    const Param* find(const std::string& name) const;
    void zero_grads();
    size_t trainable_numel() const;
    bool grads_finite(std::string* offender) const;

    std::vector<std::unique_ptr<Param>> params;
};

class Linear {
public:
    Linear(ParamStore& store, const std::string& name, size_t in_dim, size_t out_dim,
           Rng& init_rng);

    // x may carry any leading axes; the last axis must equal in_dim (shared
    // MLP semantics). Saves the input for backward; the rvalue overload
    // avoids copying it.
    Tensor forward(const Tensor& x) { return forward_impl(Tensor(x)); }
    Tensor forward(Tensor&& x) { return forward_impl(std::move(x)); }
    // Returns grad wrt input; accumulates weight/bias grads.
    Tensor backward(const Tensor& grad_out);

    size_t in_dim() const { return in_dim_; }
    size_t out_dim() const { return out_dim_; }
    Param& weight() { return *weight_; }
    Param& bias() { return *bias_; }

private:
    Tensor forward_impl(Tensor x);

    size_t in_dim_, out_dim_;
    Param* weight_;
    Param* bias_;
    Tensor saved_input_;
    bool has_saved_ = false;
};

class BatchNorm {
public:
    BatchNorm(ParamStore& store, const std::string& name, size_t dim,
              double momentum = 0.1, double eps = 1e-5);

    // x is rows x dim. In train mode statistics are computed over unmasked
    // rows (population variance) and running stats are updated; masked rows
    // are normalized with the same statistics but contribute nothing to them.
    // Train mode requires at least 2 unmasked rows.
    Tensor forward(const Tensor& x, Mode mode, const std::vector<uint8_t>* row_mask = nullptr);
    Tensor backward(const Tensor& grad_out);

    size_t dim() const { return dim_; }
    Param& gamma() { return *gamma_; }
    Param& beta() { return *beta_; }
    Param& running_mean() { return *running_mean_; }
    Param& running_var() { return *running_var_; }

private:
    size_t dim_;
    double momentum_, eps_;
    Param *gamma_, *beta_, *running_mean_, *running_var_;

    Mode saved_mode_ = Mode::kEval;
    Tensor saved_xhat_;           // rows x dim (train) / input (eval)
    std::vector<double> saved_inv_std_;  // per dim
    std::vector<uint8_t> saved_mask_;    // empty = all rows in stats
    size_t saved_rows_ = 0;
    size_t saved_count_ = 0;
    bool has_saved_ = false;
};

Tensor relu(const Tensor& x);
// Gradient gated by saved_input > 0; the derivative at exactly 0 is 0.
Tensor relu_backward(const Tensor& grad_out, const Tensor& saved_input);

struct MaxPoolResult {
    Tensor values;                  // [dim]
    std::vector<size_t> argmax;     // row index per feature, ties -> lowest row
};

// Per-feature max over unmasked rows of x (n x dim). Throws if no row is
// unmasked: callers must guarantee at least one valid point.
MaxPoolResult masked_maxpool(const Tensor& x, const std::vector<uint8_t>& mask);

// Scatter grad_out into an n x dim zero tensor at the recorded argmax rows.
Tensor masked_maxpool_backward(const Tensor& grad_out, const std::vector<size_t>& argmax,
                               size_t n_rows, size_t dim);

// Segmented variant over packed rows: segment s covers rows
// [seg_offset[s], seg_offset[s+1]). Empty segments pool to zeros with argmax
// entries of SIZE_MAX.
void segmented_maxpool(const Tensor& rows, const std::vector<size_t>& seg_offset,
                       Tensor& pooled, std::vector<size_t>& argmax);

// Stack of (linear -> batchnorm -> relu) layers with one output width per
// layer. All layers share the row axis, so the block applies pointwise over
// whatever the rows represent (points, timesteps, batch entries).
class MlpBlock {
public:
    MlpBlock(ParamStore& store, const std::string& name, size_t in_dim,
             const std::vector<size_t>& widths, Rng& init_rng,
             double bn_momentum = 0.1, double bn_eps = 1e-5);

    Tensor forward(const Tensor& x, Mode mode, const std::vector<uint8_t>* row_mask = nullptr);
    Tensor backward(const Tensor& grad_out);

    size_t depth() const { return linears_.size(); }
    size_t in_dim() const { return in_dim_; }
    size_t out_dim() const { return widths_.empty() ? in_dim_ : widths_.back(); }
    const std::vector<size_t>& widths() const { return widths_; }

private:
    size_t in_dim_;
    std::vector<size_t> widths_;
    std::vector<Linear> linears_;
    std::vector<BatchNorm> bns_;
    std::vector<Tensor> saved_preact_;  // BN outputs, gates for relu backward
};

}  // namespace limtr
