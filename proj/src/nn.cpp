#include "limtr/nn.hpp"

#include <cmath>
#include <stdexcept>

namespace limtr {

Param& ParamStore::add(const std::string& name, std::vector<size_t> shape, bool trainable) {
    if (find(name)) throw std::logic_error("duplicate parameter name: " + name);
    auto p = std::make_unique<Param>();
    p->name = name;
    p->value = Tensor(shape);
    p->grad = Tensor(shape);
    p->trainable = trainable;
    params.push_back(std::move(p));
    return *params.back();
}

Param* ParamStore::find(const std::string& name) {
    for (auto& p : params)
        if (p->name == name) return p.get();
    return nullptr;
}

const Param* ParamStore::find(const std::string& name) const {
    for (auto& p : params)
        if (p->name == name) return p.get();
    return nullptr;
}

void ParamStore::zero_grads() {
    for (auto& p : params) p->grad.fill(0.0);
}

size_t ParamStore::trainable_numel() const {
    size_t n = 0;
    for (auto& p : params)
        if (p->trainable) n += p->value.numel();
    return n;
}

bool ParamStore::grads_finite(std::string* offender) const {
    for (auto& p : params) {
        if (!p->trainable) continue;
        if (!p->grad.all_finite()) {
            if (offender) *offender = p->name;
            return false;
        }
    }
    return true;
}

namespace {

size_t rows_of(const Tensor& x, size_t last_dim, const char* who) {
    if (x.rank() == 0 || x.shape.back() != last_dim)
        throw std::invalid_argument(std::string(who) + ": input shape " + x.shape_str() +
                                    " does not end in dimension " + std::to_string(last_dim));
    return x.numel() / last_dim;
}

}  // namespace

Linear::Linear(ParamStore& store, const std::string& name, size_t in_dim, size_t out_dim,
               Rng& init_rng)
    : in_dim_(in_dim), out_dim_(out_dim) {
    if (in_dim == 0 || out_dim == 0)
        throw std::invalid_argument("Linear " + name + ": dimensions must be positive");
    weight_ = &store.add(name + "/weight", {out_dim, in_dim});
    bias_ = &store.add(name + "/bias", {out_dim});
    const double bound = std::sqrt(1.0 / static_cast<double>(in_dim));
    for (auto& v : weight_->value.data) v = init_rng.uniform(-bound, bound);
}

Tensor Linear::forward_impl(Tensor x) {
    const size_t rows = rows_of(x, in_dim_, "linear_forward");
    std::vector<size_t> out_shape = x.shape;
    out_shape.back() = out_dim_;
    Tensor y(out_shape);
    linear_fwd(x.ptr(), weight_->value.ptr(), bias_->value.ptr(), y.ptr(), rows, in_dim_,
               out_dim_);
    saved_input_ = std::move(x);
    has_saved_ = true;
    return y;
}

Tensor Linear::backward(const Tensor& grad_out) {
    if (!has_saved_) throw std::logic_error("linear_backward: no saved input from forward");
    const size_t rows = rows_of(grad_out, out_dim_, "linear_backward");
    if (rows != saved_input_.numel() / in_dim_)
        throw std::invalid_argument("linear_backward: grad shape " + grad_out.shape_str() +
                                    " does not match forward input " + saved_input_.shape_str());
    Tensor gx(saved_input_.shape);
    linear_bwd_input(grad_out.ptr(), weight_->value.ptr(), gx.ptr(), rows, in_dim_, out_dim_);
    linear_bwd_params(grad_out.ptr(), saved_input_.ptr(), weight_->grad.ptr(),
                      bias_->grad.ptr(), rows, in_dim_, out_dim_);
    return gx;
}

BatchNorm::BatchNorm(ParamStore& store, const std::string& name, size_t dim, double momentum,
                     double eps)
    : dim_(dim), momentum_(momentum), eps_(eps) {
    if (dim == 0) throw std::invalid_argument("BatchNorm " + name + ": dim must be positive");
    if (!(momentum > 0.0 && momentum < 1.0))
        throw std::invalid_argument("BatchNorm " + name + ": momentum must be in (0,1)");
    gamma_ = &store.add(name + "/gamma", {dim});
    beta_ = &store.add(name + "/beta", {dim});
    running_mean_ = &store.add(name + "/running_mean", {dim}, /*trainable=*/false);
    running_var_ = &store.add(name + "/running_var", {dim}, /*trainable=*/false);
    gamma_->value.fill(1.0);
    for (auto& v : running_var_->value.data) v = 1.0;
}

Tensor BatchNorm::forward(const Tensor& x, Mode mode, const std::vector<uint8_t>* row_mask) {
    const size_t rows = rows_of(x, dim_, "batchnorm_forward");
    if (row_mask && row_mask->size() != rows)
        throw std::invalid_argument("batchnorm_forward: mask length " +
                                    std::to_string(row_mask->size()) + " vs rows " +
                                    std::to_string(rows));
    Tensor y(x.shape);
    saved_mode_ = mode;
    saved_rows_ = rows;
    saved_mask_.clear();
    if (row_mask) saved_mask_ = *row_mask;

    const double* g = gamma_->value.ptr();
    const double* b = beta_->value.ptr();

    if (mode == Mode::kEval) {
        const double* rm = running_mean_->value.ptr();
        const double* rv = running_var_->value.ptr();
        std::vector<double> inv(dim_);
        for (size_t d = 0; d < dim_; ++d) inv[d] = 1.0 / std::sqrt(rv[d] + eps_);
        parallel_for(rows, [&](size_t r0, size_t r1) {
            for (size_t r = r0; r < r1; ++r)
                for (size_t d = 0; d < dim_; ++d)
                    y.data[r * dim_ + d] = g[d] * (x.data[r * dim_ + d] - rm[d]) * inv[d] + b[d];
        });
        saved_xhat_ = x;  // eval backward only needs shapes; keep input for symmetry
        saved_inv_std_ = std::move(inv);
        has_saved_ = true;
        return y;
    }

    size_t count = 0;
    if (row_mask) {
        for (uint8_t m : *row_mask) count += (m != 0);
    } else {
        count = rows;
    }
    if (count < 2)
        throw std::invalid_argument("batchnorm_forward: degenerate batch, " +
                                    std::to_string(count) + " unmasked row(s) in train mode");

    std::vector<double> mean(dim_, 0.0), var(dim_, 0.0), inv(dim_);
    for (size_t r = 0; r < rows; ++r) {
        if (row_mask && !(*row_mask)[r]) continue;
        const double* xr = x.ptr() + r * dim_;
        for (size_t d = 0; d < dim_; ++d) mean[d] += xr[d];
    }
    for (size_t d = 0; d < dim_; ++d) mean[d] /= static_cast<double>(count);
    for (size_t r = 0; r < rows; ++r) {
        if (row_mask && !(*row_mask)[r]) continue;
        const double* xr = x.ptr() + r * dim_;
        for (size_t d = 0; d < dim_; ++d) {
            const double c = xr[d] - mean[d];
            var[d] += c * c;
        }
    }
    // Population variance (divide by count), matching the running statistics.
    for (size_t d = 0; d < dim_; ++d) {
        var[d] /= static_cast<double>(count);
        inv[d] = 1.0 / std::sqrt(var[d] + eps_);
    }

    double* rm = running_mean_->value.ptr();
    double* rv = running_var_->value.ptr();
    for (size_t d = 0; d < dim_; ++d) {
        rm[d] = (1.0 - momentum_) * rm[d] + momentum_ * mean[d];
        rv[d] = (1.0 - momentum_) * rv[d] + momentum_ * var[d];
    }

    Tensor xhat(x.shape);
    parallel_for(rows, [&](size_t r0, size_t r1) {
        for (size_t r = r0; r < r1; ++r) {
            for (size_t d = 0; d < dim_; ++d) {
                const double h = (x.data[r * dim_ + d] - mean[d]) * inv[d];
                xhat.data[r * dim_ + d] = h;
                y.data[r * dim_ + d] = g[d] * h + b[d];
            }
        }
    });
    saved_xhat_ = std::move(xhat);
    saved_inv_std_ = std::move(inv);
    saved_count_ = count;
    has_saved_ = true;
    return y;
}

Tensor BatchNorm::backward(const Tensor& grad_out) {
    if (!has_saved_) throw std::logic_error("batchnorm backward: no saved forward state");
    const size_t rows = rows_of(grad_out, dim_, "batchnorm backward");
    if (rows != saved_rows_)
        throw std::invalid_argument("batchnorm backward: row count changed since forward");

    const double* g = gamma_->value.ptr();
    Tensor gx(grad_out.shape);

    if (saved_mode_ == Mode::kEval) {
        parallel_for(rows, [&](size_t r0, size_t r1) {
            for (size_t r = r0; r < r1; ++r)
                for (size_t d = 0; d < dim_; ++d) {
                    const size_t i = r * dim_ + d;
                    gx.data[i] = grad_out.data[i] * g[d] * saved_inv_std_[d];
                    // xhat for grads of gamma/beta in eval mode
                }
        });
        // gamma/beta grads still accumulate in eval mode (used by grad checks).
        const double* rm = running_mean_->value.ptr();
        for (size_t d = 0; d < dim_; ++d) {
            double gg = 0.0, gb = 0.0;
            for (size_t r = 0; r < rows; ++r) {
                const size_t i = r * dim_ + d;
                const double xhat = (saved_xhat_.data[i] - rm[d]) * saved_inv_std_[d];
                gg += grad_out.data[i] * xhat;
                gb += grad_out.data[i];
            }
            gamma_->grad.data[d] += gg;
            beta_->grad.data[d] += gb;
        }
        return gx;
    }

    const bool masked = !saved_mask_.empty();
    const double n = static_cast<double>(saved_count_);

    // Every row's output depends on the statistics, but only stat (unmasked)
    // rows feed them. With G = sum_all g, GX = sum_all g*xhat:
    //   masked row:  dx = gamma*inv*g
    //   stat row:    dx = gamma*inv*(g - G/n - xhat*GX/n)
    parallel_for(dim_, [&](size_t d0, size_t d1) {
        for (size_t d = d0; d < d1; ++d) {
            double sum_g = 0.0, sum_g_xhat = 0.0;
            double gg = 0.0, gb = 0.0;
            for (size_t r = 0; r < rows; ++r) {
                const size_t i = r * dim_ + d;
                const double go = grad_out.data[i];
                const double xh = saved_xhat_.data[i];
                gg += go * xh;
                gb += go;
                sum_g += go;
                sum_g_xhat += go * xh;
            }
            gamma_->grad.data[d] += gg;
            beta_->grad.data[d] += gb;

            const double inv = saved_inv_std_[d];
            const double gd = g[d];
            for (size_t r = 0; r < rows; ++r) {
                const size_t i = r * dim_ + d;
                const double go = grad_out.data[i];
                if (!masked || saved_mask_[r]) {
                    gx.data[i] =
                        gd * inv * (go - sum_g / n - saved_xhat_.data[i] * sum_g_xhat / n);
                } else {
                    gx.data[i] = gd * inv * go;
                }
            }
        }
    });
    return gx;
}

Tensor relu(const Tensor& x) {
    Tensor y(x.shape);
    for (size_t i = 0; i < x.numel(); ++i) y.data[i] = x.data[i] > 0.0 ? x.data[i] : 0.0;
    return y;
}

Tensor relu_backward(const Tensor& grad_out, const Tensor& saved_input) {
    if (grad_out.shape != saved_input.shape)
        throw std::invalid_argument("relu_backward: grad shape " + grad_out.shape_str() +
                                    " vs input " + saved_input.shape_str());
    Tensor gx(grad_out.shape);
    for (size_t i = 0; i < gx.numel(); ++i)
        gx.data[i] = saved_input.data[i] > 0.0 ? grad_out.data[i] : 0.0;
    return gx;
}

MaxPoolResult masked_maxpool(const Tensor& x, const std::vector<uint8_t>& mask) {
    if (x.rank() != 2)
        throw std::invalid_argument("masked_maxpool: expected rank-2 input, got " +
                                    x.shape_str());
    const size_t n = x.shape[0], dim = x.shape[1];
    if (mask.size() != n)
        throw std::invalid_argument("masked_maxpool: mask length " +
                                    std::to_string(mask.size()) + " vs rows " +
                                    std::to_string(n));
    MaxPoolResult res;
    res.values = Tensor({dim});
    res.argmax.assign(dim, 0);
    bool any = false;
    for (size_t r = 0; r < n; ++r) {
        if (!mask[r]) continue;
        const double* xr = x.ptr() + r * dim;
        if (!any) {
            for (size_t d = 0; d < dim; ++d) {
                res.values.data[d] = xr[d];
                res.argmax[d] = r;
            }
            any = true;
            continue;
        }
        for (size_t d = 0; d < dim; ++d) {
            if (xr[d] > res.values.data[d]) {  // strict: ties keep the lowest row
                res.values.data[d] = xr[d];
                res.argmax[d] = r;
            }
        }
    }
    if (!any) throw std::invalid_argument("masked_maxpool: empty pool, all rows masked");
    return res;
}

Tensor masked_maxpool_backward(const Tensor& grad_out, const std::vector<size_t>& argmax,
                               size_t n_rows, size_t dim) {
    if (grad_out.numel() != dim || argmax.size() != dim)
        throw std::invalid_argument("masked_maxpool_backward: dim mismatch");
    Tensor gx({n_rows, dim});
    for (size_t d = 0; d < dim; ++d) gx.data[argmax[d] * dim + d] += grad_out.data[d];
    return gx;
}

void segmented_maxpool(const Tensor& rows, const std::vector<size_t>& seg_offset,
                       Tensor& pooled, std::vector<size_t>& argmax) {
    const size_t segments = seg_offset.size() - 1;
    const size_t dim = rows.rank() == 2 ? rows.shape[1] : 0;
    pooled = Tensor({segments, dim});
    argmax.assign(segments * dim, SIZE_MAX);
    for (size_t s = 0; s < segments; ++s) {
        const size_t b = seg_offset[s], e = seg_offset[s + 1];
        if (b == e) continue;  // empty frame pools to zero
        double* out = pooled.ptr() + s * dim;
        size_t* am = argmax.data() + s * dim;
        const double* first = rows.ptr() + b * dim;
        for (size_t d = 0; d < dim; ++d) {
            out[d] = first[d];
            am[d] = b;
        }
        for (size_t r = b + 1; r < e; ++r) {
            const double* xr = rows.ptr() + r * dim;
            for (size_t d = 0; d < dim; ++d) {
                if (xr[d] > out[d]) {
                    out[d] = xr[d];
                    am[d] = r;
                }
            }
        }
    }
}

MlpBlock::MlpBlock(ParamStore& store, const std::string& name, size_t in_dim,
                   const std::vector<size_t>& widths, Rng& init_rng, double bn_momentum,
                   double bn_eps)
    : in_dim_(in_dim), widths_(widths) {
    if (widths.empty()) throw std::invalid_argument("MlpBlock " + name + ": empty widths");
    size_t d = in_dim;
    for (size_t i = 0; i < widths.size(); ++i) {
        const std::string li = name + "/layer" + std::to_string(i);
        linears_.emplace_back(store, li, d, widths[i], init_rng);
        bns_.emplace_back(store, li + "/bn", widths[i], bn_momentum, bn_eps);
        d = widths[i];
    }
}

Tensor MlpBlock::forward(const Tensor& x, Mode mode, const std::vector<uint8_t>* row_mask) {
    saved_preact_.clear();
    Tensor h = x;
    for (size_t i = 0; i < linears_.size(); ++i) {
        h = linears_[i].forward(std::move(h));
        h = bns_[i].forward(h, mode, row_mask);
        saved_preact_.push_back(h);
        for (auto& v : h.data) v = v > 0.0 ? v : 0.0;  // relu in place
    }
    return h;
}

Tensor MlpBlock::backward(const Tensor& grad_out) {
    if (saved_preact_.size() != linears_.size())
        throw std::logic_error("MlpBlock backward: forward state missing");
    Tensor g = grad_out;
    for (size_t i = linears_.size(); i-- > 0;) {
        g = relu_backward(g, saved_preact_[i]);
        g = bns_[i].backward(g);
        g = linears_[i].backward(g);
    }
    return g;
}

}  // namespace limtr
