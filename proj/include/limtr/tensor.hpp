#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <stdexcept>
#include <string>
#include <vector>

namespace limtr {

// Dense row-major tensor of doubles. Training math runs in double throughout;
// checkpoints store float32 payloads (see checkpoint.hpp).
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(std::vector<size_t> shape_in) : shape(std::move(shape_in)) {
        data.assign(numel_of(shape), 0.0);
    }
    Tensor(std::initializer_list<size_t> shape_in)
        : Tensor(std::vector<size_t>(shape_in)) {}

    static Tensor zeros(std::vector<size_t> shape) { return Tensor(std::move(shape)); }

    static Tensor from(std::vector<size_t> shape, std::vector<double> values) {
        Tensor t;
        t.shape = std::move(shape);
        if (numel_of(t.shape) != values.size())
            throw std::invalid_argument("Tensor::from: shape/data size mismatch");
        t.data = std::move(values);
        return t;
    }

    size_t numel() const { return data.size(); }
    size_t dim(size_t i) const { return shape.at(i); }
    size_t rank() const { return shape.size(); }

    double& at(size_t i) { return data[i]; }
    double at(size_t i) const { return data[i]; }
    double& at2(size_t r, size_t c) { return data[r * shape[1] + c]; }
    double at2(size_t r, size_t c) const { return data[r * shape[1] + c]; }

    double* ptr() { return data.data(); }
    const double* ptr() const { return data.data(); }

    void fill(double v) { data.assign(data.size(), v); }

    bool all_finite() const;

    std::string shape_str() const;

    static size_t numel_of(const std::vector<size_t>& shape);

    std::vector<size_t> shape;
    std::vector<double> data;
};

// Fixed-partition parallel loop. Each index is processed by exactly one
// worker and no cross-worker reductions exist, so results are bit-identical
// for any worker count. Worker count comes from LIMTR_THREADS (default:
// hardware concurrency, capped at 8).
void parallel_for(size_t n, const std::function<void(size_t, size_t)>& body);
int worker_count();

// y[r,o] = sum_i x[r,i] * w[o,i] + b[o]       (x: rows x in, w: out x in)
void linear_fwd(const double* x, const double* w, const double* b, double* y,
                size_t rows, size_t in_dim, size_t out_dim);

// gx[r,i] = sum_o gy[r,o] * w[o,i]
void linear_bwd_input(const double* gy, const double* w, double* gx,
                      size_t rows, size_t in_dim, size_t out_dim);

// gw[o,i] += sum_r gy[r,o] * x[r,i];  gb[o] += sum_r gy[r,o]
void linear_bwd_params(const double* gy, const double* x, double* gw, double* gb,
                       size_t rows, size_t in_dim, size_t out_dim);

}  // namespace limtr
