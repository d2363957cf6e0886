#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "limtr/lidar_pipeline.hpp"
#include "limtr/nn.hpp"

namespace limtr {

// Two-stage encoder: shared MLPs + max-pool collapse the point axis per
// frame, then the flattened time axis is compressed to one 256-d feature.
// The three MLP blocks run at one hidden width each (point stage A, point
// stage B after the global-feature concat, time stage C).
struct EncoderConfig {
    int depth_per_block = 12;  // 2..14, step 2
    std::array<size_t, 3> block_widths = {256, 512, 1024};
    size_t out_dim = 256;
    size_t n_frames = 11;
    size_t n_points = 512;
    size_t in_dim = 7;
    double bn_momentum = 0.1;
    double bn_eps = 1e-5;

    void validate() const;
    std::vector<size_t> widths(int block) const {
        return std::vector<size_t>(static_cast<size_t>(depth_per_block),
                                   block_widths[static_cast<size_t>(block)]);
    }
    // Trainable + running-stat parameter count, computed from shapes alone.
    size_t param_count() const;
};

// Batch of targets with only the unmasked points kept. Segment s =
// target*n_frames + frame owns rows [seg_offset[s], seg_offset[s+1]).
struct PackedBatch {
    size_t n_targets = 0;
    size_t n_frames = 0;
    size_t dim = 0;
    Tensor rows;  // [total_valid_points, dim]
    std::vector<size_t> seg_offset;

    size_t total_rows() const { return rows.numel() == 0 ? 0 : rows.shape[0]; }
};

PackedBatch pack_tensors(const std::vector<const LidarTensor*>& tensors);

class LidarEncoder {
public:
    LidarEncoder(ParamStore& store, const EncoderConfig& config, Rng& init_rng);

    const EncoderConfig& config() const { return config_; }

    // Returns one feature row per target: [n_targets, out_dim].
    Tensor forward(const PackedBatch& batch, Mode mode);
    // Gradient wrt the packed input rows; parameter grads accumulate in the
    // store. Rows of frames that pooled empty receive exact zeros.
    Tensor backward(const Tensor& grad_features);

    // Single-target stage outputs, mainly for tests: frame features [T, C]
    // and the compressed [out_dim] vector.
    Tensor point_compress(const LidarTensor& tensor, Mode mode);
    Tensor time_compress(const Tensor& frame_features, Mode mode);

    // Rows (within their segment) that won some pooled max in the last
    // forward; drives the critical-set property test.
    std::vector<uint8_t> critical_rows() const;

private:
    EncoderConfig config_;
    MlpBlock block_a_;
    MlpBlock block_b_;
    MlpBlock block_c_;
    Linear projection_;

    // saved forward state
    std::vector<size_t> seg_offset_;
    size_t n_targets_ = 0;
    std::vector<size_t> argmax_a_, argmax_b_;  // per segment*width, SIZE_MAX if empty
    size_t rows_total_ = 0;
};

}  // namespace limtr
