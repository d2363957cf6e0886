#include "limtr/encoder.hpp"

#include <cstring>
#include <stdexcept>

namespace limtr {

void EncoderConfig::validate() const {
    if (depth_per_block < 2 || depth_per_block > 14 || depth_per_block % 2 != 0)
        throw std::invalid_argument("encoder depth must be one of 2,4,...,14, got " +
                                    std::to_string(depth_per_block));
    if (out_dim != 256) throw std::invalid_argument("encoder out_dim is fixed at 256");
    for (size_t w : block_widths)
        if (w == 0) throw std::invalid_argument("encoder block widths must be positive");
    if (n_frames == 0 || n_points == 0 || in_dim == 0)
        throw std::invalid_argument("encoder n_frames/n_points/in_dim must be positive");
}

size_t EncoderConfig::param_count() const {
    size_t total = 0;
    auto count_block = [&](size_t in, const std::vector<size_t>& ws) {
        size_t d = in;
        for (size_t w : ws) {
            total += d * w + w;  // linear
            total += 4 * w;      // bn gamma/beta/running mean/var
            d = w;
        }
        return d;
    };
    size_t ca = count_block(in_dim, widths(0));
    size_t cb = count_block(2 * ca, widths(1));
    size_t cc = count_block(n_frames * cb, widths(2));
    total += cc * out_dim + out_dim;
    return total;
}

PackedBatch pack_tensors(const std::vector<const LidarTensor*>& tensors) {
    if (tensors.empty()) throw std::invalid_argument("pack_tensors: empty batch");
    PackedBatch batch;
    batch.n_targets = tensors.size();
    batch.n_frames = tensors[0]->n_frames;
    batch.dim = tensors[0]->dim;

    size_t total = 0;
    for (const auto* t : tensors) {
        if (t->n_frames != batch.n_frames || t->dim != batch.dim)
            throw std::invalid_argument("pack_tensors: mixed tensor shapes in batch");
        for (uint8_t m : t->mask) total += (m != 0);
    }
    batch.rows = Tensor({total, batch.dim});
    batch.seg_offset.assign(batch.n_targets * batch.n_frames + 1, 0);

    size_t row = 0, seg = 0;
    for (const auto* t : tensors) {
        for (size_t f = 0; f < t->n_frames; ++f) {
            batch.seg_offset[seg++] = row;
            for (size_t p = 0; p < t->n_points; ++p) {
                if (!t->mask_at(f, p)) continue;
                std::memcpy(batch.rows.ptr() + row * batch.dim,
                            t->data.ptr() + (f * t->n_points + p) * t->dim,
                            batch.dim * sizeof(double));
                ++row;
            }
        }
    }
    batch.seg_offset[seg] = row;
    return batch;
}


LidarEncoder::LidarEncoder(ParamStore& store, const EncoderConfig& config, Rng& init_rng)
    : config_((config.validate(), config)),
      block_a_(store, "encoder/point_a", config.in_dim, config.widths(0), init_rng,
               config.bn_momentum, config.bn_eps),
      block_b_(store, "encoder/point_b", 2 * config.block_widths[0], config.widths(1),
               init_rng, config.bn_momentum, config.bn_eps),
      block_c_(store, "encoder/time_c", config.n_frames * config.block_widths[1],
               config.widths(2), init_rng, config.bn_momentum, config.bn_eps),
      projection_(store, "encoder/projection", config.block_widths[2], config.out_dim,
                  init_rng) {}

Tensor LidarEncoder::forward(const PackedBatch& batch, Mode mode) {
    if (batch.dim != config_.in_dim)
        throw std::invalid_argument("encoder forward: input dim " + std::to_string(batch.dim) +
                                    " does not match config in_dim " +
                                    std::to_string(config_.in_dim));
    if (batch.n_frames != config_.n_frames)
        throw std::invalid_argument("encoder forward: batch has " +
                                    std::to_string(batch.n_frames) + " frames, config wants " +
                                    std::to_string(config_.n_frames));
    seg_offset_ = batch.seg_offset;
    n_targets_ = batch.n_targets;
    rows_total_ = batch.total_rows();

    const size_t ca = config_.block_widths[0];
    const size_t cb = config_.block_widths[1];
    const size_t segments = batch.n_targets * batch.n_frames;

    // Point stage A, pooled per frame.
    Tensor a_out = block_a_.forward(batch.rows, mode);
    Tensor pooled_a;
    segmented_maxpool(a_out, seg_offset_, pooled_a, argmax_a_);

    // Global-feature concat: each point keeps its own features plus the
    // frame's pooled vector.
    Tensor b_in({rows_total_, 2 * ca});
    for (size_t s = 0; s < segments; ++s) {
        const double* glob = pooled_a.ptr() + s * ca;
        for (size_t r = seg_offset_[s]; r < seg_offset_[s + 1]; ++r) {
            std::memcpy(b_in.ptr() + r * 2 * ca, a_out.ptr() + r * ca, ca * sizeof(double));
            std::memcpy(b_in.ptr() + r * 2 * ca + ca, glob, ca * sizeof(double));
        }
    }

    Tensor b_out = block_b_.forward(b_in, mode);
    Tensor pooled_b;
    segmented_maxpool(b_out, seg_offset_, pooled_b, argmax_b_);

    // Time stage: flatten frames, compress, project.
    Tensor flat = std::move(pooled_b);
    flat.shape = {batch.n_targets, batch.n_frames * cb};
    Tensor c_out = block_c_.forward(flat, mode);
    return projection_.forward(c_out);
}

Tensor LidarEncoder::backward(const Tensor& grad_features) {
    const size_t ca = config_.block_widths[0];
    const size_t cb = config_.block_widths[1];
    const size_t segments = n_targets_ * config_.n_frames;

    Tensor g = projection_.backward(grad_features);
    g = block_c_.backward(g);
    g.shape = {segments, cb};

    // Un-pool stage B.
    Tensor g_b_out({rows_total_, cb});
    for (size_t s = 0; s < segments; ++s) {
        const size_t* am = argmax_b_.data() + s * cb;
        const double* gs = g.ptr() + s * cb;
        for (size_t d = 0; d < cb; ++d)
            if (am[d] != SIZE_MAX) g_b_out.data[am[d] * cb + d] += gs[d];
    }

    Tensor g_b_in = block_b_.backward(g_b_out);

    // Split the concat: direct per-point part plus the pooled part, which
    // gathers over the segment then un-pools through stage A's argmax.
    Tensor g_a_out({rows_total_, ca});
    for (size_t s = 0; s < segments; ++s) {
        const size_t* am = argmax_a_.data() + s * ca;
        for (size_t r = seg_offset_[s]; r < seg_offset_[s + 1]; ++r) {
            const double* gr = g_b_in.ptr() + r * 2 * ca;
            double* dst = g_a_out.ptr() + r * ca;
            for (size_t d = 0; d < ca; ++d) dst[d] += gr[d];
            for (size_t d = 0; d < ca; ++d) {
                const double gp = gr[ca + d];
                if (gp != 0.0 && am[d] != SIZE_MAX) g_a_out.data[am[d] * ca + d] += gp;
            }
        }
    }

    return block_a_.backward(g_a_out);
}

Tensor LidarEncoder::point_compress(const LidarTensor& tensor, Mode mode) {
    const PackedBatch batch = pack_tensors({&tensor});
    const size_t ca = config_.block_widths[0];
    const size_t cb = config_.block_widths[1];

    Tensor a_out = block_a_.forward(batch.rows, mode);
    Tensor pooled_a;
    std::vector<size_t> am_a;
    segmented_maxpool(a_out, batch.seg_offset, pooled_a, am_a);

    Tensor b_in({batch.total_rows(), 2 * ca});
    for (size_t s = 0; s < batch.n_frames; ++s) {
        const double* glob = pooled_a.ptr() + s * ca;
        for (size_t r = batch.seg_offset[s]; r < batch.seg_offset[s + 1]; ++r) {
            std::memcpy(b_in.ptr() + r * 2 * ca, a_out.ptr() + r * ca, ca * sizeof(double));
            std::memcpy(b_in.ptr() + r * 2 * ca + ca, glob, ca * sizeof(double));
        }
    }
    Tensor b_out = block_b_.forward(b_in, mode);
    Tensor pooled_b;
    std::vector<size_t> am_b;
    segmented_maxpool(b_out, batch.seg_offset, pooled_b, am_b);
    pooled_b.shape = {config_.n_frames, cb};
    return pooled_b;
}

Tensor LidarEncoder::time_compress(const Tensor& frame_features, Mode mode) {
    if (frame_features.rank() != 2 || frame_features.shape[0] != config_.n_frames ||
        frame_features.shape[1] != config_.block_widths[1])
        throw std::invalid_argument("time_compress: expected shape (" +
                                    std::to_string(config_.n_frames) + "," +
                                    std::to_string(config_.block_widths[1]) + "), got " +
                                    frame_features.shape_str());
    Tensor flat = frame_features;
    flat.shape = {size_t{1}, config_.n_frames * config_.block_widths[1]};
    Tensor c_out = block_c_.forward(flat, mode);
    Tensor out = projection_.forward(c_out);
    out.shape = {config_.out_dim};
    return out;
}

std::vector<uint8_t> LidarEncoder::critical_rows() const {
    std::vector<uint8_t> keep(rows_total_, 0);
    for (size_t am : argmax_a_)
        if (am != SIZE_MAX) keep[am] = 1;
    for (size_t am : argmax_b_)
        if (am != SIZE_MAX) keep[am] = 1;
    return keep;
}

}  // namespace limtr
