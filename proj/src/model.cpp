#include "limtr/model.hpp"

#include <cmath>
#include <cstring>
#include <stdexcept>

namespace limtr {

void ModelConfig::finalize() {
    encoder.in_dim = static_cast<size_t>(features.point_dim());
    encoder.n_frames = static_cast<size_t>(frame_count);
    encoder.validate();
}

PreparedTarget prepare_target(const Scenario& scenario, size_t agent_index,
                              const ModelConfig& config, uint64_t data_seed) {
    const AgentTrack& track = scenario.agents.at(agent_index);
    PreparedTarget out;
    out.scenario_id = scenario.id;
    out.agent_index = agent_index;
    out.cls = track.cls;
    out.hist = history_features(track);
    out.gt = gt_future(track);
    const AgentState& ref = reference_state(track);
    out.ref_pose = {ref.position.x, ref.position.y, ref.position.z, ref.heading};
    out.v0 = ref.velocity.norm();

    if (config.use_lidar) {
        const LidarTensor tensor =
            build_lidar_tensor(scenario, agent_index, config.features, config.frame_count,
                               config.encoder.n_points, data_seed);
        out.frame_counts.assign(tensor.n_frames, 0);
        size_t total = 0;
        for (size_t f = 0; f < tensor.n_frames; ++f)
            for (size_t p = 0; p < tensor.n_points; ++p)
                if (tensor.mask_at(f, p)) {
                    ++out.frame_counts[f];
                    ++total;
                }
        out.lidar_rows.reserve(total * tensor.dim);
        for (size_t f = 0; f < tensor.n_frames; ++f)
            for (size_t p = 0; p < tensor.n_points; ++p) {
                if (!tensor.mask_at(f, p)) continue;
                const double* row = tensor.data.ptr() + (f * tensor.n_points + p) * tensor.dim;
                for (size_t d = 0; d < tensor.dim; ++d)
                    out.lidar_rows.push_back(static_cast<float>(row[d]));
            }
    }
    return out;
}

Model::Model(const ModelConfig& config, uint64_t init_seed) : config_(config) {
    config_.finalize();
    if (config_.use_lidar) {
        Rng rng(derive_seed(init_seed, "init/encoder"));
        encoder_.emplace(store, config_.encoder, rng);
    }
    {
        Rng rng(derive_seed(init_seed, "init/history"));
        history_.emplace(store, config_.history_width, config_.history_depth, rng);
    }
    {
        Rng rng(derive_seed(init_seed, "init/decoder"));
        const size_t fused = config_.history_width + config_.encoder.out_dim;
        decoder_.emplace(store, fused + 2, config_.head_width, config_.head_depth,
                         config_.future_steps, rng);
    }
    // Learned stand-in for "no LiDAR available"; zero-initialized so a zeroed
    // encoder output and an absent one coincide at initialization.
    no_lidar_embedding_ = &store.add("no_lidar_embedding", {config_.encoder.out_dim});
    for (size_t c = 0; c < 3; ++c) {
        intention_buffers_[c] = &store.add(
            std::string("intentions/") + class_name(static_cast<AgentClass>(c)),
            {static_cast<size_t>(config_.n_modes), 2}, /*trainable=*/false);
    }
    intentions.k = config_.n_modes;
}

void Model::set_intentions(const IntentionPointSet& set) {
    if (set.k != config_.n_modes)
        throw std::invalid_argument("set_intentions: set has k=" + std::to_string(set.k) +
                                    ", model wants " + std::to_string(config_.n_modes));
    intentions = set;
    for (size_t c = 0; c < 3; ++c) {
        auto& buf = intention_buffers_[c]->value;
        for (int i = 0; i < set.k; ++i) {
            buf.at2(static_cast<size_t>(i), 0) = set.per_class[c][static_cast<size_t>(i)].x;
            buf.at2(static_cast<size_t>(i), 1) = set.per_class[c][static_cast<size_t>(i)].y;
        }
    }
}

void Model::sync_intentions_from_store() {
    intentions.k = config_.n_modes;
    for (size_t c = 0; c < 3; ++c) {
        intentions.per_class[c].resize(static_cast<size_t>(config_.n_modes));
        const auto& buf = intention_buffers_[c]->value;
        for (int i = 0; i < config_.n_modes; ++i)
            intentions.per_class[c][static_cast<size_t>(i)] = {
                buf.at2(static_cast<size_t>(i), 0), buf.at2(static_cast<size_t>(i), 1)};
    }
}

Model::BatchResult Model::run_batch(const std::vector<const PreparedTarget*>& batch, Mode mode,
                                    bool compute_loss, bool backprop) {
    if (batch.empty()) throw std::invalid_argument("run_batch: empty batch");
    if (backprop && mode != Mode::kTrain)
        throw std::invalid_argument("run_batch: backprop requires train mode");
    const size_t b_size = batch.size();
    const size_t lidar_dim = config_.encoder.out_dim;
    const size_t hist_dim = config_.history_width;
    const size_t n_modes = static_cast<size_t>(config_.n_modes);
    const size_t dim = config_.encoder.in_dim;

    // LiDAR branch.
    Tensor lidar_feat({b_size, lidar_dim});
    PackedBatch packed;
    if (config_.use_lidar) {
        packed.n_targets = b_size;
        packed.n_frames = config_.encoder.n_frames;
        packed.dim = dim;
        size_t total = 0;
        for (const auto* t : batch) total += t->lidar_rows.size() / dim;
        packed.rows = Tensor({total, dim});
        packed.seg_offset.assign(b_size * packed.n_frames + 1, 0);
        size_t row = 0, seg = 0;
        for (const auto* t : batch) {
            if (t->frame_counts.size() != packed.n_frames)
                throw std::invalid_argument("run_batch: target frame count mismatch");
            size_t src = 0;
            for (size_t f = 0; f < packed.n_frames; ++f) {
                packed.seg_offset[seg++] = row;
                for (uint32_t p = 0; p < t->frame_counts[f]; ++p) {
                    for (size_t d = 0; d < dim; ++d)
                        packed.rows.at2(row, d) = static_cast<double>(t->lidar_rows[src + d]);
                    src += dim;
                    ++row;
                }
            }
        }
        packed.seg_offset[seg] = row;
        lidar_feat = encoder_->forward(packed, mode);
        if (zero_lidar_for_test) lidar_feat.fill(0.0);
    } else {
        for (size_t b = 0; b < b_size; ++b)
            std::memcpy(lidar_feat.ptr() + b * lidar_dim, no_lidar_embedding_->value.ptr(),
                        lidar_dim * sizeof(double));
    }

    // History branch: packed valid steps.
    size_t hist_rows_total = 0;
    for (const auto* t : batch)
        for (uint8_t v : t->hist.valid) hist_rows_total += (v != 0);
    Tensor hist_rows({hist_rows_total, kHistoryFeatureDim});
    std::vector<size_t> hist_seg(b_size + 1, 0);
    {
        size_t row = 0;
        for (size_t b = 0; b < b_size; ++b) {
            hist_seg[b] = row;
            const auto& h = batch[b]->hist;
            for (size_t s = 0; s < h.valid.size(); ++s) {
                if (!h.valid[s]) continue;
                std::memcpy(hist_rows.ptr() + row * kHistoryFeatureDim,
                            h.steps.ptr() + s * kHistoryFeatureDim,
                            kHistoryFeatureDim * sizeof(double));
                ++row;
            }
        }
        hist_seg[b_size] = row;
    }
    Tensor hist_feat = history_->forward(hist_rows, hist_seg, mode);

    // Per-mode head rows: concat(history, lidar, intention).
    const size_t head_in = hist_dim + lidar_dim + 2;
    Tensor head_rows({b_size * n_modes, head_in});
    for (size_t b = 0; b < b_size; ++b) {
        const auto& anchors = intentions.for_class(batch[b]->cls);
        if (anchors.size() != n_modes)
            throw std::invalid_argument("run_batch: intentions missing for class " +
                                        std::string(class_name(batch[b]->cls)));
        for (size_t k = 0; k < n_modes; ++k) {
            double* r = head_rows.ptr() + (b * n_modes + k) * head_in;
            std::memcpy(r, hist_feat.ptr() + b * hist_dim, hist_dim * sizeof(double));
            std::memcpy(r + hist_dim, lidar_feat.ptr() + b * lidar_dim,
                        lidar_dim * sizeof(double));
            r[hist_dim + lidar_dim] = anchors[k].x;
            r[hist_dim + lidar_dim + 1] = anchors[k].y;
        }
    }
    Tensor raw = decoder_->forward(head_rows);
    const size_t out_dim = decoder_->out_dim();

    // Anchor each mode's mean on the linear ramp toward its intention point;
    // the head then learns residual shape rather than absolute coordinates.
    // Constant wrt the head outputs, so backward needs no extra term.
    const size_t steps = static_cast<size_t>(config_.future_steps);
    for (size_t b = 0; b < b_size; ++b) {
        const auto& anchors = intentions.for_class(batch[b]->cls);
        for (size_t k = 0; k < n_modes; ++k) {
            double* r = raw.ptr() + (b * n_modes + k) * out_dim;
            for (size_t s = 0; s < steps; ++s) {
                const double ramp = static_cast<double>(s + 1) / static_cast<double>(steps);
                r[s * kTrajParamDim] += anchors[k].x * ramp;
                r[s * kTrajParamDim + 1] += anchors[k].y * ramp;
            }
        }
    }

    BatchResult result;
    result.predictions.reserve(b_size);
    std::vector<int> positive_modes(b_size, 0);
    for (size_t b = 0; b < b_size; ++b) {
        Tensor raw_b({n_modes, out_dim});
        std::memcpy(raw_b.ptr(), raw.ptr() + b * n_modes * out_dim,
                    n_modes * out_dim * sizeof(double));
        TrajectorySet set = squash_outputs(raw_b, config_.n_modes, config_.future_steps,
                                           config_.squash);
        if (compute_loss) {
            const LossBreakdown lb =
                total_loss(set, batch[b]->gt, intentions.for_class(batch[b]->cls),
                           config_.weights);
            positive_modes[b] = lb.positive_mode;
            result.loss += lb.total;
            result.nll += lb.nll;
            result.velocity += lb.velocity;
            result.cross_entropy += lb.cross_entropy;
        }
        result.predictions.push_back(std::move(set));
    }
    if (compute_loss) {
        result.loss /= static_cast<double>(b_size);
        result.nll /= static_cast<double>(b_size);
        result.velocity /= static_cast<double>(b_size);
        result.cross_entropy /= static_cast<double>(b_size);
    }

    if (!backprop) return result;
    if (!compute_loss) throw std::invalid_argument("run_batch: backprop needs compute_loss");

    // Gradient wrt raw head outputs.
    Tensor g_raw({b_size * n_modes, out_dim});
    const double scale = 1.0 / static_cast<double>(b_size);
    for (size_t b = 0; b < b_size; ++b) {
        Tensor raw_b({n_modes, out_dim});
        std::memcpy(raw_b.ptr(), raw.ptr() + b * n_modes * out_dim,
                    n_modes * out_dim * sizeof(double));
        Tensor g_b({n_modes, out_dim});
        total_loss_backward(result.predictions[b], raw_b, batch[b]->gt, positive_modes[b],
                            config_.weights, config_.squash, scale, g_b);
        std::memcpy(g_raw.ptr() + b * n_modes * out_dim, g_b.ptr(),
                    n_modes * out_dim * sizeof(double));
    }

    Tensor g_rows = decoder_->backward(g_raw);

    // Split the head-input gradient back into the two branches, summing over
    // modes.
    Tensor g_hist({b_size, hist_dim});
    Tensor g_lidar({b_size, lidar_dim});
    for (size_t b = 0; b < b_size; ++b) {
        for (size_t k = 0; k < n_modes; ++k) {
            const double* gr = g_rows.ptr() + (b * n_modes + k) * head_in;
            double* gh = g_hist.ptr() + b * hist_dim;
            double* gl = g_lidar.ptr() + b * lidar_dim;
            for (size_t d = 0; d < hist_dim; ++d) gh[d] += gr[d];
            for (size_t d = 0; d < lidar_dim; ++d) gl[d] += gr[hist_dim + d];
        }
    }

    history_->backward(g_hist);
    if (config_.use_lidar) {
        if (zero_lidar_for_test) g_lidar.fill(0.0);
        encoder_->backward(g_lidar);
    } else {
        double* ge = no_lidar_embedding_->grad.ptr();
        for (size_t b = 0; b < b_size; ++b)
            for (size_t d = 0; d < lidar_dim; ++d) ge[d] += g_lidar.at2(b, d);
    }
    return result;
}

}  // namespace limtr
