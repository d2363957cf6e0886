#include "limtr/traj_head.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace limtr {

namespace {

double sq_dist(const Vec2& a, const Vec2& b) {
    const double dx = a.x - b.x, dy = a.y - b.y;
    return dx * dx + dy * dy;
}

double softplus(double x) {
    if (x > 30.0) return x;
    if (x < -30.0) return std::exp(x);
    return std::log1p(std::exp(x));
}

double sigmoid(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

}  // namespace

std::vector<Vec2> kmeans(const std::vector<Vec2>& points, int k, uint64_t seed, int max_iters,
                         std::vector<double>* inertia_trace) {
    if (k < 1) throw std::invalid_argument("kmeans: k must be >= 1");
    if (points.size() < static_cast<size_t>(k))
        throw std::invalid_argument("kmeans: " + std::to_string(points.size()) +
                                    " points for k=" + std::to_string(k));
    Rng rng(seed);
    std::vector<Vec2> centers;
    centers.reserve(static_cast<size_t>(k));

    // Farthest-first seeding: robust to blob geometry and deterministic.
    centers.push_back(points[rng.uniform_int(points.size())]);
    while (centers.size() < static_cast<size_t>(k)) {
        size_t best = 0;
        double best_d = -1.0;
        for (size_t i = 0; i < points.size(); ++i) {
            double d = std::numeric_limits<double>::max();
            for (const auto& c : centers) d = std::min(d, sq_dist(points[i], c));
            if (d > best_d) {
                best_d = d;
                best = i;
            }
        }
        centers.push_back(points[best]);
    }

    std::vector<int> assign(points.size(), -1);
    for (int iter = 0; iter < max_iters; ++iter) {
        bool changed = false;
        double inertia = 0.0;
        for (size_t i = 0; i < points.size(); ++i) {
            int best = 0;
            double best_d = sq_dist(points[i], centers[0]);
            for (int c = 1; c < k; ++c) {
                const double d = sq_dist(points[i], centers[static_cast<size_t>(c)]);
                if (d < best_d) {
                    best_d = d;
                    best = c;
                }
            }
            inertia += best_d;
            if (assign[i] != best) {
                assign[i] = best;
                changed = true;
            }
        }
        if (inertia_trace) inertia_trace->push_back(inertia);
        if (!changed && iter > 0) break;

        std::vector<Vec2> sums(static_cast<size_t>(k));
        std::vector<int> counts(static_cast<size_t>(k), 0);
        for (size_t i = 0; i < points.size(); ++i) {
            sums[static_cast<size_t>(assign[i])] =
                sums[static_cast<size_t>(assign[i])] + points[i];
            ++counts[static_cast<size_t>(assign[i])];
        }
        for (int c = 0; c < k; ++c) {
            if (counts[static_cast<size_t>(c)] > 0) {
                centers[static_cast<size_t>(c)] =
                    sums[static_cast<size_t>(c)] * (1.0 / counts[static_cast<size_t>(c)]);
            } else {
                // Reseed to the point farthest from its current centroid.
                size_t far = 0;
                double far_d = -1.0;
                for (size_t i = 0; i < points.size(); ++i) {
                    const double d =
                        sq_dist(points[i], centers[static_cast<size_t>(assign[i])]);
                    if (d > far_d) {
                        far_d = d;
                        far = i;
                    }
                }
                centers[static_cast<size_t>(c)] = points[far];
            }
        }
    }
    return centers;
}

IntentionPointSet kmeans_intentions(const std::array<std::vector<Vec2>, 3>& endpoints_per_class,
                                    int k, uint64_t seed, int max_iters) {
    IntentionPointSet set;
    set.k = k;
    for (size_t c = 0; c < 3; ++c) {
        if (endpoints_per_class[c].size() < static_cast<size_t>(k))
            throw std::invalid_argument(
                std::string("kmeans_intentions: class ") +
                class_name(static_cast<AgentClass>(c)) + " has " +
                std::to_string(endpoints_per_class[c].size()) + " endpoints, need >= " +
                std::to_string(k));
        set.per_class[c] = kmeans(endpoints_per_class[c], k,
                                  derive_seed(seed, "intentions/" + std::to_string(c)),
                                  max_iters);
    }
    return set;
}

HistoryFeatures history_features(const AgentTrack& track) {
    const AgentState& ref = reference_state(track);
    HistoryFeatures out;
    out.steps = Tensor({track.past.size(), kHistoryFeatureDim});
    out.valid.assign(track.past.size(), 0);
    for (size_t i = 0; i < track.past.size(); ++i) {
        const AgentState& st = track.past[i];
        if (!st.valid) continue;
        out.valid[i] = 1;
        double* r = out.steps.ptr() + i * kHistoryFeatureDim;
        const Vec2 rel =
            Vec2{st.position.x - ref.position.x, st.position.y - ref.position.y}.rotated(
                -ref.heading);
        const Vec2 vel = st.velocity.rotated(-ref.heading);
        const double dh = wrap_angle(st.heading - ref.heading);
        r[0] = rel.x;
        r[1] = rel.y;
        r[2] = std::cos(dh);
        r[3] = std::sin(dh);
        r[4] = vel.x;
        r[5] = vel.y;
        r[6] = st.box.half_extents.x;
        r[7] = st.box.half_extents.y;
        r[8] = st.box.half_extents.z;
        r[9] = 1.0;
    }
    return out;
}

GtFuture gt_future(const AgentTrack& track) {
    const AgentState& ref = reference_state(track);
    GtFuture out;
    const size_t steps = track.future.size();
    out.positions = Tensor({steps, size_t{2}});
    out.velocities = Tensor({steps, size_t{2}});
    out.valid.assign(steps, 0);
    for (size_t i = 0; i < steps; ++i) {
        const FutureState& fu = track.future[i];
        if (!fu.valid) continue;
        out.valid[i] = 1;
        const Vec2 rel = Vec2{fu.position.x - ref.position.x, fu.position.y - ref.position.y}
                             .rotated(-ref.heading);
        const Vec2 vel = fu.velocity.rotated(-ref.heading);
        out.positions.at2(i, 0) = rel.x;
        out.positions.at2(i, 1) = rel.y;
        out.velocities.at2(i, 0) = vel.x;
        out.velocities.at2(i, 1) = vel.y;
        out.endpoint = rel;
        out.has_valid = true;
    }
    return out;
}

HistoryEncoder::HistoryEncoder(ParamStore& store, size_t width, int depth, Rng& init_rng)
    : block_(store, "history", kHistoryFeatureDim,
             std::vector<size_t>(static_cast<size_t>(depth), width), init_rng) {}

Tensor HistoryEncoder::forward(const Tensor& rows, const std::vector<size_t>& seg_offset,
                               Mode mode) {
    seg_offset_ = seg_offset;
    rows_total_ = rows.numel() == 0 ? 0 : rows.shape[0];
    for (size_t s = 0; s + 1 < seg_offset.size(); ++s)
        if (seg_offset[s] == seg_offset[s + 1])
            throw std::invalid_argument("history encoder: target " + std::to_string(s) +
                                        " has no valid past steps");
    Tensor h = block_.forward(rows, mode);
    Tensor pooled;
    segmented_maxpool(h, seg_offset_, pooled, argmax_);
    return pooled;
}

Tensor HistoryEncoder::backward(const Tensor& grad_out) {
    const size_t dim = block_.out_dim();
    Tensor g_rows({rows_total_, dim});
    const size_t segments = seg_offset_.size() - 1;
    for (size_t s = 0; s < segments; ++s) {
        const size_t* am = argmax_.data() + s * dim;
        const double* gs = grad_out.ptr() + s * dim;
        for (size_t d = 0; d < dim; ++d)
            if (am[d] != SIZE_MAX) g_rows.data[am[d] * dim + d] += gs[d];
    }
    return block_.backward(g_rows);
}

TrajDecoder::TrajDecoder(ParamStore& store, size_t in_dim, size_t width, int depth, int steps,
                         Rng& init_rng)
    : in_dim_(in_dim),
      out_dim_(static_cast<size_t>(steps) * kTrajParamDim + 1),
      steps_(steps),
      hidden_(),
      output_([&]() -> Linear {
          size_t d = in_dim;
          for (int i = 0; i < depth; ++i) {
              hidden_.emplace_back(store, "decoder/hidden" + std::to_string(i), d, width,
                                   init_rng);
              d = width;
          }
          return Linear(store, "decoder/output", d, out_dim_, init_rng);
      }()) {}

Tensor TrajDecoder::forward(const Tensor& rows) {
    saved_preact_.clear();
    Tensor h = rows;
    for (auto& layer : hidden_) {
        h = layer.forward(std::move(h));
        saved_preact_.push_back(h);
        for (auto& v : h.data) v = v > 0.0 ? v : 0.0;
    }
    return output_.forward(std::move(h));
}

Tensor TrajDecoder::backward(const Tensor& grad_out) {
    Tensor g = output_.backward(grad_out);
    for (size_t i = hidden_.size(); i-- > 0;) {
        g = relu_backward(g, saved_preact_[i]);
        g = hidden_[i].backward(g);
    }
    return g;
}

TrajectorySet squash_outputs(const Tensor& raw_rows, int n_modes, int steps,
                             const SquashSpec& spec) {
    const size_t out_dim = static_cast<size_t>(steps) * kTrajParamDim + 1;
    if (raw_rows.rank() != 2 || raw_rows.shape[0] != static_cast<size_t>(n_modes) ||
        raw_rows.shape[1] != out_dim)
        throw std::invalid_argument("squash_outputs: expected (" + std::to_string(n_modes) +
                                    "," + std::to_string(out_dim) + "), got " +
                                    raw_rows.shape_str());
    TrajectorySet set;
    set.n_modes = n_modes;
    set.steps = steps;
    set.params = Tensor({static_cast<size_t>(n_modes), static_cast<size_t>(steps),
                         kTrajParamDim});
    std::vector<double> logits(static_cast<size_t>(n_modes));
    for (int m = 0; m < n_modes; ++m) {
        const double* raw = raw_rows.ptr() + static_cast<size_t>(m) * out_dim;
        double* dst = set.params.ptr() +
                      static_cast<size_t>(m) * static_cast<size_t>(steps) * kTrajParamDim;
        for (int s = 0; s < steps; ++s) {
            const double* r = raw + static_cast<size_t>(s) * kTrajParamDim;
            double* d = dst + static_cast<size_t>(s) * kTrajParamDim;
            d[0] = r[0];
            d[1] = r[1];
            d[2] = softplus(r[2]) + spec.std_floor;
            d[3] = softplus(r[3]) + spec.std_floor;
            d[4] = spec.rho_scale * std::tanh(r[4]);
            d[5] = r[5];
            d[6] = r[6];
        }
        logits[static_cast<size_t>(m)] = raw[out_dim - 1];
    }
    const double mx = *std::max_element(logits.begin(), logits.end());
    double denom = 0.0;
    for (double l : logits) denom += std::exp(l - mx);
    set.probabilities.resize(static_cast<size_t>(n_modes));
    for (int m = 0; m < n_modes; ++m)
        set.probabilities[static_cast<size_t>(m)] =
            std::exp(logits[static_cast<size_t>(m)] - mx) / denom;
    return set;
}

int positive_mode_for(const std::vector<Vec2>& intentions, const Vec2& gt_endpoint) {
    if (intentions.empty()) throw std::invalid_argument("positive_mode_for: no intentions");
    int best = 0;
    double best_d = sq_dist(intentions[0], gt_endpoint);
    for (size_t i = 1; i < intentions.size(); ++i) {
        const double d = sq_dist(intentions[i], gt_endpoint);
        if (d < best_d) {
            best_d = d;
            best = static_cast<int>(i);
        }
    }
    return best;
}

namespace {

void require_valid_gt(const GtFuture& gt, const TrajectorySet& pred, int positive_mode,
                      const char* who) {
    if (positive_mode < 0 || positive_mode >= pred.n_modes)
        throw std::invalid_argument(std::string(who) + ": positive mode out of range");
    if (static_cast<int>(gt.valid.size()) != pred.steps)
        throw std::invalid_argument(std::string(who) + ": gt has " +
                                    std::to_string(gt.valid.size()) + " steps, pred " +
                                    std::to_string(pred.steps));
    if (!gt.has_valid)
        throw std::invalid_argument(std::string(who) + ": no valid ground-truth steps");
}

}  // namespace

double gmm_nll(const TrajectorySet& pred, const GtFuture& gt, int positive_mode) {
    require_valid_gt(gt, pred, positive_mode, "gmm_nll");
    constexpr double kLog2Pi = 1.8378770664093454836;
    double total = 0.0;
    int count = 0;
    for (int s = 0; s < pred.steps; ++s) {
        if (!gt.valid[static_cast<size_t>(s)]) continue;
        const double* p = pred.mode_step(positive_mode, s);
        const double dx = gt.positions.at2(static_cast<size_t>(s), 0) - p[0];
        const double dy = gt.positions.at2(static_cast<size_t>(s), 1) - p[1];
        const double sx = p[2], sy = p[3], rho = p[4];
        const double q = 1.0 - rho * rho;
        const double a = dx / sx, b = dy / sy;
        const double z = a * a - 2.0 * rho * a * b + b * b;
        total += kLog2Pi + std::log(sx) + std::log(sy) + 0.5 * std::log(q) + z / (2.0 * q);
        ++count;
    }
    return total / count;
}

double velocity_l1(const TrajectorySet& pred, const GtFuture& gt, int positive_mode) {
    require_valid_gt(gt, pred, positive_mode, "velocity_l1");
    double total = 0.0;
    int count = 0;
    for (int s = 0; s < pred.steps; ++s) {
        if (!gt.valid[static_cast<size_t>(s)]) continue;
        const double* p = pred.mode_step(positive_mode, s);
        total += 0.5 * (std::fabs(p[5] - gt.velocities.at2(static_cast<size_t>(s), 0)) +
                        std::fabs(p[6] - gt.velocities.at2(static_cast<size_t>(s), 1)));
        ++count;
    }
    return total / count;
}

double mode_cross_entropy(const TrajectorySet& pred, int positive_mode) {
    if (positive_mode < 0 || positive_mode >= pred.n_modes)
        throw std::invalid_argument("mode_cross_entropy: positive mode out of range");
    return -std::log(pred.probabilities[static_cast<size_t>(positive_mode)]);
}

LossBreakdown total_loss(const TrajectorySet& pred, const GtFuture& gt,
                         const std::vector<Vec2>& intentions, const LossWeights& weights) {
    if (static_cast<int>(intentions.size()) != pred.n_modes)
        throw std::invalid_argument("total_loss: " + std::to_string(intentions.size()) +
                                    " intentions for " + std::to_string(pred.n_modes) +
                                    " modes");
    LossBreakdown out;
    out.positive_mode = positive_mode_for(intentions, gt.endpoint);
    out.nll = gmm_nll(pred, gt, out.positive_mode);
    out.velocity = velocity_l1(pred, gt, out.positive_mode);
    out.cross_entropy = mode_cross_entropy(pred, out.positive_mode);
    out.total = weights.nll * out.nll + weights.velocity * out.velocity +
                weights.cross_entropy * out.cross_entropy;
    return out;
}

void total_loss_backward(const TrajectorySet& pred, const Tensor& raw_rows, const GtFuture& gt,
                         int positive_mode, const LossWeights& weights, const SquashSpec& spec,
                         double scale, Tensor& grad_raw_rows) {
    const size_t out_dim = static_cast<size_t>(pred.steps) * kTrajParamDim + 1;
    require_valid_gt(gt, pred, positive_mode, "total_loss_backward");
    if (grad_raw_rows.shape != raw_rows.shape)
        throw std::invalid_argument("total_loss_backward: grad/raw shape mismatch");

    int count = 0;
    for (int s = 0; s < pred.steps; ++s) count += gt.valid[static_cast<size_t>(s)] ? 1 : 0;
    const double inv_n = 1.0 / count;

    // NLL + velocity terms: positive mode only.
    {
        const size_t m = static_cast<size_t>(positive_mode);
        const double* raw = raw_rows.ptr() + m * out_dim;
        double* g = grad_raw_rows.ptr() + m * out_dim;
        for (int s = 0; s < pred.steps; ++s) {
            if (!gt.valid[static_cast<size_t>(s)]) continue;
            const double* p = pred.mode_step(positive_mode, s);
            const double* r = raw + static_cast<size_t>(s) * kTrajParamDim;
            double* gs = g + static_cast<size_t>(s) * kTrajParamDim;

            const double dx = gt.positions.at2(static_cast<size_t>(s), 0) - p[0];
            const double dy = gt.positions.at2(static_cast<size_t>(s), 1) - p[1];
            const double sx = p[2], sy = p[3], rho = p[4];
            const double q = 1.0 - rho * rho;
            const double a = dx / sx, b = dy / sy;
            const double z = a * a - 2.0 * rho * a * b + b * b;

            const double w = scale * weights.nll * inv_n;
            // d/dmu = -d/d(dx)
            gs[0] += w * (-(a - rho * b) / (sx * q));
            gs[1] += w * (-(b - rho * a) / (sy * q));
            const double dl_dsx = 1.0 / sx - a * (a - rho * b) / (sx * q);
            const double dl_dsy = 1.0 / sy - b * (b - rho * a) / (sy * q);
            gs[2] += w * dl_dsx * sigmoid(r[2]);
            gs[3] += w * dl_dsy * sigmoid(r[3]);
            const double dl_drho = -rho / q + (rho * z - a * b * q) / (q * q);
            const double th = std::tanh(r[4]);
            gs[4] += w * dl_drho * spec.rho_scale * (1.0 - th * th);

            const double wv = scale * weights.velocity * inv_n * 0.5;
            const double dvx = p[5] - gt.velocities.at2(static_cast<size_t>(s), 0);
            const double dvy = p[6] - gt.velocities.at2(static_cast<size_t>(s), 1);
            gs[5] += wv * (dvx > 0.0 ? 1.0 : (dvx < 0.0 ? -1.0 : 0.0));
            gs[6] += wv * (dvy > 0.0 ? 1.0 : (dvy < 0.0 ? -1.0 : 0.0));
        }
    }

    // Cross-entropy on the logits: softmax-CE identity.
    for (int m = 0; m < pred.n_modes; ++m) {
        const double indicator = (m == positive_mode) ? 1.0 : 0.0;
        grad_raw_rows.data[static_cast<size_t>(m) * out_dim + out_dim - 1] +=
            scale * weights.cross_entropy *
            (pred.probabilities[static_cast<size_t>(m)] - indicator);
    }
}

}  // namespace limtr
