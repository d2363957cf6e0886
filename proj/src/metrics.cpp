#include "limtr/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace limtr {

void EvalConfig::validate() const {
    if (horizons_s.empty() || horizons_s.size() != longitudinal_thresholds.size() ||
        horizons_s.size() != lateral_thresholds.size())
        throw std::invalid_argument("EvalConfig: horizons/thresholds size mismatch");
    for (size_t i = 0; i < horizons_s.size(); ++i) {
        if (longitudinal_thresholds[i] <= 0.0 || lateral_thresholds[i] <= 0.0)
            throw std::invalid_argument("EvalConfig: thresholds must be positive");
        if (i > 0 && (longitudinal_thresholds[i] < longitudinal_thresholds[i - 1] ||
                      lateral_thresholds[i] < lateral_thresholds[i - 1]))
            throw std::invalid_argument("EvalConfig: thresholds must be non-decreasing");
    }
    if (!(speed_lower < speed_upper))
        throw std::invalid_argument("EvalConfig: speed_lower must be below speed_upper");
}

double EvalConfig::speed_scale(double v0) const {
    if (v0 <= speed_lower) return scale_lower;
    if (v0 >= speed_upper) return scale_upper;
    const double f = (v0 - speed_lower) / (speed_upper - speed_lower);
    return scale_lower + (scale_upper - scale_lower) * f;
}

const char* bucket_name(BehaviorBucket b) {
    switch (b) {
        case BehaviorBucket::kStationary: return "stationary";
        case BehaviorBucket::kStraight: return "straight";
        case BehaviorBucket::kStraightLeft: return "straight-left";
        case BehaviorBucket::kStraightRight: return "straight-right";
        case BehaviorBucket::kLeftTurn: return "left-turn";
        case BehaviorBucket::kRightTurn: return "right-turn";
        case BehaviorBucket::kLeftUTurn: return "left-u-turn";
        default: return "right-u-turn";
    }
}

MetricsInput metrics_input_from(const ScenePrediction& pred, const AgentTrack& track) {
    MetricsInput in;
    in.cls = track.cls;
    in.v0 = reference_state(track).velocity.norm();
    in.gt_positions.reserve(track.future.size());
    in.gt_velocities.reserve(track.future.size());
    in.gt_valid.reserve(track.future.size());
    for (const auto& fu : track.future) {
        in.gt_positions.push_back(fu.position);
        in.gt_velocities.push_back(fu.velocity);
        in.gt_valid.push_back(fu.valid ? 1 : 0);
    }
    in.probabilities = pred.probabilities;
    in.mode_positions.resize(static_cast<size_t>(pred.n_modes));
    for (int m = 0; m < pred.n_modes; ++m) {
        auto& traj = in.mode_positions[static_cast<size_t>(m)];
        traj.reserve(static_cast<size_t>(pred.steps));
        for (int s = 0; s < pred.steps; ++s) {
            const double* p = pred.mode_step(m, s);
            traj.push_back({p[0], p[1]});
        }
    }
    return in;
}

namespace {

int decimation_stride(const EvalConfig& config) {
    return static_cast<int>(config.pred_rate_hz / config.eval_rate_hz);
}

void check_decimation_input(size_t n, const EvalConfig& config) {
    const size_t expected = static_cast<size_t>(8.0 * config.pred_rate_hz);
    if (n != expected)
        throw std::invalid_argument("decimate: expected " + std::to_string(expected) +
                                    " steps, got " + std::to_string(n));
}

// Heading of the ground truth at a 10 Hz step, from the velocity there or at
// the nearest earlier step that was still moving.
double gt_heading_at(const MetricsInput& t, int step_10hz) {
    for (int s = step_10hz; s >= 0; --s) {
        if (!t.gt_valid[static_cast<size_t>(s)]) continue;
        const Vec2 v = t.gt_velocities[static_cast<size_t>(s)];
        if (v.norm() > 1e-6) return std::atan2(v.y, v.x);
    }
    return 0.0;
}

}  // namespace

std::vector<Vec2> decimate(const std::vector<Vec2>& steps_10hz, const EvalConfig& config) {
    check_decimation_input(steps_10hz.size(), config);
    const int stride = decimation_stride(config);
    std::vector<Vec2> out;
    out.reserve(steps_10hz.size() / static_cast<size_t>(stride));
    for (size_t i = static_cast<size_t>(stride) - 1; i < steps_10hz.size();
         i += static_cast<size_t>(stride))
        out.push_back(steps_10hz[i]);
    return out;
}

std::vector<uint8_t> decimate_valid(const std::vector<uint8_t>& valid_10hz,
                                    const EvalConfig& config) {
    check_decimation_input(valid_10hz.size(), config);
    const int stride = decimation_stride(config);
    std::vector<uint8_t> out;
    for (size_t i = static_cast<size_t>(stride) - 1; i < valid_10hz.size();
         i += static_cast<size_t>(stride))
        out.push_back(valid_10hz[i]);
    return out;
}

std::optional<double> min_ade(const std::vector<std::vector<Vec2>>& pred_modes_2hz,
                              const std::vector<Vec2>& gt_2hz,
                              const std::vector<uint8_t>& valid_2hz, int horizon_steps) {
    bool any = false;
    double best = 0.0;
    for (const auto& mode : pred_modes_2hz) {
        double total = 0.0;
        int count = 0;
        for (int s = 0; s < horizon_steps; ++s) {
            if (!valid_2hz[static_cast<size_t>(s)]) continue;
            const double dx = mode[static_cast<size_t>(s)].x - gt_2hz[static_cast<size_t>(s)].x;
            const double dy = mode[static_cast<size_t>(s)].y - gt_2hz[static_cast<size_t>(s)].y;
            total += std::hypot(dx, dy);
            ++count;
        }
        if (count == 0) return std::nullopt;
        const double ade = total / count;
        if (!any || ade < best) {
            best = ade;
            any = true;
        }
    }
    if (!any) return std::nullopt;
    return best;
}

std::optional<std::vector<uint8_t>> mode_hits(const std::vector<std::vector<Vec2>>& pred_2hz,
                                              const MetricsInput& target,
                                              const EvalConfig& config, size_t horizon_index) {
    const int h_step = config.horizon_eval_steps(horizon_index) - 1;
    const int stride = decimation_stride(config);
    const int step_10hz = (h_step + 1) * stride - 1;
    const std::vector<uint8_t> valid_2hz = decimate_valid(target.gt_valid, config);
    if (!valid_2hz[static_cast<size_t>(h_step)]) return std::nullopt;

    const std::vector<Vec2> gt_2hz = decimate(target.gt_positions, config);
    const double heading = gt_heading_at(target, step_10hz);
    const double scale = config.speed_scale(target.v0);
    const double lon_thresh = scale * config.longitudinal_thresholds[horizon_index];
    const double lat_thresh = scale * config.lateral_thresholds[horizon_index];

    std::vector<uint8_t> hits(pred_2hz.size(), 0);
    for (size_t m = 0; m < pred_2hz.size(); ++m) {
        const Vec2 err = pred_2hz[m][static_cast<size_t>(h_step)] -
                         gt_2hz[static_cast<size_t>(h_step)];
        const Vec2 local = err.rotated(-heading);
        // x is longitudinal, y lateral in the gt heading frame.
        hits[m] = (std::fabs(local.x) <= lon_thresh && std::fabs(local.y) <= lat_thresh) ? 1
                                                                                         : 0;
    }
    return hits;
}

std::optional<bool> is_miss(const std::vector<std::vector<Vec2>>& pred_modes_2hz,
                            const MetricsInput& target, const EvalConfig& config,
                            size_t horizon_index) {
    const auto hits = mode_hits(pred_modes_2hz, target, config, horizon_index);
    if (!hits) return std::nullopt;
    for (uint8_t h : *hits)
        if (h) return false;
    return true;
}

BehaviorBucket classify_behavior(const std::vector<Vec2>& gt_positions,
                                 const std::vector<Vec2>& gt_velocities,
                                 const std::vector<uint8_t>& gt_valid,
                                 const EvalConfig& config) {
    int first = -1, last = -1;
    for (size_t i = 0; i < gt_valid.size(); ++i) {
        if (!gt_valid[i]) continue;
        if (first < 0) first = static_cast<int>(i);
        last = static_cast<int>(i);
    }
    if (first < 0 || first == last) return BehaviorBucket::kStationary;

    const Vec2 delta = gt_positions[static_cast<size_t>(last)] -
                       gt_positions[static_cast<size_t>(first)];
    if (delta.norm() < config.stationary_displacement) return BehaviorBucket::kStationary;

    auto heading_near = [&](int from, int dir) {
        for (int s = from; s >= first && s <= last; s += dir) {
            if (!gt_valid[static_cast<size_t>(s)]) continue;
            const Vec2 v = gt_velocities[static_cast<size_t>(s)];
            if (v.norm() > 1e-6) return std::atan2(v.y, v.x);
        }
        return std::atan2(delta.y, delta.x);
    };
    const double h_start = heading_near(first, +1);
    const double h_end = heading_near(last, -1);
    const double dh = wrap_angle(h_end - h_start);

    if (std::fabs(dh) > config.uturn_heading)
        return dh > 0.0 ? BehaviorBucket::kLeftUTurn : BehaviorBucket::kRightUTurn;
    if (std::fabs(dh) > config.turn_heading)
        return dh > 0.0 ? BehaviorBucket::kLeftTurn : BehaviorBucket::kRightTurn;

    const Vec2 local = delta.rotated(-h_start);
    if (local.y > config.straight_lateral) return BehaviorBucket::kStraightLeft;
    if (local.y < -config.straight_lateral) return BehaviorBucket::kStraightRight;
    return BehaviorBucket::kStraight;
}

double average_precision(std::vector<ApSample> samples, int total_gt) {
    if (samples.empty() || total_gt <= 0) return 0.0;
    std::sort(samples.begin(), samples.end(), [](const ApSample& a, const ApSample& b) {
        if (a.probability != b.probability) return a.probability > b.probability;
        if (a.target_index != b.target_index) return a.target_index < b.target_index;
        return a.mode_index < b.mode_index;
    });

    const size_t n = samples.size();
    std::vector<double> precision(n), recall(n);
    int tp = 0;
    for (size_t i = 0; i < n; ++i) {
        if (samples[i].true_positive) ++tp;
        precision[i] = static_cast<double>(tp) / static_cast<double>(i + 1);
        recall[i] = static_cast<double>(tp) / static_cast<double>(total_gt);
    }

    // Monotone precision envelope, integrated right to left.
    double area = 0.0;
    double best_p = precision[n - 1];
    double best_r = recall[n - 1];
    for (size_t i = n - 1; i-- > 0;) {
        if (precision[i] > best_p) {
            area += best_p * (best_r - recall[i]);
            best_p = precision[i];
            best_r = recall[i];
        }
    }
    area += best_r * best_p;
    return area;
}

namespace {

struct BucketStats {
    std::vector<ApSample> samples;
    int total_gt = 0;
};

}  // namespace

double compute_map(const std::vector<MetricsInput>& targets, const EvalConfig& config,
                   size_t horizon_index) {
    std::array<BucketStats, kNumBuckets> buckets;
    for (size_t t = 0; t < targets.size(); ++t) {
        const MetricsInput& target = targets[t];
        std::vector<std::vector<Vec2>> pred_2hz;
        pred_2hz.reserve(target.mode_positions.size());
        for (const auto& mode : target.mode_positions)
            pred_2hz.push_back(decimate(mode, config));
        const auto hits = mode_hits(pred_2hz, target, config, horizon_index);
        if (!hits) continue;  // skipped target, no measurement

        const int bucket = static_cast<int>(classify_behavior(
            target.gt_positions, target.gt_velocities, target.gt_valid, config));
        auto& stats = buckets[static_cast<size_t>(bucket)];

        // Rank this target's modes, allow a single true positive.
        std::vector<int> order(target.probabilities.size());
        for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
        std::sort(order.begin(), order.end(), [&](int a, int b) {
            if (target.probabilities[static_cast<size_t>(a)] !=
                target.probabilities[static_cast<size_t>(b)])
                return target.probabilities[static_cast<size_t>(a)] >
                       target.probabilities[static_cast<size_t>(b)];
            return a < b;
        });
        bool found_positive = false;
        for (int mode : order) {
            ApSample s;
            s.probability = target.probabilities[static_cast<size_t>(mode)];
            s.target_index = t;
            s.mode_index = mode;
            s.true_positive = !found_positive && (*hits)[static_cast<size_t>(mode)] != 0;
            if ((*hits)[static_cast<size_t>(mode)]) found_positive = true;
            stats.samples.push_back(s);
        }
        stats.total_gt += 1;
    }

    double total = 0.0;
    int counted = 0;
    for (const auto& b : buckets) {
        if (b.total_gt == 0) continue;
        total += average_precision(b.samples, b.total_gt);
        ++counted;
    }
    return counted == 0 ? 0.0 : total / counted;
}

MetricsReport aggregate(const std::vector<MetricsInput>& targets, const EvalConfig& config) {
    config.validate();
    const size_t n_horizons = config.horizons_s.size();

    MetricsReport report;
    report.horizons_s = config.horizons_s;
    for (auto& v : report.per_class) v.assign(n_horizons, MetricsCell{});

    bool anything = false;
    for (size_t cls = 0; cls < 3; ++cls) {
        std::vector<MetricsInput> class_targets;
        for (const auto& t : targets)
            if (static_cast<size_t>(t.cls) == cls) class_targets.push_back(t);

        for (size_t h = 0; h < n_horizons; ++h) {
            MetricsCell& cell = report.per_class[cls][h];
            const int horizon_steps = config.horizon_eval_steps(h);
            double ade_sum = 0.0;
            int ade_count = 0;
            int miss_count = 0, miss_total = 0;
            for (const auto& t : class_targets) {
                std::vector<std::vector<Vec2>> pred_2hz;
                pred_2hz.reserve(t.mode_positions.size());
                for (const auto& mode : t.mode_positions)
                    pred_2hz.push_back(decimate(mode, config));
                const std::vector<Vec2> gt_2hz = decimate(t.gt_positions, config);
                const std::vector<uint8_t> valid_2hz = decimate_valid(t.gt_valid, config);

                if (const auto ade = min_ade(pred_2hz, gt_2hz, valid_2hz, horizon_steps)) {
                    ade_sum += *ade;
                    ++ade_count;
                }
                if (const auto miss = is_miss(pred_2hz, t, config, h)) {
                    miss_count += *miss ? 1 : 0;
                    ++miss_total;
                }
            }
            cell.count = ade_count;
            if (ade_count > 0) cell.min_ade = ade_sum / ade_count;
            if (miss_total > 0) cell.miss_rate = static_cast<double>(miss_count) / miss_total;
            cell.map = compute_map(class_targets, config, h);
            anything = anything || ade_count > 0 || miss_total > 0;
        }
    }
    if (!anything) throw std::invalid_argument("aggregate: no evaluable targets");

    int classes_with_data = 0;
    for (size_t cls = 0; cls < 3; ++cls) {
        MetricsCell& avg = report.class_average[cls];
        int horizons_with_data = 0;
        for (size_t h = 0; h < n_horizons; ++h) {
            const MetricsCell& cell = report.per_class[cls][h];
            if (cell.count == 0) continue;
            avg.min_ade += cell.min_ade;
            avg.miss_rate += cell.miss_rate;
            avg.map += cell.map;
            avg.count += cell.count;
            ++horizons_with_data;
        }
        if (horizons_with_data > 0) {
            avg.min_ade /= horizons_with_data;
            avg.miss_rate /= horizons_with_data;
            avg.map /= horizons_with_data;
            report.overall.min_ade += avg.min_ade;
            report.overall.miss_rate += avg.miss_rate;
            report.overall.map += avg.map;
            report.overall.count += avg.count;
            ++classes_with_data;
        }
    }
    if (classes_with_data > 0) {
        report.overall.min_ade /= classes_with_data;
        report.overall.miss_rate /= classes_with_data;
        report.overall.map /= classes_with_data;
    }
    return report;
}

std::string MetricsReport::to_json() const {
    nlohmann::json out;
    for (size_t cls = 0; cls < 3; ++cls) {
        nlohmann::json jc;
        for (size_t h = 0; h < per_class[cls].size(); ++h) {
            const MetricsCell& cell = per_class[cls][h];
            nlohmann::json jcell;
            jcell["min_ade"] = cell.min_ade;
            jcell["miss_rate"] = cell.miss_rate;
            jcell["map"] = cell.map;
            jcell["count"] = cell.count;
            std::ostringstream key;
            key << horizons_s[h] << "s";
            jc[key.str()] = jcell;
        }
        nlohmann::json javg;
        javg["min_ade"] = class_average[cls].min_ade;
        javg["miss_rate"] = class_average[cls].miss_rate;
        javg["map"] = class_average[cls].map;
        javg["count"] = class_average[cls].count;
        jc["average"] = javg;
        out[class_name(static_cast<AgentClass>(cls))] = jc;
    }
    nlohmann::json joverall;
    joverall["min_ade"] = overall.min_ade;
    joverall["miss_rate"] = overall.miss_rate;
    joverall["map"] = overall.map;
    joverall["count"] = overall.count;
    out["overall"] = joverall;
    return out.dump(2);
}

std::string MetricsReport::to_csv() const {
    std::ostringstream os;
    os << "class,horizon_s,min_ade,miss_rate,map,count\n";
    os.precision(10);
    for (size_t cls = 0; cls < 3; ++cls) {
        for (size_t h = 0; h < per_class[cls].size(); ++h) {
            const MetricsCell& cell = per_class[cls][h];
            os << class_name(static_cast<AgentClass>(cls)) << "," << horizons_s[h] << ","
               << cell.min_ade << "," << cell.miss_rate << "," << cell.map << "," << cell.count
               << "\n";
        }
        os << class_name(static_cast<AgentClass>(cls)) << ",average,"
           << class_average[cls].min_ade << "," << class_average[cls].miss_rate << ","
           << class_average[cls].map << "," << class_average[cls].count << "\n";
    }
    os << "all,average," << overall.min_ade << "," << overall.miss_rate << "," << overall.map
       << "," << overall.count << "\n";
    return os.str();
}

}  // namespace limtr
