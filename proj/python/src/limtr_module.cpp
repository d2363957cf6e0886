#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <cmath>

#include "limtr/encoder.hpp"
#include "limtr/grad_check.hpp"
#include "limtr/metrics.hpp"
#include "limtr/pipeline.hpp"

namespace py = pybind11;
using namespace limtr;

namespace {

py::dict report_to_dict(const MetricsReport& report) {
    py::dict out;
    auto cell_dict = [](const MetricsCell& c) {
        py::dict d;
        d["min_ade"] = c.min_ade;
        d["miss_rate"] = c.miss_rate;
        d["map"] = c.map;
        d["count"] = c.count;
        return d;
    };
    for (size_t cls = 0; cls < 3; ++cls) {
        py::dict jc;
        for (size_t h = 0; h < report.per_class[cls].size(); ++h) {
            jc[py::str(std::to_string(report.horizons_s[h]) + "s")] =
                cell_dict(report.per_class[cls][h]);
        }
        jc["average"] = cell_dict(report.class_average[cls]);
        out[class_name(static_cast<AgentClass>(cls))] = jc;
    }
    out["overall"] = cell_dict(report.overall);
    return out;
}

std::pair<py::array_t<double>, py::array_t<bool>> lidar_tensor_arrays(const LidarTensor& t) {
    py::array_t<double> data({t.n_frames, t.n_points, t.dim});
    std::copy(t.data.data.begin(), t.data.data.end(), data.mutable_data());
    py::array_t<bool> mask({t.n_frames, t.n_points});
    auto* m = mask.mutable_data();
    for (size_t i = 0; i < t.mask.size(); ++i) m[i] = t.mask[i] != 0;
    return {std::move(data), std::move(mask)};
}

LidarTensor tensor_from_arrays(py::array_t<double, py::array::c_style> data,
                               py::array_t<bool, py::array::c_style> mask) {
    if (data.ndim() != 3 || mask.ndim() != 2)
        throw std::invalid_argument("expected data [T,N,D] and mask [T,N]");
    LidarTensor t;
    t.n_frames = static_cast<size_t>(data.shape(0));
    t.n_points = static_cast<size_t>(data.shape(1));
    t.dim = static_cast<size_t>(data.shape(2));
    if (static_cast<size_t>(mask.shape(0)) != t.n_frames ||
        static_cast<size_t>(mask.shape(1)) != t.n_points)
        throw std::invalid_argument("mask shape does not match data");
    t.data = Tensor({t.n_frames, t.n_points, t.dim});
    std::copy(data.data(), data.data() + t.data.numel(), t.data.data.begin());
    t.mask.assign(t.n_frames * t.n_points, 0);
    for (size_t i = 0; i < t.mask.size(); ++i) t.mask[i] = mask.data()[i] ? 1 : 0;
    return t;
}

}  // namespace

PYBIND11_MODULE(_limtr, m) {
    m.doc() = "Desk-scale local-LiDAR motion prediction pipeline";

    m.def("generate_bundles", &generate_bundles, py::arg("out_dir"), py::arg("n_scenarios"),
          py::arg("seed"), py::arg("cue_strength"), py::arg("min_agents") = 1,
          py::arg("max_agents") = 8,
          "Write synthetic scenario bundles under out_dir (scn_00000, ...)");

    m.def(
        "bundle_info",
        [](const std::string& dir) {
            const Scenario s = read_bundle(dir);
            py::dict out;
            out["id"] = s.id;
            out["n_agents"] = s.agents.size();
            out["n_frames"] = s.frames.size();
            py::list classes;
            for (const auto& a : s.agents) classes.append(class_name(a.cls));
            out["classes"] = classes;
            py::list counts;
            for (const auto& f : s.frames) counts.append(f.points.size());
            out["point_counts"] = counts;
            return out;
        },
        py::arg("bundle_dir"), "Header summary of one scenario bundle");

    m.def(
        "build_lidar_tensor",
        [](const std::string& bundle_dir, size_t agent, const std::string& features,
           int frames, size_t n_points, uint64_t seed) {
            const Scenario s = read_bundle(bundle_dir);
            const LidarTensor t = build_lidar_tensor(s, agent, FeatureSelection::parse(features),
                                                     frames, n_points, seed);
            return lidar_tensor_arrays(t);
        },
        py::arg("bundle_dir"), py::arg("agent"), py::arg("features") = "intensity",
        py::arg("frames") = 11, py::arg("n_points") = kDefaultMaxPoints, py::arg("seed") = 0,
        "Preprocess one target into its [T,N,D] tensor and [T,N] validity mask");

    m.def(
        "encoder_feature",
        [](py::array_t<double, py::array::c_style> data,
           py::array_t<bool, py::array::c_style> mask, int depth,
           std::array<size_t, 3> widths, uint64_t seed) {
            const LidarTensor t = tensor_from_arrays(std::move(data), std::move(mask));
            EncoderConfig config;
            config.depth_per_block = depth;
            config.block_widths = widths;
            config.n_frames = t.n_frames;
            config.n_points = t.n_points;
            config.in_dim = t.dim;
            ParamStore store;
            Rng rng(seed);
            LidarEncoder enc(store, config, rng);
            const Tensor out = enc.forward(pack_tensors({&t}), Mode::kEval);
            py::array_t<double> feature(out.numel());
            std::copy(out.data.begin(), out.data.end(), feature.mutable_data());
            return feature;
        },
        py::arg("data"), py::arg("mask"), py::arg("depth") = 2,
        py::arg("widths") = std::array<size_t, 3>{16, 32, 64}, py::arg("seed") = 0,
        "Eval-mode encoder feature for one target under seeded random parameters");

    m.def(
        "kmeans",
        [](py::array_t<double, py::array::c_style> points, int k, uint64_t seed,
           int max_iters) {
            if (points.ndim() != 2 || points.shape(1) != 2)
                throw std::invalid_argument("expected points [n, 2]");
            std::vector<Vec2> pts(static_cast<size_t>(points.shape(0)));
            for (size_t i = 0; i < pts.size(); ++i)
                pts[i] = {points.at(i, 0), points.at(i, 1)};
            const auto centers = kmeans(pts, k, seed, max_iters);
            py::array_t<double> out({static_cast<size_t>(k), size_t{2}});
            for (int i = 0; i < k; ++i) {
                out.mutable_at(i, 0) = centers[static_cast<size_t>(i)].x;
                out.mutable_at(i, 1) = centers[static_cast<size_t>(i)].y;
            }
            return out;
        },
        py::arg("points"), py::arg("k"), py::arg("seed") = 0, py::arg("max_iters") = 50);

    m.def(
        "min_ade",
        [](py::array_t<double, py::array::c_style> preds,
           py::array_t<double, py::array::c_style> gt, int horizon_steps) {
            if (preds.ndim() != 3 || preds.shape(2) != 2 || gt.ndim() != 2 || gt.shape(1) != 2)
                throw std::invalid_argument("expected preds [m, steps, 2] and gt [steps, 2]");
            std::vector<std::vector<Vec2>> modes(static_cast<size_t>(preds.shape(0)));
            for (size_t mi = 0; mi < modes.size(); ++mi)
                for (py::ssize_t s = 0; s < preds.shape(1); ++s)
                    modes[mi].push_back({preds.at(static_cast<py::ssize_t>(mi), s, 0),
                                         preds.at(static_cast<py::ssize_t>(mi), s, 1)});
            std::vector<Vec2> gt_steps;
            std::vector<uint8_t> valid;
            for (py::ssize_t s = 0; s < gt.shape(0); ++s) {
                gt_steps.push_back({gt.at(s, 0), gt.at(s, 1)});
                valid.push_back(1);
            }
            const auto result = min_ade(modes, gt_steps, valid,
                                        horizon_steps > 0 ? horizon_steps
                                                          : static_cast<int>(gt.shape(0)));
            return result ? *result : std::nan("");
        },
        py::arg("preds"), py::arg("gt"), py::arg("horizon_steps") = 0,
        "Minimum mean L2 displacement over modes (2 Hz inputs)");

    m.def(
        "bivariate_nll",
        [](double dx, double dy, double sx, double sy, double rho) {
            const double q = 1.0 - rho * rho;
            const double a = dx / sx, b = dy / sy;
            const double z = a * a - 2.0 * rho * a * b + b * b;
            return 1.8378770664093454836 + std::log(sx) + std::log(sy) + 0.5 * std::log(q) +
                   z / (2.0 * q);
        },
        py::arg("dx"), py::arg("dy"), py::arg("std_x") = 1.0, py::arg("std_y") = 1.0,
        py::arg("rho") = 0.0, "Bivariate Gaussian negative log likelihood at an offset");

    m.def(
        "lr_schedule",
        [](int step, int total_steps, double lr_peak, double warmup_fraction) {
            OptimConfig config;
            config.lr_peak = lr_peak;
            config.warmup_fraction = warmup_fraction;
            return lr_schedule(step, total_steps, config);
        },
        py::arg("step"), py::arg("total_steps"), py::arg("lr_peak") = 3e-4,
        py::arg("warmup_fraction") = 0.05);

    m.def(
        "train",
        [](const std::string& data_dir, const std::string& out_dir, double val_fraction,
           int epochs, int batch_size, double lr, int depth, std::array<size_t, 3> widths,
           const std::string& features, int frames, bool no_lidar, size_t n_points,
           size_t history_width, size_t head_width, uint64_t seed) {
            PipelineSettings settings;
            settings.model.encoder.depth_per_block = depth;
            settings.model.encoder.block_widths = widths;
            settings.model.encoder.n_points = n_points;
            settings.model.history_width = history_width;
            settings.model.head_width = head_width;
            settings.model.use_lidar = !no_lidar;
            settings.model.features = FeatureSelection::parse(features);
            settings.model.frame_count = frames;
            settings.model.finalize();
            settings.optim.lr_peak = lr;
            settings.optim.epochs = epochs;
            settings.optim.batch_size = batch_size;
            settings.optim.seed = seed;
            settings.data_dir = data_dir;
            settings.val_fraction = val_fraction;
            settings.out_dir = out_dir;
            const PipelineResult result = run_training_pipeline(settings);
            py::dict out;
            out["checkpoint"] = result.checkpoint_path;
            out["total_steps"] = result.total_steps;
            out["final_train_loss"] = result.final_train_loss;
            if (result.has_metrics) out["metrics"] = report_to_dict(result.metrics);
            return out;
        },
        py::arg("data_dir"), py::arg("out_dir"), py::arg("val_fraction") = 0.2,
        py::arg("epochs") = 5, py::arg("batch_size") = 32, py::arg("lr") = 3e-4,
        py::arg("depth") = 2, py::arg("widths") = std::array<size_t, 3>{16, 32, 64},
        py::arg("features") = "intensity", py::arg("frames") = 11,
        py::arg("no_lidar") = false, py::arg("n_points") = kDefaultMaxPoints,
        py::arg("history_width") = 32, py::arg("head_width") = 64, py::arg("seed") = 0,
        "Train on scenario bundles; writes checkpoint + traces under out_dir");

    m.def(
        "evaluate",
        [](const std::string& checkpoint, const std::string& data_dir,
           const std::string& out_dir, uint64_t seed) {
            return report_to_dict(run_eval_pipeline(checkpoint, data_dir, out_dir, seed));
        },
        py::arg("checkpoint"), py::arg("data_dir"), py::arg("out_dir"), py::arg("seed") = 0,
        "Evaluate a checkpoint on bundles; writes predictions + metrics under out_dir");

    m.attr("__version__") = "0.1.0";
}
