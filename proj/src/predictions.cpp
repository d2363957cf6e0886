#include <cmath>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

#include "limtr/io_util.hpp"
#include "limtr/traj_head.hpp"

namespace limtr {

ScenePrediction to_scene_frame(const TrajectorySet& set, double ref_x, double ref_y,
                               double ref_heading, const std::string& scenario_id,
                               size_t agent_index, AgentClass cls) {
    ScenePrediction out;
    out.scenario_id = scenario_id;
    out.agent_index = agent_index;
    out.cls = cls;
    out.n_modes = set.n_modes;
    out.steps = set.steps;
    out.probabilities = set.probabilities;
    out.params = set.params;

    const double c = std::cos(ref_heading), s = std::sin(ref_heading);
    for (int m = 0; m < set.n_modes; ++m) {
        for (int t = 0; t < set.steps; ++t) {
            double* p = out.params.ptr() +
                        (static_cast<size_t>(m) * static_cast<size_t>(set.steps) +
                         static_cast<size_t>(t)) *
                            kTrajParamDim;
            const double x = p[0], y = p[1];
            p[0] = c * x - s * y + ref_x;
            p[1] = s * x + c * y + ref_y;
            // Rotate the covariance: sigma' = R sigma R^T.
            const double a = p[2] * p[2];
            const double d = p[3] * p[3];
            const double b = p[4] * p[2] * p[3];
            const double vxx = c * c * a - 2.0 * s * c * b + s * s * d;
            const double vyy = s * s * a + 2.0 * s * c * b + c * c * d;
            const double vxy = s * c * (a - d) + (c * c - s * s) * b;
            p[2] = std::sqrt(vxx);
            p[3] = std::sqrt(vyy);
            p[4] = vxy / (p[2] * p[3]);
            const double vx = p[5], vy = p[6];
            p[5] = c * vx - s * vy;
            p[6] = s * vx + c * vy;
        }
    }
    return out;
}

void write_prediction_dump(const std::string& path,
                           const std::vector<ScenePrediction>& predictions) {
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw std::runtime_error("cannot open for writing: " + path);
    for (const auto& p : predictions) {
        nlohmann::json rec;
        rec["scenario"] = p.scenario_id;
        rec["agent"] = p.agent_index;
        rec["class"] = class_name(p.cls);
        rec["n_modes"] = p.n_modes;
        rec["steps"] = p.steps;
        rec["probabilities"] = p.probabilities;
        std::vector<float> block;
        block.reserve(p.params.numel());
        for (double v : p.params.data) block.push_back(static_cast<float>(v));
        rec["trajectories"] = encode_f32_base64(block);
        f << rec.dump() << "\n";
    }
    if (!f) throw std::runtime_error("write failed: " + path);
}

std::vector<ScenePrediction> read_prediction_dump(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot open prediction dump: " + path);
    std::vector<ScenePrediction> out;
    std::string line;
    size_t line_no = 0;
    while (std::getline(f, line)) {
        ++line_no;
        if (line.empty()) continue;
        nlohmann::json rec;
        try {
            rec = nlohmann::json::parse(line);
        } catch (const nlohmann::json::parse_error& e) {
            throw std::runtime_error("prediction dump " + path + " line " +
                                     std::to_string(line_no) + ": " + e.what());
        }
        ScenePrediction p;
        p.scenario_id = rec.at("scenario").get<std::string>();
        p.agent_index = rec.at("agent").get<size_t>();
        p.cls = class_from_name(rec.at("class").get<std::string>());
        p.n_modes = rec.at("n_modes").get<int>();
        p.steps = rec.at("steps").get<int>();
        p.probabilities = rec.at("probabilities").get<std::vector<double>>();
        const std::vector<float> block =
            decode_f32_base64(rec.at("trajectories").get<std::string>());
        const size_t expected = static_cast<size_t>(p.n_modes) * static_cast<size_t>(p.steps) *
                                kTrajParamDim;
        if (block.size() != expected)
            throw std::runtime_error("prediction dump " + path + " line " +
                                     std::to_string(line_no) + ": trajectory block has " +
                                     std::to_string(block.size()) + " floats, expected " +
                                     std::to_string(expected));
        p.params = Tensor({static_cast<size_t>(p.n_modes), static_cast<size_t>(p.steps),
                           kTrajParamDim});
        for (size_t i = 0; i < block.size(); ++i)
            p.params.data[i] = static_cast<double>(block[i]);
        out.push_back(std::move(p));
    }
    return out;
}

}  // namespace limtr
