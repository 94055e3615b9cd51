/// @file harness.hpp Scenario files, ground-truth simulation and run artifacts.
///
/// Scenario files are JSON. Every key is optional except `agents`; omitted
/// keys take the defaults of ScenarioConfig. Unknown keys are rejected. See
/// the bundled scenarios/table2.json for a complete example.

#ifndef TMF_HARNESS_HPP
#define TMF_HARNESS_HPP

#include <algorithm>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>
#include <string>
#include <system_error>
#include <vector>

#include <json.hpp>

#include "dynamics.hpp"
#include "errors.hpp"
#include "filter.hpp"
#include "observation.hpp"
#include "random.hpp"
#include "scenario.hpp"

namespace tmf {

using Json = nlohmann::ordered_json;

// ---------------------------------------------------------------------------
// Enum spellings

inline std::string model_name(ModelKind m) { return m == ModelKind::cw_full ? "cw-full" : "cw-translation"; }
inline std::string lift_name(LiftMode m) { return m == LiftMode::anchored ? "anchored" : "subspace"; }
inline std::string angle_name(AngleMode m) { return m == AngleMode::atan2 ? "atan2" : "literal"; }
inline std::string solver_name(SolverMethod m) { return m == SolverMethod::closed_form ? "closed-form" : "gradient"; }

inline SolverMethod parse_solver_method(const std::string& s) {
    if (s == "closed-form" || s == "closed_form") {
        return SolverMethod::closed_form;
    }
    if (s == "gradient") {
        return SolverMethod::gradient;
    }
    throw ConfigError("unknown solver method '" + s + "' (expected closed-form or gradient)");
}

namespace detail {

/// Collects per-key problems so that a file with several mistakes reports
/// all of them at once.
class JsonReader {
public:
    std::vector<std::string> errors;

    void reject_unknown(const Json& obj, const std::string& path, std::initializer_list<const char*> known) {
        if (!obj.is_object()) {
            errors.push_back(path + ": expected an object");
            return;
        }
        const std::set<std::string> allowed(known.begin(), known.end());
        for (const auto& [key, value] : obj.items()) {
            if (allowed.count(key) == 0) {
                errors.push_back(join(path, key) + ": unknown key");
            }
        }
    }

    template <class T>
    void read(const Json& obj, const std::string& path, const char* key, T& out) {
        if (!obj.is_object() || !obj.contains(key)) {
            return;
        }
        try {
            out = obj.at(key).get<T>();
        } catch (const nlohmann::json::exception&) {
            errors.push_back(join(path, key) + ": expected " + type_label<T>() + ", got " +
                             std::string(obj.at(key).type_name()));
        }
    }

    template <class Enum, class Parse>
    void read_enum(const Json& obj, const std::string& path, const char* key, Enum& out, Parse parse) {
        std::string text;
        if (!obj.is_object() || !obj.contains(key)) {
            return;
        }
        read(obj, path, key, text);
        if (text.empty()) {
            return;
        }
        try {
            out = parse(text);
        } catch (const ConfigError& e) {
            errors.push_back(join(path, key) + ": " + e.what());
        }
    }

    static std::string join(const std::string& path, const std::string& key) {
        return path.empty() ? key : path + "." + key;
    }

private:
    template <class T>
    static std::string type_label() {
        if constexpr (std::is_same_v<T, bool>) {
            return "a boolean";
        } else if constexpr (std::is_same_v<T, std::string>) {
            return "a string";
        } else if constexpr (std::is_integral_v<T>) {
            return "an integer";
        } else if constexpr (std::is_floating_point_v<T>) {
            return "a number";
        } else {
            return "an array";
        }
    }
};

inline std::string line_context(const std::string& text, std::size_t byte) {
    byte = std::min(byte, text.size());
    std::size_t line = 1;
    std::size_t line_start = 0;
    for (std::size_t i = 0; i < byte && i < text.size(); ++i) {
        if (text[i] == '\n') {
            ++line;
            line_start = i + 1;
        }
    }
    const std::size_t line_end = std::min(text.find('\n', line_start), text.size());
    std::ostringstream out;
    out << "line " << line << ", column " << (byte - line_start + 1) << ": "
        << text.substr(line_start, line_end - line_start);
    return out.str();
}

} // namespace detail

// ---------------------------------------------------------------------------
// Loading and dumping

/// Parses and validates a scenario document.
/// @throws ConfigError listing every problem found
[[nodiscard]] inline ScenarioConfig parse_scenario(const std::string& text, const std::string& source = "<string>") {
    Json doc;
    try {
        doc = Json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        const std::size_t at = e.byte == 0 ? 0 : e.byte - 1;
        throw ConfigError(source + ": parse error at " + detail::line_context(text, at) + "\n  " + e.what());
    }

    ScenarioConfig s;
    detail::JsonReader r;
    r.reject_unknown(doc, "", {"name", "model", "alpha", "sigma_process", "dt_int", "dt_obs", "t_end", "x0",
                               "particles", "gamma", "consensus", "pca", "solver", "dynamics", "observation",
                               "agents", "seed", "init"});
    if (!doc.is_object()) {
        throw ConfigError(source + ": top level must be an object");
    }

    r.read(doc, "", "name", s.name);
    r.read_enum(doc, "", "model", s.model, [](const std::string& m) {
        if (m == "cw-translation") {
            return ModelKind::cw_translation;
        }
        if (m == "cw-full") {
            return ModelKind::cw_full;
        }
        throw ConfigError("unknown model '" + m + "' (expected cw-translation or cw-full)");
    });
    r.read(doc, "", "alpha", s.alpha);
    r.read(doc, "", "sigma_process", s.sigma_process);
    r.read(doc, "", "dt_int", s.dt_int);
    r.read(doc, "", "dt_obs", s.dt_obs);
    r.read(doc, "", "t_end", s.t_end);
    std::vector<double> x0;
    r.read(doc, "", "x0", x0);
    s.x0 = Eigen::Map<const Vector>(x0.data(), static_cast<Index>(x0.size()));
    r.read(doc, "", "particles", s.particles);
    r.read(doc, "", "gamma", s.gamma);
    r.read(doc, "", "seed", s.seed);

    if (doc.contains("consensus")) {
        const Json& c = doc["consensus"];
        r.reject_unknown(c, "consensus", {"iterations", "literal"});
        r.read(c, "consensus", "iterations", s.consensus_iterations);
        r.read(c, "consensus", "literal", s.consensus_literal);
    }
    if (doc.contains("pca")) {
        const Json& p = doc["pca"];
        r.reject_unknown(p, "pca", {"enabled", "q_x", "q_y", "center", "lift"});
        r.read(p, "pca", "enabled", s.pca.enabled);
        r.read(p, "pca", "q_x", s.pca.q_x);
        r.read(p, "pca", "q_y", s.pca.q_y);
        r.read(p, "pca", "center", s.pca.center);
        r.read_enum(p, "pca", "lift", s.pca.lift, [](const std::string& m) {
            if (m == "anchored") {
                return LiftMode::anchored;
            }
            if (m == "subspace") {
                return LiftMode::subspace;
            }
            throw ConfigError("unknown lift '" + m + "' (expected anchored or subspace)");
        });
    }
    if (doc.contains("solver")) {
        const Json& p = doc["solver"];
        r.reject_unknown(p, "solver", {"method", "max_iters", "tol", "precondition"});
        r.read_enum(p, "solver", "method", s.solver.method, parse_solver_method);
        r.read(p, "solver", "max_iters", s.solver.max_iters);
        r.read(p, "solver", "tol", s.solver.tolerance);
        r.read(p, "solver", "precondition", s.solver.precondition);
    }
    if (doc.contains("dynamics")) {
        const Json& p = doc["dynamics"];
        r.reject_unknown(p, "dynamics", {"quat_sign"});
        r.read(p, "dynamics", "quat_sign", s.quat_sign);
    }
    if (doc.contains("observation")) {
        const Json& p = doc["observation"];
        r.reject_unknown(p, "observation", {"angle"});
        r.read_enum(p, "observation", "angle", s.angle_mode, [](const std::string& m) {
            if (m == "atan2") {
                return AngleMode::atan2;
            }
            if (m == "literal") {
                return AngleMode::literal;
            }
            throw ConfigError("unknown angle mode '" + m + "' (expected atan2 or literal)");
        });
    }
    if (doc.contains("init")) {
        const Json& p = doc["init"];
        r.reject_unknown(p, "init", {"translation_mean_offset", "translation_var", "attitude_mean_offset",
                                     "attitude_var"});
        r.read(p, "init", "translation_mean_offset", s.init.translation_mean_offset);
        r.read(p, "init", "translation_var", s.init.translation_var);
        r.read(p, "init", "attitude_mean_offset", s.init.attitude_mean_offset);
        r.read(p, "init", "attitude_var", s.init.attitude_var);
    }

    if (!doc.contains("agents") || !doc["agents"].is_array()) {
        r.errors.emplace_back("agents: required array is missing");
    } else {
        int idx = 0;
        for (const Json& a : doc["agents"]) {
            const std::string path = "agents[" + std::to_string(idx++) + "]";
            AgentSpec spec;
            r.reject_unknown(a, path, {"id", "obs_dims", "obs_type", "noise_std", "neighbors"});
            r.read(a, path, "id", spec.id);
            r.read(a, path, "obs_dims", spec.obs_dims);
            r.read_enum(a, path, "obs_type", spec.obs_type,
                        [](const std::string& t) { return parse_observation_kind(t); });
            r.read(a, path, "noise_std", spec.noise_std);
            r.read(a, path, "neighbors", spec.neighbors);
            s.agents.push_back(std::move(spec));
        }
    }

    if (!r.errors.empty()) {
        std::string message = source + ": invalid scenario:";
        for (const auto& e : r.errors) {
            message += "\n  - " + e;
        }
        throw ConfigError(message);
    }
    try {
        s.validate();
    } catch (const ConfigError& e) {
        throw ConfigError(source + ": " + e.what());
    }
    return s;
}

[[nodiscard]] inline ScenarioConfig load_scenario(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw ConfigError("cannot open scenario file " + path.string());
    }
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_scenario(buf.str(), path.string());
}

/// The configuration with every default written out.
[[nodiscard]] inline Json scenario_to_json(const ScenarioConfig& s) {
    Json doc;
    doc["name"] = s.name;
    doc["model"] = model_name(s.model);
    doc["alpha"] = s.alpha;
    doc["sigma_process"] = s.sigma_process;
    doc["dt_int"] = s.dt_int;
    doc["dt_obs"] = s.dt_obs;
    doc["t_end"] = s.t_end;
    doc["x0"] = std::vector<double>(s.x0.data(), s.x0.data() + s.x0.size());
    doc["particles"] = s.particles;
    doc["gamma"] = s.gamma;
    doc["consensus"] = {{"iterations", s.consensus_iterations}, {"literal", s.consensus_literal}};
    doc["pca"] = {{"enabled", s.pca.enabled},
                  {"q_x", s.pca.q_x},
                  {"q_y", s.pca.q_y},
                  {"center", s.pca.center},
                  {"lift", lift_name(s.pca.lift)}};
    doc["solver"] = {{"method", solver_name(s.solver.method)},
                     {"max_iters", s.solver.max_iters},
                     {"tol", s.solver.tolerance},
                     {"precondition", s.solver.precondition}};
    doc["dynamics"] = {{"quat_sign", s.quat_sign}};
    doc["observation"] = {{"angle", angle_name(s.angle_mode)}};
    Json agents = Json::array();
    for (const auto& a : s.agents) {
        agents.push_back({{"id", a.id},
                          {"obs_dims", a.obs_dims},
                          {"obs_type", std::string(to_string(a.obs_type))},
                          {"noise_std", a.noise_std},
                          {"neighbors", a.neighbors}});
    }
    doc["agents"] = agents;
    doc["seed"] = s.seed;
    doc["init"] = {{"translation_mean_offset", s.init.translation_mean_offset},
                   {"translation_var", s.init.translation_var},
                   {"attitude_mean_offset", s.init.attitude_mean_offset},
                   {"attitude_var", s.init.attitude_var}};
    return doc;
}

// ---------------------------------------------------------------------------
// Ground truth

/// Truth trajectory x(t_0..t_N) with process noise from the truth_process
/// stream and each agent's noisy readings at t_1..t_N from truth_obs.
/// Differential readings difference consecutive truth states.
[[nodiscard]] inline TruthRecord simulate_truth(const ScenarioConfig& s) {
    const int steps = s.steps();
    const DynamicsParams params = s.dynamics();
    const auto specs = s.sensors();
    const ObservationContext ctx{ObservationRole::truth, s.angle_mode};

    TruthRecord truth;
    truth.states.reserve(static_cast<std::size_t>(steps) + 1);
    truth.readings.resize(static_cast<std::size_t>(steps) + 1);
    Vector x = s.x0;
    normalize_quaternion(x);
    truth.states.push_back(x);
    for (int i = 1; i <= steps; ++i) {
        NormalStream process(s.seed, Purpose::truth_process, static_cast<std::uint64_t>(i), 0, 0);
        const Vector prev = truth.states.back();
        truth.states.push_back(propagate(prev, s.dt_obs, params, process, s.time_at(i - 1)));
        auto& readings = truth.readings[static_cast<std::size_t>(i)];
        for (int l = 0; l < s.agent_count(); ++l) {
            NormalStream noise(s.seed, Purpose::truth_obs, static_cast<std::uint64_t>(i), static_cast<std::uint64_t>(l),
                               0);
            try {
                readings.push_back(observe(specs[static_cast<std::size_t>(l)], truth.states.back(), &prev, noise, ctx,
                                           l)
                                       .values);
            } catch (const ObservationError& e) {
                throw ObservationError("truth reading of agent " + s.agents[static_cast<std::size_t>(l)].id +
                                       " at step " + std::to_string(i) + ": " + e.what());
            }
        }
    }
    return truth;
}

// ---------------------------------------------------------------------------
// Artifacts

/// Shortest decimal text that reads back to the same double.
[[nodiscard]] inline std::string format_number(double v) {
    if (std::isnan(v)) {
        return "nan";
    }
    if (std::isinf(v)) {
        return v > 0 ? "inf" : "-inf";
    }
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return {buf, res.ptr};
}

/// Observation times are k * dt_obs; printing them with 12 significant
/// digits avoids 0.30000000000000004 in the time column.
[[nodiscard]] inline std::string format_time(double t) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, t, std::chars_format::general, 12);
    return {buf, res.ptr};
}

inline void write_metrics_csv(std::ostream& out, const MetricsLog& log) {
    out << "step,time,agent,mse";
    for (Index j = 0; j < log.state_dim; ++j) {
        out << ",mean_" << j;
    }
    for (Index j = 0; j < log.state_dim; ++j) {
        out << ",std_" << j;
    }
    out << '\n';
    for (const auto& row : log.rows) {
        out << row.step << ',' << format_time(row.time) << ',' << log.agent_ids.at(static_cast<std::size_t>(row.agent))
            << ',' << format_number(row.mse);
        for (Index j = 0; j < row.mean.size(); ++j) {
            out << ',' << format_number(row.mean[j]);
        }
        for (Index j = 0; j < row.stddev.size(); ++j) {
            out << ',' << format_number(row.stddev[j]);
        }
        out << '\n';
    }
}

inline void write_truth_csv(std::ostream& out, const ScenarioConfig& s, const TruthRecord& truth) {
    out << "step,time";
    for (Index j = 0; j < s.state_dim(); ++j) {
        out << ",x_" << j;
    }
    out << '\n';
    for (std::size_t i = 0; i < truth.states.size(); ++i) {
        out << i << ',' << format_time(s.time_at(static_cast<int>(i)));
        for (Index j = 0; j < truth.states[i].size(); ++j) {
            out << ',' << format_number(truth.states[i][j]);
        }
        out << '\n';
    }
}

/// MSE against time, one polyline per agent, logarithmic y axis.
inline void write_mse_svg(std::ostream& out, const MetricsLog& log) {
    constexpr double width = 800.0;
    constexpr double height = 480.0;
    constexpr double left = 70.0;
    constexpr double right = 20.0;
    constexpr double top = 20.0;
    constexpr double bottom = 50.0;
    constexpr double floor_value = 1e-12;
    static constexpr const char* palette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                                              "#ff7f0e", "#8c564b", "#e377c2", "#17becf"};

    double t_max = 0.0;
    double lo = std::numeric_limits<double>::infinity();
    double hi = -std::numeric_limits<double>::infinity();
    for (const auto& row : log.rows) {
        t_max = std::max(t_max, row.time);
        if (std::isfinite(row.mse)) {
            const double v = std::log10(std::max(row.mse, floor_value));
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
    }
    if (!std::isfinite(lo)) {
        lo = 0.0;
        hi = 1.0;
    }
    lo = std::floor(lo);
    hi = std::max(std::ceil(hi), lo + 1.0);
    if (t_max <= 0.0) {
        t_max = 1.0;
    }
    auto px = [&](double t) { return left + (width - left - right) * t / t_max; };
    auto py = [&](double v) { return top + (height - top - bottom) * (hi - v) / (hi - lo); };

    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
        << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
    out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    for (int e = static_cast<int>(lo); e <= static_cast<int>(hi); ++e) {
        const double y = py(e);
        out << "<line x1=\"" << left << "\" x2=\"" << width - right << "\" y1=\"" << y << "\" y2=\"" << y
            << "\" stroke=\"#ddd\"/>\n";
        out << "<text x=\"" << left - 6 << "\" y=\"" << y + 4 << "\" text-anchor=\"end\">1e" << e << "</text>\n";
    }
    out << "<text x=\"" << (left + width - right) / 2 << "\" y=\"" << height - 12
        << "\" text-anchor=\"middle\">time</text>\n";
    out << "<text x=\"" << left << "\" y=\"" << height - 30 << "\" text-anchor=\"middle\">0</text>\n";
    out << "<text x=\"" << width - right << "\" y=\"" << height - 30 << "\" text-anchor=\"middle\">"
        << format_time(t_max) << "</text>\n";

    for (std::size_t a = 0; a < log.agent_ids.size(); ++a) {
        const char* colour = palette[a % std::size(palette)];
        out << "<polyline fill=\"none\" stroke=\"" << colour << "\" stroke-width=\"1.5\" points=\"";
        for (const auto& row : log.rows) {
            if (static_cast<std::size_t>(row.agent) == a && std::isfinite(row.mse)) {
                out << px(row.time) << ',' << py(std::log10(std::max(row.mse, floor_value))) << ' ';
            }
        }
        out << "\"/>\n";
        out << "<text x=\"" << width - right - 60 << "\" y=\"" << top + 16 * (a + 1) << "\" fill=\"" << colour
            << "\">agent " << log.agent_ids[a] << "</text>\n";
    }
    out << "</svg>\n";
}

inline void write_text_file(const std::filesystem::path& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw std::runtime_error("cannot write " + path.string());
    }
    out << content;
    if (!out) {
        throw std::runtime_error("write failed for " + path.string());
    }
}

struct RunArtifacts {
    bool write_plot = true;
};

/// load -> truth -> filter -> emit. metrics.csv holds whatever steps
/// completed even when the filter throws; the error is then rethrown.
inline MetricsLog run_scenario(const ScenarioConfig& s, const std::filesystem::path& out_dir, unsigned threads = 1,
                               RunArtifacts artifacts = {}) {
    std::filesystem::create_directories(out_dir);
    write_text_file(out_dir / "scenario.resolved.json", scenario_to_json(s).dump(2) + "\n");

    const TruthRecord truth = simulate_truth(s);
    std::ostringstream truth_csv;
    write_truth_csv(truth_csv, s, truth);
    write_text_file(out_dir / "truth.csv", truth_csv.str());

    MetricsLog log;
    auto flush = [&] {
        std::ostringstream metrics;
        write_metrics_csv(metrics, log);
        write_text_file(out_dir / "metrics.csv", metrics.str());
        if (artifacts.write_plot) {
            std::ostringstream svg;
            write_mse_svg(svg, log);
            write_text_file(out_dir / "mse.svg", svg.str());
        }
    };
    try {
        run_filter(s, truth, log, threads);
    } catch (...) {
        flush();
        throw;
    }
    flush();
    return log;
}

} // namespace tmf

#endif // TMF_HARNESS_HPP
