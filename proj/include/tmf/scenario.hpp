/// @file scenario.hpp Experiment description and its validation rules.

#ifndef TMF_SCENARIO_HPP
#define TMF_SCENARIO_HPP

#include <cmath>
#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "dynamics.hpp"
#include "errors.hpp"
#include "network.hpp"
#include "observation.hpp"
#include "transport.hpp"
#include "types.hpp"

namespace tmf {

/// How updated latent state coordinates return to the full state space.
enum class LiftMode {
    anchored, ///< keep each particle's component outside the retained subspace
    subspace, ///< mean + W w, the orthogonal complement is discarded
};

struct AgentSpec {
    std::string id;
    std::vector<Index> obs_dims;
    ObservationKind obs_type = ObservationKind::direct;
    double noise_std = 0.0;
    std::vector<std::string> neighbors;

    [[nodiscard]] ObservationSpec sensor() const { return {obs_type, obs_dims, noise_std}; }
};

struct PcaConfig {
    bool enabled = true;
    Index q_x = 4;
    /// Upper bound on retained observation directions; agents whose stacked
    /// dimension is smaller keep all of theirs.
    Index q_y = 3;
    bool center = true;
    LiftMode lift = LiftMode::anchored;
};

struct InitConfig {
    double translation_mean_offset = 3.0;
    double translation_var = 25.0;
    double attitude_mean_offset = 0.1;
    double attitude_var = 0.04;
};

struct ScenarioConfig {
    std::string name;
    ModelKind model = ModelKind::cw_translation;
    double alpha = 0.1;
    double sigma_process = 0.2;
    double dt_int = 1e-2;
    double dt_obs = 1e-1;
    double t_end = 20.0;
    Vector x0;
    int particles = 200;
    double gamma = 0.1;
    int consensus_iterations = 1;
    bool consensus_literal = false;
    PcaConfig pca;
    SolverOptions solver;
    double quat_sign = -1.0;
    AngleMode angle_mode = AngleMode::atan2;
    std::vector<AgentSpec> agents;
    std::uint64_t seed = 0;
    InitConfig init;

    [[nodiscard]] Index state_dim() const { return tmf::state_dim(model); }
    [[nodiscard]] int agent_count() const { return static_cast<int>(agents.size()); }

    /// Number of filter steps after t = 0.
    [[nodiscard]] int steps() const { return static_cast<int>(std::llround(t_end / dt_obs)); }
    [[nodiscard]] double time_at(int step) const { return step * dt_obs; }

    [[nodiscard]] DynamicsParams dynamics() const { return {alpha, sigma_process, dt_int, quat_sign}; }

    [[nodiscard]] ConsensusOptions consensus() const {
        return {gamma, consensus_iterations, consensus_literal};
    }

    [[nodiscard]] std::vector<ObservationSpec> sensors() const {
        std::vector<ObservationSpec> out;
        out.reserve(agents.size());
        for (const auto& a : agents) {
            out.push_back(a.sensor());
        }
        return out;
    }

    [[nodiscard]] int agent_index(const std::string& id) const {
        for (std::size_t i = 0; i < agents.size(); ++i) {
            if (agents[i].id == id) {
                return static_cast<int>(i);
            }
        }
        throw ConfigError("unknown agent id '" + id + "'");
    }

    [[nodiscard]] Topology topology() const {
        std::vector<std::vector<int>> lists;
        lists.reserve(agents.size());
        for (const auto& a : agents) {
            std::vector<int> nbs;
            for (const auto& id : a.neighbors) {
                nbs.push_back(agent_index(id));
            }
            lists.push_back(std::move(nbs));
        }
        return Topology::from_neighbor_lists(lists);
    }

    /// Retained observation dimension used by agent l.
    [[nodiscard]] Index effective_q_y(int agent) const {
        const auto specs = sensors();
        const auto nbs = topology().neighbors(agent);
        return std::min(pca.q_y, stacked_dim(specs, nbs));
    }

    /// Every rule is checked; all failures are reported together.
    void validate() const {
        std::vector<std::string> errors;
        auto check = [&](bool ok, const std::string& message) {
            if (!ok) {
                errors.push_back(message);
            }
        };

        const Index n = state_dim();
        check(x0.size() == n, "x0 must have " + std::to_string(n) + " entries, got " + std::to_string(x0.size()));
        check(x0.allFinite(), "x0 must be finite");
        if (x0.size() == kFullDim) {
            check(std::abs(x0.segment(kQuaternionOffset, 4).norm() - 1.0) <= 1e-6, "x0 quaternion must have unit norm");
        }
        check(alpha > 0.0, "alpha must be positive");
        check(sigma_process >= 0.0, "sigma_process must be non-negative");
        check(dt_int > 0.0, "dt_int must be positive");
        check(dt_obs > 0.0, "dt_obs must be positive");
        if (dt_int > 0.0 && dt_obs > 0.0) {
            try {
                (void)substeps(dt_obs, dt_int);
            } catch (const ConfigError&) {
                errors.emplace_back("dt_obs must be an integer multiple of dt_int");
            }
            const double ratio = t_end / dt_obs;
            check(t_end >= 0.0 && std::abs(ratio - std::round(ratio)) <= 1e-9 * std::max(1.0, ratio),
                  "t_end must be a non-negative integer multiple of dt_obs");
        }
        check(particles >= 2, "particles must be at least 2");
        check(quat_sign == 1.0 || quat_sign == -1.0, "dynamics.quat_sign must be +1 or -1");
        check(consensus_iterations >= 1, "consensus.iterations must be at least 1");
        check(solver.max_iters >= 1, "solver.max_iters must be at least 1");
        check(solver.tolerance > 0.0, "solver.tol must be positive");
        check(init.translation_var >= 0.0, "init.translation_var must be non-negative");
        check(init.attitude_var >= 0.0, "init.attitude_var must be non-negative");
        if (pca.enabled) {
            check(pca.q_x >= 1 && pca.q_x <= n, "pca.q_x must lie in [1, " + std::to_string(n) + "]");
            check(pca.q_x <= particles, "pca.q_x must not exceed the particle count");
            check(pca.q_y >= 1, "pca.q_y must be at least 1");
        }

        check(!agents.empty(), "at least one agent is required");
        std::set<std::string> ids;
        for (const auto& a : agents) {
            check(!a.id.empty(), "agent ids must be non-empty");
            check(ids.insert(a.id).second, "duplicate agent id '" + a.id + "'");
        }
        bool neighbors_ok = !agents.empty();
        for (const auto& a : agents) {
            try {
                a.sensor().validate(n);
            } catch (const ConfigError& e) {
                errors.push_back("agent " + a.id + ": " + e.what());
            }
            check(!a.neighbors.empty(), "agent " + a.id + ": neighbor list must be non-empty");
            bool self = false;
            for (const auto& nb : a.neighbors) {
                if (ids.count(nb) == 0) {
                    errors.push_back("agent " + a.id + ": unknown neighbor '" + nb + "'");
                    neighbors_ok = false;
                }
                self = self || nb == a.id;
            }
            if (!self) {
                errors.push_back("agent " + a.id + ": neighbor list must include the agent itself");
                neighbors_ok = false;
            }
        }
        if (neighbors_ok && ids.size() == agents.size()) {
            const Topology topo = topology();
            check(topo.is_connected(), "network is not connected");
            try {
                validate_gamma(topo, gamma);
            } catch (const ConfigError& e) {
                errors.emplace_back(e.what());
            }
        }

        if (!errors.empty()) {
            std::string message = "scenario validation failed:";
            for (const auto& e : errors) {
                message += "\n  - " + e;
            }
            throw ConfigError(message);
        }
    }
};

} // namespace tmf

#endif // TMF_SCENARIO_HPP
