/// @file filter.hpp Forecast, PCA-reduced transport assimilation and consensus per observation time.

#ifndef TMF_FILTER_HPP
#define TMF_FILTER_HPP

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "dynamics.hpp"
#include "ensemble.hpp"
#include "errors.hpp"
#include "network.hpp"
#include "observation.hpp"
#include "parallel.hpp"
#include "pca.hpp"
#include "random.hpp"
#include "scenario.hpp"
#include "transport.hpp"
#include "types.hpp"

namespace tmf {

struct AssimilationOptions {
    bool pca_enabled = true;
    Index q_x = 4;
    /// Clamped to the agent's stacked observation dimension.
    Index q_y = 3;
    bool center = true;
    LiftMode lift = LiftMode::anchored;
    SolverOptions solver;
    AngleMode angle_mode = AngleMode::atan2;

    static AssimilationOptions from(const ScenarioConfig& s) {
        return {s.pca.enabled, s.pca.q_x, s.pca.q_y, s.pca.center, s.pca.lift, s.solver, s.angle_mode};
    }
};

/// Inputs that identify one assimilation call, used for stream keys and
/// error messages.
struct UpdateContext {
    std::uint64_t seed = 0;
    int step = 0;
    double time = 0.0;
    unsigned threads = 1;
};

inline void normalize_ensemble_quaternions(ParticleEnsemble& e) {
    if (e.dim() != kFullDim) {
        return;
    }
    for (Index i = 0; i < e.size(); ++i) {
        Vector row = e.particles.row(i).transpose();
        normalize_quaternion(row);
        e.particles.row(i) = row.transpose();
    }
}

/// Applies one transport-map update to agent `agent`'s forecast ensemble.
/// `snapshot` is the same ensemble before forecasting (differential sensors).
[[nodiscard]] inline ParticleEnsemble pca_map_update(const ParticleEnsemble& ensemble, const ParticleEnsemble& snapshot,
                                                     int agent, std::span<const ObservationSpec> specs,
                                                     std::span<const int> neighbors, const Vector& y_star,
                                                     const AssimilationOptions& opts, const UpdateContext& ctx) {
    const std::string where = "assimilation of agent " + std::to_string(agent) + " at t=" + std::to_string(ctx.time);
    const Index n = ensemble.dim();
    const Index d = stacked_dim(specs, neighbors);
    require_dim(y_star.size(), d, "pca_map_update y_star");

    const Matrix y = sample_predicted_observations(agent, specs, neighbors, ensemble, snapshot, ctx.seed, ctx.step,
                                                   opts.angle_mode, ctx.threads);

    PcaProjection v = PcaProjection::identity(d);
    PcaProjection w = PcaProjection::identity(n);
    if (opts.pca_enabled) {
        try {
            v = fit_pca(y, std::min(opts.q_y, d), {opts.center});
            w = fit_pca(ensemble.particles, opts.q_x, {opts.center});
        } catch (const StructuralError& e) {
            throw AssimilationError(where + ": " + e.what());
        }
    }

    const Matrix y_latent = v.project_rows(y);
    const Matrix x_latent = w.project_rows(ensemble.particles);
    const auto qy = static_cast<int>(y_latent.cols());
    const auto qx = x_latent.cols();

    Matrix joint(ensemble.size(), qy + qx);
    joint << y_latent, x_latent;
    if ((joint.rowwise() - joint.row(0)).cwiseAbs().maxCoeff() == 0.0) {
        // Every particle and predicted observation coincide; the map would be
        // the identity, which the estimator cannot recover from zero spread.
        return ensemble;
    }

    AffineTriangularMap map;
    try {
        map = estimate_map(SampleMatrix(joint), qy, opts.solver);
    } catch (const Error& e) {
        throw AssimilationError(where + ": map estimation failed: " + e.what());
    }
    if (!map.lower_block_monotone()) {
        throw AssimilationError(where + ": estimated map has a non-positive diagonal");
    }

    const Matrix x_post = prior_to_posterior(map, v.project(y_star), y_latent, x_latent);

    ParticleEnsemble out = ensemble;
    for (Index i = 0; i < out.size(); ++i) {
        const Vector wi = x_post.row(i).transpose();
        const Vector lifted = opts.lift == LiftMode::anchored
                                  ? w.lift(wi, ensemble.particles.row(i).transpose())
                                  : w.lift_subspace(wi);
        out.particles.row(i) = lifted.transpose();
    }
    normalize_ensemble_quaternions(out);
    out.require_finite(where);
    return out;
}

struct FilterState {
    std::vector<ParticleEnsemble> ensembles;
    std::vector<ParticleEnsemble> snapshots;
    int step = 0;
    double time = 0.0;
};

/// Recorded ground truth. readings[i][l] is agent l's own sensor reading at
/// step i; readings[0] is empty because nothing is assimilated at t = 0.
struct TruthRecord {
    std::vector<Vector> states;
    std::vector<std::vector<Vector>> readings;
};

/// Draws every agent's initial ensemble. The translation block is
/// N(x0 + offset, var I) and, for the full model, the attitude block likewise
/// with its own offset and variance; quaternions are renormalised afterwards.
[[nodiscard]] inline FilterState initialize_filter(const ScenarioConfig& s) {
    const Index n = s.state_dim();
    FilterState state;
    for (int l = 0; l < s.agent_count(); ++l) {
        ParticleEnsemble e;
        e.agent = l;
        e.particles.resize(s.particles, n);
        for (Index i = 0; i < s.particles; ++i) {
            NormalStream noise(s.seed, Purpose::init, 0, static_cast<std::uint64_t>(l), static_cast<std::uint64_t>(i));
            for (Index j = 0; j < n; ++j) {
                const bool translation = j < kTranslationDim;
                const double offset = translation ? s.init.translation_mean_offset : s.init.attitude_mean_offset;
                const double var = translation ? s.init.translation_var : s.init.attitude_var;
                e.particles(i, j) = s.x0[j] + offset + std::sqrt(var) * noise();
            }
        }
        normalize_ensemble_quaternions(e);
        state.ensembles.push_back(e);
    }
    state.snapshots = state.ensembles;
    return state;
}

/// Forecast all agents, then assimilate all agents against readings, then
/// one consensus application. Phases never overlap.
[[nodiscard]] inline FilterState consensus_filter_step(const FilterState& state, const ScenarioConfig& s,
                                                       const std::vector<Vector>& readings, unsigned threads = 1) {
    const int agents = s.agent_count();
    if (static_cast<int>(state.ensembles.size()) != agents || static_cast<int>(readings.size()) != agents) {
        throw StructuralError("consensus_filter_step: need one ensemble and one reading per agent");
    }
    const DynamicsParams params = s.dynamics();
    const Topology topo = s.topology();
    const auto specs = s.sensors();
    const AssimilationOptions opts = AssimilationOptions::from(s);

    FilterState next;
    next.step = state.step + 1;
    next.time = s.time_at(next.step);
    next.snapshots = state.ensembles;

    next.ensembles.resize(state.ensembles.size());
    for (int l = 0; l < agents; ++l) {
        try {
            next.ensembles[l] = forecast(state.ensembles[l], s.dt_obs, params, s.seed, threads, state.time);
        } catch (const IntegrationError& e) {
            throw IntegrationError("forecast of agent " + s.agents[l].id + " at step " + std::to_string(next.step) +
                                       ": " + e.what(),
                                   e.time());
        }
    }

    std::vector<ParticleEnsemble> updated(next.ensembles.size());
    // Agents in parallel, particles sequential within an agent: the result
    // does not depend on the split because every draw is keyed.
    parallel_for(updated.size(), threads, [&](std::size_t idx) {
        const int l = static_cast<int>(idx);
        const std::vector<int> nbs = topo.neighbors(l);
        const Vector y_star = stack_readings(readings, nbs);
        const UpdateContext ctx{s.seed, next.step, next.time, 1};
        try {
            updated[idx] = pca_map_update(next.ensembles[idx], next.snapshots[idx], l, specs, nbs, y_star, opts, ctx);
        } catch (const AssimilationError& e) {
            throw AssimilationError("agent " + s.agents[idx].id + ": " + e.what());
        }
    });

    next.ensembles = consensus_step(updated, topo, s.consensus(), threads);
    for (auto& e : next.ensembles) {
        normalize_ensemble_quaternions(e);
        e.step = next.step;
        e.require_finite("consensus of agent " + s.agents[static_cast<std::size_t>(e.agent)].id + " at step " +
                         std::to_string(next.step));
    }
    return next;
}

struct MetricsRow {
    int step = 0;
    double time = 0.0;
    int agent = 0;
    double mse = 0.0;
    Vector mean;
    Vector stddev;
};

struct MetricsLog {
    std::vector<std::string> agent_ids;
    Index state_dim = 0;
    std::vector<MetricsRow> rows;

    /// Row for (step, agent); rows are ordered by step then agent.
    [[nodiscard]] const MetricsRow& at(int step, int agent) const {
        return rows.at(static_cast<std::size_t>(step) * agent_ids.size() + static_cast<std::size_t>(agent));
    }
};

inline void append_metrics(MetricsLog& log, const FilterState& state, const Vector& truth) {
    for (const auto& e : state.ensembles) {
        MetricsRow row;
        row.step = state.step;
        row.time = state.time;
        row.agent = e.agent;
        row.mean = e.mean();
        row.stddev = e.stddev();
        row.mse = (row.mean - truth).squaredNorm();
        log.rows.push_back(std::move(row));
    }
}

/// Runs every observation step, appending to `log` as it goes so a failure
/// leaves the completed steps in place. Rethrows the failure.
inline void run_filter(const ScenarioConfig& s, const TruthRecord& truth, MetricsLog& log, unsigned threads = 1,
                       const std::function<void(const FilterState&)>& on_step = {}) {
    const int steps = s.steps();
    if (static_cast<int>(truth.states.size()) != steps + 1 || static_cast<int>(truth.readings.size()) != steps + 1) {
        throw StructuralError("run_filter: truth record does not cover every observation time");
    }
    log.agent_ids.clear();
    for (const auto& a : s.agents) {
        log.agent_ids.push_back(a.id);
    }
    log.state_dim = s.state_dim();
    log.rows.clear();

    FilterState state = initialize_filter(s);
    append_metrics(log, state, truth.states[0]);
    if (on_step) {
        on_step(state);
    }
    for (int i = 1; i <= steps; ++i) {
        state = consensus_filter_step(state, s, truth.readings[static_cast<std::size_t>(i)], threads);
        append_metrics(log, state, truth.states[static_cast<std::size_t>(i)]);
        if (on_step) {
            on_step(state);
        }
    }
}

[[nodiscard]] inline MetricsLog run_filter(const ScenarioConfig& s, const TruthRecord& truth, unsigned threads = 1) {
    MetricsLog log;
    run_filter(s, truth, log, threads);
    return log;
}

} // namespace tmf

#endif // TMF_FILTER_HPP
