/// @file observation.hpp Direct, differential, range and angle sensors, and neighbour stacking.

#ifndef TMF_OBSERVATION_HPP
#define TMF_OBSERVATION_HPP

#include <cmath>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ensemble.hpp"
#include "errors.hpp"
#include "parallel.hpp"
#include "random.hpp"
#include "types.hpp"

namespace tmf {

enum class ObservationKind { direct, differential, rangefinder, angle };

[[nodiscard]] inline std::string_view to_string(ObservationKind kind) {
    switch (kind) {
    case ObservationKind::direct:
        return "direct";
    case ObservationKind::differential:
        return "differential";
    case ObservationKind::rangefinder:
        return "rangefinder";
    case ObservationKind::angle:
        return "angle";
    }
    return "unknown";
}

[[nodiscard]] inline ObservationKind parse_observation_kind(std::string_view name) {
    if (name == "direct") {
        return ObservationKind::direct;
    }
    if (name == "differential") {
        return ObservationKind::differential;
    }
    if (name == "rangefinder" || name == "range") {
        return ObservationKind::rangefinder;
    }
    if (name == "angle") {
        return ObservationKind::angle;
    }
    throw ConfigError("unknown observation type '" + std::string(name) + "'");
}

/// atan2 is quadrant-aware; literal evaluates arctan(b / a) as written.
enum class AngleMode { atan2, literal };

/// Which side of the filter is observing. Truth generation treats an angle
/// at the origin as an error; predicted sampling returns 0 there instead.
enum class ObservationRole { truth, predicted };

struct ObservationContext {
    ObservationRole role = ObservationRole::truth;
    AngleMode angle_mode = AngleMode::atan2;
};

struct ObservationSpec {
    ObservationKind kind = ObservationKind::direct;
    std::vector<Index> dims;
    double noise_std = 0.0;

    [[nodiscard]] Index output_dim() const {
        switch (kind) {
        case ObservationKind::direct:
        case ObservationKind::differential:
            return static_cast<Index>(dims.size());
        case ObservationKind::rangefinder:
        case ObservationKind::angle:
            return 1;
        }
        return 0;
    }

    void validate(Index state_dim) const {
        if (dims.empty()) {
            throw ConfigError("observation: dims must be non-empty");
        }
        if (kind == ObservationKind::angle && dims.size() != 2) {
            throw ConfigError("observation: angle requires exactly 2 dims");
        }
        for (Index d : dims) {
            if (d < 0 || d >= state_dim) {
                throw ConfigError("observation: dim " + std::to_string(d) + " outside state of dimension " +
                                  std::to_string(state_dim));
            }
        }
        if (!(noise_std >= 0.0) || !std::isfinite(noise_std)) {
            throw ConfigError("observation: noise_std must be finite and non-negative");
        }
    }
};

struct ObservationVector {
    Vector values;
    int source = 0;
};

/// Maps an angle to (-pi, pi].
[[nodiscard]] inline double wrap_angle(double theta) {
    constexpr double two_pi = 2.0 * std::numbers::pi;
    return theta - two_pi * std::ceil((theta - std::numbers::pi) / two_pi);
}

/// Noise-free sensor value.
[[nodiscard]] inline Vector observe_noiseless(const ObservationSpec& spec, const Vector& x_curr,
                                              const Vector* x_prev, const ObservationContext& ctx = {}) {
    for (Index d : spec.dims) {
        if (d < 0 || d >= x_curr.size()) {
            throw StructuralError("observe: dim " + std::to_string(d) + " outside state");
        }
    }
    Vector out(spec.output_dim());
    switch (spec.kind) {
    case ObservationKind::direct:
        for (std::size_t j = 0; j < spec.dims.size(); ++j) {
            out[static_cast<Index>(j)] = x_curr[spec.dims[j]];
        }
        break;
    case ObservationKind::differential:
        if (x_prev == nullptr) {
            throw StructuralError("observe: differential observation needs the previous state");
        }
        require_dim(x_prev->size(), x_curr.size(), "observe previous state");
        for (std::size_t j = 0; j < spec.dims.size(); ++j) {
            out[static_cast<Index>(j)] = x_curr[spec.dims[j]] - (*x_prev)[spec.dims[j]];
        }
        break;
    case ObservationKind::rangefinder: {
        double sq = 0.0;
        for (Index d : spec.dims) {
            sq += x_curr[d] * x_curr[d];
        }
        out[0] = std::sqrt(sq);
        break;
    }
    case ObservationKind::angle: {
        const double a = x_curr[spec.dims[0]];
        const double b = x_curr[spec.dims[1]];
        if (std::abs(a) < 1e-12 && std::abs(b) < 1e-12) {
            if (ctx.role == ObservationRole::truth) {
                throw ObservationError("observe: angle undefined at the origin");
            }
            out[0] = 0.0;
        } else {
            out[0] = ctx.angle_mode == AngleMode::atan2 ? std::atan2(b, a) : std::atan(b / a);
        }
        break;
    }
    }
    return out;
}

/// Sensor value plus independent N(0, noise_std^2) on each output entry.
[[nodiscard]] inline ObservationVector observe(const ObservationSpec& spec, const Vector& x_curr, const Vector* x_prev,
                                               NormalStream& noise, const ObservationContext& ctx = {},
                                               int source = 0) {
    ObservationVector y{observe_noiseless(spec, x_curr, x_prev, ctx), source};
    if (spec.noise_std > 0.0) {
        for (Index j = 0; j < y.values.size(); ++j) {
            y.values[j] += spec.noise_std * noise();
        }
    }
    if (spec.kind == ObservationKind::angle) {
        y.values[0] = wrap_angle(y.values[0]);
    }
    return y;
}

/// Total stacked dimension sum_{l' in neighbors} output_dim(l').
[[nodiscard]] inline Index stacked_dim(std::span<const ObservationSpec> specs, std::span<const int> neighbors) {
    Index total = 0;
    for (int nb : neighbors) {
        total += specs[static_cast<std::size_t>(nb)].output_dim();
    }
    return total;
}

/// Concatenates the neighbours' observations of one state, in the order of
/// `neighbors` (ascending agent id). All noise comes from one stream.
[[nodiscard]] inline ObservationVector stack_neighbors(int agent, std::span<const ObservationSpec> specs,
                                                       std::span<const int> neighbors, const Vector& x_curr,
                                                       const Vector* x_prev, NormalStream& noise,
                                                       const ObservationContext& ctx = {}) {
    if (neighbors.empty()) {
        throw StructuralError("stack_neighbors: agent " + std::to_string(agent) + " has no neighbours");
    }
    Vector stacked(stacked_dim(specs, neighbors));
    Index offset = 0;
    for (int nb : neighbors) {
        if (nb < 0 || static_cast<std::size_t>(nb) >= specs.size()) {
            throw StructuralError("stack_neighbors: neighbour id out of range");
        }
        const ObservationSpec& spec = specs[static_cast<std::size_t>(nb)];
        const Vector y = observe(spec, x_curr, x_prev, noise, ctx, nb).values;
        stacked.segment(offset, y.size()) = y;
        offset += y.size();
    }
    return {std::move(stacked), agent};
}

/// Concatenates already-recorded sensor readings (one per agent).
[[nodiscard]] inline Vector stack_readings(std::span<const Vector> readings, std::span<const int> neighbors) {
    Index total = 0;
    for (int nb : neighbors) {
        total += readings[static_cast<std::size_t>(nb)].size();
    }
    Vector stacked(total);
    Index offset = 0;
    for (int nb : neighbors) {
        const Vector& y = readings[static_cast<std::size_t>(nb)];
        stacked.segment(offset, y.size()) = y;
        offset += y.size();
    }
    return stacked;
}

/// Stacked predicted observations for every particle; particle i uses the
/// stream (seed, predicted_obs, step, agent, i). Differential sensors read
/// particle i of `previous` as the pre-forecast state.
[[nodiscard]] inline Matrix sample_predicted_observations(int agent, std::span<const ObservationSpec> specs,
                                                          std::span<const int> neighbors,
                                                          const ParticleEnsemble& current,
                                                          const ParticleEnsemble& previous, std::uint64_t seed,
                                                          int step, AngleMode angle_mode = AngleMode::atan2,
                                                          unsigned threads = 1) {
    if (current.size() != previous.size() || current.dim() != previous.dim()) {
        throw StructuralError("sample_predicted_observations: ensembles are not aligned");
    }
    const ObservationContext ctx{ObservationRole::predicted, angle_mode};
    Matrix out(current.size(), stacked_dim(specs, neighbors));
    parallel_for(static_cast<std::size_t>(current.size()), threads, [&](std::size_t i) {
        const auto row = static_cast<Index>(i);
        NormalStream noise(seed, Purpose::predicted_obs, static_cast<std::uint64_t>(step),
                           static_cast<std::uint64_t>(agent), i);
        const Vector x = current.particles.row(row).transpose();
        const Vector prev = previous.particles.row(row).transpose();
        out.row(row) = stack_neighbors(agent, specs, neighbors, x, &prev, noise, ctx).values.transpose();
    });
    return out;
}

} // namespace tmf

#endif // TMF_OBSERVATION_HPP
