/// @file dynamics.hpp Clohessy–Wiltshire relative motion with quaternion attitude kinematics.
///
/// Flattened state layout (13 entries for the full model, first 6 for the
/// translation-only model):
///
///     0..5   x, y, z, xdot, ydot, zdot     Hill-frame position / velocity
///     6..8   w1, w2, w3                    deputy rate relative to Hill frame
///     9..12  q1, q2, q3, q4                unit quaternion, scalar first
///
/// Process noise enters every non-quaternion entry as an Euler–Maruyama
/// increment after each RK4 substep; the quaternion is renormalised after
/// every substep.

#ifndef TMF_DYNAMICS_HPP
#define TMF_DYNAMICS_HPP

#include <cmath>
#include <string>

#include "ensemble.hpp"
#include "errors.hpp"
#include "parallel.hpp"
#include "random.hpp"
#include "types.hpp"

namespace tmf {

using Vector3 = Eigen::Vector3d;
using Vector4 = Eigen::Vector4d;
using Matrix3 = Eigen::Matrix3d;

inline constexpr Index kTranslationDim = 6;
inline constexpr Index kFullDim = 13;
inline constexpr Index kOmegaOffset = 6;
inline constexpr Index kQuaternionOffset = 9;

enum class ModelKind { cw_translation, cw_full };

[[nodiscard]] constexpr Index state_dim(ModelKind kind) noexcept {
    return kind == ModelKind::cw_translation ? kTranslationDim : kFullDim;
}

struct DynamicsParams {
    double alpha = 0.1;   ///< orbital rate [rad/s]
    double sigma = 0.2;   ///< process-noise standard deviation
    double dt_int = 1e-2; ///< integrator step [s]
    /// Sign of the 1/2 prefactor in the quaternion kinematics. -1 follows the
    /// reference formulation; +1 is the conventional q' = 0.5 q (x) (0, w).
    double quat_sign = -1.0;

    void validate() const {
        if (!(alpha > 0.0)) {
            throw ConfigError("dynamics: alpha must be positive");
        }
        if (!(sigma >= 0.0)) {
            throw ConfigError("dynamics: sigma must be non-negative");
        }
        if (!(dt_int > 0.0)) {
            throw ConfigError("dynamics: dt_int must be positive");
        }
        if (quat_sign != 1.0 && quat_sign != -1.0) {
            throw ConfigError("dynamics: quat_sign must be +1 or -1");
        }
    }
};

/// Linear CW system matrix for x_T = (x, y, z, xdot, ydot, zdot).
[[nodiscard]] inline Matrix cw_matrix(double alpha) {
    Matrix a = Matrix::Zero(6, 6);
    a(0, 3) = 1.0;
    a(1, 4) = 1.0;
    a(2, 5) = 1.0;
    a(3, 0) = 3.0 * alpha * alpha;
    a(3, 4) = 2.0 * alpha;
    a(4, 3) = -2.0 * alpha;
    a(5, 2) = -alpha * alpha;
    return a;
}

/// [w]x with [w]x v = w x v.
[[nodiscard]] inline Matrix3 cross_operator(const Vector3& w) {
    Matrix3 m;
    m << 0.0, -w[2], w[1],
         w[2], 0.0, -w[0],
        -w[1], w[0], 0.0;
    return m;
}

namespace detail {

/// Frame-transformation DCM of a unit quaternion (scalar first):
/// R = (s^2 - v.v) I + 2 v v^T - 2 s [v]x.
inline Matrix3 dcm_unit(const Vector4& q) {
    const double s = q[0];
    const Vector3 v = q.tail<3>();
    return (s * s - v.squaredNorm()) * Matrix3::Identity() + 2.0 * v * v.transpose() - 2.0 * s * cross_operator(v);
}

} // namespace detail

/// Rotation taking Hill-frame coordinates to deputy-frame coordinates.
/// Quaternions within 1e-6 of unit norm are renormalised first.
[[nodiscard]] inline Matrix3 rotation_from_quaternion(const Vector4& q) {
    const double norm = q.norm();
    if (!(std::abs(norm - 1.0) <= 1e-6)) {
        throw StructuralError("rotation_from_quaternion: quaternion norm " + std::to_string(norm) +
                              " is not unit");
    }
    return detail::dcm_unit(q / norm);
}

struct AttitudeDerivative {
    Vector4 q_dot;
    Vector3 omega_dot;
};

/// Kinematic attitude drift with a torque-free deputy and a Hill frame
/// rotating at alpha about its third axis:
///     w' = [w]x R(q) (0, 0, alpha)
///     q' = quat_sign * 0.5 * Xi(q) w
/// R is evaluated at q / |q| so intermediate RK stages need not be unit.
[[nodiscard]] inline AttitudeDerivative attitude_drift(const Vector3& omega, const Vector4& q,
                                                       const DynamicsParams& params) {
    const double norm = q.norm();
    if (!(norm > 1e-12)) {
        throw StructuralError("attitude_drift: quaternion is numerically zero");
    }
    const Vector3 omega_orbit(0.0, 0.0, params.alpha);
    AttitudeDerivative d;
    d.omega_dot = cross_operator(omega) * detail::dcm_unit(q / norm) * omega_orbit;

    Eigen::Matrix<double, 4, 3> xi;
    xi << -q[1], -q[2], -q[3],
           q[0],  q[3], -q[2],
          -q[3],  q[0],  q[1],
           q[2], -q[1],  q[0];
    d.q_dot = params.quat_sign * 0.5 * xi * omega;
    return d;
}

/// Deterministic drift of a 6- or 13-dimensional state.
[[nodiscard]] inline Vector full_drift(const Vector& state, const DynamicsParams& params) {
    if (state.size() != kTranslationDim && state.size() != kFullDim) {
        throw StructuralError("full_drift: state must have 6 or 13 entries, got " + std::to_string(state.size()));
    }
    Vector out(state.size());
    out.head(kTranslationDim) = cw_matrix(params.alpha) * state.head(kTranslationDim);
    if (state.size() == kFullDim) {
        const AttitudeDerivative d =
            attitude_drift(state.segment<3>(kOmegaOffset), state.segment<4>(kQuaternionOffset), params);
        out.segment<3>(kOmegaOffset) = d.omega_dot;
        out.segment<4>(kQuaternionOffset) = d.q_dot;
    }
    return out;
}

/// One classical fourth-order Runge–Kutta step of an autonomous drift.
/// `time` is only used to label integration errors.
template <typename Drift>
[[nodiscard]] Vector rk4_step(Drift&& drift, const Vector& state, double dt, double time = 0.0) {
    if (!(dt > 0.0)) {
        throw StructuralError("rk4_step: dt must be positive");
    }
    auto checked = [&](const Vector& x) {
        Vector d = drift(x);
        if (!d.allFinite()) {
            throw IntegrationError("rk4_step: non-finite derivative at t=" + std::to_string(time), time);
        }
        return d;
    };
    const Vector k1 = checked(state);
    const Vector k2 = checked(state + 0.5 * dt * k1);
    const Vector k3 = checked(state + 0.5 * dt * k2);
    const Vector k4 = checked(state + dt * k3);
    return state + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

/// Rescales the quaternion block of a full state to unit norm.
inline void normalize_quaternion(Eigen::Ref<Vector> state) {
    if (state.size() != kFullDim) {
        return;
    }
    const double norm = state.segment<4>(kQuaternionOffset).norm();
    if (!(norm > 1e-12)) {
        throw StructuralError("normalize_quaternion: quaternion is numerically zero");
    }
    state.segment<4>(kQuaternionOffset) /= norm;
}

/// Number of integrator substeps per observation interval; dt_obs must be an
/// integer multiple of dt_int.
[[nodiscard]] inline int substeps(double dt_obs, double dt_int) {
    const double ratio = dt_obs / dt_int;
    const double rounded = std::round(ratio);
    if (!(rounded >= 1.0) || std::abs(ratio - rounded) > 1e-9 * rounded) {
        throw ConfigError("dt_obs must be a positive integer multiple of dt_int");
    }
    return static_cast<int>(rounded);
}

/// Advances one state over dt_obs: RK4 substeps, each followed by
/// sigma*sqrt(dt_int) Gaussian increments on the non-quaternion entries and
/// quaternion renormalisation.
[[nodiscard]] inline Vector propagate(const Vector& state, double dt_obs, const DynamicsParams& params,
                                      NormalStream& noise, double t0 = 0.0) {
    const int steps = substeps(dt_obs, params.dt_int);
    const Index noisy = state.size() == kFullDim ? kQuaternionOffset : state.size();
    const double scale = params.sigma * std::sqrt(params.dt_int);
    auto drift = [&](const Vector& x) { return full_drift(x, params); };

    Vector x = state;
    for (int s = 0; s < steps; ++s) {
        x = rk4_step(drift, x, params.dt_int, t0 + s * params.dt_int);
        if (scale > 0.0) {
            for (Index j = 0; j < noisy; ++j) {
                x[j] += scale * noise();
            }
        }
        normalize_quaternion(x);
    }
    return x;
}

/// Forecasts every particle independently; particle i draws from the stream
/// (seed, forecast, step, agent, i).
[[nodiscard]] inline ParticleEnsemble forecast(const ParticleEnsemble& ensemble, double dt_obs,
                                               const DynamicsParams& params, std::uint64_t seed,
                                               unsigned threads = 1, double t0 = 0.0) {
    ParticleEnsemble out = ensemble;
    out.step = ensemble.step + 1;
    parallel_for(static_cast<std::size_t>(ensemble.size()), threads, [&](std::size_t i) {
        const auto row = static_cast<Index>(i);
        NormalStream noise(seed, Purpose::forecast, static_cast<std::uint64_t>(out.step),
                           static_cast<std::uint64_t>(ensemble.agent), i);
        out.particles.row(row) =
            propagate(ensemble.particles.row(row).transpose(), dt_obs, params, noise, t0).transpose();
    });
    return out;
}

} // namespace tmf

#endif // TMF_DYNAMICS_HPP
