/// @file ensemble.hpp Particle ensemble shared by the dynamics, network and filter modules.

#ifndef TMF_ENSEMBLE_HPP
#define TMF_ENSEMBLE_HPP

#include <string>
#include <utility>

#include "errors.hpp"
#include "types.hpp"

namespace tmf {

/// M particles of dimension n, one particle per row.
struct ParticleEnsemble {
    Matrix particles;
    int agent = 0;
    int step = 0;

    [[nodiscard]] Index size() const noexcept { return particles.rows(); }
    [[nodiscard]] Index dim() const noexcept { return particles.cols(); }

    [[nodiscard]] Vector mean() const { return particles.colwise().mean().transpose(); }

    /// Per-dimension standard deviation, population convention.
    [[nodiscard]] Vector stddev() const {
        const Matrix centered = particles.rowwise() - particles.colwise().mean();
        return (centered.array().square().colwise().sum() / static_cast<double>(size())).sqrt().transpose();
    }

    void require_finite(const std::string& context) const {
        if (!particles.allFinite()) {
            throw AssimilationError(context + ": non-finite particle in ensemble of agent " + std::to_string(agent));
        }
    }
};

} // namespace tmf

#endif // TMF_ENSEMBLE_HPP
