/// @file transport.hpp Affine monotone triangular (Knothe–Rosenblatt) maps.
///
/// A map S acts on a latent vector z = (y, x) whose first `obs_block_size`
/// entries are observation coordinates and whose remaining entries are state
/// coordinates. Component k (1-based) is the affine function
///
///     S^k(z) = u0 + sum_{l <= k} u_l z_l,    u_k > 0,
///
/// so output k only reads inputs 1..k and is strictly increasing in z_k.
///
/// Maps are estimated by minimising, per component, the sample objective
///
///     L^k(u) = (1/M) sum_i [ 0.5 * S^k(z^i)^2 - log u_k ],
///
/// which is convex in (u0, u_1..u_k). Two estimators are provided: the exact
/// Gaussian optimum (Cholesky of the sample covariance) and a projected
/// gradient descent on L^k with a backtracking line search.
///
/// Conditioning on an observation y* uses the composed map
///
///     T(y, x) = S^X(y*, .)^{-1} (S^X(y, x)),
///
/// where S^X is the lower (state) block of S.

#ifndef TMF_TRANSPORT_HPP
#define TMF_TRANSPORT_HPP

#include <Eigen/Cholesky>

#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "errors.hpp"
#include "parallel.hpp"
#include "types.hpp"

namespace tmf {

/// Lower bound enforced on diagonal weights by the iterative solver.
inline constexpr double kDiagonalFloor = 1e-10;
/// Relative ridge added to covariances before factorisation: eps * trace / dim.
inline constexpr double kCovarianceRidge = 1e-9;

class MapComponent {
public:
    MapComponent() = default;

    /// @param index 1-based position k in the triangular map.
    /// @param intercept u0.
    /// @param weights u_1..u_k; must have exactly k entries.
    MapComponent(int index, double intercept, Vector weights)
        : index_(index), intercept_(intercept), weights_(std::move(weights)) {
        if (index_ < 1) {
            throw StructuralError("MapComponent: index must be >= 1");
        }
        require_dim(weights_.size(), index_, "MapComponent weights");
    }

    /// Builds a component from the packed vector (u0, u_1, .., u_k).
    static MapComponent from_coefficients(const Vector& coeffs) {
        const auto k = static_cast<int>(coeffs.size()) - 1;
        return {k, coeffs[0], coeffs.tail(k)};
    }

    [[nodiscard]] int index() const noexcept { return index_; }
    [[nodiscard]] double intercept() const noexcept { return intercept_; }
    [[nodiscard]] const Vector& weights() const noexcept { return weights_; }
    [[nodiscard]] double diagonal() const { return weights_[index_ - 1]; }
    [[nodiscard]] bool is_monotone() const { return diagonal() > 0.0; }

    [[nodiscard]] Vector coefficients() const {
        Vector c(index_ + 1);
        c[0] = intercept_;
        c.tail(index_) = weights_;
        return c;
    }

    /// Evaluates the component on the first k entries of z.
    template <typename Derived>
    [[nodiscard]] double operator()(const Eigen::MatrixBase<Derived>& z) const {
        return intercept_ + weights_.dot(z.head(index_));
    }

private:
    int index_ = 0;
    double intercept_ = 0.0;
    Vector weights_;
};

class AffineTriangularMap {
public:
    AffineTriangularMap() = default;

    AffineTriangularMap(std::vector<MapComponent> components, int obs_block_size)
        : components_(std::move(components)), obs_block_size_(obs_block_size) {
        const int n = dim_total();
        if (n < 1) {
            throw StructuralError("AffineTriangularMap: at least one component is required");
        }
        if (obs_block_size_ < 0 || obs_block_size_ > n) {
            throw StructuralError("AffineTriangularMap: observation block size out of range");
        }
        for (int i = 0; i < n; ++i) {
            if (components_[i].index() != i + 1) {
                throw StructuralError("AffineTriangularMap: component " + std::to_string(i + 1) +
                                      " carries index " + std::to_string(components_[i].index()));
            }
        }
    }

    static AffineTriangularMap identity(int dim_total, int obs_block_size) {
        std::vector<MapComponent> comps;
        comps.reserve(dim_total);
        for (int k = 1; k <= dim_total; ++k) {
            comps.emplace_back(k, 0.0, Vector::Unit(k, k - 1));
        }
        return {std::move(comps), obs_block_size};
    }

    [[nodiscard]] int dim_total() const noexcept { return static_cast<int>(components_.size()); }
    [[nodiscard]] int obs_block_size() const noexcept { return obs_block_size_; }
    [[nodiscard]] int state_block_size() const noexcept { return dim_total() - obs_block_size_; }
    [[nodiscard]] const std::vector<MapComponent>& components() const noexcept { return components_; }
    [[nodiscard]] const MapComponent& component(int k) const { return components_.at(k - 1); }

    [[nodiscard]] bool lower_block_monotone() const {
        for (int k = obs_block_size_ + 1; k <= dim_total(); ++k) {
            if (!component(k).is_monotone()) {
                return false;
            }
        }
        return true;
    }

    /// Dense lower-triangular weight matrix; row k-1 holds component k.
    [[nodiscard]] Matrix weight_matrix() const {
        const int n = dim_total();
        Matrix w = Matrix::Zero(n, n);
        for (int k = 1; k <= n; ++k) {
            w.row(k - 1).head(k) = component(k).weights().transpose();
        }
        return w;
    }

private:
    std::vector<MapComponent> components_;
    int obs_block_size_ = 0;
};

enum class SolverMethod { closed_form, gradient };

struct SolverOptions {
    SolverMethod method = SolverMethod::closed_form;
    int max_iters = 10000;
    /// Stop once the Euclidean norm of the objective gradient is below this.
    double tolerance = 1e-5;
    /// Scale the descent direction by the inverse sample second-moment
    /// matrix. Plain steepest descent is used when false.
    bool precondition = true;
};

// ---------------------------------------------------------------------------
// Evaluation and inversion

[[nodiscard]] inline Vector evaluate(const AffineTriangularMap& map, const Vector& z) {
    require_dim(z.size(), map.dim_total(), "evaluate");
    Vector out(map.dim_total());
    for (int k = 1; k <= map.dim_total(); ++k) {
        out[k - 1] = map.component(k)(z);
    }
    return out;
}

/// Outputs of components obs_block_size+1..dim_total at z = (y, x).
[[nodiscard]] inline Vector evaluate_lower(const AffineTriangularMap& map, const Vector& y, const Vector& x) {
    require_dim(y.size(), map.obs_block_size(), "evaluate_lower observation block");
    require_dim(x.size(), map.state_block_size(), "evaluate_lower state block");
    Vector z(map.dim_total());
    z << y, x;
    Vector out(map.state_block_size());
    for (int k = map.obs_block_size() + 1; k <= map.dim_total(); ++k) {
        out[k - map.obs_block_size() - 1] = map.component(k)(z);
    }
    return out;
}

/// Solves S^X(y_star, x) = r for x by forward substitution.
[[nodiscard]] inline Vector invert_lower_block(const AffineTriangularMap& map, const Vector& y_star, const Vector& r) {
    const int d = map.obs_block_size();
    require_dim(y_star.size(), d, "invert_lower_block observation block");
    require_dim(r.size(), map.state_block_size(), "invert_lower_block target");

    Vector z(map.dim_total());
    z.head(d) = y_star;
    for (int k = d + 1; k <= map.dim_total(); ++k) {
        const MapComponent& c = map.component(k);
        const double diag = c.diagonal();
        if (!(diag > 0.0)) {
            throw NonMonotoneMapError("invert_lower_block: component " + std::to_string(k) +
                                      " has non-positive diagonal weight");
        }
        const double partial = c.intercept() + c.weights().head(k - 1).dot(z.head(k - 1));
        z[k - 1] = (r[k - d - 1] - partial) / diag;
    }
    return z.tail(map.state_block_size());
}

/// Applies T(y, x) = S^X(y*, .)^{-1} o S^X(y, x) to each row pair.
/// @param y_latent M x obs_block_size
/// @param x_latent M x state_block_size
/// @return M x state_block_size transformed states
[[nodiscard]] inline Matrix prior_to_posterior(const AffineTriangularMap& map, const Vector& y_star,
                                               const Matrix& y_latent, const Matrix& x_latent) {
    if (y_latent.rows() != x_latent.rows()) {
        throw StructuralError("prior_to_posterior: observation and state sample counts differ");
    }
    require_dim(y_latent.cols(), map.obs_block_size(), "prior_to_posterior observation block");
    require_dim(x_latent.cols(), map.state_block_size(), "prior_to_posterior state block");
    if (!map.lower_block_monotone()) {
        throw NonMonotoneMapError("prior_to_posterior: lower block is not monotone");
    }

    Matrix out(x_latent.rows(), x_latent.cols());
    for (Index i = 0; i < x_latent.rows(); ++i) {
        const Vector r = evaluate_lower(map, y_latent.row(i).transpose(), x_latent.row(i).transpose());
        out.row(i) = invert_lower_block(map, y_star, r).transpose();
    }
    return out;
}

// ---------------------------------------------------------------------------
// Objective and gradient

namespace detail {

inline void check_component_input(const MapComponent& comp, const SampleMatrix& samples, const char* what) {
    if (samples.dim() < comp.index()) {
        throw StructuralError(std::string(what) + ": samples have " + std::to_string(samples.dim()) +
                              " columns, component needs " + std::to_string(comp.index()));
    }
    if (!comp.is_monotone()) {
        throw NonMonotoneMapError(std::string(what) + ": diagonal weight of component " +
                                  std::to_string(comp.index()) + " is not positive; objective is undefined");
    }
}

/// Second-moment matrix of (1, z_1..z_k) over the samples.
inline Matrix augmented_second_moment(const Matrix& samples, int k) {
    const Index m = samples.rows();
    Matrix aug(m, k + 1);
    aug.col(0).setOnes();
    aug.rightCols(k) = samples.leftCols(k);
    return (aug.transpose() * aug) / static_cast<double>(m);
}

/// Objective in quadratic form; +inf outside the monotone region.
inline double quadratic_objective(const Matrix& moment, const Vector& c) {
    const double diag = c[c.size() - 1];
    if (!(diag > 0.0)) {
        return std::numeric_limits<double>::infinity();
    }
    return 0.5 * c.dot(moment * c) - std::log(diag);
}

inline Vector quadratic_gradient(const Matrix& moment, const Vector& c) {
    Vector g = moment * c;
    g[g.size() - 1] -= 1.0 / c[c.size() - 1];
    return g;
}

/// Mean and Cholesky factor of the ridge-regularised covariance of the first
/// k columns. Throws EstimationError when the covariance is not positive
/// definite.
struct GaussianFit {
    Vector mean;
    Matrix chol_lower;
};

inline GaussianFit gaussian_fit(const SampleMatrix& samples, int k, int component_for_errors) {
    const Matrix cols = samples.matrix().leftCols(k);
    Vector mean = cols.colwise().mean().transpose();
    const Matrix centered = cols.rowwise() - mean.transpose();
    Matrix cov = (centered.transpose() * centered) / static_cast<double>(cols.rows());
    const double trace = cov.trace();
    cov.diagonal().array() += kCovarianceRidge * trace / static_cast<double>(k);

    Eigen::LLT<Matrix> llt(cov);
    if (!(trace > 0.0) || llt.info() != Eigen::Success) {
        throw EstimationError("map estimation: sample covariance is singular for component " +
                                  std::to_string(component_for_errors),
                              component_for_errors);
    }
    Matrix chol = llt.matrixL();
    const double min_pivot = chol.diagonal().minCoeff();
    const double max_pivot = chol.diagonal().maxCoeff();
    if (!(min_pivot > 1e-12 * max_pivot)) {
        throw EstimationError("map estimation: sample covariance is ill-conditioned for component " +
                                  std::to_string(component_for_errors),
                              component_for_errors);
    }
    return {std::move(mean), std::move(chol)};
}

} // namespace detail

/// (1/M) sum_i [ 0.5 U(z^i)^2 - log u_k ], evaluated sample by sample.
[[nodiscard]] inline double component_objective(const MapComponent& comp, const SampleMatrix& samples) {
    detail::check_component_input(comp, samples, "component_objective");
    const double log_diag = std::log(comp.diagonal());
    double total = 0.0;
    for (Index i = 0; i < samples.size(); ++i) {
        const double u = comp(samples.sample(i).transpose());
        total += 0.5 * u * u - log_diag;
    }
    return total / static_cast<double>(samples.size());
}

/// Gradient of component_objective with respect to (u0, u_1..u_k).
[[nodiscard]] inline Vector component_gradient(const MapComponent& comp, const SampleMatrix& samples) {
    detail::check_component_input(comp, samples, "component_gradient");
    const int k = comp.index();
    Vector grad = Vector::Zero(k + 1);
    for (Index i = 0; i < samples.size(); ++i) {
        const auto z = samples.sample(i);
        const double u = comp(z.transpose());
        grad[0] += u;
        grad.tail(k) += u * z.head(k).transpose();
    }
    grad /= static_cast<double>(samples.size());
    grad[k] -= 1.0 / comp.diagonal();
    return grad;
}

// ---------------------------------------------------------------------------
// Estimation

/// Exact affine minimiser z -> C^{-1}(z - mean) with C C^T the regularised
/// sample covariance. Every component is returned.
[[nodiscard]] inline AffineTriangularMap closed_form_gaussian_map(const SampleMatrix& samples, int obs_block_size = 0) {
    const int n = static_cast<int>(samples.dim());
    const detail::GaussianFit fit = detail::gaussian_fit(samples, n, 0);
    const Matrix inv_chol = fit.chol_lower.triangularView<Eigen::Lower>().solve(Matrix::Identity(n, n));
    const Vector shift = inv_chol * fit.mean;

    std::vector<MapComponent> comps;
    comps.reserve(n);
    for (int k = 1; k <= n; ++k) {
        comps.emplace_back(k, -shift[k - 1], inv_chol.row(k - 1).head(k).transpose());
    }
    return {std::move(comps), obs_block_size};
}

namespace detail {

inline MapComponent closed_form_component(const GaussianFit& fit, int k) {
    // Last row of C^{-1}: solve C^T v = e_k.
    const Vector unit = Vector::Unit(k, k - 1);
    const Vector row = fit.chol_lower.transpose().triangularView<Eigen::Upper>().solve(unit);
    return {k, -row.dot(fit.mean), row};
}

inline MapComponent gradient_component(const SampleMatrix& samples, int k, const SolverOptions& solver,
                                       const GaussianFit& fit, const std::optional<MapComponent>& start) {
    const Matrix moment = augmented_second_moment(samples.matrix(), k);

    Vector c;
    if (start) {
        if (start->index() != k) {
            throw StructuralError("estimate_component: starting point has the wrong index");
        }
        if (!start->is_monotone()) {
            throw NonMonotoneMapError("estimate_component: starting point is not monotone");
        }
        c = start->coefficients();
    } else {
        // U(z) = (z_k - mean_k) / sd_k is always feasible.
        const double sd = fit.chol_lower.row(k - 1).norm();
        c = Vector::Zero(k + 1);
        c[k] = 1.0 / sd;
        c[0] = -fit.mean[k - 1] / sd;
    }

    Eigen::LLT<Matrix> precond;
    if (solver.precondition) {
        precond.compute(moment);
        if (precond.info() != Eigen::Success) {
            throw EstimationError("estimate_component: second-moment matrix is singular for component " +
                                      std::to_string(k),
                                  k);
        }
    }

    double value = quadratic_objective(moment, c);
    Vector grad = quadratic_gradient(moment, c);
    double residual = grad.norm();
    double step = 1.0;
    for (int iter = 0; iter < solver.max_iters && residual > solver.tolerance; ++iter) {
        const Vector dir = solver.precondition ? Vector(-precond.solve(grad)) : Vector(-grad);
        double t = solver.precondition ? 1.0 : std::min(1.0, 2.0 * step);

        bool accepted = false;
        Vector trial;
        double trial_value = 0.0;
        while (t > 1e-20) {
            trial = c + t * dir;
            trial[k] = std::max(trial[k], kDiagonalFloor);
            trial_value = quadratic_objective(moment, trial);
            if (trial_value <= value + 1e-4 * grad.dot(trial - c)) {
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if (!accepted) {
            break;
        }
        step = t;
        c = std::move(trial);
        value = trial_value;
        grad = quadratic_gradient(moment, c);
        residual = grad.norm();
    }

    if (!(residual <= solver.tolerance)) {
        throw EstimationError("estimate_component: gradient solver did not converge for component " +
                                  std::to_string(k) + " (residual " + std::to_string(residual) + ")",
                              k, residual);
    }
    return MapComponent::from_coefficients(c);
}

} // namespace detail

/// Minimiser of component_objective over affine components with index k,
/// fitted to the first k columns of samples.
[[nodiscard]] inline MapComponent estimate_component(const SampleMatrix& samples, int k, const SolverOptions& solver,
                                                     const std::optional<MapComponent>& start = std::nullopt) {
    if (k < 1 || k > samples.dim()) {
        throw StructuralError("estimate_component: component index " + std::to_string(k) + " out of range");
    }
    if (samples.size() < k + 1) {
        throw EstimationError("estimate_component: need at least k+1 samples for component " + std::to_string(k), k);
    }
    const detail::GaussianFit fit = detail::gaussian_fit(samples, k, k);
    if (solver.method == SolverMethod::closed_form) {
        return detail::closed_form_component(fit, k);
    }
    return detail::gradient_component(samples, k, solver, fit, start);
}

enum class EstimatedBlocks { lower_only, all };

/// Estimates the map on samples whose first obs_block_size columns are the
/// observation block. When only the lower block is requested the upper
/// components are identity placeholders.
[[nodiscard]] inline AffineTriangularMap estimate_map(const SampleMatrix& samples, int obs_block_size,
                                                      const SolverOptions& solver,
                                                      EstimatedBlocks blocks = EstimatedBlocks::lower_only,
                                                      unsigned threads = 1) {
    const int n = static_cast<int>(samples.dim());
    if (obs_block_size < 0 || obs_block_size > n) {
        throw StructuralError("estimate_map: observation block size out of range");
    }
    std::vector<MapComponent> comps(n);
    const int first = blocks == EstimatedBlocks::all ? 1 : obs_block_size + 1;
    for (int k = 1; k < first; ++k) {
        comps[k - 1] = MapComponent(k, 0.0, Vector::Unit(k, k - 1));
    }
    parallel_for(static_cast<std::size_t>(n - first + 1), threads, [&](std::size_t j) {
        const int k = first + static_cast<int>(j);
        comps[k - 1] = estimate_component(samples, k, solver);
    });
    return {std::move(comps), obs_block_size};
}

} // namespace tmf

#endif // TMF_TRANSPORT_HPP
