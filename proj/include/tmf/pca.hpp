/// @file pca.hpp Truncated principal component bases with projection and anchored lifting.

#ifndef TMF_PCA_HPP
#define TMF_PCA_HPP

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include "errors.hpp"
#include "types.hpp"

namespace tmf {

struct PcaOptions {
    /// Subtract the sample mean before the decomposition. When false the
    /// basis comes from the uncentred second moment and the mean is zero.
    bool center = true;
};

class PcaProjection {
public:
    PcaProjection() = default;

    PcaProjection(Vector mean, Matrix basis, Vector explained_variances)
        : mean_(std::move(mean)), basis_(std::move(basis)), variances_(std::move(explained_variances)) {
        require_dim(basis_.rows(), mean_.size(), "PcaProjection basis rows");
        require_dim(variances_.size(), basis_.cols(), "PcaProjection variances");
    }

    /// Full-dimensional identity basis with zero mean.
    static PcaProjection identity(Index n) { return {Vector::Zero(n), Matrix::Identity(n, n), Vector::Zero(n)}; }

    [[nodiscard]] Index dim() const noexcept { return basis_.rows(); }
    [[nodiscard]] Index retained() const noexcept { return basis_.cols(); }
    [[nodiscard]] const Vector& mean() const noexcept { return mean_; }
    [[nodiscard]] const Matrix& basis() const noexcept { return basis_; }
    [[nodiscard]] const Vector& explained_variances() const noexcept { return variances_; }

    /// basis^T (x - mean)
    [[nodiscard]] Vector project(const Vector& x) const {
        require_dim(x.size(), dim(), "PcaProjection::project");
        return basis_.transpose() * (x - mean_);
    }

    /// Row-wise projection of an M x n sample matrix.
    [[nodiscard]] Matrix project_rows(const Matrix& rows) const {
        require_dim(rows.cols(), dim(), "PcaProjection::project_rows");
        return (rows.rowwise() - mean_.transpose()) * basis_;
    }

    /// Replaces the retained-subspace coordinates of `anchor` with w, keeping
    /// its orthogonal complement: anchor + basis (w - project(anchor)).
    [[nodiscard]] Vector lift(const Vector& w, const Vector& anchor) const {
        require_dim(w.size(), retained(), "PcaProjection::lift coordinates");
        require_dim(anchor.size(), dim(), "PcaProjection::lift anchor");
        return anchor + basis_ * (w - project(anchor));
    }

    /// mean + basis w; discards everything outside the retained subspace.
    [[nodiscard]] Vector lift_subspace(const Vector& w) const {
        require_dim(w.size(), retained(), "PcaProjection::lift_subspace");
        return mean_ + basis_ * w;
    }

private:
    Vector mean_;
    Matrix basis_;
    Vector variances_;
};

namespace detail {

/// Flip so the largest-magnitude entry is positive; first index wins ties.
inline void canonical_sign(Eigen::Ref<Vector> column) {
    Index best = 0;
    for (Index i = 1; i < column.size(); ++i) {
        if (std::abs(column[i]) > std::abs(column[best])) {
            best = i;
        }
    }
    if (column[best] < 0.0) {
        column = -column;
    }
}

} // namespace detail

/// Fits the leading q principal directions of the rows of `samples`.
[[nodiscard]] inline PcaProjection fit_pca(const Matrix& samples, Index q, const PcaOptions& options = {}) {
    const Index m = samples.rows();
    const Index n = samples.cols();
    if (q < 1 || q > std::min(n, m)) {
        throw StructuralError("fit_pca: retained dimension " + std::to_string(q) + " outside [1, " +
                              std::to_string(std::min(n, m)) + "]");
    }
    if (!samples.allFinite()) {
        throw StructuralError("fit_pca: non-finite sample");
    }

    Vector mean = options.center ? Vector(samples.colwise().mean().transpose()) : Vector(Vector::Zero(n));
    const Matrix centered = samples.rowwise() - mean.transpose();
    const Matrix cov = (centered.transpose() * centered) / static_cast<double>(m);

    Eigen::SelfAdjointEigenSolver<Matrix> eig(cov);
    if (eig.info() != Eigen::Success) {
        throw StructuralError("fit_pca: eigen-decomposition failed");
    }
    // Eigen returns ascending eigenvalues; order descending, stable on ties.
    std::vector<Index> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), Index{0});
    const Vector& values = eig.eigenvalues();
    std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) { return values[a] > values[b]; });

    Matrix basis(n, q);
    Vector variances(q);
    for (Index j = 0; j < q; ++j) {
        const Index src = order[static_cast<std::size_t>(j)];
        basis.col(j) = eig.eigenvectors().col(src);
        detail::canonical_sign(basis.col(j));
        variances[j] = std::max(0.0, values[src]);
    }
    return {std::move(mean), std::move(basis), std::move(variances)};
}

} // namespace tmf

#endif // TMF_PCA_HPP
