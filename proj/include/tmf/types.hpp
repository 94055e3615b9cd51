/// @file types.hpp Linear-algebra aliases and the validated sample container.

#ifndef TMF_TYPES_HPP
#define TMF_TYPES_HPP

#include <Eigen/Dense>

#include <cstddef>
#include <string>
#include <utility>

#include "errors.hpp"

namespace tmf {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using Index = Eigen::Index;

/// M samples of dimension k, stored one sample per row.
class SampleMatrix {
public:
    SampleMatrix() = default;

    explicit SampleMatrix(Matrix rows) : data_(std::move(rows)) {
        if (data_.rows() < 1) {
            throw StructuralError("SampleMatrix: at least one sample is required");
        }
        if (!data_.allFinite()) {
            throw StructuralError("SampleMatrix: non-finite entry");
        }
    }

    [[nodiscard]] Index size() const noexcept { return data_.rows(); }
    [[nodiscard]] Index dim() const noexcept { return data_.cols(); }
    [[nodiscard]] const Matrix& matrix() const noexcept { return data_; }
    [[nodiscard]] auto sample(Index i) const { return data_.row(i); }

    /// Column-wise sample mean.
    [[nodiscard]] Vector mean() const { return data_.colwise().mean().transpose(); }

    /// Covariance with denominator M (population convention).
    [[nodiscard]] Matrix covariance() const {
        const Matrix centered = data_.rowwise() - data_.colwise().mean();
        return (centered.adjoint() * centered) / static_cast<double>(data_.rows());
    }

private:
    Matrix data_;
};

inline void require_dim(Index actual, Index expected, const char* what) {
    if (actual != expected) {
        throw StructuralError(std::string(what) + ": expected dimension " + std::to_string(expected) +
                              ", got " + std::to_string(actual));
    }
}

} // namespace tmf

#endif // TMF_TYPES_HPP
