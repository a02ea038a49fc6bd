#ifndef LINDBLAD_STATE_HPP
#define LINDBLAD_STATE_HPP

#include <cmath>
#include <string>
#include <utility>

#include "lindblad/linalg.hpp"

namespace lindblad {

/// Eigenvalues below -kPositivityTolerance count as a positivity violation.
inline constexpr double kPositivityTolerance = 1e-10;
/// Admissible |trace - 1| for states that are required to be normalized.
inline constexpr double kTraceTolerance = 1e-10;

/// Hermitian m x m matrix holding a forward state rho or an adjoint state q.
class DensityMatrix {
 public:
  DensityMatrix() = default;
  explicit DensityMatrix(ComplexMatrix matrix) : matrix_(std::move(matrix)) {
    detail::require_square(matrix_, "DensityMatrix");
  }

  /// Validates Hermiticity and positivity, and unit trace when requested.
  static DensityMatrix checked(ComplexMatrix matrix, bool unit_trace = true) {
    DensityMatrix out(std::move(matrix));
    if (!is_hermitian(out.matrix_)) {
      throw ContractError("DensityMatrix: not Hermitian (defect " +
                          std::to_string(hermiticity_defect(out.matrix_)) + ")");
    }
    const double lowest = min_eigenvalue(out.matrix_);
    if (lowest < -kPositivityTolerance) {
      throw ContractError("DensityMatrix: negative eigenvalue " + std::to_string(lowest));
    }
    if (unit_trace && std::abs(out.trace() - 1.0) > kTraceTolerance) {
      throw ContractError("DensityMatrix: trace " + std::to_string(out.trace()) + " != 1");
    }
    return out;
  }

  const ComplexMatrix& matrix() const noexcept { return matrix_; }
  Index dim() const noexcept { return matrix_.rows(); }
  double trace() const { return matrix_.trace().real(); }

 private:
  ComplexMatrix matrix_;
};

/// Tall factor X (m x r) representing the PSD matrix X X^H.
class LowRankFactor {
 public:
  LowRankFactor() = default;
  explicit LowRankFactor(ComplexMatrix matrix) : matrix_(std::move(matrix)) {
    if (matrix_.rows() == 0 || matrix_.cols() == 0) {
      throw DimensionError("LowRankFactor: factor must have at least one row and one column");
    }
  }

  const ComplexMatrix& matrix() const noexcept { return matrix_; }
  Index dim() const noexcept { return matrix_.rows(); }
  Index rank() const noexcept { return matrix_.cols(); }
  /// Tr(X X^H) = ||X||_F^2
  double trace() const { return accurate_squared_norm(matrix_); }
  ComplexMatrix density() const { return matrix_ * matrix_.adjoint(); }

 private:
  ComplexMatrix matrix_;
};

}  // namespace lindblad

#endif  // LINDBLAD_STATE_HPP
