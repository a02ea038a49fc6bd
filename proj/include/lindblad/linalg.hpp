#ifndef LINDBLAD_LINALG_HPP
#define LINDBLAD_LINALG_HPP

// Dense complex kernels shared by the integrators: norms, Hermitian
// diagnostics, truncated SVD column compression, the matrix exponential and
// its action on tall factors.
//
// All matrices are Eigen column-major. Every function is pure.

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <cstdint>
#include <initializer_list>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "lindblad/errors.hpp"

namespace lindblad {

using Complex = std::complex<double>;
using ComplexMatrix = Eigen::MatrixXcd;
using ComplexVector = Eigen::VectorXcd;
using RealVector = Eigen::VectorXd;
using Index = Eigen::Index;

/// Tolerances at or below this value request the exact (dense) kernels.
inline constexpr double kMachineTolerance = std::numeric_limits<double>::epsilon() / 2;

namespace detail {

inline void require_square(const ComplexMatrix& a, const char* what) {
  if (a.rows() != a.cols() || a.rows() == 0) {
    throw DimensionError(std::string(what) + ": expected a non-empty square matrix, got " +
                         std::to_string(a.rows()) + "x" + std::to_string(a.cols()));
  }
}

inline double one_norm(const ComplexMatrix& a) {
  if (a.size() == 0) return 0.0;
  return a.cwiseAbs().colwise().sum().maxCoeff();
}

}  // namespace detail

/// Relative Hermiticity tolerance used by all diagnostics:
/// ||a - a^H||_F <= 1e-10 * max(1, ||a||_F).
inline constexpr double kHermiticityTolerance = 1e-10;

inline double frobenius_norm(const ComplexMatrix& a) { return a.norm(); }

/// ||a||_F^2 summed in extended precision. A plain double sum over the
/// m * r entries of a large factor drifts by about sqrt(m r) ulps, which is
/// visible when Tr(X X^H) = 1 must hold to 1e-14.
inline double accurate_squared_norm(const ComplexMatrix& a) {
  long double sum = 0.0L;
  const Complex* p = a.data();
  for (Index i = 0; i < a.size(); ++i) {
    const long double re = p[i].real();
    const long double im = p[i].imag();
    sum += re * re + im * im;
  }
  return static_cast<double>(sum);
}

inline double hermiticity_defect(const ComplexMatrix& a) {
  detail::require_square(a, "hermiticity_defect");
  return (a - a.adjoint()).norm();
}

inline bool is_hermitian(const ComplexMatrix& a, double rel_tol = kHermiticityTolerance) {
  if (a.rows() != a.cols()) return false;
  return hermiticity_defect(a) <= rel_tol * std::max(1.0, a.norm());
}

/// (a + a^H) / 2
inline ComplexMatrix hermitian_part(const ComplexMatrix& a) {
  detail::require_square(a, "hermitian_part");
  return (a + a.adjoint()) * 0.5;
}

/// Sum of singular values. Equals trace(a) for Hermitian PSD a.
inline double trace_norm(const ComplexMatrix& a) {
  detail::require_square(a, "trace_norm");
  Eigen::BDCSVD<ComplexMatrix> svd(a);
  return svd.singularValues().sum();
}

/// Real eigenvalues of a Hermitian matrix in descending order.
///
/// Throws ContractError when a is not Hermitian within kHermiticityTolerance.
inline RealVector hermitian_spectrum(const ComplexMatrix& a) {
  detail::require_square(a, "hermitian_spectrum");
  if (!is_hermitian(a)) {
    throw ContractError("hermitian_spectrum: input is not Hermitian (defect " +
                        std::to_string(hermiticity_defect(a)) + ")");
  }
  Eigen::SelfAdjointEigenSolver<ComplexMatrix> solver(hermitian_part(a), Eigen::EigenvaluesOnly);
  return solver.eigenvalues().reverse();
}

inline double min_eigenvalue(const ComplexMatrix& a) { return hermitian_spectrum(a).minCoeff(); }

/// Column-wise concatenation. All blocks must share the row count; blocks
/// with zero columns are allowed and contribute nothing.
inline ComplexMatrix hconcat(std::span<const ComplexMatrix> blocks) {
  if (blocks.empty()) throw DimensionError("hconcat: no blocks");
  const Index rows = blocks.front().rows();
  Index cols = 0;
  for (const auto& b : blocks) {
    if (b.rows() != rows) {
      throw DimensionError("hconcat: row mismatch (" + std::to_string(b.rows()) + " vs " +
                           std::to_string(rows) + ")");
    }
    cols += b.cols();
  }
  ComplexMatrix out(rows, cols);
  Index at = 0;
  for (const auto& b : blocks) {
    out.middleCols(at, b.cols()) = b;
    at += b.cols();
  }
  return out;
}

inline ComplexMatrix hconcat(std::initializer_list<ComplexMatrix> blocks) {
  return hconcat(std::span<const ComplexMatrix>(blocks.begin(), blocks.size()));
}

// ---------------------------------------------------------------------------
// Truncated SVD
// ---------------------------------------------------------------------------

/// Result of a column compression x -> T with ||xx^H - TT^H||_1 = discarded_energy.
struct SvdTruncation {
  ComplexMatrix factor;           ///< m x rank, columns U_j * sigma_j
  double discarded_energy = 0.0;  ///< sum of squared dropped singular values
  Index rank = 0;
  /// Energy dropped beyond the tolerance because a rank cap was hit.
  double cap_excess = 0.0;
  Index pre_columns = 0;
};

/// Best rank-r approximation of x in Frobenius norm with r minimal such that
/// the tail sum of squared singular values is <= tolerance. A tail exactly
/// equal to the tolerance is dropped. The optional rank cap overrides the
/// tolerance; any energy dropped because of it is reported in cap_excess.
///
/// Columns of the factor are U_j * sigma_j with the first significant entry of
/// each U_j made real and nonnegative. The returned rank may be 0 when the
/// whole input is within tolerance.
inline SvdTruncation truncate_svd(const ComplexMatrix& x, double tolerance,
                                  std::optional<Index> max_rank = std::nullopt) {
  if (!(tolerance >= 0.0)) throw ParameterError("truncate_svd: tolerance must be >= 0");
  SvdTruncation out;
  out.pre_columns = x.cols();
  if (x.cols() == 0 || x.rows() == 0) {
    out.factor = ComplexMatrix(x.rows(), 0);
    return out;
  }

  Eigen::BDCSVD<ComplexMatrix> svd(x, Eigen::ComputeThinU);
  const RealVector& sigma = svd.singularValues();
  const Index k = sigma.size();

  // tail[j] = sum_{i >= j} sigma_i^2, accumulated from the smallest value up.
  std::vector<double> tail(static_cast<std::size_t>(k) + 1, 0.0);
  for (Index j = k - 1; j >= 0; --j) {
    tail[static_cast<std::size_t>(j)] = tail[static_cast<std::size_t>(j) + 1] + sigma(j) * sigma(j);
  }
  Index rank = k;
  while (rank > 0 && tail[static_cast<std::size_t>(rank - 1)] <= tolerance) --rank;
  // sigma(j) == 0 columns carry nothing; never keep them.
  while (rank > 0 && sigma(rank - 1) == 0.0) --rank;

  if (max_rank && rank > *max_rank) {
    const Index capped = std::max<Index>(*max_rank, 0);
    out.cap_excess = tail[static_cast<std::size_t>(capped)] - tolerance;
    rank = capped;
  }

  out.rank = rank;
  out.discarded_energy = tail[static_cast<std::size_t>(rank)];
  out.factor.resize(x.rows(), rank);
  const ComplexMatrix& u = svd.matrixU();
  for (Index j = 0; j < rank; ++j) {
    Complex phase{1.0, 0.0};
    for (Index i = 0; i < u.rows(); ++i) {
      const double mag = std::abs(u(i, j));
      if (mag > 1e-10) {
        phase = std::conj(u(i, j)) / mag;
        break;
      }
    }
    out.factor.col(j) = u.col(j) * (phase * sigma(j));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Matrix exponential
// ---------------------------------------------------------------------------

namespace detail {

// Diagonal Pade approximants r_q(A) = (V - U)^{-1} (V + U), q in {3,5,7,9,13}
// with the backward-error thresholds for double precision.
inline constexpr std::array<double, 5> kPadeTheta = {
    1.495585217958292e-2, 2.539398330063230e-1, 9.504178996162932e-1, 2.097847961257068e0,
    5.371920351148152e0};

inline ComplexMatrix pade_low(const ComplexMatrix& a, int degree) {
  static constexpr double b3[] = {120., 60., 12., 1.};
  static constexpr double b5[] = {30240., 15120., 3360., 420., 30., 1.};
  static constexpr double b7[] = {17297280., 8648640., 1995840., 277200., 25200., 1512., 56., 1.};
  static constexpr double b9[] = {17643225600., 8821612800., 2075673600., 302702400., 30270240.,
                                  2162160.,     110880.,     3960.,       90.,        1.};
  const double* b = degree == 3 ? b3 : degree == 5 ? b5 : degree == 7 ? b7 : b9;

  const Index n = a.rows();
  const ComplexMatrix ident = ComplexMatrix::Identity(n, n);
  const ComplexMatrix a2 = a * a;
  ComplexMatrix power = ident;
  ComplexMatrix u_even = b[1] * ident;
  ComplexMatrix v = b[0] * ident;
  for (int k = 2; k <= degree; k += 2) {
    power = power * a2;  // A^k
    u_even += b[k + 1] * power;
    v += b[k] * power;
  }
  const ComplexMatrix u = a * u_even;
  return (v - u).partialPivLu().solve(v + u);
}

inline ComplexMatrix pade13(const ComplexMatrix& a) {
  static constexpr double b[] = {64764752532480000., 32382376266240000., 7771770303897600.,
                                 1187353796428800.,  129060195264000.,   10559470521600.,
                                 670442572800.,      33522128640.,       1323241920.,
                                 40840800.,          960960.,            16380.,
                                 182.,               1.};
  const Index n = a.rows();
  const ComplexMatrix ident = ComplexMatrix::Identity(n, n);
  const ComplexMatrix a2 = a * a;
  const ComplexMatrix a4 = a2 * a2;
  const ComplexMatrix a6 = a4 * a2;
  const ComplexMatrix inner_u = a6 * (b[13] * a6 + b[11] * a4 + b[9] * a2);
  const ComplexMatrix u = a * (inner_u + b[7] * a6 + b[5] * a4 + b[3] * a2 + b[1] * ident);
  const ComplexMatrix v =
      a6 * (b[12] * a6 + b[10] * a4 + b[8] * a2) + b[6] * a6 + b[4] * a4 + b[2] * a2 + b[0] * ident;
  return (v - u).partialPivLu().solve(v + u);
}

}  // namespace detail

/// e^a by scaling and squaring with diagonal Pade approximants (degrees 3..13)
/// selected from the 1-norm.
inline ComplexMatrix expm(const ComplexMatrix& a) {
  detail::require_square(a, "expm");
  const double norm = detail::one_norm(a);
  if (norm == 0.0) return ComplexMatrix::Identity(a.rows(), a.cols());
  if (!std::isfinite(norm)) throw ParameterError("expm: non-finite input");

  constexpr std::array<int, 4> low_degrees = {3, 5, 7, 9};
  for (std::size_t i = 0; i < low_degrees.size(); ++i) {
    if (norm <= detail::kPadeTheta[i]) return detail::pade_low(a, low_degrees[i]);
  }
  int squarings = 0;
  if (norm > detail::kPadeTheta[4]) {
    squarings = static_cast<int>(std::ceil(std::log2(norm / detail::kPadeTheta[4])));
  }
  ComplexMatrix r = detail::pade13(a / std::ldexp(1.0, squarings));
  for (int i = 0; i < squarings; ++i) r = r * r;
  return r;
}

struct ExpmActionOptions {
  /// Inputs of at most this dimension use expm(a) * v directly.
  Index dense_fallback_dim = 64;
  /// At or below this tolerance the Taylor degree grows large enough that
  /// forming expm(a) once is cheaper; such requests use the dense route too.
  double dense_tolerance = 1e-8;
  /// Largest Taylor degree per substep.
  int max_terms = 55;
};

/// Diagnostics of the Taylor path; substeps == 0 means the dense route ran.
struct ExpmActionPlan {
  std::int64_t substeps = 0;
  int degree = 0;
  double estimated_error = 0.0;  ///< sum of the per-substep estimates, relative to ||v||_F
};

/// True when expm_action on an n x n operator takes the dense route.
inline bool expm_action_is_dense(Index n, double tolerance, const ExpmActionOptions& options = {}) {
  return tolerance <= std::max(kMachineTolerance, options.dense_tolerance) ||
         n <= options.dense_fallback_dim;
}

/// Approximates e^a * v.
///
/// For dimensions above options.dense_fallback_dim and tolerances above
/// options.dense_tolerance, the trace-shifted operator b = a - mu I is
/// integrated over [0, 1] with Taylor substeps of a fixed degree q and
/// variable length h, in the manner of Expokit's step control. With
/// w_k = b^k y / k!, the first omitted term ||w_{q+1}|| h^{q+1} estimates the
/// local error, and h is the largest length keeping it within
/// tolerance * h * ||y||. The degree is one less than the smallest that covers
/// the whole interval in a single substep, so the steps use their error
/// budget and the result is within about tolerance of e^a v (relative to
/// ||v||_F) rather than orders of magnitude below it.
inline ComplexMatrix expm_action(const ComplexMatrix& a, const ComplexMatrix& v, double tolerance,
                                 const ExpmActionOptions& options = {},
                                 ExpmActionPlan* plan_out = nullptr) {
  detail::require_square(a, "expm_action");
  if (v.rows() != a.rows()) {
    throw DimensionError("expm_action: factor has " + std::to_string(v.rows()) +
                         " rows, operator is " + std::to_string(a.rows()) + "x" +
                         std::to_string(a.cols()));
  }
  if (!(tolerance >= 0.0 && tolerance < 1.0)) {
    throw ParameterError("expm_action: tolerance must lie in [0, 1)");
  }
  if (plan_out) *plan_out = {};
  if (v.cols() == 0) return v;
  if (expm_action_is_dense(a.rows(), tolerance, options)) {
    return expm(a) * v;
  }

  const Index n = a.rows();
  const Complex mu = a.trace() / static_cast<double>(n);
  ComplexMatrix b = a;
  b.diagonal().array() -= mu;
  const Complex scale = std::exp(mu);
  if (detail::one_norm(b) == 0.0) return scale * v;
  // error per unit length of the interval
  const double rate = tolerance / std::max(1.0, std::abs(scale));
  const int max_degree = std::max(1, options.max_terms);

  ComplexMatrix y = v;
  std::vector<ComplexMatrix> w;
  std::vector<double> norms;
  // makes w_0..w_k available for the current y and returns ||w_k||
  auto extend = [&](int k) {
    while (static_cast<int>(w.size()) <= k) {
      const int j = static_cast<int>(w.size());
      if (j == 0) {
        w.push_back(y);
      } else {
        ComplexMatrix next = b * w.back();
        next /= static_cast<double>(j);
        w.push_back(std::move(next));
      }
      norms.push_back(w.back().norm());
    }
    return norms[static_cast<std::size_t>(k)];
  };

  double position = 0.0;
  int degree = 0;
  std::int64_t substeps = 0;
  double estimate = 0.0;
  while (position < 1.0) {
    const double remaining = 1.0 - position;
    w.clear();
    norms.clear();
    const double ynorm = extend(0);
    if (ynorm == 0.0) break;
    const double budget = rate * ynorm;
    if (degree == 0) {
      // smallest degree covering the whole interval, then one less
      int full = 1;
      while (full <= max_degree && extend(full + 1) * std::pow(remaining, full) > budget) ++full;
      degree = std::clamp(full - 1, 1, max_degree);
    }
    const double tail = extend(degree + 1);
    double h = remaining;
    if (tail > 0.0) h = std::min(remaining, std::pow(budget / tail, 1.0 / degree));
    if (!(h > 0.0)) throw ContractError("expm_action: step length underflow");
    if (remaining - h < 1e-12 * remaining) h = remaining;
    ComplexMatrix sum = w[0];
    double hk = 1.0;
    for (int k = 1; k <= degree; ++k) {
      hk *= h;
      sum += hk * w[static_cast<std::size_t>(k)];
    }
    estimate += tail * hk * h / ynorm;
    y = std::move(sum);
    position = h == remaining ? 1.0 : position + h;
    ++substeps;
  }
  if (plan_out) *plan_out = ExpmActionPlan{substeps, degree, estimate};
  return scale * y;
}

}  // namespace lindblad

#endif  // LINDBLAD_LINALG_HPP
