#ifndef LINDBLAD_MODEL_HPP
#define LINDBLAD_MODEL_HPP

// Lindblad systems: Hamiltonian evaluator, jump channels with rate functions,
// the drift operator A(t) = -i H(t) - 1/2 sum_k gamma_k(t) L_k^H L_k, the
// forward and adjoint channel maps, the qudit Ising-chain family and the
// standard initial/terminal states used by the experiments.

#include <cmath>
#include <cstdint>
#include <cstring>
#include <functional>
#include <numbers>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "lindblad/linalg.hpp"
#include "lindblad/state.hpp"

namespace lindblad {

using ScalarFunction = std::function<double(double)>;
using HamiltonianFunction = std::function<ComplexMatrix(double)>;

/// Real control amplitude u(t) acting through a Hermitian coupling V,
/// contributing u(t) V to the Hamiltonian.
struct ControlProfile {
  ScalarFunction amplitude;
  ComplexMatrix coupling;
};

class LindbladModel {
 public:
  /// Evaluators must be pure functions of t. H is checked for Hermiticity and
  /// the rates for nonnegativity on a few sample times; later evaluations
  /// re-check the rates.
  LindbladModel(Index dim, HamiltonianFunction hamiltonian, std::vector<ComplexMatrix> jumps,
                std::vector<ScalarFunction> rates, bool time_independent = false)
      : dim_(dim),
        hamiltonian_(std::move(hamiltonian)),
        jumps_(std::move(jumps)),
        rates_(std::move(rates)),
        time_independent_(time_independent) {
    if (dim_ < 1) throw ParameterError("LindbladModel: dimension must be >= 1");
    if (!hamiltonian_) throw ParameterError("LindbladModel: missing Hamiltonian evaluator");
    if (jumps_.size() != rates_.size()) {
      throw DimensionError("LindbladModel: " + std::to_string(jumps_.size()) + " jumps but " +
                           std::to_string(rates_.size()) + " rates");
    }
    for (const double t : kSampleTimes) {
      const ComplexMatrix h = hamiltonian_(t);
      if (h.rows() != dim_ || h.cols() != dim_) {
        throw DimensionError("LindbladModel: Hamiltonian has wrong shape");
      }
      if (!is_hermitian(h)) throw ContractError("LindbladModel: Hamiltonian is not Hermitian");
    }
    grams_.reserve(jumps_.size());
    diagonals_.reserve(jumps_.size());
    for (std::size_t k = 0; k < jumps_.size(); ++k) {
      const ComplexMatrix& l = jumps_[k];
      if (l.rows() != dim_ || l.cols() != dim_) {
        throw DimensionError("LindbladModel: jump operator " + std::to_string(k) +
                             " has wrong shape");
      }
      if (!rates_[k]) throw ParameterError("LindbladModel: missing rate evaluator");
      for (const double t : kSampleTimes) (void)rate(k, t);
      grams_.push_back(l.adjoint() * l);
      const bool diagonal = (l - ComplexMatrix(l.diagonal().asDiagonal())).norm() == 0.0;
      diagonals_.push_back(diagonal ? ComplexVector(l.diagonal()) : ComplexVector());
    }
  }

  Index dim() const noexcept { return dim_; }
  std::size_t channel_count() const noexcept { return jumps_.size(); }
  bool time_independent() const noexcept { return time_independent_; }

  ComplexMatrix hamiltonian(double t) const { return hamiltonian_(t); }

  /// gamma_k(t); throws ContractError when negative.
  double rate(std::size_t k, double t) const {
    const double g = rates_.at(k)(t);
    if (!(g >= 0.0)) {
      throw ContractError("LindbladModel: rate " + std::to_string(k) + " is negative at t=" +
                          std::to_string(t));
    }
    return g;
  }

  const ComplexMatrix& jump(std::size_t k) const { return jumps_.at(k); }
  /// L_k^H L_k
  const ComplexMatrix& jump_gram(std::size_t k) const { return grams_.at(k); }
  bool jump_is_diagonal(std::size_t k) const { return diagonals_.at(k).size() != 0; }

  /// L_k * x
  ComplexMatrix apply_jump(std::size_t k, const ComplexMatrix& x) const {
    if (jump_is_diagonal(k)) return diagonals_[k].asDiagonal() * x;
    return jumps_[k] * x;
  }

  /// L_k^H * x
  ComplexMatrix apply_jump_adjoint(std::size_t k, const ComplexMatrix& x) const {
    if (jump_is_diagonal(k)) return diagonals_[k].conjugate().asDiagonal() * x;
    return jumps_[k].adjoint() * x;
  }

  /// L_k x L_k^H (adjoint == false) or L_k^H x L_k (adjoint == true).
  ComplexMatrix sandwich(std::size_t k, const ComplexMatrix& x, bool adjoint) const {
    if (jump_is_diagonal(k)) {
      const ComplexVector left = adjoint ? ComplexVector(diagonals_[k].conjugate()) : diagonals_[k];
      const ComplexVector right = left.conjugate();
      return left.asDiagonal() * x * right.asDiagonal();
    }
    const ComplexMatrix& l = jumps_[k];
    if (adjoint) return l.adjoint() * x * l;
    return l * x * l.adjoint();
  }

  /// Hash of the model sampled at fixed times; used to key reference caches.
  std::uint64_t fingerprint() const {
    std::uint64_t h = 1469598103934665603ull;
    auto mix = [&h](const void* data, std::size_t bytes) {
      const auto* p = static_cast<const unsigned char*>(data);
      for (std::size_t i = 0; i < bytes; ++i) {
        h ^= p[i];
        h *= 1099511628211ull;
      }
    };
    const std::int64_t d = dim_;
    mix(&d, sizeof d);
    for (const double t : kSampleTimes) {
      const ComplexMatrix hm = hamiltonian_(t);
      mix(hm.data(), sizeof(Complex) * static_cast<std::size_t>(hm.size()));
      for (std::size_t k = 0; k < jumps_.size(); ++k) {
        const double g = rates_[k](t);
        mix(&g, sizeof g);
      }
    }
    for (const auto& l : jumps_) mix(l.data(), sizeof(Complex) * static_cast<std::size_t>(l.size()));
    return h;
  }

 private:
  static constexpr double kSampleTimes[] = {0.0, 0.123456789, 0.5, 0.987654321, 3.14159265};

  Index dim_;
  HamiltonianFunction hamiltonian_;
  std::vector<ComplexMatrix> jumps_;
  std::vector<ScalarFunction> rates_;
  std::vector<ComplexMatrix> grams_;
  std::vector<ComplexVector> diagonals_;
  bool time_independent_;
};

/// Model with H(t) = H0 + u(t) V and constant or time-varying rates.
inline LindbladModel make_controlled_model(ComplexMatrix h0, ControlProfile control,
                                           std::vector<ComplexMatrix> jumps,
                                           std::vector<ScalarFunction> rates,
                                           bool time_independent = false) {
  if (!is_hermitian(control.coupling)) {
    throw ContractError("ControlProfile: coupling is not Hermitian");
  }
  if (control.coupling.rows() != h0.rows() || control.coupling.cols() != h0.cols()) {
    throw DimensionError("ControlProfile: coupling shape does not match H0");
  }
  const Index dim = h0.rows();
  auto hamiltonian = [h0 = std::move(h0), control = std::move(control)](double t) {
    const double u = control.amplitude ? control.amplitude(t) : 0.0;
    if (u == 0.0) return h0;
    return ComplexMatrix(h0 + u * control.coupling);
  };
  return LindbladModel(dim, std::move(hamiltonian), std::move(jumps), std::move(rates),
                       time_independent);
}

inline ScalarFunction constant_function(double value) {
  return [value](double) { return value; };
}

// ---------------------------------------------------------------------------
// Operators of the Lindblad equation
// ---------------------------------------------------------------------------

/// A(t) = -i H(t) - 1/2 sum_k gamma_k(t) L_k^H L_k
inline ComplexMatrix build_A(const LindbladModel& model, double t) {
  ComplexMatrix a = Complex{0.0, -1.0} * model.hamiltonian(t);
  for (std::size_t k = 0; k < model.channel_count(); ++k) {
    const double g = model.rate(k, t);
    if (g != 0.0) a -= (0.5 * g) * model.jump_gram(k);
  }
  return a;
}

namespace detail {

inline void require_step(double tau) {
  if (!(tau > 0.0) || !std::isfinite(tau)) {
    throw ParameterError("step size must be positive and finite");
  }
}

inline ComplexMatrix apply_channel(const LindbladModel& model, double t, const ComplexMatrix& x,
                                   bool adjoint) {
  if (x.rows() != model.dim() || x.cols() != model.dim()) {
    throw DimensionError("channel: state shape does not match the model dimension");
  }
  ComplexMatrix out = ComplexMatrix::Zero(x.rows(), x.cols());
  for (std::size_t k = 0; k < model.channel_count(); ++k) {
    const double g = model.rate(k, t);
    if (g != 0.0) out += g * model.sandwich(k, x, adjoint);
  }
  return out;
}

}  // namespace detail

/// sum_k gamma_k(t) L_k rho L_k^H
inline ComplexMatrix apply_forward_channel(const LindbladModel& model, double t,
                                           const ComplexMatrix& rho) {
  return detail::apply_channel(model, t, rho, false);
}

/// sum_k gamma_k(t) L_k^H q L_k
inline ComplexMatrix apply_backward_channel(const LindbladModel& model, double t,
                                            const ComplexMatrix& q) {
  return detail::apply_channel(model, t, q, true);
}

/// C = sum_k (max_{t in [0,T]} gamma_k(t)) ||L_k||_1^2, the one-step Lipschitz
/// constant of the midpoint maps. Rates are maximized over a uniform sample.
inline double lipschitz_constant(const LindbladModel& model, double horizon, int samples = 1025) {
  double c = 0.0;
  for (std::size_t k = 0; k < model.channel_count(); ++k) {
    double gmax = 0.0;
    for (int i = 0; i < samples; ++i) {
      const double t = samples > 1 ? horizon * i / (samples - 1) : 0.0;
      gmax = std::max(gmax, model.rate(k, t));
    }
    const double l1 = trace_norm(model.jump(k));
    c += gmax * l1 * l1;
  }
  return c;
}

// ---------------------------------------------------------------------------
// Qudit Ising chain
// ---------------------------------------------------------------------------

/// Spin-j matrices for d = 2j + 1 levels (hbar = 1), basis ordered m = j, j-1, ..., -j.
struct SpinOperators {
  ComplexMatrix jz;
  ComplexMatrix jx;
};

inline SpinOperators spin_operators(int d) {
  if (d < 2) throw ParameterError("spin_operators: need d >= 2");
  const double j = 0.5 * (d - 1);
  SpinOperators ops{ComplexMatrix::Zero(d, d), ComplexMatrix::Zero(d, d)};
  for (int i = 0; i < d; ++i) ops.jz(i, i) = j - i;
  // <m+1|J+|m> = sqrt(j(j+1) - m(m+1)); row i holds m = j - i.
  for (int i = 1; i < d; ++i) {
    const double m = j - i;
    const double element = std::sqrt(j * (j + 1) - m * (m + 1));
    ops.jx(i - 1, i) = 0.5 * element;
    ops.jx(i, i - 1) = 0.5 * element;
  }
  return ops;
}

inline ComplexMatrix kron(const ComplexMatrix& a, const ComplexMatrix& b) {
  ComplexMatrix out(a.rows() * b.rows(), a.cols() * b.cols());
  for (Index i = 0; i < a.rows(); ++i) {
    for (Index j = 0; j < a.cols(); ++j) {
      out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
    }
  }
  return out;
}

/// I_d^{(k)} x op x I_d^{(K-k-1)} for a zero-based site k.
inline ComplexMatrix embed_site(const ComplexMatrix& op, int site, int sites) {
  const Index d = op.rows();
  ComplexMatrix out = ComplexMatrix::Identity(1, 1);
  for (int s = 0; s < sites; ++s) {
    out = kron(out, s == site ? op : ComplexMatrix::Identity(d, d));
  }
  return out;
}

inline Index int_pow(Index base, int exponent) {
  Index out = 1;
  for (int i = 0; i < exponent; ++i) out *= base;
  return out;
}

/// Static pieces of the chain: H0 = sum_k (a Jz_k + b Jz_k^2), coupling
/// V = sum_{k<l} Jx_k Jx_l, and the dephasing jumps L_k = Jz_k.
struct IsingChainParts {
  ComplexMatrix h0;
  ComplexMatrix coupling;
  std::vector<ComplexMatrix> jumps;
};

inline IsingChainParts ising_chain_parts(int d, int sites, double a, double b) {
  if (d < 2) throw ParameterError("ising chain: need d >= 2");
  if (sites < 1) throw ParameterError("ising chain: need K >= 1");
  const SpinOperators spin = spin_operators(d);
  const Index m = int_pow(d, sites);
  IsingChainParts parts{ComplexMatrix::Zero(m, m), ComplexMatrix::Zero(m, m), {}};
  std::vector<ComplexMatrix> jx;
  for (int k = 0; k < sites; ++k) {
    ComplexMatrix jz = embed_site(spin.jz, k, sites);
    parts.h0 += a * jz + b * jz * jz;
    parts.jumps.push_back(std::move(jz));
    jx.push_back(embed_site(spin.jx, k, sites));
  }
  for (int k = 0; k < sites; ++k) {
    for (int l = k + 1; l < sites; ++l) parts.coupling += jx[k] * jx[l];
  }
  return parts;
}

/// H(t) = sum_k (a Jz_k + b Jz_k^2) + u(t) sum_{k<l} Jx_k Jx_l with L_k = Jz_k
/// and constant rates gamma.
inline LindbladModel build_ising_chain(int d, int sites, double a, double b, double gamma,
                                       ScalarFunction control) {
  if (!(gamma >= 0.0)) throw ParameterError("ising chain: gamma must be >= 0");
  IsingChainParts parts = ising_chain_parts(d, sites, a, b);
  std::vector<ScalarFunction> rates(parts.jumps.size(), constant_function(gamma));
  const bool static_h = !control;
  return make_controlled_model(std::move(parts.h0),
                               ControlProfile{std::move(control), std::move(parts.coupling)},
                               std::move(parts.jumps), std::move(rates), static_h);
}

inline ScalarFunction sine_control(double amplitude = 1.0, double frequency = 1.0,
                                   double phase = 0.0) {
  return [=](double t) {
    return amplitude * std::sin(2.0 * std::numbers::pi * frequency * t + phase);
  };
}

// ---------------------------------------------------------------------------
// States
// ---------------------------------------------------------------------------

namespace detail {

// Index of |level>^{(x) K} in the Kronecker basis.
inline Index product_level_index(int d, int sites, int level) {
  Index idx = 0;
  for (int s = 0; s < sites; ++s) idx = idx * d + level;
  return idx;
}

inline ComplexMatrix cat_state_vector(int d, int sites, int low, int high) {
  const Index m = int_pow(d, sites);
  ComplexMatrix psi = ComplexMatrix::Zero(m, 1);
  psi(product_level_index(d, sites, low), 0) += std::sqrt(0.5);
  psi(product_level_index(d, sites, high), 0) += std::sqrt(0.5);
  // low == high (terminal state at d = 3) leaves the single basis state
  return psi / psi.norm();
}

}  // namespace detail

/// Unit-norm factor of rho(0) = 1/2 (|0..0> + |d-1..d-1>)(h.c.).
inline LowRankFactor paper_initial_factor(int d, int sites) {
  if (d < 2 || sites < 1) throw ParameterError("initial state: need d >= 2, K >= 1");
  return LowRankFactor(detail::cat_state_vector(d, sites, 0, d - 1));
}

/// Unit-norm factor of q(T) = 1/2 (|1..1> + |d-2..d-2>)(h.c.). At d = 3 both
/// levels coincide and q(T) = |1..1><1..1|.
inline LowRankFactor paper_terminal_factor(int d, int sites) {
  if (d < 3 || sites < 1) throw ParameterError("terminal state: need d >= 3, K >= 1");
  return LowRankFactor(detail::cat_state_vector(d, sites, 1, d - 2));
}

inline DensityMatrix paper_initial_state(int d, int sites) {
  return DensityMatrix(paper_initial_factor(d, sites).density());
}

inline DensityMatrix paper_terminal_state(int d, int sites) {
  return DensityMatrix(paper_terminal_factor(d, sites).density());
}

/// How the rank-1 factor relates to the dominant component (1 - delta/2) z z^T.
enum class FactorScaling {
  /// X0 = z1: unit Frobenius norm, ||rho(0) - X0 X0^H||_1 = delta.
  kUnitNorm,
  /// X0 = sqrt(1 - delta/2) z1: matches the dominant component,
  /// ||rho(0) - X0 X0^H||_1 = delta / 2, Tr(X0 X0^H) = 1 - delta/2.
  kDominantComponent,
};

struct LowRankStates {
  DensityMatrix forward_full;
  LowRankFactor forward_factor;
  DensityMatrix backward_full;
  LowRankFactor backward_factor;
};

/// rho(0) = (1 - delta/2) z1 z1^T + delta/2 z2 z2^T and
/// q(T)   = (1 - delta/2) z3 z3^T + delta/2 z4 z4^T, with z1..z4 the left
/// singular vectors of a seeded standard-normal m x 4 matrix.
inline LowRankStates random_lowrank_states(Index m, double delta, std::uint64_t seed,
                                           FactorScaling scaling = FactorScaling::kUnitNorm) {
  if (!(delta >= 0.0 && delta <= 1.0)) throw ParameterError("random states: delta must be in [0, 1]");
  if (m < 4) throw ParameterError("random states: need m >= 4");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::MatrixXd sample(m, 4);
  for (Index j = 0; j < 4; ++j) {
    for (Index i = 0; i < m; ++i) sample(i, j) = normal(rng);
  }
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(sample, Eigen::ComputeThinU);
  const ComplexMatrix z = svd.matrixU().cast<Complex>();

  const double major = 1.0 - 0.5 * delta;
  const double minor = 0.5 * delta;
  auto mixture = [&](Index a, Index b) {
    return DensityMatrix(major * z.col(a) * z.col(a).adjoint() +
                         minor * z.col(b) * z.col(b).adjoint());
  };
  const double factor_scale = scaling == FactorScaling::kUnitNorm ? 1.0 : std::sqrt(major);
  return LowRankStates{mixture(0, 1), LowRankFactor(factor_scale * z.col(0)), mixture(2, 3),
                       LowRankFactor(factor_scale * z.col(2))};
}

// ---------------------------------------------------------------------------
// Objective functionals
// ---------------------------------------------------------------------------

/// J = Tr(Q rho(T))
inline double evaluate_overlap(const DensityMatrix& q, const DensityMatrix& rho_final) {
  if (q.dim() != rho_final.dim()) throw DimensionError("evaluate_overlap: dimension mismatch");
  return (q.matrix().transpose().cwiseProduct(rho_final.matrix())).sum().real();
}

/// J = Tr(Q rho(T)) - alpha/2 * int_0^T u^2 dt with the integral taken by the
/// composite trapezoid rule over samples u(t_0), ..., u(t_N) spaced tau apart.
inline double evaluate_cost(const DensityMatrix& q, const DensityMatrix& rho_final,
                            std::span<const double> control_samples, double alpha, double tau) {
  double integral = 0.0;
  for (std::size_t i = 1; i < control_samples.size(); ++i) {
    const double u0 = control_samples[i - 1];
    const double u1 = control_samples[i];
    integral += 0.5 * tau * (u0 * u0 + u1 * u1);
  }
  return evaluate_overlap(q, rho_final) - 0.5 * alpha * integral;
}

}  // namespace lindblad

#endif  // LINDBLAD_MODEL_HPP
