#ifndef LINDBLAD_PROPERTIES_HPP
#define LINDBLAD_PROPERTIES_HPP

// Randomized invariant checks for the exponential midpoint maps, used by the
// command-line `check` subcommand: contraction of the drift propagators,
// the one-step Lipschitz bound, cubic local trace drift, positivity and
// duality of the oracle.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "lindblad/frem.hpp"
#include "lindblad/lrem.hpp"
#include "lindblad/oracle.hpp"

namespace lindblad {

struct PropertyResult {
  std::string name;
  int trials = 0;
  int failures = 0;
  /// Smallest (bound - observed) over all trials; negative means violated.
  double worst_slack = std::numeric_limits<double>::infinity();
  std::string detail;

  bool passed() const { return failures == 0; }
  void observe(double slack, double allowance) {
    ++trials;
    worst_slack = std::min(worst_slack, slack);
    if (slack < -allowance) ++failures;
  }
};

/// Random matrices and models for the property checks.
class RandomModels {
 public:
  explicit RandomModels(std::uint64_t seed) : rng_(seed) {}

  double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng_); }
  int integer(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng_); }

  ComplexMatrix gaussian(Index rows, Index cols) {
    std::normal_distribution<double> n(0.0, 1.0);
    ComplexMatrix x(rows, cols);
    for (Index j = 0; j < cols; ++j) {
      for (Index i = 0; i < rows; ++i) x(i, j) = Complex{n(rng_), n(rng_)};
    }
    return x;
  }

  ComplexMatrix hermitian(Index m) {
    const ComplexMatrix g = gaussian(m, m);
    return 0.5 * (g + g.adjoint());
  }

  /// Unit-trace density matrix of rank r.
  ComplexMatrix density(Index m, Index r) {
    const ComplexMatrix g = gaussian(m, r);
    ComplexMatrix rho = g * g.adjoint();
    return rho / rho.trace().real();
  }

  /// H(t) = H0 + sin(w t) V with K jumps at rates g_k (1 + c_k cos(t)).
  LindbladModel model(Index m, int channels) {
    ComplexMatrix h0 = hermitian(m);
    ComplexMatrix v = hermitian(m);
    const double w = uniform(0.5, 3.0);
    std::vector<ComplexMatrix> jumps;
    std::vector<ScalarFunction> rates;
    for (int k = 0; k < channels; ++k) {
      jumps.push_back(gaussian(m, m) / std::sqrt(static_cast<double>(m)));
      const double g = uniform(0.05, 1.0);
      const double c = uniform(0.0, 0.9);
      rates.push_back([g, c](double t) { return g * (1.0 + c * std::cos(t)); });
    }
    return make_controlled_model(std::move(h0),
                                 ControlProfile{[w](double t) { return std::sin(w * t); }, std::move(v)},
                                 std::move(jumps), std::move(rates));
  }

 private:
  std::mt19937_64 rng_;
};

/// ||e^{tA(s)} sigma e^{tA(s)^H}||_1 <= ||sigma||_1 and the same with A^H.
inline PropertyResult check_contraction(RandomModels& gen, int trials, Index max_dim = 16) {
  PropertyResult res{"contraction"};
  for (int i = 0; i < trials; ++i) {
    const Index m = gen.integer(2, static_cast<int>(max_dim));
    const LindbladModel model = gen.model(m, gen.integer(1, 3));
    const ComplexMatrix sigma = gen.hermitian(m);
    const double t = gen.uniform(0.0, 2.0);
    const double s = gen.uniform(0.0, 5.0);
    const ComplexMatrix e = expm(t * build_A(model, s));
    const double bound = trace_norm(sigma);
    res.observe(bound - trace_norm(e * sigma * e.adjoint()), 1e-12);
    res.observe(bound - trace_norm(e.adjoint() * sigma * e), 1e-12);
  }
  return res;
}

/// ||Phi(rho) - Phi(varrho)||_1 <= (1 + tau C2 + tau^2 C2^2 / 2) ||rho - varrho||_1,
/// and the same for the adjoint map Psi.
inline PropertyResult check_lipschitz(RandomModels& gen, int trials, Index max_dim = 16) {
  PropertyResult res{"lipschitz"};
  for (int i = 0; i < trials; ++i) {
    const Index m = gen.integer(2, static_cast<int>(max_dim));
    const double horizon = 1.0;
    const LindbladModel model = gen.model(m, gen.integer(1, 3));
    const double tau = gen.uniform(0.01, 0.5);
    const double t = gen.uniform(0.0, horizon - tau);
    const double c2 = lipschitz_constant(model, horizon);
    const double factor = 1.0 + tau * c2 + 0.5 * tau * tau * c2 * c2;
    const ComplexMatrix rho = gen.hermitian(m);
    const ComplexMatrix varrho = gen.hermitian(m);
    const double input = trace_norm(rho - varrho);
    const double fwd = trace_norm(frem_forward_step(model, t, tau, rho).full_state.matrix() -
                                  frem_forward_step(model, t, tau, varrho).full_state.matrix());
    const double bwd = trace_norm(frem_backward_step(model, t + tau, tau, rho).full_state.matrix() -
                                  frem_backward_step(model, t + tau, tau, varrho).full_state.matrix());
    res.observe(factor * input - fwd, 1e-10);
    res.observe(factor * input - bwd, 1e-10);
  }
  return res;
}

/// Ratio of one-step trace defects |Tr Phi(sigma) - 1| for tau and tau/2;
/// cubic local drift gives ratios near 8.
struct DriftRatios {
  std::vector<double> forward;
  std::vector<double> backward;
};

inline DriftRatios trace_drift_ratios(const LindbladModel& model, const ComplexMatrix& sigma, double t,
                                      std::vector<double> taus) {
  DriftRatios out;
  auto defect = [&](bool backward, double tau) {
    const FremStep s = backward ? frem_backward_step(model, t + tau, tau, sigma)
                                : frem_forward_step(model, t, tau, sigma);
    return std::abs(s.trace_before_normalization - 1.0);
  };
  for (std::size_t i = 0; i + 1 < taus.size(); ++i) {
    out.forward.push_back(defect(false, taus[i]) / defect(false, taus[i + 1]));
    out.backward.push_back(defect(true, taus[i]) / defect(true, taus[i + 1]));
  }
  return out;
}

inline PropertyResult check_trace_drift(const LindbladModel& model, const ComplexMatrix& sigma) {
  PropertyResult res{"trace-drift-order"};
  const DriftRatios r = trace_drift_ratios(model, sigma, 0.1, {0.2, 0.1, 0.05, 0.025});
  for (const auto* list : {&r.forward, &r.backward}) {
    for (const double q : *list) {
      res.observe(std::min(q - 6.0, 10.0 - q), 0.0);
      res.detail += std::to_string(q) + " ";
    }
  }
  return res;
}

/// Smallest eigenvalue over normalized FREM runs from random states; must
/// stay above -tolerance.
inline PropertyResult check_positivity(RandomModels& gen, int trials, Index max_dim = 8) {
  PropertyResult res{"positivity"};
  for (int i = 0; i < trials; ++i) {
    const Index m = gen.integer(2, static_cast<int>(max_dim));
    const LindbladModel model = gen.model(m, gen.integer(1, 3));
    const DensityMatrix rho(gen.density(m, gen.integer(1, static_cast<int>(m))));
    const int steps = gen.integer(5, 40);
    FremRunOptions opt;
    opt.keep_trajectory = false;
    for (const bool backward : {false, true}) {
      FremTrajectory tr = backward ? frem_backward_run(model, rho, 1.0, steps, opt)
                                   : frem_forward_run(model, rho, 1.0, steps, opt);
      double worst = 0.0;
      double drift = 0.0;
      for (const auto& r : tr.records) {
        worst = std::min({worst, r.min_eigenvalue, std::isnan(r.half_min_eigenvalue) ? 0.0 : r.half_min_eigenvalue});
        drift = std::max(drift, std::abs(r.trace_drift));
      }
      res.observe(worst + kPositivityTolerance, 0.0);
      res.observe(1e-12 - drift, 0.0);
    }
  }
  return res;
}

/// Tr(q(t) rho(t)) is constant along exact forward/adjoint solutions; checked
/// on fine RK4 trajectories.
inline PropertyResult check_duality(RandomModels& gen, int trials, Index max_dim = 6) {
  PropertyResult res{"duality"};
  for (int i = 0; i < trials; ++i) {
    const Index m = gen.integer(2, static_cast<int>(max_dim));
    const LindbladModel model = gen.model(m, 1);
    const ComplexMatrix rho = gen.density(m, m);
    const ComplexMatrix q = gen.density(m, 1);
    const auto fwd = rk4_trajectory(model, rho, 1.0, 10, 200, Direction::kForward);
    const auto bwd = rk4_trajectory(model, q, 1.0, 10, 200, Direction::kBackward);
    res.observe(1e-8 - check_duality(fwd, bwd), 0.0);
  }
  return res;
}

/// Exact trace of LREM factors after every step.
inline PropertyResult check_lowrank_trace(RandomModels& gen, int trials, Index max_dim = 12) {
  PropertyResult res{"lowrank-trace"};
  for (int i = 0; i < trials; ++i) {
    const Index m = gen.integer(2, static_cast<int>(max_dim));
    const LindbladModel model = gen.model(m, gen.integer(1, 3));
    ComplexMatrix x = gen.gaussian(m, gen.integer(1, static_cast<int>(m)));
    x /= x.norm();
    LremConfig cfg{1e-8, 1e-8};
    LremRunOptions opt;
    opt.keep_trajectory = false;
    for (const bool backward : {false, true}) {
      LremTrajectory tr = backward ? lrem_backward_run(model, LowRankFactor(x), 1.0, 10, cfg, opt)
                                   : lrem_forward_run(model, LowRankFactor(x), 1.0, 10, cfg, opt);
      double drift = 0.0;
      for (const auto& r : tr.records) drift = std::max(drift, std::abs(r.trace_drift));
      res.observe(1e-14 - drift, 0.0);
    }
  }
  return res;
}

inline std::vector<PropertyResult> run_property_suite(std::uint64_t seed, int scale = 1) {
  RandomModels gen(seed);
  std::vector<PropertyResult> out;
  out.push_back(check_contraction(gen, 1000 * scale));
  out.push_back(check_lipschitz(gen, 500 * scale));
  const LindbladModel qubit = build_ising_chain(2, 1, 1.5, 1.0, 0.05, sine_control());
  ComplexMatrix sigma(2, 2);
  sigma << 0.7, Complex{0.1, 0.2}, Complex{0.1, -0.2}, 0.3;
  out.push_back(check_trace_drift(qubit, sigma));
  out.push_back(check_positivity(gen, 50 * scale));
  out.push_back(check_duality(gen, 5 * scale));
  out.push_back(check_lowrank_trace(gen, 20 * scale));
  return out;
}

}  // namespace lindblad

#endif  // LINDBLAD_PROPERTIES_HPP
