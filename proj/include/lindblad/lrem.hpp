#ifndef LINDBLAD_LREM_HPP
#define LINDBLAD_LREM_HPP

// Low-rank exponential midpoint steppers on factors X (rho ~ X X^H) and
// Y (q ~ Y Y^H). One forward step:
//
//   G~_n      = [sqrt(tau g_k(t_n)) L_k X_n]_k                  G_n      = T(G~_n)
//   X~_{n+½}  = e^{tau/2 A_n} [X_n, sqrt(1/2) G_n]             X_{n+½}  = T(X~_{n+½})
//   G~_{n+½}  = [sqrt(tau g_k(t_{n+½})) L_k X_{n+½}]_k          G_{n+½}  = T(G~_{n+½})
//   X~_{n+1}  = [e^{tau A_{n+½}} X_n, e^{tau/2 A_{n+½}} G_{n+½}] X^_{n+1} = T(X~_{n+1})
//   X_{n+1}   = X^_{n+1} / ||X^_{n+1}||_F
//
// where T is the truncated SVD with tolerance eps1 and every exponential
// action is approximated to tolerance eps2.

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "lindblad/linalg.hpp"
#include "lindblad/model.hpp"
#include "lindblad/state.hpp"

namespace lindblad {

struct LremConfig {
  double epsilon1 = 0.0;  ///< column-compression tolerance
  double epsilon2 = 0.0;  ///< exponential-action tolerance, in [0, 1)
  /// Interpret epsilon1/epsilon2 as per-unit-time rates: eps_i = tau * epsilon_i.
  bool tolerance_scaling = false;
  /// With tolerance_scaling, leave one of the two tolerances absolute.
  bool absolute_epsilon1 = false;
  bool absolute_epsilon2 = false;
  std::optional<Index> max_rank;
  ExpmActionOptions expm_options{};

  void validate() const {
    if (!(epsilon1 >= 0.0)) throw ParameterError("LremConfig: epsilon1 must be >= 0");
    // As a rate (eps2 = tau * epsilon2) only the per-step value must stay below 1.
    const bool rate = tolerance_scaling && !absolute_epsilon2;
    if (!(epsilon2 >= 0.0 && (rate || epsilon2 < 1.0))) {
      throw ParameterError("LremConfig: epsilon2 must lie in [0, 1)");
    }
    if (max_rank && *max_rank < 1) throw ParameterError("LremConfig: max_rank must be >= 1");
  }

  /// Tolerances actually applied in a step of size tau.
  double compression_tolerance(double tau) const {
    return tolerance_scaling && !absolute_epsilon1 ? tau * epsilon1 : epsilon1;
  }
  double action_tolerance(double tau) const {
    return tolerance_scaling && !absolute_epsilon2 ? tau * epsilon2 : epsilon2;
  }
};

struct LremStepDiagnostics {
  Index channel_columns = 0;      ///< columns of G~_n
  Index channel_rank = 0;         ///< rank of G_n
  Index half_columns = 0;         ///< columns of X~_{n+1/2}
  Index half_rank = 0;            ///< rank of X_{n+1/2}
  Index half_channel_columns = 0; ///< columns of G~_{n+1/2}
  Index half_channel_rank = 0;    ///< rank of G_{n+1/2}
  Index full_columns = 0;         ///< columns of X~_{n+1}
  Index rank = 0;                 ///< rank of X_{n+1}
  double discarded_energy = 0.0;  ///< summed over the four truncations
  double cap_excess = 0.0;        ///< energy dropped beyond eps1 because of max_rank
  /// Tr(X^ X^H) before the final normalization.
  double trace_before_normalization = 0.0;
};

struct LremStep {
  LowRankFactor factor;
  /// X^_{n+1} before normalization; X^ X^H is Phi(t_n, rho_n) minus the
  /// compression/approximation perturbation.
  ComplexMatrix unnormalized;
  LremStepDiagnostics diagnostics;
};

namespace detail {

inline void require_unit_factor(const LowRankFactor& x, const char* what) {
  const double norm = x.matrix().norm();
  if (std::abs(norm - 1.0) > 1e-12) {
    throw ContractError(std::string(what) + ": factor must have unit Frobenius norm, got " +
                        std::to_string(norm));
  }
}

// [sqrt(tau g_k(t)) L_k x]_k, skipping channels whose rate vanishes at t.
inline ComplexMatrix channel_block(const LindbladModel& model, double t, double tau,
                                   const ComplexMatrix& x, bool adjoint) {
  std::vector<ComplexMatrix> blocks;
  for (std::size_t k = 0; k < model.channel_count(); ++k) {
    const double g = model.rate(k, t);
    if (g == 0.0) continue;
    const double w = std::sqrt(tau * g);
    blocks.push_back(w * (adjoint ? model.apply_jump_adjoint(k, x) : model.apply_jump(k, x)));
  }
  if (blocks.empty()) return ComplexMatrix(x.rows(), 0);
  return hconcat(std::span<const ComplexMatrix>(blocks));
}

// The three propagators of a step: which = 0 -> e^{tau/2 A_start},
// 1 -> e^{tau/2 A_mid}, 2 -> e^{tau A_mid}. On the dense route each matrix
// exponential is formed once, and e^{tau A_mid} as the square of e^{tau/2 A_mid}.
class StepPropagators {
 public:
  StepPropagators(ComplexMatrix a_start, ComplexMatrix a_mid, double tau, double tolerance,
                  const ExpmActionOptions& options)
      : a_start_(std::move(a_start)), a_mid_(std::move(a_mid)), tau_(tau), tolerance_(tolerance),
        options_(options), dense_(expm_action_is_dense(a_start_.rows(), tolerance, options)) {}

  ComplexMatrix operator()(int which, const ComplexMatrix& v) {
    if (!dense_) {
      const ComplexMatrix& a = which == 0 ? a_start_ : a_mid_;
      const double scale = which == 2 ? tau_ : 0.5 * tau_;
      return expm_action(scale * a, v, tolerance_, options_);
    }
    if (v.cols() == 0) return v;
    return propagator(which) * v;
  }

 private:
  const ComplexMatrix& propagator(int which) {
    std::optional<ComplexMatrix>& slot = cache_[static_cast<std::size_t>(which)];
    if (!slot) {
      if (which == 0) {
        slot = expm((0.5 * tau_) * a_start_);
      } else if (which == 1) {
        slot = expm((0.5 * tau_) * a_mid_);
      } else {
        const ComplexMatrix& half = propagator(1);
        slot = half * half;
      }
    }
    return *slot;
  }

  ComplexMatrix a_start_;
  ComplexMatrix a_mid_;
  double tau_;
  double tolerance_;
  ExpmActionOptions options_;
  bool dense_;
  std::array<std::optional<ComplexMatrix>, 3> cache_;
};

template <class Apply>
LremStep lrem_step(const LindbladModel& model, double t_start, double t_mid, double tau,
                   const LowRankFactor& factor, const LremConfig& cfg, bool adjoint, Apply&& apply) {
  const double eps1 = cfg.compression_tolerance(tau);
  LremStep out;
  auto& diag = out.diagnostics;
  auto compress = [&](const ComplexMatrix& x) {
    SvdTruncation t = truncate_svd(x, eps1, cfg.max_rank);
    diag.discarded_energy += t.discarded_energy;
    diag.cap_excess += t.cap_excess;
    return t;
  };
  const ComplexMatrix& x_n = factor.matrix();

  const ComplexMatrix g_raw = channel_block(model, t_start, tau, x_n, adjoint);
  diag.channel_columns = g_raw.cols();
  const SvdTruncation g = compress(g_raw);
  diag.channel_rank = g.rank;

  const ComplexMatrix half_raw = apply(0, hconcat({x_n, std::sqrt(0.5) * g.factor}));
  diag.half_columns = half_raw.cols();
  const SvdTruncation half = compress(half_raw);
  diag.half_rank = half.rank;

  const ComplexMatrix gh_raw = channel_block(model, t_mid, tau, half.factor, adjoint);
  diag.half_channel_columns = gh_raw.cols();
  const SvdTruncation gh = compress(gh_raw);
  diag.half_channel_rank = gh.rank;

  const ComplexMatrix full_raw = hconcat({apply(2, x_n), apply(1, gh.factor)});
  diag.full_columns = full_raw.cols();
  const SvdTruncation full = compress(full_raw);
  diag.rank = full.rank;

  const double norm = std::sqrt(accurate_squared_norm(full.factor));
  diag.trace_before_normalization = norm * norm;
  if (!(norm > 0.0)) {
    throw DegenerateStateError("low-rank step: factor vanished after compression");
  }
  out.factor = LowRankFactor(full.factor / norm);
  out.unnormalized = full.factor;
  return out;
}

}  // namespace detail

/// One forward step X_n -> X_{n+1}; requires ||X_n||_F = 1.
inline LremStep lrem_forward_step(const LindbladModel& model, double t_n, double tau,
                                  const LowRankFactor& x_n, const LremConfig& cfg) {
  detail::require_step(tau);
  cfg.validate();
  if (x_n.dim() != model.dim()) throw DimensionError("lrem_forward_step: factor dimension mismatch");
  detail::require_unit_factor(x_n, "lrem_forward_step");
  const double t_mid = t_n + 0.5 * tau;
  const double eps2 = cfg.action_tolerance(tau);
  detail::StepPropagators apply(build_A(model, t_n), build_A(model, t_mid), tau, eps2, cfg.expm_options);
  return detail::lrem_step(model, t_n, t_mid, tau, x_n, cfg, false, apply);
}

/// One backward step Y_{n+1} -> Y_n from t_next = t_{n+1}; requires ||Y_{n+1}||_F = 1.
inline LremStep lrem_backward_step(const LindbladModel& model, double t_next, double tau,
                                   const LowRankFactor& y_next, const LremConfig& cfg) {
  detail::require_step(tau);
  cfg.validate();
  if (y_next.dim() != model.dim()) throw DimensionError("lrem_backward_step: factor dimension mismatch");
  detail::require_unit_factor(y_next, "lrem_backward_step");
  const double t_mid = t_next - 0.5 * tau;
  const double eps2 = cfg.action_tolerance(tau);
  detail::StepPropagators apply(build_A(model, t_next).adjoint(), build_A(model, t_mid).adjoint(), tau,
                                eps2, cfg.expm_options);
  return detail::lrem_step(model, t_next, t_mid, tau, y_next, cfg, true, apply);
}

// ---------------------------------------------------------------------------
// Runs
// ---------------------------------------------------------------------------

struct LremRunOptions {
  bool keep_trajectory = true;
  /// Record this diagonal entry of X X^H for every state, if >= 0.
  Index population_index = -1;
};

struct LremStepRecord {
  double time = 0.0;
  Index rank = 0;
  double trace_drift = 0.0;  ///< ||X||_F^2 - 1 of the stored factor
  double trace_before_normalization = 0.0;
  double discarded_energy = 0.0;
  double cumulative_discarded_energy = 0.0;
  double cap_excess = 0.0;
  double population = std::numeric_limits<double>::quiet_NaN();
  double wall_seconds = 0.0;  ///< elapsed since the run started
};

struct LremTrajectory {
  std::vector<double> times;
  std::vector<LowRankFactor> factors;  ///< in time order
  std::vector<LremStepRecord> records; ///< in production order
  double wall_seconds = 0.0;
  Index max_rank = 0;

  const LowRankFactor& final_factor() const { return factors.back(); }
  const LowRankFactor& initial_factor() const { return factors.front(); }
};

namespace detail {

template <class Step>
LremTrajectory lrem_run(const LindbladModel& model, const LowRankFactor& start, double horizon,
                        int steps, const LremConfig& cfg, const LremRunOptions& options,
                        bool backward, Step&& step) {
  if (steps < 1) throw ParameterError("run: need at least one step");
  if (!(horizon > 0.0)) throw ParameterError("run: horizon must be positive");
  cfg.validate();
  require_unit_factor(start, backward ? "terminal factor" : "initial factor");
  const double tau = horizon / steps;
  const auto clock_start = std::chrono::steady_clock::now();
  auto elapsed = [&] {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - clock_start).count();
  };

  LremTrajectory traj;
  double cumulative = 0.0;
  auto record = [&](double time, const LowRankFactor& x, const LremStepDiagnostics* d) {
    LremStepRecord r;
    r.time = time;
    r.rank = x.rank();
    r.trace_drift = x.trace() - 1.0;
    r.trace_before_normalization = d ? d->trace_before_normalization : x.trace();
    r.discarded_energy = d ? d->discarded_energy : 0.0;
    cumulative += r.discarded_energy;
    r.cumulative_discarded_energy = cumulative;
    r.cap_excess = d ? d->cap_excess : 0.0;
    if (options.population_index >= 0) {
      r.population = x.matrix().row(options.population_index).squaredNorm();
    }
    r.wall_seconds = elapsed();
    traj.max_rank = std::max(traj.max_rank, x.rank());
    traj.records.push_back(r);
  };

  std::vector<LowRankFactor> stored{start};
  LowRankFactor current = start;
  record(backward ? horizon : 0.0, current, nullptr);
  for (int n = 0; n < steps; ++n) {
    const double t = backward ? horizon - n * tau : n * tau;
    LremStep s = step(model, t, tau, current, cfg);
    current = std::move(s.factor);
    record(backward ? horizon - (n + 1) * tau : (n + 1) * tau, current, &s.diagnostics);
    if (options.keep_trajectory || n + 1 == steps) stored.push_back(current);
  }
  traj.wall_seconds = elapsed();
  if (backward) std::reverse(stored.begin(), stored.end());
  traj.factors = std::move(stored);
  if (options.keep_trajectory) {
    for (int n = 0; n <= steps; ++n) traj.times.push_back(n * tau);
  } else {
    traj.times = {0.0, horizon};
  }
  return traj;
}

}  // namespace detail

inline LremTrajectory lrem_forward_run(const LindbladModel& model, const LowRankFactor& x_0,
                                       double horizon, int steps, const LremConfig& cfg,
                                       const LremRunOptions& options = {}) {
  return detail::lrem_run(model, x_0, horizon, steps, cfg, options, false,
                          [](const LindbladModel& m, double t, double tau, const LowRankFactor& x,
                             const LremConfig& c) { return lrem_forward_step(m, t, tau, x, c); });
}

inline LremTrajectory lrem_backward_run(const LindbladModel& model, const LowRankFactor& y_final,
                                        double horizon, int steps, const LremConfig& cfg,
                                        const LremRunOptions& options = {}) {
  return detail::lrem_run(model, y_final, horizon, steps, cfg, options, true,
                          [](const LindbladModel& m, double t, double tau, const LowRankFactor& y,
                             const LremConfig& c) { return lrem_backward_step(m, t, tau, y, c); });
}

}  // namespace lindblad

#endif  // LINDBLAD_LREM_HPP
