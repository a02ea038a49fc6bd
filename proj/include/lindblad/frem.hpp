#ifndef LINDBLAD_FREM_HPP
#define LINDBLAD_FREM_HPP

// Full-rank exponential midpoint steppers.
//
// Forward map Phi(t_n, rho_n):
//   rho_{n+1/2} = E_n (rho_n + tau/2 F(t_n, rho_n)) E_n^H,           E_n = e^{tau/2 A(t_n)}
//   rho_{n+1}   = E rho_n E^H + tau E_h F(t_{n+1/2}, rho_{n+1/2}) E_h^H,
// with E_h = e^{tau/2 A(t_{n+1/2})} and E = E_h^2 = e^{tau A(t_{n+1/2})}.
// The adjoint map Psi(t_{n+1}, q_{n+1}) mirrors it with conjugated exponentials
// and the channel L^H q L.

#include <chrono>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "lindblad/linalg.hpp"
#include "lindblad/model.hpp"
#include "lindblad/state.hpp"

namespace lindblad {

struct FremStep {
  DensityMatrix half_state;
  DensityMatrix full_state;
  /// Trace of full_state; the normalized runs divide by it.
  double trace_before_normalization = 0.0;
};

namespace detail {

inline void require_state(const LindbladModel& model, const ComplexMatrix& x) {
  if (x.rows() != model.dim() || x.cols() != model.dim()) {
    throw DimensionError("state is " + std::to_string(x.rows()) + "x" + std::to_string(x.cols()) +
                         ", model dimension is " + std::to_string(model.dim()));
  }
}

// Conjugation e x e^H, symmetrized to remove roundoff anti-Hermitian parts.
inline ComplexMatrix conjugate(const ComplexMatrix& e, const ComplexMatrix& x) {
  ComplexMatrix y = e * x * e.adjoint();
  return (y + y.adjoint()) * 0.5;
}

}  // namespace detail

/// One forward step rho_n -> rho_{n+1}. Three exponentials are formed:
/// e^{tau/2 A(t_n)}, e^{tau/2 A(t_n + tau/2)} and its square.
inline FremStep frem_forward_step(const LindbladModel& model, double t_n, double tau,
                                  const ComplexMatrix& rho_n) {
  detail::require_step(tau);
  detail::require_state(model, rho_n);
  const double t_mid = t_n + 0.5 * tau;

  const ComplexMatrix e_start = expm((0.5 * tau) * build_A(model, t_n));
  const ComplexMatrix e_half = expm((0.5 * tau) * build_A(model, t_mid));
  const ComplexMatrix e_full = e_half * e_half;

  const ComplexMatrix half = detail::conjugate(
      e_start, rho_n + (0.5 * tau) * apply_forward_channel(model, t_n, rho_n));
  ComplexMatrix full = detail::conjugate(e_full, rho_n) +
                       tau * detail::conjugate(e_half, apply_forward_channel(model, t_mid, half));

  const double trace = full.trace().real();
  return FremStep{DensityMatrix(half), DensityMatrix(std::move(full)), trace};
}

/// One backward step q_{n+1} -> q_n of the adjoint equation, taken from
/// t_next = t_{n+1} down to t_next - tau.
inline FremStep frem_backward_step(const LindbladModel& model, double t_next, double tau,
                                   const ComplexMatrix& q_next) {
  detail::require_step(tau);
  detail::require_state(model, q_next);
  const double t_mid = t_next - 0.5 * tau;

  // e^{s A^H} = (e^{s A})^H
  const ComplexMatrix e_start = expm((0.5 * tau) * build_A(model, t_next)).adjoint();
  const ComplexMatrix e_half = expm((0.5 * tau) * build_A(model, t_mid)).adjoint();
  const ComplexMatrix e_full = e_half * e_half;

  const ComplexMatrix half = detail::conjugate(
      e_start, q_next + (0.5 * tau) * apply_backward_channel(model, t_next, q_next));
  ComplexMatrix full = detail::conjugate(e_full, q_next) +
                       tau * detail::conjugate(e_half, apply_backward_channel(model, t_mid, half));

  const double trace = full.trace().real();
  return FremStep{DensityMatrix(half), DensityMatrix(std::move(full)), trace};
}

// ---------------------------------------------------------------------------
// Runs
// ---------------------------------------------------------------------------

struct FremRunOptions {
  bool normalized = true;
  /// Store every grid state; otherwise only the initial and final ones.
  bool keep_trajectory = true;
  /// Compute the minimum eigenvalue of every state (O(m^3) per step).
  bool track_spectrum = true;
  /// Record this diagonal entry (population) of every state, if >= 0.
  Index population_index = -1;
};

struct FremStepRecord {
  double time = 0.0;  ///< grid time of the produced state
  double trace_before_normalization = 0.0;
  double trace_drift = 0.0;  ///< Tr(state) - 1 of the stored state
  double min_eigenvalue = std::numeric_limits<double>::quiet_NaN();
  double half_min_eigenvalue = std::numeric_limits<double>::quiet_NaN();
  double population = std::numeric_limits<double>::quiet_NaN();
};

/// Grid states in time order: states[n] approximates the solution at times[n].
/// For backward runs the last entry is the terminal condition.
struct FremTrajectory {
  std::vector<double> times;
  std::vector<DensityMatrix> states;
  /// One record per produced state, in the order they were produced.
  std::vector<FremStepRecord> records;
  double wall_seconds = 0.0;

  const DensityMatrix& final_state() const { return states.back(); }
  const DensityMatrix& initial_state() const { return states.front(); }
};

namespace detail {

inline void require_unit_trace(const ComplexMatrix& x, const char* what) {
  const double tr = x.trace().real();
  if (std::abs(tr - 1.0) > kTraceTolerance) {
    throw ContractError(std::string(what) + ": trace " + std::to_string(tr) + " is not 1");
  }
}

template <class Step>
FremTrajectory frem_run(const LindbladModel& model, const ComplexMatrix& start, double horizon,
                        int steps, const FremRunOptions& options, bool backward, Step&& step) {
  if (steps < 1) throw ParameterError("run: need at least one step");
  if (!(horizon > 0.0)) throw ParameterError("run: horizon must be positive");
  require_state(model, start);
  require_unit_trace(start, backward ? "terminal state" : "initial state");
  const double tau = horizon / steps;
  const auto clock_start = std::chrono::steady_clock::now();

  FremTrajectory traj;
  auto record = [&](double time, const ComplexMatrix& x, double raw_trace, const ComplexMatrix* half) {
    FremStepRecord r;
    r.time = time;
    r.trace_before_normalization = raw_trace;
    r.trace_drift = x.trace().real() - 1.0;
    if (options.track_spectrum) {
      r.min_eigenvalue = min_eigenvalue(x);
      if (half) r.half_min_eigenvalue = min_eigenvalue(*half);
    }
    if (options.population_index >= 0) r.population = x(options.population_index, options.population_index).real();
    traj.records.push_back(r);
  };

  ComplexMatrix current = start;
  std::vector<ComplexMatrix> stored;
  stored.push_back(current);
  record(backward ? horizon : 0.0, current, current.trace().real(), nullptr);
  for (int n = 0; n < steps; ++n) {
    // Forward: t_n = n tau. Backward: t_{n+1} = T - n tau.
    const double t = backward ? horizon - n * tau : n * tau;
    FremStep s = step(model, t, tau, current);
    const double raw = s.trace_before_normalization;
    if (options.normalized) {
      if (!(raw > 0.0)) {
        throw DegenerateStateError("normalization: trace " + std::to_string(raw) + " is not positive");
      }
      current = s.full_state.matrix() / raw;
    } else {
      current = s.full_state.matrix();
    }
    const double t_out = backward ? horizon - (n + 1) * tau : (n + 1) * tau;
    record(t_out, current, raw, &s.half_state.matrix());
    if (options.keep_trajectory || n + 1 == steps) stored.push_back(current);
  }
  traj.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - clock_start).count();

  const int count = static_cast<int>(stored.size());
  for (int i = 0; i < count; ++i) {
    const int k = backward ? count - 1 - i : i;
    traj.states.emplace_back(std::move(stored[static_cast<std::size_t>(k)]));
  }
  if (options.keep_trajectory) {
    for (int n = 0; n <= steps; ++n) traj.times.push_back(n * tau);
  } else {
    traj.times = {0.0, horizon};
  }
  return traj;
}

}  // namespace detail

/// Iterates Phi on the uniform grid tau = T/N from rho_0, normalizing each
/// step when options.normalized is set.
inline FremTrajectory frem_forward_run(const LindbladModel& model, const DensityMatrix& rho_0,
                                       double horizon, int steps, const FremRunOptions& options = {}) {
  return detail::frem_run(model, rho_0.matrix(), horizon, steps, options, false,
                          [](const LindbladModel& m, double t, double tau, const ComplexMatrix& x) {
                            return frem_forward_step(m, t, tau, x);
                          });
}

/// Iterates Psi from the terminal condition q_N = Q down to q_0.
inline FremTrajectory frem_backward_run(const LindbladModel& model, const DensityMatrix& terminal,
                                        double horizon, int steps,
                                        const FremRunOptions& options = {}) {
  return detail::frem_run(model, terminal.matrix(), horizon, steps, options, true,
                          [](const LindbladModel& m, double t, double tau, const ComplexMatrix& x) {
                            return frem_backward_step(m, t, tau, x);
                          });
}

}  // namespace lindblad

#endif  // LINDBLAD_FREM_HPP
