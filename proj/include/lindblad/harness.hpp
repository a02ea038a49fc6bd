#ifndef LINDBLAD_HARNESS_HPP
#define LINDBLAD_HARNESS_HPP

// Experiment orchestration: step-size convergence studies, per-step structure
// series, low-rank tolerance sweeps and wall-time comparisons, with CSV and
// JSON report writers.

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <optional>
#include <ostream>
#include <string>
#include <system_error>
#include <vector>

#include "json.hpp"
#include "lindblad/frem.hpp"
#include "lindblad/lrem.hpp"
#include "lindblad/model_io.hpp"
#include "lindblad/oracle.hpp"

namespace lindblad {

enum class Scheme { kFremForward, kFremBackward, kLremForward, kLremBackward };

inline const char* to_string(Scheme s) {
  switch (s) {
    case Scheme::kFremForward: return "frem-forward";
    case Scheme::kFremBackward: return "frem-backward";
    case Scheme::kLremForward: return "lrem-forward";
    case Scheme::kLremBackward: return "lrem-backward";
  }
  return "?";
}

inline Scheme parse_scheme(const std::string& name) {
  for (Scheme s : {Scheme::kFremForward, Scheme::kFremBackward, Scheme::kLremForward,
                   Scheme::kLremBackward}) {
    if (name == to_string(s)) return s;
  }
  throw ParameterError("unknown scheme \"" + name + "\"");
}

inline bool is_backward(Scheme s) { return s == Scheme::kFremBackward || s == Scheme::kLremBackward; }
inline bool is_lowrank(Scheme s) { return s == Scheme::kLremForward || s == Scheme::kLremBackward; }

/// Where the start state comes from.
enum class StateSource {
  /// Cat states of the Ising chain (rank one, so the factor is exact).
  kCatStates,
  /// Rank-two mixtures built from a seeded random matrix, with rank-one
  /// factor at trace distance delta.
  kRandomMixture,
};

struct ExperimentSpec {
  ModelSpec model;
  Scheme scheme = Scheme::kFremForward;
  std::vector<int> grid{10, 20, 40, 80, 160};
  LremConfig tolerances{1e-10, 1e-10};
  bool normalized = true;
  std::uint64_t seed = 7;
  double delta = 0.0;
  StateSource states = StateSource::kCatStates;
  /// Diagonal entry tracked by structure series; -1 picks the scheme default.
  Index population_index = -1;
  ReferenceOptions reference;
  /// Reference cache directory; empty disables caching.
  std::filesystem::path cache_dir;

  void validate() const {
    if (grid.empty()) throw ParameterError("experiment: empty step grid");
    for (std::size_t i = 0; i < grid.size(); ++i) {
      if (grid[i] < 1) throw ParameterError("experiment: step counts must be >= 1");
      if (i > 0 && grid[i] <= grid[i - 1]) {
        throw ParameterError("experiment: step counts must be strictly increasing");
      }
    }
    if (!(delta >= 0.0 && delta <= 1.0)) throw ParameterError("experiment: delta must lie in [0, 1]");
    tolerances.validate();
  }
};

/// The model, the dense start state and its factor for one experiment.
struct Problem {
  LindbladModel model;
  DensityMatrix start;
  LowRankFactor factor;
  double horizon = 1.0;
  Direction direction = Direction::kForward;
};

inline Problem make_problem(const ExperimentSpec& spec) {
  LindbladModel model = build_model(spec.model);
  const bool backward = is_backward(spec.scheme);
  const Direction dir = backward ? Direction::kBackward : Direction::kForward;
  if (spec.states == StateSource::kCatStates) {
    if (spec.model.type != "ising") {
      throw ParameterError("experiment: cat states need an ising model; use random states");
    }
    LowRankFactor f = backward ? paper_terminal_factor(spec.model.d, spec.model.sites)
                               : paper_initial_factor(spec.model.d, spec.model.sites);
    DensityMatrix rho(f.density());
    return Problem{std::move(model), std::move(rho), std::move(f), spec.model.horizon, dir};
  }
  LowRankStates st = random_lowrank_states(model.dim(), spec.delta, spec.seed);
  if (backward) {
    return Problem{std::move(model), std::move(st.backward_full), std::move(st.backward_factor),
                   spec.model.horizon, dir};
  }
  return Problem{std::move(model), std::move(st.forward_full), std::move(st.forward_factor),
                 spec.model.horizon, dir};
}

inline ReferenceSolution problem_reference(const Problem& p, const ExperimentSpec& spec) {
  if (spec.cache_dir.empty()) {
    return cached_reference(p.model, p.start, p.horizon, p.direction, spec.reference, nullptr);
  }
  const ReferenceCache cache(spec.cache_dir);
  return cached_reference(p.model, p.start, p.horizon, p.direction, spec.reference, &cache);
}

// ---------------------------------------------------------------------------
// Order fitting
// ---------------------------------------------------------------------------

struct OrderFit {
  double slope = std::numeric_limits<double>::quiet_NaN();
  double intercept = std::numeric_limits<double>::quiet_NaN();
  int points = 0;
  int dropped = 0;
};

/// Least-squares slope of log(error) against log(tau). Points whose error lies
/// within `floor_factor` of `floor` (the oracle accuracy or a plateau level)
/// are left out; fewer than two remaining points give a NaN slope.
inline OrderFit fit_order(const std::vector<double>& taus, const std::vector<double>& errors,
                          double floor = 0.0, double floor_factor = 5.0) {
  if (taus.size() != errors.size()) throw DimensionError("fit_order: size mismatch");
  std::vector<double> xs;
  std::vector<double> ys;
  OrderFit fit;
  for (std::size_t i = 0; i < taus.size(); ++i) {
    if (!(errors[i] > floor_factor * floor) || !(taus[i] > 0.0) || !std::isfinite(errors[i])) {
      ++fit.dropped;
      continue;
    }
    xs.push_back(std::log(taus[i]));
    ys.push_back(std::log(errors[i]));
  }
  fit.points = static_cast<int>(xs.size());
  if (xs.size() < 2) return fit;
  const double n = static_cast<double>(xs.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    sx += xs[i];
    sy += ys[i];
    sxx += xs[i] * xs[i];
    sxy += xs[i] * ys[i];
  }
  fit.slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
  fit.intercept = (sy - fit.slope * sx) / n;
  return fit;
}

// ---------------------------------------------------------------------------
// Reports
// ---------------------------------------------------------------------------

struct ConvergenceRow {
  int steps = 0;
  double tau = 0.0;
  double error_trace = 0.0;
  double error_frob = 0.0;
  double min_eig = 0.0;
  double trace_drift = 0.0;  ///< max |Tr - 1| over the run
  Index max_rank = 0;
  double wall_s = 0.0;
  bool reliable = true;  ///< error at least 10x the oracle accuracy
};

struct ExperimentReport {
  std::string model_name;
  Scheme scheme = Scheme::kFremForward;
  Index dim = 0;
  std::vector<ConvergenceRow> rows;
  OrderFit order;
  ReferenceMethod reference_method = ReferenceMethod::kRk4Fine;
  double reference_accuracy = 0.0;
  std::int64_t reference_substeps = 0;
  /// Set by sweeps: which parameter varied and its value for this report.
  std::string swept;
  double swept_value = std::numeric_limits<double>::quiet_NaN();

  double plateau_level() const { return rows.empty() ? 0.0 : rows.back().error_trace; }
  /// Error ratio between the last two grid points; near 1 once the error has
  /// stopped decreasing, near 4 in the second-order regime.
  double final_reduction() const {
    if (rows.size() < 2) return std::numeric_limits<double>::quiet_NaN();
    return rows[rows.size() - 2].error_trace / rows.back().error_trace;
  }
};

/// Shortest round-trip decimal form of a double.
inline std::string format_double(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, res.ptr);
}

inline constexpr const char* kConvergenceHeader =
    "tau,error_trace,error_frob,min_eig,trace_drift,max_rank,wall_s";

inline void write_csv(std::ostream& out, const ExperimentReport& report) {
  out << kConvergenceHeader << '\n';
  for (const auto& r : report.rows) {
    out << format_double(r.tau) << ',' << format_double(r.error_trace) << ','
        << format_double(r.error_frob) << ',' << format_double(r.min_eig) << ','
        << format_double(r.trace_drift) << ',' << r.max_rank << ',' << format_double(r.wall_s)
        << '\n';
  }
}

inline nlohmann::json to_json(const ExperimentReport& report) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& r : report.rows) {
    rows.push_back({{"steps", r.steps},
                    {"tau", r.tau},
                    {"error_trace", r.error_trace},
                    {"error_frob", r.error_frob},
                    {"min_eig", r.min_eig},
                    {"trace_drift", r.trace_drift},
                    {"max_rank", r.max_rank},
                    {"wall_s", r.wall_s},
                    {"reliable", r.reliable}});
  }
  nlohmann::json j{{"model", report.model_name},
                   {"scheme", to_string(report.scheme)},
                   {"m", report.dim},
                   {"rows", rows},
                   {"fitted_order", std::isfinite(report.order.slope) ? nlohmann::json(report.order.slope)
                                                                       : nlohmann::json()},
                   {"fit_points", report.order.points},
                   {"fit_dropped", report.order.dropped},
                   {"oracle",
                    {{"method", to_string(report.reference_method)},
                     {"estimated_accuracy", report.reference_accuracy},
                     {"substeps", report.reference_substeps}}}};
  if (!report.swept.empty()) {
    j["swept"] = report.swept;
    j["swept_value"] = report.swept_value;
    j["plateau_level"] = report.plateau_level();
    j["final_reduction"] = report.final_reduction();
  }
  return j;
}

// ---------------------------------------------------------------------------
// Convergence studies
// ---------------------------------------------------------------------------

namespace detail {

struct RunOutcome {
  ComplexMatrix state;  // the state at the far end of the run
  double min_eig = 0.0;
  double trace_drift = 0.0;
  Index max_rank = 0;
  double wall_s = 0.0;
};

inline RunOutcome run_scheme(const Problem& p, Scheme scheme, int steps, const LremConfig& cfg,
                             bool normalized) {
  RunOutcome out;
  if (!is_lowrank(scheme)) {
    FremRunOptions opt;
    opt.normalized = normalized;
    opt.keep_trajectory = false;
    opt.track_spectrum = true;
    FremTrajectory tr = is_backward(scheme) ? frem_backward_run(p.model, p.start, p.horizon, steps, opt)
                                            : frem_forward_run(p.model, p.start, p.horizon, steps, opt);
    out.state = is_backward(scheme) ? tr.initial_state().matrix() : tr.final_state().matrix();
    out.min_eig = std::numeric_limits<double>::infinity();
    for (const auto& r : tr.records) {
      out.min_eig = std::min(out.min_eig, r.min_eigenvalue);
      out.trace_drift = std::max(out.trace_drift, std::abs(r.trace_drift));
    }
    out.max_rank = p.model.dim();
    out.wall_s = tr.wall_seconds;
    return out;
  }
  LremRunOptions opt;
  opt.keep_trajectory = false;
  LremTrajectory tr = is_backward(scheme) ? lrem_backward_run(p.model, p.factor, p.horizon, steps, cfg, opt)
                                          : lrem_forward_run(p.model, p.factor, p.horizon, steps, cfg, opt);
  const LowRankFactor& f = is_backward(scheme) ? tr.initial_factor() : tr.final_factor();
  out.state = f.density();
  // Positive semidefinite by construction; reported for the final state.
  out.min_eig = min_eigenvalue(out.state);
  for (const auto& r : tr.records) out.trace_drift = std::max(out.trace_drift, std::abs(r.trace_drift));
  out.max_rank = tr.max_rank;
  out.wall_s = tr.wall_seconds;
  return out;
}

}  // namespace detail

/// Errors against a certified reference for every grid point, with the
/// fitted order over the points clear of `plateau_floor` and the oracle floor.
inline ExperimentReport run_convergence(const ExperimentSpec& spec, double plateau_floor = 0.0) {
  spec.validate();
  const Problem p = make_problem(spec);
  const ReferenceSolution ref = problem_reference(p, spec);
  ExperimentReport report;
  report.model_name = spec.model.name;
  report.scheme = spec.scheme;
  report.dim = p.model.dim();
  report.reference_method = ref.method;
  report.reference_accuracy = ref.estimated_accuracy;
  report.reference_substeps = ref.substeps;

  std::vector<double> taus;
  std::vector<double> errors;
  for (const int n : spec.grid) {
    const detail::RunOutcome run = detail::run_scheme(p, spec.scheme, n, spec.tolerances, spec.normalized);
    ConvergenceRow row;
    row.steps = n;
    row.tau = p.horizon / n;
    const ComplexMatrix diff = run.state - ref.state.matrix();
    row.error_trace = trace_norm(diff);
    row.error_frob = frobenius_norm(diff);
    row.min_eig = run.min_eig;
    row.trace_drift = run.trace_drift;
    row.max_rank = run.max_rank;
    row.wall_s = run.wall_s;
    row.reliable = row.error_trace >= 10.0 * ref.estimated_accuracy;
    taus.push_back(row.tau);
    errors.push_back(row.error_trace);
    report.rows.push_back(row);
  }
  report.order = fit_order(taus, errors, std::max(plateau_floor, ref.estimated_accuracy));
  return report;
}

// ---------------------------------------------------------------------------
// Structure series
// ---------------------------------------------------------------------------

struct SeriesRow {
  double time = 0.0;
  double population = 0.0;
  double trace_drift = 0.0;
  double trace_before_normalization = 0.0;
  double min_eig = 0.0;
  double half_min_eig = std::numeric_limits<double>::quiet_NaN();
  Index rank = 0;
};

struct SeriesReport {
  std::string model_name;
  Scheme scheme = Scheme::kFremForward;
  Index population_index = 0;
  double tau = 0.0;
  std::vector<SeriesRow> rows;  ///< in production order
  double wall_s = 0.0;

  double min_eigenvalue() const {
    double v = std::numeric_limits<double>::infinity();
    for (const auto& r : rows) {
      v = std::min(v, r.min_eig);
      if (!std::isnan(r.half_min_eig)) v = std::min(v, r.half_min_eig);
    }
    return v;
  }
  double max_trace_drift() const {
    double v = 0.0;
    for (const auto& r : rows) v = std::max(v, std::abs(r.trace_drift));
    return v;
  }
};

/// Scheme default for the tracked population: rho_{8,8} / q_{4,4} for the
/// full-rank runs and rho_{1,1} / q_{1,1} for the low-rank runs (1-based).
inline Index default_population_index(Scheme s) {
  switch (s) {
    case Scheme::kFremForward: return 7;
    case Scheme::kFremBackward: return 3;
    default: return 0;
  }
}

/// Per-step populations, trace drift and smallest eigenvalue for a single N.
inline SeriesReport run_structure_series(const ExperimentSpec& spec) {
  spec.validate();
  if (spec.grid.size() != 1) throw ParameterError("series: give exactly one step count");
  const Problem p = make_problem(spec);
  const int n = spec.grid.front();
  SeriesReport rep;
  rep.model_name = spec.model.name;
  rep.scheme = spec.scheme;
  rep.tau = p.horizon / n;
  rep.population_index = spec.population_index >= 0 ? spec.population_index : default_population_index(spec.scheme);
  if (rep.population_index >= p.model.dim()) throw ParameterError("series: population index out of range");

  if (!is_lowrank(spec.scheme)) {
    FremRunOptions opt;
    opt.normalized = spec.normalized;
    opt.keep_trajectory = false;
    opt.population_index = rep.population_index;
    FremTrajectory tr = is_backward(spec.scheme) ? frem_backward_run(p.model, p.start, p.horizon, n, opt)
                                                 : frem_forward_run(p.model, p.start, p.horizon, n, opt);
    for (const auto& r : tr.records) {
      rep.rows.push_back(SeriesRow{r.time, r.population, r.trace_drift, r.trace_before_normalization,
                                   r.min_eigenvalue, r.half_min_eigenvalue, p.model.dim()});
    }
    rep.wall_s = tr.wall_seconds;
    return rep;
  }
  LremRunOptions opt;
  opt.keep_trajectory = true;
  opt.population_index = rep.population_index;
  LremTrajectory tr = is_backward(spec.scheme)
                          ? lrem_backward_run(p.model, p.factor, p.horizon, n, spec.tolerances, opt)
                          : lrem_forward_run(p.model, p.factor, p.horizon, n, spec.tolerances, opt);
  for (std::size_t i = 0; i < tr.records.size(); ++i) {
    const auto& r = tr.records[i];
    // records run in production order, factors in time order
    const std::size_t k = is_backward(spec.scheme) ? tr.factors.size() - 1 - i : i;
    const double lam = min_eigenvalue(tr.factors[k].density());
    rep.rows.push_back(SeriesRow{r.time, r.population, r.trace_drift, r.trace_before_normalization, lam,
                                 std::numeric_limits<double>::quiet_NaN(), r.rank});
  }
  rep.wall_s = tr.wall_seconds;
  return rep;
}

inline void write_csv(std::ostream& out, const SeriesReport& rep) {
  out << "time,population,trace_drift,trace_before_normalization,min_eig,half_min_eig,rank\n";
  for (const auto& r : rep.rows) {
    out << format_double(r.time) << ',' << format_double(r.population) << ','
        << format_double(r.trace_drift) << ',' << format_double(r.trace_before_normalization) << ','
        << format_double(r.min_eig) << ',' << format_double(r.half_min_eig) << ',' << r.rank << '\n';
  }
}

inline nlohmann::json to_json(const SeriesReport& rep) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& r : rep.rows) {
    rows.push_back({{"time", r.time},
                    {"population", r.population},
                    {"trace_drift", r.trace_drift},
                    {"trace_before_normalization", r.trace_before_normalization},
                    {"min_eig", r.min_eig},
                    {"half_min_eig", std::isnan(r.half_min_eig) ? nlohmann::json() : nlohmann::json(r.half_min_eig)},
                    {"rank", r.rank}});
  }
  return {{"model", rep.model_name},
          {"scheme", to_string(rep.scheme)},
          {"tau", rep.tau},
          {"population_index", rep.population_index},
          {"min_eigenvalue", rep.min_eigenvalue()},
          {"max_trace_drift", rep.max_trace_drift()},
          {"wall_s", rep.wall_s},
          {"rows", rows}};
}

// ---------------------------------------------------------------------------
// Low-rank tolerance sweeps
// ---------------------------------------------------------------------------

enum class SweepParameter { kDelta, kEpsilon1, kEpsilon2 };

inline SweepParameter parse_sweep_parameter(const std::string& name) {
  if (name == "delta") return SweepParameter::kDelta;
  if (name == "eps1" || name == "epsilon1") return SweepParameter::kEpsilon1;
  if (name == "eps2" || name == "epsilon2") return SweepParameter::kEpsilon2;
  throw ParameterError("sweep: --vary must be delta, eps1 or eps2");
}

inline const char* to_string(SweepParameter p) {
  switch (p) {
    case SweepParameter::kDelta: return "delta";
    case SweepParameter::kEpsilon1: return "eps1";
    case SweepParameter::kEpsilon2: return "eps2";
  }
  return "?";
}

struct SweepSummary {
  std::vector<ExperimentReport> reports;
  /// Log-log slope of plateau level against the swept value.
  double plateau_slope = std::numeric_limits<double>::quiet_NaN();
};

/// One LREM convergence study per value of the swept parameter. For delta the
/// start states change with the value; for eps1/eps2 the swept tolerance is a
/// rate (eps_i = tau * value) while the other stays at its absolute setting.
inline SweepSummary run_lowrank_sweep(const ExperimentSpec& base, SweepParameter which,
                                      const std::vector<double>& values) {
  if (!is_lowrank(base.scheme)) throw ParameterError("sweep: needs an lrem scheme");
  if (values.empty()) throw ParameterError("sweep: no values given");
  SweepSummary out;
  std::vector<double> levels;
  for (const double v : values) {
    ExperimentSpec spec = base;
    switch (which) {
      case SweepParameter::kDelta:
        spec.delta = v;
        spec.states = StateSource::kRandomMixture;
        break;
      case SweepParameter::kEpsilon1:
        spec.tolerances.epsilon1 = v;
        spec.tolerances.tolerance_scaling = true;
        spec.tolerances.absolute_epsilon1 = false;
        spec.tolerances.absolute_epsilon2 = true;
        break;
      case SweepParameter::kEpsilon2:
        spec.tolerances.epsilon2 = v;
        spec.tolerances.tolerance_scaling = true;
        spec.tolerances.absolute_epsilon1 = true;
        spec.tolerances.absolute_epsilon2 = false;
        break;
    }
    ExperimentReport rep = run_convergence(spec);
    rep.swept = to_string(which);
    rep.swept_value = v;
    levels.push_back(rep.plateau_level());
    out.reports.push_back(std::move(rep));
  }
  if (values.size() >= 2) {
    // same least-squares fit, applied to plateau level vs swept value
    out.plateau_slope = fit_order(values, levels).slope;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Timing
// ---------------------------------------------------------------------------

struct TimingSpec {
  std::vector<int> dims{4, 6, 8, 12};
  int sites = 2;
  double a = 1.5;
  double b = 1.0;
  double gamma = 0.05;
  double horizon = 1.0;
  ControlSpec control{};
  Direction direction = Direction::kForward;
  double target_error = 1e-3;
  int repeats = 5;
  int max_steps = 4096;
  /// LREM tolerances: eps1 = tau^3 and a fixed eps2, no initial low-rank error.
  double lrem_epsilon2 = 1e-6;
  /// Dense adaptive solver: rtol = atol swept from this value downwards.
  double dense_start_tolerance = 1e-2;
  double dense_min_tolerance = 1e-12;
  ReferenceOptions reference;
  std::filesystem::path cache_dir;
};

struct TimingRow {
  int d = 0;
  Index m = 0;
  std::string method;  ///< frem | lrem | dense
  double resolution = 0.0;  ///< step count, or tolerance for the dense solver
  double error = std::numeric_limits<double>::quiet_NaN();
  double wall_s = std::numeric_limits<double>::quiet_NaN();
  Index max_rank = 0;
  bool dnf = false;
};

struct TimingReport {
  std::vector<TimingRow> rows;
  const TimingRow* find(Index m, const std::string& method) const {
    for (const auto& r : rows) {
      if (r.m == m && r.method == method) return &r;
    }
    return nullptr;
  }
};

namespace detail {

template <class F>
double median_wall(F&& f, int repeats) {
  f();  // warm-up
  std::vector<double> t;
  for (int i = 0; i < repeats; ++i) {
    const auto start = std::chrono::steady_clock::now();
    f();
    t.push_back(std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count());
  }
  std::sort(t.begin(), t.end());
  const std::size_t n = t.size();
  return n % 2 ? t[n / 2] : 0.5 * (t[n / 2 - 1] + t[n / 2]);
}

}  // namespace detail

/// Wall time of FREM, LREM and the dense adaptive solver at the coarsest
/// resolution whose trace-norm error meets the target. A method that cannot
/// reach the target within its resolution budget is marked DNF.
inline TimingReport run_timing(const TimingSpec& spec,
                               const std::function<void(const TimingRow&)>& progress = {}) {
  if (spec.repeats < 1) throw ParameterError("timing: repeats must be >= 1");
  TimingReport report;
  const bool backward = spec.direction == Direction::kBackward;
  for (const int d : spec.dims) {
    ModelSpec ms;
    ms.d = d;
    ms.sites = spec.sites;
    ms.a = spec.a;
    ms.b = spec.b;
    ms.rates = {spec.gamma};
    ms.horizon = spec.horizon;
    ms.control = spec.control;
    const LindbladModel model = build_model(ms);
    const LowRankFactor factor = backward ? paper_terminal_factor(d, spec.sites) : paper_initial_factor(d, spec.sites);
    const DensityMatrix start(factor.density());
    std::optional<ReferenceCache> cache;
    if (!spec.cache_dir.empty()) cache.emplace(spec.cache_dir);
    const ReferenceSolution ref =
        cached_reference(model, start, spec.horizon, spec.direction, spec.reference, cache ? &*cache : nullptr);
    const Index m = model.dim();

    auto emit = [&](TimingRow row) {
      row.d = d;
      row.m = m;
      if (progress) progress(row);
      report.rows.push_back(std::move(row));
    };
    auto error_of = [&](const ComplexMatrix& x) { return trace_norm(x - ref.state.matrix()); };

    auto frem_once = [&](int n) {
      FremRunOptions opt;
      opt.keep_trajectory = false;
      opt.track_spectrum = false;
      FremTrajectory tr = backward ? frem_backward_run(model, start, spec.horizon, n, opt)
                                   : frem_forward_run(model, start, spec.horizon, n, opt);
      return ComplexMatrix(backward ? tr.initial_state().matrix() : tr.final_state().matrix());
    };
    auto lrem_config = [&](int n) {
      const double tau = spec.horizon / n;
      LremConfig cfg;
      cfg.epsilon1 = tau * tau * tau;
      cfg.epsilon2 = spec.lrem_epsilon2;
      return cfg;
    };
    Index lrem_rank = 0;
    auto lrem_once = [&](int n) {
      LremRunOptions opt;
      opt.keep_trajectory = false;
      LremTrajectory tr = backward ? lrem_backward_run(model, factor, spec.horizon, n, lrem_config(n), opt)
                                   : lrem_forward_run(model, factor, spec.horizon, n, lrem_config(n), opt);
      lrem_rank = tr.max_rank;
      return (backward ? tr.initial_factor() : tr.final_factor()).density();
    };
    auto dense_once = [&](double tol) {
      return dopri5_propagate(model, start.matrix(), spec.horizon, spec.direction, tol, tol).state;
    };

    auto step_method = [&](const std::string& name, auto&& once) {
      TimingRow row;
      row.method = name;
      for (int n = 2; n <= spec.max_steps; n *= 2) {
        const double e = error_of(once(n));
        if (e <= spec.target_error) {
          row.resolution = n;
          row.error = e;
          row.wall_s = detail::median_wall([&] { once(n); }, spec.repeats);
          row.max_rank = name == "lrem" ? lrem_rank : m;
          emit(row);
          return;
        }
      }
      row.dnf = true;
      emit(row);
    };
    step_method("frem", frem_once);
    step_method("lrem", lrem_once);

    TimingRow dense;
    dense.method = "dense";
    dense.max_rank = m;
    for (double tol = spec.dense_start_tolerance; tol >= spec.dense_min_tolerance; tol /= std::sqrt(10.0)) {
      const double e = error_of(dense_once(tol));
      if (e <= spec.target_error) {
        dense.resolution = tol;
        dense.error = e;
        dense.wall_s = detail::median_wall([&] { dense_once(tol); }, spec.repeats);
        break;
      }
    }
    dense.dnf = std::isnan(dense.wall_s);
    emit(dense);
  }
  return report;
}

inline void write_csv(std::ostream& out, const TimingReport& rep) {
  out << "d,m,method,resolution,error_trace,wall_s,max_rank,dnf\n";
  for (const auto& r : rep.rows) {
    out << r.d << ',' << r.m << ',' << r.method << ',' << format_double(r.resolution) << ','
        << format_double(r.error) << ',' << format_double(r.wall_s) << ',' << r.max_rank << ','
        << (r.dnf ? 1 : 0) << '\n';
  }
}

inline nlohmann::json to_json(const TimingReport& rep) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& r : rep.rows) {
    rows.push_back({{"d", r.d},
                    {"m", r.m},
                    {"method", r.method},
                    {"resolution", r.resolution},
                    {"error_trace", std::isnan(r.error) ? nlohmann::json() : nlohmann::json(r.error)},
                    {"wall_s", std::isnan(r.wall_s) ? nlohmann::json() : nlohmann::json(r.wall_s)},
                    {"max_rank", r.max_rank},
                    {"dnf", r.dnf}});
  }
  return {{"rows", rows}};
}

}  // namespace lindblad

#endif  // LINDBLAD_HARNESS_HPP
