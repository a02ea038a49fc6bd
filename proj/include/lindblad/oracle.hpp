#ifndef LINDBLAD_ORACLE_HPP
#define LINDBLAD_ORACLE_HPP

// Reference solvers that share no code path with the exponential midpoint
// schemes: classical RK4 on the matrix ODE with step-halving certification,
// the vectorized Liouvillian for constant generators, and an adaptive
// Dormand-Prince integrator on the vectorized state used as the dense
// time-stepping baseline in timing studies.

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <limits>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "lindblad/linalg.hpp"
#include "lindblad/model.hpp"
#include "lindblad/state.hpp"

namespace lindblad {

enum class Direction { kForward, kBackward };

enum class ReferenceMethod { kRk4Fine, kLiouvillianExpm };

inline const char* to_string(ReferenceMethod method) {
  return method == ReferenceMethod::kRk4Fine ? "rk4-fine" : "liouvillian-expm";
}

/// Required certified accuracy of any reference used to measure errors.
inline constexpr double kReferenceAccuracyLimit = 1e-9;

struct ReferenceSolution {
  DensityMatrix state;
  ReferenceMethod method = ReferenceMethod::kRk4Fine;
  std::int64_t substeps = 0;
  /// Richardson estimate of the error of `state` (gap / 15 for RK4).
  double estimated_accuracy = 0.0;
  /// Trace-norm difference between the last two resolutions.
  double halving_gap = 0.0;
};

struct ReferenceOptions {
  /// Accept once successive resolutions differ by at most this (trace norm).
  double gap_tolerance = 1e-10;
  /// 0 selects a starting resolution from the generator norm.
  std::int64_t initial_substeps = 0;
  std::int64_t max_substeps = std::int64_t{1} << 22;
};

// ---------------------------------------------------------------------------
// RK4 on the matrix ODE
// ---------------------------------------------------------------------------

namespace detail {

// Right-hand side in the integration variable s. Forward (t = s):
//   A x + x A^H + sum g L x L^H.
// Backward (t = T - s, so dq/ds = -dq/dt):
//   A^H x + x A + sum g L^H x L.
// For Hermitian x the first two terms are M + M^H with M = A x (or A^H x).
class MatrixRhs {
 public:
  MatrixRhs(const LindbladModel& model, double horizon, Direction direction, bool hermitian)
      : model_(model), horizon_(horizon), direction_(direction), hermitian_(hermitian) {}

  ComplexMatrix operator()(double s, const ComplexMatrix& x) const {
    const double t = direction_ == Direction::kForward ? s : horizon_ - s;
    const bool adjoint = direction_ == Direction::kBackward;
    ComplexMatrix a = build_A(model_, t);
    if (adjoint) a.adjointInPlace();
    ComplexMatrix out(x.rows(), x.cols());
    out.noalias() = a * x;
    if (hermitian_) {
      out += out.adjoint().eval();
    } else {
      out.noalias() += x * a.adjoint();
    }
    for (std::size_t k = 0; k < model_.channel_count(); ++k) {
      const double g = model_.rate(k, t);
      if (g != 0.0) out += g * model_.sandwich(k, x, adjoint);
    }
    return out;
  }

 private:
  const LindbladModel& model_;
  double horizon_;
  Direction direction_;
  bool hermitian_;
};

inline ComplexMatrix rk4_integrate(const MatrixRhs& rhs, ComplexMatrix x, double s0, double length,
                                   std::int64_t substeps,
                                   std::vector<ComplexMatrix>* samples = nullptr,
                                   std::int64_t sample_every = 0) {
  const double h = length / static_cast<double>(substeps);
  for (std::int64_t i = 0; i < substeps; ++i) {
    const double s = s0 + static_cast<double>(i) * h;
    const ComplexMatrix k1 = rhs(s, x);
    const ComplexMatrix k2 = rhs(s + 0.5 * h, x + (0.5 * h) * k1);
    const ComplexMatrix k3 = rhs(s + 0.5 * h, x + (0.5 * h) * k2);
    const ComplexMatrix k4 = rhs(s + h, x + h * k3);
    x += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    if (samples && sample_every > 0 && (i + 1) % sample_every == 0) samples->push_back(x);
  }
  return x;
}

// Bound on the spectral radius of the generator, used to pick a starting
// resolution: 2 ||A - mu I||_1 + sum g ||L||_1^2 over a few sample times.
inline double generator_scale(const LindbladModel& model, double horizon) {
  double scale = 0.0;
  for (int i = 0; i <= 4; ++i) {
    const double t = horizon * i / 4.0;
    ComplexMatrix a = build_A(model, t);
    const Complex mu = a.trace() / static_cast<double>(a.rows());
    a.diagonal().array() -= mu;
    double s = 2.0 * one_norm(a);
    for (std::size_t k = 0; k < model.channel_count(); ++k) {
      const double l = one_norm(model.jump(k));
      s += model.rate(k, t) * l * l;
    }
    scale = std::max(scale, s);
  }
  return scale;
}

inline ReferenceSolution certified_rk4(const LindbladModel& model, const ComplexMatrix& start,
                                       double horizon, Direction direction,
                                       const ReferenceOptions& options) {
  if (!(horizon > 0.0)) throw ParameterError("reference: horizon must be positive");
  if (start.rows() != model.dim() || start.cols() != model.dim()) {
    throw DimensionError("reference: state dimension does not match the model");
  }
  const bool hermitian = is_hermitian(start);
  const MatrixRhs rhs(model, horizon, direction, hermitian);
  auto solve = [&](std::int64_t n) {
    ComplexMatrix x = rk4_integrate(rhs, start, 0.0, horizon, n);
    if (hermitian) x = hermitian_part(x);
    return x;
  };

  std::int64_t n = options.initial_substeps;
  if (n <= 0) {
    const double scale = generator_scale(model, horizon);
    n = std::max<std::int64_t>(8, static_cast<std::int64_t>(std::ceil(2.0 * horizon * scale)));
  }
  ComplexMatrix coarse = solve(n);
  for (;;) {
    if (2 * n > options.max_substeps) {
      throw OracleFailure("reference: no certified solution within " +
                          std::to_string(options.max_substeps) + " substeps");
    }
    ComplexMatrix fine = solve(2 * n);
    const double gap = (fine - coarse).allFinite() ? trace_norm(fine - coarse)
                                                   : std::numeric_limits<double>::infinity();
    if (gap <= options.gap_tolerance) {
      ReferenceSolution out{DensityMatrix(std::move(fine)), ReferenceMethod::kRk4Fine, 2 * n,
                            gap / 15.0, gap};
      if (out.estimated_accuracy > kReferenceAccuracyLimit) {
        throw OracleFailure("reference: estimated accuracy above the acceptance limit");
      }
      return out;
    }
    // Predict the resolution whose halving gap meets the tolerance (order 4).
    double factor = std::isfinite(gap) ? std::pow(gap / options.gap_tolerance, 0.25) * 1.1 : 16.0;
    factor = std::clamp(factor, 1.0, 16.0);
    if (factor <= 2.0) {
      n *= 2;
      coarse = std::move(fine);
    } else {
      n = static_cast<std::int64_t>(std::ceil(static_cast<double>(n) * factor));
      coarse = solve(n);
    }
  }
}

}  // namespace detail

/// rho(T) of the forward equation by RK4 with step halving until two
/// successive resolutions agree within options.gap_tolerance.
inline ReferenceSolution reference_forward(const LindbladModel& model, const DensityMatrix& rho_0,
                                           double horizon, const ReferenceOptions& options = {}) {
  return detail::certified_rk4(model, rho_0.matrix(), horizon, Direction::kForward, options);
}

/// q(0) of the adjoint equation from the terminal condition q(T) = Q.
inline ReferenceSolution reference_backward(const LindbladModel& model, const DensityMatrix& terminal,
                                            double horizon, const ReferenceOptions& options = {}) {
  return detail::certified_rk4(model, terminal.matrix(), horizon, Direction::kBackward, options);
}

/// RK4 states at the grid times n * T / intervals, n = 0..intervals, each
/// interval resolved with `substeps` RK4 steps. Backward trajectories are
/// returned in time order too (entry n approximates q(t_n)).
inline std::vector<ComplexMatrix> rk4_trajectory(const LindbladModel& model,
                                                 const ComplexMatrix& start, double horizon,
                                                 int intervals, std::int64_t substeps,
                                                 Direction direction) {
  if (intervals < 1 || substeps < 1) throw ParameterError("rk4_trajectory: need positive resolution");
  const detail::MatrixRhs rhs(model, horizon, direction, is_hermitian(start));
  std::vector<ComplexMatrix> states{start};
  detail::rk4_integrate(rhs, start, 0.0, horizon, substeps * intervals, &states, substeps);
  if (direction == Direction::kBackward) std::reverse(states.begin(), states.end());
  return states;
}

// ---------------------------------------------------------------------------
// Vectorized Liouvillian
// ---------------------------------------------------------------------------

inline constexpr Index kLiouvillianMaxDim = 64;

/// L(t) = I (x) A + conj(A) (x) I + sum_k g_k conj(L_k) (x) L_k, acting on the
/// column-major vec(rho).
inline ComplexMatrix build_liouvillian(const LindbladModel& model, double t) {
  const Index m = model.dim();
  if (m > kLiouvillianMaxDim) {
    throw ParameterError("build_liouvillian: dimension " + std::to_string(m) + " exceeds " +
                         std::to_string(kLiouvillianMaxDim));
  }
  const ComplexMatrix a = build_A(model, t);
  const ComplexMatrix ident = ComplexMatrix::Identity(m, m);
  ComplexMatrix out = kron(ident, a) + kron(a.conjugate(), ident);
  for (std::size_t k = 0; k < model.channel_count(); ++k) {
    const double g = model.rate(k, t);
    if (g != 0.0) out += g * kron(model.jump(k).conjugate(), model.jump(k));
  }
  return out;
}

inline ComplexVector vectorize(const ComplexMatrix& x) {
  return Eigen::Map<const ComplexVector>(x.data(), x.size());
}

inline ComplexMatrix unvectorize(const ComplexVector& v, Index m) {
  return Eigen::Map<const ComplexMatrix>(v.data(), m, m);
}

/// exp(T L) vec(rho_0) (forward) or exp(T L^H) vec(Q) (backward) for a
/// time-independent model.
inline ReferenceSolution liouvillian_reference(const LindbladModel& model, const ComplexMatrix& start,
                                               double horizon, Direction direction) {
  if (!model.time_independent()) {
    throw ContractError("liouvillian_reference: model is time dependent");
  }
  ComplexMatrix gen = build_liouvillian(model, 0.0);
  if (direction == Direction::kBackward) gen.adjointInPlace();
  const ComplexMatrix propagator = expm(horizon * gen);
  ComplexMatrix x = unvectorize(propagator * vectorize(start), model.dim());
  return ReferenceSolution{DensityMatrix(hermitian_part(x)), ReferenceMethod::kLiouvillianExpm, 0,
                           0.0, 0.0};
}

/// max_n |Tr(q_n rho_n) - Tr(q_0 rho_0)| over two trajectories on the same grid.
inline double check_duality(std::span<const ComplexMatrix> forward,
                            std::span<const ComplexMatrix> backward) {
  if (forward.size() != backward.size() || forward.empty()) {
    throw ContractError("check_duality: trajectories are not on the same grid");
  }
  auto pairing = [](const ComplexMatrix& q, const ComplexMatrix& rho) {
    if (q.rows() != rho.rows() || q.cols() != rho.cols()) {
      throw ContractError("check_duality: state shapes differ");
    }
    return (q.transpose().cwiseProduct(rho)).sum();
  };
  const Complex base = pairing(backward.front(), forward.front());
  double worst = 0.0;
  for (std::size_t n = 0; n < forward.size(); ++n) {
    worst = std::max(worst, std::abs(pairing(backward[n], forward[n]) - base));
  }
  return worst;
}

// ---------------------------------------------------------------------------
// Adaptive Dormand-Prince 5(4) on the vectorized state
// ---------------------------------------------------------------------------

struct AdaptiveRunResult {
  ComplexMatrix state;
  std::int64_t accepted_steps = 0;
  std::int64_t rejected_steps = 0;
  std::int64_t rhs_evaluations = 0;
};

/// Explicit adaptive integration of vec(rho) with per-entry error control
/// |err_i| <= atol + rtol * |y_i| (RMS norm). The generator is applied in
/// matrix form, which is the action of the Liouvillian on vec(rho).
inline AdaptiveRunResult dopri5_propagate(const LindbladModel& model, const ComplexMatrix& start,
                                          double horizon, Direction direction, double rtol,
                                          double atol, std::int64_t max_steps = 10'000'000) {
  if (!(rtol > 0.0) || !(atol > 0.0)) throw ParameterError("dopri5: tolerances must be positive");
  const detail::MatrixRhs rhs(model, horizon, direction, is_hermitian(start));
  constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
  constexpr double a21 = 1.0 / 5;
  constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
  constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
  constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561,
                   a54 = -212.0 / 729;
  constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247, a64 = 49.0 / 176,
                   a65 = -5103.0 / 18656;
  constexpr double b1 = 35.0 / 384, b3 = 500.0 / 1113, b4 = 125.0 / 192, b5 = -2187.0 / 6784,
                   b6 = 11.0 / 84;
  constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920, e5 = -17253.0 / 339200,
                   e6 = 22.0 / 525, e7 = -1.0 / 40;

  AdaptiveRunResult out;
  ComplexMatrix y = start;
  double s = 0.0;
  double h = std::min(horizon, 0.5 / std::max(1.0, detail::generator_scale(model, horizon)));
  ComplexMatrix k1 = rhs(s, y);
  ++out.rhs_evaluations;
  while (s < horizon) {
    if (out.accepted_steps + out.rejected_steps > max_steps) {
      throw OracleFailure("dopri5: step budget exhausted");
    }
    h = std::min(h, horizon - s);
    const ComplexMatrix k2 = rhs(s + c2 * h, y + h * (a21 * k1));
    const ComplexMatrix k3 = rhs(s + c3 * h, y + h * (a31 * k1 + a32 * k2));
    const ComplexMatrix k4 = rhs(s + c4 * h, y + h * (a41 * k1 + a42 * k2 + a43 * k3));
    const ComplexMatrix k5 = rhs(s + c5 * h, y + h * (a51 * k1 + a52 * k2 + a53 * k3 + a54 * k4));
    const ComplexMatrix k6 =
        rhs(s + h, y + h * (a61 * k1 + a62 * k2 + a63 * k3 + a64 * k4 + a65 * k5));
    ComplexMatrix y_new = y + h * (b1 * k1 + b3 * k3 + b4 * k4 + b5 * k5 + b6 * k6);
    const ComplexMatrix k7 = rhs(s + h, y_new);
    out.rhs_evaluations += 6;
    const ComplexMatrix err = h * (e1 * k1 + e3 * k3 + e4 * k4 + e5 * k5 + e6 * k6 + e7 * k7);
    const Eigen::ArrayXXd scale =
        atol + rtol * y.cwiseAbs().array().max(y_new.cwiseAbs().array());
    const double err_norm =
        std::sqrt((err.cwiseAbs().array() / scale).square().mean());
    if (err_norm <= 1.0) {
      s += h;
      y = std::move(y_new);
      k1 = k7;
      ++out.accepted_steps;
    } else {
      ++out.rejected_steps;
    }
    const double factor = err_norm == 0.0 ? 5.0 : std::clamp(0.9 * std::pow(err_norm, -0.2), 0.2, 5.0);
    h *= factor;
  }
  out.state = is_hermitian(start) ? hermitian_part(y) : y;
  return out;
}

// ---------------------------------------------------------------------------
// Reference cache
// ---------------------------------------------------------------------------

/// Directory of certified references. Each entry is `<key>.bin` holding two
/// little-endian uint64 dimensions followed by little-endian float64
/// interleaved (re, im) entries in column-major order, plus a `<key>.json`
/// sidecar with the certification data.
class ReferenceCache {
 public:
  static constexpr const char* kEnvVar = "LINDBLAD_REFERENCE_CACHE";

  explicit ReferenceCache(std::filesystem::path directory) : dir_(std::move(directory)) {}

  /// $LINDBLAD_REFERENCE_CACHE if set, otherwise ./.lindblad-cache
  static std::filesystem::path default_directory() {
    if (const char* env = std::getenv(kEnvVar); env && *env) return env;
    return ".lindblad-cache";
  }

  const std::filesystem::path& directory() const noexcept { return dir_; }

  std::optional<ReferenceSolution> load(const std::string& key) const {
    const auto bin = dir_ / (key + ".bin");
    const auto meta = dir_ / (key + ".json");
    if (!std::filesystem::exists(bin) || !std::filesystem::exists(meta)) return std::nullopt;
    try {
      ComplexMatrix x = read_matrix(bin);
      std::ifstream in(meta);
      const nlohmann::json j = nlohmann::json::parse(in);
      ReferenceSolution out;
      out.state = DensityMatrix(std::move(x));
      out.method = j.at("method").get<std::string>() == "rk4-fine" ? ReferenceMethod::kRk4Fine
                                                                   : ReferenceMethod::kLiouvillianExpm;
      out.substeps = j.at("substeps").get<std::int64_t>();
      out.estimated_accuracy = j.at("estimated_accuracy").get<double>();
      out.halving_gap = j.at("halving_gap").get<double>();
      return out;
    } catch (const std::exception&) {
      return std::nullopt;
    }
  }

  void store(const std::string& key, const ReferenceSolution& solution) const {
    std::filesystem::create_directories(dir_);
    write_matrix(dir_ / (key + ".bin"), solution.state.matrix());
    nlohmann::json j{{"method", to_string(solution.method)},
                     {"substeps", solution.substeps},
                     {"estimated_accuracy", solution.estimated_accuracy},
                     {"halving_gap", solution.halving_gap}};
    std::ofstream(dir_ / (key + ".json")) << j.dump(2) << '\n';
  }

  static void write_matrix(const std::filesystem::path& path, const ComplexMatrix& x) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("reference cache: cannot write " + path.string());
    put_u64(out, static_cast<std::uint64_t>(x.rows()));
    put_u64(out, static_cast<std::uint64_t>(x.cols()));
    for (Index i = 0; i < x.size(); ++i) {
      put_f64(out, x.data()[i].real());
      put_f64(out, x.data()[i].imag());
    }
  }

  static ComplexMatrix read_matrix(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("reference cache: cannot read " + path.string());
    const auto rows = static_cast<Index>(get_u64(in));
    const auto cols = static_cast<Index>(get_u64(in));
    if (rows <= 0 || cols <= 0 || rows > (1 << 16) || cols > (1 << 16)) {
      throw Error("reference cache: corrupt header in " + path.string());
    }
    ComplexMatrix x(rows, cols);
    for (Index i = 0; i < x.size(); ++i) {
      const double re = get_f64(in);
      const double im = get_f64(in);
      x.data()[i] = Complex{re, im};
    }
    if (!in) throw Error("reference cache: truncated file " + path.string());
    return x;
  }

 private:
  static void put_u64(std::ostream& out, std::uint64_t v) {
    unsigned char bytes[8];
    for (int i = 0; i < 8; ++i) bytes[i] = static_cast<unsigned char>(v >> (8 * i));
    out.write(reinterpret_cast<const char*>(bytes), 8);
  }
  static std::uint64_t get_u64(std::istream& in) {
    unsigned char bytes[8] = {};
    in.read(reinterpret_cast<char*>(bytes), 8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(bytes[i]) << (8 * i);
    return v;
  }
  static void put_f64(std::ostream& out, double v) { put_u64(out, std::bit_cast<std::uint64_t>(v)); }
  static double get_f64(std::istream& in) { return std::bit_cast<double>(get_u64(in)); }

  std::filesystem::path dir_;
};

/// Cache key for a reference problem: model fingerprint, start state, horizon,
/// direction and acceptance tolerance.
inline std::string reference_key(const LindbladModel& model, const ComplexMatrix& start,
                                 double horizon, Direction direction, double gap_tolerance) {
  std::uint64_t h = model.fingerprint();
  auto mix = [&h](const void* data, std::size_t bytes) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < bytes; ++i) {
      h ^= p[i];
      h *= 1099511628211ull;
    }
  };
  mix(start.data(), sizeof(Complex) * static_cast<std::size_t>(start.size()));
  mix(&horizon, sizeof horizon);
  const int dir = direction == Direction::kForward ? 0 : 1;
  mix(&dir, sizeof dir);
  mix(&gap_tolerance, sizeof gap_tolerance);
  std::ostringstream name;
  name << (direction == Direction::kForward ? "fwd-" : "bwd-") << "m" << model.dim() << "-"
       << std::hex << h;
  return name.str();
}

/// reference_forward / reference_backward through an optional cache.
inline ReferenceSolution cached_reference(const LindbladModel& model, const DensityMatrix& start,
                                          double horizon, Direction direction,
                                          const ReferenceOptions& options,
                                          const ReferenceCache* cache) {
  std::string key;
  if (cache) {
    key = reference_key(model, start.matrix(), horizon, direction, options.gap_tolerance);
    if (auto hit = cache->load(key)) return *hit;
  }
  ReferenceSolution solution = direction == Direction::kForward
                                   ? reference_forward(model, start, horizon, options)
                                   : reference_backward(model, start, horizon, options);
  if (cache) cache->store(key, solution);
  return solution;
}

}  // namespace lindblad

#endif  // LINDBLAD_ORACLE_HPP
