// Command-line driver for the exponential midpoint experiments.
//
//   lindblad converge --model models/ising62.json --scheme frem-forward --steps 10,20,40,80,160
//   lindblad series   --model models/ising62.json --scheme frem-backward --steps 200 --out out/
//   lindblad sweep    --model models/ising44.json --scheme lrem-forward --vary delta --values 1e-3,1e-5
//   lindblad timing   --dims 4,6,8,12
//   lindblad check
//
// Exit status: 0 on success, 1 on invalid input, 2 when the reference solver
// cannot certify a solution.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "lindblad/lindblad.hpp"

namespace fs = std::filesystem;
using namespace lindblad;

namespace {

struct CommonOptions {
  std::string model_path;
  std::string scheme = "frem-forward";
  std::vector<int> steps;
  double eps1 = 1e-10;
  double eps2 = 1e-10;
  double delta = 0.0;
  bool delta_given = false;
  bool normalized = true;
  std::uint64_t seed = 7;
  std::string states = "auto";
  std::string out;
  std::string format = "csv";
  double ref_gap = 1e-10;
  std::string cache;
};

void add_common(CLI::App* cmd, CommonOptions& o, bool need_model = true) {
  auto* model = cmd->add_option("--model", o.model_path, "JSON model file");
  if (need_model) model->required()->check(CLI::ExistingFile);
  cmd->add_option("--scheme", o.scheme, "frem-forward | frem-backward | lrem-forward | lrem-backward");
  cmd->add_option("--steps", o.steps, "step counts N (comma separated)")->delimiter(',');
  cmd->add_option("--eps1", o.eps1, "column-compression tolerance");
  cmd->add_option("--eps2", o.eps2, "exponential-action tolerance");
  cmd->add_option("--delta", o.delta, "trace distance of the low-rank start factor")
      ->each([&o](const std::string&) { o.delta_given = true; });
  cmd->add_option("--normalized", o.normalized, "divide FREM states by their trace (true|false)");
  cmd->add_option("--seed", o.seed, "seed of the random start states");
  cmd->add_option("--states", o.states, "auto | cat | random")->check(CLI::IsMember({"auto", "cat", "random"}));
  cmd->add_option("--out", o.out, "output directory (stdout if omitted)");
  cmd->add_option("--format", o.format, "csv | json")->check(CLI::IsMember({"csv", "json"}));
  cmd->add_option("--ref-gap", o.ref_gap, "halving gap accepted by the reference solver");
  cmd->add_option("--cache", o.cache, "reference cache directory (default: $LINDBLAD_REFERENCE_CACHE)");
}

ExperimentSpec make_spec(const CommonOptions& o) {
  ExperimentSpec spec;
  spec.model = load_model_spec(o.model_path);
  spec.scheme = parse_scheme(o.scheme);
  if (!o.steps.empty()) spec.grid = o.steps;
  spec.tolerances.epsilon1 = o.eps1;
  spec.tolerances.epsilon2 = o.eps2;
  spec.normalized = o.normalized;
  spec.seed = o.seed;
  spec.delta = o.delta;
  if (o.states == "cat") {
    spec.states = StateSource::kCatStates;
  } else if (o.states == "random") {
    spec.states = StateSource::kRandomMixture;
  } else {
    // cat states when the model has them and no low-rank error was requested
    const bool cat_ok = spec.model.type == "ising" && spec.model.d >= 3;
    spec.states = cat_ok && !o.delta_given ? StateSource::kCatStates : StateSource::kRandomMixture;
  }
  spec.reference.gap_tolerance = o.ref_gap;
  if (!o.cache.empty()) {
    spec.cache_dir = o.cache;
  } else if (std::getenv(ReferenceCache::kEnvVar)) {
    spec.cache_dir = ReferenceCache::default_directory();
  }
  return spec;
}

/// Writes `body` to <out>/<name> or to stdout.
template <class Writer>
void emit(const CommonOptions& o, const std::string& name, Writer&& body) {
  if (o.out.empty()) {
    body(std::cout);
    return;
  }
  fs::create_directories(o.out);
  const fs::path path = fs::path(o.out) / name;
  std::ofstream file(path);
  if (!file) throw Error("cannot write " + path.string());
  body(file);
  std::cerr << "wrote " << path.string() << '\n';
}

void emit_report(const CommonOptions& o, const std::string& stem, const ExperimentReport& rep) {
  if (o.format == "json") {
    emit(o, stem + ".json", [&](std::ostream& s) { s << to_json(rep).dump(2) << '\n'; });
    return;
  }
  emit(o, stem + ".csv", [&](std::ostream& s) { write_csv(s, rep); });
  // the fitted order and oracle stamp go to a sidecar (or stderr)
  const nlohmann::json meta = to_json(rep);
  nlohmann::json summary = meta;
  summary.erase("rows");
  if (o.out.empty()) {
    std::cerr << summary.dump() << '\n';
  } else {
    emit(o, stem + ".json", [&](std::ostream& s) { s << meta.dump(2) << '\n'; });
  }
}

std::string value_tag(double v) {
  std::string s = format_double(v);
  for (char& c : s) {
    if (c == '.') c = 'p';
  }
  return s;
}

int run_converge(const CommonOptions& o) {
  const ExperimentSpec spec = make_spec(o);
  const ExperimentReport rep = run_convergence(spec);
  emit_report(o, "converge-" + std::string(to_string(spec.scheme)), rep);
  std::cerr << "fitted order " << format_double(rep.order.slope) << " over " << rep.order.points
            << " points (oracle accuracy " << format_double(rep.reference_accuracy) << ")\n";
  return 0;
}

int run_series(const CommonOptions& o) {
  ExperimentSpec spec = make_spec(o);
  if (o.steps.empty()) spec.grid = {static_cast<int>(std::lround(spec.model.horizon / 0.1))};
  const SeriesReport rep = run_structure_series(spec);
  const std::string stem = "series-" + std::string(to_string(spec.scheme));
  if (o.format == "json") {
    emit(o, stem + ".json", [&](std::ostream& s) { s << to_json(rep).dump(2) << '\n'; });
  } else {
    emit(o, stem + ".csv", [&](std::ostream& s) { write_csv(s, rep); });
  }
  std::cerr << "min eigenvalue " << format_double(rep.min_eigenvalue()) << ", max |Tr - 1| "
            << format_double(rep.max_trace_drift()) << '\n';
  return 0;
}

int run_sweep(const CommonOptions& o, const std::string& vary, const std::vector<double>& values) {
  const ExperimentSpec spec = make_spec(o);
  const SweepParameter which = parse_sweep_parameter(vary);
  const SweepSummary sum = run_lowrank_sweep(spec, which, values);
  for (const auto& rep : sum.reports) {
    emit_report(o, "sweep-" + vary + "-" + value_tag(rep.swept_value), rep);
  }
  std::cerr << "plateau slope vs " << vary << ": " << format_double(sum.plateau_slope) << '\n';
  return 0;
}

int run_timing_cmd(const CommonOptions& o, const std::vector<int>& dims, const std::string& direction,
                   double target, int repeats) {
  TimingSpec spec;
  spec.dims = dims;
  spec.direction = direction == "backward" ? Direction::kBackward : Direction::kForward;
  spec.target_error = target;
  spec.repeats = repeats;
  spec.reference.gap_tolerance = o.ref_gap;
  if (!o.cache.empty()) spec.cache_dir = o.cache;
  if (!o.model_path.empty()) {
    const ModelSpec m = load_model_spec(o.model_path);
    spec.sites = m.sites;
    spec.a = m.a;
    spec.b = m.b;
    spec.gamma = m.rates.front();
    spec.horizon = m.horizon;
    spec.control = m.control;
  }
  const TimingReport rep = run_timing(spec, [](const TimingRow& r) {
    std::cerr << "m=" << r.m << " " << r.method << (r.dnf ? " DNF" : "") << " wall "
              << format_double(r.wall_s) << " s, error " << format_double(r.error) << '\n';
  });
  if (o.format == "json") {
    emit(o, "timing.json", [&](std::ostream& s) { s << to_json(rep).dump(2) << '\n'; });
  } else {
    emit(o, "timing.csv", [&](std::ostream& s) { write_csv(s, rep); });
  }
  return 0;
}

int run_check(std::uint64_t seed, int scale) {
  const auto results = run_property_suite(seed, scale);
  int passed = 0;
  for (const auto& r : results) {
    std::cout << (r.passed() ? "PASS " : "FAIL ") << r.name << ": " << r.trials << " checks, "
              << r.failures << " failures, worst slack " << format_double(r.worst_slack);
    if (!r.detail.empty()) std::cout << " [" << r.detail << "]";
    std::cout << '\n';
    passed += r.passed() ? 1 : 0;
  }
  std::cout << passed << " passed, " << results.size() - passed << " failed\n";
  return passed == static_cast<int>(results.size()) ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Exponential midpoint integrators for Lindblad equations"};
  app.require_subcommand(1);

  CommonOptions converge_opts, series_opts, sweep_opts, timing_opts;
  auto* converge = app.add_subcommand("converge", "errors against the reference over a step grid");
  add_common(converge, converge_opts);
  auto* series = app.add_subcommand("series", "per-step populations, trace and eigenvalues");
  add_common(series, series_opts);

  auto* sweep = app.add_subcommand("sweep", "low-rank tolerance sweep");
  add_common(sweep, sweep_opts);
  std::string vary;
  std::vector<double> values;
  sweep->add_option("--vary", vary, "delta | eps1 | eps2")->required();
  sweep->add_option("--values", values, "swept values")->delimiter(',')->required();

  auto* timing = app.add_subcommand("timing", "wall time at matched error for FREM, LREM and the dense solver");
  add_common(timing, timing_opts, false);
  std::vector<int> dims{4, 6, 8, 12};
  std::string direction = "forward";
  double target = 1e-3;
  int repeats = 5;
  timing->add_option("--dims", dims, "qudit dimensions d")->delimiter(',');
  timing->add_option("--direction", direction, "forward | backward")
      ->check(CLI::IsMember({"forward", "backward"}));
  timing->add_option("--target", target, "trace-norm error to match");
  timing->add_option("--repeats", repeats, "timed repetitions after one warm-up");

  auto* check = app.add_subcommand("check", "randomized invariant suite");
  std::uint64_t check_seed = 2024;
  int scale = 1;
  check->add_option("--seed", check_seed, "seed");
  check->add_option("--scale", scale, "multiplier on the trial counts");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  try {
    if (*converge) return run_converge(converge_opts);
    if (*series) return run_series(series_opts);
    if (*sweep) return run_sweep(sweep_opts, vary, values);
    if (*timing) return run_timing_cmd(timing_opts, dims, direction, target, repeats);
    if (*check) return run_check(check_seed, scale);
  } catch (const OracleFailure& e) {
    std::cerr << "oracle failure: " << e.what() << '\n';
    return 2;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}
