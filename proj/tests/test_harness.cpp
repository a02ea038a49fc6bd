#include <gtest/gtest.h>

#include <cmath>
#include <sstream>
#include <string>

#include "lindblad/harness.hpp"

using namespace lindblad;

namespace {

ModelSpec small_chain(int d, int sites, double horizon = 1.0) {
  ModelSpec s;
  s.d = d;
  s.sites = sites;
  s.rates = {0.05};
  s.horizon = horizon;
  s.name = "chain";
  return s;
}

// CSV text without the wall-clock column.
std::string without_wall_times(const std::string& csv) {
  std::istringstream in(csv);
  std::string line;
  std::string out;
  while (std::getline(in, line)) {
    const auto last = line.rfind(',');
    out += line.substr(0, last) + '\n';
  }
  return out;
}

}  // namespace

TEST(FitOrder, ExactPowerLaw) {
  std::vector<double> taus{0.1, 0.05, 0.025, 0.0125};
  std::vector<double> errs;
  for (const double t : taus) errs.push_back(3.0 * t * t);
  const OrderFit fit = fit_order(taus, errs);
  EXPECT_NEAR(fit.slope, 2.0, 1e-12);
  EXPECT_NEAR(std::exp(fit.intercept), 3.0, 1e-10);
  EXPECT_EQ(fit.points, 4);
}

TEST(FitOrder, DropsPointsNearTheFloor) {
  std::vector<double> taus{0.1, 0.05, 0.025, 0.0125};
  std::vector<double> errs{1e-2, 2.5e-3, 1e-9, 1e-9};
  const OrderFit fit = fit_order(taus, errs, 1e-9);
  EXPECT_EQ(fit.points, 2);
  EXPECT_EQ(fit.dropped, 2);
  EXPECT_NEAR(fit.slope, 2.0, 1e-12);
  EXPECT_TRUE(std::isnan(fit_order({0.1}, {1.0}).slope));
  EXPECT_THROW(fit_order({0.1, 0.2}, {1.0}), DimensionError);
}

TEST(FormatDouble, ShortestRoundTrip) {
  EXPECT_EQ(format_double(0.1), "0.1");
  EXPECT_EQ(format_double(1e-10), "1e-10");
  EXPECT_EQ(format_double(2.0), "2");
  const double x = 0.1 + 0.2;
  EXPECT_EQ(std::stod(format_double(x)), x);
}

TEST(Scheme, NamesRoundTrip) {
  for (const Scheme s : {Scheme::kFremForward, Scheme::kFremBackward, Scheme::kLremForward, Scheme::kLremBackward}) {
    EXPECT_EQ(parse_scheme(to_string(s)), s);
  }
  EXPECT_THROW(parse_scheme("rk4"), ParameterError);
  EXPECT_TRUE(is_backward(Scheme::kLremBackward));
  EXPECT_TRUE(is_lowrank(Scheme::kLremForward));
  EXPECT_FALSE(is_lowrank(Scheme::kFremBackward));
}

TEST(ExperimentSpec, Validation) {
  ExperimentSpec spec;
  spec.model = small_chain(3, 1);
  spec.grid = {10, 10};
  EXPECT_THROW(spec.validate(), ParameterError);
  spec.grid = {};
  EXPECT_THROW(spec.validate(), ParameterError);
  spec.grid = {0, 4};
  EXPECT_THROW(spec.validate(), ParameterError);
  spec.grid = {4, 8};
  spec.delta = 2.0;
  EXPECT_THROW(spec.validate(), ParameterError);
  spec.delta = 0.0;
  EXPECT_NO_THROW(spec.validate());
}

TEST(Convergence, FremSecondOrderOnSmallChain) {
  for (const Scheme scheme : {Scheme::kFremForward, Scheme::kFremBackward}) {
    ExperimentSpec spec;
    spec.model = small_chain(3, 2);
    spec.scheme = scheme;
    spec.grid = {10, 20, 40, 80};
    const ExperimentReport rep = run_convergence(spec);
    ASSERT_EQ(rep.rows.size(), 4u);
    EXPECT_EQ(rep.dim, 9);
    EXPECT_NEAR(rep.order.slope, 2.0, 0.2) << to_string(scheme);
    EXPECT_LE(rep.reference_accuracy, kReferenceAccuracyLimit);
    for (const auto& r : rep.rows) {
      EXPECT_TRUE(r.reliable);
      EXPECT_LE(r.trace_drift, 1e-12);
      EXPECT_NEAR(r.tau, 1.0 / r.steps, 1e-15);
    }
  }
}

TEST(Convergence, CsvIsDeterministicApartFromWallTimes) {
  ExperimentSpec spec;
  spec.model = small_chain(3, 1);
  spec.scheme = Scheme::kLremForward;
  spec.grid = {4, 8};
  std::ostringstream a;
  std::ostringstream b;
  write_csv(a, run_convergence(spec));
  write_csv(b, run_convergence(spec));
  EXPECT_EQ(without_wall_times(a.str()), without_wall_times(b.str()));
  EXPECT_EQ(a.str().substr(0, a.str().find('\n')), kConvergenceHeader);
}

TEST(Convergence, JsonCarriesTheOracleStamp) {
  ExperimentSpec spec;
  spec.model = small_chain(3, 1);
  spec.grid = {4, 8};
  const nlohmann::json j = to_json(run_convergence(spec));
  EXPECT_EQ(j.at("oracle").at("method"), "rk4-fine");
  EXPECT_TRUE(j.contains("fitted_order"));
  EXPECT_EQ(j.at("rows").size(), 2u);
}

TEST(Series, FremPopulationsAndPositivity) {
  ExperimentSpec spec;
  spec.model = small_chain(3, 2, 2.0);
  spec.scheme = Scheme::kFremForward;
  spec.grid = {20};
  const SeriesReport rep = run_structure_series(spec);
  EXPECT_EQ(rep.rows.size(), 21u);
  EXPECT_EQ(rep.population_index, 7);
  EXPECT_GE(rep.min_eigenvalue(), -kPositivityTolerance);
  EXPECT_LE(rep.max_trace_drift(), 1e-12);
  spec.grid = {10, 20};
  EXPECT_THROW(run_structure_series(spec), ParameterError);
}

TEST(Series, LremRanksAndExactTrace) {
  ExperimentSpec spec;
  spec.model = small_chain(3, 2, 2.0);
  spec.scheme = Scheme::kLremBackward;
  spec.grid = {20};
  const SeriesReport rep = run_structure_series(spec);
  EXPECT_EQ(rep.rows.size(), 21u);
  EXPECT_LE(rep.max_trace_drift(), 1e-14);
  EXPECT_EQ(rep.rows.front().rank, 1);
  EXPECT_GE(rep.min_eigenvalue(), -1e-14);
}

TEST(Sweep, DeltaPlateausScaleWithDelta) {
  ExperimentSpec spec;
  spec.model = small_chain(2, 2);
  spec.scheme = Scheme::kLremForward;
  spec.grid = {40, 80};
  const SweepSummary sum = run_lowrank_sweep(spec, SweepParameter::kDelta, {1e-1, 1e-2});
  ASSERT_EQ(sum.reports.size(), 2u);
  EXPECT_EQ(sum.reports[0].swept, "delta");
  // plateau dominated by the start error; each level within 10x of delta
  for (const auto& rep : sum.reports) {
    EXPECT_GT(rep.plateau_level(), 0.1 * rep.swept_value);
    EXPECT_LT(rep.plateau_level(), 10.0 * rep.swept_value);
  }
  EXPECT_NEAR(sum.plateau_slope, 1.0, 0.3);
  EXPECT_THROW(run_lowrank_sweep(ExperimentSpec{}, SweepParameter::kDelta, {1e-2}), ParameterError);
  EXPECT_EQ(parse_sweep_parameter("eps2"), SweepParameter::kEpsilon2);
  EXPECT_THROW(parse_sweep_parameter("tau"), ParameterError);
}

TEST(Timing, SmallConfigurationProducesAllMethods) {
  TimingSpec spec;
  spec.dims = {3};
  spec.repeats = 1;
  spec.target_error = 1e-2;
  const TimingReport rep = run_timing(spec);
  ASSERT_EQ(rep.rows.size(), 3u);
  for (const char* method : {"frem", "lrem", "dense"}) {
    const TimingRow* r = rep.find(9, method);
    ASSERT_NE(r, nullptr) << method;
    EXPECT_FALSE(r->dnf) << method;
    EXPECT_LE(r->error, 1e-2) << method;
    EXPECT_GT(r->wall_s, 0.0) << method;
  }
  std::ostringstream csv;
  write_csv(csv, rep);
  EXPECT_EQ(csv.str().substr(0, csv.str().find('\n')), "d,m,method,resolution,error_trace,wall_s,max_rank,dnf");
}
