#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "lindblad/model_io.hpp"
#include "lindblad/oracle.hpp"
#include "lindblad/properties.hpp"
#include "oracles.hpp"

using namespace lindblad;

namespace {

LindbladModel amplitude_damping_model(double g) {
  ComplexMatrix l = ComplexMatrix::Zero(2, 2);
  l(0, 1) = 1.0;
  return LindbladModel(2, [](double) { return ComplexMatrix::Zero(2, 2); }, {l}, {constant_function(g)}, true);
}

DensityMatrix qubit_state() {
  ComplexMatrix rho(2, 2);
  rho << 0.4, Complex{0.1, 0.25}, Complex{0.1, -0.25}, 0.6;
  return DensityMatrix(rho);
}

// Constant-coefficient model: Ising chain with a constant control value.
LindbladModel constant_chain(int d, int sites, double u) {
  ModelSpec s;
  s.d = d;
  s.sites = sites;
  s.rates = {0.05};
  s.control.kind = "constant";
  s.control.value = u;
  return build_model(s);
}

std::filesystem::path scratch_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("lindblad-test-" + name);
  std::filesystem::remove_all(dir);
  return dir;
}

}  // namespace

TEST(Reference, AmplitudeDampingClosedForm) {
  const LindbladModel model = amplitude_damping_model(1.0);
  const DensityMatrix rho = qubit_state();
  const ReferenceSolution f = reference_forward(model, rho, 1.0);
  EXPECT_LE(trace_norm(f.state.matrix() - oracle::amplitude_damping(rho.matrix(), 1.0, 1.0)), 1e-10);
  EXPECT_LE(f.estimated_accuracy, kReferenceAccuracyLimit);
  EXPECT_EQ(f.method, ReferenceMethod::kRk4Fine);
  const ReferenceSolution b = reference_backward(model, rho, 1.0);
  EXPECT_LE(trace_norm(b.state.matrix() - oracle::amplitude_damping_adjoint(rho.matrix(), 1.0, 1.0)), 1e-10);

  const ReferenceSolution l = liouvillian_reference(model, rho.matrix(), 1.0, Direction::kForward);
  EXPECT_LE(trace_norm(l.state.matrix() - oracle::amplitude_damping(rho.matrix(), 1.0, 1.0)), 1e-13);
  const ReferenceSolution lb = liouvillian_reference(model, rho.matrix(), 1.0, Direction::kBackward);
  EXPECT_LE(trace_norm(lb.state.matrix() - oracle::amplitude_damping_adjoint(rho.matrix(), 1.0, 1.0)), 1e-13);
}

TEST(Reference, UnitaryClosedForm) {
  std::mt19937_64 rng(40);
  const ComplexMatrix h = oracle::random_hermitian(rng, 4);
  const LindbladModel model(4, [h](double) { return h; }, {}, {}, true);
  const DensityMatrix rho(oracle::random_density(rng, 4, 2));
  const ReferenceSolution f = reference_forward(model, rho, 2.0);
  EXPECT_LE(trace_norm(f.state.matrix() - oracle::unitary_evolution(h, rho.matrix(), 2.0)), 1e-10);
}

TEST(Reference, TimeDependentAgreesWithIndependentRk4) {
  const LindbladModel model = build_ising_chain(3, 1, 1.5, 1.0, 0.3, sine_control());
  const DensityMatrix rho(paper_initial_state(3, 1));
  const ReferenceSolution f = reference_forward(model, rho, 1.0);
  EXPECT_LE(trace_norm(f.state.matrix() - oracle::rk4_lindblad(model, rho.matrix(), 1.0, 20000)), 1e-10);
  const ReferenceSolution b = reference_backward(model, rho, 1.0);
  EXPECT_LE(trace_norm(b.state.matrix() - oracle::rk4_lindblad(model, rho.matrix(), 1.0, 20000, true)), 1e-10);
}

TEST(Liouvillian, MatchesMatrixFormGenerator) {
  std::mt19937_64 rng(41);
  RandomModels gen(41);
  const LindbladModel model = gen.model(4, 2);
  const ComplexMatrix rho = oracle::random_hermitian(rng, 4);
  const double t = 0.3;
  const ComplexMatrix a = build_A(model, t);
  const ComplexMatrix direct = a * rho + rho * a.adjoint() + apply_forward_channel(model, t, rho);
  const ComplexVector lv = build_liouvillian(model, t) * vectorize(rho);
  EXPECT_LE((unvectorize(lv, 4) - direct).norm(), 1e-12);
  // trace preservation: vec(I)^H L = 0
  const ComplexVector id = vectorize(ComplexMatrix::Identity(4, 4));
  EXPECT_LE((id.adjoint() * build_liouvillian(model, t)).norm(), 1e-12);
}

TEST(Liouvillian, GuardsDimensionAndTimeDependence) {
  const LindbladModel big = constant_chain(3, 4, 0.0);  // m = 81
  EXPECT_THROW(build_liouvillian(big, 0.0), ParameterError);
  const LindbladModel driven = build_ising_chain(2, 1, 1.5, 1.0, 0.05, sine_control());
  EXPECT_THROW(liouvillian_reference(driven, ComplexMatrix::Identity(2, 2) / 2.0, 1.0, Direction::kForward),
               ContractError);
}

TEST(Reference, Rk4AgreesWithLiouvillianOnConstantModels) {
  for (const auto& [d, sites] : std::vector<std::pair<int, int>>{{2, 1}, {3, 1}, {2, 2}, {4, 2}}) {
    const LindbladModel model = constant_chain(d, sites, 0.7);
    const Index m = model.dim();
    std::mt19937_64 rng(static_cast<std::uint64_t>(m));
    const DensityMatrix rho(oracle::random_density(rng, m, 2));
    for (const Direction dir : {Direction::kForward, Direction::kBackward}) {
      const ReferenceSolution rk = dir == Direction::kForward ? reference_forward(model, rho, 1.0)
                                                              : reference_backward(model, rho, 1.0);
      const ReferenceSolution lv = liouvillian_reference(model, rho.matrix(), 1.0, dir);
      EXPECT_LE(trace_norm(rk.state.matrix() - lv.state.matrix()), 1e-9) << "m=" << m;
    }
  }
}

TEST(Reference, Rk4IsFourthOrder) {
  const LindbladModel model = build_ising_chain(2, 2, 1.5, 1.0, 0.2, sine_control());
  const ComplexMatrix rho = paper_initial_state(2, 2).matrix();
  const ComplexMatrix fine = oracle::rk4_lindblad(model, rho, 1.0, 4000);
  std::vector<double> err;
  for (const int n : {10, 20, 40}) {
    err.push_back(trace_norm(rk4_trajectory(model, rho, 1.0, 1, n, Direction::kForward).back() - fine));
  }
  EXPECT_NEAR(std::log2(err[0] / err[1]), 4.0, 0.3);
  EXPECT_NEAR(std::log2(err[1] / err[2]), 4.0, 0.3);
}

TEST(Reference, FailsWhenTheBudgetIsTooSmall) {
  const LindbladModel model = build_ising_chain(2, 1, 1.5, 1.0, 0.05, sine_control());
  ReferenceOptions opt;
  opt.gap_tolerance = 1e-14;
  opt.max_substeps = 64;
  EXPECT_THROW(reference_forward(model, qubit_state(), 1.0, opt), OracleFailure);
  // a loose gap is accepted only if the implied accuracy meets the limit
  ReferenceOptions loose;
  loose.gap_tolerance = 1.0;
  loose.initial_substeps = 2;
  EXPECT_THROW(reference_forward(model, qubit_state(), 1.0, loose), OracleFailure);
}

TEST(Duality, PairingIsConservedAlongExactSolutions) {
  const LindbladModel model = build_ising_chain(3, 1, 1.5, 1.0, 0.2, sine_control());
  const ComplexMatrix rho = paper_initial_state(3, 1).matrix();
  const ComplexMatrix q = paper_terminal_state(3, 1).matrix();
  const auto fwd = rk4_trajectory(model, rho, 1.0, 10, 200, Direction::kForward);
  const auto bwd = rk4_trajectory(model, q, 1.0, 10, 200, Direction::kBackward);
  ASSERT_EQ(fwd.size(), 11u);
  EXPECT_LE(check_duality(fwd, bwd), 1e-10);
  // states on different grids are rejected
  const auto shorter = rk4_trajectory(model, q, 1.0, 5, 200, Direction::kBackward);
  EXPECT_THROW(check_duality(fwd, shorter), ContractError);
}

TEST(Dopri5, ConvergesToTheReference) {
  const LindbladModel model = build_ising_chain(3, 1, 1.5, 1.0, 0.3, sine_control());
  const ComplexMatrix rho = paper_initial_state(3, 1).matrix();
  const ComplexMatrix ref = oracle::rk4_lindblad(model, rho, 1.0, 20000);
  const AdaptiveRunResult loose = dopri5_propagate(model, rho, 1.0, Direction::kForward, 1e-4, 1e-4);
  const AdaptiveRunResult tight = dopri5_propagate(model, rho, 1.0, Direction::kForward, 1e-10, 1e-10);
  EXPECT_LE(trace_norm(tight.state - ref), 1e-8);
  EXPECT_LT(trace_norm(tight.state - ref), trace_norm(loose.state - ref));
  EXPECT_GT(tight.accepted_steps, loose.accepted_steps);
  EXPECT_THROW(dopri5_propagate(model, rho, 1.0, Direction::kForward, 1e-12, 1e-12, 5), OracleFailure);
}

TEST(ReferenceCache, RoundTripAndBinaryLayout) {
  const auto dir = scratch_dir("cache");
  const ReferenceCache cache(dir);
  const LindbladModel model = amplitude_damping_model(1.0);
  const DensityMatrix rho = qubit_state();
  const ReferenceSolution first = cached_reference(model, rho, 1.0, Direction::kForward, {}, &cache);
  const std::string key = reference_key(model, rho.matrix(), 1.0, Direction::kForward, 1e-10);
  ASSERT_TRUE(std::filesystem::exists(dir / (key + ".bin")));
  ASSERT_TRUE(std::filesystem::exists(dir / (key + ".json")));
  EXPECT_EQ(std::filesystem::file_size(dir / (key + ".bin")), 16u + 4u * 16u);

  // header: two little-endian uint64 dimensions
  std::ifstream in(dir / (key + ".bin"), std::ios::binary);
  unsigned char head[16];
  in.read(reinterpret_cast<char*>(head), 16);
  EXPECT_EQ(head[0], 2);
  EXPECT_EQ(head[8], 2);
  for (int i = 1; i < 8; ++i) EXPECT_EQ(head[i], 0);

  const auto hit = cache.load(key);
  ASSERT_TRUE(hit.has_value());
  EXPECT_EQ(hit->state.matrix(), first.state.matrix());
  EXPECT_EQ(hit->substeps, first.substeps);

  // other directions and tolerances get other keys
  EXPECT_NE(key, reference_key(model, rho.matrix(), 1.0, Direction::kBackward, 1e-10));
  EXPECT_NE(key, reference_key(model, rho.matrix(), 1.0, Direction::kForward, 1e-8));
  std::filesystem::remove_all(dir);
}

TEST(ReferenceCache, CorruptEntriesAreRecomputed) {
  const auto dir = scratch_dir("corrupt");
  const ReferenceCache cache(dir);
  const LindbladModel model = amplitude_damping_model(1.0);
  const DensityMatrix rho = qubit_state();
  const std::string key = reference_key(model, rho.matrix(), 1.0, Direction::kForward, 1e-10);
  std::filesystem::create_directories(dir);
  std::ofstream(dir / (key + ".bin")) << "garbage";
  std::ofstream(dir / (key + ".json")) << "{}";
  EXPECT_FALSE(cache.load(key).has_value());
  const ReferenceSolution s = cached_reference(model, rho, 1.0, Direction::kForward, {}, &cache);
  EXPECT_LE(trace_norm(s.state.matrix() - oracle::amplitude_damping(rho.matrix(), 1.0, 1.0)), 1e-10);
  std::filesystem::remove_all(dir);
}
