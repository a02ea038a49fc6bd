#include <gtest/gtest.h>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <sys/wait.h>

namespace {

struct Result {
  int status = -1;
  std::string out;
};

// Runs the command-line driver with `args`, capturing stdout.
Result run_cli(const std::string& args) {
  const std::string cmd = std::string(LINDBLAD_CLI_PATH) + " " + args + " 2>/dev/null";
  Result r;
  FILE* pipe = popen(cmd.c_str(), "r");
  if (!pipe) return r;
  char buf[4096];
  while (std::fgets(buf, sizeof buf, pipe)) r.out += buf;
  const int raw = pclose(pipe);
  r.status = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
  return r;
}

std::string model(const char* name) { return std::string(LINDBLAD_MODELS_DIR) + "/" + name; }

}  // namespace

TEST(Cli, ConvergePrintsCsv) {
  const Result r = run_cli("converge --model " + model("qubit.json") + " --states random --steps 4,8");
  EXPECT_EQ(r.status, 1) << "random start states need m >= 4";
  const Result ok = run_cli("converge --model " + model("ising31.json") + " --steps 4,8,16");
  ASSERT_EQ(ok.status, 0);
  std::istringstream lines(ok.out);
  std::string header;
  std::getline(lines, header);
  EXPECT_EQ(header, "tau,error_trace,error_frob,min_eig,trace_drift,max_rank,wall_s");
  int rows = 0;
  for (std::string line; std::getline(lines, line);) ++rows;
  EXPECT_EQ(rows, 3);
}

TEST(Cli, SeriesWritesFiles) {
  const auto dir = std::filesystem::temp_directory_path() / "lindblad-cli-series";
  std::filesystem::remove_all(dir);
  const Result r = run_cli("series --model " + model("ising31.json") + " --scheme lrem-backward --steps 10 --out " +
                           dir.string());
  ASSERT_EQ(r.status, 0);
  EXPECT_TRUE(std::filesystem::exists(dir / "series-lrem-backward.csv"));
  std::filesystem::remove_all(dir);
}

TEST(Cli, InvalidInputExitsWithOne) {
  EXPECT_EQ(run_cli("").status, 1);
  EXPECT_EQ(run_cli("converge").status, 1);
  EXPECT_EQ(run_cli("converge --model /nonexistent.json").status, 1);
  EXPECT_EQ(run_cli("converge --model " + model("ising31.json") + " --bogus").status, 1);
  EXPECT_EQ(run_cli("converge --model " + model("ising31.json") + " --steps 8,4").status, 1);
  EXPECT_EQ(run_cli("converge --model " + model("ising31.json") + " --scheme euler").status, 1);
  EXPECT_EQ(run_cli("sweep --model " + model("ising31.json") + " --vary tau --values 1").status, 1);

  const auto bad = std::filesystem::temp_directory_path() / "lindblad-cli-bad.json";
  std::ofstream(bad) << "{\"type\": \"ising\", \"d\": 2";
  EXPECT_EQ(run_cli("converge --model " + bad.string()).status, 1);
  std::filesystem::remove(bad);
}

TEST(Cli, UncertifiedReferenceExitsWithTwo) {
  // a gap of 1 certifies nothing better than 1/15, far above the accuracy limit
  EXPECT_EQ(run_cli("converge --model " + model("ising31.json") + " --steps 4,8 --ref-gap 1").status, 2);
}
