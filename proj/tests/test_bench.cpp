#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "dplbfgs/bench.hpp"
#include "dplbfgs/data.hpp"
#include "dplbfgs/synth.hpp"

using namespace dplbfgs;

namespace {

struct TempDir {
  std::filesystem::path path;
  explicit TempDir(const std::string& name)
      : path(std::filesystem::temp_directory_path() / name) {
    std::filesystem::remove_all(path);
    std::filesystem::create_directories(path);
  }
  ~TempDir() { std::filesystem::remove_all(path); }
};

std::string write_dataset(const std::filesystem::path& dir,
                          const LabeledDataset& data) {
  auto file = dir / "data.svm";
  std::ofstream out(file);
  write_libsvm(data, out);
  return file.string();
}

std::vector<std::vector<std::string>> read_csv(const std::string& path) {
  std::ifstream in(path);
  REQUIRE(in.good());
  std::vector<std::vector<std::string>> rows;
  std::string line;
  while (std::getline(in, line)) {
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    rows.push_back(cells);
  }
  return rows;
}

int run_cli(const std::string& args) {
  std::string cmd = std::string(DPLBFGS_CLI_PATH) + " " + args +
                    " > /dev/null 2> /dev/null";
  int rc = std::system(cmd.c_str());
  return WEXITSTATUS(rc);
}

}  // namespace

TEST_CASE("step size histogram") {
  SUBCASE("counts, unit fraction and minimum") {
    std::vector<TraceRow> trace(4);
    trace[0].alpha = 1.0;
    trace[1].alpha = 1.0;
    trace[2].alpha = 0.5;
    trace[3].alpha = 1.0;
    auto hist = step_size_histogram(trace);
    CHECK(hist.steps == 4);
    CHECK(hist.percent_unit == doctest::Approx(0.75));
    CHECK(hist.min_alpha == 0.5);
    REQUIRE(hist.buckets.size() == 2);
    CHECK(hist.buckets[0].first == 1.0);
    CHECK(hist.buckets[0].second == 3);
    CHECK(hist.buckets[1].first == 0.5);
    CHECK(hist.buckets[1].second == 1);
  }
  SUBCASE("empty trace") {
    auto hist = step_size_histogram({});
    CHECK(hist.steps == 0);
    CHECK(hist.percent_unit == 0.0);
  }
}

TEST_CASE("reference cache hits on identical config and misses on changes") {
  TempDir dir("dplbfgs_test_cache");
  auto data = make_sparse_dataset(120, 40, 5, 31);
  auto path = write_dataset(dir.path, data);

  double f1 = compute_reference(data, path, 1.0);
  auto cache_time =
      std::filesystem::last_write_time(path + ".fstar");
  double f2 = compute_reference(data, path, 1.0);
  CHECK(f1 == f2);  // bitwise: served from the cache
  CHECK(std::filesystem::last_write_time(path + ".fstar") == cache_time);

  // different C -> different hash -> recompute
  double f3 = compute_reference(data, path, 0.5);
  CHECK(f3 != f1);
  CHECK(std::filesystem::last_write_time(path + ".fstar") != cache_time);
}

TEST_CASE("run_benchmark emits the spec CSV with exact comm accounting") {
  TempDir dir("dplbfgs_test_run");
  auto data = make_sparse_dataset(300, 100, 8, 17);
  auto path = write_dataset(dir.path, data);

  RunSpec spec;
  spec.data_path = path;
  spec.k = 2;
  spec.out_dir = (dir.path / "out").string();
  spec.solver.max_outer_iters = 400;
  auto out = run_benchmark(spec);
  CHECK(out.exit_code == 0);

  auto rows = read_csv(out.trace_csv);
  REQUIRE(rows.size() >= 3);
  CHECK(rows[0] ==
        std::vector<std::string>{"iter", "F", "rel_err", "comm_over_d",
                                 "modeled_time_s", "wall_time_s", "alpha",
                                 "inner_iters"});
  // iter column counts from 0, rel_err nonincreasing, comm nondecreasing
  double prev_rel = 1e300, prev_comm = -1;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    REQUIRE(rows[i].size() == 8);
    CHECK(std::stol(rows[i][0]) == static_cast<long>(i - 1));
    double rel = std::stod(rows[i][2]);
    double comm = std::stod(rows[i][3]);
    CHECK(rel <= prev_rel);
    CHECK(comm >= prev_comm);
    prev_rel = rel;
    prev_comm = comm;
  }
  // final row's comm_over_d equals ledger bytes / (8 d) exactly
  CHECK(std::stod(rows.back()[3]) ==
        static_cast<double>(out.result.bytes) / (8.0 * data.d));
  CHECK(out.comm_over_d ==
        static_cast<double>(out.result.bytes) / (8.0 * data.d));

  // summary row appended with the run
  auto summary = read_csv(out.summary_csv);
  REQUIRE(summary.size() == 2);
  CHECK(summary[1][0] == "dplbfgs");
  CHECK(summary[1][4] == "target_met");

  // histogram file exists and counts all steps
  auto hist = read_csv(out.hist_csv);
  REQUIRE(hist.size() >= 2);
  long total = 0;
  for (std::size_t i = 1; i < hist.size(); ++i)
    total += std::stol(hist[i][1]);
  CHECK(total == static_cast<long>(out.result.trace.size()));
}

TEST_CASE("cli: missing dataset exits 2") {
  CHECK(run_cli("--data /nonexistent/nope.svm --out /tmp/x") == 2);
}

TEST_CASE("cli: non-convergence within budget exits 3 and writes a partial "
          "trace") {
  TempDir dir("dplbfgs_test_budget");
  auto data = make_sparse_dataset(400, 120, 8, 53);
  auto path = write_dataset(dir.path, data);
  auto out_dir = (dir.path / "out").string();
  // one outer iteration cannot reach rel_err 1e-3
  int rc = run_cli("--data " + path + " --k 2 --max-iters 1 --out " +
                   out_dir);
  CHECK(rc == 3);
  auto rows = read_csv(out_dir + "/trace.csv");
  CHECK(rows.size() == 3);  // header + initial row + one step
}

TEST_CASE("cli: a full run exits 0 and is reproducible") {
  TempDir dir("dplbfgs_test_cli");
  auto data = make_sparse_dataset(250, 90, 6, 71);
  auto path = write_dataset(dir.path, data);
  auto out1 = (dir.path / "out1").string();
  auto out2 = (dir.path / "out2").string();
  REQUIRE(run_cli("--data " + path + " --k 2 --out " + out1) == 0);
  REQUIRE(run_cli("--data " + path + " --k 2 --out " + out2) == 0);
  auto a = read_csv(out1 + "/trace.csv");
  auto b = read_csv(out2 + "/trace.csv");
  REQUIRE(a.size() == b.size());
  // deterministic columns agree exactly; wall time may differ
  for (std::size_t i = 1; i < a.size(); ++i) {
    CHECK(a[i][0] == b[i][0]);
    CHECK(a[i][1] == b[i][1]);
    CHECK(a[i][2] == b[i][2]);
    CHECK(a[i][3] == b[i][3]);
    CHECK(a[i][6] == b[i][6]);
    CHECK(a[i][7] == b[i][7]);
  }
}

TEST_CASE("cli: gen tool output round-trips through the parser") {
  TempDir dir("dplbfgs_test_gen");
  auto path = (dir.path / "gen.svm").string();
  std::string cmd = std::string(DPLBFGS_GEN_PATH) +
                    " --kind sparse --n 50 --d 30 --nnz 4 --seed 5 --out " +
                    path + " > /dev/null";
  REQUIRE(WEXITSTATUS(std::system(cmd.c_str())) == 0);
  auto data = load_libsvm_file(path);
  CHECK(data.n == 50);
  CHECK(data.nnz() == 200);
}
