#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dplbfgs/data.hpp"
#include "dplbfgs/solver.hpp"

namespace dplbfgs {

enum class Method { dplbfgs, sparsa_direct };

struct RunSpec {
  std::string data_path;
  int k = 4;
  Method method = Method::dplbfgs;
  SolverConfig solver;  // eps1/m/c/mode/iteration budget for the run
  double t_initial = 1e-3;
  double t_byte = 1e-9;
  std::string out_dir = ".";
  // Recorded for provenance; the whole pipeline is deterministic, so the
  // seed only matters to external dataset generation.
  std::uint64_t seed = 0;
};

struct StepSizeHistogram {
  // (alpha, count) in decreasing alpha; alphas are exact powers of theta
  std::vector<std::pair<double, int>> buckets;
  double percent_unit = 0;
  double min_alpha = 1.0;
  int steps = 0;
};

StepSizeHistogram step_size_histogram(std::span<const TraceRow> trace);

// 64-bit FNV-1a over the dataset bytes mixed with the loss weight; the
// cached F* is keyed on it.
std::uint64_t reference_config_hash(const std::string& data_path, double c);

// High-accuracy F* with a side cache at "<data_path>.fstar". A cache entry
// with a different hash is recomputed.
double compute_reference(const LabeledDataset& data,
                         const std::string& data_path, double c);

struct BenchmarkOutput {
  SolveResult result;
  double fstar = 0;
  double comm_over_d = 0;  // ledger bytes / (8 d), exact
  std::string trace_csv;
  std::string hist_csv;
  std::string summary_csv;
  int exit_code = 0;  // 0 converged, 3 target not reached within budget
};

// Runs one method on one dataset, reporting relative error against the
// cached reference optimum. Emits trace.csv, alpha_hist.csv and appends a
// row to summary.csv in the output directory.
BenchmarkOutput run_benchmark(const RunSpec& spec);

}  // namespace dplbfgs
