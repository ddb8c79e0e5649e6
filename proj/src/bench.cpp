#include "dplbfgs/bench.hpp"

#include <algorithm>
#include <charconv>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include <json.hpp>

#include "dplbfgs/errors.hpp"

namespace dplbfgs {

namespace {

std::string fmt(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  (void)ec;
  return std::string(buf, ptr);
}

std::uint64_t fnv1a(const void* bytes, std::size_t len, std::uint64_t h) {
  const auto* p = static_cast<const unsigned char*>(bytes);
  for (std::size_t i = 0; i < len; ++i) {
    h ^= p[i];
    h *= 1099511628211ull;
  }
  return h;
}

}  // namespace

StepSizeHistogram step_size_histogram(std::span<const TraceRow> trace) {
  StepSizeHistogram hist;
  std::map<double, int, std::greater<double>> buckets;
  int unit = 0;
  for (const auto& row : trace) {
    ++buckets[row.alpha];
    if (row.alpha == 1.0) ++unit;
    hist.min_alpha = hist.steps == 0 ? row.alpha
                                     : std::min(hist.min_alpha, row.alpha);
    ++hist.steps;
  }
  hist.buckets.assign(buckets.begin(), buckets.end());
  hist.percent_unit =
      hist.steps == 0 ? 0.0 : static_cast<double>(unit) / hist.steps;
  return hist;
}

std::uint64_t reference_config_hash(const std::string& data_path, double c) {
  std::ifstream in(data_path, std::ios::binary);
  if (!in) throw Error("dataset not found: " + data_path);
  std::uint64_t h = 14695981039346656037ull;
  char buf[1 << 16];
  while (in.read(buf, sizeof(buf)) || in.gcount() > 0) {
    h = fnv1a(buf, static_cast<std::size_t>(in.gcount()), h);
    if (!in) break;
  }
  h = fnv1a(&c, sizeof(c), h);
  return h;
}

double compute_reference(const LabeledDataset& data,
                         const std::string& data_path, double c) {
  const std::string cache_path = data_path + ".fstar";
  const std::uint64_t hash = reference_config_hash(data_path, c);
  if (std::filesystem::exists(cache_path)) {
    std::ifstream in(cache_path);
    try {
      nlohmann::json j;
      in >> j;
      if (j.at("config_hash").get<std::uint64_t>() == hash)
        return j.at("fstar").get<double>();
    } catch (const nlohmann::json::exception&) {
      // unreadable cache: fall through and recompute
    }
  }
  SolverConfig cfg;
  cfg.c = c;
  cfg.eps1 = 1e-3;
  cfg.prox_grad_tol = 1e-10;
  // The proximal-gradient-norm target can sit below the evaluation noise
  // floor of large instances; the stall exit and iteration cap bound the
  // reference cost while pinning F* far beyond the 1e-3 relative scale the
  // benchmarks compare at.
  cfg.max_outer_iters = 500;
  cfg.stall_window = 25;
  cfg.stall_rel_tol = 1e-14;
  SolveResult res = solve(data, cfg, /*K=*/1);
  double fstar = res.final_f;
  nlohmann::json j;
  j["config_hash"] = hash;
  j["fstar"] = fstar;
  std::ofstream out(cache_path);
  out << j.dump(2) << '\n';
  return fstar;
}

BenchmarkOutput run_benchmark(const RunSpec& spec) {
  LabeledDataset data = load_libsvm_file(spec.data_path);
  std::filesystem::create_directories(spec.out_dir);

  BenchmarkOutput out;
  out.fstar = compute_reference(data, spec.data_path, spec.solver.c);

  CostParams cost{spec.t_initial, spec.t_byte};
  if (spec.method == Method::dplbfgs) {
    SolverConfig cfg = spec.solver;
    cfg.fstar = out.fstar;
    out.result = solve(data, cfg, spec.k, cost);
  } else {
    DirectSparsaConfig cfg;
    cfg.c = spec.solver.c;
    cfg.beta = spec.solver.beta;
    cfg.sigma0 = spec.solver.sigma0;
    cfg.max_iters = spec.solver.max_outer_iters;
    cfg.rel_tol = spec.solver.rel_tol;
    cfg.fstar = out.fstar;
    out.result = solve_direct_sparsa(data, cfg, spec.k, cost);
  }
  const SolveResult& res = out.result;
  const double denom = 8.0 * static_cast<double>(data.d);
  out.comm_over_d = static_cast<double>(res.bytes) / denom;

  auto rel_err = [&](double f) { return (f - out.fstar) / out.fstar; };

  out.trace_csv = spec.out_dir + "/trace.csv";
  {
    std::ofstream csv(out.trace_csv);
    csv << "iter,F,rel_err,comm_over_d,modeled_time_s,wall_time_s,alpha,"
           "inner_iters\n";
    csv << "0," << fmt(res.initial_f) << ',' << fmt(rel_err(res.initial_f))
        << ',' << fmt(static_cast<double>(res.initial_bytes) / denom) << ','
        << fmt(res.initial_modeled_s) << ",0,1,0\n";
    for (const auto& row : res.trace)
      csv << row.iter << ',' << fmt(row.f) << ',' << fmt(rel_err(row.f))
          << ',' << fmt(static_cast<double>(row.bytes) / denom) << ','
          << fmt(row.modeled_s) << ',' << fmt(row.wall_s) << ','
          << fmt(row.alpha) << ',' << row.inner_iters << '\n';
  }

  StepSizeHistogram hist = step_size_histogram(res.trace);
  out.hist_csv = spec.out_dir + "/alpha_hist.csv";
  {
    std::ofstream csv(out.hist_csv);
    csv << "alpha,count\n";
    for (const auto& [alpha, count] : hist.buckets)
      csv << fmt(alpha) << ',' << count << '\n';
  }

  out.summary_csv = spec.out_dir + "/summary.csv";
  {
    bool fresh = !std::filesystem::exists(out.summary_csv);
    std::ofstream csv(out.summary_csv, std::ios::app);
    if (fresh)
      csv << "method,eps1,k,mode,status,iterations,comm_over_d,"
             "modeled_time_s,wall_time_s,percent_unit_alpha,min_alpha,seed\n";
    csv << (spec.method == Method::dplbfgs ? "dplbfgs" : "sparsa") << ','
        << fmt(spec.solver.eps1) << ',' << spec.k << ','
        << (spec.solver.mode == SubproblemMode::partitioned ? "partitioned"
                                                            : "replicated")
        << ','
        << (res.status == SolveStatus::target_met
                ? "target_met"
                : res.status == SolveStatus::stationary ? "stationary"
                                                        : "max_iters")
        << ',' << res.trace.size() << ',' << fmt(out.comm_over_d) << ','
        << fmt(res.modeled_s) << ',' << fmt(res.wall_s) << ','
        << fmt(hist.percent_unit) << ',' << fmt(hist.min_alpha) << ','
        << spec.seed << '\n';
  }

  out.exit_code = res.status == SolveStatus::target_met ? 0 : 3;
  return out;
}

}  // namespace dplbfgs
