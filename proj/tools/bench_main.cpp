#include <filesystem>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "dplbfgs/bench.hpp"
#include "dplbfgs/errors.hpp"

int main(int argc, char** argv) {
  CLI::App app{
      "Distributed proximal LBFGS benchmark runner for L1-regularized "
      "logistic regression"};

  dplbfgs::RunSpec spec;
  std::string method = "dplbfgs";
  std::string mode = "partitioned";
  int max_iters = -1;

  app.add_option("--data", spec.data_path, "LIBSVM dataset path (.gz ok)")
      ->required();
  app.add_option("--k", spec.k, "number of simulated workers")
      ->check(CLI::PositiveNumber);
  app.add_option("--method", method, "dplbfgs | sparsa")
      ->check(CLI::IsMember({"dplbfgs", "sparsa"}));
  app.add_option("--eps1", spec.solver.eps1,
                 "relative step tolerance of the inner solver");
  app.add_option("--m", spec.solver.m, "LBFGS history size")
      ->check(CLI::PositiveNumber);
  app.add_option("--c", spec.solver.c, "loss weight C");
  app.add_option("--max-iters", max_iters, "iteration budget");
  app.add_option("--tinit", spec.t_initial, "modeled seconds per round");
  app.add_option("--tbyte", spec.t_byte, "modeled seconds per byte");
  app.add_option("--out", spec.out_dir, "output directory for CSV files");
  app.add_option("--seed", spec.seed, "recorded in summary.csv");
  app.add_option("--mode", mode, "partitioned | replicated")
      ->check(CLI::IsMember({"partitioned", "replicated"}));

  CLI11_PARSE(app, argc, argv);

  if (!std::filesystem::exists(spec.data_path)) {
    std::cerr << "dataset not found: " << spec.data_path << "\n";
    return 2;
  }
  spec.method = method == "dplbfgs" ? dplbfgs::Method::dplbfgs
                                    : dplbfgs::Method::sparsa_direct;
  spec.solver.mode = mode == "partitioned"
                         ? dplbfgs::SubproblemMode::partitioned
                         : dplbfgs::SubproblemMode::replicated;
  if (max_iters >= 0) spec.solver.max_outer_iters = max_iters;

  try {
    dplbfgs::BenchmarkOutput out = dplbfgs::run_benchmark(spec);
    const auto& res = out.result;
    std::cout << "method=" << method << " status="
              << (res.status == dplbfgs::SolveStatus::target_met
                      ? "target_met"
                      : res.status == dplbfgs::SolveStatus::stationary
                            ? "stationary"
                            : "max_iters")
              << " iterations=" << res.trace.size() << " F=" << res.final_f
              << " fstar=" << out.fstar << " comm_over_d=" << out.comm_over_d
              << " modeled_s=" << res.modeled_s << " wall_s=" << res.wall_s
              << "\n";
    std::cout << "trace: " << out.trace_csv << "\n";
    if (out.exit_code != 0)
      std::cerr << "target not reached within budget; partial trace written\n";
    return out.exit_code;
  } catch (const dplbfgs::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
