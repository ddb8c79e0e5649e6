#include <fstream>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "dplbfgs/data.hpp"
#include "dplbfgs/synth.hpp"

// Writes one of the bundled synthetic benchmark datasets in LIBSVM format.
int main(int argc, char** argv) {
  CLI::App app{"Synthetic dataset generator"};

  std::string kind = "sparse";
  std::int64_t n = 2000;
  std::int64_t d = 500;
  int nnz = 20;
  std::uint64_t seed = 0;
  double decades = 0.0;
  std::string out;

  app.add_option("--kind", kind, "sparse | dense")
      ->check(CLI::IsMember({"sparse", "dense"}));
  app.add_option("--n", n, "instance count")->check(CLI::PositiveNumber);
  app.add_option("--d", d, "feature dimension")->check(CLI::PositiveNumber);
  app.add_option("--nnz", nnz, "nonzeros per instance (sparse kind)");
  app.add_option("--scale-decades", decades,
                 "per-feature magnitude spread (sparse kind)");
  app.add_option("--seed", seed, "generator seed");
  app.add_option("--out", out, "output path")->required();

  CLI11_PARSE(app, argc, argv);

  dplbfgs::LabeledDataset data =
      kind == "sparse"
          ? dplbfgs::make_sparse_dataset(n, d, nnz, seed, decades)
          : dplbfgs::make_dense_dataset(n, d, seed);
  std::ofstream f(out);
  if (!f) {
    std::cerr << "cannot open " << out << "\n";
    return 1;
  }
  dplbfgs::write_libsvm(data, f);
  std::cout << "wrote " << out << ": n=" << data.n << " d=" << data.d
            << " nnz=" << data.nnz() << "\n";
  return 0;
}
