#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace dplbfgs {

// One nonzero of an instance column; feature indices are zero-based in
// memory, one-based on disk.
struct SparseEntry {
  std::int64_t feature;
  double value;
};

// A d x n design matrix stored column-major by instance, plus +/-1 labels.
struct LabeledDataset {
  std::int64_t n = 0;
  std::int64_t d = 0;
  std::vector<std::int64_t> offsets;  // n+1 prefix offsets into entries
  std::vector<SparseEntry> entries;   // ascending feature index per instance
  std::vector<std::int8_t> labels;    // strictly in {-1, +1}

  std::span<const SparseEntry> instance(std::int64_t i) const {
    return {entries.data() + offsets[i],
            static_cast<std::size_t>(offsets[i + 1] - offsets[i])};
  }
  std::int64_t nnz() const { return static_cast<std::int64_t>(entries.size()); }
};

struct ParseOptions {
  // Force the feature dimension; entries beyond it are a parse error.
  std::optional<std::int64_t> forced_dimension;
  // Raw label value -> normalized class. Defaults cover the common encodings
  // {0,-1} -> -1 and {1,+1,2} -> +1.
  std::vector<std::pair<double, int>> label_map = {
      {0.0, -1}, {-1.0, -1}, {1.0, +1}, {2.0, +1}};
};

LabeledDataset parse_libsvm(std::istream& in, const ParseOptions& opts = {});

// Reads a LIBSVM file; ".gz" paths are decompressed transparently.
LabeledDataset load_libsvm_file(const std::string& path,
                                const ParseOptions& opts = {});

void write_libsvm(const LabeledDataset& data, std::ostream& out);

// One worker's contiguous slice of instances. Shards are immutable views
// into the parent dataset, which must outlive them.
class LabeledShard {
 public:
  LabeledShard() = default;
  LabeledShard(const LabeledDataset* data, int worker_id,
               std::int64_t first_instance, std::int64_t count)
      : data_(data),
        worker_id_(worker_id),
        first_(first_instance),
        count_(count) {}

  int worker_id() const { return worker_id_; }
  std::int64_t size() const { return count_; }
  std::int64_t dim() const { return data_->d; }
  std::span<const SparseEntry> instance(std::int64_t local) const {
    return data_->instance(first_ + local);
  }
  double label(std::int64_t local) const {
    return static_cast<double>(data_->labels[first_ + local]);
  }

  // z = X_k^T w, one entry per local instance.
  void xt_w(std::span<const double> w, std::span<double> z) const;
  // out += X_k c, scattering per-instance coefficients onto features.
  void accumulate_xc(std::span<const double> c, std::span<double> out) const;

 private:
  const LabeledDataset* data_ = nullptr;
  int worker_id_ = 0;
  std::int64_t first_ = 0;
  std::int64_t count_ = 0;
};

// Instance i belongs to worker floor(i*K/n): contiguous, sizes within 1.
std::vector<LabeledShard> partition_instances(const LabeledDataset& data,
                                              int num_workers);

struct FeatureRange {
  std::int64_t begin = 0;
  std::int64_t end = 0;
  std::int64_t size() const { return end - begin; }
};

// Contiguous balanced cover of {0..d-1}; the first d%K workers get the
// extra feature. K > d leaves trailing ranges empty.
struct FeaturePartition {
  std::int64_t d = 0;
  int num_workers = 1;
  FeatureRange range(int worker) const;
};

FeaturePartition partition_features(std::int64_t d, int num_workers);

}  // namespace dplbfgs
