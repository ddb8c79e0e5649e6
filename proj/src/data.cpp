#include "dplbfgs/data.hpp"

#include <zlib.h>

#include <charconv>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include "dplbfgs/errors.hpp"

namespace dplbfgs {

namespace {

std::string_view strip_cr(std::string_view line) {
  if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
  return line;
}

double parse_double(std::string_view tok, long line_no, const char* what) {
  // from_chars does not accept an explicit plus sign, LIBSVM labels do
  std::string_view body = tok;
  if (body.size() > 1 && body.front() == '+') body.remove_prefix(1);
  double v = 0;
  auto [ptr, ec] = std::from_chars(body.data(), body.data() + body.size(), v);
  if (ec != std::errc() || ptr != body.data() + body.size())
    throw ParseError(std::string("malformed ") + what + " '" +
                         std::string(tok) + "'",
                     line_no);
  return v;
}

std::int64_t parse_index(std::string_view tok, long line_no) {
  std::int64_t v = 0;
  auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (ec != std::errc() || ptr != tok.data() + tok.size())
    throw ParseError("malformed feature index '" + std::string(tok) + "'",
                     line_no);
  return v;
}

}  // namespace

LabeledDataset parse_libsvm(std::istream& in, const ParseOptions& opts) {
  LabeledDataset data;
  data.offsets.push_back(0);
  std::int64_t max_index = 0;  // one-based
  std::string raw;
  long line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    std::string_view line = strip_cr(raw);
    if (line.empty()) continue;

    std::size_t pos = line.find_first_of(" \t");
    std::string_view label_tok = line.substr(0, pos);
    double raw_label = parse_double(label_tok, line_no, "label");
    int label = 0;
    for (const auto& [from, to] : opts.label_map)
      if (raw_label == from) {
        label = to;
        break;
      }
    if (label == 0)
      throw ParseError("label '" + std::string(label_tok) +
                           "' has no mapping to {-1,+1}",
                       line_no);

    std::int64_t prev_index = 0;
    while (pos != std::string_view::npos) {
      pos = line.find_first_not_of(" \t", pos);
      if (pos == std::string_view::npos) break;
      std::size_t end = line.find_first_of(" \t", pos);
      std::string_view tok = line.substr(pos, end - pos);
      pos = end;

      std::size_t colon = tok.find(':');
      if (colon == std::string_view::npos)
        throw ParseError("expected idx:value, got '" + std::string(tok) + "'",
                         line_no);
      std::int64_t index = parse_index(tok.substr(0, colon), line_no);
      double value =
          parse_double(tok.substr(colon + 1), line_no, "feature value");
      if (index < 1)
        throw ParseError("feature index must be >= 1", line_no);
      if (index <= prev_index)
        throw ParseError("feature indices must be strictly increasing",
                         line_no);
      if (opts.forced_dimension && index > *opts.forced_dimension)
        throw ParseError("feature index " + std::to_string(index) +
                             " exceeds configured dimension " +
                             std::to_string(*opts.forced_dimension),
                         line_no);
      prev_index = index;
      if (index > max_index) max_index = index;
      data.entries.push_back({index - 1, value});
    }
    data.labels.push_back(static_cast<std::int8_t>(label));
    data.offsets.push_back(static_cast<std::int64_t>(data.entries.size()));
  }
  data.n = static_cast<std::int64_t>(data.labels.size());
  data.d = opts.forced_dimension.value_or(max_index);
  return data;
}

LabeledDataset load_libsvm_file(const std::string& path,
                                const ParseOptions& opts) {
  if (!std::filesystem::exists(path))
    throw Error("dataset not found: " + path);
  if (path.size() > 3 && path.compare(path.size() - 3, 3, ".gz") == 0) {
    gzFile gz = gzopen(path.c_str(), "rb");
    if (!gz) throw Error("cannot open " + path);
    std::string content;
    char buf[1 << 16];
    int got;
    while ((got = gzread(gz, buf, sizeof(buf))) > 0)
      content.append(buf, static_cast<std::size_t>(got));
    bool failed = got < 0;
    gzclose(gz);
    if (failed) throw Error("gzip read error on " + path);
    std::istringstream in(content);
    return parse_libsvm(in, opts);
  }
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path);
  return parse_libsvm(in, opts);
}

void write_libsvm(const LabeledDataset& data, std::ostream& out) {
  char num[64];
  for (std::int64_t i = 0; i < data.n; ++i) {
    out << (data.labels[i] > 0 ? "+1" : "-1");
    for (const auto& e : data.instance(i)) {
      auto [ptr, ec] = std::to_chars(num, num + sizeof(num), e.value);
      out << ' ' << (e.feature + 1) << ':'
          << std::string_view(num, static_cast<std::size_t>(ptr - num));
      (void)ec;
    }
    out << '\n';
  }
}

void LabeledShard::xt_w(std::span<const double> w,
                        std::span<double> z) const {
  for (std::int64_t i = 0; i < count_; ++i) {
    double s = 0;
    for (const auto& e : instance(i)) s += w[e.feature] * e.value;
    z[i] = s;
  }
}

void LabeledShard::accumulate_xc(std::span<const double> c,
                                 std::span<double> out) const {
  for (std::int64_t i = 0; i < count_; ++i) {
    double ci = c[i];
    if (ci == 0) continue;
    for (const auto& e : instance(i)) out[e.feature] += ci * e.value;
  }
}

std::vector<LabeledShard> partition_instances(const LabeledDataset& data,
                                              int num_workers) {
  if (num_workers < 1) throw Error("worker count must be >= 1");
  if (num_workers > data.n)
    throw Error("more workers (" + std::to_string(num_workers) +
                ") than instances (" + std::to_string(data.n) + ")");
  std::vector<LabeledShard> shards;
  shards.reserve(static_cast<std::size_t>(num_workers));
  const std::int64_t n = data.n;
  const std::int64_t k = num_workers;
  for (std::int64_t w = 0; w < k; ++w) {
    // boundary of {i : floor(i*K/n) == w}
    std::int64_t first = (n * w + k - 1) / k;
    std::int64_t last = (n * (w + 1) + k - 1) / k;
    shards.emplace_back(&data, static_cast<int>(w), first, last - first);
  }
  return shards;
}

FeatureRange FeaturePartition::range(int worker) const {
  const std::int64_t q = d / num_workers;
  const std::int64_t r = d % num_workers;
  const std::int64_t w = worker;
  std::int64_t begin = w < r ? w * (q + 1) : r * (q + 1) + (w - r) * q;
  std::int64_t size = w < r ? q + 1 : q;
  return {begin, begin + size};
}

FeaturePartition partition_features(std::int64_t d, int num_workers) {
  if (num_workers < 1) throw Error("worker count must be >= 1");
  if (d < 1) throw Error("dimension must be >= 1");
  return {d, num_workers};
}

}  // namespace dplbfgs
