#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <mutex>
#include <span>
#include <vector>

namespace dplbfgs {

struct CostParams {
  double t_initial = 1e-3;  // seconds per connection round
  double t_byte = 1e-9;     // seconds per transmitted byte
};

// Exact accounting of collective rounds. One round of an L-double payload
// costs 8*L bytes (one worker's send size) and, under the latency/bandwidth
// model, log2(K)*T_initial + 8*L*T_byte seconds. K=1 worlds transfer
// nothing and record nothing.
class CostLedger {
 public:
  CostLedger(int world_size, CostParams params)
      : world_size_(world_size), params_(params) {}

  std::uint64_t rounds() const;
  std::uint64_t bytes() const;
  double modeled_time() const;
  // Per-round payload lengths in doubles, in order of occurrence.
  std::vector<std::uint32_t> round_lengths() const;

  void record_round(std::size_t payload_doubles);

 private:
  mutable std::mutex mu_;
  int world_size_;
  CostParams params_;
  std::uint64_t rounds_ = 0;
  std::uint64_t bytes_ = 0;
  std::vector<std::uint32_t> lengths_;
};

// Per-worker handle to the collective layer. Every participant of a world
// must call each collective the same number of times with equal payload
// lengths; the summation order is fixed ascending worker id, so results are
// bitwise identical on all workers and across repeated runs.
class Comm {
 public:
  virtual ~Comm() = default;
  virtual int worker_id() const = 0;
  virtual int world_size() const = 0;
  virtual CostLedger& ledger() = 0;

  // Elementwise sum across workers, in place on every worker.
  virtual void allreduce(std::span<double> values) = 0;

  double allreduce_scalar(double x) {
    allreduce(std::span<double>(&x, 1));
    return x;
  }
};

// In-process backend: K cooperating threads meeting at rendezvous points.
class SimWorld {
 public:
  explicit SimWorld(int num_workers, CostParams params = {});
  ~SimWorld();

  int size() const;
  CostLedger& ledger();

  // Runs fn once per worker on its own thread and joins them all. The first
  // worker exception is rethrown; peers blocked in collectives are released
  // with AbortError.
  void run(const std::function<void(Comm&)>& fn);

  struct Impl;

 private:
  std::unique_ptr<Impl> impl_;
};

// Loopback TCP backend with the same contract. Worker 0 acts as the hub:
// frames are length-prefixed little-endian with the rendezvous id in the
// header, payloads are 8-byte floats. Misdirected frames (wrong rendezvous
// id or payload length) raise ProtocolError; an absent peer raises
// TimeoutError after recv_timeout.
class SocketWorld {
 public:
  explicit SocketWorld(int num_workers, CostParams params = {},
                       double recv_timeout_s = 10.0);
  ~SocketWorld();

  int size() const;
  CostLedger& ledger();
  void run(const std::function<void(Comm&)>& fn);

  struct Impl;

 private:
  std::unique_ptr<Impl> impl_;
};

}  // namespace dplbfgs
