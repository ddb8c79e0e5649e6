#include <algorithm>
#include <cmath>
#include <condition_variable>
#include <exception>
#include <string>
#include <thread>

#include "dplbfgs/comm.hpp"
#include "dplbfgs/errors.hpp"

namespace dplbfgs {

std::uint64_t CostLedger::rounds() const {
  std::lock_guard lk(mu_);
  return rounds_;
}

std::uint64_t CostLedger::bytes() const {
  std::lock_guard lk(mu_);
  return bytes_;
}

double CostLedger::modeled_time() const {
  std::lock_guard lk(mu_);
  // Sum over rounds of log2(K)*T_initial + payload*T_byte; the per-round
  // expression is linear, so the totals suffice.
  return static_cast<double>(rounds_) * std::log2(world_size_) *
             params_.t_initial +
         static_cast<double>(bytes_) * params_.t_byte;
}

std::vector<std::uint32_t> CostLedger::round_lengths() const {
  std::lock_guard lk(mu_);
  return lengths_;
}

void CostLedger::record_round(std::size_t payload_doubles) {
  std::lock_guard lk(mu_);
  ++rounds_;
  bytes_ += 8 * static_cast<std::uint64_t>(payload_doubles);
  lengths_.push_back(static_cast<std::uint32_t>(payload_doubles));
}

// Rendezvous protocol: arrivals deposit their spans and block; the last
// arrival reduces all contributions in ascending worker-id order into a
// shared buffer and records the round. Arrivals for the next collective
// wait until every participant has copied the current result out.
struct SimWorld::Impl {
  Impl(int k, CostParams params) : num_workers(k), ledger(k, params) {
    slots.resize(static_cast<std::size_t>(k));
  }

  const int num_workers;
  CostLedger ledger;

  std::mutex mu;
  std::condition_variable cv;
  std::vector<std::span<double>> slots;
  std::vector<double> result;
  std::size_t cur_len = 0;
  int arrived = 0;
  int departed = 0;
  bool delivering = false;
  bool poisoned = false;   // protocol violation, world unusable
  bool aborted = false;    // a worker failed outside the collective
  std::string poison_msg;
  std::exception_ptr first_error;

  void check_dead() {
    if (poisoned) throw ProtocolError(poison_msg);
    if (aborted) throw AbortError("peer worker failed");
  }

  void allreduce(int worker, std::span<double> values) {
    if (num_workers == 1) return;  // nothing crosses the wire by convention
    std::unique_lock lk(mu);
    cv.wait(lk, [&] { return poisoned || aborted || !delivering; });
    check_dead();
    if (arrived == 0) {
      cur_len = values.size();
    } else if (values.size() != cur_len) {
      poisoned = true;
      poison_msg = "allreduce length mismatch across workers (" +
                   std::to_string(values.size()) + " vs " +
                   std::to_string(cur_len) + ")";
      cv.notify_all();
      throw ProtocolError(poison_msg);
    }
    slots[static_cast<std::size_t>(worker)] = values;
    ++arrived;
    if (arrived == num_workers) {
      auto first = slots[0];
      result.assign(first.begin(), first.end());
      for (int k = 1; k < num_workers; ++k) {
        auto s = slots[static_cast<std::size_t>(k)];
        for (std::size_t i = 0; i < cur_len; ++i) result[i] += s[i];
      }
      ledger.record_round(cur_len);
      delivering = true;
      cv.notify_all();
    } else {
      cv.wait(lk, [&] { return poisoned || aborted || delivering; });
      check_dead();
    }
    std::copy(result.begin(), result.end(), values.begin());
    ++departed;
    if (departed == num_workers) {
      arrived = 0;
      departed = 0;
      delivering = false;
      cv.notify_all();
    }
  }

  void record_failure(std::exception_ptr e) {
    std::lock_guard lk(mu);
    if (!first_error) first_error = e;
    aborted = true;
    cv.notify_all();
  }
};

namespace {

class SimComm : public Comm {
 public:
  SimComm(SimWorld::Impl* world, int id) : world_(world), id_(id) {}
  int worker_id() const override { return id_; }
  int world_size() const override { return world_->num_workers; }
  CostLedger& ledger() override { return world_->ledger; }
  void allreduce(std::span<double> values) override {
    world_->allreduce(id_, values);
  }

 private:
  SimWorld::Impl* world_;
  int id_;
};

}  // namespace

SimWorld::SimWorld(int num_workers, CostParams params)
    : impl_(std::make_unique<Impl>(num_workers, params)) {
  if (num_workers < 1) throw Error("world size must be >= 1");
}

SimWorld::~SimWorld() = default;

int SimWorld::size() const { return impl_->num_workers; }

CostLedger& SimWorld::ledger() { return impl_->ledger; }

void SimWorld::run(const std::function<void(Comm&)>& fn) {
  std::vector<std::thread> threads;
  threads.reserve(static_cast<std::size_t>(impl_->num_workers));
  for (int w = 0; w < impl_->num_workers; ++w) {
    threads.emplace_back([this, &fn, w] {
      SimComm comm(impl_.get(), w);
      try {
        fn(comm);
      } catch (...) {
        impl_->record_failure(std::current_exception());
      }
    });
  }
  for (auto& t : threads) t.join();
  if (impl_->first_error) std::rethrow_exception(impl_->first_error);
}

}  // namespace dplbfgs
