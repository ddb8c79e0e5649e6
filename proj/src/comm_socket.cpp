#include <arpa/inet.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <sys/socket.h>
#include <unistd.h>

#include <bit>
#include <cerrno>
#include <cstring>
#include <exception>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "dplbfgs/comm.hpp"
#include "dplbfgs/errors.hpp"

// Wire format: every collective exchanges one frame per direction,
//   u32  payload byte count (8 * number of doubles), little endian
//   u64  rendezvous id (per-worker collective counter), little endian
//   f64[...] payload, little endian
// Worker 0 is the hub: it receives one frame from each peer in ascending
// worker id, reduces (its own contribution first), and sends the result
// frame back to every peer. A frame whose rendezvous id or length does not
// match the hub's current collective is misuse and raises ProtocolError.

namespace dplbfgs {

namespace {

constexpr std::size_t kHeaderSize = 12;

void put_u32(unsigned char* p, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) p[i] = static_cast<unsigned char>(v >> (8 * i));
}

void put_u64(unsigned char* p, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) p[i] = static_cast<unsigned char>(v >> (8 * i));
}

std::uint32_t get_u32(const unsigned char* p) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= std::uint32_t(p[i]) << (8 * i);
  return v;
}

std::uint64_t get_u64(const unsigned char* p) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= std::uint64_t(p[i]) << (8 * i);
  return v;
}

void send_all(int fd, const unsigned char* buf, std::size_t len) {
  while (len > 0) {
    ssize_t sent = ::send(fd, buf, len, MSG_NOSIGNAL);
    if (sent <= 0) throw CommError("socket send failed");
    buf += sent;
    len -= static_cast<std::size_t>(sent);
  }
}

void recv_all(int fd, unsigned char* buf, std::size_t len) {
  while (len > 0) {
    ssize_t got = ::recv(fd, buf, len, 0);
    if (got == 0) throw CommError("peer closed connection");
    if (got < 0) {
      if (errno == EAGAIN || errno == EWOULDBLOCK)
        throw TimeoutError("timed out waiting for peer frame");
      throw CommError("socket recv failed");
    }
    buf += got;
    len -= static_cast<std::size_t>(got);
  }
}

void send_frame(int fd, std::uint64_t rendezvous_id,
                std::span<const double> payload) {
  std::vector<unsigned char> buf(kHeaderSize + 8 * payload.size());
  put_u32(buf.data(), static_cast<std::uint32_t>(8 * payload.size()));
  put_u64(buf.data() + 4, rendezvous_id);
  for (std::size_t i = 0; i < payload.size(); ++i)
    put_u64(buf.data() + kHeaderSize + 8 * i,
            std::bit_cast<std::uint64_t>(payload[i]));
  send_all(fd, buf.data(), buf.size());
}

// Receives a frame and validates it against the expected rendezvous.
void recv_frame(int fd, std::uint64_t expect_id, std::span<double> payload) {
  unsigned char header[kHeaderSize];
  recv_all(fd, header, kHeaderSize);
  std::uint32_t nbytes = get_u32(header);
  std::uint64_t id = get_u64(header + 4);
  if (id != expect_id)
    throw ProtocolError("frame rendezvous id " + std::to_string(id) +
                        " does not match expected " +
                        std::to_string(expect_id));
  if (nbytes != 8 * payload.size())
    throw ProtocolError("frame payload of " + std::to_string(nbytes) +
                        " bytes does not match expected " +
                        std::to_string(8 * payload.size()));
  std::vector<unsigned char> buf(nbytes);
  recv_all(fd, buf.data(), buf.size());
  for (std::size_t i = 0; i < payload.size(); ++i)
    payload[i] =
        std::bit_cast<double>(get_u64(buf.data() + 8 * i));
}

void set_recv_timeout(int fd, double seconds) {
  timeval tv{};
  tv.tv_sec = static_cast<time_t>(seconds);
  tv.tv_usec = static_cast<suseconds_t>((seconds - double(tv.tv_sec)) * 1e6);
  ::setsockopt(fd, SOL_SOCKET, SO_RCVTIMEO, &tv, sizeof(tv));
}

struct FdCloser {
  int fd = -1;
  ~FdCloser() {
    if (fd >= 0) ::close(fd);
  }
};

}  // namespace

struct SocketWorld::Impl {
  Impl(int k, CostParams params, double timeout)
      : num_workers(k), ledger(k, params), recv_timeout(timeout) {}

  const int num_workers;
  CostLedger ledger;
  double recv_timeout;

  int listen_fd = -1;
  std::uint16_t port = 0;
  // hub side: socket per peer, index 1..K-1 (0 unused)
  std::vector<int> peer_fds;
  // peer side: connection to the hub, per worker
  std::vector<int> hub_fds;
  std::exception_ptr first_error;
  std::mutex err_mu;

  void record_failure(std::exception_ptr e) {
    std::lock_guard lk(err_mu);
    if (!first_error) first_error = e;
  }

  // Wakes peers blocked in recv without invalidating fd numbers; the
  // descriptors themselves are closed once all threads have joined.
  void shutdown_all() {
    for (int fd : peer_fds)
      if (fd >= 0) ::shutdown(fd, SHUT_RDWR);
    for (int fd : hub_fds)
      if (fd >= 0) ::shutdown(fd, SHUT_RDWR);
    if (listen_fd >= 0) ::shutdown(listen_fd, SHUT_RDWR);
  }

  void close_all() {
    for (int& fd : peer_fds)
      if (fd >= 0) {
        ::close(fd);
        fd = -1;
      }
    for (int& fd : hub_fds)
      if (fd >= 0) {
        ::close(fd);
        fd = -1;
      }
    if (listen_fd >= 0) {
      ::close(listen_fd);
      listen_fd = -1;
    }
  }

  void setup_listener() {
    listen_fd = ::socket(AF_INET, SOCK_STREAM, 0);
    if (listen_fd < 0) throw CommError("cannot create listen socket");
    int one = 1;
    ::setsockopt(listen_fd, SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
    addr.sin_port = 0;
    if (::bind(listen_fd, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) <
        0)
      throw CommError("cannot bind listen socket");
    socklen_t len = sizeof(addr);
    ::getsockname(listen_fd, reinterpret_cast<sockaddr*>(&addr), &len);
    port = ntohs(addr.sin_port);
    if (::listen(listen_fd, num_workers) < 0)
      throw CommError("cannot listen");
  }

  void hub_accept_peers() {
    for (int i = 1; i < num_workers; ++i) {
      int fd = ::accept(listen_fd, nullptr, nullptr);
      if (fd < 0) throw CommError("accept failed");
      set_recv_timeout(fd, recv_timeout);
      int one = 1;
      ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
      unsigned char hello[4];
      recv_all(fd, hello, 4);
      std::uint32_t id = get_u32(hello);
      if (id < 1 || int(id) >= num_workers)
        throw ProtocolError("hello from unknown worker id " +
                            std::to_string(id));
      if (peer_fds[id] >= 0)
        throw ProtocolError("duplicate hello from worker " +
                            std::to_string(id));
      peer_fds[id] = fd;
    }
  }

  void peer_connect(int worker) {
    int fd = ::socket(AF_INET, SOCK_STREAM, 0);
    if (fd < 0) throw CommError("cannot create socket");
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
    addr.sin_port = htons(port);
    if (::connect(fd, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) < 0) {
      ::close(fd);
      throw CommError("cannot connect to hub");
    }
    set_recv_timeout(fd, recv_timeout);
    int one = 1;
    ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
    unsigned char hello[4];
    put_u32(hello, static_cast<std::uint32_t>(worker));
    send_all(fd, hello, 4);
    hub_fds[static_cast<std::size_t>(worker)] = fd;
  }
};

namespace {

class SocketComm : public Comm {
 public:
  SocketComm(SocketWorld::Impl* world, int id) : world_(world), id_(id) {}
  int worker_id() const override { return id_; }
  int world_size() const override { return world_->num_workers; }
  CostLedger& ledger() override { return world_->ledger; }

  void allreduce(std::span<double> values) override {
    const int k = world_->num_workers;
    if (k == 1) return;
    if (id_ == 0) {
      std::vector<double> incoming(values.size());
      for (int peer = 1; peer < k; ++peer) {
        recv_frame(world_->peer_fds[static_cast<std::size_t>(peer)], seq_,
                   incoming);
        for (std::size_t i = 0; i < values.size(); ++i)
          values[i] += incoming[i];
      }
      for (int peer = 1; peer < k; ++peer)
        send_frame(world_->peer_fds[static_cast<std::size_t>(peer)], seq_,
                   values);
      world_->ledger.record_round(values.size());
    } else {
      int fd = world_->hub_fds[static_cast<std::size_t>(id_)];
      send_frame(fd, seq_, values);
      recv_frame(fd, seq_, values);
    }
    ++seq_;
  }

 private:
  SocketWorld::Impl* world_;
  int id_;
  std::uint64_t seq_ = 0;
};

}  // namespace

SocketWorld::SocketWorld(int num_workers, CostParams params,
                         double recv_timeout_s)
    : impl_(std::make_unique<Impl>(num_workers, params, recv_timeout_s)) {
  if (num_workers < 1) throw Error("world size must be >= 1");
  impl_->peer_fds.assign(static_cast<std::size_t>(num_workers), -1);
  impl_->hub_fds.assign(static_cast<std::size_t>(num_workers), -1);
  if (num_workers > 1) impl_->setup_listener();
}

SocketWorld::~SocketWorld() { impl_->close_all(); }

int SocketWorld::size() const { return impl_->num_workers; }

CostLedger& SocketWorld::ledger() { return impl_->ledger; }

void SocketWorld::run(const std::function<void(Comm&)>& fn) {
  std::vector<std::thread> threads;
  threads.reserve(static_cast<std::size_t>(impl_->num_workers));
  for (int w = 0; w < impl_->num_workers; ++w) {
    threads.emplace_back([this, &fn, w] {
      try {
        if (impl_->num_workers > 1) {
          if (w == 0)
            impl_->hub_accept_peers();
          else
            impl_->peer_connect(w);
        }
        SocketComm comm(impl_.get(), w);
        fn(comm);
      } catch (...) {
        impl_->record_failure(std::current_exception());
        // Drop connections so peers blocked on recv fail fast instead of
        // waiting out the full timeout.
        impl_->shutdown_all();
      }
    });
  }
  for (auto& t : threads) t.join();
  if (impl_->first_error) std::rethrow_exception(impl_->first_error);
}

}  // namespace dplbfgs
