#include "ctrlink/transport.hpp"

#include <arpa/inet.h>
#include <fcntl.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <termios.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <charconv>
#include <condition_variable>
#include <cstring>
#include <deque>
#include <mutex>

#include "ctrlink/error.hpp"

namespace ctrlink {

namespace {

[[noreturn]] void fail_errno(const std::string& what) {
  fail(Errc::TransportError, what + ": " + std::strerror(errno));
}

/// Returns false on timeout.
bool wait_readable(int fd, std::chrono::milliseconds timeout) {
  pollfd pfd{fd, POLLIN, 0};
  for (;;) {
    const int rc = ::poll(&pfd, 1, static_cast<int>(timeout.count()));
    if (rc > 0) return true;
    if (rc == 0) return false;
    if (errno != EINTR) fail_errno("poll");
  }
}

std::size_t read_fd(int fd, const std::atomic<bool>& closed, std::span<std::uint8_t> buffer,
                    std::chrono::milliseconds timeout) {
  if (closed) fail(Errc::TransportError, "closed");
  if (!wait_readable(fd, timeout)) return 0;
  if (closed) fail(Errc::TransportError, "closed");
  for (;;) {
    const auto n = ::read(fd, buffer.data(), buffer.size());
    if (n > 0) return static_cast<std::size_t>(n);
    if (n == 0) fail(Errc::TransportError, "peer closed the connection");
    if (errno == EINTR) continue;
    if (errno == EAGAIN || errno == EWOULDBLOCK) return 0;
    fail_errno("read");
  }
}

void write_fd(int fd, const std::atomic<bool>& closed, std::span<const std::uint8_t> bytes, bool socket) {
  if (closed) fail(Errc::TransportError, "closed");
  while (!bytes.empty()) {
    const auto n = socket ? ::send(fd, bytes.data(), bytes.size(), MSG_NOSIGNAL)
                          : ::write(fd, bytes.data(), bytes.size());
    if (n < 0) {
      if (errno == EINTR) continue;
      if (errno == EAGAIN || errno == EWOULDBLOCK) {
        pollfd pfd{fd, POLLOUT, 0};
        ::poll(&pfd, 1, 100);
        continue;
      }
      fail_errno("write");
    }
    bytes = bytes.subspan(static_cast<std::size_t>(n));
  }
}

// --- loopback ----------------------------------------------------------------

struct LoopbackLink {
  std::mutex mutex;
  std::condition_variable readable;
  std::deque<std::uint8_t> queues[2];
  bool closed = false;
};

class LoopbackTransport final : public Transport {
 public:
  LoopbackTransport(std::shared_ptr<LoopbackLink> link, int side) : link_(std::move(link)), side_(side) {}

  std::size_t read_some(std::span<std::uint8_t> buffer, std::chrono::milliseconds timeout) override {
    std::unique_lock lock(link_->mutex);
    auto& inbox = link_->queues[side_];
    link_->readable.wait_for(lock, timeout, [&] { return link_->closed || !inbox.empty(); });
    if (link_->closed) fail(Errc::TransportError, "loopback closed");
    const auto n = std::min(buffer.size(), inbox.size());
    std::copy_n(inbox.begin(), n, buffer.begin());
    inbox.erase(inbox.begin(), inbox.begin() + static_cast<std::ptrdiff_t>(n));
    return n;
  }

  void write(std::span<const std::uint8_t> bytes) override {
    {
      std::lock_guard lock(link_->mutex);
      if (link_->closed) fail(Errc::TransportError, "loopback closed");
      auto& outbox = link_->queues[1 - side_];
      outbox.insert(outbox.end(), bytes.begin(), bytes.end());
    }
    link_->readable.notify_all();
  }

  void close() noexcept override {
    {
      std::lock_guard lock(link_->mutex);
      link_->closed = true;
    }
    link_->readable.notify_all();
  }

 private:
  std::shared_ptr<LoopbackLink> link_;
  int side_;
};

// --- serial ------------------------------------------------------------------

speed_t baud_constant(std::uint32_t baud) {
  switch (baud) {
    case 9600: return B9600;
    case 19200: return B19200;
    case 38400: return B38400;
    case 57600: return B57600;
    case 115200: return B115200;
    case 230400: return B230400;
    case 460800: return B460800;
    case 921600: return B921600;
    default: fail(Errc::ConfigError, "unsupported baud rate " + std::to_string(baud));
  }
}

template <class Int>
std::optional<Int> to_int(std::string_view text) {
  Int value{};
  const auto* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (text.empty() || ec != std::errc{} || ptr != end) return std::nullopt;
  return value;
}

}  // namespace

std::pair<std::unique_ptr<Transport>, std::unique_ptr<Transport>> make_loopback_pair() {
  auto link = std::make_shared<LoopbackLink>();
  return {std::make_unique<LoopbackTransport>(link, 0), std::make_unique<LoopbackTransport>(link, 1)};
}

// --- tcp ---------------------------------------------------------------------

TcpTransport::~TcpTransport() {
  close();
  ::close(fd_);
}

std::unique_ptr<TcpTransport> TcpTransport::connect(const std::string& host, std::uint16_t port,
                                                    std::chrono::milliseconds timeout) {
  addrinfo hints{};
  hints.ai_family = AF_UNSPEC;
  hints.ai_socktype = SOCK_STREAM;
  addrinfo* result = nullptr;
  const auto service = std::to_string(port);
  if (const int rc = ::getaddrinfo(host.c_str(), service.c_str(), &hints, &result); rc != 0) {
    fail(Errc::TransportError, "resolve " + host + ": " + ::gai_strerror(rc));
  }
  std::unique_ptr<addrinfo, decltype(&::freeaddrinfo)> guard(result, ::freeaddrinfo);

  std::string last_error = "no address";
  for (auto* ai = result; ai != nullptr; ai = ai->ai_next) {
    const int fd = ::socket(ai->ai_family, ai->ai_socktype | SOCK_CLOEXEC | SOCK_NONBLOCK, ai->ai_protocol);
    if (fd < 0) continue;
    int rc = ::connect(fd, ai->ai_addr, ai->ai_addrlen);
    if (rc < 0 && errno == EINPROGRESS) {
      pollfd pfd{fd, POLLOUT, 0};
      rc = ::poll(&pfd, 1, static_cast<int>(timeout.count())) == 1 ? 0 : -1;
      int so_error = rc == 0 ? 0 : ETIMEDOUT;
      socklen_t len = sizeof so_error;
      if (rc == 0) ::getsockopt(fd, SOL_SOCKET, SO_ERROR, &so_error, &len);
      if (so_error != 0) {
        errno = so_error;
        rc = -1;
      }
    }
    if (rc == 0) {
      const int one = 1;
      ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
      return std::make_unique<TcpTransport>(fd);
    }
    last_error = std::strerror(errno);
    ::close(fd);
  }
  fail(Errc::TransportError, "connect " + host + ":" + service + ": " + last_error);
}

std::size_t TcpTransport::read_some(std::span<std::uint8_t> buffer, std::chrono::milliseconds timeout) {
  return read_fd(fd_, closed_, buffer, timeout);
}

void TcpTransport::write(std::span<const std::uint8_t> bytes) { write_fd(fd_, closed_, bytes, true); }

// The descriptor stays valid until destruction so a concurrent reader never
// polls a recycled fd; shutdown() wakes it instead.
void TcpTransport::close() noexcept {
  if (!closed_.exchange(true)) ::shutdown(fd_, SHUT_RDWR);
}

TcpListener::TcpListener(const std::string& host, std::uint16_t port) {
  addrinfo hints{};
  hints.ai_family = AF_UNSPEC;
  hints.ai_socktype = SOCK_STREAM;
  hints.ai_flags = AI_PASSIVE;
  addrinfo* result = nullptr;
  const auto service = std::to_string(port);
  if (const int rc = ::getaddrinfo(host.empty() ? nullptr : host.c_str(), service.c_str(), &hints, &result);
      rc != 0) {
    fail(Errc::TransportError, "resolve " + host + ": " + ::gai_strerror(rc));
  }
  std::unique_ptr<addrinfo, decltype(&::freeaddrinfo)> guard(result, ::freeaddrinfo);

  fd_ = ::socket(result->ai_family, result->ai_socktype | SOCK_CLOEXEC, result->ai_protocol);
  if (fd_ < 0) fail_errno("socket");
  const int one = 1;
  ::setsockopt(fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
  if (::bind(fd_, result->ai_addr, result->ai_addrlen) < 0 || ::listen(fd_, 4) < 0) {
    const int saved = errno;
    ::close(fd_);
    fd_ = -1;
    errno = saved;
    fail_errno("listen on " + host + ":" + service);
  }
  sockaddr_storage bound{};
  socklen_t len = sizeof bound;
  ::getsockname(fd_, reinterpret_cast<sockaddr*>(&bound), &len);
  port_ = bound.ss_family == AF_INET6 ? ntohs(reinterpret_cast<sockaddr_in6*>(&bound)->sin6_port)
                                      : ntohs(reinterpret_cast<sockaddr_in*>(&bound)->sin_port);
}

TcpListener::~TcpListener() {
  if (fd_ >= 0) ::close(fd_);
}

std::unique_ptr<Transport> TcpListener::accept(std::chrono::milliseconds timeout) {
  if (!wait_readable(fd_, timeout)) return nullptr;
  const int fd = ::accept4(fd_, nullptr, nullptr, SOCK_CLOEXEC);
  if (fd < 0) {
    if (errno == EINTR || errno == EAGAIN) return nullptr;
    fail_errno("accept");
  }
  const int one = 1;
  ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
  return std::make_unique<TcpTransport>(fd);
}

// --- serial ------------------------------------------------------------------

SerialTransport::~SerialTransport() {
  close();
  ::close(fd_);
}

std::unique_ptr<SerialTransport> SerialTransport::open(const std::string& path, std::uint32_t baud) {
  const auto speed = baud_constant(baud);
  const int fd = ::open(path.c_str(), O_RDWR | O_NOCTTY | O_CLOEXEC | O_NONBLOCK);
  if (fd < 0) fail_errno("open " + path);
  termios tio{};
  if (::tcgetattr(fd, &tio) < 0) {
    const int saved = errno;
    ::close(fd);
    errno = saved;
    fail_errno("tcgetattr " + path);
  }
  ::cfmakeraw(&tio);
  tio.c_cflag |= CLOCAL | CREAD;
  tio.c_cflag &= ~static_cast<tcflag_t>(CSTOPB | PARENB);
  tio.c_cc[VMIN] = 0;
  tio.c_cc[VTIME] = 0;
  ::cfsetispeed(&tio, speed);
  ::cfsetospeed(&tio, speed);
  if (::tcsetattr(fd, TCSANOW, &tio) < 0) {
    const int saved = errno;
    ::close(fd);
    errno = saved;
    fail_errno("tcsetattr " + path);
  }
  return std::unique_ptr<SerialTransport>(new SerialTransport(fd));
}

std::size_t SerialTransport::read_some(std::span<std::uint8_t> buffer, std::chrono::milliseconds timeout) {
  return read_fd(fd_, closed_, buffer, timeout);
}

void SerialTransport::write(std::span<const std::uint8_t> bytes) { write_fd(fd_, closed_, bytes, false); }

void SerialTransport::close() noexcept { closed_ = true; }

// --- endpoints ---------------------------------------------------------------

Endpoint parse_endpoint(const std::string& text) {
  const auto colon = text.find(':');
  if (colon == std::string::npos) fail(Errc::ConfigError, "endpoint needs a scheme: '" + text + "'");
  const auto scheme = std::string_view(text).substr(0, colon);
  const auto rest = std::string_view(text).substr(colon + 1);

  if (scheme == "loopback") {
    if (!rest.empty()) fail(Errc::ConfigError, "loopback: takes no address");
    return LoopbackEndpoint{};
  }
  if (scheme == "tcp") {
    const auto last = rest.rfind(':');
    if (last == std::string_view::npos || last == 0) fail(Errc::ConfigError, "expected tcp:<host>:<port>");
    const auto port = to_int<std::uint16_t>(rest.substr(last + 1));
    if (!port) fail(Errc::ConfigError, "bad tcp port in '" + text + "'");
    auto host = std::string(rest.substr(0, last));
    if (host.size() > 2 && host.front() == '[' && host.back() == ']') host = host.substr(1, host.size() - 2);
    return TcpEndpoint{std::move(host), *port};
  }
  if (scheme == "serial") {
    SerialEndpoint ep;
    const auto q = rest.find('?');
    ep.path = std::string(rest.substr(0, q));
    if (ep.path.empty()) fail(Errc::ConfigError, "expected serial:<path>");
    if (q != std::string_view::npos) {
      const auto query = rest.substr(q + 1);
      if (query.substr(0, 5) != "baud=") fail(Errc::ConfigError, "unknown serial option in '" + text + "'");
      const auto baud = to_int<std::uint32_t>(query.substr(5));
      if (!baud) fail(Errc::ConfigError, "bad baud rate in '" + text + "'");
      ep.baud = *baud;
    }
    return ep;
  }
  fail(Errc::ConfigError, "unknown endpoint scheme '" + std::string(scheme) + "'");
}

std::string to_string(const Endpoint& endpoint) {
  if (const auto* s = std::get_if<SerialEndpoint>(&endpoint)) {
    return "serial:" + s->path + "?baud=" + std::to_string(s->baud);
  }
  if (const auto* t = std::get_if<TcpEndpoint>(&endpoint)) {
    const bool v6 = t->host.find(':') != std::string::npos;
    return "tcp:" + (v6 ? "[" + t->host + "]" : t->host) + ":" + std::to_string(t->port);
  }
  return "loopback:";
}

std::unique_ptr<Transport> open_endpoint(const Endpoint& endpoint, std::chrono::milliseconds connect_timeout) {
  if (const auto* s = std::get_if<SerialEndpoint>(&endpoint)) return SerialTransport::open(s->path, s->baud);
  if (const auto* t = std::get_if<TcpEndpoint>(&endpoint)) {
    return TcpTransport::connect(t->host, t->port, connect_timeout);
  }
  return make_loopback_pair().first;
}

}  // namespace ctrlink
