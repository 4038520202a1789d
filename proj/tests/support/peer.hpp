#pragma once

#include <atomic>
#include <chrono>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <vector>

#include "ctrlink/protocol.hpp"
#include "ctrlink/transport.hpp"

namespace testing_support {

/// Reads the next complete frame from `t`, or nullopt after `timeout`.
class FrameReader {
 public:
  explicit FrameReader(ctrlink::Transport& t) : t_(t) {}

  std::optional<ctrlink::protocol::Frame> next(std::chrono::milliseconds timeout) {
    const auto deadline = std::chrono::steady_clock::now() + timeout;
    for (;;) {
      if (!pending_.empty()) {
        auto f = pending_.front();
        pending_.erase(pending_.begin());
        return f;
      }
      const auto now = std::chrono::steady_clock::now();
      if (now >= deadline) return std::nullopt;
      std::uint8_t buf[128];
      const auto n = t_.read_some(buf, std::chrono::duration_cast<std::chrono::milliseconds>(deadline - now));
      for (auto& o : decoder_.feed(std::span<const std::uint8_t>(buf, n))) {
        if (auto* f = std::get_if<ctrlink::protocol::Frame>(&o)) pending_.push_back(*f);
      }
    }
  }

 private:
  ctrlink::Transport& t_;
  ctrlink::protocol::FrameDecoder decoder_;
  std::vector<ctrlink::protocol::Frame> pending_;
};

/// Counts written frames and can swallow chosen writes (by 0-based index).
class TapTransport final : public ctrlink::Transport {
 public:
  TapTransport(std::unique_ptr<ctrlink::Transport> inner, std::set<std::size_t> drop = {})
      : inner_(std::move(inner)), drop_(std::move(drop)) {}

  std::size_t read_some(std::span<std::uint8_t> buffer, std::chrono::milliseconds timeout) override {
    return inner_->read_some(buffer, timeout);
  }
  void write(std::span<const std::uint8_t> bytes) override {
    const auto index = writes_++;
    {
      std::lock_guard lock(mutex_);
      written_.insert(written_.end(), bytes.begin(), bytes.end());
    }
    if (!drop_.contains(index)) inner_->write(bytes);
  }
  void close() noexcept override { inner_->close(); }

  std::size_t writes() const { return writes_; }
  std::vector<ctrlink::protocol::Frame> written_frames() const {
    std::lock_guard lock(mutex_);
    ctrlink::protocol::FrameDecoder d;
    std::vector<ctrlink::protocol::Frame> out;
    for (auto& o : d.feed(written_)) {
      if (auto* f = std::get_if<ctrlink::protocol::Frame>(&o)) out.push_back(*f);
    }
    return out;
  }

 private:
  std::unique_ptr<ctrlink::Transport> inner_;
  std::set<std::size_t> drop_;
  std::atomic<std::size_t> writes_{0};
  mutable std::mutex mutex_;
  std::vector<std::uint8_t> written_;
};

}  // namespace testing_support
