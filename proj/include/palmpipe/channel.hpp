#pragma once

#include <chrono>
#include <condition_variable>
#include <cstddef>
#include <cstdint>
#include <deque>
#include <mutex>
#include <optional>
#include <utility>

namespace palmpipe {

/// Single-slot mailbox holding only the newest value and a publish counter.
template <typename T>
class LatestValue {
 public:
  void publish(T value) {
    std::lock_guard lock(mu_);
    value_ = std::move(value);
    ++seq_;
  }

  /// Value plus its sequence number (1 for the first publish); empty before any publish.
  std::optional<std::pair<T, std::uint64_t>> read() const {
    std::lock_guard lock(mu_);
    if (!value_) return std::nullopt;
    return std::pair<T, std::uint64_t>{*value_, seq_};
  }

  std::uint64_t published() const {
    std::lock_guard lock(mu_);
    return seq_;
  }

 private:
  mutable std::mutex mu_;
  std::optional<T> value_;
  std::uint64_t seq_ = 0;
};

/// Bounded queue that never blocks the producer: a push into a full queue
/// evicts the oldest element.
template <typename T>
class BoundedChannel {
 public:
  explicit BoundedChannel(std::size_t capacity) : capacity_(capacity == 0 ? 1 : capacity) {}

  /// Returns false when the channel is closed.
  bool push(T value) {
    {
      std::lock_guard lock(mu_);
      if (closed_) return false;
      if (items_.size() >= capacity_) {
        items_.pop_front();
        ++dropped_;
      }
      items_.push_back(std::move(value));
    }
    cv_.notify_one();
    return true;
  }

  std::optional<T> try_pop() {
    std::lock_guard lock(mu_);
    if (items_.empty()) return std::nullopt;
    T v = std::move(items_.front());
    items_.pop_front();
    return v;
  }

  /// Waits up to `timeout`; empty on timeout or when closed and drained.
  template <typename Rep, typename Period>
  std::optional<T> pop_for(std::chrono::duration<Rep, Period> timeout) {
    std::unique_lock lock(mu_);
    cv_.wait_for(lock, timeout, [&] { return closed_ || !items_.empty(); });
    if (items_.empty()) return std::nullopt;
    T v = std::move(items_.front());
    items_.pop_front();
    return v;
  }

  void close() {
    {
      std::lock_guard lock(mu_);
      closed_ = true;
    }
    cv_.notify_all();
  }

  std::size_t size() const {
    std::lock_guard lock(mu_);
    return items_.size();
  }
  std::uint64_t dropped() const {
    std::lock_guard lock(mu_);
    return dropped_;
  }

 private:
  mutable std::mutex mu_;
  std::condition_variable cv_;
  std::deque<T> items_;
  std::size_t capacity_;
  std::uint64_t dropped_ = 0;
  bool closed_ = false;
};

}  // namespace palmpipe
