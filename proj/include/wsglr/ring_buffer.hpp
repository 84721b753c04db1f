#pragma once

#include <algorithm>
#include <cassert>
#include <cstddef>
#include <utility>
#include <vector>

namespace wsglr {

// Double-ended FIFO over contiguous storage. A bounded buffer never
// reallocates after construction; an unbounded one doubles when full.
template <typename T>
class RingBuffer {
 public:
  explicit RingBuffer(std::size_t capacity = 16, bool bounded = true)
      : data_(capacity == 0 ? 1 : capacity), bounded_(bounded) {}

  std::size_t size() const noexcept { return size_; }
  bool empty() const noexcept { return size_ == 0; }
  std::size_t capacity() const noexcept { return data_.size(); }
  bool full() const noexcept { return size_ == data_.size(); }

  void clear() noexcept {
    head_ = 0;
    size_ = 0;
  }

  // Element i counted from the oldest entry.
  T& operator[](std::size_t i) noexcept {
    assert(i < size_);
    return data_[wrap(head_ + i)];
  }
  const T& operator[](std::size_t i) const noexcept {
    assert(i < size_);
    return data_[wrap(head_ + i)];
  }

  T& front() noexcept { return (*this)[0]; }
  const T& front() const noexcept { return (*this)[0]; }
  T& back() noexcept { return (*this)[size_ - 1]; }
  const T& back() const noexcept { return (*this)[size_ - 1]; }

  // Bounded buffers overwrite the oldest element when full.
  void push_back(T value) {
    if (full()) {
      if (bounded_) {
        data_[head_] = std::move(value);
        head_ = wrap(head_ + 1);
        return;
      }
      grow();
    }
    data_[wrap(head_ + size_)] = std::move(value);
    ++size_;
  }

  void pop_front() noexcept {
    assert(size_ > 0);
    head_ = wrap(head_ + 1);
    --size_;
  }

  // Visits elements oldest first.
  template <typename Fn>
  void for_each(Fn&& fn) {
    const std::size_t first = std::min(size_, data_.size() - head_);
    for (std::size_t i = 0; i < first; ++i) fn(data_[head_ + i]);
    for (std::size_t i = 0; i < size_ - first; ++i) fn(data_[i]);
  }
  template <typename Fn>
  void for_each(Fn&& fn) const {
    const std::size_t first = std::min(size_, data_.size() - head_);
    for (std::size_t i = 0; i < first; ++i) fn(data_[head_ + i]);
    for (std::size_t i = 0; i < size_ - first; ++i) fn(data_[i]);
  }

 private:
  std::size_t wrap(std::size_t i) const noexcept { return i >= data_.size() ? i - data_.size() : i; }

  void grow() {
    std::vector<T> next(data_.size() * 2);
    for (std::size_t i = 0; i < size_; ++i) next[i] = std::move((*this)[i]);
    data_ = std::move(next);
    head_ = 0;
  }

  std::vector<T> data_;
  std::size_t head_ = 0;
  std::size_t size_ = 0;
  bool bounded_;
};

}  // namespace wsglr
