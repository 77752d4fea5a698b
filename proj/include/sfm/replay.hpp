#pragma once

#include <vector>

#include "sfm/env.hpp"
#include "sfm/rng.hpp"

namespace sfm {

// Uniform ring buffer with two independent sampling streams so that the
// actor batch D and the witness batch D' are drawn independently.
class ReplayBuffer {
 public:
  enum class Stream { D, DPrime };

  ReplayBuffer(size_t capacity, uint64_t seed)
      : capacity_(capacity),
        rng_d_(Rng::derive_seed(seed, 101)),
        rng_dprime_(Rng::derive_seed(seed, 202)) {
    storage_.reserve(capacity);
  }

  size_t capacity() const { return capacity_; }
  size_t size() const { return storage_.size(); }

  void push(Transition t) {
    if (storage_.size() < capacity_) {
      storage_.push_back(std::move(t));
    } else {
      storage_[write_pos_] = std::move(t);
    }
    write_pos_ = (write_pos_ + 1) % capacity_;
  }

  const Transition& at(size_t i) const { return storage_[i]; }

  std::vector<int> sample_indices(int n, Stream stream) {
    if (storage_.empty()) throw std::invalid_argument("ReplayBuffer: sampling from empty buffer");
    Rng& rng = stream == Stream::D ? rng_d_ : rng_dprime_;
    std::vector<int> idx(n);
    for (auto& i : idx) i = rng.uniform_int(static_cast<int>(storage_.size()));
    return idx;
  }

  // Materialize (S, A, S') matrices for a batch of indices.
  void gather(const std::vector<int>& idx, Matrix& states, Matrix& actions,
              Matrix& next_states) const {
    const int n = static_cast<int>(idx.size());
    const auto& first = storage_[idx[0]];
    states.resize(n, first.state.size());
    actions.resize(n, first.action.size());
    next_states.resize(n, first.next_state.size());
    for (int i = 0; i < n; ++i) {
      const Transition& t = storage_[idx[i]];
      states.row(i) = t.state.transpose();
      actions.row(i) = t.action.transpose();
      next_states.row(i) = t.next_state.transpose();
    }
  }

 private:
  size_t capacity_;
  std::vector<Transition> storage_;
  size_t write_pos_ = 0;
  Rng rng_d_;
  Rng rng_dprime_;
};

}  // namespace sfm
