#pragma once

#include <functional>
#include <stdexcept>
#include <unordered_set>
#include <vector>

#include "mrrn/tensor.hpp"

namespace mrrn {

// Records ops in execution order; backward replays them in reverse exactly
// once. Inputs of any recorded op were produced earlier (or are leaves), so
// the recording order is already topological.
template <typename T>
class Tape {
 public:
  void record(Tensor<T>* out, std::function<void()> back) {
    nodes_.push_back({out, std::move(back)});
    produced_.insert(out);
  }

  bool produced(const Tensor<T>* t) const { return produced_.count(t) != 0; }

  // True when a gradient flowing into `t` must be materialized: either the
  // caller asked for it or an earlier op on the tape produced it.
  bool wants_grad(const Tensor<T>* t) const {
    return t->requires_grad || produced(t);
  }

  std::size_t size() const { return nodes_.size(); }

  void backward(Tensor<T>& loss) {
    if (!produced(&loss))
      throw std::invalid_argument("backward: loss tensor was not produced on this tape");
    if (loss.numel() != 1)
      throw std::invalid_argument("backward: loss must be a scalar, got shape " + loss.shape.str());
    loss.ensure_grad();
    loss.grad[0] = T(1);
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
      if (it->out->has_grad()) it->back();
    }
  }

 private:
  struct Node {
    Tensor<T>* out;
    std::function<void()> back;
  };
  std::vector<Node> nodes_;
  std::unordered_set<const Tensor<T>*> produced_;
};

}  // namespace mrrn
