#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include "mrrn/tensor.hpp"

namespace mrrn {

// First/second moment estimates per parameter plus the shared step counter.
template <typename T>
struct AdamState {
  T lr = T(1e-4);
  T beta1 = T(0.9);
  T beta2 = T(0.999);
  T eps = T(1e-8);
  long t = 0;
  std::vector<std::vector<T>> m;
  std::vector<std::vector<T>> v;

  template <typename Params>
  void init(const Params& params) {
    m.clear();
    v.clear();
    t = 0;
    for (const auto& p : params) {
      m.emplace_back(p->data.size(), T(0));
      v.emplace_back(p->data.size(), T(0));
    }
  }
};

// One bias-corrected ADAM update over all parameters. Parameters with no
// gradient buffer are treated as zero-gradient.
template <typename T>
void adam_step(std::vector<Var<T>>& params, AdamState<T>& state) {
  if (state.m.size() != params.size() || state.v.size() != params.size())
    throw std::invalid_argument("adam_step: state holds " + std::to_string(state.m.size()) +
                                " slots for " + std::to_string(params.size()) + " parameters");
  state.t++;
  const double bc1 = 1.0 - std::pow(static_cast<double>(state.beta1), state.t);
  const double bc2 = 1.0 - std::pow(static_cast<double>(state.beta2), state.t);
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    auto& p = *params[pi];
    auto& m = state.m[pi];
    auto& v = state.v[pi];
    if (m.size() != p.data.size())
      throw std::invalid_argument("adam_step: moment size " + std::to_string(m.size()) +
                                  " does not match parameter size " + std::to_string(p.data.size()));
    const bool has_g = p.has_grad();
    for (std::size_t i = 0; i < p.data.size(); ++i) {
      const T g = has_g ? p.grad[i] : T(0);
      m[i] = state.beta1 * m[i] + (T(1) - state.beta1) * g;
      v[i] = state.beta2 * v[i] + (T(1) - state.beta2) * g * g;
      const double mhat = static_cast<double>(m[i]) / bc1;
      const double vhat = static_cast<double>(v[i]) / bc2;
      p.data[i] -= static_cast<T>(static_cast<double>(state.lr) * mhat /
                                  (std::sqrt(vhat) + static_cast<double>(state.eps)));
    }
  }
}

}  // namespace mrrn
