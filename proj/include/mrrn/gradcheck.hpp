#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "mrrn/tape.hpp"
#include "mrrn/tensor.hpp"

namespace mrrn {

struct GradCheckResult {
  double max_rel_err = 0.0;
  long coords_checked = 0;
};

template <typename T>
constexpr double gradcheck_step() {
  return sizeof(T) == 4 ? 1e-3 : 1e-5;
}

template <typename T>
constexpr double gradcheck_tolerance() {
  return sizeof(T) == 4 ? 1e-3 : 1e-5;
}

// Compares analytic gradients against central finite differences.
// `forward` must rebuild the computation from the current contents of
// `inputs` and return the scalar loss; when `tape` is non-null the call is
// recorded for the analytic pass.
template <typename T>
GradCheckResult grad_check(const std::function<Var<T>(Tape<T>*)>& forward,
                           const std::vector<Var<T>>& inputs,
                           double step = gradcheck_step<T>()) {
  for (auto& in : inputs) in->zero_grad();
  {
    Tape<T> tape;
    auto loss = forward(&tape);
    tape.backward(*loss);
  }
  std::vector<std::vector<T>> analytic;
  for (auto& in : inputs) {
    in->ensure_grad();
    analytic.push_back(in->grad);
  }

  GradCheckResult res;
  for (std::size_t ii = 0; ii < inputs.size(); ++ii) {
    auto& in = *inputs[ii];
    for (std::size_t i = 0; i < in.data.size(); ++i) {
      const T orig = in.data[i];
      in.data[i] = orig + static_cast<T>(step);
      const double fp = static_cast<double>(forward(nullptr)->data[0]);
      in.data[i] = orig - static_cast<T>(step);
      const double fm = static_cast<double>(forward(nullptr)->data[0]);
      in.data[i] = orig;
      const double numeric = (fp - fm) / (2.0 * step);
      const double a = static_cast<double>(analytic[ii][i]);
      const double denom = std::max({1.0, std::abs(a), std::abs(numeric)});
      res.max_rel_err = std::max(res.max_rel_err, std::abs(a - numeric) / denom);
      res.coords_checked++;
    }
  }
  return res;
}

// Nudges values lying within `margin` of a kink (ReLU threshold, pool ties)
// away from it so central differences stay on one linear piece.
template <typename T>
void avoid_kinks(Tensor<T>& t, double margin = 1e-2) {
  for (auto& v : t.data) {
    if (std::abs(static_cast<double>(v)) < margin)
      v = v >= T(0) ? static_cast<T>(margin) : static_cast<T>(-margin);
  }
}

}  // namespace mrrn
