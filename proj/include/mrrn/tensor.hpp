#pragma once

#include <cstdint>
#include <memory>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace mrrn {

struct Shape {
  long n = 0, c = 0, h = 0, w = 0;

  long numel() const { return n * c * h * w; }
  bool operator==(const Shape& o) const = default;

  std::string str() const {
    std::ostringstream os;
    os << "(" << n << "," << c << "," << h << "," << w << ")";
    return os.str();
  }
};

[[noreturn]] inline void shape_error(const std::string& msg) {
  throw std::invalid_argument(msg);
}

// Dense 4-D array in row-major (n, c, h, w) order with optional gradient
// storage. Values are written once by the op that produces the tensor;
// gradients are filled in during the backward sweep.
template <typename T>
struct Tensor {
  Shape shape;
  std::vector<T> data;
  bool requires_grad = false;
  std::vector<T> grad;  // empty until ensure_grad()

  Tensor() = default;
  explicit Tensor(Shape s, bool rg = false)
      : shape(s), data(static_cast<std::size_t>(s.numel()), T(0)), requires_grad(rg) {
    if (s.n < 0 || s.c < 0 || s.h < 0 || s.w < 0)
      shape_error("negative dimension in shape " + s.str());
  }

  long numel() const { return shape.numel(); }

  T& at(long n, long c, long h, long w) {
    return data[static_cast<std::size_t>(((n * shape.c + c) * shape.h + h) * shape.w + w)];
  }
  const T& at(long n, long c, long h, long w) const {
    return data[static_cast<std::size_t>(((n * shape.c + c) * shape.h + h) * shape.w + w)];
  }

  bool has_grad() const { return !grad.empty(); }
  void ensure_grad() {
    if (grad.empty()) grad.assign(data.size(), T(0));
  }
  void zero_grad() { grad.assign(data.size(), T(0)); }
};

template <typename T>
using Var = std::shared_ptr<Tensor<T>>;

template <typename T>
Var<T> make_var(Shape s, bool requires_grad = false) {
  return std::make_shared<Tensor<T>>(s, requires_grad);
}

template <typename T>
Var<T> make_var(Shape s, std::vector<T> values, bool requires_grad = false) {
  auto t = std::make_shared<Tensor<T>>(s, requires_grad);
  if (static_cast<long>(values.size()) != s.numel())
    shape_error("value count " + std::to_string(values.size()) + " does not match shape " + s.str());
  t->data = std::move(values);
  return t;
}

// Integer label plane (n, h, w); labels index the class dimension of logits.
struct LabelMask {
  long n = 0, h = 0, w = 0;
  std::vector<std::uint8_t> labels;

  LabelMask() = default;
  LabelMask(long n_, long h_, long w_)
      : n(n_), h(h_), w(w_), labels(static_cast<std::size_t>(n_ * h_ * w_), 0) {}

  long numel() const { return n * h * w; }
  std::uint8_t& at(long ni, long hi, long wi) {
    return labels[static_cast<std::size_t>((ni * h + hi) * w + wi)];
  }
  std::uint8_t at(long ni, long hi, long wi) const {
    return labels[static_cast<std::size_t>((ni * h + hi) * w + wi)];
  }
};

}  // namespace mrrn
