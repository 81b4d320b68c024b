#pragma once

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "mrrn/tape.hpp"
#include "mrrn/tensor.hpp"

namespace mrrn {

template <typename T>
using MatRM = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapRM = Eigen::Map<MatRM<T>>;
template <typename T>
using CMapRM = Eigen::Map<const MatRM<T>>;

namespace detail {

// im2col for stride-1 "same" zero padding. col is (c_in*k*k) x (h*w),
// row-major.
template <typename T>
void im2col(const Tensor<T>& x, long batch, long k, std::vector<T>& col) {
  const long c = x.shape.c, h = x.shape.h, w = x.shape.w;
  const long pad = (k - 1) / 2;
  const long hw = h * w;
  col.assign(static_cast<std::size_t>(c * k * k * hw), T(0));
  const T* src = x.data.data() + batch * c * hw;
  for (long ci = 0; ci < c; ++ci) {
    for (long ki = 0; ki < k; ++ki) {
      for (long kj = 0; kj < k; ++kj) {
        T* dst = col.data() + ((ci * k + ki) * k + kj) * hw;
        const long dy = ki - pad, dx = kj - pad;
        for (long y = 0; y < h; ++y) {
          const long sy = y + dy;
          if (sy < 0 || sy >= h) continue;
          const long x0 = std::max<long>(0, -dx);
          const long x1 = std::min<long>(w, w - dx);
          const T* s = src + ci * hw + sy * w;
          T* d = dst + y * w;
          for (long xx = x0; xx < x1; ++xx) d[xx] = s[xx + dx];
        }
      }
    }
  }
}

// scatter-add adjoint of im2col
template <typename T>
void col2im_add(const std::vector<T>& col, long batch, long k, Tensor<T>& gx) {
  const long c = gx.shape.c, h = gx.shape.h, w = gx.shape.w;
  const long pad = (k - 1) / 2;
  const long hw = h * w;
  T* dst = gx.grad.data() + batch * c * hw;
  for (long ci = 0; ci < c; ++ci) {
    for (long ki = 0; ki < k; ++ki) {
      for (long kj = 0; kj < k; ++kj) {
        const T* src = col.data() + ((ci * k + ki) * k + kj) * hw;
        const long dy = ki - pad, dx = kj - pad;
        for (long y = 0; y < h; ++y) {
          const long sy = y + dy;
          if (sy < 0 || sy >= h) continue;
          const long x0 = std::max<long>(0, -dx);
          const long x1 = std::min<long>(w, w - dx);
          T* d = dst + ci * hw + sy * w;
          const T* s = src + y * w;
          for (long xx = x0; xx < x1; ++xx) d[xx + dx] += s[xx];
        }
      }
    }
  }
}

}  // namespace detail

// Cross-correlation with stride 1 and zero "same" padding; k in {1, 3}.
// weight: (c_out, c_in, k, k), bias: (1, c_out, 1, 1).
template <typename T>
Var<T> conv2d(Tape<T>* tape, const Var<T>& x, const Var<T>& weight, const Var<T>& bias) {
  const long k = weight->shape.h;
  if (k != 1 && k != 3) shape_error("conv2d: kernel size must be 1 or 3, got " + std::to_string(k));
  if (weight->shape.w != k) shape_error("conv2d: non-square kernel " + weight->shape.str());
  const long c_in = weight->shape.c, c_out = weight->shape.n;
  if (x->shape.c != c_in)
    shape_error("conv2d: input channels " + std::to_string(x->shape.c) +
                " do not match weight c_in " + std::to_string(c_in));
  if (bias->shape.c != c_out || bias->numel() != c_out)
    shape_error("conv2d: bias shape " + bias->shape.str() + " does not match c_out " +
                std::to_string(c_out));

  const long n = x->shape.n, h = x->shape.h, w = x->shape.w, hw = h * w;
  auto out = make_var<T>({n, c_out, h, w});

  std::vector<T> col;
  CMapRM<T> W(weight->data.data(), c_out, c_in * k * k);
  for (long b = 0; b < n; ++b) {
    MapRM<T> O(out->data.data() + b * c_out * hw, c_out, hw);
    if (k == 1) {
      CMapRM<T> X(x->data.data() + b * c_in * hw, c_in, hw);
      O.noalias() = W * X;
    } else {
      detail::im2col(*x, b, k, col);
      CMapRM<T> C(col.data(), c_in * k * k, hw);
      O.noalias() = W * C;
    }
    for (long co = 0; co < c_out; ++co) O.row(co).array() += bias->data[co];
  }

  if (tape) {
    Tape<T>* tp = tape;
    tape->record(out.get(), [=]() {
      const long K = c_in * k * k;
      CMapRM<T> Wm(weight->data.data(), c_out, K);
      const bool gx = tp->wants_grad(x.get());
      const bool gw = tp->wants_grad(weight.get());
      const bool gb = tp->wants_grad(bias.get());
      if (gx) x->ensure_grad();
      if (gw) weight->ensure_grad();
      if (gb) bias->ensure_grad();
      std::vector<T> colb, dcol;
      for (long b = 0; b < n; ++b) {
        CMapRM<T> dO(out->grad.data() + b * c_out * hw, c_out, hw);
        if (gb) {
          for (long co = 0; co < c_out; ++co) bias->grad[co] += dO.row(co).sum();
        }
        if (k == 1) {
          if (gw) {
            CMapRM<T> X(x->data.data() + b * c_in * hw, c_in, hw);
            MapRM<T> dW(weight->grad.data(), c_out, K);
            dW.noalias() += dO * X.transpose();
          }
          if (gx) {
            MapRM<T> dX(x->grad.data() + b * c_in * hw, c_in, hw);
            dX.noalias() += Wm.transpose() * dO;
          }
        } else {
          if (gw) {
            detail::im2col(*x, b, k, colb);
            CMapRM<T> C(colb.data(), K, hw);
            MapRM<T> dW(weight->grad.data(), c_out, K);
            dW.noalias() += dO * C.transpose();
          }
          if (gx) {
            dcol.assign(static_cast<std::size_t>(K * hw), T(0));
            MapRM<T> dC(dcol.data(), K, hw);
            dC.noalias() = Wm.transpose() * dO;
            detail::col2im_add(dcol, b, k, *x);
          }
        }
      }
    });
  }
  return out;
}

template <typename T>
Var<T> relu(Tape<T>* tape, const Var<T>& x) {
  auto out = make_var<T>(x->shape);
  const std::size_t m = x->data.size();
  for (std::size_t i = 0; i < m; ++i) out->data[i] = x->data[i] > T(0) ? x->data[i] : T(0);
  if (tape) {
    Tape<T>* tp = tape;
    tape->record(out.get(), [=]() {
      if (!tp->wants_grad(x.get())) return;
      x->ensure_grad();
      for (std::size_t i = 0; i < m; ++i)
        if (x->data[i] > T(0)) x->grad[i] += out->grad[i];
    });
  }
  return out;
}

// Per-channel running statistics for batch normalization. update_count stays
// 0 until the first training-mode pass; eval mode requires it to be > 0.
template <typename T>
struct BatchNormState {
  std::vector<T> running_mean;
  std::vector<T> running_var;
  long update_count = 0;
  T momentum = T(0.9);
  T eps = T(1e-5);

  explicit BatchNormState(long channels = 0)
      : running_mean(channels, T(0)), running_var(channels, T(1)) {}

  bool ready() const { return update_count > 0; }
};

template <typename T>
Var<T> batch_norm(Tape<T>* tape, const Var<T>& x, const Var<T>& gamma, const Var<T>& beta,
                  BatchNormState<T>& state, bool training) {
  const long n = x->shape.n, c = x->shape.c, h = x->shape.h, w = x->shape.w;
  if (gamma->numel() != c || beta->numel() != c)
    shape_error("batch_norm: gamma/beta length must equal channels " + std::to_string(c));
  if (static_cast<long>(state.running_mean.size()) != c)
    shape_error("batch_norm: state channels " + std::to_string(state.running_mean.size()) +
                " do not match input channels " + std::to_string(c));
  if (!training && !state.ready())
    throw std::runtime_error("batch_norm: eval mode with unpopulated running statistics");

  const long m = n * h * w;
  const long hw = h * w;
  auto out = make_var<T>(x->shape);
  auto mean = std::make_shared<std::vector<T>>(c, T(0));
  auto invstd = std::make_shared<std::vector<T>>(c, T(0));

  if (training) {
    // two-pass batch statistics per channel over (n, h, w)
    for (long ci = 0; ci < c; ++ci) {
      double s = 0.0;
      for (long b = 0; b < n; ++b) {
        const T* p = x->data.data() + (b * c + ci) * hw;
        for (long i = 0; i < hw; ++i) s += static_cast<double>(p[i]);
      }
      const double mu = s / static_cast<double>(m);
      double v = 0.0;
      for (long b = 0; b < n; ++b) {
        const T* p = x->data.data() + (b * c + ci) * hw;
        for (long i = 0; i < hw; ++i) {
          const double d = static_cast<double>(p[i]) - mu;
          v += d * d;
        }
      }
      v /= static_cast<double>(m);
      (*mean)[ci] = static_cast<T>(mu);
      (*invstd)[ci] = static_cast<T>(1.0 / std::sqrt(v + static_cast<double>(state.eps)));
      state.running_mean[ci] = state.momentum * state.running_mean[ci] +
                               (T(1) - state.momentum) * static_cast<T>(mu);
      state.running_var[ci] =
          state.momentum * state.running_var[ci] + (T(1) - state.momentum) * static_cast<T>(v);
    }
    state.update_count++;
  } else {
    for (long ci = 0; ci < c; ++ci) {
      (*mean)[ci] = state.running_mean[ci];
      (*invstd)[ci] = T(1) / std::sqrt(state.running_var[ci] + state.eps);
    }
  }

  for (long b = 0; b < n; ++b) {
    for (long ci = 0; ci < c; ++ci) {
      const T* p = x->data.data() + (b * c + ci) * hw;
      T* q = out->data.data() + (b * c + ci) * hw;
      const T mu = (*mean)[ci], is = (*invstd)[ci];
      const T g = gamma->data[ci], bt = beta->data[ci];
      for (long i = 0; i < hw; ++i) q[i] = (p[i] - mu) * is * g + bt;
    }
  }

  if (tape) {
    Tape<T>* tp = tape;
    tape->record(out.get(), [=]() {
      const bool gx = tp->wants_grad(x.get());
      const bool gg = tp->wants_grad(gamma.get());
      const bool gb = tp->wants_grad(beta.get());
      if (gx) x->ensure_grad();
      if (gg) gamma->ensure_grad();
      if (gb) beta->ensure_grad();
      for (long ci = 0; ci < c; ++ci) {
        const T mu = (*mean)[ci], is = (*invstd)[ci], g = gamma->data[ci];
        double dgamma = 0.0, dbeta = 0.0;
        for (long b = 0; b < n; ++b) {
          const T* xp = x->data.data() + (b * c + ci) * hw;
          const T* dy = out->grad.data() + (b * c + ci) * hw;
          for (long i = 0; i < hw; ++i) {
            dbeta += static_cast<double>(dy[i]);
            dgamma += static_cast<double>(dy[i]) * static_cast<double>((xp[i] - mu) * is);
          }
        }
        if (gg) gamma->grad[ci] += static_cast<T>(dgamma);
        if (gb) beta->grad[ci] += static_cast<T>(dbeta);
        if (!gx) continue;
        if (training) {
          const double inv_m = 1.0 / static_cast<double>(m);
          for (long b = 0; b < n; ++b) {
            const T* xp = x->data.data() + (b * c + ci) * hw;
            const T* dy = out->grad.data() + (b * c + ci) * hw;
            T* dx = x->grad.data() + (b * c + ci) * hw;
            for (long i = 0; i < hw; ++i) {
              const double xhat = static_cast<double>((xp[i] - mu) * is);
              const double t = static_cast<double>(dy[i]) - inv_m * (dbeta + xhat * dgamma);
              dx[i] += static_cast<T>(static_cast<double>(g) * static_cast<double>(is) * t);
            }
          }
        } else {
          for (long b = 0; b < n; ++b) {
            const T* dy = out->grad.data() + (b * c + ci) * hw;
            T* dx = x->grad.data() + (b * c + ci) * hw;
            for (long i = 0; i < hw; ++i) dx[i] += dy[i] * g * is;
          }
        }
      }
    });
  }
  return out;
}

// 2x2 max pooling, stride 2. Ties route the gradient to the first occurrence
// in row-major scan order.
template <typename T>
Var<T> maxpool2x2(Tape<T>* tape, const Var<T>& x) {
  const long n = x->shape.n, c = x->shape.c, h = x->shape.h, w = x->shape.w;
  if (h % 2 != 0 || w % 2 != 0)
    shape_error("maxpool2x2: spatial dims must be even, got " + x->shape.str());
  const long oh = h / 2, ow = w / 2;
  auto out = make_var<T>({n, c, oh, ow});
  auto argmax = std::make_shared<std::vector<std::int64_t>>(out->data.size());

  for (long b = 0; b < n; ++b) {
    for (long ci = 0; ci < c; ++ci) {
      const T* src = x->data.data() + (b * c + ci) * h * w;
      T* dst = out->data.data() + (b * c + ci) * oh * ow;
      std::int64_t* am = argmax->data() + (b * c + ci) * oh * ow;
      const std::int64_t base = (b * c + ci) * h * w;
      for (long y = 0; y < oh; ++y) {
        for (long xx = 0; xx < ow; ++xx) {
          long best = (2 * y) * w + 2 * xx;
          T bv = src[best];
          const long cand[3] = {(2 * y) * w + 2 * xx + 1, (2 * y + 1) * w + 2 * xx,
                                (2 * y + 1) * w + 2 * xx + 1};
          for (long idx : cand) {
            if (src[idx] > bv) {
              bv = src[idx];
              best = idx;
            }
          }
          dst[y * ow + xx] = bv;
          am[y * ow + xx] = base + best;
        }
      }
    }
  }

  if (tape) {
    Tape<T>* tp = tape;
    tape->record(out.get(), [=]() {
      if (!tp->wants_grad(x.get())) return;
      x->ensure_grad();
      for (std::size_t i = 0; i < out->data.size(); ++i)
        x->grad[static_cast<std::size_t>((*argmax)[i])] += out->grad[i];
    });
  }
  return out;
}

// Nearest-neighbor 2x upsampling; backward sums each 2x2 block.
template <typename T>
Var<T> upsample_nearest2x(Tape<T>* tape, const Var<T>& x) {
  const long n = x->shape.n, c = x->shape.c, h = x->shape.h, w = x->shape.w;
  auto out = make_var<T>({n, c, 2 * h, 2 * w});
  for (long bc = 0; bc < n * c; ++bc) {
    const T* src = x->data.data() + bc * h * w;
    T* dst = out->data.data() + bc * 4 * h * w;
    for (long y = 0; y < h; ++y) {
      for (long xx = 0; xx < w; ++xx) {
        const T v = src[y * w + xx];
        const long o = (2 * y) * (2 * w) + 2 * xx;
        dst[o] = v;
        dst[o + 1] = v;
        dst[o + 2 * w] = v;
        dst[o + 2 * w + 1] = v;
      }
    }
  }
  if (tape) {
    Tape<T>* tp = tape;
    tape->record(out.get(), [=]() {
      if (!tp->wants_grad(x.get())) return;
      x->ensure_grad();
      for (long bc = 0; bc < n * c; ++bc) {
        T* gsrc = x->grad.data() + bc * h * w;
        const T* gdst = out->grad.data() + bc * 4 * h * w;
        for (long y = 0; y < h; ++y) {
          for (long xx = 0; xx < w; ++xx) {
            const long o = (2 * y) * (2 * w) + 2 * xx;
            gsrc[y * w + xx] += gdst[o] + gdst[o + 1] + gdst[o + 2 * w] + gdst[o + 2 * w + 1];
          }
        }
      }
    });
  }
  return out;
}

// Channel-wise concatenation, a's channels first.
template <typename T>
Var<T> concat_channels(Tape<T>* tape, const Var<T>& a, const Var<T>& b) {
  if (a->shape.n != b->shape.n)
    shape_error("concat_channels: batch mismatch " + a->shape.str() + " vs " + b->shape.str());
  if (a->shape.h != b->shape.h || a->shape.w != b->shape.w)
    shape_error("concat_channels: spatial mismatch " + a->shape.str() + " vs " + b->shape.str());
  const long n = a->shape.n, ca = a->shape.c, cb = b->shape.c;
  const long h = a->shape.h, w = a->shape.w, hw = h * w;
  auto out = make_var<T>({n, ca + cb, h, w});
  for (long bi = 0; bi < n; ++bi) {
    std::copy(a->data.begin() + bi * ca * hw, a->data.begin() + (bi + 1) * ca * hw,
              out->data.begin() + bi * (ca + cb) * hw);
    std::copy(b->data.begin() + bi * cb * hw, b->data.begin() + (bi + 1) * cb * hw,
              out->data.begin() + (bi * (ca + cb) + ca) * hw);
  }
  if (tape) {
    Tape<T>* tp = tape;
    tape->record(out.get(), [=]() {
      if (tp->wants_grad(a.get())) {
        a->ensure_grad();
        for (long bi = 0; bi < n; ++bi)
          for (long i = 0; i < ca * hw; ++i)
            a->grad[bi * ca * hw + i] += out->grad[bi * (ca + cb) * hw + i];
      }
      if (tp->wants_grad(b.get())) {
        b->ensure_grad();
        for (long bi = 0; bi < n; ++bi)
          for (long i = 0; i < cb * hw; ++i)
            b->grad[bi * cb * hw + i] += out->grad[(bi * (ca + cb) + ca) * hw + i];
      }
    });
  }
  return out;
}

// Elementwise sum; used for the additive residual stream update.
template <typename T>
Var<T> add(Tape<T>* tape, const Var<T>& a, const Var<T>& b) {
  if (!(a->shape == b->shape))
    shape_error("add: shape mismatch " + a->shape.str() + " vs " + b->shape.str());
  auto out = make_var<T>(a->shape);
  for (std::size_t i = 0; i < out->data.size(); ++i) out->data[i] = a->data[i] + b->data[i];
  if (tape) {
    Tape<T>* tp = tape;
    tape->record(out.get(), [=]() {
      if (tp->wants_grad(a.get())) {
        a->ensure_grad();
        for (std::size_t i = 0; i < out->data.size(); ++i) a->grad[i] += out->grad[i];
      }
      if (tp->wants_grad(b.get())) {
        b->ensure_grad();
        for (std::size_t i = 0; i < out->data.size(); ++i) b->grad[i] += out->grad[i];
      }
    });
  }
  return out;
}

template <typename T>
Var<T> sum_all(Tape<T>* tape, const Var<T>& x) {
  auto out = make_var<T>({1, 1, 1, 1});
  double s = 0.0;
  for (T v : x->data) s += static_cast<double>(v);
  out->data[0] = static_cast<T>(s);
  if (tape) {
    Tape<T>* tp = tape;
    tape->record(out.get(), [=]() {
      if (!tp->wants_grad(x.get())) return;
      x->ensure_grad();
      const T g = out->grad[0];
      for (std::size_t i = 0; i < x->data.size(); ++i) x->grad[i] += g;
    });
  }
  return out;
}

// Mean over all pixels of -log softmax(logits)[target], stabilized by
// max-subtraction. Backward: (softmax - onehot) / (n*h*w).
template <typename T>
Var<T> softmax_ce_loss(Tape<T>* tape, const Var<T>& logits, const LabelMask& target) {
  const long n = logits->shape.n, K = logits->shape.c;
  const long h = logits->shape.h, w = logits->shape.w, hw = h * w;
  if (target.n != n || target.h != h || target.w != w)
    shape_error("softmax_ce_loss: target (" + std::to_string(target.n) + "," +
                std::to_string(target.h) + "," + std::to_string(target.w) +
                ") does not match logits " + logits->shape.str());
  for (std::uint8_t t : target.labels)
    if (t >= K)
      throw std::invalid_argument("softmax_ce_loss: label " + std::to_string(int(t)) +
                                  " out of range [0," + std::to_string(K) + ")");

  auto probs = std::make_shared<std::vector<T>>(logits->data.size());
  const long M = n * hw;
  double loss = 0.0;
  for (long b = 0; b < n; ++b) {
    const T* lp = logits->data.data() + b * K * hw;
    T* pp = probs->data() + b * K * hw;
    for (long i = 0; i < hw; ++i) {
      double mx = -1e300;
      for (long k = 0; k < K; ++k) mx = std::max(mx, static_cast<double>(lp[k * hw + i]));
      double se = 0.0;
      for (long k = 0; k < K; ++k) se += std::exp(static_cast<double>(lp[k * hw + i]) - mx);
      const double lse = std::log(se);
      for (long k = 0; k < K; ++k)
        pp[k * hw + i] = static_cast<T>(std::exp(static_cast<double>(lp[k * hw + i]) - mx - lse));
      const long t = target.labels[b * hw + i];
      loss += lse - (static_cast<double>(lp[t * hw + i]) - mx);
    }
  }
  auto out = make_var<T>({1, 1, 1, 1});
  out->data[0] = static_cast<T>(loss / static_cast<double>(M));

  if (tape) {
    Tape<T>* tp = tape;
    LabelMask tgt = target;
    tape->record(out.get(), [=]() {
      if (!tp->wants_grad(logits.get())) return;
      logits->ensure_grad();
      const T scale = out->grad[0] / static_cast<T>(M);
      for (long b = 0; b < n; ++b) {
        const T* pp = probs->data() + b * K * hw;
        T* gp = logits->grad.data() + b * K * hw;
        for (long i = 0; i < hw; ++i) {
          const long t = tgt.labels[b * hw + i];
          for (long k = 0; k < K; ++k) {
            T v = pp[k * hw + i];
            if (k == t) v -= T(1);
            gp[k * hw + i] += scale * v;
          }
        }
      }
    });
  }
  return out;
}

// Per-pixel argmax over the class dimension; ties resolve to the lowest index.
template <typename T>
LabelMask argmax_classes(const Tensor<T>& logits) {
  const long n = logits.shape.n, K = logits.shape.c;
  const long h = logits.shape.h, w = logits.shape.w, hw = h * w;
  LabelMask mask(n, h, w);
  for (long b = 0; b < n; ++b) {
    const T* lp = logits.data.data() + b * K * hw;
    for (long i = 0; i < hw; ++i) {
      long best = 0;
      T bv = lp[i];
      for (long k = 1; k < K; ++k) {
        if (lp[k * hw + i] > bv) {
          bv = lp[k * hw + i];
          best = k;
        }
      }
      mask.labels[b * hw + i] = static_cast<std::uint8_t>(best);
    }
  }
  return mask;
}

}  // namespace mrrn
