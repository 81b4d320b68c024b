#include <gtest/gtest.h>

#include <cmath>

#include "mrrn/adam.hpp"

using namespace mrrn;

namespace {

Var<double> scalar(double v, bool rg = true) {
  return make_var<double>({1, 1, 1, 1}, std::vector<double>{v}, rg);
}

}  // namespace

TEST(Adam, ZeroGradientLeavesParamsUnchanged) {
  auto p = scalar(3.25);
  std::vector<Var<double>> params{p};
  AdamState<double> st;
  st.init(params);
  adam_step(params, st);
  EXPECT_DOUBLE_EQ(p->data[0], 3.25);
  p->ensure_grad();  // explicit zero gradient behaves the same
  adam_step(params, st);
  EXPECT_DOUBLE_EQ(p->data[0], 3.25);
  EXPECT_EQ(st.t, 2);
}

TEST(Adam, SingleStepMatchesHandComputation) {
  auto p = scalar(1.0);
  p->ensure_grad();
  p->grad[0] = 1.0;
  std::vector<Var<double>> params{p};
  AdamState<double> st;
  st.lr = 0.1;
  st.init(params);
  adam_step(params, st);
  // bias correction makes mhat = vhat = 1 on step 1, so the update is
  // lr / (1 + eps)
  EXPECT_NEAR(p->data[0], 1.0 - 0.1 / (1.0 + 1e-8), 1e-15);
}

TEST(Adam, FiveStepsOnQuadraticMatchOracle) {
  auto p = scalar(0.7);
  std::vector<Var<double>> params{p};
  AdamState<double> st;
  st.lr = 0.05;
  st.init(params);

  // independent long-double re-derivation of the same recurrence
  long double x = 0.7L, m = 0.0L, v = 0.0L;
  const long double b1 = 0.9L, b2 = 0.999L, lr = 0.05L, eps = 1e-8L;
  for (int t = 1; t <= 5; ++t) {
    p->ensure_grad();
    p->grad[0] = 2.0 * p->data[0];
    const long double g = 2.0L * x;
    adam_step(params, st);
    m = b1 * m + (1.0L - b1) * g;
    v = b2 * v + (1.0L - b2) * g * g;
    const long double mhat = m / (1.0L - std::pow(b1, t));
    const long double vhat = v / (1.0L - std::pow(b2, t));
    x -= lr * mhat / (std::sqrt(vhat) + eps);
    ASSERT_NEAR(p->data[0], static_cast<double>(x), 1e-12) << "step " << t;
    p->zero_grad();
  }
  EXPECT_EQ(st.t, 5);
  EXPECT_LT(p->data[0], 0.7);
}

TEST(Adam, BiasCorrectionBoostsEarlySteps) {
  // with a small constant gradient the first update should still be close to
  // the full learning rate, not scaled down by (1 - beta1)
  auto p = scalar(0.0);
  p->ensure_grad();
  p->grad[0] = 1e-3;
  std::vector<Var<double>> params{p};
  AdamState<double> st;
  st.lr = 0.01;
  st.init(params);
  adam_step(params, st);
  EXPECT_NEAR(p->data[0], -0.01, 1e-6);
}

TEST(Adam, MismatchedStateThrows) {
  auto p = scalar(1.0);
  auto q = scalar(2.0);
  std::vector<Var<double>> one{p};
  std::vector<Var<double>> two{p, q};
  AdamState<double> st;
  st.init(one);
  EXPECT_THROW(adam_step(two, st), std::invalid_argument);

  AdamState<double> st2;
  st2.init(two);
  st2.m[1].resize(3);
  EXPECT_THROW(adam_step(two, st2), std::invalid_argument);
}
