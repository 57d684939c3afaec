#include <cmath>
#include <filesystem>
#include <fstream>

#include <gtest/gtest.h>

#include "elink/numerics/adam.hpp"
#include "elink/numerics/checkpoint.hpp"
#include "elink/numerics/ops.hpp"
#include "finite_difference.hpp"

using namespace elink;
using elink::testing::check_gradients;
using elink::testing::project;

namespace {

Tensor<double> randn(Shape shape, Rng& rng, double sd = 1.0) {
  Tensor<double> t(std::move(shape));
  for (double& x : t.data()) x = rng.normal(0.0, sd);
  return t;
}

// Runs `configs` random gradient checks of a unary tensor op on random shapes.
template <class Op>
void fd_unary(Op op, std::size_t configs, std::uint64_t seed, double sd = 1.0) {
  Rng rng(seed, 1);
  for (std::size_t c = 0; c < configs; ++c) {
    ParamStore<double> store;
    const std::size_t rows = 1 + rng.below(3), cols = 2 + rng.below(4);
    const ParamId x = store.add("x", randn({rows, cols}, rng, sd));
    const auto result = check_gradients(store, [&](Tape<double>& t, const ParamStore<double>& s) { return project(op(t.param(s, x)), c); }, rng);
    ASSERT_LT(result.relative_error, 1e-4) << "config " << c;
  }
}

}  // namespace

TEST(Tensor, DimensionErrorNamesBothShapes) {
  Tape<double> tape;
  const auto a = tape.constant(Tensor<double>({2, 3}));
  const auto b = tape.constant(Tensor<double>({3, 2}));
  try {
    ops::add(a, b);
    FAIL() << "expected DimensionError";
  } catch (const DimensionError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("[2, 3]"), std::string::npos) << msg;
    EXPECT_NE(msg.find("[3, 2]"), std::string::npos) << msg;
  }
}

TEST(Rng, ForkIsDeterministicAndDoesNotAdvanceParent) {
  Rng a(7, 3), b(7, 3);
  const auto pos = a.position();
  Rng fa = a.fork(11), fb = b.fork(11);
  EXPECT_EQ(a.position(), pos);
  for (int i = 0; i < 10; ++i) EXPECT_EQ(fa(), fb());
  EXPECT_NE(a.fork(1)(), a.fork(2)());
  EXPECT_EQ(a(), b());
}

TEST(Rng, UniformAndNormalMoments) {
  Rng rng(1, 0);
  double s = 0, s2 = 0, u = 0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    const double z = rng.normal();
    s += z;
    s2 += z * z;
    u += rng.uniform();
  }
  EXPECT_NEAR(s / n, 0.0, 0.01);
  EXPECT_NEAR(s2 / n, 1.0, 0.02);
  EXPECT_NEAR(u / n, 0.5, 0.005);
}

TEST(Tape, BackwardRequiresScalarAndRecording) {
  Tape<double> tape;
  const auto v = tape.constant(Tensor<double>::vector({1.0, 2.0}));
  EXPECT_THROW(tape.backward(v), std::invalid_argument);
  Tape<double> off(false);
  const auto s = off.constant(Tensor<double>::scalar(1.0));
  EXPECT_THROW(off.backward(s), std::logic_error);
}

TEST(Tape, ConstantsReceiveNoGradientAndUnreachableParamsAreZero) {
  ParamStore<double> store;
  const ParamId a = store.add("a", Tensor<double>::vector({1.0, 2.0}));
  const ParamId b = store.add("b", Tensor<double>::vector({3.0}));
  Tape<double> tape;
  const auto x = tape.param(store, a);
  const auto c = tape.constant(Tensor<double>::vector({5.0, 7.0}));
  tape.backward(ops::dot(x, c));
  EXPECT_FALSE(tape.needs_grad(c.id()));
  EXPECT_EQ(tape.param_grad(a), Tensor<double>::vector({5.0, 7.0}));
  EXPECT_EQ(tape.param_grad(b), Tensor<double>::vector({0.0}));
}

TEST(Ops, ForwardValuesMatchHandComputation) {
  Tape<double> t;
  const auto x = t.constant(Tensor<double>({2, 2}, {1, 2, 3, 4}));
  const auto w = t.constant(Tensor<double>({3, 2}, {1, 0, 0, 1, 1, 1}));
  EXPECT_EQ(ops::linear(x, w).value(), Tensor<double>({2, 3}, {1, 2, 3, 3, 4, 7}));
  EXPECT_EQ(ops::matmul(x, x).value(), Tensor<double>({2, 2}, {7, 10, 15, 22}));
  const auto s = ops::softmax(t.constant(Tensor<double>::vector({0.0, std::log(3.0)})));
  EXPECT_NEAR(s.value()[0], 0.25, 1e-15);
  EXPECT_NEAR(s.value()[1], 0.75, 1e-15);
  EXPECT_EQ(ops::leaky_relu(t.constant(Tensor<double>::vector({-2.0, 3.0})), 0.01).value(), Tensor<double>::vector({-0.02, 3.0}));
  const auto ln = ops::layer_norm(t.constant(Tensor<double>::vector({1.0, 3.0})), 0.0);
  EXPECT_NEAR(ln.value()[0], -1.0, 1e-12);
  EXPECT_NEAR(ln.value()[1], 1.0, 1e-12);
  EXPECT_THROW(ops::log(t.constant(Tensor<double>::vector({0.0}))), std::domain_error);
}

TEST(Ops, SoftmaxRowsSumToOneUnderRandomMasks) {
  Rng rng(3, 0);
  for (int c = 0; c < 200; ++c) {
    Tape<double> t;
    const std::size_t n = 1 + rng.below(9);
    std::vector<bool> mask(n);
    bool any = false;
    for (std::size_t i = 0; i < n; ++i) any |= (mask[i] = rng.uniform() < 0.6);
    if (!any) mask[rng.below(n)] = true;
    const auto p = ops::masked_softmax(t.constant(randn({n}, rng, 5.0)), mask);
    double total = 0;
    for (std::size_t i = 0; i < n; ++i) {
      if (!mask[i]) {
        EXPECT_EQ(p.value()[i], 0.0);
      }
      total += p.value()[i];
    }
    EXPECT_NEAR(total, 1.0, 1e-9);
  }
  Tape<double> t;
  EXPECT_THROW(ops::masked_softmax(t.constant(Tensor<double>::vector({1.0, 2.0})), {false, false}), std::invalid_argument);
}

TEST(Ops, Conv2dMatchesDirectSum) {
  Rng rng(5, 0);
  Tape<double> t;
  const Tensor<double> X = randn({2, 5, 4}, rng), K = randn({3, 2, 3, 3}, rng), B = randn({3}, rng);
  const auto y = ops::conv2d(t.constant(X), t.constant(K), t.constant(B));
  ASSERT_EQ(y.shape(), (Shape{3, 3, 2}));
  for (std::size_t o = 0; o < 3; ++o)
    for (std::size_t i = 0; i < 3; ++i)
      for (std::size_t j = 0; j < 2; ++j) {
        double s = B[o];
        for (std::size_t c = 0; c < 2; ++c)
          for (std::size_t a = 0; a < 3; ++a)
            for (std::size_t b = 0; b < 3; ++b) s += X[(c * 5 + i + a) * 4 + j + b] * K[((o * 2 + c) * 3 + a) * 3 + b];
        EXPECT_NEAR(y.value()[(o * 3 + i) * 2 + j], s, 1e-12);
      }
}

TEST(Ops, LstmCellMatchesHandRolledCellOverThreeSteps) {
  Rng rng(9, 0);
  const std::size_t I = 3, H = 2;
  const Tensor<double> Wih = randn({4 * H, I}, rng), Whh = randn({4 * H, H}, rng), b = randn({4 * H}, rng);
  auto sig = [](double z) { return 1.0 / (1.0 + std::exp(-z)); };
  std::vector<double> h(H, 0.0), c(H, 0.0);
  Tape<double> t;
  ops::LstmState<double> st{t.constant(Tensor<double>({H})), t.constant(Tensor<double>({H}))};
  for (int step = 0; step < 3; ++step) {
    const Tensor<double> x = randn({I}, rng);
    std::vector<double> z(4 * H);
    for (std::size_t r = 0; r < 4 * H; ++r) {
      z[r] = b[r];
      for (std::size_t k = 0; k < I; ++k) z[r] += Wih.at(r, k) * x[k];
      for (std::size_t k = 0; k < H; ++k) z[r] += Whh.at(r, k) * h[k];
    }
    for (std::size_t k = 0; k < H; ++k) {
      c[k] = sig(z[H + k]) * c[k] + sig(z[k]) * std::tanh(z[2 * H + k]);
      h[k] = sig(z[3 * H + k]) * std::tanh(c[k]);
    }
    st = ops::lstm_cell(t.constant(x), st, t.constant(Wih), t.constant(Whh), t.constant(b));
    for (std::size_t k = 0; k < H; ++k) {
      EXPECT_NEAR(st.hidden.value()[k], h[k], 1e-10);
      EXPECT_NEAR(st.cell.value()[k], c[k], 1e-10);
    }
  }
}

TEST(Ops, LstmCellWithZeroWeightsFollowsClosedForm) {
  Tape<double> t;
  const std::size_t H = 3;
  ops::LstmState<double> st{t.constant(Tensor<double>({H})), t.constant(Tensor<double>({H}))};
  const auto zero_ih = t.constant(Tensor<double>({4 * H, 2})), zero_hh = t.constant(Tensor<double>({4 * H, H}));
  const auto zero_b = t.constant(Tensor<double>({4 * H}));
  double c = 0.0;
  for (int step = 0; step < 3; ++step) {
    st = ops::lstm_cell(t.constant(Tensor<double>::vector({1.0, -1.0})), st, zero_ih, zero_hh, zero_b);
    c = 0.5 * c + 0.5 * std::tanh(0.0);
    EXPECT_NEAR(st.cell.value()[0], c, 1e-15);
    EXPECT_NEAR(st.hidden.value()[0], 0.5 * std::tanh(c), 1e-15);
  }
}

TEST(FiniteDifference, ElementwiseAndNonlinearOps) {
  fd_unary([](const Var<double>& x) { return ops::tanh(x); }, 100, 1);
  fd_unary([](const Var<double>& x) { return ops::sigmoid(x); }, 100, 2);
  fd_unary([](const Var<double>& x) { return ops::leaky_relu(x, 0.01); }, 100, 3);
  fd_unary([](const Var<double>& x) { return ops::exp(x); }, 100, 4, 0.5);
  fd_unary([](const Var<double>& x) { return ops::log(ops::exp(x)); }, 100, 5);
  fd_unary([](const Var<double>& x) { return ops::mul(x, x); }, 100, 6);
}

TEST(FiniteDifference, NormalizationOps) {
  fd_unary([](const Var<double>& x) { return ops::softmax(x); }, 100, 11);
  fd_unary([](const Var<double>& x) { return ops::log_softmax(x); }, 100, 12);
  fd_unary([](const Var<double>& x) { return ops::layer_norm(x, 1e-5); }, 100, 13);
  fd_unary([](const Var<double>& x) { return ops::entropy_from_log_probs(ops::log_softmax(x)); }, 100, 14);
}

TEST(FiniteDifference, LinearAlgebraAndIndexing) {
  Rng rng(21, 0);
  for (std::size_t c = 0; c < 100; ++c) {
    ParamStore<double> s;
    const std::size_t m = 1 + rng.below(4), k = 1 + rng.below(4), n = 1 + rng.below(4);
    const ParamId a = s.add("a", randn({m, k}, rng)), w = s.add("w", randn({n, k}, rng)), b = s.add("b", randn({n}, rng));
    const std::size_t row = rng.below(m);
    auto f = [&](Tape<double>& t, const ParamStore<double>& st) {
      const auto A = t.param(st, a), W = t.param(st, w);
      const auto y = ops::add_bias(ops::linear(A, W), t.param(st, b));
      const auto z = ops::matmul(y, W);
      const auto g = ops::concat<double>({ops::gather_row(A, row), ops::slice(ops::reshape(z, Shape{m * k}), 0, 1)});
      return ops::add(project(z, c), project(ops::broadcast_rows(g, 2), c + 1));
    };
    ASSERT_LT(check_gradients(s, f, rng).relative_error, 1e-4) << "config " << c;
  }
}

TEST(FiniteDifference, BinaryCrossEntropyAndConvolution) {
  Rng rng(31, 0);
  for (std::size_t c = 0; c < 100; ++c) {
    ParamStore<double> s;
    const ParamId x = s.add("x", randn({2, 4, 5}, rng)), k = s.add("k", randn({2, 2, 3, 3}, rng, 0.5)), b = s.add("b", randn({2}, rng));
    Tensor<double> targets({12});
    for (double& y : targets.data()) y = rng.uniform();
    auto f = [&](Tape<double>& t, const ParamStore<double>& st) {
      const auto y = ops::conv2d(t.param(st, x), t.param(st, k), t.param(st, b));
      return ops::bce_with_logits(ops::reshape(y, Shape{12}), targets);
    };
    ASSERT_LT(check_gradients(s, f, rng).relative_error, 1e-4) << "config " << c;
  }
}

TEST(FiniteDifference, LstmStepsThroughThreeInputs) {
  Rng rng(41, 0);
  for (std::size_t c = 0; c < 100; ++c) {
    ParamStore<double> s;
    const std::size_t I = 2, H = 3;
    const ParamId wih = s.add("wih", randn({4 * H, I}, rng)), whh = s.add("whh", randn({4 * H, H}, rng)), bb = s.add("b", randn({4 * H}, rng));
    const ParamId xs = s.add("xs", randn({3, I}, rng));
    auto f = [&](Tape<double>& t, const ParamStore<double>& st) {
      ops::LstmState<double> state{t.constant(Tensor<double>({H})), t.constant(Tensor<double>({H}))};
      for (std::size_t step = 0; step < 3; ++step) {
        state = ops::lstm_cell(ops::gather_row(t.param(st, xs), step), state, t.param(st, wih), t.param(st, whh), t.param(st, bb));
      }
      return ops::add(project(state.hidden, c), project(state.cell, c + 7));
    };
    ASSERT_LT(check_gradients(s, f, rng).relative_error, 1e-4) << "config " << c;
  }
}

TEST(Adam, FirstStepMovesEachWeightByLearningRate) {
  ParamStore<double> s;
  const ParamId p = s.add("p", Tensor<double>::vector({1.0, -1.0, 0.5}));
  s.grad(p) = Tensor<double>::vector({0.3, -2.0, 1e-3});
  adam_step(s, AdamConfig{0.1});
  // With bias correction, step one moves by lr * g / (|g| + eps') ≈ lr * sign(g).
  EXPECT_NEAR(s.value(p)[0], 0.9, 1e-6);
  EXPECT_NEAR(s.value(p)[1], -0.9, 1e-6);
  EXPECT_NEAR(s.value(p)[2], 0.4, 1e-4);
  EXPECT_EQ(s.adam_steps, 1u);
}

TEST(Adam, MatchesReferenceRecursionOverSeveralSteps) {
  ParamStore<double> s;
  const ParamId p = s.add("p", Tensor<double>::vector({2.0}));
  double w = 2.0, m = 0, v = 0;
  for (int step = 1; step <= 5; ++step) {
    const double g = 2 * w;  // d/dw w^2
    s.grad(p) = Tensor<double>::vector({2 * s.value(p)[0]});
    adam_step(s, AdamConfig{0.01});
    m = 0.9 * m + 0.1 * g;
    v = 0.999 * v + 0.001 * g * g;
    w -= 0.01 * (m / (1 - std::pow(0.9, step))) / (std::sqrt(v / (1 - std::pow(0.999, step))) + 1e-8);
    EXPECT_NEAR(s.value(p)[0], w, 1e-12);
  }
}

TEST(ParamStore, ClipGradNormScalesToMax) {
  ParamStore<double> s;
  const ParamId a = s.add("a", Tensor<double>({2}));
  s.grad(a) = Tensor<double>::vector({3.0, 4.0});
  EXPECT_DOUBLE_EQ(s.clip_grad_norm(1.0), 5.0);
  EXPECT_NEAR(s.grad_norm(), 1.0, 1e-12);
  EXPECT_THROW(s.add("a", Tensor<double>({1})), std::invalid_argument);
}

TEST(Checkpoint, RoundTripPreservesValuesAndManifest) {
  const auto dir = std::filesystem::temp_directory_path() / "elink_ckpt_test";
  std::filesystem::create_directories(dir);
  Rng rng(1, 0);
  ParamStore<double> s;
  s.add("w", randn({3, 2}, rng));
  s.add("b", randn({2}, rng));
  checkpoint::save(s, dir / "m.ckpt", 42, {{"note", "x"}});
  ParamStore<double> t;
  t.add("w", Tensor<double>({3, 2}));
  t.add("b", Tensor<double>({2}));
  checkpoint::load_into(t, dir / "m.ckpt");
  EXPECT_EQ(t.value(ParamId{0}), s.value(ParamId{0}));
  EXPECT_EQ(t.value(ParamId{1}), s.value(ParamId{1}));
  const auto m = checkpoint::read_manifest(dir / "m.ckpt");
  EXPECT_EQ(m.at("precision"), 64);
  EXPECT_EQ(m.at("seed"), 42);
  EXPECT_EQ(m.at("note"), "x");

  ParamStore<float> f;
  f.add("w", Tensor<float>({3, 2}));
  f.add("b", Tensor<float>({2}));
  checkpoint::load_into(f, dir / "m.ckpt");
  EXPECT_FLOAT_EQ(f.value(ParamId{0})[0], static_cast<float>(s.value(ParamId{0})[0]));

  ParamStore<double> wrong;
  wrong.add("w", Tensor<double>({2, 3}));
  wrong.add("b", Tensor<double>({2}));
  EXPECT_THROW(checkpoint::load_into(wrong, dir / "m.ckpt"), checkpoint::FormatError);
  std::ofstream(dir / "bad.ckpt") << "not a checkpoint";
  EXPECT_THROW(checkpoint::read_tensors<double>(dir / "bad.ckpt"), checkpoint::FormatError);
  std::filesystem::remove_all(dir);
}
