#include <random>

#include <gtest/gtest.h>

#include "freshcast/nn/module.hpp"
#include "gradcheck.hpp"

namespace fc = freshcast;
using fc::nn::Tensor;
using fc::testing::gradcheck;
using fc::testing::random_tensor;
using Inputs = std::vector<Tensor<double>>;

namespace {

// Projects an op's output to a scalar with fixed random weights so every
// output element contributes a distinct gradient.
Tensor<double> project(const Tensor<double>& y, std::uint64_t seed = 99) {
  std::mt19937_64 rng(seed);
  auto w = random_tensor(y.shape(), rng);
  w.set_requires_grad(false);
  return fc::nn::sum(fc::nn::mul(y, w));
}

constexpr double kTol = 1e-6;

}  // namespace

TEST(Autograd, BroadcastArithmetic) {
  std::mt19937_64 rng(1);
  auto a = random_tensor({2, 3, 4}, rng);
  auto b = random_tensor({3, 1}, rng, 0.5, 2.0);
  EXPECT_LT(gradcheck([](const Inputs& in) { return project(fc::nn::add(in[0], in[1])); }, {a, b}), kTol);
  EXPECT_LT(gradcheck([](const Inputs& in) { return project(fc::nn::sub(in[0], in[1])); }, {a, b}), kTol);
  EXPECT_LT(gradcheck([](const Inputs& in) { return project(fc::nn::mul(in[0], in[1])); }, {a, b}), kTol);
  EXPECT_LT(gradcheck([](const Inputs& in) { return project(fc::nn::div(in[0], in[1])); }, {a, b}), kTol);
}

TEST(Autograd, SameTensorOnBothSides) {
  std::mt19937_64 rng(2);
  auto a = random_tensor({5}, rng);
  EXPECT_LT(gradcheck([](const Inputs& in) { return project(fc::nn::mul(in[0], in[0])); }, {a}), kTol);
}

TEST(Autograd, Unary) {
  std::mt19937_64 rng(3);
  auto a = random_tensor({3, 5}, rng, -3.0, 3.0);
  auto pos = random_tensor({3, 5}, rng, 0.2, 3.0);
  EXPECT_LT(gradcheck([](const Inputs& in) { return project(fc::nn::sigmoid(in[0])); }, {a}), kTol);
  EXPECT_LT(gradcheck([](const Inputs& in) { return project(fc::nn::tanh(in[0])); }, {a}), kTol);
  EXPECT_LT(gradcheck([](const Inputs& in) { return project(fc::nn::gelu(in[0])); }, {a}), kTol);
  EXPECT_LT(gradcheck([](const Inputs& in) { return project(fc::nn::exp(in[0])); }, {a}), kTol);
  EXPECT_LT(gradcheck([](const Inputs& in) { return project(fc::nn::log(in[0])); }, {pos}), kTol);
  EXPECT_LT(gradcheck([](const Inputs& in) { return project(fc::nn::sqrt(in[0])); }, {pos}), kTol);
  EXPECT_LT(gradcheck([](const Inputs& in) { return project(fc::nn::relu(in[0])); }, {a}), kTol);
  EXPECT_LT(gradcheck([](const Inputs& in) { return project(fc::nn::relu6(fc::nn::scale(in[0], 3.0))); }, {a}), kTol);
}

TEST(Autograd, ReductionsAndShapes) {
  std::mt19937_64 rng(4);
  auto a = random_tensor({2, 3, 4}, rng);
  auto b = random_tensor({2, 2, 4}, rng);
  EXPECT_LT(gradcheck([](const Inputs& in) { return project(fc::nn::sum(in[0], 1, true)); }, {a}), kTol);
  EXPECT_LT(gradcheck([](const Inputs& in) { return project(fc::nn::mean(in[0], -1)); }, {a}), kTol);
  EXPECT_LT(gradcheck([](const Inputs& in) { return project(fc::nn::permute(in[0], {2, 0, 1})); }, {a}), kTol);
  EXPECT_LT(gradcheck([](const Inputs& in) { return project(fc::nn::reshape(in[0], {4, -1})); }, {a}), kTol);
  EXPECT_LT(gradcheck([](const Inputs& in) { return project(fc::nn::concat<double>({in[0], in[1]}, 1)); }, {a, b}),
            kTol);
  EXPECT_LT(gradcheck([](const Inputs& in) { return project(fc::nn::slice(in[0], 2, 1, 2)); }, {a}), kTol);
}

TEST(Autograd, PermuteMovesElements) {
  auto a = Tensor<double>::from({2, 3}, {0, 1, 2, 3, 4, 5});
  auto t = fc::nn::permute(a, {1, 0});
  EXPECT_EQ(t.shape(), (fc::nn::Shape{3, 2}));
  EXPECT_EQ(t.values(), (std::vector<double>{0, 3, 1, 4, 2, 5}));
}

TEST(Autograd, MatmulFamily) {
  std::mt19937_64 rng(5);
  auto a = random_tensor({3, 4}, rng);
  auto b = random_tensor({4, 2}, rng);
  auto bias = random_tensor({2}, rng);
  auto ba = random_tensor({2, 3, 4}, rng);
  auto bb = random_tensor({2, 4, 5}, rng);
  EXPECT_LT(gradcheck([](const Inputs& in) { return project(fc::nn::matmul(in[0], in[1])); }, {a, b}), kTol);
  EXPECT_LT(gradcheck([](const Inputs& in) { return project(fc::nn::bmm(in[0], in[1])); }, {ba, bb}), kTol);
  EXPECT_LT(gradcheck([](const Inputs& in) { return project(fc::nn::linear(in[0], in[1], in[2])); }, {ba, b, bias}),
            kTol);
}

TEST(Autograd, SoftmaxFamily) {
  std::mt19937_64 rng(6);
  auto a = random_tensor({3, 4, 2}, rng, -2.0, 2.0);
  EXPECT_LT(gradcheck([](const Inputs& in) { return project(fc::nn::softmax(in[0], 1)); }, {a}), kTol);
  EXPECT_LT(gradcheck([](const Inputs& in) { return project(fc::nn::log_softmax(in[0], -1)); }, {a}), kTol);
  const std::vector<int> targets{1, 0, 3};
  auto logits = random_tensor({3, 4}, rng, -2.0, 2.0);
  EXPECT_LT(gradcheck([&](const Inputs& in) { return fc::nn::cross_entropy_logits(in[0], targets); }, {logits}), kTol);
}

TEST(Autograd, SoftmaxShiftInvariance) {
  std::mt19937_64 rng(7);
  auto a = random_tensor({4, 8}, rng, -5.0, 5.0);
  auto shifted = fc::nn::add_scalar(a, 123.0);
  auto p = fc::nn::softmax(a);
  auto q = fc::nn::softmax(shifted);
  for (std::size_t i = 0; i < p.numel(); ++i) EXPECT_NEAR(p.data()[i], q.data()[i], 1e-6);
}

TEST(Autograd, Conv2dAndPooling) {
  std::mt19937_64 rng(8);
  auto x = random_tensor({2, 4, 6, 5}, rng);
  auto w = random_tensor({6, 2, 3, 3}, rng);
  auto b = random_tensor({6}, rng);
  EXPECT_LT(gradcheck(
                [](const Inputs& in) {
                  return project(fc::nn::conv2d(in[0], in[1], in[2], {.stride = 2, .padding = 1, .groups = 2}));
                },
                {x, w, b}),
            kTol);
  auto dw = random_tensor({4, 1, 3, 3}, rng);
  EXPECT_LT(gradcheck(
                [](const Inputs& in) {
                  return project(fc::nn::conv2d(in[0], in[1], Tensor<double>{}, {.stride = 1, .padding = 1, .groups = 4}));
                },
                {x, dw}),
            kTol);
  EXPECT_LT(gradcheck([](const Inputs& in) { return project(fc::nn::max_pool2d(in[0], 2, 2)); }, {x}), kTol);
  EXPECT_LT(gradcheck([](const Inputs& in) { return project(fc::nn::global_avg_pool(in[0])); }, {x}), kTol);
}

TEST(Autograd, Conv2dMatchesDirectSum) {
  // 1 image, 1 channel 3x3, 2x2 kernel of ones, no padding: each output is a 2x2 window sum.
  auto x = Tensor<double>::from({1, 1, 3, 3}, {1, 2, 3, 4, 5, 6, 7, 8, 9});
  auto w = Tensor<double>::full({1, 1, 2, 2}, 1.0);
  auto y = fc::nn::conv2d(x, w, Tensor<double>{});
  EXPECT_EQ(y.values(), (std::vector<double>{12, 16, 24, 28}));
}

TEST(Autograd, Normalization) {
  std::mt19937_64 rng(9);
  auto x = random_tensor({3, 2, 2, 3}, rng);
  auto g = random_tensor({2}, rng, 0.5, 1.5);
  auto b = random_tensor({2}, rng);
  auto rm = Tensor<double>::zeros({2});
  auto rv = Tensor<double>::full({2}, 1.0);
  EXPECT_LT(gradcheck([&](const Inputs& in) { return project(fc::nn::batch_norm2d(in[0], in[1], in[2], rm, rv, true)); },
                      {x, g, b}),
            1e-5);
  EXPECT_LT(gradcheck([&](const Inputs& in) { return project(fc::nn::batch_norm2d(in[0], in[1], in[2], rm, rv, false)); },
                      {x, g, b}),
            kTol);
  auto tokens = random_tensor({2, 3, 4}, rng);
  auto lg = random_tensor({4}, rng, 0.5, 1.5);
  auto lb = random_tensor({4}, rng);
  EXPECT_LT(gradcheck([](const Inputs& in) { return project(fc::nn::layer_norm(in[0], in[1], in[2])); }, {tokens, lg, lb}),
            1e-5);
}

TEST(Autograd, SquashGradientAndRange) {
  std::mt19937_64 rng(10);
  auto s = random_tensor({4, 3, 5}, rng, -2.0, 2.0);
  EXPECT_LT(gradcheck([](const Inputs& in) { return project(fc::nn::squash(in[0])); }, {s}), 1e-5);
  auto v = fc::nn::squash(fc::nn::scale(s, 50.0));
  for (std::size_t r = 0; r < 12; ++r) {
    double n2 = 0;
    for (std::size_t i = 0; i < 5; ++i) n2 += v.data()[r * 5 + i] * v.data()[r * 5 + i];
    EXPECT_GT(std::sqrt(n2), 0.0);
    EXPECT_LT(std::sqrt(n2), 1.0);
  }
}

TEST(Autograd, MseLossGradient) {
  std::mt19937_64 rng(11);
  auto p = random_tensor({6, 1}, rng, 0.0, 10.0);
  const std::vector<double> target{1, 2, 3, 4, 5, 6};
  EXPECT_LT(gradcheck([&](const Inputs& in) { return fc::nn::mse_loss<double>(in[0], target); }, {p}), kTol);
}

TEST(Autograd, NoGradSkipsHistory) {
  auto a = Tensor<double>::from({2}, {1, 2}, true);
  fc::nn::NoGradGuard guard;
  auto y = fc::nn::mul(a, a);
  EXPECT_FALSE(y.requires_grad());
}

TEST(Autograd, ErrorsOnShapeMismatch) {
  auto a = Tensor<double>::zeros({2, 3});
  auto b = Tensor<double>::zeros({4, 3});
  EXPECT_THROW(fc::nn::add(a, b), fc::ShapeError);
  EXPECT_THROW(fc::nn::matmul(a, b), fc::ShapeError);
  const std::vector<int> bad{0, 7};
  EXPECT_THROW(fc::nn::cross_entropy_logits(a, bad), fc::LabelError);
}
