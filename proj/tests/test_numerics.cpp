#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <random>

#include "ddp/graph.hpp"
#include "oracles.hpp"

using namespace ddp;

namespace {

Tensor random_tensor(std::vector<int> shape, std::mt19937_64& rng, double scale = 1.0) {
  std::uniform_real_distribution<double> u(-scale, scale);
  Tensor t = Tensor::zeros(std::move(shape));
  for (double& v : t.data) v = u(rng);
  return t;
}

}  // namespace

TEST_CASE("matmul basics") {
  Tape tape;
  SUBCASE("identity times X is X") {
    auto eye = tape.input(Tensor({2, 2}, {1, 0, 0, 1}));
    auto x = tape.input(Tensor({2, 3}, {1, 2, 3, 4, 5, 6}));
    auto y = tape.matmul(eye, x);
    CHECK(tape.value(y).data == std::vector<double>{1, 2, 3, 4, 5, 6});
  }
  SUBCASE("hand-computed 2x2 by 2x1") {
    auto a = tape.input(Tensor({2, 2}, {1, 2, 3, 4}));
    auto b = tape.input(Tensor({2, 1}, {5, 6}));
    auto y = tape.matmul(a, b);
    CHECK(tape.value(y).data == std::vector<double>{17, 39});
  }
  SUBCASE("inner dimension mismatch is a shape error") {
    auto a = tape.input(Tensor::zeros({2, 3}));
    auto b = tape.input(Tensor::zeros({2, 3}));
    CHECK_THROWS_AS(tape.matmul(a, b), ShapeError);
  }
}

TEST_CASE("row softmax") {
  Tape tape;
  auto y = tape.row_softmax(tape.input(Tensor::zeros({1, 3})));
  for (double v : tape.value(y).data) CHECK(v == doctest::Approx(1.0 / 3.0).epsilon(1e-15));

  std::mt19937_64 rng(5);
  auto z = tape.row_softmax(tape.input(random_tensor({7, 9}, rng, 10.0)));
  for (int i = 0; i < 7; ++i) {
    double sum = 0.0;
    for (int j = 0; j < 9; ++j) sum += tape.value(z).at(i, j);
    CHECK(std::abs(sum - 1.0) <= 1e-12);
  }
}

TEST_CASE("append_ones appends an exact ones column") {
  Tape tape;
  std::mt19937_64 rng(6);
  auto a = tape.input(random_tensor({4, 3}, rng));
  auto y = tape.append_ones(a);
  const Tensor& v = tape.value(y);
  CHECK(v.shape == std::vector<int>{4, 4});
  for (int i = 0; i < 4; ++i) CHECK(v.at(i, 3) == 1.0);
}

TEST_CASE("cross entropy equals independent log-softmax oracle and is nonnegative") {
  Tape tape;
  std::mt19937_64 rng(8);
  Tensor logits = random_tensor({6, 14}, rng, 4.0);
  std::vector<int> targets;
  for (int i = 0; i < 6; ++i) targets.push_back(static_cast<int>(rng() % 14));
  auto ce = tape.cross_entropy(tape.input(logits), targets);
  for (int i = 0; i < 6; ++i) {
    std::vector<double> row(logits.data.begin() + i * 14, logits.data.begin() + (i + 1) * 14);
    double expected = oracle::log_softmax_ce(row, targets[i]);
    CHECK(tape.value(ce).at(i, 0) == doctest::Approx(expected).epsilon(1e-12));
    CHECK(tape.value(ce).at(i, 0) >= 0.0);
  }
}

TEST_CASE("non-finite output raises a numeric error") {
  Tape tape;
  auto big = tape.input(Tensor({1, 1}, {1e308}));
  CHECK_THROWS_AS(tape.add(big, big), NumericError);
}

TEST_CASE("backward of sum is all ones; disconnected parameters get zeros") {
  Tape tape;
  std::mt19937_64 rng(9);
  auto x = tape.param("x", random_tensor({3, 4}, rng));
  auto unused = tape.param("unused", random_tensor({2, 2}, rng));
  (void)unused;
  auto loss = tape.sum_all(x);
  GradientMap g = tape.backward(loss);
  for (double v : g.at("x").data) CHECK(v == 1.0);
  for (double v : g.at("unused").data) CHECK(v == 0.0);
}

TEST_CASE("backward rejects non-scalar loss") {
  Tape tape;
  auto x = tape.param("x", Tensor::zeros({2, 2}));
  CHECK_THROWS_AS(tape.backward(x), ShapeError);
}

TEST_CASE("grad_check on theta squared at theta=3") {
  Tape tape;
  auto theta = tape.param("theta", Tensor({1, 1}, {3.0}));
  auto loss = tape.mul(theta, theta);
  GradientMap g = tape.backward(loss);
  CHECK(g.at("theta").data[0] == doctest::Approx(6.0).epsilon(1e-12));
  CHECK(tape.grad_check(loss, 1e-5) <= 1e-6);
}

TEST_CASE("grad_check validates epsilon range") {
  Tape tape;
  auto theta = tape.param("theta", Tensor({1, 1}, {1.0}));
  auto loss = tape.mul(theta, theta);
  CHECK_THROWS_AS(tape.grad_check(loss, 1e-8), std::invalid_argument);
  CHECK_THROWS_AS(tape.grad_check(loss, 1e-2), std::invalid_argument);
}

TEST_CASE("loss independent of a parameter gives zero gradient and zero error") {
  Tape tape;
  auto theta = tape.param("theta", Tensor({1, 1}, {2.0}));
  auto other = tape.param("other", Tensor({1, 1}, {5.0}));
  (void)theta;
  auto loss = tape.mul(other, other);
  GradientMap g = tape.backward(loss);
  CHECK(g.at("theta").data[0] == 0.0);
  CHECK(tape.grad_check(loss, 1e-5) <= 1e-6);
}

// Per-op finite-difference sweep: every op embedded in a random graph,
// 50 random shapes/seeds each, relative error <= 1e-4 at eps=1e-5.
TEST_CASE("every op passes finite-difference gradient checks") {
  std::mt19937_64 rng(1234);
  auto dims = [&](int lo, int hi) { return lo + static_cast<int>(rng() % (hi - lo + 1)); };

  for (int trial = 0; trial < 50; ++trial) {
    int r = dims(1, 5), c = dims(1, 5), k = dims(1, 5);

    {  // matmul + add + transpose
      Tape tape;
      auto a = tape.param("a", random_tensor({r, k}, rng));
      auto b = tape.param("b", random_tensor({k, c}, rng));
      auto bias = tape.param("bias", random_tensor({1, c}, rng));
      auto y = tape.add(tape.matmul(a, b), bias);
      auto loss = tape.sum_all(tape.mul(y, y));
      CHECK(tape.grad_check(loss, 1e-5) <= 1e-4);

      Tape tape2;
      auto a2 = tape2.param("a", random_tensor({r, c}, rng));
      auto loss2 = tape2.sum_all(tape2.mul(tape2.transpose(a2), tape2.transpose(a2)));
      CHECK(tape2.grad_check(loss2, 1e-5) <= 1e-4);
    }
    {  // activations and softmax
      Tape tape;
      auto a = tape.param("a", random_tensor({r, c}, rng, 2.0));
      auto y = tape.row_softmax(tape.leaky_relu(tape.tanh_(tape.sigmoid(a))));
      auto w = tape.input(random_tensor({r, c}, rng));
      auto loss = tape.sum_all(tape.mul(y, w));
      CHECK(tape.grad_check(loss, 1e-5) <= 1e-4);
    }
    {  // concat both axes, gather, append_ones, reshape, scale
      Tape tape;
      auto a = tape.param("a", random_tensor({r, c}, rng));
      auto b = tape.param("b", random_tensor({r, c}, rng));
      auto cat0 = tape.concat({a, b}, 0);
      auto cat1 = tape.concat({a, b}, 1);
      std::vector<int> idx;
      for (int i = 0; i < 3; ++i) idx.push_back(static_cast<int>(rng() % (2 * r)));
      auto g = tape.gather_rows(cat0, idx);
      auto ones = tape.append_ones(g);
      auto resh = tape.reshape(cat1, {c, 2 * r});
      auto loss = tape.add(tape.scale(tape.sum_all(tape.mul(ones, ones)), 0.5),
                           tape.sum_all(tape.mul(resh, resh)));
      CHECK(tape.grad_check(loss, 1e-5) <= 1e-4);
    }
    {  // cross entropy
      Tape tape;
      auto a = tape.param("a", random_tensor({r, c + 1}, rng, 3.0));
      std::vector<int> targets;
      for (int i = 0; i < r; ++i) targets.push_back(static_cast<int>(rng() % (c + 1)));
      auto loss = tape.scale(tape.sum_all(tape.cross_entropy(a, targets)), 1.0 / r);
      CHECK(tape.grad_check(loss, 1e-5) <= 1e-4);
    }
    {  // block_row_dot
      Tape tape;
      int blocks = dims(1, 4);
      auto big = tape.param("big", random_tensor({r, blocks * k}, rng));
      auto small = tape.param("small", random_tensor({r, k}, rng));
      auto y = tape.block_row_dot(big, small, blocks);
      auto loss = tape.sum_all(tape.mul(y, y));
      CHECK(tape.grad_check(loss, 1e-5) <= 1e-4);
    }
  }
}

TEST_CASE("evaluation is deterministic for fixed inputs") {
  std::mt19937_64 rng(77);
  Tensor a = random_tensor({4, 4}, rng), b = random_tensor({4, 4}, rng);
  auto run = [&]() {
    Tape tape;
    auto y = tape.row_softmax(tape.matmul(tape.input(a), tape.tanh_(tape.input(b))));
    return tape.value(y).data;
  };
  CHECK(run() == run());
}
