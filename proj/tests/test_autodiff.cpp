#include <doctest.h>

#include <cmath>
#include <functional>
#include <random>

#include "mmvr/autodiff.hpp"
#include "mmvr/optim.hpp"
#include "support/gradcheck.hpp"

using namespace mmvr;
using mmvr::testing::numeric_gradient;
using mmvr::testing::random_tensor;
using mmvr::testing::relative_error;

TEST_CASE("affine with identity weights passes the input through") {
  Tape t;
  const Var w = t.leaf(Tensor({2, 2}, {1, 0, 0, 1}));
  const Var b = t.leaf(Tensor::zeros({2}));
  const Var x = t.leaf(Tensor::vector({3, 4}));
  const Tensor& y = t.value(affine(t, w, b, x));
  CHECK(y.shape == Shape{2});
  CHECK(y[0] == 3.0);
  CHECK(y[1] == 4.0);
}

TEST_CASE("softmax of equal logits is uniform and cross-entropy is ln 2") {
  Tape t;
  const Var p = softmax(t, t.leaf(Tensor::vector({0, 0})));
  CHECK(t.value(p)[0] == 0.5);
  CHECK(t.value(p)[1] == 0.5);
  const Var ce = cross_entropy(t, p, t.leaf(Tensor::vector({0})));
  CHECK(t.value(ce).item() == doctest::Approx(std::log(2.0)).epsilon(1e-15));
  CHECK(t.value(ce).item() == doctest::Approx(0.6931).epsilon(1e-4));
}

TEST_CASE("cross-entropy skips rows with a negative target") {
  Tape t;
  const Var p = t.leaf(Tensor({2, 2}, {0.25, 0.75, 0.5, 0.5}));
  const Var ce = cross_entropy(t, p, t.leaf(Tensor::vector({1, -1})));
  CHECK(t.value(ce).item() == doctest::Approx(-std::log(0.75)));
}

TEST_CASE("shape mismatches are rejected naming the op and shapes") {
  Tape t;
  const Var a = t.leaf(Tensor::zeros({2}));
  const Var b = t.leaf(Tensor::zeros({3}));
  CHECK_THROWS_WITH_AS(add(t, a, b), "add: shape mismatch [2] vs [3]", Error);
  const Var w = t.leaf(Tensor::zeros({2, 5}));
  CHECK_THROWS_WITH_AS(affine(t, w, a, b), doctest::Contains("affine"), Error);
  CHECK_THROWS_AS(slice(t, a, 1, 3), Error);
  CHECK_THROWS_AS(reshape(t, a, {3}), Error);
  CHECK_THROWS_AS(cross_entropy(t, softmax(t, a), t.leaf(Tensor::vector({2}))), Error);
}

TEST_CASE("non-finite results abort the op") {
  Tape t;
  const Var p = t.leaf(Tensor::vector({0.0, 1.0}));
  CHECK_THROWS_AS(cross_entropy(t, p, t.leaf(Tensor::vector({0}))), NumericalError);
}

TEST_CASE("backward of sum is all ones") {
  Tape t;
  const Var x = t.leaf(Tensor({2, 3}, {1, -2, 3, 0.5, 7, -1}, true));
  const Gradients g = backward(t, sum(t, x));
  for (double v : g.at(x).data) CHECK(v == 1.0);
  CHECK(g.at(x).shape == Shape{2, 3});
}

TEST_CASE("backward of the mean of squares") {
  Tape t;
  const Var x = t.leaf(Tensor({2}, {1, 2}, true));
  const Gradients g = backward(t, mean(t, mul(t, x, x)));
  CHECK(g.at(x)[0] == doctest::Approx(1.0));
  CHECK(g.at(x)[1] == doctest::Approx(2.0));
}

TEST_CASE("backward rejects non-scalar losses and foreign variables") {
  Tape t, other;
  const Var x = t.leaf(Tensor({2}, {1, 2}, true));
  CHECK_THROWS_WITH_AS(backward(t, x), doctest::Contains("scalar"), Error);
  const Var y = other.leaf(Tensor::scalar(1.0, true));
  CHECK_THROWS_WITH_AS(backward(t, y), doctest::Contains("not recorded"), Error);
}

TEST_CASE("gradients accumulate over multiple uses") {
  Tape t;
  const Var x = t.leaf(Tensor::vector({3.0}, true));
  // x*x + x -> 2x + 1
  const Gradients g = backward(t, sum(t, add(t, mul(t, x, x), x)));
  CHECK(g.at(x)[0] == doctest::Approx(7.0));
}

TEST_CASE("constants and parameters without requires_grad get no gradient") {
  Tape t;
  const Tensor w = Tensor({1, 2}, {1, 1});
  const Var wv = t.constant(w);
  const Var b = t.leaf(Tensor::zeros({1}));
  const Var x = t.leaf(Tensor::vector({1, 2}, true));
  const Gradients g = backward(t, sum(t, affine(t, wv, b, x)));
  CHECK_FALSE(g.contains(wv));
  CHECK(g.contains(x));
  CHECK(g.size() == 1);
}

namespace {

struct OpCase {
  const char* name;
  std::vector<Shape> shapes;
  std::function<Var(Tape&, const std::vector<Var>&)> build;
  double lo = -1.0, hi = 1.0;
};

// sum(weights * op(inputs)) so every output element contributes
double weighted(Tape& t, Var y, const Tensor& weights, Var* loss) {
  const Var wv = t.leaf(weights);
  *loss = sum(t, mul(t, y, wv));
  return t.value(*loss).item();
}

}  // namespace

TEST_CASE("every op's gradient matches central differences on random inputs") {
  const std::vector<OpCase> cases = {
      {"affine", {{3, 4}, {3}, {2, 4}}, [](Tape& t, const auto& v) { return affine(t, v[0], v[1], v[2]); }},
      {"affine-vector", {{3, 4}, {3}, {4}}, [](Tape& t, const auto& v) { return affine(t, v[0], v[1], v[2]); }},
      {"relu", {{2, 5}}, [](Tape& t, const auto& v) { return relu(t, v[0]); }},
      {"tanh", {{2, 5}}, [](Tape& t, const auto& v) { return tanh(t, v[0]); }, -2.0, 2.0},
      {"sigmoid", {{2, 5}}, [](Tape& t, const auto& v) { return sigmoid(t, v[0]); }, -3.0, 3.0},
      {"softmax", {{3, 4}}, [](Tape& t, const auto& v) { return softmax(t, v[0]); }, -2.0, 2.0},
      {"add", {{2, 3}, {2, 3}}, [](Tape& t, const auto& v) { return add(t, v[0], v[1]); }},
      {"sub", {{2, 3}, {2, 3}}, [](Tape& t, const auto& v) { return sub(t, v[0], v[1]); }},
      {"mul", {{2, 3}, {2, 3}}, [](Tape& t, const auto& v) { return mul(t, v[0], v[1]); }},
      {"scale", {{4}}, [](Tape& t, const auto& v) { return scale(t, v[0], -2.5); }},
      {"concat", {{2, 2}, {2, 3}}, [](Tape& t, const auto& v) { return concat(t, {v[0], v[1]}); }},
      {"slice", {{2, 6}}, [](Tape& t, const auto& v) { return slice(t, v[0], 1, 4); }},
      {"reshape", {{2, 6}}, [](Tape& t, const auto& v) { return reshape(t, v[0], {3, 4}); }},
      {"sum", {{2, 3}}, [](Tape& t, const auto& v) { return sum(t, v[0]); }},
      {"mean", {{2, 3}}, [](Tape& t, const auto& v) { return mean(t, v[0]); }},
      {"cross_entropy",
       {{3, 4}},
       [](Tape& t, const auto& v) {
         return cross_entropy(t, softmax(t, v[0]), t.leaf(Tensor::vector({2, -1, 0})));
       },
       -2.0, 2.0},
  };

  std::mt19937_64 rng(20240611);
  for (const auto& c : cases) {
    CAPTURE(c.name);
    for (int trial = 0; trial < 100; ++trial) {
      std::vector<Tensor> inputs;
      for (const auto& s : c.shapes) {
        Tensor x = random_tensor(s, rng, c.lo, c.hi);
        // keep relu inputs away from the kink
        if (std::string(c.name) == "relu") {
          for (double& v : x.data) v += v >= 0 ? 0.01 : -0.01;
        }
        inputs.push_back(std::move(x));
      }
      Tape probe;
      std::vector<Var> pv;
      for (const auto& x : inputs) pv.push_back(probe.leaf(x));
      const Tensor weights = random_tensor(probe.value(c.build(probe, pv)).shape, rng);

      Tape t;
      std::vector<Var> vars;
      for (auto x : inputs) {
        x.requires_grad = true;
        vars.push_back(t.leaf(std::move(x)));
      }
      Var loss;
      weighted(t, c.build(t, vars), weights, &loss);
      const Gradients g = backward(t, loss);

      for (std::size_t k = 0; k < inputs.size(); ++k) {
        auto f = [&](const Tensor& xk) {
          Tape ft;
          std::vector<Var> fv;
          for (std::size_t j = 0; j < inputs.size(); ++j) fv.push_back(ft.leaf(j == k ? xk : inputs[j]));
          Var l;
          return weighted(ft, c.build(ft, fv), weights, &l);
        };
        CHECK(relative_error(g.at(vars[k]), numeric_gradient(f, inputs[k])) < 1e-4);
      }
    }
  }
}

TEST_CASE("backward is linear in the loss") {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 20; ++trial) {
    const Tensor x0 = random_tensor({5}, rng);
    const Tensor w0 = random_tensor({3, 5}, rng);
    auto build = [&](Tape& t, Var x, int which) {
      const Var w = t.leaf(w0);
      const Var b = t.leaf(Tensor::zeros({3}));
      const Var h = tanh(t, affine(t, w, b, x));
      const Var l1 = sum(t, mul(t, h, h));
      const Var l2 = mean(t, sigmoid(t, x));
      if (which == 1) return l1;
      if (which == 2) return l2;
      return add(t, l1, l2);
    };
    std::vector<Tensor> grads;
    for (int which : {1, 2, 3}) {
      Tape t;
      const Var x = t.leaf(Tensor(x0.shape, x0.data, true));
      grads.push_back(backward(t, build(t, x, which)).at(x));
    }
    for (std::size_t i = 0; i < x0.size(); ++i) {
      CHECK(std::abs(grads[2][i] - (grads[0][i] + grads[1][i])) <= 1e-12);
    }
  }
}

TEST_CASE("replaying the same computation is bit-identical") {
  std::mt19937_64 rng(3);
  const Tensor x0 = random_tensor({4, 6}, rng);
  const Tensor w0 = random_tensor({5, 6}, rng);
  auto run = [&] {
    Tape t;
    const Var x = t.leaf(Tensor(x0.shape, x0.data, true));
    const Var w = t.leaf(Tensor(w0.shape, w0.data, true));
    const Var y = softmax(t, affine(t, w, t.leaf(Tensor::zeros({5})), x));
    const Var l = cross_entropy(t, y, t.leaf(Tensor::vector({0, 1, 2, 3})));
    const Gradients g = backward(t, l);
    return std::make_tuple(t.value(l), g.at(x), g.at(w));
  };
  const auto [l1, gx1, gw1] = run();
  const auto [l2, gx2, gw2] = run();
  CHECK(l1.same_values(l2));
  CHECK(gx1.same_values(gx2));
  CHECK(gw1.same_values(gw2));
}

TEST_CASE("sgd_step") {
  Tensor p = Tensor::vector({1.0});
  Tape t;
  const Var v = t.parameter(p, true);
  const Gradients g = backward(t, sum(t, scale(t, v, 2.0)));  // grad = 2

  SUBCASE("param - lr * grad") {
    sgd_step({{&p, v}}, g, 0.5);
    CHECK(p[0] == 0.0);
  }
  SUBCASE("zero learning rate leaves params unchanged") {
    sgd_step({{&p, v}}, g, 0.0);
    CHECK(p[0] == 1.0);
  }
  SUBCASE("zero gradient leaves params unchanged") {
    Tensor q = Tensor::vector({1.0});
    Tape t2;
    const Var qv = t2.parameter(q, true);
    const Gradients g2 = backward(t2, sum(t2, scale(t2, qv, 0.0)));
    sgd_step({{&q, qv}}, g2, 0.5);
    CHECK(q[0] == 1.0);
  }
  SUBCASE("missing gradient is rejected and nothing is updated") {
    Tensor other = Tensor::vector({5.0});
    Tape t3;
    const Var ov = t3.parameter(other, true);
    CHECK_THROWS_AS(sgd_step({{&p, v}, {&other, ov}}, g, 0.5), Error);
    CHECK(p[0] == 1.0);
  }
  SUBCASE("shape-mismatched gradient is rejected") {
    Tensor wrong = Tensor::vector({1.0, 2.0});
    CHECK_THROWS_AS(sgd_step({{&wrong, v}}, g, 0.5), Error);
  }
}
