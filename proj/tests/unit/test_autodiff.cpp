#include <cmath>
#include <vector>

#include "reina/gradcheck.hpp"
#include "reina/gradcheck_suite.hpp"
#include "reina/ops.hpp"
#include "reina/optim.hpp"
#include "reina/rng.hpp"
#include "test_util.hpp"

using namespace reina;
using ad::Tape;
using ad::Tensor;
using ad::Var;

namespace {

Tensor random_vector(Rng& rng, std::size_t n, double scale) {
  Tensor t({n});
  for (double& x : t.data()) x = rng.uniform(-scale, scale);
  return t;
}

}  // namespace

TEST_CASE("log_softmax rows exponentiate to distributions") {
  Rng rng(3);
  Tape tape;
  for (int trial = 0; trial < 50; ++trial) {
    const Var out = ad::log_softmax(tape.constant(random_vector(rng, 1 + rng.below(20), 30.0)));
    double z = 0.0;
    for (double x : out.value().data()) z += std::exp(x);
    CHECK(std::abs(z - 1.0) < 1e-12);
  }
  Tensor m({4, 7});
  for (double& x : m.data()) x = rng.uniform(-10, 10);
  const Var rows = ad::log_softmax(tape.constant(m));
  for (std::size_t r = 0; r < 4; ++r) {
    double z = 0.0;
    for (std::size_t c = 0; c < 7; ++c) z += std::exp(rows.value().at(r, c));
    CHECK(std::abs(z - 1.0) < 1e-12);
  }
}

TEST_CASE("batch_norm centres and standardizes") {
  Rng rng(4);
  Tape tape;
  for (int trial = 0; trial < 50; ++trial) {
    const Tensor v = random_vector(rng, 2 + rng.below(30), 5.0);
    const Var out = ad::batch_norm(tape.constant(v), 0.0);
    double mean = 0.0, var = 0.0;
    for (double x : out.value().data()) mean += x;
    mean /= static_cast<double>(v.size());
    for (double x : out.value().data()) var += (x - mean) * (x - mean);
    var /= static_cast<double>(v.size());
    CHECK(std::abs(mean) < 1e-12);
    CHECK(std::abs(var - 1.0) < 1e-9);
    const Var eps_out = ad::batch_norm(tape.constant(v), 1e-5);
    double m2 = 0.0;
    for (double x : eps_out.value().data()) m2 += x;
    CHECK(std::abs(m2 / static_cast<double>(v.size())) < 1e-12);
  }
}

TEST_CASE("grad_check on a quadratic") {
  Rng rng(5);
  std::vector<Tensor> params{random_vector(rng, 8, 1.0)};
  const auto res = ad::grad_check(
      [](Tape&, std::span<const Var> p) { return ad::sum(ad::scale(ad::square(p[0]), 0.5)); }, params, 100, rng);
  CHECK(res.max_rel_error < 1e-9);
  CHECK(res.coordinates == 8);
}

TEST_CASE("every op and training loss passes the gradient check") {
  for (std::uint64_t seed : {1ULL, 2ULL}) {
    for (const auto& c : gradcheck_suite(seed)) {
      CAPTURE(c.name);
      CAPTURE(seed);
      CHECK(c.result.max_rel_error < 1e-6);
      CHECK(c.result.coordinates >= 50);
    }
  }
}

TEST_CASE("backward is bit-deterministic") {
  auto run = [] {
    Rng rng(11);
    Tape tape;
    Tensor a({6, 5}), b({5, 4});
    for (double& x : a.data()) x = rng.uniform(-1, 1);
    for (double& x : b.data()) x = rng.uniform(-1, 1);
    const Var va = tape.leaf(a, true), vb = tape.leaf(b, true);
    const Var loss = ad::mean(ad::gelu(ad::log_softmax(ad::matmul(va, vb))));
    const auto g = tape.backward(loss);
    return std::make_pair(g[va], g[vb]);
  };
  CHECK(run() == run());
}

TEST_CASE("gradients accumulate over shared subexpressions") {
  Tape tape;
  const Tensor xv = Tensor::vector({1.5, -2.0});
  const Var x = tape.leaf(xv, true);
  const Var y = ad::add(ad::mul(x, x), x);
  const auto g = tape.backward(ad::sum(y));
  CHECK(g[x][0] == doctest::Approx(4.0));
  CHECK(g[x][1] == doctest::Approx(-3.0));
}

TEST_CASE("constants and frozen leaves receive no gradient") {
  Tape tape;
  const Tensor wv = Tensor::vector({1.0, 2.0}), fv = Tensor::vector({3.0, 4.0});
  const Var w = tape.leaf(wv, true);
  const Var frozen = tape.leaf(fv, false);
  const auto g = tape.backward(ad::dot(w, frozen));
  CHECK(g.contains(w.id()));
  CHECK_FALSE(g.contains(frozen.id()));
  CHECK(g[w][0] == 3.0);
}

TEST_CASE("global-norm clipping") {
  std::vector<Tensor> grads{Tensor::vector({3.0, 0.0}), Tensor::vector({0.0, 4.0})};
  CHECK(ad::global_norm(grads) == 5.0);
  CHECK(ad::clip_global_norm(grads, 10.0) == 5.0);
  CHECK(grads[0][0] == 3.0);
  CHECK(ad::clip_global_norm(grads, 1.0) == 5.0);
  CHECK(ad::global_norm(grads) == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("ops reject mismatched shapes") {
  Tape tape;
  const Var a = tape.constant(Tensor({2, 3}));
  const Var b = tape.constant(Tensor({2, 3}));
  CHECK_THROWS(ad::matmul(a, b));
  CHECK_THROWS(ad::add(a, tape.constant(Tensor({3, 2}))));
  const std::vector<int> bad{5};
  CHECK_THROWS(ad::embedding(tape.constant(Tensor({4, 2})), bad));
}

TEST_CASE("dropout is inverted and identity at p = 0") {
  Rng rng(2);
  Tape tape;
  const Tensor x({1000}, 1.0);
  const Var same = ad::dropout(tape.constant(x), 0.0, rng);
  CHECK(same.value() == x);
  const Var out = ad::dropout(tape.constant(x), 0.25, rng);
  double total = 0.0;
  for (double v : out.value().data()) {
    CHECK((v == 0.0 || v == doctest::Approx(1.0 / 0.75)));
    total += v;
  }
  CHECK(total / 1000.0 == doctest::Approx(1.0).epsilon(0.1));
}

TEST_CASE("rng streams are reproducible and independent") {
  Rng a(42), b(42);
  for (int i = 0; i < 10; ++i) CHECK(a.next() == b.next());
  CHECK(Rng::derive(1, 1) != Rng::derive(1, 2));
  CHECK(Rng::derive(1, 1) == Rng::derive(1, 1));
  Rng c(7);
  const std::string state = c.state();
  const auto first = c.next();
  c.set_state(state);
  CHECK(c.next() == first);
}
