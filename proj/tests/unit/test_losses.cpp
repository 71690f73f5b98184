#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "reina/losses.hpp"
#include "reina/ops.hpp"
#include "reina/rng.hpp"
#include "test_util.hpp"

using namespace reina;
using ad::Tape;
using ad::Tensor;
using ad::Var;

namespace {

std::vector<double> uniform_vec(Rng& rng, std::size_t n, double lo, double hi) {
  std::vector<double> v(n);
  for (double& x : v) x = rng.uniform(lo, hi);
  return v;
}

std::vector<std::uint8_t> random_mask(Rng& rng, std::size_t n) {
  std::vector<std::uint8_t> m(n);
  std::size_t valid = 0;
  for (auto& x : m) valid += (x = rng.bernoulli(0.8) ? 1 : 0);
  if (valid < 2) m[0] = m[1] = 1;
  return m;
}

double value(Var v) { return v.value().item(); }

// Reference L_m on a plain vector.
bool monotone_within(const std::vector<double>& q, double eps) {
  double best = -std::numeric_limits<double>::infinity();
  for (double x : q) {
    if (x < best - eps) return false;
    best = std::max(best, x);
  }
  return true;
}

}  // namespace

TEST_CASE("policy loss equals the negated covariance proxy on random batches") {
  Rng rng(1);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 2 + rng.below(40);
    const auto q = uniform_vec(rng, n, 0, 1);
    const auto lp_part = uniform_vec(rng, n, -6, 0);
    const auto lp_full = uniform_vec(rng, n, -6, 0);
    const auto mask = random_mask(rng, n);
    const double bn_eps = trial % 2 ? 1e-5 : 0.0;

    std::vector<double> f_hat, qv;
    for (std::size_t i = 0; i < n; ++i) {
      if (!mask[i]) continue;
      f_hat.push_back(lp_full[i] - lp_part[i]);
      qv.push_back(q[i]);
    }
    double mean = 0.0, var = 0.0;
    for (double f : f_hat) mean += f;
    mean /= static_cast<double>(f_hat.size());
    for (double f : f_hat) var += (f - mean) * (f - mean);
    var /= static_cast<double>(f_hat.size());
    double proxy = 0.0;
    for (std::size_t i = 0; i < f_hat.size(); ++i) proxy += qv[i] * (f_hat[i] - mean) / std::sqrt(var + bn_eps);
    proxy /= static_cast<double>(f_hat.size());

    Tape tape;
    const double l_p = value(reina_policy_loss(tape.constant(Tensor::vector(q)), tape.constant(Tensor::vector(lp_part)),
                                               tape.constant(Tensor::vector(lp_full)), mask, bn_eps));
    CHECK(std::abs(l_p - -proxy) < 1e-12);
  }
}

TEST_CASE("total loss decomposes into its parts") {
  Rng rng(2);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 2 + rng.below(20);
    const auto q = uniform_vec(rng, n, 0, 1);
    const auto mask = random_mask(rng, n);
    const double lambda = rng.uniform(0, 1), eps = rng.uniform(0, 0.5);
    Tape tape;
    const Var qv = tape.constant(Tensor::vector(q));
    const Var l_p = reina_policy_loss(qv, tape.constant(Tensor::vector(uniform_vec(rng, n, -3, 0))),
                                      tape.constant(Tensor::vector(uniform_vec(rng, n, -3, 0))), mask, 1e-5);
    const Var l_m = monotonicity_loss(qv, eps, mask);
    const Var l_r = l2_policy_loss(qv, mask);
    const double total = value(reina_total(l_p, l_m, l_r, lambda));
    CHECK(std::abs(total - (value(l_p) + value(l_m) + lambda * value(l_r))) < 1e-12);
    CHECK(std::abs(total - reina_total(value(l_p), value(l_m), value(l_r), lambda)) < 1e-12);
  }
  Tape tape;
  const Var z = tape.constant(Tensor::scalar(0.0));
  CHECK_THROWS(reina_total(z, z, z, -1.0));
}

TEST_CASE("monotonicity loss vanishes exactly when every score clears the running max minus eps") {
  Rng rng(3);
  int zero_cases = 0, positive_cases = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t n = 1 + rng.below(10);
    const double eps = rng.uniform(0, 0.4);
    std::vector<double> q(n);
    // Mostly-increasing walks so both outcomes occur often.
    double x = rng.uniform(0, 0.5);
    for (double& v : q) {
      v = x;
      x += rng.uniform(-eps - 0.15, 0.3);
    }
    Tape tape;
    const double l_m = value(monotonicity_loss(tape.constant(Tensor::vector(q)), eps, {}));
    const bool ok = monotone_within(q, eps);
    CHECK((l_m == 0.0) == ok);
    CHECK(l_m >= 0.0);
    (ok ? zero_cases : positive_cases)++;
  }
  CHECK(zero_cases > 100);
  CHECK(positive_cases > 100);
}

TEST_CASE("masked positions do not affect the monotonicity and L2 terms") {
  Rng rng(4);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = 2 + rng.below(12);
    const auto q = uniform_vec(rng, n, 0, 1);
    const auto mask = random_mask(rng, n);
    std::vector<double> garbage = q, compact;
    for (std::size_t i = 0; i < n; ++i) {
      if (mask[i]) {
        compact.push_back(q[i]);
      } else {
        garbage[i] = rng.uniform(-5, 5);
      }
    }
    Tape tape;
    const Var a = tape.constant(Tensor::vector(q)), b = tape.constant(Tensor::vector(garbage));
    const Var c = tape.constant(Tensor::vector(compact));
    CHECK(value(monotonicity_loss(a, 0.1, mask)) == value(monotonicity_loss(b, 0.1, mask)));
    CHECK(value(monotonicity_loss(a, 0.1, mask)) == doctest::Approx(value(monotonicity_loss(c, 0.1, {}))).epsilon(1e-15));
    CHECK(value(l2_policy_loss(a, mask)) == value(l2_policy_loss(b, mask)));
    CHECK(value(l2_policy_loss(a, mask)) == doctest::Approx(value(l2_policy_loss(c, {}))).epsilon(1e-15));
  }
}

TEST_CASE("a gradient step on L_p raises the score with the most negative normalized delta") {
  Rng rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t n = 3 + rng.below(10);
    const Tensor q = Tensor::vector(uniform_vec(rng, n, 0.2, 0.8));
    const auto part = uniform_vec(rng, n, -4, 0), full = uniform_vec(rng, n, -4, 0);
    const auto ig = InfoGainBatch::compute(part, full, {}, 1e-5);
    const std::size_t target = static_cast<std::size_t>(
        std::min_element(ig.normalized.begin(), ig.normalized.end()) - ig.normalized.begin());
    Tape tape;
    const Var qv = tape.leaf(q, true);
    const Var l_p = reina_policy_loss(qv, tape.constant(Tensor::vector(part)), tape.constant(Tensor::vector(full)), {}, 1e-5);
    const auto g = tape.backward(l_p);
    const double stepped = q[target] - 0.1 * g[qv][target];
    CHECK(stepped > q[target]);
  }
}

TEST_CASE("info-gain batch statistics") {
  const std::vector<double> part{-3, -1, -2}, full{-1, -1, -1};
  const std::vector<std::uint8_t> mask{1, 1, 0};
  const auto ig = InfoGainBatch::compute(part, full, mask, 0.0);
  CHECK(ig.delta == std::vector<double>{-2, 0});
  CHECK(ig.normalized[0] == doctest::Approx(-1.0));
  CHECK(ig.normalized[1] == doctest::Approx(1.0));
  const auto flat = InfoGainBatch::compute(std::vector<double>{-2, -2, -2}, std::vector<double>{-1, -1, -1}, {}, 1e-5);
  for (double x : flat.normalized) CHECK(x == 0.0);
}

TEST_CASE("loss preconditions") {
  Tape tape;
  const Var one = tape.constant(Tensor::vector({0.5}));
  CHECK_THROWS(reina_policy_loss(one, one, one, {}, 1e-5));
  const Var two = tape.constant(Tensor::vector({0.5, 0.2}));
  const std::vector<std::uint8_t> single{1, 0};
  CHECK_THROWS(reina_policy_loss(two, two, two, single, 1e-5));
  const std::vector<std::uint8_t> short_mask{1};
  CHECK_THROWS(l2_policy_loss(two, short_mask));
  LossConfig bad;
  bad.lambda = -1;
  CHECK_THROWS(bad.validate());
  LossConfig good;
  CHECK_NOTHROW(good.validate());
  CHECK(valid_positions(single, 2) == std::vector<std::size_t>{0});
  CHECK(valid_positions({}, 3) == std::vector<std::size_t>{0, 1, 2});
}
