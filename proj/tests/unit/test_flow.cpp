#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numbers>
#include <vector>

#include "../support/oracles.hpp"
#include "mixerflow/flow/bijection.hpp"
#include "mixerflow/flow/density.hpp"
#include "mixerflow/flow/distribution.hpp"
#include "mixerflow/flow/verify.hpp"
#include "mixerflow/layers/coupling.hpp"
#include "mixerflow/layers/linear_block.hpp"
#include "mixerflow/substrate/errors.hpp"
#include "mixerflow/train/checks.hpp"

using namespace mixerflow;

namespace {

// z = factors ⊙ x over [b, D].
class DiagonalScale : public Bijection {
 public:
  DiagonalScale(std::vector<double> factors) : Bijection("scale"), factors_(std::move(factors)) {}

  FlowResult forward(const Tensor& x) override {
    const Tensor f({factors_.size()}, factors_);
    double ld = 0;
    for (double v : factors_) ld += std::log(std::fabs(v));
    return {mul(x, f), Tensor::full({x.dim(0)}, ld)};
  }
  Tensor inverse(const Tensor& z) override {
    std::vector<double> inv;
    for (double v : factors_) inv.push_back(1.0 / v);
    return mul(z, Tensor({inv.size()}, inv));
  }

 private:
  std::vector<double> factors_;
};

// Fixed permutation of the last axis: z[i] = x[perm[i]].
class Permute : public Bijection {
 public:
  explicit Permute(std::vector<std::size_t> perm) : Bijection("perm"), perm_(std::move(perm)), inv_(perm_.size()) {
    for (std::size_t i = 0; i < perm_.size(); ++i) inv_[perm_[i]] = i;
  }
  FlowResult forward(const Tensor& x) override {
    return {gather(x, perm_, {perm_.size()}), zero_log_det(x.dim(0))};
  }
  Tensor inverse(const Tensor& z) override { return gather(z, inv_, {inv_.size()}); }

 private:
  std::vector<std::size_t> perm_;
  std::vector<std::size_t> inv_;
};

std::vector<double> as_vector(const Tensor& t) { return {t.values().begin(), t.values().end()}; }

const double kHalfLog2Pi = 0.5 * std::log(2 * std::numbers::pi);

}  // namespace

TEST_CASE("log_likelihood of simple chains") {
  StandardNormal base(1);
  FlowChain empty("empty");
  const auto r = log_likelihood(empty, base, Tensor({1, 1}, {0.0}));
  CHECK(std::fabs(r.log_prob.item() - (-kHalfLog2Pi)) < 1e-15);
  CHECK(std::fabs(r.log_prob.item() - (-0.918939)) < 1e-6);

  FlowChain doubled("doubled");
  doubled.append(std::make_unique<DiagonalScale>(std::vector<double>{2.0}));
  const auto d = log_likelihood(doubled, base, Tensor({1, 1}, {0.0}));
  CHECK(std::fabs(d.log_prob.item() - (-kHalfLog2Pi + std::numbers::ln2)) < 1e-15);
}

TEST_CASE("base log_prob at the origin") {
  StandardNormal base(7);
  const Tensor lp = base.log_prob(Tensor::zeros({2, 7}));
  CHECK(std::fabs(lp[0] + 3.5 * std::log(2 * std::numbers::pi)) < 1e-13);
}

TEST_CASE("chain log-det is the sum of member log-dets and inverse runs backwards") {
  FlowChain chain("c");
  chain.append(std::make_unique<DiagonalScale>(std::vector<double>{2.0, 3.0, 0.5}));
  chain.append(std::make_unique<Permute>(std::vector<std::size_t>{2, 0, 1}));
  chain.append(std::make_unique<DiagonalScale>(std::vector<double>{-1.5, 1.0, 4.0}));
  const Tensor x({2, 3}, {0.1, 0.2, 0.3, -1, 2, 5});
  const FlowResult r = chain.forward(x);
  const double expected = std::log(2.0 * 3.0 * 0.5) + std::log(1.5 * 4.0);
  CHECK(std::fabs(r.log_det[0] - expected) < 1e-14);
  CHECK(std::fabs(r.log_det[1] - expected) < 1e-14);
  // z[i] = x[perm[i]] after the first scale, then scaled again.
  CHECK(std::fabs(r.output[0] - (-1.5 * 0.3 * 0.5)) < 1e-15);
  CHECK(oracle::max_abs_diff(as_vector(chain.inverse(r.output)), as_vector(x)) < 1e-15);
}

TEST_CASE("random two-layer chain matches the brute-force Jacobian density") {
  Rng rng(41);
  FlowChain chain("chain");
  auto& lin = chain.append(std::make_unique<LinearBlock>("lin", 8, LinearMode::lu));
  lin.matrix().randomize(rng, 0.3);
  auto& cp = chain.append(make_affine_coupling("cp", 8, ScaleLaw::exp, {16, true, GeluKind::exact}, rng));
  perturb_parameters(cp, rng, 0.1);
  chain.set_training(false);
  NoGradGuard no_grad;

  StandardNormal base(8);
  for (int probe = 0; probe < 3; ++probe) {
    const std::vector<double> x = rng.normals(8);
    const auto forward = [&](const std::vector<double>& v) {
      return as_vector(chain.forward(Tensor({1, 1, 8}, v)).output);
    };
    const auto jac = oracle::jacobian(forward, x);
    const auto det = oracle::slogdet(jac, 8);
    const double expected = oracle::normal_log_density(forward(x)) + det.log_abs;
    const auto r = log_likelihood(chain, base, Tensor({1, 1, 8}, x));
    CHECK(std::fabs(r.log_prob.item() - expected) < 1e-6);
  }
}

TEST_CASE("uninitialized layers are reported") {
  class Pending : public Bijection {
   public:
    Pending() : Bijection("pending") {}
    FlowResult forward(const Tensor& x) override { return {x, zero_log_det(x.dim(0))}; }
    Tensor inverse(const Tensor& z) override { return z; }
    bool initialized() const override { return false; }
  };
  FlowChain chain("c");
  chain.append(std::make_unique<Pending>());
  StandardNormal base(2);
  CHECK_THROWS_AS(log_likelihood(chain, base, Tensor::zeros({1, 2})), InitializationError);
  CHECK_THROWS_AS(sample(chain, base, 1, 0), InitializationError);
}

TEST_CASE("bits_per_dim anchors") {
  CHECK(bits_per_dim(0.0, 3072, 256) == 8.0);
  CHECK(bits_per_dim(std::numbers::ln2, 1, 2) == 0.0);
  const double nats = (bits_per_dim(0.0, 3072) - bits_per_dim(-21.29, 3072));
  CHECK(std::fabs(std::fabs(nats) - 0.01) < 1e-5);
  const double per_hundredth = 0.01 * 3072 * std::numbers::ln2;
  CHECK(std::fabs(per_hundredth - 21.29) < 0.01);
  CHECK_THROWS_AS(bits_per_dim(0.0, 0), ContractError);

  const Tensor t = bits_per_dim(Tensor({2}, {0.0, -std::numbers::ln2 * 4}), 4, 256);
  CHECK(t[0] == 8.0);
  CHECK(std::fabs(t[1] - 9.0) < 1e-15);
}

TEST_CASE("sampling") {
  StandardNormal base(5);
  FlowChain empty("empty");
  const Tensor s = sample(empty, base, 4, 123);
  Rng rng(123);
  const Tensor direct = base.sample(4, rng);
  CHECK(as_vector(s) == as_vector(direct));
  CHECK(as_vector(sample(empty, base, 4, 123)) == as_vector(s));

  FlowChain perms("perms");
  perms.append(std::make_unique<Permute>(std::vector<std::size_t>{3, 1, 4, 0, 2}));
  perms.append(std::make_unique<Permute>(std::vector<std::size_t>{1, 2, 3, 4, 0}));
  const std::size_t n = 10000;
  const Tensor xs = sample(perms, base, n, 9);
  for (std::size_t j = 0; j < 5; ++j) {
    double m = 0;
    double sq = 0;
    for (std::size_t i = 0; i < n; ++i) {
      m += xs[i * 5 + j];
      sq += xs[i * 5 + j] * xs[i * 5 + j];
    }
    m /= n;
    const double var = sq / n - m * m;
    CHECK(var > 0.9);
    CHECK(var < 1.1);
  }
}

TEST_CASE("verify_bijection on trivial maps") {
  FlowChain identity("identity");
  const auto id = verify_bijection(identity, {4});
  CHECK(id.passed);
  CHECK(id.max_round_trip_error == 0.0);
  CHECK(id.max_log_det_error < 1e-9);

  DiagonalScale cancel({2.0, 0.5});
  CHECK(cancel.forward(Tensor({1, 2}, {1.0, 1.0})).log_det.item() == 0.0);
  const auto sc = verify_bijection(cancel, {2});
  CHECK(sc.passed);
  CHECK(sc.max_log_det_error < 1e-9);
}

TEST_CASE("verify_bijection on a random coupling and a wrong log-det") {
  Rng rng(8);
  auto cp = make_affine_coupling("cp", 8, ScaleLaw::exp, {16, true, GeluKind::exact}, rng);
  perturb_parameters(*cp, rng, 0.1);
  const auto ok = verify_bijection(*cp, {1, 8});
  CHECK(ok.passed);
  CHECK(ok.probes >= 20);
  CHECK(ok.max_round_trip_error < 1e-8);
  CHECK(ok.max_log_det_error < 1e-6);

  class Lying : public DiagonalScale {
   public:
    using DiagonalScale::DiagonalScale;
    FlowResult forward(const Tensor& x) override {
      FlowResult r = DiagonalScale::forward(x);
      return {r.output, add_scalar(r.log_det, 0.1)};
    }
  };
  Lying liar({1.5, 2.0});
  const auto bad = verify_bijection(liar, {2});
  CHECK_FALSE(bad.passed);
  CHECK(std::fabs(bad.max_log_det_error - 0.1) < 1e-6);
}

TEST_CASE("finite_difference_jacobian matches the oracle") {
  const auto fn = [](const Tensor& x) { return mul(x, x); };
  const Tensor x({1, 3}, {1.0, -2.0, 0.5});
  const auto j = finite_difference_jacobian(fn, x);
  const auto ref = oracle::jacobian([](const std::vector<double>& v) {
    std::vector<double> o;
    for (double a : v) o.push_back(a * a);
    return o;
  }, as_vector(x));
  CHECK(oracle::max_abs_diff(j, ref) < 1e-9);
}
