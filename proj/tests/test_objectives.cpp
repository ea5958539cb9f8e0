#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "test_util.hpp"
#include "uunet/nn.hpp"
#include "uunet/objectives.hpp"

using namespace uunet;
using namespace uunet::testutil;

namespace {

Tensor scores(std::vector<double> v) {
  const int n = static_cast<int>(v.size());
  return Tensor(Shape(n, 1, 1, 1), std::move(v));
}

// brute-force oracle over the batch, evaluated with long double accumulation
double oracle_d_loss(const std::vector<double>& real,
                     const std::vector<double>& fake) {
  long double acc = 0.0L;
  for (double r : real) {
    const double c = std::clamp(r, kScoreEps, 1.0 - kScoreEps);
    acc += -std::log(static_cast<long double>(c));
  }
  long double accf = 0.0L;
  for (double f : fake) {
    const double c = std::clamp(1.0 - f, kScoreEps, 1.0 - kScoreEps);
    accf += -std::log(static_cast<long double>(c));
  }
  return static_cast<double>(acc / real.size() + accf / fake.size());
}

}  // namespace

TEST_CASE("discriminator loss closed forms") {
  CHECK(discriminator_loss(scores({0.5}), scores({0.5})) ==
        doctest::Approx(2.0 * std::log(2.0)).epsilon(1e-9));
  // perfect discriminator drives the loss to ~0
  CHECK(discriminator_loss(scores({1.0 - 1e-9}), scores({1e-9})) <
        1e-5 + 2.0 * kScoreEps);
  // exact 0/1 scores stay finite through the clamp
  const double v = discriminator_loss(scores({0.0}), scores({1.0}));
  CHECK(std::isfinite(v));
  CHECK(v == doctest::Approx(-2.0 * std::log(kScoreEps)).epsilon(1e-9));
}

TEST_CASE("generator adversarial loss closed forms") {
  CHECK(generator_adversarial_loss(scores({1.0 - kScoreEps})) ==
        doctest::Approx(-std::log(1.0 - kScoreEps)).epsilon(1e-12));
  CHECK(generator_adversarial_loss(scores({0.5})) ==
        doctest::Approx(std::log(2.0)).epsilon(1e-12));
  // batch of mixed scores averages the per-element values
  const double mixed = generator_adversarial_loss(scores({0.2, 0.6, 0.9}));
  const double expect =
      -(std::log(0.2) + std::log(0.6) + std::log(0.9)) / 3.0;
  CHECK(mixed == doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("adversarial losses match the brute-force oracle on random batches") {
  Rng rng(5);
  for (int c = 0; c < 25; ++c) {
    const int n = 1 + static_cast<int>(rng.below(6));
    std::vector<double> real(n), fake(n);
    for (int i = 0; i < n; ++i) {
      real[i] = rng.uniform(0.0, 1.0);
      fake[i] = rng.uniform(0.0, 1.0);
    }
    CHECK(rel_err(discriminator_loss(scores(real), scores(fake)),
                  oracle_d_loss(real, fake)) < 1e-12);
  }
}

TEST_CASE("adversarial losses are nonnegative after clamping") {
  Rng rng(7);
  for (int c = 0; c < 40; ++c) {
    const double r = rng.uniform(0.0, 1.0), f = rng.uniform(0.0, 1.0);
    CHECK(discriminator_loss(scores({r}), scores({f})) >= 0.0);
    CHECK(generator_adversarial_loss(scores({f})) >= 0.0);
  }
}

TEST_CASE("reconstruction loss") {
  Tensor x = random_normal(Shape(2, 3, 4, 4), 9);
  CHECK(reconstruction_loss(x, x) == 0.0);

  Tensor a(Shape(1, 1, 1, 1), {0.0});
  Tensor b(Shape(1, 1, 1, 1), {2.0});
  CHECK(reconstruction_loss(a, b) == 2.0);  // 1/2 * 4

  // permuting the batch leaves the value unchanged
  Tensor x2(Shape(2, 1, 2, 2));
  Tensor y2(Shape(2, 1, 2, 2));
  Rng rng(10);
  rng.fill_normal(x2);
  rng.fill_normal(y2);
  Tensor x2p(x2.shape()), y2p(y2.shape());
  for (int i = 0; i < 4; ++i) {
    x2p[i] = x2[4 + i];
    x2p[4 + i] = x2[i];
    y2p[i] = y2[4 + i];
    y2p[4 + i] = y2[i];
  }
  CHECK(reconstruction_loss(x2, y2) ==
        doctest::Approx(reconstruction_loss(x2p, y2p)).epsilon(1e-12));

  Tensor bad(Shape(1, 1, 2, 2));
  CHECK_THROWS_AS(reconstruction_loss(a, bad), std::invalid_argument);
}

TEST_CASE("reconstruction matches a brute-force sum oracle") {
  Rng rng(11);
  for (int c = 0; c < 20; ++c) {
    const int n = 1 + static_cast<int>(rng.below(3));
    Tensor x = random_normal(Shape(n, 2, 3, 3), 100 + c);
    Tensor y = random_normal(Shape(n, 2, 3, 3), 200 + c);
    long double acc = 0.0L;
    for (std::int64_t i = 0; i < x.size(); ++i) {
      const long double d = y[i] - x[i];
      acc += d * d;
    }
    CHECK(rel_err(reconstruction_loss(x, y),
                  static_cast<double>(0.5L * acc / n)) < 1e-12);
  }
}

TEST_CASE("total_losses recombination and weight routing") {
  LossParts p;
  p.d_loss_real = 0.7;
  p.d_loss_fake = 0.9;
  p.g_adv = 0.6;
  p.l_re = 0.25;
  p.l_gkl = 1.3;
  p.l_dkl = 0.8;
  p.l_ckl = 0.4;

  SUBCASE("all weights zero reduce to the pure GAN losses") {
    LossWeights w{0.0, 0.0, 0.0, 0.0};
    LossBreakdown b = total_losses(p, w);
    CHECK(b.total_g == p.g_adv);
    CHECK(b.total_d == p.d_loss_real + p.d_loss_fake);
  }
  SUBCASE("components recombine to totals exactly") {
    LossWeights w{0.3, 0.02, 55.0, 0.11};
    LossBreakdown b = total_losses(p, w, CklSide::both);
    CHECK(b.total_g ==
          b.g_adv + w.lambda_re * b.l_re + w.lambda_gkl * b.l_gkl +
              w.lambda_ckl * b.l_ckl);
    CHECK(b.total_d == b.d_loss_real + b.d_loss_fake +
                           w.lambda_dis * b.l_dkl + w.lambda_ckl * b.l_ckl);
  }
  SUBCASE("ckl side routing") {
    LossWeights w{0.0, 0.0, 0.0, 2.0};
    LossBreakdown g = total_losses(p, w, CklSide::g);
    CHECK(g.total_g == p.g_adv + 2.0 * p.l_ckl);
    CHECK(g.total_d == p.d_loss_real + p.d_loss_fake);
    LossBreakdown d = total_losses(p, w, CklSide::d);
    CHECK(d.total_g == p.g_adv);
    CHECK(d.total_d == p.d_loss_real + p.d_loss_fake + 2.0 * p.l_ckl);
  }
  SUBCASE("doubling lambda_ckl doubles its contribution") {
    LossWeights w1{0.0, 0.0, 0.0, 0.5};
    LossWeights w2{0.0, 0.0, 0.0, 1.0};
    const double c1 = total_losses(p, w1).total_g - p.g_adv;
    const double c2 = total_losses(p, w2).total_g - p.g_adv;
    CHECK(c2 == doctest::Approx(2.0 * c1).epsilon(1e-12));
  }
  SUBCASE("negative weights are rejected") {
    LossWeights w;
    w.lambda_re = -1.0;
    CHECK_THROWS_AS(total_losses(p, w), std::invalid_argument);
  }
}

TEST_CASE("totals are affine in each lambda with the raw term as slope") {
  Rng rng(13);
  for (int c = 0; c < 10; ++c) {
    LossParts p;
    p.d_loss_real = rng.uniform(0.0, 2.0);
    p.d_loss_fake = rng.uniform(0.0, 2.0);
    p.g_adv = rng.uniform(0.0, 2.0);
    p.l_re = rng.uniform(0.0, 2.0);
    p.l_gkl = rng.uniform(0.0, 2.0);
    p.l_dkl = rng.uniform(0.0, 2.0);
    p.l_ckl = rng.uniform(0.0, 2.0);
    LossWeights w;
    w.lambda_re = rng.uniform(0.0, 10.0);
    w.lambda_gkl = rng.uniform(0.0, 1.0);
    w.lambda_dis = rng.uniform(0.0, 1.0);
    w.lambda_ckl = rng.uniform(0.0, 1.0);

    const double dlam = 0.37;
    LossWeights w2 = w;
    w2.lambda_re += dlam;
    CHECK(rel_err(total_losses(p, w2).total_g - total_losses(p, w).total_g,
                  dlam * p.l_re) < 1e-9);
    w2 = w;
    w2.lambda_dis += dlam;
    CHECK(rel_err(total_losses(p, w2).total_d - total_losses(p, w).total_d,
                  dlam * p.l_dkl) < 1e-9);
  }
}

TEST_CASE("graph adversarial and reconstruction losses match numeric") {
  Rng rng(17);
  for (int c = 0; c < 10; ++c) {
    const int n = 1 + static_cast<int>(rng.below(4));
    std::vector<double> rv(n), fv(n);
    for (int i = 0; i < n; ++i) {
      rv[i] = rng.uniform(0.001, 0.999);
      fv[i] = rng.uniform(0.001, 0.999);
    }
    Tensor r = scores(rv), f = scores(fv);
    Tape t;
    Var vr = t.constant(r), vf = t.constant(f);
    CHECK(rel_err(t.val(adversarial_real_graph(t, vr)).item() +
                      t.val(adversarial_fake_graph(t, vf)).item(),
                  discriminator_loss(r, f)) < 1e-12);
    CHECK(rel_err(t.val(generator_adversarial_graph(t, vf)).item(),
                  generator_adversarial_loss(f)) < 1e-12);

    Tensor x = random_normal(Shape(n, 2, 3, 3), 300 + c);
    Tensor y = random_normal(Shape(n, 2, 3, 3), 400 + c);
    CHECK(rel_err(
              t.val(reconstruction_graph(t, t.constant(x), t.constant(y)))
                  .item(),
              reconstruction_loss(y, x)) < 1e-12);
  }
}

TEST_CASE("graph loss gradients match finite differences") {
  Rng rng(19);
  Param s("scores", Shape(3, 1, 1, 1));
  rng.fill_uniform(s.value, 0.05, 0.95);
  Param x("x", Shape(2, 2, 3, 3));
  Param y("y", Shape(2, 2, 3, 3));
  rng.fill_normal(x.value);
  rng.fill_normal(y.value);

  SUBCASE("generator adversarial") {
    auto build = [&](Tape& t) {
      return generator_adversarial_graph(t, t.leaf(s));
    };
    auto eval = [&]() {
      Tape t;
      return t.val(build(t)).item();
    };
    zero_grads({&s});
    Tape t;
    t.backward(build(t));
    for (int k = 0; k < 20; ++k) {
      const std::int64_t i = static_cast<std::int64_t>(rng.below(3));
      CHECK(rel_err(s.grad[i], central_diff(eval, &s.value[i])) < 1e-3);
    }
  }
  SUBCASE("discriminator fake side") {
    auto build = [&](Tape& t) {
      return adversarial_fake_graph(t, t.leaf(s));
    };
    auto eval = [&]() {
      Tape t;
      return t.val(build(t)).item();
    };
    zero_grads({&s});
    Tape t;
    t.backward(build(t));
    for (int k = 0; k < 20; ++k) {
      const std::int64_t i = static_cast<std::int64_t>(rng.below(3));
      CHECK(rel_err(s.grad[i], central_diff(eval, &s.value[i])) < 1e-3);
    }
  }
  SUBCASE("reconstruction") {
    auto build = [&](Tape& t) {
      return reconstruction_graph(t, t.leaf(x), t.leaf(y));
    };
    auto eval = [&]() {
      Tape t;
      return t.val(build(t)).item();
    };
    zero_grads({&x, &y});
    Tape t;
    t.backward(build(t));
    for (int k = 0; k < 20; ++k) {
      Param* p = k % 2 == 0 ? &x : &y;
      const std::int64_t i = static_cast<std::int64_t>(
          rng.below(static_cast<std::uint64_t>(p->value.size())));
      CHECK(rel_err(p->grad[i], central_diff(eval, &p->value[i])) < 1e-3);
    }
  }
}

TEST_CASE("loss breakdown finiteness reporting names the offending term") {
  LossBreakdown b;
  CHECK(b.all_finite());
  b.l_dkl = std::numeric_limits<double>::infinity();
  CHECK(b.first_non_finite() == "l_dkl");
  b.l_dkl = 0.0;
  b.g_adv = std::nan("");
  CHECK(b.first_non_finite() == "g_adv");
}
