#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "test_util.hpp"
#include "uunet/nn.hpp"
#include "uunet/vae.hpp"

using namespace uunet;
using namespace uunet::testutil;

namespace {

GaussianLatent make_latent(std::vector<double> mu, std::vector<double> lv) {
  GaussianLatent q;
  const int m = static_cast<int>(mu.size());
  q.mu = Tensor(Shape(1, m, 1, 1), std::move(mu));
  q.log_var = Tensor(Shape(1, m, 1, 1), std::move(lv));
  return q;
}

// Monte-Carlo KL(q || p) = E_{z~q}[log q(z) - log p(z)] with diagonal
// Gaussians; the independent oracle for the closed-form implementations.
double mc_kl(const GaussianLatent& q, const GaussianLatent& p, int n_samples,
             std::uint64_t seed) {
  Rng rng(seed);
  const std::int64_t m = q.mu.size();
  double acc = 0.0;
  for (int s = 0; s < n_samples; ++s) {
    double log_q = 0.0, log_p = 0.0;
    for (std::int64_t j = 0; j < m; ++j) {
      const double sd_q = std::exp(0.5 * q.log_var[j]);
      const double z = q.mu[j] + sd_q * rng.normal();
      const double dq = (z - q.mu[j]) / sd_q;
      log_q += -0.5 * dq * dq - 0.5 * q.log_var[j];
      const double sd_p = std::exp(0.5 * p.log_var[j]);
      const double dp = (z - p.mu[j]) / sd_p;
      log_p += -0.5 * dp * dp - 0.5 * p.log_var[j];
    }
    acc += log_q - log_p;
  }
  return acc / n_samples;
}

GaussianLatent standard_normal(int m) {
  return make_latent(std::vector<double>(m, 0.0), std::vector<double>(m, 0.0));
}

// Alternative algebraic route for KL(q1 || q2) between diagonal Gaussians.
double kl_closed_form(const GaussianLatent& q1, const GaussianLatent& q2) {
  double acc = 0.0;
  for (std::int64_t j = 0; j < q1.mu.size(); ++j) {
    const double v1 = std::exp(q1.log_var[j]);
    const double v2 = std::exp(q2.log_var[j]);
    const double dmu = q1.mu[j] - q2.mu[j];
    acc += 0.5 * (v1 / v2 + dmu * dmu / v2 - 1.0 + std::log(v2 / v1));
  }
  return acc;
}

}  // namespace

TEST_CASE("reparameterize: sigma to zero limit collapses z onto mu") {
  GaussianLatent q = make_latent({0.0, 1.5}, {-40.0, -40.0});
  LatentSample s = reparameterize(q, 3);
  CHECK(std::fabs(s.z[0] - 0.0) < 1e-4);
  CHECK(std::fabs(s.z[1] - 1.5) < 1e-4);
}

TEST_CASE("reparameterize is deterministic under a fixed seed") {
  GaussianLatent q = make_latent({0.3, -0.7, 2.0}, {0.1, -0.2, 0.5});
  LatentSample a = reparameterize(q, 42);
  LatentSample b = reparameterize(q, 42);
  CHECK(bitwise_equal(a.z, b.z));
  CHECK(bitwise_equal(a.eps, b.eps));
  LatentSample c = reparameterize(q, 43);
  CHECK(!bitwise_equal(a.z, c.z));
}

TEST_CASE("reparameterize: z reconstructs exactly from mu, log_var and eps") {
  GaussianLatent q = make_latent({0.3, -0.7}, {0.4, -1.1});
  LatentSample s = reparameterize(q, 7);
  for (int j = 0; j < 2; ++j) {
    const double z = q.mu[j] + std::exp(0.5 * q.log_var[j]) * s.eps[j];
    CHECK(s.z[j] == z);
  }
}

TEST_CASE("reparameterize: sample mean approaches mu") {
  GaussianLatent q = make_latent({1.2}, {0.0});
  const int n = 100000;
  double mean = 0.0;
  for (int i = 0; i < n; ++i) {
    mean += reparameterize(q, derive_seed(1000, i)).z[0];
  }
  mean /= n;
  // 3 sigma / sqrt(n) with sigma = 1
  CHECK(std::fabs(mean - 1.2) < 3.0 / std::sqrt(static_cast<double>(n)));
}

TEST_CASE("kl_to_standard_normal closed-form cases") {
  CHECK(kl_to_standard_normal(make_latent({0.0}, {0.0})) == 0.0);
  CHECK(kl_to_standard_normal(make_latent({1.0}, {0.0})) ==
        doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("kl_to_standard_normal matches Monte Carlo within 1%") {
  Rng rng(11);
  for (int c = 0; c < 5; ++c) {
    const int m = 1 + static_cast<int>(rng.below(3));
    std::vector<double> mu(m), lv(m);
    for (int j = 0; j < m; ++j) {
      mu[j] = rng.uniform(-2.0, 2.0);
      lv[j] = rng.uniform(-1.0, 1.0);
    }
    GaussianLatent q = make_latent(mu, lv);
    const double kl = kl_to_standard_normal(q);
    const double mc = mc_kl(q, standard_normal(m), 1000000, 500 + c);
    CHECK(rel_err(kl, mc, 0.05) < 0.01);
  }
}

TEST_CASE("kl_to_standard_normal is nonnegative, zero only at the prior") {
  Rng rng(13);
  for (int c = 0; c < 50; ++c) {
    const int m = 1 + static_cast<int>(rng.below(4));
    std::vector<double> mu(m), lv(m);
    for (int j = 0; j < m; ++j) {
      mu[j] = rng.uniform(-3.0, 3.0);
      lv[j] = rng.uniform(-4.0, 4.0);
    }
    const double kl = kl_to_standard_normal(make_latent(mu, lv));
    CHECK(kl >= 0.0);
  }
  // batch mean over two rows
  GaussianLatent q;
  q.mu = Tensor(Shape(2, 1, 1, 1), {0.0, 1.0});
  q.log_var = Tensor(Shape(2, 1, 1, 1), {0.0, 0.0});
  CHECK(kl_to_standard_normal(q) == doctest::Approx(0.25));
}

TEST_CASE("cross_kl: zero iff parameters match elementwise") {
  GaussianLatent a = make_latent({0.4, -0.3}, {0.2, -0.6});
  CHECK(cross_kl(a, a) == 0.0);
  GaussianLatent b = make_latent({0.4, -0.3}, {0.2, -0.5});
  CHECK(cross_kl(a, b) > 0.0);
}

TEST_CASE("cross_kl closed-form case from unit Gaussians") {
  // mu_G=0, sigma_G=1, mu_D=1, sigma_D=1: 0 + (1+1)/2 - 1/2 = 0.5
  GaussianLatent g = make_latent({0.0}, {0.0});
  GaussianLatent d = make_latent({1.0}, {0.0});
  CHECK(cross_kl(g, d) == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("cross_kl is KL(q_dis || q_gen) and asymmetric") {
  // sigma_a = 1, sigma_b = 2, both zero-mean
  GaussianLatent a = make_latent({0.0}, {0.0});
  GaussianLatent b = make_latent({0.0}, {std::log(4.0)});
  const double ab = cross_kl(a, b);  // KL(b || a)
  const double ba = cross_kl(b, a);  // KL(a || b)
  CHECK(ab == doctest::Approx(kl_closed_form(b, a)).epsilon(1e-12));
  CHECK(ba == doctest::Approx(kl_closed_form(a, b)).epsilon(1e-12));
  // oracle values: KL(N(0,4)||N(0,1)) = 1.5 - ln 2, KL(N(0,1)||N(0,4)) =
  // ln 2 - 3/8
  CHECK(ab == doctest::Approx(1.5 - std::log(2.0)).epsilon(1e-12));
  CHECK(ba == doctest::Approx(std::log(2.0) - 0.375).epsilon(1e-12));
  CHECK(ab != ba);
}

TEST_CASE("cross_kl matches Monte Carlo within 1%") {
  Rng rng(17);
  for (int c = 0; c < 5; ++c) {
    const int m = 1 + static_cast<int>(rng.below(3));
    std::vector<double> mu_g(m), lv_g(m), mu_d(m), lv_d(m);
    for (int j = 0; j < m; ++j) {
      mu_g[j] = rng.uniform(-1.5, 1.5);
      lv_g[j] = rng.uniform(-1.0, 1.0);
      mu_d[j] = rng.uniform(-1.5, 1.5);
      lv_d[j] = rng.uniform(-1.0, 1.0);
    }
    GaussianLatent qg = make_latent(mu_g, lv_g);
    GaussianLatent qd = make_latent(mu_d, lv_d);
    const double v = cross_kl(qg, qd);
    const double mc = mc_kl(qd, qg, 1000000, 900 + c);
    CHECK(rel_err(v, mc, 0.05) < 0.01);
  }
}

TEST_CASE("weighted_discriminator_kl") {
  CHECK(weighted_discriminator_kl(2.0, 4.0, 1.0, 1.0) == 3.0);
  CHECK(weighted_discriminator_kl(2.0, 4.0, 1.0, 0.0) == 2.0);
  CHECK(weighted_discriminator_kl(1.0, 3.0, 0.65, 0.35) ==
        doctest::Approx(0.65 * 1.0 + 0.35 * 3.0).epsilon(1e-12));
  CHECK_THROWS_AS(weighted_discriminator_kl(1.0, 1.0, 0.0, 0.0),
                  std::invalid_argument);
  CHECK_THROWS_AS(weighted_discriminator_kl(1.0, 1.0, -0.1, 0.5),
                  std::invalid_argument);
  // invariant under joint scaling of (alpha, beta)
  Rng rng(19);
  for (int c = 0; c < 20; ++c) {
    const double r = rng.uniform(0.0, 5.0), f = rng.uniform(0.0, 5.0);
    const double a = rng.uniform(0.01, 2.0), b = rng.uniform(0.01, 2.0);
    const double k = rng.uniform(0.1, 10.0);
    CHECK(weighted_discriminator_kl(r, f, a, b) ==
          doctest::Approx(weighted_discriminator_kl(r, f, k * a, k * b))
              .epsilon(1e-12));
  }
}

TEST_CASE("graph KL builders agree with the numeric implementations") {
  Rng rng(23);
  for (int c = 0; c < 10; ++c) {
    const int n = 1 + static_cast<int>(rng.below(3));
    const int m = 1 + static_cast<int>(rng.below(4));
    Tensor mu_g = random_tensor(Shape(n, m, 1, 1), 100 + c, -2.0, 2.0);
    Tensor lv_g = random_tensor(Shape(n, m, 1, 1), 200 + c, -1.5, 1.5);
    Tensor mu_d = random_tensor(Shape(n, m, 1, 1), 300 + c, -2.0, 2.0);
    Tensor lv_d = random_tensor(Shape(n, m, 1, 1), 400 + c, -1.5, 1.5);
    GaussianLatent qg{mu_g, lv_g};
    GaussianLatent qd{mu_d, lv_d};

    Tape t;
    GaussianVars vg{t.constant(mu_g), t.constant(lv_g)};
    GaussianVars vd{t.constant(mu_d), t.constant(lv_d)};
    CHECK(rel_err(t.val(kl_to_standard_normal_graph(t, vg)).item(),
                  kl_to_standard_normal(qg)) < 1e-12);
    CHECK(rel_err(t.val(cross_kl_graph(t, vg, vd)).item(),
                  cross_kl(qg, qd)) < 1e-12);
  }
}

TEST_CASE("KL gradients match finite differences at random points") {
  Rng rng(29);
  Param mu_g("mu_g", Shape(2, 3, 1, 1));
  Param lv_g("lv_g", Shape(2, 3, 1, 1));
  Param mu_d("mu_d", Shape(2, 3, 1, 1));
  Param lv_d("lv_d", Shape(2, 3, 1, 1));
  rng.fill_uniform(mu_g.value, -1.5, 1.5);
  rng.fill_uniform(lv_g.value, -1.0, 1.0);
  rng.fill_uniform(mu_d.value, -1.5, 1.5);
  rng.fill_uniform(lv_d.value, -1.0, 1.0);

  SUBCASE("kl_to_standard_normal") {
    auto build = [&](Tape& t) {
      GaussianVars q{t.leaf(mu_g), t.leaf(lv_g)};
      return kl_to_standard_normal_graph(t, q);
    };
    auto eval = [&]() {
      Tape t;
      return t.val(build(t)).item();
    };
    zero_grads({&mu_g, &lv_g});
    Tape t;
    t.backward(build(t));
    for (int k = 0; k < 20; ++k) {
      Param* p = k % 2 == 0 ? &mu_g : &lv_g;
      const std::int64_t i = static_cast<std::int64_t>(
          rng.below(static_cast<std::uint64_t>(p->value.size())));
      CHECK(rel_err(p->grad[i], central_diff(eval, &p->value[i])) < 1e-3);
    }
  }
  SUBCASE("cross_kl") {
    auto build = [&](Tape& t) {
      GaussianVars qg{t.leaf(mu_g), t.leaf(lv_g)};
      GaussianVars qd{t.leaf(mu_d), t.leaf(lv_d)};
      return cross_kl_graph(t, qg, qd);
    };
    auto eval = [&]() {
      Tape t;
      return t.val(build(t)).item();
    };
    std::vector<Param*> all{&mu_g, &lv_g, &mu_d, &lv_d};
    zero_grads(all);
    Tape t;
    t.backward(build(t));
    for (int k = 0; k < 20; ++k) {
      Param* p = all[k % 4];
      const std::int64_t i = static_cast<std::int64_t>(
          rng.below(static_cast<std::uint64_t>(p->value.size())));
      CHECK(rel_err(p->grad[i], central_diff(eval, &p->value[i])) < 1e-3);
    }
  }
}

TEST_CASE("latents reject shape mismatches and non-finite values") {
  GaussianLatent q;
  q.mu = Tensor(Shape(1, 2, 1, 1), {0.0, 0.0});
  q.log_var = Tensor(Shape(1, 3, 1, 1), {0.0, 0.0, 0.0});
  CHECK_THROWS_AS(kl_to_standard_normal(q), std::invalid_argument);
  GaussianLatent a = make_latent({0.0}, {0.0});
  GaussianLatent b = make_latent({0.0, 1.0}, {0.0, 0.0});
  CHECK_THROWS_AS(cross_kl(a, b), std::invalid_argument);
}
