#include "uunet/vae.hpp"

#include <cmath>
#include <stdexcept>

#include "uunet/rng.hpp"

namespace uunet {

namespace {

double clamp_lv(double lv) {
  return lv < kLogVarMin ? kLogVarMin : (lv > kLogVarMax ? kLogVarMax : lv);
}

void check_pair(const GaussianLatent& a, const GaussianLatent& b,
                const char* op) {
  if (a.mu.shape() != b.mu.shape()) {
    throw std::invalid_argument(std::string(op) + ": latent dims differ, " +
                                a.mu.shape().str() + " vs " +
                                b.mu.shape().str());
  }
}

}  // namespace

void GaussianLatent::validate() const {
  if (mu.shape() != log_var.shape()) {
    throw std::invalid_argument("GaussianLatent: mu/log_var shape mismatch " +
                                mu.shape().str() + " vs " +
                                log_var.shape().str());
  }
  if (mu.shape().c < 1 || mu.shape().n < 1 || mu.shape().h != 1 ||
      mu.shape().w != 1) {
    throw std::invalid_argument("GaussianLatent: expected (N,M,1,1), got " +
                                mu.shape().str());
  }
  if (!mu.all_finite() || !log_var.all_finite()) {
    throw std::invalid_argument("GaussianLatent: non-finite parameters");
  }
}

LatentSample reparameterize(const GaussianLatent& q, std::uint64_t rng_seed) {
  q.validate();
  LatentSample s;
  s.eps = Tensor(q.mu.shape());
  Rng rng(rng_seed);
  rng.fill_normal(s.eps);
  s.z = Tensor(q.mu.shape());
  for (std::int64_t i = 0; i < s.z.size(); ++i) {
    s.z[i] = q.mu[i] + std::exp(0.5 * clamp_lv(q.log_var[i])) * s.eps[i];
  }
  return s;
}

double kl_to_standard_normal(const GaussianLatent& q) {
  q.validate();
  const std::int64_t n = q.mu.size();
  double acc = 0.0;
  for (std::int64_t i = 0; i < n; ++i) {
    const double lv = clamp_lv(q.log_var[i]);
    const double mu = q.mu[i];
    acc += 1.0 + lv - mu * mu - std::exp(lv);
  }
  return -0.5 * acc / static_cast<double>(q.batch());
}

double cross_kl(const GaussianLatent& q_gen, const GaussianLatent& q_dis) {
  q_gen.validate();
  q_dis.validate();
  check_pair(q_gen, q_dis, "cross_kl");
  const std::int64_t n = q_gen.mu.size();
  double acc = 0.0;
  for (std::int64_t i = 0; i < n; ++i) {
    const double lv_g = clamp_lv(q_gen.log_var[i]);
    const double lv_d = clamp_lv(q_dis.log_var[i]);
    const double dmu = q_dis.mu[i] - q_gen.mu[i];
    acc += 0.5 * (lv_g - lv_d) +
           (std::exp(lv_d) + dmu * dmu) / (2.0 * std::exp(lv_g)) - 0.5;
  }
  return acc / static_cast<double>(q_gen.batch());
}

double weighted_discriminator_kl(double kl_real, double kl_fake, double alpha,
                                 double beta) {
  if (alpha < 0.0 || beta < 0.0) {
    throw std::invalid_argument(
        "weighted_discriminator_kl: weights must be >= 0");
  }
  if (alpha + beta == 0.0) {
    throw std::invalid_argument(
        "weighted_discriminator_kl: alpha + beta must be > 0");
  }
  return (alpha * kl_real + beta * kl_fake) / (alpha + beta);
}

// --- graph builders ---------------------------------------------------------

Var reparameterize_graph(Tape& t, const GaussianVars& q, const Tensor& eps) {
  Var sigma = t.exp_op(t.affine(q.log_var, 0.5, 0.0));
  return t.add(q.mu, t.mul(sigma, t.constant(eps)));
}

Var kl_to_standard_normal_graph(Tape& t, const GaussianVars& q) {
  const int batch = t.val(q.mu).shape().n;
  // -(1/2N) sum (1 + lv - mu^2 - exp(lv))
  Var inner = t.affine(q.log_var, 1.0, 1.0);
  inner = t.sub(inner, t.square(q.mu));
  inner = t.sub(inner, t.exp_op(q.log_var));
  return t.affine(t.sum_all(inner), -0.5 / static_cast<double>(batch), 0.0);
}

Var cross_kl_graph(Tape& t, const GaussianVars& q_gen,
                   const GaussianVars& q_dis) {
  const Shape sg = t.val(q_gen.mu).shape();
  const Shape sd = t.val(q_dis.mu).shape();
  if (sg != sd) {
    throw std::invalid_argument("cross_kl_graph: latent dims differ, " +
                                sg.str() + " vs " + sd.str());
  }
  const int batch = sg.n;
  Var half_lv_diff = t.affine(t.sub(q_gen.log_var, q_dis.log_var), 0.5, 0.0);
  Var dmu2 = t.square(t.sub(q_dis.mu, q_gen.mu));
  Var num = t.add(t.exp_op(q_dis.log_var), dmu2);
  Var inv_two_var_g =
      t.affine(t.exp_op(t.affine(q_gen.log_var, -1.0, 0.0)), 0.5, 0.0);
  Var inner = t.add(half_lv_diff, t.mul(num, inv_two_var_g));
  inner = t.affine(inner, 1.0, -0.5);
  return t.affine(t.sum_all(inner), 1.0 / static_cast<double>(batch), 0.0);
}

}  // namespace uunet
