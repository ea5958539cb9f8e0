#include "uunet/objectives.hpp"

#include <cmath>
#include <stdexcept>

namespace uunet {

namespace {

double clamp_score(double s) {
  return s < kScoreEps ? kScoreEps : (s > 1.0 - kScoreEps ? 1.0 - kScoreEps : s);
}

void check_scores(const Tensor& s, const char* op) {
  if (s.shape().c != 1 || s.shape().h != 1 || s.shape().w != 1) {
    throw std::invalid_argument(std::string(op) +
                                ": expected (N,1,1,1) scores, got " +
                                s.shape().str());
  }
}

}  // namespace

void LossWeights::validate() const {
  if (lambda_dis < 0.0 || lambda_gkl < 0.0 || lambda_re < 0.0 ||
      lambda_ckl < 0.0) {
    throw std::invalid_argument("LossWeights: weights must be >= 0");
  }
}

CklSide ckl_side_from_string(const std::string& s) {
  if (s == "g") return CklSide::g;
  if (s == "d") return CklSide::d;
  if (s == "both") return CklSide::both;
  throw std::invalid_argument("unknown ckl_side '" + s +
                              "' (expected g|d|both)");
}

std::string ckl_side_to_string(CklSide s) {
  switch (s) {
    case CklSide::g: return "g";
    case CklSide::d: return "d";
    case CklSide::both: return "both";
  }
  return "both";
}

bool LossBreakdown::all_finite() const { return first_non_finite().empty(); }

std::string LossBreakdown::first_non_finite() const {
  const struct {
    const char* name;
    double v;
  } items[] = {
      {"d_loss_real", d_loss_real}, {"d_loss_fake", d_loss_fake},
      {"g_adv", g_adv},             {"l_re", l_re},
      {"l_gkl", l_gkl},             {"l_dkl", l_dkl},
      {"l_ckl", l_ckl},             {"total_g", total_g},
      {"total_d", total_d},
  };
  for (const auto& it : items) {
    if (!std::isfinite(it.v)) return it.name;
  }
  return {};
}

double discriminator_real_loss(const Tensor& d_real) {
  check_scores(d_real, "discriminator_real_loss");
  double acc = 0.0;
  for (std::int64_t i = 0; i < d_real.size(); ++i) {
    acc += std::log(clamp_score(d_real[i]));
  }
  return -acc / static_cast<double>(d_real.shape().n);
}

double discriminator_fake_loss(const Tensor& d_fake) {
  check_scores(d_fake, "discriminator_fake_loss");
  double acc = 0.0;
  for (std::int64_t i = 0; i < d_fake.size(); ++i) {
    acc += std::log(clamp_score(1.0 - d_fake[i]));
  }
  return -acc / static_cast<double>(d_fake.shape().n);
}

double discriminator_loss(const Tensor& d_real, const Tensor& d_fake) {
  return discriminator_real_loss(d_real) + discriminator_fake_loss(d_fake);
}

double generator_adversarial_loss(const Tensor& d_fake) {
  check_scores(d_fake, "generator_adversarial_loss");
  double acc = 0.0;
  for (std::int64_t i = 0; i < d_fake.size(); ++i) {
    acc += std::log(clamp_score(d_fake[i]));
  }
  return -acc / static_cast<double>(d_fake.shape().n);
}

double reconstruction_loss(const Tensor& x, const Tensor& x_r) {
  if (x.shape() != x_r.shape()) {
    throw std::invalid_argument("reconstruction_loss: shape mismatch " +
                                x.shape().str() + " vs " + x_r.shape().str());
  }
  double acc = 0.0;
  for (std::int64_t i = 0; i < x.size(); ++i) {
    const double d = x_r[i] - x[i];
    acc += d * d;
  }
  return 0.5 * acc / static_cast<double>(x.shape().n);
}

LossBreakdown total_losses(const LossParts& parts, const LossWeights& w,
                           CklSide side) {
  w.validate();
  LossBreakdown b;
  b.d_loss_real = parts.d_loss_real;
  b.d_loss_fake = parts.d_loss_fake;
  b.g_adv = parts.g_adv;
  b.l_re = parts.l_re;
  b.l_gkl = parts.l_gkl;
  b.l_dkl = parts.l_dkl;
  b.l_ckl = parts.l_ckl;
  const double ckl_g =
      (side == CklSide::g || side == CklSide::both) ? w.lambda_ckl * b.l_ckl
                                                    : 0.0;
  const double ckl_d =
      (side == CklSide::d || side == CklSide::both) ? w.lambda_ckl * b.l_ckl
                                                    : 0.0;
  b.total_g = b.g_adv + w.lambda_re * b.l_re + w.lambda_gkl * b.l_gkl + ckl_g;
  b.total_d = b.d_loss_real + b.d_loss_fake + w.lambda_dis * b.l_dkl + ckl_d;
  return b;
}

// --- graph builders ---------------------------------------------------------

Var score_clamp_log(Tape& t, Var score) {
  return t.log_op(t.clamp(score, kScoreEps, 1.0 - kScoreEps));
}

Var adversarial_real_graph(Tape& t, Var score_real) {
  const int n = t.val(score_real).shape().n;
  return t.affine(t.sum_all(score_clamp_log(t, score_real)),
                  -1.0 / static_cast<double>(n), 0.0);
}

Var adversarial_fake_graph(Tape& t, Var score_fake) {
  const int n = t.val(score_fake).shape().n;
  Var one_minus = t.affine(score_fake, -1.0, 1.0);
  return t.affine(t.sum_all(score_clamp_log(t, one_minus)),
                  -1.0 / static_cast<double>(n), 0.0);
}

Var generator_adversarial_graph(Tape& t, Var score_fake) {
  const int n = t.val(score_fake).shape().n;
  return t.affine(t.sum_all(score_clamp_log(t, score_fake)),
                  -1.0 / static_cast<double>(n), 0.0);
}

Var reconstruction_graph(Tape& t, Var y, Var target) {
  if (t.val(y).shape() != t.val(target).shape()) {
    throw std::invalid_argument("reconstruction_graph: shape mismatch " +
                                t.val(y).shape().str() + " vs " +
                                t.val(target).shape().str());
  }
  const int n = t.val(y).shape().n;
  Var sq = t.square(t.sub(y, target));
  return t.affine(t.sum_all(sq), 0.5 / static_cast<double>(n), 0.0);
}

}  // namespace uunet
