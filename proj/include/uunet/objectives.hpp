#pragma once

#include <string>

#include "uunet/graph.hpp"
#include "uunet/tensor.hpp"

namespace uunet {

inline constexpr double kScoreEps = 1e-7;

struct LossWeights {
  double lambda_dis = 0.01;
  double lambda_gkl = 0.01;
  double lambda_re = 100.0;
  double lambda_ckl = 0.01;

  void validate() const;
};

// Which side of the game the cross-KL term is charged to.
enum class CklSide { g, d, both };

CklSide ckl_side_from_string(const std::string& s);
std::string ckl_side_to_string(CklSide s);

// Raw per-step loss values before weighting.
struct LossParts {
  double d_loss_real = 0.0;
  double d_loss_fake = 0.0;
  double g_adv = 0.0;
  double l_re = 0.0;
  double l_gkl = 0.0;
  double l_dkl = 0.0;
  double l_ckl = 0.0;
};

struct LossBreakdown {
  double d_loss_real = 0.0;
  double d_loss_fake = 0.0;
  double g_adv = 0.0;
  double l_re = 0.0;
  double l_gkl = 0.0;
  double l_dkl = 0.0;
  double l_ckl = 0.0;
  double total_g = 0.0;
  double total_d = 0.0;

  bool all_finite() const;
  // Name of the first non-finite component, empty when all finite.
  std::string first_non_finite() const;
};

// Scores are (N,1,1,1) post-sigmoid values; exact 0/1 are clamped to
// [kScoreEps, 1-kScoreEps] before the log.
double discriminator_real_loss(const Tensor& d_real);   // -mean log D(x)
double discriminator_fake_loss(const Tensor& d_fake);   // -mean log(1-D(G(x)))
double discriminator_loss(const Tensor& d_real, const Tensor& d_fake);
double generator_adversarial_loss(const Tensor& d_fake);  // -mean log D(G(x))

// 1/2 * mean over batch of the summed squared pixel error.
double reconstruction_loss(const Tensor& x, const Tensor& x_r);

// total_g = g_adv + lambda_re*L_RE + lambda_gkl*L_Gkl (+ lambda_ckl*L_CKL)
// total_d = d_loss + lambda_dis*L_Dkl (+ lambda_ckl*L_CKL)
LossBreakdown total_losses(const LossParts& parts, const LossWeights& w,
                           CklSide side = CklSide::both);

// --- graph builders ---------------------------------------------------------

Var score_clamp_log(Tape& t, Var score);                  // log clamp(s)
Var adversarial_real_graph(Tape& t, Var score_real);      // -mean log s_r
Var adversarial_fake_graph(Tape& t, Var score_fake);      // -mean log(1-s_f)
Var generator_adversarial_graph(Tape& t, Var score_fake); // -mean log s_f
Var reconstruction_graph(Tape& t, Var y, Var target);

}  // namespace uunet
