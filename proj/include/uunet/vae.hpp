#pragma once

#include <cstdint>

#include "uunet/graph.hpp"
#include "uunet/tensor.hpp"

namespace uunet {

inline constexpr double kLogVarMin = -20.0;
inline constexpr double kLogVarMax = 20.0;

// Diagonal-Gaussian posterior parameters, one row per batch element.
// log_var stores log(sigma^2); a valid latent keeps it inside
// [kLogVarMin, kLogVarMax] so sigma stays positive and bounded.
struct GaussianLatent {
  Tensor mu;       // (N, M, 1, 1)
  Tensor log_var;  // (N, M, 1, 1)

  int batch() const { return mu.shape().n; }
  int dim() const { return mu.shape().c; }
  void validate() const;
};

struct LatentSample {
  Tensor z;
  Tensor eps;  // the noise draw, retained for reproducibility
};

// z = mu + exp(log_var / 2) * eps, eps ~ N(0, I) from the seeded stream.
LatentSample reparameterize(const GaussianLatent& q, std::uint64_t rng_seed);

// KL(q || N(0, I)) = -1/2 sum_j (1 + log var_j - mu_j^2 - var_j), summed over
// the latent dimension and averaged over the batch. Always >= 0.
double kl_to_standard_normal(const GaussianLatent& q);

// KL(q_dis || q_gen) per dimension:
//   log(sigma_G / sigma_D) + (sigma_D^2 + (mu_D - mu_G)^2) / (2 sigma_G^2) - 1/2
// summed over dimensions, averaged over the batch. Asymmetric, >= 0.
double cross_kl(const GaussianLatent& q_gen, const GaussianLatent& q_dis);

// (alpha * kl_real + beta * kl_fake) / (alpha + beta)
double weighted_discriminator_kl(double kl_real, double kl_fake, double alpha,
                                 double beta);

// --- graph builders ---------------------------------------------------------
// Same formulas over tape vars; log-var inputs are assumed already clamped by
// the producing heads.

struct GaussianVars {
  Var mu;
  Var log_var;
  bool valid() const { return mu.valid() && log_var.valid(); }
};

Var reparameterize_graph(Tape& t, const GaussianVars& q, const Tensor& eps);
Var kl_to_standard_normal_graph(Tape& t, const GaussianVars& q);
Var cross_kl_graph(Tape& t, const GaussianVars& q_gen,
                   const GaussianVars& q_dis);

}  // namespace uunet
