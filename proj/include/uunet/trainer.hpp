#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "uunet/datasets.hpp"
#include "uunet/objectives.hpp"
#include "uunet/topology.hpp"

namespace uunet {

// Interpretation of the (alpha, beta) pair for the discriminator KL term:
//   alpha_weight : L_Dkl = (alpha*kl_real + beta*kl_fake) / (alpha+beta)
//   lambda_scale : L_Dkl = (kl_real + kl_fake) / 2, lambda_dis scaled by alpha
enum class DisKlMode { alpha_weight, lambda_scale };

DisKlMode dis_kl_mode_from_string(const std::string& s);
std::string dis_kl_mode_to_string(DisKlMode m);

struct LossConfig {
  LossWeights weights;
  double alpha = 0.5;
  double beta = 0.5;
  CklSide ckl_side = CklSide::both;
  DisKlMode dis_kl_mode = DisKlMode::alpha_weight;

  void validate() const;
  double effective_lambda_dis() const {
    return dis_kl_mode == DisKlMode::lambda_scale ? weights.lambda_dis * alpha
                                                  : weights.lambda_dis;
  }
};

struct TrainConfig {
  int epochs = 200;
  int batch_size = 8;
  double lr_g = 2e-4;
  double lr_d = 2e-4;
  double adam_beta1 = 0.5;
  double adam_beta2 = 0.999;
  std::uint64_t seed = 42;
  int d_steps_per_g_step = 1;
  double coupling_scale = 1.0;
  // When true, the adversarial part of the discriminator loss also flows
  // through the taps into the generator (the literal fully-coupled reading);
  // otherwise only the KL terms do.
  bool include_adversarial = false;
  int checkpoint_every = 0;       // epochs between checkpoints, 0 = final only
  std::string checkpoint_path;    // empty disables checkpoint writing
  std::string resume_from;        // checkpoint to resume from
  std::uint64_t config_digest = 0;
  bool record_wall_time = true;
  bool debug_checks = false;      // per-step finite-gradient verification

  void validate() const;
};

struct Batch {
  Tensor x_in;      // model space, [-1,1]
  Tensor x_target;  // model space, [-1,1]
};

struct StepResult {
  LossBreakdown losses;
  double grad_norm_g_from_d = 0.0;  // L2 over all generator params, D-step
  double tap_grad_enc = 0.0;
  double tap_grad_latent = 0.0;
  double tap_grad_dec = 0.0;
  // Discriminator posteriors from the D-step (VAE models), exposed so the
  // recorded L_Dkl can be checked against independently recomputed KLs.
  GaussianLatent q_dis_real;
  GaussianLatent q_dis_fake;
  bool has_q = false;
};

struct EpochRecord {
  int epoch = 0;  // 1-based
  LossBreakdown losses;
  double grad_norm_g_from_d = 0.0;
  double wall_s = 0.0;
};

struct TrainCounters {
  std::int64_t train_steps = 0;
  std::int64_t d_updates = 0;
  std::int64_t g_updates = 0;
};

struct TrainResult {
  std::vector<EpochRecord> records;
  TrainCounters counters;
};

// Raised when a loss term turns non-finite; carries the offending term.
struct TrainAbort : std::runtime_error {
  std::string term;
  TrainAbort(const std::string& term_, const std::string& where)
      : std::runtime_error("training aborted: non-finite loss term '" + term_ +
                           "' " + where),
        term(term_) {}
};

// One discriminator update in isolation: generator forward for the fake (and
// a second pass over the real image for its taps), discriminator forward on
// both, backward with the coupling gates, Adam on D (and on G through the
// taps when the topology couples the update). The fake image into D is
// always detached; only tap paths can reach generator parameters.
StepResult discriminator_step(UUNetModel& model, const Batch& batch,
                              const TrainConfig& cfg, const LossConfig& loss,
                              std::uint64_t step_index, int substep = 0,
                              TrainCounters* counters = nullptr);

// One alternating step: d_steps_per_g_step discriminator updates, then one
// generator update on a fresh forward.
StepResult train_step(UUNetModel& model, const Batch& batch,
                      const TrainConfig& cfg, const LossConfig& loss,
                      std::uint64_t step_index, TrainCounters* counters = nullptr);

TrainResult train(UUNetModel& model, const data::Dataset& dataset,
                  const TrainConfig& cfg, const LossConfig& loss);

// Forward-only diagnostic: the discriminator's real-sample loss on one
// batch. Coupling flags change updates, not forward math, so this value is
// identical across coupling settings given identical weights.
double freeze_discriminator_probe(UUNetModel& model, const Batch& batch,
                                  std::uint64_t seed);

void write_loss_curve_csv(const std::string& path,
                          const std::vector<EpochRecord>& records);

// --- checkpointing -----------------------------------------------------------

struct CheckpointInfo {
  std::uint64_t config_digest = 0;
  std::uint64_t seed = 0;
  int epoch = 0;  // completed epochs
  std::vector<EpochRecord> records;
  TrainCounters counters;
};

// Versioned binary container: header (format version, config digest, seed,
// epoch, counters), epoch records, then named parameter blobs with Adam
// state and named buffers. Written to a temp file and renamed into place.
void save_checkpoint(const std::string& path, UUNetModel& model,
                     const CheckpointInfo& info);
CheckpointInfo load_checkpoint(const std::string& path, UUNetModel& model);

}  // namespace uunet
