#include "uunet/trainer.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include "uunet/rng.hpp"
#include "uunet/vae.hpp"

namespace uunet {

DisKlMode dis_kl_mode_from_string(const std::string& s) {
  if (s == "alpha_weight") return DisKlMode::alpha_weight;
  if (s == "lambda_scale") return DisKlMode::lambda_scale;
  throw std::invalid_argument("unknown dis_kl_mode '" + s +
                              "' (expected alpha_weight|lambda_scale)");
}

std::string dis_kl_mode_to_string(DisKlMode m) {
  return m == DisKlMode::alpha_weight ? "alpha_weight" : "lambda_scale";
}

void LossConfig::validate() const {
  weights.validate();
  if (alpha < 0.0 || beta < 0.0 || alpha + beta == 0.0) {
    throw std::invalid_argument(
        "loss: alpha and beta must be >= 0 with alpha + beta > 0");
  }
}

void TrainConfig::validate() const {
  if (epochs < 1) throw std::invalid_argument("train: epochs must be >= 1");
  if (batch_size < 1) {
    throw std::invalid_argument("train: batch_size must be >= 1");
  }
  if (lr_g <= 0.0 || lr_d <= 0.0) {
    throw std::invalid_argument("train: learning rates must be > 0");
  }
  if (d_steps_per_g_step < 1) {
    throw std::invalid_argument("train: d_steps_per_g_step must be >= 1");
  }
  if (coupling_scale < 0.0) {
    throw std::invalid_argument("train: coupling_scale must be >= 0");
  }
}

namespace {

std::uint64_t step_seed(std::uint64_t base, std::uint64_t step, int substep,
                        int role) {
  return derive_seed(base, "step", step,
                     static_cast<std::uint64_t>(substep) * 8 +
                         static_cast<std::uint64_t>(role));
}

TapsVars gate_taps(Tape& t, const TapsVars& taps, const GateCtl* ctl) {
  TapsVars g;
  g.enc_skips.reserve(taps.enc_skips.size());
  for (Var v : taps.enc_skips) g.enc_skips.push_back(t.gate(v, ctl));
  if (taps.latent.valid()) g.latent = t.gate(taps.latent, ctl);
  g.dec_taps.reserve(taps.dec_taps.size());
  for (Var v : taps.dec_taps) g.dec_taps.push_back(t.gate(v, ctl));
  return g;
}

// Adam over only the params that actually received gradient; encodes
// "update generator parameters with their D-step gradients" without
// moment-decay side effects on unreached groups.
void adam_step_touched(const std::vector<Param*>& params,
                       const AdamConfig& cfg) {
  std::vector<Param*> touched;
  for (Param* p : params) {
    const Scalar* g = p->grad.data();
    for (std::int64_t i = 0; i < p->grad.size(); ++i) {
      if (g[i] != 0.0) {
        touched.push_back(p);
        break;
      }
    }
  }
  adam_step(touched, cfg);
}

void check_finite_grads(const std::vector<Param*>& params,
                        const std::string& where) {
  for (Param* p : params) {
    if (!p->grad.all_finite()) {
      throw TrainAbort("gradient(" + p->name + ")", where);
    }
  }
}

double now_seconds() {
  return std::chrono::duration<double>(
             std::chrono::steady_clock::now().time_since_epoch())
      .count();
}

}  // namespace

StepResult discriminator_step(UUNetModel& model, const Batch& batch,
                              const TrainConfig& cfg, const LossConfig& loss,
                              std::uint64_t step_index, int substep,
                              TrainCounters* counters) {
  const TopologyConfig& topo = model.topology();
  const LossWeights& w = loss.weights;
  const bool vae = model.vae();
  const bool coupled = topo.coupled_update && topo.any_connection();
  const std::string where = "at step " + std::to_string(step_index);

  std::vector<Param*> gen_all = model.gen_params();
  std::vector<Param*> dis_all = model.dis_params();
  std::vector<Param*> everything = model.all_params();

  const AdamConfig adam_d{cfg.lr_d, cfg.adam_beta1, cfg.adam_beta2, 1e-8};
  const AdamConfig adam_g{cfg.lr_g, cfg.adam_beta1, cfg.adam_beta2, 1e-8};

  StepResult res;
  LossParts parts;
  const int s = substep;

  Tape t;
  Var x_in = t.constant(batch.x_in);
  Var x_tg = t.constant(batch.x_target);

  auto gf =
      model.generator_forward(t, x_in, step_seed(cfg.seed, step_index, s, 0));
  Var fake = t.detach(gf.y);

  GateCtl gate{false, cfg.coupling_scale};
  TapsVars fake_taps;
  const TapsVars* fake_taps_p = nullptr;
  TapsVars real_taps;
  const TapsVars* real_taps_p = nullptr;
  if (topo.any_connection()) {
    fake_taps = gate_taps(t, gf.taps, &gate);
    fake_taps_p = &fake_taps;
    // taps for judging the real sample come from a generator pass over the
    // real image (no reconstruction loss attached to that pass)
    auto gr =
        model.generator_forward(t, x_tg, step_seed(cfg.seed, step_index, s, 1));
    real_taps = gate_taps(t, gr.taps, &gate);
    real_taps_p = &real_taps;
  }

  auto df_fake = model.discriminator_forward(
      t, fake, fake_taps_p, step_seed(cfg.seed, step_index, s, 2));
  auto df_real = model.discriminator_forward(
      t, x_tg, real_taps_p, step_seed(cfg.seed, step_index, s, 3));

  Var adv_real = adversarial_real_graph(t, df_real.score);
  Var adv_fake = adversarial_fake_graph(t, df_fake.score);
  Var adv = t.add(adv_real, adv_fake);

  Var reg;  // weighted KL terms, when present
  if (vae) {
    Var kl_real = kl_to_standard_normal_graph(t, df_real.q);
    Var kl_fake = kl_to_standard_normal_graph(t, df_fake.q);
    Var l_dkl;
    if (loss.dis_kl_mode == DisKlMode::alpha_weight) {
      const double denom = loss.alpha + loss.beta;
      l_dkl = t.add(t.affine(kl_real, loss.alpha / denom, 0.0),
                    t.affine(kl_fake, loss.beta / denom, 0.0));
    } else {
      l_dkl = t.affine(t.add(kl_real, kl_fake), 0.5, 0.0);
    }
    // cross-KL: the generator posterior is the target here; its own side
    // trains in the G-step
    GaussianVars q_gen_frozen{t.detach(gf.q.mu), t.detach(gf.q.log_var)};
    Var l_ckl = cross_kl_graph(t, q_gen_frozen, df_fake.q);

    parts.l_dkl = t.val(l_dkl).item();
    parts.l_ckl = t.val(l_ckl).item();
    reg = t.affine(l_dkl, loss.effective_lambda_dis(), 0.0);
    if (loss.ckl_side == CklSide::d || loss.ckl_side == CklSide::both) {
      reg = t.add(reg, t.affine(l_ckl, w.lambda_ckl, 0.0));
    }
    res.q_dis_real.mu = t.val(df_real.q.mu);
    res.q_dis_real.log_var = t.val(df_real.q.log_var);
    res.q_dis_fake.mu = t.val(df_fake.q.mu);
    res.q_dis_fake.log_var = t.val(df_fake.q.log_var);
    res.has_q = true;
  }

  parts.d_loss_real = t.val(adv_real).item();
  parts.d_loss_fake = t.val(adv_fake).item();
  if (!std::isfinite(parts.d_loss_real)) throw TrainAbort("d_loss_real", where);
  if (!std::isfinite(parts.d_loss_fake)) throw TrainAbort("d_loss_fake", where);
  if (!std::isfinite(parts.l_dkl)) throw TrainAbort("l_dkl", where);

  zero_grads(everything);
  gate.open = coupled && cfg.include_adversarial;
  t.backward(adv);
  if (reg.valid()) {
    gate.open = coupled;
    t.backward(reg);
  }
  if (cfg.debug_checks) check_finite_grads(everything, where);

  res.tap_grad_enc = grad_l2_norm(model.gen_encoder_params());
  res.tap_grad_latent = grad_l2_norm(model.gen_latent_params());
  res.tap_grad_dec = grad_l2_norm(model.gen_decoder_params());
  res.grad_norm_g_from_d = grad_l2_norm(gen_all);

  adam_step(dis_all, adam_d);
  if (coupled) adam_step_touched(gen_all, adam_g);
  if (counters != nullptr) counters->d_updates += 1;

  res.losses = total_losses(parts, w, loss.ckl_side);
  return res;
}

StepResult train_step(UUNetModel& model, const Batch& batch,
                      const TrainConfig& cfg, const LossConfig& loss,
                      std::uint64_t step_index, TrainCounters* counters) {
  const TopologyConfig& topo = model.topology();
  const LossWeights& w = loss.weights;
  const bool vae = model.vae();
  const std::string where = "at step " + std::to_string(step_index);

  std::vector<Param*> gen_all = model.gen_params();
  std::vector<Param*> dis_all = model.dis_params();
  std::vector<Param*> everything = model.all_params();
  const AdamConfig adam_g{cfg.lr_g, cfg.adam_beta1, cfg.adam_beta2, 1e-8};

  StepResult res;
  LossParts parts;
  for (int s = 0; s < cfg.d_steps_per_g_step; ++s) {
    StepResult d = discriminator_step(model, batch, cfg, loss, step_index, s,
                                      counters);
    parts.d_loss_real = d.losses.d_loss_real;
    parts.d_loss_fake = d.losses.d_loss_fake;
    parts.l_dkl = d.losses.l_dkl;
    res.tap_grad_enc = d.tap_grad_enc;
    res.tap_grad_latent = d.tap_grad_latent;
    res.tap_grad_dec = d.tap_grad_dec;
    res.grad_norm_g_from_d = d.grad_norm_g_from_d;
    res.q_dis_real = std::move(d.q_dis_real);
    res.q_dis_fake = std::move(d.q_dis_fake);
    res.has_q = d.has_q;
  }

  // ---- generator step ----
  {
    Tape t;
    Var x_in = t.constant(batch.x_in);
    Var x_tg = t.constant(batch.x_target);

    auto gf = model.generator_forward(
        t, x_in, step_seed(cfg.seed, step_index, cfg.d_steps_per_g_step, 0));
    const TapsVars* taps_p = topo.any_connection() ? &gf.taps : nullptr;
    auto df = model.discriminator_forward(
        t, gf.y, taps_p,
        step_seed(cfg.seed, step_index, cfg.d_steps_per_g_step, 2));

    Var g_adv = generator_adversarial_graph(t, df.score);
    Var l_re = reconstruction_graph(t, gf.y, x_tg);
    Var total = t.add(g_adv, t.affine(l_re, w.lambda_re, 0.0));
    if (vae) {
      Var l_gkl = kl_to_standard_normal_graph(t, gf.q);
      Var l_ckl = cross_kl_graph(t, gf.q, df.q);
      total = t.add(total, t.affine(l_gkl, w.lambda_gkl, 0.0));
      if (loss.ckl_side == CklSide::g || loss.ckl_side == CklSide::both) {
        total = t.add(total, t.affine(l_ckl, w.lambda_ckl, 0.0));
      }
      parts.l_gkl = t.val(l_gkl).item();
      parts.l_ckl = t.val(l_ckl).item();
    }
    parts.g_adv = t.val(g_adv).item();
    parts.l_re = t.val(l_re).item();
    if (!std::isfinite(parts.g_adv)) throw TrainAbort("g_adv", where);
    if (!std::isfinite(parts.l_re)) throw TrainAbort("l_re", where);
    if (!std::isfinite(parts.l_gkl)) throw TrainAbort("l_gkl", where);
    if (!std::isfinite(parts.l_ckl)) throw TrainAbort("l_ckl", where);

    zero_grads(everything);
    t.backward(total);
    if (cfg.debug_checks) check_finite_grads(everything, where);
    adam_step(gen_all, adam_g);
    if (counters != nullptr) counters->g_updates += 1;
  }

  res.losses = total_losses(parts, w, loss.ckl_side);
  const std::string bad = res.losses.first_non_finite();
  if (!bad.empty()) throw TrainAbort(bad, where);
  if (counters != nullptr) counters->train_steps += 1;
  return res;
}

TrainResult train(UUNetModel& model, const data::Dataset& dataset,
                  const TrainConfig& cfg, const LossConfig& loss) {
  cfg.validate();
  loss.validate();
  if (dataset.empty()) {
    throw std::invalid_argument("train: dataset is empty");
  }

  TrainResult result;
  int start_epoch = 0;
  if (!cfg.resume_from.empty()) {
    CheckpointInfo info = load_checkpoint(cfg.resume_from, model);
    if (cfg.config_digest != 0 && info.config_digest != 0 &&
        info.config_digest != cfg.config_digest) {
      throw std::runtime_error(
          "train: checkpoint config digest mismatch (checkpoint " +
          std::to_string(info.config_digest) + ", config " +
          std::to_string(cfg.config_digest) + ")");
    }
    start_epoch = info.epoch;
    result.records = std::move(info.records);
    result.counters = info.counters;
  }

  for (int epoch = start_epoch + 1; epoch <= cfg.epochs; ++epoch) {
    const double t0 = now_seconds();
    const auto idx = data::batches(dataset, cfg.batch_size,
                                   derive_seed(cfg.seed, "shuffle",
                                               static_cast<std::uint64_t>(epoch)));
    LossBreakdown sum;
    double grad_sum = 0.0;
    for (size_t b = 0; b < idx.size(); ++b) {
      auto [x01, y01] = data::batch_tensors(dataset, idx[b]);
      Batch batch{data::to_model_space(x01), data::to_model_space(y01)};
      const std::uint64_t step_index =
          static_cast<std::uint64_t>(epoch - 1) * idx.size() + b;
      StepResult r;
      try {
        r = train_step(model, batch, cfg, loss, step_index, &result.counters);
      } catch (const TrainAbort& e) {
        throw TrainAbort(e.term, "at epoch " + std::to_string(epoch) +
                                     ", batch " + std::to_string(b));
      }
      sum.d_loss_real += r.losses.d_loss_real;
      sum.d_loss_fake += r.losses.d_loss_fake;
      sum.g_adv += r.losses.g_adv;
      sum.l_re += r.losses.l_re;
      sum.l_gkl += r.losses.l_gkl;
      sum.l_dkl += r.losses.l_dkl;
      sum.l_ckl += r.losses.l_ckl;
      sum.total_g += r.losses.total_g;
      sum.total_d += r.losses.total_d;
      grad_sum += r.grad_norm_g_from_d;
    }
    const double inv = 1.0 / static_cast<double>(idx.size());
    EpochRecord rec;
    rec.epoch = epoch;
    rec.losses.d_loss_real = sum.d_loss_real * inv;
    rec.losses.d_loss_fake = sum.d_loss_fake * inv;
    rec.losses.g_adv = sum.g_adv * inv;
    rec.losses.l_re = sum.l_re * inv;
    rec.losses.l_gkl = sum.l_gkl * inv;
    rec.losses.l_dkl = sum.l_dkl * inv;
    rec.losses.l_ckl = sum.l_ckl * inv;
    rec.losses.total_g = sum.total_g * inv;
    rec.losses.total_d = sum.total_d * inv;
    rec.grad_norm_g_from_d = grad_sum * inv;
    rec.wall_s = cfg.record_wall_time ? now_seconds() - t0 : 0.0;
    result.records.push_back(rec);

    if (!cfg.checkpoint_path.empty() && cfg.checkpoint_every > 0 &&
        epoch % cfg.checkpoint_every == 0 && epoch < cfg.epochs) {
      CheckpointInfo info;
      info.config_digest = cfg.config_digest;
      info.seed = cfg.seed;
      info.epoch = epoch;
      info.records = result.records;
      info.counters = result.counters;
      save_checkpoint(cfg.checkpoint_path, model, info);
    }
  }

  if (!cfg.checkpoint_path.empty()) {
    CheckpointInfo info;
    info.config_digest = cfg.config_digest;
    info.seed = cfg.seed;
    info.epoch = cfg.epochs;
    info.records = result.records;
    info.counters = result.counters;
    save_checkpoint(cfg.checkpoint_path, model, info);
  }
  return result;
}

double freeze_discriminator_probe(UUNetModel& model, const Batch& batch,
                                  std::uint64_t seed) {
  Tape t;
  Var x_tg = t.constant(batch.x_target);
  TapsVars taps;
  const TapsVars* taps_p = nullptr;
  if (model.topology().any_connection()) {
    auto gr = model.generator_forward(t, x_tg, derive_seed(seed, "probe", 0),
                                      /*training=*/false);
    taps = gr.taps;
    taps_p = &taps;
  }
  auto df = model.discriminator_forward(t, x_tg, taps_p,
                                        derive_seed(seed, "probe", 1),
                                        /*training=*/false);
  return discriminator_real_loss(t.val(df.score));
}

void write_loss_curve_csv(const std::string& path,
                          const std::vector<EpochRecord>& records) {
  std::FILE* f = std::fopen(path.c_str(), "w");
  if (f == nullptr) {
    throw std::runtime_error("cannot write " + path);
  }
  std::fprintf(f,
               "epoch,d_real,d_fake,g_adv,l_re,l_gkl,l_dkl,l_ckl,total_g,"
               "total_d,grad_g_from_d,wall_s\n");
  for (const EpochRecord& r : records) {
    std::fprintf(f, "%d,%.12g,%.12g,%.12g,%.12g,%.12g,%.12g,%.12g,%.12g,%.12g,%.12g,%.3f\n",
                 r.epoch, r.losses.d_loss_real, r.losses.d_loss_fake,
                 r.losses.g_adv, r.losses.l_re, r.losses.l_gkl,
                 r.losses.l_dkl, r.losses.l_ckl, r.losses.total_g,
                 r.losses.total_d, r.grad_norm_g_from_d, r.wall_s);
  }
  std::fclose(f);
}

// --- checkpointing ---------------------------------------------------------

namespace {

constexpr std::uint32_t kCkptMagic = 0x554e4b31;  // "UNK1"
constexpr std::uint32_t kCkptVersion = 1;

void put_u32(std::ofstream& o, std::uint32_t v) {
  o.write(reinterpret_cast<const char*>(&v), sizeof(v));
}
void put_u64(std::ofstream& o, std::uint64_t v) {
  o.write(reinterpret_cast<const char*>(&v), sizeof(v));
}
void put_i64(std::ofstream& o, std::int64_t v) {
  o.write(reinterpret_cast<const char*>(&v), sizeof(v));
}
void put_f64(std::ofstream& o, double v) {
  o.write(reinterpret_cast<const char*>(&v), sizeof(v));
}
void put_str(std::ofstream& o, const std::string& s) {
  put_u32(o, static_cast<std::uint32_t>(s.size()));
  o.write(s.data(), static_cast<std::streamsize>(s.size()));
}
void put_tensor(std::ofstream& o, const Tensor& t) {
  const Shape s = t.shape();
  put_u32(o, static_cast<std::uint32_t>(s.n));
  put_u32(o, static_cast<std::uint32_t>(s.c));
  put_u32(o, static_cast<std::uint32_t>(s.h));
  put_u32(o, static_cast<std::uint32_t>(s.w));
  o.write(reinterpret_cast<const char*>(t.data()),
          static_cast<std::streamsize>(t.size() * sizeof(Scalar)));
}

std::uint32_t get_u32(std::ifstream& i) {
  std::uint32_t v = 0;
  i.read(reinterpret_cast<char*>(&v), sizeof(v));
  return v;
}
std::uint64_t get_u64(std::ifstream& i) {
  std::uint64_t v = 0;
  i.read(reinterpret_cast<char*>(&v), sizeof(v));
  return v;
}
std::int64_t get_i64(std::ifstream& i) {
  std::int64_t v = 0;
  i.read(reinterpret_cast<char*>(&v), sizeof(v));
  return v;
}
double get_f64(std::ifstream& i) {
  double v = 0;
  i.read(reinterpret_cast<char*>(&v), sizeof(v));
  return v;
}
std::string get_str(std::ifstream& i) {
  const std::uint32_t n = get_u32(i);
  std::string s(n, '\0');
  i.read(s.data(), n);
  return s;
}
Tensor get_tensor(std::ifstream& i) {
  const int n = static_cast<int>(get_u32(i));
  const int c = static_cast<int>(get_u32(i));
  const int h = static_cast<int>(get_u32(i));
  const int w = static_cast<int>(get_u32(i));
  Tensor t(Shape(n, c, h, w));
  i.read(reinterpret_cast<char*>(t.data()),
         static_cast<std::streamsize>(t.size() * sizeof(Scalar)));
  return t;
}

}  // namespace

void save_checkpoint(const std::string& path, UUNetModel& model,
                     const CheckpointInfo& info) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream o(tmp, std::ios::binary | std::ios::trunc);
    if (!o) throw std::runtime_error("cannot write " + tmp);
    put_u32(o, kCkptMagic);
    put_u32(o, kCkptVersion);
    put_u64(o, info.config_digest);
    put_u64(o, info.seed);
    put_u32(o, static_cast<std::uint32_t>(info.epoch));
    put_i64(o, info.counters.train_steps);
    put_i64(o, info.counters.d_updates);
    put_i64(o, info.counters.g_updates);

    put_u32(o, static_cast<std::uint32_t>(info.records.size()));
    for (const EpochRecord& r : info.records) {
      put_u32(o, static_cast<std::uint32_t>(r.epoch));
      put_f64(o, r.losses.d_loss_real);
      put_f64(o, r.losses.d_loss_fake);
      put_f64(o, r.losses.g_adv);
      put_f64(o, r.losses.l_re);
      put_f64(o, r.losses.l_gkl);
      put_f64(o, r.losses.l_dkl);
      put_f64(o, r.losses.l_ckl);
      put_f64(o, r.losses.total_g);
      put_f64(o, r.losses.total_d);
      put_f64(o, r.grad_norm_g_from_d);
      put_f64(o, r.wall_s);
    }

    std::vector<Param*> params = model.all_params();
    put_u32(o, static_cast<std::uint32_t>(params.size()));
    for (Param* p : params) {
      put_str(o, p->name);
      put_tensor(o, p->value);
      put_tensor(o, p->m);
      put_tensor(o, p->v);
      put_i64(o, p->steps);
    }
    std::vector<BufferRef> bufs = model.buffers();
    put_u32(o, static_cast<std::uint32_t>(bufs.size()));
    for (const BufferRef& b : bufs) {
      put_str(o, b.first);
      put_tensor(o, *b.second);
    }
    if (!o) throw std::runtime_error("write failed for " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

CheckpointInfo load_checkpoint(const std::string& path, UUNetModel& model) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read checkpoint " + path);
  if (get_u32(in) != kCkptMagic) {
    throw std::runtime_error(path + " is not a uunet checkpoint");
  }
  const std::uint32_t version = get_u32(in);
  if (version != kCkptVersion) {
    throw std::runtime_error("unsupported checkpoint version " +
                             std::to_string(version));
  }
  CheckpointInfo info;
  info.config_digest = get_u64(in);
  info.seed = get_u64(in);
  info.epoch = static_cast<int>(get_u32(in));
  info.counters.train_steps = get_i64(in);
  info.counters.d_updates = get_i64(in);
  info.counters.g_updates = get_i64(in);

  const std::uint32_t n_rec = get_u32(in);
  info.records.resize(n_rec);
  for (std::uint32_t i = 0; i < n_rec; ++i) {
    EpochRecord& r = info.records[i];
    r.epoch = static_cast<int>(get_u32(in));
    r.losses.d_loss_real = get_f64(in);
    r.losses.d_loss_fake = get_f64(in);
    r.losses.g_adv = get_f64(in);
    r.losses.l_re = get_f64(in);
    r.losses.l_gkl = get_f64(in);
    r.losses.l_dkl = get_f64(in);
    r.losses.l_ckl = get_f64(in);
    r.losses.total_g = get_f64(in);
    r.losses.total_d = get_f64(in);
    r.grad_norm_g_from_d = get_f64(in);
    r.wall_s = get_f64(in);
  }

  std::vector<Param*> params = model.all_params();
  const std::uint32_t n_params = get_u32(in);
  if (n_params != params.size()) {
    throw std::runtime_error(
        "checkpoint parameter count " + std::to_string(n_params) +
        " does not match model (" + std::to_string(params.size()) + ")");
  }
  for (std::uint32_t i = 0; i < n_params; ++i) {
    const std::string name = get_str(in);
    Param* p = params[i];
    if (p->name != name) {
      throw std::runtime_error("checkpoint parameter '" + name +
                               "' does not match model parameter '" + p->name +
                               "'");
    }
    Tensor value = get_tensor(in);
    Tensor m = get_tensor(in);
    Tensor v = get_tensor(in);
    if (value.shape() != p->value.shape()) {
      throw std::runtime_error("checkpoint shape mismatch for " + name);
    }
    p->value = std::move(value);
    p->m = std::move(m);
    p->v = std::move(v);
    p->steps = get_i64(in);
  }
  std::vector<BufferRef> bufs = model.buffers();
  const std::uint32_t n_bufs = get_u32(in);
  if (n_bufs != bufs.size()) {
    throw std::runtime_error("checkpoint buffer count mismatch");
  }
  for (std::uint32_t i = 0; i < n_bufs; ++i) {
    const std::string name = get_str(in);
    if (bufs[i].first != name) {
      throw std::runtime_error("checkpoint buffer '" + name + "' mismatch");
    }
    *bufs[i].second = get_tensor(in);
  }
  if (!in) throw std::runtime_error("truncated checkpoint " + path);
  return info;
}

}  // namespace uunet
