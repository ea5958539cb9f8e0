#include "uunet/topology.hpp"

#include <stdexcept>

#include "uunet/rng.hpp"

namespace uunet {

Variant variant_from_string(const std::string& s) {
  if (s == "none") return Variant::none;
  if (s == "v1") return Variant::v1_encoder_encoder;
  if (s == "v2") return Variant::v2_latent_only;
  if (s == "v3") return Variant::v3_decoder_decoder;
  if (s == "v4") return Variant::v4_full;
  throw std::invalid_argument("unknown topology variant '" + s +
                              "' (expected none|v1|v2|v3|v4)");
}

std::string variant_to_string(Variant v) {
  switch (v) {
    case Variant::none: return "none";
    case Variant::v1_encoder_encoder: return "v1";
    case Variant::v2_latent_only: return "v2";
    case Variant::v3_decoder_decoder: return "v3";
    case Variant::v4_full: return "v4";
  }
  return "none";
}

void TopologyConfig::validate() const {
  if (triple_concat && !dec_connected()) {
    throw std::invalid_argument(
        "topology: triple_concat requires decoder-side wiring (v3 or v4)");
  }
}

// --- tail --------------------------------------------------------------------

TailModule::TailModule(const std::string& prefix, int in_ch, int in_h,
                       int in_w, Activation act, std::uint64_t seed)
    : act_(act), in_h_(in_h), in_w_(in_w) {
  if (in_h < 8 || in_w < 8) {
    throw std::invalid_argument(
        "tail: input spatial dims " + std::to_string(in_h) + "x" +
        std::to_string(in_w) +
        " leave no room to shrink (need >= 8); set topology.tail = false");
  }
  int h = in_h, w = in_w;
  int ch = in_ch;
  int next = 8;
  int stage = 0;
  while (h > 4 || w > 4) {
    convs_.emplace_back(prefix + ".s" + std::to_string(stage), ch, next, 3, 2,
                        seed);
    h = (h - 1) / 2 + 1;
    w = (w - 1) / 2 + 1;
    ch = next;
    next *= 2;
    ++stage;
  }
  final_ = Conv2d(prefix + ".out", ch, 1, 1, 1, seed);
}

Var TailModule::forward(Tape& t, Var features) const {
  const Shape s = t.val(features).shape();
  if (s.h != in_h_ || s.w != in_w_) {
    throw std::invalid_argument("tail: expected " + std::to_string(in_h_) +
                                "x" + std::to_string(in_w_) + " input, got " +
                                s.str());
  }
  Var h = features;
  for (const auto& conv : convs_) {
    h = conv.forward(t, h);
    h = apply_activation(t, h, act_);
  }
  h = final_.forward(t, h);
  return t.sigmoid(t.gap(h));
}

void TailModule::collect(std::vector<Param*>& out) {
  for (auto& c : convs_) c.collect(out);
  final_.collect(out);
}

// --- wiring ---------------------------------------------------------------------

UUNetModel UUNetModel::wire(const UNetConfig& gen_cfg,
                            const UNetConfig& dis_cfg,
                            const TopologyConfig& topo,
                            const WireOptions& opts) {
  gen_cfg.validate();
  dis_cfg.validate();
  topo.validate();
  if (gen_cfg.depth != dis_cfg.depth) {
    throw std::invalid_argument(
        "wire: generator depth " + std::to_string(gen_cfg.depth) +
        " != discriminator depth " + std::to_string(dis_cfg.depth) +
        " (the symmetric connection pattern needs equal depths)");
  }
  if (gen_cfg.image_h != dis_cfg.image_h ||
      gen_cfg.image_w != dis_cfg.image_w) {
    throw std::invalid_argument("wire: generator and discriminator image "
                                "sizes differ");
  }
  if (dis_cfg.in_channels != gen_cfg.out_channels) {
    throw std::invalid_argument(
        "wire: discriminator in_channels " +
        std::to_string(dis_cfg.in_channels) +
        " must equal generator out_channels " +
        std::to_string(gen_cfg.out_channels) +
        " (the discriminator judges generated images)");
  }
  if (opts.vae && opts.latent_dim < 1) {
    throw std::invalid_argument("wire: latent_dim must be >= 1");
  }

  UUNetModel m;
  m.gen_cfg_ = gen_cfg;
  m.dis_cfg_ = dis_cfg;
  m.topo_ = topo;
  m.vae_ = opts.vae;
  m.latent_dim_ = opts.vae ? opts.latent_dim : 0;
  m.seed_ = opts.seed;

  const int depth = gen_cfg.depth;

  m.g_enc_ = EncoderModule(gen_cfg, {}, 0, "gen.enc", opts.seed);
  const int g_dec_in =
      opts.vae ? opts.latent_dim : gen_cfg.bottleneck_channels();
  m.g_dec_ = DecoderModule(gen_cfg, {}, g_dec_in, /*tanh_output=*/true,
                           "gen.dec", opts.seed);
  if (opts.vae) {
    m.g_mu_.emplace("gen.head.mu", gen_cfg.bottleneck_channels(),
                    opts.latent_dim, opts.seed);
    m.g_lv_.emplace("gen.head.logvar", gen_cfg.bottleneck_channels(),
                    opts.latent_dim, opts.seed);
  }

  // Cross-connection channel declarations on the receiving (discriminator)
  // sub-nets, derived from the generator ladder.
  std::vector<int> d_enc_extra(depth, 0);
  if (topo.enc_connected()) {
    for (int k = 0; k < depth; ++k) d_enc_extra[k] = gen_cfg.level_channels(k);
  }
  int d_bott_extra = 0;
  if (topo.latent_connected()) {
    d_bott_extra = opts.vae ? opts.latent_dim : gen_cfg.bottleneck_channels();
  }
  std::vector<int> d_dec_extra(depth, 0);
  if (topo.dec_connected()) {
    for (int k = 0; k < depth; ++k) {
      d_dec_extra[k] = gen_cfg.level_channels(k);
      if (topo.triple_concat) d_dec_extra[k] += gen_cfg.level_channels(k);
    }
  }

  m.d_enc_ = EncoderModule(dis_cfg, d_enc_extra, d_bott_extra, "dis.enc",
                           opts.seed);
  const int d_dec_in =
      opts.vae ? opts.latent_dim : dis_cfg.bottleneck_channels();
  m.d_dec_ = DecoderModule(dis_cfg, d_dec_extra, d_dec_in,
                           /*tanh_output=*/false, "dis.dec", opts.seed);
  if (opts.vae) {
    m.d_mu_.emplace("dis.head.mu", dis_cfg.bottleneck_channels(),
                    opts.latent_dim, opts.seed);
    m.d_lv_.emplace("dis.head.logvar", dis_cfg.bottleneck_channels(),
                    opts.latent_dim, opts.seed);
  }
  if (topo.tail_enabled) {
    m.tail_.emplace("dis.tail", dis_cfg.out_channels, dis_cfg.image_h,
                    dis_cfg.image_w, dis_cfg.activation, opts.seed);
  } else {
    m.score_head_.emplace("dis.score", dis_cfg.out_channels, 1, 1, 1,
                          opts.seed);
  }
  return m;
}

// --- forward passes -----------------------------------------------------------

UUNetModel::GenForward UUNetModel::generator_forward(Tape& t, Var x,
                                                     std::uint64_t eps_seed,
                                                     bool training) {
  GenForward f;
  EncoderOutput eo = g_enc_.forward(t, x, {}, std::nullopt, training);
  Var dec_in;
  if (vae_) {
    Var pooled = t.gap(eo.bottleneck);
    f.q.mu = g_mu_->forward(t, pooled);
    f.q.log_var = t.clamp(g_lv_->forward(t, pooled), kLogVarMin, kLogVarMax);
    Tensor eps(Shape(t.val(x).shape().n, latent_dim_, 1, 1));
    Rng rng(eps_seed);
    rng.fill_normal(eps);
    Var z = reparameterize_graph(t, f.q, eps);
    f.taps.latent = z;
    dec_in = t.broadcast_hw(z, gen_cfg_.image_h >> gen_cfg_.depth,
                            gen_cfg_.image_w >> gen_cfg_.depth);
  } else {
    f.taps.latent = eo.bottleneck;
    dec_in = eo.bottleneck;
  }
  auto d = g_dec_.forward(t, dec_in, eo.skips, {}, training);
  f.y = d.y;
  f.taps.enc_skips = eo.skips;
  f.taps.dec_taps = std::move(d.taps);
  return f;
}

UUNetModel::DisForward UUNetModel::discriminator_forward(
    Tape& t, Var x, const TapsVars* taps, std::uint64_t eps_seed,
    bool training) {
  const int depth = dis_cfg_.depth;
  if (topo_.any_connection()) {
    if (taps == nullptr) {
      throw std::invalid_argument(
          "discriminator_forward: topology '" +
          variant_to_string(topo_.variant) +
          "' requires generator taps, none supplied");
    }
    if (topo_.enc_connected() || topo_.dec_connected() ||
        topo_.triple_concat) {
      if (taps->enc_skips.size() != static_cast<size_t>(depth) &&
          (topo_.enc_connected() || topo_.triple_concat)) {
        throw std::invalid_argument(
            "discriminator_forward: expected " + std::to_string(depth) +
            " generator encoder skips, got " +
            std::to_string(taps->enc_skips.size()));
      }
      if (topo_.dec_connected() &&
          taps->dec_taps.size() != static_cast<size_t>(depth)) {
        throw std::invalid_argument(
            "discriminator_forward: expected " + std::to_string(depth) +
            " generator decoder taps, got " +
            std::to_string(taps->dec_taps.size()));
      }
    }
    if (topo_.latent_connected() && !taps->latent.valid()) {
      throw std::invalid_argument(
          "discriminator_forward: latent tap required for v2");
    }
  }

  std::vector<Var> enc_extras;
  if (topo_.enc_connected()) enc_extras = taps->enc_skips;

  std::optional<Var> bott_extra;
  if (topo_.latent_connected()) {
    Var lat = taps->latent;
    const Shape ls = t.val(lat).shape();
    if (ls.h == 1 && ls.w == 1) {
      lat = t.broadcast_hw(lat, dis_cfg_.image_h >> depth,
                           dis_cfg_.image_w >> depth);
    }
    bott_extra = lat;
  }

  DisForward f;
  EncoderOutput eo = d_enc_.forward(t, x, enc_extras, bott_extra, training);

  Var dec_in;
  if (vae_) {
    Var pooled = t.gap(eo.bottleneck);
    f.q.mu = d_mu_->forward(t, pooled);
    f.q.log_var = t.clamp(d_lv_->forward(t, pooled), kLogVarMin, kLogVarMax);
    Tensor eps(Shape(t.val(x).shape().n, latent_dim_, 1, 1));
    Rng rng(eps_seed);
    rng.fill_normal(eps);
    Var z = reparameterize_graph(t, f.q, eps);
    dec_in = t.broadcast_hw(z, dis_cfg_.image_h >> depth,
                            dis_cfg_.image_w >> depth);
  } else {
    dec_in = eo.bottleneck;
  }

  std::vector<Var> dec_extras;
  if (topo_.dec_connected()) {
    dec_extras.resize(depth);
    for (int k = 0; k < depth; ++k) {
      if (topo_.triple_concat) {
        dec_extras[k] =
            t.concat_channels({taps->dec_taps[k], taps->enc_skips[k]});
      } else {
        dec_extras[k] = taps->dec_taps[k];
      }
    }
  }

  auto d = d_dec_.forward(t, dec_in, eo.skips, dec_extras, training);
  if (tail_) {
    f.score = tail_->forward(t, d.y);
  } else {
    Var logits = score_head_->forward(t, d.y);
    f.patch = t.sigmoid(logits);
    f.score = t.gap(f.patch);
  }
  return f;
}

// --- tensor-level wrappers ---------------------------------------------------

TapsVars UUNetModel::taps_to_vars(Tape& t, const GeneratorTaps& taps) const {
  TapsVars v;
  for (const Tensor& s : taps.enc_skips) v.enc_skips.push_back(t.constant(s));
  if (taps.latent.size() > 0) v.latent = t.constant(taps.latent);
  for (const Tensor& s : taps.dec_taps) v.dec_taps.push_back(t.constant(s));
  return v;
}

UUNetModel::Generated UUNetModel::generate(const Tensor& x,
                                           std::uint64_t eps_seed,
                                           bool training) {
  Tape t;
  GenForward f = generator_forward(t, t.constant(x), eps_seed, training);
  Generated g;
  g.y = t.val(f.y);
  for (Var s : f.taps.enc_skips) g.taps.enc_skips.push_back(t.val(s));
  g.taps.latent = t.val(f.taps.latent);
  for (Var s : f.taps.dec_taps) g.taps.dec_taps.push_back(t.val(s));
  if (vae_) {
    g.q.mu = t.val(f.q.mu);
    g.q.log_var = t.val(f.q.log_var);
    g.has_q = true;
  }
  return g;
}

DiscriminatorOutput UUNetModel::discriminate(const Tensor& x,
                                             const GeneratorTaps* taps,
                                             std::uint64_t eps_seed,
                                             bool training) {
  Tape t;
  TapsVars tv;
  const TapsVars* tvp = nullptr;
  if (taps != nullptr) {
    tv = taps_to_vars(t, *taps);
    tvp = &tv;
  }
  DisForward f = discriminator_forward(t, t.constant(x), tvp, eps_seed,
                                       training);
  DiscriminatorOutput out;
  out.score = t.val(f.score);
  if (f.patch.valid()) out.patch_map = t.val(f.patch);
  if (vae_) {
    out.q.mu = t.val(f.q.mu);
    out.q.log_var = t.val(f.q.log_var);
    out.has_q = true;
  }
  return out;
}

const std::vector<int>& UUNetModel::dis_enc_extra_channels() const {
  return d_enc_.extra_channels();
}

const std::vector<int>& UUNetModel::dis_dec_extra_channels() const {
  return d_dec_.extra_channels();
}

int UUNetModel::dis_bottleneck_extra_channels() const {
  return d_enc_.bottleneck_extra_channels();
}

// --- parameter groups -----------------------------------------------------------

std::vector<Param*> UUNetModel::gen_encoder_params() {
  std::vector<Param*> p;
  g_enc_.collect(p);
  return p;
}

std::vector<Param*> UUNetModel::gen_latent_params() {
  std::vector<Param*> p;
  if (g_mu_) g_mu_->collect(p);
  if (g_lv_) g_lv_->collect(p);
  return p;
}

std::vector<Param*> UUNetModel::gen_decoder_params() {
  std::vector<Param*> p;
  g_dec_.collect(p);
  return p;
}

std::vector<Param*> UUNetModel::gen_params() {
  std::vector<Param*> p = gen_encoder_params();
  for (Param* q : gen_latent_params()) p.push_back(q);
  for (Param* q : gen_decoder_params()) p.push_back(q);
  return p;
}

std::vector<Param*> UUNetModel::dis_params() {
  std::vector<Param*> p;
  d_enc_.collect(p);
  if (d_mu_) d_mu_->collect(p);
  if (d_lv_) d_lv_->collect(p);
  d_dec_.collect(p);
  if (tail_) tail_->collect(p);
  if (score_head_) score_head_->collect(p);
  return p;
}

std::vector<Param*> UUNetModel::all_params() {
  std::vector<Param*> p = gen_params();
  for (Param* q : dis_params()) p.push_back(q);
  return p;
}

std::vector<BufferRef> UUNetModel::buffers() {
  std::vector<BufferRef> b;
  g_enc_.collect_buffers(b);
  g_dec_.collect_buffers(b);
  d_enc_.collect_buffers(b);
  d_dec_.collect_buffers(b);
  return b;
}

// --- reachability ---------------------------------------------------------------

std::map<std::string, bool> gradient_reachability(const UUNetModel& model,
                                                  const TopologyConfig& topo) {
  std::map<std::string, bool> r;
  const bool enc = topo.enc_connected();
  const bool lat = topo.latent_connected();
  const bool dec = topo.dec_connected();
  // Encoder params feed every tap (skips directly; latent and decoder taps
  // through the bottleneck). Latent-head params feed the sampled z and, with
  // VAE heads, the decoder taps downstream of z. Decoder params feed only
  // the decoder taps.
  r["generator.encoder"] = enc || lat || dec;
  if (model.vae()) {
    r["generator.latent"] = lat || dec;
  }
  r["generator.decoder"] = dec;
  return r;
}

}  // namespace uunet
