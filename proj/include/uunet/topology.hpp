#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "uunet/unet.hpp"
#include "uunet/vae.hpp"

namespace uunet {

// Which cross-network skip connections exist between the generator-U and the
// discriminator-U.
//   v1: generator encoder skips feed the discriminator encoder levels.
//   v2: the generator latent (sampled z, or the bottleneck map without VAE
//       heads) is concatenated to the discriminator bottleneck.
//   v3: generator decoder taps feed the discriminator decoder levels.
//   v4: v1 and v3 together.
// triple_concat (v3/v4 only) additionally feeds the generator *encoder*
// skips into the discriminator decoder levels, so those levels concatenate
// their own path, their own encoder skip, and both generator maps.
enum class Variant {
  none,
  v1_encoder_encoder,
  v2_latent_only,
  v3_decoder_decoder,
  v4_full,
};

Variant variant_from_string(const std::string& s);
std::string variant_to_string(Variant v);

struct TopologyConfig {
  Variant variant = Variant::none;
  bool triple_concat = false;
  bool tail_enabled = true;
  bool coupled_update = false;

  void validate() const;
  bool enc_connected() const {
    return variant == Variant::v1_encoder_encoder ||
           variant == Variant::v4_full;
  }
  bool latent_connected() const { return variant == Variant::v2_latent_only; }
  bool dec_connected() const {
    return variant == Variant::v3_decoder_decoder ||
           variant == Variant::v4_full;
  }
  bool any_connection() const { return variant != Variant::none; }
};

// Tensor-level taps handed from a generator pass to a discriminator pass.
struct GeneratorTaps {
  std::vector<Tensor> enc_skips;
  Tensor latent;
  std::vector<Tensor> dec_taps;
};

// Graph-level counterpart.
struct TapsVars {
  std::vector<Var> enc_skips;
  Var latent;
  std::vector<Var> dec_taps;
};

struct DiscriminatorOutput {
  Tensor score;                     // (N,1,1,1), in (0,1)
  std::optional<Tensor> patch_map;  // per-location scores when no tail
  GaussianLatent q;                 // valid only when VAE heads are active
  bool has_q = false;
};

// Strided-conv stack shrinking an image-resolution feature map to a scalar
// score: 3x3 stride-2 convs (channels 8, 16, 32, ...) until the map is
// <= 4x4, then a 1x1 conv to one channel, global average and sigmoid.
class TailModule {
 public:
  TailModule() = default;
  TailModule(const std::string& prefix, int in_ch, int in_h, int in_w,
             Activation act, std::uint64_t seed);

  Var forward(Tape& t, Var features) const;
  void collect(std::vector<Param*>& out);
  int stages() const { return static_cast<int>(convs_.size()); }

 private:
  std::vector<Conv2d> convs_;
  Conv2d final_;
  Activation act_ = Activation::relu;
  int in_h_ = 0;
  int in_w_ = 0;
};

struct WireOptions {
  bool vae = false;
  int latent_dim = 64;
  std::uint64_t seed = 0;
};

// Generator-U and discriminator-U joined per the topology. Forward passes
// build onto a caller-supplied tape; gradient gating (for coupled update
// policies) is applied by the caller on the tap vars before handing them to
// the discriminator side.
class UUNetModel {
 public:
  static UUNetModel wire(const UNetConfig& gen_cfg, const UNetConfig& dis_cfg,
                         const TopologyConfig& topo,
                         const WireOptions& opts = {});

  struct GenForward {
    Var y;
    TapsVars taps;
    GaussianVars q;  // valid only with VAE heads
  };
  struct DisForward {
    Var score;
    Var patch;       // valid only without tail
    GaussianVars q;  // valid only with VAE heads
  };

  GenForward generator_forward(Tape& t, Var x, std::uint64_t eps_seed,
                               bool training = true);
  DisForward discriminator_forward(Tape& t, Var x, const TapsVars* taps,
                                   std::uint64_t eps_seed,
                                   bool training = true);

  // Tensor-level wrappers running on a private tape (evaluation, probes).
  struct Generated {
    Tensor y;
    GeneratorTaps taps;
    GaussianLatent q;
    bool has_q = false;
  };
  Generated generate(const Tensor& x, std::uint64_t eps_seed,
                     bool training = false);
  DiscriminatorOutput discriminate(const Tensor& x, const GeneratorTaps* taps,
                                   std::uint64_t eps_seed,
                                   bool training = false);
  TapsVars taps_to_vars(Tape& t, const GeneratorTaps& taps) const;

  const UNetConfig& gen_cfg() const { return gen_cfg_; }
  const UNetConfig& dis_cfg() const { return dis_cfg_; }
  const TopologyConfig& topology() const { return topo_; }
  bool vae() const { return vae_; }
  int latent_dim() const { return latent_dim_; }
  std::uint64_t seed() const { return seed_; }

  // Declared cross-connection widths on the receiving discriminator subnets
  // (one entry per level; zero where no connection lands).
  const std::vector<int>& dis_enc_extra_channels() const;
  const std::vector<int>& dis_dec_extra_channels() const;
  int dis_bottleneck_extra_channels() const;

  std::vector<Param*> gen_encoder_params();
  std::vector<Param*> gen_latent_params();
  std::vector<Param*> gen_decoder_params();
  std::vector<Param*> gen_params();
  std::vector<Param*> dis_params();
  std::vector<Param*> all_params();
  std::vector<BufferRef> buffers();

 private:
  UUNetModel() = default;

  UNetConfig gen_cfg_;
  UNetConfig dis_cfg_;
  TopologyConfig topo_;
  bool vae_ = false;
  int latent_dim_ = 0;
  std::uint64_t seed_ = 0;

  EncoderModule g_enc_;
  std::optional<Linear> g_mu_;
  std::optional<Linear> g_lv_;
  DecoderModule g_dec_;

  EncoderModule d_enc_;
  std::optional<Linear> d_mu_;
  std::optional<Linear> d_lv_;
  DecoderModule d_dec_;
  std::optional<TailModule> tail_;
  std::optional<Conv2d> score_head_;
};

// Static connection analysis: which generator parameter groups can receive
// gradient from a loss on the discriminator's fake-path output when the fake
// image itself is detached and taps are live. Keys are "generator.encoder",
// "generator.decoder" and, with VAE heads, "generator.latent".
std::map<std::string, bool> gradient_reachability(const UUNetModel& model,
                                                  const TopologyConfig& topo);

}  // namespace uunet
