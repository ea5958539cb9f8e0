#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "uunet/nn.hpp"

namespace uunet {

struct UNetConfig {
  int in_channels = 3;
  int out_channels = 3;
  int base_channels = 16;
  int depth = 3;
  // Build-time input contract; spatial dims must divide by 2^depth and the
  // tail module (when attached downstream) is sized from them.
  int image_h = 64;
  int image_w = 64;
  Activation activation = Activation::relu;
  bool batch_norm = false;
  std::int64_t param_cap = 50'000'000;

  void validate() const;
  int level_channels(int k) const { return base_channels << k; }
  int bottleneck_channels() const { return base_channels << depth; }
};

struct EncoderOutput {
  Var bottleneck;
  std::vector<Var> skips;  // shallowest first; skips[k] at (H/2^k, W/2^k)
};

// Encoder: depth levels of [two 3x3 convs + activation, then 2x2 max pool],
// channels doubling per level, plus a bottleneck conv block after the last
// pool. Cross-network feature maps can be declared per level (and at the
// bottleneck) and are concatenated to that level's input at forward time.
class EncoderModule {
 public:
  EncoderModule() = default;
  EncoderModule(const UNetConfig& cfg, std::vector<int> extra_ch,
                int bottleneck_extra_ch, const std::string& prefix,
                std::uint64_t seed);

  EncoderOutput forward(Tape& t, Var x, const std::vector<Var>& extras = {},
                        std::optional<Var> bottleneck_extra = std::nullopt,
                        bool training = true);

  const UNetConfig& cfg() const { return cfg_; }
  const std::vector<int>& extra_channels() const { return extra_ch_; }
  int bottleneck_extra_channels() const { return bott_extra_ch_; }
  void collect(std::vector<Param*>& out);
  void collect_buffers(std::vector<BufferRef>& out);

  static std::int64_t param_count(const UNetConfig& cfg,
                                  const std::vector<int>& extra_ch,
                                  int bottleneck_extra_ch);

 private:
  UNetConfig cfg_;
  std::vector<int> extra_ch_;
  int bott_extra_ch_ = 0;
  std::vector<ConvBlock> levels_;
  ConvBlock bottleneck_;
  std::string prefix_;
};

// Decoder: per level, nearest 2x upsample, 3x3 transposed conv, concat with
// the own-encoder skip plus declared extra maps, then a conv block; a final
// 1x1 conv maps to out_channels (tanh-bounded for image outputs).
class DecoderModule {
 public:
  struct Out {
    Var y;
    std::vector<Var> taps;  // decoder level outputs, shallowest first
  };

  DecoderModule() = default;
  DecoderModule(const UNetConfig& cfg, std::vector<int> extra_ch,
                int in_channels, bool tanh_output, const std::string& prefix,
                std::uint64_t seed);

  Out forward(Tape& t, Var bottleneck, const std::vector<Var>& skips,
              const std::vector<Var>& extras = {}, bool training = true);

  const UNetConfig& cfg() const { return cfg_; }
  const std::vector<int>& extra_channels() const { return extra_ch_; }
  int in_channels() const { return in_ch_; }
  void collect(std::vector<Param*>& out);
  void collect_buffers(std::vector<BufferRef>& out);

  static std::int64_t param_count(const UNetConfig& cfg,
                                  const std::vector<int>& extra_ch,
                                  int in_channels);

 private:
  UNetConfig cfg_;
  std::vector<int> extra_ch_;
  int in_ch_ = 0;
  bool tanh_out_ = true;
  std::vector<Deconv2d> ups_;      // indexed by level k
  std::vector<ConvBlock> blocks_;  // indexed by level k
  Conv2d final_;
};

// Spec-level constructors for a standalone U-Net (no cross-network extras).
EncoderModule build_encoder(const UNetConfig& cfg, std::uint64_t seed = 0,
                            const std::string& prefix = "unet.enc");
DecoderModule build_decoder(const UNetConfig& cfg,
                            const std::vector<int>& extra_skip_channels,
                            std::uint64_t seed = 0,
                            const std::string& prefix = "unet.dec");

struct UNetForward {
  Var y;
  EncoderOutput enc;
  std::vector<Var> dec_taps;
};

UNetForward forward_unet(EncoderModule& enc, DecoderModule& dec, Tape& t,
                         Var x, const std::vector<Var>& extra_skips = {},
                         bool training = true);

}  // namespace uunet
