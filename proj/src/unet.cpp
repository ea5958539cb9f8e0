#include "uunet/unet.hpp"

#include <stdexcept>

namespace uunet {

namespace {

[[noreturn]] void cfg_error(const std::string& what) {
  throw std::invalid_argument("UNetConfig: " + what);
}

void check_extra(const char* where, int level, const Tensor& got,
                 int want_ch, int want_h, int want_w) {
  const Shape s = got.shape();
  if (s.c != want_ch || s.h != want_h || s.w != want_w) {
    throw std::invalid_argument(
        std::string(where) + ": extra skip at level " + std::to_string(level) +
        " expected (*," + std::to_string(want_ch) + "," +
        std::to_string(want_h) + "," + std::to_string(want_w) + "), got " +
        s.str());
  }
}

}  // namespace

void UNetConfig::validate() const {
  if (depth < 1) cfg_error("depth must be >= 1");
  if (base_channels < 1) cfg_error("base_channels must be >= 1");
  if (in_channels < 1) cfg_error("in_channels must be >= 1");
  if (out_channels < 1) cfg_error("out_channels must be >= 1");
  const int div = 1 << depth;
  if (image_h % div != 0 || image_w % div != 0) {
    cfg_error("input spatial dims " + std::to_string(image_h) + "x" +
              std::to_string(image_w) + " not divisible by 2^depth = " +
              std::to_string(div));
  }
  if (param_cap < 1) cfg_error("param_cap must be >= 1");
}

// --- encoder ----------------------------------------------------------------

std::int64_t EncoderModule::param_count(const UNetConfig& cfg,
                                        const std::vector<int>& extra_ch,
                                        int bottleneck_extra_ch) {
  std::int64_t n = 0;
  for (int k = 0; k < cfg.depth; ++k) {
    const int base_in = k == 0 ? cfg.in_channels : cfg.level_channels(k - 1);
    const int extra = extra_ch.empty() ? 0 : extra_ch[k];
    n += ConvBlock::param_count(base_in + extra, cfg.level_channels(k),
                                cfg.batch_norm);
  }
  n += ConvBlock::param_count(
      cfg.level_channels(cfg.depth - 1) + bottleneck_extra_ch,
      cfg.bottleneck_channels(), cfg.batch_norm);
  return n;
}

EncoderModule::EncoderModule(const UNetConfig& cfg, std::vector<int> extra_ch,
                             int bottleneck_extra_ch,
                             const std::string& prefix, std::uint64_t seed)
    : cfg_(cfg),
      extra_ch_(std::move(extra_ch)),
      bott_extra_ch_(bottleneck_extra_ch),
      prefix_(prefix) {
  cfg_.validate();
  if (!extra_ch_.empty() &&
      extra_ch_.size() != static_cast<size_t>(cfg_.depth)) {
    throw std::invalid_argument(
        prefix + ": extra channel list has " +
        std::to_string(extra_ch_.size()) + " entries, depth is " +
        std::to_string(cfg_.depth));
  }
  if (extra_ch_.empty()) extra_ch_.assign(cfg_.depth, 0);

  const std::int64_t count = param_count(cfg_, extra_ch_, bott_extra_ch_);
  if (count > cfg_.param_cap) {
    throw std::invalid_argument(
        prefix + ": parameter count " + std::to_string(count) +
        " exceeds cap " + std::to_string(cfg_.param_cap));
  }

  levels_.reserve(cfg_.depth);
  for (int k = 0; k < cfg_.depth; ++k) {
    const int base_in = k == 0 ? cfg_.in_channels : cfg_.level_channels(k - 1);
    levels_.emplace_back(prefix + ".l" + std::to_string(k),
                         base_in + extra_ch_[k], cfg_.level_channels(k),
                         cfg_.activation, cfg_.batch_norm, seed);
  }
  bottleneck_ = ConvBlock(prefix + ".bottleneck",
                          cfg_.level_channels(cfg_.depth - 1) + bott_extra_ch_,
                          cfg_.bottleneck_channels(), cfg_.activation,
                          cfg_.batch_norm, seed);
}

EncoderOutput EncoderModule::forward(Tape& t, Var x,
                                     const std::vector<Var>& extras,
                                     std::optional<Var> bottleneck_extra,
                                     bool training) {
  const Shape xs = t.val(x).shape();
  if (xs.c != cfg_.in_channels || xs.h != cfg_.image_h ||
      xs.w != cfg_.image_w) {
    throw std::invalid_argument(
        prefix_ + ": input expected (*," + std::to_string(cfg_.in_channels) +
        "," + std::to_string(cfg_.image_h) + "," +
        std::to_string(cfg_.image_w) + "), got " + xs.str());
  }
  bool any_extra_declared = false;
  for (int c : extra_ch_) any_extra_declared |= c > 0;
  if (!extras.empty() && !any_extra_declared) {
    throw std::invalid_argument(prefix_ +
                                ": extra skips supplied but none declared");
  }
  if (any_extra_declared &&
      extras.size() != static_cast<size_t>(cfg_.depth)) {
    throw std::invalid_argument(
        prefix_ + ": expected " + std::to_string(cfg_.depth) +
        " extra skips, got " + std::to_string(extras.size()));
  }
  if (bott_extra_ch_ > 0 && !bottleneck_extra.has_value()) {
    throw std::invalid_argument(prefix_ + ": bottleneck extra missing");
  }
  if (bott_extra_ch_ == 0 && bottleneck_extra.has_value()) {
    throw std::invalid_argument(prefix_ +
                                ": bottleneck extra supplied but not declared");
  }

  EncoderOutput out;
  Var h = x;
  int sh = cfg_.image_h, sw = cfg_.image_w;
  for (int k = 0; k < cfg_.depth; ++k) {
    if (extra_ch_[k] > 0) {
      if (!extras[k].valid()) {
        throw std::invalid_argument(prefix_ + ": extra skip at level " +
                                    std::to_string(k) + " missing");
      }
      check_extra(prefix_.c_str(), k, t.val(extras[k]), extra_ch_[k], sh, sw);
      h = t.concat_channels({h, extras[k]});
    }
    h = levels_[k].forward(t, h, training);
    out.skips.push_back(h);
    h = t.maxpool2x2(h);
    sh /= 2;
    sw /= 2;
  }
  if (bott_extra_ch_ > 0) {
    check_extra(prefix_.c_str(), cfg_.depth, t.val(*bottleneck_extra),
                bott_extra_ch_, sh, sw);
    h = t.concat_channels({h, *bottleneck_extra});
  }
  out.bottleneck = bottleneck_.forward(t, h, training);
  return out;
}

void EncoderModule::collect(std::vector<Param*>& out) {
  for (auto& l : levels_) l.collect(out);
  bottleneck_.collect(out);
}

void EncoderModule::collect_buffers(std::vector<BufferRef>& out) {
  for (auto& l : levels_) l.collect_buffers(out);
  bottleneck_.collect_buffers(out);
}

// --- decoder ----------------------------------------------------------------

std::int64_t DecoderModule::param_count(const UNetConfig& cfg,
                                        const std::vector<int>& extra_ch,
                                        int in_channels) {
  std::int64_t n = 0;
  for (int k = cfg.depth - 1; k >= 0; --k) {
    const int path_in =
        k == cfg.depth - 1 ? in_channels : cfg.level_channels(k + 1);
    const int ch = cfg.level_channels(k);
    const int extra = extra_ch.empty() ? 0 : extra_ch[k];
    n += Deconv2d::param_count(path_in, ch, 3);
    n += ConvBlock::param_count(ch + ch + extra, ch, cfg.batch_norm);
  }
  n += Conv2d::param_count(cfg.base_channels, cfg.out_channels, 1);
  return n;
}

DecoderModule::DecoderModule(const UNetConfig& cfg, std::vector<int> extra_ch,
                             int in_channels, bool tanh_output,
                             const std::string& prefix, std::uint64_t seed)
    : cfg_(cfg),
      extra_ch_(std::move(extra_ch)),
      in_ch_(in_channels),
      tanh_out_(tanh_output) {
  cfg_.validate();
  if (!extra_ch_.empty() &&
      extra_ch_.size() != static_cast<size_t>(cfg_.depth)) {
    throw std::invalid_argument(
        prefix + ": extra channel list has " +
        std::to_string(extra_ch_.size()) + " entries, depth is " +
        std::to_string(cfg_.depth));
  }
  if (extra_ch_.empty()) extra_ch_.assign(cfg_.depth, 0);
  if (in_ch_ < 1) {
    throw std::invalid_argument(prefix + ": decoder input channels must be >= 1");
  }

  const std::int64_t count = param_count(cfg_, extra_ch_, in_ch_);
  if (count > cfg_.param_cap) {
    throw std::invalid_argument(
        prefix + ": parameter count " + std::to_string(count) +
        " exceeds cap " + std::to_string(cfg_.param_cap));
  }

  ups_.resize(cfg_.depth);
  blocks_.resize(cfg_.depth);
  for (int k = cfg_.depth - 1; k >= 0; --k) {
    const int path_in =
        k == cfg_.depth - 1 ? in_ch_ : cfg_.level_channels(k + 1);
    const int ch = cfg_.level_channels(k);
    ups_[k] = Deconv2d(prefix + ".up" + std::to_string(k), path_in, ch, 3,
                       seed);
    blocks_[k] = ConvBlock(prefix + ".l" + std::to_string(k),
                           ch + ch + extra_ch_[k], ch, cfg_.activation,
                           cfg_.batch_norm, seed);
  }
  final_ = Conv2d(prefix + ".out", cfg_.base_channels, cfg_.out_channels, 1, 1,
                  seed);
}

DecoderModule::Out DecoderModule::forward(Tape& t, Var bottleneck,
                                          const std::vector<Var>& skips,
                                          const std::vector<Var>& extras,
                                          bool training) {
  if (skips.size() != static_cast<size_t>(cfg_.depth)) {
    throw std::invalid_argument("decoder: expected " +
                                std::to_string(cfg_.depth) + " skips, got " +
                                std::to_string(skips.size()));
  }
  bool any_extra_declared = false;
  for (int c : extra_ch_) any_extra_declared |= c > 0;
  if (!extras.empty() && !any_extra_declared) {
    throw std::invalid_argument("decoder: extra skips supplied but none declared");
  }
  if (any_extra_declared && extras.size() != static_cast<size_t>(cfg_.depth)) {
    throw std::invalid_argument("decoder: expected " +
                                std::to_string(cfg_.depth) +
                                " extra skips, got " +
                                std::to_string(extras.size()));
  }
  const Shape bs = t.val(bottleneck).shape();
  const int want_h = cfg_.image_h >> cfg_.depth;
  const int want_w = cfg_.image_w >> cfg_.depth;
  if (bs.c != in_ch_ || bs.h != want_h || bs.w != want_w) {
    throw std::invalid_argument(
        "decoder: bottleneck expected (*," + std::to_string(in_ch_) + "," +
        std::to_string(want_h) + "," + std::to_string(want_w) + "), got " +
        bs.str());
  }

  Out out;
  out.taps.resize(cfg_.depth);
  Var h = bottleneck;
  for (int k = cfg_.depth - 1; k >= 0; --k) {
    h = t.upsample2x(h);
    h = ups_[k].forward(t, h);
    const Shape hs = t.val(h).shape();
    const Shape ss = t.val(skips[k]).shape();
    if (ss.c != cfg_.level_channels(k) || ss.h != hs.h || ss.w != hs.w) {
      throw std::invalid_argument(
          "decoder: skip at level " + std::to_string(k) + " expected (*," +
          std::to_string(cfg_.level_channels(k)) + "," +
          std::to_string(hs.h) + "," + std::to_string(hs.w) + "), got " +
          ss.str());
    }
    std::vector<Var> parts{h, skips[k]};
    if (extra_ch_[k] > 0) {
      if (!extras[k].valid()) {
        throw std::invalid_argument("decoder: extra skip at level " +
                                    std::to_string(k) + " missing");
      }
      check_extra("decoder", k, t.val(extras[k]), extra_ch_[k], hs.h, hs.w);
      parts.push_back(extras[k]);
    }
    h = t.concat_channels(parts);
    h = blocks_[k].forward(t, h, training);
    out.taps[k] = h;
  }
  out.y = final_.forward(t, h);
  if (tanh_out_) out.y = t.tanh_op(out.y);
  return out;
}

void DecoderModule::collect(std::vector<Param*>& out) {
  for (auto& u : ups_) u.collect(out);
  for (auto& b : blocks_) b.collect(out);
  final_.collect(out);
}

void DecoderModule::collect_buffers(std::vector<BufferRef>& out) {
  for (auto& b : blocks_) b.collect_buffers(out);
}

// --- spec-level ops -----------------------------------------------------------

EncoderModule build_encoder(const UNetConfig& cfg, std::uint64_t seed,
                            const std::string& prefix) {
  return EncoderModule(cfg, {}, 0, prefix, seed);
}

DecoderModule build_decoder(const UNetConfig& cfg,
                            const std::vector<int>& extra_skip_channels,
                            std::uint64_t seed, const std::string& prefix) {
  return DecoderModule(cfg, extra_skip_channels, cfg.bottleneck_channels(),
                       /*tanh_output=*/true, prefix, seed);
}

UNetForward forward_unet(EncoderModule& enc, DecoderModule& dec, Tape& t,
                         Var x, const std::vector<Var>& extra_skips,
                         bool training) {
  UNetForward f;
  f.enc = enc.forward(t, x, {}, std::nullopt, training);
  auto d = dec.forward(t, f.enc.bottleneck, f.enc.skips, extra_skips, training);
  f.y = d.y;
  f.dec_taps = std::move(d.taps);
  if (!t.val(f.y).all_finite()) {
    throw std::runtime_error("forward_unet: non-finite values in output");
  }
  return f;
}

}  // namespace uunet
