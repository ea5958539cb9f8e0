#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "test_util.hpp"
#include "uunet/unet.hpp"

using namespace uunet;
using namespace uunet::testutil;

namespace {

UNetConfig make_cfg(int depth, int base, int in_ch, int hw) {
  UNetConfig c;
  c.depth = depth;
  c.base_channels = base;
  c.in_channels = in_ch;
  c.out_channels = in_ch;
  c.image_h = hw;
  c.image_w = hw;
  return c;
}

}  // namespace

TEST_CASE("encoder ladder: depth 3, base 16, 64x64 input") {
  UNetConfig cfg = make_cfg(3, 16, 3, 64);
  EncoderModule enc = build_encoder(cfg, 1);
  Tape t;
  Var x = t.constant(random_normal(Shape(1, 3, 64, 64), 2));
  EncoderOutput out = enc.forward(t, x);
  CHECK(t.val(out.bottleneck).shape() == Shape(1, 128, 8, 8));
  REQUIRE(out.skips.size() == 3);
  CHECK(t.val(out.skips[0]).shape() == Shape(1, 16, 64, 64));
  CHECK(t.val(out.skips[1]).shape() == Shape(1, 32, 32, 32));
  CHECK(t.val(out.skips[2]).shape() == Shape(1, 64, 16, 16));
}

TEST_CASE("encoder ladder: minimal depth 1, base 1, 2x2 input") {
  UNetConfig cfg = make_cfg(1, 1, 1, 2);
  EncoderModule enc = build_encoder(cfg, 1);
  Tape t;
  Var x = t.constant(random_normal(Shape(1, 1, 2, 2), 3));
  EncoderOutput out = enc.forward(t, x);
  CHECK(t.val(out.bottleneck).shape() == Shape(1, 2, 1, 1));
  CHECK(out.skips.size() == 1);
}

TEST_CASE("build rejects spatial dims not divisible by 2^depth") {
  UNetConfig cfg = make_cfg(3, 16, 3, 64);
  cfg.image_h = 60;
  cfg.image_w = 60;
  CHECK_THROWS_WITH_AS(build_encoder(cfg, 1),
                       doctest::Contains("not divisible by 2^depth"),
                       std::invalid_argument);
}

TEST_CASE("build rejects zero depth and zero channels") {
  UNetConfig cfg = make_cfg(0, 16, 3, 64);
  CHECK_THROWS_AS(build_encoder(cfg, 1), std::invalid_argument);
  cfg = make_cfg(3, 0, 3, 64);
  CHECK_THROWS_AS(build_encoder(cfg, 1), std::invalid_argument);
}

TEST_CASE("build rejects configs above the parameter cap") {
  UNetConfig cfg = make_cfg(3, 16, 3, 64);
  cfg.param_cap = 1000;
  CHECK_THROWS_WITH_AS(build_encoder(cfg, 1), doctest::Contains("exceeds cap"),
                       std::invalid_argument);
}

TEST_CASE("decoder mirrors the encoder ladder back to input resolution") {
  UNetConfig cfg = make_cfg(3, 16, 3, 64);
  EncoderModule enc = build_encoder(cfg, 1);
  DecoderModule dec = build_decoder(cfg, {}, 1);
  Tape t;
  Var x = t.constant(random_normal(Shape(1, 3, 64, 64), 4));
  UNetForward f = forward_unet(enc, dec, t, x);
  CHECK(t.val(f.y).shape() == Shape(1, 3, 64, 64));
  REQUIRE(f.dec_taps.size() == 3);
  CHECK(t.val(f.dec_taps[0]).shape() == Shape(1, 16, 64, 64));
  CHECK(t.val(f.dec_taps[2]).shape() == Shape(1, 64, 16, 16));
}

TEST_CASE("decoder with declared extras concatenates the declared widths") {
  UNetConfig cfg = make_cfg(3, 16, 3, 64);
  EncoderModule enc = build_encoder(cfg, 1);
  DecoderModule dec =
      DecoderModule(cfg, {16, 32, 64}, cfg.bottleneck_channels(), true,
                    "dec", 1);
  Tape t;
  Var x = t.constant(random_normal(Shape(1, 3, 64, 64), 5));
  EncoderOutput eo = enc.forward(t, x);
  std::vector<Var> extras{
      t.constant(random_normal(Shape(1, 16, 64, 64), 6)),
      t.constant(random_normal(Shape(1, 32, 32, 32), 7)),
      t.constant(random_normal(Shape(1, 64, 16, 16), 8)),
  };
  auto out = dec.forward(t, eo.bottleneck, eo.skips, extras);
  CHECK(t.val(out.y).shape() == Shape(1, 3, 64, 64));
}

TEST_CASE("extras arity mismatch is rejected at build time") {
  UNetConfig cfg = make_cfg(3, 16, 3, 64);
  CHECK_THROWS_AS(build_decoder(cfg, {16, 32}, 1), std::invalid_argument);
}

TEST_CASE("supplying extras to a decoder that declared none is an error") {
  UNetConfig cfg = make_cfg(2, 4, 3, 16);
  EncoderModule enc = build_encoder(cfg, 1);
  DecoderModule dec = build_decoder(cfg, {0, 0}, 1);
  Tape t;
  Var x = t.constant(random_normal(Shape(1, 3, 16, 16), 9));
  EncoderOutput eo = enc.forward(t, x);
  std::vector<Var> extras{t.constant(random_normal(Shape(1, 4, 16, 16), 10)),
                          t.constant(random_normal(Shape(1, 8, 8, 8), 11))};
  CHECK_THROWS_WITH_AS(dec.forward(t, eo.bottleneck, eo.skips, extras),
                       doctest::Contains("none declared"),
                       std::invalid_argument);
}

TEST_CASE("mis-shaped extra skip names the level and expected dims") {
  UNetConfig cfg = make_cfg(2, 4, 3, 16);
  EncoderModule enc = build_encoder(cfg, 1);
  DecoderModule dec = build_decoder(cfg, {4, 8}, 1);
  Tape t;
  Var x = t.constant(random_normal(Shape(1, 3, 16, 16), 12));
  EncoderOutput eo = enc.forward(t, x);
  std::vector<Var> extras{t.constant(random_normal(Shape(1, 4, 16, 16), 13)),
                          t.constant(random_normal(Shape(1, 9, 8, 8), 14))};
  CHECK_THROWS_WITH_AS(dec.forward(t, eo.bottleneck, eo.skips, extras),
                       doctest::Contains("level 1"), std::invalid_argument);
}

TEST_CASE("forward is deterministic under a fixed seed") {
  UNetConfig cfg = make_cfg(2, 4, 3, 16);
  Tensor x = random_normal(Shape(2, 3, 16, 16), 20);

  auto run = [&]() {
    EncoderModule enc = build_encoder(cfg, 77);
    DecoderModule dec = build_decoder(cfg, {}, 77);
    Tape t;
    UNetForward f = forward_unet(enc, dec, t, t.constant(x));
    return t.val(f.y);
  };
  CHECK(bitwise_equal(run(), run()));
}

TEST_CASE("shape round trip holds for depths 1 through 4") {
  for (int depth = 1; depth <= 4; ++depth) {
    const int hw = 1 << (depth + 2);
    UNetConfig cfg = make_cfg(depth, 2, 3, hw);
    EncoderModule enc = build_encoder(cfg, 5);
    DecoderModule dec = build_decoder(cfg, {}, 5);
    Tape t;
    Var x = t.constant(random_normal(Shape(1, 3, hw, hw), depth));
    UNetForward f = forward_unet(enc, dec, t, x);
    CHECK(t.val(f.y).shape() == Shape(1, 3, hw, hw));
    // skip ladder channels: base * 2^k
    for (int k = 0; k < depth; ++k) {
      CHECK(t.val(f.enc.skips[k]).shape().c == 2 << k);
      CHECK(t.val(f.enc.skips[k]).shape().h == hw >> k);
    }
  }
}

TEST_CASE("generator output is tanh-bounded") {
  UNetConfig cfg = make_cfg(2, 4, 3, 16);
  EncoderModule enc = build_encoder(cfg, 6);
  DecoderModule dec = build_decoder(cfg, {}, 6);
  Tape t;
  Var x = t.constant(random_normal(Shape(1, 3, 16, 16), 21, 3.0));
  UNetForward f = forward_unet(enc, dec, t, x);
  const Tensor& y = t.val(f.y);
  for (std::int64_t i = 0; i < y.size(); ++i) {
    CHECK(y[i] > -1.0);
    CHECK(y[i] < 1.0);
  }
}

// depth-1, base-2 net on a 4x4 input: d(sum(y))/d(weight) against central
// finite differences, across a sample of weights from every parameter.
TEST_CASE("gradient sanity: autodiff matches finite differences") {
  UNetConfig cfg = make_cfg(1, 2, 1, 4);
  EncoderModule enc = build_encoder(cfg, 30);
  DecoderModule dec = build_decoder(cfg, {}, 30);
  Tensor x = random_normal(Shape(1, 1, 4, 4), 31, 0.5);

  std::vector<Param*> params;
  enc.collect(params);
  dec.collect(params);
  // move pre-activations well away from the relu kink so the central
  // difference never straddles it
  for (size_t i = 0; i < params.size(); ++i) {
    Rng r(100 + i);
    r.fill_normal(params[i]->value, 0.0, 0.4);
  }

  auto eval = [&]() {
    Tape t;
    UNetForward f = forward_unet(enc, dec, t, t.constant(x));
    return t.val(t.sum_all(f.y)).item();
  };

  zero_grads(params);
  Tape t;
  UNetForward f = forward_unet(enc, dec, t, t.constant(x));
  t.backward(t.sum_all(f.y));

  Rng rng(32);
  for (Param* p : params) {
    for (int k = 0; k < 3; ++k) {
      const std::int64_t i = static_cast<std::int64_t>(
          rng.below(static_cast<std::uint64_t>(p->value.size())));
      const double fd = central_diff(eval, &p->value[i]);
      INFO(p->name, "[", i, "]");
      CHECK(rel_err(p->grad[i], fd) < 1e-3);
    }
  }
}

TEST_CASE("batch norm switch builds and trains shapes correctly") {
  UNetConfig cfg = make_cfg(2, 4, 3, 16);
  cfg.batch_norm = true;
  EncoderModule enc = build_encoder(cfg, 8);
  DecoderModule dec = build_decoder(cfg, {}, 8);
  Tape t;
  Var x = t.constant(random_normal(Shape(2, 3, 16, 16), 22));
  UNetForward f = forward_unet(enc, dec, t, x);
  CHECK(t.val(f.y).shape() == Shape(2, 3, 16, 16));
  std::vector<BufferRef> bufs;
  enc.collect_buffers(bufs);
  dec.collect_buffers(bufs);
  CHECK(!bufs.empty());
}
