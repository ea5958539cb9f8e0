#include "uunet/kernels.hpp"

#include <cstdlib>
#include <cstring>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace uunet::kernels {

namespace {

bool initial_parallel() {
#ifdef _OPENMP
  const char* env = std::getenv("UUNET_SERIAL");
  return !(env != nullptr && env[0] == '1');
#else
  return false;
#endif
}

bool g_parallel = initial_parallel();

}  // namespace

bool parallel_enabled() { return g_parallel; }

void set_parallel(bool on) {
#ifdef _OPENMP
  g_parallel = on;
#else
  (void)on;
  g_parallel = false;
#endif
}

int thread_count() {
#ifdef _OPENMP
  return g_parallel ? omp_get_max_threads() : 1;
#else
  return 1;
#endif
}

// ---------------------------------------------------------------------------
// conv2d
//
// The stride-1 path is written as shifted row accumulations: for a fixed
// (ci,ky,kx) the inner x loop is a contiguous fused multiply-add stream,
// which the compiler vectorizes. The strided path (tail module only) uses
// the plain gather form. Both keep a fixed accumulation order per output
// element so serial and OpenMP runs agree bitwise.
// ---------------------------------------------------------------------------

namespace {

// Zero-padded copy of every (n,c) plane; pad 1 on each side. Lets the 3x3
// paths run full-width fused rows with no boundary branches.
std::vector<Scalar> pad1_planes(const Scalar* in, int n, int c, int h, int w) {
  const int ph = h + 2, pw = w + 2;
  std::vector<Scalar> out(static_cast<size_t>(n) * c * ph * pw, 0.0);
  const std::int64_t planes = static_cast<std::int64_t>(n) * c;
#pragma omp parallel for schedule(static) if (g_parallel)
  for (std::int64_t p = 0; p < planes; ++p) {
    const Scalar* src = in + p * h * w;
    Scalar* dst = out.data() + p * ph * pw;
    for (int y = 0; y < h; ++y) {
      std::memcpy(dst + (y + 1) * pw + 1, src + y * w,
                  sizeof(Scalar) * static_cast<size_t>(w));
    }
  }
  return out;
}

// dst_plane[y,x] += sum_{a,b in 0..2} w9[a*3+b] * padded[y+a, x+b]
inline void corr3_plane_accum(Scalar* dst, const Scalar* padded, int h, int w,
                              const Scalar* w9) {
  const int pw = w + 2;
  const Scalar w00 = w9[0], w01 = w9[1], w02 = w9[2];
  const Scalar w10 = w9[3], w11 = w9[4], w12 = w9[5];
  const Scalar w20 = w9[6], w21 = w9[7], w22 = w9[8];
  for (int y = 0; y < h; ++y) {
    Scalar* __restrict__ orow = dst + static_cast<std::int64_t>(y) * w;
    const Scalar* __restrict__ r0 = padded + static_cast<std::int64_t>(y) * pw;
    const Scalar* __restrict__ r1 = r0 + pw;
    const Scalar* __restrict__ r2 = r1 + pw;
    for (int x = 0; x < w; ++x) {
      orow[x] += w00 * r0[x] + w01 * r0[x + 1] + w02 * r0[x + 2] +
                 w10 * r1[x] + w11 * r1[x + 1] + w12 * r1[x + 2] +
                 w20 * r2[x] + w21 * r2[x + 1] + w22 * r2[x + 2];
    }
  }
}

inline void flip9(const Scalar* w9, Scalar* out) {
  for (int i = 0; i < 9; ++i) out[i] = w9[8 - i];
}

// One output plane of a stride-1 3x3 convolution over pre-padded input.
inline void conv2d_plane_s1k3(Scalar* out, const Scalar* padded,
                              const Scalar* w, Scalar bias, const ConvDims& d,
                              int n, int co) {
  const int H = d.h, W = d.w;
  const int pplane = (H + 2) * (W + 2);
  Scalar* o = out + ((static_cast<std::int64_t>(n) * d.cout + co) * H) * W;
  for (std::int64_t i = 0; i < static_cast<std::int64_t>(H) * W; ++i) {
    o[i] = bias;
  }
  for (int ci = 0; ci < d.cin; ++ci) {
    const Scalar* ip =
        padded + (static_cast<std::int64_t>(n) * d.cin + ci) * pplane;
    const Scalar* wp =
        w + ((static_cast<std::int64_t>(co) * d.cin + ci) * 3) * 3;
    corr3_plane_accum(o, ip, H, W, wp);
  }
}

// Generic fallback (1x1 kernels and anything unusual), stride 1.
inline void conv2d_plane_s1(Scalar* out, const Scalar* in, const Scalar* w,
                            Scalar bias, const ConvDims& d, int n, int co) {
  const int p = d.k / 2;
  const int H = d.h, W = d.w;
  Scalar* o = out + ((static_cast<std::int64_t>(n) * d.cout + co) * H) * W;
  for (std::int64_t i = 0; i < static_cast<std::int64_t>(H) * W; ++i) {
    o[i] = bias;
  }
  for (int ci = 0; ci < d.cin; ++ci) {
    const Scalar* ip =
        in + ((static_cast<std::int64_t>(n) * d.cin + ci) * H) * W;
    const Scalar* wp =
        w + ((static_cast<std::int64_t>(co) * d.cin + ci) * d.k) * d.k;
    for (int ky = 0; ky < d.k; ++ky) {
      const int y0 = (p - ky > 0) ? p - ky : 0;
      const int y1 = (H - ky + p < H) ? H - ky + p : H;
      for (int kx = 0; kx < d.k; ++kx) {
        const Scalar ws = wp[ky * d.k + kx];
        if (ws == 0.0) continue;
        const int x0 = (p - kx > 0) ? p - kx : 0;
        const int x1 = (W - kx + p < W) ? W - kx + p : W;
        const int shift_y = ky - p;
        const int shift_x = kx - p;
        for (int y = y0; y < y1; ++y) {
          Scalar* __restrict__ orow = o + static_cast<std::int64_t>(y) * W;
          const Scalar* __restrict__ irow =
              ip + static_cast<std::int64_t>(y + shift_y) * W + shift_x;
          for (int x = x0; x < x1; ++x) {
            orow[x] += ws * irow[x];
          }
        }
      }
    }
  }
}

inline void conv2d_plane_strided(Scalar* out, const Scalar* in,
                                 const Scalar* w, Scalar bias,
                                 const ConvDims& d, int n, int co) {
  const int p = d.k / 2;
  const int Ho = d.out_h(), Wo = d.out_w();
  Scalar* o = out + ((static_cast<std::int64_t>(n) * d.cout + co) * Ho) * Wo;
  for (int y = 0; y < Ho; ++y) {
    for (int x = 0; x < Wo; ++x) {
      Scalar acc = bias;
      for (int ci = 0; ci < d.cin; ++ci) {
        const Scalar* ip =
            in + ((static_cast<std::int64_t>(n) * d.cin + ci) * d.h) * d.w;
        const Scalar* wp =
            w + ((static_cast<std::int64_t>(co) * d.cin + ci) * d.k) * d.k;
        for (int ky = 0; ky < d.k; ++ky) {
          const int iy = y * d.stride + ky - p;
          if (iy < 0 || iy >= d.h) continue;
          for (int kx = 0; kx < d.k; ++kx) {
            const int ix = x * d.stride + kx - p;
            if (ix < 0 || ix >= d.w) continue;
            acc += ip[static_cast<std::int64_t>(iy) * d.w + ix] *
                   wp[ky * d.k + kx];
          }
        }
      }
      o[static_cast<std::int64_t>(y) * Wo + x] = acc;
    }
  }
}

inline void conv2d_plane(Scalar* out, const Scalar* in, const Scalar* w,
                         const Scalar* b, const ConvDims& d, int n, int co) {
  const Scalar bias = b != nullptr ? b[co] : 0.0;
  if (d.stride == 1) {
    conv2d_plane_s1(out, in, w, bias, d, n, co);
  } else {
    conv2d_plane_strided(out, in, w, bias, d, n, co);
  }
}

}  // namespace

void conv2d_forward_serial(Scalar* out, const Scalar* in, const Scalar* w,
                           const Scalar* b, const ConvDims& d) {
  if (d.k == 3 && d.stride == 1) {
    const std::vector<Scalar> padded = pad1_planes(in, d.n, d.cin, d.h, d.w);
    for (int n = 0; n < d.n; ++n) {
      for (int co = 0; co < d.cout; ++co) {
        conv2d_plane_s1k3(out, padded.data(), w, b != nullptr ? b[co] : 0.0,
                          d, n, co);
      }
    }
    return;
  }
  for (int n = 0; n < d.n; ++n) {
    for (int co = 0; co < d.cout; ++co) {
      conv2d_plane(out, in, w, b, d, n, co);
    }
  }
}

void conv2d_forward_omp(Scalar* out, const Scalar* in, const Scalar* w,
                        const Scalar* b, const ConvDims& d) {
  if (d.k == 3 && d.stride == 1) {
    const std::vector<Scalar> padded = pad1_planes(in, d.n, d.cin, d.h, d.w);
#pragma omp parallel for collapse(2) schedule(static)
    for (int n = 0; n < d.n; ++n) {
      for (int co = 0; co < d.cout; ++co) {
        conv2d_plane_s1k3(out, padded.data(), w, b != nullptr ? b[co] : 0.0,
                          d, n, co);
      }
    }
    return;
  }
#pragma omp parallel for collapse(2) schedule(static)
  for (int n = 0; n < d.n; ++n) {
    for (int co = 0; co < d.cout; ++co) {
      conv2d_plane(out, in, w, b, d, n, co);
    }
  }
}

void conv2d_forward(Scalar* out, const Scalar* in, const Scalar* w,
                    const Scalar* b, const ConvDims& d) {
  if (g_parallel) {
    conv2d_forward_omp(out, in, w, b, d);
  } else {
    conv2d_forward_serial(out, in, w, b, d);
  }
}

namespace {

inline void conv2d_dinput_plane(Scalar* din, const Scalar* gout,
                                const Scalar* w, const ConvDims& d, int n,
                                int ci) {
  const int p = d.k / 2;
  const int H = d.h, W = d.w;
  const int Ho = d.out_h(), Wo = d.out_w();
  Scalar* dp = din + ((static_cast<std::int64_t>(n) * d.cin + ci) * H) * W;
  std::memset(dp, 0, sizeof(Scalar) * static_cast<size_t>(H) * W);
  if (d.stride == 1) {
    // din[iy,ix] += g[iy-ky+p, ix-kx+p] * w  (valid output rows only)
    for (int co = 0; co < d.cout; ++co) {
      const Scalar* gp =
          gout + ((static_cast<std::int64_t>(n) * d.cout + co) * H) * W;
      const Scalar* wp =
          w + ((static_cast<std::int64_t>(co) * d.cin + ci) * d.k) * d.k;
      for (int ky = 0; ky < d.k; ++ky) {
        const int sy = ky - p;
        const int y0 = (sy > 0) ? sy : 0;
        const int y1 = (H + sy < H) ? H + sy : H;
        for (int kx = 0; kx < d.k; ++kx) {
          const Scalar ws = wp[ky * d.k + kx];
          if (ws == 0.0) continue;
          const int sx = kx - p;
          const int x0 = (sx > 0) ? sx : 0;
          const int x1 = (W + sx < W) ? W + sx : W;
          for (int iy = y0; iy < y1; ++iy) {
            Scalar* __restrict__ drow = dp + static_cast<std::int64_t>(iy) * W;
            const Scalar* __restrict__ grow =
                gp + static_cast<std::int64_t>(iy - sy) * W - sx;
            for (int ix = x0; ix < x1; ++ix) {
              drow[ix] += ws * grow[ix];
            }
          }
        }
      }
    }
  } else {
    for (int co = 0; co < d.cout; ++co) {
      const Scalar* gp =
          gout + ((static_cast<std::int64_t>(n) * d.cout + co) * Ho) * Wo;
      const Scalar* wp =
          w + ((static_cast<std::int64_t>(co) * d.cin + ci) * d.k) * d.k;
      for (int y = 0; y < Ho; ++y) {
        for (int x = 0; x < Wo; ++x) {
          const Scalar g = gp[static_cast<std::int64_t>(y) * Wo + x];
          if (g == 0.0) continue;
          for (int ky = 0; ky < d.k; ++ky) {
            const int iy = y * d.stride + ky - p;
            if (iy < 0 || iy >= H) continue;
            for (int kx = 0; kx < d.k; ++kx) {
              const int ix = x * d.stride + kx - p;
              if (ix < 0 || ix >= W) continue;
              dp[static_cast<std::int64_t>(iy) * W + ix] +=
                  g * wp[ky * d.k + kx];
            }
          }
        }
      }
    }
  }
}

}  // namespace

namespace {

// stride-1 3x3: din[n,ci] = sum_co corr3(padded g[n,co], flip(w[co,ci]))
inline void conv2d_dinput_plane_s1k3(Scalar* din, const Scalar* padded_g,
                                     const Scalar* w, const ConvDims& d,
                                     int n, int ci) {
  const int H = d.h, W = d.w;
  const int pplane = (H + 2) * (W + 2);
  Scalar* dp = din + ((static_cast<std::int64_t>(n) * d.cin + ci) * H) * W;
  std::memset(dp, 0, sizeof(Scalar) * static_cast<size_t>(H) * W);
  Scalar wf[9];
  for (int co = 0; co < d.cout; ++co) {
    const Scalar* gp =
        padded_g + (static_cast<std::int64_t>(n) * d.cout + co) * pplane;
    flip9(w + ((static_cast<std::int64_t>(co) * d.cin + ci) * 3) * 3, wf);
    corr3_plane_accum(dp, gp, H, W, wf);
  }
}

}  // namespace

void conv2d_backward_input_serial(Scalar* din, const Scalar* gout,
                                  const Scalar* w, const ConvDims& d) {
  if (d.k == 3 && d.stride == 1) {
    const std::vector<Scalar> padded = pad1_planes(gout, d.n, d.cout, d.h, d.w);
    for (int n = 0; n < d.n; ++n) {
      for (int ci = 0; ci < d.cin; ++ci) {
        conv2d_dinput_plane_s1k3(din, padded.data(), w, d, n, ci);
      }
    }
    return;
  }
  for (int n = 0; n < d.n; ++n) {
    for (int ci = 0; ci < d.cin; ++ci) {
      conv2d_dinput_plane(din, gout, w, d, n, ci);
    }
  }
}

void conv2d_backward_input_omp(Scalar* din, const Scalar* gout,
                               const Scalar* w, const ConvDims& d) {
  if (d.k == 3 && d.stride == 1) {
    const std::vector<Scalar> padded = pad1_planes(gout, d.n, d.cout, d.h, d.w);
#pragma omp parallel for collapse(2) schedule(static)
    for (int n = 0; n < d.n; ++n) {
      for (int ci = 0; ci < d.cin; ++ci) {
        conv2d_dinput_plane_s1k3(din, padded.data(), w, d, n, ci);
      }
    }
    return;
  }
#pragma omp parallel for collapse(2) schedule(static)
  for (int n = 0; n < d.n; ++n) {
    for (int ci = 0; ci < d.cin; ++ci) {
      conv2d_dinput_plane(din, gout, w, d, n, ci);
    }
  }
}

void conv2d_backward_input(Scalar* din, const Scalar* gout, const Scalar* w,
                           const ConvDims& d) {
  if (g_parallel) {
    conv2d_backward_input_omp(din, gout, w, d);
  } else {
    conv2d_backward_input_serial(din, gout, w, d);
  }
}

namespace {

// Nine tap accumulators in one pass: acc[a*3+b] = sum g[y,x] * padded[y+a,x+b]
inline void accum9_plane(Scalar* acc, const Scalar* g, const Scalar* padded,
                         int h, int w) {
  const int pw = w + 2;
  Scalar a0 = 0, a1 = 0, a2 = 0, a3 = 0, a4 = 0, a5 = 0, a6 = 0, a7 = 0,
         a8 = 0;
  for (int y = 0; y < h; ++y) {
    const Scalar* __restrict__ grow = g + static_cast<std::int64_t>(y) * w;
    const Scalar* __restrict__ r0 = padded + static_cast<std::int64_t>(y) * pw;
    const Scalar* __restrict__ r1 = r0 + pw;
    const Scalar* __restrict__ r2 = r1 + pw;
    for (int x = 0; x < w; ++x) {
      const Scalar gv = grow[x];
      a0 += gv * r0[x];
      a1 += gv * r0[x + 1];
      a2 += gv * r0[x + 2];
      a3 += gv * r1[x];
      a4 += gv * r1[x + 1];
      a5 += gv * r1[x + 2];
      a6 += gv * r2[x];
      a7 += gv * r2[x + 1];
      a8 += gv * r2[x + 2];
    }
  }
  acc[0] += a0; acc[1] += a1; acc[2] += a2;
  acc[3] += a3; acc[4] += a4; acc[5] += a5;
  acc[6] += a6; acc[7] += a7; acc[8] += a8;
}

inline void conv2d_dweight_pair_s1k3(Scalar* dw, const Scalar* gout,
                                     const Scalar* padded_in,
                                     const ConvDims& d, int co, int ci) {
  const int H = d.h, W = d.w;
  const int pplane = (H + 2) * (W + 2);
  Scalar acc[9] = {0};
  for (int n = 0; n < d.n; ++n) {
    const Scalar* gp =
        gout + ((static_cast<std::int64_t>(n) * d.cout + co) * H) * W;
    const Scalar* ip =
        padded_in + (static_cast<std::int64_t>(n) * d.cin + ci) * pplane;
    accum9_plane(acc, gp, ip, H, W);
  }
  Scalar* wp = dw + ((static_cast<std::int64_t>(co) * d.cin + ci) * 3) * 3;
  for (int i = 0; i < 9; ++i) wp[i] += acc[i];
}

// deconv weight layout is [ci][co] and the tap mapping is flipped:
// dw[ky][kx] corresponds to acc[(2-ky)*3 + (2-kx)]
inline void deconv2d_dweight_pair_k3(Scalar* dw, const Scalar* gout,
                                     const Scalar* padded_in,
                                     const DeconvDims& d, int ci, int co) {
  const int H = d.h, W = d.w;
  const int pplane = (H + 2) * (W + 2);
  Scalar acc[9] = {0};
  for (int n = 0; n < d.n; ++n) {
    const Scalar* gp =
        gout + ((static_cast<std::int64_t>(n) * d.cout + co) * H) * W;
    const Scalar* ip =
        padded_in + (static_cast<std::int64_t>(n) * d.cin + ci) * pplane;
    accum9_plane(acc, gp, ip, H, W);
  }
  Scalar* wp = dw + ((static_cast<std::int64_t>(ci) * d.cout + co) * 3) * 3;
  for (int i = 0; i < 9; ++i) wp[i] += acc[8 - i];
}

inline void conv2d_dweight_pair(Scalar* dw, const Scalar* gout,
                                const Scalar* in, const ConvDims& d, int co,
                                int ci) {
  const int p = d.k / 2;
  const int H = d.h, W = d.w;
  const int Ho = d.out_h(), Wo = d.out_w();
  Scalar* wp = dw + ((static_cast<std::int64_t>(co) * d.cin + ci) * d.k) * d.k;
  for (int ky = 0; ky < d.k; ++ky) {
    for (int kx = 0; kx < d.k; ++kx) {
      Scalar acc = 0.0;
      for (int n = 0; n < d.n; ++n) {
        const Scalar* gp =
            gout + ((static_cast<std::int64_t>(n) * d.cout + co) * Ho) * Wo;
        const Scalar* ip =
            in + ((static_cast<std::int64_t>(n) * d.cin + ci) * H) * W;
        if (d.stride == 1) {
          const int sy = ky - p, sx = kx - p;
          const int y0 = (-sy > 0) ? -sy : 0;
          const int y1 = (H - sy < H) ? H - sy : H;
          const int x0 = (-sx > 0) ? -sx : 0;
          const int x1 = (W - sx < W) ? W - sx : W;
          for (int y = y0; y < y1; ++y) {
            const Scalar* __restrict__ grow = gp + static_cast<std::int64_t>(y) * W;
            const Scalar* __restrict__ irow =
                ip + static_cast<std::int64_t>(y + sy) * W + sx;
            Scalar row_acc = 0.0;
            for (int x = x0; x < x1; ++x) {
              row_acc += grow[x] * irow[x];
            }
            acc += row_acc;
          }
        } else {
          for (int y = 0; y < Ho; ++y) {
            const int iy = y * d.stride + ky - p;
            if (iy < 0 || iy >= H) continue;
            for (int x = 0; x < Wo; ++x) {
              const int ix = x * d.stride + kx - p;
              if (ix < 0 || ix >= W) continue;
              acc += gp[static_cast<std::int64_t>(y) * Wo + x] *
                     ip[static_cast<std::int64_t>(iy) * W + ix];
            }
          }
        }
      }
      wp[ky * d.k + kx] += acc;
    }
  }
}

inline void conv2d_dbias(Scalar* db, const Scalar* gout, const ConvDims& d) {
  const int Ho = d.out_h(), Wo = d.out_w();
  for (int co = 0; co < d.cout; ++co) {
    Scalar acc = 0.0;
    for (int n = 0; n < d.n; ++n) {
      const Scalar* gp =
          gout + ((static_cast<std::int64_t>(n) * d.cout + co) * Ho) * Wo;
      for (std::int64_t i = 0; i < static_cast<std::int64_t>(Ho) * Wo; ++i) {
        acc += gp[i];
      }
    }
    db[co] += acc;
  }
}

}  // namespace

void conv2d_backward_weight_serial(Scalar* dw, Scalar* db, const Scalar* gout,
                                   const Scalar* in, const ConvDims& d) {
  if (d.k == 3 && d.stride == 1) {
    const std::vector<Scalar> padded = pad1_planes(in, d.n, d.cin, d.h, d.w);
    for (int co = 0; co < d.cout; ++co) {
      for (int ci = 0; ci < d.cin; ++ci) {
        conv2d_dweight_pair_s1k3(dw, gout, padded.data(), d, co, ci);
      }
    }
  } else {
    for (int co = 0; co < d.cout; ++co) {
      for (int ci = 0; ci < d.cin; ++ci) {
        conv2d_dweight_pair(dw, gout, in, d, co, ci);
      }
    }
  }
  if (db != nullptr) conv2d_dbias(db, gout, d);
}

void conv2d_backward_weight_omp(Scalar* dw, Scalar* db, const Scalar* gout,
                                const Scalar* in, const ConvDims& d) {
  if (d.k == 3 && d.stride == 1) {
    const std::vector<Scalar> padded = pad1_planes(in, d.n, d.cin, d.h, d.w);
#pragma omp parallel for collapse(2) schedule(static)
    for (int co = 0; co < d.cout; ++co) {
      for (int ci = 0; ci < d.cin; ++ci) {
        conv2d_dweight_pair_s1k3(dw, gout, padded.data(), d, co, ci);
      }
    }
  } else {
#pragma omp parallel for collapse(2) schedule(static)
    for (int co = 0; co < d.cout; ++co) {
      for (int ci = 0; ci < d.cin; ++ci) {
        conv2d_dweight_pair(dw, gout, in, d, co, ci);
      }
    }
  }
  if (db != nullptr) conv2d_dbias(db, gout, d);
}

void conv2d_backward_weight(Scalar* dw, Scalar* db, const Scalar* gout,
                            const Scalar* in, const ConvDims& d) {
  if (g_parallel) {
    conv2d_backward_weight_omp(dw, db, gout, in, d);
  } else {
    conv2d_backward_weight_serial(dw, db, gout, in, d);
  }
}

// ---------------------------------------------------------------------------
// deconv2d (transposed conv, stride 1, same padding)
// ---------------------------------------------------------------------------

namespace {

inline void deconv2d_plane(Scalar* out, const Scalar* in, const Scalar* w,
                           const Scalar* b, const DeconvDims& d, int n,
                           int co) {
  const int p = d.k / 2;
  const int H = d.h, W = d.w;
  Scalar* o = out + ((static_cast<std::int64_t>(n) * d.cout + co) * H) * W;
  const Scalar bias = b != nullptr ? b[co] : 0.0;
  for (std::int64_t i = 0; i < static_cast<std::int64_t>(H) * W; ++i) {
    o[i] = bias;
  }
  for (int ci = 0; ci < d.cin; ++ci) {
    const Scalar* ip =
        in + ((static_cast<std::int64_t>(n) * d.cin + ci) * H) * W;
    const Scalar* wp =
        w + ((static_cast<std::int64_t>(ci) * d.cout + co) * d.k) * d.k;
    for (int ky = 0; ky < d.k; ++ky) {
      const int sy = ky - p;  // out[y] reads in[y - sy]
      const int y0 = (sy > 0) ? sy : 0;
      const int y1 = (H + sy < H) ? H + sy : H;
      for (int kx = 0; kx < d.k; ++kx) {
        const Scalar ws = wp[ky * d.k + kx];
        if (ws == 0.0) continue;
        const int sx = kx - p;
        const int x0 = (sx > 0) ? sx : 0;
        const int x1 = (W + sx < W) ? W + sx : W;
        for (int y = y0; y < y1; ++y) {
          Scalar* __restrict__ orow = o + static_cast<std::int64_t>(y) * W;
          const Scalar* __restrict__ irow =
              ip + static_cast<std::int64_t>(y - sy) * W - sx;
          for (int x = x0; x < x1; ++x) {
            orow[x] += ws * irow[x];
          }
        }
      }
    }
  }
}

inline void deconv2d_dinput_plane(Scalar* din, const Scalar* gout,
                                  const Scalar* w, const DeconvDims& d, int n,
                                  int ci) {
  const int p = d.k / 2;
  const int H = d.h, W = d.w;
  Scalar* dp = din + ((static_cast<std::int64_t>(n) * d.cin + ci) * H) * W;
  std::memset(dp, 0, sizeof(Scalar) * static_cast<size_t>(H) * W);
  // din[iy,ix] += g[iy+ky-p, ix+kx-p] * w[ci,co,ky,kx]
  for (int co = 0; co < d.cout; ++co) {
    const Scalar* gp =
        gout + ((static_cast<std::int64_t>(n) * d.cout + co) * H) * W;
    const Scalar* wp =
        w + ((static_cast<std::int64_t>(ci) * d.cout + co) * d.k) * d.k;
    for (int ky = 0; ky < d.k; ++ky) {
      const int sy = ky - p;
      const int y0 = (-sy > 0) ? -sy : 0;
      const int y1 = (H - sy < H) ? H - sy : H;
      for (int kx = 0; kx < d.k; ++kx) {
        const Scalar ws = wp[ky * d.k + kx];
        if (ws == 0.0) continue;
        const int sx = kx - p;
        const int x0 = (-sx > 0) ? -sx : 0;
        const int x1 = (W - sx < W) ? W - sx : W;
        for (int iy = y0; iy < y1; ++iy) {
          Scalar* __restrict__ drow = dp + static_cast<std::int64_t>(iy) * W;
          const Scalar* __restrict__ grow =
              gp + static_cast<std::int64_t>(iy + sy) * W + sx;
          for (int ix = x0; ix < x1; ++ix) {
            drow[ix] += ws * grow[ix];
          }
        }
      }
    }
  }
}

inline void deconv2d_dweight_pair(Scalar* dw, const Scalar* gout,
                                  const Scalar* in, const DeconvDims& d,
                                  int ci, int co) {
  const int p = d.k / 2;
  const int H = d.h, W = d.w;
  Scalar* wp = dw + ((static_cast<std::int64_t>(ci) * d.cout + co) * d.k) * d.k;
  for (int ky = 0; ky < d.k; ++ky) {
    for (int kx = 0; kx < d.k; ++kx) {
      const int sy = ky - p, sx = kx - p;
      Scalar acc = 0.0;
      for (int n = 0; n < d.n; ++n) {
        const Scalar* gp =
            gout + ((static_cast<std::int64_t>(n) * d.cout + co) * H) * W;
        const Scalar* ip =
            in + ((static_cast<std::int64_t>(n) * d.cin + ci) * H) * W;
        const int y0 = (sy > 0) ? sy : 0;
        const int y1 = (H + sy < H) ? H + sy : H;
        const int x0 = (sx > 0) ? sx : 0;
        const int x1 = (W + sx < W) ? W + sx : W;
        for (int y = y0; y < y1; ++y) {
          const Scalar* __restrict__ grow = gp + static_cast<std::int64_t>(y) * W;
          const Scalar* __restrict__ irow = ip + static_cast<std::int64_t>(y - sy) * W - sx;
          Scalar row_acc = 0.0;
          for (int x = x0; x < x1; ++x) {
            row_acc += grow[x] * irow[x];
          }
          acc += row_acc;
        }
      }
      wp[ky * d.k + kx] += acc;
    }
  }
}

}  // namespace

namespace {

// k=3: out[n,co] = b + sum_ci corr3(padded in[n,ci], flip(w[ci,co]))
inline void deconv2d_plane_k3(Scalar* out, const Scalar* padded,
                              const Scalar* w, const Scalar* b,
                              const DeconvDims& d, int n, int co) {
  const int H = d.h, W = d.w;
  const int pplane = (H + 2) * (W + 2);
  Scalar* o = out + ((static_cast<std::int64_t>(n) * d.cout + co) * H) * W;
  const Scalar bias = b != nullptr ? b[co] : 0.0;
  for (std::int64_t i = 0; i < static_cast<std::int64_t>(H) * W; ++i) {
    o[i] = bias;
  }
  Scalar wf[9];
  for (int ci = 0; ci < d.cin; ++ci) {
    const Scalar* ip =
        padded + (static_cast<std::int64_t>(n) * d.cin + ci) * pplane;
    flip9(w + ((static_cast<std::int64_t>(ci) * d.cout + co) * 3) * 3, wf);
    corr3_plane_accum(o, ip, H, W, wf);
  }
}

// k=3: din[n,ci] = sum_co corr3(padded g[n,co], w[ci,co]) (unflipped)
inline void deconv2d_dinput_plane_k3(Scalar* din, const Scalar* padded_g,
                                     const Scalar* w, const DeconvDims& d,
                                     int n, int ci) {
  const int H = d.h, W = d.w;
  const int pplane = (H + 2) * (W + 2);
  Scalar* dp = din + ((static_cast<std::int64_t>(n) * d.cin + ci) * H) * W;
  std::memset(dp, 0, sizeof(Scalar) * static_cast<size_t>(H) * W);
  for (int co = 0; co < d.cout; ++co) {
    const Scalar* gp =
        padded_g + (static_cast<std::int64_t>(n) * d.cout + co) * pplane;
    const Scalar* wp =
        w + ((static_cast<std::int64_t>(ci) * d.cout + co) * 3) * 3;
    corr3_plane_accum(dp, gp, H, W, wp);
  }
}

}  // namespace

void deconv2d_forward_serial(Scalar* out, const Scalar* in, const Scalar* w,
                             const Scalar* b, const DeconvDims& d) {
  if (d.k == 3) {
    const std::vector<Scalar> padded = pad1_planes(in, d.n, d.cin, d.h, d.w);
    for (int n = 0; n < d.n; ++n) {
      for (int co = 0; co < d.cout; ++co) {
        deconv2d_plane_k3(out, padded.data(), w, b, d, n, co);
      }
    }
    return;
  }
  for (int n = 0; n < d.n; ++n) {
    for (int co = 0; co < d.cout; ++co) {
      deconv2d_plane(out, in, w, b, d, n, co);
    }
  }
}

void deconv2d_forward_omp(Scalar* out, const Scalar* in, const Scalar* w,
                          const Scalar* b, const DeconvDims& d) {
  if (d.k == 3) {
    const std::vector<Scalar> padded = pad1_planes(in, d.n, d.cin, d.h, d.w);
#pragma omp parallel for collapse(2) schedule(static)
    for (int n = 0; n < d.n; ++n) {
      for (int co = 0; co < d.cout; ++co) {
        deconv2d_plane_k3(out, padded.data(), w, b, d, n, co);
      }
    }
    return;
  }
#pragma omp parallel for collapse(2) schedule(static)
  for (int n = 0; n < d.n; ++n) {
    for (int co = 0; co < d.cout; ++co) {
      deconv2d_plane(out, in, w, b, d, n, co);
    }
  }
}

void deconv2d_forward(Scalar* out, const Scalar* in, const Scalar* w,
                      const Scalar* b, const DeconvDims& d) {
  if (g_parallel) {
    deconv2d_forward_omp(out, in, w, b, d);
  } else {
    deconv2d_forward_serial(out, in, w, b, d);
  }
}

void deconv2d_backward_input_serial(Scalar* din, const Scalar* gout,
                                    const Scalar* w, const DeconvDims& d) {
  if (d.k == 3) {
    const std::vector<Scalar> padded = pad1_planes(gout, d.n, d.cout, d.h, d.w);
    for (int n = 0; n < d.n; ++n) {
      for (int ci = 0; ci < d.cin; ++ci) {
        deconv2d_dinput_plane_k3(din, padded.data(), w, d, n, ci);
      }
    }
    return;
  }
  for (int n = 0; n < d.n; ++n) {
    for (int ci = 0; ci < d.cin; ++ci) {
      deconv2d_dinput_plane(din, gout, w, d, n, ci);
    }
  }
}

void deconv2d_backward_input_omp(Scalar* din, const Scalar* gout,
                                 const Scalar* w, const DeconvDims& d) {
  if (d.k == 3) {
    const std::vector<Scalar> padded = pad1_planes(gout, d.n, d.cout, d.h, d.w);
#pragma omp parallel for collapse(2) schedule(static)
    for (int n = 0; n < d.n; ++n) {
      for (int ci = 0; ci < d.cin; ++ci) {
        deconv2d_dinput_plane_k3(din, padded.data(), w, d, n, ci);
      }
    }
    return;
  }
#pragma omp parallel for collapse(2) schedule(static)
  for (int n = 0; n < d.n; ++n) {
    for (int ci = 0; ci < d.cin; ++ci) {
      deconv2d_dinput_plane(din, gout, w, d, n, ci);
    }
  }
}

void deconv2d_backward_input(Scalar* din, const Scalar* gout, const Scalar* w,
                             const DeconvDims& d) {
  if (g_parallel) {
    deconv2d_backward_input_omp(din, gout, w, d);
  } else {
    deconv2d_backward_input_serial(din, gout, w, d);
  }
}

void deconv2d_backward_weight_serial(Scalar* dw, Scalar* db,
                                     const Scalar* gout, const Scalar* in,
                                     const DeconvDims& d) {
  if (d.k == 3) {
    const std::vector<Scalar> padded = pad1_planes(in, d.n, d.cin, d.h, d.w);
    for (int ci = 0; ci < d.cin; ++ci) {
      for (int co = 0; co < d.cout; ++co) {
        deconv2d_dweight_pair_k3(dw, gout, padded.data(), d, ci, co);
      }
    }
  } else {
    for (int ci = 0; ci < d.cin; ++ci) {
      for (int co = 0; co < d.cout; ++co) {
        deconv2d_dweight_pair(dw, gout, in, d, ci, co);
      }
    }
  }
  if (db != nullptr) {
    ConvDims cd{d.n, d.cin, d.h, d.w, d.cout, d.k, 1};
    conv2d_dbias(db, gout, cd);
  }
}

void deconv2d_backward_weight_omp(Scalar* dw, Scalar* db, const Scalar* gout,
                                  const Scalar* in, const DeconvDims& d) {
  if (d.k == 3) {
    const std::vector<Scalar> padded = pad1_planes(in, d.n, d.cin, d.h, d.w);
#pragma omp parallel for collapse(2) schedule(static)
    for (int ci = 0; ci < d.cin; ++ci) {
      for (int co = 0; co < d.cout; ++co) {
        deconv2d_dweight_pair_k3(dw, gout, padded.data(), d, ci, co);
      }
    }
  } else {
#pragma omp parallel for collapse(2) schedule(static)
    for (int ci = 0; ci < d.cin; ++ci) {
      for (int co = 0; co < d.cout; ++co) {
        deconv2d_dweight_pair(dw, gout, in, d, ci, co);
      }
    }
  }
  if (db != nullptr) {
    ConvDims cd{d.n, d.cin, d.h, d.w, d.cout, d.k, 1};
    conv2d_dbias(db, gout, cd);
  }
}

void deconv2d_backward_weight(Scalar* dw, Scalar* db, const Scalar* gout,
                              const Scalar* in, const DeconvDims& d) {
  if (g_parallel) {
    deconv2d_backward_weight_omp(dw, db, gout, in, d);
  } else {
    deconv2d_backward_weight_serial(dw, db, gout, in, d);
  }
}

// ---------------------------------------------------------------------------
// maxpool 2x2 / nearest upsample 2x
// ---------------------------------------------------------------------------

namespace {

inline void maxpool_plane(Scalar* out, std::uint8_t* argmax, const Scalar* in,
                          int h, int w, std::int64_t plane) {
  const int ho = h / 2, wo = w / 2;
  const Scalar* ip = in + plane * h * w;
  Scalar* op = out + plane * ho * wo;
  std::uint8_t* ap = argmax + plane * ho * wo;
  for (int y = 0; y < ho; ++y) {
    for (int x = 0; x < wo; ++x) {
      const Scalar v00 = ip[(2 * y) * w + 2 * x];
      const Scalar v01 = ip[(2 * y) * w + 2 * x + 1];
      const Scalar v10 = ip[(2 * y + 1) * w + 2 * x];
      const Scalar v11 = ip[(2 * y + 1) * w + 2 * x + 1];
      Scalar best = v00;
      std::uint8_t arg = 0;
      if (v01 > best) { best = v01; arg = 1; }
      if (v10 > best) { best = v10; arg = 2; }
      if (v11 > best) { best = v11; arg = 3; }
      op[y * wo + x] = best;
      ap[y * wo + x] = arg;
    }
  }
}

inline void upsample_plane(Scalar* out, const Scalar* in, int h, int w,
                           std::int64_t plane) {
  const Scalar* ip = in + plane * h * w;
  Scalar* op = out + plane * (2 * h) * (2 * w);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const Scalar v = ip[y * w + x];
      op[(2 * y) * (2 * w) + 2 * x] = v;
      op[(2 * y) * (2 * w) + 2 * x + 1] = v;
      op[(2 * y + 1) * (2 * w) + 2 * x] = v;
      op[(2 * y + 1) * (2 * w) + 2 * x + 1] = v;
    }
  }
}

}  // namespace

void maxpool2x2_forward_serial(Scalar* out, std::uint8_t* argmax,
                               const Scalar* in, int n, int c, int h, int w) {
  const std::int64_t planes = static_cast<std::int64_t>(n) * c;
  for (std::int64_t p = 0; p < planes; ++p) {
    maxpool_plane(out, argmax, in, h, w, p);
  }
}

void maxpool2x2_forward_omp(Scalar* out, std::uint8_t* argmax,
                            const Scalar* in, int n, int c, int h, int w) {
  const std::int64_t planes = static_cast<std::int64_t>(n) * c;
#pragma omp parallel for schedule(static)
  for (std::int64_t p = 0; p < planes; ++p) {
    maxpool_plane(out, argmax, in, h, w, p);
  }
}

void maxpool2x2_forward(Scalar* out, std::uint8_t* argmax, const Scalar* in,
                        int n, int c, int h, int w) {
  if (g_parallel) {
    maxpool2x2_forward_omp(out, argmax, in, n, c, h, w);
  } else {
    maxpool2x2_forward_serial(out, argmax, in, n, c, h, w);
  }
}

void maxpool2x2_backward_serial(Scalar* din, const Scalar* gout,
                                const std::uint8_t* argmax, int n, int c,
                                int h, int w) {
  const std::int64_t planes = static_cast<std::int64_t>(n) * c;
  const int ho = h / 2, wo = w / 2;
  for (std::int64_t p = 0; p < planes; ++p) {
    Scalar* dp = din + p * h * w;
    std::memset(dp, 0, sizeof(Scalar) * static_cast<size_t>(h) * w);
    const Scalar* gp = gout + p * ho * wo;
    const std::uint8_t* ap = argmax + p * ho * wo;
    for (int y = 0; y < ho; ++y) {
      for (int x = 0; x < wo; ++x) {
        const std::uint8_t a = ap[y * wo + x];
        const int iy = 2 * y + (a >> 1);
        const int ix = 2 * x + (a & 1);
        dp[iy * w + ix] = gp[y * wo + x];
      }
    }
  }
}

void maxpool2x2_backward_omp(Scalar* din, const Scalar* gout,
                             const std::uint8_t* argmax, int n, int c, int h,
                             int w) {
  const std::int64_t planes = static_cast<std::int64_t>(n) * c;
  const int ho = h / 2, wo = w / 2;
#pragma omp parallel for schedule(static)
  for (std::int64_t p = 0; p < planes; ++p) {
    Scalar* dp = din + p * h * w;
    std::memset(dp, 0, sizeof(Scalar) * static_cast<size_t>(h) * w);
    const Scalar* gp = gout + p * ho * wo;
    const std::uint8_t* ap = argmax + p * ho * wo;
    for (int y = 0; y < ho; ++y) {
      for (int x = 0; x < wo; ++x) {
        const std::uint8_t a = ap[y * wo + x];
        const int iy = 2 * y + (a >> 1);
        const int ix = 2 * x + (a & 1);
        dp[iy * w + ix] = gp[y * wo + x];
      }
    }
  }
}

void maxpool2x2_backward(Scalar* din, const Scalar* gout,
                         const std::uint8_t* argmax, int n, int c, int h,
                         int w) {
  if (g_parallel) {
    maxpool2x2_backward_omp(din, gout, argmax, n, c, h, w);
  } else {
    maxpool2x2_backward_serial(din, gout, argmax, n, c, h, w);
  }
}

void upsample2x_forward_serial(Scalar* out, const Scalar* in, int n, int c,
                               int h, int w) {
  const std::int64_t planes = static_cast<std::int64_t>(n) * c;
  for (std::int64_t p = 0; p < planes; ++p) {
    upsample_plane(out, in, h, w, p);
  }
}

void upsample2x_forward_omp(Scalar* out, const Scalar* in, int n, int c,
                            int h, int w) {
  const std::int64_t planes = static_cast<std::int64_t>(n) * c;
#pragma omp parallel for schedule(static)
  for (std::int64_t p = 0; p < planes; ++p) {
    upsample_plane(out, in, h, w, p);
  }
}

void upsample2x_forward(Scalar* out, const Scalar* in, int n, int c, int h,
                        int w) {
  if (g_parallel) {
    upsample2x_forward_omp(out, in, n, c, h, w);
  } else {
    upsample2x_forward_serial(out, in, n, c, h, w);
  }
}

void upsample2x_backward_serial(Scalar* din, const Scalar* gout, int n, int c,
                                int h, int w) {
  const std::int64_t planes = static_cast<std::int64_t>(n) * c;
  for (std::int64_t p = 0; p < planes; ++p) {
    Scalar* dp = din + p * h * w;
    const Scalar* gp = gout + p * (2 * h) * (2 * w);
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        dp[y * w + x] = gp[(2 * y) * (2 * w) + 2 * x] +
                        gp[(2 * y) * (2 * w) + 2 * x + 1] +
                        gp[(2 * y + 1) * (2 * w) + 2 * x] +
                        gp[(2 * y + 1) * (2 * w) + 2 * x + 1];
      }
    }
  }
}

void upsample2x_backward_omp(Scalar* din, const Scalar* gout, int n, int c,
                             int h, int w) {
  const std::int64_t planes = static_cast<std::int64_t>(n) * c;
#pragma omp parallel for schedule(static)
  for (std::int64_t p = 0; p < planes; ++p) {
    Scalar* dp = din + p * h * w;
    const Scalar* gp = gout + p * (2 * h) * (2 * w);
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        dp[y * w + x] = gp[(2 * y) * (2 * w) + 2 * x] +
                        gp[(2 * y) * (2 * w) + 2 * x + 1] +
                        gp[(2 * y + 1) * (2 * w) + 2 * x] +
                        gp[(2 * y + 1) * (2 * w) + 2 * x + 1];
      }
    }
  }
}

void upsample2x_backward(Scalar* din, const Scalar* gout, int n, int c, int h,
                         int w) {
  if (g_parallel) {
    upsample2x_backward_omp(din, gout, n, c, h, w);
  } else {
    upsample2x_backward_serial(din, gout, n, c, h, w);
  }
}

}  // namespace uunet::kernels
