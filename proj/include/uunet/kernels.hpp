#pragma once

#include <cstdint>

#include "uunet/tensor.hpp"

// Dense compute kernels for the network forward/backward passes.
//
// Each kernel comes in two flavors: a plain serial reference and an OpenMP
// version parallelized over independent output slabs. Both walk the inner
// reduction in the same fixed order, so their results are bitwise identical;
// the tests assert exactly that and the rest of the library calls the
// dispatching wrapper.
//
// Weight layouts: conv weights are [out][in][kh][kw]; transposed-conv
// weights are [in][out][kh][kw]. Padding is always kernel/2 ("same" for
// stride 1), stride is 1 or 2.

namespace uunet::kernels {

// Runtime switch between the serial and OpenMP paths; defaults to parallel
// when compiled with OpenMP. UUNET_SERIAL=1 in the environment forces the
// serial reference at process start.
bool parallel_enabled();
void set_parallel(bool on);
int thread_count();

struct ConvDims {
  int n;        // batch
  int cin;      // input channels
  int h, w;     // input spatial
  int cout;     // output channels
  int k;        // kernel size (odd)
  int stride;   // 1 or 2
  int out_h() const { return (h + 2 * (k / 2) - k) / stride + 1; }
  int out_w() const { return (w + 2 * (k / 2) - k) / stride + 1; }
};

// out[n,co,y,x] = b[co] + sum_{ci,ky,kx} in[n,ci,y*s+ky-p,x*s+kx-p] * w[co,ci,ky,kx]
void conv2d_forward_serial(Scalar* out, const Scalar* in, const Scalar* w,
                           const Scalar* b, const ConvDims& d);
void conv2d_forward_omp(Scalar* out, const Scalar* in, const Scalar* w,
                        const Scalar* b, const ConvDims& d);
void conv2d_forward(Scalar* out, const Scalar* in, const Scalar* w,
                    const Scalar* b, const ConvDims& d);

void conv2d_backward_input_serial(Scalar* din, const Scalar* gout,
                                  const Scalar* w, const ConvDims& d);
void conv2d_backward_input_omp(Scalar* din, const Scalar* gout,
                               const Scalar* w, const ConvDims& d);
void conv2d_backward_input(Scalar* din, const Scalar* gout, const Scalar* w,
                           const ConvDims& d);

// Accumulates into dw/db (callers zero them first when appropriate).
void conv2d_backward_weight_serial(Scalar* dw, Scalar* db, const Scalar* gout,
                                   const Scalar* in, const ConvDims& d);
void conv2d_backward_weight_omp(Scalar* dw, Scalar* db, const Scalar* gout,
                                const Scalar* in, const ConvDims& d);
void conv2d_backward_weight(Scalar* dw, Scalar* db, const Scalar* gout,
                            const Scalar* in, const ConvDims& d);

// Transposed convolution, stride 1, same padding. Shapes are preserved.
// out[n,co,y,x] = b[co] + sum_{ci,ky,kx} in[n,ci,y-ky+p,x-kx+p] * w[ci,co,ky,kx]
struct DeconvDims {
  int n;
  int cin;
  int h, w;
  int cout;
  int k;
};

void deconv2d_forward_serial(Scalar* out, const Scalar* in, const Scalar* w,
                             const Scalar* b, const DeconvDims& d);
void deconv2d_forward_omp(Scalar* out, const Scalar* in, const Scalar* w,
                          const Scalar* b, const DeconvDims& d);
void deconv2d_forward(Scalar* out, const Scalar* in, const Scalar* w,
                      const Scalar* b, const DeconvDims& d);

void deconv2d_backward_input_serial(Scalar* din, const Scalar* gout,
                                    const Scalar* w, const DeconvDims& d);
void deconv2d_backward_input_omp(Scalar* din, const Scalar* gout,
                                 const Scalar* w, const DeconvDims& d);
void deconv2d_backward_input(Scalar* din, const Scalar* gout, const Scalar* w,
                             const DeconvDims& d);

void deconv2d_backward_weight_serial(Scalar* dw, Scalar* db,
                                     const Scalar* gout, const Scalar* in,
                                     const DeconvDims& d);
void deconv2d_backward_weight_omp(Scalar* dw, Scalar* db, const Scalar* gout,
                                  const Scalar* in, const DeconvDims& d);
void deconv2d_backward_weight(Scalar* dw, Scalar* db, const Scalar* gout,
                              const Scalar* in, const DeconvDims& d);

// 2x2 max pooling, stride 2. argmax stores the winning corner (0..3) per
// output element for the backward pass.
void maxpool2x2_forward_serial(Scalar* out, std::uint8_t* argmax,
                               const Scalar* in, int n, int c, int h, int w);
void maxpool2x2_forward_omp(Scalar* out, std::uint8_t* argmax,
                            const Scalar* in, int n, int c, int h, int w);
void maxpool2x2_forward(Scalar* out, std::uint8_t* argmax, const Scalar* in,
                        int n, int c, int h, int w);

void maxpool2x2_backward_serial(Scalar* din, const Scalar* gout,
                                const std::uint8_t* argmax, int n, int c,
                                int h, int w);
void maxpool2x2_backward_omp(Scalar* din, const Scalar* gout,
                             const std::uint8_t* argmax, int n, int c, int h,
                             int w);
void maxpool2x2_backward(Scalar* din, const Scalar* gout,
                         const std::uint8_t* argmax, int n, int c, int h,
                         int w);

// Nearest-neighbor 2x upsampling.
void upsample2x_forward_serial(Scalar* out, const Scalar* in, int n, int c,
                               int h, int w);
void upsample2x_forward_omp(Scalar* out, const Scalar* in, int n, int c,
                            int h, int w);
void upsample2x_forward(Scalar* out, const Scalar* in, int n, int c, int h,
                        int w);

void upsample2x_backward_serial(Scalar* din, const Scalar* gout, int n, int c,
                                int h, int w);
void upsample2x_backward_omp(Scalar* din, const Scalar* gout, int n, int c,
                             int h, int w);
void upsample2x_backward(Scalar* din, const Scalar* gout, int n, int c, int h,
                         int w);

}  // namespace uunet::kernels
