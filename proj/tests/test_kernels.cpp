#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "test_util.hpp"
#include "uunet/kernels.hpp"

using namespace uunet;
using namespace uunet::testutil;

namespace {

double dot(const Tensor& a, const Tensor& b) {
  double acc = 0.0;
  for (std::int64_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

}  // namespace

TEST_CASE("conv2d serial and omp agree bitwise") {
  for (const int stride : {1, 2}) {
    for (const int k : {1, 3}) {
      kernels::ConvDims d{3, 5, 16, 12, 7, k, stride};
      Tensor in = random_normal(Shape(3, 5, 16, 12), 11);
      Tensor w = random_normal(Shape(7, 5, k, k), 12);
      Tensor b = random_normal(Shape(7, 1, 1, 1), 13);
      Tensor out_s(Shape(3, 7, d.out_h(), d.out_w()));
      Tensor out_p(out_s.shape());
      kernels::conv2d_forward_serial(out_s.data(), in.data(), w.data(),
                                     b.data(), d);
      kernels::conv2d_forward_omp(out_p.data(), in.data(), w.data(), b.data(),
                                  d);
      CHECK(bitwise_equal(out_s, out_p));

      Tensor g = random_normal(out_s.shape(), 14);
      Tensor din_s(in.shape()), din_p(in.shape());
      kernels::conv2d_backward_input_serial(din_s.data(), g.data(), w.data(),
                                            d);
      kernels::conv2d_backward_input_omp(din_p.data(), g.data(), w.data(), d);
      CHECK(bitwise_equal(din_s, din_p));

      Tensor dw_s(w.shape()), dw_p(w.shape()), db_s(b.shape()), db_p(b.shape());
      kernels::conv2d_backward_weight_serial(dw_s.data(), db_s.data(),
                                             g.data(), in.data(), d);
      kernels::conv2d_backward_weight_omp(dw_p.data(), db_p.data(), g.data(),
                                          in.data(), d);
      CHECK(bitwise_equal(dw_s, dw_p));
      CHECK(bitwise_equal(db_s, db_p));
    }
  }
}

TEST_CASE("deconv2d serial and omp agree bitwise") {
  kernels::DeconvDims d{2, 6, 10, 14, 4, 3};
  Tensor in = random_normal(Shape(2, 6, 10, 14), 21);
  Tensor w = random_normal(Shape(6, 4, 3, 3), 22);
  Tensor b = random_normal(Shape(4, 1, 1, 1), 23);
  Tensor out_s(Shape(2, 4, 10, 14)), out_p(out_s.shape());
  kernels::deconv2d_forward_serial(out_s.data(), in.data(), w.data(), b.data(),
                                   d);
  kernels::deconv2d_forward_omp(out_p.data(), in.data(), w.data(), b.data(),
                                d);
  CHECK(bitwise_equal(out_s, out_p));

  Tensor g = random_normal(out_s.shape(), 24);
  Tensor din_s(in.shape()), din_p(in.shape());
  kernels::deconv2d_backward_input_serial(din_s.data(), g.data(), w.data(), d);
  kernels::deconv2d_backward_input_omp(din_p.data(), g.data(), w.data(), d);
  CHECK(bitwise_equal(din_s, din_p));

  Tensor dw_s(w.shape()), dw_p(w.shape()), db_s(b.shape()), db_p(b.shape());
  kernels::deconv2d_backward_weight_serial(dw_s.data(), db_s.data(), g.data(),
                                           in.data(), d);
  kernels::deconv2d_backward_weight_omp(dw_p.data(), db_p.data(), g.data(),
                                        in.data(), d);
  CHECK(bitwise_equal(dw_s, dw_p));
  CHECK(bitwise_equal(db_s, db_p));
}

TEST_CASE("pool and upsample serial/omp agree") {
  Tensor in = random_normal(Shape(3, 4, 12, 8), 31);
  Tensor out_s(Shape(3, 4, 6, 4)), out_p(out_s.shape());
  std::vector<std::uint8_t> am_s(out_s.size()), am_p(out_s.size());
  kernels::maxpool2x2_forward_serial(out_s.data(), am_s.data(), in.data(), 3,
                                     4, 12, 8);
  kernels::maxpool2x2_forward_omp(out_p.data(), am_p.data(), in.data(), 3, 4,
                                  12, 8);
  CHECK(bitwise_equal(out_s, out_p));
  CHECK(am_s == am_p);

  Tensor up_s(Shape(3, 4, 24, 16)), up_p(up_s.shape());
  kernels::upsample2x_forward_serial(up_s.data(), in.data(), 3, 4, 12, 8);
  kernels::upsample2x_forward_omp(up_p.data(), in.data(), 3, 4, 12, 8);
  CHECK(bitwise_equal(up_s, up_p));
}

// <conv(x), y> == <x, conv_backward_input(y)> makes backward-input the exact
// adjoint of forward; same identity for the weight gradient via a directional
// probe.
TEST_CASE("conv2d backward ops are adjoints of forward") {
  for (const int stride : {1, 2}) {
    kernels::ConvDims d{2, 3, 8, 8, 5, 3, stride};
    Tensor x = random_normal(Shape(2, 3, 8, 8), 41);
    Tensor w = random_normal(Shape(5, 3, 3, 3), 42);
    Tensor b(Shape(5, 1, 1, 1));
    Tensor y(Shape(2, 5, d.out_h(), d.out_w()));
    kernels::conv2d_forward(y.data(), x.data(), w.data(), b.data(), d);

    Tensor g = random_normal(y.shape(), 43);
    Tensor din(x.shape());
    kernels::conv2d_backward_input(din.data(), g.data(), w.data(), d);
    CHECK(rel_err(dot(y, g), dot(x, din)) < 1e-10);

    Tensor dw(w.shape()), db(b.shape());
    kernels::conv2d_backward_weight(dw.data(), db.data(), g.data(), x.data(),
                                    d);
    // directional check: d/dt <conv(x; w + t*v), g> = <v, dw>
    Tensor v = random_normal(w.shape(), 44);
    const double h = 1e-6;
    Tensor wp(w.shape()), ym(y.shape()), yp(y.shape());
    for (std::int64_t i = 0; i < w.size(); ++i) wp[i] = w[i] + h * v[i];
    kernels::conv2d_forward(yp.data(), x.data(), wp.data(), b.data(), d);
    for (std::int64_t i = 0; i < w.size(); ++i) wp[i] = w[i] - h * v[i];
    kernels::conv2d_forward(ym.data(), x.data(), wp.data(), b.data(), d);
    const double fd = (dot(yp, g) - dot(ym, g)) / (2.0 * h);
    CHECK(rel_err(fd, dot(v, dw)) < 1e-6);
  }
}

TEST_CASE("deconv2d backward ops are adjoints of forward") {
  kernels::DeconvDims d{2, 4, 6, 6, 3, 3};
  Tensor x = random_normal(Shape(2, 4, 6, 6), 51);
  Tensor w = random_normal(Shape(4, 3, 3, 3), 52);
  Tensor b(Shape(3, 1, 1, 1));
  Tensor y(Shape(2, 3, 6, 6));
  kernels::deconv2d_forward(y.data(), x.data(), w.data(), b.data(), d);

  Tensor g = random_normal(y.shape(), 53);
  Tensor din(x.shape());
  kernels::deconv2d_backward_input(din.data(), g.data(), w.data(), d);
  CHECK(rel_err(dot(y, g), dot(x, din)) < 1e-10);

  Tensor dw(w.shape()), db(b.shape());
  kernels::deconv2d_backward_weight(dw.data(), db.data(), g.data(), x.data(),
                                    d);
  Tensor v = random_normal(w.shape(), 54);
  const double h = 1e-6;
  Tensor wp(w.shape()), ym(y.shape()), yp(y.shape());
  for (std::int64_t i = 0; i < w.size(); ++i) wp[i] = w[i] + h * v[i];
  kernels::deconv2d_forward(yp.data(), x.data(), wp.data(), b.data(), d);
  for (std::int64_t i = 0; i < w.size(); ++i) wp[i] = w[i] - h * v[i];
  kernels::deconv2d_forward(ym.data(), x.data(), wp.data(), b.data(), d);
  const double fd = (dot(yp, g) - dot(ym, g)) / (2.0 * h);
  CHECK(rel_err(fd, dot(v, dw)) < 1e-6);
}

TEST_CASE("deconv2d with stride 1 preserves spatial dims") {
  kernels::DeconvDims d{1, 2, 5, 9, 2, 3};
  Tensor x = random_normal(Shape(1, 2, 5, 9), 61);
  Tensor w = random_normal(Shape(2, 2, 3, 3), 62);
  Tensor b(Shape(2, 1, 1, 1));
  Tensor y(Shape(1, 2, 5, 9));
  kernels::deconv2d_forward(y.data(), x.data(), w.data(), b.data(), d);
  CHECK(y.all_finite());
}

TEST_CASE("parallel toggle dispatches without changing results") {
  kernels::ConvDims d{1, 2, 8, 8, 2, 3, 1};
  Tensor in = random_normal(Shape(1, 2, 8, 8), 71);
  Tensor w = random_normal(Shape(2, 2, 3, 3), 72);
  Tensor b(Shape(2, 1, 1, 1));
  Tensor a(Shape(1, 2, 8, 8)), c(a.shape());
  const bool saved = kernels::parallel_enabled();
  kernels::set_parallel(false);
  kernels::conv2d_forward(a.data(), in.data(), w.data(), b.data(), d);
  kernels::set_parallel(true);
  kernels::conv2d_forward(c.data(), in.data(), w.data(), b.data(), d);
  kernels::set_parallel(saved);
  CHECK(bitwise_equal(a, c));
}
