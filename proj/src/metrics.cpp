#include "uunet/metrics.hpp"

#include <cmath>
#include <cstdio>
#include <stdexcept>

namespace uunet::metrics {

double mse(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw std::invalid_argument("mse: shape mismatch " + a.shape().str() +
                                " vs " + b.shape().str());
  }
  double acc = 0.0;
  for (std::int64_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    acc += d * d;
  }
  return acc / static_cast<double>(a.size());
}

double psnr_from_mse(double mse_value, double max_val) {
  if (mse_value < kPsnrMseFloor) return kPsnrCapDb;
  return 10.0 * std::log10(max_val * max_val / mse_value);
}

double psnr(const Tensor& a, const Tensor& b, double max_val) {
  return psnr_from_mse(mse(a, b), max_val);
}

namespace {

std::vector<double> gaussian_window(int size, double sigma) {
  std::vector<double> w(static_cast<size_t>(size) * size);
  const int c = size / 2;
  double sum = 0.0;
  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) {
      const double dy = y - c, dx = x - c;
      const double v = std::exp(-(dy * dy + dx * dx) / (2.0 * sigma * sigma));
      w[static_cast<size_t>(y) * size + x] = v;
      sum += v;
    }
  }
  for (double& v : w) v /= sum;
  return w;
}

double ssim_channel(const Scalar* a, const Scalar* b, int h, int w, int win,
                    const std::vector<double>& weights) {
  constexpr double kK1 = 0.01, kK2 = 0.03, kL = 1.0;
  const double c1 = (kK1 * kL) * (kK1 * kL);
  const double c2 = (kK2 * kL) * (kK2 * kL);
  double acc = 0.0;
  int count = 0;
  for (int y = 0; y + win <= h; ++y) {
    for (int x = 0; x + win <= w; ++x) {
      double ma = 0.0, mb = 0.0;
      for (int wy = 0; wy < win; ++wy) {
        for (int wx = 0; wx < win; ++wx) {
          const double wt = weights[static_cast<size_t>(wy) * win + wx];
          ma += wt * a[(y + wy) * w + (x + wx)];
          mb += wt * b[(y + wy) * w + (x + wx)];
        }
      }
      double va = 0.0, vb = 0.0, cov = 0.0;
      for (int wy = 0; wy < win; ++wy) {
        for (int wx = 0; wx < win; ++wx) {
          const double wt = weights[static_cast<size_t>(wy) * win + wx];
          const double da = a[(y + wy) * w + (x + wx)] - ma;
          const double db = b[(y + wy) * w + (x + wx)] - mb;
          va += wt * da * da;
          vb += wt * db * db;
          cov += wt * da * db;
        }
      }
      const double num = (2.0 * ma * mb + c1) * (2.0 * cov + c2);
      const double den = (ma * ma + mb * mb + c1) * (va + vb + c2);
      acc += num / den;
      ++count;
    }
  }
  return acc / static_cast<double>(count);
}

}  // namespace

double ssim(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw std::invalid_argument("ssim: shape mismatch " + a.shape().str() +
                                " vs " + b.shape().str());
  }
  const Shape s = a.shape();
  int win = 11;
  const int fit = std::min(s.h, s.w);
  if (fit < win) {
    win = fit % 2 == 1 ? fit : fit - 1;
    if (win < 1) throw std::invalid_argument("ssim: image too small");
    std::fprintf(stderr,
                 "ssim: image %dx%d smaller than 11x11 window, using %dx%d\n",
                 s.h, s.w, win, win);
  }
  const std::vector<double> weights = gaussian_window(win, 1.5);
  const std::int64_t hw = static_cast<std::int64_t>(s.h) * s.w;
  double acc = 0.0;
  for (int n = 0; n < s.n; ++n) {
    for (int c = 0; c < s.c; ++c) {
      const std::int64_t off = (static_cast<std::int64_t>(n) * s.c + c) * hw;
      acc += ssim_channel(a.data() + off, b.data() + off, s.h, s.w, win,
                          weights);
    }
  }
  return acc / static_cast<double>(s.n * s.c);
}

std::vector<double> ema_smooth(const std::vector<double>& curve,
                               double smoothing) {
  std::vector<double> s(curve.size());
  if (curve.empty()) return s;
  s[0] = curve[0];
  for (size_t i = 1; i < curve.size(); ++i) {
    s[i] = smoothing * s[i - 1] + (1.0 - smoothing) * curve[i];
  }
  return s;
}

StabilityScore stability(const std::vector<double>& curve, double smoothing) {
  if (curve.size() < 2) {
    throw std::invalid_argument(
        "stability: need at least 2 points, got " +
        std::to_string(curve.size()));
  }
  const std::vector<double> s = ema_smooth(curve, smoothing);
  const size_t n = curve.size();
  double mean_abs = 0.0, mean_r = 0.0;
  std::vector<double> r(n);
  for (size_t i = 0; i < n; ++i) {
    r[i] = curve[i] - s[i];
    mean_r += r[i];
    mean_abs += std::fabs(curve[i]);
  }
  mean_r /= static_cast<double>(n);
  mean_abs /= static_cast<double>(n);
  double var = 0.0;
  for (size_t i = 0; i < n; ++i) {
    const double d = r[i] - mean_r;
    var += d * d;
  }
  var /= static_cast<double>(n);
  StabilityScore score;
  score.smoothing = smoothing;
  const double sd = std::sqrt(var);
  score.value = mean_abs == 0.0 ? 0.0 : sd / mean_abs;
  return score;
}

MetricReport evaluate_images(const std::vector<Tensor>& out,
                             const std::vector<Tensor>& target) {
  if (out.size() != target.size()) {
    throw std::invalid_argument("evaluate_images: set sizes differ");
  }
  if (out.empty()) {
    throw std::invalid_argument("evaluate_images: empty image set");
  }
  MetricReport r;
  r.n_images = static_cast<int>(out.size());
  for (size_t i = 0; i < out.size(); ++i) {
    const double m = mse(out[i], target[i]);
    r.mse += m;
    r.psnr += psnr_from_mse(m);
    r.ssim += ssim(out[i], target[i]);
  }
  r.mse /= static_cast<double>(r.n_images);
  r.psnr /= static_cast<double>(r.n_images);
  r.ssim /= static_cast<double>(r.n_images);
  return r;
}

}  // namespace uunet::metrics
