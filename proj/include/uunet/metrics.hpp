#pragma once

#include <vector>

#include "uunet/tensor.hpp"

namespace uunet::metrics {

struct MetricReport {
  double mse = 0.0;
  double psnr = 0.0;
  double ssim = 0.0;
  int n_images = 0;
};

struct StabilityScore {
  double value = 0.0;
  double smoothing = 0.6;
};

inline constexpr double kPsnrCapDb = 100.0;
inline constexpr double kPsnrMseFloor = 1e-10;

// Mean squared error over all pixels/channels; inputs in [0,1], same shape.
double mse(const Tensor& a, const Tensor& b);

double psnr_from_mse(double mse_value, double max_val = 1.0);
double psnr(const Tensor& a, const Tensor& b, double max_val = 1.0);

// Structural similarity, 11x11 Gaussian window (sigma 1.5), K1=0.01,
// K2=0.03, dynamic range 1.0; computed per channel over valid window
// positions and averaged. Images smaller than the window fall back to the
// largest odd window that fits (with a warning on stderr).
double ssim(const Tensor& a, const Tensor& b);

std::vector<double> ema_smooth(const std::vector<double>& curve,
                               double smoothing);

// Dispersion of a loss curve around its EMA-smoothed version: the standard
// deviation of (x_t - s_t), normalized by mean |x_t|. Zero for curves that
// already equal their smoothed version; invariant under positive scaling.
StabilityScore stability(const std::vector<double>& curve,
                         double smoothing = 0.6);

// Per-image metrics averaged over an image set (one tensor per image).
MetricReport evaluate_images(const std::vector<Tensor>& out,
                             const std::vector<Tensor>& target);

}  // namespace uunet::metrics
