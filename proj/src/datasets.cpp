#include "uunet/datasets.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <stdexcept>

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "uunet/rng.hpp"

namespace uunet::data {

namespace fs = std::filesystem;

SyntheticTask synthetic_task_from_string(const std::string& s) {
  if (s == "invert") return SyntheticTask::invert;
  if (s == "channel_swap") return SyntheticTask::channel_swap;
  if (s == "edge_from_blob") return SyntheticTask::edge_from_blob;
  throw std::invalid_argument(
      "unknown synthetic task '" + s +
      "' (expected invert|channel_swap|edge_from_blob)");
}

std::string synthetic_task_to_string(SyntheticTask t) {
  switch (t) {
    case SyntheticTask::invert: return "invert";
    case SyntheticTask::channel_swap: return "channel_swap";
    case SyntheticTask::edge_from_blob: return "edge_from_blob";
  }
  return "invert";
}

Split split_from_string(const std::string& s) {
  if (s == "train") return Split::train;
  if (s == "val") return Split::val;
  if (s == "test") return Split::test;
  if (s == "all") return Split::all;
  throw std::invalid_argument("unknown split '" + s +
                              "' (expected train|val|test|all)");
}

namespace {

double quantize255(double v) { return std::round(v * 255.0) / 255.0; }

// Smooth blob field in [0,1], quantized to the 8-bit grid.
Tensor blob_image(int channels, int size, Rng& rng) {
  Tensor img(Shape(1, channels, size, size));
  const int blobs = 3 + static_cast<int>(rng.below(4));
  std::vector<double> cx(blobs), cy(blobs), s2(blobs);
  std::vector<std::vector<double>> amp(blobs);
  for (int k = 0; k < blobs; ++k) {
    cx[k] = rng.uniform(0.0, size - 1.0);
    cy[k] = rng.uniform(0.0, size - 1.0);
    const double s = rng.uniform(size / 8.0, size / 3.0);
    s2[k] = 2.0 * s * s;
    amp[k].resize(channels);
    for (int c = 0; c < channels; ++c) amp[k][c] = rng.uniform(0.3, 1.0);
  }
  double lo = 1e300, hi = -1e300;
  for (int c = 0; c < channels; ++c) {
    for (int y = 0; y < size; ++y) {
      for (int x = 0; x < size; ++x) {
        double v = 0.0;
        for (int k = 0; k < blobs; ++k) {
          const double dx = x - cx[k], dy = y - cy[k];
          v += amp[k][c] * std::exp(-(dx * dx + dy * dy) / s2[k]);
        }
        img.at(0, c, y, x) = v;
        lo = std::min(lo, v);
        hi = std::max(hi, v);
      }
    }
  }
  const double span = hi - lo > 1e-12 ? hi - lo : 1.0;
  for (std::int64_t i = 0; i < img.size(); ++i) {
    img[i] = quantize255((img[i] - lo) / span);
  }
  return img;
}

Tensor make_target(SyntheticTask task, const Tensor& input) {
  const Shape s = input.shape();
  Tensor out(s);
  switch (task) {
    case SyntheticTask::invert:
      // quantized so the stored double equals what an 8-bit round trip loads
      for (std::int64_t i = 0; i < input.size(); ++i) {
        out[i] = quantize255(1.0 - input[i]);
      }
      break;
    case SyntheticTask::channel_swap:
      for (int c = 0; c < s.c; ++c) {
        const int src = (c + 1) % s.c;
        for (int y = 0; y < s.h; ++y) {
          for (int x = 0; x < s.w; ++x) {
            out.at(0, c, y, x) = input.at(0, src, y, x);
          }
        }
      }
      break;
    case SyntheticTask::edge_from_blob: {
      double hi = 0.0;
      for (int c = 0; c < s.c; ++c) {
        for (int y = 0; y < s.h; ++y) {
          for (int x = 0; x < s.w; ++x) {
            const double gx =
                x + 1 < s.w ? input.at(0, c, y, x + 1) - input.at(0, c, y, x)
                            : 0.0;
            const double gy =
                y + 1 < s.h ? input.at(0, c, y + 1, x) - input.at(0, c, y, x)
                            : 0.0;
            const double g = std::fabs(gx) + std::fabs(gy);
            out.at(0, c, y, x) = g;
            hi = std::max(hi, g);
          }
        }
      }
      const double scale = hi > 1e-12 ? 1.0 / hi : 1.0;
      for (std::int64_t i = 0; i < out.size(); ++i) {
        out[i] = quantize255(out[i] * scale);
      }
      break;
    }
  }
  return out;
}

}  // namespace

Dataset make_synthetic(const SyntheticTaskConfig& cfg) {
  if (cfg.n_samples < 1 || cfg.size < 1 || cfg.channels < 1) {
    throw std::invalid_argument("make_synthetic: invalid config");
  }
  Dataset ds;
  ds.samples.reserve(cfg.n_samples);
  char id[32];
  for (int i = 0; i < cfg.n_samples; ++i) {
    Rng rng(derive_seed(cfg.seed, "synth", static_cast<std::uint64_t>(i)));
    PairedSample s;
    s.input_image = blob_image(cfg.channels, cfg.size, rng);
    s.target_image = make_target(cfg.task, s.input_image);
    std::snprintf(id, sizeof(id), "synth_%05d", i);
    s.id = id;
    ds.samples.push_back(std::move(s));
  }
  return ds;
}

namespace {

Tensor mat_to_tensor(const cv::Mat& m) {
  cv::Mat rgb;
  if (m.channels() == 3) {
    cv::cvtColor(m, rgb, cv::COLOR_BGR2RGB);
  } else {
    rgb = m;
  }
  const int c = rgb.channels();
  Tensor t(Shape(1, c, rgb.rows, rgb.cols));
  for (int y = 0; y < rgb.rows; ++y) {
    const std::uint8_t* row = rgb.ptr<std::uint8_t>(y);
    for (int x = 0; x < rgb.cols; ++x) {
      for (int ch = 0; ch < c; ++ch) {
        t.at(0, ch, y, x) = row[x * c + ch] / 255.0;
      }
    }
  }
  return t;
}

cv::Mat tensor_to_mat(const Tensor& t) {
  const Shape s = t.shape();
  cv::Mat m(s.h, s.w, s.c == 1 ? CV_8UC1 : CV_8UC3);
  for (int y = 0; y < s.h; ++y) {
    std::uint8_t* row = m.ptr<std::uint8_t>(y);
    for (int x = 0; x < s.w; ++x) {
      for (int c = 0; c < s.c; ++c) {
        const double v = std::clamp(t.at(0, c, y, x), 0.0, 1.0);
        row[x * s.c + c] =
            static_cast<std::uint8_t>(std::lround(v * 255.0));
      }
    }
  }
  if (s.c == 3) {
    cv::Mat bgr;
    cv::cvtColor(m, bgr, cv::COLOR_RGB2BGR);
    return bgr;
  }
  return m;
}

bool image_file(const fs::path& p) {
  std::string ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), ::tolower);
  return ext == ".png" || ext == ".jpg" || ext == ".jpeg";
}

}  // namespace

Dataset load_paired_dir(const std::string& path, Split split, int size) {
  if (!fs::is_directory(path)) {
    throw std::invalid_argument("load_paired_dir: not a directory: " + path);
  }
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(path)) {
    if (e.is_regular_file() && image_file(e.path())) {
      files.push_back(e.path());
    }
  }
  std::sort(files.begin(), files.end());

  Dataset ds;
  for (const fs::path& f : files) {
    cv::Mat m = cv::imread(f.string(), cv::IMREAD_COLOR);
    if (m.empty()) {
      std::fprintf(stderr, "load_paired_dir: skipping unreadable file %s\n",
                   f.string().c_str());
      ++ds.skipped_files;
      continue;
    }
    if (m.cols % 2 != 0) {
      throw std::invalid_argument(
          "load_paired_dir: odd width " + std::to_string(m.cols) + " in " +
          f.string() + " (expected AB-concatenated halves)");
    }
    cv::Mat a = m(cv::Rect(0, 0, m.cols / 2, m.rows));
    cv::Mat b = m(cv::Rect(m.cols / 2, 0, m.cols / 2, m.rows));
    if (size > 0 && (a.cols != size || a.rows != size)) {
      cv::resize(a, a, cv::Size(size, size), 0, 0, cv::INTER_AREA);
      cv::resize(b, b, cv::Size(size, size), 0, 0, cv::INTER_AREA);
    }
    PairedSample s;
    s.input_image = mat_to_tensor(a);
    s.target_image = mat_to_tensor(b);
    s.id = f.stem().string();
    ds.samples.push_back(std::move(s));
  }
  if (ds.samples.empty()) {
    throw std::runtime_error("load_paired_dir: no samples in " + path);
  }

  const int n = ds.size();
  const int n_val = n / 10;
  const int n_test = n / 10;
  const int n_train = n - n_val - n_test;
  int begin = 0, end = n;
  switch (split) {
    case Split::train: begin = 0; end = n_train; break;
    case Split::val: begin = n_train; end = n_train + n_val; break;
    case Split::test: begin = n_train + n_val; end = n; break;
    case Split::all: break;
  }
  if (begin >= end) {
    throw std::runtime_error("load_paired_dir: split is empty (" +
                             std::to_string(n) + " samples total)");
  }
  Dataset out;
  out.skipped_files = ds.skipped_files;
  out.samples.assign(ds.samples.begin() + begin, ds.samples.begin() + end);
  return out;
}

void save_paired_dir(const Dataset& ds, const std::string& path) {
  fs::create_directories(path);
  for (const PairedSample& s : ds.samples) {
    const Shape sh = s.input_image.shape();
    Tensor ab(Shape(1, sh.c, sh.h, sh.w * 2));
    for (int c = 0; c < sh.c; ++c) {
      for (int y = 0; y < sh.h; ++y) {
        for (int x = 0; x < sh.w; ++x) {
          ab.at(0, c, y, x) = s.input_image.at(0, c, y, x);
          ab.at(0, c, y, x + sh.w) = s.target_image.at(0, c, y, x);
        }
      }
    }
    const std::string file = path + "/" + s.id + ".png";
    if (!cv::imwrite(file, tensor_to_mat(ab))) {
      throw std::runtime_error("save_paired_dir: failed to write " + file);
    }
  }
}

std::vector<std::vector<int>> batches(const Dataset& ds, int batch_size,
                                      std::uint64_t epoch_seed) {
  if (batch_size < 1) {
    throw std::invalid_argument("batches: batch_size must be >= 1");
  }
  if (batch_size > ds.size()) {
    throw std::invalid_argument(
        "batches: batch_size " + std::to_string(batch_size) +
        " exceeds dataset size " + std::to_string(ds.size()));
  }
  std::vector<int> order(ds.size());
  for (int i = 0; i < ds.size(); ++i) order[i] = i;
  Rng rng(epoch_seed);
  for (int i = ds.size() - 1; i > 0; --i) {
    const int j = static_cast<int>(rng.below(static_cast<std::uint64_t>(i) + 1));
    std::swap(order[i], order[j]);
  }
  std::vector<std::vector<int>> out;
  const int n_batches = ds.size() / batch_size;  // drop-last
  out.reserve(n_batches);
  for (int b = 0; b < n_batches; ++b) {
    out.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(b) * batch_size,
                     order.begin() + static_cast<std::ptrdiff_t>(b + 1) * batch_size);
  }
  return out;
}

std::pair<Tensor, Tensor> batch_tensors(const Dataset& ds,
                                        const std::vector<int>& indices) {
  if (indices.empty()) {
    throw std::invalid_argument("batch_tensors: empty index list");
  }
  const Shape s = ds.samples[indices[0]].input_image.shape();
  Tensor x(Shape(static_cast<int>(indices.size()), s.c, s.h, s.w));
  Tensor y(x.shape());
  const std::int64_t per = s.size();
  for (size_t i = 0; i < indices.size(); ++i) {
    const PairedSample& sample = ds.samples[indices[i]];
    std::copy(sample.input_image.data(), sample.input_image.data() + per,
              x.data() + static_cast<std::int64_t>(i) * per);
    std::copy(sample.target_image.data(), sample.target_image.data() + per,
              y.data() + static_cast<std::int64_t>(i) * per);
  }
  return {std::move(x), std::move(y)};
}

Tensor to_model_space(const Tensor& img) {
  Tensor out(img.shape());
  for (std::int64_t i = 0; i < img.size(); ++i) out[i] = 2.0 * img[i] - 1.0;
  return out;
}

Tensor from_model_space(const Tensor& x) {
  Tensor out(x.shape());
  for (std::int64_t i = 0; i < x.size(); ++i) {
    out[i] = std::clamp(0.5 * (x[i] + 1.0), 0.0, 1.0);
  }
  return out;
}

}  // namespace uunet::data
