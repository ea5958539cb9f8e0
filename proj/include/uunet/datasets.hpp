#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "uunet/tensor.hpp"

namespace uunet::data {

// One paired sample; both halves are (1, C, H, W) with values in [0, 1].
struct PairedSample {
  Tensor input_image;
  Tensor target_image;
  std::string id;
};

struct Dataset {
  std::vector<PairedSample> samples;
  int skipped_files = 0;  // unreadable files encountered by the loader

  int size() const { return static_cast<int>(samples.size()); }
  bool empty() const { return samples.empty(); }
  Shape image_shape() const {
    return empty() ? Shape() : samples[0].input_image.shape();
  }
};

enum class SyntheticTask { invert, channel_swap, edge_from_blob };

SyntheticTask synthetic_task_from_string(const std::string& s);
std::string synthetic_task_to_string(SyntheticTask t);

struct SyntheticTaskConfig {
  SyntheticTask task = SyntheticTask::invert;
  int n_samples = 64;
  int size = 32;  // H == W
  int channels = 3;
  std::uint64_t seed = 0;
};

// Deterministic procedurally generated pairs over seeded smooth blobs.
// Pixel values land on the k/255 grid so an 8-bit PNG round trip is exact.
Dataset make_synthetic(const SyntheticTaskConfig& cfg);

enum class Split { train, val, test, all };

Split split_from_string(const std::string& s);

// Loads a directory of AB-concatenated image files (each file is [A|B] side
// by side), splits each into the (input, target) pair, optionally resizes to
// `size` x `size`, and rescales to [0,1]. Files are ordered by name; the
// train/val/test split is 80/10/10 over that order. Unreadable files are
// skipped with a warning and counted in Dataset::skipped_files.
Dataset load_paired_dir(const std::string& path, Split split, int size = 0);

// Writes the dataset back out as 8-bit AB-concatenated PNGs (one per
// sample, named by id).
void save_paired_dir(const Dataset& ds, const std::string& path);

// Seeded per-epoch shuffle into batches of exactly batch_size (the final
// partial batch is dropped).
std::vector<std::vector<int>> batches(const Dataset& ds, int batch_size,
                                      std::uint64_t epoch_seed);

// Stacks the indexed samples into (input, target) batch tensors in [0,1].
std::pair<Tensor, Tensor> batch_tensors(const Dataset& ds,
                                        const std::vector<int>& indices);

// [0,1] image space <-> [-1,1] model space.
Tensor to_model_space(const Tensor& img);
Tensor from_model_space(const Tensor& x);

}  // namespace uunet::data
