#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "uunet/graph.hpp"
#include "uunet/rng.hpp"

namespace uunet {

enum class Activation { relu, leaky_relu, tanh };

Activation activation_from_string(const std::string& s);
std::string activation_to_string(Activation a);

Var apply_activation(Tape& t, Var x, Activation a);

// Gaussian init, std 0.02, biases zero. The stream is derived from the model
// seed and the parameter's name, so construction order does not matter and
// identically-named parameters initialize identically across builds.
void init_gaussian(Param& p, std::uint64_t model_seed, double std_dev = 0.02);

struct AdamConfig {
  double lr = 2e-4;
  double beta1 = 0.5;
  double beta2 = 0.999;
  double eps = 1e-8;
};

void adam_step(const std::vector<Param*>& params, const AdamConfig& cfg);
void zero_grads(const std::vector<Param*>& params);
double grad_l2_norm(const std::vector<Param*>& params);

using BufferRef = std::pair<std::string, Tensor*>;

struct Conv2d {
  Param w;  // (out, in, k, k)
  Param b;  // (out, 1, 1, 1)
  int stride = 1;

  Conv2d() = default;
  Conv2d(const std::string& name, int in_ch, int out_ch, int k, int stride,
         std::uint64_t seed);

  Var forward(Tape& t, Var x) const;
  void collect(std::vector<Param*>& out);
  static std::int64_t param_count(int in_ch, int out_ch, int k) {
    return static_cast<std::int64_t>(out_ch) * in_ch * k * k + out_ch;
  }
};

struct Deconv2d {
  Param w;  // (in, out, k, k)
  Param b;  // (out, 1, 1, 1)

  Deconv2d() = default;
  Deconv2d(const std::string& name, int in_ch, int out_ch, int k,
           std::uint64_t seed);

  Var forward(Tape& t, Var x) const;
  void collect(std::vector<Param*>& out);
  static std::int64_t param_count(int in_ch, int out_ch, int k) {
    return static_cast<std::int64_t>(in_ch) * out_ch * k * k + out_ch;
  }
};

struct Linear {
  Param w;  // (out, in, 1, 1)
  Param b;  // (out, 1, 1, 1)

  Linear() = default;
  Linear(const std::string& name, int in_dim, int out_dim, std::uint64_t seed);

  Var forward(Tape& t, Var x) const;
  void collect(std::vector<Param*>& out);
};

struct BatchNorm2d {
  Param gamma;
  Param beta;
  Tensor running_mean;
  Tensor running_var;
  std::string name;
  double momentum = 0.1;
  double eps = 1e-5;

  BatchNorm2d() = default;
  BatchNorm2d(const std::string& name, int channels);

  Var forward(Tape& t, Var x, bool training);
  void collect(std::vector<Param*>& out);
  void collect_buffers(std::vector<BufferRef>& out);
};

// Two 3x3 same-padding convolutions, each followed by the activation and an
// optional batch norm before the nonlinearity.
struct ConvBlock {
  Conv2d c1;
  Conv2d c2;
  std::optional<BatchNorm2d> bn1;
  std::optional<BatchNorm2d> bn2;
  Activation act = Activation::relu;

  ConvBlock() = default;
  ConvBlock(const std::string& name, int in_ch, int out_ch, Activation act,
            bool batch_norm, std::uint64_t seed);

  Var forward(Tape& t, Var x, bool training);
  void collect(std::vector<Param*>& out);
  void collect_buffers(std::vector<BufferRef>& out);
  static std::int64_t param_count(int in_ch, int out_ch, bool batch_norm) {
    std::int64_t n = Conv2d::param_count(in_ch, out_ch, 3) +
                     Conv2d::param_count(out_ch, out_ch, 3);
    if (batch_norm) n += 4 * out_ch;
    return n;
  }
};

}  // namespace uunet
