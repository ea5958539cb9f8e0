#include "uunet/nn.hpp"

#include <cmath>
#include <stdexcept>

namespace uunet {

Activation activation_from_string(const std::string& s) {
  if (s == "relu") return Activation::relu;
  if (s == "leaky_relu") return Activation::leaky_relu;
  if (s == "tanh") return Activation::tanh;
  throw std::invalid_argument("unknown activation '" + s +
                              "' (expected relu|leaky_relu|tanh)");
}

std::string activation_to_string(Activation a) {
  switch (a) {
    case Activation::relu: return "relu";
    case Activation::leaky_relu: return "leaky_relu";
    case Activation::tanh: return "tanh";
  }
  return "relu";
}

Var apply_activation(Tape& t, Var x, Activation a) {
  switch (a) {
    case Activation::relu: return t.relu(x);
    case Activation::leaky_relu: return t.leaky_relu(x, 0.2);
    case Activation::tanh: return t.tanh_op(x);
  }
  return x;
}

void init_gaussian(Param& p, std::uint64_t model_seed, double std_dev) {
  Rng rng(derive_seed(model_seed, "init", hash_tag(p.name)));
  rng.fill_normal(p.value, 0.0, std_dev);
}

void adam_step(const std::vector<Param*>& params, const AdamConfig& cfg) {
  for (Param* p : params) {
    p->steps += 1;
    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(p->steps));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(p->steps));
    Scalar* v = p->value.data();
    Scalar* g = p->grad.data();
    Scalar* m = p->m.data();
    Scalar* s = p->v.data();
    const std::int64_t n = p->value.size();
    for (std::int64_t i = 0; i < n; ++i) {
      m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
      s[i] = cfg.beta2 * s[i] + (1.0 - cfg.beta2) * g[i] * g[i];
      const double mhat = m[i] / bc1;
      const double shat = s[i] / bc2;
      v[i] -= cfg.lr * mhat / (std::sqrt(shat) + cfg.eps);
    }
  }
}

void zero_grads(const std::vector<Param*>& params) {
  for (Param* p : params) p->zero_grad();
}

double grad_l2_norm(const std::vector<Param*>& params) {
  double acc = 0.0;
  for (const Param* p : params) {
    const Scalar* g = p->grad.data();
    for (std::int64_t i = 0; i < p->grad.size(); ++i) acc += g[i] * g[i];
  }
  return std::sqrt(acc);
}

Conv2d::Conv2d(const std::string& name, int in_ch, int out_ch, int k,
               int stride_, std::uint64_t seed)
    : w(name + ".w", Shape(out_ch, in_ch, k, k)),
      b(name + ".b", Shape(out_ch, 1, 1, 1)),
      stride(stride_) {
  init_gaussian(w, seed);
}

Var Conv2d::forward(Tape& t, Var x) const {
  return t.conv2d(x, t.leaf(const_cast<Param&>(w)),
                  t.leaf(const_cast<Param&>(b)), stride);
}

void Conv2d::collect(std::vector<Param*>& out) {
  out.push_back(&w);
  out.push_back(&b);
}

Deconv2d::Deconv2d(const std::string& name, int in_ch, int out_ch, int k,
                   std::uint64_t seed)
    : w(name + ".w", Shape(in_ch, out_ch, k, k)),
      b(name + ".b", Shape(out_ch, 1, 1, 1)) {
  init_gaussian(w, seed);
}

Var Deconv2d::forward(Tape& t, Var x) const {
  return t.deconv2d(x, t.leaf(const_cast<Param&>(w)),
                    t.leaf(const_cast<Param&>(b)));
}

void Deconv2d::collect(std::vector<Param*>& out) {
  out.push_back(&w);
  out.push_back(&b);
}

Linear::Linear(const std::string& name, int in_dim, int out_dim,
               std::uint64_t seed)
    : w(name + ".w", Shape(out_dim, in_dim, 1, 1)),
      b(name + ".b", Shape(out_dim, 1, 1, 1)) {
  init_gaussian(w, seed);
}

Var Linear::forward(Tape& t, Var x) const {
  return t.linear(x, t.leaf(const_cast<Param&>(w)),
                  t.leaf(const_cast<Param&>(b)));
}

void Linear::collect(std::vector<Param*>& out) {
  out.push_back(&w);
  out.push_back(&b);
}

BatchNorm2d::BatchNorm2d(const std::string& name_, int channels)
    : gamma(name_ + ".gamma", Shape(channels, 1, 1, 1)),
      beta(name_ + ".beta", Shape(channels, 1, 1, 1)),
      running_mean(Shape(channels, 1, 1, 1)),
      running_var(Shape(channels, 1, 1, 1)),
      name(name_) {
  gamma.value.fill(1.0);
  running_var.fill(1.0);
}

Var BatchNorm2d::forward(Tape& t, Var x, bool training) {
  return t.batchnorm(x, t.leaf(gamma), t.leaf(beta), &running_mean,
                     &running_var, training, momentum, eps);
}

void BatchNorm2d::collect(std::vector<Param*>& out) {
  out.push_back(&gamma);
  out.push_back(&beta);
}

void BatchNorm2d::collect_buffers(std::vector<BufferRef>& out) {
  out.emplace_back(name + ".running_mean", &running_mean);
  out.emplace_back(name + ".running_var", &running_var);
}

ConvBlock::ConvBlock(const std::string& name, int in_ch, int out_ch,
                     Activation act_, bool batch_norm, std::uint64_t seed)
    : c1(name + ".c1", in_ch, out_ch, 3, 1, seed),
      c2(name + ".c2", out_ch, out_ch, 3, 1, seed),
      act(act_) {
  if (batch_norm) {
    bn1.emplace(name + ".bn1", out_ch);
    bn2.emplace(name + ".bn2", out_ch);
  }
}

Var ConvBlock::forward(Tape& t, Var x, bool training) {
  Var h = c1.forward(t, x);
  if (bn1) h = bn1->forward(t, h, training);
  h = apply_activation(t, h, act);
  h = c2.forward(t, h);
  if (bn2) h = bn2->forward(t, h, training);
  h = apply_activation(t, h, act);
  return h;
}

void ConvBlock::collect(std::vector<Param*>& out) {
  c1.collect(out);
  c2.collect(out);
  if (bn1) bn1->collect(out);
  if (bn2) bn2->collect(out);
}

void ConvBlock::collect_buffers(std::vector<BufferRef>& out) {
  if (bn1) bn1->collect_buffers(out);
  if (bn2) bn2->collect_buffers(out);
}

}  // namespace uunet
