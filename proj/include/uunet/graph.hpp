#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "uunet/tensor.hpp"

namespace uunet {

// Trainable parameter. Gradients accumulate here across backward passes
// until the optimizer consumes them; Adam moments live alongside so a
// checkpoint of the parameter set carries the optimizer state with it.
struct Param {
  std::string name;
  Tensor value;
  Tensor grad;
  Tensor m;
  Tensor v;
  std::int64_t steps = 0;

  Param() = default;
  Param(std::string n, Shape s)
      : name(std::move(n)), value(s), grad(s), m(s), v(s) {}

  void zero_grad() { grad.fill(0.0); }
};

// Runtime-controlled gradient valve. Gated edges read the control at
// backward time, so one forward graph can run several backward passes with
// different coupling policies (the trainer flips these between the
// adversarial and KL passes of a discriminator step).
struct GateCtl {
  bool open = true;
  double scale = 1.0;
};

struct Var {
  int id = -1;
  bool valid() const { return id >= 0; }
};

// Dynamic reverse-mode tape over NCHW tensors. Nodes are created in
// topological order by construction; backward() walks them in reverse and
// skips any node whose gradient is still identically zero, so detached or
// gated-off subgraphs cost nothing and their parameters see exact zeros.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor t);
  Var leaf(Param& p);

  const Tensor& val(Var v) const { return nodes_[v.id].value; }
  const Tensor& grad(Var v) const { return nodes_[v.id].grad; }
  bool grad_set(Var v) const { return nodes_[v.id].grad_nonzero; }
  size_t node_count() const { return nodes_.size(); }

  // Seeds d(loss)/d(loss) = 1 and sweeps the tape once. Node gradients from
  // an earlier pass are cleared first; parameter gradients are left alone so
  // successive passes accumulate into Param::grad.
  void backward(Var loss);

  void zero_node_grads();

  // --- structural ops -----------------------------------------------------
  Var conv2d(Var x, Var w, Var b, int stride);
  Var deconv2d(Var x, Var w, Var b);
  Var linear(Var x, Var w, Var b);
  Var maxpool2x2(Var x);
  Var upsample2x(Var x);
  Var concat_channels(const std::vector<Var>& xs);
  Var batchnorm(Var x, Var gamma, Var beta, Tensor* running_mean,
                Tensor* running_var, bool training, double momentum,
                double eps);

  // --- pointwise ops ------------------------------------------------------
  Var relu(Var x);
  Var leaky_relu(Var x, double slope);
  Var tanh_op(Var x);
  Var sigmoid(Var x);
  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);
  Var affine(Var x, double k, double c);  // k*x + c
  Var exp_op(Var x);
  Var log_op(Var x);
  Var clamp(Var x, double lo, double hi);
  Var square(Var x) { return mul(x, x); }

  // --- reductions / broadcasts ---------------------------------------------
  Var gap(Var x);                          // mean over H,W -> (N,C,1,1)
  Var broadcast_hw(Var x, int h, int w);   // (N,C,1,1) -> (N,C,h,w)
  Var sum_all(Var x);                      // -> (1,1,1,1)

  // --- gradient topology ----------------------------------------------------
  Var detach(Var x);
  Var gate(Var x, const GateCtl* ctl);

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    bool grad_nonzero = false;
    Param* param = nullptr;
    std::function<void(Tape&)> back;
    // side storage for ops that need forward context in backward
    std::vector<std::uint8_t> bytes;
    Tensor aux;
  };

  int push(Tensor value) {
    Node nd;
    nd.value = std::move(value);
    nodes_.push_back(std::move(nd));
    return static_cast<int>(nodes_.size()) - 1;
  }

  Node& node(Var v) { return nodes_[v.id]; }
  Node& node(int id) { return nodes_[id]; }

  // Grad buffer for accumulation; allocates lazily and marks nonzero.
  Tensor& gbuf(int id);
  void add_into(Tensor& dst, const Tensor& src);

  std::vector<Node> nodes_;

  friend struct TapeOps;
};

}  // namespace uunet
