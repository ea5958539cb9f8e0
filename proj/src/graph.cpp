#include "uunet/graph.hpp"

#include <cmath>
#include <cstring>
#include <stdexcept>

#include "uunet/kernels.hpp"

namespace uunet {

namespace {

[[noreturn]] void shape_error(const std::string& op, const std::string& what) {
  throw std::invalid_argument(op + ": " + what);
}

}  // namespace

Tensor& Tape::gbuf(int id) {
  Node& nd = nodes_[id];
  if (nd.grad.empty()) {
    nd.grad = Tensor(nd.value.shape());
  }
  nd.grad_nonzero = true;
  return nd.grad;
}

void Tape::add_into(Tensor& dst, const Tensor& src) {
  Scalar* d = dst.data();
  const Scalar* s = src.data();
  const std::int64_t n = dst.size();
  for (std::int64_t i = 0; i < n; ++i) d[i] += s[i];
}

void Tape::zero_node_grads() {
  for (Node& nd : nodes_) {
    if (nd.grad_nonzero) {
      nd.grad.fill(0.0);
      nd.grad_nonzero = false;
    }
  }
}

void Tape::backward(Var loss) {
  if (!loss.valid()) shape_error("backward", "invalid loss var");
  if (nodes_[loss.id].value.size() != 1) {
    shape_error("backward", "loss must be scalar, got " +
                                nodes_[loss.id].value.shape().str());
  }
  zero_node_grads();
  gbuf(loss.id)[0] = 1.0;
  for (int i = loss.id; i >= 0; --i) {
    Node& nd = nodes_[i];
    if (!nd.grad_nonzero) continue;
    if (nd.param != nullptr) {
      add_into(nd.param->grad, nd.grad);
    }
    if (nd.back) nd.back(*this);
  }
}

Var Tape::constant(Tensor t) { return Var{push(std::move(t))}; }

Var Tape::leaf(Param& p) {
  int id = push(p.value);
  nodes_[id].param = &p;
  return Var{id};
}

// --- structural ops ---------------------------------------------------------

Var Tape::conv2d(Var x, Var w, Var b, int stride) {
  const Shape xs = val(x).shape();
  const Shape ws = val(w).shape();
  if (ws.c != xs.c) {
    shape_error("conv2d", "weight expects " + std::to_string(ws.c) +
                              " input channels, got " + xs.str());
  }
  if (stride != 1 && stride != 2) shape_error("conv2d", "stride must be 1 or 2");
  kernels::ConvDims d{xs.n, xs.c, xs.h, xs.w, ws.n, ws.h, stride};
  Tensor out(Shape(xs.n, ws.n, d.out_h(), d.out_w()));
  kernels::conv2d_forward(out.data(), val(x).data(), val(w).data(),
                          val(b).data(), d);
  int id = push(std::move(out));
  nodes_[id].back = [x, w, b, d, id](Tape& t) {
    const Tensor& g = t.node(id).grad;
    {
      Tensor& dw = t.gbuf(w.id);
      Tensor& db = t.gbuf(b.id);
      kernels::conv2d_backward_weight(dw.data(), db.data(), g.data(),
                                      t.val(x).data(), d);
    }
    // the kernel zero-fills its output, so it can write a fresh grad buffer
    // directly and only needs scratch when something already accumulated
    Node& xn = t.node(x.id);
    if (!xn.grad_nonzero) {
      Tensor& dx = t.gbuf(x.id);
      kernels::conv2d_backward_input(dx.data(), g.data(), t.val(w).data(), d);
    } else {
      Tensor scratch(xn.value.shape());
      kernels::conv2d_backward_input(scratch.data(), g.data(),
                                     t.val(w).data(), d);
      t.add_into(t.gbuf(x.id), scratch);
    }
  };
  return Var{id};
}

Var Tape::deconv2d(Var x, Var w, Var b) {
  const Shape xs = val(x).shape();
  const Shape ws = val(w).shape();  // (Cin, Cout, K, K)
  if (ws.n != xs.c) {
    shape_error("deconv2d", "weight expects " + std::to_string(ws.n) +
                                " input channels, got " + xs.str());
  }
  kernels::DeconvDims d{xs.n, xs.c, xs.h, xs.w, ws.c, ws.h};
  Tensor out(Shape(xs.n, ws.c, xs.h, xs.w));
  kernels::deconv2d_forward(out.data(), val(x).data(), val(w).data(),
                            val(b).data(), d);
  int id = push(std::move(out));
  nodes_[id].back = [x, w, b, d, id](Tape& t) {
    const Tensor& g = t.node(id).grad;
    {
      Tensor& dw = t.gbuf(w.id);
      Tensor& db = t.gbuf(b.id);
      kernels::deconv2d_backward_weight(dw.data(), db.data(), g.data(),
                                        t.val(x).data(), d);
    }
    Node& xn = t.node(x.id);
    if (!xn.grad_nonzero) {
      Tensor& dx = t.gbuf(x.id);
      kernels::deconv2d_backward_input(dx.data(), g.data(), t.val(w).data(),
                                       d);
    } else {
      Tensor scratch(xn.value.shape());
      kernels::deconv2d_backward_input(scratch.data(), g.data(),
                                       t.val(w).data(), d);
      t.add_into(t.gbuf(x.id), scratch);
    }
  };
  return Var{id};
}

Var Tape::linear(Var x, Var w, Var b) {
  const Shape xs = val(x).shape();  // (N, F, 1, 1)
  const Shape ws = val(w).shape();  // (M, F, 1, 1)
  if (xs.h != 1 || xs.w != 1 || ws.c != xs.c) {
    shape_error("linear", "expected (N,F,1,1) x (M,F,1,1), got " + xs.str() +
                              " x " + ws.str());
  }
  const int N = xs.n, F = xs.c, M = ws.n;
  Tensor out(Shape(N, M, 1, 1));
  const Scalar* xp = val(x).data();
  const Scalar* wp = val(w).data();
  const Scalar* bp = val(b).data();
  for (int n = 0; n < N; ++n) {
    for (int m = 0; m < M; ++m) {
      Scalar acc = bp[m];
      for (int f = 0; f < F; ++f) acc += xp[n * F + f] * wp[m * F + f];
      out[n * M + m] = acc;
    }
  }
  int id = push(std::move(out));
  nodes_[id].back = [x, w, b, N, F, M, id](Tape& t) {
    const Scalar* g = t.node(id).grad.data();
    const Scalar* xp = t.val(x).data();
    const Scalar* wp = t.val(w).data();
    Tensor& dw = t.gbuf(w.id);
    Tensor& db = t.gbuf(b.id);
    Tensor& dx = t.gbuf(x.id);
    for (int n = 0; n < N; ++n) {
      for (int m = 0; m < M; ++m) {
        const Scalar gv = g[n * M + m];
        if (gv == 0.0) continue;
        db[m] += gv;
        for (int f = 0; f < F; ++f) {
          dw[m * F + f] += gv * xp[n * F + f];
          dx[n * F + f] += gv * wp[m * F + f];
        }
      }
    }
  };
  return Var{id};
}

Var Tape::maxpool2x2(Var x) {
  const Shape xs = val(x).shape();
  if (xs.h % 2 != 0 || xs.w % 2 != 0) {
    shape_error("maxpool2x2", "spatial dims must be even, got " + xs.str());
  }
  Tensor out(Shape(xs.n, xs.c, xs.h / 2, xs.w / 2));
  std::vector<std::uint8_t> argmax(static_cast<size_t>(out.size()));
  kernels::maxpool2x2_forward(out.data(), argmax.data(), val(x).data(), xs.n,
                              xs.c, xs.h, xs.w);
  int id = push(std::move(out));
  nodes_[id].bytes = std::move(argmax);
  nodes_[id].back = [x, xs, id](Tape& t) {
    const Tensor& g = t.node(id).grad;
    const std::uint8_t* am = t.node(id).bytes.data();
    Node& xn = t.node(x.id);
    if (!xn.grad_nonzero) {
      Tensor& dx = t.gbuf(x.id);
      kernels::maxpool2x2_backward(dx.data(), g.data(), am, xs.n, xs.c, xs.h,
                                   xs.w);
    } else {
      Tensor scratch(xs);
      kernels::maxpool2x2_backward(scratch.data(), g.data(), am, xs.n, xs.c,
                                   xs.h, xs.w);
      t.add_into(t.gbuf(x.id), scratch);
    }
  };
  return Var{id};
}

Var Tape::upsample2x(Var x) {
  const Shape xs = val(x).shape();
  Tensor out(Shape(xs.n, xs.c, xs.h * 2, xs.w * 2));
  kernels::upsample2x_forward(out.data(), val(x).data(), xs.n, xs.c, xs.h,
                              xs.w);
  int id = push(std::move(out));
  nodes_[id].back = [x, xs, id](Tape& t) {
    const Tensor& g = t.node(id).grad;
    Node& xn = t.node(x.id);
    if (!xn.grad_nonzero) {
      Tensor& dx = t.gbuf(x.id);
      kernels::upsample2x_backward(dx.data(), g.data(), xs.n, xs.c, xs.h,
                                   xs.w);
    } else {
      Tensor scratch(xs);
      kernels::upsample2x_backward(scratch.data(), g.data(), xs.n, xs.c, xs.h,
                                   xs.w);
      t.add_into(t.gbuf(x.id), scratch);
    }
  };
  return Var{id};
}

Var Tape::concat_channels(const std::vector<Var>& xs) {
  if (xs.empty()) shape_error("concat_channels", "no inputs");
  const Shape s0 = val(xs[0]).shape();
  int total_c = 0;
  for (Var v : xs) {
    const Shape s = val(v).shape();
    if (s.n != s0.n || s.h != s0.h || s.w != s0.w) {
      shape_error("concat_channels", "mismatched shapes " + s0.str() +
                                         " vs " + s.str());
    }
    total_c += s.c;
  }
  Tensor out(Shape(s0.n, total_c, s0.h, s0.w));
  const std::int64_t hw = static_cast<std::int64_t>(s0.h) * s0.w;
  int coff = 0;
  for (Var v : xs) {
    const Tensor& in = val(v);
    const int c = in.shape().c;
    for (int n = 0; n < s0.n; ++n) {
      std::memcpy(out.data() + ((static_cast<std::int64_t>(n) * total_c +
                                 coff) *
                                hw),
                  in.data() + (static_cast<std::int64_t>(n) * c) * hw,
                  sizeof(Scalar) * static_cast<size_t>(c) * hw);
    }
    coff += c;
  }
  int id = push(std::move(out));
  std::vector<Var> parents = xs;
  nodes_[id].back = [parents, s0, total_c, hw, id](Tape& t) {
    const Tensor& g = t.node(id).grad;
    int coff = 0;
    for (Var v : parents) {
      const int c = t.val(v).shape().c;
      Tensor& dx = t.gbuf(v.id);
      for (int n = 0; n < s0.n; ++n) {
        const Scalar* gp =
            g.data() + ((static_cast<std::int64_t>(n) * total_c + coff) * hw);
        Scalar* dp = dx.data() + (static_cast<std::int64_t>(n) * c) * hw;
        for (std::int64_t i = 0; i < c * hw; ++i) dp[i] += gp[i];
      }
      coff += c;
    }
  };
  return Var{id};
}

Var Tape::batchnorm(Var x, Var gamma, Var beta, Tensor* running_mean,
                    Tensor* running_var, bool training, double momentum,
                    double eps) {
  const Shape xs = val(x).shape();
  const int C = xs.c;
  const std::int64_t per_c = static_cast<std::int64_t>(xs.n) * xs.h * xs.w;
  const std::int64_t hw = static_cast<std::int64_t>(xs.h) * xs.w;

  std::vector<double> mean(C, 0.0), invstd(C, 0.0);
  if (training) {
    for (int c = 0; c < C; ++c) {
      double m = 0.0;
      for (int n = 0; n < xs.n; ++n) {
        const Scalar* p =
            val(x).data() + (static_cast<std::int64_t>(n) * C + c) * hw;
        for (std::int64_t i = 0; i < hw; ++i) m += p[i];
      }
      m /= static_cast<double>(per_c);
      double var = 0.0;
      for (int n = 0; n < xs.n; ++n) {
        const Scalar* p =
            val(x).data() + (static_cast<std::int64_t>(n) * C + c) * hw;
        for (std::int64_t i = 0; i < hw; ++i) {
          const double d = p[i] - m;
          var += d * d;
        }
      }
      var /= static_cast<double>(per_c);
      mean[c] = m;
      invstd[c] = 1.0 / std::sqrt(var + eps);
      (*running_mean)[c] = (1.0 - momentum) * (*running_mean)[c] + momentum * m;
      (*running_var)[c] = (1.0 - momentum) * (*running_var)[c] + momentum * var;
    }
  } else {
    for (int c = 0; c < C; ++c) {
      mean[c] = (*running_mean)[c];
      invstd[c] = 1.0 / std::sqrt((*running_var)[c] + eps);
    }
  }

  Tensor xhat(xs);
  Tensor out(xs);
  const Scalar* gp = val(gamma).data();
  const Scalar* bp = val(beta).data();
  for (int n = 0; n < xs.n; ++n) {
    for (int c = 0; c < C; ++c) {
      const Scalar* p =
          val(x).data() + (static_cast<std::int64_t>(n) * C + c) * hw;
      Scalar* xh = xhat.data() + (static_cast<std::int64_t>(n) * C + c) * hw;
      Scalar* op = out.data() + (static_cast<std::int64_t>(n) * C + c) * hw;
      for (std::int64_t i = 0; i < hw; ++i) {
        xh[i] = (p[i] - mean[c]) * invstd[c];
        op[i] = gp[c] * xh[i] + bp[c];
      }
    }
  }

  int id = push(std::move(out));
  nodes_[id].aux = std::move(xhat);
  nodes_[id].back = [x, gamma, beta, xs, C, per_c, hw, invstd, training,
                     id](Tape& t) {
    const Tensor& g = t.node(id).grad;
    const Tensor& xh = t.node(id).aux;
    const Scalar* gam = t.val(gamma).data();
    Tensor& dgamma = t.gbuf(gamma.id);
    Tensor& dbeta = t.gbuf(beta.id);
    Tensor& dx = t.gbuf(x.id);
    for (int c = 0; c < C; ++c) {
      double sum_g = 0.0, sum_gxh = 0.0;
      for (int n = 0; n < xs.n; ++n) {
        const Scalar* gr =
            g.data() + (static_cast<std::int64_t>(n) * C + c) * hw;
        const Scalar* xr =
            xh.data() + (static_cast<std::int64_t>(n) * C + c) * hw;
        for (std::int64_t i = 0; i < hw; ++i) {
          sum_g += gr[i];
          sum_gxh += gr[i] * xr[i];
        }
      }
      dgamma[c] += sum_gxh;
      dbeta[c] += sum_g;
      const double k = gam[c] * invstd[c];
      const double mg = sum_g / static_cast<double>(per_c);
      const double mgxh = sum_gxh / static_cast<double>(per_c);
      for (int n = 0; n < xs.n; ++n) {
        const Scalar* gr =
            g.data() + (static_cast<std::int64_t>(n) * C + c) * hw;
        const Scalar* xr =
            xh.data() + (static_cast<std::int64_t>(n) * C + c) * hw;
        Scalar* dr = dx.data() + (static_cast<std::int64_t>(n) * C + c) * hw;
        if (training) {
          for (std::int64_t i = 0; i < hw; ++i) {
            dr[i] += k * (gr[i] - mg - xr[i] * mgxh);
          }
        } else {
          for (std::int64_t i = 0; i < hw; ++i) {
            dr[i] += k * gr[i];
          }
        }
      }
    }
  };
  return Var{id};
}

// --- pointwise ops -----------------------------------------------------------

namespace {

template <class F>
Tensor map_tensor(const Tensor& x, F f) {
  Tensor y(x.shape());
  const Scalar* xp = x.data();
  Scalar* yp = y.data();
  const std::int64_t n = x.size();
  for (std::int64_t i = 0; i < n; ++i) yp[i] = f(xp[i]);
  return y;
}

}  // namespace

Var Tape::relu(Var x) {
  // 0.5*(v+|v|) equals max(v,0) exactly for real v and propagates NaN,
  // so poisoned values surface in the loss instead of being scrubbed
  Tensor out = map_tensor(
      val(x), [](Scalar v) { return 0.5 * (v + std::fabs(v)); });
  int id = push(std::move(out));
  nodes_[id].back = [x, id](Tape& t) {
    const Tensor& g = t.node(id).grad;
    const Tensor& xv = t.val(x);
    Tensor& dx = t.gbuf(x.id);
    for (std::int64_t i = 0; i < g.size(); ++i) {
      if (xv[i] > 0.0) dx[i] += g[i];
    }
  };
  return Var{id};
}

Var Tape::leaky_relu(Var x, double slope) {
  Tensor out =
      map_tensor(val(x), [slope](Scalar v) { return v > 0.0 ? v : slope * v; });
  int id = push(std::move(out));
  nodes_[id].back = [x, slope, id](Tape& t) {
    const Tensor& g = t.node(id).grad;
    const Tensor& xv = t.val(x);
    Tensor& dx = t.gbuf(x.id);
    for (std::int64_t i = 0; i < g.size(); ++i) {
      dx[i] += g[i] * (xv[i] > 0.0 ? 1.0 : slope);
    }
  };
  return Var{id};
}

Var Tape::tanh_op(Var x) {
  Tensor out = map_tensor(val(x), [](Scalar v) { return std::tanh(v); });
  int id = push(std::move(out));
  nodes_[id].back = [x, id](Tape& t) {
    const Tensor& g = t.node(id).grad;
    const Tensor& y = t.node(id).value;
    Tensor& dx = t.gbuf(x.id);
    for (std::int64_t i = 0; i < g.size(); ++i) {
      dx[i] += g[i] * (1.0 - y[i] * y[i]);
    }
  };
  return Var{id};
}

Var Tape::sigmoid(Var x) {
  Tensor out = map_tensor(val(x), [](Scalar v) {
    if (v >= 0.0) {
      return 1.0 / (1.0 + std::exp(-v));
    }
    const double e = std::exp(v);
    return e / (1.0 + e);
  });
  int id = push(std::move(out));
  nodes_[id].back = [x, id](Tape& t) {
    const Tensor& g = t.node(id).grad;
    const Tensor& y = t.node(id).value;
    Tensor& dx = t.gbuf(x.id);
    for (std::int64_t i = 0; i < g.size(); ++i) {
      dx[i] += g[i] * y[i] * (1.0 - y[i]);
    }
  };
  return Var{id};
}

Var Tape::add(Var a, Var b) {
  if (val(a).shape() != val(b).shape()) {
    shape_error("add", val(a).shape().str() + " vs " + val(b).shape().str());
  }
  Tensor out(val(a).shape());
  for (std::int64_t i = 0; i < out.size(); ++i) out[i] = val(a)[i] + val(b)[i];
  int id = push(std::move(out));
  nodes_[id].back = [a, b, id](Tape& t) {
    const Tensor& g = t.node(id).grad;
    t.add_into(t.gbuf(a.id), g);
    t.add_into(t.gbuf(b.id), g);
  };
  return Var{id};
}

Var Tape::sub(Var a, Var b) {
  if (val(a).shape() != val(b).shape()) {
    shape_error("sub", val(a).shape().str() + " vs " + val(b).shape().str());
  }
  Tensor out(val(a).shape());
  for (std::int64_t i = 0; i < out.size(); ++i) out[i] = val(a)[i] - val(b)[i];
  int id = push(std::move(out));
  nodes_[id].back = [a, b, id](Tape& t) {
    const Tensor& g = t.node(id).grad;
    t.add_into(t.gbuf(a.id), g);
    Tensor& db = t.gbuf(b.id);
    for (std::int64_t i = 0; i < g.size(); ++i) db[i] -= g[i];
  };
  return Var{id};
}

Var Tape::mul(Var a, Var b) {
  if (val(a).shape() != val(b).shape()) {
    shape_error("mul", val(a).shape().str() + " vs " + val(b).shape().str());
  }
  Tensor out(val(a).shape());
  for (std::int64_t i = 0; i < out.size(); ++i) out[i] = val(a)[i] * val(b)[i];
  int id = push(std::move(out));
  nodes_[id].back = [a, b, id](Tape& t) {
    const Tensor& g = t.node(id).grad;
    const Tensor& av = t.val(a);
    const Tensor& bv = t.val(b);
    Tensor& da = t.gbuf(a.id);
    Tensor& db = t.gbuf(b.id);
    for (std::int64_t i = 0; i < g.size(); ++i) {
      da[i] += g[i] * bv[i];
      db[i] += g[i] * av[i];
    }
  };
  return Var{id};
}

Var Tape::affine(Var x, double k, double c) {
  Tensor out = map_tensor(val(x), [k, c](Scalar v) { return k * v + c; });
  int id = push(std::move(out));
  nodes_[id].back = [x, k, id](Tape& t) {
    const Tensor& g = t.node(id).grad;
    Tensor& dx = t.gbuf(x.id);
    for (std::int64_t i = 0; i < g.size(); ++i) dx[i] += k * g[i];
  };
  return Var{id};
}

Var Tape::exp_op(Var x) {
  Tensor out = map_tensor(val(x), [](Scalar v) { return std::exp(v); });
  int id = push(std::move(out));
  nodes_[id].back = [x, id](Tape& t) {
    const Tensor& g = t.node(id).grad;
    const Tensor& y = t.node(id).value;
    Tensor& dx = t.gbuf(x.id);
    for (std::int64_t i = 0; i < g.size(); ++i) dx[i] += g[i] * y[i];
  };
  return Var{id};
}

Var Tape::log_op(Var x) {
  Tensor out = map_tensor(val(x), [](Scalar v) { return std::log(v); });
  int id = push(std::move(out));
  nodes_[id].back = [x, id](Tape& t) {
    const Tensor& g = t.node(id).grad;
    const Tensor& xv = t.val(x);
    Tensor& dx = t.gbuf(x.id);
    for (std::int64_t i = 0; i < g.size(); ++i) dx[i] += g[i] / xv[i];
  };
  return Var{id};
}

Var Tape::clamp(Var x, double lo, double hi) {
  Tensor out = map_tensor(val(x), [lo, hi](Scalar v) {
    return v < lo ? lo : (v > hi ? hi : v);
  });
  int id = push(std::move(out));
  nodes_[id].back = [x, lo, hi, id](Tape& t) {
    const Tensor& g = t.node(id).grad;
    const Tensor& xv = t.val(x);
    Tensor& dx = t.gbuf(x.id);
    for (std::int64_t i = 0; i < g.size(); ++i) {
      if (xv[i] > lo && xv[i] < hi) dx[i] += g[i];
    }
  };
  return Var{id};
}

// --- reductions / broadcasts ---------------------------------------------------

Var Tape::gap(Var x) {
  const Shape xs = val(x).shape();
  const std::int64_t hw = static_cast<std::int64_t>(xs.h) * xs.w;
  Tensor out(Shape(xs.n, xs.c, 1, 1));
  for (int n = 0; n < xs.n; ++n) {
    for (int c = 0; c < xs.c; ++c) {
      const Scalar* p =
          val(x).data() + (static_cast<std::int64_t>(n) * xs.c + c) * hw;
      Scalar acc = 0.0;
      for (std::int64_t i = 0; i < hw; ++i) acc += p[i];
      out[n * xs.c + c] = acc / static_cast<Scalar>(hw);
    }
  }
  int id = push(std::move(out));
  nodes_[id].back = [x, xs, hw, id](Tape& t) {
    const Tensor& g = t.node(id).grad;
    Tensor& dx = t.gbuf(x.id);
    for (int n = 0; n < xs.n; ++n) {
      for (int c = 0; c < xs.c; ++c) {
        const Scalar gv = g[n * xs.c + c] / static_cast<Scalar>(hw);
        Scalar* dp =
            dx.data() + (static_cast<std::int64_t>(n) * xs.c + c) * hw;
        for (std::int64_t i = 0; i < hw; ++i) dp[i] += gv;
      }
    }
  };
  return Var{id};
}

Var Tape::broadcast_hw(Var x, int h, int w) {
  const Shape xs = val(x).shape();
  if (xs.h != 1 || xs.w != 1) {
    shape_error("broadcast_hw", "expected (N,C,1,1), got " + xs.str());
  }
  Tensor out(Shape(xs.n, xs.c, h, w));
  const std::int64_t hw = static_cast<std::int64_t>(h) * w;
  for (int n = 0; n < xs.n; ++n) {
    for (int c = 0; c < xs.c; ++c) {
      const Scalar v = val(x)[n * xs.c + c];
      Scalar* p = out.data() + (static_cast<std::int64_t>(n) * xs.c + c) * hw;
      for (std::int64_t i = 0; i < hw; ++i) p[i] = v;
    }
  }
  int id = push(std::move(out));
  nodes_[id].back = [x, xs, hw, id](Tape& t) {
    const Tensor& g = t.node(id).grad;
    Tensor& dx = t.gbuf(x.id);
    for (int n = 0; n < xs.n; ++n) {
      for (int c = 0; c < xs.c; ++c) {
        const Scalar* gp =
            g.data() + (static_cast<std::int64_t>(n) * xs.c + c) * hw;
        Scalar acc = 0.0;
        for (std::int64_t i = 0; i < hw; ++i) acc += gp[i];
        dx[n * xs.c + c] += acc;
      }
    }
  };
  return Var{id};
}

Var Tape::sum_all(Var x) {
  Scalar acc = 0.0;
  const Tensor& xv = val(x);
  for (std::int64_t i = 0; i < xv.size(); ++i) acc += xv[i];
  int id = push(Tensor::scalar(acc));
  nodes_[id].back = [x, id](Tape& t) {
    const Scalar gv = t.node(id).grad[0];
    Tensor& dx = t.gbuf(x.id);
    for (std::int64_t i = 0; i < dx.size(); ++i) dx[i] += gv;
  };
  return Var{id};
}

// --- gradient topology ----------------------------------------------------------

Var Tape::detach(Var x) { return Var{push(val(x))}; }

Var Tape::gate(Var x, const GateCtl* ctl) {
  int id = push(val(x));
  nodes_[id].back = [x, ctl, id](Tape& t) {
    if (ctl == nullptr || !ctl->open || ctl->scale == 0.0) return;
    const Tensor& g = t.node(id).grad;
    Tensor& dx = t.gbuf(x.id);
    if (ctl->scale == 1.0) {
      t.add_into(dx, g);
    } else {
      for (std::int64_t i = 0; i < g.size(); ++i) dx[i] += ctl->scale * g[i];
    }
  };
  return Var{id};
}

}  // namespace uunet
