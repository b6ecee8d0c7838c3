#pragma once

// Reverse-mode autodiff on a flat tape. A Graph is built per forward pass;
// backward() walks the tape in reverse and accumulates adjoints. Graphs are
// single-threaded; independent graphs are independent.

#include <functional>
#include <stdexcept>
#include <vector>

#include "pegsim/nn/kernels.hpp"
#include "pegsim/nn/tensor.hpp"

namespace pegsim::nn {

class Graph {
 public:
  struct Node {
    Tensor value;
    Tensor adjoint;  // allocated lazily, same shape as value
    bool needs_grad = false;
    bool has_adjoint = false;
    std::function<void(Graph&)> back;
  };

  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  int leaf(Tensor v, bool needs_grad = false) {
    nodes_.push_back(Node{std::move(v), Tensor{}, needs_grad, false, nullptr});
    return static_cast<int>(nodes_.size()) - 1;
  }

  int param(const Tensor& v) { return leaf(v, true); }
  int constant(const Tensor& v) { return leaf(v, false); }

  const Tensor& value(int id) const { return nodes_[static_cast<std::size_t>(id)].value; }
  std::int64_t size() const { return static_cast<std::int64_t>(nodes_.size()); }

  const Tensor& grad(int id) {
    Node& n = node(id);
    ensure_adjoint(n);
    return n.adjoint;
  }

  // ---- elementwise ----

  int relu(int x) {
    const Tensor& xv = value(x);
    Tensor out(xv.shape());
    for (std::int64_t i = 0; i < xv.numel(); ++i)
      out[i] = xv[i] > 0.0 ? xv[i] : 0.0;
    return emit(std::move(out), {x}, [x](Graph& g, Node& self) {
      Node& xn = g.node(x);
      if (!xn.needs_grad) return;
      g.ensure_adjoint(xn);
      for (std::int64_t i = 0; i < xn.value.numel(); ++i)
        if (xn.value[i] > 0.0) xn.adjoint[i] += self.adjoint[i];
    });
  }

  int leaky_relu(int x, double alpha = 0.1) {
    const Tensor& xv = value(x);
    Tensor out(xv.shape());
    for (std::int64_t i = 0; i < xv.numel(); ++i)
      out[i] = xv[i] > 0.0 ? xv[i] : alpha * xv[i];
    return emit(std::move(out), {x}, [x, alpha](Graph& g, Node& self) {
      Node& xn = g.node(x);
      if (!xn.needs_grad) return;
      g.ensure_adjoint(xn);
      for (std::int64_t i = 0; i < xn.value.numel(); ++i)
        xn.adjoint[i] += self.adjoint[i] * (xn.value[i] > 0.0 ? 1.0 : alpha);
    });
  }

  // add: identical shapes, or bias broadcast where b is rank-1 and matches
  // the feature axis (last axis for rank-2, channel axis for rank-3/4).
  int add(int a, int b) {
    const Tensor& av = value(a);
    const Tensor& bv = value(b);
    if (av.shape() == bv.shape()) {
      Tensor out(av.shape());
      for (std::int64_t i = 0; i < av.numel(); ++i) out[i] = av[i] + bv[i];
      return emit(std::move(out), {a, b}, [a, b](Graph& g, Node& self) {
        for (int id : {a, b}) {
          Node& n = g.node(id);
          if (!n.needs_grad) continue;
          g.ensure_adjoint(n);
          for (std::int64_t i = 0; i < n.value.numel(); ++i)
            n.adjoint[i] += self.adjoint[i];
        }
      });
    }
    if (bv.rank() == 1) return add_bias(a, b);
    throw std::invalid_argument("add: incompatible shapes " +
                                shape_str(av.shape()) + " vs " +
                                shape_str(bv.shape()));
  }

  int concat(const std::vector<int>& xs, int axis) {
    if (xs.empty()) throw std::invalid_argument("concat: no inputs");
    const Tensor& first = value(xs[0]);
    const int rank = first.rank();
    if (axis < 0 || axis >= rank)
      throw std::invalid_argument("concat: bad axis");
    Shape out_shape = first.shape();
    int axis_total = 0;
    for (int id : xs) {
      const Tensor& v = value(id);
      if (v.rank() != rank)
        throw std::invalid_argument("concat: rank mismatch");
      for (int d = 0; d < rank; ++d)
        if (d != axis && v.shape()[static_cast<std::size_t>(d)] !=
                             out_shape[static_cast<std::size_t>(d)])
          throw std::invalid_argument("concat: shape mismatch " +
                                      shape_str(v.shape()) + " vs " +
                                      shape_str(first.shape()));
      axis_total += v.dim(axis);
    }
    out_shape[static_cast<std::size_t>(axis)] = axis_total;

    std::int64_t outer = 1, inner = 1;
    for (int d = 0; d < axis; ++d) outer *= first.dim(d);
    for (int d = axis + 1; d < rank; ++d) inner *= first.dim(d);

    Tensor out(out_shape);
    std::int64_t offset = 0;
    for (int id : xs) {
      const Tensor& v = value(id);
      const std::int64_t block = v.dim(axis) * inner;
      for (std::int64_t o = 0; o < outer; ++o)
        std::copy(v.data() + o * block, v.data() + (o + 1) * block,
                  out.data() + o * axis_total * inner + offset);
      offset += block;
    }
    auto inputs = xs;
    return emit(std::move(out), inputs,
                [inputs, outer, inner, axis_total](Graph& g, Node& self) {
                  std::int64_t offset = 0;
                  for (int id : inputs) {
                    Node& n = g.node(id);
                    const std::int64_t block =
                        n.value.numel() / (outer == 0 ? 1 : outer);
                    if (n.needs_grad) {
                      g.ensure_adjoint(n);
                      for (std::int64_t o = 0; o < outer; ++o) {
                        const double* src =
                            self.adjoint.data() + o * axis_total * inner + offset;
                        double* dst = n.adjoint.data() + o * block;
                        for (std::int64_t i = 0; i < block; ++i) dst[i] += src[i];
                      }
                    }
                    offset += block;
                  }
                });
  }

  int reshape(int x, Shape shape) {
    Tensor out = value(x).reshaped(std::move(shape));
    return emit(std::move(out), {x}, [x](Graph& g, Node& self) {
      Node& xn = g.node(x);
      if (!xn.needs_grad) return;
      g.ensure_adjoint(xn);
      for (std::int64_t i = 0; i < xn.value.numel(); ++i)
        xn.adjoint[i] += self.adjoint[i];
    });
  }

  // ---- linear algebra ----

  int matmul(int a, int b) {
    const Tensor& av = value(a);
    const Tensor& bv = value(b);
    if (av.rank() != 2 || bv.rank() != 2 || av.dim(1) != bv.dim(0))
      throw std::invalid_argument("matmul: incompatible shapes " +
                                  shape_str(av.shape()) + " vs " +
                                  shape_str(bv.shape()));
    const int m = av.dim(0), k = av.dim(1), n = bv.dim(1);
    Tensor out({m, n});
    nn::matmul(av.data(), bv.data(), out.data(), m, k, n);
    return emit(std::move(out), {a, b}, [a, b, m, k, n](Graph& g, Node& self) {
      Node& an = g.node(a);
      Node& bn = g.node(b);
      if (an.needs_grad) {
        g.ensure_adjoint(an);
        matmul_accum_a_bt(self.adjoint.data(), bn.value.data(),
                          an.adjoint.data(), m, k, n);
      }
      if (bn.needs_grad) {
        g.ensure_adjoint(bn);
        matmul_accum_at_b(an.value.data(), self.adjoint.data(),
                          bn.adjoint.data(), m, k, n);
      }
    });
  }

  // x: (N, Cin, H, W), w: (Cout, Cin, kh, kw).
  int conv2d(int x, int w, int stride, int pad) {
    const Tensor& xv = value(x);
    const Tensor& wv = value(w);
    if (xv.rank() != 4 || wv.rank() != 4 || xv.dim(1) != wv.dim(1))
      throw std::invalid_argument("conv2d: incompatible shapes " +
                                  shape_str(xv.shape()) + " vs " +
                                  shape_str(wv.shape()));
    const auto g = Conv2dGeom::make(xv.dim(1), xv.dim(2), xv.dim(3), wv.dim(0),
                                    wv.dim(2), wv.dim(3), stride, pad);
    const int batch = xv.dim(0);
    Tensor out({batch, g.out_c, g.out_h, g.out_w});
    conv2d_forward(xv.data(), wv.data(), batch, g, out.data(), col_buf_);
    return emit(std::move(out), {x, w}, [x, w, g, batch](Graph& gr, Node& self) {
      Node& xn = gr.node(x);
      Node& wn = gr.node(w);
      double* gx = nullptr;
      if (xn.needs_grad) {
        gr.ensure_adjoint(xn);
        gx = xn.adjoint.data();
      }
      gr.ensure_adjoint(wn);
      conv2d_backward(xn.value.data(), wn.value.data(), self.adjoint.data(),
                      batch, g, gx, wn.adjoint.data(), gr.col_buf_,
                      gr.col_grad_buf_);
    });
  }

  // z: (N, Cz, h, w), w: (Cz, Cout, kh, kw); output is (N, Cout, H, W) with
  // H = (h-1)*stride - 2*pad + kh. Exact adjoint of conv2d with the same
  // geometry, which is what the adjointness property tests rely on.
  int transposed_conv2d(int z, int w, int stride, int pad) {
    const Tensor& zv = value(z);
    const Tensor& wv = value(w);
    if (zv.rank() != 4 || wv.rank() != 4 || zv.dim(1) != wv.dim(0))
      throw std::invalid_argument("transposed_conv2d: incompatible shapes " +
                                  shape_str(zv.shape()) + " vs " +
                                  shape_str(wv.shape()));
    const int kh = wv.dim(2), kw = wv.dim(3);
    const int out_h = (zv.dim(2) - 1) * stride - 2 * pad + kh;
    const int out_w = (zv.dim(3) - 1) * stride - 2 * pad + kw;
    if (out_h < 1 || out_w < 1)
      throw std::invalid_argument("transposed_conv2d: empty output");
    const auto g = Conv2dGeom::make(wv.dim(1), out_h, out_w, zv.dim(1), kh, kw,
                                    stride, pad);
    if (g.out_h != zv.dim(2) || g.out_w != zv.dim(3))
      throw std::invalid_argument("transposed_conv2d: geometry mismatch");
    const int batch = zv.dim(0);
    Tensor out({batch, g.in_c, g.in_h, g.in_w});
    tconv2d_forward(zv.data(), wv.data(), batch, g, out.data(), col_buf_);
    return emit(std::move(out), {z, w}, [z, w, g, batch](Graph& gr, Node& self) {
      Node& zn = gr.node(z);
      Node& wn = gr.node(w);
      double* gz = nullptr;
      if (zn.needs_grad) {
        gr.ensure_adjoint(zn);
        gz = zn.adjoint.data();
      }
      gr.ensure_adjoint(wn);
      tconv2d_backward(zn.value.data(), wn.value.data(), self.adjoint.data(),
                       batch, g, gz, wn.adjoint.data(), gr.col_buf_);
    });
  }

  // x: (N, Cin, L), w: (Cout, Cin, k); left-padded so out_len = ceil(L/stride).
  int strided_causal_conv1d(int x, int w, int stride) {
    const Tensor& xv = value(x);
    const Tensor& wv = value(w);
    if (xv.rank() != 3 || wv.rank() != 3 || xv.dim(1) != wv.dim(1))
      throw std::invalid_argument("causal_conv1d: incompatible shapes " +
                                  shape_str(xv.shape()) + " vs " +
                                  shape_str(wv.shape()));
    const auto g = Conv1dGeom::make_causal(xv.dim(1), xv.dim(2), wv.dim(0),
                                           wv.dim(2), stride);
    const int batch = xv.dim(0);
    Tensor out({batch, g.out_c, g.out_len});
    causal_conv1d_forward(xv.data(), wv.data(), batch, g, out.data());
    return emit(std::move(out), {x, w}, [x, w, g, batch](Graph& gr, Node& self) {
      Node& xn = gr.node(x);
      Node& wn = gr.node(w);
      double* gx = nullptr;
      if (xn.needs_grad) {
        gr.ensure_adjoint(xn);
        gx = xn.adjoint.data();
      }
      gr.ensure_adjoint(wn);
      causal_conv1d_backward(xn.value.data(), wn.value.data(),
                             self.adjoint.data(), batch, g, gx,
                             wn.adjoint.data());
    });
  }

  // ---- reductions & losses ----

  int mean(int x) {
    const Tensor& xv = value(x);
    double acc = 0.0;
    for (std::int64_t i = 0; i < xv.numel(); ++i) acc += xv[i];
    const double inv_n = 1.0 / static_cast<double>(xv.numel());
    Tensor out = Tensor::scalar(acc * inv_n);
    return emit(std::move(out), {x}, [x, inv_n](Graph& g, Node& self) {
      Node& xn = g.node(x);
      if (!xn.needs_grad) return;
      g.ensure_adjoint(xn);
      const double gs = self.adjoint[0] * inv_n;
      for (std::int64_t i = 0; i < xn.value.numel(); ++i) xn.adjoint[i] += gs;
    });
  }

  // logits, targets: (B, C); targets are probabilities (one-hot or soft).
  // Returns mean cross entropy over rows.
  int softmax_crossentropy(int logits, int targets) {
    const Tensor& lv = value(logits);
    const Tensor& tv = value(targets);
    if (lv.rank() != 2 || lv.shape() != tv.shape())
      throw std::invalid_argument("softmax_crossentropy: incompatible shapes " +
                                  shape_str(lv.shape()) + " vs " +
                                  shape_str(tv.shape()));
    const int B = lv.dim(0), C = lv.dim(1);
    Tensor softmax({B, C});
    double loss = 0.0;
    for (int b = 0; b < B; ++b) {
      const double* row = lv.data() + b * C;
      double mx = row[0];
      for (int c = 1; c < C; ++c) mx = std::max(mx, row[c]);
      double s = 0.0;
      for (int c = 0; c < C; ++c) s += std::exp(row[c] - mx);
      const double logs = std::log(s);
      for (int c = 0; c < C; ++c) {
        const double logp = row[c] - mx - logs;
        softmax[b * C + c] = std::exp(logp);
        loss -= tv[b * C + c] * logp;
      }
    }
    loss /= B;
    return emit(Tensor::scalar(loss), {logits, targets},
                [logits, targets, B, C, sm = std::move(softmax)](Graph& g,
                                                                 Node& self) {
                  Node& ln = g.node(logits);
                  if (!ln.needs_grad) return;
                  g.ensure_adjoint(ln);
                  const Tensor& tv = g.node(targets).value;
                  const double gs = self.adjoint[0] / B;
                  for (std::int64_t i = 0; i < ln.value.numel(); ++i)
                    ln.adjoint[i] += gs * (sm[i] - tv[i]);
                });
  }

  // Binary cross entropy with logits, mean over all elements.
  int sigmoid_bce(int logits, int targets) {
    const Tensor& lv = value(logits);
    const Tensor& tv = value(targets);
    if (lv.shape() != tv.shape())
      throw std::invalid_argument("sigmoid_bce: incompatible shapes " +
                                  shape_str(lv.shape()) + " vs " +
                                  shape_str(tv.shape()));
    double loss = 0.0;
    for (std::int64_t i = 0; i < lv.numel(); ++i) {
      const double z = lv[i], t = tv[i];
      loss += std::max(z, 0.0) - z * t + std::log1p(std::exp(-std::abs(z)));
    }
    const double inv_n = 1.0 / static_cast<double>(lv.numel());
    return emit(Tensor::scalar(loss * inv_n), {logits, targets},
                [logits, targets, inv_n](Graph& g, Node& self) {
                  Node& ln = g.node(logits);
                  if (!ln.needs_grad) return;
                  g.ensure_adjoint(ln);
                  const Tensor& tv = g.node(targets).value;
                  const double gs = self.adjoint[0] * inv_n;
                  for (std::int64_t i = 0; i < ln.value.numel(); ++i) {
                    const double p = 1.0 / (1.0 + std::exp(-ln.value[i]));
                    ln.adjoint[i] += gs * (p - tv[i]);
                  }
                });
  }

  // pred, target: (N, C, H, W). Mean over N*H*W of the per-pixel L2 norm of
  // the channel difference (endpoint error when C == 2).
  int l2norm_per_pixel(int pred, int target) {
    const Tensor& pv = value(pred);
    const Tensor& tv = value(target);
    if (pv.rank() != 4 || pv.shape() != tv.shape())
      throw std::invalid_argument("l2norm_per_pixel: incompatible shapes " +
                                  shape_str(pv.shape()) + " vs " +
                                  shape_str(tv.shape()));
    const int N = pv.dim(0), C = pv.dim(1), H = pv.dim(2), W = pv.dim(3);
    const std::int64_t pixels = static_cast<std::int64_t>(N) * H * W;
    constexpr double kEps = 1e-12;
    double loss = 0.0;
    for (int n = 0; n < N; ++n)
      for (int h = 0; h < H; ++h)
        for (int w = 0; w < W; ++w) {
          double sq = kEps;
          for (int c = 0; c < C; ++c) {
            const double d = pv.at4(n, c, h, w, C, H, W) -
                             tv.at4(n, c, h, w, C, H, W);
            sq += d * d;
          }
          loss += std::sqrt(sq);
        }
    const double inv_n = 1.0 / static_cast<double>(pixels);
    return emit(
        Tensor::scalar(loss * inv_n), {pred, target},
        [pred, target, N, C, H, W, inv_n](Graph& g, Node& self) {
          Node& pn = g.node(pred);
          if (!pn.needs_grad) return;
          g.ensure_adjoint(pn);
          const Tensor& tv = g.node(target).value;
          const double gs = self.adjoint[0] * inv_n;
          for (int n = 0; n < N; ++n)
            for (int h = 0; h < H; ++h)
              for (int w = 0; w < W; ++w) {
                double sq = 1e-12;
                for (int c = 0; c < C; ++c) {
                  const double d = pn.value.at4(n, c, h, w, C, H, W) -
                                   tv.at4(n, c, h, w, C, H, W);
                  sq += d * d;
                }
                const double inv_norm = 1.0 / std::sqrt(sq);
                for (int c = 0; c < C; ++c) {
                  const double d = pn.value.at4(n, c, h, w, C, H, W) -
                                   tv.at4(n, c, h, w, C, H, W);
                  pn.adjoint.at4(n, c, h, w, C, H, W) += gs * d * inv_norm;
                }
              }
        });
  }

  // ---- backward ----

  void backward(int loss) {
    Node& ln = node(loss);
    if (ln.value.numel() != 1)
      throw std::invalid_argument("backward: loss must be scalar, got " +
                                  shape_str(ln.value.shape()));
    ensure_adjoint(ln);
    ln.adjoint[0] += 1.0;
    for (int i = static_cast<int>(nodes_.size()) - 1; i >= 0; --i) {
      Node& n = nodes_[static_cast<std::size_t>(i)];
      if (n.has_adjoint && n.back) n.back(*this);
    }
  }

  // Clears adjoints so the same tape can be replayed with a fresh backward.
  void reset_adjoints() {
    for (auto& n : nodes_) {
      n.has_adjoint = false;
      n.adjoint = Tensor{};
    }
  }

 private:
  friend struct Node;

  Node& node(int id) { return nodes_[static_cast<std::size_t>(id)]; }

  void ensure_adjoint(Node& n) {
    if (!n.has_adjoint) {
      n.adjoint = Tensor(n.value.shape());
      n.has_adjoint = true;
    }
  }

  int add_bias(int a, int b) {
    const Tensor& av = value(a);
    const Tensor& bv = value(b);
    const int C = bv.dim(0);
    std::int64_t outer = 0, inner = 0;
    if (av.rank() == 2 && av.dim(1) == C) {
      outer = av.dim(0);
      inner = 1;
    } else if ((av.rank() == 3 || av.rank() == 4) && av.dim(1) == C) {
      outer = av.dim(0);
      inner = av.numel() / (outer * C);
    } else {
      throw std::invalid_argument("add: cannot broadcast " +
                                  shape_str(bv.shape()) + " onto " +
                                  shape_str(av.shape()));
    }
    Tensor out(av.shape());
    for (std::int64_t o = 0; o < outer; ++o)
      for (int c = 0; c < C; ++c) {
        const std::int64_t base = (o * C + c) * inner;
        for (std::int64_t i = 0; i < inner; ++i)
          out[base + i] = av[base + i] + bv[c];
      }
    return emit(std::move(out), {a, b},
                [a, b, outer, C, inner](Graph& g, Node& self) {
                  Node& an = g.node(a);
                  Node& bn = g.node(b);
                  if (an.needs_grad) {
                    g.ensure_adjoint(an);
                    for (std::int64_t i = 0; i < an.value.numel(); ++i)
                      an.adjoint[i] += self.adjoint[i];
                  }
                  if (bn.needs_grad) {
                    g.ensure_adjoint(bn);
                    for (std::int64_t o = 0; o < outer; ++o)
                      for (int c = 0; c < C; ++c) {
                        const std::int64_t base = (o * C + c) * inner;
                        double acc = 0.0;
                        for (std::int64_t i = 0; i < inner; ++i)
                          acc += self.adjoint[base + i];
                        bn.adjoint[c] += acc;
                      }
                  }
                });
  }

  int emit(Tensor value, const std::vector<int>& inputs,
           std::function<void(Graph&, Node&)> back) {
    bool needs = false;
    for (int id : inputs) needs = needs || node(id).needs_grad;
    Node n;
    n.value = std::move(value);
    n.needs_grad = needs;
    if (needs) {
      const int self_id = static_cast<int>(nodes_.size());
      n.back = [self_id, fn = std::move(back)](Graph& g) {
        fn(g, g.node(self_id));
      };
    }
    nodes_.push_back(std::move(n));
    return static_cast<int>(nodes_.size()) - 1;
  }

  std::vector<Node> nodes_;
  std::vector<double> col_buf_;
  std::vector<double> col_grad_buf_;
};

}  // namespace pegsim::nn
