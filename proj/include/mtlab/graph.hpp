#pragma once

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "mtlab/rng.hpp"
#include "mtlab/tensor.hpp"

namespace mtlab {

// Stable softmax of a plain vector (max-subtracted). The graph op below uses
// the same kernel row-wise.
inline std::vector<double> softmax(std::span<const double> v) {
  if (v.empty()) throw std::invalid_argument("softmax: empty input");
  double mx = v[0];
  for (double x : v) {
    if (!std::isfinite(x)) throw std::invalid_argument("softmax: non-finite input");
    mx = std::max(mx, x);
  }
  std::vector<double> out(v.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    out[i] = std::exp(v[i] - mx);
    sum += out[i];
  }
  for (double& x : out) x /= sum;
  return out;
}

using NodeId = std::int32_t;

// Reverse-mode autodiff over a tape of primitive applications. Nodes are
// appended in topological order by construction; backward walks the tape once
// in reverse. Tensors held by nodes are immutable once written.
class Graph {
 public:
  NodeId leaf(Tensor t) {
    check_finite(t, "leaf");
    const bool rg = t.requires_grad;
    return push(std::move(t), rg, {}, nullptr);
  }

  NodeId constant(Tensor t) {
    t.requires_grad = false;
    return leaf(std::move(t));
  }

  const Tensor& value(NodeId id) const { return nodes_[check_id(id)].value; }

  // Gradient of the root w.r.t. this node. Zero tensor if the node did not
  // participate in the root's computation.
  const Tensor& grad(NodeId id) {
    Node& n = nodes_[check_id(id)];
    if (n.grad.size() == 0) n.grad = Tensor::zeros(n.value.shape);
    return n.grad;
  }

  std::size_t node_count() const { return nodes_.size(); }

  // ---- primitives ----------------------------------------------------------

  // Elementwise sum; b may be a suffix of a's shape (bias-style broadcast).
  NodeId add(NodeId a, NodeId b) {
    const Tensor& ta = value(a);
    const Tensor& tb = value(b);
    if (!is_suffix(tb.shape, ta.shape))
      throw std::invalid_argument("add: shape " + shape_str(tb.shape) +
                                  " is not a suffix of " + shape_str(ta.shape));
    Tensor out = Tensor::uninit(ta.shape);
    const std::size_t nb = tb.size();
    for (std::size_t base = 0; base < out.size(); base += nb) {
      double* o = out.data.data() + base;
      const double* aa = ta.data.data() + base;
      const double* bb = tb.data.data();
      for (std::size_t i = 0; i < nb; ++i) o[i] = aa[i] + bb[i];
    }
    return push(std::move(out), needs(a) || needs(b), {a, b}, [a, b](Graph& g, Node& n) {
      if (g.needs(a)) g.accumulate(a, n.grad.data);
      if (g.needs(b)) {
        Tensor& gb = g.grad_ref(b);
        const std::size_t nb2 = gb.size();
        for (std::size_t base = 0; base < n.grad.size(); base += nb2) {
          const double* dy = n.grad.data.data() + base;
          double* gd = gb.data.data();
          for (std::size_t i = 0; i < nb2; ++i) gd[i] += dy[i];
        }
      }
    });
  }

  // Elementwise product; shapes must match.
  NodeId mul(NodeId a, NodeId b) {
    const Tensor& ta = value(a);
    const Tensor& tb = value(b);
    if (ta.shape != tb.shape)
      throw std::invalid_argument("mul: shape mismatch " + shape_str(ta.shape) + " vs " +
                                  shape_str(tb.shape));
    Tensor out = ta;
    out.requires_grad = false;
    for (std::size_t i = 0; i < out.size(); ++i) out.data[i] *= tb.data[i];
    return push(std::move(out), needs(a) || needs(b), {a, b}, [a, b](Graph& g, Node& n) {
      if (g.needs(a)) {
        Tensor& ga = g.grad_ref(a);
        const auto& vb = g.value(b).data;
        for (std::size_t i = 0; i < n.grad.size(); ++i) ga.data[i] += n.grad.data[i] * vb[i];
      }
      if (g.needs(b)) {
        Tensor& gb = g.grad_ref(b);
        const auto& va = g.value(a).data;
        for (std::size_t i = 0; i < n.grad.size(); ++i) gb.data[i] += n.grad.data[i] * va[i];
      }
    });
  }

  NodeId scale(NodeId a, double c) {
    Tensor out = value(a);
    out.requires_grad = false;
    for (double& v : out.data) v *= c;
    return push(std::move(out), needs(a), {a}, [a, c](Graph& g, Node& n) {
      if (!g.needs(a)) return;
      Tensor& ga = g.grad_ref(a);
      for (std::size_t i = 0; i < n.grad.size(); ++i) ga.data[i] += c * n.grad.data[i];
    });
  }

  // x:[..., K] times w:[K, N] -> [..., N]. With transpose_w, w is stored
  // [N, K] and used as w^T (tied-embedding output projections).
  NodeId matmul(NodeId x, NodeId w, bool transpose_w = false) {
    const Tensor& tx = value(x);
    const Tensor& tw = value(w);
    if (tx.rank() < 1 || tw.rank() != 2) throw std::invalid_argument("matmul: rank mismatch");
    const std::size_t k = tx.shape.back();
    const std::size_t wk = transpose_w ? tw.shape[1] : tw.shape[0];
    const std::size_t wn = transpose_w ? tw.shape[0] : tw.shape[1];
    if (k != wk)
      throw std::invalid_argument("matmul: inner extents differ, " + shape_str(tx.shape) +
                                  " vs " + shape_str(tw.shape));
    const std::size_t m = tx.size() / k;
    Shape out_shape(tx.shape.begin(), tx.shape.end() - 1);
    out_shape.push_back(wn);
    Tensor out = Tensor::uninit(std::move(out_shape));
    gemm(tx.data.data(), tw.data.data(), out.data.data(), m, k, wn, false, transpose_w);
    return push(std::move(out), needs(x) || needs(w), {x, w},
                [x, w, m, k, wn, transpose_w](Graph& g, Node& n) {
                  const auto& vx = g.value(x).data;
                  const auto& vw = g.value(w).data;
                  if (g.needs(x)) {
                    // dx = dy . w^T  (or dy . w when w was used transposed)
                    gemm(n.grad.data.data(), vw.data(), g.grad_ref(x).data.data(), m, wn, k,
                         false, !transpose_w, true);
                  }
                  if (g.needs(w)) {
                    if (transpose_w)  // dw = dy^T . x
                      gemm(n.grad.data.data(), vx.data(), g.grad_ref(w).data.data(), wn, m, k,
                           true, false, true);
                    else  // dw = x^T . dy
                      gemm(vx.data(), n.grad.data.data(), g.grad_ref(w).data.data(), k, m, wn,
                           true, false, true);
                  }
                });
  }

  // Batched matmul: a:[G, M, K] times b:[G, K, N] -> [G, M, N]. With
  // transpose_b, b is stored [G, N, K].
  NodeId bmm(NodeId a, NodeId b, bool transpose_b = false) {
    const Tensor& ta = value(a);
    const Tensor& tb = value(b);
    if (ta.rank() != 3 || tb.rank() != 3 || ta.shape[0] != tb.shape[0])
      throw std::invalid_argument("bmm: expected matching [G,*,*] operands");
    const std::size_t g_ = ta.shape[0], m = ta.shape[1], k = ta.shape[2];
    const std::size_t bk = transpose_b ? tb.shape[2] : tb.shape[1];
    const std::size_t bn = transpose_b ? tb.shape[1] : tb.shape[2];
    if (k != bk) throw std::invalid_argument("bmm: inner extents differ");
    Tensor out = Tensor::uninit({g_, m, bn});
    for (std::size_t i = 0; i < g_; ++i)
      gemm(ta.data.data() + i * m * k, tb.data.data() + i * bk * bn, out.data.data() + i * m * bn,
           m, k, bn, false, transpose_b);
    return push(std::move(out), needs(a) || needs(b), {a, b},
                [a, b, g_, m, k, bn, transpose_b](Graph& g, Node& n) {
                  const auto& va = g.value(a).data;
                  const auto& vb = g.value(b).data;
                  for (std::size_t i = 0; i < g_; ++i) {
                    const double* dy = n.grad.data.data() + i * m * bn;
                    if (g.needs(a))
                      gemm(dy, vb.data() + i * k * bn, g.grad_ref(a).data.data() + i * m * k, m,
                           bn, k, false, !transpose_b, true);
                    if (g.needs(b)) {
                      double* db = g.grad_ref(b).data.data() + i * k * bn;
                      if (transpose_b)  // db[N,K] = dy^T . a
                        gemm(dy, va.data() + i * m * k, db, bn, m, k, true, false, true);
                      else  // db[K,N] = a^T . dy
                        gemm(va.data() + i * m * k, dy, db, k, m, bn, true, false, true);
                    }
                  }
                });
  }

  NodeId relu(NodeId a) {
    Tensor out = value(a);
    out.requires_grad = false;
    for (double& v : out.data) v = v > 0.0 ? v : 0.0;
    return push(std::move(out), needs(a), {a}, [a](Graph& g, Node& n) {
      if (!g.needs(a)) return;
      Tensor& ga = g.grad_ref(a);
      const auto& va = g.value(a).data;
      for (std::size_t i = 0; i < n.grad.size(); ++i)
        ga.data[i] += va[i] > 0.0 ? n.grad.data[i] : 0.0;
    });
  }

  // Row-wise stable softmax over the last axis.
  NodeId softmax_lastdim(NodeId a) {
    const Tensor& ta = value(a);
    if (ta.rank() < 1) throw std::invalid_argument("softmax_lastdim: scalar input");
    const std::size_t d = ta.shape.back();
    const std::size_t rows = ta.size() / d;
    Tensor out = Tensor::uninit(ta.shape);
    for (std::size_t r = 0; r < rows; ++r) {
      const double* in = ta.data.data() + r * d;
      double* o = out.data.data() + r * d;
      double mx = in[0];
      for (std::size_t j = 1; j < d; ++j) mx = std::max(mx, in[j]);
      double sum = 0.0;
      for (std::size_t j = 0; j < d; ++j) {
        o[j] = std::exp(in[j] - mx);
        sum += o[j];
      }
      const double inv = 1.0 / sum;
      for (std::size_t j = 0; j < d; ++j) o[j] *= inv;
    }
    return push(std::move(out), needs(a), {a}, [a, d, rows](Graph& g, Node& n) {
      if (!g.needs(a)) return;
      Tensor& ga = g.grad_ref(a);
      const auto& y = n.value.data;
      for (std::size_t r = 0; r < rows; ++r) {
        const double* yr = y.data() + r * d;
        const double* dyr = n.grad.data.data() + r * d;
        double dot = 0.0;
        for (std::size_t j = 0; j < d; ++j) dot += yr[j] * dyr[j];
        double* gr = ga.data.data() + r * d;
        for (std::size_t j = 0; j < d; ++j) gr[j] += yr[j] * (dyr[j] - dot);
      }
    });
  }

  // y = gamma * (x - mean) / sqrt(var + eps) + beta over the last axis.
  NodeId layer_norm(NodeId x, NodeId gamma, NodeId beta, double eps) {
    const Tensor& tx = value(x);
    const Tensor& tg = value(gamma);
    const Tensor& tb = value(beta);
    if (eps <= 0.0) throw std::invalid_argument("layer_norm: eps must be positive");
    const std::size_t d = tx.shape.back();
    if (tg.size() != d || tb.size() != d)
      throw std::invalid_argument("layer_norm: gamma/beta length mismatch");
    const std::size_t rows = tx.size() / d;
    Tensor out = Tensor::uninit(tx.shape);
    auto xhat = std::make_shared<std::vector<double>>(tx.size());
    auto inv_std = std::make_shared<std::vector<double>>(rows);
    for (std::size_t r = 0; r < rows; ++r) {
      const double* in = tx.data.data() + r * d;
      double mean = 0.0;
      for (std::size_t j = 0; j < d; ++j) mean += in[j];
      mean /= static_cast<double>(d);
      double var = 0.0;
      for (std::size_t j = 0; j < d; ++j) var += (in[j] - mean) * (in[j] - mean);
      var /= static_cast<double>(d);
      const double is = 1.0 / std::sqrt(var + eps);
      (*inv_std)[r] = is;
      double* xh = xhat->data() + r * d;
      double* o = out.data.data() + r * d;
      for (std::size_t j = 0; j < d; ++j) {
        xh[j] = (in[j] - mean) * is;
        o[j] = tg.data[j] * xh[j] + tb.data[j];
      }
    }
    return push(std::move(out), needs(x) || needs(gamma) || needs(beta), {x, gamma, beta},
                [x, gamma, beta, d, rows, xhat, inv_std](Graph& g, Node& n) {
                  const auto& vg = g.value(gamma).data;
                  for (std::size_t r = 0; r < rows; ++r) {
                    const double* dy = n.grad.data.data() + r * d;
                    const double* xh = xhat->data() + r * d;
                    if (g.needs(gamma)) {
                      Tensor& gg = g.grad_ref(gamma);
                      for (std::size_t j = 0; j < d; ++j) gg.data[j] += dy[j] * xh[j];
                    }
                    if (g.needs(beta)) {
                      Tensor& gb = g.grad_ref(beta);
                      for (std::size_t j = 0; j < d; ++j) gb.data[j] += dy[j];
                    }
                    if (g.needs(x)) {
                      Tensor& gx = g.grad_ref(x);
                      double m1 = 0.0, m2 = 0.0;  // means of g*dy and g*dy*xhat
                      for (std::size_t j = 0; j < d; ++j) {
                        m1 += vg[j] * dy[j];
                        m2 += vg[j] * dy[j] * xh[j];
                      }
                      m1 /= static_cast<double>(d);
                      m2 /= static_cast<double>(d);
                      double* gx_r = gx.data.data() + r * d;
                      const double is = (*inv_std)[r];
                      for (std::size_t j = 0; j < d; ++j)
                        gx_r[j] += is * (vg[j] * dy[j] - m1 - xh[j] * m2);
                    }
                  }
                });
  }

  NodeId reshape(NodeId a, Shape shape) {
    const Tensor& ta = value(a);
    if (shape_numel(shape) != ta.size())
      throw std::invalid_argument("reshape: element count mismatch");
    Tensor out(std::move(shape), ta.data);
    return push(std::move(out), needs(a), {a}, [a](Graph& g, Node& n) {
      if (g.needs(a)) g.accumulate(a, n.grad.data);
    });
  }

  // General axis permutation, e.g. {0,2,1,3} swaps the middle axes of a 4-d
  // tensor.
  NodeId permute(NodeId a, std::vector<std::size_t> axes) {
    const Tensor& ta = value(a);
    if (axes.size() != ta.rank()) throw std::invalid_argument("permute: axes rank mismatch");
    Shape out_shape(axes.size());
    std::vector<bool> seen(axes.size(), false);
    for (std::size_t i = 0; i < axes.size(); ++i) {
      if (axes[i] >= ta.rank() || seen[axes[i]])
        throw std::invalid_argument("permute: invalid axis list");
      seen[axes[i]] = true;
      out_shape[i] = ta.shape[axes[i]];
    }
    Tensor out = Tensor::uninit(out_shape);
    permute_copy(ta.data.data(), out.data.data(), ta.shape, axes);
    auto held = std::make_shared<std::vector<std::size_t>>(axes);
    Shape in_shape = ta.shape;
    return push(std::move(out), needs(a), {a},
                [a, held, in_shape, out_shape](Graph& g, Node& n) {
                  if (!g.needs(a)) return;
                  // inverse permutation routes the gradient back
                  std::vector<std::size_t> inv(held->size());
                  for (std::size_t i = 0; i < held->size(); ++i) inv[(*held)[i]] = i;
                  std::vector<double> tmp(n.grad.size(), 0.0);
                  permute_copy(n.grad.data.data(), tmp.data(), out_shape, inv);
                  g.accumulate(a, tmp);
                });
  }

  // Row gather: table:[V, D], ids:[R, C] -> [R, C, D]. Gradient scatter-adds
  // into the table.
  NodeId embedding(NodeId table, const TokenMatrix& ids) {
    const Tensor& tt = value(table);
    if (tt.rank() != 2) throw std::invalid_argument("embedding: table must be [V,D]");
    const std::size_t v = tt.shape[0], d = tt.shape[1];
    for (std::int32_t id : ids.ids)
      if (id < 0 || static_cast<std::size_t>(id) >= v)
        throw std::invalid_argument("embedding: token id " + std::to_string(id) +
                                    " outside vocabulary of " + std::to_string(v));
    Tensor out = Tensor::uninit({ids.rows, ids.cols, d});
    for (std::size_t i = 0; i < ids.ids.size(); ++i) {
      const double* src = tt.data.data() + static_cast<std::size_t>(ids.ids[i]) * d;
      std::copy(src, src + d, out.data.data() + i * d);
    }
    auto held = std::make_shared<std::vector<std::int32_t>>(ids.ids);
    return push(std::move(out), needs(table), {table}, [table, held, d](Graph& g, Node& n) {
      if (!g.needs(table)) return;
      Tensor& gt = g.grad_ref(table);
      for (std::size_t i = 0; i < held->size(); ++i) {
        double* dst = gt.data.data() + static_cast<std::size_t>((*held)[i]) * d;
        const double* src = n.grad.data.data() + i * d;
        for (std::size_t j = 0; j < d; ++j) dst[j] += src[j];
      }
    });
  }

  // Inverted dropout; draws one uniform per element from the given stream.
  // rate 0 is the identity and consumes nothing.
  NodeId dropout(NodeId a, double rate, Rng& rng) {
    if (rate < 0.0 || rate >= 1.0) throw std::invalid_argument("dropout: rate must be in [0,1)");
    if (rate == 0.0) return a;
    const Tensor& ta = value(a);
    auto mask = std::make_shared<std::vector<double>>(ta.size());
    const double keep = 1.0 / (1.0 - rate);
    Tensor out = ta;
    out.requires_grad = false;
    for (std::size_t i = 0; i < ta.size(); ++i) {
      (*mask)[i] = rng.uniform() >= rate ? keep : 0.0;
      out.data[i] *= (*mask)[i];
    }
    return push(std::move(out), needs(a), {a}, [a, mask](Graph& g, Node& n) {
      if (!g.needs(a)) return;
      Tensor& ga = g.grad_ref(a);
      for (std::size_t i = 0; i < n.grad.size(); ++i)
        ga.data[i] += n.grad.data[i] * (*mask)[i];
    });
  }

  NodeId sum(NodeId a) {
    const Tensor& ta = value(a);
    double s = 0.0;
    for (double v : ta.data) s += v;
    Tensor out = Tensor::scalar(s);
    return push(std::move(out), needs(a), {a}, [a](Graph& g, Node& n) {
      if (!g.needs(a)) return;
      Tensor& ga = g.grad_ref(a);
      for (double& v : ga.data) v += n.grad.data[0];
    });
  }

  // Mean over unmasked positions of the label-smoothed cross entropy.
  // logits:[..., V] flattened to rows aligned with targets/mask, smoothed
  // target q_gold = 1 - eps + eps/V, q_other = eps/V.
  NodeId smoothed_cross_entropy(NodeId logits, const TokenMatrix& targets,
                                const std::vector<std::uint8_t>& position_mask,
                                double label_smoothing) {
    const Tensor& tl = value(logits);
    if (label_smoothing < 0.0 || label_smoothing >= 1.0)
      throw std::invalid_argument("smoothed_cross_entropy: label_smoothing must be in [0,1)");
    const std::size_t v = tl.shape.back();
    const std::size_t rows = tl.size() / v;
    if (targets.ids.size() != rows || position_mask.size() != rows)
      throw std::invalid_argument("smoothed_cross_entropy: row count mismatch");
    std::size_t active = 0;
    for (auto m : position_mask) active += m ? 1 : 0;
    if (active == 0) throw std::invalid_argument("smoothed_cross_entropy: all positions masked");
    const double eps = label_smoothing;
    const double q_off = eps / static_cast<double>(v);
    auto probs = std::make_shared<std::vector<double>>(tl.size(), 0.0);
    double total = 0.0;
    for (std::size_t r = 0; r < rows; ++r) {
      if (!position_mask[r]) continue;
      const std::int32_t gold = targets.ids[r];
      if (gold < 0 || static_cast<std::size_t>(gold) >= v)
        throw std::invalid_argument("smoothed_cross_entropy: target id out of range");
      const double* l = tl.data.data() + r * v;
      double mx = l[0];
      for (std::size_t j = 1; j < v; ++j) mx = std::max(mx, l[j]);
      double sum = 0.0, lsum = 0.0;
      double* p = probs->data() + r * v;
      for (std::size_t j = 0; j < v; ++j) {
        p[j] = std::exp(l[j] - mx);
        sum += p[j];
        lsum += l[j];
      }
      const double lse = mx + std::log(sum);
      for (std::size_t j = 0; j < v; ++j) p[j] /= sum;
      total += lse - (1.0 - eps) * l[static_cast<std::size_t>(gold)] - q_off * lsum;
    }
    Tensor out = Tensor::scalar(total / static_cast<double>(active));
    auto held_targets = std::make_shared<std::vector<std::int32_t>>(targets.ids);
    auto held_mask = std::make_shared<std::vector<std::uint8_t>>(position_mask);
    return push(std::move(out), needs(logits), {logits},
                [logits, probs, held_targets, held_mask, v, rows, active, eps,
                 q_off](Graph& g, Node& n) {
                  if (!g.needs(logits)) return;
                  Tensor& gl = g.grad_ref(logits);
                  const double w = n.grad.data[0] / static_cast<double>(active);
                  for (std::size_t r = 0; r < rows; ++r) {
                    if (!(*held_mask)[r]) continue;
                    const double* p = probs->data() + r * v;
                    double* dl = gl.data.data() + r * v;
                    const auto gold = static_cast<std::size_t>((*held_targets)[r]);
                    for (std::size_t j = 0; j < v; ++j) dl[j] += w * (p[j] - q_off);
                    dl[gold] -= w * (1.0 - eps);
                  }
                });
  }

  // Propagates d(root)/d(node) to every node that requires it. Root must be
  // scalar. Each tape entry is visited exactly once, in reverse order.
  void backward(NodeId root) {
    Node& r = nodes_[check_id(root)];
    if (r.value.size() != 1)
      throw std::invalid_argument("backward: root must be scalar, got shape " +
                                  shape_str(r.value.shape));
    if (r.grad.size() == 0) r.grad = Tensor::zeros(r.value.shape);
    r.grad.data[0] = 1.0;
    for (NodeId id = root; id >= 0; --id) {
      Node& n = nodes_[id];
      if (!n.needs_grad || n.grad.size() == 0 || !n.back) continue;
      n.back(*this, n);
    }
  }

 private:
  struct Node {
    Tensor value;
    Tensor grad;  // lazily allocated
    bool needs_grad = false;
    std::function<void(Graph&, Node&)> back;
  };

  bool needs(NodeId id) const { return nodes_[id].needs_grad; }

  Tensor& grad_ref(NodeId id) {
    Node& n = nodes_[id];
    if (n.grad.size() == 0) n.grad = Tensor::zeros(n.value.shape);
    return n.grad;
  }

  void accumulate(NodeId id, std::span<const double> dy) {
    Tensor& g = grad_ref(id);
    for (std::size_t i = 0; i < dy.size(); ++i) g.data[i] += dy[i];
  }

  NodeId push(Tensor value, bool needs_grad, std::initializer_list<NodeId> parents,
              std::function<void(Graph&, Node&)> back) {
    // parents precede by construction; assert stays cheap
    for (NodeId p : parents)
      if (p < 0 || static_cast<std::size_t>(p) >= nodes_.size())
        throw std::logic_error("Graph: parent node out of order");
    check_finite(value, "op output");
    if (nodes_.capacity() == nodes_.size()) nodes_.reserve(nodes_.size() + 512);
    Node n;
    n.value = std::move(value);
    n.needs_grad = needs_grad;
    n.back = std::move(back);
    nodes_.push_back(std::move(n));
    return static_cast<NodeId>(nodes_.size() - 1);
  }

  NodeId check_id(NodeId id) const {
    if (id < 0 || static_cast<std::size_t>(id) >= nodes_.size())
      throw std::invalid_argument("Graph: unknown node id");
    return id;
  }

  static void check_finite(const Tensor& t, const char* where) {
    if (!t.all_finite())
      throw std::runtime_error(std::string("non-finite value detected at ") + where);
  }

  static bool is_suffix(const Shape& small, const Shape& big) {
    if (small.size() > big.size()) return false;
    return std::equal(small.rbegin(), small.rend(), big.rbegin());
  }

  // C (+)= op_a(A) . op_b(B); all matrices row-major.
  static void gemm(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
                   std::size_t n, bool trans_a, bool trans_b, bool accumulate = false) {
    using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
    using CMap = Eigen::Map<const Mat>;
    using MMap = Eigen::Map<Mat>;
    const auto mi = static_cast<Eigen::Index>(m);
    const auto ki = static_cast<Eigen::Index>(k);
    const auto ni = static_cast<Eigen::Index>(n);
    MMap cm(c, mi, ni);
    CMap am(a, trans_a ? ki : mi, trans_a ? mi : ki);
    CMap bm(b, trans_b ? ni : ki, trans_b ? ki : ni);
    auto run = [&](auto&& lhs, auto&& rhs) {
      if (accumulate)
        cm.noalias() += lhs * rhs;
      else
        cm.noalias() = lhs * rhs;
    };
    if (!trans_a && !trans_b)
      run(am, bm);
    else if (!trans_a && trans_b)
      run(am, bm.transpose());
    else if (trans_a && !trans_b)
      run(am.transpose(), bm);
    else
      run(am.transpose(), bm.transpose());
  }

  static void permute_copy(const double* in, double* out, const Shape& in_shape,
                           const std::vector<std::size_t>& axes) {
    const std::size_t rank = in_shape.size();
    if (rank == 4 && axes[0] == 0 && axes[1] == 2 && axes[2] == 1 && axes[3] == 3) {
      // head split/merge pattern [a, b, c, d] -> [a, c, b, d]
      const std::size_t da = in_shape[0], db = in_shape[1], dc = in_shape[2], dd = in_shape[3];
      for (std::size_t ia = 0; ia < da; ++ia)
        for (std::size_t ic = 0; ic < dc; ++ic)
          for (std::size_t ib = 0; ib < db; ++ib) {
            const double* src = in + ((ia * db + ib) * dc + ic) * dd;
            double* dst = out + ((ia * dc + ic) * db + ib) * dd;
            for (std::size_t id = 0; id < dd; ++id) dst[id] = src[id];
          }
      return;
    }
    std::vector<std::size_t> in_strides(rank, 1);
    for (std::size_t i = rank - 1; i > 0; --i) in_strides[i - 1] = in_strides[i] * in_shape[i];
    std::vector<std::size_t> out_dims(rank), src_strides(rank);
    for (std::size_t i = 0; i < rank; ++i) {
      out_dims[i] = in_shape[axes[i]];
      src_strides[i] = in_strides[axes[i]];
    }
    std::vector<std::size_t> idx(rank, 0);
    std::size_t src = 0;
    const std::size_t total = shape_numel(in_shape);
    for (std::size_t o = 0; o < total; ++o) {
      out[o] = in[src];
      for (std::size_t i = rank; i-- > 0;) {
        if (++idx[i] < out_dims[i]) {
          src += src_strides[i];
          break;
        }
        idx[i] = 0;
        src -= src_strides[i] * (out_dims[i] - 1);
      }
    }
  }

  std::vector<Node> nodes_;
};

}  // namespace mtlab
