#pragma once

// Minimal reverse-mode autodiff over dense double tensors.
//
// A Var is a handle to a graph node. Ops allocate a fresh node holding the
// forward value and a closure that pushes the node's gradient to its parents.
// Nodes whose parents are all gradient-free are stored as constants, so a
// frozen sub-network costs nothing on the backward pass.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <memory>
#include <numeric>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "skelmae/core.hpp"

namespace skelmae::ad {

using Shape = std::vector<int>;

inline std::size_t numel(const Shape& s) {
  std::size_t n = 1;
  for (int d : s) n *= static_cast<std::size_t>(d);
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::string out = "[";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(s[i]);
  }
  return out + "]";
}

struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward;

  std::vector<double>& ensure_grad() {
    if (grad.size() != value.size()) grad.assign(value.size(), 0.0);
    return grad;
  }
};

class Var {
 public:
  Var() = default;
  explicit Var(std::shared_ptr<Node> node) : node_(std::move(node)) {}

  static Var constant(Shape shape, std::vector<double> value) {
    return leaf(std::move(shape), std::move(value), false);
  }
  static Var leaf(Shape shape, std::vector<double> value, bool requires_grad) {
    require(numel(shape) == value.size(), ErrorCode::shape_mismatch,
            "value size does not match shape " + shape_str(shape));
    auto n = std::make_shared<Node>();
    n->shape = std::move(shape);
    n->value = std::move(value);
    n->requires_grad = requires_grad;
    return Var(std::move(n));
  }
  static Var zeros(Shape shape) {
    const std::size_t n = numel(shape);
    return constant(std::move(shape), std::vector<double>(n, 0.0));
  }

  bool defined() const { return static_cast<bool>(node_); }
  const Shape& shape() const { return node_->shape; }
  int dim(int i) const {
    const int r = static_cast<int>(node_->shape.size());
    return node_->shape[static_cast<std::size_t>(i < 0 ? r + i : i)];
  }
  int rank() const { return static_cast<int>(node_->shape.size()); }
  std::size_t size() const { return node_->value.size(); }
  const std::vector<double>& value() const { return node_->value; }
  std::vector<double>& mutable_value() { return node_->value; }
  const double* data() const { return node_->value.data(); }
  const std::vector<double>& grad() const { return node_->grad; }
  std::vector<double>& mutable_grad() { return node_->ensure_grad(); }
  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool on) { node_->requires_grad = on; }
  void zero_grad() { node_->grad.assign(node_->value.size(), 0.0); }
  double item() const { return node_->value.at(0); }
  Node* node() const { return node_.get(); }
  const std::shared_ptr<Node>& ptr() const { return node_; }

 private:
  std::shared_ptr<Node> node_;
};

namespace detail {

inline Var make(Shape shape, std::vector<double> value, std::vector<Var> parents,
                std::function<void(Node&)> backward) {
  auto n = std::make_shared<Node>();
  n->shape = std::move(shape);
  n->value = std::move(value);
  bool any = false;
  for (const auto& p : parents) any = any || p.requires_grad();
  if (any) {
    n->requires_grad = true;
    n->parents.reserve(parents.size());
    for (const auto& p : parents) n->parents.push_back(p.ptr());
    n->backward = std::move(backward);
  }
  return Var(std::move(n));
}

using MatR = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Map = Eigen::Map<MatR>;
using CMap = Eigen::Map<const MatR>;
using StrideMap = Eigen::Map<MatR, 0, Eigen::OuterStride<>>;
using CStrideMap = Eigen::Map<const MatR, 0, Eigen::OuterStride<>>;

inline Node& parent(Node& n, std::size_t i) { return *n.parents[i]; }

}  // namespace detail

/// Runs reverse accumulation from a scalar. Leaf gradients accumulate.
inline void backward(const Var& out) {
  require(out.size() == 1, ErrorCode::shape_mismatch, "backward needs a scalar output");
  if (!out.requires_grad()) return;
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, std::size_t>> stack{{out.node(), 0}};
  seen.insert(out.node());
  while (!stack.empty()) {
    auto& [node, idx] = stack.back();
    if (idx < node->parents.size()) {
      Node* p = node->parents[idx++].get();
      if (p->requires_grad && !seen.count(p)) {
        seen.insert(p);
        stack.push_back({p, 0});
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  out.node()->ensure_grad()[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backward && !n->grad.empty()) n->backward(*n);
  }
}

// ---------------------------------------------------------------- elementwise

inline Var add(const Var& a, const Var& b) {
  require(a.shape() == b.shape(), ErrorCode::shape_mismatch,
          "add: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  std::vector<double> v(a.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = a.value()[i] + b.value()[i];
  return detail::make(a.shape(), std::move(v), {a, b}, [](Node& n) {
    for (std::size_t k = 0; k < 2; ++k) {
      Node& p = detail::parent(n, k);
      if (!p.requires_grad) continue;
      auto& g = p.ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i];
    }
  });
}

inline Var sub(const Var& a, const Var& b) {
  require(a.shape() == b.shape(), ErrorCode::shape_mismatch, "sub: shape mismatch");
  std::vector<double> v(a.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = a.value()[i] - b.value()[i];
  return detail::make(a.shape(), std::move(v), {a, b}, [](Node& n) {
    Node& p0 = detail::parent(n, 0);
    Node& p1 = detail::parent(n, 1);
    if (p0.requires_grad) {
      auto& g = p0.ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i];
    }
    if (p1.requires_grad) {
      auto& g = p1.ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] -= n.grad[i];
    }
  });
}

inline Var scale(const Var& a, double c) {
  std::vector<double> v(a.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = a.value()[i] * c;
  return detail::make(a.shape(), std::move(v), {a}, [c](Node& n) {
    auto& g = detail::parent(n, 0).ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += c * n.grad[i];
  });
}

/// Elementwise product with a constant array of the same size.
inline Var mul_const(const Var& a, std::vector<double> m) {
  require(m.size() == a.size(), ErrorCode::shape_mismatch, "mul_const: size mismatch");
  std::vector<double> v(a.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = a.value()[i] * m[i];
  return detail::make(a.shape(), std::move(v), {a}, [m = std::move(m)](Node& n) {
    auto& g = detail::parent(n, 0).ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += m[i] * n.grad[i];
  });
}

/// x + p where p's shape equals a trailing suffix of x's shape (broadcast over
/// the leading dimensions).
inline Var add_broadcast(const Var& x, const Var& p) {
  const std::size_t inner = p.size();
  require(inner > 0 && x.size() % inner == 0, ErrorCode::shape_mismatch,
          "add_broadcast: " + shape_str(p.shape()) + " does not tile " + shape_str(x.shape()));
  const int pr = p.rank();
  require(pr <= x.rank(), ErrorCode::shape_mismatch, "add_broadcast: rank");
  for (int i = 0; i < pr; ++i)
    require(p.dim(i) == x.dim(x.rank() - pr + i), ErrorCode::shape_mismatch,
            "add_broadcast: " + shape_str(p.shape()) + " vs " + shape_str(x.shape()));
  std::vector<double> v(x.value());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] += p.value()[i % inner];
  return detail::make(x.shape(), std::move(v), {x, p}, [inner](Node& n) {
    Node& px = detail::parent(n, 0);
    Node& pp = detail::parent(n, 1);
    if (px.requires_grad) {
      auto& g = px.ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i];
    }
    if (pp.requires_grad) {
      auto& g = pp.ensure_grad();
      for (std::size_t i = 0; i < n.grad.size(); ++i) g[i % inner] += n.grad[i];
    }
  });
}

inline Var relu(const Var& x) {
  std::vector<double> v(x.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = x.value()[i] > 0.0 ? x.value()[i] : 0.0;
  return detail::make(x.shape(), std::move(v), {x}, [](Node& n) {
    Node& p = detail::parent(n, 0);
    auto& g = p.ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i)
      if (p.value[i] > 0.0) g[i] += n.grad[i];
  });
}

/// Learnable leaky rectifier with one slope per channel of the last axis.
inline Var prelu(const Var& x, const Var& slope) {
  const std::size_t c = slope.size();
  require(static_cast<std::size_t>(x.dim(-1)) == c, ErrorCode::shape_mismatch,
          "prelu: channel mismatch");
  std::vector<double> v(x.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    const double xi = x.value()[i];
    v[i] = xi > 0.0 ? xi : slope.value()[i % c] * xi;
  }
  return detail::make(x.shape(), std::move(v), {x, slope}, [c](Node& n) {
    Node& px = detail::parent(n, 0);
    Node& ps = detail::parent(n, 1);
    if (px.requires_grad) {
      auto& g = px.ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i)
        g[i] += px.value[i] > 0.0 ? n.grad[i] : ps.value[i % c] * n.grad[i];
    }
    if (ps.requires_grad) {
      auto& g = ps.ensure_grad();
      for (std::size_t i = 0; i < n.grad.size(); ++i)
        if (px.value[i] <= 0.0) g[i % c] += px.value[i] * n.grad[i];
    }
  });
}

// ---------------------------------------------------------------- shape ops

inline Var reshape(const Var& x, Shape shape) {
  require(numel(shape) == x.size(), ErrorCode::shape_mismatch,
          "reshape: " + shape_str(x.shape()) + " -> " + shape_str(shape));
  return detail::make(std::move(shape), x.value(), {x}, [](Node& n) {
    auto& g = detail::parent(n, 0).ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i];
  });
}

namespace detail {
inline std::pair<std::size_t, std::size_t> outer_inner(const Shape& s, int axis) {
  std::size_t outer = 1, inner = 1;
  for (int i = 0; i < axis; ++i) outer *= static_cast<std::size_t>(s[static_cast<std::size_t>(i)]);
  for (std::size_t i = static_cast<std::size_t>(axis) + 1; i < s.size(); ++i)
    inner *= static_cast<std::size_t>(s[i]);
  return {outer, inner};
}
}  // namespace detail

inline Var concat(const std::vector<Var>& xs, int axis) {
  require(!xs.empty(), ErrorCode::invalid_argument, "concat: empty input");
  const Shape& s0 = xs.front().shape();
  const int rank = static_cast<int>(s0.size());
  if (axis < 0) axis += rank;
  Shape out = s0;
  out[static_cast<std::size_t>(axis)] = 0;
  for (const auto& x : xs) {
    require(x.rank() == rank, ErrorCode::shape_mismatch, "concat: rank mismatch");
    for (int i = 0; i < rank; ++i)
      if (i != axis)
        require(x.dim(i) == s0[static_cast<std::size_t>(i)], ErrorCode::shape_mismatch,
                "concat: " + shape_str(x.shape()) + " vs " + shape_str(s0));
    out[static_cast<std::size_t>(axis)] += x.dim(axis);
  }
  auto [outer, inner] = detail::outer_inner(out, axis);
  const std::size_t out_row = static_cast<std::size_t>(out[static_cast<std::size_t>(axis)]) * inner;
  std::vector<double> v(numel(out));
  std::vector<std::size_t> offsets;
  std::size_t off = 0;
  for (const auto& x : xs) {
    offsets.push_back(off);
    const std::size_t w = static_cast<std::size_t>(x.dim(axis)) * inner;
    for (std::size_t o = 0; o < outer; ++o)
      std::copy_n(x.data() + o * w, w, v.data() + o * out_row + off);
    off += w;
  }
  std::vector<std::size_t> widths;
  for (const auto& x : xs) widths.push_back(static_cast<std::size_t>(x.dim(axis)) * inner);
  return detail::make(out, std::move(v), xs, [outer, out_row, offsets, widths](Node& n) {
    for (std::size_t k = 0; k < n.parents.size(); ++k) {
      Node& p = detail::parent(n, k);
      if (!p.requires_grad) continue;
      auto& g = p.ensure_grad();
      const std::size_t w = widths[k];
      for (std::size_t o = 0; o < outer; ++o) {
        const double* src = n.grad.data() + o * out_row + offsets[k];
        double* dst = g.data() + o * w;
        for (std::size_t i = 0; i < w; ++i) dst[i] += src[i];
      }
    }
  });
}

inline Var slice(const Var& x, int axis, int start, int len) {
  const int rank = x.rank();
  if (axis < 0) axis += rank;
  require(start >= 0 && len >= 0 && start + len <= x.dim(axis), ErrorCode::shape_mismatch,
          "slice out of range");
  Shape out = x.shape();
  out[static_cast<std::size_t>(axis)] = len;
  auto [outer, inner] = detail::outer_inner(x.shape(), axis);
  const std::size_t in_row = static_cast<std::size_t>(x.dim(axis)) * inner;
  const std::size_t w = static_cast<std::size_t>(len) * inner;
  const std::size_t off = static_cast<std::size_t>(start) * inner;
  std::vector<double> v(outer * w);
  for (std::size_t o = 0; o < outer; ++o)
    std::copy_n(x.data() + o * in_row + off, w, v.data() + o * w);
  return detail::make(out, std::move(v), {x}, [outer, in_row, w, off](Node& n) {
    auto& g = detail::parent(n, 0).ensure_grad();
    for (std::size_t o = 0; o < outer; ++o) {
      double* dst = g.data() + o * in_row + off;
      const double* src = n.grad.data() + o * w;
      for (std::size_t i = 0; i < w; ++i) dst[i] += src[i];
    }
  });
}

// ---------------------------------------------------------------- dense ops

/// Affine map over the last axis: x[..., K] · W[K, M] + b[M]. `b` may be undefined.
inline Var linear(const Var& x, const Var& w, const Var& b = Var()) {
  const int k = w.dim(0);
  const int m = w.dim(1);
  require(x.dim(-1) == k, ErrorCode::shape_mismatch,
          "linear: input " + shape_str(x.shape()) + " vs weight " + shape_str(w.shape()));
  const int rows = static_cast<int>(x.size() / static_cast<std::size_t>(k));
  Shape out = x.shape();
  out.back() = m;
  std::vector<double> v(static_cast<std::size_t>(rows) * static_cast<std::size_t>(m));
  detail::Map y(v.data(), rows, m);
  y.noalias() = detail::CMap(x.data(), rows, k) * detail::CMap(w.data(), k, m);
  const bool has_bias = b.defined();
  if (has_bias) {
    require(static_cast<int>(b.size()) == m, ErrorCode::shape_mismatch, "linear: bias size");
    y.rowwise() += Eigen::Map<const Eigen::RowVectorXd>(b.data(), m);
  }
  std::vector<Var> parents{x, w};
  if (has_bias) parents.push_back(b);
  return detail::make(out, std::move(v), parents, [rows, k, m, has_bias](Node& n) {
    detail::CMap gy(n.grad.data(), rows, m);
    Node& px = detail::parent(n, 0);
    Node& pw = detail::parent(n, 1);
    if (px.requires_grad) {
      detail::Map gx(px.ensure_grad().data(), rows, k);
      gx.noalias() += gy * detail::CMap(pw.value.data(), k, m).transpose();
    }
    if (pw.requires_grad) {
      detail::Map gw(pw.ensure_grad().data(), k, m);
      gw.noalias() += detail::CMap(px.value.data(), rows, k).transpose() * gy;
    }
    if (has_bias) {
      Node& pb = detail::parent(n, 2);
      if (pb.requires_grad) {
        Eigen::Map<Eigen::RowVectorXd> gb(pb.ensure_grad().data(), m);
        gb += gy.colwise().sum();
      }
    }
  });
}

/// Layer normalization over the last axis with affine gain and shift.
inline Var layer_norm(const Var& x, const Var& gamma, const Var& beta, double eps = 1e-5) {
  const int d = x.dim(-1);
  require(static_cast<int>(gamma.size()) == d && static_cast<int>(beta.size()) == d,
          ErrorCode::shape_mismatch, "layer_norm: parameter size");
  const std::size_t rows = x.size() / static_cast<std::size_t>(d);
  const std::size_t du = static_cast<std::size_t>(d);
  std::vector<double> xhat(x.size()), inv_std(rows), v(x.size());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = x.data() + r * du;
    double mean = 0.0;
    for (std::size_t i = 0; i < du; ++i) mean += xr[i];
    mean /= d;
    double var = 0.0;
    for (std::size_t i = 0; i < du; ++i) var += (xr[i] - mean) * (xr[i] - mean);
    var /= d;
    const double is = 1.0 / std::sqrt(var + eps);
    inv_std[r] = is;
    for (std::size_t i = 0; i < du; ++i) {
      const double h = (xr[i] - mean) * is;
      xhat[r * du + i] = h;
      v[r * du + i] = h * gamma.value()[i] + beta.value()[i];
    }
  }
  return detail::make(
      x.shape(), std::move(v), {x, gamma, beta},
      [rows, du, xhat = std::move(xhat), inv_std = std::move(inv_std)](Node& n) {
        Node& px = detail::parent(n, 0);
        Node& pg = detail::parent(n, 1);
        Node& pb = detail::parent(n, 2);
        if (pg.requires_grad || pb.requires_grad) {
          auto& gg = pg.ensure_grad();
          auto& gb = pb.ensure_grad();
          for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t i = 0; i < du; ++i) {
              gg[i] += n.grad[r * du + i] * xhat[r * du + i];
              gb[i] += n.grad[r * du + i];
            }
        }
        if (px.requires_grad) {
          auto& gx = px.ensure_grad();
          const double dd = static_cast<double>(du);
          for (std::size_t r = 0; r < rows; ++r) {
            double s1 = 0.0, s2 = 0.0;
            for (std::size_t i = 0; i < du; ++i) {
              const double gh = n.grad[r * du + i] * pg.value[i];
              s1 += gh;
              s2 += gh * xhat[r * du + i];
            }
            for (std::size_t i = 0; i < du; ++i) {
              const double gh = n.grad[r * du + i] * pg.value[i];
              gx[r * du + i] += inv_std[r] * (gh - s1 / dd - xhat[r * du + i] * s2 / dd);
            }
          }
        }
      });
}

/// Spatial aggregation over the joint axis: out[b,t] = A · x[b,t] for
/// x[B,T,N,D] and a constant N×N operator A.
inline Var graph_mix(const Var& x, const std::vector<double>& a, int n_joints) {
  require(x.rank() == 4 && x.dim(2) == n_joints, ErrorCode::shape_mismatch,
          "graph_mix: expected [B,T,N,D] with N=" + std::to_string(n_joints) + ", got " +
              shape_str(x.shape()));
  require(a.size() == static_cast<std::size_t>(n_joints) * static_cast<std::size_t>(n_joints),
          ErrorCode::shape_mismatch, "graph_mix: operator size");
  const int d = x.dim(3);
  const int frames = x.dim(0) * x.dim(1);
  const std::size_t blk = static_cast<std::size_t>(n_joints) * static_cast<std::size_t>(d);
  std::vector<double> v(x.size());
  detail::CMap am(a.data(), n_joints, n_joints);
  for (int f = 0; f < frames; ++f) {
    detail::Map(v.data() + static_cast<std::size_t>(f) * blk, n_joints, d).noalias() =
        am * detail::CMap(x.data() + static_cast<std::size_t>(f) * blk, n_joints, d);
  }
  return detail::make(x.shape(), std::move(v), {x}, [a, n_joints, d, frames, blk](Node& n) {
    auto& g = detail::parent(n, 0).ensure_grad();
    detail::CMap am(a.data(), n_joints, n_joints);
    for (int f = 0; f < frames; ++f) {
      detail::Map(g.data() + static_cast<std::size_t>(f) * blk, n_joints, d).noalias() +=
          am.transpose() * detail::CMap(n.grad.data() + static_cast<std::size_t>(f) * blk, n_joints, d);
    }
  });
}

/// Temporal convolution along axis 1 of x[B,T,N,Din] with kernel w[K,Din,Dout],
/// zero padding (K-1)/2 on both sides (K odd), so T is preserved.
inline Var temporal_conv(const Var& x, const Var& w, const Var& b) {
  require(x.rank() == 4 && w.rank() == 3, ErrorCode::shape_mismatch, "temporal_conv: rank");
  const int bs = x.dim(0), t = x.dim(1), nj = x.dim(2), din = x.dim(3);
  const int kk = w.dim(0), dout = w.dim(2);
  require(w.dim(1) == din && kk % 2 == 1, ErrorCode::shape_mismatch, "temporal_conv: kernel");
  require(static_cast<int>(b.size()) == dout, ErrorCode::shape_mismatch, "temporal_conv: bias");
  const int pad = (kk - 1) / 2;
  const std::size_t in_frame = static_cast<std::size_t>(nj) * static_cast<std::size_t>(din);
  const std::size_t out_frame = static_cast<std::size_t>(nj) * static_cast<std::size_t>(dout);
  const std::size_t wk = static_cast<std::size_t>(din) * static_cast<std::size_t>(dout);
  Shape out{bs, t, nj, dout};
  std::vector<double> v(numel(out));
  for (int bi = 0; bi < bs; ++bi) {
    const std::size_t seq_in = static_cast<std::size_t>(bi) * static_cast<std::size_t>(t) * in_frame;
    const std::size_t seq_out = static_cast<std::size_t>(bi) * static_cast<std::size_t>(t) * out_frame;
    detail::Map(v.data() + seq_out, t * nj, dout).rowwise() =
        Eigen::Map<const Eigen::RowVectorXd>(b.data(), dout);
    for (int k = 0; k < kk; ++k) {
      const int shift = k - pad;  // out[t] += in[t + shift] · w[k]
      const int t0 = std::max(0, -shift), t1 = std::min(t, t - shift);
      if (t1 <= t0) continue;
      detail::Map(v.data() + seq_out + static_cast<std::size_t>(t0) * out_frame, (t1 - t0) * nj, dout)
          .noalias() +=
          detail::CMap(x.data() + seq_in + static_cast<std::size_t>(t0 + shift) * in_frame,
                       (t1 - t0) * nj, din) *
          detail::CMap(w.data() + static_cast<std::size_t>(k) * wk, din, dout);
    }
  }
  return detail::make(out, std::move(v), {x, w, b},
                      [bs, t, nj, din, dout, kk, pad, in_frame, out_frame, wk](Node& n) {
    Node& px = detail::parent(n, 0);
    Node& pw = detail::parent(n, 1);
    Node& pb = detail::parent(n, 2);
    for (int bi = 0; bi < bs; ++bi) {
      const std::size_t seq_in = static_cast<std::size_t>(bi) * static_cast<std::size_t>(t) * in_frame;
      const std::size_t seq_out = static_cast<std::size_t>(bi) * static_cast<std::size_t>(t) * out_frame;
      if (pb.requires_grad) {
        Eigen::Map<Eigen::RowVectorXd> gb(pb.ensure_grad().data(), dout);
        gb += detail::CMap(n.grad.data() + seq_out, t * nj, dout).colwise().sum();
      }
      for (int k = 0; k < kk; ++k) {
        const int shift = k - pad;
        const int t0 = std::max(0, -shift), t1 = std::min(t, t - shift);
        if (t1 <= t0) continue;
        detail::CMap gy(n.grad.data() + seq_out + static_cast<std::size_t>(t0) * out_frame,
                        (t1 - t0) * nj, dout);
        if (px.requires_grad) {
          detail::Map(px.ensure_grad().data() + seq_in + static_cast<std::size_t>(t0 + shift) * in_frame,
                      (t1 - t0) * nj, din)
              .noalias() += gy * detail::CMap(pw.value.data() + static_cast<std::size_t>(k) * wk, din, dout).transpose();
        }
        if (pw.requires_grad) {
          detail::Map(pw.ensure_grad().data() + static_cast<std::size_t>(k) * wk, din, dout).noalias() +=
              detail::CMap(px.value.data() + seq_in + static_cast<std::size_t>(t0 + shift) * in_frame,
                           (t1 - t0) * nj, din)
                  .transpose() *
              gy;
        }
      }
    }
  });
}

/// Multi-head scaled dot-product attention on already-projected q, k, v of
/// shape [B,S,D]. `key_valid` (size B·S, optional) marks keys that may be
/// attended to; every row must keep at least one valid key.
inline Var attention(const Var& q, const Var& k, const Var& v, int heads,
                     const std::vector<char>& key_valid = {}) {
  require(q.rank() == 3 && q.shape() == k.shape() && q.shape() == v.shape(),
          ErrorCode::shape_mismatch, "attention: q/k/v shapes");
  const int bs = q.dim(0), s = q.dim(1), d = q.dim(2);
  require(heads >= 1 && d % heads == 0, ErrorCode::invalid_argument, "attention: heads must divide D");
  require(key_valid.empty() || key_valid.size() == static_cast<std::size_t>(bs) * static_cast<std::size_t>(s),
          ErrorCode::shape_mismatch, "attention: key mask size");
  const int dh = d / heads;
  const double sc = 1.0 / std::sqrt(static_cast<double>(dh));
  const std::size_t seq = static_cast<std::size_t>(s) * static_cast<std::size_t>(d);
  const std::size_t pblk = static_cast<std::size_t>(s) * static_cast<std::size_t>(s);
  std::vector<double> probs(static_cast<std::size_t>(bs) * static_cast<std::size_t>(heads) * pblk);
  std::vector<double> out(q.size());
  for (int bi = 0; bi < bs; ++bi) {
    for (int h = 0; h < heads; ++h) {
      const std::size_t off = static_cast<std::size_t>(bi) * seq + static_cast<std::size_t>(h * dh);
      detail::CStrideMap qm(q.data() + off, s, dh, Eigen::OuterStride<>(d));
      detail::CStrideMap km(k.data() + off, s, dh, Eigen::OuterStride<>(d));
      detail::CStrideMap vm(v.data() + off, s, dh, Eigen::OuterStride<>(d));
      detail::Map pm(probs.data() + (static_cast<std::size_t>(bi) * static_cast<std::size_t>(heads) + static_cast<std::size_t>(h)) * pblk, s, s);
      pm.noalias() = (qm * km.transpose()) * sc;
      if (!key_valid.empty())
        for (int j = 0; j < s; ++j)
          if (!key_valid[static_cast<std::size_t>(bi * s + j)]) pm.col(j).setConstant(-std::numeric_limits<double>::infinity());
      const Eigen::VectorXd mx = pm.rowwise().maxCoeff();
      pm = (pm.colwise() - mx).array().exp().matrix();
      const Eigen::VectorXd z = pm.rowwise().sum();
      pm.array().colwise() /= z.array();
      detail::StrideMap(out.data() + off, s, dh, Eigen::OuterStride<>(d)).noalias() = pm * vm;
    }
  }
  return detail::make(q.shape(), std::move(out), {q, k, v},
                      [bs, s, d, heads, dh, sc, seq, pblk, probs = std::move(probs)](Node& n) {
    Node& pq = detail::parent(n, 0);
    Node& pk = detail::parent(n, 1);
    Node& pv = detail::parent(n, 2);
    detail::MatR dp(s, s);
    for (int bi = 0; bi < bs; ++bi) {
      for (int h = 0; h < heads; ++h) {
        const std::size_t off = static_cast<std::size_t>(bi) * seq + static_cast<std::size_t>(h * dh);
        detail::CMap pm(probs.data() + (static_cast<std::size_t>(bi) * static_cast<std::size_t>(heads) + static_cast<std::size_t>(h)) * pblk, s, s);
        detail::CStrideMap go(n.grad.data() + off, s, dh, Eigen::OuterStride<>(d));
        detail::CStrideMap qm(pq.value.data() + off, s, dh, Eigen::OuterStride<>(d));
        detail::CStrideMap km(pk.value.data() + off, s, dh, Eigen::OuterStride<>(d));
        detail::CStrideMap vm(pv.value.data() + off, s, dh, Eigen::OuterStride<>(d));
        if (pv.requires_grad)
          detail::StrideMap(pv.ensure_grad().data() + off, s, dh, Eigen::OuterStride<>(d)).noalias() +=
              pm.transpose() * go;
        if (!pq.requires_grad && !pk.requires_grad) continue;
        dp.noalias() = go * vm.transpose();
        const Eigen::VectorXd dot = pm.cwiseProduct(dp).rowwise().sum();
        dp = (pm.array() * (dp.colwise() - dot).array() * sc).matrix();
        if (pq.requires_grad)
          detail::StrideMap(pq.ensure_grad().data() + off, s, dh, Eigen::OuterStride<>(d)).noalias() += dp * km;
        if (pk.requires_grad)
          detail::StrideMap(pk.ensure_grad().data() + off, s, dh, Eigen::OuterStride<>(d)).noalias() +=
              dp.transpose() * qm;
      }
    }
  });
}

// ---------------------------------------------------------------- reductions

/// Σ_r w_r · ||y_r − target_r||² / denom, over rows of width `width`.
/// `target` and `row_weight` are constants. Empty `row_weight` means all ones.
inline Var weighted_sq_error(const Var& y, const std::vector<double>& target, int width,
                             std::vector<double> row_weight, double denom) {
  require(target.size() == y.size(), ErrorCode::shape_mismatch, "weighted_sq_error: target size");
  require(denom > 0.0, ErrorCode::invalid_argument, "weighted_sq_error: non-positive denominator");
  const std::size_t w = static_cast<std::size_t>(width);
  const std::size_t rows = y.size() / w;
  require(row_weight.empty() || row_weight.size() == rows, ErrorCode::shape_mismatch,
          "weighted_sq_error: weight size");
  double total = 0.0;
  for (std::size_t r = 0; r < rows; ++r) {
    const double wr = row_weight.empty() ? 1.0 : row_weight[r];
    if (wr == 0.0) continue;
    double acc = 0.0;
    for (std::size_t c = 0; c < w; ++c) {
      const double e = y.value()[r * w + c] - target[r * w + c];
      acc += e * e;
    }
    total += wr * acc;
  }
  return detail::make({1}, {total / denom}, {y},
                      [target, w, rows, row_weight = std::move(row_weight), denom](Node& n) {
    Node& p = detail::parent(n, 0);
    auto& g = p.ensure_grad();
    const double go = n.grad[0];
    for (std::size_t r = 0; r < rows; ++r) {
      const double wr = row_weight.empty() ? 1.0 : row_weight[r];
      if (wr == 0.0) continue;
      for (std::size_t c = 0; c < w; ++c)
        g[r * w + c] += go * 2.0 * wr * (p.value[r * w + c] - target[r * w + c]) / denom;
    }
  });
}

/// Σ x_i · c_i for a constant c: a generic scalar probe for gradient checks.
inline Var dot_const(const Var& x, std::vector<double> c) {
  require(c.size() == x.size(), ErrorCode::shape_mismatch, "dot_const: size mismatch");
  double acc = 0.0;
  for (std::size_t i = 0; i < c.size(); ++i) acc += x.value()[i] * c[i];
  return detail::make({1}, {acc}, {x}, [c = std::move(c)](Node& n) {
    auto& g = detail::parent(n, 0).ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[0] * c[i];
  });
}

inline Var sum(const std::vector<Var>& scalars) {
  double acc = 0.0;
  for (const auto& s : scalars) acc += s.item();
  return detail::make({1}, {acc}, scalars, [](Node& n) {
    for (std::size_t k = 0; k < n.parents.size(); ++k) {
      Node& p = detail::parent(n, k);
      if (p.requires_grad) p.ensure_grad()[0] += n.grad[0];
    }
  });
}

}  // namespace skelmae::ad
