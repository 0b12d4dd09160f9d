#include "core/autograd.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <unordered_set>

#include "core/error.hpp"

namespace mduit::ag {

namespace {

using RowMat =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using CMapMat = Eigen::Map<const RowMat>;
using CMapVec = Eigen::Map<const Eigen::VectorXd>;
using MapVec = Eigen::Map<Eigen::VectorXd>;

thread_local bool g_grad_enabled = true;

void check_same_shape(const Var& a, const Var& b, const char* op) {
  require(a.shape() == b.shape(),
          std::string(op) + ": shape mismatch " + shape_str(a.shape()) +
              " vs " + shape_str(b.shape()));
}

void check_rank(const Var& a, int rank, const char* op) {
  require(a.value().rank() == rank, std::string(op) + ": expected rank " +
                                        std::to_string(rank) + ", got " +
                                        shape_str(a.shape()));
}

struct ConvGeom {
  int c_in, h, w, c_out, k, stride, pad, groups, h_out, w_out;
  int cin_g() const { return c_in / groups; }
  int cout_g() const { return c_out / groups; }
  int col_rows() const { return cin_g() * k * k; }
  int col_cols() const { return h_out * w_out; }
  bool is_identity_col() const { return k == 1 && stride == 1 && pad == 0; }
};

// Rows are (channel, ky, kx) of the group's channel slice; columns are output
// pixels in raster order.
void im2col(const double* x, const ConvGeom& g, double* col) {
  const int k = g.k;
  for (int c = 0; c < g.cin_g(); ++c) {
    const double* xc = x + static_cast<std::size_t>(c) * g.h * g.w;
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        double* row = col + (static_cast<std::size_t>(c) * k * k + ky * k + kx) *
                                g.col_cols();
        for (int oy = 0; oy < g.h_out; ++oy) {
          const int iy = oy * g.stride - g.pad + ky;
          double* dst = row + static_cast<std::size_t>(oy) * g.w_out;
          if (iy < 0 || iy >= g.h) {
            std::fill(dst, dst + g.w_out, 0.0);
            continue;
          }
          const double* src = xc + static_cast<std::size_t>(iy) * g.w;
          for (int ox = 0; ox < g.w_out; ++ox) {
            const int ix = ox * g.stride - g.pad + kx;
            dst[ox] = (ix >= 0 && ix < g.w) ? src[ix] : 0.0;
          }
        }
      }
    }
  }
}

void col2im_add(const double* col, const ConvGeom& g, double* dx) {
  const int k = g.k;
  for (int c = 0; c < g.cin_g(); ++c) {
    double* xc = dx + static_cast<std::size_t>(c) * g.h * g.w;
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        const double* row =
            col + (static_cast<std::size_t>(c) * k * k + ky * k + kx) *
                      g.col_cols();
        for (int oy = 0; oy < g.h_out; ++oy) {
          const int iy = oy * g.stride - g.pad + ky;
          if (iy < 0 || iy >= g.h) continue;
          const double* src = row + static_cast<std::size_t>(oy) * g.w_out;
          double* dst = xc + static_cast<std::size_t>(iy) * g.w;
          for (int ox = 0; ox < g.w_out; ++ox) {
            const int ix = ox * g.stride - g.pad + kx;
            if (ix >= 0 && ix < g.w) dst[ix] += src[ox];
          }
        }
      }
    }
  }
}

template <class F, class D>
Var unary(const Var& a, F f, D df_from_in_out) {
  Tensor out(a.shape());
  const auto& in = a.value();
  for (std::size_t i = 0; i < in.size(); ++i) out[i] = f(in[i]);
  return make_op(std::move(out), {a}, [df_from_in_out](Node& self) {
    Node& p = *self.parents[0];
    if (!p.requires_grad) return;
    Tensor& g = p.grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i)
      g[i] += self.grad[i] * df_from_in_out(p.value[i], self.value[i]);
  });
}

}  // namespace

Tensor& Node::grad_buffer() {
  if (grad.empty() && !value.empty()) grad = Tensor(value.shape(), 0.0);
  return grad;
}

Var::Var(Tensor value, bool requires_grad)
    : node_(std::make_shared<Node>()) {
  node_->value = std::move(value);
  node_->requires_grad = requires_grad;
}

void Var::zero_grad() {
  if (node_ && !node_->grad.empty()) node_->grad.fill(0.0);
}

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) {
  g_grad_enabled = false;
}
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

Var make_op(Tensor value, const std::vector<Var>& inputs,
            std::function<void(Node&)> backward_fn) {
  Var out(std::move(value), false);
  if (!g_grad_enabled) return out;
  bool any = false;
  for (const Var& v : inputs) any = any || v.requires_grad();
  if (!any) return out;
  out.node_->requires_grad = true;
  out.node_->parents.reserve(inputs.size());
  for (const Var& v : inputs) {
    // Undefined inputs become a placeholder so parent indices stay stable.
    out.node_->parents.push_back(v.defined() ? v.ptr()
                                             : std::make_shared<Node>());
  }
  out.node_->backward = std::move(backward_fn);
  return out;
}

void backward(const Var& root) {
  require(root.defined() && root.value().size() == 1,
          "backward() requires a single-element root",
          ErrorCode::kInvalidArgument);
  if (!root.requires_grad()) return;

  // Iterative post-order DFS gives a topological order.
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, std::size_t>> stack{{root.node(), 0}};
  seen.insert(root.node());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* p = node->parents[next++].get();
      if (p->requires_grad && seen.insert(p).second) stack.push_back({p, 0});
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  root.node()->grad_buffer()[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backward && !n->grad.empty()) n->backward(*n);
  }
}

Var add(const Var& a, const Var& b) {
  check_same_shape(a, b, "add");
  Tensor out = a.value();
  out += b.value();
  return make_op(std::move(out), {a, b}, [](Node& self) {
    for (auto& p : self.parents)
      if (p->requires_grad) p->grad_buffer() += self.grad;
  });
}

Var sub(const Var& a, const Var& b) {
  check_same_shape(a, b, "sub");
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b.value()[i];
  return make_op(std::move(out), {a, b}, [](Node& self) {
    if (self.parents[0]->requires_grad)
      self.parents[0]->grad_buffer() += self.grad;
    if (self.parents[1]->requires_grad) {
      Tensor& g = self.parents[1]->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] -= self.grad[i];
    }
  });
}

Var scale(const Var& a, double s) {
  Tensor out = a.value();
  out *= s;
  return make_op(std::move(out), {a}, [s](Node& self) {
    Node& p = *self.parents[0];
    Tensor& g = p.grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += s * self.grad[i];
  });
}

Var relu(const Var& a) {
  return unary(
      a, [](double x) { return x > 0.0 ? x : 0.0; },
      [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Var leaky_relu(const Var& a, double slope) {
  return unary(
      a, [slope](double x) { return x > 0.0 ? x : slope * x; },
      [slope](double x, double) { return x > 0.0 ? 1.0 : slope; });
}

Var tanh(const Var& a) {
  return unary(
      a, [](double x) { return std::tanh(x); },
      [](double, double y) { return 1.0 - y * y; });
}

Var sigmoid(const Var& a) {
  return unary(
      a,
      [](double x) {
        if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
        const double e = std::exp(x);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); });
}

Var reshape(const Var& a, Shape shape) {
  Tensor out = a.value().reshaped(std::move(shape));
  return make_op(std::move(out), {a}, [](Node& self) {
    Tensor& g = self.parents[0]->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
  });
}

Var sum(const Var& a) {
  double s = 0.0;
  for (double v : a.value().values()) s += v;
  return make_op(Tensor::scalar(s), {a}, [](Node& self) {
    Tensor& g = self.parents[0]->grad_buffer();
    const double d = self.grad[0];
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += d;
  });
}

Var mean(const Var& a) {
  const double n = static_cast<double>(a.value().size());
  return scale(sum(a), 1.0 / n);
}

Var conv2d(const Var& x, const Var& w, const Var& bias, int stride, int pad,
           int groups) {
  check_rank(x, 3, "conv2d input");
  check_rank(w, 4, "conv2d weight");
  require(groups >= 1, "conv2d: groups must be positive");
  require(stride >= 1 && pad >= 0, "conv2d: invalid stride/padding");
  ConvGeom g{};
  g.c_in = x.value().dim(0);
  g.h = x.value().dim(1);
  g.w = x.value().dim(2);
  g.c_out = w.value().dim(0);
  g.k = w.value().dim(2);
  require(w.value().dim(3) == g.k, "conv2d: kernel must be square");
  g.stride = stride;
  g.pad = pad;
  g.groups = groups;
  require(g.c_in % groups == 0 && g.c_out % groups == 0,
          "conv2d: channels not divisible by groups");
  require(w.value().dim(1) == g.cin_g(),
          "conv2d: weight " + shape_str(w.shape()) +
              " does not match input channels " + std::to_string(g.c_in) +
              " with groups=" + std::to_string(groups));
  if (bias.defined())
    require(bias.value().rank() == 1 && bias.value().dim(0) == g.c_out,
            "conv2d: bias shape " + shape_str(bias.shape()));
  g.h_out = (g.h + 2 * pad - g.k) / stride + 1;
  g.w_out = (g.w + 2 * pad - g.k) / stride + 1;
  require(g.h_out > 0 && g.w_out > 0, "conv2d: input smaller than kernel");

  Tensor out(Shape{g.c_out, g.h_out, g.w_out});
  const std::size_t in_group_stride =
      static_cast<std::size_t>(g.cin_g()) * g.h * g.w;
  const std::size_t out_group_stride =
      static_cast<std::size_t>(g.cout_g()) * g.col_cols();
  const std::size_t w_group_stride =
      static_cast<std::size_t>(g.cout_g()) * g.col_rows();
  std::vector<double> col(g.is_identity_col()
                              ? 0
                              : static_cast<std::size_t>(g.col_rows()) *
                                    g.col_cols());
  for (int gi = 0; gi < groups; ++gi) {
    const double* xg = x.value().data() + gi * in_group_stride;
    const double* colp = xg;
    if (!g.is_identity_col()) {
      im2col(xg, g, col.data());
      colp = col.data();
    }
    CMapMat wm(w.value().data() + gi * w_group_stride, g.cout_g(),
               g.col_rows());
    CMapMat cm(colp, g.col_rows(), g.col_cols());
    MapMat om(out.data() + gi * out_group_stride, g.cout_g(), g.col_cols());
    om.noalias() = wm * cm;
  }
  if (bias.defined()) {
    for (int c = 0; c < g.c_out; ++c) {
      double* o = out.data() + static_cast<std::size_t>(c) * g.col_cols();
      const double b = bias.value()[c];
      for (int i = 0; i < g.col_cols(); ++i) o[i] += b;
    }
  }

  return make_op(std::move(out), {x, w, bias}, [g](Node& self) {
    Node& xn = *self.parents[0];
    Node& wn = *self.parents[1];
    Node& bn = *self.parents[2];
    const std::size_t in_gs = static_cast<std::size_t>(g.cin_g()) * g.h * g.w;
    const std::size_t out_gs =
        static_cast<std::size_t>(g.cout_g()) * g.col_cols();
    const std::size_t w_gs =
        static_cast<std::size_t>(g.cout_g()) * g.col_rows();
    std::vector<double> col(static_cast<std::size_t>(g.col_rows()) *
                            g.col_cols());
    for (int gi = 0; gi < g.groups; ++gi) {
      CMapMat dy(self.grad.data() + gi * out_gs, g.cout_g(), g.col_cols());
      if (wn.requires_grad) {
        const double* xg = xn.value.data() + gi * in_gs;
        const double* colp = xg;
        if (!g.is_identity_col()) {
          im2col(xg, g, col.data());
          colp = col.data();
        }
        CMapMat cm(colp, g.col_rows(), g.col_cols());
        MapMat dw(wn.grad_buffer().data() + gi * w_gs, g.cout_g(),
                  g.col_rows());
        dw.noalias() += dy * cm.transpose();
      }
      if (xn.requires_grad) {
        CMapMat wm(wn.value.data() + gi * w_gs, g.cout_g(), g.col_rows());
        double* dxg = xn.grad_buffer().data() + gi * in_gs;
        if (g.is_identity_col()) {
          MapMat dx(dxg, g.col_rows(), g.col_cols());
          dx.noalias() += wm.transpose() * dy;
        } else {
          MapMat dcol(col.data(), g.col_rows(), g.col_cols());
          dcol.noalias() = wm.transpose() * dy;
          col2im_add(col.data(), g, dxg);
        }
      }
    }
    if (bn.requires_grad) {
      Tensor& db = bn.grad_buffer();
      for (int c = 0; c < g.c_out; ++c) {
        const double* d =
            self.grad.data() + static_cast<std::size_t>(c) * g.col_cols();
        double s = 0.0;
        for (int i = 0; i < g.col_cols(); ++i) s += d[i];
        db[c] += s;
      }
    }
  });
}

Var upsample_nearest2x(const Var& x) {
  check_rank(x, 3, "upsample_nearest2x");
  const int c = x.value().dim(0), h = x.value().dim(1), w = x.value().dim(2);
  Tensor out(Shape{c, 2 * h, 2 * w});
  for (int ci = 0; ci < c; ++ci)
    for (int y = 0; y < 2 * h; ++y)
      for (int xx = 0; xx < 2 * w; ++xx)
        out.at(ci, y, xx) = x.value().at(ci, y / 2, xx / 2);
  return make_op(std::move(out), {x}, [c, h, w](Node& self) {
    Tensor& g = self.parents[0]->grad_buffer();
    for (int ci = 0; ci < c; ++ci)
      for (int y = 0; y < 2 * h; ++y)
        for (int xx = 0; xx < 2 * w; ++xx)
          g.at(ci, y / 2, xx / 2) += self.grad.at(ci, y, xx);
  });
}

Var concat_channels(const Var& a, const Var& b) {
  check_rank(a, 3, "concat_channels");
  check_rank(b, 3, "concat_channels");
  require(a.value().dim(1) == b.value().dim(1) &&
              a.value().dim(2) == b.value().dim(2),
          "concat_channels: spatial size mismatch " + shape_str(a.shape()) +
              " vs " + shape_str(b.shape()));
  const int ca = a.value().dim(0), cb = b.value().dim(0);
  Tensor out(Shape{ca + cb, a.value().dim(1), a.value().dim(2)});
  std::copy(a.value().data(), a.value().data() + a.value().size(), out.data());
  std::copy(b.value().data(), b.value().data() + b.value().size(),
            out.data() + a.value().size());
  const std::size_t na = a.value().size();
  return make_op(std::move(out), {a, b}, [na](Node& self) {
    Node& pa = *self.parents[0];
    Node& pb = *self.parents[1];
    if (pa.requires_grad) {
      Tensor& g = pa.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
    if (pb.requires_grad) {
      Tensor& g = pb.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[na + i];
    }
  });
}

Var global_avg_pool(const Var& x) {
  check_rank(x, 3, "global_avg_pool");
  const int c = x.value().dim(0);
  const int hw = x.value().dim(1) * x.value().dim(2);
  Tensor out(Shape{c});
  for (int ci = 0; ci < c; ++ci) {
    const double* p = x.value().data() + static_cast<std::size_t>(ci) * hw;
    double s = 0.0;
    for (int i = 0; i < hw; ++i) s += p[i];
    out[ci] = s / hw;
  }
  return make_op(std::move(out), {x}, [c, hw](Node& self) {
    Tensor& g = self.parents[0]->grad_buffer();
    for (int ci = 0; ci < c; ++ci) {
      const double d = self.grad[ci] / hw;
      double* p = g.data() + static_cast<std::size_t>(ci) * hw;
      for (int i = 0; i < hw; ++i) p[i] += d;
    }
  });
}

Var linear(const Var& x, const Var& w, const Var& b) {
  check_rank(x, 1, "linear input");
  check_rank(w, 2, "linear weight");
  const int m = w.value().dim(0), n = w.value().dim(1);
  require(x.value().dim(0) == n, "linear: input " + shape_str(x.shape()) +
                                     " vs weight " + shape_str(w.shape()));
  Tensor out(Shape{m});
  MapVec(out.data(), m).noalias() =
      CMapMat(w.value().data(), m, n) * CMapVec(x.value().data(), n);
  if (b.defined()) {
    require(b.value().size() == static_cast<std::size_t>(m),
            "linear: bias shape " + shape_str(b.shape()));
    for (int i = 0; i < m; ++i) out[i] += b.value()[i];
  }
  return make_op(std::move(out), {x, w, b}, [m, n](Node& self) {
    Node& xn = *self.parents[0];
    Node& wn = *self.parents[1];
    Node& bn = *self.parents[2];
    CMapVec dy(self.grad.data(), m);
    if (wn.requires_grad)
      MapMat(wn.grad_buffer().data(), m, n).noalias() +=
          dy * CMapVec(xn.value.data(), n).transpose();
    if (xn.requires_grad)
      MapVec(xn.grad_buffer().data(), n).noalias() +=
          CMapMat(wn.value.data(), m, n).transpose() * dy;
    if (bn.requires_grad) MapVec(bn.grad_buffer().data(), m) += dy;
  });
}

Var gem_pool(const Var& x, const Var& p, double eps) {
  check_rank(x, 3, "gem_pool");
  require(p.value().size() == 1, "gem_pool: exponent must be a scalar");
  const double pv = p.value()[0];
  require(pv > 0.0 && std::isfinite(pv), "gem_pool: exponent must be positive");
  require(x.value().all_finite(), "gem_pool: non-finite input feature");
  const int c = x.value().dim(0);
  const int hw = x.value().dim(1) * x.value().dim(2);
  Tensor out(Shape{c});
  // Per channel: mean of clamped^p, and mean of clamped^p * ln(clamped).
  std::vector<double> m(static_cast<std::size_t>(c)), mlog(m.size());
  for (int ci = 0; ci < c; ++ci) {
    const double* v = x.value().data() + static_cast<std::size_t>(ci) * hw;
    double s = 0.0, sl = 0.0;
    for (int i = 0; i < hw; ++i) {
      const double xc = std::max(v[i], eps);
      const double xp = std::pow(xc, pv);
      s += xp;
      sl += xp * std::log(xc);
    }
    m[ci] = s / hw;
    mlog[ci] = sl / hw;
    out[ci] = std::pow(m[ci], 1.0 / pv);
  }
  return make_op(
      std::move(out), {x, p},
      [c, hw, pv, eps, m = std::move(m), mlog = std::move(mlog)](Node& self) {
        Node& xn = *self.parents[0];
        Node& pn = *self.parents[1];
        if (xn.requires_grad) {
          Tensor& g = xn.grad_buffer();
          for (int ci = 0; ci < c; ++ci) {
            // dy/dx_i = y / (m * N) * x_i^(p-1) on the unclamped region
            const double coeff = self.grad[ci] * self.value[ci] / (m[ci] * hw);
            const double* v =
                xn.value.data() + static_cast<std::size_t>(ci) * hw;
            double* gv = g.data() + static_cast<std::size_t>(ci) * hw;
            for (int i = 0; i < hw; ++i)
              if (v[i] > eps) gv[i] += coeff * std::pow(v[i], pv - 1.0);
          }
        }
        if (pn.requires_grad) {
          double dp = 0.0;
          for (int ci = 0; ci < c; ++ci) {
            const double y = self.value[ci];
            dp += self.grad[ci] * y *
                  (-std::log(m[ci]) / (pv * pv) + mlog[ci] / (pv * m[ci]));
          }
          pn.grad_buffer()[0] += dp;
        }
      });
}

Var l2_normalize(const Var& x) {
  check_rank(x, 1, "l2_normalize");
  const double norm = std::max(
      CMapVec(x.value().data(), static_cast<Eigen::Index>(x.value().size()))
          .norm(),
      1e-12);
  Tensor out = x.value();
  out *= 1.0 / norm;
  return make_op(std::move(out), {x}, [norm](Node& self) {
    const auto n = static_cast<Eigen::Index>(self.value.size());
    CMapVec y(self.value.data(), n), g(self.grad.data(), n);
    const double yg = y.dot(g);
    MapVec(self.parents[0]->grad_buffer().data(), n) += (g - y * yg) / norm;
  });
}

Var slice(const Var& x, int offset, int length) {
  check_rank(x, 1, "slice");
  require(offset >= 0 && length >= 0 &&
              static_cast<std::size_t>(offset + length) <= x.value().size(),
          "slice: range out of bounds for " + shape_str(x.shape()));
  Tensor out(Shape{length});
  std::copy(x.value().data() + offset, x.value().data() + offset + length,
            out.data());
  return make_op(std::move(out), {x}, [offset, length](Node& self) {
    Tensor& g = self.parents[0]->grad_buffer();
    for (int i = 0; i < length; ++i) g[offset + i] += self.grad[i];
  });
}

}  // namespace mduit::ag
