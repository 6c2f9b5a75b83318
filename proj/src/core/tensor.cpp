#include "core/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <unordered_set>

#include "core/gemm.hpp"

namespace mcf::ad {

int64_t shape_numel(const Shape& s) {
  int64_t n = 1;
  for (int64_t d : s) n *= d;
  return n;
}

std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "(";
  for (size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << ")";
  return os.str();
}

namespace {

[[noreturn]] void fail(const char* op, const std::string& msg) {
  throw ShapeError(std::string(op) + ": " + msg);
}

void require(bool cond, const char* op, const std::string& msg) {
  if (!cond) fail(op, msg);
}

// Creates the output node; parents are retained for ownership whenever the
// result participates in a graph, and backward_fn is attached by the caller.
Tensor make_op(Shape shape, const char* op, const std::vector<Tensor>& parents) {
  auto n = std::make_shared<Node>();
  n->shape = std::move(shape);
  n->value.assign(static_cast<size_t>(shape_numel(n->shape)), 0.0);
  n->op = op;
  for (const auto& p : parents) {
    if (p.defined() && p.node()->requires_grad) {
      n->requires_grad = true;
      break;
    }
  }
  if (n->requires_grad)
    for (const auto& p : parents)
      if (p.defined()) n->parents.push_back(p.node());
  return Tensor(n);
}

bool same_shape(const Tensor& a, const Tensor& b) { return a.shape() == b.shape(); }

}  // namespace

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  return from_values(std::move(shape), {}, requires_grad);
}

Tensor Tensor::full(Shape shape, double v, bool requires_grad) {
  const auto n = static_cast<size_t>(shape_numel(shape));
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->value.assign(n, v);
  node->requires_grad = requires_grad;
  return Tensor(node);
}

Tensor Tensor::from_values(Shape shape, std::vector<double> values, bool requires_grad) {
  const auto n = static_cast<size_t>(shape_numel(shape));
  if (values.empty()) values.assign(n, 0.0);
  if (values.size() != n)
    throw ShapeError("tensor: value count " + std::to_string(values.size()) + " does not match shape " +
                     shape_str(shape));
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->value = std::move(values);
  node->requires_grad = requires_grad;
  return Tensor(node);
}

Tensor Tensor::scalar_value(double v) { return from_values({1}, {v}); }

const std::vector<double>& Tensor::grad() const {
  node_->ensure_grad();
  return node_->grad;
}

double Tensor::scalar() const {
  if (numel() != 1) throw ShapeError("scalar(): tensor has shape " + shape_str(shape()));
  return node_->value[0];
}

// ---------------------------------------------------------------------------
// element-wise
// ---------------------------------------------------------------------------

namespace {

template <typename BinFwd, typename BinBwd>
Tensor binary_elementwise(const Tensor& a, const Tensor& b, const char* name, BinFwd fwd, BinBwd bwd) {
  require(same_shape(a, b), name, "shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  Tensor out = make_op(a.shape(), name, {a, b});
  const auto& av = a.values();
  const auto& bv = b.values();
  auto& ov = out.values();
  for (size_t i = 0; i < ov.size(); ++i) ov[i] = fwd(av[i], bv[i]);
  if (out.requires_grad()) {
    Node* na = a.node().get();
    Node* nb = b.node().get();
    Node* no = out.node().get();
    no->backward_fn = [na, nb, no, bwd]() {
      if (na->requires_grad) na->ensure_grad();
      if (nb->requires_grad) nb->ensure_grad();
      for (size_t i = 0; i < no->grad.size(); ++i) {
        double da, db;
        bwd(na->value[i], nb->value[i], no->value[i], no->grad[i], da, db);
        if (na->requires_grad) na->grad[i] += da;
        if (nb->requires_grad) nb->grad[i] += db;
      }
    };
  }
  return out;
}

template <typename UnFwd, typename UnBwd>
Tensor unary_elementwise(const Tensor& x, const char* name, UnFwd fwd, UnBwd bwd) {
  Tensor out = make_op(x.shape(), name, {x});
  const auto& xv = x.values();
  auto& ov = out.values();
  for (size_t i = 0; i < ov.size(); ++i) ov[i] = fwd(xv[i]);
  if (out.requires_grad()) {
    Node* nx = x.node().get();
    Node* no = out.node().get();
    no->backward_fn = [nx, no, bwd]() {
      nx->ensure_grad();
      for (size_t i = 0; i < no->grad.size(); ++i) nx->grad[i] += bwd(nx->value[i], no->value[i]) * no->grad[i];
    };
  }
  return out;
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  return binary_elementwise(
      a, b, "add", [](double x, double y) { return x + y; },
      [](double, double, double, double g, double& da, double& db) {
        da = g;
        db = g;
      });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary_elementwise(
      a, b, "subtract", [](double x, double y) { return x - y; },
      [](double, double, double, double g, double& da, double& db) {
        da = g;
        db = -g;
      });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary_elementwise(
      a, b, "multiply", [](double x, double y) { return x * y; },
      [](double x, double y, double, double g, double& da, double& db) {
        da = g * y;
        db = g * x;
      });
}

Tensor div(const Tensor& a, const Tensor& b) {
  return binary_elementwise(
      a, b, "divide", [](double x, double y) { return x / y; },
      [](double x, double y, double, double g, double& da, double& db) {
        da = g / y;
        db = -g * x / (y * y);
      });
}

Tensor add_scalar(const Tensor& a, double s) {
  return unary_elementwise(
      a, "add_scalar", [s](double x) { return x + s; }, [](double, double) { return 1.0; });
}

Tensor mul_scalar(const Tensor& a, double s) {
  return unary_elementwise(
      a, "mul_scalar", [s](double x) { return x * s; }, [s](double, double) { return s; });
}

Tensor relu(const Tensor& x) {
  return unary_elementwise(
      x, "relu", [](double v) { return v > 0.0 ? v : 0.0; },
      [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

Tensor gelu(const Tensor& x) {
  // Exact formulation: x * Phi(x).
  return unary_elementwise(
      x, "gelu", [](double v) { return 0.5 * v * (1.0 + std::erf(v * M_SQRT1_2)); },
      [](double v, double) {
        const double cdf = 0.5 * (1.0 + std::erf(v * M_SQRT1_2));
        const double pdf = std::exp(-0.5 * v * v) / std::sqrt(2.0 * M_PI);
        return cdf + v * pdf;
      });
}

Tensor sigmoid(const Tensor& x) {
  return unary_elementwise(
      x, "sigmoid", [](double v) { return 1.0 / (1.0 + std::exp(-v)); },
      [](double, double y) { return y * (1.0 - y); });
}

Tensor tanh(const Tensor& x) {
  return unary_elementwise(
      x, "tanh", [](double v) { return std::tanh(v); }, [](double, double y) { return 1.0 - y * y; });
}

Tensor exp(const Tensor& x) {
  return unary_elementwise(
      x, "exp", [](double v) { return std::exp(v); }, [](double, double y) { return y; });
}

Tensor log(const Tensor& x) {
  return unary_elementwise(
      x, "log", [](double v) { return std::log(v); }, [](double v, double) { return 1.0 / v; });
}

// ---------------------------------------------------------------------------
// linear algebra
// ---------------------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  require(a.ndim() == 2, "matmul", "lhs must be 2-D, got " + shape_str(a.shape()));
  require(b.ndim() == 2 || b.ndim() == 1, "matmul", "rhs must be 1-D or 2-D, got " + shape_str(b.shape()));
  const int64_t m = a.dim(0);
  const int64_t k = a.dim(1);
  const bool vec = b.ndim() == 1;
  const int64_t kb = b.dim(0);
  const int64_t n = vec ? 1 : b.dim(1);
  require(k == kb, "matmul", "inner dimensions differ: " + shape_str(a.shape()) + " x " + shape_str(b.shape()));

  Tensor out = make_op(vec ? Shape{m} : Shape{m, n}, "matmul", {a, b});
  gemm_nn(m, k, n, a.values().data(), b.values().data(), out.values().data(), false);

  if (out.requires_grad()) {
    Node* na = a.node().get();
    Node* nb = b.node().get();
    Node* no = out.node().get();
    no->backward_fn = [na, nb, no, m, k, n]() {
      if (na->requires_grad) {
        na->ensure_grad();
        // dA += dC * B^T
        gemm_nt(m, n, k, no->grad.data(), nb->value.data(), na->grad.data(), true);
      }
      if (nb->requires_grad) {
        nb->ensure_grad();
        // dB += A^T * dC
        gemm_tn(m, k, n, na->value.data(), no->grad.data(), nb->grad.data(), true);
      }
    };
  }
  return out;
}

Tensor transpose(const Tensor& x) {
  require(x.ndim() == 2, "transpose", "input must be 2-D, got " + shape_str(x.shape()));
  const int64_t m = x.dim(0), n = x.dim(1);
  Tensor out = make_op({n, m}, "transpose", {x});
  const auto& xv = x.values();
  auto& ov = out.values();
  for (int64_t i = 0; i < m; ++i)
    for (int64_t j = 0; j < n; ++j) ov[j * m + i] = xv[i * n + j];
  if (out.requires_grad()) {
    Node* nx = x.node().get();
    Node* no = out.node().get();
    no->backward_fn = [nx, no, m, n]() {
      nx->ensure_grad();
      for (int64_t i = 0; i < m; ++i)
        for (int64_t j = 0; j < n; ++j) nx->grad[i * n + j] += no->grad[j * m + i];
    };
  }
  return out;
}

Tensor add_row_bias(const Tensor& x, const Tensor& bias) {
  require(x.ndim() == 2, "add_row_bias", "input must be 2-D, got " + shape_str(x.shape()));
  require(bias.ndim() == 1 && bias.dim(0) == x.dim(1), "add_row_bias",
          "bias " + shape_str(bias.shape()) + " does not match columns of " + shape_str(x.shape()));
  const int64_t m = x.dim(0), n = x.dim(1);
  Tensor out = make_op(x.shape(), "add_row_bias", {x, bias});
  const auto& xv = x.values();
  const auto& bv = bias.values();
  auto& ov = out.values();
  for (int64_t i = 0; i < m; ++i)
    for (int64_t j = 0; j < n; ++j) ov[i * n + j] = xv[i * n + j] + bv[j];
  if (out.requires_grad()) {
    Node* nx = x.node().get();
    Node* nb = bias.node().get();
    Node* no = out.node().get();
    no->backward_fn = [nx, nb, no, m, n]() {
      if (nx->requires_grad) {
        nx->ensure_grad();
        for (size_t i = 0; i < no->grad.size(); ++i) nx->grad[i] += no->grad[i];
      }
      if (nb->requires_grad) {
        nb->ensure_grad();
        for (int64_t i = 0; i < m; ++i)
          for (int64_t j = 0; j < n; ++j) nb->grad[j] += no->grad[i * n + j];
      }
    };
  }
  return out;
}

// ---------------------------------------------------------------------------
// convolutions
// ---------------------------------------------------------------------------

namespace {

void im2col2d(const std::vector<double>& x, int64_t cin, int64_t h, int64_t w, int64_t kh, int64_t kw, int64_t stride,
              int64_t pad, int64_t oh, int64_t ow, std::vector<double>& col) {
  col.assign(static_cast<size_t>(cin * kh * kw * oh * ow), 0.0);
  const int64_t ohow = oh * ow;
  for (int64_t ci = 0; ci < cin; ++ci) {
    for (int64_t ki = 0; ki < kh; ++ki) {
      for (int64_t kj = 0; kj < kw; ++kj) {
        double* crow = col.data() + ((ci * kh + ki) * kw + kj) * ohow;
        for (int64_t oy = 0; oy < oh; ++oy) {
          const int64_t iy = oy * stride + ki - pad;
          if (iy < 0 || iy >= h) continue;
          const double* xrow = x.data() + (ci * h + iy) * w;
          for (int64_t ox = 0; ox < ow; ++ox) {
            const int64_t ix = ox * stride + kj - pad;
            if (ix < 0 || ix >= w) continue;
            crow[oy * ow + ox] = xrow[ix];
          }
        }
      }
    }
  }
}

void col2im2d(const std::vector<double>& col, int64_t cin, int64_t h, int64_t w, int64_t kh, int64_t kw,
              int64_t stride, int64_t pad, int64_t oh, int64_t ow, std::vector<double>& dx) {
  const int64_t ohow = oh * ow;
  for (int64_t ci = 0; ci < cin; ++ci) {
    for (int64_t ki = 0; ki < kh; ++ki) {
      for (int64_t kj = 0; kj < kw; ++kj) {
        const double* crow = col.data() + ((ci * kh + ki) * kw + kj) * ohow;
        for (int64_t oy = 0; oy < oh; ++oy) {
          const int64_t iy = oy * stride + ki - pad;
          if (iy < 0 || iy >= h) continue;
          double* xrow = dx.data() + (ci * h + iy) * w;
          for (int64_t ox = 0; ox < ow; ++ox) {
            const int64_t ix = ox * stride + kj - pad;
            if (ix < 0 || ix >= w) continue;
            xrow[ix] += crow[oy * ow + ox];
          }
        }
      }
    }
  }
}

}  // namespace

Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& bias, int stride, int pad) {
  require(x.ndim() == 3, "conv2d", "input must be [cin,h,w], got " + shape_str(x.shape()));
  require(w.ndim() == 4, "conv2d", "weight must be [cout,cin,kh,kw], got " + shape_str(w.shape()));
  require(stride >= 1 && pad >= 0, "conv2d", "stride must be >= 1 and pad >= 0");
  const int64_t cin = x.dim(0), h = x.dim(1), ww = x.dim(2);
  const int64_t cout = w.dim(0), kh = w.dim(2), kw = w.dim(3);
  require(w.dim(1) == cin, "conv2d",
          "channel mismatch: input " + shape_str(x.shape()) + " vs weight " + shape_str(w.shape()));
  if (bias.defined())
    require(bias.ndim() == 1 && bias.dim(0) == cout, "conv2d", "bias must be [cout], got " + shape_str(bias.shape()));
  const int64_t oh = (h + 2 * pad - kh) / stride + 1;
  const int64_t ow = (ww + 2 * pad - kw) / stride + 1;
  require(h + 2 * pad >= kh && ww + 2 * pad >= kw, "conv2d",
          "kernel larger than padded input: " + shape_str(x.shape()) + " vs " + shape_str(w.shape()));

  Tensor out = make_op({cout, oh, ow}, "conv2d", {x, w, bias});
  std::vector<double> col;
  im2col2d(x.values(), cin, h, ww, kh, kw, stride, pad, oh, ow, col);
  gemm_nn(cout, cin * kh * kw, oh * ow, w.values().data(), col.data(), out.values().data(), false);
  if (bias.defined()) {
    auto& ov = out.values();
    const auto& bv = bias.values();
    for (int64_t co = 0; co < cout; ++co)
      for (int64_t i = 0; i < oh * ow; ++i) ov[co * oh * ow + i] += bv[co];
  }

  if (out.requires_grad()) {
    Node* nx = x.node().get();
    Node* nw = w.node().get();
    Node* nb = bias.defined() ? bias.node().get() : nullptr;
    Node* no = out.node().get();
    const int64_t s = stride, p = pad;
    no->backward_fn = [nx, nw, nb, no, cin, h, ww, cout, kh, kw, s, p, oh, ow]() {
      const int64_t ohow = oh * ow;
      // The im2col buffer is recomputed here rather than cached on the node;
      // it is the largest intermediate in the whole graph.
      std::vector<double> col;
      im2col2d(nx->value, cin, h, ww, kh, kw, s, p, oh, ow, col);
      if (nw->requires_grad) {
        nw->ensure_grad();
        gemm_nt(cout, ohow, cin * kh * kw, no->grad.data(), col.data(), nw->grad.data(), true);
      }
      if (nx->requires_grad) {
        nx->ensure_grad();
        std::vector<double> dcol(static_cast<size_t>(cin * kh * kw * ohow));
        gemm_tn(cout, cin * kh * kw, ohow, nw->value.data(), no->grad.data(), dcol.data(), false);
        col2im2d(dcol, cin, h, ww, kh, kw, s, p, oh, ow, nx->grad);
      }
      if (nb && nb->requires_grad) {
        nb->ensure_grad();
        for (int64_t co = 0; co < cout; ++co) {
          double acc = 0.0;
          for (int64_t i = 0; i < ohow; ++i) acc += no->grad[co * ohow + i];
          nb->grad[co] += acc;
        }
      }
    };
  }
  return out;
}

namespace {

void im2col1d(const std::vector<double>& x, int64_t cin, int64_t len, int64_t k, int64_t stride, int64_t pad,
              int64_t olen, std::vector<double>& col) {
  col.assign(static_cast<size_t>(cin * k * olen), 0.0);
  for (int64_t ci = 0; ci < cin; ++ci) {
    const double* xrow = x.data() + ci * len;
    for (int64_t kj = 0; kj < k; ++kj) {
      double* crow = col.data() + (ci * k + kj) * olen;
      for (int64_t ol = 0; ol < olen; ++ol) {
        const int64_t ix = ol * stride + kj - pad;
        if (ix >= 0 && ix < len) crow[ol] = xrow[ix];
      }
    }
  }
}

void col2im1d(const std::vector<double>& col, int64_t cin, int64_t len, int64_t k, int64_t stride, int64_t pad,
              int64_t olen, std::vector<double>& dx) {
  for (int64_t ci = 0; ci < cin; ++ci) {
    double* xrow = dx.data() + ci * len;
    for (int64_t kj = 0; kj < k; ++kj) {
      const double* crow = col.data() + (ci * k + kj) * olen;
      for (int64_t ol = 0; ol < olen; ++ol) {
        const int64_t ix = ol * stride + kj - pad;
        if (ix >= 0 && ix < len) xrow[ix] += crow[ol];
      }
    }
  }
}

}  // namespace

Tensor conv1d(const Tensor& x, const Tensor& w, const Tensor& bias, int stride, int pad) {
  require(x.ndim() == 2, "conv1d", "input must be [cin,len], got " + shape_str(x.shape()));
  require(w.ndim() == 3, "conv1d", "weight must be [cout,cin,k], got " + shape_str(w.shape()));
  require(stride >= 1 && pad >= 0, "conv1d", "stride must be >= 1 and pad >= 0");
  const int64_t cin = x.dim(0), len = x.dim(1);
  const int64_t cout = w.dim(0), k = w.dim(2);
  require(w.dim(1) == cin, "conv1d",
          "channel mismatch: input " + shape_str(x.shape()) + " vs weight " + shape_str(w.shape()));
  if (bias.defined())
    require(bias.ndim() == 1 && bias.dim(0) == cout, "conv1d", "bias must be [cout], got " + shape_str(bias.shape()));
  require(len + 2 * pad >= k, "conv1d", "kernel larger than padded input");
  const int64_t olen = (len + 2 * pad - k) / stride + 1;

  Tensor out = make_op({cout, olen}, "conv1d", {x, w, bias});
  std::vector<double> col;
  im2col1d(x.values(), cin, len, k, stride, pad, olen, col);
  gemm_nn(cout, cin * k, olen, w.values().data(), col.data(), out.values().data(), false);
  if (bias.defined()) {
    auto& ov = out.values();
    const auto& bv = bias.values();
    for (int64_t co = 0; co < cout; ++co)
      for (int64_t i = 0; i < olen; ++i) ov[co * olen + i] += bv[co];
  }

  if (out.requires_grad()) {
    Node* nx = x.node().get();
    Node* nw = w.node().get();
    Node* nb = bias.defined() ? bias.node().get() : nullptr;
    Node* no = out.node().get();
    const int64_t s = stride, p = pad;
    no->backward_fn = [nx, nw, nb, no, cin, len, cout, k, s, p, olen]() {
      std::vector<double> col;
      im2col1d(nx->value, cin, len, k, s, p, olen, col);
      if (nw->requires_grad) {
        nw->ensure_grad();
        gemm_nt(cout, olen, cin * k, no->grad.data(), col.data(), nw->grad.data(), true);
      }
      if (nx->requires_grad) {
        nx->ensure_grad();
        std::vector<double> dcol(static_cast<size_t>(cin * k * olen));
        gemm_tn(cout, cin * k, olen, nw->value.data(), no->grad.data(), dcol.data(), false);
        col2im1d(dcol, cin, len, k, s, p, olen, nx->grad);
      }
      if (nb && nb->requires_grad) {
        nb->ensure_grad();
        for (int64_t co = 0; co < cout; ++co) {
          double acc = 0.0;
          for (int64_t i = 0; i < olen; ++i) acc += no->grad[co * olen + i];
          nb->grad[co] += acc;
        }
      }
    };
  }
  return out;
}

// ---------------------------------------------------------------------------
// reductions and pooling
// ---------------------------------------------------------------------------

Tensor sum(const Tensor& x) {
  Tensor out = make_op({1}, "sum", {x});
  double acc = 0.0;
  for (double v : x.values()) acc += v;
  out.values()[0] = acc;
  if (out.requires_grad()) {
    Node* nx = x.node().get();
    Node* no = out.node().get();
    no->backward_fn = [nx, no]() {
      nx->ensure_grad();
      const double g = no->grad[0];
      for (auto& gv : nx->grad) gv += g;
    };
  }
  return out;
}

Tensor mean(const Tensor& x) {
  require(x.numel() > 0, "mean", "empty tensor");
  Tensor out = make_op({1}, "mean", {x});
  double acc = 0.0;
  for (double v : x.values()) acc += v;
  const double inv = 1.0 / static_cast<double>(x.numel());
  out.values()[0] = acc * inv;
  if (out.requires_grad()) {
    Node* nx = x.node().get();
    Node* no = out.node().get();
    no->backward_fn = [nx, no, inv]() {
      nx->ensure_grad();
      const double g = no->grad[0] * inv;
      for (auto& gv : nx->grad) gv += g;
    };
  }
  return out;
}

Tensor mean_axis(const Tensor& x, int axis) {
  require(x.ndim() == 2, "mean_axis", "input must be 2-D, got " + shape_str(x.shape()));
  require(axis == 0 || axis == 1, "mean_axis", "axis must be 0 or 1");
  const int64_t m = x.dim(0), n = x.dim(1);
  const int64_t out_len = axis == 0 ? n : m;
  Tensor out = make_op({out_len}, "mean_axis", {x});
  const auto& xv = x.values();
  auto& ov = out.values();
  if (axis == 0) {
    for (int64_t i = 0; i < m; ++i)
      for (int64_t j = 0; j < n; ++j) ov[j] += xv[i * n + j];
    for (auto& v : ov) v /= static_cast<double>(m);
  } else {
    for (int64_t i = 0; i < m; ++i) {
      double acc = 0.0;
      for (int64_t j = 0; j < n; ++j) acc += xv[i * n + j];
      ov[i] = acc / static_cast<double>(n);
    }
  }
  if (out.requires_grad()) {
    Node* nx = x.node().get();
    Node* no = out.node().get();
    no->backward_fn = [nx, no, m, n, axis]() {
      nx->ensure_grad();
      if (axis == 0) {
        for (int64_t i = 0; i < m; ++i)
          for (int64_t j = 0; j < n; ++j) nx->grad[i * n + j] += no->grad[j] / static_cast<double>(m);
      } else {
        for (int64_t i = 0; i < m; ++i)
          for (int64_t j = 0; j < n; ++j) nx->grad[i * n + j] += no->grad[i] / static_cast<double>(n);
      }
    };
  }
  return out;
}

Tensor max_pool2d(const Tensor& x, int k, int stride) {
  require(x.ndim() == 3, "max_pool2d", "input must be [c,h,w], got " + shape_str(x.shape()));
  require(k >= 1 && stride >= 1, "max_pool2d", "kernel and stride must be >= 1");
  const int64_t c = x.dim(0), h = x.dim(1), w = x.dim(2);
  require(h >= k && w >= k, "max_pool2d", "kernel larger than input " + shape_str(x.shape()));
  const int64_t oh = (h - k) / stride + 1;
  const int64_t ow = (w - k) / stride + 1;
  Tensor out = make_op({c, oh, ow}, "max_pool2d", {x});
  const auto& xv = x.values();
  auto& ov = out.values();
  std::vector<int64_t> argmax(static_cast<size_t>(c * oh * ow));
  for (int64_t ci = 0; ci < c; ++ci) {
    for (int64_t oy = 0; oy < oh; ++oy) {
      for (int64_t ox = 0; ox < ow; ++ox) {
        int64_t best = (ci * h + oy * stride) * w + ox * stride;
        double bv = xv[best];
        for (int64_t ky = 0; ky < k; ++ky) {
          for (int64_t kx = 0; kx < k; ++kx) {
            const int64_t idx = (ci * h + oy * stride + ky) * w + ox * stride + kx;
            if (xv[idx] > bv) {  // strict: ties keep the first in scan order
              bv = xv[idx];
              best = idx;
            }
          }
        }
        const int64_t o = (ci * oh + oy) * ow + ox;
        ov[o] = bv;
        argmax[static_cast<size_t>(o)] = best;
      }
    }
  }
  if (out.requires_grad()) {
    Node* nx = x.node().get();
    Node* no = out.node().get();
    no->backward_fn = [nx, no, argmax = std::move(argmax)]() {
      nx->ensure_grad();
      for (size_t i = 0; i < no->grad.size(); ++i) nx->grad[static_cast<size_t>(argmax[i])] += no->grad[i];
    };
  }
  return out;
}

Tensor global_avg_pool(const Tensor& x) {
  require(x.ndim() == 3, "global_avg_pool", "input must be [c,h,w], got " + shape_str(x.shape()));
  const int64_t c = x.dim(0), hw = x.dim(1) * x.dim(2);
  Tensor out = make_op({c}, "global_avg_pool", {x});
  const auto& xv = x.values();
  auto& ov = out.values();
  for (int64_t ci = 0; ci < c; ++ci) {
    double acc = 0.0;
    for (int64_t i = 0; i < hw; ++i) acc += xv[ci * hw + i];
    ov[ci] = acc / static_cast<double>(hw);
  }
  if (out.requires_grad()) {
    Node* nx = x.node().get();
    Node* no = out.node().get();
    no->backward_fn = [nx, no, c, hw]() {
      nx->ensure_grad();
      for (int64_t ci = 0; ci < c; ++ci) {
        const double g = no->grad[ci] / static_cast<double>(hw);
        for (int64_t i = 0; i < hw; ++i) nx->grad[ci * hw + i] += g;
      }
    };
  }
  return out;
}

// ---------------------------------------------------------------------------
// shape manipulation
// ---------------------------------------------------------------------------

namespace {

// Splits a shape at `axis` into (outer, axis_len, inner) strides.
void axis_split(const Shape& s, int axis, int64_t& outer, int64_t& len, int64_t& inner) {
  outer = 1;
  inner = 1;
  for (int i = 0; i < axis; ++i) outer *= s[static_cast<size_t>(i)];
  len = s[static_cast<size_t>(axis)];
  for (size_t i = static_cast<size_t>(axis) + 1; i < s.size(); ++i) inner *= s[i];
}

}  // namespace

Tensor concat(const std::vector<Tensor>& xs, int axis) {
  require(!xs.empty(), "concat", "no inputs");
  const int nd = xs[0].ndim();
  require(axis >= 0 && axis < nd, "concat", "axis out of range");
  Shape out_shape = xs[0].shape();
  int64_t total = 0;
  for (const auto& x : xs) {
    require(x.ndim() == nd, "concat", "rank mismatch");
    for (int d = 0; d < nd; ++d)
      if (d != axis)
        require(x.dim(d) == out_shape[static_cast<size_t>(d)], "concat",
                "shape mismatch at axis " + std::to_string(d) + ": " + shape_str(x.shape()));
    total += x.dim(axis);
  }
  out_shape[static_cast<size_t>(axis)] = total;
  Tensor out = make_op(out_shape, "concat", xs);

  int64_t outer, len, inner;
  axis_split(out_shape, axis, outer, len, inner);
  auto& ov = out.values();
  std::vector<int64_t> offsets(xs.size());
  {
    int64_t off = 0;
    for (size_t i = 0; i < xs.size(); ++i) {
      offsets[i] = off;
      off += xs[i].dim(axis);
    }
  }
  for (size_t xi = 0; xi < xs.size(); ++xi) {
    const auto& xv = xs[xi].values();
    const int64_t xlen = xs[xi].dim(axis);
    for (int64_t o = 0; o < outer; ++o)
      for (int64_t l = 0; l < xlen; ++l)
        std::copy_n(xv.data() + (o * xlen + l) * inner, inner,
                    ov.data() + (o * len + offsets[xi] + l) * inner);
  }
  if (out.requires_grad()) {
    Node* no = out.node().get();
    std::vector<Node*> parents;
    std::vector<int64_t> xlens;
    for (const auto& x : xs) {
      parents.push_back(x.node().get());
      xlens.push_back(x.dim(axis));
    }
    no->backward_fn = [no, parents, xlens, offsets, outer, len, inner]() {
      for (size_t xi = 0; xi < parents.size(); ++xi) {
        if (!parents[xi]->requires_grad) continue;
        parents[xi]->ensure_grad();
        for (int64_t o = 0; o < outer; ++o)
          for (int64_t l = 0; l < xlens[xi]; ++l) {
            const double* src = no->grad.data() + (o * len + offsets[xi] + l) * inner;
            double* dst = parents[xi]->grad.data() + (o * xlens[xi] + l) * inner;
            for (int64_t i = 0; i < inner; ++i) dst[i] += src[i];
          }
      }
    };
  }
  return out;
}

Tensor slice(const Tensor& x, int axis, int64_t start, int64_t end) {
  require(axis >= 0 && axis < x.ndim(), "slice", "axis out of range");
  require(start >= 0 && end > start && end <= x.dim(axis), "slice",
          "range [" + std::to_string(start) + "," + std::to_string(end) + ") invalid for " + shape_str(x.shape()));
  Shape out_shape = x.shape();
  out_shape[static_cast<size_t>(axis)] = end - start;
  Tensor out = make_op(out_shape, "slice", {x});
  int64_t outer, len, inner;
  axis_split(x.shape(), axis, outer, len, inner);
  const int64_t olen = end - start;
  const auto& xv = x.values();
  auto& ov = out.values();
  for (int64_t o = 0; o < outer; ++o)
    for (int64_t l = 0; l < olen; ++l)
      std::copy_n(xv.data() + (o * len + start + l) * inner, inner, ov.data() + (o * olen + l) * inner);
  if (out.requires_grad()) {
    Node* nx = x.node().get();
    Node* no = out.node().get();
    no->backward_fn = [nx, no, outer, len, inner, start, olen]() {
      nx->ensure_grad();
      for (int64_t o = 0; o < outer; ++o)
        for (int64_t l = 0; l < olen; ++l) {
          const double* src = no->grad.data() + (o * olen + l) * inner;
          double* dst = nx->grad.data() + (o * len + start + l) * inner;
          for (int64_t i = 0; i < inner; ++i) dst[i] += src[i];
        }
    };
  }
  return out;
}

Tensor stride_subsample(const Tensor& x, int64_t factor) {
  require(factor >= 1, "stride_subsample", "factor must be >= 1");
  require(x.ndim() >= 1 && x.dim(0) >= 1, "stride_subsample", "input must have a non-empty leading axis");
  const int64_t rows = x.dim(0);
  const int64_t orows = (rows + factor - 1) / factor;
  int64_t inner = 1;
  for (int d = 1; d < x.ndim(); ++d) inner *= x.dim(d);
  Shape out_shape = x.shape();
  out_shape[0] = orows;
  Tensor out = make_op(out_shape, "stride_subsample", {x});
  const auto& xv = x.values();
  auto& ov = out.values();
  for (int64_t r = 0; r < orows; ++r) std::copy_n(xv.data() + r * factor * inner, inner, ov.data() + r * inner);
  if (out.requires_grad()) {
    Node* nx = x.node().get();
    Node* no = out.node().get();
    no->backward_fn = [nx, no, orows, factor, inner]() {
      nx->ensure_grad();
      for (int64_t r = 0; r < orows; ++r) {
        const double* src = no->grad.data() + r * inner;
        double* dst = nx->grad.data() + r * factor * inner;
        for (int64_t i = 0; i < inner; ++i) dst[i] += src[i];
      }
    };
  }
  return out;
}

Tensor reshape(const Tensor& x, Shape shape) {
  require(shape_numel(shape) == x.numel(), "reshape",
          "cannot reshape " + shape_str(x.shape()) + " to " + shape_str(shape));
  Tensor out = make_op(std::move(shape), "reshape", {x});
  out.values() = x.values();
  if (out.requires_grad()) {
    Node* nx = x.node().get();
    Node* no = out.node().get();
    no->backward_fn = [nx, no]() {
      nx->ensure_grad();
      for (size_t i = 0; i < no->grad.size(); ++i) nx->grad[i] += no->grad[i];
    };
  }
  return out;
}

// ---------------------------------------------------------------------------
// normalization, softmax, attention pieces
// ---------------------------------------------------------------------------

Tensor group_norm(const Tensor& x, int groups, const Tensor& gamma, const Tensor& beta, double eps) {
  require(x.ndim() >= 2, "group_norm", "input must have a channel axis plus spatial axes");
  const int64_t c = x.dim(0);
  require(groups >= 1 && c % groups == 0, "group_norm",
          "channels " + std::to_string(c) + " not divisible by groups " + std::to_string(groups));
  require(gamma.ndim() == 1 && gamma.dim(0) == c && beta.ndim() == 1 && beta.dim(0) == c, "group_norm",
          "scale/shift must be [channels]");
  int64_t spatial = 1;
  for (int d = 1; d < x.ndim(); ++d) spatial *= x.dim(d);
  const int64_t cpg = c / groups;
  const int64_t glen = cpg * spatial;

  Tensor out = make_op(x.shape(), "group_norm", {x, gamma, beta});
  const auto& xv = x.values();
  const auto& gv = gamma.values();
  const auto& bv = beta.values();
  auto& ov = out.values();
  std::vector<double> xhat(xv.size());
  std::vector<double> inv_std(static_cast<size_t>(groups));
  for (int64_t g = 0; g < groups; ++g) {
    const int64_t base = g * glen;
    double m = 0.0;
    for (int64_t i = 0; i < glen; ++i) m += xv[base + i];
    m /= static_cast<double>(glen);
    double var = 0.0;
    for (int64_t i = 0; i < glen; ++i) {
      const double d = xv[base + i] - m;
      var += d * d;
    }
    var /= static_cast<double>(glen);
    const double istd = 1.0 / std::sqrt(var + eps);
    inv_std[static_cast<size_t>(g)] = istd;
    for (int64_t i = 0; i < glen; ++i) {
      const double xh = (xv[base + i] - m) * istd;
      xhat[base + i] = xh;
      const int64_t ch = g * cpg + i / spatial;
      ov[base + i] = gv[ch] * xh + bv[ch];
    }
  }
  if (out.requires_grad()) {
    Node* nx = x.node().get();
    Node* ng = gamma.node().get();
    Node* nb = beta.node().get();
    Node* no = out.node().get();
    no->backward_fn = [nx, ng, nb, no, groups, cpg, spatial, glen, xhat = std::move(xhat),
                       inv_std = std::move(inv_std)]() {
      if (ng->requires_grad) ng->ensure_grad();
      if (nb->requires_grad) nb->ensure_grad();
      if (nx->requires_grad) nx->ensure_grad();
      for (int64_t g = 0; g < groups; ++g) {
        const int64_t base = g * glen;
        if (ng->requires_grad || nb->requires_grad) {
          for (int64_t i = 0; i < glen; ++i) {
            const int64_t ch = g * cpg + i / spatial;
            if (ng->requires_grad) ng->grad[ch] += no->grad[base + i] * xhat[base + i];
            if (nb->requires_grad) nb->grad[ch] += no->grad[base + i];
          }
        }
        if (nx->requires_grad) {
          double mean_dxh = 0.0, mean_dxh_xh = 0.0;
          for (int64_t i = 0; i < glen; ++i) {
            const int64_t ch = g * cpg + i / spatial;
            const double dxh = no->grad[base + i] * ng->value[ch];
            mean_dxh += dxh;
            mean_dxh_xh += dxh * xhat[base + i];
          }
          mean_dxh /= static_cast<double>(glen);
          mean_dxh_xh /= static_cast<double>(glen);
          const double istd = inv_std[static_cast<size_t>(g)];
          for (int64_t i = 0; i < glen; ++i) {
            const int64_t ch = g * cpg + i / spatial;
            const double dxh = no->grad[base + i] * ng->value[ch];
            nx->grad[base + i] += istd * (dxh - mean_dxh - xhat[base + i] * mean_dxh_xh);
          }
        }
      }
    };
  }
  return out;
}

namespace {

// Rows-of-a-matrix view covering the 1-D and 2-D softmax-family cases.
struct RowView {
  int64_t rows;
  int64_t cols;
  bool column_major;  // true when axis == 0 on a 2-D tensor
  int64_t index(int64_t r, int64_t c2, int64_t n) const { return column_major ? c2 * n + r : r * n + c2; }
};

RowView row_view(const Tensor& x, int axis, const char* op) {
  require(x.ndim() == 1 || x.ndim() == 2, op, "input must be 1-D or 2-D, got " + shape_str(x.shape()));
  if (x.ndim() == 1) {
    require(axis == 0, op, "axis out of range for 1-D input");
    return {1, x.dim(0), false};
  }
  require(axis == 0 || axis == 1, op, "axis out of range");
  if (axis == 1) return {x.dim(0), x.dim(1), false};
  return {x.dim(1), x.dim(0), true};
}

}  // namespace

Tensor softmax(const Tensor& x, int axis) {
  const RowView v = row_view(x, axis, "softmax");
  const int64_t stride_n = x.ndim() == 2 ? x.dim(1) : x.dim(0);
  Tensor out = make_op(x.shape(), "softmax", {x});
  const auto& xv = x.values();
  auto& ov = out.values();
  for (int64_t r = 0; r < v.rows; ++r) {
    double mx = -std::numeric_limits<double>::infinity();
    for (int64_t c = 0; c < v.cols; ++c) mx = std::max(mx, xv[v.index(r, c, stride_n)]);
    double denom = 0.0;
    for (int64_t c = 0; c < v.cols; ++c) {
      const double e = std::exp(xv[v.index(r, c, stride_n)] - mx);
      ov[v.index(r, c, stride_n)] = e;
      denom += e;
    }
    for (int64_t c = 0; c < v.cols; ++c) ov[v.index(r, c, stride_n)] /= denom;
  }
  if (out.requires_grad()) {
    Node* nx = x.node().get();
    Node* no = out.node().get();
    no->backward_fn = [nx, no, v, stride_n]() {
      nx->ensure_grad();
      for (int64_t r = 0; r < v.rows; ++r) {
        double dotgy = 0.0;
        for (int64_t c = 0; c < v.cols; ++c) {
          const int64_t i = v.index(r, c, stride_n);
          dotgy += no->grad[i] * no->value[i];
        }
        for (int64_t c = 0; c < v.cols; ++c) {
          const int64_t i = v.index(r, c, stride_n);
          nx->grad[i] += no->value[i] * (no->grad[i] - dotgy);
        }
      }
    };
  }
  return out;
}

Tensor log_softmax(const Tensor& x, int axis) {
  const RowView v = row_view(x, axis, "log_softmax");
  const int64_t stride_n = x.ndim() == 2 ? x.dim(1) : x.dim(0);
  Tensor out = make_op(x.shape(), "log_softmax", {x});
  const auto& xv = x.values();
  auto& ov = out.values();
  for (int64_t r = 0; r < v.rows; ++r) {
    double mx = -std::numeric_limits<double>::infinity();
    for (int64_t c = 0; c < v.cols; ++c) mx = std::max(mx, xv[v.index(r, c, stride_n)]);
    double denom = 0.0;
    for (int64_t c = 0; c < v.cols; ++c) denom += std::exp(xv[v.index(r, c, stride_n)] - mx);
    const double lse = mx + std::log(denom);
    for (int64_t c = 0; c < v.cols; ++c) {
      const int64_t i = v.index(r, c, stride_n);
      ov[i] = xv[i] - lse;
    }
  }
  if (out.requires_grad()) {
    Node* nx = x.node().get();
    Node* no = out.node().get();
    no->backward_fn = [nx, no, v, stride_n]() {
      nx->ensure_grad();
      for (int64_t r = 0; r < v.rows; ++r) {
        double gsum = 0.0;
        for (int64_t c = 0; c < v.cols; ++c) gsum += no->grad[v.index(r, c, stride_n)];
        for (int64_t c = 0; c < v.cols; ++c) {
          const int64_t i = v.index(r, c, stride_n);
          nx->grad[i] += no->grad[i] - std::exp(no->value[i]) * gsum;
        }
      }
    };
  }
  return out;
}

Tensor l2_normalize(const Tensor& x, int axis) {
  const RowView v = row_view(x, axis, "l2_normalize");
  const int64_t stride_n = x.ndim() == 2 ? x.dim(1) : x.dim(0);
  Tensor out = make_op(x.shape(), "l2_normalize", {x});
  const auto& xv = x.values();
  auto& ov = out.values();
  std::vector<double> norms(static_cast<size_t>(v.rows));
  bool warned = false;
  for (int64_t r = 0; r < v.rows; ++r) {
    double ss = 0.0;
    for (int64_t c = 0; c < v.cols; ++c) {
      const double val = xv[v.index(r, c, stride_n)];
      ss += val * val;
    }
    const double nrm = std::sqrt(ss);
    norms[static_cast<size_t>(r)] = nrm;
    if (nrm == 0.0) {
      if (!warned) {
        log_warn("l2_normalize: zero vector encountered; returning zeros");
        warned = true;
      }
      continue;  // output stays zero
    }
    for (int64_t c = 0; c < v.cols; ++c) {
      const int64_t i = v.index(r, c, stride_n);
      ov[i] = xv[i] / nrm;
    }
  }
  if (out.requires_grad()) {
    Node* nx = x.node().get();
    Node* no = out.node().get();
    no->backward_fn = [nx, no, v, stride_n, norms = std::move(norms)]() {
      nx->ensure_grad();
      for (int64_t r = 0; r < v.rows; ++r) {
        const double nrm = norms[static_cast<size_t>(r)];
        if (nrm == 0.0) continue;
        double gy = 0.0;
        for (int64_t c = 0; c < v.cols; ++c) {
          const int64_t i = v.index(r, c, stride_n);
          gy += no->grad[i] * no->value[i];
        }
        for (int64_t c = 0; c < v.cols; ++c) {
          const int64_t i = v.index(r, c, stride_n);
          nx->grad[i] += (no->grad[i] - no->value[i] * gy) / nrm;
        }
      }
    };
  }
  return out;
}

LstmState lstm_cell(const Tensor& x, const Tensor& h, const Tensor& c, const Tensor& wx, const Tensor& wh,
                    const Tensor& b) {
  require(x.ndim() == 1 && h.ndim() == 1 && c.ndim() == 1, "lstm_cell", "x, h, c must be vectors");
  const int64_t hidden = h.dim(0);
  require(c.dim(0) == hidden, "lstm_cell", "cell state size mismatch");
  require(wx.ndim() == 2 && wx.dim(0) == 4 * hidden && wx.dim(1) == x.dim(0), "lstm_cell",
          "wx must be [4H,in], got " + shape_str(wx.shape()));
  require(wh.ndim() == 2 && wh.dim(0) == 4 * hidden && wh.dim(1) == hidden, "lstm_cell",
          "wh must be [4H,H], got " + shape_str(wh.shape()));
  require(b.ndim() == 1 && b.dim(0) == 4 * hidden, "lstm_cell", "bias must be [4H]");

  Tensor z = add(add(matmul(wx, x), matmul(wh, h)), b);
  Tensor gi = sigmoid(slice(z, 0, 0, hidden));
  Tensor gf = sigmoid(slice(z, 0, hidden, 2 * hidden));
  Tensor gg = tanh(slice(z, 0, 2 * hidden, 3 * hidden));
  Tensor go = sigmoid(slice(z, 0, 3 * hidden, 4 * hidden));
  Tensor c_next = add(mul(gf, c), mul(gi, gg));
  Tensor h_next = mul(go, tanh(c_next));
  return {h_next, c_next};
}

// ---------------------------------------------------------------------------
// reverse accumulation
// ---------------------------------------------------------------------------

void backward(const Tensor& loss) {
  if (!loss.defined()) throw InvalidArgument("backward: undefined tensor");
  if (loss.numel() != 1)
    throw InvalidArgument("backward: loss must be scalar, got shape " + shape_str(loss.shape()));
  Node* root = loss.node().get();
  if (!root->requires_grad) return;  // nothing tracks gradients

  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, size_t>> stack;
  stack.emplace_back(root, 0);
  visited.insert(root);
  while (!stack.empty()) {
    auto [n, idx] = stack.back();
    if (idx < n->parents.size()) {
      ++stack.back().second;
      Node* p = n->parents[idx].get();
      if (p->requires_grad && !visited.count(p)) {
        visited.insert(p);
        stack.emplace_back(p, 0);
      }
    } else {
      order.push_back(n);
      stack.pop_back();
    }
  }
  root->ensure_grad();
  root->grad[0] = 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it)
    if ((*it)->backward_fn) (*it)->backward_fn();
}

double grad_check(const std::function<Tensor(const Tensor&)>& f, Tensor x, double eps) {
  x.node()->requires_grad = true;
  x.node()->grad.clear();
  Tensor loss = f(x);
  if (loss.numel() != 1) throw InvalidArgument("grad_check: function must be scalar-valued");
  backward(loss);
  std::vector<double> analytic = x.node()->grad;
  if (analytic.empty()) analytic.assign(x.values().size(), 0.0);

  auto eval = [&]() {
    const double v = f(x).scalar();
    if (!std::isfinite(v)) throw Error("grad_check: non-finite function value");
    return v;
  };

  double max_err = 0.0;
  auto& xv = x.values();
  for (size_t i = 0; i < xv.size(); ++i) {
    const double orig = xv[i];
    xv[i] = orig + eps;
    const double fp = eval();
    xv[i] = orig - eps;
    const double fm = eval();
    xv[i] = orig;
    const double numeric = (fp - fm) / (2.0 * eps);
    if (!std::isfinite(numeric) || !std::isfinite(analytic[i]))
      throw Error("grad_check: non-finite gradient entry");
    const double err = std::abs(analytic[i] - numeric) / std::max(1.0, std::abs(numeric));
    max_err = std::max(max_err, err);
  }
  return max_err;
}

}  // namespace mcf::ad
