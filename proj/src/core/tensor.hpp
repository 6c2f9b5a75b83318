#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "core/common.hpp"

namespace mcf::ad {

using Shape = std::vector<int64_t>;

int64_t shape_numel(const Shape& s);
std::string shape_str(const Shape& s);

// One vertex of the dynamic computation graph. Values are always 64-bit;
// gradients are allocated lazily on first accumulation.
struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;
  bool requires_grad = false;
  const char* op = "leaf";
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void()> backward_fn;

  int64_t numel() const { return static_cast<int64_t>(value.size()); }
  void ensure_grad() {
    if (grad.empty()) grad.assign(value.size(), 0.0);
  }
};

class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::shared_ptr<Node> n) : node_(std::move(n)) {}

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double v, bool requires_grad = false);
  static Tensor from_values(Shape shape, std::vector<double> values, bool requires_grad = false);
  static Tensor scalar_value(double v);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  int ndim() const { return static_cast<int>(node_->shape.size()); }
  int64_t dim(int i) const { return node_->shape[static_cast<size_t>(i)]; }
  int64_t numel() const { return node_->numel(); }
  bool requires_grad() const { return node_->requires_grad; }

  std::vector<double>& values() { return node_->value; }
  const std::vector<double>& values() const { return node_->value; }
  bool has_grad() const { return !node_->grad.empty(); }
  const std::vector<double>& grad() const;
  void zero_grad() {
    if (!node_->grad.empty()) node_->grad.assign(node_->value.size(), 0.0);
  }

  double scalar() const;

  const std::shared_ptr<Node>& node() const { return node_; }

 private:
  std::shared_ptr<Node> node_;
};

// Named trainable tensor; names key the checkpoint format.
struct Parameter {
  std::string name;
  Tensor tensor;
};

// ---- element-wise and arithmetic ----
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
Tensor add_scalar(const Tensor& a, double s);
Tensor mul_scalar(const Tensor& a, double s);
Tensor relu(const Tensor& x);
Tensor gelu(const Tensor& x);
Tensor sigmoid(const Tensor& x);
Tensor tanh(const Tensor& x);
Tensor exp(const Tensor& x);
Tensor log(const Tensor& x);

// ---- linear algebra ----
// a:[m,k] b:[k,n] -> [m,n]; b may be 1-D [k] giving a 1-D [m] result.
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& x);            // 2-D
// x:[m,n] + bias:[n] broadcast over rows (the only supported broadcast).
Tensor add_row_bias(const Tensor& x, const Tensor& bias);

// ---- convolutions ----
// x:[cin,h,w] w:[cout,cin,kh,kw] bias:[cout] (optional, pass Tensor{}).
Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& bias, int stride, int pad);
// x:[cin,L] w:[cout,cin,k] bias:[cout] (optional).
Tensor conv1d(const Tensor& x, const Tensor& w, const Tensor& bias, int stride, int pad);

// ---- reductions and pooling ----
Tensor sum(const Tensor& x);    // scalar
Tensor mean(const Tensor& x);   // scalar
Tensor mean_axis(const Tensor& x, int axis);  // 2-D input
Tensor max_pool2d(const Tensor& x, int k, int stride);
Tensor global_avg_pool(const Tensor& x);      // [c,h,w] -> [c]

// ---- shape manipulation ----
Tensor concat(const std::vector<Tensor>& xs, int axis);
Tensor slice(const Tensor& x, int axis, int64_t start, int64_t end);
// Rows 0, f, 2f, ... of the leading axis.
Tensor stride_subsample(const Tensor& x, int64_t factor);
Tensor reshape(const Tensor& x, Shape shape);

// ---- normalization and attention pieces ----
// x:[c,spatial...]; per-group statistics over (channels/groups x spatial).
Tensor group_norm(const Tensor& x, int groups, const Tensor& gamma, const Tensor& beta, double eps = 1e-5);
Tensor softmax(const Tensor& x, int axis);
Tensor log_softmax(const Tensor& x, int axis);
// axis semantics: 1-D -> whole vector; 2-D axis=1 -> per row, axis=0 -> per column.
Tensor l2_normalize(const Tensor& x, int axis);

// ---- recurrent ----
struct LstmState {
  Tensor h;
  Tensor c;
};
// Gate order i,f,g,o; x:[in] h,c:[hidden]; wx:[4H,in] wh:[4H,H] b:[4H].
LstmState lstm_cell(const Tensor& x, const Tensor& h, const Tensor& c, const Tensor& wx, const Tensor& wh,
                    const Tensor& b);

// Reverse accumulation from a scalar loss over all requires_grad ancestors.
void backward(const Tensor& loss);

// Central-difference verification oracle. Returns the max over coordinates of
// |analytic - numeric| / max(1, |numeric|).
double grad_check(const std::function<Tensor(const Tensor&)>& f, Tensor x, double eps = 1e-5);

}  // namespace mcf::ad
