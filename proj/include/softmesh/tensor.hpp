#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "softmesh/real.hpp"

SOFTMESH_BEGIN_NAMESPACE

using Shape = std::vector<std::int64_t>;

std::int64_t numel_of(const Shape& shape);
std::string shape_string(const Shape& shape);

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

enum class OpKind {
  leaf,
  add,
  sub,
  mul,
  div,
  negate,
  matmul,
  conv2d,
  relu,
  tanh,
  sigmoid,
  exp,
  log,
  sum,
  mean,
  broadcast,
  reshape,
  concat,
  slice,
  softmax_cross_entropy,
  grid_sample,
  clamp,
  abs,
  softplus,
  atan2,
  // Fused kernels registered by other modules (projection, shading,
  // rasterization). They follow the same forward/backward contract.
  custom,
};

const char* op_name(OpKind kind);

struct Node;
using NodePtr = std::shared_ptr<Node>;

// Called during backward with the node whose gradient is complete. The rule
// accumulates into the grad buffers of node.inputs that require grad.
using BackwardRule = std::function<void(Node&)>;

struct Node {
  OpKind kind = OpKind::leaf;
  std::string label;
  Shape shape;
  std::vector<Real> data;
  std::vector<Real> grad;
  bool requires_grad = false;
  bool is_parameter = false;
  std::vector<NodePtr> inputs;
  BackwardRule backward;

  // Materializes grad as zeros if absent and returns it.
  std::vector<Real>& grad_buffer();
};

class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(NodePtr node) : node_(std::move(node)) {}

  static Tensor zeros(Shape shape);
  static Tensor full(Shape shape, Real value);
  static Tensor scalar(Real value);
  static Tensor from(Shape shape, std::vector<Real> values);
  // Trainable leaf; backward deposits its total derivative here.
  static Tensor parameter(Shape shape, std::vector<Real> values,
                          std::string label = {});

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::int64_t dim(std::size_t axis) const;
  std::size_t rank() const { return node_->shape.size(); }
  std::int64_t numel() const;

  std::span<const Real> data() const { return node_->data; }
  // Only leaves may be written to; used by optimizers and grad checks.
  std::span<Real> mutable_data();
  std::span<const Real> grad() const { return node_->grad; }
  bool has_grad() const { return !node_->grad.empty(); }
  void zero_grad();

  Real item() const;
  bool requires_grad() const { return node_->requires_grad; }
  bool is_parameter() const { return node_->is_parameter; }
  const std::string& label() const { return node_->label; }
  OpKind kind() const { return node_->kind; }

  // Copy of the value with no history.
  Tensor detach() const;

  const NodePtr& node() const { return node_; }

 private:
  NodePtr node_;
};

// Disables graph recording on the current thread while alive.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool grad_enabled();

// Builds a tensor produced by an operation. Records the inputs and backward
// rule only when grad mode is on and some input requires grad.
Tensor make_result(OpKind kind, Shape shape, std::vector<Real> data,
                   std::vector<Tensor> inputs, BackwardRule backward,
                   std::string label = {});

// Reverse sweep from a scalar root. Every parameter reachable from root
// accumulates d(root)/d(parameter) into its grad buffer.
void backward(const Tensor& root);

// ---------------------------------------------------------------------------
// Operations. Binary elementwise operations broadcast with numpy rules.

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
Tensor negate(const Tensor& a);
Tensor add_scalar(const Tensor& a, Real s);
Tensor mul_scalar(const Tensor& a, Real s);

// [M,K] x [K,N] -> [M,N]
Tensor matmul(const Tensor& a, const Tensor& b);

// input [N,H,W,Cin], weight [KH,KW,Cin,Cout] -> [N,Ho,Wo,Cout]
Tensor conv2d(const Tensor& input, const Tensor& weight, int stride,
              int padding);

Tensor relu(const Tensor& a);
Tensor tanh(const Tensor& a);
Tensor sigmoid(const Tensor& a);
Tensor exp(const Tensor& a);
Tensor log(const Tensor& a);
Tensor abs(const Tensor& a);
Tensor softplus(const Tensor& a);
Tensor clamp(const Tensor& a, Real lo, Real hi);
// Elementwise atan2(y, x) in radians; defined as 0 at the origin.
Tensor atan2(const Tensor& y, const Tensor& x);

Tensor sum(const Tensor& a);
Tensor sum(const Tensor& a, int axis);
Tensor mean(const Tensor& a);
Tensor mean(const Tensor& a, int axis);

Tensor broadcast_to(const Tensor& a, const Shape& shape);
Tensor reshape(const Tensor& a, Shape shape);
Tensor concat(std::span<const Tensor> parts, int axis);
Tensor concat(std::initializer_list<Tensor> parts, int axis);
// Half-open range [start, stop) along axis.
Tensor slice(const Tensor& a, int axis, std::int64_t start, std::int64_t stop);

// sum_k weight_k * -log softmax(logits_k)[label_k]; logits [K,C].
Tensor softmax_cross_entropy(const Tensor& logits,
                             std::span<const std::int64_t> labels,
                             std::span<const Real> weights);

// Bilinear sampling of map [H,W,C] at coords [K,2] (x, y) in [-1,1]^2 where
// -1 and +1 are the outer pixel centers. Out-of-range coords clamp to the
// border and receive zero coordinate gradient.
Tensor grid_sample(const Tensor& map, const Tensor& coords);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator/(const Tensor& a, const Tensor& b) { return div(a, b); }
inline Tensor operator-(const Tensor& a) { return negate(a); }
inline Tensor operator*(const Tensor& a, Real s) { return mul_scalar(a, s); }
inline Tensor operator*(Real s, const Tensor& a) { return mul_scalar(a, s); }
inline Tensor operator+(const Tensor& a, Real s) { return add_scalar(a, s); }

struct OpAttrs {
  int stride = 1;
  int padding = 0;
  int axis = -1;
  Real lo = 0;
  Real hi = 0;
  std::int64_t start = 0;
  std::int64_t stop = 0;
  Shape shape;
  std::vector<std::int64_t> labels;
  std::vector<Real> weights;
};

// Generic entry point dispatching on kind. Inputs count and attrs must match
// the kind's rule.
Tensor apply(OpKind kind, std::span<const Tensor> inputs,
             const OpAttrs& attrs = {});

SOFTMESH_END_NAMESPACE
