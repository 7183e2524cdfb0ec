#include "softmesh/tensor.hpp"

#include <sstream>
#include <unordered_set>

SOFTMESH_BEGIN_NAMESPACE

namespace {
thread_local bool g_grad_enabled = true;
}  // namespace

std::int64_t numel_of(const Shape& shape) {
  std::int64_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

const char* op_name(OpKind kind) {
  switch (kind) {
    case OpKind::leaf: return "leaf";
    case OpKind::add: return "add";
    case OpKind::sub: return "sub";
    case OpKind::mul: return "mul";
    case OpKind::div: return "div";
    case OpKind::negate: return "negate";
    case OpKind::matmul: return "matmul";
    case OpKind::conv2d: return "conv2d";
    case OpKind::relu: return "relu";
    case OpKind::tanh: return "tanh";
    case OpKind::sigmoid: return "sigmoid";
    case OpKind::exp: return "exp";
    case OpKind::log: return "log";
    case OpKind::sum: return "sum";
    case OpKind::mean: return "mean";
    case OpKind::broadcast: return "broadcast";
    case OpKind::reshape: return "reshape";
    case OpKind::concat: return "concat";
    case OpKind::slice: return "slice";
    case OpKind::softmax_cross_entropy: return "softmax_cross_entropy";
    case OpKind::grid_sample: return "grid_sample";
    case OpKind::clamp: return "clamp";
    case OpKind::abs: return "abs";
    case OpKind::softplus: return "softplus";
    case OpKind::atan2: return "atan2";
    case OpKind::custom: return "custom";
  }
  return "?";
}

std::vector<Real>& Node::grad_buffer() {
  if (grad.empty()) grad.assign(data.size(), Real(0));
  return grad;
}

Tensor Tensor::zeros(Shape shape) { return full(std::move(shape), Real(0)); }

Tensor Tensor::full(Shape shape, Real value) {
  auto node = std::make_shared<Node>();
  node->data.assign(static_cast<std::size_t>(numel_of(shape)), value);
  node->shape = std::move(shape);
  return Tensor(std::move(node));
}

Tensor Tensor::scalar(Real value) { return full({}, value); }

Tensor Tensor::from(Shape shape, std::vector<Real> values) {
  if (static_cast<std::int64_t>(values.size()) != numel_of(shape)) {
    throw ShapeError("Tensor::from: " + std::to_string(values.size()) +
                     " values for shape " + shape_string(shape));
  }
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->data = std::move(values);
  return Tensor(std::move(node));
}

Tensor Tensor::parameter(Shape shape, std::vector<Real> values,
                         std::string label) {
  Tensor t = from(std::move(shape), std::move(values));
  t.node_->requires_grad = true;
  t.node_->is_parameter = true;
  t.node_->label = std::move(label);
  return t;
}

std::int64_t Tensor::dim(std::size_t axis) const {
  if (axis >= node_->shape.size()) {
    throw ShapeError("Tensor::dim: axis " + std::to_string(axis) +
                     " out of range for shape " + shape_string(node_->shape));
  }
  return node_->shape[axis];
}

std::int64_t Tensor::numel() const { return numel_of(node_->shape); }

std::span<Real> Tensor::mutable_data() {
  if (node_->kind != OpKind::leaf) {
    throw std::logic_error("mutable_data on non-leaf tensor");
  }
  return node_->data;
}

void Tensor::zero_grad() { node_->grad.clear(); }

Real Tensor::item() const {
  if (node_->data.size() != 1) {
    throw ShapeError("item() on tensor of shape " + shape_string(shape()));
  }
  return node_->data[0];
}

Tensor Tensor::detach() const { return from(node_->shape, node_->data); }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) {
  g_grad_enabled = false;
}
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

bool grad_enabled() { return g_grad_enabled; }

Tensor make_result(OpKind kind, Shape shape, std::vector<Real> data,
                   std::vector<Tensor> inputs, BackwardRule backward,
                   std::string label) {
  auto node = std::make_shared<Node>();
  node->kind = kind;
  node->shape = std::move(shape);
  node->data = std::move(data);
  node->label = std::move(label);
  if (g_grad_enabled) {
    bool any = false;
    for (const auto& in : inputs) any = any || in.requires_grad();
    if (any) {
      node->requires_grad = true;
      node->inputs.reserve(inputs.size());
      for (auto& in : inputs) node->inputs.push_back(in.node());
      node->backward = std::move(backward);
    }
  }
  return Tensor(std::move(node));
}

void backward(const Tensor& root) {
  if (!root.defined() || !root.shape().empty()) {
    throw ShapeError("backward: root must be a scalar, got shape " +
                     (root.defined() ? shape_string(root.shape())
                                     : std::string("<undefined>")));
  }
  if (!root.requires_grad()) return;

  // Iterative post-order DFS gives a topological order (inputs first).
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, std::size_t>> stack;
  stack.emplace_back(root.node().get(), 0);
  visited.insert(root.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      Node* child = node->inputs[next++].get();
      if (child->requires_grad && visited.insert(child).second) {
        stack.emplace_back(child, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  root.node()->grad_buffer()[0] += Real(1);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* node = *it;
    if (node->backward && !node->grad.empty()) node->backward(*node);
    if (!node->is_parameter) {
      // Intermediate gradients are consumed exactly once.
      std::vector<Real>().swap(node->grad);
    }
  }
}

SOFTMESH_END_NAMESPACE
