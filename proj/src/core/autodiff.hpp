#pragma once

#include <functional>
#include <memory>
#include <span>
#include <vector>

#include "core/tensor.hpp"

// Minimal reverse-mode differentiation over tensors.
//
// Graphs are built define-by-run: every op returns a Var whose node keeps its
// parents and a backward rule, but only while recording is enabled and at
// least one input requires a gradient. Forward-mode products (JVPs) are not
// a separate mechanism; maps express J(x)u with the same ops, so JVPs are
// themselves differentiable with respect to parameters.
namespace monofbf::ad {

struct Node;

class Var {
 public:
  Var() = default;

  // A value that never receives a gradient.
  static Var constant(Tensor value);
  // A value that gradients are computed for.
  static Var leaf(Tensor value);

  bool defined() const { return node_ != nullptr; }
  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  bool requires_grad() const;

  // Same value, cut from the graph.
  Var detached() const { return constant(value()); }

  const std::shared_ptr<Node>& node() const { return node_; }
  explicit Var(std::shared_ptr<Node> node) : node_(std::move(node)) {}

 private:
  std::shared_ptr<Node> node_;
};

using BackwardFn = std::function<void(const Node& self, const Tensor& grad, std::vector<Tensor>& parent_grads)>;

struct Node {
  Tensor value;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  BackwardFn backward;
};

// Thread-local recording switch. Ops executed while recording is disabled
// produce constants: same values, no parameter gradient.
bool recording_enabled();

class DetachedScope {
 public:
  DetachedScope();
  ~DetachedScope();
  DetachedScope(const DetachedScope&) = delete;
  DetachedScope& operator=(const DetachedScope&) = delete;

 private:
  bool previous_;
};

class RecordingScope {
 public:
  RecordingScope();
  ~RecordingScope();
  RecordingScope(const RecordingScope&) = delete;
  RecordingScope& operator=(const RecordingScope&) = delete;

 private:
  bool previous_;
};

// Builds a result node; records parents and rule when appropriate.
Var make_result(Tensor value, std::vector<Var> inputs, BackwardFn backward);

// d(output)/d(wrt) for a one-element output.
std::vector<Tensor> gradient(const Var& output, std::span<const Var> wrt);
// Vector-Jacobian product: seed has the shape of output.
std::vector<Tensor> backward(const Var& output, const Tensor& seed, std::span<const Var> wrt);

// Elementwise scalar functions with first and second derivatives.
enum class Fn { Elu, LeakyRelu, Saturation, Relu, Abs, Sqrt, Square };

struct Elementwise {
  Fn fn;
  // Elu: alpha. LeakyRelu: negative slope. Saturation: delta.
  double param = 0.0;

  double value(double x) const;
  double first(double x) const;
  double second(double x) const;
};

Var apply(const Var& x, Elementwise f);
Var apply_derivative(const Var& x, Elementwise f);

Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var div(const Var& a, const Var& b);
Var scale(const Var& a, double s);
Var add_scalar(const Var& a, double s);
// a / s with s a one-element Var.
Var div_scalar(const Var& a, const Var& s);

Var sum(const Var& a);
Var mean(const Var& a);
Var dot(const Var& a, const Var& b);
// min(a, c) for a one-element a.
Var min_with(const Var& a, double c);

Var reshape(const Var& a, Shape shape);
// Contiguous slice of the flattened tensor, reshaped.
Var slice(const Var& a, std::size_t offset, Shape shape);

// x [Cin,H,W], w [Cout,Cin,D,D]; circular boundaries.
Var conv2d(const Var& x, const Var& w);
// Adjoint of conv2d in its first argument: x [Cout,H,W] -> [Cin,H,W].
Var conv2d_transpose(const Var& x, const Var& w);
// x [C,H,W] + b[c] on channel c.
Var bias_add(const Var& x, const Var& b);

// Dense matrix [m,n] times flattened x; result shape [m].
Var matvec(std::shared_ptr<const Tensor> matrix, const Var& x);

// Circular forward difference along axis (0 vertical, 1 horizontal) of a 2-D
// tensor, or its adjoint.
Var difference(const Var& x, int axis, bool adjoint);

}  // namespace monofbf::ad
