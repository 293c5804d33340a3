#include "core/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_map>
#include <unordered_set>

#include "core/errors.hpp"

namespace monofbf::ad {

namespace {

thread_local bool g_recording = true;

bool needs(const Node& self, std::size_t i) { return self.parents[i]->requires_grad; }

const Tensor& parent_value(const Node& self, std::size_t i) { return self.parents[i]->value; }

void require_scalar(const Var& v, const char* context) {
  if (v.value().size() != 1) {
    throw DimensionError(std::string(context) + ": expected a one-element tensor, got " + shape_string(v.shape()));
  }
}

}  // namespace

// --- Var --------------------------------------------------------------------

Var Var::constant(Tensor value) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  return Var(std::move(node));
}

Var Var::leaf(Tensor value) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  node->requires_grad = true;
  return Var(std::move(node));
}

const Tensor& Var::value() const {
  if (!node_) throw Error("access to an undefined Var");
  return node_->value;
}

bool Var::requires_grad() const { return node_ && node_->requires_grad; }

bool recording_enabled() { return g_recording; }

DetachedScope::DetachedScope() : previous_(g_recording) { g_recording = false; }
DetachedScope::~DetachedScope() { g_recording = previous_; }
RecordingScope::RecordingScope() : previous_(g_recording) { g_recording = true; }
RecordingScope::~RecordingScope() { g_recording = previous_; }

Var make_result(Tensor value, std::vector<Var> inputs, BackwardFn backward) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  if (g_recording && std::any_of(inputs.begin(), inputs.end(), [](const Var& v) { return v.requires_grad(); })) {
    node->requires_grad = true;
    node->parents.reserve(inputs.size());
    for (auto& in : inputs) node->parents.push_back(in.node());
    node->backward = std::move(backward);
  }
  return Var(std::move(node));
}

// --- reverse sweep ----------------------------------------------------------

std::vector<Tensor> backward(const Var& output, const Tensor& seed, std::span<const Var> wrt) {
  require_same_shape(output.value(), seed, "backward seed");
  std::vector<Tensor> result;
  result.reserve(wrt.size());
  for (const auto& w : wrt) result.emplace_back(w.shape(), 0.0);
  if (!output.requires_grad()) return result;

  // Post-order DFS over nodes that carry gradients.
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, std::size_t>> stack{{output.node().get(), 0}};
  visited.insert(output.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* parent = node->parents[next++].get();
      if (parent->requires_grad && visited.insert(parent).second) stack.emplace_back(parent, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  std::unordered_set<const Node*> keep;
  for (const auto& w : wrt) keep.insert(w.node().get());

  std::unordered_map<const Node*, Tensor> grads;
  grads.emplace(output.node().get(), seed);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* node = *it;
    auto found = grads.find(node);
    if (found == grads.end() || !node->backward) continue;
    std::vector<Tensor> parent_grads(node->parents.size());
    node->backward(*node, found->second, parent_grads);
    for (std::size_t i = 0; i < node->parents.size(); ++i) {
      const Node* parent = node->parents[i].get();
      if (!parent->requires_grad || parent_grads[i].empty()) continue;
      auto [slot, inserted] = grads.try_emplace(parent, std::move(parent_grads[i]));
      if (!inserted) slot->second += parent_grads[i];
    }
    if (!keep.count(node)) grads.erase(node);
  }

  for (std::size_t i = 0; i < wrt.size(); ++i) {
    auto found = grads.find(wrt[i].node().get());
    if (found != grads.end()) result[i] = found->second;
  }
  return result;
}

std::vector<Tensor> gradient(const Var& output, std::span<const Var> wrt) {
  require_scalar(output, "gradient");
  return backward(output, Tensor(output.shape(), 1.0), wrt);
}

// --- elementwise ------------------------------------------------------------

double Elementwise::value(double x) const {
  switch (fn) {
    case Fn::Elu:
      return x >= 0.0 ? x : param * std::expm1(x);
    case Fn::LeakyRelu:
      return x > 0.0 ? x : param * x;
    case Fn::Saturation:
      return 0.5 * (std::tanh(param * (2.0 * x - 1.0)) + 1.0);
    case Fn::Relu:
      return x > 0.0 ? x : 0.0;
    case Fn::Abs:
      return std::abs(x);
    case Fn::Sqrt:
      return std::sqrt(x);
    case Fn::Square:
      return x * x;
  }
  return 0.0;
}

double Elementwise::first(double x) const {
  switch (fn) {
    case Fn::Elu:
      return x >= 0.0 ? 1.0 : param * std::exp(x);
    case Fn::LeakyRelu:
      return x > 0.0 ? 1.0 : param;
    case Fn::Saturation: {
      const double t = std::tanh(param * (2.0 * x - 1.0));
      return param * (1.0 - t * t);
    }
    case Fn::Relu:
      return x > 0.0 ? 1.0 : 0.0;
    case Fn::Abs:
      return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0);
    case Fn::Sqrt:
      return 0.5 / std::sqrt(x);
    case Fn::Square:
      return 2.0 * x;
  }
  return 0.0;
}

double Elementwise::second(double x) const {
  switch (fn) {
    case Fn::Elu:
      return x >= 0.0 ? 0.0 : param * std::exp(x);
    case Fn::Saturation: {
      const double t = std::tanh(param * (2.0 * x - 1.0));
      return -4.0 * param * param * t * (1.0 - t * t);
    }
    case Fn::Sqrt:
      return -0.25 / (x * std::sqrt(x));
    case Fn::Square:
      return 2.0;
    case Fn::LeakyRelu:
    case Fn::Relu:
    case Fn::Abs:
      return 0.0;
  }
  return 0.0;
}

Var apply(const Var& x, Elementwise f) {
  Tensor out(x.shape());
  const Tensor& xv = x.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = f.value(xv[i]);
  return make_result(std::move(out), {x}, [f](const Node& self, const Tensor& g, std::vector<Tensor>& pg) {
    const Tensor& xv = parent_value(self, 0);
    Tensor gx(xv.shape());
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] = g[i] * f.first(xv[i]);
    pg[0] = std::move(gx);
  });
}

Var apply_derivative(const Var& x, Elementwise f) {
  Tensor out(x.shape());
  const Tensor& xv = x.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = f.first(xv[i]);
  return make_result(std::move(out), {x}, [f](const Node& self, const Tensor& g, std::vector<Tensor>& pg) {
    const Tensor& xv = parent_value(self, 0);
    Tensor gx(xv.shape());
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] = g[i] * f.second(xv[i]);
    pg[0] = std::move(gx);
  });
}

// --- arithmetic -------------------------------------------------------------

Var add(const Var& a, const Var& b) {
  require_same_shape(a.value(), b.value(), "add");
  return make_result(a.value() + b.value(), {a, b}, [](const Node& self, const Tensor& g, std::vector<Tensor>& pg) {
    if (needs(self, 0)) pg[0] = g;
    if (needs(self, 1)) pg[1] = g;
  });
}

Var sub(const Var& a, const Var& b) {
  require_same_shape(a.value(), b.value(), "sub");
  return make_result(a.value() - b.value(), {a, b}, [](const Node& self, const Tensor& g, std::vector<Tensor>& pg) {
    if (needs(self, 0)) pg[0] = g;
    if (needs(self, 1)) pg[1] = -1.0 * g;
  });
}

Var mul(const Var& a, const Var& b) {
  require_same_shape(a.value(), b.value(), "mul");
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b.value()[i];
  return make_result(std::move(out), {a, b}, [](const Node& self, const Tensor& g, std::vector<Tensor>& pg) {
    for (std::size_t k = 0; k < 2; ++k) {
      if (!needs(self, k)) continue;
      const Tensor& other = parent_value(self, 1 - k);
      Tensor gk = g;
      for (std::size_t i = 0; i < gk.size(); ++i) gk[i] *= other[i];
      pg[k] = std::move(gk);
    }
  });
}

Var div(const Var& a, const Var& b) {
  require_same_shape(a.value(), b.value(), "div");
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] /= b.value()[i];
  return make_result(std::move(out), {a, b}, [](const Node& self, const Tensor& g, std::vector<Tensor>& pg) {
    const Tensor& av = parent_value(self, 0);
    const Tensor& bv = parent_value(self, 1);
    if (needs(self, 0)) {
      Tensor ga = g;
      for (std::size_t i = 0; i < ga.size(); ++i) ga[i] /= bv[i];
      pg[0] = std::move(ga);
    }
    if (needs(self, 1)) {
      Tensor gb = g;
      for (std::size_t i = 0; i < gb.size(); ++i) gb[i] *= -av[i] / (bv[i] * bv[i]);
      pg[1] = std::move(gb);
    }
  });
}

Var scale(const Var& a, double s) {
  return make_result(s * a.value(), {a}, [s](const Node&, const Tensor& g, std::vector<Tensor>& pg) { pg[0] = s * g; });
}

Var add_scalar(const Var& a, double s) {
  Tensor out = a.value();
  for (double& v : out.data()) v += s;
  return make_result(std::move(out), {a}, [](const Node&, const Tensor& g, std::vector<Tensor>& pg) { pg[0] = g; });
}

Var div_scalar(const Var& a, const Var& s) {
  require_scalar(s, "div_scalar");
  const double sv = s.value()[0];
  return make_result((1.0 / sv) * a.value(), {a, s}, [](const Node& self, const Tensor& g, std::vector<Tensor>& pg) {
    const double sv = parent_value(self, 1)[0];
    if (needs(self, 0)) pg[0] = (1.0 / sv) * g;
    if (needs(self, 1)) pg[1] = Tensor::scalar(-monofbf::dot(g, parent_value(self, 0)) / (sv * sv));
  });
}

Var sum(const Var& a) {
  return make_result(Tensor::scalar(monofbf::sum(a.value())), {a},
                     [](const Node& self, const Tensor& g, std::vector<Tensor>& pg) {
                       pg[0] = Tensor(parent_value(self, 0).shape(), g[0]);
                     });
}

Var mean(const Var& a) { return scale(sum(a), 1.0 / static_cast<double>(a.value().size())); }

Var dot(const Var& a, const Var& b) {
  if (a.value().size() != b.value().size()) throw DimensionError("dot: size mismatch");
  return make_result(Tensor::scalar(monofbf::dot(a.value(), b.value())), {a, b},
                     [](const Node& self, const Tensor& g, std::vector<Tensor>& pg) {
                       if (needs(self, 0)) pg[0] = g[0] * parent_value(self, 1).reshaped(parent_value(self, 0).shape());
                       if (needs(self, 1)) pg[1] = g[0] * parent_value(self, 0).reshaped(parent_value(self, 1).shape());
                     });
}

Var min_with(const Var& a, double c) {
  require_scalar(a, "min_with");
  const double av = a.value()[0];
  return make_result(Tensor::scalar(std::min(av, c)), {a}, [c](const Node& self, const Tensor& g, std::vector<Tensor>& pg) {
    pg[0] = parent_value(self, 0)[0] <= c ? g : Tensor(g.shape(), 0.0);
  });
}

// --- shape ------------------------------------------------------------------

Var reshape(const Var& a, Shape shape) {
  return make_result(a.value().reshaped(std::move(shape)), {a},
                     [](const Node& self, const Tensor& g, std::vector<Tensor>& pg) {
                       pg[0] = g.reshaped(parent_value(self, 0).shape());
                     });
}

Var slice(const Var& a, std::size_t offset, Shape shape) {
  const std::size_t n = shape_size(shape);
  if (offset + n > a.value().size()) throw DimensionError("slice out of range");
  std::vector<double> data(a.value().data().begin() + static_cast<std::ptrdiff_t>(offset),
                           a.value().data().begin() + static_cast<std::ptrdiff_t>(offset + n));
  return make_result(Tensor(std::move(shape), std::move(data)), {a},
                     [offset](const Node& self, const Tensor& g, std::vector<Tensor>& pg) {
                       Tensor ga(parent_value(self, 0).shape(), 0.0);
                       std::copy(g.data().begin(), g.data().end(), ga.data().begin() + static_cast<std::ptrdiff_t>(offset));
                       pg[0] = std::move(ga);
                     });
}

// --- convolution / linear ---------------------------------------------------

Var conv2d(const Var& x, const Var& w) {
  return make_result(conv2d_multi(x.value(), w.value()), {x, w},
                     [](const Node& self, const Tensor& g, std::vector<Tensor>& pg) {
                       const Tensor& xv = parent_value(self, 0);
                       const Tensor& wv = parent_value(self, 1);
                       if (needs(self, 0)) pg[0] = conv2d_multi_adjoint_input(g, wv);
                       if (needs(self, 1)) pg[1] = conv2d_multi_adjoint_weight(g, xv, wv.dim(2));
                     });
}

Var conv2d_transpose(const Var& x, const Var& w) {
  return make_result(conv2d_multi_adjoint_input(x.value(), w.value()), {x, w},
                     [](const Node& self, const Tensor& g, std::vector<Tensor>& pg) {
                       const Tensor& xv = parent_value(self, 0);
                       const Tensor& wv = parent_value(self, 1);
                       if (needs(self, 0)) pg[0] = conv2d_multi(g, wv);
                       if (needs(self, 1)) pg[1] = conv2d_multi_adjoint_weight(xv, g, wv.dim(2));
                     });
}

Var bias_add(const Var& x, const Var& b) {
  const Tensor& xv = x.value();
  if (xv.ndim() != 3 || b.value().size() != xv.dim(0)) {
    throw DimensionError("bias_add: " + shape_string(xv.shape()) + " with bias " + shape_string(b.shape()));
  }
  const std::size_t c = xv.dim(0), plane = xv.dim(1) * xv.dim(2);
  Tensor out = xv;
  for (std::size_t k = 0; k < c; ++k)
    for (std::size_t i = 0; i < plane; ++i) out[k * plane + i] += b.value()[k];
  return make_result(std::move(out), {x, b}, [c, plane](const Node& self, const Tensor& g, std::vector<Tensor>& pg) {
    if (needs(self, 0)) pg[0] = g;
    if (needs(self, 1)) {
      Tensor gb(parent_value(self, 1).shape(), 0.0);
      for (std::size_t k = 0; k < c; ++k)
        for (std::size_t i = 0; i < plane; ++i) gb[k] += g[k * plane + i];
      pg[1] = std::move(gb);
    }
  });
}

Var matvec(std::shared_ptr<const Tensor> matrix, const Var& x) {
  const Tensor& m = *matrix;
  if (m.ndim() != 2 || m.dim(1) != x.value().size()) {
    throw DimensionError("matvec: matrix " + shape_string(m.shape()) + " with vector of size " +
                         std::to_string(x.value().size()));
  }
  const std::size_t rows = m.dim(0), cols = m.dim(1);
  Tensor out({rows}, 0.0);
  for (std::size_t i = 0; i < rows; ++i) {
    double acc = 0.0;
    for (std::size_t j = 0; j < cols; ++j) acc += m[i * cols + j] * x.value()[j];
    out[i] = acc;
  }
  return make_result(std::move(out), {x}, [matrix, rows, cols](const Node& self, const Tensor& g, std::vector<Tensor>& pg) {
    const Tensor& m = *matrix;
    Tensor gx({cols}, 0.0);
    for (std::size_t i = 0; i < rows; ++i)
      for (std::size_t j = 0; j < cols; ++j) gx[j] += m[i * cols + j] * g[i];
    pg[0] = gx.reshaped(parent_value(self, 0).shape());
  });
}

namespace {

Tensor circular_difference(const Tensor& x, int axis, bool adjoint) {
  if (x.ndim() != 2) throw DimensionError("difference expects a 2-D tensor");
  const std::size_t h = x.dim(0), w = x.dim(1);
  Tensor out(x.shape());
  for (std::size_t i = 0; i < h; ++i)
    for (std::size_t j = 0; j < w; ++j) {
      std::size_t ni = i, nj = j;
      if (axis == 0)
        ni = adjoint ? (i + h - 1) % h : (i + 1) % h;
      else
        nj = adjoint ? (j + w - 1) % w : (j + 1) % w;
      // forward: x[next] - x[here]; adjoint: g[prev] - g[here]
      out[i * w + j] = x[ni * w + nj] - x[i * w + j];
    }
  return out;
}

}  // namespace

Var difference(const Var& x, int axis, bool adjoint) {
  return make_result(circular_difference(x.value(), axis, adjoint), {x},
                     [axis, adjoint](const Node&, const Tensor& g, std::vector<Tensor>& pg) {
                       pg[0] = circular_difference(g, axis, !adjoint);
                     });
}

}  // namespace monofbf::ad
