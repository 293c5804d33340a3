#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "core/autodiff.hpp"
#include "core/tensor.hpp"

namespace monofbf {

struct ParameterSegment {
  std::string name;
  Shape shape;
  std::size_t offset = 0;
};

// Flat parameter storage with a named layout that partitions it exactly.
class ParameterVector {
 public:
  ParameterVector() = default;
  ParameterVector(Tensor values, std::vector<ParameterSegment> layout);

  const Tensor& values() const { return values_; }
  Tensor& values() { return values_; }
  const std::vector<ParameterSegment>& layout() const { return layout_; }
  std::size_t size() const { return values_.size(); }

  const ParameterSegment& segment(const std::string& name) const;
  bool same_layout(const ParameterVector& other) const;

  static ParameterVector concat(const ParameterVector& first, const ParameterVector& second);

 private:
  Tensor values_;
  std::vector<ParameterSegment> layout_;
};

// A parametric operator with forward evaluation and tangent (J(x)u) rules
// expressed as graph ops, so both are differentiable in the parameters.
//
// Maps are shape-polymorphic where it makes sense (convolutional maps accept
// any image larger than their kernels); check_input() enforces the domain.
class DifferentiableMap {
 public:
  virtual ~DifferentiableMap() = default;

  virtual void check_input(const Shape& shape) const = 0;
  virtual Shape output_shape(const Shape& input) const { return input; }

  virtual ParameterVector parameters() const { return {}; }
  virtual void set_parameters(const Tensor& flat);

  // theta holds the flat parameter vector (may be undefined when there are none).
  virtual ad::Var evaluate(const ad::Var& theta, const ad::Var& x) const = 0;
  virtual ad::Var tangent(const ad::Var& theta, const ad::Var& x, const ad::Var& u) const = 0;
};

using MapPtr = std::shared_ptr<const DifferentiableMap>;

// Non-owning handle for maps whose lifetime the caller manages.
MapPtr borrow(const DifferentiableMap& map);

// Map with its parameters bound to a graph variable.
class BoundMap {
 public:
  BoundMap(const DifferentiableMap& map, ad::Var theta) : map_(&map), theta_(std::move(theta)) {}

  ad::Var operator()(const ad::Var& x) const { return map_->evaluate(theta_, x); }
  ad::Var tangent(const ad::Var& x, const ad::Var& u) const { return map_->tangent(theta_, x, u); }

  const DifferentiableMap& map() const { return *map_; }
  const ad::Var& theta() const { return theta_; }

 private:
  const DifferentiableMap* map_;
  ad::Var theta_;
};

// Parameters bound as constants: no gradient flows to them.
BoundMap bind_constant(const DifferentiableMap& map);

Tensor forward(const DifferentiableMap& map, const Tensor& x);
// J(x) u by forward accumulation through the tangent rule.
Tensor jvp(const DifferentiableMap& map, const Tensor& x, const Tensor& u);
// J(x)^T v by reverse accumulation.
Tensor vjp(const DifferentiableMap& map, const Tensor& x, const Tensor& v);
// (J(x) + J(x)^T) u / 2; the map must be square.
Tensor sym_jacobian_apply(const DifferentiableMap& map, const Tensor& x, const Tensor& u);

using LossBuilder = std::function<ad::Var(const BoundMap&)>;

// d(loss)/d(theta) where loss is built from the bound map while recording.
ParameterVector param_gradient(const DifferentiableMap& map, const LossBuilder& loss);

// x -> M x + b on a fixed input shape (dense matrix on the flattened input).
class AffineMap final : public DifferentiableMap {
 public:
  AffineMap(Tensor matrix, Tensor offset, Shape input_shape, Shape output_shape);

  static std::shared_ptr<AffineMap> linear(Tensor matrix);
  static std::shared_ptr<AffineMap> identity(Shape shape);
  // x -> s x + offset on the given shape.
  static std::shared_ptr<AffineMap> scaled_identity(Shape shape, double s, Tensor offset = {});

  void check_input(const Shape& shape) const override;
  Shape output_shape(const Shape&) const override { return output_shape_; }
  ad::Var evaluate(const ad::Var& theta, const ad::Var& x) const override;
  ad::Var tangent(const ad::Var& theta, const ad::Var& x, const ad::Var& u) const override;

  const Tensor& matrix() const { return *matrix_; }

 private:
  std::shared_ptr<const Tensor> matrix_;
  Tensor offset_;
  Shape input_shape_;
  Shape output_shape_;
};

// x -> scale * conv(x, k) + offset, or scale * conv^T(x, k) + offset.
class ConvolutionMap final : public DifferentiableMap {
 public:
  ConvolutionMap(Kernel kernel, double scale = 1.0, double offset = 0.0, bool adjoint = false);

  void check_input(const Shape& shape) const override;
  ad::Var evaluate(const ad::Var& theta, const ad::Var& x) const override;
  ad::Var tangent(const ad::Var& theta, const ad::Var& x, const ad::Var& u) const override;

  const Kernel& kernel() const { return kernel_; }

 private:
  ad::Var apply_linear(const ad::Var& x) const;

  Kernel kernel_;
  double scale_;
  double offset_;
  bool adjoint_;
};

enum class Activation { Elu, LeakyRelu };

const char* activation_name(Activation a);
Activation parse_activation(const std::string& name);

struct ConvNetConfig {
  // Channel widths, input first; first and last must be 1.
  std::vector<std::size_t> channels{1, 8, 8, 1};
  std::size_t kernel_size = 3;
  Activation activation = Activation::Elu;
  double elu_alpha = 1.0;
  double leaky_slope = 0.01;
  bool residual = true;
};

// Circular-padding CNN on single-channel images: conv+bias layers with the
// activation between them, linear last layer, optional identity skip.
class ResidualConvNet final : public DifferentiableMap {
 public:
  explicit ResidualConvNet(ConvNetConfig config);

  // Uniform in [-s, s] with s = 1/sqrt(fan_in), weights and biases alike.
  void initialize(std::uint64_t seed);

  const ConvNetConfig& config() const { return config_; }

  void check_input(const Shape& shape) const override;
  ParameterVector parameters() const override { return params_; }
  void set_parameters(const Tensor& flat) override;
  ad::Var evaluate(const ad::Var& theta, const ad::Var& x) const override;
  ad::Var tangent(const ad::Var& theta, const ad::Var& x, const ad::Var& u) const override;

 private:
  ad::Elementwise activation() const;
  ad::Var layer_weight(const ad::Var& theta, std::size_t layer) const;
  ad::Var layer_bias(const ad::Var& theta, std::size_t layer) const;

  ConvNetConfig config_;
  ParameterVector params_;
};

// R_T = 2T - I.
class ReflectedMap final : public DifferentiableMap {
 public:
  explicit ReflectedMap(MapPtr base) : base_(std::move(base)) {}

  void check_input(const Shape& shape) const override;
  ParameterVector parameters() const override { return base_->parameters(); }
  ad::Var evaluate(const ad::Var& theta, const ad::Var& x) const override;
  ad::Var tangent(const ad::Var& theta, const ad::Var& x, const ad::Var& u) const override;

 private:
  MapPtr base_;
};

// outer o inner; theta = [outer parameters, inner parameters].
class CompositeMap final : public DifferentiableMap {
 public:
  CompositeMap(MapPtr outer, MapPtr inner) : outer_(std::move(outer)), inner_(std::move(inner)) {}

  void check_input(const Shape& shape) const override;
  Shape output_shape(const Shape& input) const override;
  ParameterVector parameters() const override;
  ad::Var evaluate(const ad::Var& theta, const ad::Var& x) const override;
  ad::Var tangent(const ad::Var& theta, const ad::Var& x, const ad::Var& u) const override;

  const DifferentiableMap& outer() const { return *outer_; }
  const DifferentiableMap& inner() const { return *inner_; }

 private:
  ad::Var outer_theta(const ad::Var& theta) const;
  ad::Var inner_theta(const ad::Var& theta) const;

  MapPtr outer_;
  MapPtr inner_;
};

}  // namespace monofbf
