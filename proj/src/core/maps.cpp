#include "core/maps.hpp"

#include <cmath>

#include "core/errors.hpp"
#include "core/rng.hpp"

namespace monofbf {

// --- ParameterVector --------------------------------------------------------

ParameterVector::ParameterVector(Tensor values, std::vector<ParameterSegment> layout)
    : values_(std::move(values)), layout_(std::move(layout)) {
  std::size_t offset = 0;
  for (const auto& seg : layout_) {
    if (seg.offset != offset) throw DimensionError("parameter layout has a gap or overlap at " + seg.name);
    offset += shape_size(seg.shape);
  }
  if (offset != values_.size()) {
    throw DimensionError("parameter layout covers " + std::to_string(offset) + " of " +
                         std::to_string(values_.size()) + " values");
  }
}

const ParameterSegment& ParameterVector::segment(const std::string& name) const {
  for (const auto& seg : layout_) {
    if (seg.name == name) return seg;
  }
  throw ConfigError("no parameter segment named " + name);
}

bool ParameterVector::same_layout(const ParameterVector& other) const {
  if (layout_.size() != other.layout_.size() || size() != other.size()) return false;
  for (std::size_t i = 0; i < layout_.size(); ++i) {
    if (layout_[i].name != other.layout_[i].name || layout_[i].shape != other.layout_[i].shape) return false;
  }
  return true;
}

ParameterVector ParameterVector::concat(const ParameterVector& first, const ParameterVector& second) {
  if (first.size() == 0) return second;
  if (second.size() == 0) return first;
  std::vector<double> data(first.values().data().begin(), first.values().data().end());
  data.insert(data.end(), second.values().data().begin(), second.values().data().end());
  std::vector<ParameterSegment> layout = first.layout();
  for (auto seg : second.layout()) {
    seg.offset += first.size();
    layout.push_back(std::move(seg));
  }
  const std::size_t n = data.size();
  return ParameterVector(Tensor({n}, std::move(data)), std::move(layout));
}

// --- DifferentiableMap helpers ----------------------------------------------

void DifferentiableMap::set_parameters(const Tensor& flat) {
  if (flat.size() != 0) throw DimensionError("map has no parameters");
}

MapPtr borrow(const DifferentiableMap& map) { return MapPtr(std::shared_ptr<void>(), &map); }

BoundMap bind_constant(const DifferentiableMap& map) {
  return BoundMap(map, ad::Var::constant(map.parameters().values()));
}

namespace {

Tensor conform(const Tensor& t, const Shape& shape, const char* what) {
  if (t.shape() == shape) return t;
  if (t.size() != shape_size(shape)) {
    throw DimensionError(std::string(what) + " has shape " + shape_string(t.shape()) + ", expected " +
                         shape_string(shape));
  }
  return t.reshaped(shape);
}

}  // namespace

Tensor forward(const DifferentiableMap& map, const Tensor& x) {
  map.check_input(x.shape());
  ad::DetachedScope detached;
  return bind_constant(map)(ad::Var::constant(x)).value();
}

Tensor jvp(const DifferentiableMap& map, const Tensor& x, const Tensor& u) {
  map.check_input(x.shape());
  Tensor uu = conform(u, x.shape(), "jvp direction");
  ad::DetachedScope detached;
  return bind_constant(map).tangent(ad::Var::constant(x), ad::Var::constant(std::move(uu))).value();
}

Tensor vjp(const DifferentiableMap& map, const Tensor& x, const Tensor& v) {
  map.check_input(x.shape());
  Tensor vv = conform(v, map.output_shape(x.shape()), "vjp cotangent");
  ad::RecordingScope recording;
  auto xv = ad::Var::leaf(x);
  auto y = bind_constant(map)(xv);
  return ad::backward(y, vv, std::span<const ad::Var>(&xv, 1))[0];
}

Tensor sym_jacobian_apply(const DifferentiableMap& map, const Tensor& x, const Tensor& u) {
  map.check_input(x.shape());
  if (map.output_shape(x.shape()) != x.shape()) throw DimensionError("symmetric Jacobian needs a square map");
  Tensor out = jvp(map, x, u);
  out += vjp(map, x, conform(u, x.shape(), "direction"));
  out *= 0.5;
  return out;
}

ParameterVector param_gradient(const DifferentiableMap& map, const LossBuilder& loss) {
  ParameterVector params = map.parameters();
  ad::RecordingScope recording;
  auto theta = ad::Var::leaf(params.values());
  ad::Var value = loss(BoundMap(map, theta));
  if (!value.defined() || value.value().size() != 1) throw DimensionError("param_gradient: loss is not a scalar");
  Tensor grad = ad::gradient(value, std::span<const ad::Var>(&theta, 1))[0];
  return ParameterVector(std::move(grad), params.layout());
}

// --- AffineMap --------------------------------------------------------------

AffineMap::AffineMap(Tensor matrix, Tensor offset, Shape input_shape, Shape output_shape)
    : matrix_(std::make_shared<const Tensor>(std::move(matrix))),
      offset_(std::move(offset)),
      input_shape_(std::move(input_shape)),
      output_shape_(std::move(output_shape)) {
  if (matrix_->ndim() != 2 || matrix_->dim(0) != shape_size(output_shape_) ||
      matrix_->dim(1) != shape_size(input_shape_)) {
    throw DimensionError("affine map: matrix " + shape_string(matrix_->shape()) + " does not map " +
                         shape_string(input_shape_) + " to " + shape_string(output_shape_));
  }
  if (!offset_.empty()) offset_ = conform(offset_, output_shape_, "affine offset");
}

std::shared_ptr<AffineMap> AffineMap::linear(Tensor matrix) {
  if (matrix.ndim() != 2) throw DimensionError("linear map needs a matrix");
  Shape in{matrix.dim(1)}, out{matrix.dim(0)};
  return std::make_shared<AffineMap>(std::move(matrix), Tensor{}, in, out);
}

std::shared_ptr<AffineMap> AffineMap::identity(Shape shape) { return scaled_identity(std::move(shape), 1.0); }

std::shared_ptr<AffineMap> AffineMap::scaled_identity(Shape shape, double s, Tensor offset) {
  const std::size_t n = shape_size(shape);
  Tensor m({n, n}, 0.0);
  for (std::size_t i = 0; i < n; ++i) m[i * n + i] = s;
  return std::make_shared<AffineMap>(std::move(m), std::move(offset), shape, shape);
}

void AffineMap::check_input(const Shape& shape) const {
  if (shape != input_shape_) {
    throw DimensionError("affine map expects " + shape_string(input_shape_) + ", got " + shape_string(shape));
  }
}

ad::Var AffineMap::evaluate(const ad::Var&, const ad::Var& x) const {
  ad::Var y = ad::reshape(ad::matvec(matrix_, x), output_shape_);
  if (!offset_.empty()) y = ad::add(y, ad::Var::constant(offset_));
  return y;
}

ad::Var AffineMap::tangent(const ad::Var&, const ad::Var&, const ad::Var& u) const {
  return ad::reshape(ad::matvec(matrix_, u), output_shape_);
}

// --- ConvolutionMap ---------------------------------------------------------

ConvolutionMap::ConvolutionMap(Kernel kernel, double scale, double offset, bool adjoint)
    : kernel_(std::move(kernel)), scale_(scale), offset_(offset), adjoint_(adjoint) {}

void ConvolutionMap::check_input(const Shape& shape) const {
  if (shape.size() != 2 || shape[0] < kernel_.size() || shape[1] < kernel_.size()) {
    throw DimensionError("convolution map needs a 2-D image at least " + std::to_string(kernel_.size()) +
                         " wide, got " + shape_string(shape));
  }
}

ad::Var ConvolutionMap::apply_linear(const ad::Var& x) const {
  const Shape shape = x.shape();
  const std::size_t d = kernel_.size();
  auto w = ad::Var::constant(kernel_.weights().reshaped({1, 1, d, d}));
  auto x3 = ad::reshape(x, {1, shape[0], shape[1]});
  auto y = adjoint_ ? ad::conv2d_transpose(x3, w) : ad::conv2d(x3, w);
  y = ad::reshape(y, shape);
  return scale_ == 1.0 ? y : ad::scale(y, scale_);
}

ad::Var ConvolutionMap::evaluate(const ad::Var&, const ad::Var& x) const {
  auto y = apply_linear(x);
  return offset_ == 0.0 ? y : ad::add_scalar(y, offset_);
}

ad::Var ConvolutionMap::tangent(const ad::Var&, const ad::Var&, const ad::Var& u) const { return apply_linear(u); }

// --- ResidualConvNet --------------------------------------------------------

const char* activation_name(Activation a) { return a == Activation::Elu ? "elu" : "leaky_relu"; }

Activation parse_activation(const std::string& name) {
  if (name == "elu") return Activation::Elu;
  if (name == "leaky_relu") return Activation::LeakyRelu;
  throw ConfigError("unknown activation '" + name + "' (expected elu or leaky_relu)");
}

ResidualConvNet::ResidualConvNet(ConvNetConfig config) : config_(std::move(config)) {
  const auto& ch = config_.channels;
  if (ch.size() < 2 || ch.front() != 1 || ch.back() != 1) {
    throw ConfigError("network channels must start and end with 1");
  }
  if (config_.kernel_size % 2 == 0) throw ConfigError("network kernel size must be odd");
  std::vector<ParameterSegment> layout;
  std::size_t offset = 0;
  const std::size_t k = config_.kernel_size;
  for (std::size_t l = 0; l + 1 < ch.size(); ++l) {
    if (ch[l] == 0 || ch[l + 1] == 0) throw ConfigError("channel widths must be positive");
    Shape ws{ch[l + 1], ch[l], k, k};
    layout.push_back({"conv" + std::to_string(l) + ".weight", ws, offset});
    offset += shape_size(ws);
    layout.push_back({"conv" + std::to_string(l) + ".bias", Shape{ch[l + 1]}, offset});
    offset += ch[l + 1];
  }
  params_ = ParameterVector(Tensor({offset}, 0.0), std::move(layout));
}

void ResidualConvNet::initialize(std::uint64_t seed) {
  Rng rng(seed);
  const std::size_t k = config_.kernel_size;
  for (std::size_t l = 0; l + 1 < config_.channels.size(); ++l) {
    const double s = 1.0 / std::sqrt(static_cast<double>(config_.channels[l] * k * k));
    for (const char* part : {".weight", ".bias"}) {
      const auto& seg = params_.segment("conv" + std::to_string(l) + part);
      for (std::size_t i = 0; i < shape_size(seg.shape); ++i) params_.values()[seg.offset + i] = rng.uniform(-s, s);
    }
  }
}

void ResidualConvNet::set_parameters(const Tensor& flat) {
  if (flat.size() != params_.size()) {
    throw DimensionError("network expects " + std::to_string(params_.size()) + " parameters, got " +
                         std::to_string(flat.size()));
  }
  params_.values() = flat.reshaped({flat.size()});
}

void ResidualConvNet::check_input(const Shape& shape) const {
  if (shape.size() != 2 || shape[0] < config_.kernel_size || shape[1] < config_.kernel_size) {
    throw DimensionError("network input must be a 2-D image at least " + std::to_string(config_.kernel_size) +
                         " wide, got " + shape_string(shape));
  }
}

ad::Elementwise ResidualConvNet::activation() const {
  if (config_.activation == Activation::Elu) return {ad::Fn::Elu, config_.elu_alpha};
  return {ad::Fn::LeakyRelu, config_.leaky_slope};
}

ad::Var ResidualConvNet::layer_weight(const ad::Var& theta, std::size_t layer) const {
  const auto& seg = params_.layout()[2 * layer];
  return ad::slice(theta, seg.offset, seg.shape);
}

ad::Var ResidualConvNet::layer_bias(const ad::Var& theta, std::size_t layer) const {
  const auto& seg = params_.layout()[2 * layer + 1];
  return ad::slice(theta, seg.offset, seg.shape);
}

ad::Var ResidualConvNet::evaluate(const ad::Var& theta, const ad::Var& x) const {
  const Shape shape = x.shape();
  const std::size_t layers = config_.channels.size() - 1;
  const auto act = activation();
  ad::Var h = ad::reshape(x, {1, shape[0], shape[1]});
  for (std::size_t l = 0; l < layers; ++l) {
    h = ad::bias_add(ad::conv2d(h, layer_weight(theta, l)), layer_bias(theta, l));
    if (l + 1 < layers) h = ad::apply(h, act);
  }
  ad::Var out = ad::reshape(h, shape);
  return config_.residual ? ad::add(out, x) : out;
}

ad::Var ResidualConvNet::tangent(const ad::Var& theta, const ad::Var& x, const ad::Var& u) const {
  const Shape shape = x.shape();
  const std::size_t layers = config_.channels.size() - 1;
  const auto act = activation();
  ad::Var h = ad::reshape(x, {1, shape[0], shape[1]});
  ad::Var t = ad::reshape(u, {1, shape[0], shape[1]});
  for (std::size_t l = 0; l < layers; ++l) {
    ad::Var w = layer_weight(theta, l);
    ad::Var z = ad::bias_add(ad::conv2d(h, w), layer_bias(theta, l));
    t = ad::conv2d(t, w);
    if (l + 1 < layers) {
      t = ad::mul(ad::apply_derivative(z, act), t);
      h = ad::apply(z, act);
    }
  }
  ad::Var out = ad::reshape(t, shape);
  return config_.residual ? ad::add(out, u) : out;
}

// --- ReflectedMap -----------------------------------------------------------

void ReflectedMap::check_input(const Shape& shape) const {
  base_->check_input(shape);
  if (base_->output_shape(shape) != shape) throw DimensionError("reflected operator needs a square map");
}

ad::Var ReflectedMap::evaluate(const ad::Var& theta, const ad::Var& x) const {
  return ad::sub(ad::scale(base_->evaluate(theta, x), 2.0), x);
}

ad::Var ReflectedMap::tangent(const ad::Var& theta, const ad::Var& x, const ad::Var& u) const {
  return ad::sub(ad::scale(base_->tangent(theta, x, u), 2.0), u);
}

// --- CompositeMap -----------------------------------------------------------

void CompositeMap::check_input(const Shape& shape) const {
  inner_->check_input(shape);
  outer_->check_input(inner_->output_shape(shape));
}

Shape CompositeMap::output_shape(const Shape& input) const {
  return outer_->output_shape(inner_->output_shape(input));
}

ParameterVector CompositeMap::parameters() const {
  return ParameterVector::concat(outer_->parameters(), inner_->parameters());
}

ad::Var CompositeMap::outer_theta(const ad::Var& theta) const {
  const std::size_t n = outer_->parameters().size();
  return n == 0 ? ad::Var::constant(Tensor{}) : ad::slice(theta, 0, {n});
}

ad::Var CompositeMap::inner_theta(const ad::Var& theta) const {
  const std::size_t n_outer = outer_->parameters().size();
  const std::size_t n = inner_->parameters().size();
  return n == 0 ? ad::Var::constant(Tensor{}) : ad::slice(theta, n_outer, {n});
}

ad::Var CompositeMap::evaluate(const ad::Var& theta, const ad::Var& x) const {
  return outer_->evaluate(outer_theta(theta), inner_->evaluate(inner_theta(theta), x));
}

ad::Var CompositeMap::tangent(const ad::Var& theta, const ad::Var& x, const ad::Var& u) const {
  const ad::Var ti = inner_theta(theta);
  return outer_->tangent(outer_theta(theta), inner_->evaluate(ti, x), inner_->tangent(ti, x, u));
}

}  // namespace monofbf
