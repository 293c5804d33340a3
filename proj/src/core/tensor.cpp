#include "core/tensor.hpp"

#include <cmath>
#include <sstream>

#include "core/errors.hpp"

namespace monofbf {

std::size_t shape_size(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ']';
  return os.str();
}

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)), data_(shape_size(shape_), fill) {
  for (std::size_t d : shape_) {
    if (d == 0) throw DimensionError("tensor shape entries must be positive: " + shape_string(shape_));
  }
}

Tensor::Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
  if (shape_size(shape_) != data_.size()) {
    throw DimensionError("tensor data length " + std::to_string(data_.size()) + " does not match shape " +
                         shape_string(shape_));
  }
}

double Tensor::item() const {
  if (data_.size() != 1) throw DimensionError("item() on tensor of shape " + shape_string(shape_));
  return data_[0];
}

Tensor Tensor::reshaped(Shape shape) const {
  if (shape_size(shape) != data_.size()) {
    throw DimensionError("cannot reshape " + shape_string(shape_) + " to " + shape_string(shape));
  }
  return Tensor(std::move(shape), data_);
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* context) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(context) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                         shape_string(b.shape()));
  }
}

Tensor& Tensor::operator+=(const Tensor& other) {
  require_same_shape(*this, other, "operator+=");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
  return *this;
}

Tensor& Tensor::operator-=(const Tensor& other) {
  require_same_shape(*this, other, "operator-=");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= other.data_[i];
  return *this;
}

Tensor& Tensor::operator*=(double s) {
  for (double& v : data_) v *= s;
  return *this;
}

Tensor& Tensor::axpy(double s, const Tensor& other) {
  require_same_shape(*this, other, "axpy");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += s * other.data_[i];
  return *this;
}

Tensor operator+(Tensor a, const Tensor& b) { return a += b; }
Tensor operator-(Tensor a, const Tensor& b) { return a -= b; }
Tensor operator*(double s, Tensor a) { return a *= s; }

double dot(const Tensor& a, const Tensor& b) {
  if (a.size() != b.size()) throw DimensionError("dot: size mismatch");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

double norm(const Tensor& a) { return std::sqrt(dot(a, a)); }

double sum(const Tensor& a) {
  double acc = 0.0;
  for (double v : a.data()) acc += v;
  return acc;
}

bool all_finite(const Tensor& a) {
  for (double v : a.data()) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

// --- Image / Kernel ---------------------------------------------------------

Image::Image(std::size_t height, std::size_t width, double fill) : values_({height, width}, fill) {}

Image::Image(Tensor values) : values_(std::move(values)) {
  if (values_.ndim() != 2) throw DimensionError("image needs a 2-D tensor, got " + shape_string(values_.shape()));
}

Kernel::Kernel(Tensor weights) : weights_(std::move(weights)) {
  if (weights_.ndim() != 2 || weights_.dim(0) != weights_.dim(1)) {
    throw DimensionError("kernel must be square, got " + shape_string(weights_.shape()));
  }
  if (weights_.dim(0) % 2 == 0) throw DimensionError("kernel side length must be odd");
}

Kernel Kernel::delta(std::size_t size) {
  Tensor w({size, size}, 0.0);
  w[(size / 2) * size + size / 2] = 1.0;
  return Kernel(std::move(w));
}

bool Kernel::is_normalized(double tol) const {
  double total = 0.0;
  for (double v : weights_.data()) {
    if (v < 0.0) return false;
    total += v;
  }
  return std::abs(total - 1.0) <= tol;
}

Kernel Kernel::rotated180() const {
  const std::size_t d = size();
  Tensor w({d, d});
  for (std::size_t a = 0; a < d; ++a)
    for (std::size_t b = 0; b < d; ++b) w[a * d + b] = (*this)(d - 1 - a, d - 1 - b);
  return Kernel(std::move(w));
}

// --- convolution ------------------------------------------------------------

namespace {

std::size_t wrap(long long i, std::size_t n) {
  const long long m = static_cast<long long>(n);
  long long r = i % m;
  return static_cast<std::size_t>(r < 0 ? r + m : r);
}

// dst[i,j] += s * src[(i+di) mod H, (j+dj) mod W]
void accumulate_shifted(double* dst, const double* src, std::size_t h, std::size_t w, long long di, long long dj,
                        double s) {
  const std::size_t sj = wrap(dj, w);
  const std::size_t first = w - sj;  // columns j < first read src[j + sj]
  for (std::size_t i = 0; i < h; ++i) {
    const double* srow = src + wrap(static_cast<long long>(i) + di, h) * w;
    double* drow = dst + i * w;
    for (std::size_t j = 0; j < first; ++j) drow[j] += s * srow[j + sj];
    for (std::size_t j = first; j < w; ++j) drow[j] += s * srow[j + sj - w];
  }
}

// sum_{i,j} a[i,j] * b[(i+di) mod H, (j+dj) mod W]
double shifted_dot(const double* a, const double* b, std::size_t h, std::size_t w, long long di, long long dj) {
  const std::size_t sj = wrap(dj, w);
  const std::size_t first = w - sj;
  double acc = 0.0;
  for (std::size_t i = 0; i < h; ++i) {
    const double* brow = b + wrap(static_cast<long long>(i) + di, h) * w;
    const double* arow = a + i * w;
    for (std::size_t j = 0; j < first; ++j) acc += arow[j] * brow[j + sj];
    for (std::size_t j = first; j < w; ++j) acc += arow[j] * brow[j + sj - w];
  }
  return acc;
}

void check_conv_operands(const Tensor& x, const Tensor& w, std::size_t channel_axis_w) {
  if (x.ndim() != 3 || w.ndim() != 4 || w.dim(2) != w.dim(3) || w.dim(2) % 2 == 0) {
    throw DimensionError("conv2d: expected x [C,H,W] and w [Cout,Cin,D,D] with odd D, got " +
                         shape_string(x.shape()) + " and " + shape_string(w.shape()));
  }
  if (x.dim(0) != w.dim(channel_axis_w)) {
    throw DimensionError("conv2d: channel mismatch " + shape_string(x.shape()) + " vs " + shape_string(w.shape()));
  }
  if (w.dim(2) > x.dim(1) || w.dim(2) > x.dim(2)) {
    throw DimensionError("conv2d: kernel side " + std::to_string(w.dim(2)) + " exceeds image " +
                         shape_string(x.shape()));
  }
}

}  // namespace

Tensor conv2d_multi(const Tensor& x, const Tensor& w) {
  check_conv_operands(x, w, 1);
  const std::size_t cout = w.dim(0), cin = w.dim(1), d = w.dim(2), h = x.dim(1), wd = x.dim(2);
  const long long p = static_cast<long long>(d / 2);
  const std::size_t plane = h * wd;
  Tensor y({cout, h, wd});
  for (std::size_t o = 0; o < cout; ++o)
    for (std::size_t c = 0; c < cin; ++c)
      for (std::size_t a = 0; a < d; ++a)
        for (std::size_t b = 0; b < d; ++b) {
          const double wv = w[((o * cin + c) * d + a) * d + b];
          if (wv == 0.0) continue;
          accumulate_shifted(y.raw() + o * plane, x.raw() + c * plane, h, wd, p - static_cast<long long>(a),
                             p - static_cast<long long>(b), wv);
        }
  return y;
}

Tensor conv2d_multi_adjoint_input(const Tensor& g, const Tensor& w) {
  check_conv_operands(g, w, 0);
  const std::size_t cout = w.dim(0), cin = w.dim(1), d = w.dim(2), h = g.dim(1), wd = g.dim(2);
  const long long p = static_cast<long long>(d / 2);
  const std::size_t plane = h * wd;
  Tensor gx({cin, h, wd});
  for (std::size_t o = 0; o < cout; ++o)
    for (std::size_t c = 0; c < cin; ++c)
      for (std::size_t a = 0; a < d; ++a)
        for (std::size_t b = 0; b < d; ++b) {
          const double wv = w[((o * cin + c) * d + a) * d + b];
          if (wv == 0.0) continue;
          accumulate_shifted(gx.raw() + c * plane, g.raw() + o * plane, h, wd, static_cast<long long>(a) - p,
                             static_cast<long long>(b) - p, wv);
        }
  return gx;
}

Tensor conv2d_multi_adjoint_weight(const Tensor& g, const Tensor& x, std::size_t kernel_size) {
  if (g.ndim() != 3 || x.ndim() != 3 || g.dim(1) != x.dim(1) || g.dim(2) != x.dim(2)) {
    throw DimensionError("conv2d weight adjoint: incompatible " + shape_string(g.shape()) + " and " +
                         shape_string(x.shape()));
  }
  const std::size_t cout = g.dim(0), cin = x.dim(0), d = kernel_size, h = g.dim(1), wd = g.dim(2);
  const long long p = static_cast<long long>(d / 2);
  const std::size_t plane = h * wd;
  Tensor gw({cout, cin, d, d});
  for (std::size_t o = 0; o < cout; ++o)
    for (std::size_t c = 0; c < cin; ++c)
      for (std::size_t a = 0; a < d; ++a)
        for (std::size_t b = 0; b < d; ++b)
          gw[((o * cin + c) * d + a) * d + b] =
              shifted_dot(g.raw() + o * plane, x.raw() + c * plane, h, wd, p - static_cast<long long>(a),
                          p - static_cast<long long>(b));
  return gw;
}

Image conv2d_circular(const Image& x, const Kernel& k) {
  const std::size_t h = x.height(), w = x.width(), d = k.size();
  Tensor y = conv2d_multi(x.tensor().reshaped({1, h, w}), k.weights().reshaped({1, 1, d, d}));
  return Image(y.reshaped({h, w}));
}

Image conv2d_adjoint(const Image& x, const Kernel& k) {
  const std::size_t h = x.height(), w = x.width(), d = k.size();
  Tensor y = conv2d_multi_adjoint_input(x.tensor().reshaped({1, h, w}), k.weights().reshaped({1, 1, d, d}));
  return Image(y.reshaped({h, w}));
}

}  // namespace monofbf
