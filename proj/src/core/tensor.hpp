#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace monofbf {

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& shape);
std::string shape_string(const Shape& shape);

// Dense row-major array of doubles with an explicit shape.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> data);

  static Tensor scalar(double value) { return Tensor({1}, value); }

  const Shape& shape() const { return shape_; }
  std::size_t ndim() const { return shape_.size(); }
  std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }
  double* raw() { return data_.data(); }
  const double* raw() const { return data_.data(); }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  // Value of a one-element tensor.
  double item() const;

  Tensor reshaped(Shape shape) const;

  Tensor& operator+=(const Tensor& other);
  Tensor& operator-=(const Tensor& other);
  Tensor& operator*=(double s);
  // this += s * other
  Tensor& axpy(double s, const Tensor& other);

 private:
  Shape shape_;
  std::vector<double> data_;
};

Tensor operator+(Tensor a, const Tensor& b);
Tensor operator-(Tensor a, const Tensor& b);
Tensor operator*(double s, Tensor a);

double dot(const Tensor& a, const Tensor& b);
double norm(const Tensor& a);
double sum(const Tensor& a);
bool all_finite(const Tensor& a);
void require_same_shape(const Tensor& a, const Tensor& b, const char* context);

// Grayscale image stored as a [height, width] tensor, nominal range [0,1].
class Image {
 public:
  Image(std::size_t height, std::size_t width, double fill = 0.0);
  explicit Image(Tensor values);

  std::size_t height() const { return values_.dim(0); }
  std::size_t width() const { return values_.dim(1); }

  double operator()(std::size_t i, std::size_t j) const { return values_[i * width() + j]; }
  double& operator()(std::size_t i, std::size_t j) { return values_[i * width() + j]; }

  const Tensor& tensor() const { return values_; }
  Tensor& tensor() { return values_; }

 private:
  Tensor values_;
};

// Square convolution kernel with odd side length, centered at (D/2, D/2).
class Kernel {
 public:
  explicit Kernel(Tensor weights);

  static Kernel delta(std::size_t size);

  std::size_t size() const { return weights_.dim(0); }
  double operator()(std::size_t a, std::size_t b) const { return weights_[a * size() + b]; }
  const Tensor& weights() const { return weights_; }

  // Nonnegative with unit sum.
  bool is_normalized(double tol = 1e-12) const;
  Kernel rotated180() const;

 private:
  Tensor weights_;
};

// Circular (periodic) convolution: y[i,j] = sum_{a,b} k[a,b] x[i-a+c, j-b+c], c = D/2.
Image conv2d_circular(const Image& x, const Kernel& k);
// Exact adjoint of conv2d_circular, i.e. circular correlation with k.
Image conv2d_adjoint(const Image& x, const Kernel& k);

// Multi-channel variants with the same index convention.
// x: [Cin,H,W], w: [Cout,Cin,D,D] -> [Cout,H,W].
Tensor conv2d_multi(const Tensor& x, const Tensor& w);
// Adjoint with respect to the input. g: [Cout,H,W] -> [Cin,H,W].
Tensor conv2d_multi_adjoint_input(const Tensor& g, const Tensor& w);
// Adjoint with respect to the weights. g: [Cout,H,W], x: [Cin,H,W] -> [Cout,Cin,D,D].
Tensor conv2d_multi_adjoint_weight(const Tensor& g, const Tensor& x, std::size_t kernel_size);

}  // namespace monofbf
