#pragma once

#include "core/maps.hpp"
#include "core/tensor.hpp"

namespace monofbf {

struct TvConfig {
  double epsilon_tv = 1e-3;
};

// r(x) = sum_i sqrt((D_h x)_i^2 + (D_v x)_i^2 + eps), circular forward differences.
double tv_value(const Image& x, const TvConfig& cfg = {});
// D_h^T p_h + D_v^T p_v with p_d = D_d x / sqrt(...): the exact gradient of tv_value.
Image tv_gradient(const Image& x, const TvConfig& cfg = {});

// x -> grad r(x) as a differentiable map.
class TvGradientMap final : public DifferentiableMap {
 public:
  explicit TvGradientMap(TvConfig cfg = {});

  void check_input(const Shape& shape) const override;
  ad::Var evaluate(const ad::Var& theta, const ad::Var& x) const override;
  ad::Var tangent(const ad::Var& theta, const ad::Var& x, const ad::Var& u) const override;

 private:
  TvConfig cfg_;
};

}  // namespace monofbf
