#include "core/regularizers.hpp"

#include <cmath>

#include "core/errors.hpp"

namespace monofbf {

namespace {

void check_config(const TvConfig& cfg) {
  if (!(cfg.epsilon_tv > 0.0)) throw ConfigError("epsilon_tv must be positive");
}

}  // namespace

double tv_value(const Image& x, const TvConfig& cfg) {
  check_config(cfg);
  const std::size_t h = x.height(), w = x.width();
  double r = 0.0;
  for (std::size_t i = 0; i < h; ++i) {
    for (std::size_t j = 0; j < w; ++j) {
      const double gh = x(i, (j + 1) % w) - x(i, j);
      const double gv = x((i + 1) % h, j) - x(i, j);
      r += std::sqrt(gh * gh + gv * gv + cfg.epsilon_tv);
    }
  }
  return r;
}

Image tv_gradient(const Image& x, const TvConfig& cfg) {
  check_config(cfg);
  const std::size_t h = x.height(), w = x.width();
  Image ph(h, w), pv(h, w);
  for (std::size_t i = 0; i < h; ++i) {
    for (std::size_t j = 0; j < w; ++j) {
      const double gh = x(i, (j + 1) % w) - x(i, j);
      const double gv = x((i + 1) % h, j) - x(i, j);
      const double s = std::sqrt(gh * gh + gv * gv + cfg.epsilon_tv);
      ph(i, j) = gh / s;
      pv(i, j) = gv / s;
    }
  }
  // D^T p at (i,j) = p[prev] - p[here]
  Image g(h, w);
  for (std::size_t i = 0; i < h; ++i) {
    for (std::size_t j = 0; j < w; ++j) {
      g(i, j) = ph(i, (j + w - 1) % w) - ph(i, j) + pv((i + h - 1) % h, j) - pv(i, j);
    }
  }
  return g;
}

TvGradientMap::TvGradientMap(TvConfig cfg) : cfg_(cfg) { check_config(cfg_); }

void TvGradientMap::check_input(const Shape& shape) const {
  if (shape.size() != 2) throw DimensionError("TV gradient needs a 2-D image, got " + shape_string(shape));
}

namespace {

const ad::Elementwise kSquare{ad::Fn::Square};
const ad::Elementwise kSqrt{ad::Fn::Sqrt};

}  // namespace

ad::Var TvGradientMap::evaluate(const ad::Var&, const ad::Var& x) const {
  ad::Var gh = ad::difference(x, 1, false);
  ad::Var gv = ad::difference(x, 0, false);
  ad::Var s = ad::apply(ad::add_scalar(ad::add(ad::apply(gh, kSquare), ad::apply(gv, kSquare)), cfg_.epsilon_tv), kSqrt);
  return ad::add(ad::difference(ad::div(gh, s), 1, true), ad::difference(ad::div(gv, s), 0, true));
}

// D^T [ Du / s - g (g . Du) / s^3 ]
ad::Var TvGradientMap::tangent(const ad::Var&, const ad::Var& x, const ad::Var& u) const {
  ad::Var gh = ad::difference(x, 1, false);
  ad::Var gv = ad::difference(x, 0, false);
  ad::Var s = ad::apply(ad::add_scalar(ad::add(ad::apply(gh, kSquare), ad::apply(gv, kSquare)), cfg_.epsilon_tv), kSqrt);
  ad::Var dh = ad::difference(u, 1, false);
  ad::Var dv = ad::difference(u, 0, false);
  ad::Var s3 = ad::mul(ad::mul(s, s), s);
  ad::Var inner = ad::div(ad::add(ad::mul(gh, dh), ad::mul(gv, dv)), s3);
  ad::Var th = ad::sub(ad::div(dh, s), ad::mul(gh, inner));
  ad::Var tv = ad::sub(ad::div(dv, s), ad::mul(gv, inner));
  return ad::add(ad::difference(th, 1, true), ad::difference(tv, 0, true));
}

}  // namespace monofbf
