#include "core/spectral.hpp"

#include <cmath>
#include <limits>

namespace monofbf {

void validate(const ProbeConfig& cfg) {
  if (cfg.n_iter < 1) throw ConfigError("probe n_iter must be at least 1");
  if (!(cfg.shift_margin > 1.0)) throw ConfigError("probe shift_margin must exceed 1");
}

namespace {

constexpr int kMaxRestarts = 3;

Tensor unit_gaussian(const Shape& shape, Rng& rng) {
  Tensor u = rng.normal_tensor(shape);
  u *= 1.0 / norm(u);
  return u;
}

// J^s(x) u through one cached reverse graph and the tangent rule.
class SymJacobian {
 public:
  SymJacobian(const DifferentiableMap& map, const Tensor& theta, const Tensor& x)
      : bound_(map, ad::Var::constant(theta)), x_(ad::Var::constant(x)) {
    ad::RecordingScope recording;
    x_leaf_ = ad::Var::leaf(x);
    y_ = bound_(x_leaf_);
    if (y_.shape() != x.shape()) throw DimensionError("symmetric Jacobian needs a square map");
  }

  Tensor operator()(const Tensor& u) const {
    Tensor out;
    {
      ad::DetachedScope detached;
      out = bound_.tangent(x_, ad::Var::constant(u)).value();
    }
    out += ad::backward(y_, u, std::span<const ad::Var>(&x_leaf_, 1))[0];
    out *= 0.5;
    return out;
  }

 private:
  BoundMap bound_;
  ad::Var x_;
  ad::Var x_leaf_;
  ad::Var y_;
};

}  // namespace

PowerResult power_max_abs_eig(const LinearAction& apply, const Shape& shape, std::size_t n_iter, Rng& rng) {
  if (shape_size(shape) == 0) throw DimensionError("power iteration needs a positive dimension");
  if (n_iter < 1) throw ConfigError("power iteration needs n_iter >= 1");
  Tensor u = unit_gaussian(shape, rng);
  int restarts = 0;
  for (std::size_t k = 0; k < n_iter; ++k) {
    Tensor w = apply(u);
    if (!all_finite(w)) throw NumericalError("power iteration produced non-finite values");
    const double nw = norm(w);
    if (nw <= std::numeric_limits<double>::min()) {
      if (++restarts > kMaxRestarts) throw ZeroIterateError("power iteration: zero iterate after restarts");
      u = unit_gaussian(shape, rng);
      k = static_cast<std::size_t>(-1);
      continue;
    }
    w *= 1.0 / nw;
    u = std::move(w);
  }
  const Tensor au = apply(u);
  return {dot(u, au) / dot(u, u), std::move(u), n_iter};
}

PowerResult power_max_abs_eig(const LinearAction& apply, const Shape& shape, const ProbeConfig& cfg) {
  validate(cfg);
  Rng rng(cfg.seed);
  return power_max_abs_eig(apply, shape, cfg.n_iter, rng);
}

SpectralEstimate lambda_min_sym_jacobian(const BoundMap& bound, const Tensor& x, const ProbeConfig& cfg,
                                         bool record_gradient, Rng& rng) {
  validate(cfg);
  const DifferentiableMap& map = bound.map();
  map.check_input(x.shape());
  if (!all_finite(x)) throw NumericalError("spectral probe point is not finite");
  const Tensor theta = bound.theta().defined() ? bound.theta().value() : Tensor{};
  const SymJacobian js(map, theta, x);

  SpectralEstimate est;
  try {
    est.quotient = power_max_abs_eig(js, x.shape(), cfg.n_iter, rng).value;
  } catch (const ZeroIterateError&) {
    est.quotient = 0.0;
  }
  const double q = std::abs(est.quotient);
  est.rho_hat = q < 1e-9 ? 1e-3 : cfg.shift_margin * q + 1e-6;

  const double rho = est.rho_hat;
  auto shifted = [&](const Tensor& u) {
    Tensor out = rho * u;
    out -= js(u);
    return out;
  };
  PowerResult stage2 = power_max_abs_eig(shifted, x.shape(), cfg.n_iter, rng);
  est.iterations = stage2.iterations;
  est.witness = std::move(stage2.vector);

  const Tensor& v = est.witness;
  const double vv = dot(v, v);
  if (record_gradient) {
    ad::RecordingScope recording;
    ad::Var jv = bound.tangent(ad::Var::constant(x), ad::Var::constant(v));
    ad::Var quad = ad::dot(ad::Var::constant(v), jv);
    ad::Var chi = ad::scale(ad::add_scalar(ad::scale(quad, -1.0), rho * vv), 1.0 / vv);
    est.lambda_graph = ad::add_scalar(ad::scale(chi, -1.0), rho);
    est.chi_hat = chi.value().item();
  } else {
    est.chi_hat = dot(v, shifted(v)) / vv;
  }
  est.lambda_min = est.rho_hat - est.chi_hat;
  return est;
}

SpectralEstimate lambda_min_sym_jacobian(const DifferentiableMap& map, const Tensor& x, const ProbeConfig& cfg) {
  Rng rng(cfg.seed);
  return lambda_min_sym_jacobian(bind_constant(map), x, cfg, false, rng);
}

CertificateReport monotonicity_certificate(const DifferentiableMap& map, const std::vector<Tensor>& probes,
                                           double beta, const ProbeConfig& cfg, double tolerance) {
  if (probes.empty()) throw ConfigError("monotonicity certificate needs at least one probe point");
  const ReflectedMap reflected(borrow(map));
  CertificateReport report;
  report.beta = beta;
  report.min_lambda_T = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < probes.size(); ++i) {
    ProbeConfig c = cfg;
    c.seed = cfg.seed + i;
    const SpectralEstimate est = lambda_min_sym_jacobian(reflected, probes[i], c);
    CertificateSample s{est.lambda_min, 0.5 * (est.lambda_min + 1.0), est.iterations, est.rho_hat};
    report.min_lambda_T = std::min(report.min_lambda_T, s.lambda_min_T);
    report.samples.push_back(s);
  }
  report.passed = report.min_lambda_T >= beta - tolerance;
  return report;
}

}  // namespace monofbf
