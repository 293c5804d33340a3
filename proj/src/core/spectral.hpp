#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "core/errors.hpp"
#include "core/maps.hpp"
#include "core/rng.hpp"

namespace monofbf {

struct ProbeConfig {
  std::size_t n_iter = 100;
  // rho_hat = shift_margin * |q| + 1e-6
  double shift_margin = 1.05;
  std::uint64_t seed = 0;
};

void validate(const ProbeConfig& cfg);

struct SpectralEstimate {
  double rho_hat = 0.0;
  double chi_hat = 0.0;
  // rho_hat - chi_hat
  double lambda_min = 0.0;
  Tensor witness;
  std::size_t iterations = 0;
  // Stage-1 Rayleigh quotient.
  double quotient = 0.0;
  // lambda_min as a recorded scalar; defined only when a gradient was requested.
  ad::Var lambda_graph;
};

// The iterate vanished on every restart.
class ZeroIterateError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

using LinearAction = std::function<Tensor(const Tensor&)>;

struct PowerResult {
  double value = 0.0;
  Tensor vector;
  std::size_t iterations = 0;
};

// n_iter normalized power steps from a Gaussian start, then the Rayleigh
// quotient of the final iterate. A zero iterate triggers a fresh start, at
// most three times.
PowerResult power_max_abs_eig(const LinearAction& apply, const Shape& shape, std::size_t n_iter, Rng& rng);
PowerResult power_max_abs_eig(const LinearAction& apply, const Shape& shape, const ProbeConfig& cfg);

// Two-stage estimate of lambda_min(J^s(x)) with both power iterations run
// detached. With record_gradient the final Rayleigh quotient is recorded
// against bound.theta() (through v^T J v, which equals v^T J^s v).
SpectralEstimate lambda_min_sym_jacobian(const BoundMap& bound, const Tensor& x, const ProbeConfig& cfg,
                                         bool record_gradient, Rng& rng);
SpectralEstimate lambda_min_sym_jacobian(const DifferentiableMap& map, const Tensor& x, const ProbeConfig& cfg);

struct CertificateSample {
  double lambda_min_R = 0.0;
  double lambda_min_T = 0.0;
  std::size_t iterations = 0;
  double rho_hat = 0.0;
};

struct CertificateReport {
  std::vector<CertificateSample> samples;
  double min_lambda_T = 0.0;
  double beta = 0.0;
  bool passed = false;
};

// lambda_min(J^s_T) = (lambda_min(J^s_{2T-I}) + 1) / 2 per probe point; pass
// iff the minimum is at least beta - tolerance. Probe i uses seed cfg.seed + i.
CertificateReport monotonicity_certificate(const DifferentiableMap& map, const std::vector<Tensor>& probes,
                                           double beta, const ProbeConfig& cfg, double tolerance = 0.0);

}  // namespace monofbf
