#pragma once

#include <filesystem>
#include <functional>
#include <vector>

#include "core/maps.hpp"
#include "core/tensor.hpp"

namespace monofbf {

struct BoxConstraint {
  double lower = 0.0;
  double upper = 1.0;
};

struct ArmijoConfig {
  double sigma = 1.0;
  double beta = 0.5;
  double theta = 0.9;
  int max_trials = 60;
};

struct StopCriteria {
  std::size_t max_iter = 1000;
  double residual_tol = 1e-6;
};

void validate(const BoxConstraint& box);
void validate(const ArmijoConfig& cfg);
void validate(const StopCriteria& stop);

using Operator = std::function<Tensor(const Tensor&)>;

// Graph-free evaluation of a map with its current parameters.
Operator map_operator(MapPtr map);

// 0 in A(x) + rho grad_r(x) + grad_h(x) + N_C(x).
struct MonotoneInclusion {
  Operator A;
  Operator grad_h;
  BoxConstraint box;
  double rho = 0.0;
  Operator regularizer_grad;
  // Residuals are divided by |reference| when it is nonempty and nonzero,
  // otherwise by max(|x0|, 1).
  Tensor reference;
};

// B(x) = A(x) + rho grad_r(x) + grad_h(x)
Tensor evaluate_operator(const MonotoneInclusion& problem, const Tensor& x);

Tensor project_box(const Tensor& x, const BoxConstraint& box);

struct ArmijoStep {
  double gamma = 0.0;
  Tensor z;
  int trials = 0;
  Tensor Bz;
};

// Smallest i with gamma = sigma beta^i such that, for z = P_C(x - gamma B(x)),
// gamma |B(z) - B(x)| <= theta |z - x|. Throws StepSearchError past max_trials.
ArmijoStep armijo_step(const Operator& B, const Tensor& x, const Tensor& Bx, const BoxConstraint& box,
                       const ArmijoConfig& cfg);
ArmijoStep armijo_step(const Operator& B, const Tensor& x, const BoxConstraint& box, const ArmijoConfig& cfg);

struct FbfRecord {
  std::size_t k = 0;
  double gamma = 0.0;
  int trials = 0;
  // |x_{k+1} - x_k| / normalization
  double residual = 0.0;
  // |x_k - z_k| / gamma_k
  double surrogate = 0.0;
};

struct FbfTrace {
  std::vector<FbfRecord> records;
  bool converged = false;
  double normalization = 1.0;
};

struct FbfResult {
  Tensor x;
  FbfTrace trace;
};

FbfResult fbf_solve(const MonotoneInclusion& problem, const Tensor& x0, const ArmijoConfig& cfg,
                    const StopCriteria& stop);

// Solves 0 in map(x) - map(x_bar) + N_C(x) from x0 = P_C(map(x_bar)).
FbfResult invert_operator(MapPtr map, const Tensor& x_bar, const BoxConstraint& box, const ArmijoConfig& cfg,
                          const StopCriteria& stop);

// Header "k,gamma,trials,residual".
void write_trace_csv(const std::filesystem::path& path, const FbfTrace& trace);

}  // namespace monofbf
