#include "core/fbf.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>

#include "core/errors.hpp"

namespace monofbf {

void validate(const BoxConstraint& box) {
  if (!(box.lower < box.upper)) throw ConfigError("box constraint needs lower < upper");
}

void validate(const ArmijoConfig& cfg) {
  if (!(cfg.sigma > 0.0)) throw ConfigError("armijo sigma must be positive");
  if (!(cfg.beta > 0.0 && cfg.beta < 1.0)) throw ConfigError("armijo beta must lie in (0, 1)");
  if (!(cfg.theta > 0.0 && cfg.theta < 1.0)) throw ConfigError("armijo theta must lie in (0, 1)");
  if (cfg.max_trials < 0) throw ConfigError("armijo max_trials must be nonnegative");
}

void validate(const StopCriteria& stop) {
  if (stop.max_iter < 1) throw ConfigError("max_iter must be at least 1");
  if (!(stop.residual_tol >= 0.0)) throw ConfigError("residual_tol must be nonnegative");
}

Operator map_operator(MapPtr map) {
  return [map = std::move(map)](const Tensor& x) { return forward(*map, x); };
}

Tensor evaluate_operator(const MonotoneInclusion& problem, const Tensor& x) {
  Tensor b = problem.A(x);
  require_same_shape(b, x, "inclusion operator A");
  if (problem.rho != 0.0) {
    if (!problem.regularizer_grad) throw ConfigError("rho > 0 needs a regularizer gradient");
    b.axpy(problem.rho, problem.regularizer_grad(x));
  }
  if (problem.grad_h) b += problem.grad_h(x);
  return b;
}

Tensor project_box(const Tensor& x, const BoxConstraint& box) {
  Tensor out = x;
  for (double& v : out.data()) v = std::clamp(v, box.lower, box.upper);
  return out;
}

ArmijoStep armijo_step(const Operator& B, const Tensor& x, const Tensor& Bx, const BoxConstraint& box,
                       const ArmijoConfig& cfg) {
  validate(cfg);
  double gamma = cfg.sigma;
  double lhs = 0.0, rhs = 0.0;
  for (int i = 0; i <= cfg.max_trials; ++i, gamma *= cfg.beta) {
    Tensor step = x;
    step.axpy(-gamma, Bx);
    Tensor z = project_box(step, box);
    Tensor Bz = B(z);
    if (!all_finite(Bz)) throw NumericalError("operator returned non-finite values during step search");
    lhs = gamma * norm(Bz - Bx);
    rhs = cfg.theta * norm(z - x);
    if (lhs <= rhs) return {gamma, std::move(z), i, std::move(Bz)};
  }
  throw StepSearchError("armijo step search exceeded " + std::to_string(cfg.max_trials) + " trials",
                        gamma / cfg.beta, cfg.max_trials, lhs, rhs);
}

ArmijoStep armijo_step(const Operator& B, const Tensor& x, const BoxConstraint& box, const ArmijoConfig& cfg) {
  return armijo_step(B, x, B(x), box, cfg);
}

FbfResult fbf_solve(const MonotoneInclusion& problem, const Tensor& x0, const ArmijoConfig& cfg,
                    const StopCriteria& stop) {
  validate(problem.box);
  validate(cfg);
  validate(stop);
  if (!problem.A) throw ConfigError("inclusion has no operator A");
  if (!all_finite(x0)) throw NumericalError("initial point is not finite");
  const Operator B = [&problem](const Tensor& x) { return evaluate_operator(problem, x); };

  FbfResult result;
  result.x = project_box(x0, problem.box);
  const double ref = problem.reference.empty() ? 0.0 : norm(problem.reference);
  result.trace.normalization = ref > 0.0 ? ref : std::max(norm(result.x), 1.0);

  for (std::size_t k = 0; k < stop.max_iter; ++k) {
    const Tensor a = B(result.x);
    if (!all_finite(a)) throw NumericalError("operator returned non-finite values at iteration " + std::to_string(k));
    ArmijoStep s = armijo_step(B, result.x, a, problem.box, cfg);
    Tensor corr = s.z;
    corr.axpy(-s.gamma, s.Bz - a);
    Tensor next = project_box(corr, problem.box);
    if (!all_finite(next)) throw NumericalError("non-finite iterate at iteration " + std::to_string(k));
    FbfRecord rec{k, s.gamma, s.trials, norm(next - result.x) / result.trace.normalization,
                  norm(result.x - s.z) / s.gamma};
    result.trace.records.push_back(rec);
    result.x = std::move(next);
    if (rec.residual <= stop.residual_tol) {
      result.trace.converged = true;
      break;
    }
  }
  return result;
}

FbfResult invert_operator(MapPtr map, const Tensor& x_bar, const BoxConstraint& box, const ArmijoConfig& cfg,
                          const StopCriteria& stop) {
  Tensor y = forward(*map, x_bar);
  MonotoneInclusion problem;
  problem.A = map_operator(map);
  problem.grad_h = [neg = -1.0 * y](const Tensor&) { return neg; };
  problem.box = box;
  problem.reference = y;
  return fbf_solve(problem, project_box(y, box), cfg, stop);
}

void write_trace_csv(const std::filesystem::path& path, const FbfTrace& trace) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << "k,gamma,trials,residual\n" << std::setprecision(17);
  for (const auto& r : trace.records) out << r.k << ',' << r.gamma << ',' << r.trials << ',' << r.residual << '\n';
  if (!out) throw IoError("write failed: " + path.string());
}

}  // namespace monofbf
