#pragma once

#include <optional>
#include <string>
#include <vector>

#include "core/fbf.hpp"
#include "core/maps.hpp"
#include "core/regularizers.hpp"

namespace monofbf {

enum class Formulation { Direct, LeastSquares };

const char* formulation_name(Formulation f);
Formulation parse_formulation(const std::string& name);

// A = op + rho grad_r, grad_h = -y.
MonotoneInclusion assemble_direct(MapPtr op, const Image& y, double rho, const TvConfig& tv, const BoxConstraint& box);

// A = L^T op + rho grad_r, grad_h = -L^T y.
MonotoneInclusion assemble_least_squares(MapPtr inner, const Kernel& lin, const Image& y, double rho,
                                         const TvConfig& tv, const BoxConstraint& box);
// Same with L given as a linear map; L^T is applied by reverse accumulation.
MonotoneInclusion assemble_least_squares(MapPtr inner, MapPtr lin, const Image& y, double rho, const TvConfig& tv,
                                         const BoxConstraint& box);

// P_C(y) for the direct form; P_C of L^T y min-max rescaled to [0, 1] otherwise.
Tensor initial_point(Formulation f, const Image& y, const Kernel* lin, const BoxConstraint& box);

struct MetricsReport {
  double psnr = 0.0;
  double ssim = 0.0;
  double mae = 0.0;
};

// 10 log10(1 / MSE); +infinity for identical images.
double psnr(const Image& x, const Image& ref);
// Mean SSIM over valid 11x11 Gaussian windows (sigma 1.5); global SSIM for
// images smaller than the window.
double ssim(const Image& x, const Image& ref);
double mae(const Image& x, const Image& ref);
MetricsReport compute_metrics(const Image& x, const Image& ref);

struct RestorationSpec {
  Formulation formulation = Formulation::Direct;
  MapPtr op;
  // Required for the least-squares form.
  std::optional<Kernel> lin;
  Image y{1, 1};
  double rho = 0.0;
  TvConfig tv;
  BoxConstraint box;
  ArmijoConfig armijo;
  StopCriteria stop;
};

struct RestorationResult {
  Image x_hat{1, 1};
  FbfTrace trace;
  std::optional<MetricsReport> metrics;
};

RestorationResult restore(const RestorationSpec& spec, const Image* ground_truth = nullptr);

struct SweepRow {
  double rho = 0.0;
  bool ok = false;
  std::string error;
  RestorationResult result;
};

struct SweepTable {
  std::vector<SweepRow> rows;
  // Row with the highest PSNR among successful rows; -1 if none succeeded or
  // no ground truth was given.
  int best = -1;
};

// Solves one problem per rho concurrently; failures are recorded per row.
SweepTable rho_sweep(const RestorationSpec& spec, const std::vector<double>& rhos, const Image* ground_truth);

std::vector<double> default_rho_grid();

}  // namespace monofbf
