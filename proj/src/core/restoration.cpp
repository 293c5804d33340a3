#include "core/restoration.hpp"

#include <algorithm>
#include <cmath>
#include <future>
#include <limits>

#include "core/errors.hpp"

namespace monofbf {

const char* formulation_name(Formulation f) { return f == Formulation::Direct ? "direct" : "least_squares"; }

Formulation parse_formulation(const std::string& name) {
  if (name == "direct") return Formulation::Direct;
  if (name == "least_squares" || name == "lsq") return Formulation::LeastSquares;
  throw ConfigError("unknown formulation '" + name + "' (expected direct or least_squares)");
}

namespace {

Operator tv_operator(const TvConfig& tv) {
  return [tv](const Tensor& x) { return tv_gradient(Image(x), tv).tensor(); };
}

MonotoneInclusion assemble(Operator A, Tensor rhs, const Image& y, double rho, const TvConfig& tv,
                           const BoxConstraint& box) {
  if (!(rho >= 0.0)) throw ConfigError("rho must be nonnegative");
  validate(box);
  MonotoneInclusion p;
  p.A = std::move(A);
  p.grad_h = [neg = -1.0 * rhs](const Tensor&) { return neg; };
  p.box = box;
  p.rho = rho;
  p.regularizer_grad = tv_operator(tv);
  p.reference = y.tensor();
  return p;
}

Operator adjoint_operator(MapPtr lin) {
  return [lin = std::move(lin)](const Tensor& v) {
    const Tensor zero(v.shape(), 0.0);
    return monofbf::vjp(*lin, zero, v);
  };
}

MonotoneInclusion assemble_ls(MapPtr inner, Operator adjoint, const Image& y, double rho, const TvConfig& tv,
                              const BoxConstraint& box) {
  inner->check_input(y.tensor().shape());
  Tensor rhs = adjoint(y.tensor());
  Operator A = [inner = std::move(inner), adjoint](const Tensor& x) { return adjoint(forward(*inner, x)); };
  return assemble(std::move(A), std::move(rhs), y, rho, tv, box);
}

}  // namespace

MonotoneInclusion assemble_direct(MapPtr op, const Image& y, double rho, const TvConfig& tv, const BoxConstraint& box) {
  op->check_input(y.tensor().shape());
  if (op->output_shape(y.tensor().shape()) != y.tensor().shape()) throw DimensionError("operator must be square");
  return assemble(map_operator(op), y.tensor(), y, rho, tv, box);
}

MonotoneInclusion assemble_least_squares(MapPtr inner, const Kernel& lin, const Image& y, double rho,
                                         const TvConfig& tv, const BoxConstraint& box) {
  Operator adjoint = [lin](const Tensor& v) { return conv2d_adjoint(Image(v), lin).tensor(); };
  return assemble_ls(std::move(inner), std::move(adjoint), y, rho, tv, box);
}

MonotoneInclusion assemble_least_squares(MapPtr inner, MapPtr lin, const Image& y, double rho, const TvConfig& tv,
                                         const BoxConstraint& box) {
  lin->check_input(y.tensor().shape());
  return assemble_ls(std::move(inner), adjoint_operator(std::move(lin)), y, rho, tv, box);
}

Tensor initial_point(Formulation f, const Image& y, const Kernel* lin, const BoxConstraint& box) {
  if (f == Formulation::Direct) return project_box(y.tensor(), box);
  if (!lin) throw ConfigError("least-squares initialization needs the linear kernel");
  Tensor t = conv2d_adjoint(y, *lin).tensor();
  const auto [lo, hi] = std::minmax_element(t.data().begin(), t.data().end());
  const double a = *lo, span = *hi - *lo;
  for (double& v : t.data()) v = span > 0.0 ? (v - a) / span : 0.5;
  return project_box(t, box);
}

// --- metrics ----------------------------------------------------------------

double psnr(const Image& x, const Image& ref) {
  require_same_shape(x.tensor(), ref.tensor(), "psnr");
  double mse = 0.0;
  for (std::size_t i = 0; i < x.tensor().size(); ++i) {
    const double d = x.tensor()[i] - ref.tensor()[i];
    mse += d * d;
  }
  mse /= static_cast<double>(x.tensor().size());
  if (mse == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(1.0 / mse);
}

double mae(const Image& x, const Image& ref) {
  require_same_shape(x.tensor(), ref.tensor(), "mae");
  double s = 0.0;
  for (std::size_t i = 0; i < x.tensor().size(); ++i) s += std::abs(x.tensor()[i] - ref.tensor()[i]);
  return s / static_cast<double>(x.tensor().size());
}

namespace {

constexpr double kC1 = 0.01 * 0.01;
constexpr double kC2 = 0.03 * 0.03;
constexpr std::size_t kWindow = 11;

double ssim_formula(double mx, double my, double vx, double vy, double cxy) {
  const double v = ((2.0 * mx * my + kC1) * (2.0 * cxy + kC2)) / ((mx * mx + my * my + kC1) * (vx + vy + kC2));
  return std::clamp(v, -1.0, 1.0);
}

double global_ssim(const Image& x, const Image& y) {
  const auto n = static_cast<double>(x.tensor().size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.tensor().size(); ++i) {
    mx += x.tensor()[i];
    my += y.tensor()[i];
  }
  mx /= n;
  my /= n;
  double vx = 0.0, vy = 0.0, cxy = 0.0;
  for (std::size_t i = 0; i < x.tensor().size(); ++i) {
    const double dx = x.tensor()[i] - mx, dy = y.tensor()[i] - my;
    vx += dx * dx;
    vy += dy * dy;
    cxy += dx * dy;
  }
  return ssim_formula(mx, my, vx / n, vy / n, cxy / n);
}

}  // namespace

double ssim(const Image& x, const Image& ref) {
  require_same_shape(x.tensor(), ref.tensor(), "ssim");
  const std::size_t h = x.height(), w = x.width();
  if (h < kWindow || w < kWindow) return global_ssim(x, ref);

  double g[kWindow];
  double total = 0.0;
  for (std::size_t i = 0; i < kWindow; ++i) {
    const double d = static_cast<double>(i) - 5.0;
    g[i] = std::exp(-d * d / (2.0 * 1.5 * 1.5));
    total += g[i];
  }
  for (double& v : g) v /= total;

  double acc = 0.0;
  for (std::size_t i = 0; i + kWindow <= h; ++i) {
    for (std::size_t j = 0; j + kWindow <= w; ++j) {
      double mx = 0.0, my = 0.0, sxx = 0.0, syy = 0.0, sxy = 0.0;
      for (std::size_t a = 0; a < kWindow; ++a) {
        for (std::size_t b = 0; b < kWindow; ++b) {
          const double wt = g[a] * g[b];
          const double xv = x(i + a, j + b), yv = ref(i + a, j + b);
          mx += wt * xv;
          my += wt * yv;
          sxx += wt * xv * xv;
          syy += wt * yv * yv;
          sxy += wt * xv * yv;
        }
      }
      acc += ssim_formula(mx, my, sxx - mx * mx, syy - my * my, sxy - mx * my);
    }
  }
  return acc / static_cast<double>((h - kWindow + 1) * (w - kWindow + 1));
}

MetricsReport compute_metrics(const Image& x, const Image& ref) { return {psnr(x, ref), ssim(x, ref), mae(x, ref)}; }

// --- solves -----------------------------------------------------------------

RestorationResult restore(const RestorationSpec& spec, const Image* ground_truth) {
  if (!spec.op) throw ConfigError("restoration needs an operator");
  MonotoneInclusion problem;
  const Kernel* lin = spec.lin ? &*spec.lin : nullptr;
  if (spec.formulation == Formulation::Direct) {
    problem = assemble_direct(spec.op, spec.y, spec.rho, spec.tv, spec.box);
  } else {
    if (!lin) throw ConfigError("least-squares restoration needs a linear kernel");
    problem = assemble_least_squares(spec.op, *lin, spec.y, spec.rho, spec.tv, spec.box);
  }
  FbfResult solved = fbf_solve(problem, initial_point(spec.formulation, spec.y, lin, spec.box), spec.armijo, spec.stop);
  RestorationResult out;
  out.x_hat = Image(std::move(solved.x));
  out.trace = std::move(solved.trace);
  if (ground_truth) out.metrics = compute_metrics(out.x_hat, *ground_truth);
  return out;
}

SweepTable rho_sweep(const RestorationSpec& spec, const std::vector<double>& rhos, const Image* ground_truth) {
  if (rhos.empty()) throw ConfigError("rho sweep needs at least one value");
  std::vector<std::future<RestorationResult>> jobs;
  for (double rho : rhos) {
    RestorationSpec s = spec;
    s.rho = rho;
    jobs.push_back(std::async(std::launch::async, [s = std::move(s), ground_truth] { return restore(s, ground_truth); }));
  }
  SweepTable table;
  double best = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < rhos.size(); ++i) {
    SweepRow row;
    row.rho = rhos[i];
    try {
      row.result = jobs[i].get();
      row.ok = true;
    } catch (const std::exception& e) {
      row.error = e.what();
    }
    if (row.ok && row.result.metrics && row.result.metrics->psnr > best) {
      best = row.result.metrics->psnr;
      table.best = static_cast<int>(i);
    }
    table.rows.push_back(std::move(row));
  }
  return table;
}

std::vector<double> default_rho_grid() { return {0.0, 1e-4, 1e-3, 1e-2, 1e-1}; }

}  // namespace monofbf
