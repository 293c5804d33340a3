#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "core/maps.hpp"
#include "core/tensor.hpp"

namespace monofbf {

// psi_delta(x) = (tanh(delta (2x - 1)) + 1) / 2
double saturation(double x, double delta);
Tensor saturate(const Tensor& x, double delta);

// F(x) = (1/K) sum_k psi_delta(L_k x).
class SaturatedBlurModel {
 public:
  SaturatedBlurModel(std::vector<Kernel> kernels, double delta);

  const std::vector<Kernel>& kernels() const { return kernels_; }
  double delta() const { return delta_; }

 private:
  std::vector<Kernel> kernels_;
  double delta_;
};

Image apply_forward(const SaturatedBlurModel& model, const Image& x);
// (delta/K) sum_k L_k x + (1 - delta)/2
Image apply_affine_approx(const SaturatedBlurModel& model, const Image& x);
// (delta/K) sum_k L_k x
Image apply_linear_approx(const SaturatedBlurModel& model, const Image& x);

struct NoiseModel {
  double sigma = 0.0;
  std::uint64_t seed = 0;
};

// i.i.d. N(0, sigma^2), Box-Muller draws from Rng(seed).
Image add_noise(const Image& x, const NoiseModel& noise);

// Random-walk trajectory on a size x size grid, 3-tap smoothed, normalized.
Kernel generate_motion_kernel(std::size_t size, std::size_t steps, std::uint64_t seed);

// Kernel file: F32T [D, D] plus a JSON sidecar (same stem, .json) holding
// {"size": D, "normalized": bool}. Normalized kernels are renormalized in
// double precision on load.
void write_kernel(const std::filesystem::path& path, const Kernel& kernel);
Kernel read_kernel(const std::filesystem::path& path);

// The forward model and its approximations as differentiable maps.
class SaturatedBlurMap final : public DifferentiableMap {
 public:
  explicit SaturatedBlurMap(SaturatedBlurModel model) : model_(std::move(model)) {}

  void check_input(const Shape& shape) const override;
  ad::Var evaluate(const ad::Var& theta, const ad::Var& x) const override;
  ad::Var tangent(const ad::Var& theta, const ad::Var& x, const ad::Var& u) const override;

  const SaturatedBlurModel& model() const { return model_; }

 private:
  SaturatedBlurModel model_;
};

// x -> scale (1/K) sum_k L_k x + offset.
class MeanBlurMap final : public DifferentiableMap {
 public:
  MeanBlurMap(std::vector<Kernel> kernels, double scale, double offset);

  void check_input(const Shape& shape) const override;
  ad::Var evaluate(const ad::Var& theta, const ad::Var& x) const override;
  ad::Var tangent(const ad::Var& theta, const ad::Var& x, const ad::Var& u) const override;

 private:
  ad::Var blur(const ad::Var& x) const;

  std::vector<Kernel> kernels_;
  double scale_;
  double offset_;
};

enum class AnalyticModel { SaturatedBlur, Affine, Linear };

AnalyticModel parse_analytic_model(const std::string& name);
const char* analytic_model_name(AnalyticModel kind);
MapPtr make_analytic_map(const SaturatedBlurModel& model, AnalyticModel kind);

// Piecewise-smooth test image: gradient background, rectangles and discs,
// faint texture; values in [0.05, 0.95].
Image synthesize_image(std::size_t height, std::size_t width, std::uint64_t seed);

struct DatasetPair {
  std::string name;
  Image clean;
  Image measured;
};

struct SimulationReport {
  std::size_t count = 0;
  std::vector<std::string> warnings;
};

// Reads every .pgm/.f32t in clean_dir (sorted by name), writes
// clean/<stem>.f32t, measured/<stem>.f32t, measured/<stem>.pgm (clipped
// preview), kernels/kernel_<k>.f32t and manifest.json under out_dir.
SimulationReport simulate_dataset(const std::filesystem::path& clean_dir, const SaturatedBlurModel& model,
                                  const NoiseModel& noise, const std::filesystem::path& out_dir);

struct Dataset {
  std::vector<DatasetPair> pairs;
  std::vector<Kernel> kernels;
  double delta = 1.0;
  double sigma = 0.0;
};

// Reads a directory written by simulate_dataset.
Dataset load_dataset(const std::filesystem::path& dir);

}  // namespace monofbf
