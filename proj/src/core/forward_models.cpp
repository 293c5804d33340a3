#include "core/forward_models.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>

#include <json.hpp>

#include "core/errors.hpp"
#include "core/image_io.hpp"
#include "core/rng.hpp"

namespace monofbf {

namespace fs = std::filesystem;
using nlohmann::json;

double saturation(double x, double delta) { return 0.5 * (std::tanh(delta * (2.0 * x - 1.0)) + 1.0); }

Tensor saturate(const Tensor& x, double delta) {
  Tensor out = x;
  for (double& v : out.data()) v = saturation(v, delta);
  return out;
}

SaturatedBlurModel::SaturatedBlurModel(std::vector<Kernel> kernels, double delta)
    : kernels_(std::move(kernels)), delta_(delta) {
  if (kernels_.empty()) throw ConfigError("forward model needs at least one kernel");
  if (!(delta_ > 0.0) || !std::isfinite(delta_)) throw ConfigError("saturation delta must be positive");
  for (const auto& k : kernels_) {
    if (!k.is_normalized()) throw ConfigError("forward model kernels must be nonnegative with unit sum");
  }
}

namespace {

Image mean_blur(const SaturatedBlurModel& model, const Image& x) {
  Image acc(x.height(), x.width());
  for (const auto& k : model.kernels()) acc.tensor() += conv2d_circular(x, k).tensor();
  acc.tensor() *= 1.0 / static_cast<double>(model.kernels().size());
  return acc;
}

}  // namespace

Image apply_forward(const SaturatedBlurModel& model, const Image& x) {
  Image acc(x.height(), x.width());
  for (const auto& k : model.kernels()) acc.tensor() += saturate(conv2d_circular(x, k).tensor(), model.delta());
  acc.tensor() *= 1.0 / static_cast<double>(model.kernels().size());
  return acc;
}

Image apply_affine_approx(const SaturatedBlurModel& model, const Image& x) {
  Image out = mean_blur(model, x);
  for (double& v : out.tensor().data()) v = model.delta() * v + 0.5 * (1.0 - model.delta());
  return out;
}

Image apply_linear_approx(const SaturatedBlurModel& model, const Image& x) {
  Image out = mean_blur(model, x);
  out.tensor() *= model.delta();
  return out;
}

Image add_noise(const Image& x, const NoiseModel& noise) {
  if (!(noise.sigma >= 0.0)) throw ConfigError("noise sigma must be nonnegative");
  Image out = x;
  if (noise.sigma == 0.0) return out;
  Rng rng(noise.seed);
  for (double& v : out.tensor().data()) v += noise.sigma * rng.normal();
  return out;
}

Kernel generate_motion_kernel(std::size_t size, std::size_t steps, std::uint64_t seed) {
  if (size == 0 || size % 2 == 0) throw ConfigError("kernel size must be odd");
  if (steps == 0) return Kernel::delta(size);
  Rng rng(seed);
  const double c = static_cast<double>(size / 2);
  Tensor grid({size, size}, 0.0);
  double px = c, py = c;
  double angle = rng.uniform(0.0, 2.0 * std::numbers::pi);
  auto deposit = [&](double x, double y) {
    const auto i = static_cast<std::size_t>(std::lround(std::clamp(y, 0.0, 2.0 * c)));
    const auto j = static_cast<std::size_t>(std::lround(std::clamp(x, 0.0, 2.0 * c)));
    grid[i * size + j] += 1.0;
  };
  deposit(px, py);
  for (std::size_t s = 0; s < steps; ++s) {
    angle += 0.6 * rng.normal();
    px = std::clamp(px + 0.75 * std::cos(angle), 0.0, 2.0 * c);
    py = std::clamp(py + 0.75 * std::sin(angle), 0.0, 2.0 * c);
    deposit(px, py);
  }
  const double tap[3] = {0.25, 0.5, 0.25};
  Tensor tmp({size, size}, 0.0), out({size, size}, 0.0);
  for (std::size_t i = 0; i < size; ++i) {
    for (std::size_t j = 0; j < size; ++j) {
      for (int d = -1; d <= 1; ++d) {
        const auto jj = static_cast<std::ptrdiff_t>(j) + d;
        if (jj >= 0 && jj < static_cast<std::ptrdiff_t>(size)) tmp[i * size + j] += tap[d + 1] * grid[i * size + jj];
      }
    }
  }
  for (std::size_t i = 0; i < size; ++i) {
    for (std::size_t j = 0; j < size; ++j) {
      for (int d = -1; d <= 1; ++d) {
        const auto ii = static_cast<std::ptrdiff_t>(i) + d;
        if (ii >= 0 && ii < static_cast<std::ptrdiff_t>(size)) out[i * size + j] += tap[d + 1] * tmp[ii * size + j];
      }
    }
  }
  double total = 0.0;
  for (double& v : out.data()) {
    v = std::max(v, 0.0);
    total += v;
  }
  out *= 1.0 / total;
  return Kernel(std::move(out));
}

void write_kernel(const fs::path& path, const Kernel& kernel) {
  write_f32t(path, kernel.weights());
  json side = {{"size", kernel.size()}, {"normalized", kernel.is_normalized()}};
  fs::path sidecar = path;
  sidecar.replace_extension(".json");
  std::ofstream out(sidecar);
  if (!out) throw IoError("cannot write " + sidecar.string());
  out << side.dump(2) << '\n';
}

Kernel read_kernel(const fs::path& path) {
  Tensor w = read_tensor_file(path);
  if (w.ndim() != 2 || w.dim(0) != w.dim(1)) throw IoError("kernel must be a square 2-D tensor: " + path.string());
  bool normalized = true;
  fs::path sidecar = path;
  sidecar.replace_extension(".json");
  if (fs::exists(sidecar)) {
    std::ifstream in(sidecar);
    json side;
    try {
      in >> side;
    } catch (const json::exception& e) {
      throw IoError("bad kernel sidecar " + sidecar.string() + ": " + e.what());
    }
    normalized = side.value("normalized", true);
  }
  if (normalized) {
    double total = 0.0;
    for (double& v : w.data()) {
      if (v < 0.0) throw IoError("normalized kernel has negative weights: " + path.string());
      total += v;
    }
    if (!(total > 0.0)) throw IoError("normalized kernel sums to zero: " + path.string());
    w *= 1.0 / total;
  }
  return Kernel(std::move(w));
}

// --- maps -------------------------------------------------------------------

namespace {

void check_kernels_fit(const std::vector<Kernel>& kernels, const Shape& shape) {
  std::size_t d = 0;
  for (const auto& k : kernels) d = std::max(d, k.size());
  if (shape.size() != 2 || shape[0] < d || shape[1] < d) {
    throw DimensionError("blur model needs a 2-D image at least " + std::to_string(d) + " wide, got " +
                         shape_string(shape));
  }
}

ad::Var convolve(const ad::Var& x, const Kernel& k) {
  const Shape shape = x.shape();
  const std::size_t d = k.size();
  auto w = ad::Var::constant(k.weights().reshaped({1, 1, d, d}));
  return ad::reshape(ad::conv2d(ad::reshape(x, {1, shape[0], shape[1]}), w), shape);
}

}  // namespace

void SaturatedBlurMap::check_input(const Shape& shape) const { check_kernels_fit(model_.kernels(), shape); }

ad::Var SaturatedBlurMap::evaluate(const ad::Var&, const ad::Var& x) const {
  const ad::Elementwise sat{ad::Fn::Saturation, model_.delta()};
  ad::Var acc;
  for (const auto& k : model_.kernels()) {
    ad::Var term = ad::apply(convolve(x, k), sat);
    acc = acc.defined() ? ad::add(acc, term) : term;
  }
  return ad::scale(acc, 1.0 / static_cast<double>(model_.kernels().size()));
}

ad::Var SaturatedBlurMap::tangent(const ad::Var&, const ad::Var& x, const ad::Var& u) const {
  const ad::Elementwise sat{ad::Fn::Saturation, model_.delta()};
  ad::Var acc;
  for (const auto& k : model_.kernels()) {
    ad::Var term = ad::mul(ad::apply_derivative(convolve(x, k), sat), convolve(u, k));
    acc = acc.defined() ? ad::add(acc, term) : term;
  }
  return ad::scale(acc, 1.0 / static_cast<double>(model_.kernels().size()));
}

MeanBlurMap::MeanBlurMap(std::vector<Kernel> kernels, double scale, double offset)
    : kernels_(std::move(kernels)), scale_(scale), offset_(offset) {
  if (kernels_.empty()) throw ConfigError("blur map needs at least one kernel");
}

void MeanBlurMap::check_input(const Shape& shape) const { check_kernels_fit(kernels_, shape); }

ad::Var MeanBlurMap::blur(const ad::Var& x) const {
  ad::Var acc;
  for (const auto& k : kernels_) {
    ad::Var term = convolve(x, k);
    acc = acc.defined() ? ad::add(acc, term) : term;
  }
  return ad::scale(acc, scale_ / static_cast<double>(kernels_.size()));
}

ad::Var MeanBlurMap::evaluate(const ad::Var&, const ad::Var& x) const {
  ad::Var y = blur(x);
  return offset_ == 0.0 ? y : ad::add_scalar(y, offset_);
}

ad::Var MeanBlurMap::tangent(const ad::Var&, const ad::Var&, const ad::Var& u) const { return blur(u); }

AnalyticModel parse_analytic_model(const std::string& name) {
  if (name == "sat_blur") return AnalyticModel::SaturatedBlur;
  if (name == "affine") return AnalyticModel::Affine;
  if (name == "linear") return AnalyticModel::Linear;
  throw ConfigError("unknown analytic model '" + name + "' (expected sat_blur, affine or linear)");
}

const char* analytic_model_name(AnalyticModel kind) {
  switch (kind) {
    case AnalyticModel::SaturatedBlur:
      return "sat_blur";
    case AnalyticModel::Affine:
      return "affine";
    case AnalyticModel::Linear:
      return "linear";
  }
  return "?";
}

MapPtr make_analytic_map(const SaturatedBlurModel& model, AnalyticModel kind) {
  switch (kind) {
    case AnalyticModel::SaturatedBlur:
      return std::make_shared<SaturatedBlurMap>(model);
    case AnalyticModel::Affine:
      return std::make_shared<MeanBlurMap>(model.kernels(), model.delta(), 0.5 * (1.0 - model.delta()));
    case AnalyticModel::Linear:
      return std::make_shared<MeanBlurMap>(model.kernels(), model.delta(), 0.0);
  }
  throw ConfigError("unknown analytic model");
}

// --- synthetic images and datasets ------------------------------------------

Image synthesize_image(std::size_t height, std::size_t width, std::uint64_t seed) {
  if (height == 0 || width == 0) throw ConfigError("image dimensions must be positive");
  Rng rng(seed);
  Image img(height, width);
  const double h = static_cast<double>(height), w = static_cast<double>(width);
  const double base = rng.uniform(0.2, 0.8);
  const double gy = rng.uniform(-0.3, 0.3), gx = rng.uniform(-0.3, 0.3);
  for (std::size_t i = 0; i < height; ++i) {
    for (std::size_t j = 0; j < width; ++j) img(i, j) = base + gy * (i / h - 0.5) + gx * (j / w - 0.5);
  }
  const std::size_t shapes = 3 + rng.index(4);
  for (std::size_t s = 0; s < shapes; ++s) {
    const double level = rng.uniform(0.05, 0.95);
    const double cy = rng.uniform(0.0, h), cx = rng.uniform(0.0, w);
    const double ry = rng.uniform(0.1, 0.35) * h, rx = rng.uniform(0.1, 0.35) * w;
    const bool disc = rng.uniform() < 0.5;
    for (std::size_t i = 0; i < height; ++i) {
      for (std::size_t j = 0; j < width; ++j) {
        const double dy = (static_cast<double>(i) - cy) / ry, dx = (static_cast<double>(j) - cx) / rx;
        const bool inside = disc ? dy * dy + dx * dx <= 1.0 : std::abs(dy) <= 1.0 && std::abs(dx) <= 1.0;
        if (inside) img(i, j) = level;
      }
    }
  }
  const double amp = rng.uniform(0.0, 0.08);
  const double fy = rng.uniform(0.5, 3.0), fx = rng.uniform(0.5, 3.0), phase = rng.uniform(0.0, 6.28);
  for (std::size_t i = 0; i < height; ++i) {
    for (std::size_t j = 0; j < width; ++j) {
      const double t = std::sin(2.0 * std::numbers::pi * (fy * i / h + fx * j / w) + phase);
      img(i, j) = std::clamp(img(i, j) + amp * t, 0.05, 0.95);
    }
  }
  return img;
}

SimulationReport simulate_dataset(const fs::path& clean_dir, const SaturatedBlurModel& model, const NoiseModel& noise,
                                  const fs::path& out_dir) {
  if (!fs::is_directory(clean_dir)) throw IoError("not a directory: " + clean_dir.string());
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(clean_dir)) {
    if (entry.is_regular_file() && is_image_file(entry.path())) files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  if (files.empty()) throw IoError("no .pgm or .f32t images in " + clean_dir.string());

  fs::create_directories(out_dir / "clean");
  fs::create_directories(out_dir / "measured");
  fs::create_directories(out_dir / "kernels");

  json manifest;
  manifest["format"] = "monofbf-dataset";
  manifest["version"] = 1;
  manifest["delta"] = model.delta();
  manifest["sigma"] = noise.sigma;
  manifest["seed"] = noise.seed;
  manifest["kernels"] = json::array();
  for (std::size_t k = 0; k < model.kernels().size(); ++k) {
    const std::string rel = "kernels/kernel_" + std::to_string(k) + ".f32t";
    write_kernel(out_dir / rel, model.kernels()[k]);
    manifest["kernels"].push_back(rel);
  }

  SimulationReport report;
  manifest["pairs"] = json::array();
  Rng seeds(noise.seed);
  for (const auto& file : files) {
    const std::uint64_t image_seed = seeds.next_u64();
    Image clean(1, 1);
    try {
      clean = read_image_file(file);
    } catch (const Error& e) {
      report.warnings.push_back(std::string("skipped: ") + e.what());
      continue;
    }
    Image y = add_noise(apply_forward(model, clean), {noise.sigma, image_seed});
    const std::string stem = file.stem().string();
    write_f32t(out_dir / "clean" / (stem + ".f32t"), clean.tensor());
    write_f32t(out_dir / "measured" / (stem + ".f32t"), y.tensor());
    write_pgm(out_dir / "measured" / (stem + ".pgm"), y);
    manifest["pairs"].push_back(
        {{"name", stem}, {"clean", "clean/" + stem + ".f32t"}, {"measured", "measured/" + stem + ".f32t"}});
    ++report.count;
  }
  if (report.count == 0) throw IoError("no readable images in " + clean_dir.string());
  manifest["skipped"] = report.warnings;
  std::ofstream out(out_dir / "manifest.json");
  if (!out) throw IoError("cannot write manifest in " + out_dir.string());
  out << manifest.dump(2) << '\n';
  return report;
}

Dataset load_dataset(const fs::path& dir) {
  std::ifstream in(dir / "manifest.json");
  if (!in) throw IoError("no manifest.json in " + dir.string());
  json manifest;
  try {
    in >> manifest;
  } catch (const json::exception& e) {
    throw IoError("bad manifest in " + dir.string() + ": " + e.what());
  }
  if (manifest.value("format", "") != "monofbf-dataset") throw IoError("not a dataset manifest: " + dir.string());
  Dataset ds;
  try {
    ds.delta = manifest.at("delta").get<double>();
    ds.sigma = manifest.at("sigma").get<double>();
    for (const auto& k : manifest.at("kernels")) ds.kernels.push_back(read_kernel(dir / k.get<std::string>()));
    for (const auto& p : manifest.at("pairs")) {
      ds.pairs.push_back({p.at("name").get<std::string>(), read_image_file(dir / p.at("clean").get<std::string>()),
                          read_image_file(dir / p.at("measured").get<std::string>())});
    }
  } catch (const json::exception& e) {
    throw IoError("bad manifest in " + dir.string() + ": " + e.what());
  }
  if (ds.pairs.empty()) throw IoError("dataset has no pairs: " + dir.string());
  return ds;
}

}  // namespace monofbf
