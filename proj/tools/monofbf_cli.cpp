// Command-line front end over the C API. Every subcommand builds a JSON
// request (optionally seeded from --config), runs it, and prints the JSON
// summary on stdout. Exit codes: 0 success, 1 usage/config error, 2 numerical
// failure. Errors go to stderr as {"error": {"status": ..., "message": ...}}.

#include <fstream>
#include <functional>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "monofbf/monofbf.h"

using nlohmann::json;

namespace {

int report_error(const std::string& status, const std::string& message, int code) {
  std::cerr << json{{"error", {{"status", status}, {"message", message}}}}.dump() << '\n';
  return code;
}

int exit_code(mfb_status s) {
  if (s == MFB_OK) return 0;
  if (s == MFB_ERR_NUMERICAL || s == MFB_ERR_STEP_SEARCH) return 2;
  return 1;
}

void set_path(json& j, const std::string& dotted, json value) {
  std::string pointer = "/" + dotted;
  for (auto& c : pointer) {
    if (c == '.') c = '/';
  }
  j[json::json_pointer(pointer)] = std::move(value);
}

// Collects optional flags into request keys (dotted paths for nested keys).
class Request {
 public:
  explicit Request(CLI::App* app) : app_(app) {
    app_->add_option("--config", config_, "JSON request file; flags override its keys")->check(CLI::ExistingFile);
  }

  template <typename T>
  void option(const std::string& flag, const std::string& key, const std::string& help) {
    auto value = std::make_shared<std::optional<T>>();
    app_->add_option(flag, *value, help);
    setters_.push_back([value, key](json& j) {
      if (*value) set_path(j, key, **value);
    });
  }

  void flag(const std::string& flag, const std::string& key, const std::string& help) {
    auto value = std::make_shared<bool>(false);
    app_->add_flag(flag, *value, help);
    setters_.push_back([value, key](json& j) {
      if (*value) set_path(j, key, true);
    });
  }

  // --analytic KIND with --dataset or --kernels/--delta, or --model PATH.
  void operator_source(bool dataset_flag = true) {
    option<std::string>("--model", "model", "Checkpoint header (.json) or prefix");
    option<std::string>("--analytic", "analytic.kind", "Analytic operator: sat_blur, affine or linear");
    if (dataset_flag) option<std::string>("--dataset", "analytic.dataset", "Dataset whose kernels and delta define --analytic");
    option<std::vector<std::string>>("--kernels", "analytic.kernels", "Kernel files for --analytic");
    option<double>("--delta", "analytic.delta", "Saturation delta for --analytic");
  }

  void solver_options() {
    option<double>("--lower", "box.lower", "Box constraint lower bound (default 0)");
    option<double>("--upper", "box.upper", "Box constraint upper bound (default 1)");
    option<double>("--armijo-sigma", "armijo.sigma", "Initial step sigma (default 1)");
    option<double>("--armijo-beta", "armijo.beta", "Backtracking factor beta (default 0.5)");
    option<double>("--armijo-theta", "armijo.theta", "Acceptance constant theta (default 0.9)");
    option<int>("--max-trials", "armijo.max_trials", "Backtracking budget (default 60)");
    option<std::size_t>("--max-iter", "stop.max_iter", "Iteration budget (default 1000)");
    option<double>("--tol", "stop.residual_tol", "Residual tolerance (default 1e-6)");
  }

  void add_setter(std::function<void(json&)> fn) { setters_.push_back(std::move(fn)); }

  json build() const {
    json j = json::object();
    if (!config_.empty()) {
      std::ifstream in(config_);
      try {
        in >> j;
      } catch (const json::exception& e) {
        throw std::runtime_error("cannot parse " + config_ + ": " + e.what());
      }
    }
    for (const auto& s : setters_) s(j);
    return j;
  }

 private:
  CLI::App* app_;
  std::string config_;
  std::vector<std::function<void(json&)>> setters_;
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Monotone operator learning and FBF image restoration"};
  app.require_subcommand(1);
  app.set_version_flag("--version", mfb_version());

  std::vector<std::pair<CLI::App*, std::unique_ptr<Request>>> commands;
  auto add = [&](const std::string& name, const std::string& help) -> Request& {
    CLI::App* sub = app.add_subcommand(name, help);
    commands.emplace_back(sub, std::make_unique<Request>(sub));
    return *commands.back().second;
  };

  {
    Request& r = add("synth", "Generate synthetic clean test images (PGM)");
    r.option<std::string>("--out-dir", "out_dir", "Output directory");
    r.option<std::size_t>("--count", "count", "Number of images (default 8)");
    r.option<std::size_t>("--height", "height", "Image height (default 64)");
    r.option<std::size_t>("--width", "width", "Image width (default 64)");
    r.option<std::uint64_t>("--seed", "seed", "Seed (default 0)");
  }
  {
    Request& r = add("simulate", "Simulate measurements y = F(x) + w from clean images");
    r.option<std::string>("--clean-dir", "clean_dir", "Directory of clean .pgm/.f32t images");
    r.option<std::string>("--out-dir", "out_dir", "Dataset output directory");
    r.option<std::vector<std::string>>("--kernels", "kernels", "Kernel files; random motion kernels if omitted");
    r.option<std::size_t>("--kernel-count", "kernel_count", "Number of generated kernels K (default 1)");
    r.option<std::size_t>("--kernel-size", "kernel_size", "Generated kernel side length (default 5)");
    r.option<std::size_t>("--kernel-steps", "kernel_steps", "Random-walk steps per kernel (default 8)");
    r.option<double>("--delta", "delta", "Saturation delta (default 0.6)");
    r.option<double>("--sigma", "sigma", "Noise standard deviation (default 0)");
    r.option<std::uint64_t>("--seed", "seed", "Seed (default 0)");
  }
  {
    Request& r = add("train", "Train a mon, nom, lsq_mon or linear model");
    r.option<std::string>("--dataset", "dataset", "Dataset directory written by simulate");
    r.option<std::string>("--out", "out", "Checkpoint prefix");
    r.option<std::string>("--variant", "variant", "mon, nom, lsq_mon or linear (default mon)");
    r.option<std::size_t>("--epochs", "epochs", "Epochs (default 200)");
    r.option<std::size_t>("--batch-size", "batch_size", "Batch size (default 8)");
    r.option<double>("--xi0", "xi0", "Initial penalty weight (default 0.1)");
    r.option<double>("--delta-xi", "delta_xi", "Penalty weight increment per epoch (default 0.1)");
    r.option<double>("--epsilon", "epsilon", "Penalty severity (default 0.01)");
    r.option<double>("--lr", "learning_rate", "Adam learning rate (default 2e-4; 0.02 for linear)");
    r.option<double>("--lr-decay", "lr_decay", "Plateau decay factor (default 0.1)");
    r.option<std::uint64_t>("--seed", "seed", "Seed (default 0)");
    r.option<std::size_t>("--probe-iter", "probe.n_iter", "Power iterations per stage (default 20)");
    r.option<std::string>("--lin-kernel", "lin_kernel", "Kernel file used as L_lin for lsq_mon");
    r.option<std::size_t>("--lin-kernel-size", "lin_kernel_size", "Learned kernel size (default: dataset kernel size)");
    r.option<std::string>("--activation", "architecture.activation", "elu or leaky_relu (default elu)");
    r.flag("--verbose", "verbose", "Log every epoch to stderr");
  }
  {
    Request& r = add("audit", "Spectral monotonicity audit over a set of probe images");
    r.operator_source();
    r.option<std::string>("--probes", "probes", "Directory of probe images or a dataset directory");
    r.option<std::string>("--target", "target", "operator (trained target) or network (default operator)");
    r.option<std::size_t>("--n-iter", "n_iter", "Power iterations per stage (default 100)");
    r.option<std::uint64_t>("--seed", "seed", "Seed (default 0)");
    r.option<double>("--beta", "beta", "Certificate threshold (default 0)");
    r.option<double>("--tolerance", "tolerance", "Certificate tolerance (default 0)");
    r.option<std::string>("--out", "out", "CSV output path");
  }
  {
    Request& r = add("restore", "Restore an image by solving the monotone inclusion with FBF");
    r.operator_source();
    r.option<std::string>("--formulation", "formulation", "direct or least_squares (default direct)");
    r.option<double>("--rho", "rho", "Regularization weight (default 0)");
    auto sweep = std::make_shared<std::optional<std::string>>();
    commands.back().first->add_option("--rho-sweep", *sweep, "Comma-separated rho values, or 'default'");
    r.add_setter([sweep](json& j) {
      if (!*sweep) return;
      if (**sweep == "default") {
        j["rho_sweep"] = "default";
        return;
      }
      json list = json::array();
      std::stringstream ss(**sweep);
      for (std::string item; std::getline(ss, item, ',');) list.push_back(std::stod(item));
      j["rho_sweep"] = list;
    });
    r.option<std::string>("--y", "y", "Measurement image");
    r.option<std::string>("--ref", "ref", "Ground truth for metrics (optional)");
    r.option<std::string>("--out", "out", "Output prefix");
    r.option<double>("--tv-epsilon", "tv_epsilon", "TV smoothing (default 1e-3)");
    r.option<std::string>("--lin-kernel", "lin_kernel", "Kernel file for the least-squares form");
    r.solver_options();
  }
  {
    Request& r = add("invert", "Invert a monotone model: recover x from F(x)");
    r.operator_source();
    r.option<std::string>("--x-bar", "x_bar", "Image to push through the model and recover");
    r.option<std::string>("--target", "target", "network or operator (default network)");
    r.option<std::string>("--out", "out", "Output prefix");
    r.solver_options();
  }
  {
    Request& r = add("metrics", "PSNR, SSIM and MAE between two images");
    r.option<std::string>("--x", "x", "Image");
    r.option<std::string>("--ref", "ref", "Reference image");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return report_error("usage", e.what(), 1);
  }

  for (const auto& [sub, request] : commands) {
    if (!sub->parsed()) continue;
    json j;
    try {
      j = request->build();
    } catch (const std::exception& e) {
      return report_error("usage", e.what(), 1);
    }
    char* summary = nullptr;
    const mfb_status s = mfb_run(sub->get_name().c_str(), j.dump().c_str(), &summary);
    if (s != MFB_OK) return report_error(mfb_status_name(s), mfb_last_error(), exit_code(s));
    std::cout << summary << '\n';
    mfb_string_free(summary);
    return 0;
  }
  return report_error("usage", "no subcommand given", 1);
}
