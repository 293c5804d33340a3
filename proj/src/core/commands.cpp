#include "core/commands.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <set>

#include "core/checkpoint.hpp"
#include "core/errors.hpp"
#include "core/fbf.hpp"
#include "core/forward_models.hpp"
#include "core/image_io.hpp"
#include "core/regularizers.hpp"
#include "core/restoration.hpp"
#include "core/spectral.hpp"
#include "core/trainer.hpp"

namespace monofbf::commands {

namespace fs = std::filesystem;

namespace {

// Typed access to one request object; unknown keys are rejected up front and
// every value read (or defaulted) is recorded for the config snapshot.
class Fields {
 public:
  Fields(json obj, std::string where, const std::set<std::string>& allowed)
      : obj_(std::move(obj)), where_(std::move(where)) {
    if (!obj_.is_object()) throw ConfigError(where_ + ": expected a JSON object");
    for (const auto& [key, value] : obj_.items()) {
      if (!allowed.count(key)) throw ConfigError(where_ + ": unknown key '" + key + "'");
    }
  }

  bool has(const std::string& key) const { return obj_.contains(key) && !obj_[key].is_null(); }

  template <typename T>
  T get(const std::string& key, T fallback) {
    T value = has(key) ? convert<T>(key) : std::move(fallback);
    resolved_[key] = value;
    return value;
  }

  template <typename T>
  T required(const std::string& key) {
    if (!has(key)) throw ConfigError(where_ + ": missing required key '" + key + "'");
    T value = convert<T>(key);
    resolved_[key] = value;
    return value;
  }

  const json& raw(const std::string& key) const { return obj_.at(key); }
  json object(const std::string& key) const { return has(key) ? obj_.at(key) : json::object(); }
  void record(const std::string& key, json value) { resolved_[key] = std::move(value); }
  const json& resolved() const { return resolved_; }
  const std::string& where() const { return where_; }

 private:
  template <typename T>
  T convert(const std::string& key) const {
    try {
      return obj_.at(key).get<T>();
    } catch (const json::exception&) {
      throw ConfigError(where_ + ": key '" + key + "' has the wrong type");
    }
  }

  json obj_;
  std::string where_;
  json resolved_ = json::object();
};

void write_json(const fs::path& path, const json& value) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << value.dump(2) << '\n';
}

fs::path with_suffix(const fs::path& prefix, const std::string& suffix) { return fs::path(prefix.string() + suffix); }

void prepare_prefix(const fs::path& prefix) {
  if (prefix.has_parent_path()) fs::create_directories(prefix.parent_path());
}

ProbeConfig read_probe(Fields& f, std::size_t default_iter) {
  ProbeConfig p;
  p.n_iter = f.get<std::size_t>("n_iter", default_iter);
  p.shift_margin = f.get<double>("shift_margin", 1.05);
  p.seed = f.get<std::uint64_t>("seed", 0);
  validate(p);
  return p;
}

BoxConstraint read_box(const Fields& parent, json& resolved) {
  Fields f(parent.object("box"), parent.where() + ".box", {"lower", "upper"});
  BoxConstraint b{f.get<double>("lower", 0.0), f.get<double>("upper", 1.0)};
  validate(b);
  resolved["box"] = f.resolved();
  return b;
}

ArmijoConfig read_armijo(const Fields& parent, json& resolved) {
  Fields f(parent.object("armijo"), parent.where() + ".armijo", {"sigma", "beta", "theta", "max_trials"});
  ArmijoConfig a{f.get<double>("sigma", 1.0), f.get<double>("beta", 0.5), f.get<double>("theta", 0.9),
                 f.get<int>("max_trials", 60)};
  validate(a);
  resolved["armijo"] = f.resolved();
  return a;
}

StopCriteria read_stop(const Fields& parent, json& resolved) {
  Fields f(parent.object("stop"), parent.where() + ".stop", {"max_iter", "residual_tol"});
  StopCriteria s{f.get<std::size_t>("max_iter", 1000), f.get<double>("residual_tol", 1e-6)};
  validate(s);
  resolved["stop"] = f.resolved();
  return s;
}

std::vector<std::pair<std::string, Image>> read_image_dir(const fs::path& dir) {
  std::vector<std::pair<std::string, Image>> out;
  if (fs::exists(dir / "manifest.json")) {
    for (auto& p : load_dataset(dir).pairs) out.emplace_back(p.name, std::move(p.clean));
    return out;
  }
  if (!fs::is_directory(dir)) throw IoError("not a directory: " + dir.string());
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_regular_file() && is_image_file(e.path())) files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  for (const auto& f : files) out.emplace_back(f.stem().string(), read_image_file(f));
  if (out.empty()) throw IoError("no images in " + dir.string());
  return out;
}

Kernel mean_kernel(const std::vector<Kernel>& kernels) {
  std::size_t d = 0;
  for (const auto& k : kernels) d = std::max(d, k.size());
  Tensor acc({d, d}, 0.0);
  for (const auto& k : kernels) {
    const std::size_t off = (d - k.size()) / 2;
    for (std::size_t a = 0; a < k.size(); ++a) {
      for (std::size_t b = 0; b < k.size(); ++b) acc[(a + off) * d + b + off] += k(a, b);
    }
  }
  acc *= 1.0 / static_cast<double>(kernels.size());
  return Kernel(std::move(acc));
}

// The operator named by a request: a checkpoint ("model") or an analytic
// forward model ("analytic").
struct OperatorSource {
  MapPtr forward;
  MapPtr audit;
  std::optional<Kernel> kernel;
};

OperatorSource resolve_operator(Fields& f) {
  const bool has_model = f.has("model"), has_analytic = f.has("analytic");
  if (has_model == has_analytic) throw ConfigError(f.where() + ": give exactly one of 'model' or 'analytic'");
  OperatorSource src;
  if (has_model) {
    const auto op = load_checkpoint(f.required<std::string>("model"));
    src.forward = op.forward_map();
    src.audit = op.operator_for_audit();
    src.kernel = op.kernel();
    return src;
  }
  Fields a(f.raw("analytic"), f.where() + ".analytic", {"kind", "dataset", "kernels", "delta"});
  const AnalyticModel kind = parse_analytic_model(a.get<std::string>("kind", "sat_blur"));
  std::vector<Kernel> kernels;
  double delta = 0.0;
  if (a.has("dataset")) {
    if (a.has("kernels") || a.has("delta")) throw ConfigError(a.where() + ": 'dataset' excludes 'kernels' and 'delta'");
    Dataset ds = load_dataset(a.required<std::string>("dataset"));
    kernels = std::move(ds.kernels);
    delta = ds.delta;
  } else {
    for (const auto& p : a.required<std::vector<std::string>>("kernels")) kernels.push_back(read_kernel(p));
    delta = a.required<double>("delta");
  }
  SaturatedBlurModel model(kernels, delta);
  src.forward = make_analytic_map(model, kind);
  src.audit = src.forward;
  src.kernel = mean_kernel(kernels);
  f.record("analytic", a.resolved());
  return src;
}

ConvNetConfig read_architecture(const Fields& parent, json& resolved) {
  Fields f(parent.object("architecture"), parent.where() + ".architecture",
           {"channels", "kernel_size", "activation", "elu_alpha", "leaky_slope", "residual"});
  ConvNetConfig c;
  c.channels = f.get<std::vector<std::size_t>>("channels", c.channels);
  c.kernel_size = f.get<std::size_t>("kernel_size", c.kernel_size);
  c.activation = parse_activation(f.get<std::string>("activation", "elu"));
  c.elu_alpha = f.get<double>("elu_alpha", c.elu_alpha);
  c.leaky_slope = f.get<double>("leaky_slope", c.leaky_slope);
  c.residual = f.get<bool>("residual", c.residual);
  resolved["architecture"] = f.resolved();
  return c;
}

json metrics_json(const MetricsReport& m) { return {{"psnr", psnr_json(m.psnr)}, {"ssim", m.ssim}, {"mae", m.mae}}; }

json trace_summary(const FbfTrace& t) {
  return {{"iterations", t.records.size()},
          {"converged", t.converged},
          {"initial_residual", t.records.empty() ? 0.0 : t.records.front().residual},
          {"final_residual", t.records.empty() ? 0.0 : t.records.back().residual}};
}

void write_image_outputs(const fs::path& prefix, const Image& x, const FbfTrace& trace) {
  prepare_prefix(prefix);
  write_f32t(with_suffix(prefix, ".f32t"), x.tensor());
  write_pgm(with_suffix(prefix, ".pgm"), x);
  write_trace_csv(with_suffix(prefix, ".trace.csv"), trace);
}

}  // namespace

json psnr_json(double value) {
  if (std::isinf(value)) return "inf";
  return value;
}

// --- synth / simulate ---------------------------------------------------------

json synth(const json& request) {
  Fields f(request, "synth", {"out_dir", "count", "height", "width", "seed"});
  const fs::path out = f.required<std::string>("out_dir");
  const auto count = f.get<std::size_t>("count", 8);
  const auto h = f.get<std::size_t>("height", 64), w = f.get<std::size_t>("width", 64);
  const auto seed = f.get<std::uint64_t>("seed", 0);
  if (count == 0) throw ConfigError("synth: count must be positive");
  fs::create_directories(out);
  Rng seeds(seed);
  for (std::size_t i = 0; i < count; ++i) {
    std::ostringstream name;
    name << "img_" << std::setw(3) << std::setfill('0') << i << ".pgm";
    write_pgm(out / name.str(), synthesize_image(h, w, seeds.next_u64()));
  }
  write_json(out / "config.json", f.resolved());
  return {{"count", count}, {"out_dir", out.string()}};
}

json simulate(const json& request) {
  Fields f(request, "simulate",
           {"clean_dir", "out_dir", "kernels", "kernel_count", "kernel_size", "kernel_steps", "delta", "sigma", "seed"});
  const fs::path clean = f.required<std::string>("clean_dir");
  const fs::path out = f.required<std::string>("out_dir");
  const double delta = f.get<double>("delta", 0.6);
  const double sigma = f.get<double>("sigma", 0.0);
  const auto seed = f.get<std::uint64_t>("seed", 0);
  std::vector<Kernel> kernels;
  if (f.has("kernels")) {
    for (const auto& p : f.required<std::vector<std::string>>("kernels")) kernels.push_back(read_kernel(p));
  } else {
    const auto count = f.get<std::size_t>("kernel_count", 1);
    const auto size = f.get<std::size_t>("kernel_size", 5);
    const auto steps = f.get<std::size_t>("kernel_steps", 8);
    Rng seeds(seed ^ 0x6b65726e656cULL);
    for (std::size_t k = 0; k < count; ++k) kernels.push_back(generate_motion_kernel(size, steps, seeds.next_u64()));
  }
  const SaturatedBlurModel model(std::move(kernels), delta);
  const SimulationReport report = simulate_dataset(clean, model, {sigma, seed}, out);
  write_json(out / "config.json", f.resolved());
  for (const auto& w : report.warnings) std::cerr << "warning: " << w << '\n';
  return {{"count", report.count}, {"warnings", report.warnings}, {"manifest", (out / "manifest.json").string()}};
}

// --- train --------------------------------------------------------------------

json train(const json& request) {
  Fields f(request, "train",
           {"dataset", "out", "variant", "epochs", "batch_size", "xi0", "delta_xi", "epsilon", "learning_rate",
            "lr_decay", "plateau_window", "plateau_threshold", "seed", "probe", "architecture", "lin_kernel",
            "lin_kernel_size", "lin_epochs", "lin_learning_rate", "verbose"});
  const fs::path dataset_dir = f.required<std::string>("dataset");
  const fs::path out = f.required<std::string>("out");
  const bool verbose = f.get<bool>("verbose", false);
  TrainConfig cfg;
  cfg.variant = parse_variant(f.get<std::string>("variant", "mon"));
  const bool linear = cfg.variant == Variant::Linear;
  cfg.epochs = f.get<std::size_t>("epochs", 200);
  cfg.batch_size = f.get<std::size_t>("batch_size", 8);
  cfg.xi0 = f.get<double>("xi0", 0.1);
  cfg.delta_xi = f.get<double>("delta_xi", 0.1);
  cfg.epsilon = f.get<double>("epsilon", 0.01);
  cfg.learning_rate = f.get<double>("learning_rate", linear ? 0.02 : 2e-4);
  cfg.lr_decay = f.get<double>("lr_decay", 0.1);
  cfg.plateau_window = f.get<std::size_t>("plateau_window", 10);
  cfg.plateau_threshold = f.get<double>("plateau_threshold", 1e-4);
  cfg.seed = f.get<std::uint64_t>("seed", 0);
  json resolved = f.resolved();
  {
    Fields p(f.object("probe"), "train.probe", {"n_iter", "shift_margin", "seed"});
    cfg.probe = read_probe(p, 20);
    resolved["probe"] = p.resolved();
  }
  validate(cfg);

  const Dataset ds = load_dataset(dataset_dir);
  std::vector<TrainingPair> pairs;
  for (const auto& p : ds.pairs) pairs.push_back({p.clean, p.measured});

  TrainHistory history;
  std::optional<LearnedOperator> op;
  auto log_epoch = [&](const EpochRecord& r) {
    if (verbose) {
      std::cerr << "epoch " << r.epoch << " data_loss " << r.data_loss << " penalty " << r.penalty << " xi " << r.xi
                << " lr " << r.lr << '\n';
    }
  };

  auto learn_kernel = [&](std::size_t size_default) {
    TrainConfig lc = cfg;
    lc.variant = Variant::Linear;
    lc.epochs = f.get<std::size_t>("lin_epochs", linear ? cfg.epochs : 200);
    lc.learning_rate = f.get<double>("lin_learning_rate", linear ? cfg.learning_rate : 0.02);
    const auto size = f.get<std::size_t>("lin_kernel_size", size_default);
    return train_linear_kernel(pairs, size, lc, linear ? &history : nullptr);
  };

  if (linear) {
    op = LearnedOperator::linear(learn_kernel(ds.kernels.front().size()), cfg.seed);
    for (const auto& r : history.epochs) log_epoch(r);
  } else {
    const ConvNetConfig arch = read_architecture(f, resolved);
    auto net = std::make_shared<ResidualConvNet>(arch);
    net->initialize(cfg.seed);
    std::optional<Kernel> lin;
    MapPtr outer;
    if (cfg.variant == Variant::LsqMon) {
      lin = f.has("lin_kernel") ? read_kernel(f.required<std::string>("lin_kernel"))
                                : learn_kernel(ds.kernels.front().size());
      outer = std::make_shared<ConvolutionMap>(*lin, 1.0, 0.0, true);
    }
    history = monofbf::train(*net, pairs, cfg, outer, log_epoch);
    op = LearnedOperator::network(cfg.variant, net, cfg.seed, lin);
  }
  for (const auto& [k, v] : f.resolved().items()) resolved[k] = v;

  const EpochRecord last = history.epochs.back();
  op->training() = {{"dataset", dataset_dir.string()},
                    {"pairs", pairs.size()},
                    {"epochs", history.epochs.size()},
                    {"final_data_loss", last.data_loss},
                    {"final_penalty", last.penalty},
                    {"final_xi", last.xi},
                    {"config", resolved}};
  const fs::path header = save_checkpoint(out, *op);
  const fs::path hist = with_suffix(out, ".history.csv");
  {
    std::ofstream csv(hist);
    if (!csv) throw IoError("cannot write " + hist.string());
    csv << "epoch,data_loss,penalty,xi,lr\n" << std::setprecision(10);
    for (const auto& r : history.epochs) {
      csv << r.epoch << ',' << r.data_loss << ',' << r.penalty << ',' << r.xi << ',' << r.lr << '\n';
    }
  }
  write_json(with_suffix(out, ".config.json"), resolved);
  return {{"checkpoint", header.string()},
          {"history", hist.string()},
          {"epochs", history.epochs.size()},
          {"final_data_loss", last.data_loss},
          {"final_penalty", last.penalty}};
}

// --- audit --------------------------------------------------------------------

json audit(const json& request) {
  Fields f(request, "audit",
           {"model", "analytic", "probes", "target", "n_iter", "shift_margin", "seed", "beta", "tolerance", "out"});
  OperatorSource src = resolve_operator(f);
  const std::string target = f.get<std::string>("target", "operator");
  if (target != "operator" && target != "network") throw ConfigError("audit: target must be operator or network");
  const MapPtr map = target == "network" ? src.forward : src.audit;
  const ProbeConfig probe = read_probe(f, 100);
  const double beta = f.get<double>("beta", 0.0);
  const double tol = f.get<double>("tolerance", 0.0);
  const fs::path out = f.required<std::string>("out");
  const auto images = read_image_dir(f.required<std::string>("probes"));

  std::vector<Tensor> probes;
  for (const auto& [name, img] : images) probes.push_back(img.tensor());
  const CertificateReport report = monotonicity_certificate(*map, probes, beta, probe, tol);

  prepare_prefix(out);
  std::ofstream csv(out);
  if (!csv) throw IoError("cannot write " + out.string());
  csv << "sample_id,lambda_min_R,lambda_min_T,iterations,rho_hat\n" << std::setprecision(12);
  for (std::size_t i = 0; i < images.size(); ++i) {
    const auto& s = report.samples[i];
    csv << images[i].first << ',' << s.lambda_min_R << ',' << s.lambda_min_T << ',' << s.iterations << ','
        << s.rho_hat << '\n';
  }
  fs::path cfg_path = out;
  cfg_path.replace_extension(".config.json");
  write_json(cfg_path, f.resolved());
  return {{"count", images.size()},
          {"min_lambda_T", report.min_lambda_T},
          {"beta", beta},
          {"passed", report.passed},
          {"csv", out.string()}};
}

// --- restore / invert -----------------------------------------------------------

json restore(const json& request) {
  Fields f(request, "restore",
           {"model", "analytic", "formulation", "rho", "rho_sweep", "y", "ref", "out", "tv_epsilon", "box", "armijo",
            "stop", "lin_kernel"});
  OperatorSource src = resolve_operator(f);
  RestorationSpec spec;
  spec.formulation = parse_formulation(f.get<std::string>("formulation", "direct"));
  spec.op = src.forward;
  if (f.has("lin_kernel")) {
    spec.lin = read_kernel(f.required<std::string>("lin_kernel"));
  } else {
    spec.lin = src.kernel;
  }
  if (spec.formulation == Formulation::LeastSquares && !spec.lin) {
    throw ConfigError("restore: least_squares needs 'lin_kernel' or a model that carries one");
  }
  spec.y = read_image_file(f.required<std::string>("y"));
  spec.tv.epsilon_tv = f.get<double>("tv_epsilon", 1e-3);
  const fs::path out = f.required<std::string>("out");
  std::optional<Image> ref;
  if (f.has("ref")) ref = read_image_file(f.required<std::string>("ref"));
  json resolved = f.resolved();
  spec.box = read_box(f, resolved);
  spec.armijo = read_armijo(f, resolved);
  spec.stop = read_stop(f, resolved);

  std::vector<double> rhos;
  bool sweep = f.has("rho_sweep");
  if (sweep && f.has("rho")) throw ConfigError("restore: give 'rho' or 'rho_sweep', not both");
  if (sweep) {
    const json& s = f.raw("rho_sweep");
    if (s.is_string() && s.get<std::string>() == "default") {
      rhos = default_rho_grid();
    } else {
      rhos = f.required<std::vector<double>>("rho_sweep");
    }
    resolved["rho_sweep"] = rhos;
  } else {
    rhos = {f.get<double>("rho", 0.0)};
    resolved["rho"] = rhos.front();
  }
  const Image* gt = ref ? &*ref : nullptr;

  json summary;
  json metrics;
  if (ref) metrics["observation"] = metrics_json(compute_metrics(spec.y, *ref));
  if (!sweep) {
    spec.rho = rhos.front();
    const RestorationResult r = monofbf::restore(spec, gt);
    write_image_outputs(out, r.x_hat, r.trace);
    metrics["rho"] = spec.rho;
    metrics["trace"] = trace_summary(r.trace);
    if (r.metrics) metrics["restored"] = metrics_json(*r.metrics);
  } else {
    const SweepTable table = rho_sweep(spec, rhos, gt);
    json rows = json::array();
    for (std::size_t i = 0; i < table.rows.size(); ++i) {
      const auto& row = table.rows[i];
      json j = {{"rho", row.rho}, {"ok", row.ok}};
      if (row.ok) {
        write_image_outputs(with_suffix(out, ".rho" + std::to_string(i)), row.result.x_hat, row.result.trace);
        j["trace"] = trace_summary(row.result.trace);
        if (row.result.metrics) j["restored"] = metrics_json(*row.result.metrics);
      } else {
        j["error"] = row.error;
      }
      rows.push_back(j);
    }
    metrics["sweep"] = rows;
    if (table.best >= 0) {
      const auto& best = table.rows[static_cast<std::size_t>(table.best)];
      write_image_outputs(out, best.result.x_hat, best.result.trace);
      metrics["rho"] = best.rho;
      metrics["trace"] = trace_summary(best.result.trace);
      metrics["restored"] = metrics_json(*best.result.metrics);
    }
  }
  write_json(with_suffix(out, ".metrics.json"), metrics);
  write_json(with_suffix(out, ".config.json"), resolved);
  summary = metrics;
  summary["out"] = out.string();
  return summary;
}

json invert(const json& request) {
  Fields f(request, "invert", {"model", "analytic", "target", "x_bar", "out", "box", "armijo", "stop"});
  OperatorSource src = resolve_operator(f);
  const std::string target = f.get<std::string>("target", "network");
  if (target != "operator" && target != "network") throw ConfigError("invert: target must be operator or network");
  const MapPtr map = target == "network" ? src.forward : src.audit;
  const Image x_bar = read_image_file(f.required<std::string>("x_bar"));
  const fs::path out = f.required<std::string>("out");
  json resolved = f.resolved();
  const BoxConstraint box = read_box(f, resolved);
  const ArmijoConfig armijo = read_armijo(f, resolved);
  const StopCriteria stop = read_stop(f, resolved);
  const FbfResult r = invert_operator(map, x_bar.tensor(), box, armijo, stop);
  const Image x_hat(r.x);
  write_image_outputs(out, x_hat, r.trace);
  json metrics = {{"recovered", metrics_json(compute_metrics(x_hat, x_bar))}, {"trace", trace_summary(r.trace)}};
  write_json(with_suffix(out, ".metrics.json"), metrics);
  write_json(with_suffix(out, ".config.json"), resolved);
  metrics["out"] = out.string();
  return metrics;
}

json metrics(const json& request) {
  Fields f(request, "metrics", {"x", "ref"});
  const std::string x_path = f.required<std::string>("x"), ref_path = f.required<std::string>("ref");
  const Image x = read_image_file(x_path);
  const Image ref = read_image_file(ref_path);
  return metrics_json(compute_metrics(x, ref));
}

json run(const std::string& name, const json& request) {
  try {
    if (name == "synth") return synth(request);
    if (name == "simulate") return simulate(request);
    if (name == "train") return train(request);
    if (name == "audit") return audit(request);
    if (name == "restore") return restore(request);
    if (name == "invert") return invert(request);
    if (name == "metrics") return metrics(request);
  } catch (const json::exception& e) {
    throw ConfigError(name + ": " + e.what());
  } catch (const fs::filesystem_error& e) {
    throw IoError(name + ": " + e.what());
  }
  throw ConfigError("unknown command '" + name + "'");
}

}  // namespace monofbf::commands
