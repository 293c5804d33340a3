#include "core/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

namespace monofbf {

const char* variant_name(Variant v) {
  switch (v) {
    case Variant::Mon:
      return "mon";
    case Variant::Nom:
      return "nom";
    case Variant::LsqMon:
      return "lsq_mon";
    case Variant::Linear:
      return "linear";
  }
  return "?";
}

Variant parse_variant(const std::string& name) {
  if (name == "mon") return Variant::Mon;
  if (name == "nom") return Variant::Nom;
  if (name == "lsq_mon") return Variant::LsqMon;
  if (name == "linear") return Variant::Linear;
  throw ConfigError("unknown variant '" + name + "' (expected mon, nom, lsq_mon or linear)");
}

void validate(const TrainConfig& cfg) {
  if (cfg.epochs < 1) throw ConfigError("epochs must be at least 1");
  if (cfg.batch_size < 1) throw ConfigError("batch_size must be at least 1");
  if (!(cfg.epsilon > 0.0)) throw ConfigError("epsilon must be positive");
  if (!(cfg.xi0 >= 0.0) || !(cfg.delta_xi >= 0.0)) throw ConfigError("xi0 and delta_xi must be nonnegative");
  if (!(cfg.learning_rate >= 0.0)) throw ConfigError("learning_rate must be nonnegative");
  if (!(cfg.lr_decay > 0.0 && cfg.lr_decay <= 1.0)) throw ConfigError("lr_decay must lie in (0, 1]");
  if (cfg.plateau_window < 1) throw ConfigError("plateau_window must be at least 1");
  validate(cfg.probe);
}

AdamState make_adam_state(const ParameterVector& params) {
  AdamState s;
  s.first_moment = Tensor({std::max<std::size_t>(params.size(), 1)}, 0.0);
  s.second_moment = s.first_moment;
  return s;
}

void adam_step(ParameterVector& params, const ParameterVector& grad, AdamState& state, double lr) {
  if (!params.same_layout(grad)) throw DimensionError("adam: gradient layout does not match parameters");
  if (state.first_moment.size() != params.size() || state.second_moment.size() != params.size()) {
    throw DimensionError("adam: moment size does not match parameters");
  }
  ++state.step_count;
  const double t = static_cast<double>(state.step_count);
  const double c1 = 1.0 - std::pow(state.beta1, t);
  const double c2 = 1.0 - std::pow(state.beta2, t);
  Tensor& p = params.values();
  const Tensor& g = grad.values();
  Tensor& m = state.first_moment;
  Tensor& v = state.second_moment;
  for (std::size_t i = 0; i < p.size(); ++i) {
    m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * g[i];
    v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * g[i] * g[i];
    p[i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + state.eps_adam);
  }
}

double l1_loss(const Tensor& pred, const Tensor& target) {
  require_same_shape(pred, target, "l1_loss");
  double s = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) s += std::abs(pred[i] - target[i]);
  return s / static_cast<double>(pred.size());
}

ad::Var l1_loss(const ad::Var& pred, const ad::Var& target) {
  require_same_shape(pred.value(), target.value(), "l1_loss");
  return ad::mean(ad::apply(ad::sub(pred, target), {ad::Fn::Abs}));
}

double penalty_value(double lambda_min_R, double epsilon) { return -std::min(1.0 + lambda_min_R, epsilon); }

PenaltyTerm penalty(const BoundMap& bound, const Tensor& x_tilde, double epsilon, const ProbeConfig& probe, Rng& rng) {
  if (!(epsilon > 0.0)) throw ConfigError("penalty epsilon must be positive");
  const ReflectedMap reflected(borrow(bound.map()));
  PenaltyTerm term;
  term.estimate = lambda_min_sym_jacobian(BoundMap(reflected, bound.theta()), x_tilde, probe, true, rng);
  term.value = ad::scale(ad::min_with(ad::add_scalar(term.estimate.lambda_graph, 1.0), epsilon), -1.0);
  return term;
}

Tensor sample_penal_point(const TrainingPair& pair, double nu) {
  require_same_shape(pair.input.tensor(), pair.target.tensor(), "penalty sample");
  Tensor out = nu * pair.input.tensor();
  out.axpy(1.0 - nu, pair.target.tensor());
  return out;
}

Tensor sample_penal_point(const TrainingPair& pair, Rng& rng) { return sample_penal_point(pair, rng.uniform()); }

namespace {

std::string dump_state(std::size_t epoch, std::size_t batch, double xi, double lr, double data, double pen,
                       const ParameterVector& params) {
  std::ostringstream os;
  os << "non-finite training loss {epoch: " << epoch << ", batch: " << batch << ", xi: " << xi << ", lr: " << lr
     << ", data_loss: " << data << ", penalty: " << pen << ", param_norm: " << norm(params.values())
     << ", params_finite: " << (all_finite(params.values()) ? "true" : "false") << "}";
  return os.str();
}

void check_dataset(const std::vector<TrainingPair>& dataset) {
  if (dataset.empty()) throw ConfigError("training dataset is empty");
  for (const auto& p : dataset) require_same_shape(p.input.tensor(), p.target.tensor(), "training pair");
}

// Plateau rule on the epoch mean data loss.
class PlateauSchedule {
 public:
  PlateauSchedule(double lr, double decay, std::size_t window, double threshold)
      : lr_(lr), decay_(decay), window_(window), threshold_(threshold) {}

  double lr() const { return lr_; }

  void observe(double loss) {
    if (loss < best_ - threshold_) {
      best_ = loss;
      stale_ = 0;
    } else if (++stale_ >= window_) {
      lr_ *= decay_;
      stale_ = 0;
    }
  }

 private:
  double lr_;
  double decay_;
  std::size_t window_;
  double threshold_;
  double best_ = std::numeric_limits<double>::infinity();
  std::size_t stale_ = 0;
};

}  // namespace

TrainHistory train(DifferentiableMap& model, const std::vector<TrainingPair>& dataset, const TrainConfig& cfg,
                   MapPtr penalty_outer, const EpochCallback& on_epoch) {
  validate(cfg);
  check_dataset(dataset);
  if (cfg.variant == Variant::Linear) throw ConfigError("variant linear is trained by train_linear_kernel");
  if (cfg.variant == Variant::LsqMon && !penalty_outer) throw ConfigError("variant lsq_mon needs the linear operator");
  for (const auto& p : dataset) model.check_input(p.input.tensor().shape());

  const bool nominal = cfg.variant == Variant::Nom;
  const double xi0 = nominal ? 0.0 : cfg.xi0;
  const double dxi = nominal ? 0.0 : cfg.delta_xi;

  std::unique_ptr<CompositeMap> composite;
  if (cfg.variant == Variant::LsqMon) composite = std::make_unique<CompositeMap>(penalty_outer, borrow(model));
  const DifferentiableMap& penalized = composite ? static_cast<const DifferentiableMap&>(*composite) : model;

  Rng master(cfg.seed);
  Rng shuffle_rng(master.next_u64());
  Rng penal_rng(master.next_u64());
  Rng probe_rng(master.next_u64());

  ParameterVector params = model.parameters();
  AdamState adam = make_adam_state(params);
  PlateauSchedule schedule(cfg.learning_rate, cfg.lr_decay, cfg.plateau_window, cfg.plateau_threshold);
  std::vector<std::size_t> order(dataset.size());
  std::iota(order.begin(), order.end(), 0);

  TrainHistory history;
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const double xi = xi0 + static_cast<double>(epoch - 1) * dxi;
    const double lr = schedule.lr();
    shuffle_rng.shuffle(std::span<std::size_t>(order));
    double data_sum = 0.0, pen_sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t stop = std::min(order.size(), start + cfg.batch_size);
      const std::size_t b = stop - start;
      const std::size_t b0 = order[start + penal_rng.index(b)];
      const Tensor x_tilde = sample_penal_point(dataset[b0], penal_rng);

      ad::RecordingScope recording;
      auto theta = ad::Var::leaf(params.values());
      const BoundMap bound(model, theta);
      ad::Var data;
      for (std::size_t i = start; i < stop; ++i) {
        const auto& pair = dataset[order[i]];
        ad::Var term = l1_loss(bound(ad::Var::constant(pair.input.tensor())), ad::Var::constant(pair.target.tensor()));
        data = data.defined() ? ad::add(data, term) : term;
      }
      data = ad::scale(data, 1.0 / static_cast<double>(b));
      PenaltyTerm pen = penalty(BoundMap(penalized, theta), x_tilde, cfg.epsilon, cfg.probe, probe_rng);
      ad::Var loss = xi > 0.0 ? ad::add(data, ad::scale(pen.value, xi)) : data;

      const double data_v = data.value().item(), pen_v = pen.value.value().item();
      if (!std::isfinite(loss.value().item())) {
        throw NumericalError(dump_state(epoch, batches, xi, lr, data_v, pen_v, params));
      }
      ParameterVector grad(ad::gradient(loss, std::span<const ad::Var>(&theta, 1))[0], params.layout());
      adam_step(params, grad, adam, lr);
      model.set_parameters(params.values());
      data_sum += data_v * static_cast<double>(b);
      pen_sum += pen_v;
      ++batches;
    }
    EpochRecord rec{epoch, data_sum / static_cast<double>(dataset.size()), pen_sum / static_cast<double>(batches), xi,
                    lr};
    history.epochs.push_back(rec);
    schedule.observe(rec.data_loss);
    if (on_epoch) on_epoch(rec);
  }
  return history;
}

Tensor upsilon(const Tensor& raw) {
  Tensor out = raw;
  double total = 0.0;
  for (double& v : out.data()) {
    v = std::max(v, 0.0);
    total += v;
  }
  if (!(total >= 1e-12)) throw NumericalError("upsilon: no positive entries");
  out *= 1.0 / total;
  return out;
}

namespace {

Tensor positive_init(std::size_t d, Rng& rng) { return rng.uniform_tensor({d, d}, 0.01, 0.1); }

double positive_mass(const Tensor& raw) {
  double total = 0.0;
  for (double v : raw.data()) total += std::max(v, 0.0);
  return total;
}

}  // namespace

Kernel train_linear_kernel(const std::vector<TrainingPair>& dataset, std::size_t kernel_size, const TrainConfig& cfg,
                           TrainHistory* history) {
  validate(cfg);
  check_dataset(dataset);
  if (kernel_size == 0 || kernel_size % 2 == 0) throw ConfigError("kernel size must be odd");
  for (const auto& p : dataset) {
    const auto& s = p.input.tensor().shape();
    if (s[0] < kernel_size || s[1] < kernel_size) throw DimensionError("kernel larger than training images");
  }
  Rng master(cfg.seed);
  Rng init_rng(master.next_u64());
  Rng shuffle_rng(master.next_u64());
  const std::size_t d = kernel_size;
  std::vector<ParameterSegment> layout{{"kernel", Shape{d, d}, 0}};
  ParameterVector raw(positive_init(d, init_rng).reshaped({d * d}), layout);
  AdamState adam = make_adam_state(raw);
  PlateauSchedule schedule(cfg.learning_rate, cfg.lr_decay, cfg.plateau_window, cfg.plateau_threshold);
  std::vector<std::size_t> order(dataset.size());
  std::iota(order.begin(), order.end(), 0);
  const ad::Elementwise relu{ad::Fn::Relu};

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const double lr = schedule.lr();
    shuffle_rng.shuffle(std::span<std::size_t>(order));
    double data_sum = 0.0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t stop = std::min(order.size(), start + cfg.batch_size);
      if (positive_mass(raw.values()) < 1e-12) {
        raw.values() = positive_init(d, init_rng).reshaped({d * d});
        adam = make_adam_state(raw);
      }
      ad::RecordingScope recording;
      auto f = ad::Var::leaf(raw.values());
      ad::Var pos = ad::apply(f, relu);
      ad::Var w = ad::reshape(ad::div_scalar(pos, ad::sum(pos)), {1, 1, d, d});
      ad::Var data;
      for (std::size_t i = start; i < stop; ++i) {
        const auto& pair = dataset[order[i]];
        const auto& s = pair.input.tensor().shape();
        ad::Var x = ad::Var::constant(pair.input.tensor().reshaped({1, s[0], s[1]}));
        ad::Var pred = ad::reshape(ad::conv2d(x, w), s);
        ad::Var term = l1_loss(pred, ad::Var::constant(pair.target.tensor()));
        data = data.defined() ? ad::add(data, term) : term;
      }
      const double b = static_cast<double>(stop - start);
      data = ad::scale(data, 1.0 / b);
      if (!std::isfinite(data.value().item())) {
        throw NumericalError(dump_state(epoch, start / cfg.batch_size, 0.0, lr, data.value().item(), 0.0, raw));
      }
      ParameterVector grad(ad::gradient(data, std::span<const ad::Var>(&f, 1))[0], layout);
      adam_step(raw, grad, adam, lr);
      data_sum += data.value().item() * b;
    }
    const double epoch_loss = data_sum / static_cast<double>(dataset.size());
    if (history) history->epochs.push_back({epoch, epoch_loss, 0.0, 0.0, lr});
    schedule.observe(epoch_loss);
  }
  if (positive_mass(raw.values()) < 1e-12) raw.values() = positive_init(d, init_rng).reshaped({d * d});
  return Kernel(upsilon(raw.values()).reshaped({d, d}));
}

}  // namespace monofbf
