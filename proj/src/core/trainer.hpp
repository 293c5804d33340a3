#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "core/errors.hpp"
#include "core/maps.hpp"
#include "core/rng.hpp"
#include "core/spectral.hpp"

namespace monofbf {

enum class Variant { Mon, Nom, LsqMon, Linear };

const char* variant_name(Variant v);
Variant parse_variant(const std::string& name);

struct TrainConfig {
  std::size_t epochs = 200;
  std::size_t batch_size = 8;
  double xi0 = 0.1;
  double delta_xi = 0.1;
  double epsilon = 0.01;
  double learning_rate = 2e-4;
  double lr_decay = 0.1;
  std::size_t plateau_window = 10;
  double plateau_threshold = 1e-4;
  std::uint64_t seed = 0;
  Variant variant = Variant::Mon;
  ProbeConfig probe{20, 1.05, 0};
};

void validate(const TrainConfig& cfg);

struct TrainingPair {
  // Ground truth x.
  Image input;
  // Measurement y.
  Image target;
};

struct AdamState {
  Tensor first_moment;
  Tensor second_moment;
  std::size_t step_count = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps_adam = 1e-8;
};

AdamState make_adam_state(const ParameterVector& params);
void adam_step(ParameterVector& params, const ParameterVector& grad, AdamState& state, double lr);

// Mean absolute error.
double l1_loss(const Tensor& pred, const Tensor& target);
ad::Var l1_loss(const ad::Var& pred, const ad::Var& target);

// -min{1 + lambda_R, epsilon}
double penalty_value(double lambda_min_R, double epsilon);

struct PenaltyTerm {
  ad::Var value;
  SpectralEstimate estimate;
};

// Penalty at x_tilde for the reflected operator of the bound map; recorded
// against bound.theta().
PenaltyTerm penalty(const BoundMap& bound, const Tensor& x_tilde, double epsilon, const ProbeConfig& probe, Rng& rng);

// nu x + (1 - nu) y with nu ~ U[0, 1).
Tensor sample_penal_point(const TrainingPair& pair, Rng& rng);
Tensor sample_penal_point(const TrainingPair& pair, double nu);

struct EpochRecord {
  std::size_t epoch = 0;
  double data_loss = 0.0;
  double penalty = 0.0;
  double xi = 0.0;
  double lr = 0.0;
};

struct TrainHistory {
  std::vector<EpochRecord> epochs;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

// Penalized training. For Variant::LsqMon, penalty_outer must be the linear
// map L_lin^T; the penalty then applies to penalty_outer o model.
TrainHistory train(DifferentiableMap& model, const std::vector<TrainingPair>& dataset, const TrainConfig& cfg,
                   MapPtr penalty_outer = nullptr, const EpochCallback& on_epoch = {});

// ReLU(f) / sum max(0, f)
Tensor upsilon(const Tensor& raw);

// Learns a normalized kernel under the upsilon reparametrization.
Kernel train_linear_kernel(const std::vector<TrainingPair>& dataset, std::size_t kernel_size, const TrainConfig& cfg,
                           TrainHistory* history = nullptr);

}  // namespace monofbf
