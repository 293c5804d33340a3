#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>

#include <json.hpp>

#include "core/maps.hpp"
#include "core/trainer.hpp"

namespace monofbf {

// A trained model: a residual network (mon, nom, lsq_mon) or a learned
// kernel (linear), plus the linear kernel paired with lsq_mon.
class LearnedOperator {
 public:
  static LearnedOperator network(Variant variant, std::shared_ptr<ResidualConvNet> net, std::uint64_t seed,
                                 std::optional<Kernel> lsq_kernel = std::nullopt);
  static LearnedOperator linear(Kernel kernel, std::uint64_t seed);

  Variant variant() const { return variant_; }
  std::uint64_t seed() const { return seed_; }
  bool is_network() const { return net_ != nullptr; }
  const ResidualConvNet& net() const;
  // lsq_mon: L_lin. linear: the learned kernel.
  const std::optional<Kernel>& kernel() const { return kernel_; }

  // F_theta, or the learned blur for the linear variant.
  MapPtr forward_map() const;
  // The map whose monotonicity training targets: F_theta, L^T F_theta, or L^T L.
  MapPtr operator_for_audit() const;

  nlohmann::json& training() { return training_; }
  const nlohmann::json& training() const { return training_; }

 private:
  Variant variant_ = Variant::Mon;
  std::uint64_t seed_ = 0;
  std::shared_ptr<ResidualConvNet> net_;
  std::optional<Kernel> kernel_;
  nlohmann::json training_ = nlohmann::json::object();
};

// Writes <prefix>.json (header) and <prefix>.f32t (flat parameters) or
// <prefix>.kernel.f32t; lsq_mon adds <prefix>.lin.f32t.
std::filesystem::path save_checkpoint(const std::filesystem::path& prefix, const LearnedOperator& op);
// Accepts the header path or the prefix.
LearnedOperator load_checkpoint(const std::filesystem::path& path);

}  // namespace monofbf
