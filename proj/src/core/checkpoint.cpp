#include "core/checkpoint.hpp"

#include <fstream>

#include "core/errors.hpp"
#include "core/forward_models.hpp"
#include "core/image_io.hpp"

namespace monofbf {

namespace fs = std::filesystem;
using nlohmann::json;

LearnedOperator LearnedOperator::network(Variant variant, std::shared_ptr<ResidualConvNet> net, std::uint64_t seed,
                                         std::optional<Kernel> lsq_kernel) {
  if (!net) throw ConfigError("network checkpoint without a network");
  if (variant == Variant::Linear) throw ConfigError("variant linear has no network");
  if (variant == Variant::LsqMon && !lsq_kernel) throw ConfigError("variant lsq_mon needs its linear kernel");
  LearnedOperator op;
  op.variant_ = variant;
  op.seed_ = seed;
  op.net_ = std::move(net);
  op.kernel_ = std::move(lsq_kernel);
  return op;
}

LearnedOperator LearnedOperator::linear(Kernel kernel, std::uint64_t seed) {
  LearnedOperator op;
  op.variant_ = Variant::Linear;
  op.seed_ = seed;
  op.kernel_ = std::move(kernel);
  return op;
}

const ResidualConvNet& LearnedOperator::net() const {
  if (!net_) throw ConfigError("model has no network");
  return *net_;
}

MapPtr LearnedOperator::forward_map() const {
  if (net_) return net_;
  return std::make_shared<ConvolutionMap>(*kernel_);
}

MapPtr LearnedOperator::operator_for_audit() const {
  switch (variant_) {
    case Variant::Mon:
    case Variant::Nom:
      return net_;
    case Variant::LsqMon:
      return std::make_shared<CompositeMap>(std::make_shared<ConvolutionMap>(*kernel_, 1.0, 0.0, true), net_);
    case Variant::Linear:
      return std::make_shared<CompositeMap>(std::make_shared<ConvolutionMap>(*kernel_, 1.0, 0.0, true),
                                            std::make_shared<ConvolutionMap>(*kernel_));
  }
  throw ConfigError("unknown variant");
}

namespace {

fs::path header_path(const fs::path& p) { return p.extension() == ".json" ? p : fs::path(p.string() + ".json"); }

}  // namespace

fs::path save_checkpoint(const fs::path& prefix, const LearnedOperator& op) {
  const fs::path header = header_path(prefix);
  const std::string stem = header.filename().replace_extension("").string();
  if (header.has_parent_path()) fs::create_directories(header.parent_path());
  json h;
  h["format"] = "monofbf-checkpoint";
  h["version"] = 1;
  h["variant"] = variant_name(op.variant());
  h["seed"] = op.seed();
  h["training"] = op.training();
  if (op.is_network()) {
    const auto& cfg = op.net().config();
    h["architecture"] = {{"type", "residual_cnn"},
                         {"channels", cfg.channels},
                         {"kernel_size", cfg.kernel_size},
                         {"residual", cfg.residual}};
    h["activation"] = {{"name", activation_name(cfg.activation)},
                       {"elu_alpha", cfg.elu_alpha},
                       {"leaky_slope", cfg.leaky_slope}};
    const ParameterVector params = op.net().parameters();
    json layout = json::array();
    for (const auto& seg : params.layout()) layout.push_back({{"name", seg.name}, {"shape", seg.shape}, {"offset", seg.offset}});
    h["parameters"] = {{"file", stem + ".f32t"}, {"layout", layout}};
    write_f32t(header.parent_path() / (stem + ".f32t"), params.values());
    if (op.kernel()) {
      write_kernel(header.parent_path() / (stem + ".lin.f32t"), *op.kernel());
      h["lsq_kernel"] = stem + ".lin.f32t";
    } else {
      h["lsq_kernel"] = nullptr;
    }
  } else {
    h["architecture"] = {{"type", "linear_kernel"}, {"kernel_size", op.kernel()->size()}};
    write_kernel(header.parent_path() / (stem + ".kernel.f32t"), *op.kernel());
    h["kernel"] = stem + ".kernel.f32t";
  }
  std::ofstream out(header);
  if (!out) throw IoError("cannot write " + header.string());
  out << h.dump(2) << '\n';
  return header;
}

LearnedOperator load_checkpoint(const fs::path& path) {
  const fs::path header = header_path(path);
  std::ifstream in(header);
  if (!in) throw IoError("cannot open checkpoint " + header.string());
  json h;
  try {
    in >> h;
    if (h.value("format", "") != "monofbf-checkpoint") throw IoError("not a checkpoint: " + header.string());
    const Variant variant = parse_variant(h.at("variant").get<std::string>());
    const auto seed = h.at("seed").get<std::uint64_t>();
    const fs::path dir = header.parent_path();
    LearnedOperator op;
    if (variant == Variant::Linear) {
      op = LearnedOperator::linear(read_kernel(dir / h.at("kernel").get<std::string>()), seed);
    } else {
      const json& arch = h.at("architecture");
      const json& act = h.at("activation");
      ConvNetConfig cfg;
      cfg.channels = arch.at("channels").get<std::vector<std::size_t>>();
      cfg.kernel_size = arch.at("kernel_size").get<std::size_t>();
      cfg.residual = arch.at("residual").get<bool>();
      cfg.activation = parse_activation(act.at("name").get<std::string>());
      cfg.elu_alpha = act.at("elu_alpha").get<double>();
      cfg.leaky_slope = act.at("leaky_slope").get<double>();
      auto net = std::make_shared<ResidualConvNet>(cfg);
      const Tensor flat = read_f32t(dir / h.at("parameters").at("file").get<std::string>());
      net->set_parameters(flat.reshaped({flat.size()}));
      std::optional<Kernel> lin;
      if (h.contains("lsq_kernel") && !h["lsq_kernel"].is_null()) {
        lin = read_kernel(dir / h["lsq_kernel"].get<std::string>());
      }
      op = LearnedOperator::network(variant, std::move(net), seed, std::move(lin));
    }
    op.training() = h.value("training", json::object());
    return op;
  } catch (const json::exception& e) {
    throw IoError("malformed checkpoint " + header.string() + ": " + e.what());
  }
}

}  // namespace monofbf
