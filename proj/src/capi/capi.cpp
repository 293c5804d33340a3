#include "monofbf/monofbf.h"

#include <cstring>
#include <limits>
#include <string>

#include <json.hpp>

#include "core/checkpoint.hpp"
#include "core/commands.hpp"
#include "core/errors.hpp"
#include "core/image_io.hpp"
#include "core/restoration.hpp"
#include "core/spectral.hpp"

struct mfb_tensor {
  monofbf::Tensor value;
};

struct mfb_model {
  monofbf::LearnedOperator op;
};

namespace {

thread_local std::string g_last_error;

mfb_status fail(mfb_status status, const std::string& message) {
  g_last_error = message;
  return status;
}

template <typename Fn>
mfb_status guarded(Fn&& fn) {
  try {
    fn();
    g_last_error.clear();
    return MFB_OK;
  } catch (const monofbf::StepSearchError& e) {
    return fail(MFB_ERR_STEP_SEARCH, e.what());
  } catch (const monofbf::NumericalError& e) {
    return fail(MFB_ERR_NUMERICAL, e.what());
  } catch (const monofbf::DimensionError& e) {
    return fail(MFB_ERR_DIMENSION, e.what());
  } catch (const monofbf::ConfigError& e) {
    return fail(MFB_ERR_CONFIG, e.what());
  } catch (const monofbf::IoError& e) {
    return fail(MFB_ERR_IO, e.what());
  } catch (const nlohmann::json::exception& e) {
    return fail(MFB_ERR_CONFIG, e.what());
  } catch (const std::filesystem::filesystem_error& e) {
    return fail(MFB_ERR_IO, e.what());
  } catch (const std::exception& e) {
    return fail(MFB_ERR_INTERNAL, e.what());
  } catch (...) {
    return fail(MFB_ERR_INTERNAL, "unknown error");
  }
}

char* copy_string(const std::string& s) {
  char* out = new char[s.size() + 1];
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

mfb_status run_command(const char* command, const char* request_json, char** summary_json) {
  if (!command || !request_json || !summary_json) return fail(MFB_ERR_INVALID_ARGUMENT, "null argument");
  *summary_json = nullptr;
  return guarded([&] {
    nlohmann::json request;
    try {
      request = nlohmann::json::parse(request_json);
    } catch (const nlohmann::json::parse_error& e) {
      throw monofbf::ConfigError(std::string("request is not valid JSON: ") + e.what());
    }
    *summary_json = copy_string(monofbf::commands::run(command, request).dump());
  });
}

}  // namespace

extern "C" {

const char* mfb_last_error(void) { return g_last_error.c_str(); }

const char* mfb_status_name(mfb_status status) {
  switch (status) {
    case MFB_OK:
      return "ok";
    case MFB_ERR_INVALID_ARGUMENT:
      return "invalid_argument";
    case MFB_ERR_CONFIG:
      return "config";
    case MFB_ERR_DIMENSION:
      return "dimension";
    case MFB_ERR_IO:
      return "io";
    case MFB_ERR_NUMERICAL:
      return "numerical";
    case MFB_ERR_STEP_SEARCH:
      return "step_search";
    case MFB_ERR_INTERNAL:
      return "internal";
  }
  return "unknown";
}

const char* mfb_version(void) { return "1.0.0"; }

mfb_status mfb_tensor_create(const size_t* shape, size_t ndim, const double* data, mfb_tensor** out) {
  if (!shape || ndim == 0 || !out) return fail(MFB_ERR_INVALID_ARGUMENT, "tensor_create: null shape or output");
  *out = nullptr;
  return guarded([&] {
    monofbf::Shape s(shape, shape + ndim);
    monofbf::Tensor t(s, 0.0);
    if (data) std::memcpy(t.raw(), data, t.size() * sizeof(double));
    *out = new mfb_tensor{std::move(t)};
  });
}

void mfb_tensor_destroy(mfb_tensor* tensor) { delete tensor; }

mfb_status mfb_tensor_shape(const mfb_tensor* tensor, size_t* shape, size_t capacity, size_t* ndim) {
  if (!tensor || !ndim) return fail(MFB_ERR_INVALID_ARGUMENT, "tensor_shape: null argument");
  const auto& s = tensor->value.shape();
  *ndim = s.size();
  if (shape) {
    for (size_t i = 0; i < s.size() && i < capacity; ++i) shape[i] = s[i];
  }
  g_last_error.clear();
  return MFB_OK;
}

mfb_status mfb_tensor_data(const mfb_tensor* tensor, const double** data, size_t* size) {
  if (!tensor || !data || !size) return fail(MFB_ERR_INVALID_ARGUMENT, "tensor_data: null argument");
  *data = tensor->value.raw();
  *size = tensor->value.size();
  g_last_error.clear();
  return MFB_OK;
}

mfb_status mfb_tensor_load(const char* path, mfb_tensor** out) {
  if (!path || !out) return fail(MFB_ERR_INVALID_ARGUMENT, "tensor_load: null argument");
  *out = nullptr;
  return guarded([&] { *out = new mfb_tensor{monofbf::read_tensor_file(path)}; });
}

mfb_status mfb_tensor_save(const mfb_tensor* tensor, const char* path) {
  if (!tensor || !path) return fail(MFB_ERR_INVALID_ARGUMENT, "tensor_save: null argument");
  return guarded([&] {
    const std::filesystem::path p(path);
    if (p.extension() == ".pgm") {
      if (tensor->value.ndim() != 2) throw monofbf::DimensionError("PGM export needs a 2-D tensor");
      monofbf::write_pgm(p, monofbf::Image(tensor->value));
    } else if (p.extension() == ".f32t") {
      monofbf::write_f32t(p, tensor->value);
    } else {
      throw monofbf::ConfigError("unsupported extension for " + p.string() + " (expected .pgm or .f32t)");
    }
  });
}

mfb_status mfb_model_load(const char* path, mfb_model** out) {
  if (!path || !out) return fail(MFB_ERR_INVALID_ARGUMENT, "model_load: null argument");
  *out = nullptr;
  return guarded([&] { *out = new mfb_model{monofbf::load_checkpoint(path)}; });
}

void mfb_model_destroy(mfb_model* model) { delete model; }

const char* mfb_model_variant(const mfb_model* model) {
  return model ? monofbf::variant_name(model->op.variant()) : "";
}

mfb_status mfb_model_apply(const mfb_model* model, const mfb_tensor* x, mfb_tensor** out) {
  if (!model || !x || !out) return fail(MFB_ERR_INVALID_ARGUMENT, "model_apply: null argument");
  *out = nullptr;
  return guarded([&] { *out = new mfb_tensor{monofbf::forward(*model->op.forward_map(), x->value)}; });
}

mfb_status mfb_model_lambda_min(const mfb_model* model, const mfb_tensor* x, size_t n_iter, uint64_t seed,
                                double* lambda_min) {
  if (!model || !x || !lambda_min) return fail(MFB_ERR_INVALID_ARGUMENT, "model_lambda_min: null argument");
  return guarded([&] {
    monofbf::ProbeConfig cfg;
    cfg.n_iter = n_iter;
    cfg.seed = seed;
    *lambda_min = monofbf::lambda_min_sym_jacobian(*model->op.operator_for_audit(), x->value, cfg).lambda_min;
  });
}

mfb_status mfb_compute_metrics(const mfb_tensor* x, const mfb_tensor* ref, mfb_metrics* out) {
  if (!x || !ref || !out) return fail(MFB_ERR_INVALID_ARGUMENT, "compute_metrics: null argument");
  return guarded([&] {
    if (x->value.ndim() != 2 || ref->value.ndim() != 2) throw monofbf::DimensionError("metrics need 2-D images");
    const auto m = monofbf::compute_metrics(monofbf::Image(x->value), monofbf::Image(ref->value));
    *out = {m.psnr, m.ssim, m.mae};
  });
}

mfb_status mfb_run(const char* command, const char* request_json, char** summary_json) {
  return run_command(command, request_json, summary_json);
}

mfb_status mfb_simulate(const char* request_json, char** summary_json) {
  return run_command("simulate", request_json, summary_json);
}

mfb_status mfb_train(const char* request_json, char** summary_json) {
  return run_command("train", request_json, summary_json);
}

mfb_status mfb_audit(const char* request_json, char** summary_json) {
  return run_command("audit", request_json, summary_json);
}

mfb_status mfb_restore(const char* request_json, char** summary_json) {
  return run_command("restore", request_json, summary_json);
}

mfb_status mfb_invert(const char* request_json, char** summary_json) {
  return run_command("invert", request_json, summary_json);
}

void mfb_string_free(char* str) { delete[] str; }

}  // extern "C"
