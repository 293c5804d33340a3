#pragma once

#include <string>

#include <json.hpp>

// JSON-request entry points behind the C API and the CLI. Each takes a
// request object, rejects unknown keys, writes its outputs plus a resolved
// config snapshot, and returns a summary object.
namespace monofbf::commands {

using nlohmann::json;

json synth(const json& request);
json simulate(const json& request);
json train(const json& request);
json audit(const json& request);
json restore(const json& request);
json invert(const json& request);
json metrics(const json& request);

// Dispatch by subcommand name.
json run(const std::string& name, const json& request);

// PSNR as JSON: a number, or "inf" for identical images.
json psnr_json(double value);

}  // namespace monofbf::commands
