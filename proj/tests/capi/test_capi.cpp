#include <doctest.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "monofbf/monofbf.h"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

fs::path scratch(const std::string& name) {
  const auto dir = fs::current_path() / "scratch" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

mfb_tensor* make(std::vector<size_t> shape, std::vector<double> data) {
  mfb_tensor* t = nullptr;
  REQUIRE(mfb_tensor_create(shape.data(), shape.size(), data.empty() ? nullptr : data.data(), &t) == MFB_OK);
  return t;
}

std::vector<double> values(const mfb_tensor* t) {
  const double* d = nullptr;
  size_t n = 0;
  REQUIRE(mfb_tensor_data(t, &d, &n) == MFB_OK);
  return {d, d + n};
}

json run(const char* command, const json& request, mfb_status expect = MFB_OK) {
  char* out = nullptr;
  const mfb_status s = mfb_run(command, request.dump().c_str(), &out);
  INFO(mfb_last_error());
  REQUIRE(s == expect);
  if (s != MFB_OK) return json();
  json j = json::parse(out);
  mfb_string_free(out);
  return j;
}

}  // namespace

TEST_SUITE("capi") {
  TEST_CASE("status names and version") {
    CHECK(std::string(mfb_status_name(MFB_OK)) == "ok");
    CHECK(std::string(mfb_status_name(MFB_ERR_STEP_SEARCH)) == "step_search");
    CHECK(std::string(mfb_version()) == "1.0.0");
  }

  TEST_CASE("tensor handles") {
    mfb_tensor* t = make({2, 3}, {1, 2, 3, 4, 5, 6});
    size_t shape[4] = {0};
    size_t ndim = 0;
    CHECK(mfb_tensor_shape(t, shape, 4, &ndim) == MFB_OK);
    CHECK(ndim == 2);
    CHECK(shape[0] == 2);
    CHECK(shape[1] == 3);
    CHECK(values(t) == std::vector<double>{1, 2, 3, 4, 5, 6});
    mfb_tensor_destroy(t);

    mfb_tensor* z = make({4}, {});
    CHECK(values(z) == std::vector<double>(4, 0.0));
    mfb_tensor_destroy(z);
    mfb_tensor_destroy(nullptr);

    mfb_tensor* bad = nullptr;
    const size_t zero_dim[2] = {2, 0};
    CHECK(mfb_tensor_create(zero_dim, 2, nullptr, &bad) == MFB_ERR_DIMENSION);
    CHECK(bad == nullptr);
    CHECK(std::strlen(mfb_last_error()) > 0);
    CHECK(mfb_tensor_create(nullptr, 2, nullptr, &bad) == MFB_ERR_INVALID_ARGUMENT);
    CHECK(mfb_tensor_data(nullptr, nullptr, nullptr) == MFB_ERR_INVALID_ARGUMENT);
  }

  TEST_CASE("last error is cleared by a successful call") {
    mfb_tensor* t = nullptr;
    CHECK(mfb_tensor_load("/nonexistent/file.f32t", &t) == MFB_ERR_IO);
    CHECK(std::string(mfb_last_error()).find("nonexistent") != std::string::npos);
    mfb_tensor* ok = make({1}, {0.5});
    CHECK(std::string(mfb_last_error()).empty());
    mfb_tensor_destroy(ok);
  }

  TEST_CASE("save and load") {
    const auto dir = scratch("capi_io");
    mfb_tensor* t = make({2, 2}, {0.0, 0.25, 0.5, 1.0});
    CHECK(mfb_tensor_save(t, (dir / "t.f32t").c_str()) == MFB_OK);
    CHECK(mfb_tensor_save(t, (dir / "t.pgm").c_str()) == MFB_OK);
    CHECK(mfb_tensor_save(t, (dir / "t.png").c_str()) == MFB_ERR_CONFIG);
    mfb_tensor* back = nullptr;
    REQUIRE(mfb_tensor_load((dir / "t.f32t").c_str(), &back) == MFB_OK);
    CHECK(values(back) == values(t));
    mfb_tensor_destroy(back);
    REQUIRE(mfb_tensor_load((dir / "t.pgm").c_str(), &back) == MFB_OK);
    CHECK(values(back)[3] == 1.0);
    CHECK(values(back)[1] == doctest::Approx(64.0 / 255.0));
    mfb_tensor_destroy(back);
    mfb_tensor* cube = make({2, 2, 2}, {});
    CHECK(mfb_tensor_save(cube, (dir / "c.pgm").c_str()) == MFB_ERR_DIMENSION);
    mfb_tensor_destroy(cube);
    mfb_tensor_destroy(t);
  }

  TEST_CASE("metrics") {
    mfb_tensor* a = make({4, 4}, std::vector<double>(16, 0.5));
    mfb_tensor* b = make({4, 4}, std::vector<double>(16, 0.6));
    mfb_metrics m{};
    CHECK(mfb_compute_metrics(a, a, &m) == MFB_OK);
    CHECK(std::isinf(m.psnr));
    CHECK(m.mae == 0.0);
    CHECK(mfb_compute_metrics(a, b, &m) == MFB_OK);
    CHECK(m.psnr == doctest::Approx(20.0));
    CHECK(m.mae == doctest::Approx(0.1));
    mfb_tensor* c = make({2, 8}, {});
    CHECK(mfb_compute_metrics(a, c, &m) == MFB_ERR_DIMENSION);
    CHECK(mfb_compute_metrics(nullptr, c, &m) == MFB_ERR_INVALID_ARGUMENT);
    mfb_tensor_destroy(a);
    mfb_tensor_destroy(b);
    mfb_tensor_destroy(c);
  }

  TEST_CASE("commands through the C API") {
    const auto dir = scratch("capi_cmd");
    run("synth", {{"out_dir", (dir / "clean").string()}, {"count", 3}, {"height", 12}, {"width", 12}, {"seed", 1}});
    char* out = nullptr;
    const json sim = {{"clean_dir", (dir / "clean").string()}, {"out_dir", (dir / "ds").string()},
                      {"kernel_size", 3}, {"sigma", 0.01}, {"seed", 2}};
    REQUIRE(mfb_simulate(sim.dump().c_str(), &out) == MFB_OK);
    CHECK(json::parse(out).at("count") == 3);
    mfb_string_free(out);

    const json tr = {{"dataset", (dir / "ds").string()}, {"out", (dir / "m").string()}, {"epochs", 2},
                     {"batch_size", 3}, {"architecture", {{"channels", {1, 3, 1}}}}, {"probe", {{"n_iter", 4}}}};
    REQUIRE(mfb_train(tr.dump().c_str(), &out) == MFB_OK);
    mfb_string_free(out);

    mfb_model* model = nullptr;
    REQUIRE(mfb_model_load((dir / "m.json").c_str(), &model) == MFB_OK);
    CHECK(std::string(mfb_model_variant(model)) == "mon");
    mfb_tensor* x = nullptr;
    REQUIRE(mfb_tensor_load((dir / "clean" / "img_000.pgm").c_str(), &x) == MFB_OK);
    mfb_tensor* y = nullptr;
    REQUIRE(mfb_model_apply(model, x, &y) == MFB_OK);
    size_t shape[2];
    size_t nd = 0;
    mfb_tensor_shape(y, shape, 2, &nd);
    CHECK(nd == 2);
    CHECK(shape[0] == 12);
    double lam = 0.0;
    CHECK(mfb_model_lambda_min(model, x, 50, 3, &lam) == MFB_OK);
    CHECK(std::isfinite(lam));
    CHECK(mfb_model_lambda_min(model, x, 0, 3, &lam) == MFB_ERR_CONFIG);
    mfb_tensor* tiny = make({2, 2}, {});
    mfb_tensor* bad = nullptr;
    CHECK(mfb_model_apply(model, tiny, &bad) == MFB_ERR_DIMENSION);
    CHECK(bad == nullptr);
    mfb_tensor_destroy(tiny);
    mfb_tensor_destroy(x);
    mfb_tensor_destroy(y);
    mfb_model_destroy(model);

    const json au = {{"model", (dir / "m").string()}, {"probes", (dir / "clean").string()}, {"n_iter", 10},
                     {"out", (dir / "audit.csv").string()}};
    REQUIRE(mfb_audit(au.dump().c_str(), &out) == MFB_OK);
    CHECK(json::parse(out).at("count") == 3);
    mfb_string_free(out);

    const json re = {{"model", (dir / "m").string()}, {"y", (dir / "ds" / "measured" / "img_000.f32t").string()},
                     {"out", (dir / "r").string()}, {"stop", {{"max_iter", 20}}}};
    REQUIRE(mfb_restore(re.dump().c_str(), &out) == MFB_OK);
    mfb_string_free(out);
    CHECK(fs::exists(dir / "r.trace.csv"));

    const json inv = {{"model", (dir / "m").string()}, {"x_bar", (dir / "clean" / "img_001.pgm").string()},
                      {"out", (dir / "i").string()}, {"stop", {{"max_iter", 20}}}};
    REQUIRE(mfb_invert(inv.dump().c_str(), &out) == MFB_OK);
    mfb_string_free(out);
  }

  TEST_CASE("command errors map to status codes") {
    run("synth", {{"out_dir", "x"}, {"bogus", 1}}, MFB_ERR_CONFIG);
    run("nonexistent", json::object(), MFB_ERR_CONFIG);
    run("metrics", {{"x", "/nonexistent.pgm"}, {"ref", "/nonexistent.pgm"}}, MFB_ERR_IO);
    char* out = nullptr;
    CHECK(mfb_run("metrics", "{not json", &out) == MFB_ERR_CONFIG);
    CHECK(out == nullptr);
    CHECK(mfb_run(nullptr, "{}", &out) == MFB_ERR_INVALID_ARGUMENT);
    mfb_model* m = nullptr;
    CHECK(mfb_model_load("/nonexistent/model", &m) == MFB_ERR_IO);
    CHECK(m == nullptr);
    CHECK(std::string(mfb_model_variant(nullptr)).empty());
  }
}
