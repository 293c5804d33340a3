#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <string>

#include <doctest.h>

#include "core/tensor.hpp"

namespace testing {

// Fresh scratch directory under the test working directory.
inline std::filesystem::path scratch(const std::string& name) {
  const auto dir = std::filesystem::current_path() / "scratch" / name;
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

inline double max_abs_diff(const monofbf::Tensor& a, const monofbf::Tensor& b) {
  REQUIRE(a.size() == b.size());
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace testing
