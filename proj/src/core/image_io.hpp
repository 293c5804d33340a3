#pragma once

#include <filesystem>

#include "core/tensor.hpp"

namespace monofbf {

// Binary 8-bit PGM ("P5", maxval 255). Values are written as
// round(255 * clamp(v, 0, 1)); on read, v = pixel / maxval.
Image read_pgm(const std::filesystem::path& path);
void write_pgm(const std::filesystem::path& path, const Image& image);

// Raw float tensor: "F32T\n", "ndim d0 d1 ...\n", then little-endian float32 payload.
Tensor read_f32t(const std::filesystem::path& path);
void write_f32t(const std::filesystem::path& path, const Tensor& tensor);

// Dispatches on the file's magic bytes (P5 or F32T).
Tensor read_tensor_file(const std::filesystem::path& path);
Image read_image_file(const std::filesystem::path& path);

bool is_image_file(const std::filesystem::path& path);

}  // namespace monofbf
