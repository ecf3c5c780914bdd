#pragma once

#include <filesystem>
#include <string>

#include "mmvr/tensor.hpp"

namespace mmvr {

/// Binary PPM (P6, maxval 255) for a [H,W,3] tensor in [0,1]; values are
/// clamped and rounded to 8 bits.
std::string encode_ppm(const Tensor& image);
Tensor decode_ppm(const std::string& bytes);

void write_ppm(const std::filesystem::path& file, const Tensor& image);
Tensor read_ppm(const std::filesystem::path& file);

/// Writes `bytes` to `file`, throwing Error on failure.
void write_file(const std::filesystem::path& file, const std::string& bytes);
std::string read_file(const std::filesystem::path& file);

}  // namespace mmvr
