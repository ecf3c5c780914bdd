#include "mmvr/pixmap.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

namespace mmvr {

std::string encode_ppm(const Tensor& image) {
  if (image.rank() != 3 || image.shape[2] != 3) {
    throw Error("ppm: expected an [H,W,3] image, got " + shape_string(image.shape));
  }
  std::string out = "P6\n" + std::to_string(image.shape[1]) + " " + std::to_string(image.shape[0]) + "\n255\n";
  out.reserve(out.size() + image.size());
  for (double v : image.data) {
    const double c = std::clamp(v, 0.0, 1.0);
    out.push_back(static_cast<char>(static_cast<unsigned char>(std::lround(c * 255.0))));
  }
  return out;
}

Tensor decode_ppm(const std::string& bytes) {
  std::istringstream in(bytes);
  std::string magic;
  std::size_t width = 0, height = 0, maxval = 0;
  in >> magic >> width >> height >> maxval;
  if (!in || magic != "P6" || maxval != 255 || width == 0 || height == 0) {
    throw Error("ppm: unsupported or malformed header");
  }
  in.get();  // single whitespace byte before the raster
  const std::size_t n = width * height * 3;
  const auto offset = static_cast<std::size_t>(in.tellg());
  if (bytes.size() != offset + n) throw Error("ppm: raster size does not match header");
  Tensor img = Tensor::zeros({height, width, 3});
  for (std::size_t i = 0; i < n; ++i) {
    img.data[i] = static_cast<unsigned char>(bytes[offset + i]) / 255.0;
  }
  return img;
}

void write_file(const std::filesystem::path& file, const std::string& bytes) {
  std::ofstream out(file, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write '" + file.string() + "'");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("write failed for '" + file.string() + "'");
}

std::string read_file(const std::filesystem::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw Error("cannot read '" + file.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_ppm(const std::filesystem::path& file, const Tensor& image) { write_file(file, encode_ppm(image)); }

Tensor read_ppm(const std::filesystem::path& file) { return decode_ppm(read_file(file)); }

}  // namespace mmvr
