#include "softmesh/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <ios>
#include <vector>

SOFTMESH_BEGIN_NAMESPACE

Tensor read_png(const std::string& path, int channels) {
  if (channels != 1 && channels != 3) {
    throw std::invalid_argument("read_png: channels must be 1 or 3");
  }
  png_image img;
  std::memset(&img, 0, sizeof(img));
  img.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&img, path.c_str())) {
    throw std::ios_base::failure("cannot read PNG " + path + ": " +
                                 img.message);
  }
  img.format = channels == 1 ? PNG_FORMAT_GRAY : PNG_FORMAT_RGB;
  std::vector<png_byte> buffer(PNG_IMAGE_SIZE(img));
  if (!png_image_finish_read(&img, nullptr, buffer.data(), 0, nullptr)) {
    png_image_free(&img);
    throw std::ios_base::failure("cannot decode PNG " + path + ": " +
                                 img.message);
  }
  std::vector<Real> values(buffer.size());
  std::transform(buffer.begin(), buffer.end(), values.begin(),
                 [](png_byte b) { return Real(b) / Real(255); });
  return Tensor::from({static_cast<std::int64_t>(img.height),
                       static_cast<std::int64_t>(img.width), channels},
                      std::move(values));
}

void write_png(const std::string& path, const Tensor& image) {
  if (image.rank() != 3 || (image.shape()[2] != 1 && image.shape()[2] != 3)) {
    throw ShapeError("write_png: expected [H,W,1] or [H,W,3], got " +
                     shape_string(image.shape()));
  }
  png_image img;
  std::memset(&img, 0, sizeof(img));
  img.version = PNG_IMAGE_VERSION;
  img.height = static_cast<png_uint_32>(image.shape()[0]);
  img.width = static_cast<png_uint_32>(image.shape()[1]);
  img.format = image.shape()[2] == 1 ? PNG_FORMAT_GRAY : PNG_FORMAT_RGB;
  std::vector<png_byte> buffer(static_cast<std::size_t>(image.numel()));
  const auto src = image.data();
  for (std::size_t i = 0; i < buffer.size(); ++i) {
    const Real v = std::clamp(src[i], Real(0), Real(1));
    buffer[i] = static_cast<png_byte>(std::lround(v * Real(255)));
  }
  if (!png_image_write_to_file(&img, path.c_str(), 0, buffer.data(), 0,
                               nullptr)) {
    throw std::ios_base::failure("cannot write PNG " + path + ": " +
                                 img.message);
  }
}

SOFTMESH_END_NAMESPACE
