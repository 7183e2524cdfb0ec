#pragma once

#include <string>

#include "softmesh/tensor.hpp"

SOFTMESH_BEGIN_NAMESPACE

// 8-bit PNG to [H,W,C] in [0,1]; C is 1 for gray and 3 for color files
// (alpha is dropped). Throws std::ios_base::failure on I/O or decode errors.
Tensor read_png(const std::string& path, int channels);

// [H,W,1] or [H,W,3] in [0,1]; values are clamped and rounded to 8 bits.
void write_png(const std::string& path, const Tensor& image);

SOFTMESH_END_NAMESPACE
