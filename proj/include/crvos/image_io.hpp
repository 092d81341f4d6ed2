#pragma once

#include <array>
#include <string>

#include "crvos/tensor.hpp"

namespace crvos {

// Frames are (3,H,W) tensors in [0,1]. Masks are integer label maps stored as
// 8-bit images: PGM holds raw label bytes, PNG masks are written indexed-color
// (palette index = label). Readable frame formats: .ppm/.pgm/.png/.jpg/.jpeg;
// mask formats: .pgm/.png.

Tensor read_frame_image(const std::string& path);
void write_frame_image(const std::string& path, const Tensor& rgb);  // .ppm or .png

MaskMap read_mask_image(const std::string& path);
void write_mask_image(const std::string& path, const MaskMap& mask);  // .pgm or .png

bool is_frame_extension(const std::string& path);
bool is_mask_extension(const std::string& path);

// The 256-entry indexed-color palette used for mask PNGs and overlays
// (VOC-style colormap; index 0 is black/background).
std::array<std::array<uint8_t, 3>, 256> mask_palette();

}  // namespace crvos
