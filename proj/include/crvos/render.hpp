#pragma once

#include <vector>

#include "crvos/tensor.hpp"

namespace crvos {

// Alpha-blend the palette color of each labeled target over the frame.
Tensor overlay_mask(const Tensor& frame_rgb, const MaskMap& mask, double alpha = 0.5);

// Frame indices at 0/25/50/75/100% of the sequence (duplicates possible for
// short sequences).
std::vector<int> contact_sheet_indices(size_t num_frames);

// Horizontal strip of equally sized tiles with a 2px separator.
Tensor contact_sheet(const std::vector<Tensor>& tiles);

}  // namespace crvos
