#pragma once

#include "crvos/tensor.hpp"

namespace crvos {

// Three constant positional maps at the coarse (1/16) grid, values in [-1,1].
struct CoordChannels {
    Tensor height_ramp;      // (1,h,w), constant along width, -1..+1 down the height
    Tensor width_ramp;       // (1,h,w), constant along height, -1..+1 along the width
    Tensor center_distance;  // (1,h,w), -1 at the grid center, +1 at the corners

    int grid_h() const { return height_ramp.h(); }
    int grid_w() const { return height_ramp.w(); }
};

// Coarse fg/bg probabilities at the 1/16 grid; fg + bg = 1 per cell.
struct CoarseMask {
    Tensor fg;  // (1,h,w)
    Tensor bg;  // (1,h,w)
};

// The 5-channel specifier: [fg, bg, height_ramp, width_ramp, center_distance].
struct Clue {
    Tensor channels;  // (5,h,w)
};

inline constexpr int kClueStride = 16;

// Ramps are uniformly spaced over [-1,1] endpoint-inclusive (a length-1 axis
// maps to 0). center_distance(i,j) = 2*d/d_max - 1 with d the Euclidean
// distance from the grid center measured in ramp coordinates and d_max the
// corner distance; a 1x1 grid is all -1.
CoordChannels make_coord_channels(int h16, int w16);

// Area (block-mean) pooling of a (2,H,W) soft mask. H and W must be divisible
// by `factor`; per-pixel fg+bg must be 1 within 1e-5.
CoarseMask downsample_mask(const Tensor& soft_mask, int factor = kClueStride);

// Concatenate [downsample_mask(prev_mask), coords]; pure function.
Clue build_clue(const Tensor& prev_mask, const CoordChannels& coords);

}  // namespace crvos
