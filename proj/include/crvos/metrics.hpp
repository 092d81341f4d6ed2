#pragma once

#include <vector>

#include "crvos/tensor.hpp"

namespace crvos {

// Region similarity J, boundary accuracy F and their aggregation.
// Binary masks are MaskMaps with labels in {0,1}.

// |pred ∩ gt| / |pred ∪ gt|; 1 when both masks are empty.
double jaccard(const MaskMap& pred, const MaskMap& gt);

// Default matching tolerance: 0.8% of the image diagonal, rounded up.
int default_boundary_tolerance(int h, int w);

// A pixel is boundary if it is foreground and any 4-neighbour differs or lies
// outside the image. Precision/recall match boundary pixels within
// `tolerance_px` Euclidean distance; F = 2PR/(P+R). Both boundaries empty -> 1,
// exactly one empty -> 0.
double boundary_f(const MaskMap& pred, const MaskMap& gt, int tolerance_px = -1);

struct EvalResult {
    // [target][frame]; frame 0 carries the given mask and is excluded from means.
    std::vector<std::vector<double>> per_target_per_frame_J;
    std::vector<std::vector<double>> per_target_per_frame_F;
    double mean_J = 0.0;
    double mean_F = 0.0;
    double mean_JF = 0.0;
};

// Per-target binarization (label == k) of label maps, J and F per frame,
// means over frames 1..T-1 and targets.
EvalResult evaluate(const std::vector<MaskMap>& preds, const std::vector<MaskMap>& gts, int K,
                    int tolerance_px = -1);

// Boundary extraction used by boundary_f; exposed for rendering and tests.
MaskMap boundary_of(const MaskMap& mask);

}  // namespace crvos
