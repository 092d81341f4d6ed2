#include "crvos/render.hpp"

#include <cmath>

#include "crvos/errors.hpp"
#include "crvos/image_io.hpp"

namespace crvos {

Tensor overlay_mask(const Tensor& frame_rgb, const MaskMap& mask, double alpha) {
    if (frame_rgb.c() != 3 || frame_rgb.h() != mask.h || frame_rgb.w() != mask.w)
        throw ShapeError("overlay_mask: frame " + frame_rgb.shape_str() + " vs mask (" +
                         std::to_string(mask.h) + "," + std::to_string(mask.w) + ")");
    const auto palette = mask_palette();
    Tensor out = frame_rgb;
    for (int y = 0; y < mask.h; ++y) {
        for (int x = 0; x < mask.w; ++x) {
            const int32_t label = mask.at(y, x);
            if (label <= 0) continue;
            const auto& color = palette[label & 0xff];
            for (int c = 0; c < 3; ++c) {
                const double tint = color[c] / 255.0;
                out.at(c, y, x) = (1.0 - alpha) * out.at(c, y, x) + alpha * tint;
            }
        }
    }
    return out;
}

std::vector<int> contact_sheet_indices(size_t num_frames) {
    std::vector<int> idx;
    const double last = num_frames == 0 ? 0.0 : static_cast<double>(num_frames - 1);
    for (double p : {0.0, 0.25, 0.5, 0.75, 1.0})
        idx.push_back(static_cast<int>(std::lround(p * last)));
    return idx;
}

Tensor contact_sheet(const std::vector<Tensor>& tiles) {
    if (tiles.empty()) throw std::invalid_argument("contact_sheet: no tiles");
    const int h = tiles[0].h(), w = tiles[0].w();
    const int sep = 2;
    const int total_w = static_cast<int>(tiles.size()) * w +
                        (static_cast<int>(tiles.size()) - 1) * sep;
    Tensor sheet(3, h, total_w, 1.0);
    int off = 0;
    for (const Tensor& t : tiles) {
        if (t.c() != 3 || t.h() != h || t.w() != w)
            throw ShapeError("contact_sheet: tile shape mismatch " + t.shape_str());
        for (int c = 0; c < 3; ++c)
            for (int y = 0; y < h; ++y)
                for (int x = 0; x < w; ++x) sheet.at(c, y, off + x) = t.at(c, y, x);
        off += w + sep;
    }
    return sheet;
}

}  // namespace crvos
