#include "crvos/geometry.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "crvos/errors.hpp"
#include "crvos/nn_ops.hpp"

namespace crvos {

CoordChannels make_coord_channels(int h16, int w16) {
    if (h16 < 1 || w16 < 1)
        throw std::invalid_argument("make_coord_channels: dimensions must be positive, got " +
                                    std::to_string(h16) + "x" + std::to_string(w16));
    CoordChannels cc;
    cc.height_ramp = Tensor(1, h16, w16);
    cc.width_ramp = Tensor(1, h16, w16);
    cc.center_distance = Tensor(1, h16, w16);

    auto ramp_at = [](int i, int n) { return n == 1 ? 0.0 : -1.0 + 2.0 * i / (n - 1); };

    const double corner_y = h16 == 1 ? 0.0 : 1.0;
    const double corner_x = w16 == 1 ? 0.0 : 1.0;
    const double d_max = std::hypot(corner_y, corner_x);

    for (int y = 0; y < h16; ++y) {
        const double ry = ramp_at(y, h16);
        for (int x = 0; x < w16; ++x) {
            const double rx = ramp_at(x, w16);
            cc.height_ramp.at(0, y, x) = ry;
            cc.width_ramp.at(0, y, x) = rx;
            const double d = std::hypot(ry, rx);
            cc.center_distance.at(0, y, x) = d_max == 0.0 ? -1.0 : 2.0 * d / d_max - 1.0;
        }
    }
    return cc;
}

CoarseMask downsample_mask(const Tensor& soft_mask, int factor) {
    if (soft_mask.c() != 2)
        throw ShapeError("downsample_mask: expected a (2,H,W) soft mask, got " +
                         soft_mask.shape_str());
    const int H = soft_mask.h(), W = soft_mask.w();
    const bool bad_h = H % factor != 0, bad_w = W % factor != 0;
    if (bad_h || bad_w) {
        std::string axes;
        if (bad_h) axes += "height " + std::to_string(H);
        if (bad_h && bad_w) axes += " and ";
        if (bad_w) axes += "width " + std::to_string(W);
        throw ShapeError("downsample_mask: " + axes + " not divisible by " +
                         std::to_string(factor));
    }
    for (size_t i = 0; i < soft_mask.plane(); ++i) {
        const double fg = soft_mask.data()[i];
        const double bg = soft_mask.data()[soft_mask.plane() + i];
        if (fg < -1e-9 || fg > 1.0 + 1e-9 || std::abs(fg + bg - 1.0) > 1e-5)
            throw std::invalid_argument(
                "downsample_mask: per-pixel probabilities must lie in [0,1] and sum to 1");
    }
    Tensor pooled = nn::avgpool_fwd(soft_mask, factor);
    CoarseMask cm;
    cm.fg = Tensor(1, pooled.h(), pooled.w());
    cm.bg = Tensor(1, pooled.h(), pooled.w());
    std::copy(pooled.channel(0), pooled.channel(0) + pooled.plane(), cm.fg.data());
    std::copy(pooled.channel(1), pooled.channel(1) + pooled.plane(), cm.bg.data());
    return cm;
}

Clue build_clue(const Tensor& prev_mask, const CoordChannels& coords) {
    CoarseMask cm = downsample_mask(prev_mask);
    if (cm.fg.h() != coords.grid_h() || cm.fg.w() != coords.grid_w())
        throw ShapeError("build_clue: coarse mask (" + std::to_string(cm.fg.h()) + "," +
                         std::to_string(cm.fg.w()) + ") does not match coords grid (" +
                         std::to_string(coords.grid_h()) + "," + std::to_string(coords.grid_w()) +
                         ")");
    Clue clue;
    clue.channels = Tensor(5, coords.grid_h(), coords.grid_w());
    const size_t plane = clue.channels.plane();
    std::copy(cm.fg.data(), cm.fg.data() + plane, clue.channels.channel(0));
    std::copy(cm.bg.data(), cm.bg.data() + plane, clue.channels.channel(1));
    std::copy(coords.height_ramp.data(), coords.height_ramp.data() + plane,
              clue.channels.channel(2));
    std::copy(coords.width_ramp.data(), coords.width_ramp.data() + plane,
              clue.channels.channel(3));
    std::copy(coords.center_distance.data(), coords.center_distance.data() + plane,
              clue.channels.channel(4));
    return clue;
}

}  // namespace crvos
