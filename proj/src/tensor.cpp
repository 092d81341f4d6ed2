#include "crvos/tensor.hpp"

#include <algorithm>

namespace crvos {

int max_label(const MaskMap& m) {
    int32_t k = 0;
    for (int32_t v : m.labels) k = std::max(k, v);
    return static_cast<int>(k);
}

Tensor binary_soft_mask(const MaskMap& m, int target) {
    Tensor soft(2, m.h, m.w);
    for (int y = 0; y < m.h; ++y) {
        for (int x = 0; x < m.w; ++x) {
            const bool fg = m.at(y, x) == target;
            soft.at(0, y, x) = fg ? 1.0 : 0.0;
            soft.at(1, y, x) = fg ? 0.0 : 1.0;
        }
    }
    return soft;
}

Tensor harden_soft_mask(const Tensor& soft) {
    Tensor hard(2, soft.h(), soft.w());
    for (int y = 0; y < soft.h(); ++y) {
        for (int x = 0; x < soft.w(); ++x) {
            const bool fg = soft.at(0, y, x) >= soft.at(1, y, x);
            hard.at(0, y, x) = fg ? 1.0 : 0.0;
            hard.at(1, y, x) = fg ? 0.0 : 1.0;
        }
    }
    return hard;
}

MaskMap soft_to_binary(const Tensor& soft) {
    MaskMap m(soft.h(), soft.w());
    for (int y = 0; y < soft.h(); ++y)
        for (int x = 0; x < soft.w(); ++x)
            m.at(y, x) = soft.at(0, y, x) >= soft.at(1, y, x) ? 1 : 0;
    return m;
}

}  // namespace crvos
