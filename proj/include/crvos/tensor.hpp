#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

namespace crvos {

// Dense rank-3 array (channels, height, width), row-major, double precision.
// Scalars are (1,1,1); 2-D maps are (1,h,w).
class Tensor {
public:
    Tensor() = default;
    Tensor(int c, int h, int w, double fill = 0.0)
        : c_(c), h_(h), w_(w), v_(static_cast<size_t>(c) * h * w, fill) {}

    int c() const { return c_; }
    int h() const { return h_; }
    int w() const { return w_; }
    size_t size() const { return v_.size(); }
    bool empty() const { return v_.empty(); }
    size_t plane() const { return static_cast<size_t>(h_) * w_; }

    double& at(int ci, int yi, int xi) {
        return v_[(static_cast<size_t>(ci) * h_ + yi) * w_ + xi];
    }
    double at(int ci, int yi, int xi) const {
        return v_[(static_cast<size_t>(ci) * h_ + yi) * w_ + xi];
    }

    double* data() { return v_.data(); }
    const double* data() const { return v_.data(); }
    double* channel(int ci) { return v_.data() + static_cast<size_t>(ci) * plane(); }
    const double* channel(int ci) const { return v_.data() + static_cast<size_t>(ci) * plane(); }
    double* row(int ci, int yi) { return channel(ci) + static_cast<size_t>(yi) * w_; }
    const double* row(int ci, int yi) const { return channel(ci) + static_cast<size_t>(yi) * w_; }

    bool same_shape(const Tensor& o) const { return c_ == o.c_ && h_ == o.h_ && w_ == o.w_; }

    void fill(double v) { std::fill(v_.begin(), v_.end(), v); }
    void add_scaled(const Tensor& o, double s) {
        for (size_t i = 0; i < v_.size(); ++i) v_[i] += s * o.v_[i];
    }

    std::string shape_str() const {
        return "(" + std::to_string(c_) + "," + std::to_string(h_) + "," + std::to_string(w_) + ")";
    }

    bool operator==(const Tensor& o) const {
        return same_shape(o) && v_ == o.v_;
    }

private:
    int c_ = 0, h_ = 0, w_ = 0;
    std::vector<double> v_;
};

// Dense integer label map; 0 is background, k in 1..K identifies target k.
struct MaskMap {
    int h = 0, w = 0;
    std::vector<int32_t> labels;

    MaskMap() = default;
    MaskMap(int h_, int w_, int32_t fill = 0)
        : h(h_), w(w_), labels(static_cast<size_t>(h_) * w_, fill) {}

    int32_t& at(int yi, int xi) { return labels[static_cast<size_t>(yi) * w + xi]; }
    int32_t at(int yi, int xi) const { return labels[static_cast<size_t>(yi) * w + xi]; }
    size_t size() const { return labels.size(); }

    bool operator==(const MaskMap& o) const {
        return h == o.h && w == o.w && labels == o.labels;
    }
};

int max_label(const MaskMap& m);

// One-hot soft mask (2,h,w) for one target: channel 0 = fg, channel 1 = bg.
Tensor binary_soft_mask(const MaskMap& m, int target);

// Argmax-harden a soft mask: fg >= bg -> (1,0), else (0,1).
Tensor harden_soft_mask(const Tensor& soft);

// Binarize a soft mask at fg >= bg.
MaskMap soft_to_binary(const Tensor& soft);

}  // namespace crvos
