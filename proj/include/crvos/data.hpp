#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "crvos/tensor.hpp"

namespace crvos {

// One RGB frame of a sequence plus its index.
struct Frame {
    int index = 0;
    Tensor rgb;  // (3,H,W) in [0,1]
};

// A video sequence: either file-backed (DAVIS layout) or in-memory
// (synthetic). Annotations may be sparse for inference input, but training
// and evaluation require a mask per frame.
struct SequenceRecord {
    std::string name;
    std::vector<std::string> frame_paths;
    std::vector<std::string> mask_paths;
    std::vector<Frame> frames;    // in-memory variant
    std::vector<MaskMap> masks;   // in-memory variant
    int num_targets = 0;
    bool binarize_labels = false;  // 2016-style: any nonzero label -> 1

    size_t length() const { return frame_paths.empty() ? frames.size() : frame_paths.size(); }
    bool in_memory() const { return frame_paths.empty(); }
    Frame load_frame(int i) const;
    // Throws DataError when frame i has no annotation.
    MaskMap load_mask(int i) const;
    bool has_mask(int i) const;
};

enum class ShapeKind { Square, Disk };

// Deterministic moving-shapes generator with exact ground-truth masks.
struct SyntheticSpec {
    int height = 64, width = 64;
    int num_targets = 1;
    std::vector<ShapeKind> shapes = {ShapeKind::Square};  // cycled over targets
    double translate_x = 2.0, translate_y = 0.0;          // px/frame, reflected at walls
    double scale_drift = 0.0;                             // size factor change per frame
    double rotate_deg = 0.0;                              // degrees per frame (squares)
    int length = 10;
    uint64_t seed = 1;
    double target_size = 16.0;                // square side / disk diameter in px
    bool identical_appearance = false;        // same color for every target
    std::vector<std::pair<double, double>> starts;  // optional explicit (y,x) centers

    // Static target-lookalike squares painted into the background (never in
    // the ground truth). Their layout comes from distractor_seed only, so
    // every sequence of a dataset shares it. distractor_margin keeps their
    // centers at least that far from every canvas edge.
    int num_distractors = 0;
    uint64_t distractor_seed = 424242;
    double distractor_margin = 0.0;

    // Resample the background texture every frame (targets and distractors
    // keep their appearance); leaves position as the only stable cue for
    // telling distractors from targets.
    bool dynamic_background = false;

    // Orbital motion: target k circles a fixed anchor (anchors are evenly
    // spaced on the horizontal midline and shared by every sequence; only
    // the starting phase varies with the seed). Overrides translate_*.
    bool orbit = false;
    double orbit_radius = 16.0;
    double orbit_deg_per_frame = 24.0;
};

SequenceRecord generate_synthetic(const SyntheticSpec& spec);

// Scan a DAVIS-style tree: root/JPEGImages/<seq>/ and root/Annotations/<seq>/
// (an extra resolution level like 480p/ is handled). 2016 style coerces all
// nonzero labels to 1; 2017 style keeps indexed labels.
std::vector<SequenceRecord> load_davis_layout(const std::string& root, int year_style = 2017,
                                              std::vector<std::string>* warnings = nullptr);

// Bilinear for frames, nearest for masks. Target must be divisible by 16.
std::pair<Frame, MaskMap> resize_policy(const Frame& frame, const MaskMap& mask, int target_h,
                                        int target_w);
Tensor resize_bilinear(const Tensor& src, int out_h, int out_w);
MaskMap resize_nearest(const MaskMap& src, int out_h, int out_w);

// Materialize a sequence at a fixed resolution (no-op when already there).
void materialize_at(const SequenceRecord& rec, int index, int target_h, int target_w,
                    Frame* frame, MaskMap* mask);

SyntheticSpec synthetic_spec_from_json(const std::string& json_text);
std::string synthetic_spec_to_json(const SyntheticSpec& spec);

}  // namespace crvos
