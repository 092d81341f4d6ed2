#pragma once

#include <map>
#include <string>
#include <vector>

#include "crvos/data.hpp"
#include "crvos/geometry.hpp"
#include "crvos/model.hpp"
#include "crvos/tensor.hpp"

namespace crvos {

// Recurrent state carried from frame to frame: one soft mask per target plus
// the coordinate channels (computed once per sequence).
struct SequenceState {
    int frame_index = 0;
    std::vector<Tensor> per_target_prev_mask;  // K soft masks (2,H,W)
    CoordChannels coords;
};

SequenceState initial_state(const MaskMap& initial_mask, int num_targets);

struct StepTiming {
    double encode_ms = 0.0;
    double clue_ms = 0.0;
    double decode_ms = 0.0;
};

// One propagation step: encoder features are computed once per frame and
// shared across targets; each target is decoded independently conditioned on
// its own previous mask.
struct StepResult {
    std::vector<Tensor> masks;  // per target (2,H,W)
    SequenceState next;
};
StepResult step(const SequenceState& state, const Frame& frame, const Network& net,
                StepTiming* timing = nullptr);

// How per-target masks merge into one label map.
//   Argmax: background unless some target has fg >= bg; else the target with
//           the highest fg wins, ties to the lowest index.
//   Paint:  targets painted in index order; later targets overwrite.
enum class OverlapRule { Argmax, Paint };

MaskMap overlap(const std::vector<Tensor>& per_target_masks,
                OverlapRule rule = OverlapRule::Argmax);

// Frame 0 emits the given mask verbatim; frames 1..T-1 are predicted.
std::vector<MaskMap> run_sequence(const std::vector<Frame>& frames, const MaskMap& initial_mask,
                                  const Network& net, OverlapRule rule = OverlapRule::Argmax);

struct BenchReport {
    size_t frames_processed = 0;
    double wall_seconds = 0.0;
    double fps = 0.0;
    std::map<std::string, double> per_stage_ms;  // encode / clue / decode / overlap
    std::string note;
};

// Times step+overlap only; the first `warmup` frames are excluded from both
// the clock and frames_processed. Frames must already be decoded in memory.
BenchReport benchmark(const std::vector<Frame>& frames, const MaskMap& initial_mask,
                      const Network& net, int warmup, OverlapRule rule = OverlapRule::Argmax);

}  // namespace crvos
