#include "crvos/propagation.hpp"

#include <chrono>

#include "crvos/errors.hpp"

namespace crvos {

namespace {

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point t0) {
    return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

Specifier make_specifier(const Network& net, const Tensor& prev_mask,
                         const CoordChannels& coords) {
    const int spec_ch = net.config().specifier_channels();
    if (spec_ch == 0) return std::monostate{};
    const Tensor* prev = &prev_mask;
    Tensor hard;
    if (net.config().hard_clue_mask) {
        hard = harden_soft_mask(prev_mask);
        prev = &hard;
    }
    if (spec_ch == 2) return downsample_mask(*prev);
    return build_clue(*prev, coords);
}

}  // namespace

SequenceState initial_state(const MaskMap& initial_mask, int num_targets) {
    if (num_targets < 1)
        throw std::invalid_argument("initial_state: need at least one target");
    SequenceState st;
    st.frame_index = 0;
    st.coords = make_coord_channels(initial_mask.h / 16, initial_mask.w / 16);
    for (int k = 1; k <= num_targets; ++k)
        st.per_target_prev_mask.push_back(binary_soft_mask(initial_mask, k));
    return st;
}

StepResult step(const SequenceState& state, const Frame& frame, const Network& net,
                StepTiming* timing) {
    if (state.per_target_prev_mask.empty())
        throw std::invalid_argument("step: state has no targets");
    const Tensor& rgb = frame.rgb;
    const Tensor& prev0 = state.per_target_prev_mask[0];
    if (rgb.h() != prev0.h() || rgb.w() != prev0.w())
        throw ShapeError("step: frame " + std::to_string(frame.index) + " is " +
                         std::to_string(rgb.h()) + "x" + std::to_string(rgb.w()) +
                         " but sequence masks are " + std::to_string(prev0.h()) + "x" +
                         std::to_string(prev0.w()));

    auto t0 = Clock::now();
    const FeaturePyramid pyr = net.encode(rgb);
    if (timing) timing->encode_ms += ms_since(t0);

    StepResult res;
    res.next.frame_index = state.frame_index + 1;
    res.next.coords = state.coords;
    for (const Tensor& prev : state.per_target_prev_mask) {
        t0 = Clock::now();
        const Specifier spec = make_specifier(net, prev, state.coords);
        if (timing) timing->clue_ms += ms_since(t0);

        t0 = Clock::now();
        Tensor mask = net.decode(pyr, spec);
        if (timing) timing->decode_ms += ms_since(t0);
        res.next.per_target_prev_mask.push_back(mask);
        res.masks.push_back(std::move(mask));
    }
    return res;
}

MaskMap overlap(const std::vector<Tensor>& per_target_masks, OverlapRule rule) {
    if (per_target_masks.empty())
        throw std::invalid_argument("overlap: empty mask list");
    const int h = per_target_masks[0].h(), w = per_target_masks[0].w();
    for (const Tensor& m : per_target_masks)
        if (m.c() != 2 || m.h() != h || m.w() != w)
            throw ShapeError("overlap: mask shape mismatch " + m.shape_str());

    MaskMap out(h, w);
    const int K = static_cast<int>(per_target_masks.size());
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            if (rule == OverlapRule::Paint) {
                for (int k = 0; k < K; ++k)
                    if (per_target_masks[k].at(0, y, x) >= per_target_masks[k].at(1, y, x))
                        out.at(y, x) = k + 1;
                continue;
            }
            int best = 0;          // background
            double best_fg = 0.0;
            for (int k = 0; k < K; ++k) {
                const double fg = per_target_masks[k].at(0, y, x);
                const double bg = per_target_masks[k].at(1, y, x);
                if (fg < bg) continue;  // this target votes background here
                if (best == 0 || fg > best_fg) {
                    best = k + 1;
                    best_fg = fg;
                }
            }
            out.at(y, x) = best;
        }
    }
    return out;
}

std::vector<MaskMap> run_sequence(const std::vector<Frame>& frames, const MaskMap& initial_mask,
                                  const Network& net, OverlapRule rule) {
    if (frames.empty()) throw std::invalid_argument("run_sequence: no frames");
    for (int32_t v : initial_mask.labels)
        if (v < 0) throw DataError("run_sequence: negative label in initial mask");
    const int K = max_label(initial_mask);
    if (K < 1) throw DataError("run_sequence: initial mask has no foreground targets");
    if (frames[0].rgb.h() != initial_mask.h || frames[0].rgb.w() != initial_mask.w)
        throw ShapeError("run_sequence: initial mask does not match frame size");

    std::vector<MaskMap> out;
    out.push_back(initial_mask);  // the given mask is ground truth
    SequenceState st = initial_state(initial_mask, K);
    for (size_t t = 1; t < frames.size(); ++t) {
        StepResult res = step(st, frames[t], net);
        out.push_back(overlap(res.masks, rule));
        st = std::move(res.next);
    }
    return out;
}

BenchReport benchmark(const std::vector<Frame>& frames, const MaskMap& initial_mask,
                      const Network& net, int warmup, OverlapRule rule) {
    if (frames.empty()) throw std::invalid_argument("benchmark: no frames");
    if (warmup < 0 || warmup >= static_cast<int>(frames.size()))
        throw std::invalid_argument("benchmark: warmup must be < number of frames");
    const int K = max_label(initial_mask);
    if (K < 1) throw DataError("benchmark: initial mask has no foreground targets");

    SequenceState st = initial_state(initial_mask, K);
    StepTiming timing;
    double overlap_ms = 0.0;
    Clock::time_point wall_start;
    bool timing_on = warmup == 0;
    if (timing_on) wall_start = Clock::now();

    for (size_t t = 1; t < frames.size(); ++t) {
        if (!timing_on && static_cast<int>(t) >= warmup) {
            timing_on = true;
            wall_start = Clock::now();
        }
        StepResult res = step(st, frames[t], net, timing_on ? &timing : nullptr);
        const auto t0 = Clock::now();
        MaskMap merged = overlap(res.masks, rule);
        if (timing_on) overlap_ms += ms_since(t0);
        (void)merged;
        st = std::move(res.next);
    }

    BenchReport report;
    report.frames_processed = frames.size() - static_cast<size_t>(warmup);
    report.wall_seconds =
        std::chrono::duration<double>(Clock::now() - wall_start).count();
    report.fps = static_cast<double>(report.frames_processed) / report.wall_seconds;
    report.per_stage_ms = {{"encode", timing.encode_ms},
                           {"clue", timing.clue_ms},
                           {"decode", timing.decode_ms},
                           {"overlap", overlap_ms}};
    report.note = "timing excludes file decode and disk I/O";
    return report;
}

}  // namespace crvos
