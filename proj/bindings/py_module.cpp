// Python bindings for the main crvos operations.

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "crvos/data.hpp"
#include "crvos/geometry.hpp"
#include "crvos/metrics.hpp"
#include "crvos/model.hpp"
#include "crvos/propagation.hpp"
#include "crvos/render.hpp"
#include "crvos/training.hpp"
#include "crvos/version.hpp"

namespace py = pybind11;
using namespace crvos;

namespace {

using DArray = py::array_t<double, py::array::c_style | py::array::forcecast>;
using IArray = py::array_t<int32_t, py::array::c_style | py::array::forcecast>;

Tensor tensor_from_array(const DArray& a) {
    if (a.ndim() == 2) {
        Tensor t(1, static_cast<int>(a.shape(0)), static_cast<int>(a.shape(1)));
        std::copy(a.data(), a.data() + t.size(), t.data());
        return t;
    }
    if (a.ndim() != 3) throw py::value_error("expected a (C,H,W) or (H,W) array");
    Tensor t(static_cast<int>(a.shape(0)), static_cast<int>(a.shape(1)),
             static_cast<int>(a.shape(2)));
    std::copy(a.data(), a.data() + t.size(), t.data());
    return t;
}

py::array tensor_to_array(const Tensor& t) {
    py::array_t<double> out({t.c(), t.h(), t.w()});
    std::copy(t.data(), t.data() + t.size(), out.mutable_data());
    return out;
}

MaskMap mask_from_array(const IArray& a) {
    if (a.ndim() != 2) throw py::value_error("expected a (H,W) integer mask");
    MaskMap m(static_cast<int>(a.shape(0)), static_cast<int>(a.shape(1)));
    std::copy(a.data(), a.data() + m.size(), m.labels.begin());
    return m;
}

std::vector<Frame> frames_from_array(const DArray& a) {
    if (a.ndim() != 4 || a.shape(1) != 3)
        throw py::value_error("expected frames shaped (T,3,H,W)");
    std::vector<Frame> frames;
    const int T = static_cast<int>(a.shape(0));
    const int H = static_cast<int>(a.shape(2)), W = static_cast<int>(a.shape(3));
    const size_t stride = static_cast<size_t>(3) * H * W;
    for (int t = 0; t < T; ++t) {
        Frame f;
        f.index = t;
        f.rgb = Tensor(3, H, W);
        std::copy(a.data() + t * stride, a.data() + (t + 1) * stride, f.rgb.data());
        frames.push_back(std::move(f));
    }
    return frames;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "CRVOS: real-time video object segmentation (desk-scale core)";
    m.attr("__version__") = kVersion;

    // ---- geometry -------------------------------------------------------
    m.def(
        "make_coord_channels",
        [](int h16, int w16) {
            const CoordChannels cc = make_coord_channels(h16, w16);
            Tensor stacked(3, h16, w16);
            std::copy(cc.height_ramp.data(), cc.height_ramp.data() + cc.height_ramp.size(),
                      stacked.channel(0));
            std::copy(cc.width_ramp.data(), cc.width_ramp.data() + cc.width_ramp.size(),
                      stacked.channel(1));
            std::copy(cc.center_distance.data(),
                      cc.center_distance.data() + cc.center_distance.size(),
                      stacked.channel(2));
            return tensor_to_array(stacked);
        },
        py::arg("h16"), py::arg("w16"),
        "Coordinate channels stacked as (3,h,w): height ramp, width ramp, center distance.");

    m.def(
        "downsample_mask",
        [](const DArray& soft, int factor) {
            const CoarseMask cm = downsample_mask(tensor_from_array(soft), factor);
            Tensor stacked(2, cm.fg.h(), cm.fg.w());
            std::copy(cm.fg.data(), cm.fg.data() + cm.fg.size(), stacked.channel(0));
            std::copy(cm.bg.data(), cm.bg.data() + cm.bg.size(), stacked.channel(1));
            return tensor_to_array(stacked);
        },
        py::arg("soft_mask"), py::arg("factor") = 16,
        "Block-mean pooled coarse mask (2,h,w) of a (2,H,W) soft mask.");

    m.def(
        "build_clue",
        [](const DArray& prev_mask) {
            const Tensor prev = tensor_from_array(prev_mask);
            const Clue clue =
                build_clue(prev, make_coord_channels(prev.h() / 16, prev.w() / 16));
            return tensor_to_array(clue.channels);
        },
        py::arg("prev_mask"), "The 5-channel Clue for a (2,H,W) previous-frame soft mask.");

    // ---- metrics --------------------------------------------------------
    m.def(
        "jaccard",
        [](const IArray& pred, const IArray& gt) {
            return jaccard(mask_from_array(pred), mask_from_array(gt));
        },
        py::arg("pred"), py::arg("gt"));

    m.def(
        "boundary_f",
        [](const IArray& pred, const IArray& gt, int tolerance_px) {
            return boundary_f(mask_from_array(pred), mask_from_array(gt), tolerance_px);
        },
        py::arg("pred"), py::arg("gt"), py::arg("tolerance_px") = -1);

    m.def(
        "evaluate",
        [](const std::vector<IArray>& preds, const std::vector<IArray>& gts, int K,
           int tolerance_px) {
            std::vector<MaskMap> p, g;
            for (const auto& a : preds) p.push_back(mask_from_array(a));
            for (const auto& a : gts) g.push_back(mask_from_array(a));
            const EvalResult r = evaluate(p, g, K, tolerance_px);
            py::dict out;
            out["mean_J"] = r.mean_J;
            out["mean_F"] = r.mean_F;
            out["mean_JF"] = r.mean_JF;
            out["per_target_per_frame_J"] = r.per_target_per_frame_J;
            out["per_target_per_frame_F"] = r.per_target_per_frame_F;
            return out;
        },
        py::arg("preds"), py::arg("gts"), py::arg("K"), py::arg("tolerance_px") = -1);

    m.def(
        "nll_loss",
        [](const DArray& pred, const IArray& target) {
            return nll_loss(tensor_from_array(pred), mask_from_array(target));
        },
        py::arg("pred"), py::arg("target"));

    // ---- data -----------------------------------------------------------
    m.def(
        "generate_synthetic",
        [](const std::string& spec_json) {
            const SequenceRecord rec = generate_synthetic(synthetic_spec_from_json(spec_json));
            const int T = static_cast<int>(rec.length());
            const int H = rec.frames[0].rgb.h(), W = rec.frames[0].rgb.w();
            py::array_t<double> frames({T, 3, H, W});
            py::array_t<int32_t> masks({T, H, W});
            for (int t = 0; t < T; ++t) {
                std::copy(rec.frames[t].rgb.data(),
                          rec.frames[t].rgb.data() + rec.frames[t].rgb.size(),
                          frames.mutable_data() + static_cast<size_t>(t) * 3 * H * W);
                std::copy(rec.masks[t].labels.begin(), rec.masks[t].labels.end(),
                          masks.mutable_data() + static_cast<size_t>(t) * H * W);
            }
            return py::make_tuple(frames, masks);
        },
        py::arg("spec_json"),
        "Deterministic moving-shapes sequence; returns (frames (T,3,H,W), masks (T,H,W)).");

    // ---- model / propagation --------------------------------------------
    py::class_<Network>(m, "Network")
        .def(py::init([](const std::string& variant, double width_scale, uint64_t seed,
                         bool hard_clue_mask, const std::string& combine) {
                 ModelConfig cfg =
                     ModelConfig::for_variant(variant_from_name(variant), width_scale);
                 cfg.hard_clue_mask = hard_clue_mask;
                 if (combine == "last") cfg.combine = Combine::Last;
                 return Network(cfg, seed);
             }),
             py::arg("variant") = "III", py::arg("width_scale") = 0.125, py::arg("seed") = 0,
             py::arg("hard_clue_mask") = false, py::arg("combine") = "sum")
        .def_property_readonly("parameter_count", &Network::parameter_count)
        .def_property_readonly(
            "variant", [](const Network& n) { return variant_name(n.config().variant); })
        .def("audit",
             [](const Network& n) {
                 const ArchAudit a = n.audit();
                 py::dict out;
                 out["deconv_in_refine_modules"] = a.deconv_in_refine_modules;
                 out["bilinear_in_refine_modules"] = a.bilinear_in_refine_modules;
                 out["rm1_fuse_in_channels"] = a.rm1_fuse_in_channels;
                 out["parameter_count"] = a.parameter_count;
                 return out;
             })
        .def(
            "segment",
            [](const Network& net, const DArray& frame, const DArray& prev_mask) {
                const Tensor img = tensor_from_array(frame);
                const Tensor prev = tensor_from_array(prev_mask);
                Specifier spec;
                if (net.config().specifier_channels() == 2)
                    spec = downsample_mask(prev);
                else if (net.config().specifier_channels() == 5)
                    spec = build_clue(prev, make_coord_channels(prev.h() / 16, prev.w() / 16));
                return tensor_to_array(net.decode(net.encode(img), spec));
            },
            py::arg("frame"), py::arg("prev_mask"),
            "One propagation step for one target: (3,H,W) frame + (2,H,W) previous soft "
            "mask -> (2,H,W) soft mask.")
        .def(
            "run_sequence",
            [](const Network& net, const DArray& frames, const IArray& initial_mask) {
                const auto fr = frames_from_array(frames);
                const auto out = run_sequence(fr, mask_from_array(initial_mask), net);
                const int T = static_cast<int>(out.size());
                py::array_t<int32_t> result({T, out[0].h, out[0].w});
                for (int t = 0; t < T; ++t)
                    std::copy(out[t].labels.begin(), out[t].labels.end(),
                              result.mutable_data() +
                                  static_cast<size_t>(t) * out[0].h * out[0].w);
                return result;
            },
            py::arg("frames"), py::arg("initial_mask"))
        .def(
            "benchmark",
            [](const Network& net, const DArray& frames, const IArray& initial_mask,
               int warmup) {
                const BenchReport r = benchmark(frames_from_array(frames),
                                                mask_from_array(initial_mask), net, warmup);
                py::dict out;
                out["frames_processed"] = r.frames_processed;
                out["wall_seconds"] = r.wall_seconds;
                out["fps"] = r.fps;
                out["per_stage_ms"] = r.per_stage_ms;
                out["note"] = r.note;
                return out;
            },
            py::arg("frames"), py::arg("initial_mask"), py::arg("warmup") = 0)
        .def(
            "save",
            [](const Network& net, const std::string& path, uint64_t step) {
                net.save_checkpoint(path, step);
            },
            py::arg("path"), py::arg("step") = 0)
        .def_static(
            "load", [](const std::string& path) { return Network::load_checkpoint(path); },
            py::arg("path"));

    m.def(
        "train_clip",
        [](Network& net, const DArray& frames, const IArray& masks, int target, double lr,
           int steps, bool backprop_through_clue) {
            const auto fr = frames_from_array(frames);
            if (masks.ndim() != 3) throw py::value_error("masks must be (T,H,W)");
            Clip clip;
            clip.sequence = "py";
            clip.target = target;
            clip.frames = fr;
            const int H = static_cast<int>(masks.shape(1));
            const int W = static_cast<int>(masks.shape(2));
            for (py::ssize_t t = 0; t < masks.shape(0); ++t) {
                MaskMap mm(H, W);
                std::copy(masks.data() + t * H * W, masks.data() + (t + 1) * H * W,
                          mm.labels.begin());
                clip.masks.push_back(std::move(mm));
            }
            TrainConfig cfg = TrainConfig::preset(Stage::Finetune);
            cfg.clip_len = static_cast<int>(clip.frames.size());
            cfg.lr = lr;
            cfg.augment = false;
            cfg.backprop_through_clue = backprop_through_clue;
            Adam adam;
            double loss = 0.0;
            for (int i = 0; i < steps; ++i) loss = train_clip(net, adam, clip, cfg);
            return loss;
        },
        py::arg("net"), py::arg("frames"), py::arg("masks"), py::arg("target") = 1,
        py::arg("lr") = 1e-3, py::arg("steps") = 1, py::arg("backprop_through_clue") = false,
        "Adam updates on one clip; returns the final mean NLL loss.");
}
