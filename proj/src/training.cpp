#include "crvos/training.hpp"

#include <chrono>
#include <cmath>
#include <numbers>

#include "crvos/errors.hpp"
#include "crvos/geometry.hpp"
#include "crvos/nn_ops.hpp"
#include "crvos/rng.hpp"

namespace crvos {

Stage stage_from_name(const std::string& name) {
    if (name == "pretrain") return Stage::Pretrain;
    if (name == "finetune") return Stage::Finetune;
    throw ConfigError("unknown stage '" + name + "' (expected pretrain or finetune)");
}

std::string stage_name(Stage s) { return s == Stage::Pretrain ? "pretrain" : "finetune"; }

TrainConfig TrainConfig::preset(Stage s) {
    TrainConfig cfg;
    cfg.stage = s;
    if (s == Stage::Pretrain) {
        cfg.clip_len = 8;
        cfg.res_h = 240;
        cfg.res_w = 432;
        cfg.lr = 1e-4;
        cfg.epochs = 100;
        cfg.augment = false;
    } else {
        cfg.clip_len = 16;
        cfg.res_h = 480;
        cfg.res_w = 864;
        cfg.lr = 1e-5;
        cfg.epochs = 500;
        cfg.augment = true;
    }
    return cfg;
}

void TrainConfig::validate() const {
    if (clip_len < 2) throw ConfigError("clip_len must be >= 2");
    if (res_h % 16 != 0 || res_w % 16 != 0)
        throw ConfigError("training resolution " + std::to_string(res_h) + "x" +
                          std::to_string(res_w) + " must be divisible by 16");
    if (lr <= 0) throw ConfigError("lr must be positive");
    if (epochs < 0) throw ConfigError("epochs must be >= 0");
    if (batch_clips < 1) throw ConfigError("batch_clips must be >= 1");
    if (augment && stage == Stage::Pretrain)
        throw ConfigError("augmentation is a finetune-stage option");
}

// ---------------------------------------------------------------------------
// loss
// ---------------------------------------------------------------------------

double nll_loss(const Tensor& pred, const MaskMap& target, double eps) {
    return nn::nll_loss_graph(nn::leaf(pred), target, eps)->value.data()[0];
}

// ---------------------------------------------------------------------------
// clip sampling
// ---------------------------------------------------------------------------

Clip sample_clip(const std::vector<SequenceRecord>& dataset, int clip_len, Rng& rng) {
    if (clip_len < 1) throw std::invalid_argument("sample_clip: clip_len must be >= 1");
    std::vector<size_t> eligible;
    for (size_t i = 0; i < dataset.size(); ++i)
        if (static_cast<int>(dataset[i].length()) >= clip_len) eligible.push_back(i);
    if (eligible.empty())
        throw DataError("sample_clip: no sequence has " + std::to_string(clip_len) + " frames");

    const SequenceRecord& rec = dataset[eligible[rng.uniform_int(
        0, static_cast<int>(eligible.size()) - 1)]];
    const int max_start = static_cast<int>(rec.length()) - clip_len;
    Clip clip;
    clip.sequence = rec.name;
    clip.start = max_start == 0 ? 0 : rng.uniform_int(0, max_start);
    for (int i = 0; i < clip_len; ++i) {
        Frame f = rec.load_frame(clip.start + i);
        f.index = i;
        clip.frames.push_back(std::move(f));
        clip.masks.push_back(rec.load_mask(clip.start + i));
    }
    // uniform over targets present in the clip's first mask
    std::vector<int> present;
    const int K = max_label(clip.masks[0]);
    for (int k = 1; k <= K; ++k) {
        bool found = false;
        for (int32_t v : clip.masks[0].labels)
            if (v == k) {
                found = true;
                break;
            }
        if (found) present.push_back(k);
    }
    clip.target = present.empty()
                      ? 1
                      : present[rng.uniform_int(0, static_cast<int>(present.size()) - 1)];
    return clip;
}

// ---------------------------------------------------------------------------
// augmentation
// ---------------------------------------------------------------------------

AugmentParams sample_augment_params(Rng& rng) {
    AugmentParams p;
    p.hflip = rng.uniform() < 0.5;
    p.rotation_deg = rng.uniform(-30.0, 30.0);
    p.shear_deg = rng.uniform(-30.0, 30.0);
    p.scale = rng.uniform(0.75, 1.25);
    return p;
}

namespace {

void validate_params(const AugmentParams& p) {
    if (p.rotation_deg < -30.0 || p.rotation_deg > 30.0)
        throw std::invalid_argument("augment: rotation outside [-30,30]");
    if (p.shear_deg < -30.0 || p.shear_deg > 30.0)
        throw std::invalid_argument("augment: shear outside [-30,30]");
    if (p.scale < 0.75 || p.scale > 1.25)
        throw std::invalid_argument("augment: scale outside [0.75,1.25]");
}

struct Affine {
    // inverse map: output pixel -> input position
    double m00, m01, m10, m11;
};

// content transform = rotate(theta) . shear(phi) . scale(s); inverse applied
// at sample time, all about the image center.
Affine inverse_affine(const AugmentParams& p) {
    const double th = p.rotation_deg * std::numbers::pi / 180.0;
    const double sh = std::tan(p.shear_deg * std::numbers::pi / 180.0);
    const double inv_s = 1.0 / p.scale;
    const double c = std::cos(th), s = std::sin(th);
    // R^-1
    const double r00 = c, r01 = s, r10 = -s, r11 = c;
    // Sh^-1 (x-shear)
    const double h00 = 1, h01 = -sh, h10 = 0, h11 = 1;
    // A^-1 = S^-1 . Sh^-1 . R^-1
    Affine a;
    a.m00 = inv_s * (h00 * r00 + h01 * r10);
    a.m01 = inv_s * (h00 * r01 + h01 * r11);
    a.m10 = inv_s * (h10 * r00 + h11 * r10);
    a.m11 = inv_s * (h10 * r01 + h11 * r11);
    return a;
}

Tensor warp_bilinear(const Tensor& src, const Affine& a) {
    Tensor dst(src.c(), src.h(), src.w());
    const double cy = (src.h() - 1) * 0.5, cx = (src.w() - 1) * 0.5;
    for (int oy = 0; oy < src.h(); ++oy) {
        for (int ox = 0; ox < src.w(); ++ox) {
            const double dx = ox - cx, dy = oy - cy;
            const double sx = a.m00 * dx + a.m01 * dy + cx;
            const double sy = a.m10 * dx + a.m11 * dy + cy;
            if (sx < 0 || sy < 0 || sx > src.w() - 1 || sy > src.h() - 1) continue;
            const int x0 = static_cast<int>(sx), y0 = static_cast<int>(sy);
            const int x1 = std::min(x0 + 1, src.w() - 1), y1 = std::min(y0 + 1, src.h() - 1);
            const double fx = sx - x0, fy = sy - y0;
            for (int ch = 0; ch < src.c(); ++ch) {
                const double top = src.at(ch, y0, x0) * (1 - fx) + src.at(ch, y0, x1) * fx;
                const double bot = src.at(ch, y1, x0) * (1 - fx) + src.at(ch, y1, x1) * fx;
                dst.at(ch, oy, ox) = top * (1 - fy) + bot * fy;
            }
        }
    }
    return dst;
}

MaskMap warp_nearest(const MaskMap& src, const Affine& a) {
    MaskMap dst(src.h, src.w);
    const double cy = (src.h - 1) * 0.5, cx = (src.w - 1) * 0.5;
    for (int oy = 0; oy < src.h; ++oy) {
        for (int ox = 0; ox < src.w; ++ox) {
            const double dx = ox - cx, dy = oy - cy;
            const double sx = a.m00 * dx + a.m01 * dy + cx;
            const double sy = a.m10 * dx + a.m11 * dy + cy;
            const long ix = std::lround(sx), iy = std::lround(sy);
            if (ix < 0 || iy < 0 || ix >= src.w || iy >= src.h) continue;
            dst.at(oy, ox) = src.at(static_cast<int>(iy), static_cast<int>(ix));
        }
    }
    return dst;
}

bool is_identity(const AugmentParams& p) {
    return p.rotation_deg == 0.0 && p.shear_deg == 0.0 && p.scale == 1.0;
}

}  // namespace

void augment_clip(std::vector<Frame>& frames, std::vector<MaskMap>& masks,
                  const AugmentParams& params) {
    validate_params(params);
    if (frames.size() != masks.size())
        throw ShapeError("augment_clip: frame/mask count mismatch");
    const Affine a = inverse_affine(params);
    const bool warp = !is_identity(params);
    for (size_t i = 0; i < frames.size(); ++i) {
        if (params.hflip) {
            Tensor& t = frames[i].rgb;
            for (int c = 0; c < t.c(); ++c)
                for (int y = 0; y < t.h(); ++y) {
                    double* row = t.row(c, y);
                    std::reverse(row, row + t.w());
                }
            MaskMap& m = masks[i];
            for (int y = 0; y < m.h; ++y) {
                int32_t* row = m.labels.data() + static_cast<size_t>(y) * m.w;
                std::reverse(row, row + m.w);
            }
        }
        if (warp) {
            frames[i].rgb = warp_bilinear(frames[i].rgb, a);
            masks[i] = warp_nearest(masks[i], a);
        }
    }
}

// ---------------------------------------------------------------------------
// Adam
// ---------------------------------------------------------------------------

Adam::Adam(double beta1, double beta2, double eps) : beta1_(beta1), beta2_(beta2), eps_(eps) {}

void Adam::step(std::vector<NamedParam>& params, double lr) {
    if (m_.size() != params.size()) {
        m_.clear();
        v_.clear();
        for (const auto& p : params) {
            m_.emplace_back(p.var->value.c(), p.var->value.h(), p.var->value.w());
            v_.emplace_back(p.var->value.c(), p.var->value.h(), p.var->value.w());
        }
    }
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (size_t i = 0; i < params.size(); ++i) {
        auto& p = params[i];
        p.var->ensure_grad();
        double* m = m_[i].data();
        double* v = v_[i].data();
        double* w = p.var->value.data();
        const double* g = p.var->grad.data();
        for (size_t j = 0; j < p.var->value.size(); ++j) {
            m[j] = beta1_ * m[j] + (1.0 - beta1_) * g[j];
            v[j] = beta2_ * v[j] + (1.0 - beta2_) * g[j] * g[j];
            const double mhat = m[j] / bc1;
            const double vhat = v[j] / bc2;
            w[j] -= lr * mhat / (std::sqrt(vhat) + eps_);
        }
    }
}

std::vector<NamedTensor> Adam::state(const std::vector<NamedParam>& params) const {
    std::vector<NamedTensor> out;
    if (m_.size() != params.size()) return out;
    Tensor t_tensor(1, 1, 1);
    t_tensor.data()[0] = static_cast<double>(t_);
    out.push_back({"opt.adam.t", t_tensor});
    for (size_t i = 0; i < params.size(); ++i) {
        out.push_back({"opt.adam.m." + params[i].name, m_[i]});
        out.push_back({"opt.adam.v." + params[i].name, v_[i]});
    }
    return out;
}

void Adam::load_state(const std::vector<NamedParam>& params,
                      const std::vector<NamedTensor>& state) {
    m_.clear();
    v_.clear();
    auto find = [&](const std::string& name) -> const Tensor* {
        for (const auto& nt : state)
            if (nt.name == name) return &nt.t;
        return nullptr;
    };
    const Tensor* t = find("opt.adam.t");
    if (!t) return;  // no optimizer state saved
    t_ = static_cast<uint64_t>(t->data()[0]);
    for (const auto& p : params) {
        const Tensor* m = find("opt.adam.m." + p.name);
        const Tensor* v = find("opt.adam.v." + p.name);
        if (!m || !v || !m->same_shape(p.var->value) || !v->same_shape(p.var->value))
            throw LoadError("optimizer state does not match parameter " + p.name);
        m_.push_back(*m);
        v_.push_back(*v);
    }
}

// ---------------------------------------------------------------------------
// clip training
// ---------------------------------------------------------------------------

namespace {

// Build the specifier Var for the config's variant from a (2,H,W) mask Var.
// In graph mode the block-mean pool participates in backprop.
nn::Var make_specifier_var(const Network& net, const nn::Var& prev_mask,
                           const nn::Var& coord_leaf) {
    const int spec_ch = net.config().specifier_channels();
    if (spec_ch == 0) return nullptr;
    nn::Var prev = prev_mask;
    if (net.config().hard_clue_mask)
        prev = nn::leaf(harden_soft_mask(prev_mask->value));  // hard mode detaches
    nn::Var coarse = nn::avgpool(prev, kClueStride);
    if (spec_ch == 2) return coarse;
    return nn::concat_channels({coarse, coord_leaf});
}

}  // namespace

double train_clip(Network& net, Adam& adam, const Clip& clip, const TrainConfig& cfg,
                  bool defer_update) {
    if (static_cast<int>(clip.frames.size()) < 2)
        throw ConfigError("train_clip: clip must have at least 2 frames");
    if (clip.frames.size() != clip.masks.size())
        throw ShapeError("train_clip: frame/mask count mismatch");
    const int H = clip.frames[0].rgb.h(), W = clip.frames[0].rgb.w();
    if (H % 16 != 0 || W % 16 != 0)
        throw ShapeError("train_clip: clip resolution must be divisible by 16");

    const CoordChannels coords = make_coord_channels(H / 16, W / 16);
    Tensor coord_stack(3, H / 16, W / 16);
    std::copy(coords.height_ramp.data(), coords.height_ramp.data() + coords.height_ramp.size(),
              coord_stack.channel(0));
    std::copy(coords.width_ramp.data(), coords.width_ramp.data() + coords.width_ramp.size(),
              coord_stack.channel(1));
    std::copy(coords.center_distance.data(),
              coords.center_distance.data() + coords.center_distance.size(),
              coord_stack.channel(2));
    const nn::Var coord_leaf = nn::leaf(std::move(coord_stack));

    nn::Var prev = nn::leaf(binary_soft_mask(clip.masks[0], clip.target));
    nn::Var total;
    const int T = static_cast<int>(clip.frames.size());
    for (int t = 1; t < T; ++t) {
        const nn::Var spec = make_specifier_var(net, prev, coord_leaf);
        const PyramidVar pyr = net.encode_graph(nn::leaf(clip.frames[t].rgb));
        const nn::Var mask = net.decode_graph(pyr, spec);
        MaskMap gt(clip.masks[t].h, clip.masks[t].w);
        for (size_t i = 0; i < gt.size(); ++i)
            gt.labels[i] = clip.masks[t].labels[i] == clip.target ? 1 : 0;
        nn::Var term;
        try {
            term = nn::nll_loss_graph(mask, gt);
        } catch (const NumericError& e) {
            throw TrainingError(std::string("training diverged at clip frame ") +
                                std::to_string(t) + ": " + e.what());
        }
        total = total ? nn::add(total, term) : term;
        prev = cfg.backprop_through_clue ? mask : nn::detach(mask);
    }
    total = nn::scale(total, 1.0 / static_cast<double>(T - 1));
    const double loss = total->value.data()[0];
    if (!std::isfinite(loss))
        throw TrainingError("training diverged: loss = " + std::to_string(loss));
    nn::backward(total);
    if (!defer_update) {
        adam.step(net.parameters(), cfg.lr);
        net.zero_grad();
    }
    return loss;
}

uint64_t run_stage(Network& net, Adam& adam, const std::vector<SequenceRecord>& dataset,
                   const TrainConfig& cfg, const TrainLogSink& sink, uint64_t start_step) {
    cfg.validate();
    if (dataset.empty()) throw DataError("run_stage: empty dataset");
    Rng rng(cfg.seed + start_step * 0x9e3779b97f4a7c15ull);
    uint64_t step = start_step;
    const auto t0 = std::chrono::steady_clock::now();
    const size_t clips_per_epoch = dataset.size();

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        for (size_t i = 0; i < clips_per_epoch; ++i) {
            Clip clip = sample_clip(dataset, cfg.clip_len, rng);
            for (size_t f = 0; f < clip.frames.size(); ++f) {
                auto [fr, mk] =
                    resize_policy(clip.frames[f], clip.masks[f], cfg.res_h, cfg.res_w);
                clip.frames[f] = std::move(fr);
                clip.masks[f] = std::move(mk);
            }
            if (cfg.augment && cfg.stage == Stage::Finetune)
                augment_clip(clip.frames, clip.masks, sample_augment_params(rng));

            const bool defer = (step + 1) % static_cast<uint64_t>(cfg.batch_clips) != 0;
            const double loss = train_clip(net, adam, clip, cfg, defer);
            ++step;
            if (sink) {
                const double wall =
                    std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
                sink({step, cfg.stage, loss, cfg.lr, wall});
            }
        }
    }
    if (step > start_step && step % static_cast<uint64_t>(cfg.batch_clips) != 0) {
        adam.step(net.parameters(), cfg.lr);  // flush a trailing partial batch
        net.zero_grad();
    }
    return step;
}

}  // namespace crvos
