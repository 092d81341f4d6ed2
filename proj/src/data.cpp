#include "crvos/data.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numbers>

#include <json.hpp>

#include "crvos/errors.hpp"
#include "crvos/image_io.hpp"
#include "crvos/rng.hpp"

namespace fs = std::filesystem;

namespace crvos {

using nlohmann::json;

// ---------------------------------------------------------------------------
// SequenceRecord accessors
// ---------------------------------------------------------------------------

Frame SequenceRecord::load_frame(int i) const {
    if (in_memory()) return frames.at(i);
    Frame f;
    f.index = i;
    f.rgb = read_frame_image(frame_paths.at(i));
    return f;
}

bool SequenceRecord::has_mask(int i) const {
    if (in_memory()) return i < static_cast<int>(masks.size());
    return i < static_cast<int>(mask_paths.size()) && !mask_paths[i].empty();
}

MaskMap SequenceRecord::load_mask(int i) const {
    if (!has_mask(i))
        throw DataError("sequence " + name + ": frame " + std::to_string(i) +
                        " has no annotation");
    if (in_memory()) return masks.at(i);
    MaskMap m = read_mask_image(mask_paths.at(i));
    if (binarize_labels)
        for (auto& v : m.labels) v = v != 0 ? 1 : 0;
    return m;
}

// ---------------------------------------------------------------------------
// synthetic generator
// ---------------------------------------------------------------------------

namespace {

struct TargetState {
    ShapeKind shape;
    double cy, cx;
    double vy, vx;
    double size;      // square side / disk diameter
    double angle;     // radians
    std::array<double, 3> color;
    // orbit parameters
    double anchor_y = 0, anchor_x = 0;
    double phase = 0;  // radians
};

bool inside_shape(const TargetState& t, double py, double px) {
    const double dy = py - t.cy, dx = px - t.cx;
    if (t.shape == ShapeKind::Disk) {
        const double r = t.size * 0.5;
        return dy * dy + dx * dx <= r * r;
    }
    // square, possibly rotated
    const double c = std::cos(t.angle), s = std::sin(t.angle);
    const double lx = c * dx + s * dy;
    const double ly = -s * dx + c * dy;
    const double h = t.size * 0.5;
    return std::abs(lx) <= h && std::abs(ly) <= h;
}

double value_noise(uint64_t seed, int y, int x) {
    uint64_t h = seed;
    h ^= static_cast<uint64_t>(y) * 0x9e3779b97f4a7c15ull;
    h = (h ^ (h >> 30)) * 0xbf58476d1ce4e5b9ull;
    h ^= static_cast<uint64_t>(x) * 0x94d049bb133111ebull;
    h = (h ^ (h >> 27)) * 0x2545f4914f6cdd1dull;
    h ^= h >> 31;
    return static_cast<double>(h >> 11) * 0x1.0p-53;
}

}  // namespace

SequenceRecord generate_synthetic(const SyntheticSpec& spec) {
    if (spec.num_targets < 1) throw std::invalid_argument("generate_synthetic: num_targets >= 1");
    if (spec.length < 1) throw std::invalid_argument("generate_synthetic: length >= 1");
    if (spec.target_size >= std::min(spec.height, spec.width))
        throw std::invalid_argument("generate_synthetic: target larger than canvas");
    if (spec.shapes.empty()) throw std::invalid_argument("generate_synthetic: no shapes");

    Rng rng(spec.seed);
    const int K = spec.num_targets;

    std::vector<TargetState> targets(K);
    for (int k = 0; k < K; ++k) {
        TargetState& t = targets[k];
        t.shape = spec.shapes[k % spec.shapes.size()];
        t.size = spec.target_size;
        t.vy = spec.translate_y;
        t.vx = spec.translate_x;
        t.angle = 0.0;
        if (spec.orbit) {
            t.anchor_y = spec.height * 0.5;
            t.anchor_x = spec.width * (k + 1.0) / (K + 1.0);
            t.phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
            t.cy = t.anchor_y + spec.orbit_radius * std::sin(t.phase);
            t.cx = t.anchor_x + spec.orbit_radius * std::cos(t.phase);
        } else if (k < static_cast<int>(spec.starts.size())) {
            t.cy = spec.starts[k].first;
            t.cx = spec.starts[k].second;
        } else {
            // keep half-size margins; spread targets over K vertical bands
            const double m = t.size * 0.5 + 1.0;
            const double band = (spec.height - 2 * m) / K;
            t.cy = m + band * k + band * rng.uniform(0.25, 0.75);
            t.cx = rng.uniform(m, spec.width - m);
        }
        if (spec.identical_appearance) {
            t.color = {0.9, 0.25, 0.2};
        } else {
            t.color = {0.25 + 0.7 * rng.uniform(), 0.25 + 0.7 * rng.uniform(),
                       0.25 + 0.7 * rng.uniform()};
        }
    }

    SequenceRecord rec;
    rec.name = "synthetic_" + std::to_string(spec.seed);
    rec.num_targets = K;

    const uint64_t bg_seed = spec.seed ^ 0xabcdef1234567890ull;
    auto make_background = [&](uint64_t seed) {
        Tensor background(3, spec.height, spec.width);
        for (int y = 0; y < spec.height; ++y) {
            for (int x = 0; x < spec.width; ++x) {
                const double n0 = value_noise(seed, y / 8, x / 8);
                const double n1 = value_noise(seed + 1, y / 8, x / 8);
                background.at(0, y, x) = 0.15 + 0.25 * n0;
                background.at(1, y, x) = 0.2 + 0.25 * n1;
                background.at(2, y, x) = 0.3 + 0.25 * n0;
            }
        }
        if (spec.num_distractors > 0) {
            Rng drng(spec.distractor_seed);
            const std::array<double, 3> dcolor =
                spec.identical_appearance ? targets[0].color
                                          : std::array<double, 3>{0.9, 0.25, 0.2};
            for (int d = 0; d < spec.num_distractors; ++d) {
                TargetState ds;
                ds.shape = ShapeKind::Square;
                ds.size = spec.target_size;
                ds.angle = 0.0;
                const double m = std::max(ds.size * 0.5 + 1.0, spec.distractor_margin);
                ds.cy = drng.uniform(m, spec.height - m);
                ds.cx = drng.uniform(m, spec.width - m);
                for (int y = 0; y < spec.height; ++y)
                    for (int x = 0; x < spec.width; ++x) {
                        if (!inside_shape(ds, y + 0.5, x + 0.5)) continue;
                        background.at(0, y, x) = dcolor[0];
                        background.at(1, y, x) = dcolor[1];
                        background.at(2, y, x) = dcolor[2];
                    }
            }
        }
        return background;
    };
    Tensor background = make_background(bg_seed);

    for (int f = 0; f < spec.length; ++f) {
        if (spec.dynamic_background && f > 0)
            background = make_background(bg_seed + static_cast<uint64_t>(f) * 0x10001ull);
        Frame frame;
        frame.index = f;
        frame.rgb = background;
        MaskMap mask(spec.height, spec.width);
        for (int k = 0; k < K; ++k) {
            const TargetState& t = targets[k];
            for (int y = 0; y < spec.height; ++y) {
                for (int x = 0; x < spec.width; ++x) {
                    if (!inside_shape(t, y + 0.5, x + 0.5)) continue;
                    mask.at(y, x) = k + 1;  // later targets paint over earlier ones
                    frame.rgb.at(0, y, x) = t.color[0];
                    frame.rgb.at(1, y, x) = t.color[1];
                    frame.rgb.at(2, y, x) = t.color[2];
                }
            }
        }
        rec.frames.push_back(std::move(frame));
        rec.masks.push_back(std::move(mask));

        for (auto& t : targets) {
            if (spec.orbit) {
                t.phase += spec.orbit_deg_per_frame * std::numbers::pi / 180.0;
                t.cy = t.anchor_y + spec.orbit_radius * std::sin(t.phase);
                t.cx = t.anchor_x + spec.orbit_radius * std::cos(t.phase);
            } else {
                t.cy += t.vy;
                t.cx += t.vx;
                const double m = t.size * 0.5;
                if (t.cy < m) { t.cy = 2 * m - t.cy; t.vy = -t.vy; }
                if (t.cy > spec.height - m) {
                    t.cy = 2 * (spec.height - m) - t.cy;
                    t.vy = -t.vy;
                }
                if (t.cx < m) { t.cx = 2 * m - t.cx; t.vx = -t.vx; }
                if (t.cx > spec.width - m) {
                    t.cx = 2 * (spec.width - m) - t.cx;
                    t.vx = -t.vx;
                }
            }
            t.size *= 1.0 + spec.scale_drift;
            t.angle += spec.rotate_deg * std::numbers::pi / 180.0;
        }
    }
    return rec;
}

// ---------------------------------------------------------------------------
// DAVIS layout
// ---------------------------------------------------------------------------

namespace {

fs::path resolve_level(const fs::path& base) {
    // accept root/JPEGImages/<seq> or root/JPEGImages/480p/<seq>
    if (!fs::exists(base)) return base;
    std::vector<fs::path> subdirs;
    for (const auto& e : fs::directory_iterator(base))
        if (e.is_directory()) subdirs.push_back(e.path());
    if (subdirs.size() == 1) {
        bool has_images = false;
        for (const auto& e : fs::directory_iterator(subdirs[0]))
            if (e.is_regular_file()) has_images = true;
        if (!has_images) return subdirs[0];  // resolution level, e.g. 480p
    }
    return base;
}

std::vector<std::string> sorted_files(const fs::path& dir, bool (*accept)(const std::string&)) {
    std::vector<std::string> out;
    if (!fs::exists(dir)) return out;
    for (const auto& e : fs::directory_iterator(dir))
        if (e.is_regular_file() && accept(e.path().string())) out.push_back(e.path().string());
    std::sort(out.begin(), out.end());
    return out;
}

}  // namespace

std::vector<SequenceRecord> load_davis_layout(const std::string& root, int year_style,
                                              std::vector<std::string>* warnings) {
    if (year_style != 2016 && year_style != 2017)
        throw ConfigError("year_style must be 2016 or 2017");
    auto warn = [&](const std::string& msg) {
        if (warnings) warnings->push_back(msg);
    };

    const fs::path images_root = resolve_level(fs::path(root) / "JPEGImages");
    const fs::path annot_root = resolve_level(fs::path(root) / "Annotations");
    std::vector<SequenceRecord> records;
    if (!fs::exists(images_root)) {
        warn("no JPEGImages directory under " + root);
        return records;
    }

    std::vector<fs::path> seq_dirs;
    for (const auto& e : fs::directory_iterator(images_root))
        if (e.is_directory()) seq_dirs.push_back(e.path());
    std::sort(seq_dirs.begin(), seq_dirs.end());
    if (seq_dirs.empty()) warn("no sequences under " + images_root.string());

    for (const auto& seq_dir : seq_dirs) {
        SequenceRecord rec;
        rec.name = seq_dir.filename().string();
        rec.binarize_labels = year_style == 2016;
        rec.frame_paths = sorted_files(seq_dir, is_frame_extension);
        if (rec.frame_paths.empty()) {
            warn("sequence " + rec.name + " has no frames; skipped");
            continue;
        }
        std::vector<std::string> annots = sorted_files(annot_root / rec.name, is_mask_extension);
        if (annots.empty())
            throw DataError("sequence " + rec.name + ": missing frame-0 annotation");
        if (annots.size() > rec.frame_paths.size()) {
            warn("sequence " + rec.name + ": more annotations than frames; truncating");
            annots.resize(rec.frame_paths.size());
        }
        // align by filename stem; require the first frame annotated
        rec.mask_paths.assign(rec.frame_paths.size(), "");
        for (const auto& a : annots) {
            const std::string stem = fs::path(a).stem().string();
            bool placed = false;
            for (size_t i = 0; i < rec.frame_paths.size(); ++i) {
                if (fs::path(rec.frame_paths[i]).stem().string() == stem) {
                    rec.mask_paths[i] = a;
                    placed = true;
                    break;
                }
            }
            if (!placed) warn("sequence " + rec.name + ": annotation " + a + " has no frame");
        }
        if (rec.mask_paths[0].empty())
            throw DataError("sequence " + rec.name + ": missing frame-0 annotation");
        rec.num_targets = max_label(rec.load_mask(0));
        records.push_back(std::move(rec));
    }
    return records;
}

// ---------------------------------------------------------------------------
// resize policy
// ---------------------------------------------------------------------------

Tensor resize_bilinear(const Tensor& src, int out_h, int out_w) {
    if (src.h() == out_h && src.w() == out_w) return src;
    Tensor dst(src.c(), out_h, out_w);
    const double sy = static_cast<double>(src.h()) / out_h;
    const double sx = static_cast<double>(src.w()) / out_w;
    for (int c = 0; c < src.c(); ++c) {
        for (int oy = 0; oy < out_h; ++oy) {
            double fy = (oy + 0.5) * sy - 0.5;
            fy = std::clamp(fy, 0.0, static_cast<double>(src.h() - 1));
            const int y0 = std::min(static_cast<int>(fy), src.h() - 1);
            const int y1 = std::min(y0 + 1, src.h() - 1);
            const double wy = fy - y0;
            for (int ox = 0; ox < out_w; ++ox) {
                double fx = (ox + 0.5) * sx - 0.5;
                fx = std::clamp(fx, 0.0, static_cast<double>(src.w() - 1));
                const int x0 = std::min(static_cast<int>(fx), src.w() - 1);
                const int x1 = std::min(x0 + 1, src.w() - 1);
                const double wx = fx - x0;
                const double top = src.at(c, y0, x0) * (1 - wx) + src.at(c, y0, x1) * wx;
                const double bot = src.at(c, y1, x0) * (1 - wx) + src.at(c, y1, x1) * wx;
                dst.at(c, oy, ox) = top * (1 - wy) + bot * wy;
            }
        }
    }
    return dst;
}

MaskMap resize_nearest(const MaskMap& src, int out_h, int out_w) {
    if (src.h == out_h && src.w == out_w) return src;
    MaskMap dst(out_h, out_w);
    const double sy = static_cast<double>(src.h) / out_h;
    const double sx = static_cast<double>(src.w) / out_w;
    for (int oy = 0; oy < out_h; ++oy) {
        const int iy = std::min(static_cast<int>((oy + 0.5) * sy), src.h - 1);
        for (int ox = 0; ox < out_w; ++ox) {
            const int ix = std::min(static_cast<int>((ox + 0.5) * sx), src.w - 1);
            dst.at(oy, ox) = src.at(iy, ix);
        }
    }
    return dst;
}

std::pair<Frame, MaskMap> resize_policy(const Frame& frame, const MaskMap& mask, int target_h,
                                        int target_w) {
    if (target_h % 16 != 0 || target_w % 16 != 0)
        throw ConfigError("resize target " + std::to_string(target_h) + "x" +
                          std::to_string(target_w) + " must be divisible by 16");
    Frame out;
    out.index = frame.index;
    out.rgb = resize_bilinear(frame.rgb, target_h, target_w);
    return {std::move(out), resize_nearest(mask, target_h, target_w)};
}

void materialize_at(const SequenceRecord& rec, int index, int target_h, int target_w,
                    Frame* frame, MaskMap* mask) {
    Frame f = rec.load_frame(index);
    if (frame) {
        if (f.rgb.h() != target_h || f.rgb.w() != target_w)
            f.rgb = resize_bilinear(f.rgb, target_h, target_w);
        *frame = std::move(f);
    }
    if (mask) {
        MaskMap m = rec.load_mask(index);
        if (m.h != target_h || m.w != target_w) m = resize_nearest(m, target_h, target_w);
        *mask = std::move(m);
    }
}

// ---------------------------------------------------------------------------
// spec JSON
// ---------------------------------------------------------------------------

SyntheticSpec synthetic_spec_from_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("bad synthetic spec JSON: ") + e.what());
    }
    SyntheticSpec s;
    s.height = j.value("height", s.height);
    s.width = j.value("width", s.width);
    s.num_targets = j.value("num_targets", s.num_targets);
    s.translate_x = j.value("translate_x", s.translate_x);
    s.translate_y = j.value("translate_y", s.translate_y);
    s.scale_drift = j.value("scale_drift", s.scale_drift);
    s.rotate_deg = j.value("rotate_deg", s.rotate_deg);
    s.length = j.value("length", s.length);
    s.seed = j.value("seed", s.seed);
    s.target_size = j.value("target_size", s.target_size);
    s.identical_appearance = j.value("identical_appearance", s.identical_appearance);
    s.num_distractors = j.value("num_distractors", s.num_distractors);
    s.distractor_seed = j.value("distractor_seed", s.distractor_seed);
    s.dynamic_background = j.value("dynamic_background", s.dynamic_background);
    s.distractor_margin = j.value("distractor_margin", s.distractor_margin);
    s.orbit = j.value("orbit", s.orbit);
    s.orbit_radius = j.value("orbit_radius", s.orbit_radius);
    s.orbit_deg_per_frame = j.value("orbit_deg_per_frame", s.orbit_deg_per_frame);
    if (j.contains("shapes")) {
        s.shapes.clear();
        for (const auto& sh : j["shapes"]) {
            const std::string name = sh.get<std::string>();
            if (name == "square")
                s.shapes.push_back(ShapeKind::Square);
            else if (name == "disk")
                s.shapes.push_back(ShapeKind::Disk);
            else
                throw ConfigError("unknown shape '" + name + "'");
        }
    }
    if (j.contains("starts"))
        for (const auto& p : j["starts"])
            s.starts.emplace_back(p.at(0).get<double>(), p.at(1).get<double>());
    return s;
}

std::string synthetic_spec_to_json(const SyntheticSpec& s) {
    json j;
    j["height"] = s.height;
    j["width"] = s.width;
    j["num_targets"] = s.num_targets;
    j["translate_x"] = s.translate_x;
    j["translate_y"] = s.translate_y;
    j["scale_drift"] = s.scale_drift;
    j["rotate_deg"] = s.rotate_deg;
    j["length"] = s.length;
    j["seed"] = s.seed;
    j["target_size"] = s.target_size;
    j["identical_appearance"] = s.identical_appearance;
    j["num_distractors"] = s.num_distractors;
    j["distractor_seed"] = s.distractor_seed;
    j["dynamic_background"] = s.dynamic_background;
    j["distractor_margin"] = s.distractor_margin;
    j["orbit"] = s.orbit;
    j["orbit_radius"] = s.orbit_radius;
    j["orbit_deg_per_frame"] = s.orbit_deg_per_frame;
    json shapes = json::array();
    for (auto sh : s.shapes) shapes.push_back(sh == ShapeKind::Square ? "square" : "disk");
    j["shapes"] = shapes;
    if (!s.starts.empty()) {
        json st = json::array();
        for (const auto& p : s.starts) st.push_back({p.first, p.second});
        j["starts"] = st;
    }
    return j.dump(2);
}

}  // namespace crvos
