#include "crvos/model.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

#include <json.hpp>

#include "crvos/errors.hpp"
#include "crvos/nn_ops.hpp"
#include "crvos/rng.hpp"

namespace crvos {

using nlohmann::json;

// ---------------------------------------------------------------------------
// config
// ---------------------------------------------------------------------------

Variant variant_from_name(const std::string& name) {
    if (name == "I") return Variant::I;
    if (name == "II") return Variant::II;
    if (name == "III") return Variant::III;
    if (name == "IV") return Variant::IV;
    throw ConfigError("unknown variant '" + name + "' (expected I, II, III or IV)");
}

std::string variant_name(Variant v) {
    switch (v) {
        case Variant::I: return "I";
        case Variant::II: return "II";
        case Variant::III: return "III";
        case Variant::IV: return "IV";
    }
    return "?";
}

ModelConfig ModelConfig::for_variant(Variant v, double width_scale) {
    ModelConfig cfg;
    cfg.variant = v;
    cfg.encoder_width_scale = width_scale;
    cfg.use_deconv = v != Variant::IV;
    return cfg;
}

int ModelConfig::specifier_channels() const {
    switch (variant) {
        case Variant::I: return 0;
        case Variant::II: return 2;
        case Variant::III:
        case Variant::IV: return 5;
    }
    return 0;
}

int ModelConfig::base_width() const {
    const int b = static_cast<int>(std::lround(64.0 * encoder_width_scale));
    return b < 1 ? 1 : b;
}

std::string model_config_to_json(const ModelConfig& cfg) {
    json j;
    j["variant"] = variant_name(cfg.variant);
    j["encoder_width_scale"] = cfg.encoder_width_scale;
    j["backbone_init"] = cfg.backbone_init;
    j["hard_clue_mask"] = cfg.hard_clue_mask;
    j["use_deconv"] = cfg.use_deconv;
    j["combine"] = cfg.combine == Combine::Sum ? "sum" : "last";
    return j.dump();
}

ModelConfig model_config_from_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("bad model config JSON: ") + e.what());
    }
    ModelConfig cfg = ModelConfig::for_variant(variant_from_name(j.value("variant", "III")),
                                               j.value("encoder_width_scale", 1.0));
    cfg.backbone_init = j.value("backbone_init", cfg.backbone_init);
    cfg.hard_clue_mask = j.value("hard_clue_mask", cfg.hard_clue_mask);
    cfg.use_deconv = j.value("use_deconv", cfg.use_deconv);
    const std::string comb = j.value("combine", cfg.combine == Combine::Sum ? "sum" : "last");
    if (comb == "sum")
        cfg.combine = Combine::Sum;
    else if (comb == "last")
        cfg.combine = Combine::Last;
    else
        throw ConfigError("combine must be 'sum' or 'last', got '" + comb + "'");
    return cfg;
}

// ---------------------------------------------------------------------------
// layers
// ---------------------------------------------------------------------------

nn::Var Network::Conv::operator()(const nn::Var& x) const {
    return nn::conv2d(x, w, b, k, stride, pad);
}

nn::Var Network::ResBlock::operator()(const nn::Var& x) const {
    nn::Var y = nn::relu(c1(x));
    y = c2(y);
    return nn::relu(nn::add(y, proj(x)));
}

nn::Var Network::Refine::forward(const std::vector<nn::Var>& inputs) const {
    nn::Var x = inputs.size() == 1 ? inputs[0] : nn::concat_channels(inputs);
    nn::Var hidden = nn::relu(fuse(x));
    if (deconv) return nn::deconv2d(hidden, deconv->first, deconv->second);
    return nn::upsample_bilinear((*reduce)(hidden), 2);
}

namespace {

Tensor fan_in_uniform(int c, int h, int w, int fan_in, Rng& rng) {
    Tensor t(c, h, w);
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    for (size_t i = 0; i < t.size(); ++i) t.data()[i] = rng.uniform(-bound, bound);
    return t;
}

}  // namespace

Network::Conv Network::make_conv(const std::string& name, int in_c, int out_c, int k, int stride,
                                 int pad, Rng& rng) {
    Conv conv;
    conv.k = k;
    conv.stride = stride;
    conv.pad = pad;
    conv.w = nn::parameter(fan_in_uniform(out_c, in_c, k * k, in_c * k * k, rng));
    conv.b = nn::parameter(Tensor(out_c, 1, 1));
    params_.push_back({name + ".w", conv.w});
    params_.push_back({name + ".b", conv.b});
    return conv;
}

std::pair<nn::Var, nn::Var> Network::make_deconv(const std::string& name, int in_c, int out_c,
                                                 Rng& rng) {
    nn::Var w = nn::parameter(fan_in_uniform(in_c, out_c, 16, in_c * 16, rng));
    nn::Var b = nn::parameter(Tensor(out_c, 1, 1));
    params_.push_back({name + ".w", w});
    params_.push_back({name + ".b", b});
    return {w, b};
}

Network::Network(const ModelConfig& cfg, uint64_t seed) : cfg_(cfg) {
    build(seed);
    if (cfg_.backbone_init != "random") load_backbone(cfg_.backbone_init);
}

void Network::build(uint64_t seed) {
    Rng rng(seed);
    const int b = cfg_.base_width();
    stem_ = make_conv("encoder.stem", 3, b, 3, 2, 1, rng);

    auto res_block = [&](const std::string& name, int in_c, int out_c) {
        ResBlock blk;
        blk.c1 = make_conv(name + ".c1", in_c, out_c, 3, 2, 1, rng);
        blk.c2 = make_conv(name + ".c2", out_c, out_c, 3, 1, 1, rng);
        blk.proj = make_conv(name + ".proj", in_c, out_c, 1, 2, 0, rng);
        return blk;
    };
    s1_ = res_block("encoder.s1", b, 2 * b);       // stride 4
    s2_ = res_block("encoder.s2", 2 * b, 4 * b);   // stride 8
    s3_ = res_block("encoder.s3", 4 * b, 8 * b);   // stride 16

    const int spec_ch = cfg_.specifier_channels();
    auto refine = [&](const std::string& name, int skip_c, int extra_c, int hidden) {
        Refine rm;
        rm.fuse = make_conv(name + ".fuse", skip_c + extra_c, hidden, 3, 1, 1, rng);
        if (cfg_.use_deconv) {
            rm.deconv = make_deconv(name + ".up", hidden, 2, rng);
        } else {
            rm.reduce = make_conv(name + ".reduce", hidden, 2, 3, 1, 1, rng);
        }
        return rm;
    };
    rm1_ = refine("rm1", 8 * b, spec_ch, 4 * b);
    rm2_ = refine("rm2", 4 * b, 2, 2 * b);
    rm3_ = refine("rm3", 2 * b, 2, b);
}

Network Network::clone() const {
    Network out;
    out.cfg_ = cfg_;
    out.build(0);
    for (size_t i = 0; i < params_.size(); ++i)
        out.params_[i].var->value = params_[i].var->value;
    return out;
}

size_t Network::parameter_count() const {
    size_t n = 0;
    for (const auto& p : params_) n += p.var->value.size();
    return n;
}

void Network::zero_grad() {
    for (auto& p : params_) {
        p.var->ensure_grad();
        p.var->grad.fill(0.0);
    }
}

// ---------------------------------------------------------------------------
// forward
// ---------------------------------------------------------------------------

PyramidVar Network::encode_graph(const nn::Var& image) const {
    const Tensor& img = image->value;
    if (img.c() != 3)
        throw ShapeError("encode: expected a (3,H,W) image, got " + img.shape_str());
    if (img.h() % 16 != 0 || img.w() % 16 != 0)
        throw ShapeError("encode: H and W must be divisible by 16, got " + img.shape_str());
    nn::ScopeGuard scope("encoder");
    nn::Var x = nn::relu(stem_(image));
    PyramidVar pyr;
    pyr.f4 = s1_(x);
    pyr.f8 = s2_(pyr.f4);
    pyr.f16 = s3_(pyr.f8);
    return pyr;
}

nn::Var Network::decode_graph(const PyramidVar& pyr, const nn::Var& specifier) const {
    const int spec_ch = cfg_.specifier_channels();
    if (spec_ch == 0 && specifier)
        throw ConfigError("decode: variant I takes no specifier");
    if (spec_ch > 0) {
        if (!specifier)
            throw ConfigError("decode: variant " + variant_name(cfg_.variant) +
                              " requires a specifier");
        const Tensor& s = specifier->value;
        if (s.c() != spec_ch)
            throw ConfigError("decode: specifier has " + std::to_string(s.c()) +
                              " channels, variant " + variant_name(cfg_.variant) + " expects " +
                              std::to_string(spec_ch));
        if (s.h() != pyr.f16->value.h() || s.w() != pyr.f16->value.w())
            throw ShapeError("decode: specifier " + s.shape_str() +
                             " does not match f16 " + pyr.f16->value.shape_str());
    }

    nn::Var l8, l4, l2;
    {
        nn::ScopeGuard scope("rm1");
        std::vector<nn::Var> in{pyr.f16};
        if (specifier) in.push_back(specifier);
        l8 = rm1_.forward(in);
    }
    {
        nn::ScopeGuard scope("rm2");
        l4 = rm2_.forward({pyr.f8, l8});
    }
    {
        nn::ScopeGuard scope("rm3");
        l2 = rm3_.forward({pyr.f4, l4});
    }
    nn::ScopeGuard scope("head");
    nn::Var merged = l2;
    if (cfg_.combine == Combine::Sum) {
        merged = nn::add(merged, nn::upsample_bilinear(l4, 2));
        merged = nn::add(merged, nn::upsample_bilinear(l8, 4));
    }
    return nn::softmax_channels(nn::upsample_bilinear(merged, 2));
}

FeaturePyramid Network::encode(const Tensor& image) const {
    ++encode_calls_;
    PyramidVar pyr = encode_graph(nn::leaf(image));
    return {pyr.f4->value, pyr.f8->value, pyr.f16->value};
}

Tensor Network::decode(const FeaturePyramid& pyr, const Specifier& spec) const {
    ++decode_calls_;
    const int spec_ch = cfg_.specifier_channels();
    nn::Var sv;
    if (std::holds_alternative<std::monostate>(spec)) {
        if (spec_ch != 0)
            throw ConfigError("decode: variant " + variant_name(cfg_.variant) +
                              " requires a specifier");
    } else if (const CoarseMask* cm = std::get_if<CoarseMask>(&spec)) {
        if (spec_ch != 2)
            throw ConfigError("decode: coarse-mask specifier given but variant " +
                              variant_name(cfg_.variant) + " expects " +
                              std::to_string(spec_ch) + " channels");
        Tensor s(2, cm->fg.h(), cm->fg.w());
        std::copy(cm->fg.data(), cm->fg.data() + cm->fg.size(), s.channel(0));
        std::copy(cm->bg.data(), cm->bg.data() + cm->bg.size(), s.channel(1));
        sv = nn::leaf(std::move(s));
    } else {
        const Clue& clue = std::get<Clue>(spec);
        if (spec_ch != 5)
            throw ConfigError("decode: Clue specifier given but variant " +
                              variant_name(cfg_.variant) + " expects " +
                              std::to_string(spec_ch) + " channels");
        sv = nn::leaf(clue.channels);
    }
    PyramidVar pv{nn::leaf(pyr.f4), nn::leaf(pyr.f8), nn::leaf(pyr.f16)};
    return decode_graph(pv, sv)->value;
}

// ---------------------------------------------------------------------------
// audit
// ---------------------------------------------------------------------------

ArchAudit Network::audit() const {
    // Build a real tape on a small input and count ops per scope.
    const int side = 64;
    nn::Var img = nn::leaf(Tensor(3, side, side));
    PyramidVar pyr = encode_graph(img);
    nn::Var spec;
    const int spec_ch = cfg_.specifier_channels();
    if (spec_ch > 0) spec = nn::leaf(Tensor(spec_ch, side / 16, side / 16));
    nn::Var out = decode_graph(pyr, spec);

    ArchAudit audit;
    audit.parameter_count = parameter_count();
    for (nn::Node* n : nn::collect_tape(out)) {
        if (std::string(n->op) == "leaf" || std::string(n->op) == "param") continue;
        audit.op_counts[n->scope][n->op] += 1;
        const bool in_refine = n->scope == "rm1" || n->scope == "rm2" || n->scope == "rm3";
        if (in_refine && std::string(n->op) == "deconv2d") ++audit.deconv_in_refine_modules;
        if (in_refine && std::string(n->op) == "bilinear_up") ++audit.bilinear_in_refine_modules;
        if (n->scope == "rm1" && std::string(n->op) == "conv2d" &&
            audit.rm1_fuse_in_channels == 0)
            audit.rm1_fuse_in_channels = n->parents.at(1)->value.h();
    }
    return audit;
}

// ---------------------------------------------------------------------------
// checkpoint
// ---------------------------------------------------------------------------

namespace {
constexpr char kMagic[8] = {'C', 'R', 'V', 'O', 'S', 'C', 'K', '1'};
}

void Network::save_checkpoint(const std::string& path, uint64_t step,
                              const std::vector<NamedTensor>& extra) const {
    json header;
    header["format"] = 1;
    header["config"] = json::parse(model_config_to_json(cfg_));
    header["step"] = step;
    json arrays = json::array();
    auto describe = [&](const std::string& name, const Tensor& t) {
        arrays.push_back({{"name", name}, {"c", t.c()}, {"h", t.h()}, {"w", t.w()}});
    };
    for (const auto& p : params_) describe(p.name, p.var->value);
    for (const auto& e : extra) describe(e.name, e.t);
    header["arrays"] = arrays;
    const std::string htext = header.dump();

    std::ofstream out(path, std::ios::binary);
    if (!out) throw LoadError("cannot open checkpoint for writing: " + path);
    out.write(kMagic, 8);
    const uint32_t hlen = static_cast<uint32_t>(htext.size());
    out.write(reinterpret_cast<const char*>(&hlen), 4);
    out.write(htext.data(), htext.size());
    auto dump = [&](const Tensor& t) {
        out.write(reinterpret_cast<const char*>(t.data()),
                  static_cast<std::streamsize>(t.size() * sizeof(double)));
    };
    for (const auto& p : params_) dump(p.var->value);
    for (const auto& e : extra) dump(e.t);
    if (!out) throw LoadError("short write while saving checkpoint: " + path);
}

namespace {

struct Container {
    json header;
    std::vector<NamedTensor> arrays;
};

Container read_container(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw LoadError("cannot open checkpoint: " + path);
    char magic[8];
    in.read(magic, 8);
    if (!in || std::memcmp(magic, kMagic, 8) != 0)
        throw LoadError("not a checkpoint file: " + path);
    uint32_t hlen = 0;
    in.read(reinterpret_cast<char*>(&hlen), 4);
    if (!in || hlen == 0 || hlen > (1u << 26))
        throw LoadError("corrupt checkpoint header: " + path);
    std::string htext(hlen, '\0');
    in.read(htext.data(), hlen);
    if (!in) throw LoadError("truncated checkpoint header: " + path);

    Container c;
    try {
        c.header = json::parse(htext);
    } catch (const json::exception& e) {
        throw LoadError(std::string("corrupt checkpoint header JSON: ") + e.what());
    }
    if (!c.header.contains("arrays") || !c.header["arrays"].is_array())
        throw LoadError("checkpoint header missing arrays: " + path);
    for (const auto& a : c.header["arrays"]) {
        NamedTensor nt;
        nt.name = a.at("name").get<std::string>();
        nt.t = Tensor(a.at("c").get<int>(), a.at("h").get<int>(), a.at("w").get<int>());
        in.read(reinterpret_cast<char*>(nt.t.data()),
                static_cast<std::streamsize>(nt.t.size() * sizeof(double)));
        if (!in) throw LoadError("truncated checkpoint data: " + path);
        c.arrays.push_back(std::move(nt));
    }
    return c;
}

}  // namespace

Network Network::load_checkpoint(const std::string& path, CheckpointMeta* meta) {
    Container c = read_container(path);
    if (!c.header.contains("config")) throw LoadError("checkpoint missing config echo: " + path);
    ModelConfig cfg = model_config_from_json(c.header["config"].dump());
    cfg.backbone_init = "random";  // arrays below override the init
    Network net(cfg, 0);
    if (meta) meta->step = c.header.value("step", uint64_t{0});

    size_t matched = 0;
    for (auto& nt : c.arrays) {
        bool found = false;
        for (auto& p : net.params_) {
            if (p.name != nt.name) continue;
            if (!p.var->value.same_shape(nt.t))
                throw LoadError("checkpoint array " + nt.name + " has shape " +
                                nt.t.shape_str() + ", model expects " +
                                p.var->value.shape_str());
            p.var->value = nt.t;
            found = true;
            ++matched;
            break;
        }
        if (!found && meta) meta->extra.push_back(std::move(nt));
    }
    if (matched != net.params_.size())
        throw LoadError("checkpoint " + path + " is missing parameter arrays (" +
                        std::to_string(matched) + "/" + std::to_string(net.params_.size()) + ")");
    return net;
}

void Network::load_backbone(const std::string& path) {
    Container c = read_container(path);
    size_t matched = 0;
    for (const auto& nt : c.arrays) {
        if (nt.name.rfind("encoder.", 0) != 0) continue;
        for (auto& p : params_) {
            if (p.name != nt.name) continue;
            if (!p.var->value.same_shape(nt.t))
                throw LoadError("backbone array " + nt.name + " has shape " + nt.t.shape_str() +
                                ", model expects " + p.var->value.shape_str());
            p.var->value = nt.t;
            ++matched;
        }
    }
    if (matched == 0) throw LoadError("no matching encoder arrays in " + path);
}

}  // namespace crvos
