#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "crvos/autograd.hpp"
#include "crvos/geometry.hpp"
#include "crvos/tensor.hpp"

namespace crvos {

class Rng;

enum class Variant { I = 1, II = 2, III = 3, IV = 4 };
enum class Combine { Sum, Last };

Variant variant_from_name(const std::string& name);
std::string variant_name(Variant v);

// Architecture and ablation switches. Variants:
//   I   - no specifier
//   II  - coarse fg/bg mask only (2-channel specifier)
//   III - full Clue (5 channels), deconvolution refine modules
//   IV  - full Clue, bilinear refine modules (reduce conv + fixed 2x resize)
struct ModelConfig {
    Variant variant = Variant::III;
    double encoder_width_scale = 1.0;      // 1.0 -> 64-wide stem; 0.125 -> desk model
    std::string backbone_init = "random";  // "random" or a checkpoint path
    bool hard_clue_mask = false;           // harden the previous mask before the Clue
    bool use_deconv = true;                // refine upscale path (false for variant IV)
    Combine combine = Combine::Sum;        // how the three refine outputs merge

    static ModelConfig for_variant(Variant v, double width_scale = 1.0);

    int specifier_channels() const;  // 0 / 2 / 5 / 5
    int base_width() const;          // stem channels
};

std::string model_config_to_json(const ModelConfig& cfg);
ModelConfig model_config_from_json(const std::string& json_text);

// Encoder skip features for one frame. Strides 4/8/16 of the input size.
struct FeaturePyramid {
    Tensor f4, f8, f16;
};

struct PyramidVar {
    nn::Var f4, f8, f16;
};

// Specifier fed to the first refine module; must match the config's variant.
using Specifier = std::variant<std::monostate, CoarseMask, Clue>;

struct NamedTensor {
    std::string name;
    Tensor t;
};

struct NamedParam {
    std::string name;
    nn::Var var;
};

// Per-module op counts gathered by walking a real forward tape.
struct ArchAudit {
    std::map<std::string, std::map<std::string, int>> op_counts;  // scope -> op -> n
    int deconv_in_refine_modules = 0;
    int bilinear_in_refine_modules = 0;
    int rm1_fuse_in_channels = 0;
    size_t parameter_count = 0;
};

// The CRVOS network: a 4-stage residual encoder exposing strides 4/8/16 and a
// decoder of three refine modules (16->8->4->2) whose 2-channel outputs are
// merged and upscaled to a full-resolution soft mask.
//
// Refine module k fuses [encoder skip || extra input || previous module's
// logits] with a 3x3 convolution, then upscales to 2 channels with either a
// 4x4 stride-2 deconvolution or a reduce-conv + bilinear 2x resize. The
// specifier enters as the extra input of module 1.
class Network {
public:
    Network(const ModelConfig& cfg, uint64_t seed);
    Network(Network&&) = default;
    Network& operator=(Network&&) = default;
    Network(const Network&) = delete;
    Network& operator=(const Network&) = delete;

    // Independent copy with its own parameters and counters.
    Network clone() const;

    const ModelConfig& config() const { return cfg_; }

    // Runtime behavior switches that do not touch parameters.
    void set_hard_clue_mask(bool on) { cfg_.hard_clue_mask = on; }
    void set_combine(Combine c) { cfg_.combine = c; }

    // Inference API over plain tensors. Images are (3,H,W) in [0,1] with H,W
    // divisible by 16. decode() returns a (2,H,W) soft mask (fg+bg = 1).
    FeaturePyramid encode(const Tensor& image) const;
    Tensor decode(const FeaturePyramid& pyr, const Specifier& spec) const;

    // Tape-building API used by training and gradient checks.
    PyramidVar encode_graph(const nn::Var& image) const;
    nn::Var decode_graph(const PyramidVar& pyr, const nn::Var& specifier) const;  // null = none

    std::vector<NamedParam>& parameters() { return params_; }
    const std::vector<NamedParam>& parameters() const { return params_; }
    size_t parameter_count() const;
    void zero_grad();

    ArchAudit audit() const;

    size_t encode_calls() const { return encode_calls_; }
    size_t decode_calls() const { return decode_calls_; }
    void reset_call_counters() const { encode_calls_ = decode_calls_ = 0; }

    // Checkpoint container: config echo + named parameter arrays + step
    // counter (+ optional extra arrays, e.g. optimizer state). Round-trips
    // bit-exactly.
    void save_checkpoint(const std::string& path, uint64_t step = 0,
                         const std::vector<NamedTensor>& extra = {}) const;
    struct CheckpointMeta {
        uint64_t step = 0;
        std::vector<NamedTensor> extra;
    };
    static Network load_checkpoint(const std::string& path, CheckpointMeta* meta = nullptr);

    // Copy encoder arrays from a checkpoint file ("pretrained" init).
    void load_backbone(const std::string& path);

private:
    struct Conv {
        nn::Var w, b;
        int k = 3, stride = 1, pad = 1;
        nn::Var operator()(const nn::Var& x) const;
    };
    struct ResBlock {
        Conv c1, c2, proj;
        nn::Var operator()(const nn::Var& x) const;
    };
    struct Refine {
        Conv fuse;
        std::optional<Conv> reduce;            // bilinear path
        std::optional<std::pair<nn::Var, nn::Var>> deconv;  // (w,b)
        nn::Var forward(const std::vector<nn::Var>& inputs) const;
    };

    Network() = default;
    void build(uint64_t seed);
    Conv make_conv(const std::string& name, int in_c, int out_c, int k, int stride, int pad,
                   Rng& rng);
    std::pair<nn::Var, nn::Var> make_deconv(const std::string& name, int in_c, int out_c,
                                            Rng& rng);

    ModelConfig cfg_;
    Conv stem_;
    ResBlock s1_, s2_, s3_;
    Refine rm1_, rm2_, rm3_;
    std::vector<NamedParam> params_;
    mutable size_t encode_calls_ = 0;
    mutable size_t decode_calls_ = 0;
};

}  // namespace crvos
