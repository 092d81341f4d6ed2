#pragma once

#include <functional>
#include <string>
#include <vector>

#include "crvos/data.hpp"
#include "crvos/model.hpp"
#include "crvos/tensor.hpp"

namespace crvos {

class Rng;

enum class Stage { Pretrain, Finetune };

Stage stage_from_name(const std::string& name);
std::string stage_name(Stage s);

// Stage presets: pretrain = 8-frame clips at 240x432, lr 1e-4, 100 epochs;
// finetune = 16-frame clips at 480x864, lr 1e-5, 500 epochs, augmented.
// Desk-scale runs override clip_len/resolution/epochs/lr freely.
struct TrainConfig {
    Stage stage = Stage::Finetune;
    int clip_len = 16;
    int res_h = 480, res_w = 864;
    double lr = 1e-5;
    int epochs = 500;
    bool augment = true;
    uint64_t seed = 0;
    bool backprop_through_clue = false;  // default: detach the recurrent mask
    int batch_clips = 1;                 // clips accumulated per optimizer step

    static TrainConfig preset(Stage s);
    void validate() const;
};

// One affine augmentation, sampled once per clip and applied identically to
// every frame and mask.
struct AugmentParams {
    bool hflip = false;
    double rotation_deg = 0.0;  // [-30, 30]
    double shear_deg = 0.0;     // [-30, 30]
    double scale = 1.0;         // [0.75, 1.25]
};

AugmentParams sample_augment_params(Rng& rng);

// Mean over pixels of -log(pred[target channel]), clamped at eps.
double nll_loss(const Tensor& pred, const MaskMap& target, double eps = 1e-7);

struct Clip {
    std::string sequence;
    int start = 0;
    int target = 1;
    std::vector<Frame> frames;
    std::vector<MaskMap> masks;
};

// Consecutive frames from one sequence; uniform start, uniform target among
// labels present in the clip's first mask.
Clip sample_clip(const std::vector<SequenceRecord>& dataset, int clip_len, Rng& rng);

// hflip (exact column reversal), then rotation/shear/scale about the image
// center; bilinear for frames, nearest for masks, out-of-bounds = background.
void augment_clip(std::vector<Frame>& frames, std::vector<MaskMap>& masks,
                  const AugmentParams& params);

// Adaptive-moment gradient descent over the network's parameter list.
class Adam {
public:
    explicit Adam(double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);
    void step(std::vector<NamedParam>& params, double lr);
    std::vector<NamedTensor> state(const std::vector<NamedParam>& params) const;
    void load_state(const std::vector<NamedParam>& params,
                    const std::vector<NamedTensor>& state);

private:
    double beta1_, beta2_, eps_;
    uint64_t t_ = 0;
    std::vector<Tensor> m_, v_;
};

// Unrolls propagation over the clip seeding the Clue with frame 0's ground
// truth; frames 1..T-1 each contribute an NLL term; returns the mean loss and
// performs one optimizer update (unless defer_update).
double train_clip(Network& net, Adam& adam, const Clip& clip, const TrainConfig& cfg,
                  bool defer_update = false);

struct TrainLogEntry {
    uint64_t step = 0;
    Stage stage = Stage::Finetune;
    double loss = 0.0;
    double lr = 0.0;
    double wall_s = 0.0;
};
using TrainLogSink = std::function<void(const TrainLogEntry&)>;

// Epochs x N clips (N = dataset size); returns the final step counter.
uint64_t run_stage(Network& net, Adam& adam, const std::vector<SequenceRecord>& dataset,
                   const TrainConfig& cfg, const TrainLogSink& sink = nullptr,
                   uint64_t start_step = 0);

}  // namespace crvos
