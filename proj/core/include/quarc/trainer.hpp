// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "quarc/coreset.hpp"
#include "quarc/losses.hpp"

namespace quarc {

enum class OptimKind { Sgd, Adam };
enum class LrSchedule { Constant, Cosine };
enum class Method { Quarc, RandomCoreset, FullData };

struct OptimConfig {
    OptimKind kind = OptimKind::Sgd;
    real lr = 0.02;
    real momentum = 0.9;
    real weight_decay = 0;
    real adam_beta1 = 0.9;
    real adam_beta2 = 0.999;
    real adam_eps = 1e-8;
};

struct RunConfig {
    int bits_w = 2;
    std::optional<int> bits_a;      // unset = weight-only quantization
    double fraction = 0.1;          // S, coreset fraction of the train set
    int interval = 10;              // R, epochs between re-selections
    int epochs = 60;                // T
    real beta = 0.1;                // CLC weight (desk-scale tuned default)
    OptimConfig optim;
    std::size_t batch_size = 32;
    std::uint64_t seed = 1;
    LrSchedule lr_schedule = LrSchedule::Constant;
    MetricMask metrics;             // which selection scores participate
    bool normalize_res = false;     // min-max rescale res inside the combined score
    bool clc = true;
    Method method = Method::Quarc;
    QuantOptions quant;

    void validate() const;  // 0<S<=1, 1<=R<=T, beta>=0, lr>0, bits>=2
};

struct EpochMetrics {
    int epoch = 0;
    double kd = 0;
    double clc = 0;
    double total = 0;
    double top1 = 0;
    double top5 = 0;
    double seconds = 0;
    std::size_t coreset_size = 0;
    bool selection = false;
    // work accounting, batch granularity
    std::size_t backward_batches = 0;
    std::size_t selection_forward_batches = 0;
    std::size_t train_forward_batches = 0;
    std::size_t eval_forward_batches = 0;
};

struct SgdState {
    std::vector<std::vector<real>> velocity;
};

/// One SGD step with momentum and weight decay:
///   v <- momentum * v + (grad + wd * w);  w <- w - lr * v
/// Parameters without a gradient buffer are treated as zero-gradient.
void sgd_step(std::vector<Tensor>& params, SgdState& state, const OptimConfig& cfg, real lr);

/// SGD-momentum or Adam over a fixed parameter list.
class Optimizer {
public:
    Optimizer(std::vector<Tensor> params, OptimConfig cfg);
    void zero_grad();
    void step(real lr);

private:
    std::vector<Tensor> params_;
    OptimConfig cfg_;
    SgdState sgd_;
    std::vector<std::vector<real>> adam_m_, adam_v_;
    long steps_ = 0;
};

/// Top-k accuracy by logits ranking; logit ties resolve to the lower
/// class index. top5 is top-min(5, M).
std::pair<double, double> evaluate(ModelInstance& m, const Dataset& eval_data,
                                   std::size_t batch_size,
                                   std::size_t* forward_batches = nullptr);

struct PretrainResult {
    ModelInstance model;
    std::vector<EpochMetrics> metrics;
};

/// Full-precision pretraining with cross-entropy; epochs == 0 returns the
/// freshly initialized model.
PretrainResult pretrain_fp(const ModelDef& def, const Dataset& train, const Dataset& eval_data,
                           int epochs, const OptimConfig& optim, std::size_t batch_size,
                           std::uint64_t seed);

struct QatResult {
    ModelInstance student;
    std::vector<EpochMetrics> metrics;
    std::vector<SampleScore> last_scores;   // most recent full score table
    std::vector<int> last_coreset;
};

/// The full pipeline: clone-and-calibrate the student, re-select the
/// coreset every `interval` epochs (epochs 0, R, 2R, ...), train each
/// epoch on the frozen coreset minimizing kd + beta*clc, evaluate, and
/// record per-epoch metrics. NaN losses abort with epoch context.
QatResult run_quarc(ModelInstance& fp_teacher, const Dataset& train, const Dataset& eval_data,
                    const RunConfig& cfg);

/// One JSON object per epoch appended to a JSONL file.
void append_metrics_jsonl(const std::string& path, const std::string& run_name,
                          std::uint64_t seed, const std::vector<EpochMetrics>& metrics);

/// Field-wise equality ignoring wall-clock seconds (the only
/// nondeterministic field); used by reproducibility checks.
bool deterministic_equal(const std::vector<EpochMetrics>& a, const std::vector<EpochMetrics>& b);

struct LossTrend {
    int pairs = 0;          // consecutive moving-average window pairs
    int non_increasing = 0;
    double fraction() const { return pairs ? double(non_increasing) / pairs : 1.0; }
};

/// Moving-average descent diagnostic over the per-epoch total loss:
/// counts consecutive window pairs where the mean does not increase.
LossTrend loss_trend(const std::vector<EpochMetrics>& metrics, int window = 10);

}  // namespace quarc
