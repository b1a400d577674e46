#pragma once
// Optimization loop: Adam with bias correction, a learning-rate sweep with
// early stopping on validation loss, checkpointing of the best epoch and
// metric evaluation of a trained model.

#include <limits>
#include <map>
#include <string>
#include <vector>

#include "ergoseg/data.hpp"
#include "ergoseg/metrics.hpp"
#include "ergoseg/model.hpp"

namespace ergoseg {

// Every learning rate in the sweep diverged.
class DivergenceError : public DataError {
public:
    explicit DivergenceError(const std::string& what) : DataError(what) {}
};

struct AdamConfig {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

struct AdamState {
    AdamConfig cfg;
    std::vector<std::vector<double>> m;
    std::vector<std::vector<double>> v;
    int64_t step = 0;

    static AdamState init(const ParamList& params, const AdamConfig& cfg = {});
};

// Standard bias-corrected update, in place; a parameter with no gradient
// buffer counts as zero gradient. Non-finite gradients abort the step.
void adam_step(const ParamList& params, AdamState& state, double lr);

void zero_grads(const ParamList& params);

struct TrainConfig {
    Variant variant = Variant::mtl_base;
    std::vector<double> learning_rates{1e-3, 3e-4};
    int batch_size = 2;
    int max_epochs = 100;
    int patience = 10;
    uint64_t seed = 1;
    std::string manifest_path;
    std::string out_dir = "runs";
    ModelConfig model;  // classes filled in from the manifest

    void validate() const;
    static TrainConfig from_file(const std::string& path);
    void apply_env_overrides();  // ERGOSEG_SEED, ERGOSEG_OUT
};

struct EpochRecord {
    int epoch = 0;
    double train_loss = 0.0;
    double val_loss = 0.0;
    double alpha = 1.0, beta = 1.0, gamma = 1.0;  // effective values
    double val_accuracy = -1.0;  // -1 when the variant has no such head
    double val_mse = -1.0;
};

struct LrRunResult {
    double lr = 0.0;
    bool diverged = false;
    std::string divergence_note;
    int best_epoch = -1;
    double best_val_loss = std::numeric_limits<double>::infinity();
    std::vector<EpochRecord> history;
};

struct FitResult {
    Model model;  // best-validation weights already restored
    double best_lr = 0.0;
    int best_epoch = -1;
    double best_val_loss = std::numeric_limits<double>::infinity();
    std::vector<LrRunResult> runs;
    TrainConfig config;

    std::string history_text() const;  // deterministic structured text
};

// Trains one run per learning rate (identical init and batch order per
// rate), early-stops on validation loss, keeps the best checkpoint across
// the sweep. Validation falls back to the training videos when the split
// has none. Throws DataError when every rate diverges.
FitResult fit(const TrainConfig& config, const data::Dataset& dataset);

struct Prediction {
    std::vector<int> labels;         // empty without the segmentation head
    std::vector<double> probs;       // frames x classes
    std::vector<double> risk;        // empty without the regression head
};

Prediction predict_sequence(const Model& model, const data::SkeletonSequence& sequence);

// Per-video metrics plus aggregates over the chosen videos. Refuses a
// dataset whose topology hash differs from the checkpoint's.
metrics::MetricsReport evaluate(const Model& model, const data::Dataset& dataset,
                                const std::vector<size_t>& video_indices);

}  // namespace ergoseg
