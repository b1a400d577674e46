#pragma once
// The four studied assemblies over a shared spatial backbone:
//   STL-AS    segmentation head only
//   STL-PA    risk regressor only
//   MTL-base  shared backbone, independent heads
//   MTL-emb   the segmentation softmax fused into the regressor input
// The backbone stacks three graph convolutions (3 -> 64 -> 128 -> 256 per
// joint), flattens each frame to 256*15 = 3840 and adaptive-average-pools
// to 2048 features per frame.

#include <map>
#include <optional>
#include <string>

#include "ergoseg/layers.hpp"
#include "ergoseg/losses.hpp"
#include "ergoseg/topology.hpp"

namespace ergoseg {

enum class Variant { stl_as, stl_pa, mtl_base, mtl_emb };

std::string variant_name(Variant v);
Variant variant_from_name(const std::string& name);
bool variant_has_segmentation(Variant v);
bool variant_has_regression(Variant v);

struct ModelConfig {
    Variant variant = Variant::mtl_base;
    int classes = 0;
    std::vector<int64_t> backbone_channels{64, 128, 256};
    int64_t pooled_features = 2048;
    EdTcnConfig tcn;
    int64_t regressor_fc = 256;
    int64_t lstm_hidden = 128;
    int lstm_layers = 3;
};

struct ModelOutput {
    TensorPtr logits;  // null unless the variant has the segmentation head
    TensorPtr risk;    // null unless the variant has the regression head
};

struct Model {
    ModelConfig cfg;
    SkeletonTopology topology;
    AdjacencySet adjacency;
    std::vector<GcnLayer> backbone;
    std::optional<EdTcnHead> segmentation_head;
    std::optional<RegressorHead> regression_head;
    LossWeights loss_weights;

    static Model init(const ModelConfig& cfg, const SkeletonTopology& topology, uint64_t seed);

    // joints (T, N, 3) with masked frames carrying -1 everywhere; output
    // (T, pooled) with masked frames forced back to -1 so the heads see
    // the same constant at padded positions whatever the padding length.
    TensorPtr backbone_forward(Tape& tape, const TensorPtr& joints,
                               const ops::FrameMask& mask) const;

    ModelOutput forward(Tape& tape, const ForwardContext& ctx, const TensorPtr& joints,
                        const ops::FrameMask& mask) const;

    int64_t flattened_width() const;
    int64_t regressor_input_width() const;

    // Deterministic order; includes the loss weights.
    ParamList parameters() const;

    std::vector<std::vector<double>> snapshot() const;
    void restore(const std::vector<std::vector<double>>& snapshot);

    void save_checkpoint(const std::string& path,
                         const std::map<std::string, std::string>& metadata) const;
    static Model load_checkpoint(const std::string& path,
                                 std::map<std::string, std::string>* metadata = nullptr);
};

}  // namespace ergoseg
