#pragma once
// Differentiable building blocks: partitioned graph convolution with edge
// importance, dilated causal temporal convolution, the encoder-decoder
// temporal head, the gated recurrent stack and plain linear layers.

#include <array>
#include <string>
#include <vector>

#include "ergoseg/ops.hpp"
#include "ergoseg/rng.hpp"
#include "ergoseg/tensor.hpp"
#include "ergoseg/topology.hpp"

namespace ergoseg {

struct ForwardContext {
    bool training = false;
    Rng* rng = nullptr;  // consulted only by dropout at training time
};

struct NamedParam {
    std::string name;
    TensorPtr tensor;
};

using ParamList = std::vector<NamedParam>;

struct Linear {
    TensorPtr weight;  // (in, out)
    TensorPtr bias;    // (out)

    static Linear init(int64_t in, int64_t out, Rng& rng);
    TensorPtr forward(Tape& tape, const TensorPtr& x) const;
    void collect(const std::string& prefix, ParamList& out) const;
};

// One spatial graph convolution: per-partition weights, learnable edge
// importance masks (all-ones at init) and a ReLU on the aggregate.
struct GcnLayer {
    int64_t in_channels = 0;
    int64_t out_channels = 0;
    std::array<TensorPtr, 3> weights;     // (Cin, Cout) each
    std::array<TensorPtr, 3> edge_masks;  // (N, N) each
    TensorPtr bias;                       // (Cout)

    static GcnLayer init(int64_t joints, int64_t in, int64_t out, Rng& rng);
    // x is (T, N, Cin); returns (T, N, Cout).
    TensorPtr forward(Tape& tape, const TensorPtr& x, const AdjacencySet& adjacency) const;
    void collect(const std::string& prefix, ParamList& out) const;
};

// Single-frame wrapper matching the per-frame formulation: x (N, Cin).
TensorPtr gcn_forward(Tape& tape, const TensorPtr& frame, const GcnLayer& layer,
                      const AdjacencySet& adjacency);

struct CausalConv1d {
    int64_t kernel = 0;
    int64_t dilation = 1;
    TensorPtr weight;  // (k, Cin, Cout)
    TensorPtr bias;    // (Cout)

    static CausalConv1d init(int64_t kernel, int64_t cin, int64_t cout, int64_t dilation,
                             Rng& rng);
    TensorPtr forward(Tape& tape, const TensorPtr& x) const;
    void collect(const std::string& prefix, ParamList& out) const;
};

struct LstmLayer {
    TensorPtr w_input;   // (Fin, 4H)
    TensorPtr w_hidden;  // (H, 4H)
    TensorPtr bias;      // (4H), forget gate slice starts at 1

    static LstmLayer init(int64_t in, int64_t hidden, Rng& rng);
    TensorPtr forward(Tape& tape, const TensorPtr& x) const;
    void collect(const std::string& prefix, ParamList& out) const;
};

struct RecurrentStack {
    std::vector<LstmLayer> layers;

    static RecurrentStack init(int64_t in, int64_t hidden, int depth, Rng& rng);
    // Returns the top layer's hidden sequence (T, H).
    TensorPtr forward(Tape& tape, const TensorPtr& x) const;
    void collect(const std::string& prefix, ParamList& out) const;
};

struct EdTcnConfig {
    int64_t kernel = 9;
    std::vector<int64_t> encoder_channels = {64, 96};
    std::vector<int64_t> encoder_dilations = {1, 2};
    int64_t fc_hidden = 64;
    double dropout = 0.3;
    bool use_normalized_relu = true;
    bool use_max_pool = true;
    double mask_value = -1.0;
};

// Temporal hourglass: two [conv -> normalized ReLU -> dropout -> pool]
// encoder stages, the mirrored decode with nearest-neighbor upsampling,
// then a per-frame FC + ReLU + FC to class logits. Output length equals
// input length; inputs are right-padded to a multiple of 4 internally.
struct EdTcnHead {
    EdTcnConfig cfg;
    std::vector<CausalConv1d> encoder;
    std::vector<CausalConv1d> decoder;
    Linear fc1, fc2;

    static EdTcnHead init(int64_t in_features, int64_t classes, const EdTcnConfig& cfg, Rng& rng);
    TensorPtr forward(Tape& tape, const ForwardContext& ctx, const TensorPtr& features) const;
    void collect(const std::string& prefix, ParamList& out) const;
};

// FC + tanh, recurrent stack, FC to one risk value per frame; returns (T).
struct RegressorHead {
    Linear fc_in;
    RecurrentStack stack;
    Linear fc_out;

    static RegressorHead init(int64_t in_features, int64_t fc_width, int64_t hidden, int depth,
                              Rng& rng);
    TensorPtr forward(Tape& tape, const TensorPtr& features) const;
    void collect(const std::string& prefix, ParamList& out) const;
};

}  // namespace ergoseg
