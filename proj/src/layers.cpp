#include "ergoseg/layers.hpp"

#include <cmath>

namespace ergoseg {

namespace {

TensorPtr xavier(Shape shape, int64_t fan_in, int64_t fan_out, Rng& rng) {
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    auto t = Tensor::zeros(std::move(shape), true);
    for (auto& v : t->values) v = rng.uniform(-limit, limit);
    return t;
}

}  // namespace

Linear Linear::init(int64_t in, int64_t out, Rng& rng) {
    Linear l;
    l.weight = xavier({in, out}, in, out, rng);
    l.bias = Tensor::zeros({out}, true);
    return l;
}

TensorPtr Linear::forward(Tape& tape, const TensorPtr& x) const {
    return ops::add_bias(tape, ops::matmul(tape, x, weight), bias);
}

void Linear::collect(const std::string& prefix, ParamList& out) const {
    out.push_back({prefix + ".weight", weight});
    out.push_back({prefix + ".bias", bias});
}

GcnLayer GcnLayer::init(int64_t joints, int64_t in, int64_t out, Rng& rng) {
    GcnLayer layer;
    layer.in_channels = in;
    layer.out_channels = out;
    for (int a = 0; a < 3; ++a) {
        layer.weights[static_cast<size_t>(a)] = xavier({in, out}, in, out, rng);
        layer.edge_masks[static_cast<size_t>(a)] = Tensor::full({joints, joints}, 1.0, true);
    }
    layer.bias = Tensor::zeros({out}, true);
    return layer;
}

TensorPtr GcnLayer::forward(Tape& tape, const TensorPtr& x, const AdjacencySet& adjacency) const {
    if (x->rank() != 3 || x->dim(1) != adjacency.n || x->dim(2) != in_channels)
        throw ContractViolation("GcnLayer: input " + shape_str(x->shape) + " does not match N=" +
                                std::to_string(adjacency.n) + ", Cin=" +
                                std::to_string(in_channels));
    const int64_t frames = x->dim(0);
    const int64_t nodes = adjacency.n;
    TensorPtr acc;
    for (size_t a = 0; a < 3; ++a) {
        auto gathered = ops::edge_weighted_aggregate(tape, adjacency.normalized[a], edge_masks[a], x);
        auto flat = ops::reshape(tape, gathered, {frames * nodes, in_channels});
        auto mixed = ops::matmul(tape, flat, weights[a]);
        acc = acc ? ops::add(tape, acc, mixed) : mixed;
    }
    acc = ops::add_bias(tape, acc, bias);
    acc = ops::relu(tape, acc);
    return ops::reshape(tape, acc, {frames, nodes, out_channels});
}

void GcnLayer::collect(const std::string& prefix, ParamList& out) const {
    for (size_t a = 0; a < 3; ++a) {
        out.push_back({prefix + ".w" + std::to_string(a), weights[a]});
        out.push_back({prefix + ".mask" + std::to_string(a), edge_masks[a]});
    }
    out.push_back({prefix + ".bias", bias});
}

TensorPtr gcn_forward(Tape& tape, const TensorPtr& frame, const GcnLayer& layer,
                      const AdjacencySet& adjacency) {
    if (frame->rank() != 2)
        throw ContractViolation("gcn_forward: expected a single (N, Cin) frame");
    auto batched = ops::reshape(tape, frame, {1, frame->dim(0), frame->dim(1)});
    auto out = layer.forward(tape, batched, adjacency);
    return ops::reshape(tape, out, {out->dim(1), out->dim(2)});
}

CausalConv1d CausalConv1d::init(int64_t kernel, int64_t cin, int64_t cout, int64_t dilation,
                                Rng& rng) {
    CausalConv1d conv;
    conv.kernel = kernel;
    conv.dilation = dilation;
    conv.weight = xavier({kernel, cin, cout}, kernel * cin, kernel * cout, rng);
    conv.bias = Tensor::zeros({cout}, true);
    return conv;
}

TensorPtr CausalConv1d::forward(Tape& tape, const TensorPtr& x) const {
    return ops::causal_conv1d(tape, x, weight, bias, dilation);
}

void CausalConv1d::collect(const std::string& prefix, ParamList& out) const {
    out.push_back({prefix + ".weight", weight});
    out.push_back({prefix + ".bias", bias});
}

LstmLayer LstmLayer::init(int64_t in, int64_t hidden, Rng& rng) {
    LstmLayer layer;
    const double limit = 1.0 / std::sqrt(static_cast<double>(hidden));
    auto uniform_init = [&](Shape shape) {
        auto t = Tensor::zeros(std::move(shape), true);
        for (auto& v : t->values) v = rng.uniform(-limit, limit);
        return t;
    };
    layer.w_input = uniform_init({in, 4 * hidden});
    layer.w_hidden = uniform_init({hidden, 4 * hidden});
    layer.bias = Tensor::zeros({4 * hidden}, true);
    for (int64_t u = 0; u < hidden; ++u) layer.bias->values[static_cast<size_t>(hidden + u)] = 1.0;
    return layer;
}

TensorPtr LstmLayer::forward(Tape& tape, const TensorPtr& x) const {
    return ops::lstm(tape, x, w_input, w_hidden, bias);
}

void LstmLayer::collect(const std::string& prefix, ParamList& out) const {
    out.push_back({prefix + ".w_input", w_input});
    out.push_back({prefix + ".w_hidden", w_hidden});
    out.push_back({prefix + ".bias", bias});
}

RecurrentStack RecurrentStack::init(int64_t in, int64_t hidden, int depth, Rng& rng) {
    RecurrentStack stack;
    for (int l = 0; l < depth; ++l)
        stack.layers.push_back(LstmLayer::init(l == 0 ? in : hidden, hidden, rng));
    return stack;
}

TensorPtr RecurrentStack::forward(Tape& tape, const TensorPtr& x) const {
    TensorPtr h = x;
    for (const auto& layer : layers) h = layer.forward(tape, h);
    return h;
}

void RecurrentStack::collect(const std::string& prefix, ParamList& out) const {
    for (size_t l = 0; l < layers.size(); ++l)
        layers[l].collect(prefix + ".lstm" + std::to_string(l), out);
}

EdTcnHead EdTcnHead::init(int64_t in_features, int64_t classes, const EdTcnConfig& cfg, Rng& rng) {
    if (cfg.encoder_channels.size() != 2 || cfg.encoder_dilations.size() != 2)
        throw ContractViolation("EdTcnHead: expected two encoder stages");
    EdTcnHead head;
    head.cfg = cfg;
    const int64_t h0 = cfg.encoder_channels[0], h1 = cfg.encoder_channels[1];
    head.encoder.push_back(
        CausalConv1d::init(cfg.kernel, in_features, h0, cfg.encoder_dilations[0], rng));
    head.encoder.push_back(CausalConv1d::init(cfg.kernel, h0, h1, cfg.encoder_dilations[1], rng));
    head.decoder.push_back(CausalConv1d::init(cfg.kernel, h1, h1, 1, rng));
    head.decoder.push_back(CausalConv1d::init(cfg.kernel, h1, h0, 1, rng));
    head.fc1 = Linear::init(h0, cfg.fc_hidden, rng);
    head.fc2 = Linear::init(cfg.fc_hidden, classes, rng);
    return head;
}

TensorPtr EdTcnHead::forward(Tape& tape, const ForwardContext& ctx,
                             const TensorPtr& features) const {
    const int64_t frames = features->dim(0);
    const bool needs_dropout = ctx.training && cfg.dropout > 0.0;
    if (needs_dropout && ctx.rng == nullptr)
        throw ContractViolation("EdTcnHead: training forward needs an rng for dropout");

    auto activate = [&](const TensorPtr& t) {
        return cfg.use_normalized_relu ? ops::normalized_relu(tape, t) : ops::relu(tape, t);
    };
    auto pool = [&](const TensorPtr& t) {
        return cfg.use_max_pool ? ops::max_pool_time(tape, t) : ops::avg_pool_time(tape, t);
    };
    auto drop = [&](const TensorPtr& t) {
        return needs_dropout ? ops::dropout(tape, t, cfg.dropout, *ctx.rng, true) : t;
    };

    // Two halvings need a multiple of 4; trim back at the end.
    const int64_t padded = std::max<int64_t>(4, (frames + 3) / 4 * 4);
    TensorPtr h = features;
    if (padded != frames) h = ops::pad_rows(tape, h, padded, cfg.mask_value);

    for (const auto& conv : encoder) {
        h = conv.forward(tape, h);
        h = activate(h);
        h = drop(h);
        h = pool(h);
    }
    for (const auto& conv : decoder) {
        h = ops::upsample_time(tape, h);
        h = conv.forward(tape, h);
        h = activate(h);
        h = drop(h);
    }
    h = ops::relu(tape, fc1.forward(tape, h));
    h = fc2.forward(tape, h);
    if (padded != frames) h = ops::slice_rows(tape, h, 0, frames);
    return h;
}

void EdTcnHead::collect(const std::string& prefix, ParamList& out) const {
    for (size_t i = 0; i < encoder.size(); ++i)
        encoder[i].collect(prefix + ".enc" + std::to_string(i), out);
    for (size_t i = 0; i < decoder.size(); ++i)
        decoder[i].collect(prefix + ".dec" + std::to_string(i), out);
    fc1.collect(prefix + ".fc1", out);
    fc2.collect(prefix + ".fc2", out);
}

RegressorHead RegressorHead::init(int64_t in_features, int64_t fc_width, int64_t hidden, int depth,
                                  Rng& rng) {
    RegressorHead head;
    head.fc_in = Linear::init(in_features, fc_width, rng);
    head.stack = RecurrentStack::init(fc_width, hidden, depth, rng);
    head.fc_out = Linear::init(hidden, 1, rng);
    return head;
}

TensorPtr RegressorHead::forward(Tape& tape, const TensorPtr& features) const {
    auto h = ops::tanh_(tape, fc_in.forward(tape, features));
    h = stack.forward(tape, h);
    h = fc_out.forward(tape, h);
    return ops::reshape(tape, h, {h->dim(0)});
}

void RegressorHead::collect(const std::string& prefix, ParamList& out) const {
    fc_in.collect(prefix + ".fc_in", out);
    stack.collect(prefix + ".stack", out);
    fc_out.collect(prefix + ".fc_out", out);
}

}  // namespace ergoseg
