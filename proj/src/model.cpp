#include "ergoseg/model.hpp"

#include <cstring>
#include <fstream>

namespace ergoseg {

std::string variant_name(Variant v) {
    switch (v) {
        case Variant::stl_as: return "stl-as";
        case Variant::stl_pa: return "stl-pa";
        case Variant::mtl_base: return "mtl-base";
        case Variant::mtl_emb: return "mtl-emb";
    }
    return "unknown";
}

Variant variant_from_name(const std::string& name) {
    if (name == "stl-as") return Variant::stl_as;
    if (name == "stl-pa") return Variant::stl_pa;
    if (name == "mtl-base") return Variant::mtl_base;
    if (name == "mtl-emb") return Variant::mtl_emb;
    throw ContractViolation("unknown variant '" + name +
                            "' (expected stl-as, stl-pa, mtl-base or mtl-emb)");
}

bool variant_has_segmentation(Variant v) { return v != Variant::stl_pa; }
bool variant_has_regression(Variant v) { return v != Variant::stl_as; }

int64_t Model::flattened_width() const {
    return topology.joint_count() * cfg.backbone_channels.back();
}

int64_t Model::regressor_input_width() const {
    return cfg.pooled_features + (cfg.variant == Variant::mtl_emb ? cfg.classes : 0);
}

Model Model::init(const ModelConfig& cfg, const SkeletonTopology& topology, uint64_t seed) {
    if (cfg.classes < 1 && variant_has_segmentation(cfg.variant))
        throw ContractViolation("Model::init: class count required");
    Model m;
    m.cfg = cfg;
    m.topology = topology;
    m.topology.validate();
    m.adjacency = AdjacencySet::build(m.topology);

    Rng rng(seed);
    int64_t in_c = 3;
    for (int64_t out_c : cfg.backbone_channels) {
        m.backbone.push_back(GcnLayer::init(m.topology.joint_count(), in_c, out_c, rng));
        in_c = out_c;
    }
    if (m.flattened_width() < cfg.pooled_features)
        throw ContractViolation("Model::init: pooled width exceeds flattened width");
    if (variant_has_segmentation(cfg.variant))
        m.segmentation_head.emplace(
            EdTcnHead::init(cfg.pooled_features, cfg.classes, cfg.tcn, rng));
    if (variant_has_regression(cfg.variant))
        m.regression_head.emplace(RegressorHead::init(m.regressor_input_width(), cfg.regressor_fc,
                                                      cfg.lstm_hidden, cfg.lstm_layers, rng));
    m.loss_weights = LossWeights::init();
    return m;
}

TensorPtr Model::backbone_forward(Tape& tape, const TensorPtr& joints,
                                  const ops::FrameMask& mask) const {
    if (joints->rank() != 3 || joints->dim(1) != topology.joint_count() || joints->dim(2) != 3)
        throw ContractViolation("backbone_forward: joints " + shape_str(joints->shape) +
                                " do not match the " + std::to_string(topology.joint_count()) +
                                "-joint topology");
    const int64_t frames = joints->dim(0);
    TensorPtr h = joints;
    for (const auto& layer : backbone) h = layer.forward(tape, h, adjacency);
    h = ops::reshape(tape, h, {frames, flattened_width()});
    h = ops::adaptive_avg_pool_cols(tape, h, cfg.pooled_features);
    return ops::apply_frame_mask(tape, h, mask, cfg.tcn.mask_value);
}

ModelOutput Model::forward(Tape& tape, const ForwardContext& ctx, const TensorPtr& joints,
                           const ops::FrameMask& mask) const {
    ModelOutput out;
    auto features = backbone_forward(tape, joints, mask);
    if (segmentation_head) out.logits = segmentation_head->forward(tape, ctx, features);
    if (regression_head) {
        TensorPtr reg_in = features;
        if (cfg.variant == Variant::mtl_emb)
            reg_in = ops::concat_cols(tape, features, ops::softmax_rows(tape, out.logits));
        out.risk = regression_head->forward(tape, reg_in);
    }
    return out;
}

ParamList Model::parameters() const {
    ParamList params;
    for (size_t i = 0; i < backbone.size(); ++i)
        backbone[i].collect("backbone.gcn" + std::to_string(i), params);
    if (segmentation_head) segmentation_head->collect("has", params);
    if (regression_head) regression_head->collect("hpa", params);
    loss_weights.collect(params);
    return params;
}

std::vector<std::vector<double>> Model::snapshot() const {
    std::vector<std::vector<double>> values;
    for (const auto& p : parameters()) values.push_back(p.tensor->values);
    return values;
}

void Model::restore(const std::vector<std::vector<double>>& snapshot) {
    auto params = parameters();
    if (snapshot.size() != params.size())
        throw ContractViolation("Model::restore: snapshot arity mismatch");
    for (size_t i = 0; i < params.size(); ++i) {
        if (snapshot[i].size() != params[i].tensor->values.size())
            throw ContractViolation("Model::restore: size mismatch for " + params[i].name);
        params[i].tensor->values = snapshot[i];
    }
}

namespace {

void write_u32(std::ostream& out, uint32_t v) { out.write(reinterpret_cast<const char*>(&v), 4); }
void write_i64(std::ostream& out, int64_t v) { out.write(reinterpret_cast<const char*>(&v), 8); }
void write_u64(std::ostream& out, uint64_t v) { out.write(reinterpret_cast<const char*>(&v), 8); }
void write_f64(std::ostream& out, double v) { out.write(reinterpret_cast<const char*>(&v), 8); }

void write_str(std::ostream& out, const std::string& s) {
    write_u32(out, static_cast<uint32_t>(s.size()));
    out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

uint32_t read_u32(std::istream& in) {
    uint32_t v = 0;
    in.read(reinterpret_cast<char*>(&v), 4);
    return v;
}
int64_t read_i64(std::istream& in) {
    int64_t v = 0;
    in.read(reinterpret_cast<char*>(&v), 8);
    return v;
}
uint64_t read_u64(std::istream& in) {
    uint64_t v = 0;
    in.read(reinterpret_cast<char*>(&v), 8);
    return v;
}
double read_f64(std::istream& in) {
    double v = 0;
    in.read(reinterpret_cast<char*>(&v), 8);
    return v;
}
std::string read_str(std::istream& in) {
    const uint32_t n = read_u32(in);
    std::string s(n, '\0');
    in.read(s.data(), n);
    return s;
}

constexpr char kMagic[8] = {'E', 'R', 'G', 'O', 'S', 'G', 'C', 'K'};

}  // namespace

void Model::save_checkpoint(const std::string& path,
                            const std::map<std::string, std::string>& metadata) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("checkpoint: cannot write " + path);
    out.write(kMagic, 8);
    write_u32(out, 1);  // format version
    write_str(out, variant_name(cfg.variant));
    write_u64(out, topology.hash());
    write_u32(out, static_cast<uint32_t>(cfg.classes));
    write_u32(out, static_cast<uint32_t>(cfg.backbone_channels.size()));
    for (int64_t c : cfg.backbone_channels) write_i64(out, c);
    write_i64(out, cfg.pooled_features);
    write_i64(out, cfg.tcn.kernel);
    write_u32(out, static_cast<uint32_t>(cfg.tcn.encoder_channels.size()));
    for (int64_t c : cfg.tcn.encoder_channels) write_i64(out, c);
    for (int64_t d : cfg.tcn.encoder_dilations) write_i64(out, d);
    write_i64(out, cfg.tcn.fc_hidden);
    write_f64(out, cfg.tcn.dropout);
    write_u32(out, (cfg.tcn.use_normalized_relu ? 1u : 0u) | (cfg.tcn.use_max_pool ? 2u : 0u));
    write_f64(out, cfg.tcn.mask_value);
    write_i64(out, cfg.regressor_fc);
    write_i64(out, cfg.lstm_hidden);
    write_u32(out, static_cast<uint32_t>(cfg.lstm_layers));
    write_str(out, [&] {
        std::string text = "topology-version 1\n";
        for (const auto& n : topology.joint_names) text += "joint " + n + "\n";
        text += "root " + topology.joint_names[static_cast<size_t>(topology.root)] + "\n";
        for (const auto& [a, b] : topology.edges)
            text += "edge " + topology.joint_names[static_cast<size_t>(a)] + " " +
                    topology.joint_names[static_cast<size_t>(b)] + "\n";
        return text;
    }());
    write_u32(out, static_cast<uint32_t>(metadata.size()));
    for (const auto& [k, v] : metadata) {
        write_str(out, k);
        write_str(out, v);
    }
    const auto params = parameters();
    write_u32(out, static_cast<uint32_t>(params.size()));
    for (const auto& p : params) {
        write_str(out, p.name);
        write_u32(out, static_cast<uint32_t>(p.tensor->shape.size()));
        for (int64_t d : p.tensor->shape) write_i64(out, d);
        out.write(reinterpret_cast<const char*>(p.tensor->values.data()),
                  static_cast<std::streamsize>(p.tensor->values.size() * sizeof(double)));
    }
    if (!out) throw DataError("checkpoint: write failed for " + path);
}

Model Model::load_checkpoint(const std::string& path,
                             std::map<std::string, std::string>* metadata) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("checkpoint: cannot open " + path);
    char magic[8];
    in.read(magic, 8);
    if (!in || std::memcmp(magic, kMagic, 8) != 0)
        throw DataError("checkpoint: " + path + " is not a checkpoint file");
    const uint32_t version = read_u32(in);
    if (version != 1) throw DataError("checkpoint: unsupported format version");

    ModelConfig cfg;
    cfg.variant = variant_from_name(read_str(in));
    const uint64_t stored_hash = read_u64(in);
    cfg.classes = static_cast<int>(read_u32(in));
    cfg.backbone_channels.assign(read_u32(in), 0);
    for (auto& c : cfg.backbone_channels) c = read_i64(in);
    cfg.pooled_features = read_i64(in);
    cfg.tcn.kernel = read_i64(in);
    const uint32_t enc_n = read_u32(in);
    cfg.tcn.encoder_channels.assign(enc_n, 0);
    for (auto& c : cfg.tcn.encoder_channels) c = read_i64(in);
    cfg.tcn.encoder_dilations.assign(enc_n, 0);
    for (auto& d : cfg.tcn.encoder_dilations) d = read_i64(in);
    cfg.tcn.fc_hidden = read_i64(in);
    cfg.tcn.dropout = read_f64(in);
    const uint32_t flags = read_u32(in);
    cfg.tcn.use_normalized_relu = (flags & 1u) != 0;
    cfg.tcn.use_max_pool = (flags & 2u) != 0;
    cfg.tcn.mask_value = read_f64(in);
    cfg.regressor_fc = read_i64(in);
    cfg.lstm_hidden = read_i64(in);
    cfg.lstm_layers = static_cast<int>(read_u32(in));

    const std::string topo_text = read_str(in);
    const auto topology = SkeletonTopology::parse(topo_text, path + "#topology");
    if (topology.hash() != stored_hash)
        throw DataError("checkpoint: embedded topology does not match its recorded hash");

    std::map<std::string, std::string> meta;
    const uint32_t meta_n = read_u32(in);
    for (uint32_t i = 0; i < meta_n; ++i) {
        const std::string k = read_str(in);
        meta[k] = read_str(in);
    }
    if (metadata) *metadata = meta;

    Model m = Model::init(cfg, topology, 0);
    auto params = m.parameters();
    const uint32_t param_n = read_u32(in);
    if (param_n != params.size())
        throw DataError("checkpoint: parameter count " + std::to_string(param_n) +
                        " does not match the " + variant_name(cfg.variant) + " layout");
    for (auto& p : params) {
        const std::string name = read_str(in);
        if (name != p.name)
            throw DataError("checkpoint: expected parameter '" + p.name + "', found '" + name +
                            "'");
        Shape shape(read_u32(in));
        for (auto& d : shape) d = read_i64(in);
        if (shape != p.tensor->shape)
            throw DataError("checkpoint: shape mismatch for " + name);
        in.read(reinterpret_cast<char*>(p.tensor->values.data()),
                static_cast<std::streamsize>(p.tensor->values.size() * sizeof(double)));
    }
    if (!in) throw DataError("checkpoint: truncated file " + path);
    return m;
}

}  // namespace ergoseg
