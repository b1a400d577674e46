#include "ergoseg/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>

#include "ergoseg/rng.hpp"

namespace ergoseg::data {

namespace {

constexpr double kPi = 3.14159265358979323846;

std::string fmt_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::string fmt_hex(uint64_t v) {
    char buf[24];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

uint64_t parse_hex(const std::string& s) {
    return std::stoull(s, nullptr, 16);
}

std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> fields;
    std::string cur;
    for (char ch : line) {
        if (ch == ',') {
            fields.push_back(cur);
            cur.clear();
        } else {
            cur.push_back(ch);
        }
    }
    fields.push_back(cur);
    return fields;
}

}  // namespace

void SkeletonSequence::validate(int classes, int joint_count) const {
    if (frames < 1) throw DataError("sequence " + video_id + ": no frames");
    const int64_t expect = frames * joint_count * 3;
    if (static_cast<int64_t>(joints.size()) != expect)
        throw DataError("sequence " + video_id + ": joint buffer holds " +
                        std::to_string(joints.size()) + " values, expected " +
                        std::to_string(expect));
    if (static_cast<int64_t>(labels.size()) != frames)
        throw DataError("sequence " + video_id + ": label count mismatch");
    for (int64_t t = 0; t < frames; ++t) {
        const int label = labels[static_cast<size_t>(t)];
        if (label < 0 || label >= classes)
            throw DataError("sequence " + video_id + ": label " + std::to_string(label) +
                            " out of range at frame " + std::to_string(t));
    }
    if (has_reba()) {
        if (static_cast<int64_t>(reba_raw.size()) != frames ||
            static_cast<int64_t>(reba_smooth.size()) != frames)
            throw DataError("sequence " + video_id + ": REBA column length mismatch");
        for (int64_t t = 0; t < frames; ++t) {
            const int score = reba_raw[static_cast<size_t>(t)];
            if (score < 1 || score > 15)
                throw DataError("sequence " + video_id + ": REBA score " + std::to_string(score) +
                                " out of range at frame " + std::to_string(t));
        }
    }
    for (double v : joints)
        if (!std::isfinite(v))
            throw DataError("sequence " + video_id + ": non-finite joint coordinate");
}

void save_sequence(const SkeletonSequence& sequence, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw DataError("sequence: cannot write " + path);
    const int64_t joint_count = sequence.frames > 0
                                    ? static_cast<int64_t>(sequence.joints.size()) /
                                          (sequence.frames * 3)
                                    : 0;
    out << "# ergoseg-video v1\n";
    out << "# id " << sequence.video_id << "\n";
    out << "# frames " << sequence.frames << "\n";
    out << "# fps " << fmt_double(sequence.frame_rate) << "\n";
    out << "# topology-hash " << fmt_hex(sequence.topology_hash) << "\n";
    for (int64_t t = 0; t < sequence.frames; ++t) {
        for (int64_t j = 0; j < joint_count * 3; ++j) {
            out << fmt_double(sequence.joints[static_cast<size_t>(t * joint_count * 3 + j)]) << ",";
        }
        out << sequence.labels[static_cast<size_t>(t)];
        if (sequence.has_reba()) {
            out << "," << sequence.reba_raw[static_cast<size_t>(t)] << ","
                << fmt_double(sequence.reba_smooth[static_cast<size_t>(t)]);
        }
        out << "\n";
    }
}

SkeletonSequence load_sequence(const std::string& path, int joint_count) {
    std::ifstream in(path);
    if (!in) throw DataError("sequence: cannot open " + path);
    SkeletonSequence seq;
    std::string line;
    int64_t declared_frames = -1;
    int64_t row = 0;
    const int base_cols = joint_count * 3 + 1;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        if (line[0] == '#') {
            std::istringstream ls(line.substr(1));
            std::string key;
            ls >> key;
            if (key == "id")
                ls >> seq.video_id;
            else if (key == "frames")
                ls >> declared_frames;
            else if (key == "fps")
                ls >> seq.frame_rate;
            else if (key == "topology-hash") {
                std::string hex;
                ls >> hex;
                seq.topology_hash = parse_hex(hex);
            }
            continue;
        }
        ++row;
        const auto fields = split_csv(line);
        if (static_cast<int>(fields.size()) != base_cols &&
            static_cast<int>(fields.size()) != base_cols + 2)
            throw DataError(path + ": row " + std::to_string(row) + " has " +
                            std::to_string(fields.size()) + " columns, expected " +
                            std::to_string(base_cols) + " or " + std::to_string(base_cols + 2));
        try {
            for (int j = 0; j < joint_count * 3; ++j)
                seq.joints.push_back(std::stod(fields[static_cast<size_t>(j)]));
            seq.labels.push_back(std::stoi(fields[static_cast<size_t>(joint_count * 3)]));
            if (static_cast<int>(fields.size()) == base_cols + 2) {
                seq.reba_raw.push_back(std::stoi(fields[static_cast<size_t>(base_cols)]));
                seq.reba_smooth.push_back(std::stod(fields[static_cast<size_t>(base_cols + 1)]));
            }
        } catch (const std::exception&) {
            throw DataError(path + ": row " + std::to_string(row) + " has a malformed value");
        }
    }
    seq.frames = row;
    if (declared_frames >= 0 && declared_frames != seq.frames)
        throw DataError(path + ": header declares " + std::to_string(declared_frames) +
                        " frames but file holds " + std::to_string(seq.frames));
    if (!seq.reba_raw.empty() && static_cast<int64_t>(seq.reba_raw.size()) != seq.frames)
        throw DataError(path + ": some rows carry REBA columns and some do not");
    if (seq.video_id.empty()) seq.video_id = std::filesystem::path(path).stem().string();
    return seq;
}

Manifest Manifest::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("manifest: cannot open " + path);
    Manifest m;
    m.directory = std::filesystem::path(path).parent_path().string();
    std::string line;
    int line_no = 0;
    bool version_seen = false;
    std::vector<std::pair<int, std::string>> names;
    while (std::getline(in, line)) {
        ++line_no;
        const auto hash_pos = line.find('#');
        if (hash_pos != std::string::npos) line = line.substr(0, hash_pos);
        std::istringstream ls(line);
        std::string word;
        if (!(ls >> word)) continue;
        const std::string where = path + ":" + std::to_string(line_no);
        if (word == "manifest-version") {
            int v = 0;
            if (!(ls >> v) || v != 1) throw DataError(where + ": unsupported manifest version");
            version_seen = true;
        } else if (word == "classes") {
            if (!(ls >> m.classes) || m.classes < 1)
                throw DataError(where + ": classes must be a positive count");
        } else if (word == "class") {
            int id;
            std::string name;
            if (!(ls >> id >> name)) throw DataError(where + ": class line needs id and name");
            names.emplace_back(id, name);
        } else if (word == "smoothing") {
            if (!(ls >> m.smoothing)) throw DataError(where + ": smoothing needs a value");
        } else if (word == "up-axis") {
            std::string axis;
            ls >> axis;
            if (axis == "x")
                m.up_axis = 0;
            else if (axis == "y")
                m.up_axis = 1;
            else if (axis == "z")
                m.up_axis = 2;
            else
                throw DataError(where + ": up-axis must be x, y or z");
        } else if (word == "topology") {
            ls >> m.topology_file;
        } else if (word == "context") {
            int id;
            if (!(ls >> id)) throw DataError(where + ": context line needs a class id");
            if (static_cast<int>(m.class_context.size()) <= id)
                m.class_context.resize(static_cast<size_t>(id) + 1);
            reba::RebaContext& c = m.class_context[static_cast<size_t>(id)];
            std::string key;
            int value;
            while (ls >> key >> value) {
                if (key == "load")
                    c.load_band = value;
                else if (key == "shock")
                    c.shock_force = value != 0;
                else if (key == "coupling")
                    c.coupling = value;
                else if (key == "static")
                    c.static_posture = value != 0;
                else if (key == "repeated")
                    c.repeated_actions = value != 0;
                else if (key == "rapid")
                    c.rapid_changes = value != 0;
                else
                    throw DataError(where + ": unknown context key '" + key + "'");
            }
        } else if (word == "video") {
            Entry e;
            if (!(ls >> e.file >> e.split))
                throw DataError(where + ": video line needs a file and a split");
            if (e.split != "train" && e.split != "val")
                throw DataError(where + ": split must be train or val");
            m.videos.push_back(std::move(e));
        } else {
            throw DataError(where + ": unknown directive '" + word + "'");
        }
    }
    if (!version_seen) throw DataError(path + ": missing manifest-version line");
    if (m.classes < 1) throw DataError(path + ": missing classes line");
    if (m.topology_file.empty()) throw DataError(path + ": missing topology line");
    m.class_names.assign(static_cast<size_t>(m.classes), "");
    for (const auto& [id, name] : names) {
        if (id < 0 || id >= m.classes)
            throw DataError(path + ": class id " + std::to_string(id) + " out of range");
        m.class_names[static_cast<size_t>(id)] = name;
    }
    for (size_t i = 0; i < m.class_names.size(); ++i)
        if (m.class_names[i].empty()) m.class_names[i] = "class" + std::to_string(i);
    m.class_context.resize(static_cast<size_t>(m.classes));
    for (const auto& c : m.class_context) c.validate();
    return m;
}

void Manifest::save(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw DataError("manifest: cannot write " + path);
    out << "manifest-version 1\n";
    out << "classes " << classes << "\n";
    for (size_t i = 0; i < class_names.size(); ++i)
        out << "class " << i << " " << class_names[i] << "\n";
    out << "smoothing " << fmt_double(smoothing) << "\n";
    out << "up-axis " << (up_axis == 0 ? "x" : up_axis == 1 ? "y" : "z") << "\n";
    out << "topology " << topology_file << "\n";
    for (size_t i = 0; i < class_context.size(); ++i) {
        const auto& c = class_context[i];
        out << "context " << i << " load " << c.load_band << " shock " << (c.shock_force ? 1 : 0)
            << " coupling " << c.coupling << " static " << (c.static_posture ? 1 : 0)
            << " repeated " << (c.repeated_actions ? 1 : 0) << " rapid "
            << (c.rapid_changes ? 1 : 0) << "\n";
    }
    for (const auto& v : videos) out << "video " << v.file << " " << v.split << "\n";
}

std::string Manifest::resolve(const std::string& relative) const {
    if (relative.empty()) return relative;
    std::filesystem::path p(relative);
    if (p.is_absolute() || directory.empty()) return relative;
    return (std::filesystem::path(directory) / p).string();
}

Dataset load_dataset(const std::string& manifest_path) {
    Dataset ds;
    ds.manifest = Manifest::load(manifest_path);
    ds.topology = SkeletonTopology::load(ds.manifest.resolve(ds.manifest.topology_file));
    const uint64_t topo_hash = ds.topology.hash();
    const int joint_count = ds.topology.joint_count();

    std::vector<std::string> problems;
    for (size_t vi = 0; vi < ds.manifest.videos.size(); ++vi) {
        const auto& entry = ds.manifest.videos[vi];
        const std::string path = ds.manifest.resolve(entry.file);
        try {
            SkeletonSequence seq = load_sequence(path, joint_count);
            if (seq.topology_hash != topo_hash)
                throw DataError(path + ": topology hash " + fmt_hex(seq.topology_hash) +
                                " does not match manifest topology " + fmt_hex(topo_hash));
            if (!seq.has_reba()) {
                // Score through the rubric engine and cache next to the data.
                std::vector<reba::RebaContext> ctx(static_cast<size_t>(seq.frames));
                for (int64_t t = 0; t < seq.frames; ++t)
                    ctx[static_cast<size_t>(t)] =
                        ds.manifest.class_context[static_cast<size_t>(
                            seq.labels[static_cast<size_t>(t)])];
                const auto raw = reba::score_sequence(seq.joints, seq.frames, ds.topology, ctx,
                                                      ds.manifest.up_axis);
                seq.reba_raw = raw;
                seq.reba_smooth = reba::smooth_scores(raw, ds.manifest.smoothing);
                save_sequence(seq, path);
            }
            seq.validate(ds.manifest.classes, joint_count);
            if (entry.split == "train")
                ds.train_indices.push_back(ds.sequences.size());
            else
                ds.val_indices.push_back(ds.sequences.size());
            ds.sequences.push_back(std::move(seq));
        } catch (const std::exception& e) {
            problems.emplace_back(std::string("video ") + entry.file + ": " + e.what());
        }
    }
    if (!problems.empty()) {
        std::string msg = "dataset load failed with " + std::to_string(problems.size()) +
                          " problem(s):";
        for (const auto& p : problems) msg += "\n  - " + p;
        throw DataError(msg);
    }
    return ds;
}

TensorPtr PaddedBatch::video_joints(int64_t b) const {
    auto t = Tensor::zeros({t_max, joint_count, 3});
    const int64_t plane = joint_count * t_max;
    const double* base = joints.data() + b * 3 * plane;
    for (int64_t f = 0; f < t_max; ++f)
        for (int64_t j = 0; j < joint_count; ++j)
            for (int64_t c = 0; c < 3; ++c)
                t->values[static_cast<size_t>((f * joint_count + j) * 3 + c)] =
                    base[c * plane + j * t_max + f];
    return t;
}

std::vector<int> PaddedBatch::video_labels(int64_t b) const {
    return {labels.begin() + b * t_max, labels.begin() + (b + 1) * t_max};
}

std::vector<double> PaddedBatch::video_targets(int64_t b) const {
    return {targets.begin() + b * t_max, targets.begin() + (b + 1) * t_max};
}

ops::FrameMask PaddedBatch::video_mask(int64_t b) const {
    return ops::make_mask({mask.begin() + b * t_max, mask.begin() + (b + 1) * t_max});
}

SkeletonSequence PaddedBatch::unpad(int64_t b) const {
    SkeletonSequence seq;
    seq.video_id = video_ids[static_cast<size_t>(b)];
    seq.frames = lengths[static_cast<size_t>(b)];
    const int64_t plane = joint_count * t_max;
    const double* base = joints.data() + b * 3 * plane;
    seq.joints.resize(static_cast<size_t>(seq.frames * joint_count * 3));
    for (int64_t f = 0; f < seq.frames; ++f)
        for (int64_t j = 0; j < joint_count; ++j)
            for (int64_t c = 0; c < 3; ++c)
                seq.joints[static_cast<size_t>((f * joint_count + j) * 3 + c)] =
                    base[c * plane + j * t_max + f];
    seq.labels.assign(labels.begin() + b * t_max, labels.begin() + b * t_max + seq.frames);
    seq.reba_smooth.assign(targets.begin() + b * t_max, targets.begin() + b * t_max + seq.frames);
    seq.reba_raw.assign(seq.reba_smooth.size(), 1);
    for (size_t i = 0; i < seq.reba_smooth.size(); ++i)
        seq.reba_raw[i] = std::clamp(static_cast<int>(std::lround(seq.reba_smooth[i])), 1, 15);
    return seq;
}

PaddedBatch pad_and_mask(const std::vector<const SkeletonSequence*>& sequences, int64_t t_max,
                         int classes) {
    PaddedBatch batch;
    batch.batch = static_cast<int64_t>(sequences.size());
    batch.t_max = t_max;
    batch.ignore_label = classes;
    if (sequences.empty()) return batch;
    batch.joint_count = static_cast<int64_t>(sequences[0]->joints.size()) /
                        (sequences[0]->frames * 3);
    const int64_t plane = batch.joint_count * t_max;
    batch.joints.assign(static_cast<size_t>(batch.batch * 3 * plane), -1.0);
    batch.labels.assign(static_cast<size_t>(batch.batch * t_max), classes);
    batch.targets.assign(static_cast<size_t>(batch.batch * t_max), -1.0);
    batch.mask.assign(static_cast<size_t>(batch.batch * t_max), 0);
    for (int64_t b = 0; b < batch.batch; ++b) {
        const SkeletonSequence& seq = *sequences[static_cast<size_t>(b)];
        if (seq.frames > t_max)
            throw ContractViolation("pad_and_mask: sequence " + seq.video_id + " has " +
                                    std::to_string(seq.frames) + " frames > t_max " +
                                    std::to_string(t_max));
        batch.video_ids.push_back(seq.video_id);
        batch.lengths.push_back(seq.frames);
        double* base = batch.joints.data() + b * 3 * plane;
        for (int64_t f = 0; f < seq.frames; ++f) {
            for (int64_t j = 0; j < batch.joint_count; ++j)
                for (int64_t c = 0; c < 3; ++c)
                    base[c * plane + j * t_max + f] =
                        seq.joints[static_cast<size_t>((f * batch.joint_count + j) * 3 + c)];
            batch.labels[static_cast<size_t>(b * t_max + f)] = seq.labels[static_cast<size_t>(f)];
            if (!seq.reba_smooth.empty())
                batch.targets[static_cast<size_t>(b * t_max + f)] =
                    seq.reba_smooth[static_cast<size_t>(f)];
            batch.mask[static_cast<size_t>(b * t_max + f)] = 1;
        }
    }
    return batch;
}

namespace {

struct Vec3 {
    double x = 0, y = 0, z = 0;
    Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
    Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
    Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }
    double dot(const Vec3& o) const { return x * o.x + y * o.y + z * o.z; }
    Vec3 cross(const Vec3& o) const {
        return {y * o.z - z * o.y, z * o.x - x * o.z, x * o.y - y * o.x};
    }
};

Vec3 rotate_about(const Vec3& v, const Vec3& axis, double degrees) {
    const double a = degrees * kPi / 180.0;
    const double c = std::cos(a), s = std::sin(a);
    return v * c + axis.cross(v) * s + axis * (axis.dot(v) * (1.0 - c));
}

struct PostureParams {
    double trunk_flex = 0, neck_flex = 0, arm_elev = 0, elbow_flex = 0, knee_flex = 0, twist = 0;
};

PostureParams lerp(const PostureParams& a, const PostureParams& b, double w) {
    auto mix = [w](double u, double v) { return u + (v - u) * w; };
    return {mix(a.trunk_flex, b.trunk_flex), mix(a.neck_flex, b.neck_flex),
            mix(a.arm_elev, b.arm_elev),     mix(a.elbow_flex, b.elbow_flex),
            mix(a.knee_flex, b.knee_flex),   mix(a.twist, b.twist)};
}

PostureParams regime_of(int class_id) {
    static const PostureParams base[8] = {
        {0, 0, 5, 10, 0, 0},       // upright
        {30, 15, 40, 30, 5, 0},    // moderate bend and reach
        {70, 30, 85, 45, 10, 0},   // deep forward bend
        {10, -15, 130, 70, 5, 0},  // overhead reach, neck extended
        {35, 20, 52, 35, 8, 0},    // like regime 1 but heavier handling
        {25, 10, 32, 90, 75, 0},   // squat lift
        {45, 20, 62, 50, 15, 25},  // twisted reach
        {2, 5, 80, 20, 0, 0},      // carry at chest height
    };
    PostureParams p = base[class_id % 8];
    const int octave = class_id / 8;
    p.trunk_flex += 6.0 * octave;
    p.arm_elev += 9.0 * octave;
    return p;
}

// Fixed bone lengths (meters); scaled uniformly per subject, which leaves
// every joint angle and therefore the REBA target unchanged.
struct Bones {
    double trunk = 0.55, head = 0.25, shoulder_w = 0.18, shoulder_drop = 0.05;
    double upper_arm = 0.30, forearm = 0.26;
    double hip_w = 0.11, hip_drop = 0.06, thigh = 0.44, shank = 0.43;
};

void build_pose(const PostureParams& p, double scale, const Vec3& offset, double* out15x3) {
    const Bones bone;
    const Vec3 up{0, 1, 0}, right{1, 0, 0}, down{0, -1, 0};
    const Vec3 trunk_dir = rotate_about(up, right, p.trunk_flex);
    const Vec3 r_sho = rotate_about(right, trunk_dir, p.twist);

    const Vec3 pelvis = offset;
    const Vec3 neck = pelvis + trunk_dir * (bone.trunk * scale);
    const Vec3 head_dir = rotate_about(trunk_dir, r_sho, p.neck_flex);
    const Vec3 head = neck + head_dir * (bone.head * scale);

    const Vec3 sho_base = neck - trunk_dir * (bone.shoulder_drop * scale);
    const Vec3 sho_l = sho_base - r_sho * (bone.shoulder_w * scale);
    const Vec3 sho_r = sho_base + r_sho * (bone.shoulder_w * scale);
    const Vec3 arm_dir = rotate_about(trunk_dir * -1.0, r_sho, p.arm_elev);
    const Vec3 fore_dir = rotate_about(arm_dir, r_sho, p.elbow_flex);
    const Vec3 elb_l = sho_l + arm_dir * (bone.upper_arm * scale);
    const Vec3 elb_r = sho_r + arm_dir * (bone.upper_arm * scale);
    const Vec3 wri_l = elb_l + fore_dir * (bone.forearm * scale);
    const Vec3 wri_r = elb_r + fore_dir * (bone.forearm * scale);

    const Vec3 hip_base = pelvis - up * (bone.hip_drop * scale);
    const Vec3 hip_l = hip_base - right * (bone.hip_w * scale);
    const Vec3 hip_r = hip_base + right * (bone.hip_w * scale);
    const double hip_share = 0.55 * p.knee_flex;
    const Vec3 thigh_dir = rotate_about(down, right, -hip_share);
    const Vec3 shank_dir = rotate_about(down, right, -(hip_share - p.knee_flex));
    const Vec3 knee_l = hip_l + thigh_dir * (bone.thigh * scale);
    const Vec3 knee_r = hip_r + thigh_dir * (bone.thigh * scale);
    const Vec3 ank_l = knee_l + shank_dir * (bone.shank * scale);
    const Vec3 ank_r = knee_r + shank_dir * (bone.shank * scale);

    // canonical15 joint order
    const Vec3 joints[15] = {pelvis, neck,  head,  sho_l,  sho_r,  elb_l,  elb_r, wri_l,
                             wri_r,  hip_l, hip_r, knee_l, knee_r, ank_l, ank_r};
    for (int j = 0; j < 15; ++j) {
        out15x3[j * 3 + 0] = joints[j].x;
        out15x3[j * 3 + 1] = joints[j].y;
        out15x3[j * 3 + 2] = joints[j].z;
    }
}

}  // namespace

reba::RebaContext synthetic_class_context(int class_id) {
    reba::RebaContext c;
    if (class_id == 0) return c;  // neutral regime stays at minimum risk
    switch (class_id % 8) {
        case 1: c.load_band = 0; break;
        case 2: c.load_band = 1; break;
        case 3: c.load_band = 0; c.coupling = 1; break;
        case 4: c.load_band = 2; break;  // the heavy twin of regime 1
        case 5: c.load_band = 2; c.coupling = 1; break;
        case 6: c.load_band = 1; c.coupling = 2; break;
        case 7: c.load_band = 1; break;
        default: break;
    }
    if (class_id >= 8) c.coupling = std::min(3, c.coupling + 1);
    return c;
}

std::vector<SkeletonSequence> generate_synthetic(const SynthConfig& config, uint64_t seed,
                                                 const SkeletonTopology& topology,
                                                 std::vector<reba::RebaContext>* class_context) {
    if (config.classes < 1 || config.videos < 1)
        throw ContractViolation("generate_synthetic: need at least one class and one video");
    if (topology.joint_count() != 15)
        throw ContractViolation("generate_synthetic: generator builds 15-joint skeletons");
    const int segments = std::max(config.segments_per_video, config.classes);

    std::vector<reba::RebaContext> ctx;
    for (int k = 0; k < config.classes; ++k) ctx.push_back(synthetic_class_context(k));
    if (class_context) *class_context = ctx;

    Rng rng(seed);
    std::vector<SkeletonSequence> out;
    for (int v = 0; v < config.videos; ++v) {
        SkeletonSequence seq;
        char id[16];
        std::snprintf(id, sizeof id, "vid%03d", v);
        seq.video_id = id;
        seq.frame_rate = config.frame_rate;
        seq.topology_hash = topology.hash();
        const int64_t frames =
            config.t_min >= config.t_max ? config.t_min
                                         : rng.uniform_int(config.t_min, config.t_max);
        seq.frames = frames;

        const double scale = rng.uniform(0.95, 1.05);
        const Vec3 offset{rng.uniform(-0.2, 0.2), rng.uniform(-0.05, 0.05),
                          rng.uniform(-0.2, 0.2)};
        const double sway_amp = rng.uniform(1.0, 2.0);
        const double sway_period = rng.uniform(40.0, 80.0);
        const double sway_phase = rng.uniform(0.0, 2.0 * kPi);

        // First |classes| segments cover every class, the rest are free.
        std::vector<int> seg_class(static_cast<size_t>(segments));
        for (int s = 0; s < config.classes; ++s) seg_class[static_cast<size_t>(s)] = s;
        for (int s = config.classes - 1; s > 0; --s)
            std::swap(seg_class[static_cast<size_t>(s)],
                      seg_class[static_cast<size_t>(rng.uniform_int(0, s))]);
        for (int s = config.classes; s < segments; ++s) {
            int pick = static_cast<int>(rng.uniform_int(0, config.classes - 1));
            if (config.classes > 1 && pick == seg_class[static_cast<size_t>(s - 1)])
                pick = (pick + 1) % config.classes;
            seg_class[static_cast<size_t>(s)] = pick;
        }

        std::vector<double> weights(static_cast<size_t>(segments));
        double weight_total = 0.0;
        for (auto& w : weights) {
            w = 0.5 + rng.uniform();
            weight_total += w;
        }
        std::vector<int64_t> seg_len(static_cast<size_t>(segments));
        int64_t assigned = 0;
        for (int s = 0; s < segments; ++s) {
            int64_t len = std::max<int64_t>(
                6, static_cast<int64_t>(std::floor(frames * weights[static_cast<size_t>(s)] /
                                                   weight_total)));
            if (s == segments - 1) len = frames - assigned;
            len = std::min(len, frames - assigned - 6 * (segments - 1 - s));
            len = std::max<int64_t>(len, 1);
            seg_len[static_cast<size_t>(s)] = len;
            assigned += len;
        }
        seg_len[static_cast<size_t>(segments - 1)] += frames - assigned;

        seq.joints.resize(static_cast<size_t>(frames) * 15 * 3);
        seq.labels.resize(static_cast<size_t>(frames));
        int64_t t = 0;
        for (int s = 0; s < segments; ++s) {
            const PostureParams current = regime_of(seg_class[static_cast<size_t>(s)]);
            const PostureParams previous =
                s == 0 ? current : regime_of(seg_class[static_cast<size_t>(s - 1)]);
            const int64_t len = seg_len[static_cast<size_t>(s)];
            const int64_t window = s == 0 ? 0 : std::min<int64_t>(4, len / 5);
            for (int64_t f = 0; f < len; ++f, ++t) {
                double blend = 1.0;
                if (f < window)
                    blend = 0.5 - 0.5 * std::cos(kPi * static_cast<double>(f + 1) /
                                                 static_cast<double>(window));
                PostureParams p = lerp(previous, current, blend);
                const double sway =
                    sway_amp * std::sin(2.0 * kPi * static_cast<double>(t) / sway_period +
                                        sway_phase);
                p.trunk_flex += sway;
                p.arm_elev += 0.8 * sway;
                build_pose(p, scale, offset, seq.joints.data() + t * 15 * 3);
                seq.labels[static_cast<size_t>(t)] = seg_class[static_cast<size_t>(s)];
            }
        }
        if (config.noise > 0.0)
            for (auto& value : seq.joints) value += config.noise * rng.normal();

        std::vector<reba::RebaContext> frame_ctx(static_cast<size_t>(frames));
        for (int64_t fidx = 0; fidx < frames; ++fidx)
            frame_ctx[static_cast<size_t>(fidx)] =
                ctx[static_cast<size_t>(seq.labels[static_cast<size_t>(fidx)])];
        seq.reba_raw = reba::score_sequence(seq.joints, frames, topology, frame_ctx);
        seq.reba_smooth = reba::smooth_scores(seq.reba_raw, config.smoothing);
        out.push_back(std::move(seq));
    }
    return out;
}

std::string write_synthetic_dataset(const SynthConfig& config, uint64_t seed,
                                    const std::string& directory) {
    namespace fs = std::filesystem;
    fs::create_directories(directory);
    const auto topology = SkeletonTopology::canonical15();
    topology.save((fs::path(directory) / "topology.txt").string());

    std::vector<reba::RebaContext> ctx;
    auto sequences = generate_synthetic(config, seed, topology, &ctx);

    Manifest m;
    m.classes = config.classes;
    for (int k = 0; k < config.classes; ++k) m.class_names.push_back("regime" + std::to_string(k));
    m.smoothing = config.smoothing;
    m.up_axis = 1;
    m.topology_file = "topology.txt";
    m.class_context = ctx;
    m.directory = directory;

    const int n_val = std::clamp(
        static_cast<int>(std::lround(config.val_fraction * config.videos)), 0, config.videos - 1);
    // Seeded split, independent of the sequence stream.
    Rng split_rng(seed ^ 0x9e3779b97f4a7c15ull);
    std::vector<int> order(static_cast<size_t>(config.videos));
    std::iota(order.begin(), order.end(), 0);
    for (int i = config.videos - 1; i > 0; --i)
        std::swap(order[static_cast<size_t>(i)],
                  order[static_cast<size_t>(split_rng.uniform_int(0, i))]);
    std::vector<uint8_t> is_val(static_cast<size_t>(config.videos), 0);
    for (int i = 0; i < n_val; ++i) is_val[static_cast<size_t>(order[static_cast<size_t>(i)])] = 1;

    for (int v = 0; v < config.videos; ++v) {
        const std::string file = sequences[static_cast<size_t>(v)].video_id + ".csv";
        save_sequence(sequences[static_cast<size_t>(v)], (fs::path(directory) / file).string());
        m.videos.push_back({file, is_val[static_cast<size_t>(v)] ? "val" : "train"});
    }
    const std::string manifest_path = (fs::path(directory) / "manifest.txt").string();
    m.save(manifest_path);
    return manifest_path;
}

}  // namespace ergoseg::data
