#pragma once
// Dataset ingestion and synthesis: per-video CSV files, the manifest that
// ties a corpus together, padding/masking into batches, and the synthetic
// sequence generator used for verification at desk scale.

#include <cstdint>
#include <string>
#include <vector>

#include "ergoseg/ops.hpp"
#include "ergoseg/reba.hpp"
#include "ergoseg/tensor.hpp"
#include "ergoseg/topology.hpp"

namespace ergoseg::data {

struct SkeletonSequence {
    std::string video_id;
    int64_t frames = 0;
    double frame_rate = 30.0;
    uint64_t topology_hash = 0;
    std::vector<double> joints;       // frames x joints x 3, row-major
    std::vector<int> labels;          // frames
    std::vector<int> reba_raw;        // frames, 1..15; empty until scored
    std::vector<double> reba_smooth;  // frames; empty until scored

    bool has_reba() const { return !reba_raw.empty(); }
    void validate(int classes, int joint_count) const;
};

void save_sequence(const SkeletonSequence& sequence, const std::string& path);
SkeletonSequence load_sequence(const std::string& path, int joint_count);

struct Manifest {
    int classes = 0;
    std::vector<std::string> class_names;
    double smoothing = 1.0;
    int up_axis = 1;
    std::string topology_file;
    std::vector<reba::RebaContext> class_context;  // one per class
    struct Entry {
        std::string file;
        std::string split;  // "train" or "val"
    };
    std::vector<Entry> videos;
    std::string directory;  // set on load; file references resolve against it

    static Manifest load(const std::string& path);
    void save(const std::string& path) const;
    std::string resolve(const std::string& relative) const;
};

struct Dataset {
    Manifest manifest;
    SkeletonTopology topology;
    std::vector<SkeletonSequence> sequences;
    std::vector<size_t> train_indices;
    std::vector<size_t> val_indices;
};

// Loads and validates every referenced video. Sequences without cached
// REBA columns are scored through the rubric engine and written back, with
// the manifest smoothing parameter. All per-video problems are collected
// into one itemized error.
Dataset load_dataset(const std::string& manifest_path);

struct PaddedBatch {
    int64_t batch = 0;
    int64_t t_max = 0;
    int64_t joint_count = 0;
    int ignore_label = 0;  // one past the last real class
    std::vector<std::string> video_ids;
    std::vector<int64_t> lengths;
    std::vector<double> joints;   // batch x 3 x joints x t_max, padded with -1
    std::vector<int> labels;      // batch x t_max, padded with ignore_label
    std::vector<double> targets;  // batch x t_max, padded with -1
    std::vector<uint8_t> mask;    // batch x t_max, 1 on real frames

    TensorPtr video_joints(int64_t b) const;  // (t_max, joints, 3)
    std::vector<int> video_labels(int64_t b) const;
    std::vector<double> video_targets(int64_t b) const;
    ops::FrameMask video_mask(int64_t b) const;
    SkeletonSequence unpad(int64_t b) const;
};

PaddedBatch pad_and_mask(const std::vector<const SkeletonSequence*>& sequences, int64_t t_max,
                         int classes);

struct SynthConfig {
    int classes = 5;
    int videos = 8;
    int64_t t_min = 120;
    int64_t t_max = 200;
    int segments_per_video = 8;
    double noise = 0.01;       // coordinate noise, meters
    double smoothing = 1.0;
    double frame_rate = 30.0;
    double val_fraction = 0.25;
};

// Deterministic in (config, seed). Every class appears in every video;
// class ids map to distinct posture regimes and REBA targets are computed
// by the rubric engine with per-class load/coupling context, so targets
// are class-correlated by construction.
std::vector<SkeletonSequence> generate_synthetic(const SynthConfig& config, uint64_t seed,
                                                 const SkeletonTopology& topology,
                                                 std::vector<reba::RebaContext>* class_context);

// Per-class context used by the generator (class 0 is always neutral).
reba::RebaContext synthetic_class_context(int class_id);

// Writes topology, per-video files and the manifest into directory.
// Returns the manifest path.
std::string write_synthetic_dataset(const SynthConfig& config, uint64_t seed,
                                    const std::string& directory);

}  // namespace ergoseg::data
