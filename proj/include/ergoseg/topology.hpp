#pragma once
// Skeleton topology, degree-normalized adjacency and the 3-way spatial
// partition (self / toward-root / away-from-root). Immutable once built.

#include <array>
#include <cstdint>
#include <memory>
#include <string>
#include <utility>
#include <vector>

namespace ergoseg {

struct SkeletonTopology {
    std::vector<std::string> joint_names;
    std::vector<std::pair<int, int>> edges;  // undirected bones
    int root = 0;

    int joint_count() const { return static_cast<int>(joint_names.size()); }
    int index_of(const std::string& name) const;

    // Connected tree over N joints with N-1 edges, root in range.
    void validate() const;

    // Hop distance from every joint to the root (breadth-first).
    std::vector<int> hops_to_root() const;

    // FNV-1a over the canonical serialization; checkpoints and dataset
    // files carry this to detect topology mismatches.
    uint64_t hash() const;

    std::string canonical_text() const;

    // 15-joint layout used throughout: pelvis(root), neck, head,
    // L/R shoulder, L/R elbow, L/R wrist, L/R hip, L/R knee, L/R ankle.
    static SkeletonTopology canonical15();

    static SkeletonTopology load(const std::string& path);
    void save(const std::string& path) const;
    static SkeletonTopology parse(const std::string& text, const std::string& origin);
};

// D-hat^{-1/2} (A + I) D-hat^{-1/2} for a symmetric, zero-diagonal, binary A.
std::vector<double> normalize_adjacency(const std::vector<double>& a, int n);

// Self / toward-root / away-from-root split; the three matrices sum to A+I.
std::array<std::vector<double>, 3> partition_adjacency(const SkeletonTopology& topology);

// Per-partition symmetric normalization. Degrees are taken on the
// undirected support of the partition so that every touched joint has a
// nonzero degree; joints that the partition does not touch produce zero
// rows (never NaN).
std::vector<double> normalize_partition(const std::vector<double>& part, int n);

struct AdjacencySet {
    int n = 0;
    std::vector<double> adjacency;      // A
    std::vector<double> adjacency_hat;  // A + I
    std::vector<double> degree_hat;     // diagonal of D-hat
    std::array<std::vector<double>, 3> partitions;
    std::array<std::shared_ptr<const std::vector<double>>, 3> normalized;

    static AdjacencySet build(const SkeletonTopology& topology);
};

}  // namespace ergoseg
