#include "ergoseg/topology.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <fstream>
#include <sstream>

#include "ergoseg/tensor.hpp"

namespace ergoseg {

int SkeletonTopology::index_of(const std::string& name) const {
    for (size_t i = 0; i < joint_names.size(); ++i)
        if (joint_names[i] == name) return static_cast<int>(i);
    return -1;
}

void SkeletonTopology::validate() const {
    const int n = joint_count();
    if (n < 1) throw ContractViolation("topology: no joints");
    if (root < 0 || root >= n) throw ContractViolation("topology: root index out of range");
    if (static_cast<int>(edges.size()) != n - 1)
        throw ContractViolation("topology: tree over " + std::to_string(n) + " joints needs " +
                                std::to_string(n - 1) + " edges, got " +
                                std::to_string(edges.size()));
    for (const auto& [a, b] : edges) {
        if (a < 0 || a >= n || b < 0 || b >= n || a == b)
            throw ContractViolation("topology: bad edge " + std::to_string(a) + "-" +
                                    std::to_string(b));
    }
    const auto hops = hops_to_root();
    for (int i = 0; i < n; ++i)
        if (hops[static_cast<size_t>(i)] < 0)
            throw ContractViolation("topology: joint " + joint_names[static_cast<size_t>(i)] +
                                    " is disconnected from the root");
}

std::vector<int> SkeletonTopology::hops_to_root() const {
    const int n = joint_count();
    std::vector<std::vector<int>> nbr(static_cast<size_t>(n));
    for (const auto& [a, b] : edges) {
        nbr[static_cast<size_t>(a)].push_back(b);
        nbr[static_cast<size_t>(b)].push_back(a);
    }
    std::vector<int> hops(static_cast<size_t>(n), -1);
    std::deque<int> queue{root};
    hops[static_cast<size_t>(root)] = 0;
    while (!queue.empty()) {
        const int v = queue.front();
        queue.pop_front();
        for (int w : nbr[static_cast<size_t>(v)]) {
            if (hops[static_cast<size_t>(w)] >= 0) continue;
            hops[static_cast<size_t>(w)] = hops[static_cast<size_t>(v)] + 1;
            queue.push_back(w);
        }
    }
    return hops;
}

std::string SkeletonTopology::canonical_text() const {
    std::vector<std::pair<int, int>> sorted_edges;
    sorted_edges.reserve(edges.size());
    for (auto [a, b] : edges) sorted_edges.emplace_back(std::min(a, b), std::max(a, b));
    std::sort(sorted_edges.begin(), sorted_edges.end());
    std::ostringstream os;
    os << joint_count() << ";";
    for (const auto& name : joint_names) os << name << ",";
    os << ";" << root << ";";
    for (const auto& [a, b] : sorted_edges) os << a << "-" << b << ",";
    return os.str();
}

uint64_t SkeletonTopology::hash() const {
    const std::string text = canonical_text();
    uint64_t h = 14695981039346656037ull;
    for (unsigned char ch : text) {
        h ^= ch;
        h *= 1099511628211ull;
    }
    return h;
}

SkeletonTopology SkeletonTopology::canonical15() {
    SkeletonTopology t;
    t.joint_names = {"pelvis",  "neck",    "head",   "shoulder_l", "shoulder_r",
                     "elbow_l", "elbow_r", "wrist_l", "wrist_r",    "hip_l",
                     "hip_r",   "knee_l",  "knee_r", "ankle_l",    "ankle_r"};
    auto e = [&](const char* a, const char* b) {
        t.edges.emplace_back(t.index_of(a), t.index_of(b));
    };
    e("pelvis", "neck");
    e("neck", "head");
    e("neck", "shoulder_l");
    e("neck", "shoulder_r");
    e("shoulder_l", "elbow_l");
    e("elbow_l", "wrist_l");
    e("shoulder_r", "elbow_r");
    e("elbow_r", "wrist_r");
    e("pelvis", "hip_l");
    e("pelvis", "hip_r");
    e("hip_l", "knee_l");
    e("knee_l", "ankle_l");
    e("hip_r", "knee_r");
    e("knee_r", "ankle_r");
    t.root = t.index_of("pelvis");
    t.validate();
    return t;
}

SkeletonTopology SkeletonTopology::parse(const std::string& text, const std::string& origin) {
    SkeletonTopology t;
    std::istringstream is(text);
    std::string line;
    int line_no = 0;
    std::string root_name;
    std::vector<std::pair<std::string, std::string>> edge_names;
    bool version_seen = false;
    while (std::getline(is, line)) {
        ++line_no;
        const auto hash_pos = line.find('#');
        if (hash_pos != std::string::npos) line = line.substr(0, hash_pos);
        std::istringstream ls(line);
        std::string word;
        if (!(ls >> word)) continue;
        const std::string where = origin + ":" + std::to_string(line_no);
        if (word == "topology-version") {
            int v = 0;
            if (!(ls >> v) || v != 1) throw DataError(where + ": unsupported topology version");
            version_seen = true;
        } else if (word == "joint") {
            std::string name;
            if (!(ls >> name)) throw DataError(where + ": joint line needs a name");
            if (t.index_of(name) >= 0) throw DataError(where + ": duplicate joint " + name);
            t.joint_names.push_back(name);
        } else if (word == "root") {
            if (!(ls >> root_name)) throw DataError(where + ": root line needs a name");
        } else if (word == "edge") {
            std::string a, b;
            if (!(ls >> a >> b)) throw DataError(where + ": edge line needs two names");
            edge_names.emplace_back(a, b);
        } else {
            throw DataError(where + ": unknown directive '" + word + "'");
        }
    }
    if (!version_seen) throw DataError(origin + ": missing topology-version line");
    if (root_name.empty()) throw DataError(origin + ": missing root line");
    t.root = t.index_of(root_name);
    if (t.root < 0) throw DataError(origin + ": root joint '" + root_name + "' not declared");
    for (const auto& [a, b] : edge_names) {
        const int ia = t.index_of(a), ib = t.index_of(b);
        if (ia < 0 || ib < 0)
            throw DataError(origin + ": edge references unknown joint '" + (ia < 0 ? a : b) + "'");
        t.edges.emplace_back(ia, ib);
    }
    t.validate();
    return t;
}

SkeletonTopology SkeletonTopology::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("topology: cannot open " + path);
    std::ostringstream os;
    os << in.rdbuf();
    return parse(os.str(), path);
}

void SkeletonTopology::save(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw DataError("topology: cannot write " + path);
    out << "topology-version 1\n";
    for (const auto& name : joint_names) out << "joint " << name << "\n";
    out << "root " << joint_names[static_cast<size_t>(root)] << "\n";
    for (const auto& [a, b] : edges)
        out << "edge " << joint_names[static_cast<size_t>(a)] << " "
            << joint_names[static_cast<size_t>(b)] << "\n";
}

std::vector<double> normalize_adjacency(const std::vector<double>& a, int n) {
    if (static_cast<int>(a.size()) != n * n)
        throw ContractViolation("normalize_adjacency: matrix is not N x N");
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) {
            const double v = a[static_cast<size_t>(i * n + j)];
            if (v != 0.0 && v != 1.0)
                throw ContractViolation("normalize_adjacency: non-binary entry");
            if (v != a[static_cast<size_t>(j * n + i)])
                throw ContractViolation("normalize_adjacency: asymmetric input");
            if (i == j && v != 0.0)
                throw ContractViolation("normalize_adjacency: nonzero diagonal");
        }
    }
    std::vector<double> hat(a);
    for (int i = 0; i < n; ++i) hat[static_cast<size_t>(i * n + i)] = 1.0;
    std::vector<double> inv_sqrt_deg(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) {
        double d = 0.0;
        for (int j = 0; j < n; ++j) d += hat[static_cast<size_t>(i * n + j)];
        inv_sqrt_deg[static_cast<size_t>(i)] = 1.0 / std::sqrt(d);  // d >= 1 via self-loop
    }
    std::vector<double> out(static_cast<size_t>(n) * static_cast<size_t>(n));
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            out[static_cast<size_t>(i * n + j)] = hat[static_cast<size_t>(i * n + j)] *
                                                  inv_sqrt_deg[static_cast<size_t>(i)] *
                                                  inv_sqrt_deg[static_cast<size_t>(j)];
    return out;
}

std::array<std::vector<double>, 3> partition_adjacency(const SkeletonTopology& topology) {
    topology.validate();
    const int n = topology.joint_count();
    const auto hops = topology.hops_to_root();
    std::array<std::vector<double>, 3> parts;
    for (auto& p : parts) p.assign(static_cast<size_t>(n) * static_cast<size_t>(n), 0.0);
    for (int i = 0; i < n; ++i) parts[0][static_cast<size_t>(i * n + i)] = 1.0;  // self
    for (const auto& [a, b] : topology.edges) {
        // Entry (i, j): joint i gathers from neighbor j.
        const int closer = hops[static_cast<size_t>(a)] < hops[static_cast<size_t>(b)] ? a : b;
        const int farther = closer == a ? b : a;
        parts[1][static_cast<size_t>(farther * n + closer)] = 1.0;  // toward root
        parts[2][static_cast<size_t>(closer * n + farther)] = 1.0;  // away from root
    }
    return parts;
}

std::vector<double> normalize_partition(const std::vector<double>& part, int n) {
    if (static_cast<int>(part.size()) != n * n)
        throw ContractViolation("normalize_partition: matrix is not N x N");
    // Joint degree on the partition's undirected support: each incident
    // support edge counts once, self-loops count once.
    std::vector<double> degree(static_cast<size_t>(n), 0.0);
    for (int i = 0; i < n; ++i) {
        for (int j = i; j < n; ++j) {
            const bool touched = part[static_cast<size_t>(i * n + j)] != 0.0 ||
                                 (j != i && part[static_cast<size_t>(j * n + i)] != 0.0);
            if (!touched) continue;
            degree[static_cast<size_t>(i)] += 1.0;
            if (j != i) degree[static_cast<size_t>(j)] += 1.0;
        }
    }
    std::vector<double> out(static_cast<size_t>(n) * static_cast<size_t>(n), 0.0);
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) {
            const double v = part[static_cast<size_t>(i * n + j)];
            if (v == 0.0) continue;
            out[static_cast<size_t>(i * n + j)] =
                v / std::sqrt(degree[static_cast<size_t>(i)] * degree[static_cast<size_t>(j)]);
        }
    }
    return out;
}

AdjacencySet AdjacencySet::build(const SkeletonTopology& topology) {
    topology.validate();
    AdjacencySet set;
    set.n = topology.joint_count();
    const int n = set.n;
    set.adjacency.assign(static_cast<size_t>(n) * static_cast<size_t>(n), 0.0);
    for (const auto& [a, b] : topology.edges) {
        set.adjacency[static_cast<size_t>(a * n + b)] = 1.0;
        set.adjacency[static_cast<size_t>(b * n + a)] = 1.0;
    }
    set.adjacency_hat = set.adjacency;
    for (int i = 0; i < n; ++i) set.adjacency_hat[static_cast<size_t>(i * n + i)] = 1.0;
    set.degree_hat.assign(static_cast<size_t>(n), 0.0);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            set.degree_hat[static_cast<size_t>(i)] += set.adjacency_hat[static_cast<size_t>(i * n + j)];
    set.partitions = partition_adjacency(topology);
    for (int a = 0; a < 3; ++a)
        set.normalized[static_cast<size_t>(a)] = std::make_shared<const std::vector<double>>(
            normalize_partition(set.partitions[static_cast<size_t>(a)], n));
    return set;
}

}  // namespace ergoseg
