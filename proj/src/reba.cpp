#include "ergoseg/reba.hpp"

#include <algorithm>
#include <array>
#include <cmath>

namespace ergoseg::reba {

namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr double kDegenerateEps = 1e-6;

double deg(double rad) { return rad * 180.0 / kPi; }

// Table A: [neck-1][trunk-1][legs-1]
constexpr int kTableA[3][5][4] = {
    {{1, 2, 3, 4}, {2, 3, 4, 5}, {2, 4, 5, 6}, {3, 5, 6, 7}, {4, 6, 7, 8}},
    {{1, 2, 3, 4}, {3, 4, 5, 6}, {4, 5, 6, 7}, {5, 6, 7, 8}, {6, 7, 8, 9}},
    {{3, 3, 5, 6}, {4, 5, 6, 7}, {5, 6, 7, 8}, {6, 7, 8, 9}, {7, 8, 9, 9}},
};

// Table B: [lower-1][upper-1][wrist-1]
constexpr int kTableB[2][6][3] = {
    {{1, 2, 2}, {1, 2, 3}, {3, 4, 5}, {4, 5, 5}, {6, 7, 8}, {7, 8, 8}},
    {{1, 2, 3}, {2, 3, 4}, {4, 5, 5}, {5, 6, 7}, {7, 8, 8}, {8, 9, 9}},
};

// Table C: [scoreA-1][scoreB-1]
constexpr int kTableC[12][12] = {
    {1, 1, 1, 2, 3, 3, 4, 5, 6, 7, 7, 7},
    {1, 2, 2, 3, 4, 4, 5, 6, 6, 7, 7, 8},
    {2, 3, 3, 3, 4, 5, 6, 7, 7, 8, 8, 8},
    {3, 4, 4, 4, 5, 6, 7, 8, 8, 9, 9, 9},
    {4, 4, 4, 5, 6, 7, 8, 8, 9, 9, 9, 9},
    {6, 6, 6, 7, 8, 8, 9, 9, 10, 10, 10, 10},
    {7, 7, 7, 8, 9, 9, 9, 10, 10, 11, 11, 11},
    {8, 8, 8, 9, 10, 10, 10, 10, 10, 11, 11, 11},
    {9, 9, 9, 10, 10, 10, 11, 11, 11, 12, 12, 12},
    {10, 10, 10, 11, 11, 11, 11, 12, 12, 12, 12, 12},
    {11, 11, 11, 11, 12, 12, 12, 12, 12, 12, 12, 12},
    {12, 12, 12, 12, 12, 12, 12, 12, 12, 12, 12, 12},
};

void check_range(int value, int lo, int hi, const char* what) {
    if (value < lo || value > hi)
        throw ContractViolation(std::string(what) + " score " + std::to_string(value) +
                                " outside [" + std::to_string(lo) + "," + std::to_string(hi) + "]");
}

struct Vec3 {
    double x = 0, y = 0, z = 0;
    Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
    Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
    Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }
    double dot(const Vec3& o) const { return x * o.x + y * o.y + z * o.z; }
    Vec3 cross(const Vec3& o) const {
        return {y * o.z - z * o.y, z * o.x - x * o.z, x * o.y - y * o.x};
    }
    double norm() const { return std::sqrt(dot(*this)); }
    Vec3 normalized() const {
        const double n = norm();
        return n > 0 ? Vec3{x / n, y / n, z / n} : Vec3{};
    }
};

double angle_between(const Vec3& a, const Vec3& b) {
    const double d = a.normalized().dot(b.normalized());
    return deg(std::acos(std::clamp(d, -1.0, 1.0)));
}

}  // namespace

void JointAngles::validate() const {
    const double all[] = {trunk_flexion_deg,     neck_flexion_deg,  knee_flexion_deg,
                          upper_arm_elevation_deg, lower_arm_flexion_deg, wrist_flexion_deg};
    for (double a : all)
        if (!std::isfinite(a) || a < -180.0 || a > 180.0)
            throw ContractViolation("JointAngles: angle " + std::to_string(a) +
                                    " outside [-180, 180]");
}

void RebaContext::validate() const {
    if (load_band < 0 || load_band > 2)
        throw ContractViolation("RebaContext: load band must be 0..2");
    if (coupling < 0 || coupling > 3)
        throw ContractViolation("RebaContext: coupling must be 0..3");
}

int trunk_score(double flexion_deg, bool twisted_or_side_bent) {
    const double f = flexion_deg;
    int score;
    if (std::fabs(f) <= 5.0)
        score = 1;  // upright
    else if (f >= -20.0 && f <= 20.0)
        score = 2;
    else if (f > 60.0)
        score = 4;
    else
        score = 3;  // 20..60 flexion or beyond 20 extension
    return score + (twisted_or_side_bent ? 1 : 0);
}

int neck_score(double flexion_deg, bool twisted_or_side_bent) {
    const int score = (flexion_deg >= 0.0 && flexion_deg <= 20.0) ? 1 : 2;
    return score + (twisted_or_side_bent ? 1 : 0);
}

int legs_score(bool bilateral_support, double knee_flexion_deg) {
    int score = bilateral_support ? 1 : 2;
    if (knee_flexion_deg > 60.0)
        score += 2;
    else if (knee_flexion_deg >= 30.0)
        score += 1;
    return std::min(score, 4);
}

int upper_arm_score(double elevation_deg, bool shoulder_raised, bool abducted) {
    const double e = elevation_deg;
    int score;
    if (e >= -20.0 && e <= 20.0)
        score = 1;
    else if (e <= 45.0)
        score = 2;  // 20..45 flexion or >20 extension
    else if (e <= 90.0)
        score = 3;
    else
        score = 4;
    score += (shoulder_raised ? 1 : 0) + (abducted ? 1 : 0);
    return std::min(score, 6);
}

int lower_arm_score(double flexion_deg) {
    return (flexion_deg >= 60.0 && flexion_deg <= 100.0) ? 1 : 2;
}

int wrist_score(double flexion_deg, bool deviated) {
    const int score = std::fabs(flexion_deg) <= 15.0 ? 1 : 2;
    return score + (deviated ? 1 : 0);
}

int table_a(int trunk, int neck, int legs) {
    check_range(trunk, 1, 5, "trunk");
    check_range(neck, 1, 3, "neck");
    check_range(legs, 1, 4, "legs");
    return kTableA[neck - 1][trunk - 1][legs - 1];
}

int table_b(int upper_arm, int lower_arm, int wrist) {
    check_range(upper_arm, 1, 6, "upper arm");
    check_range(lower_arm, 1, 2, "lower arm");
    check_range(wrist, 1, 3, "wrist");
    return kTableB[lower_arm - 1][upper_arm - 1][wrist - 1];
}

int table_c(int score_a, int score_b) {
    check_range(score_a, 1, 12, "table A side");
    check_range(score_b, 1, 12, "table B side");
    return kTableC[score_a - 1][score_b - 1];
}

int combine(int trunk, int neck, int legs, int upper_arm, int lower_arm, int wrist,
            const RebaContext& context) {
    context.validate();
    const int score_a = std::min(table_a(trunk, neck, legs) + context.load_points(), 12);
    const int score_b = std::min(table_b(upper_arm, lower_arm, wrist) + context.coupling, 12);
    const int score_c = table_c(score_a, score_b);
    return std::clamp(score_c + context.activity_points(), 1, 15);
}

int reba_score(const JointAngles& angles, const RebaContext& context) {
    angles.validate();
    return combine(trunk_score(angles.trunk_flexion_deg,
                               angles.trunk_twisted || angles.trunk_side_bent),
                   neck_score(angles.neck_flexion_deg, angles.neck_twisted_or_side_bent),
                   legs_score(angles.bilateral_support, angles.knee_flexion_deg),
                   upper_arm_score(angles.upper_arm_elevation_deg, angles.shoulder_raised,
                                   angles.upper_arm_abducted),
                   lower_arm_score(angles.lower_arm_flexion_deg),
                   wrist_score(angles.wrist_flexion_deg, angles.wrist_deviated), context);
}

DegenerateFrame::DegenerateFrame(const std::string& a, const std::string& b)
    : DataError("degenerate frame: joints '" + a + "' and '" + b + "' coincide"),
      joint_a(a),
      joint_b(b) {}

namespace {

struct FrameGeometry {
    Vec3 up, right, forward, trunk_dir;
    double trunk_len = 0.0;
    double trunk_flexion = 0.0;
    double trunk_lateral = 0.0;
};

Vec3 joint_at(const std::vector<double>& frame, int index) {
    const size_t base = static_cast<size_t>(index) * 3;
    return {frame[base], frame[base + 1], frame[base + 2]};
}

int required_joint(const SkeletonTopology& topology, const std::string& name) {
    const int idx = topology.index_of(name);
    if (idx < 0)
        throw ContractViolation("extract_angles: topology lacks required joint '" + name + "'");
    return idx;
}

}  // namespace

JointAngles extract_angles(const std::vector<double>& frame, const SkeletonTopology& topology,
                           int up_axis) {
    const int n = topology.joint_count();
    if (static_cast<int>(frame.size()) != n * 3)
        throw ContractViolation("extract_angles: frame has " + std::to_string(frame.size()) +
                                " values, expected " + std::to_string(n * 3));
    if (up_axis < 0 || up_axis > 2) throw ContractViolation("extract_angles: bad up axis");

    for (const auto& [a, b] : topology.edges) {
        const Vec3 d = joint_at(frame, a) - joint_at(frame, b);
        if (d.norm() <= kDegenerateEps)
            throw DegenerateFrame(topology.joint_names[static_cast<size_t>(a)],
                                  topology.joint_names[static_cast<size_t>(b)]);
    }

    const int pelvis = required_joint(topology, "pelvis");
    const int neck = required_joint(topology, "neck");
    const int head = required_joint(topology, "head");
    const int sho_l = required_joint(topology, "shoulder_l");
    const int sho_r = required_joint(topology, "shoulder_r");
    const int elb_l = required_joint(topology, "elbow_l");
    const int elb_r = required_joint(topology, "elbow_r");
    const int wri_l = required_joint(topology, "wrist_l");
    const int wri_r = required_joint(topology, "wrist_r");
    const int hip_l = required_joint(topology, "hip_l");
    const int hip_r = required_joint(topology, "hip_r");
    const int knee_l = required_joint(topology, "knee_l");
    const int knee_r = required_joint(topology, "knee_r");
    const int ank_l = required_joint(topology, "ankle_l");
    const int ank_r = required_joint(topology, "ankle_r");

    Vec3 up{};
    if (up_axis == 0)
        up = {1, 0, 0};
    else if (up_axis == 1)
        up = {0, 1, 0};
    else
        up = {0, 0, 1};

    const Vec3 p_pelvis = joint_at(frame, pelvis), p_neck = joint_at(frame, neck);
    const Vec3 trunk = p_neck - p_pelvis;
    const Vec3 trunk_dir = trunk.normalized();
    const double trunk_len = trunk.norm();

    Vec3 right = (joint_at(frame, hip_r) - joint_at(frame, hip_l));
    if (right.norm() <= kDegenerateEps)
        right = joint_at(frame, sho_r) - joint_at(frame, sho_l);
    // horizontal component only, so leaning does not tilt the frame axes
    right = (right - up * right.dot(up)).normalized();
    if (right.norm() <= kDegenerateEps) right = {1, 0, 0};
    const Vec3 forward = right.cross(up) * -1.0;

    JointAngles a;

    a.trunk_flexion_deg = deg(std::atan2(trunk_dir.dot(forward), trunk_dir.dot(up)));
    const double trunk_lateral = deg(std::asin(std::clamp(trunk_dir.dot(right), -1.0, 1.0)));
    a.trunk_side_bent = std::fabs(trunk_lateral) > 10.0;

    // Twist: shoulder axis rotated against hip axis around the trunk line.
    const Vec3 sho_axis = joint_at(frame, sho_r) - joint_at(frame, sho_l);
    const Vec3 hip_axis = joint_at(frame, hip_r) - joint_at(frame, hip_l);
    const Vec3 sho_p = sho_axis - trunk_dir * sho_axis.dot(trunk_dir);
    const Vec3 hip_p = hip_axis - trunk_dir * hip_axis.dot(trunk_dir);
    if (sho_p.norm() > kDegenerateEps && hip_p.norm() > kDegenerateEps)
        a.trunk_twisted = angle_between(sho_p, hip_p) > 15.0;

    const Vec3 neck_vec = (joint_at(frame, head) - p_neck).normalized();
    const double neck_sagittal = deg(std::atan2(neck_vec.dot(forward), neck_vec.dot(up)));
    double neck_rel = neck_sagittal - a.trunk_flexion_deg;
    while (neck_rel > 180.0) neck_rel -= 360.0;
    while (neck_rel < -180.0) neck_rel += 360.0;
    a.neck_flexion_deg = neck_rel;
    const double neck_lateral = deg(std::asin(std::clamp(neck_vec.dot(right), -1.0, 1.0)));
    a.neck_twisted_or_side_bent = std::fabs(neck_lateral - trunk_lateral) > 10.0;

    auto knee_flexion = [&](int hip, int knee, int ankle) {
        const Vec3 thigh = joint_at(frame, hip) - joint_at(frame, knee);
        const Vec3 shank = joint_at(frame, ankle) - joint_at(frame, knee);
        return 180.0 - angle_between(thigh, shank);
    };
    a.knee_flexion_deg = std::max(knee_flexion(hip_l, knee_l, ank_l),
                                  knee_flexion(hip_r, knee_r, ank_r));

    const double ankle_gap = std::fabs(joint_at(frame, ank_l).dot(up) -
                                       joint_at(frame, ank_r).dot(up));
    const double leg_len = (joint_at(frame, hip_l) - joint_at(frame, knee_l)).norm() +
                           (joint_at(frame, knee_l) - joint_at(frame, ank_l)).norm();
    a.bilateral_support = ankle_gap <= 0.2 * leg_len;

    const Vec3 trunk_down = trunk_dir * -1.0;
    struct ArmReading {
        double elevation = 0, lower_flexion = 0;
        bool raised = false, abducted = false;
    };
    auto read_arm = [&](int sho, int elb, int wri) {
        ArmReading r;
        const Vec3 upper = (joint_at(frame, elb) - joint_at(frame, sho));
        const Vec3 u = upper.normalized();
        double elevation = angle_between(upper, trunk_down);
        const double lateral = std::fabs(u.dot(right));
        // Behind the body and mostly sagittal counts as extension.
        if (u.dot(forward) < 0.0 && lateral < 0.5) elevation = -elevation;
        r.elevation = elevation;
        r.abducted = lateral > 0.5 && elevation > 20.0;  // sideways raise past ~30 deg
        r.raised = (joint_at(frame, sho) - p_neck).dot(up) > 0.02 * trunk_len;
        const Vec3 fore = joint_at(frame, wri) - joint_at(frame, elb);
        r.lower_flexion = 180.0 - angle_between(upper * -1.0, fore);
        return r;
    };
    const ArmReading left = read_arm(sho_l, elb_l, wri_l);
    const ArmReading right_arm = read_arm(sho_r, elb_r, wri_r);
    // Keep the side that scores worse through table B (wrist fixed neutral).
    auto arm_b = [&](const ArmReading& r) {
        return table_b(upper_arm_score(r.elevation, r.raised, r.abducted),
                       lower_arm_score(r.lower_flexion), wrist_score(0.0, false));
    };
    const ArmReading& worst = arm_b(left) >= arm_b(right_arm) ? left : right_arm;
    a.upper_arm_elevation_deg = std::clamp(worst.elevation, -180.0, 180.0);
    a.shoulder_raised = worst.raised;
    a.upper_arm_abducted = worst.abducted;
    a.lower_arm_flexion_deg = std::clamp(worst.lower_flexion, -180.0, 180.0);
    a.wrist_flexion_deg = 0.0;
    a.wrist_deviated = false;

    return a;
}

std::vector<int> score_sequence(const std::vector<double>& joints, int64_t frames,
                                const SkeletonTopology& topology, const RebaContext& context,
                                int up_axis) {
    return score_sequence(joints, frames,
                          topology, std::vector<RebaContext>(static_cast<size_t>(frames), context),
                          up_axis);
}

std::vector<int> score_sequence(const std::vector<double>& joints, int64_t frames,
                                const SkeletonTopology& topology,
                                const std::vector<RebaContext>& frame_context, int up_axis) {
    const int n = topology.joint_count();
    if (static_cast<int64_t>(joints.size()) != frames * n * 3)
        throw ContractViolation("score_sequence: joint buffer size mismatch");
    if (static_cast<int64_t>(frame_context.size()) != frames)
        throw ContractViolation("score_sequence: context length mismatch");
    std::vector<int> scores(static_cast<size_t>(frames));
    std::vector<double> frame(static_cast<size_t>(n) * 3);
    for (int64_t t = 0; t < frames; ++t) {
        std::copy_n(joints.begin() + t * n * 3, n * 3, frame.begin());
        const auto angles = extract_angles(frame, topology, up_axis);
        scores[static_cast<size_t>(t)] = reba_score(angles, frame_context[static_cast<size_t>(t)]);
    }
    return scores;
}

std::vector<double> smooth_values(const std::vector<double>& raw, double smoothing) {
    const int64_t n = static_cast<int64_t>(raw.size());
    if (n < 4 || smoothing <= 0.0) return raw;
    const double lambda = smoothing * static_cast<double>(n) / 100.0;

    // Reinsch form: solve (R + lambda Q^T Q) gamma = Q^T y for the second
    // derivatives at interior knots, then f = y - lambda Q gamma. Unit
    // spacing; R tridiagonal, Q^T Q pentadiagonal.
    // Every column of Q carries the full (1, -2, 1) stencil, so
    // Q^T Q is pentadiagonal with constant bands (6, -4, 1).
    const int64_t m = n - 2;
    std::vector<double> d0(static_cast<size_t>(m)), d1(static_cast<size_t>(m), 0.0),
        d2(static_cast<size_t>(m), 0.0), rhs(static_cast<size_t>(m));
    for (int64_t i = 0; i < m; ++i) {
        d0[static_cast<size_t>(i)] = 2.0 / 3.0 + lambda * 6.0;
        if (i + 1 < m) d1[static_cast<size_t>(i)] = 1.0 / 6.0 - lambda * 4.0;
        if (i + 2 < m) d2[static_cast<size_t>(i)] = lambda;
        rhs[static_cast<size_t>(i)] =
            raw[static_cast<size_t>(i)] - 2.0 * raw[static_cast<size_t>(i + 1)] +
            raw[static_cast<size_t>(i + 2)];
    }

    // Banded Cholesky (bandwidth 2), then two triangular solves.
    std::vector<double> l0(static_cast<size_t>(m)), l1(static_cast<size_t>(m), 0.0),
        l2(static_cast<size_t>(m), 0.0);
    for (int64_t i = 0; i < m; ++i) {
        double diag = d0[static_cast<size_t>(i)];
        if (i >= 1) diag -= l1[static_cast<size_t>(i - 1)] * l1[static_cast<size_t>(i - 1)];
        if (i >= 2) diag -= l2[static_cast<size_t>(i - 2)] * l2[static_cast<size_t>(i - 2)];
        l0[static_cast<size_t>(i)] = std::sqrt(diag);
        if (i + 1 < m) {
            double v = d1[static_cast<size_t>(i)];
            if (i >= 1) v -= l1[static_cast<size_t>(i - 1)] * l2[static_cast<size_t>(i - 1)];
            l1[static_cast<size_t>(i)] = v / l0[static_cast<size_t>(i)];
        }
        if (i + 2 < m) l2[static_cast<size_t>(i)] = d2[static_cast<size_t>(i)] / l0[static_cast<size_t>(i)];
    }
    std::vector<double> z(static_cast<size_t>(m));
    for (int64_t i = 0; i < m; ++i) {
        double v = rhs[static_cast<size_t>(i)];
        if (i >= 1) v -= l1[static_cast<size_t>(i - 1)] * z[static_cast<size_t>(i - 1)];
        if (i >= 2) v -= l2[static_cast<size_t>(i - 2)] * z[static_cast<size_t>(i - 2)];
        z[static_cast<size_t>(i)] = v / l0[static_cast<size_t>(i)];
    }
    std::vector<double> gamma(static_cast<size_t>(m));
    for (int64_t i = m - 1; i >= 0; --i) {
        double v = z[static_cast<size_t>(i)];
        if (i + 1 < m) v -= l1[static_cast<size_t>(i)] * gamma[static_cast<size_t>(i + 1)];
        if (i + 2 < m) v -= l2[static_cast<size_t>(i)] * gamma[static_cast<size_t>(i + 2)];
        gamma[static_cast<size_t>(i)] = v / l0[static_cast<size_t>(i)];
    }

    // f = y - lambda * Q gamma; column j of Q hits rows j-1, j, j+1 (with
    // gamma index j-1 for interior knot j).
    std::vector<double> out(raw);
    for (int64_t j = 0; j < m; ++j) {
        const double g = gamma[static_cast<size_t>(j)];
        out[static_cast<size_t>(j)] -= lambda * g;
        out[static_cast<size_t>(j + 1)] -= lambda * -2.0 * g;
        out[static_cast<size_t>(j + 2)] -= lambda * g;
    }
    return out;
}

std::vector<double> smooth_scores(const std::vector<int>& raw, double smoothing) {
    std::vector<double> values(raw.begin(), raw.end());
    return smooth_values(values, smoothing);
}

}  // namespace ergoseg::reba
