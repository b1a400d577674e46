#pragma once
// Frame-wise REBA scoring: joint angles from a 3-D skeleton, the published
// worksheet tables A/B/C, load/coupling/activity context, and smoothing of
// the per-frame integer scores into a regressable target.
//
// Angle conventions (gravity-up axis configurable, +y by default):
//   trunk flexion   signed sagittal angle of pelvis->neck against up
//   neck flexion    sagittal angle of neck->head relative to the trunk line
//   knee flexion    180 deg minus the knee angle, worst leg
//   upper arm       elevation of shoulder->elbow against the trunk-down
//                   direction, negative when held behind the body
//   lower arm       180 deg minus the elbow angle, per side
//   wrist           not observable from a 15-joint skeleton; fixed neutral
// Both arms are scored through table B and the worst side is kept.

#include <string>
#include <vector>

#include "ergoseg/tensor.hpp"
#include "ergoseg/topology.hpp"

namespace ergoseg::reba {

struct JointAngles {
    double trunk_flexion_deg = 0.0;  // + forward, - extension
    bool trunk_twisted = false;
    bool trunk_side_bent = false;
    double neck_flexion_deg = 0.0;  // + forward, - extension
    bool neck_twisted_or_side_bent = false;
    double knee_flexion_deg = 0.0;  // worst leg, 0 = straight
    bool bilateral_support = true;
    double upper_arm_elevation_deg = 0.0;  // worst arm
    bool shoulder_raised = false;
    bool upper_arm_abducted = false;
    double lower_arm_flexion_deg = 0.0;  // 0 = straight elbow
    double wrist_flexion_deg = 0.0;
    bool wrist_deviated = false;

    void validate() const;  // finite, within [-180, 180]
};

struct RebaContext {
    int load_band = 0;  // 0: <5 kg, 1: 5-10 kg, 2: >10 kg
    bool shock_force = false;
    int coupling = 0;  // 0 good, 1 fair, 2 poor, 3 unacceptable
    bool static_posture = false;
    bool repeated_actions = false;
    bool rapid_changes = false;

    void validate() const;
    int load_points() const { return load_band + (shock_force ? 1 : 0); }
    int activity_points() const {
        return (static_posture ? 1 : 0) + (repeated_actions ? 1 : 0) + (rapid_changes ? 1 : 0);
    }
};

// Component scores from angle bands.
int trunk_score(double flexion_deg, bool twisted_or_side_bent);
int neck_score(double flexion_deg, bool twisted_or_side_bent);
int legs_score(bool bilateral_support, double knee_flexion_deg);
int upper_arm_score(double elevation_deg, bool shoulder_raised, bool abducted);
int lower_arm_score(double flexion_deg);
int wrist_score(double flexion_deg, bool deviated);

// Worksheet table lookups (1-based component scores).
int table_a(int trunk, int neck, int legs);
int table_b(int upper_arm, int lower_arm, int wrist);
int table_c(int score_a, int score_b);

// Component scores + context through tables A, B, C to the final 1..15.
int combine(int trunk, int neck, int legs, int upper_arm, int lower_arm, int wrist,
            const RebaContext& context);

int reba_score(const JointAngles& angles, const RebaContext& context);

// Raised when two adjacent joints coincide in a frame.
class DegenerateFrame : public DataError {
public:
    DegenerateFrame(const std::string& joint_a, const std::string& joint_b);
    std::string joint_a, joint_b;
};

// frame holds 15 xyz triples in topology joint order. up_axis indexes the
// gravity-up coordinate (0=x, 1=y, 2=z).
JointAngles extract_angles(const std::vector<double>& frame, const SkeletonTopology& topology,
                           int up_axis = 1);

// Both arms scored through table B, worst side kept; fills the worst-arm
// fields of the returned angles accordingly.
std::vector<int> score_sequence(const std::vector<double>& joints, int64_t frames,
                                const SkeletonTopology& topology, const RebaContext& context,
                                int up_axis = 1);
std::vector<int> score_sequence(const std::vector<double>& joints, int64_t frames,
                                const SkeletonTopology& topology,
                                const std::vector<RebaContext>& frame_context, int up_axis = 1);

// Natural cubic smoothing spline evaluated back at every frame; the
// roughness penalty is smoothing * T / 100 so the budget scales with the
// sequence. T < 4 returns the raw values unchanged.
std::vector<double> smooth_scores(const std::vector<int>& raw, double smoothing);
std::vector<double> smooth_values(const std::vector<double>& raw, double smoothing);

}  // namespace ergoseg::reba
