#pragma once

// Motion quality and control metrics. Units: jitter in 1e2 m/s^3, foot
// sliding in cm/frame, RO in percent, position error in cm, rotation error in
// degrees. Feature definitions are fixed by the "r2r-v1" protocol.

#include "r2r/data/dataset.hpp"
#include "r2r/model/policy.hpp"

#include <Eigen/Dense>
#include <json.hpp>

#include <optional>
#include <string>

namespace r2r::metrics {

using motion::MotionClip;
using motion::RootFrame;

inline constexpr const char* kMetricProtocol = "r2r-v1";
inline constexpr int kClipFeatureWindow = 30;

enum class Granularity { frame, transition, clip };

/// One row per sample. frame: root-relative joint positions and per-frame
/// velocities; transition: [difference, mean] of consecutive frame features;
/// clip: [mean, std] of frame features over 30-frame windows, stride 1.
Eigen::MatrixXd extract_features(const MotionClip& clip, Granularity granularity);
Eigen::MatrixXd stack_features(const std::vector<Eigen::MatrixXd>& parts);

struct FidResult {
    double value = 0.0;
    bool shrunk = false;  // covariance shrinkage because samples did not exceed the dimension
    std::size_t samples_a = 0;
    std::size_t samples_b = 0;
};

/// Fréchet distance between Gaussians fit to the rows of `a` and `b`.
/// Throws DataError with fewer than two samples or mismatched widths.
FidResult fid(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b);
/// tr((S1 S2)^{1/2}) for symmetric positive semi-definite S1, S2.
double trace_sqrt_product(const Eigen::MatrixXd& s1, const Eigen::MatrixXd& s2);
/// Shrinkage toward the scaled identity used when samples <= dimension.
inline constexpr double kCovarianceShrinkage = 0.1;

/// Mean norm of the third finite difference of world joint positions, in
/// units of 1/s^3, times 1e-2. Zero for clips shorter than four frames.
double jitter(const MotionClip& clip);

/// Angle in degrees between `root`'s facing and the ground direction to `target`.
double facing_angle(const RootFrame& root, const motion::Vec2& target);
/// Percentage of agent-frames whose facing deviates more than 45 degrees from
/// the direction to the opponent, averaged over both agents.
double root_orient(const std::vector<RootFrame>& a, const std::vector<RootFrame>& b);
double root_orient(const MotionClip& a, const MotionClip& b);

/// Mean horizontal foot displacement (cm/frame) over consecutive frame pairs
/// where the foot stays below 5 cm.
inline constexpr double kFootContactHeight = 0.05;
double foot_sliding(const MotionClip& clip);

struct ControlError {
    double pos_cm = 0.0;
    double rot_deg = 0.0;
    std::size_t frames = 0;
};
/// Head and hand trackers of the clip against per-frame targets, both in the
/// previous root frame, from frame `from` on; averaged over the three trackers.
ControlError control_error(const MotionClip& clip, const std::vector<motion::SparseSignal>& targets,
                           std::size_t from = 0);
/// Geodesic angle in degrees between two 6D rotations.
double rotation_angle(const motion::Rot6& a, const motion::Rot6& b);

struct TimingResult {
    double ms_per_frame = 0.0;
    int steps = 0;
    long frames = 0;
};
/// Wall-clock cost of `steps` duel steps (two agents) after seeding.
TimingResult timing_probe(const model::ReactionPolicy& policy, int steps);

struct MetricReport {
    double fid_frame = 0.0;
    double fid_transition = 0.0;
    double fid_clip = 0.0;
    double jitter = 0.0;
    double ro_percent = 0.0;
    double fs = 0.0;
    std::optional<double> pos_err;
    std::optional<double> rot_err;
    std::size_t real_clips = 0;
    std::size_t generated_clips = 0;
    std::size_t frame_samples = 0;  // generated frames
    bool shrunk = false;

    /// Throws NumericError when a value is not finite or RO is out of range.
    void validate() const;
    nlohmann::json to_json() const;
    /// Single-row text table with a header line.
    std::string table(const std::string& label) const;
};

/// FIDs pool both agents of every interaction; jitter and FS average over the
/// generated agent clips; RO averages over generated interactions.
MetricReport evaluate(const std::vector<data::InteractionClip>& real, const std::vector<data::InteractionClip>& generated);

}  // namespace r2r::metrics
