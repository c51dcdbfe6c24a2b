#include "r2r/metrics/metrics.hpp"

#include "r2r/common/error.hpp"
#include "r2r/data/synth.hpp"
#include "r2r/engine/duel.hpp"

#include <chrono>
#include <cmath>
#include <iomanip>
#include <numbers>
#include <sstream>

namespace r2r::metrics {

using Eigen::MatrixXd;
using Eigen::RowVectorXd;
using Eigen::VectorXd;

namespace {

constexpr double kDeg = 180.0 / std::numbers::pi;

MatrixXd frame_features(const MotionClip& clip) {
    const auto encoded = motion::encode_motion(clip.frames, clip.skeleton);
    const auto j = static_cast<Eigen::Index>(clip.skeleton.joint_count());
    MatrixXd out(static_cast<Eigen::Index>(encoded.frames.size()), 6 * j);
    for (std::size_t t = 0; t < encoded.frames.size(); ++t) {
        const auto& f = encoded.frames[t];
        const auto row = static_cast<Eigen::Index>(t);
        for (Eigen::Index k = 0; k < j; ++k)
            for (int c = 0; c < 3; ++c) {
                out(row, 3 * k + c) = f.pos(k, c);
                out(row, 3 * j + 3 * k + c) = f.vel(k, c);
            }
    }
    return out;
}

// Floors tiny negative eigenvalues from round-off.
MatrixXd psd_sqrt(const MatrixXd& s) {
    Eigen::SelfAdjointEigenSolver<MatrixXd> eig(s);
    const VectorXd root = eig.eigenvalues().cwiseMax(0.0).cwiseSqrt();
    return eig.eigenvectors() * root.asDiagonal() * eig.eigenvectors().transpose();
}

MatrixXd covariance(const MatrixXd& x, const RowVectorXd& mean) {
    const MatrixXd centered = x.rowwise() - mean;
    return centered.transpose() * centered / static_cast<double>(x.rows() - 1);
}

MatrixXd shrink(const MatrixXd& s) {
    const double scale = s.trace() / static_cast<double>(s.rows());
    return (1.0 - kCovarianceShrinkage) * s +
           kCovarianceShrinkage * scale * MatrixXd::Identity(s.rows(), s.cols());
}

}  // namespace

MatrixXd extract_features(const MotionClip& clip, Granularity granularity) {
    const MatrixXd frames = frame_features(clip);
    const Eigen::Index n = frames.rows();
    const Eigen::Index dim = frames.cols();
    switch (granularity) {
        case Granularity::frame:
            return frames;
        case Granularity::transition: {
            MatrixXd out(std::max<Eigen::Index>(n - 1, 0), 2 * dim);
            for (Eigen::Index t = 1; t < n; ++t) {
                out.row(t - 1).head(dim) = frames.row(t) - frames.row(t - 1);
                out.row(t - 1).tail(dim) = 0.5 * (frames.row(t) + frames.row(t - 1));
            }
            return out;
        }
        case Granularity::clip: {
            const Eigen::Index w = kClipFeatureWindow;
            MatrixXd out(std::max<Eigen::Index>(n - w + 1, 0), 2 * dim);
            for (Eigen::Index s = 0; s + w <= n; ++s) {
                const auto block = frames.middleRows(s, w);
                const RowVectorXd mean = block.colwise().mean();
                const RowVectorXd var = (block.rowwise() - mean).array().square().colwise().mean();
                out.row(s).head(dim) = mean;
                out.row(s).tail(dim) = var.array().sqrt();
            }
            return out;
        }
    }
    return {};
}

MatrixXd stack_features(const std::vector<MatrixXd>& parts) {
    Eigen::Index rows = 0, cols = -1;
    for (const auto& p : parts) {
        if (p.rows() == 0) continue;
        if (cols >= 0 && p.cols() != cols)
            throw DataError(DataErrc::length_mismatch, "feature widths differ: " + std::to_string(cols) + " vs " +
                                                           std::to_string(p.cols()));
        cols = p.cols();
        rows += p.rows();
    }
    MatrixXd out(rows, std::max<Eigen::Index>(cols, 0));
    Eigen::Index at = 0;
    for (const auto& p : parts) {
        if (p.rows() == 0) continue;
        out.middleRows(at, p.rows()) = p;
        at += p.rows();
    }
    return out;
}

double trace_sqrt_product(const MatrixXd& s1, const MatrixXd& s2) {
    const MatrixXd r = psd_sqrt(s1);
    const MatrixXd m = r * s2 * r;
    Eigen::SelfAdjointEigenSolver<MatrixXd> eig(0.5 * (m + m.transpose()), Eigen::EigenvaluesOnly);
    return eig.eigenvalues().cwiseMax(0.0).cwiseSqrt().sum();
}

FidResult fid(const MatrixXd& a, const MatrixXd& b) {
    if (a.cols() != b.cols())
        throw DataError(DataErrc::length_mismatch, "feature widths differ: " + std::to_string(a.cols()) + " vs " +
                                                       std::to_string(b.cols()));
    if (a.rows() < 2 || b.rows() < 2)
        throw DataError(DataErrc::invalid_argument, "fid needs at least two samples per set");
    FidResult result;
    result.samples_a = static_cast<std::size_t>(a.rows());
    result.samples_b = static_cast<std::size_t>(b.rows());
    const RowVectorXd mu_a = a.colwise().mean();
    const RowVectorXd mu_b = b.colwise().mean();
    MatrixXd s_a = covariance(a, mu_a);
    MatrixXd s_b = covariance(b, mu_b);
    if (a.rows() <= a.cols() || b.rows() <= b.cols()) {
        s_a = shrink(s_a);
        s_b = shrink(s_b);
        result.shrunk = true;
    }
    const double value = (mu_a - mu_b).squaredNorm() + s_a.trace() + s_b.trace() -
                         2.0 * trace_sqrt_product(s_a, s_b);
    if (!std::isfinite(value)) throw NumericError("fid is not finite");
    result.value = std::max(value, 0.0);
    return result;
}

double jitter(const MotionClip& clip) {
    const std::size_t n = clip.frames.size();
    if (n < 4) return 0.0;
    const double fps3 = clip.fps * clip.fps * clip.fps;
    double total = 0.0;
    std::size_t count = 0;
    for (std::size_t t = 3; t < n; ++t) {
        const auto third = clip.frames[t].positions - 3.0 * clip.frames[t - 1].positions +
                           3.0 * clip.frames[t - 2].positions - clip.frames[t - 3].positions;
        total += third.rowwise().norm().sum();
        count += static_cast<std::size_t>(third.rows());
    }
    return count == 0 ? 0.0 : total / static_cast<double>(count) * fps3 * 1e-2;
}

double facing_angle(const RootFrame& root, const motion::Vec2& target) {
    const motion::Vec2 to = target - root.position;
    if (to.norm() < 1e-12) return 0.0;
    const double c = std::clamp(root.facing.normalized().dot(to.normalized()), -1.0, 1.0);
    return std::acos(c) * kDeg;
}

double root_orient(const std::vector<RootFrame>& a, const std::vector<RootFrame>& b) {
    if (a.size() != b.size())
        throw DataError(DataErrc::length_mismatch, "root streams differ in length: " + std::to_string(a.size()) +
                                                       " vs " + std::to_string(b.size()));
    if (a.empty()) return 0.0;
    std::size_t off = 0;
    for (std::size_t t = 0; t < a.size(); ++t) {
        if (facing_angle(a[t], b[t].position) > 45.0) ++off;
        if (facing_angle(b[t], a[t].position) > 45.0) ++off;
    }
    return 100.0 * static_cast<double>(off) / static_cast<double>(2 * a.size());
}

double root_orient(const MotionClip& a, const MotionClip& b) {
    return root_orient(motion::encode_motion(a.frames, a.skeleton).roots,
                       motion::encode_motion(b.frames, b.skeleton).roots);
}

double foot_sliding(const MotionClip& clip) {
    double total = 0.0;
    std::size_t count = 0;
    for (std::size_t t = 1; t < clip.frames.size(); ++t) {
        const auto& prev = clip.frames[t - 1].positions;
        const auto& cur = clip.frames[t].positions;
        for (const int foot : clip.skeleton.foot_joints) {
            if (prev(foot, 1) >= kFootContactHeight || cur(foot, 1) >= kFootContactHeight) continue;
            total += std::hypot(cur(foot, 0) - prev(foot, 0), cur(foot, 2) - prev(foot, 2));
            ++count;
        }
    }
    return count == 0 ? 0.0 : 100.0 * total / static_cast<double>(count);
}

double rotation_angle(const motion::Rot6& a, const motion::Rot6& b) {
    return motion::geodesic_angle(motion::rot6d_to_matrix(a), motion::rot6d_to_matrix(b)) * kDeg;
}

ControlError control_error(const MotionClip& clip, const std::vector<motion::SparseSignal>& targets,
                           std::size_t from) {
    if (targets.size() != clip.frames.size())
        throw DataError(DataErrc::length_mismatch, "control targets: " + std::to_string(targets.size()) +
                                                       " signals for " + std::to_string(clip.frames.size()) +
                                                       " frames");
    const auto roots = motion::encode_motion(clip.frames, clip.skeleton).roots;
    ControlError out;
    for (std::size_t t = from; t < clip.frames.size(); ++t) {
        const auto got = motion::extract_sparse_signal(clip.frames[t], roots[t == 0 ? 0 : t - 1], clip.skeleton);
        const auto& want = targets[t];
        out.pos_cm += ((got.head_pos - want.head_pos).norm() + (got.lhand_pos - want.lhand_pos).norm() +
                       (got.rhand_pos - want.rhand_pos).norm()) / 3.0;
        out.rot_deg += (rotation_angle(got.head_rot6d, want.head_rot6d) +
                        rotation_angle(got.lhand_rot6d, want.lhand_rot6d) +
                        rotation_angle(got.rhand_rot6d, want.rhand_rot6d)) / 3.0;
        ++out.frames;
    }
    if (out.frames > 0) {
        out.pos_cm = 100.0 * out.pos_cm / static_cast<double>(out.frames);
        out.rot_deg /= static_cast<double>(out.frames);
    }
    return out;
}

TimingResult timing_probe(const model::ReactionPolicy& policy, int steps) {
    if (steps <= 0) throw ConfigError("timing_probe needs a positive step count");
    const auto scene = data::synth_duel(1, 1.0);
    const auto d = static_cast<std::ptrdiff_t>(policy.chunk());
    engine::DuelEngine duel(policy, policy, engine::DuelConfig{scene.ring, 1, 2, false});
    duel.seed({scene.clip_a.frames.begin(), scene.clip_a.frames.begin() + d},
              {scene.clip_b.frames.begin(), scene.clip_b.frames.begin() + d}, scene.clip_a.skeleton);
    const bool sparse = policy.config().sparse;
    const auto start = std::chrono::steady_clock::now();
    TimingResult out;
    for (int i = 0; i < steps; ++i) {
        std::vector<motion::SparseSignal> sa, sb;
        if (sparse) {
            sa = engine::self_signals(duel.agent(0), policy.chunk());
            sb = engine::self_signals(duel.agent(1), policy.chunk());
        }
        const auto frames = duel.step(sparse ? &sa : nullptr, sparse ? &sb : nullptr);
        out.frames += static_cast<long>(frames.a.size());
        ++out.steps;
    }
    const double ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
    out.ms_per_frame = ms / static_cast<double>(out.frames);
    return out;
}

void MetricReport::validate() const {
    for (const double v : {fid_frame, fid_transition, fid_clip, jitter, ro_percent, fs})
        if (!std::isfinite(v)) throw NumericError("metric report holds a non-finite value");
    if (pos_err && !std::isfinite(*pos_err)) throw NumericError("pos_err is not finite");
    if (rot_err && !std::isfinite(*rot_err)) throw NumericError("rot_err is not finite");
    if (ro_percent < 0.0 || ro_percent > 100.0) throw NumericError("ro_percent outside [0, 100]");
}

nlohmann::json MetricReport::to_json() const {
    nlohmann::json j = {{"protocol", kMetricProtocol},
                        {"fid_frame", fid_frame},
                        {"fid_transition", fid_transition},
                        {"fid_clip", fid_clip},
                        {"jitter", jitter},
                        {"ro_percent", ro_percent},
                        {"fs", fs},
                        {"real_clips", real_clips},
                        {"generated_clips", generated_clips},
                        {"frame_samples", frame_samples},
                        {"covariance_shrinkage", shrunk}};
    if (pos_err) j["pos_err_cm"] = *pos_err;
    if (rot_err) j["rot_err_deg"] = *rot_err;
    return j;
}

std::string MetricReport::table(const std::string& label) const {
    std::ostringstream os;
    os << std::left << std::setw(20) << "method" << std::right << std::setw(12) << "FID-frame" << std::setw(12)
       << "FID-trans" << std::setw(12) << "FID-clip" << std::setw(10) << "Jitter" << std::setw(9) << "RO%"
       << std::setw(8) << "FS";
    if (pos_err) os << std::setw(10) << "PosErr";
    if (rot_err) os << std::setw(10) << "RotErr";
    os << '\n' << std::left << std::setw(20) << label << std::right << std::fixed << std::setprecision(3)
       << std::setw(12) << fid_frame << std::setw(12) << fid_transition << std::setw(12) << fid_clip << std::setw(10)
       << jitter << std::setw(9) << std::setprecision(1) << ro_percent << std::setw(8) << std::setprecision(3) << fs;
    if (pos_err) os << std::setw(10) << *pos_err;
    if (rot_err) os << std::setw(10) << *rot_err;
    os << '\n';
    return os.str();
}

MetricReport evaluate(const std::vector<data::InteractionClip>& real, const std::vector<data::InteractionClip>& generated) {
    if (real.empty() || generated.empty())
        throw DataError(DataErrc::invalid_argument, "evaluate needs real and generated clips");
    MetricReport report;
    report.real_clips = 2 * real.size();
    report.generated_clips = 2 * generated.size();
    double* targets[] = {&report.fid_frame, &report.fid_transition, &report.fid_clip};
    const Granularity grains[] = {Granularity::frame, Granularity::transition, Granularity::clip};
    for (int g = 0; g < 3; ++g) {
        std::vector<MatrixXd> r, s;
        for (const auto& c : real) {
            r.push_back(extract_features(c.clip_a, grains[g]));
            r.push_back(extract_features(c.clip_b, grains[g]));
        }
        for (const auto& c : generated) {
            s.push_back(extract_features(c.clip_a, grains[g]));
            s.push_back(extract_features(c.clip_b, grains[g]));
        }
        const auto result = fid(stack_features(s), stack_features(r));
        *targets[g] = result.value;
        report.shrunk = report.shrunk || result.shrunk;
    }
    for (const auto& c : generated) {
        report.jitter += jitter(c.clip_a) + jitter(c.clip_b);
        report.fs += foot_sliding(c.clip_a) + foot_sliding(c.clip_b);
        report.ro_percent += root_orient(c.clip_a, c.clip_b);
        report.frame_samples += c.clip_a.length() + c.clip_b.length();
    }
    report.jitter /= static_cast<double>(report.generated_clips);
    report.fs /= static_cast<double>(report.generated_clips);
    report.ro_percent /= static_cast<double>(generated.size());
    report.validate();
    return report;
}

}  // namespace r2r::metrics
