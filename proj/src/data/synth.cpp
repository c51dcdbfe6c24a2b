#include "r2r/data/synth.hpp"

#include "r2r/common/error.hpp"
#include "r2r/data/clip_io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <random>

namespace r2r::data {

namespace {

using motion::Quat;
using motion::Skeleton;
using motion::Vec3;
using motion::WorldPose;

constexpr double kPi = std::numbers::pi;

double wrap_angle(double a) {
    while (a > kPi) a -= 2.0 * kPi;
    while (a < -kPi) a += 2.0 * kPi;
    return a;
}

double smoothstep(double t) {
    t = std::clamp(t, 0.0, 1.0);
    return t * t * (3.0 - 2.0 * t);
}

Quat axis_angle(const Vec3& axis, double angle) { return Quat(Eigen::AngleAxisd(angle, axis)); }

Vec2 facing_of(double yaw) { return {std::sin(yaw), std::cos(yaw)}; }

struct Fighter {
    Vec2 pos;
    double yaw = 0.0;
    bool stepping = false;
    double phase_t = 0.0;
    double phase_len = 0.5;
    Vec2 step_from;
    Vec2 step_delta = Vec2::Zero();
    int swing_leg = 0;
    double orbit_sign = 1.0;
    double turn_offset = 0.0;
    double turn_left = 0.0;
    double jab_t[2] = {-1.0, -1.0};
    int next_arm = 0;
    double bob_phase = 0.0;
    std::mt19937_64 rng;
};

double uniform(std::mt19937_64& rng, double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); }

Vec2 clamp_to_ring(const Vec2& p, const SynthStyle& style) {
    const double limit = style.ring_radius - style.ring_margin;
    const double n = p.norm();
    return n > limit ? Vec2(p * (limit / n)) : p;
}

void start_step(Fighter& f, const Vec2& opponent, const SynthStyle& style) {
    const Vec2 to_opp = opponent - f.pos;
    const double dist = std::max(to_opp.norm(), 1e-6);
    const Vec2 radial = to_opp / dist;
    const Vec2 tangent(-radial.y(), radial.x());
    if (uniform(f.rng, 0.0, 1.0) < 0.2) f.orbit_sign = -f.orbit_sign;
    const double radial_amount = std::clamp(0.6 * (dist - style.preferred_distance), -style.max_step, style.max_step) +
                                 uniform(f.rng, -0.08, 0.08);
    Vec2 delta = radial * radial_amount + tangent * (f.orbit_sign * uniform(f.rng, 0.3, 1.0) * style.orbit_step);
    const double n = delta.norm();
    if (n > style.max_step) delta *= style.max_step / n;
    // Pull back toward the centre when close to the ropes.
    const Vec2 target = clamp_to_ring(f.pos + delta, style);
    f.step_from = f.pos;
    f.step_delta = target - f.pos;
    f.stepping = true;
    f.phase_t = 0.0;
    f.phase_len = uniform(f.rng, style.step_min_s, style.step_max_s);
    f.swing_leg = 1 - f.swing_leg;
}

void start_stance(Fighter& f, const SynthStyle& style) {
    f.stepping = false;
    f.phase_t = 0.0;
    f.phase_len = uniform(f.rng, style.stance_min_s, style.stance_max_s);
}

void advance(Fighter& f, const Vec2& opponent, double dt, const SynthStyle& style) {
    f.phase_t += dt;
    if (f.phase_t >= f.phase_len) {
        if (f.stepping) {
            f.pos = f.step_from + f.step_delta;
            start_stance(f, style);
        } else {
            start_step(f, opponent, style);
        }
    }
    if (f.stepping) f.pos = clamp_to_ring(f.step_from + f.step_delta * smoothstep(f.phase_t / f.phase_len), style);

    if (f.turn_left > 0.0) {
        f.turn_left -= dt;
        if (f.turn_left <= 0.0) f.turn_offset = 0.0;
    } else if (uniform(f.rng, 0.0, 1.0) < style.turn_away_rate * dt) {
        f.turn_offset = (uniform(f.rng, 0.0, 1.0) < 0.5 ? -1.0 : 1.0) * uniform(f.rng, 1.1, 2.0);
        f.turn_left = uniform(f.rng, style.turn_away_min_s, style.turn_away_max_s);
    }
    const Vec2 to_opp = opponent - f.pos;
    const double target_yaw = std::atan2(to_opp.x(), to_opp.y()) + f.turn_offset;
    const double err = wrap_angle(target_yaw - f.yaw);
    const double gain = f.stepping ? style.yaw_gain : 0.5 * style.yaw_gain;
    f.yaw = wrap_angle(f.yaw + std::clamp(err * gain * dt, -6.0 * dt, 6.0 * dt));

    for (double& t : f.jab_t)
        if (t >= 0.0) {
            t += dt;
            if (t > style.jab_duration_s) t = -1.0;
        }
    if (f.turn_left <= 0.0 && uniform(f.rng, 0.0, 1.0) < style.jab_rate * dt && f.jab_t[f.next_arm] < 0.0) {
        f.jab_t[f.next_arm] = 0.0;
        f.next_arm = f.next_arm == 0 && uniform(f.rng, 0.0, 1.0) < 0.7 ? 1 : 0;
    }
    f.bob_phase += dt * 2.0 * kPi * 1.6;
}

WorldPose pose_of(const Fighter& f, const Skeleton& skel, const SynthStyle& style) {
    const int j = skel.joint_count();
    std::vector<Quat> local(static_cast<std::size_t>(j), Quat::Identity());
    const Vec3 ax = Vec3::UnitX();
    const Vec3 ay = Vec3::UnitY();
    const Vec3 az = Vec3::UnitZ();

    const double step_s = f.stepping ? std::sin(kPi * std::clamp(f.phase_t / f.phase_len, 0.0, 1.0)) : 0.0;
    const double bob = 0.03 * std::sin(f.bob_phase);
    double jab[2];
    for (int a = 0; a < 2; ++a) {
        const double t = f.jab_t[a];
        jab[a] = t < 0.0 ? 0.0 : std::pow(std::sin(kPi * t / style.jab_duration_s), 2.0);
    }

    // Root: yaw plus a slight forward lean; torso twists into the punch.
    local[0] = axis_angle(ay, f.yaw) * axis_angle(ax, 0.12 + bob);
    local[3] = axis_angle(ay, 0.25 * (jab[1] - jab[0]));
    local[6] = axis_angle(ax, 0.05);
    local[9] = axis_angle(ay, 0.15 * (jab[1] - jab[0]));
    local[12] = axis_angle(ax, -0.1);
    local[15] = axis_angle(ax, -0.05 - bob);

    // Legs: bent boxing stance, one leg swings during a step.
    for (int side = 0; side < 2; ++side) {
        const double swing = (f.stepping && f.swing_leg == side) ? step_s : 0.0;
        const double stagger = side == 0 ? -0.15 : 0.15;
        const int hip = 1 + side;
        const int knee = 4 + side;
        const int ankle = 7 + side;
        local[hip] = axis_angle(ax, -0.3 + stagger - 0.45 * swing) * axis_angle(az, side == 0 ? 0.08 : -0.08);
        local[knee] = axis_angle(ax, 0.55 + 0.8 * swing);
        local[ankle] = axis_angle(ax, -0.25 - 0.35 * swing);
    }

    // Arms: guard position, extending along the facing direction for a jab.
    for (int side = 0; side < 2; ++side) {
        const double sign = side == 0 ? 1.0 : -1.0;
        const double e = jab[side];
        const double fwd = 1.1 + 0.45 * e;
        const double down = 1.0 - 0.9 * e;
        const double bend = 1.9 * (1.0 - e) + 0.1;
        local[16 + side] = axis_angle(ay, -sign * fwd) * axis_angle(az, -sign * down);
        local[18 + side] = axis_angle(az, sign * bend) * axis_angle(ay, -sign * 0.2 * (1.0 - e));
        local[13 + side] = axis_angle(az, sign * 0.1);
    }

    std::vector<Quat> global(static_cast<std::size_t>(j));
    for (int i = 0; i < j; ++i) {
        const int p = skel.parents[i];
        global[i] = (p == motion::kNoParent ? local[i] : global[p] * local[i]).normalized();
    }
    auto positions = motion::forward_kinematics(skel, Vec3(f.pos.x(), 0.0, f.pos.y()), global);
    double lowest = positions(skel.foot_joints.front(), 1);
    for (int fj : skel.foot_joints) lowest = std::min(lowest, positions(fj, 1));
    const Vec3 root(f.pos.x(), 0.02 - lowest, f.pos.y());
    return motion::make_world_pose(skel, root, std::move(global));
}

}  // namespace

InteractionClip synth_duel(std::uint64_t seed, double duration_s, const SynthStyle& style) {
    if (!(duration_s > 0.0) || !(style.fps > 0.0))
        throw DataError(DataErrc::invalid_argument, "synth duration and fps must be positive");
    const Skeleton skel = Skeleton::smpl_like();
    std::mt19937_64 master(seed);
    Fighter fighters[2];
    fighters[0].rng.seed(master());
    fighters[1].rng.seed(master());

    const double spin = uniform(master, -kPi, kPi);
    const Vec2 axis = facing_of(spin);
    const double half = 0.5 * style.preferred_distance * uniform(master, 0.8, 1.2);
    const Vec2 offset(uniform(master, -0.3, 0.3), uniform(master, -0.3, 0.3));
    fighters[0].pos = clamp_to_ring(offset - axis * half, style);
    fighters[1].pos = clamp_to_ring(offset + axis * half, style);
    for (int i = 0; i < 2; ++i) {
        Fighter& f = fighters[i];
        const Vec2 to = fighters[1 - i].pos - f.pos;
        f.yaw = std::atan2(to.x(), to.y()) + uniform(f.rng, -0.2, 0.2);
        f.orbit_sign = uniform(f.rng, 0.0, 1.0) < 0.5 ? -1.0 : 1.0;
        f.swing_leg = i;
        f.bob_phase = uniform(f.rng, 0.0, 2.0 * kPi);
        start_stance(f, style);
        f.phase_t = uniform(f.rng, 0.0, f.phase_len);
    }

    const auto frames = static_cast<std::size_t>(std::max(1.0, std::round(duration_s * style.fps)));
    InteractionClip out;
    out.ring.radius = style.ring_radius;
    for (MotionClip* c : {&out.clip_a, &out.clip_b}) {
        c->skeleton = skel;
        c->fps = style.fps;
        c->frames.reserve(frames);
    }
    const double dt = 1.0 / style.fps;
    for (std::size_t i = 0; i < frames; ++i) {
        if (i > 0) {
            const Vec2 pa = fighters[0].pos;
            const Vec2 pb = fighters[1].pos;
            advance(fighters[0], pb, dt, style);
            advance(fighters[1], pa, dt, style);
        }
        out.clip_a.frames.push_back(pose_of(fighters[0], skel, style));
        out.clip_b.frames.push_back(pose_of(fighters[1], skel, style));
    }
    return out;
}

DatasetManifest write_synth_dataset(const std::filesystem::path& root, const SynthDatasetConfig& config) {
    std::error_code ec;
    std::filesystem::create_directories(root / "clips", ec);
    if (ec) throw DataError(DataErrc::io_error, "cannot create " + (root / "clips").string() + ": " + ec.message());
    const auto splits = assign_splits(config.clips, config.train_fraction, config.seed);
    std::mt19937_64 seeds(config.seed);
    DatasetManifest manifest;
    const auto encoding = config.binary ? ClipEncoding::binary : ClipEncoding::text;
    const std::string ext = config.binary ? ".r2rb" : ".json";
    for (std::size_t i = 0; i < config.clips; ++i) {
        const auto clip_seed = seeds();
        const auto inter = synth_duel(clip_seed, config.duration_s, config.style);
        char name[32];
        std::snprintf(name, sizeof name, "duel_%04zu", i);
        ManifestEntry e;
        e.name = name;
        e.clip_a = std::string("clips/") + name + "_a" + ext;
        e.clip_b = std::string("clips/") + name + "_b" + ext;
        e.ring = inter.ring;
        e.split = splits[i];
        save_clip(root / e.clip_a, inter.clip_a, encoding);
        save_clip(root / e.clip_b, inter.clip_b, encoding);
        manifest.entries.push_back(std::move(e));
    }
    save_manifest(root, manifest);
    return manifest;
}

}  // namespace r2r::data
