#include "r2r/common/error.hpp"
#include "r2r/data/synth.hpp"
#include "r2r/motion/clip.hpp"

#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

using namespace r2r::motion;

namespace {

constexpr double kPi = std::numbers::pi;

WorldPose rest_pose(const Skeleton& s, const Vec3& root = Vec3::Zero(), double yaw = 0.0) {
    std::vector<Quat> rot(static_cast<std::size_t>(s.joint_count()), Quat(yaw_matrix(yaw)));
    return make_world_pose(s, root, rot);
}

WorldPose random_pose(const Skeleton& s, std::mt19937_64& rng) {
    std::normal_distribution<double> n;
    std::vector<Quat> rot;
    for (int i = 0; i < s.joint_count(); ++i) {
        Quat q(n(rng), n(rng), n(rng), n(rng));
        rot.push_back(q.normalized());
    }
    return make_world_pose(s, Vec3(n(rng), 0.9 + 0.1 * n(rng), n(rng)), rot);
}

// Rigid ground-plane motion: yaw by `angle` about the origin then shift by (tx, tz).
WorldPose transform_pose(const WorldPose& p, double angle, double tx, double tz) {
    const Mat3 r = yaw_matrix(angle);
    const Vec3 t(tx, 0.0, tz);
    WorldPose out = p;
    out.root_translation = r * p.root_translation + t;
    for (Eigen::Index i = 0; i < p.positions.rows(); ++i)
        out.positions.row(i) = (r * p.positions.row(i).transpose() + t).transpose();
    for (auto& q : out.rotations) q = Quat(r) * q;
    return out;
}

}  // namespace

TEST_CASE("6d rotation round trip and Gram-Schmidt") {
    CHECK((rot6d_to_matrix(matrix_to_rot6d(Mat3::Identity())) - Mat3::Identity()).norm() < 1e-12);
    std::mt19937_64 rng(1);
    std::normal_distribution<double> n;
    for (int i = 0; i < 200; ++i) {
        const Mat3 m = Quat(n(rng), n(rng), n(rng), n(rng)).normalized().toRotationMatrix();
        CHECK((rot6d_to_matrix(matrix_to_rot6d(m)) - m).norm() < 1e-6);
        Rot6 v = matrix_to_rot6d(m);
        for (int k = 0; k < 6; ++k) v(k) += 0.3 * n(rng);
        const Mat3 r = rot6d_to_matrix(v);
        CHECK((r.transpose() * r - Mat3::Identity()).norm() < 1e-9);
        CHECK(r.determinant() == doctest::Approx(1.0).epsilon(1e-9));
    }
    Rot6 degenerate = Rot6::Zero();
    CHECK_THROWS_AS(rot6d_to_matrix(degenerate), r2r::NumericError);
}

TEST_CASE("skeleton validation") {
    Skeleton s = Skeleton::smpl_like();
    CHECK_NOTHROW(s.validate());
    CHECK(s.joint_count() == 24);
    Skeleton two_roots = s;
    two_roots.parents[5] = kNoParent;
    CHECK_THROWS_AS(two_roots.validate(), r2r::DataError);
    Skeleton cycle = s;
    cycle.parents[1] = 4;
    CHECK_THROWS_AS(cycle.validate(), r2r::DataError);
    Skeleton dup = s;
    dup.left_hand = dup.head;
    CHECK_THROWS_AS(dup.validate(), r2r::DataError);
}

TEST_CASE("root frame extraction") {
    const Skeleton s = Skeleton::smpl_like();
    const RootFrame id = extract_root_frame(rest_pose(s), s);
    CHECK(id.position.norm() < 1e-12);
    CHECK((id.facing - Vec2(0.0, 1.0)).norm() < 1e-12);

    const RootFrame moved = extract_root_frame(rest_pose(s, Vec3(3.0, 0.0, 4.0)), s);
    CHECK((moved.position - Vec2(3.0, 4.0)).norm() < 1e-12);
    CHECK((moved.facing - Vec2(0.0, 1.0)).norm() < 1e-12);

    const RootFrame yawed = extract_root_frame(rest_pose(s, Vec3::Zero(), kPi / 2), s);
    const Vec3 expect = yaw_matrix(kPi / 2) * Vec3::UnitZ();
    CHECK((yawed.facing - Vec2(expect.x(), expect.z())).norm() < 1e-12);
    CHECK(yawed.position.norm() < 1e-12);
    CHECK(yawed.facing.norm() == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("facing falls back to shoulders then to the previous frame") {
    const Skeleton s = Skeleton::smpl_like();
    // Root pitched 90 degrees: its forward axis is vertical.
    std::vector<Quat> rot(24, Quat::Identity());
    rot[0] = Quat(Eigen::AngleAxisd(-kPi / 2, Vec3::UnitX()));
    const WorldPose pitched = make_world_pose(s, Vec3::Zero(), rot);
    const RootFrame r = extract_root_frame(pitched, s);
    CHECK(r.facing.norm() == doctest::Approx(1.0));

    Skeleton no_shoulders = s;
    no_shoulders.left_shoulder = -1;
    no_shoulders.right_shoulder = -1;
    CHECK_THROWS_AS(extract_root_frame(pitched, no_shoulders), r2r::NumericError);
    RootFrame prev;
    prev.facing = Vec2(1.0, 0.0);
    CHECK((extract_root_frame(pitched, no_shoulders, &prev).facing - prev.facing).norm() < 1e-12);
}

TEST_CASE("agent frame encoding examples") {
    const Skeleton s = Skeleton::smpl_like();
    const WorldPose still = rest_pose(s, Vec3(1.0, 0.9, -2.0), 0.7);
    const MotionFrame f = encode_agent_frame(still, still, s);
    CHECK(f.r_off.norm() < 1e-12);
    CHECK((f.r_dir - Vec2(0.0, 1.0)).norm() < 1e-12);
    CHECK(f.vel.norm() < 1e-12);

    // 0.1 m forward along the facing direction.
    const double yaw = 0.7;
    const Vec3 fwd = yaw_matrix(yaw) * Vec3::UnitZ();
    const WorldPose stepped = rest_pose(s, Vec3(1.0, 0.9, -2.0) + 0.1 * fwd, yaw);
    const MotionFrame g = encode_agent_frame(stepped, still, s);
    CHECK((g.r_off - Vec2(0.0, 0.1)).norm() < 1e-12);
}

TEST_CASE("decode of identity frame and chained constant offsets") {
    const Skeleton s = Skeleton::smpl_like();
    const WorldPose rest = rest_pose(s);
    const RootFrame origin;
    const MotionFrame id = encode_agent_frame(rest, rest, s);
    const DecodedFrame d = decode_agent_frame(id, origin);
    CHECK((d.pose.positions - rest.positions).norm() < 1e-12);

    MotionFrame step = id;
    step.r_off = Vec2(0.0, 0.05);
    RootFrame prev;
    prev.facing = Vec2(std::sin(0.4), std::cos(0.4));
    const RootFrame start = prev;
    for (int i = 0; i < 10; ++i) prev = decode_agent_frame(step, prev).root;
    CHECK((prev.position - (start.position + 10 * 0.05 * start.facing)).norm() < 1e-12);

    MotionFrame bad = id;
    bad.r_dir = Vec2::Zero();
    CHECK_THROWS_AS(decode_agent_frame(bad, origin), r2r::NumericError);
    MotionFrame scaled = id;
    scaled.r_dir = Vec2(0.0, 3.0);
    CHECK(decode_agent_frame(scaled, origin).root.facing.norm() == doctest::Approx(1.0));
}

TEST_CASE("encode/decode round trip on synthetic motion") {
    const auto duel = r2r::data::synth_duel(11, 4.0);
    const auto& clip = duel.clip_a;
    const EncodedMotion enc = encode_motion(clip.frames, clip.skeleton);
    const auto dec = decode_motion(enc.frames, enc.roots.front());
    double worst = 0.0;
    for (std::size_t i = 0; i < dec.size(); ++i)
        worst = std::max(worst, (dec[i].pose.positions - clip.frames[i].positions).cwiseAbs().maxCoeff());
    CHECK(worst < 1e-4);

    // Velocities match finite differences of the decoded positions.
    for (std::size_t i = 1; i < dec.size(); ++i) {
        const JointMat3 diff = dec[i].pose.positions - dec[i - 1].pose.positions;
        const Mat3 rt = dec[i].root.rotation().transpose();
        for (Eigen::Index jn = 0; jn < diff.rows(); ++jn) {
            const Vec3 v = rt * diff.row(jn).transpose();
            CHECK((v - enc.frames[i].vel.row(jn).transpose()).norm() < 1e-5);
        }
    }
}

TEST_CASE("opponent frame geometry") {
    const Skeleton s = Skeleton::smpl_like();
    const WorldPose opp = rest_pose(s, Vec3(0.0, 0.9, 0.0));
    const RootFrame origin;
    const JointMat3 zero = JointMat3::Zero(24, 3);
    const OpponentFrame o = encode_opponent_frame(opp, zero, origin);
    CHECK((o.pos - opp.positions).norm() < 1e-12);

    RootFrame turned;
    turned.facing = Vec2(1.0, 0.0);  // agent yawed +90 degrees
    const OpponentFrame t = encode_opponent_frame(opp, zero, turned);
    const Mat3 minus90 = yaw_matrix(-kPi / 2);
    for (int j = 0; j < 24; ++j)
        CHECK((t.pos.row(j).transpose() - minus90 * opp.positions.row(j).transpose()).norm() < 1e-12);
}

TEST_CASE("ground-plane isometry invariance") {
    const Skeleton s = Skeleton::smpl_like();
    std::mt19937_64 rng(3);
    for (int trial = 0; trial < 20; ++trial) {
        const WorldPose a0 = random_pose(s, rng);
        const WorldPose a1 = random_pose(s, rng);
        const WorldPose b0 = random_pose(s, rng);
        const WorldPose b1 = random_pose(s, rng);
        const double ang = 0.3 * trial;
        auto tf = [&](const WorldPose& p) { return transform_pose(p, ang, 1.5, -0.7); };

        const MotionFrame m = encode_agent_frame(a1, a0, s);
        const MotionFrame mt = encode_agent_frame(tf(a1), tf(a0), s);
        CHECK((m.r_off - mt.r_off).norm() < 1e-5);
        CHECK((m.r_dir - mt.r_dir).norm() < 1e-5);
        CHECK((m.pos - mt.pos).norm() < 1e-5);
        CHECK((m.rot - mt.rot).norm() < 1e-5);
        CHECK((m.vel - mt.vel).norm() < 1e-5);

        const RootFrame ra = extract_root_frame(a1, s);
        const RootFrame rat = extract_root_frame(tf(a1), s);
        const OpponentFrame o = encode_opponent_frame(b1, b0, ra);
        const OpponentFrame ot = encode_opponent_frame(tf(b1), tf(b0), rat);
        CHECK((o.pos - ot.pos).norm() < 1e-5);
        CHECK((o.rot - ot.rot).norm() < 1e-5);
        CHECK((o.vel - ot.vel).norm() < 1e-5);

        const RootFrame rb = extract_root_frame(b1, s);
        const RootFrame rbt = extract_root_frame(tf(b1), s);
        const RootInfo info = compute_root_info(ra, rb, Vec2::Zero());
        const RootInfo info_t = compute_root_info(rat, rbt, Vec2::Zero());
        CHECK((info.offset - info_t.offset).norm() < 1e-5);
        CHECK((info.direction - info_t.direction).norm() < 1e-5);
    }
}

TEST_CASE("root info examples") {
    RootFrame opp;
    opp.position = Vec2(1.0, 1.0);
    opp.facing = Vec2(std::sin(0.5), std::cos(0.5));
    RootFrame agent;
    agent.position = opp.position + 2.0 * opp.facing;
    agent.facing = -opp.facing;
    const RootInfo info = compute_root_info(agent, opp, agent.position);
    CHECK(info.ring_dist == doctest::Approx(0.0));
    CHECK((info.offset - Vec2(0.0, 2.0)).norm() < 1e-12);
    CHECK(info.direction.norm() == doctest::Approx(1.0));

    // Swapping roles gives the inverse rigid relation.
    const RootInfo back = compute_root_info(opp, agent, Vec2::Zero());
    const Vec2 recovered = agent.position + agent.dir_to_world2(back.offset);
    CHECK((recovered - opp.position).norm() < 1e-12);
    const Vec2 dir = agent.dir_to_world2(back.direction);
    CHECK((dir - opp.facing).norm() < 1e-12);
}

TEST_CASE("sparse signal is relative to the previous root") {
    const Skeleton s = Skeleton::smpl_like();
    const WorldPose p = rest_pose(s, Vec3(2.0, 0.9, 1.0), 0.3);
    RootFrame prev;
    prev.position = Vec2(2.0, 1.0);
    prev.facing = Vec2(std::sin(0.3), std::cos(0.3));
    const SparseSignal sig = extract_sparse_signal(p, prev, s);
    CHECK((prev.to_world(sig.head_pos) - p.positions.row(s.head).transpose()).norm() < 1e-12);
    CHECK((rot6d_to_matrix(sig.head_rot6d) - Mat3::Identity()).norm() < 1e-12);
}
