#include "r2r/common/error.hpp"
#include "r2r/data/clip_io.hpp"
#include "r2r/data/synth.hpp"

#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

using namespace r2r::data;
using r2r::DataErrc;
using r2r::DataError;
using r2r::motion::Vec3;

namespace {

DataErrc error_code_of(const std::function<void()>& fn) {
    try {
        fn();
    } catch (const DataError& e) {
        return e.code();
    }
    FAIL("expected DataError");
    return DataErrc::io_error;
}

std::filesystem::path temp_dir(const std::string& name) {
    auto p = std::filesystem::temp_directory_path() / ("r2r_test_" + name);
    std::filesystem::remove_all(p);
    std::filesystem::create_directories(p);
    return p;
}

}  // namespace

TEST_CASE("clip binary round trip is bit identical") {
    const auto duel = synth_duel(3, 2.0);
    std::stringstream a;
    write_clip(a, duel.clip_a, ClipEncoding::binary);
    const MotionClip back = read_clip(a);
    std::stringstream b;
    write_clip(b, back, ClipEncoding::binary);
    CHECK(a.str() == b.str());
    REQUIRE(back.length() == duel.clip_a.length());
    CHECK(back.frames[10].positions == duel.clip_a.frames[10].positions);
}

TEST_CASE("text and binary encodings agree") {
    const auto duel = synth_duel(4, 1.0);
    std::stringstream t;
    std::stringstream b;
    write_clip(t, duel.clip_b, ClipEncoding::text);
    write_clip(b, duel.clip_b, ClipEncoding::binary);
    const MotionClip ct = read_clip(t);
    const MotionClip cb = read_clip(b);
    REQUIRE(ct.length() == cb.length());
    CHECK(ct.skeleton == cb.skeleton);
    for (std::size_t i = 0; i < ct.length(); ++i) {
        CHECK((ct.frames[i].positions - cb.frames[i].positions).cwiseAbs().maxCoeff() < 1e-7);
        for (std::size_t j = 0; j < ct.frames[i].rotations.size(); ++j)
            CHECK(ct.frames[i].rotations[j].angularDistance(cb.frames[i].rotations[j]) < 1e-7);
    }
}

TEST_CASE("clip format errors carry distinct codes") {
    const auto duel = synth_duel(5, 1.0);
    std::stringstream t;
    write_clip(t, duel.clip_a, ClipEncoding::text);
    std::string text = t.str();

    std::string wrong_version = text;
    wrong_version.replace(wrong_version.find("r2r-clip/1"), 10, "r2r-clip/9");
    CHECK(error_code_of([&] {
              std::istringstream is(wrong_version);
              read_clip(is);
          }) == DataErrc::version_mismatch);

    CHECK(error_code_of([&] {
              std::istringstream is("{\"fps\": 30}");
              read_clip(is);
          }) == DataErrc::malformed_header);

    InteractionClip mismatched = duel;
    mismatched.clip_b.frames.pop_back();
    CHECK(error_code_of([&] { mismatched.validate(); }) == DataErrc::length_mismatch);

    CHECK(error_code_of([] { load_clip("/nonexistent/clip.r2rb"); }) == DataErrc::io_error);
}

TEST_CASE("generated frames keep explicit joint positions") {
    auto duel = synth_duel(6, 0.5);
    MotionClip clip = duel.clip_a;
    clip.frames[3].positions(5, 1) += 0.25;
    std::stringstream t;
    std::stringstream b;
    write_clip(t, clip, ClipEncoding::text);
    write_clip(b, clip, ClipEncoding::binary);
    CHECK(read_clip(t).frames[3].positions(5, 1) == doctest::Approx(clip.frames[3].positions(5, 1)));
    CHECK(read_clip(b).frames[3].positions(5, 1) == clip.frames[3].positions(5, 1));
}

TEST_CASE("window counts and role swap") {
    InteractionClip c = synth_duel(7, 64.0 / 30.0);
    REQUIRE(c.length() == 64);
    const auto windows = make_windows(c, 60, 4);
    CHECK(windows.size() == 4);
    int role0 = 0;
    for (const auto& w : windows) {
        role0 += w.role == 0;
        CHECK(w.agent_frames.size() == 60);
        CHECK(w.start + 60 <= c.length());
    }
    CHECK(role0 == 2);

    InteractionClip short_clip = synth_duel(7, 1.0);
    CHECK(make_windows(short_clip, 60, 4).empty());
    CHECK_THROWS_AS(make_windows(c, 62, 4), DataError);

    // The swapped window's opponent stream is the original agent's pose seen
    // from the other character's root frame.
    const RoleStream b_view = encode_role(c, 1);
    const RoleStream a_view = encode_role(c, 0);
    for (std::size_t i : {0ul, 17ul, 63ul}) {
        const auto& opp = b_view.opponent[i];
        const auto& root_b = b_view.agent_roots[i];
        for (int j = 0; j < 24; ++j) {
            const Vec3 world = c.clip_a.frames[i].positions.row(j).transpose();
            CHECK((opp.pos.row(j).transpose() - root_b.to_local(world)).norm() < 1e-9);
        }
        CHECK((a_view.roots[i].offset - root_b.to_local2(a_view.agent_roots[i].position)).norm() < 1e-9);
    }
}

TEST_CASE("downsampling") {
    InteractionClip c = synth_duel(8, 2.0);
    MotionClip hi = c.clip_a;
    hi.fps = 120.0;
    const MotionClip lo = downsample(hi, 30.0);
    CHECK(lo.length() == 15);
    CHECK(lo.frames[2].positions == hi.frames[8].positions);
    CHECK(downsample(c.clip_a, 30.0).length() == c.clip_a.length());
    CHECK_THROWS_AS(downsample(hi, 50.0), DataError);

    // Per-frame velocities scale with the kept-frame ratio: a joint moving
    // linearly at v per source frame moves 4v per kept frame.
    MotionClip lin = hi;
    for (std::size_t i = 0; i < lin.frames.size(); ++i) {
        const Vec3 shift(0.01 * static_cast<double>(i), 0.0, 0.0);
        lin.frames[i] = r2r::motion::make_world_pose(lin.skeleton, hi.frames[0].root_translation + shift,
                                                     hi.frames[0].rotations);
    }
    const auto v_hi = r2r::motion::world_velocities(lin.frames);
    const auto v_lo = r2r::motion::world_velocities(downsample(lin, 30.0).frames);
    CHECK(v_lo[3](0, 0) == doctest::Approx(4.0 * v_hi[3](0, 0)));
}

TEST_CASE("synthetic duels") {
    const auto a = synth_duel(21, 10.0);
    const auto b = synth_duel(21, 10.0);
    std::stringstream sa;
    std::stringstream sb;
    write_clip(sa, a.clip_a, ClipEncoding::binary);
    write_clip(sb, b.clip_a, ClipEncoding::binary);
    CHECK(sa.str() == sb.str());
    CHECK(synth_duel(22, 10.0).clip_a.frames[100].positions != a.clip_a.frames[100].positions);

    std::size_t facing = 0;
    std::size_t total = 0;
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        const auto d = synth_duel(seed, 30.0);
        for (int role = 0; role < 2; ++role) {
            const RoleStream s = encode_role(d, role);
            const RoleStream o = encode_role(d, 1 - role);
            for (std::size_t i = 0; i < s.length(); ++i) {
                CHECK(s.agent_roots[i].position.norm() <= d.ring.radius);
                const Vec2 to = o.agent_roots[i].position - s.agent_roots[i].position;
                const double cosang = s.agent_roots[i].facing.dot(to.normalized());
                facing += cosang >= std::cos(M_PI / 4);
                ++total;
            }
        }
        for (const auto& f : d.clip_a.frames)
            for (int fj : d.clip_a.skeleton.foot_joints) CHECK(f.positions(fj, 1) >= 0.02 - 1e-9);
    }
    const double frac = static_cast<double>(facing) / static_cast<double>(total);
    MESSAGE("facing fraction " << frac);
    CHECK(frac >= 0.75);
    CHECK(frac <= 0.95);
}

TEST_CASE("dataset directory round trip") {
    const auto root = temp_dir("dataset");
    SynthDatasetConfig cfg;
    cfg.clips = 5;
    cfg.duration_s = 3.0;
    const auto manifest = write_synth_dataset(root, cfg);
    CHECK(manifest.entries.size() == 5);
    const auto train = load_dataset(root, "train");
    const auto test = load_dataset(root, "test");
    CHECK(train.size() == 4);
    CHECK(test.size() == 1);
    const auto again = load_manifest(root);
    for (std::size_t i = 0; i < 5; ++i) CHECK(again.entries[i].split == manifest.entries[i].split);

    std::ofstream(root / "manifest.json") << "{\"format\": \"r2r-dataset/2\", \"interactions\": []}";
    CHECK(error_code_of([&] { load_manifest(root); }) == DataErrc::version_mismatch);
    std::filesystem::remove_all(root);
}
