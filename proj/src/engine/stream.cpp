#include "r2r/engine/stream.hpp"

#include "r2r/common/error.hpp"
#include "r2r/data/clip_io.hpp"
#include "r2r/data/synth.hpp"

#include <chrono>

namespace r2r::engine {

using nlohmann::json;

namespace {

template <int N>
json vec_json(const Eigen::Matrix<double, N, 1>& v) {
    json a = json::array();
    for (int i = 0; i < N; ++i) a.push_back(v(i));
    return a;
}

template <int N>
Eigen::Matrix<double, N, 1> vec_from(const json& j, const char* key) {
    if (!j.contains(key) || !j[key].is_array() || j[key].size() != N)
        throw ProtocolError("bad_field", std::string("field '") + key + "' must be an array of " + std::to_string(N));
    Eigen::Matrix<double, N, 1> v;
    for (int i = 0; i < N; ++i) {
        if (!j[key][i].is_number()) throw ProtocolError("bad_field", std::string("field '") + key + "' must be numeric");
        v(i) = j[key][i].get<double>();
    }
    if (!v.allFinite()) throw ProtocolError("bad_field", std::string("field '") + key + "' is not finite");
    return v;
}

double now_ms() {
    using namespace std::chrono;
    return duration<double, std::milli>(system_clock::now().time_since_epoch()).count();
}

}  // namespace

json signal_to_json(const SparseSignal& s) {
    return {{"head_pos", vec_json<3>(s.head_pos)},   {"head_rot6d", vec_json<6>(s.head_rot6d)},
            {"lhand_pos", vec_json<3>(s.lhand_pos)}, {"lhand_rot6d", vec_json<6>(s.lhand_rot6d)},
            {"rhand_pos", vec_json<3>(s.rhand_pos)}, {"rhand_rot6d", vec_json<6>(s.rhand_rot6d)}};
}

SparseSignal signal_from_json(const json& j) {
    if (!j.is_object()) throw ProtocolError("bad_field", "signal must be an object");
    SparseSignal s;
    s.head_pos = vec_from<3>(j, "head_pos");
    s.head_rot6d = vec_from<6>(j, "head_rot6d");
    s.lhand_pos = vec_from<3>(j, "lhand_pos");
    s.lhand_rot6d = vec_from<6>(j, "lhand_rot6d");
    s.rhand_pos = vec_from<3>(j, "rhand_pos");
    s.rhand_rot6d = vec_from<6>(j, "rhand_rot6d");
    return s;
}

json agent_pose_to_json(const AgentFrame& f) {
    json joints = json::array();
    for (Eigen::Index i = 0; i < f.pose.positions.rows(); ++i)
        joints.push_back({f.pose.positions(i, 0), f.pose.positions(i, 1), f.pose.positions(i, 2)});
    return {{"positions", std::move(joints)},
            {"root", {f.root.position.x(), f.root.position.y()}},
            {"facing", {f.root.facing.x(), f.root.facing.y()}}};
}

json error_message(const std::string& code, const std::string& detail) {
    return {{"type", "error"}, {"code", code}, {"detail", detail}};
}

StreamSession::StreamSession(const model::ReactionPolicy& policy, SessionConfig config)
    : policy_(&policy), config_(config),
      scene_(data::synth_duel(config.scene_seed, static_cast<double>(config.seed_frames + 1) / 30.0)),
      engine_(policy, policy, DuelConfig{scene_.ring, config.seed_a, config.seed_b, false}) {
    restart();
}

void StreamSession::restart() {
    const auto first = [&](const motion::MotionClip& c) {
        return std::vector<WorldPose>(c.frames.begin(), c.frames.begin() + static_cast<std::ptrdiff_t>(config_.seed_frames));
    };
    engine_ = DuelEngine(*policy_, *policy_, DuelConfig{scene_.ring, config_.seed_a, config_.seed_b, false});
    engine_.seed(first(scene_.clip_a), first(scene_.clip_b), scene_.clip_a.skeleton);
    signals_.clear();
    last_signal_.reset();
    frames_sent_ = 0;
}

json StreamSession::hello() const {
    return {{"type", "hello"},
            {"protocol", kStreamProtocol},
            {"skeleton", data::skeleton_to_json(scene_.clip_a.skeleton)},
            {"d", policy_->chunk()},
            {"fps", scene_.clip_a.fps},
            {"sparse", policy_->config().sparse},
            {"ring", {{"center", {scene_.ring.center.x(), scene_.ring.center.y()}}, {"radius", scene_.ring.radius}}}};
}

json StreamSession::seed_frames() const {
    json poses = json::array();
    const auto& a = engine_.agent(0).history();
    const auto& b = engine_.agent(1).history();
    for (std::size_t i = 0; i < a.size(); ++i)
        poses.push_back({{"frame", a.first_frame() + static_cast<long>(i)},
                         {"agents", {agent_pose_to_json(a[i]), agent_pose_to_json(b[i])}}});
    return {{"type", "frames"}, {"start_frame", a.first_frame()}, {"poses", std::move(poses)}};
}

std::vector<json> StreamSession::open() {
    frames_sent_ = engine_.frame_index();
    return {hello(), seed_frames()};
}

std::vector<json> StreamSession::handle(const json& message) {
    if (!message.is_object() || !message.contains("type") || !message["type"].is_string())
        throw ProtocolError("malformed", "message must be an object with a string 'type'");
    const std::string type = message["type"].get<std::string>();
    if (type == "heartbeat") {
        json reply = {{"type", "heartbeat"}, {"server_ms", now_ms()}};
        if (message.contains("t")) reply["t"] = message["t"];
        return {reply};
    }
    if (type == "reset") {
        restart();
        return open();
    }
    if (type != "signal") throw ProtocolError("unknown_type", "unknown message type '" + type + "'");

    if (!message.contains("frame") || !message["frame"].is_number_integer())
        throw ProtocolError("bad_field", "signal needs an integer 'frame'");
    const long frame = message["frame"].get<long>();
    if (frame < 0) throw ProtocolError("bad_field", "frame must be non-negative");
    if (!message.contains("signal")) throw ProtocolError("bad_field", "signal message needs 'signal'");
    const SparseSignal signal = signal_from_json(message["signal"]);
    if (frame >= engine_.frame_index()) signals_[frame] = signal;

    std::vector<json> out;
    const int d = policy_->chunk();
    const bool sparse = policy_->config().sparse;
    while (!signals_.empty() && signals_.rbegin()->first >= engine_.frame_index()) {
        const long start = engine_.frame_index();
        std::vector<SparseSignal> chunk;
        for (long f = start; f < start + d; ++f) {
            const auto it = signals_.find(f);
            if (it != signals_.end()) last_signal_ = it->second;
            if (!last_signal_) {
                // No signal yet at or before this frame: use the first one that will come.
                last_signal_ = signals_.begin()->second;
            }
            chunk.push_back(*last_signal_);
        }
        signals_.erase(signals_.begin(), signals_.lower_bound(start + d));
        std::vector<SparseSignal> own_b;
        if (sparse) own_b = self_signals(engine_.agent(1), d);
        StepFrames s;
        try {
            s = engine_.step(sparse ? &chunk : nullptr, sparse ? &own_b : nullptr);
        } catch (const NumericError& e) {
            restart();
            throw ProtocolError("numeric", std::string(e.what()) + "; session restarted");
        }
        json poses = json::array();
        for (std::size_t i = 0; i < s.a.size(); ++i)
            poses.push_back({{"frame", s.start_frame + static_cast<long>(i)},
                             {"agents", {agent_pose_to_json(s.a[i]), agent_pose_to_json(s.b[i])}}});
        out.push_back({{"type", "frames"}, {"start_frame", s.start_frame}, {"poses", std::move(poses)}});
        frames_sent_ += static_cast<long>(s.a.size());
    }
    return out;
}

std::vector<std::string> StreamSession::handle_text(const std::string& text) {
    std::vector<std::string> out;
    try {
        for (const auto& m : handle(json::parse(text))) out.push_back(m.dump());
    } catch (const json::parse_error& e) {
        out.push_back(error_message("malformed", e.what()).dump());
    } catch (const ProtocolError& e) {
        out.push_back(error_message(e.code(), e.what()).dump());
    } catch (const std::exception& e) {
        out.push_back(error_message("internal", e.what()).dump());
    }
    return out;
}

}  // namespace r2r::engine
