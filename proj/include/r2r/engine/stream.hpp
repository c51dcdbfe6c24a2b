#pragma once

// r2r-stream/1: JSON text messages over a websocket. The session logic lives
// here, independent of the transport.
//
// server -> client: hello, frames, heartbeat, error
// client -> server: signal, reset, heartbeat

#include "r2r/engine/duel.hpp"

#include <json.hpp>

#include <map>
#include <string>

namespace r2r::engine {

inline constexpr const char* kStreamProtocol = "r2r-stream/1";

/// A message that cannot be honoured; `code` goes into the error reply.
class ProtocolError : public std::runtime_error {
public:
    ProtocolError(std::string code, const std::string& detail) : std::runtime_error(detail), code_(std::move(code)) {}
    const std::string& code() const { return code_; }

private:
    std::string code_;
};

nlohmann::json signal_to_json(const SparseSignal& s);
/// Throws ProtocolError("bad_field") on missing or mis-shaped fields.
SparseSignal signal_from_json(const nlohmann::json& j);
nlohmann::json agent_pose_to_json(const AgentFrame& f);
nlohmann::json error_message(const std::string& code, const std::string& detail);

struct SessionConfig {
    std::uint64_t scene_seed = 1;  // synthetic duel whose opening frames seed both agents
    std::size_t seed_frames = 4;
    std::uint64_t seed_a = 1;
    std::uint64_t seed_b = 2;
};

/// One client's duel. Agent A follows the client's signals when the policy is
/// sparse; otherwise signals only clock the stream. A step runs as soon as a
/// signal reaches the first frame of the next chunk; frames without a signal
/// hold the last one received.
class StreamSession {
public:
    StreamSession(const model::ReactionPolicy& policy, SessionConfig config);

    /// Messages to send right after the connection opens (hello, seed frames).
    std::vector<nlohmann::json> open();
    std::vector<nlohmann::json> handle(const nlohmann::json& message);
    /// Parses and handles one text frame; every failure becomes an error reply.
    std::vector<std::string> handle_text(const std::string& text);

    long frame_index() const { return engine_.frame_index(); }
    long frames_sent() const { return frames_sent_; }

private:
    nlohmann::json hello() const;
    nlohmann::json seed_frames() const;
    void restart();

    const model::ReactionPolicy* policy_;
    SessionConfig config_;
    data::InteractionClip scene_;
    DuelEngine engine_;
    std::map<long, SparseSignal> signals_;
    std::optional<SparseSignal> last_signal_;
    long frames_sent_ = 0;
};

}  // namespace r2r::engine
