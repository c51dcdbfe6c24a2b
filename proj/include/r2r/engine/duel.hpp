#pragma once

// Streaming generation: per-agent history buffers of at most W frames, a
// simultaneous-move duel loop, and reactive / sparse-control drivers that
// replay a recorded opponent.

#include "r2r/data/dataset.hpp"
#include "r2r/model/policy.hpp"

#include <deque>
#include <functional>
#include <optional>

namespace r2r::engine {

using model::RowVector;
using motion::RootFrame;
using motion::SparseSignal;
using motion::WorldPose;

struct AgentFrame {
    motion::MotionFrame frame;
    motion::RootInfo root_info;
    RootFrame root;
    WorldPose pose;
};

/// Oldest-first window over the most recent frames of one agent, addressed by
/// global frame index.
class HistoryBuffer {
public:
    explicit HistoryBuffer(std::size_t capacity) : capacity_(capacity) {}

    void push(AgentFrame frame);
    void clear();

    std::size_t size() const { return frames_.size(); }
    std::size_t capacity() const { return capacity_; }
    std::size_t high_water() const { return high_water_; }
    bool empty() const { return frames_.empty(); }
    /// Global index of the oldest held frame; end_frame() is one past the newest.
    long first_frame() const { return first_; }
    long end_frame() const { return first_ + static_cast<long>(frames_.size()); }

    const AgentFrame& operator[](std::size_t i) const { return frames_[i]; }
    const AgentFrame& back() const { return frames_.back(); }
    bool holds(long frame) const { return frame >= first_ && frame < end_frame(); }
    /// Throws DataError when the frame has been discarded or not produced yet.
    const AgentFrame& at_frame(long frame) const;

private:
    std::deque<AgentFrame> frames_;
    std::size_t capacity_;
    std::size_t high_water_ = 0;
    long first_ = 0;
};

/// Read access to the opponent's world poses and root frames by frame index.
struct OpponentTrack {
    std::function<const WorldPose&(long)> pose;
    std::function<const RootFrame&(long)> root;
};

/// One generated agent: buffer, latent history with the encoder cache and its
/// own random stream.
class AgentRunner {
public:
    AgentRunner(const model::ReactionPolicy& policy, motion::Skeleton skeleton, data::RingGeometry ring,
                std::uint64_t seed, int agent_id);

    /// Seeds the history with world poses (a positive multiple of d frames);
    /// frame 0 is encoded against itself.
    void seed(const std::vector<WorldPose>& poses, const OpponentTrack& opponent);

    struct Plan {
        std::vector<motion::MotionFrame> frames;
        std::vector<motion::DecodedFrame> decoded;
        RowVector latent;
    };
    /// Predicts the next d frames from the current history and the opponent's
    /// frames up to end_frame(). `next_signals` are the sparse targets of the
    /// frames being generated (sparse policies only).
    Plan plan(const OpponentTrack& opponent, const std::vector<SparseSignal>* next_signals);
    /// Appends a plan; `opponent_roots` are the opponent's roots at the new frames.
    void commit(Plan plan, const std::vector<RootFrame>& opponent_roots);

    const HistoryBuffer& history() const { return history_; }
    const model::PolicyStream& latents() const { return stream_; }
    long end_frame() const { return history_.end_frame(); }
    int agent_id() const { return agent_id_; }
    const motion::Skeleton& skeleton() const { return skeleton_; }

    std::function<const WorldPose&(long)> pose_lookup() const;
    std::function<const RootFrame&(long)> root_lookup() const;

private:
    RowVector opponent_feature(const OpponentTrack& opponent, long start) const;

    const model::ReactionPolicy* policy_;
    motion::Skeleton skeleton_;
    data::RingGeometry ring_;
    std::mt19937_64 rng_;
    int agent_id_;
    HistoryBuffer history_;
    model::PolicyStream stream_;
    RowVector last_latent_;
};

struct DuelConfig {
    data::RingGeometry ring;
    std::uint64_t seed_a = 1;
    std::uint64_t seed_b = 2;
    bool parallel = false;  // evaluate both agents of a step on two threads
};

struct DuelDiagnostics {
    std::vector<double> facing_a;  // degrees between facing and direction to the opponent
    std::vector<double> facing_b;
    long ring_violations = 0;      // agent-frames outside the ring
    std::size_t max_history = 0;
    int steps = 0;
};

struct StepFrames {
    long start_frame = 0;
    std::vector<AgentFrame> a;
    std::vector<AgentFrame> b;
};

class DuelEngine {
public:
    DuelEngine(const model::ReactionPolicy& policy_a, const model::ReactionPolicy& policy_b, DuelConfig config);

    /// Both agents share one skeleton; seeds have equal length.
    void seed(const std::vector<WorldPose>& a, const std::vector<WorldPose>& b, const motion::Skeleton& skeleton);
    /// Advances both agents by d frames from start-of-step state. Sparse targets
    /// are only consulted for sparse policies.
    StepFrames step(const std::vector<SparseSignal>* signals_a = nullptr,
                    const std::vector<SparseSignal>* signals_b = nullptr);

    long frame_index() const;
    const AgentRunner& agent(int i) const { return i == 0 ? *a_ : *b_; }
    const DuelDiagnostics& diagnostics() const { return diagnostics_; }
    const DuelConfig& config() const { return config_; }
    bool seeded() const { return a_.has_value(); }

private:
    void record(const AgentFrame& a, const AgentFrame& b);

    const model::ReactionPolicy* policy_a_;
    const model::ReactionPolicy* policy_b_;
    DuelConfig config_;
    std::optional<AgentRunner> a_;
    std::optional<AgentRunner> b_;
    DuelDiagnostics diagnostics_;
};

/// Angle in degrees between `root`'s facing and the ground direction to `target`.
double facing_deviation(const RootFrame& root, const motion::Vec2& target);

struct DuelResult {
    motion::MotionClip a;
    motion::MotionClip b;
    DuelDiagnostics diagnostics;
};

/// Seeds both agents from the first s frames of `seed`, then generates until
/// each clip holds `frames` frames.
DuelResult run_duel(const model::ReactionPolicy& policy, const data::InteractionClip& seed, std::size_t frames,
                    std::size_t seed_frames, const DuelConfig& config);

struct ReactiveConfig {
    data::RingGeometry ring;
    std::uint64_t seed = 1;
    std::size_t seed_frames = 4;
};

/// Agent generated online against a replayed opponent clip; the agent's first
/// seed_frames frames come from `agent_seed`. Output length equals the opponent's.
motion::MotionClip run_reactive(const model::ReactionPolicy& policy, const motion::MotionClip& opponent,
                                const motion::MotionClip& agent_seed, const ReactiveConfig& config);

/// As run_reactive with per-frame sparse targets (zero-order hold past the end).
motion::MotionClip run_sparse(const model::ReactionPolicy& policy, const motion::MotionClip& opponent,
                              const motion::MotionClip& agent_seed, const std::vector<SparseSignal>& signals,
                              const ReactiveConfig& config);

/// d copies of the sparse signal of the agent's newest frame; stands in for
/// external targets when a sparse policy runs without them.
std::vector<SparseSignal> self_signals(const AgentRunner& agent, int d);

/// Sparse targets of frames [start, start + d) with zero-order hold.
std::vector<SparseSignal> held_signals(const std::vector<SparseSignal>& signals, long start, int d);

}  // namespace r2r::engine
