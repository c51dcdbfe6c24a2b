#include "r2r/engine/duel.hpp"

#include "r2r/common/error.hpp"

#include <cmath>
#include <future>
#include <numbers>

namespace r2r::engine {

using model::ReactionPolicy;
using motion::MotionClip;

void HistoryBuffer::push(AgentFrame frame) {
    frames_.push_back(std::move(frame));
    while (frames_.size() > capacity_) {
        frames_.pop_front();
        ++first_;
    }
    high_water_ = std::max(high_water_, frames_.size());
}

void HistoryBuffer::clear() {
    frames_.clear();
    first_ = 0;
}

const AgentFrame& HistoryBuffer::at_frame(long frame) const {
    if (!holds(frame))
        throw DataError(DataErrc::invalid_argument, "frame " + std::to_string(frame) + " is not in the history window");
    return frames_[static_cast<std::size_t>(frame - first_)];
}

double facing_deviation(const RootFrame& root, const motion::Vec2& target) {
    const motion::Vec2 to = target - root.position;
    const double n = to.norm() * root.facing.norm();
    if (n < 1e-12) return 0.0;
    const double c = std::clamp(root.facing.dot(to) / n, -1.0, 1.0);
    return std::acos(c) * 180.0 / std::numbers::pi;
}

std::vector<SparseSignal> self_signals(const AgentRunner& agent, int d) {
    const HistoryBuffer& h = agent.history();
    if (h.empty()) throw DataError(DataErrc::invalid_argument, "agent has no history");
    const std::size_t k = h.size() - 1;
    const auto s = motion::extract_sparse_signal(h[k].pose, h[k > 0 ? k - 1 : 0].root, agent.skeleton());
    return std::vector<SparseSignal>(static_cast<std::size_t>(d), s);
}

std::vector<SparseSignal> held_signals(const std::vector<SparseSignal>& signals, long start, int d) {
    if (signals.empty()) throw DataError(DataErrc::invalid_argument, "empty sparse signal stream");
    std::vector<SparseSignal> out;
    const long last = static_cast<long>(signals.size()) - 1;
    for (int i = 0; i < d; ++i) out.push_back(signals[static_cast<std::size_t>(std::min(start + i, last))]);
    return out;
}

// ---------------------------------------------------------------- agent runner

AgentRunner::AgentRunner(const ReactionPolicy& policy, motion::Skeleton skeleton, data::RingGeometry ring,
                         std::uint64_t seed, int agent_id)
    : policy_(&policy), skeleton_(std::move(skeleton)), ring_(ring), rng_(seed), agent_id_(agent_id),
      history_(static_cast<std::size_t>(policy.config().window)), stream_(policy) {
    if (skeleton_.joint_count() != policy.joints())
        throw DataError(DataErrc::invalid_argument, "skeleton joint count does not match the policy");
}

std::function<const WorldPose&(long)> AgentRunner::pose_lookup() const {
    return [this](long f) -> const WorldPose& { return history_.at_frame(f).pose; };
}

std::function<const RootFrame&(long)> AgentRunner::root_lookup() const {
    return [this](long f) -> const RootFrame& { return history_.at_frame(f).root; };
}

RowVector AgentRunner::opponent_feature(const OpponentTrack& opponent, long start) const {
    const int d = policy_->chunk();
    std::vector<motion::OpponentFrame> frames;
    for (long f = start; f < start + d; ++f) {
        const WorldPose& pose = opponent.pose(f);
        const motion::JointMat3 vel =
            f > 0 ? motion::JointMat3(pose.positions - opponent.pose(f - 1).positions)
                  : motion::JointMat3(motion::JointMat3::Zero(pose.positions.rows(), 3));
        frames.push_back(motion::encode_opponent_frame(pose, vel, history_.at_frame(f).root));
    }
    return policy_->opponent_feature(std::span(frames));
}

void AgentRunner::seed(const std::vector<WorldPose>& poses, const OpponentTrack& opponent) {
    const int d = policy_->chunk();
    const auto n = poses.size();
    if (n == 0 || n % static_cast<std::size_t>(d) != 0 || n > history_.capacity())
        throw DataError(DataErrc::invalid_argument, "seed must be a positive multiple of d frames within the window");
    history_.clear();
    stream_.reset();
    const motion::EncodedMotion enc = motion::encode_motion(poses, skeleton_);
    for (std::size_t i = 0; i < n; ++i) {
        const auto f = static_cast<long>(i);
        history_.push({enc.frames[i], motion::compute_root_info(enc.roots[i], opponent.root(f), ring_.center),
                       enc.roots[i], poses[i]});
    }
    const std::size_t chunks = n / static_cast<std::size_t>(d);
    for (std::size_t c = 0; c < chunks; ++c) {
        const RowVector z = policy_->chunk_latent(std::span(enc.frames.data() + c * d, static_cast<std::size_t>(d)));
        if (c + 1 == chunks) {
            last_latent_ = z;
            break;
        }
        RowVector sparse;
        if (policy_->config().sparse) {
            std::vector<SparseSignal> next;
            for (std::size_t i = (c + 1) * d; i < (c + 2) * d; ++i)
                next.push_back(motion::extract_sparse_signal(poses[i], enc.roots[i - 1], skeleton_));
            sparse = policy_->sparse_feature(std::span(next));
        }
        stream_.push(z, opponent_feature(opponent, static_cast<long>(c * d)), sparse);
    }
}

AgentRunner::Plan AgentRunner::plan(const OpponentTrack& opponent, const std::vector<SparseSignal>* next_signals) {
    const int d = policy_->chunk();
    const long start = history_.end_frame() - d;
    try {
        RowVector sparse;
        std::optional<std::vector<SparseSignal>> signals;
        if (policy_->config().sparse) {
            if (!next_signals || next_signals->size() != static_cast<std::size_t>(d))
                throw DataError(DataErrc::invalid_argument, "sparse policy needs d signals per step");
            signals = *next_signals;
            sparse = policy_->sparse_feature(std::span(*next_signals));
        }
        const RowVector cond = stream_.push(last_latent_, opponent_feature(opponent, start), sparse);
        const RowVector z = policy_->sample_next(cond, rng_);

        model::DecoderInputs in;
        for (long f = start; f < start + d; ++f) {
            in.prev_frames.push_back(history_.at_frame(f).frame);
            in.prev_roots.push_back(history_.at_frame(f).root_info);
        }
        in.latent_prev = last_latent_;
        in.latent_cur = z;
        in.sparse = std::move(signals);
        model::DecoderOutputs out = policy_->decode(in);

        Plan p;
        RootFrame prev = history_.back().root;
        for (auto& frame : out.next_frames) {
            motion::DecodedFrame dec = motion::decode_agent_frame(frame, prev);
            if (!dec.pose.positions.allFinite() || !dec.root.position.allFinite())
                throw NumericError("decoded pose is not finite");
            prev = dec.root;
            p.decoded.push_back(std::move(dec));
            p.frames.push_back(std::move(frame));
        }
        p.latent = policy_->feedback_latent(z);
        return p;
    } catch (const NumericError& e) {
        throw e.with_context(agent_id_, history_.end_frame());
    }
}

void AgentRunner::commit(Plan plan, const std::vector<RootFrame>& opponent_roots) {
    if (opponent_roots.size() != plan.frames.size())
        throw DataError(DataErrc::length_mismatch, "opponent roots do not cover the planned frames");
    for (std::size_t i = 0; i < plan.frames.size(); ++i) {
        const RootFrame& root = plan.decoded[i].root;
        history_.push({std::move(plan.frames[i]), motion::compute_root_info(root, opponent_roots[i], ring_.center), root,
                       std::move(plan.decoded[i].pose)});
    }
    last_latent_ = std::move(plan.latent);
}

// ---------------------------------------------------------------- duel

DuelEngine::DuelEngine(const ReactionPolicy& policy_a, const ReactionPolicy& policy_b, DuelConfig config)
    : policy_a_(&policy_a), policy_b_(&policy_b), config_(config) {
    if (policy_a.chunk() != policy_b.chunk()) throw ConfigError("both policies must share the downsample factor");
}

void DuelEngine::record(const AgentFrame& a, const AgentFrame& b) {
    diagnostics_.facing_a.push_back(facing_deviation(a.root, b.root.position));
    diagnostics_.facing_b.push_back(facing_deviation(b.root, a.root.position));
    for (const AgentFrame* f : {&a, &b})
        if ((f->root.position - config_.ring.center).norm() > config_.ring.radius) ++diagnostics_.ring_violations;
}

void DuelEngine::seed(const std::vector<WorldPose>& a, const std::vector<WorldPose>& b, const motion::Skeleton& skeleton) {
    if (a.size() != b.size()) throw DataError(DataErrc::length_mismatch, "seed lengths differ");
    a_.emplace(*policy_a_, skeleton, config_.ring, config_.seed_a, 0);
    b_.emplace(*policy_b_, skeleton, config_.ring, config_.seed_b, 1);
    const auto roots_a = motion::encode_motion(a, skeleton).roots;
    const auto roots_b = motion::encode_motion(b, skeleton).roots;
    auto track = [](const std::vector<WorldPose>& poses, const std::vector<RootFrame>& roots) {
        return OpponentTrack{[&poses](long f) -> const WorldPose& { return poses.at(static_cast<std::size_t>(f)); },
                             [&roots](long f) -> const RootFrame& { return roots.at(static_cast<std::size_t>(f)); }};
    };
    a_->seed(a, track(b, roots_b));
    b_->seed(b, track(a, roots_a));
    diagnostics_ = {};
    for (std::size_t i = 0; i < a.size(); ++i) record(a_->history()[i], b_->history()[i]);
    diagnostics_.max_history = std::max(a_->history().high_water(), b_->history().high_water());
}

long DuelEngine::frame_index() const { return a_ ? a_->end_frame() : 0; }

StepFrames DuelEngine::step(const std::vector<SparseSignal>* signals_a, const std::vector<SparseSignal>* signals_b) {
    if (!a_ || !b_) throw DataError(DataErrc::invalid_argument, "duel is not seeded");
    const OpponentTrack track_a{a_->pose_lookup(), a_->root_lookup()};
    const OpponentTrack track_b{b_->pose_lookup(), b_->root_lookup()};
    AgentRunner::Plan plan_a, plan_b;
    if (config_.parallel) {
        auto fut = std::async(std::launch::async, [&] { return b_->plan(track_a, signals_b); });
        try {
            plan_a = a_->plan(track_b, signals_a);
        } catch (...) {
            fut.wait();
            throw;
        }
        plan_b = fut.get();
    } else {
        plan_a = a_->plan(track_b, signals_a);
        plan_b = b_->plan(track_a, signals_b);
    }
    std::vector<RootFrame> roots_a, roots_b;
    for (const auto& f : plan_a.decoded) roots_a.push_back(f.root);
    for (const auto& f : plan_b.decoded) roots_b.push_back(f.root);

    StepFrames out;
    out.start_frame = a_->end_frame();
    const std::size_t n = plan_a.frames.size();
    a_->commit(std::move(plan_a), roots_b);
    b_->commit(std::move(plan_b), roots_a);
    const std::size_t size = a_->history().size();
    for (std::size_t i = size - n; i < size; ++i) {
        out.a.push_back(a_->history()[i]);
        out.b.push_back(b_->history()[i]);
        record(out.a.back(), out.b.back());
    }
    ++diagnostics_.steps;
    diagnostics_.max_history =
        std::max({diagnostics_.max_history, a_->history().high_water(), b_->history().high_water()});
    return out;
}

DuelResult run_duel(const ReactionPolicy& policy, const data::InteractionClip& seed, std::size_t frames,
                    std::size_t seed_frames, const DuelConfig& config) {
    seed.validate();
    if (seed.length() < seed_frames) throw DataError(DataErrc::invalid_argument, "seed clip shorter than the seed");
    const auto first = [&](const MotionClip& c) {
        return std::vector<WorldPose>(c.frames.begin(), c.frames.begin() + static_cast<std::ptrdiff_t>(seed_frames));
    };
    DuelConfig cfg = config;
    cfg.ring = seed.ring;
    DuelEngine engine(policy, policy, cfg);
    DuelResult r;
    r.a.skeleton = seed.clip_a.skeleton;
    r.b.skeleton = seed.clip_b.skeleton;
    r.a.fps = r.b.fps = seed.clip_a.fps;
    r.a.frames = first(seed.clip_a);
    r.b.frames = first(seed.clip_b);
    engine.seed(r.a.frames, r.b.frames, seed.clip_a.skeleton);
    const std::vector<SparseSignal>* none = nullptr;
    std::vector<SparseSignal> held_a, held_b;
    while (r.a.frames.size() < frames) {
        if (policy.config().sparse) {
            held_a = self_signals(engine.agent(0), policy.chunk());
            held_b = self_signals(engine.agent(1), policy.chunk());
        }
        StepFrames s = engine.step(policy.config().sparse ? &held_a : none, policy.config().sparse ? &held_b : none);
        for (auto& f : s.a) r.a.frames.push_back(std::move(f.pose));
        for (auto& f : s.b) r.b.frames.push_back(std::move(f.pose));
    }
    r.a.frames.resize(frames);
    r.b.frames.resize(frames);
    r.diagnostics = engine.diagnostics();
    r.diagnostics.facing_a.resize(frames);
    r.diagnostics.facing_b.resize(frames);
    return r;
}

// ---------------------------------------------------------------- replay drivers

namespace {

MotionClip replay(const ReactionPolicy& policy, const MotionClip& opponent, const MotionClip& agent_seed,
                  const std::vector<SparseSignal>* signals, const ReactiveConfig& config) {
    opponent.validate();
    if (agent_seed.length() < config.seed_frames)
        throw DataError(DataErrc::invalid_argument, "agent seed shorter than the seed length");
    const std::vector<RootFrame> opp_roots = motion::encode_motion(opponent.frames, opponent.skeleton).roots;
    const long n = static_cast<long>(opponent.length());
    const long last = n - 1;
    const OpponentTrack track{
        [&](long f) -> const WorldPose& { return opponent.frames[static_cast<std::size_t>(std::min(f, last))]; },
        [&](long f) -> const RootFrame& { return opp_roots[static_cast<std::size_t>(std::min(f, last))]; }};

    AgentRunner runner(policy, agent_seed.skeleton, config.ring, config.seed, 0);
    std::vector<WorldPose> seed(agent_seed.frames.begin(),
                                agent_seed.frames.begin() + static_cast<std::ptrdiff_t>(config.seed_frames));
    runner.seed(seed, track);

    MotionClip out;
    out.skeleton = agent_seed.skeleton;
    out.fps = opponent.fps;
    out.frames = std::move(seed);
    const int d = policy.chunk();
    const bool sparse = policy.config().sparse;
    std::vector<SparseSignal> next;
    while (runner.end_frame() < n) {
        const long start = runner.end_frame();
        if (sparse) {
            if (!signals) throw DataError(DataErrc::invalid_argument, "sparse policy needs a signal stream");
            next = held_signals(*signals, start, d);
        }
        AgentRunner::Plan p = runner.plan(track, sparse ? &next : nullptr);
        std::vector<RootFrame> roots;
        for (long f = start; f < start + d; ++f) roots.push_back(track.root(f));
        for (const auto& f : p.decoded) out.frames.push_back(f.pose);
        runner.commit(std::move(p), roots);
    }
    out.frames.resize(static_cast<std::size_t>(n));
    return out;
}

}  // namespace

MotionClip run_reactive(const ReactionPolicy& policy, const MotionClip& opponent, const MotionClip& agent_seed,
                        const ReactiveConfig& config) {
    if (policy.config().sparse) {
        // Sparse policies without targets: hold the seed's last signal.
        const std::size_t k = config.seed_frames - 1;
        const auto roots = motion::encode_motion(agent_seed.frames, agent_seed.skeleton).roots;
        const std::vector<SparseSignal> hold = {
            motion::extract_sparse_signal(agent_seed.frames[k], roots[k > 0 ? k - 1 : 0], agent_seed.skeleton)};
        return replay(policy, opponent, agent_seed, &hold, config);
    }
    return replay(policy, opponent, agent_seed, nullptr, config);
}

MotionClip run_sparse(const ReactionPolicy& policy, const MotionClip& opponent, const MotionClip& agent_seed,
                      const std::vector<SparseSignal>& signals, const ReactiveConfig& config) {
    if (!policy.config().sparse) throw ConfigError("run_sparse needs a policy trained with sparse signals");
    return replay(policy, opponent, agent_seed, &signals, config);
}

}  // namespace r2r::engine
