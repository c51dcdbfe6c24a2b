#include "r2r/model/policy.hpp"

#include "r2r/common/error.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace r2r::model {

using nn::Tensor;

namespace {

const char* name_of(PredictorKind k) { return k == PredictorKind::diffusion ? "diffusion" : "gpt"; }
const char* name_of(LatentSource s) { return s == LatentSource::tokenizer ? "tokenizer" : "raw"; }
const char* name_of(DecoderKind k) { return k == DecoderKind::online ? "online" : "offline"; }

template <typename E>
E parse_enum(const std::string& s, std::initializer_list<E> options, const char* what) {
    for (E e : options)
        if (s == name_of(e)) return e;
    throw ConfigError(std::string("unknown ") + what + " '" + s + "'");
}

Matrix stack_range(const auto& items, std::size_t start, std::size_t count) {
    return stack(std::span(items.data() + start, count));
}

Matrix append_row(const Matrix& m, const RowVector& row) {
    Matrix out(m.rows() + 1, row.cols());
    if (m.rows() > 0) out.topRows(m.rows()) = m;
    out.row(m.rows()) = row;
    return out;
}

bool is_default(const Normalizer& n) { return n.mean().isZero() && n.scale().isOnes(); }

}  // namespace

nlohmann::json PolicyConfig::to_json() const {
    return {{"window", window},
            {"model_dim", model_dim},
            {"layers", layers},
            {"heads", heads},
            {"mlp_ratio", mlp_ratio},
            {"predictor", name_of(predictor)},
            {"latent_source", name_of(latent_source)},
            {"decoder", name_of(decoder)},
            {"online_decoder", online_decoder.to_json()},
            {"diffusion", diffusion.to_json()},
            {"head_hidden", head_hidden},
            {"time_dim", time_dim},
            {"diffusion_repeat", diffusion_repeat},
            {"sparse", sparse},
            {"frame_weight", frame_weight},
            {"root_weight", root_weight},
            {"quantize_feedback", quantize_feedback},
            {"temperature", temperature},
            {"top_k", top_k}};
}

PolicyConfig PolicyConfig::from_json(const nlohmann::json& j) {
    PolicyConfig c;
    c.window = j.value("window", c.window);
    c.model_dim = j.value("model_dim", c.model_dim);
    c.layers = j.value("layers", c.layers);
    c.heads = j.value("heads", c.heads);
    c.mlp_ratio = j.value("mlp_ratio", c.mlp_ratio);
    c.predictor = parse_enum(j.value("predictor", std::string(name_of(c.predictor))),
                             {PredictorKind::diffusion, PredictorKind::gpt}, "predictor");
    c.latent_source = parse_enum(j.value("latent_source", std::string(name_of(c.latent_source))),
                                 {LatentSource::tokenizer, LatentSource::raw}, "latent source");
    c.decoder = parse_enum(j.value("decoder", std::string(name_of(c.decoder))),
                           {DecoderKind::online, DecoderKind::offline}, "decoder");
    if (j.contains("online_decoder")) c.online_decoder = OnlineDecoderConfig::from_json(j.at("online_decoder"));
    if (j.contains("diffusion")) c.diffusion = DiffusionConfig::from_json(j.at("diffusion"));
    c.head_hidden = j.value("head_hidden", c.head_hidden);
    c.time_dim = j.value("time_dim", c.time_dim);
    c.diffusion_repeat = j.value("diffusion_repeat", c.diffusion_repeat);
    c.sparse = j.value("sparse", c.sparse);
    c.frame_weight = j.value("frame_weight", c.frame_weight);
    c.root_weight = j.value("root_weight", c.root_weight);
    c.quantize_feedback = j.value("quantize_feedback", c.quantize_feedback);
    c.temperature = j.value("temperature", c.temperature);
    c.top_k = j.value("top_k", c.top_k);
    return c;
}

void PolicyConfig::validate(const TokenizerConfig& tokenizer) const {
    const int d = tokenizer.downsample();
    if (window < d || window % d != 0) throw ConfigError("window must be a positive multiple of the downsample factor");
    if (model_dim <= 0 || heads <= 0 || model_dim % heads != 0) throw ConfigError("model_dim must be divisible by heads");
    if (online_decoder.model_dim % online_decoder.heads != 0)
        throw ConfigError("decoder model_dim must be divisible by its heads");
    if (layers < 1 || diffusion_repeat < 1) throw ConfigError("layers and diffusion_repeat must be positive");
    diffusion.validate();
    if (predictor == PredictorKind::gpt &&
        (latent_source != LatentSource::tokenizer || tokenizer.kind != EncoderKind::vq))
        throw ConfigError("the categorical head needs a quantised tokenizer");
    if (decoder == DecoderKind::offline && latent_source != LatentSource::tokenizer)
        throw ConfigError("the offline decoder needs tokenizer latents");
    if (frame_weight < 0 || root_weight < 0) throw ConfigError("loss weights must be non-negative");
}

// ---------------------------------------------------------------- encoder

ConditionEncoder::ConditionEncoder(int latent_dim, int opponent_dim, int sparse_dim, const PolicyConfig& config,
                                   int max_steps, nn::Rng& rng)
    : sparse_dim_(sparse_dim) {
    opponent_mlp_ = nn::Linear(opponent_dim, latent_dim, rng);
    if (sparse_dim > 0) sparse_mlp_ = nn::Linear(sparse_dim, latent_dim, rng);
    input_ = nn::Linear(latent_dim * (sparse_dim > 0 ? 3 : 2), config.model_dim, rng);
    positions_ = nn::uniform_param(max_steps, config.model_dim, 0.02, rng);
    body_ = nn::Transformer(config.model_dim, config.heads, config.layers, config.mlp_ratio, rng);
}

Tensor ConditionEncoder::embed(const Tensor& latents, const Tensor& opponent, const Tensor& sparse) const {
    std::vector<Tensor> parts = {latents, opponent_mlp_.forward(opponent)};
    if (has_sparse()) {
        if (!sparse.defined()) throw DataError(DataErrc::invalid_argument, "condition encoder needs sparse inputs");
        parts.push_back(sparse_mlp_.forward(sparse));
    }
    return input_.forward(nn::concat_cols(parts));
}

Tensor ConditionEncoder::forward(const Tensor& latents, const Tensor& opponent, const Tensor& sparse, int steps) const {
    if (steps < 1 || steps > max_steps()) throw DataError(DataErrc::invalid_argument, "condition sequence too long");
    if (latents.rows() != opponent.rows() || (has_sparse() && sparse.defined() && sparse.rows() != latents.rows()))
        throw DataError(DataErrc::length_mismatch, "condition input streams differ in length");
    const Tensor x = nn::add_tiled(embed(latents, opponent, sparse), nn::slice_rows(positions_, 0, steps));
    return body_.forward(x, steps, true);
}

Matrix ConditionEncoder::encode(const Matrix& latents, const Matrix& opponent, const Matrix& sparse) const {
    nn::NoGradGuard guard;
    const Tensor s = has_sparse() ? Tensor::constant(sparse) : Tensor();
    return forward(Tensor::constant(latents), Tensor::constant(opponent), s, static_cast<int>(latents.rows())).value();
}

RowVector ConditionEncoder::append(Cache& cache, const RowVector& latent, const RowVector& opponent,
                                   const RowVector& sparse) const {
    if (cache.length >= max_steps()) throw DataError(DataErrc::invalid_argument, "encoder cache is full");
    nn::NoGradGuard guard;
    const auto& blocks = body_.blocks();
    if (cache.keys.empty()) {
        cache.keys.assign(blocks.size(), Matrix(0, model_dim()));
        cache.values.assign(blocks.size(), Matrix(0, model_dim()));
    }
    const Tensor s = has_sparse() ? Tensor::constant(sparse) : Tensor();
    Matrix x = embed(Tensor::constant(latent), Tensor::constant(opponent), s).value();
    x += positions_.value().row(cache.length);

    const Eigen::Index m = model_dim();
    for (std::size_t b = 0; b < blocks.size(); ++b) {
        const auto& block = blocks[b];
        const Matrix qkv = block.qkv().forward(block.ln1().forward(Tensor::constant(x))).value();
        cache.keys[b] = append_row(cache.keys[b], qkv.middleCols(m, m));
        cache.values[b] = append_row(cache.values[b], qkv.middleCols(2 * m, m));
        const Matrix& keys = cache.keys[b];
        const Matrix& values = cache.values[b];
        const int heads = block.heads();
        const Eigen::Index dh = m / heads;
        const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
        Matrix att(1, m);
        for (int h = 0; h < heads; ++h) {
            Eigen::VectorXd scores = keys.middleCols(h * dh, dh) * qkv.block(0, h * dh, 1, dh).transpose() * scale;
            scores = (scores.array() - scores.maxCoeff()).exp();
            scores /= scores.sum();
            att.middleCols(h * dh, dh) = scores.transpose() * values.middleCols(h * dh, dh);
        }
        x += block.proj().forward(Tensor::constant(att)).value();
        const Tensor hidden = nn::gelu(block.fc1().forward(block.ln2().forward(Tensor::constant(x))));
        x += block.fc2().forward(hidden).value();
    }
    ++cache.length;
    return body_.final_norm().forward(Tensor::constant(x)).value();
}

void ConditionEncoder::collect(nn::NamedParams& out, const std::string& prefix) const {
    opponent_mlp_.collect(out, prefix + ".opponent");
    if (has_sparse()) sparse_mlp_.collect(out, prefix + ".sparse");
    input_.collect(out, prefix + ".input");
    out.emplace_back(prefix + ".positions", positions_);
    body_.collect(out, prefix + ".body");
}

int sample_categorical(const RowVector& logits, double temperature, int top_k, std::mt19937_64& rng) {
    const Eigen::Index k = logits.cols();
    if (k == 0) throw DataError(DataErrc::invalid_argument, "no logits to sample from");
    if (!logits.allFinite()) throw NumericError("non-finite logits");
    Eigen::Index best = 0;
    logits.maxCoeff(&best);
    if (temperature <= 0.0) return static_cast<int>(best);

    std::vector<double> p(static_cast<std::size_t>(k));
    double cutoff = -std::numeric_limits<double>::infinity();
    if (top_k > 0 && top_k < k) {
        std::vector<double> sorted(logits.data(), logits.data() + k);
        std::nth_element(sorted.begin(), sorted.begin() + (top_k - 1), sorted.end(), std::greater<>());
        cutoff = sorted[static_cast<std::size_t>(top_k - 1)];
    }
    const double mx = logits(best);
    double total = 0.0;
    for (Eigen::Index i = 0; i < k; ++i) {
        const double e = logits(i) >= cutoff ? std::exp((logits(i) - mx) / temperature) : 0.0;
        p[static_cast<std::size_t>(i)] = e;
        total += e;
    }
    const double u = std::uniform_real_distribution<double>(0.0, total)(rng);
    double acc = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        acc += p[i];
        if (u < acc) return static_cast<int>(i);
    }
    return static_cast<int>(best);
}

// ---------------------------------------------------------------- policy

ReactionPolicy::ReactionPolicy(const PolicyConfig& config, Tokenizer tokenizer, std::uint64_t seed)
    : config_(config), tokenizer_(std::move(tokenizer)), schedule_(config.diffusion) {
    config_.validate(tokenizer_.config());
    config_.online_decoder.sparse = config_.sparse;
    const int d = chunk();
    const int j = joints();
    const int frame_dim = agent_feature_dim(j);
    latent_dim_ = config_.latent_source == LatentSource::raw ? d * frame_dim : tokenizer_.latent_dim();

    nn::Rng rng(seed);
    encoder_ = ConditionEncoder(latent_dim_, d * opponent_feature_dim(j), config_.sparse ? d * kSparseDim : 0, config_,
                                steps(), rng);
    if (config_.predictor == PredictorKind::diffusion)
        diffusion_head_ = DiffusionHead(latent_dim_, config_.model_dim, config_.head_hidden, config_.time_dim, rng);
    else
        gpt_head_ = nn::Linear(config_.model_dim, tokenizer_.config().codebook.size, rng);
    if (uses_online_decoder()) decoder_ = OnlineDecoder(config_.online_decoder, j, latent_dim_, d, rng);

    norms_.frame = Normalizer(frame_dim);
    norms_.root = Normalizer(kRootInfoDim);
    norms_.sparse = Normalizer(kSparseDim);
    opponent_norm_ = Normalizer(opponent_feature_dim(j));
    latent_norm_ = Normalizer(latent_dim_);
}

bool ReactionPolicy::uses_online_decoder() const {
    return config_.decoder == DecoderKind::online && config_.latent_source == LatentSource::tokenizer;
}

namespace {

struct RawLatents {
    Matrix latents;
    std::vector<int> indices;
};

}  // namespace

static RawLatents raw_latents(const ReactionPolicy& p, const Normalizer& frame_norm,
                              std::span<const motion::MotionFrame> frames) {
    const std::size_t d = static_cast<std::size_t>(p.chunk());
    const std::size_t n = frames.size() / d * d;
    if (n == 0) throw DataError(DataErrc::invalid_argument, "stream shorter than one chunk");
    RawLatents out;
    if (p.config().latent_source == LatentSource::raw) {
        out.latents = group_rows(frame_norm.apply(stack(frames.first(n))), p.chunk());
        return out;
    }
    const Matrix z = p.tokenizer().encode(std::vector(frames.begin(), frames.begin() + static_cast<std::ptrdiff_t>(n)));
    LatentSequence q = p.tokenizer().quantize(z);
    out.latents = std::move(q.latents);
    out.indices = std::move(q.indices);
    return out;
}

void ReactionPolicy::fit_normalizers(const std::vector<data::RoleStream>& streams) {
    if (streams.empty()) throw DataError(DataErrc::invalid_argument, "no streams to fit normalisers on");
    std::vector<Matrix> frames, opp, roots, sparse;
    for (const auto& s : streams) {
        frames.push_back(stack(std::span(s.agent)));
        opp.push_back(stack(std::span(s.opponent)));
        roots.push_back(stack(std::span(s.roots)));
        if (config_.sparse) {
            if (s.sparse.size() != s.length()) throw DataError(DataErrc::length_mismatch, "sparse stream length");
            sparse.push_back(stack(std::span(s.sparse)));
        }
    }
    auto concat = [](const std::vector<Matrix>& parts) {
        Eigen::Index rows = 0;
        for (const auto& m : parts) rows += m.rows();
        Matrix all(rows, parts.front().cols());
        Eigen::Index at = 0;
        for (const auto& m : parts) {
            all.middleRows(at, m.rows()) = m;
            at += m.rows();
        }
        return all;
    };
    norms_.frame = Normalizer::fit(concat(frames));
    opponent_norm_ = Normalizer::fit(concat(opp));
    norms_.root = Normalizer::fit(concat(roots));
    if (config_.sparse) norms_.sparse = Normalizer::fit(concat(sparse));
    std::vector<Matrix> latents;
    for (const auto& s : streams)
        if (s.length() >= static_cast<std::size_t>(chunk()))
            latents.push_back(raw_latents(*this, norms_.frame, std::span(s.agent)).latents);
    latent_norm_ = Normalizer::fit(concat(latents));
}

StreamFeatures ReactionPolicy::features(const data::RoleStream& stream) const {
    const auto d = static_cast<std::size_t>(chunk());
    if (stream.opponent.size() != stream.length() || stream.roots.size() != stream.length())
        throw DataError(DataErrc::length_mismatch, "role stream lengths differ");
    RawLatents raw = raw_latents(*this, norms_.frame, std::span(stream.agent));
    const std::size_t n = static_cast<std::size_t>(raw.latents.rows()) * d;
    StreamFeatures f;
    f.latents = latent_norm_.apply(raw.latents);
    f.indices = std::move(raw.indices);
    f.opponent = group_rows(opponent_norm_.apply(stack_range(stream.opponent, 0, n)), chunk());
    if (config_.sparse) {
        if (stream.sparse.size() != stream.length()) throw DataError(DataErrc::length_mismatch, "sparse stream length");
        f.sparse = group_rows(norms_.sparse.apply(stack_range(stream.sparse, 0, n)), chunk());
    }
    f.frames = norms_.frame.apply(stack_range(stream.agent, 0, n));
    f.roots = norms_.root.apply(stack_range(stream.roots, 0, n));
    return f;
}

RowVector ReactionPolicy::chunk_latent(std::span<const motion::MotionFrame> frames) const {
    if (frames.size() != static_cast<std::size_t>(chunk()))
        throw DataError(DataErrc::invalid_argument, "chunk latent needs exactly d frames");
    return latent_norm_.apply(raw_latents(*this, norms_.frame, frames).latents);
}

RowVector ReactionPolicy::opponent_feature(std::span<const motion::OpponentFrame> frames) const {
    if (frames.size() != static_cast<std::size_t>(chunk()))
        throw DataError(DataErrc::invalid_argument, "opponent feature needs exactly d frames");
    return group_rows(opponent_norm_.apply(stack(frames)), chunk());
}

RowVector ReactionPolicy::sparse_feature(std::span<const motion::SparseSignal> signals) const {
    if (!config_.sparse) return {};
    if (signals.size() != static_cast<std::size_t>(chunk()))
        throw DataError(DataErrc::invalid_argument, "sparse feature needs exactly d signals");
    return group_rows(norms_.sparse.apply(stack(signals)), chunk());
}

Matrix ReactionPolicy::encode_condition(const Matrix& latents, const Matrix& opponent, const Matrix& sparse) const {
    return encoder_.encode(latents, opponent, sparse);
}

RowVector ReactionPolicy::denormalized_latent(const RowVector& latent) const { return latent_norm_.invert(latent); }

RowVector ReactionPolicy::sample_next(const RowVector& condition, std::mt19937_64& rng) const {
    if (config_.predictor == PredictorKind::diffusion)
        return ddim_sample(schedule_, config_.diffusion.ddim_steps, diffusion_head_.denoiser(), condition, latent_dim_, rng);
    nn::NoGradGuard guard;
    const RowVector logits = gpt_head_.forward(Tensor::constant(condition)).value();
    const int index = sample_categorical(logits, config_.temperature, config_.top_k, rng);
    return latent_norm_.apply(tokenizer_.codebook().entries().row(index));
}

RowVector ReactionPolicy::feedback_latent(const RowVector& latent) const {
    if (!config_.quantize_feedback || config_.latent_source != LatentSource::tokenizer ||
        tokenizer_.config().kind != EncoderKind::vq)
        return latent;
    return latent_norm_.apply(tokenizer_.quantize(denormalized_latent(latent)).latents);
}

DecoderOutputs ReactionPolicy::decode(const DecoderInputs& in) const {
    if (uses_online_decoder()) return decoder_.decode_chunk(in, norms_);
    if (!in.latent_cur.allFinite()) throw NumericError("latent is not finite");
    DecoderOutputs out;
    if (config_.latent_source == LatentSource::tokenizer) {
        out.next_frames = tokenizer_.decode(denormalized_latent(in.latent_cur));
    } else {
        const Matrix rows = norms_.frame.invert(ungroup_rows(denormalized_latent(in.latent_cur), chunk()));
        for (Eigen::Index r = 0; r < rows.rows(); ++r) out.next_frames.push_back(unflatten_agent(rows.row(r), joints()));
    }
    return out;
}

nn::NamedParams ReactionPolicy::parameters() const {
    nn::NamedParams out;
    encoder_.collect(out, "encoder");
    if (config_.predictor == PredictorKind::diffusion)
        diffusion_head_.collect(out, "diffusion");
    else
        gpt_head_.collect(out, "gpt");
    if (uses_online_decoder()) decoder_.collect(out, "decoder");
    return out;
}

nn::Archive ReactionPolicy::to_archive() const {
    nn::Archive ar;
    ar.meta["kind"] = "policy";
    ar.meta["config"] = config_.to_json();
    ar.put_params(parameters(), "net.");
    norms_.frame.save(ar, "norm.frame");
    norms_.root.save(ar, "norm.root");
    norms_.sparse.save(ar, "norm.sparse");
    opponent_norm_.save(ar, "norm.opponent");
    latent_norm_.save(ar, "norm.latent");
    ar.embed(tokenizer_.to_archive(), "tokenizer/", "tokenizer");
    return ar;
}

ReactionPolicy ReactionPolicy::from_archive(const nn::Archive& ar) {
    if (ar.meta.value("kind", "") != "policy") throw DataError(DataErrc::malformed_header, "archive is not a policy");
    ReactionPolicy p(PolicyConfig::from_json(ar.meta.at("config")), Tokenizer::from_archive(ar.extract("tokenizer/", "tokenizer")), 0);
    ar.get_params(p.parameters(), "net.");
    p.norms_.frame = Normalizer::load(ar, "norm.frame");
    p.norms_.root = Normalizer::load(ar, "norm.root");
    p.norms_.sparse = Normalizer::load(ar, "norm.sparse");
    p.opponent_norm_ = Normalizer::load(ar, "norm.opponent");
    p.latent_norm_ = Normalizer::load(ar, "norm.latent");
    return p;
}

// ---------------------------------------------------------------- streaming

RowVector PolicyStream::push(const RowVector& latent, const RowVector& opponent, const RowVector& sparse) {
    const ConditionEncoder& enc = policy_->encoder();
    latents_.push_back(latent);
    opponent_.push_back(opponent);
    sparse_.push_back(sparse);
    if (static_cast<int>(latents_.size()) <= enc.max_steps()) return enc.append(cache_, latent, opponent, sparse);
    latents_.pop_front();
    opponent_.pop_front();
    sparse_.pop_front();
    cache_ = {};
    RowVector out;
    for (std::size_t i = 0; i < latents_.size(); ++i) out = enc.append(cache_, latents_[i], opponent_[i], sparse_[i]);
    return out;
}

void PolicyStream::reset() {
    latents_.clear();
    opponent_.clear();
    sparse_.clear();
    cache_ = {};
}

// ---------------------------------------------------------------- training

nlohmann::json Stage2Config::to_json() const {
    return {{"iterations", iterations}, {"batch", batch}, {"lr", lr}, {"weight_decay", weight_decay},
            {"seed", seed}, {"log_every", log_every}, {"teacher_forcing", teacher_forcing}};
}

Stage2Config Stage2Config::from_json(const nlohmann::json& j) {
    Stage2Config c;
    c.iterations = j.value("iterations", c.iterations);
    c.batch = j.value("batch", c.batch);
    c.lr = j.value("lr", c.lr);
    c.weight_decay = j.value("weight_decay", c.weight_decay);
    c.seed = j.value("seed", c.seed);
    c.log_every = j.value("log_every", c.log_every);
    c.teacher_forcing = j.value("teacher_forcing", c.teacher_forcing);
    return c;
}

Stage2Log train_stage2(ReactionPolicy& policy, const std::vector<data::RoleStream>& streams, const Stage2Config& config) {
    const PolicyConfig& pc = policy.config();
    const int d = policy.chunk();
    const int steps = policy.steps();
    if (is_default(policy.latent_norm())) policy.fit_normalizers(streams);

    std::vector<StreamFeatures> feats;
    std::vector<std::pair<std::size_t, int>> crops;
    for (const auto& s : streams) {
        if (s.length() < static_cast<std::size_t>((steps + 1) * d)) continue;
        feats.push_back(policy.features(s));
        const int latent_len = static_cast<int>(feats.back().latents.rows());
        for (int start = 0; start + steps < latent_len; ++start) crops.emplace_back(feats.size() - 1, start);
    }
    if (crops.empty()) throw DataError(DataErrc::invalid_argument, "no stream covers one training crop");

    const bool gpt = pc.predictor == PredictorKind::gpt;
    const bool online = policy.uses_online_decoder();
    const int latent_dim = policy.latent_dim();
    const int opp_dim = static_cast<int>(feats.front().opponent.cols());
    const int frame_dim = static_cast<int>(feats.front().frames.cols());
    const int sparse_dim = pc.sparse ? static_cast<int>(feats.front().sparse.cols()) : 0;

    std::mt19937_64 rng(config.seed);
    nn::AdamWConfig opt_cfg;
    opt_cfg.lr = config.lr;
    opt_cfg.weight_decay = config.weight_decay;
    nn::AdamW opt(policy.parameters(), opt_cfg);
    std::uniform_int_distribution<std::size_t> pick(0, crops.size() - 1);

    const Eigen::Index rows = static_cast<Eigen::Index>(config.batch) * steps;
    Stage2Log log;
    double acc_total = 0, acc_latent = 0, acc_frames = 0, acc_roots = 0;
    for (int it = 1; it <= config.iterations; ++it) {
        Matrix latents(rows, latent_dim), targets(rows, latent_dim), opp(rows, opp_dim), sparse(rows, sparse_dim);
        Matrix prev_frames(rows * d, frame_dim), next_frames(rows * d, frame_dim);
        Matrix prev_roots(rows * d, kRootInfoDim), next_roots(rows * d, kRootInfoDim);
        std::vector<int> target_idx;
        for (int b = 0; b < config.batch; ++b) {
            const auto [si, start] = crops[pick(rng)];
            const StreamFeatures& f = feats[si];
            const Eigen::Index at = static_cast<Eigen::Index>(b) * steps;
            latents.middleRows(at, steps) = f.latents.middleRows(start, steps);
            targets.middleRows(at, steps) = f.latents.middleRows(start + 1, steps);
            opp.middleRows(at, steps) = f.opponent.middleRows(start, steps);
            if (pc.sparse) sparse.middleRows(at, steps) = f.sparse.middleRows(start + 1, steps);
            if (gpt)
                for (int l = 0; l < steps; ++l) target_idx.push_back(f.indices[static_cast<std::size_t>(start + 1 + l)]);
            if (online) {
                const Eigen::Index fr = static_cast<Eigen::Index>(start) * d;
                const Eigen::Index n = static_cast<Eigen::Index>(steps) * d;
                prev_frames.middleRows(at * d, n) = f.frames.middleRows(fr, n);
                next_frames.middleRows(at * d, n) = f.frames.middleRows(fr + d, n);
                prev_roots.middleRows(at * d, n) = f.roots.middleRows(fr, n);
                next_roots.middleRows(at * d, n) = f.roots.middleRows(fr + d, n);
            }
        }

        const Tensor sparse_t = pc.sparse ? Tensor::constant(sparse) : Tensor();
        Matrix encoder_latents = latents;
        if (!config.teacher_forcing) {
            // Own-prediction rollout: step l+1 sees the latent sampled from step l.
            Matrix cond;
            {
                nn::NoGradGuard guard;
                cond = policy.encoder()
                           .forward(Tensor::constant(latents), Tensor::constant(opp), sparse_t, steps)
                           .value();
            }
            for (int b = 0; b < config.batch; ++b)
                for (int l = 0; l + 1 < steps; ++l) {
                    const Eigen::Index r = static_cast<Eigen::Index>(b) * steps + l;
                    encoder_latents.row(r + 1) = policy.sample_next(cond.row(r), rng);
                }
        }

        opt.zero_grad();
        const Tensor cond =
            policy.encoder().forward(Tensor::constant(encoder_latents), Tensor::constant(opp), sparse_t, steps);
        Tensor latent_loss = gpt ? nn::cross_entropy(policy.gpt_head().forward(cond), target_idx)
                                 : policy.diffusion_head().loss(cond, targets, policy.schedule(), pc.diffusion_repeat, rng);
        Tensor total = latent_loss;
        double frame_value = 0.0, root_value = 0.0;
        if (online) {
            const Tensor dec_sparse = pc.sparse ? Tensor::constant(ungroup_rows(sparse, d)) : Tensor();
            const auto [f, r] = policy.online_decoder().forward(Tensor::constant(prev_frames), Tensor::constant(prev_roots),
                                                                Tensor::constant(latents), Tensor::constant(targets),
                                                                dec_sparse);
            const Tensor fl = nn::mse(f, next_frames);
            const Tensor rl = nn::mse(r, next_roots);
            frame_value = fl.item();
            root_value = rl.item();
            total = nn::add(total, nn::add(nn::scale(fl, pc.frame_weight), nn::scale(rl, pc.root_weight)));
        }
        if (!std::isfinite(total.item())) throw NumericError("stage-2 loss is not finite", -1, -1, it);
        total.backward();
        opt.step();

        acc_total += total.item();
        acc_latent += latent_loss.item();
        acc_frames += frame_value;
        acc_roots += root_value;
        if (it % config.log_every == 0 || it == config.iterations) {
            const int span = it % config.log_every == 0 ? config.log_every : it % config.log_every;
            log.total.push_back(acc_total / span);
            log.latent.push_back(acc_latent / span);
            log.frames.push_back(acc_frames / span);
            log.roots.push_back(acc_roots / span);
            acc_total = acc_latent = acc_frames = acc_roots = 0;
        }
    }
    return log;
}

}  // namespace r2r::model
