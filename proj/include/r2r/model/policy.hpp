#pragma once

// Reaction policy: condition encoder over latent steps (own latents plus
// opponent and optional sparse features), next-latent predictor (diffusion or
// categorical head) and the chunk decoder. Latents are handled in a
// per-dimension normalised space throughout.

#include "r2r/data/dataset.hpp"
#include "r2r/model/diffusion.hpp"
#include "r2r/model/online_decoder.hpp"
#include "r2r/model/tokenizer.hpp"

#include <deque>
#include <optional>
#include <random>
#include <span>

namespace r2r::model {

enum class PredictorKind { diffusion, gpt };
enum class LatentSource { tokenizer, raw };  // raw: d normalised frames concatenated
enum class DecoderKind { online, offline };  // offline: the tokenizer decoder on one latent

struct PolicyConfig {
    int window = 60;
    int model_dim = 512;
    int layers = 4;
    int heads = 8;
    int mlp_ratio = 4;
    PredictorKind predictor = PredictorKind::diffusion;
    LatentSource latent_source = LatentSource::tokenizer;
    DecoderKind decoder = DecoderKind::online;
    OnlineDecoderConfig online_decoder;
    DiffusionConfig diffusion;
    int head_hidden = 512;
    int time_dim = 128;
    int diffusion_repeat = 4;
    bool sparse = false;
    double frame_weight = 1.0;
    double root_weight = 1.0;
    bool quantize_feedback = false;
    double temperature = 1.0;
    int top_k = 0;

    nlohmann::json to_json() const;
    static PolicyConfig from_json(const nlohmann::json& j);
    /// Throws ConfigError for inconsistent combinations.
    void validate(const TokenizerConfig& tokenizer) const;
};

/// Causal transformer over latent steps with learned positions.
class ConditionEncoder {
public:
    ConditionEncoder() = default;
    ConditionEncoder(int latent_dim, int opponent_dim, int sparse_dim, const PolicyConfig& config, int max_steps,
                     nn::Rng& rng);

    /// Inputs stacked per sample with `steps` rows each; sparse is undefined
    /// when the encoder has no sparse input.
    nn::Tensor forward(const nn::Tensor& latents, const nn::Tensor& opponent, const nn::Tensor& sparse,
                       int steps) const;
    /// One sequence, value level: returns [L x M].
    Matrix encode(const Matrix& latents, const Matrix& opponent, const Matrix& sparse) const;

    /// Per-layer keys and values of the positions seen so far.
    struct Cache {
        std::vector<Matrix> keys;
        std::vector<Matrix> values;
        int length = 0;
    };
    /// Appends one step at position cache.length and returns its output row.
    RowVector append(Cache& cache, const RowVector& latent, const RowVector& opponent, const RowVector& sparse) const;

    int max_steps() const { return static_cast<int>(positions_.rows()); }
    int model_dim() const { return static_cast<int>(positions_.cols()); }
    bool has_sparse() const { return sparse_dim_ > 0; }
    void collect(nn::NamedParams& out, const std::string& prefix) const;

private:
    nn::Tensor embed(const nn::Tensor& latents, const nn::Tensor& opponent, const nn::Tensor& sparse) const;

    int sparse_dim_ = 0;
    nn::Linear opponent_mlp_;
    nn::Linear sparse_mlp_;
    nn::Linear input_;
    nn::Tensor positions_;
    nn::Transformer body_;
};

/// Draws an index from softmax(logits / temperature), restricted to the top_k
/// largest logits when top_k > 0. temperature <= 0 returns the argmax.
int sample_categorical(const RowVector& logits, double temperature, int top_k, std::mt19937_64& rng);

/// Normalised per-stream inputs of the policy, one row per latent step.
struct StreamFeatures {
    Matrix latents;
    std::vector<int> indices;  // codebook indices when quantised
    Matrix opponent;           // [L x d*12J]
    Matrix sparse;             // [L x d*27] of the same chunk, empty without sparse
    Matrix frames;             // [L*d x F]
    Matrix roots;              // [L*d x 5]
};

class ReactionPolicy {
public:
    ReactionPolicy() = default;
    ReactionPolicy(const PolicyConfig& config, Tokenizer tokenizer, std::uint64_t seed);

    const PolicyConfig& config() const { return config_; }
    const Tokenizer& tokenizer() const { return tokenizer_; }
    int chunk() const { return tokenizer_.downsample(); }
    int steps() const { return config_.window / chunk(); }
    int joints() const { return tokenizer_.config().joints; }
    int latent_dim() const { return latent_dim_; }

    /// Fits every feature normaliser (frames, opponent, roots, sparse, latents).
    void fit_normalizers(const std::vector<data::RoleStream>& streams);
    StreamFeatures features(const data::RoleStream& stream) const;

    /// Normalised latent of one chunk of d frames (seeding and re-encoding).
    RowVector chunk_latent(std::span<const motion::MotionFrame> frames) const;
    RowVector opponent_feature(std::span<const motion::OpponentFrame> frames) const;
    RowVector sparse_feature(std::span<const motion::SparseSignal> signals) const;

    const ConditionEncoder& encoder() const { return encoder_; }
    Matrix encode_condition(const Matrix& latents, const Matrix& opponent, const Matrix& sparse) const;

    /// Next normalised latent from one condition row.
    RowVector sample_next(const RowVector& condition, std::mt19937_64& rng) const;
    /// Snaps to the codebook when quantize_feedback is on; identity otherwise.
    RowVector feedback_latent(const RowVector& latent) const;

    /// Next chunk. Offline and raw variants ignore the history and return no root infos.
    DecoderOutputs decode(const DecoderInputs& inputs) const;

    const DiffusionHead& diffusion_head() const { return diffusion_head_; }
    const nn::Linear& gpt_head() const { return gpt_head_; }
    const OnlineDecoder& online_decoder() const { return decoder_; }
    const FeatureNorms& decoder_norms() const { return norms_; }
    const Normalizer& latent_norm() const { return latent_norm_; }
    const Normalizer& opponent_norm() const { return opponent_norm_; }
    const NoiseSchedule& schedule() const { return schedule_; }
    bool uses_online_decoder() const;

    nn::NamedParams parameters() const;
    nn::Archive to_archive() const;
    static ReactionPolicy from_archive(const nn::Archive& ar);

private:
    RowVector denormalized_latent(const RowVector& latent) const;

    PolicyConfig config_;
    Tokenizer tokenizer_;
    int latent_dim_ = 0;
    ConditionEncoder encoder_;
    DiffusionHead diffusion_head_;
    nn::Linear gpt_head_;
    OnlineDecoder decoder_;
    FeatureNorms norms_;
    Normalizer opponent_norm_;
    Normalizer latent_norm_;
    NoiseSchedule schedule_{DiffusionConfig{}};
};

/// Per-agent streaming state: the last W/d latent steps and the encoder cache.
/// Appending while the window is not full reuses cached keys and values; once
/// it slides the positions shift and the cache is rebuilt.
class PolicyStream {
public:
    explicit PolicyStream(const ReactionPolicy& policy) : policy_(&policy) {}

    /// Adds a latent step and returns its condition row.
    RowVector push(const RowVector& latent, const RowVector& opponent, const RowVector& sparse);
    void reset();
    int length() const { return static_cast<int>(latents_.size()); }
    const std::deque<RowVector>& latents() const { return latents_; }

private:
    const ReactionPolicy* policy_;
    std::deque<RowVector> latents_;
    std::deque<RowVector> opponent_;
    std::deque<RowVector> sparse_;
    ConditionEncoder::Cache cache_;
};

struct Stage2Config {
    int iterations = 40000;
    int batch = 32;
    double lr = 1e-4;
    double weight_decay = 0.01;
    std::uint64_t seed = 1;
    int log_every = 100;
    bool teacher_forcing = true;

    nlohmann::json to_json() const;
    static Stage2Config from_json(const nlohmann::json& j);
};

struct Stage2Log {
    std::vector<double> total;
    std::vector<double> latent;  // diffusion or cross-entropy term
    std::vector<double> frames;
    std::vector<double> roots;
};

/// Fits the normalisers if unset, then trains on crops of W + d frames with the
/// tokenizer frozen.
Stage2Log train_stage2(ReactionPolicy& policy, const std::vector<data::RoleStream>& streams,
                       const Stage2Config& config);

}  // namespace r2r::model
