#pragma once

// Stage-1 motion tokenizer: a temporal convolutional autoencoder that maps d
// frames to one latent vector, plus the EMA codebook that quantises latents.

#include "r2r/model/features.hpp"
#include "r2r/nn/layers.hpp"

#include <json.hpp>

#include <optional>
#include <random>
#include <vector>

namespace r2r::model {

struct LatentSequence {
    Matrix latents;            // L x D
    std::vector<int> indices;  // empty for continuous variants
    int downsample = 4;

    int length() const { return static_cast<int>(latents.rows()); }
};

struct CodebookConfig {
    int size = 512;
    int dim = 512;
    double decay = 0.99;
    double epsilon = 1e-5;
    double dead_threshold = 1.0;  // codes whose EMA count falls below this are re-seeded; 0 disables
};

class Codebook {
public:
    Codebook() = default;
    explicit Codebook(const CodebookConfig& config);

    /// Nearest entry in L2 for every row; ties go to the lowest index.
    std::vector<int> nearest(const Matrix& z) const;
    LatentSequence quantize(const Matrix& z) const;

    /// One EMA step from a batch of latents and their assignments.
    void ema_update(const Matrix& z, const std::vector<int>& assignments);
    /// Replaces codes whose EMA count is below the threshold with random batch rows.
    int reseed_dead(const Matrix& z, std::mt19937_64& rng);
    /// Seeds every entry from random batch rows (count 1 each).
    void initialize_from(const Matrix& z, std::mt19937_64& rng);

    bool initialized() const { return initialized_; }
    const Matrix& entries() const { return entries_; }
    const RowVector& cluster_size() const { return cluster_size_; }
    const Matrix& embed_sum() const { return embed_sum_; }
    const CodebookConfig& config() const { return config_; }

    void set_state(Matrix entries, RowVector cluster_size, Matrix embed_sum);
    void save(nn::Archive& ar, const std::string& prefix) const;
    void load(const nn::Archive& ar, const std::string& prefix);

private:
    CodebookConfig config_;
    Matrix entries_;
    RowVector cluster_size_;
    Matrix embed_sum_;
    bool initialized_ = false;
};

enum class EncoderKind { vq, vae };

struct TokenizerConfig {
    int joints = 24;
    int hidden = 512;
    int res_blocks = 2;
    int down_levels = 2;  // downsample factor d = 2^levels
    CodebookConfig codebook;
    EncoderKind kind = EncoderKind::vq;
    double commitment = 0.1;
    double kl_weight = 1e-4;

    int frame_dim() const { return agent_feature_dim(joints); }
    int downsample() const { return 1 << down_levels; }
    int latent_dim() const { return codebook.dim; }

    nlohmann::json to_json() const;
    static TokenizerConfig from_json(const nlohmann::json& j);
};

class Tokenizer {
public:
    Tokenizer() = default;
    Tokenizer(const TokenizerConfig& config, std::uint64_t seed);

    const TokenizerConfig& config() const { return config_; }
    int downsample() const { return config_.downsample(); }
    int latent_dim() const { return config_.latent_dim(); }

    // Graph-level entry points on normalised features stacked per sample.
    /// x is [B*T x F]; returns [B*(T/d) x D] (VAE: the mean) and, for VAE, logvar.
    nn::Tensor encode_tensor(const nn::Tensor& x, int seq_len, nn::Tensor* logvar = nullptr) const;
    /// z is [B*L x D]; returns [B*L*d x F].
    nn::Tensor decode_tensor(const nn::Tensor& z, int latent_len) const;

    // Value-level API on raw frames.
    /// Continuous latents of the first floor(f/d)*d frames (VAE: the posterior mean).
    Matrix encode(const std::vector<motion::MotionFrame>& frames) const;
    Matrix encode_normalized(const Matrix& frames, int seq_len) const;
    /// VQ: nearest codebook entries; VAE: identity with no indices.
    LatentSequence quantize(const Matrix& z) const;
    /// d frames per latent, de-normalised.
    std::vector<motion::MotionFrame> decode(const Matrix& latents) const;
    Matrix decode_normalized(const Matrix& latents, int latent_len) const;

    const Normalizer& normalizer() const { return normalizer_; }
    void set_normalizer(Normalizer n) { normalizer_ = std::move(n); }
    Codebook& codebook() { return codebook_; }
    const Codebook& codebook() const { return codebook_; }

    nn::NamedParams parameters() const;
    nn::Archive to_archive() const;
    static Tokenizer from_archive(const nn::Archive& ar);

private:
    TokenizerConfig config_;
    nn::Conv1d enc_in_;
    std::vector<nn::Conv1d> enc_down_;
    std::vector<std::vector<nn::ResBlock1d>> enc_res_;
    nn::Conv1d enc_out_;
    nn::Conv1d dec_in_;
    std::vector<std::vector<nn::ResBlock1d>> dec_res_;
    std::vector<nn::Conv1d> dec_up_;
    nn::Conv1d dec_mid_;
    nn::Conv1d dec_out_;
    Codebook codebook_;
    Normalizer normalizer_;
};

struct Stage1Config {
    int iterations = 40000;
    int batch = 128;
    int crop = 64;
    double lr = 2e-4;
    double weight_decay = 0.0;
    std::uint64_t seed = 1;
    int log_every = 100;

    nlohmann::json to_json() const;
    static Stage1Config from_json(const nlohmann::json& j);
};

struct Stage1Log {
    std::vector<double> total;
    std::vector<double> reconstruction;
    std::vector<double> commitment;  // KL term for the VAE variant
    std::vector<double> usage;       // fraction of codes hit per logging interval
};

/// Per-role feature streams used as stage-1 training data.
using FrameStreams = std::vector<std::vector<motion::MotionFrame>>;

/// Fits the normaliser (if unset), then trains. Crops shorter streams out.
Stage1Log train_stage1(Tokenizer& tokenizer, const FrameStreams& streams, const Stage1Config& config);

}  // namespace r2r::model
