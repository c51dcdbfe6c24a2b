#pragma once

// Chunk decoder: from the last d frames, their root infos and two consecutive
// latents it predicts the next d frames and root infos. It is stateless; the
// streaming loop feeds its own outputs back as history.

#include "r2r/model/features.hpp"
#include "r2r/nn/layers.hpp"

#include <json.hpp>

#include <optional>
#include <vector>

namespace r2r::model {

struct OnlineDecoderConfig {
    int model_dim = 256;
    int layers = 2;
    int heads = 4;
    int mlp_ratio = 4;
    bool use_root_info = true;  // false zeroes the root-info inputs
    bool sparse = false;

    nlohmann::json to_json() const;
    static OnlineDecoderConfig from_json(const nlohmann::json& j);
};

/// Latents are in the policy's normalised latent space.
struct DecoderInputs {
    std::vector<motion::MotionFrame> prev_frames;
    std::vector<motion::RootInfo> prev_roots;
    RowVector latent_prev;
    RowVector latent_cur;
    std::optional<std::vector<motion::SparseSignal>> sparse;  // signals of the frames being generated
};

struct DecoderOutputs {
    std::vector<motion::MotionFrame> next_frames;
    std::vector<motion::RootInfo> next_roots;
};

struct FeatureNorms {
    Normalizer frame;
    Normalizer root;
    Normalizer sparse;
};

class OnlineDecoder {
public:
    OnlineDecoder() = default;
    OnlineDecoder(const OnlineDecoderConfig& config, int joints, int latent_dim, int chunk, nn::Rng& rng);

    /// All inputs normalised; rows grouped per sample with `chunk` rows each
    /// (latents one row per sample). Returns {frames [N*chunk x F], roots [N*chunk x 5]}.
    std::pair<nn::Tensor, nn::Tensor> forward(const nn::Tensor& prev_frames, const nn::Tensor& prev_roots,
                                              const nn::Tensor& latent_prev, const nn::Tensor& latent_cur,
                                              const nn::Tensor& sparse) const;

    /// Value-level chunk decode. Throws NumericError on non-finite output.
    DecoderOutputs decode_chunk(const DecoderInputs& inputs, const FeatureNorms& norms) const;

    /// Runs decode_chunk over a latent stream starting from d seed frames;
    /// returns the seed frames followed by d frames per latent.
    std::vector<motion::MotionFrame> decode_stream(const std::vector<motion::MotionFrame>& seed_frames,
                                                   const std::vector<motion::RootInfo>& seed_roots,
                                                   const RowVector& seed_latent, const Matrix& latents,
                                                   const FeatureNorms& norms) const;

    const OnlineDecoderConfig& config() const { return config_; }
    int chunk() const { return chunk_; }
    void collect(nn::NamedParams& out, const std::string& prefix) const;

private:
    OnlineDecoderConfig config_;
    int joints_ = 0;
    int chunk_ = 4;
    nn::Linear frame_in_;
    nn::Linear root_in_;
    nn::Linear latent_in_;
    nn::Linear sparse_in_;
    nn::Tensor slot_embedding_;  // [tokens x M]: role and position per token slot
    nn::Transformer body_;
    nn::Linear frame_out_;
    nn::Linear root_out_;
};

}  // namespace r2r::model
