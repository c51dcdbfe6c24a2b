#include "r2r/model/online_decoder.hpp"

#include "r2r/common/error.hpp"

namespace r2r::model {

using nn::Tensor;

nlohmann::json OnlineDecoderConfig::to_json() const {
    return {{"model_dim", model_dim}, {"layers", layers},     {"heads", heads},
            {"mlp_ratio", mlp_ratio}, {"use_root_info", use_root_info}, {"sparse", sparse}};
}

OnlineDecoderConfig OnlineDecoderConfig::from_json(const nlohmann::json& j) {
    OnlineDecoderConfig c;
    c.model_dim = j.value("model_dim", c.model_dim);
    c.layers = j.value("layers", c.layers);
    c.heads = j.value("heads", c.heads);
    c.mlp_ratio = j.value("mlp_ratio", c.mlp_ratio);
    c.use_root_info = j.value("use_root_info", c.use_root_info);
    c.sparse = j.value("sparse", c.sparse);
    return c;
}

OnlineDecoder::OnlineDecoder(const OnlineDecoderConfig& config, int joints, int latent_dim, int chunk, nn::Rng& rng)
    : config_(config), joints_(joints), chunk_(chunk) {
    const int m = config.model_dim;
    const int f = agent_feature_dim(joints);
    frame_in_ = nn::Linear(f, m, rng);
    root_in_ = nn::Linear(kRootInfoDim, m, rng);
    latent_in_ = nn::Linear(latent_dim, m, rng);
    if (config.sparse) sparse_in_ = nn::Linear(kSparseDim, m, rng);
    const int tokens = 2 * chunk + 2 + (config.sparse ? chunk : 0);
    slot_embedding_ = nn::uniform_param(tokens, m, 0.02, rng);
    body_ = nn::Transformer(m, config.heads, config.layers, config.mlp_ratio, rng);
    frame_out_ = nn::Linear(m, f, rng);
    root_out_ = nn::Linear(m, kRootInfoDim, rng);
}

std::pair<Tensor, Tensor> OnlineDecoder::forward(const Tensor& prev_frames, const Tensor& prev_roots,
                                                 const Tensor& latent_prev, const Tensor& latent_cur,
                                                 const Tensor& sparse) const {
    const int c = chunk_;
    const Tensor roots = config_.use_root_info ? prev_roots : Tensor::constant(Matrix::Zero(prev_roots.rows(), prev_roots.cols()));
    std::vector<Tensor> parts = {frame_in_.forward(prev_frames), root_in_.forward(roots), latent_in_.forward(latent_prev),
                                 latent_in_.forward(latent_cur)};
    std::vector<int> counts = {c, c, 1, 1};
    if (config_.sparse) {
        if (!sparse.defined()) throw DataError(DataErrc::invalid_argument, "sparse decoder needs sparse inputs");
        parts.push_back(sparse_in_.forward(sparse));
        counts.push_back(c);
    }
    const int tokens = static_cast<int>(slot_embedding_.rows());
    Tensor x = nn::add_tiled(nn::concat_segments(parts, counts), slot_embedding_);
    const Tensor h = body_.forward(x, tokens, false);
    return {frame_out_.forward(nn::slice_segments(h, tokens, 0, c)), root_out_.forward(nn::slice_segments(h, tokens, c, c))};
}

DecoderOutputs OnlineDecoder::decode_chunk(const DecoderInputs& in, const FeatureNorms& norms) const {
    const auto c = static_cast<std::size_t>(chunk_);
    if (in.prev_frames.size() != c || in.prev_roots.size() != c)
        throw DataError(DataErrc::invalid_argument, "decoder history must hold exactly d frames and root infos");
    nn::NoGradGuard guard;
    const Tensor frames = Tensor::constant(norms.frame.apply(stack(std::span(in.prev_frames))));
    const Tensor roots = Tensor::constant(norms.root.apply(stack(std::span(in.prev_roots))));
    Tensor sparse;
    if (config_.sparse) {
        if (!in.sparse || in.sparse->size() != c) throw DataError(DataErrc::invalid_argument, "decoder needs d sparse signals");
        sparse = Tensor::constant(norms.sparse.apply(stack(std::span(*in.sparse))));
    }
    const auto [f, r] = forward(frames, roots, Tensor::constant(in.latent_prev), Tensor::constant(in.latent_cur), sparse);
    if (!f.value().allFinite() || !r.value().allFinite()) throw NumericError("online decoder produced a non-finite value");
    const Matrix fr = norms.frame.invert(f.value());
    const Matrix rr = norms.root.invert(r.value());
    DecoderOutputs out;
    for (std::size_t i = 0; i < c; ++i) {
        const auto row = static_cast<Eigen::Index>(i);
        out.next_frames.push_back(unflatten_agent(fr.row(row), joints_));
        motion::RootInfo info = unflatten_root(rr.row(row));
        const double n = info.direction.norm();
        if (n > 1e-12) info.direction /= n;
        info.ring_dist = std::max(0.0, info.ring_dist);
        out.next_roots.push_back(info);
    }
    return out;
}

std::vector<motion::MotionFrame> OnlineDecoder::decode_stream(const std::vector<motion::MotionFrame>& seed_frames,
                                                              const std::vector<motion::RootInfo>& seed_roots,
                                                              const RowVector& seed_latent, const Matrix& latents,
                                                              const FeatureNorms& norms) const {
    std::vector<motion::MotionFrame> out = seed_frames;
    DecoderInputs in;
    in.prev_frames = seed_frames;
    in.prev_roots = seed_roots;
    in.latent_prev = seed_latent;
    for (Eigen::Index l = 0; l < latents.rows(); ++l) {
        in.latent_cur = latents.row(l);
        DecoderOutputs o = decode_chunk(in, norms);
        out.insert(out.end(), o.next_frames.begin(), o.next_frames.end());
        in.prev_frames = std::move(o.next_frames);
        in.prev_roots = std::move(o.next_roots);
        in.latent_prev = in.latent_cur;
    }
    return out;
}

void OnlineDecoder::collect(nn::NamedParams& out, const std::string& prefix) const {
    frame_in_.collect(out, prefix + ".frame_in");
    root_in_.collect(out, prefix + ".root_in");
    latent_in_.collect(out, prefix + ".latent_in");
    if (config_.sparse) sparse_in_.collect(out, prefix + ".sparse_in");
    out.emplace_back(prefix + ".slots", slot_embedding_);
    body_.collect(out, prefix + ".body");
    frame_out_.collect(out, prefix + ".frame_out");
    root_out_.collect(out, prefix + ".root_out");
}

}  // namespace r2r::model
