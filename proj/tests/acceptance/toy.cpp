#include "acceptance.hpp"

#include <iostream>

namespace r2r::acceptance {

namespace {

constexpr double kClipSeconds = 20.0;

model::Tokenizer train_tokenizer(model::EncoderKind kind, const model::FrameStreams& streams) {
    model::TokenizerConfig c;
    c.joints = motion::Skeleton::smpl_like().joint_count();
    c.hidden = 64;
    c.res_blocks = 1;
    c.codebook.size = 128;
    c.codebook.dim = 16;
    c.kind = kind;
    model::Tokenizer t(c, 11);
    model::Stage1Config s1;
    s1.iterations = 1500;
    s1.batch = 16;
    s1.crop = 32;
    s1.lr = 1e-3;
    s1.log_every = 500;
    s1.seed = 11;
    const auto log = model::train_stage1(t, streams, s1);
    std::cerr << "  tokenizer (" << (kind == model::EncoderKind::vq ? "vq" : "vae")
              << ") reconstruction " << log.reconstruction.back() << '\n';
    return t;
}

}  // namespace

const ToyWorld& toy_world() {
    static const ToyWorld world = [] {
        ToyWorld w;
        for (std::uint64_t s = 0; s < 10; ++s) w.train.push_back(data::synth_duel(1000 + s, kClipSeconds));
        for (std::uint64_t s = 0; s < 3; ++s) w.test.push_back(data::synth_duel(2000 + s, kClipSeconds));
        for (const auto& inter : w.train)
            for (int role = 0; role < 2; ++role) w.train_streams.push_back(data::encode_role(inter, role));
        model::FrameStreams frames;
        for (const auto& r : w.train_streams) frames.push_back(r.agent);
        w.vq = train_tokenizer(model::EncoderKind::vq, frames);
        w.vae = train_tokenizer(model::EncoderKind::vae, frames);
        return w;
    }();
    return world;
}

model::PolicyConfig toy_policy_config() {
    model::PolicyConfig c;
    c.window = 32;
    c.model_dim = 64;
    c.layers = 2;
    c.heads = 4;
    c.head_hidden = 128;
    c.time_dim = 16;
    c.diffusion.ddim_steps = 20;
    c.diffusion_repeat = 2;
    c.online_decoder.model_dim = 64;
    c.online_decoder.layers = 2;
    c.online_decoder.heads = 4;
    return c;
}

model::ReactionPolicy train_toy_policy(const model::PolicyConfig& config, const model::Tokenizer& tokenizer,
                                       std::uint64_t seed) {
    model::ReactionPolicy p(config, tokenizer, seed);
    model::Stage2Config s2;
    s2.iterations = 600;
    s2.batch = 16;
    s2.lr = 1e-3;
    s2.seed = seed;
    s2.log_every = 200;
    model::train_stage2(p, toy_world().train_streams, s2);
    return p;
}

}  // namespace r2r::acceptance
