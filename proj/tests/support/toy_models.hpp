#pragma once

// Small tokenizer and policy configurations shared by the model and engine tests.

#include "r2r/data/synth.hpp"
#include "r2r/model/policy.hpp"

namespace r2r::testing {

using namespace r2r::model;

inline std::vector<r2r::data::RoleStream> synth_roles(int clips, double seconds, std::uint64_t first_seed = 300) {
    std::vector<r2r::data::RoleStream> out;
    for (int i = 0; i < clips; ++i) {
        const auto duel = r2r::data::synth_duel(first_seed + i, seconds);
        for (int role = 0; role < 2; ++role) out.push_back(r2r::data::encode_role(duel, role));
    }
    return out;
}

inline const Tokenizer& small_tokenizer() {
    static const Tokenizer tok = [] {
        TokenizerConfig c;
        c.hidden = 16;
        c.res_blocks = 1;
        c.codebook.size = 16;
        c.codebook.dim = 8;
        Tokenizer t(c, 5);
        FrameStreams streams;
        for (const auto& r : synth_roles(1, 6.0)) streams.push_back(r.agent);
        Stage1Config s1;
        s1.iterations = 30;
        s1.batch = 4;
        s1.lr = 1e-3;
        s1.log_every = 10;
        train_stage1(t, streams, s1);
        return t;
    }();
    return tok;
}

inline PolicyConfig small_config() {
    PolicyConfig c;
    c.window = 24;
    c.model_dim = 32;
    c.layers = 2;
    c.heads = 4;
    c.head_hidden = 32;
    c.time_dim = 8;
    c.diffusion.ddim_steps = 10;
    c.diffusion_repeat = 2;
    c.online_decoder.model_dim = 32;
    c.online_decoder.layers = 1;
    c.online_decoder.heads = 4;
    return c;
}

inline ReactionPolicy fitted_policy(PolicyConfig c = small_config(), std::uint64_t seed = 1) {
    ReactionPolicy p(c, small_tokenizer(), seed);
    p.fit_normalizers(synth_roles(1, 6.0));
    return p;
}

}  // namespace r2r::testing
