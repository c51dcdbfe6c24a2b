#pragma once

#include "r2r/data/synth.hpp"
#include "r2r/model/policy.hpp"

#include <filesystem>
#include <functional>
#include <string>
#include <vector>

namespace r2r::acceptance {

struct Outcome {
    bool pass = false;
    std::string detail;
};

struct Criterion {
    std::string name;
    std::function<Outcome()> run;
};

/// Where artifacts (facing-angle series, ablation table) are written.
const std::filesystem::path& artifact_dir();

std::vector<Criterion> core_criteria();
std::vector<Criterion> toy_criteria();

// Shared toy world: a fixed synthetic dataset and the two tokenizers, trained once.
struct ToyWorld {
    std::vector<data::InteractionClip> train;
    std::vector<data::InteractionClip> test;
    std::vector<data::RoleStream> train_streams;
    model::Tokenizer vq;
    model::Tokenizer vae;
};
const ToyWorld& toy_world();
model::PolicyConfig toy_policy_config();
model::ReactionPolicy train_toy_policy(const model::PolicyConfig& config, const model::Tokenizer& tokenizer,
                                       std::uint64_t seed);

}  // namespace r2r::acceptance
