#pragma once

// Procedural two-character sparring generator. The motion is deliberately
// simple (stance/step gait, guard and jab arm envelopes, opponent tracking);
// it is meant to exercise the pipeline, not to look like real boxing.

#include "r2r/data/dataset.hpp"

#include <cstdint>
#include <filesystem>

namespace r2r::data {

struct SynthStyle {
    double fps = 30.0;
    double ring_radius = 3.0;
    double ring_margin = 0.35;
    double preferred_distance = 1.6;
    double max_step = 0.45;        // metres per step
    double stance_min_s = 0.35;
    double stance_max_s = 0.9;
    double step_min_s = 0.3;
    double step_max_s = 0.5;
    double orbit_step = 0.2;       // tangential metres per step
    double yaw_gain = 5.0;         // 1/s
    double jab_rate = 0.8;         // jabs per second
    double jab_duration_s = 0.35;
    double turn_away_rate = 0.22;  // events per second
    double turn_away_min_s = 0.6;
    double turn_away_max_s = 1.2;
};

InteractionClip synth_duel(std::uint64_t seed, double duration_s, const SynthStyle& style = {});

struct SynthDatasetConfig {
    std::size_t clips = 10;
    double duration_s = 20.0;
    double train_fraction = 0.8;
    std::uint64_t seed = 7;
    bool binary = true;
    SynthStyle style;
};

/// Writes <root>/clips/*.r2r and <root>/manifest.json; returns the manifest.
DatasetManifest write_synth_dataset(const std::filesystem::path& root, const SynthDatasetConfig& config);

}  // namespace r2r::data
