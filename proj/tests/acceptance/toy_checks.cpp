#include "acceptance.hpp"

#include "r2r/engine/duel.hpp"
#include "r2r/metrics/metrics.hpp"

#include <unistd.h>

#include <cmath>
#include <fstream>
#include <iostream>
#include <map>
#include <numeric>
#include <random>
#include <sstream>

namespace r2r::acceptance {

namespace {

constexpr int kSeeds = 5;
constexpr std::size_t kSeedFrames = 4;

std::string fmt(double v, int precision = 4) {
    std::ostringstream os;
    os.precision(precision);
    os << v;
    return os.str();
}

double mean(const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size()); }

double stddev(const std::vector<double>& v) {
    const double m = mean(v);
    double s = 0.0;
    for (double x : v) s += (x - m) * (x - m);
    return std::sqrt(s / static_cast<double>(v.size()));
}

long resident_kib() {
    std::ifstream statm("/proc/self/statm");
    long pages = 0, resident = 0;
    statm >> pages >> resident;
    return resident * (sysconf(_SC_PAGESIZE) / 1024);
}

struct Variant {
    std::string name;
    model::PolicyConfig config;
    bool vae = false;
};

std::vector<Variant> variants() {
    const auto base = toy_policy_config();
    std::vector<Variant> out{{"full", base, false}, {"vae_encoder", base, true}};
    Variant raw{"no_motion_encoder", base, false};
    raw.config.latent_source = model::LatentSource::raw;
    Variant gpt{"gpt_head", base, false};
    gpt.config.predictor = model::PredictorKind::gpt;
    Variant offline{"offline_decoder", base, false};
    offline.config.decoder = model::DecoderKind::offline;
    Variant no_root{"no_root_decoder", base, false};
    no_root.config.online_decoder.use_root_info = false;
    for (auto* v : {&raw, &gpt, &offline, &no_root}) out.push_back(*v);
    return out;
}

const model::ReactionPolicy& trained(const Variant& v, std::uint64_t seed) {
    static std::map<std::pair<std::string, std::uint64_t>, model::ReactionPolicy> cache;
    const auto key = std::make_pair(v.name, seed);
    auto it = cache.find(key);
    if (it == cache.end()) {
        const auto& world = toy_world();
        it = cache.emplace(key, train_toy_policy(v.config, v.vae ? world.vae : world.vq, seed)).first;
    }
    return it->second;
}

bool finite_clip(const motion::MotionClip& c) {
    for (const auto& f : c.frames)
        if (!f.positions.allFinite()) return false;
    return true;
}

void write_facing_artifacts(const engine::DuelDiagnostics& d) {
    const auto dir = artifact_dir();
    std::ofstream csv(dir / "facing_angle.csv");
    csv << "frame,seconds,facing_a_deg,facing_b_deg\n";
    for (std::size_t i = 0; i < d.facing_a.size(); ++i)
        csv << i << ',' << static_cast<double>(i) / 30.0 << ',' << d.facing_a[i] << ',' << d.facing_b[i] << '\n';

    const double width = 900, height = 300, n = static_cast<double>(d.facing_a.size());
    std::ofstream svg(dir / "facing_angle.svg");
    svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height + 40 << "\">\n"
        << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    const auto y_of = [&](double deg) { return height - deg / 180.0 * height; };
    svg << "<line x1=\"0\" x2=\"" << width << "\" y1=\"" << y_of(45) << "\" y2=\"" << y_of(45)
        << "\" stroke=\"gray\" stroke-dasharray=\"4\"/>\n";
    const char* colors[] = {"#c0392b", "#2471a3"};
    const std::vector<double>* series[] = {&d.facing_a, &d.facing_b};
    for (int s = 0; s < 2; ++s) {
        svg << "<polyline fill=\"none\" stroke=\"" << colors[s] << "\" points=\"";
        for (std::size_t i = 0; i < series[s]->size(); ++i)
            svg << static_cast<double>(i) / n * width << ',' << y_of((*series[s])[i]) << ' ';
        svg << "\"/>\n";
    }
    svg << "<text x=\"10\" y=\"" << height + 25 << "\" font-size=\"14\">facing deviation (deg, 0-180) over "
        << n / 30.0 << " s; red agent A, blue agent B, dashed 45 deg</text>\n</svg>\n";
}

Outcome streaming() {
    const auto variant = variants().front();
    const auto& policy = trained(variant, 1);
    const auto scene = data::synth_duel(77, 1.0);
    const auto first = [](const motion::MotionClip& c) {
        return std::vector<motion::WorldPose>(c.frames.begin(), c.frames.begin() + kSeedFrames);
    };
    engine::DuelEngine duel(policy, policy, {scene.ring, 1, 2, false});
    duel.seed(first(scene.clip_a), first(scene.clip_b), scene.clip_a.skeleton);

    const std::size_t window = static_cast<std::size_t>(policy.config().window);
    const int max_steps = policy.steps();
    bool bounded = true, finite = true;
    long rss_after_warmup = -1, rss_peak = 0;
    while (duel.frame_index() < 1800) {
        const auto frames = duel.step();
        for (const auto* side : {&frames.a, &frames.b})
            for (const auto& f : *side) finite = finite && f.pose.positions.allFinite();
        for (int i = 0; i < 2; ++i)
            bounded = bounded && duel.agent(i).history().size() <= window &&
                      duel.agent(i).latents().length() <= max_steps;
        if (duel.frame_index() >= 300) {
            const long rss = resident_kib();
            if (rss_after_warmup < 0) rss_after_warmup = rss;
            rss_peak = std::max(rss_peak, rss);
        }
    }
    const auto& diag = duel.diagnostics();
    write_facing_artifacts(diag);
    const long growth = rss_peak - rss_after_warmup;
    const bool memory = growth <= 1024;
    const bool complete = duel.frame_index() == 1800 && diag.facing_a.size() == 1800;
    return {complete && finite && bounded && memory && diag.max_history <= window,
            std::to_string(duel.frame_index()) + " frames, max |buffer| " + std::to_string(diag.max_history) +
                " (W " + std::to_string(window) + "), RSS growth after warm-up " + std::to_string(growth) +
                " KiB, " + (finite ? "all finite" : "NON-FINITE") + ", series in facing_angle.csv"};
}

struct Scores {
    double fid_frame, fid_transition, fid_clip, jitter, fs, ro;
};

Scores score(const model::ReactionPolicy& policy, std::uint64_t seed) {
    using metrics::Granularity;
    const auto& test = toy_world().test;
    std::vector<motion::MotionClip> generated;
    std::vector<double> ro;
    for (const auto& inter : test) {
        const engine::ReactiveConfig rc{inter.ring, seed, kSeedFrames};
        auto b = engine::run_reactive(policy, inter.clip_a, inter.clip_b, rc);
        auto a = engine::run_reactive(policy, inter.clip_b, inter.clip_a, rc);
        ro.push_back(metrics::root_orient(inter.clip_a, b));
        ro.push_back(metrics::root_orient(a, inter.clip_b));
        generated.push_back(std::move(a));
        generated.push_back(std::move(b));
    }
    Scores s{};
    double* fids[] = {&s.fid_frame, &s.fid_transition, &s.fid_clip};
    const Granularity grains[] = {Granularity::frame, Granularity::transition, Granularity::clip};
    for (int g = 0; g < 3; ++g) {
        std::vector<Eigen::MatrixXd> real, gen;
        for (const auto& inter : test) {
            real.push_back(metrics::extract_features(inter.clip_a, grains[g]));
            real.push_back(metrics::extract_features(inter.clip_b, grains[g]));
        }
        for (const auto& c : generated) gen.push_back(metrics::extract_features(c, grains[g]));
        *fids[g] = metrics::fid(metrics::stack_features(gen), metrics::stack_features(real)).value;
    }
    for (const auto& c : generated) {
        s.jitter += metrics::jitter(c) / static_cast<double>(generated.size());
        s.fs += metrics::foot_sliding(c) / static_cast<double>(generated.size());
        if (!finite_clip(c)) s.jitter = std::nan("");
    }
    s.ro = mean(ro);
    return s;
}

Outcome ablations() {
    std::map<std::string, std::vector<Scores>> table;
    bool all_finite = true;
    std::ofstream csv(artifact_dir() / "ablation.csv");
    csv << "variant,seed,fid_frame,fid_transition,fid_clip,jitter,fs,ro_percent\n";
    const auto list = variants();
    for (const auto& v : list) {
        for (int seed = 1; seed <= kSeeds; ++seed) {
            const auto s = score(trained(v, seed), static_cast<std::uint64_t>(seed));
            for (double x : {s.fid_frame, s.fid_transition, s.fid_clip, s.jitter, s.fs, s.ro})
                all_finite = all_finite && std::isfinite(x);
            csv << v.name << ',' << seed << ',' << s.fid_frame << ',' << s.fid_transition << ',' << s.fid_clip << ','
                << s.jitter << ',' << s.fs << ',' << s.ro << '\n';
            table[v.name].push_back(s);
        }
        std::cerr << "  ablation " << v.name << " done\n";
    }
    std::ofstream md(artifact_dir() / "ablation.md");
    md << "| variant | FID-frame | FID-trans | FID-clip | Jitter | FS | RO% |\n|---|---|---|---|---|---|---|\n";
    const auto column = [&](const std::string& name, double Scores::*field) {
        std::vector<double> v;
        for (const auto& s : table[name]) v.push_back(s.*field);
        return v;
    };
    for (const auto& v : list) {
        md << "| " << v.name;
        for (auto field : {&Scores::fid_frame, &Scores::fid_transition, &Scores::fid_clip, &Scores::jitter,
                           &Scores::fs, &Scores::ro}) {
            const auto col = column(v.name, field);
            md << " | " << fmt(mean(col)) << " ± " << fmt(stddev(col), 2);
        }
        md << " |\n";
    }
    const double full = mean(column("full", &Scores::fid_clip));
    const double offline = mean(column("offline_decoder", &Scores::fid_clip));
    return {all_finite && full <= offline,
            std::to_string(list.size()) + " variants x " + std::to_string(kSeeds) +
                " seeds evaluated; mean per-clip FID full " + fmt(full) + " vs offline decoder " + fmt(offline) +
                " (table in ablation.md)"};
}

Outcome sparse_control() {
    Variant v{"sparse", toy_policy_config(), false};
    v.config.sparse = true;
    int wins = 0;
    std::string detail;
    for (int seed = 1; seed <= kSeeds; ++seed) {
        const auto& policy = trained(v, static_cast<std::uint64_t>(seed));
        double truth_err = 0.0, control_err = 0.0;
        std::mt19937_64 rng(static_cast<std::uint64_t>(seed) + 1000);
        for (const auto& inter : toy_world().test) {
            const auto truth = data::encode_role(inter, 1).sparse;
            auto shuffled = truth;
            std::shuffle(shuffled.begin() + kSeedFrames, shuffled.end(), rng);
            const engine::ReactiveConfig rc{inter.ring, static_cast<std::uint64_t>(seed), kSeedFrames};
            const auto followed = engine::run_sparse(policy, inter.clip_a, inter.clip_b, truth, rc);
            const auto control = engine::run_sparse(policy, inter.clip_a, inter.clip_b, shuffled, rc);
            truth_err += metrics::control_error(followed, truth, kSeedFrames).pos_cm;
            control_err += metrics::control_error(control, truth, kSeedFrames).pos_cm;
        }
        const double n = static_cast<double>(toy_world().test.size());
        if (truth_err < control_err) ++wins;
        detail += (detail.empty() ? "" : ", ") + fmt(truth_err / n, 3) + "<" + fmt(control_err / n, 3);
    }
    return {wins == kSeeds, "pos err cm true<shuffled per seed: " + detail + " (" + std::to_string(wins) + "/" +
                                std::to_string(kSeeds) + ")"};
}

}  // namespace

std::vector<Criterion> toy_criteria() {
    return {{"streaming-1800-frames", streaming}, {"ablation-parity", ablations}, {"sparse-self-consistency", sparse_control}};
}

}  // namespace r2r::acceptance
