#include "config.hpp"
#include "manifest.hpp"

#include "r2r/common/error.hpp"
#include "r2r/data/clip_io.hpp"
#include "r2r/data/synth.hpp"
#include "r2r/engine/duel.hpp"
#include "r2r/engine/server.hpp"
#include "r2r/engine/stream.hpp"
#include "r2r/metrics/metrics.hpp"
#include "r2r/nn/archive.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <random>

namespace fs = std::filesystem;
using nlohmann::json;
using namespace r2r;

namespace {

enum ExitCode { kOk = 0, kUsage = 2, kData = 3, kNumeric = 4, kIo = 5 };

json defaults() {
    data::SynthDatasetConfig synth;
    model::TokenizerConfig tokenizer;
    tokenizer.joints = motion::Skeleton::smpl_like().joint_count();
    return {{"synth",
             {{"clips", synth.clips},
              {"duration_s", synth.duration_s},
              {"train_fraction", synth.train_fraction},
              {"seed", synth.seed},
              {"binary", synth.binary}}},
            {"tokenizer", tokenizer.to_json()},
            {"stage1", model::Stage1Config{}.to_json()},
            {"policy", model::PolicyConfig{}.to_json()},
            {"stage2", model::Stage2Config{}.to_json()},
            {"duel", {{"frames", 1800}, {"seed_frames", 4}, {"scene_seed", 1}, {"parallel", false}}},
            {"serve", {{"host", "127.0.0.1"}, {"port", 8765}, {"idle_timeout_s", 30}, {"scene_seed", 1}}}};
}

// Options and config layering shared by every subcommand.
struct Common {
    std::string config_file;
    std::vector<std::string> sets;
    std::uint64_t seed = 1;
    bool seed_given = false;
};

void add_common(CLI::App* cmd, Common& c) {
    cmd->add_option("--config", c.config_file, "key = value config file")->check(CLI::ExistingFile);
    cmd->add_option("--set", c.sets, "override one config key (key=value), repeatable");
    cmd->add_option("--seed", c.seed, "random seed")->each([&c](const std::string&) { c.seed_given = true; });
}

cli::LayeredConfig layered(const Common& c) {
    cli::LayeredConfig cfg(defaults());
    if (!c.config_file.empty()) cfg.load_file(c.config_file);
    for (const auto& s : c.sets) cfg.set_assignment(s);
    return cfg;
}

std::vector<std::string> g_argv;

cli::RunManifest manifest_for(const std::string& command, const json& config) {
    cli::RunManifest m(command, g_argv);
    m.set_config(config);
    return m;
}

model::ReactionPolicy load_policy(const fs::path& path) { return model::ReactionPolicy::from_archive(nn::load_archive(path)); }

std::vector<data::RoleStream> role_streams(const std::vector<data::NamedInteraction>& items) {
    std::vector<data::RoleStream> out;
    for (const auto& item : items)
        for (int role = 0; role < 2; ++role) out.push_back(data::encode_role(item.interaction, role));
    return out;
}

std::vector<data::NamedInteraction> require_split(const fs::path& root, const std::string& split) {
    auto items = data::load_dataset(root, split == "all" ? "" : split);
    if (items.empty()) throw DataError(DataErrc::invalid_argument, "no '" + split + "' interactions in " + root.string());
    return items;
}

void write_dataset(const fs::path& root, const std::vector<data::NamedInteraction>& items) {
    fs::create_directories(root / "clips");
    data::DatasetManifest manifest;
    for (const auto& item : items) {
        data::ManifestEntry e;
        e.name = item.name;
        e.clip_a = "clips/" + item.name + "_a.r2rb";
        e.clip_b = "clips/" + item.name + "_b.r2rb";
        e.ring = item.interaction.ring;
        e.split = "test";
        data::save_clip(root / e.clip_a, item.interaction.clip_a, data::ClipEncoding::binary);
        data::save_clip(root / e.clip_b, item.interaction.clip_b, data::ClipEncoding::binary);
        manifest.entries.push_back(std::move(e));
    }
    data::save_manifest(root, manifest);
}

void write_json(const fs::path& path, const json& j) {
    std::ofstream out(path);
    if (!out) throw DataError(DataErrc::io_error, "cannot write " + path.string());
    out << j.dump(2) << '\n';
}

// ------------------------------------------------------------------ commands

int synth_data(const Common& c, const fs::path& out) {
    auto cfg = layered(c);
    if (c.seed_given) cfg.set("synth.seed", std::to_string(c.seed));
    const json s = cfg.section("synth");
    data::SynthDatasetConfig sc;
    sc.clips = s.at("clips").get<std::size_t>();
    sc.duration_s = s.at("duration_s").get<double>();
    sc.train_fraction = s.at("train_fraction").get<double>();
    sc.seed = s.at("seed").get<std::uint64_t>();
    sc.binary = s.at("binary").get<bool>();
    const auto manifest = data::write_synth_dataset(out, sc);
    auto run = manifest_for("synth-data", {{"synth", s}});
    run.add_seed("synth", sc.seed);
    run.add_output(out);
    const std::string hash = cli::sha256_tree(out);
    run.note("dataset_sha256", hash);
    run.write_next_to(out);
    std::cout << "wrote " << manifest.entries.size() << " interactions to " << out.string() << "\n"
              << "dataset sha256 " << hash << '\n';
    return kOk;
}

int train_tokenizer(const Common& c, const fs::path& data_root, const fs::path& out) {
    auto cfg = layered(c);
    if (c.seed_given) cfg.set("stage1.seed", std::to_string(c.seed));
    auto tc = model::TokenizerConfig::from_json(cfg.section("tokenizer"));
    const auto s1 = model::Stage1Config::from_json(cfg.section("stage1"));
    const auto items = require_split(data_root, "train");
    tc.joints = items.front().interaction.clip_a.skeleton.joint_count();
    model::FrameStreams streams;
    for (const auto& r : role_streams(items)) streams.push_back(r.agent);

    model::Tokenizer tokenizer(tc, s1.seed);
    const auto log = model::train_stage1(tokenizer, streams, s1);
    nn::save_archive(out, tokenizer.to_archive());

    auto run = manifest_for("train-tokenizer", {{"tokenizer", tc.to_json()}, {"stage1", s1.to_json()}});
    run.add_seed("stage1", s1.seed);
    run.add_input(data_root);
    run.add_output(out);
    run.note("reconstruction", log.reconstruction);
    run.note("usage", log.usage);
    run.write_next_to(out);
    if (!log.reconstruction.empty())
        std::cout << "final reconstruction loss " << log.reconstruction.back() << '\n';
    std::cout << "tokenizer written to " << out.string() << '\n';
    return kOk;
}

int train_policy(const Common& c, const fs::path& data_root, const fs::path& tokenizer_path, const fs::path& out) {
    auto cfg = layered(c);
    if (c.seed_given) cfg.set("stage2.seed", std::to_string(c.seed));
    const auto pc = model::PolicyConfig::from_json(cfg.section("policy"));
    const auto s2 = model::Stage2Config::from_json(cfg.section("stage2"));
    const auto tokenizer = model::Tokenizer::from_archive(nn::load_archive(tokenizer_path));
    pc.validate(tokenizer.config());
    const auto streams = role_streams(require_split(data_root, "train"));

    model::ReactionPolicy policy(pc, tokenizer, s2.seed);
    const auto log = model::train_stage2(policy, streams, s2);
    nn::save_archive(out, policy.to_archive());

    auto run = manifest_for("train-policy", {{"policy", pc.to_json()}, {"stage2", s2.to_json()}});
    run.add_seed("stage2", s2.seed);
    run.add_input(data_root);
    run.add_input(tokenizer_path);
    run.add_output(out);
    run.note("loss", log.total);
    run.write_next_to(out);
    if (!log.total.empty()) std::cout << "final loss " << log.total.back() << '\n';
    std::cout << "policy written to " << out.string() << '\n';
    return kOk;
}

int duel(const Common& c, const fs::path& policy_path, const fs::path& out, long frames_flag) {
    auto cfg = layered(c);
    if (frames_flag > 0) cfg.set("duel.frames", std::to_string(frames_flag));
    const json d = cfg.section("duel");
    const auto policy = load_policy(policy_path);
    const auto frames = d.at("frames").get<std::size_t>();
    const auto seed_frames = d.at("seed_frames").get<std::size_t>();
    const auto scene_seed = d.at("scene_seed").get<std::uint64_t>();
    const auto scene = data::synth_duel(scene_seed, static_cast<double>(seed_frames + 1) / 30.0);

    engine::DuelConfig dc{scene.ring, c.seed, c.seed + 1, d.at("parallel").get<bool>()};
    const auto result = engine::run_duel(policy, scene, frames, seed_frames, dc);

    write_dataset(out, {{"duel", {result.a, result.b, scene.ring}}});
    {
        std::ofstream csv(out / "facing.csv");
        csv << "frame,facing_a_deg,facing_b_deg\n";
        for (std::size_t i = 0; i < result.diagnostics.facing_a.size(); ++i)
            csv << i << ',' << result.diagnostics.facing_a[i] << ',' << result.diagnostics.facing_b[i] << '\n';
    }
    auto run = manifest_for("duel", {{"duel", d}});
    run.add_seed("agent_a", dc.seed_a);
    run.add_seed("agent_b", dc.seed_b);
    run.add_seed("scene", scene_seed);
    run.add_input(policy_path);
    run.add_output(out);
    run.note("ring_violations", result.diagnostics.ring_violations);
    run.note("max_history", result.diagnostics.max_history);
    run.write_next_to(out);
    std::cout << "generated " << result.a.length() << " frames per agent; max history "
              << result.diagnostics.max_history << ", ring violations " << result.diagnostics.ring_violations
              << "; RO " << metrics::root_orient(result.a, result.b) << "%\n";
    return kOk;
}

struct ReplayOptions {
    fs::path policy, data, out;
    std::string split = "test";
    bool shuffle = false;
};

std::vector<motion::SparseSignal> shuffled(std::vector<motion::SparseSignal> s, std::size_t keep, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::shuffle(s.begin() + static_cast<std::ptrdiff_t>(std::min(keep, s.size())), s.end(), rng);
    return s;
}

int replay(const Common& c, const ReplayOptions& o, bool sparse) {
    auto cfg = layered(c);
    const auto seed_frames = cfg.at("duel.seed_frames").get<std::size_t>();
    const auto policy = load_policy(o.policy);
    const auto items = require_split(o.data, o.split);
    std::vector<data::NamedInteraction> generated;
    double pos = 0.0, rot = 0.0;
    for (const auto& item : items) {
        const auto& inter = item.interaction;
        engine::ReactiveConfig rc{inter.ring, c.seed, seed_frames};
        motion::MotionClip agent;
        if (sparse) {
            // The shuffled control is scored against the true signals.
            const auto truth = data::encode_role(inter, 1).sparse;
            const auto signals = o.shuffle ? shuffled(truth, seed_frames, c.seed) : truth;
            agent = engine::run_sparse(policy, inter.clip_a, inter.clip_b, signals, rc);
            const auto err = metrics::control_error(agent, truth, seed_frames);
            pos += err.pos_cm;
            rot += err.rot_deg;
        } else {
            agent = engine::run_reactive(policy, inter.clip_a, inter.clip_b, rc);
        }
        generated.push_back({item.name, {inter.clip_a, std::move(agent), inter.ring}});
    }
    write_dataset(o.out, generated);
    auto run = manifest_for(sparse ? "sparse" : "react", {{"duel", cfg.section("duel")}, {"split", o.split}});
    run.add_seed("agent", c.seed);
    run.add_input(o.policy);
    run.add_input(o.data);
    if (sparse) {
        const double n = static_cast<double>(items.size());
        const json control = {{"pos_err_cm", pos / n}, {"rot_err_deg", rot / n}, {"shuffled", o.shuffle}};
        write_json(o.out / "control.json", control);
        run.note("control", control);
        std::cout << "pos err " << pos / n << " cm, rot err " << rot / n << " deg\n";
    }
    run.add_output(o.out);
    run.write_next_to(o.out);
    std::cout << "generated " << generated.size() << " reactions in " << o.out.string() << '\n';
    return kOk;
}

int evaluate(const fs::path& real, const fs::path& gen, const fs::path& out, const std::string& split) {
    std::vector<data::InteractionClip> r, g;
    for (auto& item : require_split(real, split)) r.push_back(std::move(item.interaction));
    for (auto& item : require_split(gen, "all")) g.push_back(std::move(item.interaction));
    auto report = metrics::evaluate(r, g);
    if (fs::exists(gen / "control.json")) {
        std::ifstream in(gen / "control.json");
        const json control = json::parse(in);
        report.pos_err = control.at("pos_err_cm").get<double>();
        report.rot_err = control.at("rot_err_deg").get<double>();
    }
    write_json(out, report.to_json());
    auto run = manifest_for("evaluate", {{"split", split}});
    run.add_input(real);
    run.add_input(gen);
    run.add_output(out);
    run.write_next_to(out);
    std::cout << "protocol " << metrics::kMetricProtocol << '\n' << report.table(gen.filename().string());
    return kOk;
}

int serve(const Common& c, const fs::path& policy_path, int port_flag) {
    auto cfg = layered(c);
    if (port_flag >= 0) cfg.set("serve.port", std::to_string(port_flag));
    const json s = cfg.section("serve");
    const auto policy = load_policy(policy_path);
    engine::ServerOptions options;
    options.host = s.at("host").get<std::string>();
    options.port = s.at("port").get<unsigned short>();
    options.idle_timeout = std::chrono::seconds(s.at("idle_timeout_s").get<int>());
    options.session.scene_seed = s.at("scene_seed").get<std::uint64_t>();
    options.session.seed_frames = cfg.at("duel.seed_frames").get<std::size_t>();
    options.session.seed_a = c.seed;
    options.session.seed_b = c.seed + 1;
    engine::StreamServer server(policy, options);
    const auto port = server.start();
    server.stop_on_signals();
    std::cout << "serving " << engine::kStreamProtocol << " on ws://" << options.host << ':' << port << "/" << std::endl;
    server.wait();
    return kOk;
}

int export_stream(const fs::path& a_path, const fs::path& b_path, const fs::path& out) {
    const auto a = data::load_clip(a_path);
    const auto b = b_path.empty() ? a : data::load_clip(b_path);
    if (a.length() != b.length()) throw DataError(DataErrc::length_mismatch, "clips differ in length");
    const auto ra = motion::encode_motion(a.frames, a.skeleton).roots;
    const auto rb = motion::encode_motion(b.frames, b.skeleton).roots;
    json poses = json::array();
    for (std::size_t t = 0; t < a.length(); ++t) {
        engine::AgentFrame fa, fb;
        fa.pose = a.frames[t];
        fa.root = ra[t];
        fb.pose = b.frames[t];
        fb.root = rb[t];
        json agents = json::array({engine::agent_pose_to_json(fa)});
        if (!b_path.empty()) agents.push_back(engine::agent_pose_to_json(fb));
        poses.push_back({{"frame", t}, {"agents", std::move(agents)}});
    }
    const json stream = {{"protocol", engine::kStreamProtocol},
                         {"hello", {{"type", "hello"}, {"skeleton", data::skeleton_to_json(a.skeleton)}, {"fps", a.fps}}},
                         {"frames", {{"type", "frames"}, {"start_frame", 0}, {"poses", std::move(poses)}}}};
    write_json(out, stream);
    auto run = manifest_for("export", json::object());
    run.add_input(a_path);
    if (!b_path.empty()) run.add_input(b_path);
    run.add_output(out);
    run.write_next_to(out);
    std::cout << "exported " << a.length() << " frames to " << out.string() << '\n';
    return kOk;
}

}  // namespace

int main(int argc, char** argv) {
    g_argv.assign(argv, argv + argc);
    CLI::App app{"r2r: two-agent reactive motion generation"};
    app.require_subcommand(1);

    Common common;
    fs::path data_root, out, tokenizer_path, policy_path, real, gen, clip_a, clip_b;
    std::string split = "test";
    long frames = 0;
    int port = -1;
    ReplayOptions replay_opts;

    auto* synth = app.add_subcommand("synth-data", "write a synthetic interaction dataset");
    add_common(synth, common);
    synth->add_option("--out", out, "dataset directory")->required();

    auto* tok = app.add_subcommand("train-tokenizer", "stage 1: train the motion tokenizer");
    add_common(tok, common);
    tok->add_option("--data", data_root, "dataset directory")->required()->check(CLI::ExistingDirectory);
    tok->add_option("--out", out, "tokenizer checkpoint")->required();

    auto* pol = app.add_subcommand("train-policy", "stage 2: train the reaction policy");
    add_common(pol, common);
    pol->add_option("--data", data_root, "dataset directory")->required()->check(CLI::ExistingDirectory);
    pol->add_option("--tokenizer", tokenizer_path, "tokenizer checkpoint")->required()->check(CLI::ExistingFile);
    pol->add_option("--out", out, "policy checkpoint")->required();

    auto* du = app.add_subcommand("duel", "generate both agents online");
    add_common(du, common);
    du->add_option("--policy", policy_path, "policy checkpoint")->required()->check(CLI::ExistingFile);
    du->add_option("--out", out, "output directory")->required();
    du->add_option("--frames", frames, "frames per agent (duel.frames)");

    auto* re = app.add_subcommand("react", "generate agent B against recorded agent A");
    auto* sp = app.add_subcommand("sparse", "generate agent B from its head and hand signals");
    for (auto* cmd : {re, sp}) {
        add_common(cmd, common);
        cmd->add_option("--policy", replay_opts.policy, "policy checkpoint")->required()->check(CLI::ExistingFile);
        cmd->add_option("--data", replay_opts.data, "dataset directory")->required()->check(CLI::ExistingDirectory);
        cmd->add_option("--out", replay_opts.out, "output directory")->required();
        cmd->add_option("--split", replay_opts.split, "train, test or all");
    }
    sp->add_flag("--shuffle", replay_opts.shuffle, "permute the signals in time (control run)");

    auto* ev = app.add_subcommand("evaluate", "compute the metric report");
    add_common(ev, common);
    ev->add_option("--real", real, "reference dataset")->required()->check(CLI::ExistingDirectory);
    ev->add_option("--gen", gen, "generated dataset")->required()->check(CLI::ExistingDirectory);
    ev->add_option("--out", out, "report file")->required();
    ev->add_option("--split", split, "reference split: train, test or all");

    auto* se = app.add_subcommand("serve", "stream a duel over websocket (r2r-stream/1)");
    add_common(se, common);
    se->add_option("--policy", policy_path, "policy checkpoint")->required()->check(CLI::ExistingFile);
    se->add_option("--port", port, "listen port (serve.port); 0 picks one");

    auto* ex = app.add_subcommand("export", "convert clips into a viewer pose stream");
    add_common(ex, common);
    ex->add_option("--a", clip_a, "first clip")->required()->check(CLI::ExistingFile);
    ex->add_option("--b", clip_b, "second clip")->check(CLI::ExistingFile);
    ex->add_option("--out", out, "stream file")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kOk : kUsage;
    }

    try {
        if (*synth) return synth_data(common, out);
        if (*tok) return train_tokenizer(common, data_root, out);
        if (*pol) return train_policy(common, data_root, tokenizer_path, out);
        if (*du) return duel(common, policy_path, out, frames);
        if (*re) return replay(common, replay_opts, false);
        if (*sp) return replay(common, replay_opts, true);
        if (*ev) {
            layered(common);
            return evaluate(real, gen, out, split);
        }
        if (*se) return serve(common, policy_path, port);
        if (*ex) {
            layered(common);
            return export_stream(clip_a, clip_b, out);
        }
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kUsage;
    } catch (const NumericError& e) {
        std::cerr << "numeric failure: " << e.what() << '\n';
        return kNumeric;
    } catch (const DataError& e) {
        std::cerr << "data error (" << to_string(e.code()) << "): " << e.what() << '\n';
        return e.code() == DataErrc::io_error ? kIo : kData;
    } catch (const fs::filesystem_error& e) {
        std::cerr << "i/o error: " << e.what() << '\n';
        return kIo;
    } catch (const json::exception& e) {
        std::cerr << "data error: " << e.what() << '\n';
        return kData;
    }
    return kUsage;
}
