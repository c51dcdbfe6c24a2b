#include "r2r/model/tokenizer.hpp"

#include "r2r/common/error.hpp"

#include <algorithm>
#include <cmath>
#include <set>

namespace r2r::model {

using nn::Tensor;

Codebook::Codebook(const CodebookConfig& config)
    : config_(config),
      entries_(Matrix::Zero(config.size, config.dim)),
      cluster_size_(RowVector::Zero(config.size)),
      embed_sum_(Matrix::Zero(config.size, config.dim)) {}

std::vector<int> Codebook::nearest(const Matrix& z) const {
    if (z.cols() != entries_.cols()) throw DataError(DataErrc::invalid_argument, "latent width differs from codebook");
    std::vector<int> out(static_cast<std::size_t>(z.rows()));
    for (Eigen::Index i = 0; i < z.rows(); ++i) {
        const RowVector zi = z.row(i);
        int best = 0;
        double best_d = (entries_.row(0) - zi).squaredNorm();
        for (Eigen::Index k = 1; k < entries_.rows(); ++k) {
            const double d = (entries_.row(k) - zi).squaredNorm();
            if (d < best_d) {
                best_d = d;
                best = static_cast<int>(k);
            }
        }
        out[static_cast<std::size_t>(i)] = best;
    }
    return out;
}

LatentSequence Codebook::quantize(const Matrix& z) const {
    LatentSequence out;
    out.indices = nearest(z);
    out.latents.resize(z.rows(), z.cols());
    for (Eigen::Index i = 0; i < z.rows(); ++i) out.latents.row(i) = entries_.row(out.indices[static_cast<std::size_t>(i)]);
    return out;
}

void Codebook::ema_update(const Matrix& z, const std::vector<int>& assignments) {
    const Eigen::Index k = entries_.rows();
    RowVector counts = RowVector::Zero(k);
    Matrix sums = Matrix::Zero(k, entries_.cols());
    for (Eigen::Index i = 0; i < z.rows(); ++i) {
        const int a = assignments[static_cast<std::size_t>(i)];
        counts(a) += 1.0;
        sums.row(a) += z.row(i);
    }
    const double g = config_.decay;
    cluster_size_ = g * cluster_size_ + (1.0 - g) * counts;
    embed_sum_ = g * embed_sum_ + (1.0 - g) * sums;
    const double n = cluster_size_.sum();
    const double eps = config_.epsilon;
    for (Eigen::Index c = 0; c < k; ++c) {
        const double smoothed = (cluster_size_(c) + eps) / (n + static_cast<double>(k) * eps) * n;
        entries_.row(c) = embed_sum_.row(c) / smoothed;
    }
}

int Codebook::reseed_dead(const Matrix& z, std::mt19937_64& rng) {
    if (config_.dead_threshold <= 0.0 || z.rows() == 0) return 0;
    std::uniform_int_distribution<Eigen::Index> pick(0, z.rows() - 1);
    int reseeded = 0;
    for (Eigen::Index c = 0; c < entries_.rows(); ++c) {
        if (cluster_size_(c) >= config_.dead_threshold) continue;
        const RowVector v = z.row(pick(rng));
        entries_.row(c) = v;
        embed_sum_.row(c) = v;
        cluster_size_(c) = 1.0;
        ++reseeded;
    }
    return reseeded;
}

void Codebook::initialize_from(const Matrix& z, std::mt19937_64& rng) {
    std::uniform_int_distribution<Eigen::Index> pick(0, z.rows() - 1);
    for (Eigen::Index c = 0; c < entries_.rows(); ++c) entries_.row(c) = z.row(pick(rng));
    embed_sum_ = entries_;
    cluster_size_.setOnes();
    initialized_ = true;
}

void Codebook::set_state(Matrix entries, RowVector cluster_size, Matrix embed_sum) {
    entries_ = std::move(entries);
    cluster_size_ = std::move(cluster_size);
    embed_sum_ = std::move(embed_sum);
    config_.size = static_cast<int>(entries_.rows());
    config_.dim = static_cast<int>(entries_.cols());
    initialized_ = true;
}

void Codebook::save(nn::Archive& ar, const std::string& prefix) const {
    ar.tensors[prefix + "entries"] = entries_;
    ar.tensors[prefix + "cluster_size"] = cluster_size_;
    ar.tensors[prefix + "embed_sum"] = embed_sum_;
}

void Codebook::load(const nn::Archive& ar, const std::string& prefix) {
    const CodebookConfig keep = config_;
    set_state(ar.tensor(prefix + "entries"), ar.tensor(prefix + "cluster_size"), ar.tensor(prefix + "embed_sum"));
    config_.decay = keep.decay;
    config_.epsilon = keep.epsilon;
    config_.dead_threshold = keep.dead_threshold;
}

nlohmann::json TokenizerConfig::to_json() const {
    return {{"joints", joints},
            {"hidden", hidden},
            {"res_blocks", res_blocks},
            {"down_levels", down_levels},
            {"codebook_size", codebook.size},
            {"codebook_dim", codebook.dim},
            {"ema_decay", codebook.decay},
            {"ema_epsilon", codebook.epsilon},
            {"dead_threshold", codebook.dead_threshold},
            {"encoder", kind == EncoderKind::vq ? "vq" : "vae"},
            {"commitment", commitment},
            {"kl_weight", kl_weight}};
}

TokenizerConfig TokenizerConfig::from_json(const nlohmann::json& j) {
    TokenizerConfig c;
    c.joints = j.at("joints");
    c.hidden = j.at("hidden");
    c.res_blocks = j.at("res_blocks");
    c.down_levels = j.at("down_levels");
    c.codebook.size = j.at("codebook_size");
    c.codebook.dim = j.at("codebook_dim");
    c.codebook.decay = j.at("ema_decay");
    c.codebook.epsilon = j.at("ema_epsilon");
    c.codebook.dead_threshold = j.at("dead_threshold");
    c.kind = j.at("encoder").get<std::string>() == "vae" ? EncoderKind::vae : EncoderKind::vq;
    c.commitment = j.at("commitment");
    c.kl_weight = j.at("kl_weight");
    return c;
}

Tokenizer::Tokenizer(const TokenizerConfig& config, std::uint64_t seed)
    : config_(config), codebook_(config.codebook), normalizer_(config.frame_dim()) {
    nn::Rng rng(seed);
    const int f = config.frame_dim();
    const int h = config.hidden;
    const int out = config.kind == EncoderKind::vae ? 2 * config.latent_dim() : config.latent_dim();
    const int dilations[] = {1, 3, 9};
    enc_in_ = nn::Conv1d(f, h, 3, 1, 1, rng);
    for (int l = 0; l < config.down_levels; ++l) {
        enc_down_.emplace_back(h, h, 4, 2, 1, rng);
        auto& blocks = enc_res_.emplace_back();
        for (int b = 0; b < config.res_blocks; ++b) blocks.emplace_back(h, dilations[b % 3], rng);
    }
    enc_out_ = nn::Conv1d(h, out, 3, 1, 1, rng);
    dec_in_ = nn::Conv1d(config.latent_dim(), h, 3, 1, 1, rng);
    for (int l = 0; l < config.down_levels; ++l) {
        auto& blocks = dec_res_.emplace_back();
        for (int b = 0; b < config.res_blocks; ++b) blocks.emplace_back(h, dilations[(config.res_blocks - 1 - b) % 3], rng);
        dec_up_.emplace_back(h, h, 3, 1, 1, rng);
    }
    dec_mid_ = nn::Conv1d(h, h, 3, 1, 1, rng);
    dec_out_ = nn::Conv1d(h, f, 3, 1, 1, rng);
}

Tensor Tokenizer::encode_tensor(const Tensor& x, int seq_len, Tensor* logvar) const {
    if (seq_len < downsample()) throw DataError(DataErrc::invalid_argument, "encoder needs at least d frames");
    Tensor h = nn::relu(enc_in_.forward(x, seq_len));
    int len = seq_len;
    for (std::size_t l = 0; l < enc_down_.size(); ++l) {
        h = enc_down_[l].forward(h, len);
        len = enc_down_[l].out_len(len);
        for (const auto& b : enc_res_[l]) h = b.forward(h, len);
    }
    h = enc_out_.forward(nn::relu(h), len);
    if (config_.kind == EncoderKind::vae) {
        const int d = config_.latent_dim();
        if (logvar) *logvar = nn::slice_cols(h, d, d);
        return nn::slice_cols(h, 0, d);
    }
    return h;
}

Tensor Tokenizer::decode_tensor(const Tensor& z, int latent_len) const {
    Tensor h = nn::relu(dec_in_.forward(z, latent_len));
    int len = latent_len;
    for (std::size_t l = 0; l < dec_up_.size(); ++l) {
        for (const auto& b : dec_res_[l]) h = b.forward(h, len);
        h = nn::upsample_rows(h, 2);
        len *= 2;
        h = dec_up_[l].forward(h, len);
    }
    h = nn::relu(dec_mid_.forward(h, len));
    return dec_out_.forward(h, len);
}

Matrix Tokenizer::encode_normalized(const Matrix& frames, int seq_len) const {
    nn::NoGradGuard guard;
    return encode_tensor(Tensor::constant(frames), seq_len).value();
}

Matrix Tokenizer::encode(const std::vector<motion::MotionFrame>& frames) const {
    const int d = downsample();
    const int usable = static_cast<int>(frames.size()) / d * d;
    if (usable == 0) throw DataError(DataErrc::invalid_argument, "encoder needs at least d frames");
    const Matrix x = normalizer_.apply(stack(std::span(frames.data(), static_cast<std::size_t>(usable))));
    return encode_normalized(x, usable);
}

LatentSequence Tokenizer::quantize(const Matrix& z) const {
    if (config_.kind == EncoderKind::vae) {
        LatentSequence out;
        out.latents = z;
        out.downsample = downsample();
        return out;
    }
    LatentSequence out = codebook_.quantize(z);
    out.downsample = downsample();
    return out;
}

Matrix Tokenizer::decode_normalized(const Matrix& latents, int latent_len) const {
    nn::NoGradGuard guard;
    return decode_tensor(Tensor::constant(latents), latent_len).value();
}

std::vector<motion::MotionFrame> Tokenizer::decode(const Matrix& latents) const {
    const Matrix x = normalizer_.invert(decode_normalized(latents, static_cast<int>(latents.rows())));
    std::vector<motion::MotionFrame> out;
    out.reserve(static_cast<std::size_t>(x.rows()));
    for (Eigen::Index i = 0; i < x.rows(); ++i) out.push_back(unflatten_agent(x.row(i), config_.joints));
    return out;
}

nn::NamedParams Tokenizer::parameters() const {
    nn::NamedParams p;
    enc_in_.collect(p, "enc.in");
    for (std::size_t l = 0; l < enc_down_.size(); ++l) {
        enc_down_[l].collect(p, "enc.down" + std::to_string(l));
        for (std::size_t b = 0; b < enc_res_[l].size(); ++b)
            enc_res_[l][b].collect(p, "enc.res" + std::to_string(l) + "_" + std::to_string(b));
    }
    enc_out_.collect(p, "enc.out");
    dec_in_.collect(p, "dec.in");
    for (std::size_t l = 0; l < dec_up_.size(); ++l) {
        for (std::size_t b = 0; b < dec_res_[l].size(); ++b)
            dec_res_[l][b].collect(p, "dec.res" + std::to_string(l) + "_" + std::to_string(b));
        dec_up_[l].collect(p, "dec.up" + std::to_string(l));
    }
    dec_mid_.collect(p, "dec.mid");
    dec_out_.collect(p, "dec.out");
    return p;
}

nn::Archive Tokenizer::to_archive() const {
    nn::Archive ar;
    ar.meta["kind"] = "tokenizer";
    ar.meta["config"] = config_.to_json();
    ar.put_params(parameters(), "net.");
    codebook_.save(ar, "codebook.");
    normalizer_.save(ar, "norm.frame");
    return ar;
}

Tokenizer Tokenizer::from_archive(const nn::Archive& ar) {
    if (ar.meta.value("kind", "") != "tokenizer") throw DataError(DataErrc::malformed_header, "archive is not a tokenizer");
    Tokenizer t(TokenizerConfig::from_json(ar.meta.at("config")), 0);
    ar.get_params(t.parameters(), "net.");
    t.codebook_.load(ar, "codebook.");
    t.normalizer_ = Normalizer::load(ar, "norm.frame");
    return t;
}

nlohmann::json Stage1Config::to_json() const {
    return {{"iterations", iterations}, {"batch", batch},     {"crop", crop},
            {"lr", lr},                 {"weight_decay", weight_decay}, {"seed", seed}, {"log_every", log_every}};
}

Stage1Config Stage1Config::from_json(const nlohmann::json& j) {
    Stage1Config c;
    c.iterations = j.value("iterations", c.iterations);
    c.batch = j.value("batch", c.batch);
    c.crop = j.value("crop", c.crop);
    c.lr = j.value("lr", c.lr);
    c.weight_decay = j.value("weight_decay", c.weight_decay);
    c.seed = j.value("seed", c.seed);
    c.log_every = j.value("log_every", c.log_every);
    return c;
}

Stage1Log train_stage1(Tokenizer& tok, const FrameStreams& streams, const Stage1Config& config) {
    const int d = tok.downsample();
    if (config.crop % d != 0) throw DataError(DataErrc::invalid_argument, "crop must be divisible by d");
    std::vector<Matrix> normalized;
    {
        std::vector<Matrix> raw;
        Eigen::Index rows = 0;
        for (const auto& s : streams) {
            if (static_cast<int>(s.size()) < config.crop) continue;
            raw.push_back(stack(std::span(s)));
            rows += raw.back().rows();
        }
        if (raw.empty()) throw DataError(DataErrc::invalid_argument, "no training stream is as long as the crop");
        if (tok.normalizer().mean().isZero() && tok.normalizer().scale().isOnes()) {
            Matrix all(rows, raw.front().cols());
            Eigen::Index at = 0;
            for (const auto& m : raw) {
                all.middleRows(at, m.rows()) = m;
                at += m.rows();
            }
            tok.set_normalizer(Normalizer::fit(all));
        }
        for (const auto& m : raw) normalized.push_back(tok.normalizer().apply(m));
    }

    std::mt19937_64 rng(config.seed);
    nn::AdamWConfig opt_cfg;
    opt_cfg.lr = config.lr;
    opt_cfg.weight_decay = config.weight_decay;
    nn::AdamW opt(tok.parameters(), opt_cfg);
    const bool vq = tok.config().kind == EncoderKind::vq;
    const int frame_dim = tok.config().frame_dim();
    const int latent_len = config.crop / d;

    Stage1Log log;
    double acc_total = 0, acc_rec = 0, acc_aux = 0;
    std::set<int> used;
    std::normal_distribution<double> gauss;
    std::uniform_int_distribution<std::size_t> pick_stream(0, normalized.size() - 1);

    for (int it = 1; it <= config.iterations; ++it) {
        Matrix batch(static_cast<Eigen::Index>(config.batch) * config.crop, frame_dim);
        for (int b = 0; b < config.batch; ++b) {
            const Matrix& s = normalized[pick_stream(rng)];
            std::uniform_int_distribution<Eigen::Index> pick_start(0, s.rows() - config.crop);
            batch.middleRows(static_cast<Eigen::Index>(b) * config.crop, config.crop) = s.middleRows(pick_start(rng), config.crop);
        }
        const Tensor x = Tensor::constant(batch);
        opt.zero_grad();
        Tensor total;
        Tensor rec;
        Tensor aux;
        std::vector<int> idx;
        Matrix z_value;
        if (vq) {
            const Tensor z = tok.encode_tensor(x, config.crop);
            z_value = z.value();
            if (!tok.codebook().initialized()) tok.codebook().initialize_from(z_value, rng);
            const LatentSequence q = tok.codebook().quantize(z_value);
            idx = q.indices;
            const Tensor zq = nn::straight_through(z, q.latents);
            rec = nn::mse(tok.decode_tensor(zq, latent_len), batch);
            aux = nn::mse(z, q.latents);
            total = nn::add(rec, nn::scale(aux, tok.config().commitment));
        } else {
            Tensor logvar;
            const Tensor mu = tok.encode_tensor(x, config.crop, &logvar);
            Matrix noise(mu.rows(), mu.cols());
            for (Eigen::Index i = 0; i < noise.size(); ++i) noise.data()[i] = gauss(rng);
            const Tensor z = nn::add(mu, nn::mul(nn::exp(nn::scale(logvar, 0.5)), Tensor::constant(noise)));
            rec = nn::mse(tok.decode_tensor(z, latent_len), batch);
            aux = nn::kl_normal(mu, logvar);
            total = nn::add(rec, nn::scale(aux, tok.config().kl_weight));
        }
        if (!std::isfinite(total.item())) throw NumericError("stage-1 loss is not finite", -1, -1, it);
        total.backward();
        opt.step();
        if (vq) {
            tok.codebook().ema_update(z_value, idx);
            tok.codebook().reseed_dead(z_value, rng);
            used.insert(idx.begin(), idx.end());
        }
        acc_total += total.item();
        acc_rec += rec.item();
        acc_aux += aux.item();
        if (it % config.log_every == 0 || it == config.iterations) {
            const int n = it % config.log_every == 0 ? config.log_every : it % config.log_every;
            log.total.push_back(acc_total / n);
            log.reconstruction.push_back(acc_rec / n);
            log.commitment.push_back(acc_aux / n);
            log.usage.push_back(vq ? static_cast<double>(used.size()) / tok.config().codebook.size : 0.0);
            acc_total = acc_rec = acc_aux = 0;
            used.clear();
        }
    }
    return log;
}

}  // namespace r2r::model
