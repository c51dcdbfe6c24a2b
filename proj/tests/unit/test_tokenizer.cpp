#include "gradcheck.hpp"
#include "r2r/data/dataset.hpp"
#include "r2r/data/synth.hpp"
#include "r2r/model/tokenizer.hpp"

#include <doctest.h>

#include <sstream>

using namespace r2r::model;
using r2r::nn::Tensor;

namespace {

TokenizerConfig tiny_config(EncoderKind kind = EncoderKind::vq) {
    TokenizerConfig c;
    c.joints = 24;
    c.hidden = 32;
    c.res_blocks = 1;
    c.codebook.size = 32;
    c.codebook.dim = 16;
    c.kind = kind;
    return c;
}

FrameStreams synth_streams(int clips, double seconds) {
    FrameStreams out;
    for (int i = 0; i < clips; ++i) {
        const auto duel = r2r::data::synth_duel(100 + i, seconds);
        for (int role = 0; role < 2; ++role) out.push_back(r2r::data::encode_role(duel, role).agent);
    }
    return out;
}

}  // namespace

TEST_CASE("quantize picks the nearest entry with lowest-index ties") {
    CodebookConfig cfg;
    cfg.size = 2;
    cfg.dim = 2;
    Codebook cb(cfg);
    Matrix e(2, 2);
    e << 0.0, 0.0, 1.0, 0.0;
    cb.set_state(e, RowVector::Ones(2), e);
    Matrix z(1, 2);
    z << 0.9, 0.1;
    CHECK(cb.nearest(z)[0] == 1);
    z << 0.0, 0.0;
    const auto q = cb.quantize(z);
    CHECK(q.indices[0] == 0);
    CHECK(q.latents == z);

    CodebookConfig six;
    six.size = 6;
    six.dim = 1;
    Codebook tie(six);
    Matrix te(6, 1);
    te << 10, 10, 1, 10, 10, 3;
    tie.set_state(te, RowVector::Ones(6), te);
    Matrix mid(1, 1);
    mid << 2.0;
    CHECK(tie.nearest(mid)[0] == 2);
}

TEST_CASE("quantization is idempotent") {
    CodebookConfig cfg;
    cfg.size = 16;
    cfg.dim = 4;
    Codebook cb(cfg);
    std::mt19937_64 rng(3);
    Matrix z = Matrix::Random(50, 4);
    cb.initialize_from(z, rng);
    const auto q = cb.quantize(Matrix::Random(40, 4));
    const auto q2 = cb.quantize(q.latents);
    CHECK(q2.indices == q.indices);
    CHECK(q2.latents == q.latents);
}

TEST_CASE("EMA degenerate decays") {
    CodebookConfig cfg;
    cfg.size = 3;
    cfg.dim = 2;
    cfg.decay = 0.0;
    Codebook cb(cfg);
    Matrix e(3, 2);
    e << 0, 0, 5, 5, -5, 5;
    cb.set_state(e, RowVector::Ones(3), e);
    Matrix z(4, 2);
    z << 0.1, 0.0, -0.1, 0.2, 4.0, 5.0, 6.0, 5.0;
    const auto idx = cb.nearest(z);
    cb.ema_update(z, idx);
    CHECK((cb.entries().row(0) - RowVector(Eigen::RowVector2d(0.0, 0.1))).norm() < 1e-4);
    CHECK((cb.entries().row(1) - RowVector(Eigen::RowVector2d(5.0, 5.0))).norm() < 1e-4);

    cfg.decay = 1.0;
    Codebook frozen(cfg);
    frozen.set_state(e, RowVector::Ones(3), e);
    frozen.ema_update(z, frozen.nearest(z));
    CHECK((frozen.entries() - e).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("dead codes are re-seeded from the batch") {
    CodebookConfig cfg;
    cfg.size = 4;
    cfg.dim = 2;
    cfg.decay = 0.5;
    Codebook cb(cfg);
    std::mt19937_64 rng(1);
    Matrix z = Matrix::Random(8, 2);
    cb.initialize_from(z, rng);
    Matrix far = Matrix::Constant(8, 2, 100.0);
    for (int i = 0; i < 3; ++i) cb.ema_update(far, cb.nearest(far));
    const int n = cb.reseed_dead(far, rng);
    CHECK(n >= 1);
    CHECK(cb.cluster_size().minCoeff() >= 1.0 - 1e-12);
}

TEST_CASE("tokenizer shapes and batch independence") {
    Tokenizer tok(tiny_config(), 1);
    const auto streams = synth_streams(1, 3.0);
    const Matrix z64 = tok.encode(std::vector(streams[0].begin(), streams[0].begin() + 64));
    CHECK(z64.rows() == 16);
    CHECK(z64.cols() == 16);
    CHECK(tok.encode(std::vector(streams[0].begin(), streams[0].begin() + 4)).rows() == 1);
    CHECK(tok.encode(std::vector(streams[0].begin(), streams[0].begin() + 7)).rows() == 1);
    CHECK(tok.decode(z64.topRows(1)).size() == 4);

    const Matrix x = tok.normalizer().apply(stack(std::span(streams[0].data(), 32)));
    Matrix two(64, x.cols());
    two << x, x;
    const Matrix one = tok.encode_normalized(x, 32);
    const Matrix both = tok.encode_normalized(two, 32);
    CHECK((both.topRows(8) - one).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((both.bottomRows(8) - one).cwiseAbs().maxCoeff() < 1e-12);
    CHECK(tok.decode_normalized(one, 8) == tok.decode_normalized(one, 8));
}

TEST_CASE("straight-through gradient equals the gradient at the quantized value") {
    // Tiny model: decoder loss as a function of the encoder output.
    TokenizerConfig cfg = tiny_config();
    cfg.joints = 1;
    cfg.hidden = 4;
    cfg.codebook.dim = 3;
    cfg.codebook.size = 4;
    Tokenizer tok(cfg, 2);
    std::mt19937_64 rng(5);
    Matrix zv = Matrix::Random(2, 3);
    tok.codebook().initialize_from(Matrix::Random(10, 3), rng);
    const auto q = tok.quantize(zv);
    const Matrix target = Matrix::Random(8, cfg.frame_dim());

    Tensor z = Tensor::parameter(zv);
    r2r::nn::mse(tok.decode_tensor(r2r::nn::straight_through(z, q.latents), 2), target).backward();
    const Matrix st_grad = z.grad();

    Tensor qz = Tensor::parameter(q.latents);
    auto loss = [&] { return r2r::nn::mse(tok.decode_tensor(qz, 2), target); };
    CHECK(r2r::testing::gradcheck({qz}, loss) < 1e-3);
    qz.zero_grad();
    loss().backward();
    CHECK((qz.grad() - st_grad).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("stage-1 toy training reduces loss and keeps codes alive") {
    Tokenizer tok(tiny_config(), 3);
    const auto streams = synth_streams(2, 6.0);
    Stage1Config cfg;
    cfg.iterations = 100;
    cfg.batch = 8;
    cfg.lr = 1e-3;
    cfg.log_every = 20;
    const Stage1Log log = train_stage1(tok, streams, cfg);
    REQUIRE(log.total.size() == 5);
    for (double v : log.total) CHECK(std::isfinite(v));
    CHECK(log.total.back() < log.total.front());
    CHECK(log.usage.back() > 0.1);
    CHECK(tok.codebook().cluster_size().minCoeff() >= 0.0);

    std::stringstream ss;
    r2r::nn::write_archive(ss, tok.to_archive());
    const Tokenizer back = Tokenizer::from_archive(r2r::nn::read_archive(ss));
    const Matrix z = tok.encode(streams[0]);
    CHECK(back.encode(streams[0]) == z);
    CHECK(back.quantize(z).indices == tok.quantize(z).indices);
}

TEST_CASE("VAE variant shares the signatures without indices") {
    Tokenizer tok(tiny_config(EncoderKind::vae), 4);
    const auto streams = synth_streams(1, 4.0);
    Stage1Config cfg;
    cfg.iterations = 30;
    cfg.batch = 4;
    cfg.lr = 1e-3;
    cfg.log_every = 10;
    const auto log = train_stage1(tok, streams, cfg);
    CHECK(log.total.back() < log.total.front());
    const Matrix z = tok.encode(streams[0]);
    const auto q = tok.quantize(z);
    CHECK(q.indices.empty());
    CHECK(q.latents == z);
    CHECK(tok.decode(z).size() == static_cast<std::size_t>(z.rows() * 4));
}
