#include "gradcheck.hpp"
#include "r2r/common/error.hpp"
#include "r2r/nn/archive.hpp"
#include "r2r/nn/layers.hpp"

#include <doctest.h>

#include <sstream>

using namespace r2r::nn;
using r2r::testing::gradcheck;

namespace {

Tensor rand_param(int r, int c, Rng& rng, double scale = 1.0) { return uniform_param(r, c, scale, rng); }

Matrix rand_matrix(int r, int c, Rng& rng) {
    std::normal_distribution<double> n;
    Matrix m(r, c);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = n(rng);
    return m;
}

constexpr double kTol = 1e-5;

}  // namespace

TEST_CASE("elementwise and linear ops have correct gradients") {
    Rng rng(1);
    Tensor a = rand_param(3, 4, rng);
    Tensor b = rand_param(3, 4, rng);
    Tensor w = rand_param(4, 5, rng);
    Tensor bias = rand_param(1, 5, rng);
    const Matrix target = rand_matrix(3, 5, rng);

    CHECK(gradcheck({a, w, bias}, [&] { return mse(linear(a, w, bias), target); }) < kTol);
    CHECK(gradcheck({a, b}, [&] { return sum(mul(add(a, b), sub(a, scale(b, 0.5)))); }) < kTol);
    CHECK(gradcheck({a}, [&] { return sum(mul(relu(a), a)); }) < kTol);
    CHECK(gradcheck({a}, [&] { return sum(mul(silu(a), a)); }) < kTol);
    CHECK(gradcheck({a}, [&] { return sum(mul(gelu(a), a)); }) < kTol);
    CHECK(gradcheck({a}, [&] { return mean(exp(a)); }) < kTol);
    CHECK(gradcheck({a, w}, [&] { return sum(matmul(a, w)); }) < kTol);
}

TEST_CASE("broadcast adds and layer norm") {
    Rng rng(2);
    Tensor x = rand_param(6, 4, rng);
    Tensor row = rand_param(1, 4, rng);
    Tensor tile = rand_param(3, 4, rng);
    Tensor g = rand_param(1, 4, rng);
    Tensor be = rand_param(1, 4, rng);
    const Matrix t = rand_matrix(6, 4, rng);
    CHECK(gradcheck({x, row}, [&] { return mse(add_row(x, row), t); }) < kTol);
    CHECK(gradcheck({x, tile}, [&] { return mse(add_tiled(x, tile), t); }) < kTol);
    CHECK(gradcheck({x, g, be}, [&] { return mse(layer_norm(x, g, be), t); }) < kTol);
}

TEST_CASE("attention gradients, causal and bidirectional") {
    Rng rng(3);
    const int seq = 4;
    Tensor q = rand_param(2 * seq, 6, rng);
    Tensor k = rand_param(2 * seq, 6, rng);
    Tensor v = rand_param(2 * seq, 6, rng);
    const Matrix t = rand_matrix(2 * seq, 6, rng);
    for (bool causal : {false, true}) {
        CHECK(gradcheck({q, k, v}, [&] { return mse(attention(q, k, v, seq, 2, causal), t); }) < kTol);
    }
}

TEST_CASE("causal attention ignores later keys") {
    Rng rng(4);
    const int seq = 5;
    Matrix q = rand_matrix(seq, 4, rng);
    Matrix k = rand_matrix(seq, 4, rng);
    Matrix v = rand_matrix(seq, 4, rng);
    const Matrix base = attention(Tensor::constant(q), Tensor::constant(k), Tensor::constant(v), seq, 2, true).value();
    k.row(4).setRandom();
    v.row(4).setRandom();
    const Matrix changed = attention(Tensor::constant(q), Tensor::constant(k), Tensor::constant(v), seq, 2, true).value();
    CHECK(base.topRows(4) == changed.topRows(4));
}

TEST_CASE("conv1d matches a direct loop and has correct gradients") {
    Rng rng(5);
    const int seq = 7, cin = 3, cout = 2, kernel = 3;
    for (auto [stride, pad, dil] : {std::tuple{1, 1, 1}, std::tuple{2, 1, 1}, std::tuple{1, 2, 2}, std::tuple{2, 0, 1}}) {
        Tensor x = rand_param(2 * seq, cin, rng);
        Tensor w = rand_param(kernel * cin, cout, rng);
        Tensor b = rand_param(1, cout, rng);
        const int out_len = conv1d_out_len(seq, kernel, stride, pad, dil);
        const Matrix y = conv1d(x, w, b, seq, kernel, stride, pad, dil).value();
        REQUIRE(y.rows() == 2 * out_len);
        for (int n = 0; n < 2; ++n)
            for (int t = 0; t < out_len; ++t)
                for (int o = 0; o < cout; ++o) {
                    double acc = b.value()(0, o);
                    for (int tap = 0; tap < kernel; ++tap) {
                        const int src = t * stride - pad + tap * dil;
                        if (src < 0 || src >= seq) continue;
                        for (int c = 0; c < cin; ++c) acc += x.value()(n * seq + src, c) * w.value()(tap * cin + c, o);
                    }
                    CHECK(y(n * out_len + t, o) == doctest::Approx(acc).epsilon(1e-12));
                }
        const Matrix t = rand_matrix(2 * out_len, cout, rng);
        CHECK(gradcheck({x, w, b}, [&] { return mse(conv1d(x, w, b, seq, kernel, stride, pad, dil), t); }) < kTol);
    }
}

TEST_CASE("shape ops route gradients") {
    Rng rng(6);
    Tensor a = rand_param(4, 3, rng);
    Tensor b = rand_param(4, 2, rng);
    Tensor c = rand_param(2, 3, rng);
    const Matrix t1 = rand_matrix(8, 5, rng);
    CHECK(gradcheck({a, b}, [&] { return mse(upsample_rows(concat_cols({a, b}), 2), t1); }) < kTol);
    const Matrix t2 = rand_matrix(6, 2, rng);
    CHECK(gradcheck({a, c}, [&] { return mse(slice_cols(concat_rows({a, c}), 1, 2), t2); }) < kTol);
    const Matrix t3 = rand_matrix(2, 3, rng);
    CHECK(gradcheck({a}, [&] { return mse(slice_rows(a, 1, 2), t3); }) < kTol);
    const std::vector<int> idx = {3, 0, 3};
    const Matrix t4 = rand_matrix(3, 3, rng);
    CHECK(gradcheck({a}, [&] { return mse(gather_rows(a, idx), t4); }) < kTol);
    const Matrix t5 = rand_matrix(2, 6, rng);
    CHECK(gradcheck({a}, [&] { return mse(reshape(a, 2, 6), t5); }) < kTol);
}

TEST_CASE("segment interleaving round trips") {
    Rng rng(7);
    // Two samples: group 0 has 2 rows per sample, group 1 has 1 row per sample.
    Tensor g0 = rand_param(4, 3, rng);
    Tensor g1 = rand_param(2, 3, rng);
    const std::vector<int> counts = {2, 1};
    const Tensor joined = concat_segments({g0, g1}, counts);
    REQUIRE(joined.rows() == 6);
    CHECK(joined.value().row(2) == g1.value().row(0));
    CHECK(joined.value().row(3) == g0.value().row(2));
    CHECK(slice_segments(joined, 3, 0, 2).value() == g0.value());
    CHECK(slice_segments(joined, 3, 2, 1).value() == g1.value());
    const Matrix t = rand_matrix(6, 3, rng);
    CHECK(gradcheck({g0, g1}, [&] { return mse(concat_segments({g0, g1}, counts), t); }) < kTol);
    CHECK(gradcheck({g0, g1}, [&] { return sum(mul(slice_segments(concat_segments({g0, g1}, counts), 3, 1, 2),
                                                   slice_segments(concat_segments({g0, g1}, counts), 3, 1, 2))); }) < kTol);
}

TEST_CASE("losses") {
    Rng rng(8);
    Tensor a = rand_param(5, 4, rng);
    Tensor lv = rand_param(5, 4, rng, 0.5);
    CHECK(gradcheck({a}, [&] { return row_norm_mean(a); }) < kTol);
    const std::vector<int> targets = {0, 3, 1, 1, 2};
    CHECK(gradcheck({a}, [&] { return cross_entropy(a, targets); }) < kTol);
    CHECK(gradcheck({a, lv}, [&] { return kl_normal(a, lv); }) < kTol);

    // row_norm_mean is the unsquared norm.
    Matrix m(2, 2);
    m << 3.0, 4.0, 0.0, 0.0;
    CHECK(row_norm_mean(Tensor::constant(m)).item() == doctest::Approx(2.5));
    // KL of a standard normal is zero.
    CHECK(kl_normal(Tensor::constant(Matrix::Zero(3, 2)), Tensor::constant(Matrix::Zero(3, 2))).item() ==
          doctest::Approx(0.0));
}

TEST_CASE("straight-through passes the quantized value forward and the gradient back") {
    Rng rng(9);
    Tensor z = rand_param(3, 2, rng);
    const Matrix q = rand_matrix(3, 2, rng);
    const Matrix t = rand_matrix(3, 2, rng);
    Tensor out = straight_through(z, q);
    CHECK(out.value() == q);
    z.zero_grad();
    mse(out, t).backward();
    // d/dz equals d/dq of the loss evaluated at q.
    const Matrix expected = 2.0 * (q - t) / 6.0;
    CHECK((z.grad() - expected).cwiseAbs().maxCoeff() < 1e-12);

    Tensor s = stop_gradient(z);
    CHECK_FALSE(s.requires_grad());
}

TEST_CASE("no-grad guard skips graph recording") {
    Rng rng(10);
    Tensor a = rand_param(2, 2, rng);
    {
        NoGradGuard guard;
        Tensor b = mul(a, a);
        CHECK_FALSE(b.requires_grad());
    }
    CHECK(mul(a, a).requires_grad());
}

TEST_CASE("transformer block gradients") {
    Rng rng(11);
    TransformerBlock block(8, 2, 2, rng);
    NamedParams params;
    block.collect(params, "b");
    Tensor x = rand_param(6, 8, rng);
    const Matrix t = rand_matrix(6, 8, rng);
    std::vector<Tensor> ps{x};
    for (auto& [n, p] : params) ps.push_back(p);
    CHECK(gradcheck(ps, [&] { return mse(block.forward(x, 3, true), t); }) < 1e-4);
}

TEST_CASE("AdamW reduces a quadratic") {
    Rng rng(12);
    Tensor w = rand_param(4, 4, rng);
    const Matrix target = rand_matrix(4, 4, rng);
    AdamWConfig cfg;
    cfg.lr = 0.05;
    cfg.weight_decay = 0.0;
    AdamW opt({{"w", w}}, cfg);
    const double start = mse(w, target).item();
    for (int i = 0; i < 200; ++i) {
        opt.zero_grad();
        mse(w, target).backward();
        opt.step();
    }
    CHECK(mse(w, target).item() < 0.01 * start);
}

TEST_CASE("archive round trip and error codes") {
    Rng rng(13);
    Linear lin(3, 2, rng);
    NamedParams params;
    lin.collect(params, "lin");
    Archive ar;
    ar.meta["config"] = {{"hidden", 3}};
    ar.put_params(params);
    std::stringstream ss;
    write_archive(ss, ar);
    const Archive back = read_archive(ss);
    CHECK(back.meta == ar.meta);
    CHECK(back.tensor("lin.weight") == lin.weight().value());

    Linear other(3, 2, rng);
    NamedParams other_params;
    other.collect(other_params, "lin");
    back.get_params(other_params);
    CHECK(other.weight().value() == lin.weight().value());

    Linear wrong(4, 2, rng);
    NamedParams wrong_params;
    wrong.collect(wrong_params, "lin");
    CHECK_THROWS_AS(back.get_params(wrong_params), r2r::DataError);

    std::stringstream garbage("not a checkpoint at all");
    CHECK_THROWS_AS(read_archive(garbage), r2r::DataError);
}
