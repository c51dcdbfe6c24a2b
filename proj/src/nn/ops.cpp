#include "r2r/nn/ops.hpp"

#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <string>

namespace r2r::nn {

namespace {

void require(bool ok, const char* what) {
    if (!ok) throw std::invalid_argument(std::string("nn op shape error: ") + what);
}

Node& parent(Node& self, std::size_t i) { return *self.parents[i]; }

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
    require(a.cols() == b.rows(), "matmul");
    Matrix out = a.value() * b.value();
    return make_result(std::move(out), {a, b}, [](Node& self) {
        Node& pa = parent(self, 0);
        Node& pb = parent(self, 1);
        if (pa.requires_grad) pa.accumulate(self.grad * pb.value.transpose());
        if (pb.requires_grad) pb.accumulate(pa.value.transpose() * self.grad);
    });
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) {
    require(x.cols() == w.rows(), "linear");
    Matrix out = x.value() * w.value();
    const bool has_bias = b.defined();
    if (has_bias) {
        require(b.rows() == 1 && b.cols() == w.cols(), "linear bias");
        out.rowwise() += b.value().row(0);
    }
    std::vector<Tensor> parents{x, w};
    if (has_bias) parents.push_back(b);
    return make_result(std::move(out), std::move(parents), [has_bias](Node& self) {
        Node& px = parent(self, 0);
        Node& pw = parent(self, 1);
        if (px.requires_grad) px.accumulate(self.grad * pw.value.transpose());
        if (pw.requires_grad) pw.accumulate(px.value.transpose() * self.grad);
        if (has_bias) {
            Node& pb = parent(self, 2);
            if (pb.requires_grad) pb.accumulate(self.grad.colwise().sum());
        }
    });
}

Tensor add(const Tensor& a, const Tensor& b) {
    require(a.rows() == b.rows() && a.cols() == b.cols(), "add");
    return make_result(a.value() + b.value(), {a, b}, [](Node& self) {
        parent(self, 0).accumulate(self.grad);
        parent(self, 1).accumulate(self.grad);
    });
}

Tensor sub(const Tensor& a, const Tensor& b) {
    require(a.rows() == b.rows() && a.cols() == b.cols(), "sub");
    return make_result(a.value() - b.value(), {a, b}, [](Node& self) {
        parent(self, 0).accumulate(self.grad);
        parent(self, 1).accumulate(-self.grad);
    });
}

Tensor mul(const Tensor& a, const Tensor& b) {
    require(a.rows() == b.rows() && a.cols() == b.cols(), "mul");
    Matrix out = a.value().cwiseProduct(b.value());
    return make_result(std::move(out), {a, b}, [](Node& self) {
        Node& pa = parent(self, 0);
        Node& pb = parent(self, 1);
        if (pa.requires_grad) pa.accumulate(self.grad.cwiseProduct(pb.value));
        if (pb.requires_grad) pb.accumulate(self.grad.cwiseProduct(pa.value));
    });
}

Tensor scale(const Tensor& a, double s) {
    return make_result(a.value() * s, {a}, [s](Node& self) { parent(self, 0).accumulate(self.grad * s); });
}

Tensor add_row(const Tensor& x, const Tensor& row) {
    require(row.rows() == 1 && row.cols() == x.cols(), "add_row");
    Matrix out = x.value();
    out.rowwise() += row.value().row(0);
    return make_result(std::move(out), {x, row}, [](Node& self) {
        parent(self, 0).accumulate(self.grad);
        Node& pr = parent(self, 1);
        if (pr.requires_grad) pr.accumulate(self.grad.colwise().sum());
    });
}

Tensor add_tiled(const Tensor& x, const Tensor& p) {
    const Eigen::Index t = p.rows();
    require(p.cols() == x.cols() && t > 0 && x.rows() % t == 0, "add_tiled");
    Matrix out = x.value();
    const Eigen::Index segments = x.rows() / t;
    for (Eigen::Index s = 0; s < segments; ++s) out.middleRows(s * t, t) += p.value();
    return make_result(std::move(out), {x, p}, [t, segments](Node& self) {
        parent(self, 0).accumulate(self.grad);
        Node& pp = parent(self, 1);
        if (pp.requires_grad) {
            Matrix g = Matrix::Zero(t, self.grad.cols());
            for (Eigen::Index s = 0; s < segments; ++s) g += self.grad.middleRows(s * t, t);
            pp.accumulate(g);
        }
    });
}

Tensor relu(const Tensor& x) {
    Matrix out = x.value().cwiseMax(0.0);
    return make_result(std::move(out), {x}, [](Node& self) {
        Node& px = parent(self, 0);
        px.accumulate((px.value.array() > 0.0).cast<double>().matrix().cwiseProduct(self.grad));
    });
}

Tensor silu(const Tensor& x) {
    Matrix sig = (1.0 / (1.0 + (-x.value().array()).exp())).matrix();
    Matrix out = x.value().cwiseProduct(sig);
    return make_result(std::move(out), {x}, [sig](Node& self) {
        Node& px = parent(self, 0);
        auto s = sig.array();
        Matrix d = (s + px.value.array() * s * (1.0 - s)).matrix();
        px.accumulate(d.cwiseProduct(self.grad));
    });
}

namespace {
constexpr double kGeluC = 0.7978845608028654;  // sqrt(2/pi)
constexpr double kGeluK = 0.044715;
}  // namespace

Tensor gelu(const Tensor& x) {
    const double c = kGeluC;
    const double k = kGeluK;
    auto xa = x.value().array();
    Matrix th = (c * (xa + k * xa.cube())).tanh().matrix();
    Matrix out = (0.5 * xa * (1.0 + th.array())).matrix();
    return make_result(std::move(out), {x}, [th, c, k](Node& self) {
        Node& px = parent(self, 0);
        auto xv = px.value.array();
        auto t = th.array();
        Matrix d = (0.5 * (1.0 + t) + 0.5 * xv * (1.0 - t * t) * c * (1.0 + 3.0 * k * xv * xv)).matrix();
        px.accumulate(d.cwiseProduct(self.grad));
    });
}

Tensor exp(const Tensor& x) {
    Matrix out = x.value().array().exp().matrix();
    Matrix saved = out;
    return make_result(std::move(out), {x}, [saved](Node& self) {
        parent(self, 0).accumulate(saved.cwiseProduct(self.grad));
    });
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
    const Eigen::Index n = x.rows();
    const Eigen::Index c = x.cols();
    require(gamma.cols() == c && beta.cols() == c && gamma.rows() == 1 && beta.rows() == 1, "layer_norm");
    Matrix xhat(n, c);
    Eigen::VectorXd inv(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto row = x.value().row(i);
        const double mu = row.mean();
        const double var = (row.array() - mu).square().mean();
        inv(i) = 1.0 / std::sqrt(var + eps);
        xhat.row(i) = (row.array() - mu) * inv(i);
    }
    Matrix out = xhat;
    out.array().rowwise() *= gamma.value().row(0).array();
    out.rowwise() += beta.value().row(0);
    return make_result(std::move(out), {x, gamma, beta}, [xhat, inv](Node& self) {
        Node& px = parent(self, 0);
        Node& pg = parent(self, 1);
        Node& pb = parent(self, 2);
        if (pg.requires_grad) pg.accumulate(self.grad.cwiseProduct(xhat).colwise().sum());
        if (pb.requires_grad) pb.accumulate(self.grad.colwise().sum());
        if (px.requires_grad) {
            Matrix dxhat = self.grad;
            dxhat.array().rowwise() *= pg.value.row(0).array();
            Matrix dx(dxhat.rows(), dxhat.cols());
            for (Eigen::Index i = 0; i < dxhat.rows(); ++i) {
                const double m1 = dxhat.row(i).mean();
                const double m2 = dxhat.row(i).cwiseProduct(xhat.row(i)).mean();
                dx.row(i) = inv(i) * (dxhat.row(i).array() - m1 - xhat.row(i).array() * m2);
            }
            px.accumulate(dx);
        }
    });
}

Tensor attention(const Tensor& q, const Tensor& k, const Tensor& v, int seq_len, int heads, bool causal) {
    const Eigen::Index n = q.rows();
    const Eigen::Index m = q.cols();
    require(k.rows() == n && v.rows() == n && k.cols() == m && v.cols() == m, "attention qkv");
    require(seq_len > 0 && n % seq_len == 0 && heads > 0 && m % heads == 0, "attention layout");
    const Eigen::Index segments = n / seq_len;
    const Eigen::Index dh = m / heads;
    const double scale_factor = 1.0 / std::sqrt(static_cast<double>(dh));

    auto probs = std::make_shared<std::vector<Matrix>>(segments * heads);
    Matrix out(n, m);
    for (Eigen::Index s = 0; s < segments; ++s) {
        for (int h = 0; h < heads; ++h) {
            const auto qs = q.value().block(s * seq_len, h * dh, seq_len, dh);
            const auto ks = k.value().block(s * seq_len, h * dh, seq_len, dh);
            const auto vs = v.value().block(s * seq_len, h * dh, seq_len, dh);
            Matrix scores = (qs * ks.transpose()) * scale_factor;
            for (Eigen::Index i = 0; i < seq_len; ++i) {
                const Eigen::Index visible = causal ? i + 1 : seq_len;
                const double mx = scores.row(i).head(visible).maxCoeff();
                double total = 0.0;
                for (Eigen::Index j = 0; j < seq_len; ++j) {
                    const double e = j < visible ? std::exp(scores(i, j) - mx) : 0.0;
                    scores(i, j) = e;
                    total += e;
                }
                scores.row(i) /= total;
            }
            out.block(s * seq_len, h * dh, seq_len, dh) = scores * vs;
            (*probs)[s * heads + h] = std::move(scores);
        }
    }
    return make_result(std::move(out), {q, k, v}, [probs, seq_len, heads, segments, dh, scale_factor](Node& self) {
        Node& pq = parent(self, 0);
        Node& pk = parent(self, 1);
        Node& pv = parent(self, 2);
        const Eigen::Index n = self.grad.rows();
        const Eigen::Index m = self.grad.cols();
        Matrix dq = Matrix::Zero(n, m);
        Matrix dk = Matrix::Zero(n, m);
        Matrix dv = Matrix::Zero(n, m);
        for (Eigen::Index s = 0; s < segments; ++s) {
            for (int h = 0; h < heads; ++h) {
                const Matrix& p = (*probs)[s * heads + h];
                const auto qs = pq.value.block(s * seq_len, h * dh, seq_len, dh);
                const auto ks = pk.value.block(s * seq_len, h * dh, seq_len, dh);
                const auto vs = pv.value.block(s * seq_len, h * dh, seq_len, dh);
                const auto go = self.grad.block(s * seq_len, h * dh, seq_len, dh);
                dv.block(s * seq_len, h * dh, seq_len, dh) = p.transpose() * go;
                Matrix dp = go * vs.transpose();
                Eigen::VectorXd rs = dp.cwiseProduct(p).rowwise().sum();
                Matrix ds = p.cwiseProduct(dp.colwise() - rs) * scale_factor;
                dq.block(s * seq_len, h * dh, seq_len, dh) = ds * ks;
                dk.block(s * seq_len, h * dh, seq_len, dh) = ds.transpose() * qs;
            }
        }
        pq.accumulate(dq);
        pk.accumulate(dk);
        pv.accumulate(dv);
    });
}

int conv1d_out_len(int seq_len, int kernel, int stride, int pad, int dilation) {
    return (seq_len + 2 * pad - dilation * (kernel - 1) - 1) / stride + 1;
}

Tensor conv1d(const Tensor& x, const Tensor& w, const Tensor& b, int seq_len, int kernel, int stride, int pad,
              int dilation) {
    const Eigen::Index cin = x.cols();
    require(seq_len > 0 && x.rows() % seq_len == 0, "conv1d layout");
    require(w.rows() == kernel * cin, "conv1d weight");
    const int tout = conv1d_out_len(seq_len, kernel, stride, pad, dilation);
    require(tout > 0, "conv1d output length");
    const Eigen::Index segments = x.rows() / seq_len;

    auto col = std::make_shared<Matrix>(Matrix::Zero(segments * tout, kernel * cin));
    for (Eigen::Index s = 0; s < segments; ++s) {
        for (int t = 0; t < tout; ++t) {
            for (int j = 0; j < kernel; ++j) {
                const int src = t * stride - pad + j * dilation;
                if (src < 0 || src >= seq_len) continue;
                col->block(s * tout + t, j * cin, 1, cin) = x.value().row(s * seq_len + src);
            }
        }
    }
    Matrix out = (*col) * w.value();
    const bool has_bias = b.defined();
    if (has_bias) out.rowwise() += b.value().row(0);
    std::vector<Tensor> parents{x, w};
    if (has_bias) parents.push_back(b);
    return make_result(std::move(out), std::move(parents),
                       [col, seq_len, kernel, stride, pad, dilation, tout, segments, cin, has_bias](Node& self) {
                           Node& px = parent(self, 0);
                           Node& pw = parent(self, 1);
                           if (pw.requires_grad) pw.accumulate(col->transpose() * self.grad);
                           if (has_bias) {
                               Node& pb = parent(self, 2);
                               if (pb.requires_grad) pb.accumulate(self.grad.colwise().sum());
                           }
                           if (!px.requires_grad) return;
                           Matrix dcol = self.grad * pw.value.transpose();
                           Matrix dx = Matrix::Zero(segments * seq_len, cin);
                           for (Eigen::Index s = 0; s < segments; ++s) {
                               for (int t = 0; t < tout; ++t) {
                                   for (int j = 0; j < kernel; ++j) {
                                       const int src = t * stride - pad + j * dilation;
                                       if (src < 0 || src >= seq_len) continue;
                                       dx.row(s * seq_len + src) += dcol.block(s * tout + t, j * cin, 1, cin);
                                   }
                               }
                           }
                           px.accumulate(dx);
                       });
}

Tensor upsample_rows(const Tensor& x, int factor) {
    require(factor >= 1, "upsample factor");
    const Eigen::Index n = x.rows();
    Matrix out(n * factor, x.cols());
    for (Eigen::Index i = 0; i < n; ++i)
        for (int r = 0; r < factor; ++r) out.row(i * factor + r) = x.value().row(i);
    return make_result(std::move(out), {x}, [factor](Node& self) {
        Node& px = parent(self, 0);
        Matrix g(px.value.rows(), px.value.cols());
        for (Eigen::Index i = 0; i < g.rows(); ++i) g.row(i) = self.grad.middleRows(i * factor, factor).colwise().sum();
        px.accumulate(g);
    });
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
    require(!parts.empty(), "concat_cols empty");
    const Eigen::Index n = parts.front().rows();
    Eigen::Index total = 0;
    for (const auto& p : parts) {
        require(p.rows() == n, "concat_cols rows");
        total += p.cols();
    }
    Matrix out(n, total);
    std::vector<Eigen::Index> widths;
    Eigen::Index off = 0;
    for (const auto& p : parts) {
        out.middleCols(off, p.cols()) = p.value();
        off += p.cols();
        widths.push_back(p.cols());
    }
    return make_result(std::move(out), parts, [widths](Node& self) {
        Eigen::Index off = 0;
        for (std::size_t i = 0; i < widths.size(); ++i) {
            Node& p = parent(self, i);
            if (p.requires_grad) p.accumulate(self.grad.middleCols(off, widths[i]));
            off += widths[i];
        }
    });
}

Tensor slice_cols(const Tensor& a, Eigen::Index start, Eigen::Index count) {
    require(start >= 0 && count >= 0 && start + count <= a.cols(), "slice_cols");
    Matrix out = a.value().middleCols(start, count);
    return make_result(std::move(out), {a}, [start, count](Node& self) {
        Node& p = parent(self, 0);
        Matrix g = Matrix::Zero(p.value.rows(), p.value.cols());
        g.middleCols(start, count) = self.grad;
        p.accumulate(g);
    });
}

Tensor concat_rows(const std::vector<Tensor>& parts) {
    require(!parts.empty(), "concat_rows empty");
    const Eigen::Index c = parts.front().cols();
    Eigen::Index total = 0;
    for (const auto& p : parts) {
        require(p.cols() == c, "concat_rows cols");
        total += p.rows();
    }
    Matrix out(total, c);
    std::vector<Eigen::Index> heights;
    Eigen::Index off = 0;
    for (const auto& p : parts) {
        out.middleRows(off, p.rows()) = p.value();
        off += p.rows();
        heights.push_back(p.rows());
    }
    return make_result(std::move(out), parts, [heights](Node& self) {
        Eigen::Index off = 0;
        for (std::size_t i = 0; i < heights.size(); ++i) {
            Node& p = parent(self, i);
            if (p.requires_grad) p.accumulate(self.grad.middleRows(off, heights[i]));
            off += heights[i];
        }
    });
}

Tensor slice_rows(const Tensor& a, Eigen::Index start, Eigen::Index count) {
    require(start >= 0 && count >= 0 && start + count <= a.rows(), "slice_rows");
    Matrix out = a.value().middleRows(start, count);
    return make_result(std::move(out), {a}, [start, count](Node& self) {
        Node& p = parent(self, 0);
        Matrix g = Matrix::Zero(p.value.rows(), p.value.cols());
        g.middleRows(start, count) = self.grad;
        p.accumulate(g);
    });
}

Tensor gather_rows(const Tensor& a, std::span<const int> rows) {
    Matrix out(static_cast<Eigen::Index>(rows.size()), a.cols());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        require(rows[i] >= 0 && rows[i] < a.rows(), "gather_rows index");
        out.row(static_cast<Eigen::Index>(i)) = a.value().row(rows[i]);
    }
    std::vector<int> idx(rows.begin(), rows.end());
    return make_result(std::move(out), {a}, [idx](Node& self) {
        Node& p = parent(self, 0);
        Matrix g = Matrix::Zero(p.value.rows(), p.value.cols());
        for (std::size_t i = 0; i < idx.size(); ++i) g.row(idx[i]) += self.grad.row(static_cast<Eigen::Index>(i));
        p.accumulate(g);
    });
}

Tensor reshape(const Tensor& a, Eigen::Index rows, Eigen::Index cols) {
    require(rows * cols == a.value().size(), "reshape");
    Matrix out = Eigen::Map<const Matrix>(a.value().data(), rows, cols);
    const Eigen::Index r0 = a.rows();
    const Eigen::Index c0 = a.cols();
    return make_result(std::move(out), {a}, [r0, c0](Node& self) {
        parent(self, 0).accumulate(Eigen::Map<const Matrix>(self.grad.data(), r0, c0));
    });
}

Tensor concat_segments(const std::vector<Tensor>& parts, std::span<const int> counts) {
    require(!parts.empty() && parts.size() == counts.size(), "concat_segments arity");
    const Eigen::Index c = parts.front().cols();
    require(counts[0] > 0 && parts[0].rows() % counts[0] == 0, "concat_segments layout");
    const Eigen::Index n = parts[0].rows() / counts[0];
    const int total = std::accumulate(counts.begin(), counts.end(), 0);
    for (std::size_t k = 0; k < parts.size(); ++k)
        require(parts[k].cols() == c && parts[k].rows() == n * counts[k], "concat_segments part");
    std::vector<int> cnt(counts.begin(), counts.end());
    Matrix out(n * total, c);
    for (Eigen::Index s = 0; s < n; ++s) {
        Eigen::Index off = s * total;
        for (std::size_t k = 0; k < parts.size(); ++k) {
            out.middleRows(off, cnt[k]) = parts[k].value().middleRows(s * cnt[k], cnt[k]);
            off += cnt[k];
        }
    }
    return make_result(std::move(out), parts, [cnt, n, total](Node& self) {
        Eigen::Index base = 0;
        for (std::size_t k = 0; k < cnt.size(); ++k) {
            Node& p = parent(self, k);
            if (p.requires_grad) {
                Matrix g(n * cnt[k], self.grad.cols());
                for (Eigen::Index s = 0; s < n; ++s)
                    g.middleRows(s * cnt[k], cnt[k]) = self.grad.middleRows(s * total + base, cnt[k]);
                p.accumulate(g);
            }
            base += cnt[k];
        }
    });
}

Tensor slice_segments(const Tensor& x, int segment, int start, int count) {
    require(segment > 0 && x.rows() % segment == 0 && start >= 0 && start + count <= segment, "slice_segments");
    const Eigen::Index n = x.rows() / segment;
    Matrix out(n * count, x.cols());
    for (Eigen::Index s = 0; s < n; ++s) out.middleRows(s * count, count) = x.value().middleRows(s * segment + start, count);
    return make_result(std::move(out), {x}, [segment, start, count, n](Node& self) {
        Node& p = parent(self, 0);
        Matrix g = Matrix::Zero(p.value.rows(), p.value.cols());
        for (Eigen::Index s = 0; s < n; ++s) g.middleRows(s * segment + start, count) = self.grad.middleRows(s * count, count);
        p.accumulate(g);
    });
}

Tensor sum(const Tensor& a) {
    Matrix out(1, 1);
    out(0, 0) = a.value().sum();
    return make_result(std::move(out), {a}, [](Node& self) {
        Node& p = parent(self, 0);
        p.accumulate(Matrix::Constant(p.value.rows(), p.value.cols(), self.grad(0, 0)));
    });
}

Tensor mean(const Tensor& a) {
    const double n = static_cast<double>(a.value().size());
    Matrix out(1, 1);
    out(0, 0) = a.value().sum() / n;
    return make_result(std::move(out), {a}, [n](Node& self) {
        Node& p = parent(self, 0);
        p.accumulate(Matrix::Constant(p.value.rows(), p.value.cols(), self.grad(0, 0) / n));
    });
}

Tensor mse(const Tensor& a, const Matrix& target) {
    require(a.rows() == target.rows() && a.cols() == target.cols(), "mse");
    Matrix diff = a.value() - target;
    const double n = static_cast<double>(diff.size());
    Matrix out(1, 1);
    out(0, 0) = diff.squaredNorm() / n;
    return make_result(std::move(out), {a}, [diff, n](Node& self) {
        parent(self, 0).accumulate(diff * (2.0 * self.grad(0, 0) / n));
    });
}

Tensor row_norm_mean(const Tensor& a) {
    const Eigen::Index n = a.rows();
    require(n > 0, "row_norm_mean");
    Eigen::VectorXd norms = a.value().rowwise().norm();
    Matrix out(1, 1);
    out(0, 0) = norms.mean();
    return make_result(std::move(out), {a}, [norms, n](Node& self) {
        Node& p = parent(self, 0);
        Matrix g = Matrix::Zero(p.value.rows(), p.value.cols());
        const double s = self.grad(0, 0) / static_cast<double>(n);
        for (Eigen::Index i = 0; i < n; ++i)
            if (norms(i) > 0.0) g.row(i) = p.value.row(i) * (s / norms(i));
        p.accumulate(g);
    });
}

Tensor cross_entropy(const Tensor& logits, std::span<const int> targets) {
    const Eigen::Index n = logits.rows();
    require(static_cast<Eigen::Index>(targets.size()) == n && n > 0, "cross_entropy");
    Matrix probs(n, logits.cols());
    double total = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
        require(targets[i] >= 0 && targets[i] < logits.cols(), "cross_entropy target");
        const auto row = logits.value().row(i);
        const double mx = row.maxCoeff();
        const Eigen::ArrayXd e = (row.array() - mx).exp().transpose();
        const double z = e.sum();
        probs.row(i) = (e / z).transpose();
        total += -(row(targets[i]) - mx - std::log(z));
    }
    Matrix out(1, 1);
    out(0, 0) = total / static_cast<double>(n);
    std::vector<int> tg(targets.begin(), targets.end());
    return make_result(std::move(out), {logits}, [probs, tg, n](Node& self) {
        Matrix g = probs;
        for (Eigen::Index i = 0; i < n; ++i) g(i, tg[i]) -= 1.0;
        parent(self, 0).accumulate(g * (self.grad(0, 0) / static_cast<double>(n)));
    });
}

Tensor kl_normal(const Tensor& mu, const Tensor& logvar) {
    require(mu.rows() == logvar.rows() && mu.cols() == logvar.cols(), "kl_normal");
    const double n = static_cast<double>(mu.rows());
    auto m = mu.value().array();
    auto lv = logvar.value().array();
    Matrix out(1, 1);
    out(0, 0) = (-0.5 * (1.0 + lv - m.square() - lv.exp())).sum() / n;
    return make_result(std::move(out), {mu, logvar}, [n](Node& self) {
        Node& pm = parent(self, 0);
        Node& pl = parent(self, 1);
        const double s = self.grad(0, 0) / n;
        if (pm.requires_grad) pm.accumulate(pm.value * s);
        if (pl.requires_grad) pl.accumulate((-0.5 * (1.0 - pl.value.array().exp()) * s).matrix());
    });
}

Tensor straight_through(const Tensor& z, const Matrix& quantized) {
    require(z.rows() == quantized.rows() && z.cols() == quantized.cols(), "straight_through");
    return make_result(quantized, {z}, [](Node& self) { parent(self, 0).accumulate(self.grad); });
}

Tensor stop_gradient(const Tensor& a) { return Tensor::constant(a.value()); }

}  // namespace r2r::nn
