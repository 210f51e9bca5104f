#include "xgap/graph.hpp"

#include <Eigen/Dense>

#include <cfloat>
#include <cmath>
#include <string>
#include <utility>

#include "xgap/error.hpp"

namespace xgap {

namespace {

using EMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapM = Eigen::Map<EMat>;
using MapC = Eigen::Map<const EMat>;

MapC cmap(const Tensor& t) { return MapC(t.data(), t.rows(), t.cols()); }
MapM mmap(Tensor& t) { return MapM(t.data(), t.rows(), t.cols()); }

void require(bool ok, const std::string& msg) {
    if (!ok) throw InvalidArgument(msg);
}

void require_same_graph(Var a, Var b) {
    require(a.graph != nullptr && a.graph == b.graph, "vars belong to different graphs");
}

void check_finite(const Tensor& t, const char* opname) {
    if (!t.all_finite())
        throw NumericError(std::string("non-finite value produced by op '") + opname + "'");
}

constexpr double kLnEps = 1e-5;  // layer-norm variance epsilon

double unit_threshold() { return 16.0 * DBL_EPSILON; }

// Shared normalize kernel. Returns the input untouched when its norm is
// already 1 to a few ulp, which makes normalization idempotent bit-for-bit.
void normalize_span(const double* src, double* dst, int n, double* out_norm) {
    double s = 0.0;
    for (int i = 0; i < n; ++i) s += src[i] * src[i];
    const double nrm = std::sqrt(s);
    if (nrm == 0.0) throw InvalidArgument("l2_normalize: zero-norm input");
    if (!std::isfinite(nrm)) throw NumericError("l2_normalize: non-finite norm");
    *out_norm = nrm;
    if (std::fabs(nrm - 1.0) <= unit_threshold()) {
        for (int i = 0; i < n; ++i) dst[i] = src[i];
    } else {
        for (int i = 0; i < n; ++i) dst[i] = src[i] / nrm;
    }
}

}  // namespace

const Tensor& Var::value() const { return graph->value(id); }

Tensor Var::grad_or_zero() const {
    const Tensor* g = graph->grad(id);
    return g ? *g : Tensor::zeros_like(value());
}

Var Graph::input(Tensor value, bool requires_grad) {
    return record(std::move(value), requires_grad, nullptr, "input");
}

Var Graph::record(Tensor value, bool requires_grad, std::function<void(Graph&)> pullback,
                  const char* opname) {
    check_finite(value, opname);
    Node n;
    n.value = std::move(value);
    n.requires_grad = requires_grad;
    n.pullback = std::move(pullback);
    nodes_.push_back(std::move(n));
    return Var{this, static_cast<int>(nodes_.size()) - 1};
}

Tensor& Graph::grad_buf(int id) {
    Node& n = nodes_[static_cast<std::size_t>(id)];
    if (n.grad.size() == 0) n.grad = Tensor::zeros_like(n.value);
    return n.grad;
}

const Tensor* Graph::grad(int id) const {
    const Node& n = nodes_[static_cast<std::size_t>(id)];
    return n.grad.size() == 0 ? nullptr : &n.grad;
}

void Graph::backward(Var loss) {
    require(loss.graph == this, "backward: var from another graph");
    require(loss.value().size() == 1, "backward: loss must be scalar");
    if (ran_backward_) throw InvalidArgument("backward: tape already consumed");
    ran_backward_ = true;
    grad_buf(loss.id)[0] = 1.0;
    for (int i = loss.id; i >= 0; --i) {
        Node& n = nodes_[static_cast<std::size_t>(i)];
        if (!n.requires_grad || n.grad.size() == 0 || !n.pullback) continue;
        n.pullback(*this);
    }
}

// ---- op helpers -------------------------------------------------------------

namespace {

bool any_requires(std::initializer_list<Var> vs) {
    for (Var v : vs)
        if (v.graph->requires_grad(v.id)) return true;
    return false;
}

}  // namespace

Var matmul(Var a, Var b) {
    require_same_graph(a, b);
    const Tensor& A = a.value();
    const Tensor& B = b.value();
    require(A.rank() == 2 && B.rank() == 2 && A.cols() == B.rows(),
            "matmul: incompatible shapes " + A.shape_str() + " x " + B.shape_str());
    Tensor out({A.rows(), B.cols()});
    mmap(out) = cmap(A) * cmap(B);
    const int ia = a.id, ib = b.id;
    return a.graph->record(
        std::move(out), any_requires({a, b}),
        [ia, ib, out_id = static_cast<int>(a.graph->node_count())](Graph& g) {
            const Tensor& dy = *g.grad(out_id);
            if (g.requires_grad(ia)) mmap(g.grad_buf(ia)) += cmap(dy) * cmap(g.value(ib)).transpose();
            if (g.requires_grad(ib)) mmap(g.grad_buf(ib)) += cmap(g.value(ia)).transpose() * cmap(dy);
        },
        "matmul");
}

Var matmul_nt(Var a, Var b) {
    require_same_graph(a, b);
    const Tensor& A = a.value();
    const Tensor& B = b.value();
    require(A.rank() == 2 && B.rank() == 2 && A.cols() == B.cols(),
            "matmul_nt: incompatible shapes " + A.shape_str() + " x " + B.shape_str());
    Tensor out({A.rows(), B.rows()});
    mmap(out) = cmap(A) * cmap(B).transpose();
    const int ia = a.id, ib = b.id;
    return a.graph->record(
        std::move(out), any_requires({a, b}),
        [ia, ib, out_id = static_cast<int>(a.graph->node_count())](Graph& g) {
            const Tensor& dy = *g.grad(out_id);
            if (g.requires_grad(ia)) mmap(g.grad_buf(ia)) += cmap(dy) * cmap(g.value(ib));
            if (g.requires_grad(ib)) mmap(g.grad_buf(ib)) += cmap(dy).transpose() * cmap(g.value(ia));
        },
        "matmul_nt");
}

Var transpose(Var a) {
    const Tensor& A = a.value();
    require(A.rank() == 2, "transpose: rank-2 required");
    Tensor out({A.cols(), A.rows()});
    mmap(out) = cmap(A).transpose();
    const int ia = a.id;
    return a.graph->record(
        std::move(out), a.graph->requires_grad(ia),
        [ia, out_id = static_cast<int>(a.graph->node_count())](Graph& g) {
            mmap(g.grad_buf(ia)) += cmap(*g.grad(out_id)).transpose();
        },
        "transpose");
}

Var add(Var a, Var b) {
    require_same_graph(a, b);
    const Tensor& A = a.value();
    const Tensor& B = b.value();
    require(A.same_shape(B), "add: shape mismatch " + A.shape_str() + " vs " + B.shape_str());
    Tensor out = A;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += B[i];
    const int ia = a.id, ib = b.id;
    return a.graph->record(
        std::move(out), any_requires({a, b}),
        [ia, ib, out_id = static_cast<int>(a.graph->node_count())](Graph& g) {
            const Tensor& dy = *g.grad(out_id);
            if (g.requires_grad(ia)) {
                Tensor& da = g.grad_buf(ia);
                for (std::size_t i = 0; i < dy.size(); ++i) da[i] += dy[i];
            }
            if (g.requires_grad(ib)) {
                Tensor& db = g.grad_buf(ib);
                for (std::size_t i = 0; i < dy.size(); ++i) db[i] += dy[i];
            }
        },
        "add");
}

Var mul(Var a, Var b) {
    require_same_graph(a, b);
    const Tensor& A = a.value();
    const Tensor& B = b.value();
    require(A.same_shape(B), "mul: shape mismatch " + A.shape_str() + " vs " + B.shape_str());
    Tensor out = A;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] *= B[i];
    const int ia = a.id, ib = b.id;
    return a.graph->record(
        std::move(out), any_requires({a, b}),
        [ia, ib, out_id = static_cast<int>(a.graph->node_count())](Graph& g) {
            const Tensor& dy = *g.grad(out_id);
            if (g.requires_grad(ia)) {
                Tensor& da = g.grad_buf(ia);
                const Tensor& bv = g.value(ib);
                for (std::size_t i = 0; i < dy.size(); ++i) da[i] += dy[i] * bv[i];
            }
            if (g.requires_grad(ib)) {
                Tensor& db = g.grad_buf(ib);
                const Tensor& av = g.value(ia);
                for (std::size_t i = 0; i < dy.size(); ++i) db[i] += dy[i] * av[i];
            }
        },
        "mul");
}

Var axpb(Var a, double alpha, double beta) {
    Tensor out = a.value();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = alpha * out[i] + beta;
    const int ia = a.id;
    return a.graph->record(
        std::move(out), a.graph->requires_grad(ia),
        [ia, alpha, out_id = static_cast<int>(a.graph->node_count())](Graph& g) {
            const Tensor& dy = *g.grad(out_id);
            Tensor& da = g.grad_buf(ia);
            for (std::size_t i = 0; i < dy.size(); ++i) da[i] += alpha * dy[i];
        },
        "axpb");
}

Var add_rowvec(Var a, Var v) {
    require_same_graph(a, v);
    const Tensor& A = a.value();
    const Tensor& V = v.value();
    require(A.rank() == 2 && V.rank() == 1 && V.dim(0) == A.cols(),
            "add_rowvec: shape mismatch " + A.shape_str() + " + " + V.shape_str());
    Tensor out = A;
    const int m = A.rows(), n = A.cols();
    for (int r = 0; r < m; ++r)
        for (int c = 0; c < n; ++c) out.at(r, c) += V[static_cast<std::size_t>(c)];
    const int ia = a.id, iv = v.id;
    return a.graph->record(
        std::move(out), any_requires({a, v}),
        [ia, iv, m, n, out_id = static_cast<int>(a.graph->node_count())](Graph& g) {
            const Tensor& dy = *g.grad(out_id);
            if (g.requires_grad(ia)) {
                Tensor& da = g.grad_buf(ia);
                for (std::size_t i = 0; i < dy.size(); ++i) da[i] += dy[i];
            }
            if (g.requires_grad(iv)) {
                Tensor& dv = g.grad_buf(iv);
                for (int r = 0; r < m; ++r)
                    for (int c = 0; c < n; ++c) dv[static_cast<std::size_t>(c)] += dy.at(r, c);
            }
        },
        "add_rowvec");
}

Var rows(Var table, std::vector<int> ids) {
    const Tensor& T = table.value();
    require(T.rank() == 2, "rows: table must be rank-2");
    require(!ids.empty(), "rows: empty id list");
    for (int id : ids)
        require(id >= 0 && id < T.rows(),
                "rows: id " + std::to_string(id) + " out of range [0," + std::to_string(T.rows()) + ")");
    const int n = T.cols();
    Tensor out({static_cast<int>(ids.size()), n});
    for (std::size_t r = 0; r < ids.size(); ++r)
        for (int c = 0; c < n; ++c) out.at(static_cast<int>(r), c) = T.at(ids[r], c);
    const int it = table.id;
    return table.graph->record(
        std::move(out), table.graph->requires_grad(it),
        [it, ids = std::move(ids), n, out_id = static_cast<int>(table.graph->node_count())](Graph& g) {
            const Tensor& dy = *g.grad(out_id);
            Tensor& dt = g.grad_buf(it);
            for (std::size_t r = 0; r < ids.size(); ++r)
                for (int c = 0; c < n; ++c) dt.at(ids[r], c) += dy.at(static_cast<int>(r), c);
        },
        "rows");
}

Var slice_rows(Var a, int start, int len) {
    const Tensor& A = a.value();
    require(A.rank() == 2 && start >= 0 && len >= 1 && start + len <= A.rows(),
            "slice_rows: bad range");
    const int n = A.cols();
    Tensor out({len, n});
    for (int r = 0; r < len; ++r)
        for (int c = 0; c < n; ++c) out.at(r, c) = A.at(start + r, c);
    const int ia = a.id;
    return a.graph->record(
        std::move(out), a.graph->requires_grad(ia),
        [ia, start, len, n, out_id = static_cast<int>(a.graph->node_count())](Graph& g) {
            const Tensor& dy = *g.grad(out_id);
            Tensor& da = g.grad_buf(ia);
            for (int r = 0; r < len; ++r)
                for (int c = 0; c < n; ++c) da.at(start + r, c) += dy.at(r, c);
        },
        "slice_rows");
}

Var slice_cols(Var a, int start, int len) {
    const Tensor& A = a.value();
    require(A.rank() == 2 && start >= 0 && len >= 1 && start + len <= A.cols(),
            "slice_cols: bad range");
    const int m = A.rows();
    Tensor out({m, len});
    for (int r = 0; r < m; ++r)
        for (int c = 0; c < len; ++c) out.at(r, c) = A.at(r, start + c);
    const int ia = a.id;
    return a.graph->record(
        std::move(out), a.graph->requires_grad(ia),
        [ia, start, len, m, out_id = static_cast<int>(a.graph->node_count())](Graph& g) {
            const Tensor& dy = *g.grad(out_id);
            Tensor& da = g.grad_buf(ia);
            for (int r = 0; r < m; ++r)
                for (int c = 0; c < len; ++c) da.at(r, start + c) += dy.at(r, c);
        },
        "slice_cols");
}

Var concat_rows(const std::vector<Var>& parts) {
    require(!parts.empty(), "concat_rows: no parts");
    Graph* g0 = parts[0].graph;
    int total = 0;
    const int n = parts[0].value().cols();
    bool needs = false;
    for (Var p : parts) {
        require(p.graph == g0, "concat_rows: vars from different graphs");
        require(p.value().rank() == 2 && p.value().cols() == n, "concat_rows: column mismatch");
        total += p.value().rows();
        needs = needs || g0->requires_grad(p.id);
    }
    Tensor out({total, n});
    int off = 0;
    std::vector<std::pair<int, int>> spans;  // (node id, row offset)
    for (Var p : parts) {
        const Tensor& P = p.value();
        spans.emplace_back(p.id, off);
        for (int r = 0; r < P.rows(); ++r)
            for (int c = 0; c < n; ++c) out.at(off + r, c) = P.at(r, c);
        off += P.rows();
    }
    return g0->record(
        std::move(out), needs,
        [spans = std::move(spans), n, out_id = static_cast<int>(g0->node_count())](Graph& g) {
            const Tensor& dy = *g.grad(out_id);
            for (auto [id, o] : spans) {
                if (!g.requires_grad(id)) continue;
                Tensor& dp = g.grad_buf(id);
                for (int r = 0; r < dp.rows(); ++r)
                    for (int c = 0; c < n; ++c) dp.at(r, c) += dy.at(o + r, c);
            }
        },
        "concat_rows");
}

Var concat_cols(const std::vector<Var>& parts) {
    require(!parts.empty(), "concat_cols: no parts");
    Graph* g0 = parts[0].graph;
    int total = 0;
    const int m = parts[0].value().rows();
    bool needs = false;
    for (Var p : parts) {
        require(p.graph == g0, "concat_cols: vars from different graphs");
        require(p.value().rank() == 2 && p.value().rows() == m, "concat_cols: row mismatch");
        total += p.value().cols();
        needs = needs || g0->requires_grad(p.id);
    }
    Tensor out({m, total});
    int off = 0;
    std::vector<std::pair<int, int>> spans;
    for (Var p : parts) {
        const Tensor& P = p.value();
        spans.emplace_back(p.id, off);
        for (int r = 0; r < m; ++r)
            for (int c = 0; c < P.cols(); ++c) out.at(r, off + c) = P.at(r, c);
        off += P.cols();
    }
    return g0->record(
        std::move(out), needs,
        [spans = std::move(spans), m, out_id = static_cast<int>(g0->node_count())](Graph& g) {
            const Tensor& dy = *g.grad(out_id);
            for (auto [id, o] : spans) {
                if (!g.requires_grad(id)) continue;
                Tensor& dp = g.grad_buf(id);
                for (int r = 0; r < m; ++r)
                    for (int c = 0; c < dp.cols(); ++c) dp.at(r, c) += dy.at(r, o + c);
            }
        },
        "concat_cols");
}

Var softmax(Var a) {
    const Tensor& A = a.value();
    require(A.rank() == 2, "softmax: rank-2 required");
    const int m = A.rows(), n = A.cols();
    Tensor out({m, n});
    for (int r = 0; r < m; ++r) {
        double mx = A.at(r, 0);
        for (int c = 1; c < n; ++c) mx = std::max(mx, A.at(r, c));
        double s = 0.0;
        for (int c = 0; c < n; ++c) {
            const double e = std::exp(A.at(r, c) - mx);
            out.at(r, c) = e;
            s += e;
        }
        for (int c = 0; c < n; ++c) out.at(r, c) /= s;
    }
    const int ia = a.id;
    return a.graph->record(
        std::move(out), a.graph->requires_grad(ia),
        [ia, m, n, out_id = static_cast<int>(a.graph->node_count())](Graph& g) {
            const Tensor& dy = *g.grad(out_id);
            const Tensor& y = g.value(out_id);
            Tensor& da = g.grad_buf(ia);
            for (int r = 0; r < m; ++r) {
                double dot = 0.0;
                for (int c = 0; c < n; ++c) dot += dy.at(r, c) * y.at(r, c);
                for (int c = 0; c < n; ++c) da.at(r, c) += y.at(r, c) * (dy.at(r, c) - dot);
            }
        },
        "softmax");
}

Var layer_norm(Var a, Var gain, Var bias) {
    require_same_graph(a, gain);
    require_same_graph(a, bias);
    const Tensor& A = a.value();
    const Tensor& G = gain.value();
    const Tensor& B = bias.value();
    require(A.rank() == 2 && G.rank() == 1 && B.rank() == 1 && G.dim(0) == A.cols() &&
                B.dim(0) == A.cols(),
            "layer_norm: shape mismatch");
    const int m = A.rows(), n = A.cols();
    Tensor out({m, n});
    for (int r = 0; r < m; ++r) {
        double mu = 0.0;
        for (int c = 0; c < n; ++c) mu += A.at(r, c);
        mu /= n;
        double var = 0.0;
        for (int c = 0; c < n; ++c) {
            const double d = A.at(r, c) - mu;
            var += d * d;
        }
        var /= n;
        const double inv = 1.0 / std::sqrt(var + kLnEps);
        for (int c = 0; c < n; ++c)
            out.at(r, c) = (A.at(r, c) - mu) * inv * G[static_cast<std::size_t>(c)] +
                           B[static_cast<std::size_t>(c)];
    }
    const int ia = a.id, ig = gain.id, ib = bias.id;
    return a.graph->record(
        std::move(out), any_requires({a, gain, bias}),
        [ia, ig, ib, m, n, out_id = static_cast<int>(a.graph->node_count())](Graph& g) {
            const Tensor& dy = *g.grad(out_id);
            const Tensor& x = g.value(ia);
            const Tensor& gv = g.value(ig);
            for (int r = 0; r < m; ++r) {
                double mu = 0.0;
                for (int c = 0; c < n; ++c) mu += x.at(r, c);
                mu /= n;
                double var = 0.0;
                for (int c = 0; c < n; ++c) {
                    const double d = x.at(r, c) - mu;
                    var += d * d;
                }
                var /= n;
                const double inv = 1.0 / std::sqrt(var + kLnEps);
                // dxhat plus the two reduction terms of the layer-norm pullback
                double sum_dxhat = 0.0, sum_dxhat_xhat = 0.0;
                for (int c = 0; c < n; ++c) {
                    const double xhat = (x.at(r, c) - mu) * inv;
                    const double dxhat = dy.at(r, c) * gv[static_cast<std::size_t>(c)];
                    sum_dxhat += dxhat;
                    sum_dxhat_xhat += dxhat * xhat;
                }
                if (g.requires_grad(ia)) {
                    Tensor& da = g.grad_buf(ia);
                    for (int c = 0; c < n; ++c) {
                        const double xhat = (x.at(r, c) - mu) * inv;
                        const double dxhat = dy.at(r, c) * gv[static_cast<std::size_t>(c)];
                        da.at(r, c) += inv * (dxhat - sum_dxhat / n - xhat * sum_dxhat_xhat / n);
                    }
                }
                if (g.requires_grad(ig)) {
                    Tensor& dg = g.grad_buf(ig);
                    for (int c = 0; c < n; ++c)
                        dg[static_cast<std::size_t>(c)] += dy.at(r, c) * (x.at(r, c) - mu) * inv;
                }
                if (g.requires_grad(ib)) {
                    Tensor& db = g.grad_buf(ib);
                    for (int c = 0; c < n; ++c) db[static_cast<std::size_t>(c)] += dy.at(r, c);
                }
            }
        },
        "layer_norm");
}

Var gelu(Var a) {
    const Tensor& A = a.value();
    Tensor out = A;
    for (std::size_t i = 0; i < out.size(); ++i) {
        const double x = out[i];
        out[i] = 0.5 * x * (1.0 + std::erf(x * M_SQRT1_2));
    }
    const int ia = a.id;
    return a.graph->record(
        std::move(out), a.graph->requires_grad(ia),
        [ia, out_id = static_cast<int>(a.graph->node_count())](Graph& g) {
            const Tensor& dy = *g.grad(out_id);
            const Tensor& x = g.value(ia);
            Tensor& da = g.grad_buf(ia);
            constexpr double inv_sqrt_2pi = 0.3989422804014326779399461;
            for (std::size_t i = 0; i < dy.size(); ++i) {
                const double xi = x[i];
                const double phi = 0.5 * (1.0 + std::erf(xi * M_SQRT1_2));
                const double pdf = inv_sqrt_2pi * std::exp(-0.5 * xi * xi);
                da[i] += dy[i] * (phi + xi * pdf);
            }
        },
        "gelu");
}

Var mean_rows(Var a) {
    const Tensor& A = a.value();
    require(A.rank() == 2, "mean_rows: rank-2 required");
    const int m = A.rows(), n = A.cols();
    Tensor out({1, n});
    for (int c = 0; c < n; ++c) {
        double s = 0.0;
        for (int r = 0; r < m; ++r) s += A.at(r, c);
        out.at(0, c) = s / m;
    }
    const int ia = a.id;
    return a.graph->record(
        std::move(out), a.graph->requires_grad(ia),
        [ia, m, n, out_id = static_cast<int>(a.graph->node_count())](Graph& g) {
            const Tensor& dy = *g.grad(out_id);
            Tensor& da = g.grad_buf(ia);
            for (int r = 0; r < m; ++r)
                for (int c = 0; c < n; ++c) da.at(r, c) += dy.at(0, c) / m;
        },
        "mean_rows");
}

Var mean_all(Var a) {
    const Tensor& A = a.value();
    require(A.size() > 0, "mean_all: empty tensor");
    double s = 0.0;
    for (std::size_t i = 0; i < A.size(); ++i) s += A[i];
    const double inv = 1.0 / static_cast<double>(A.size());
    const int ia = a.id;
    return a.graph->record(
        Tensor::scalar(s * inv), a.graph->requires_grad(ia),
        [ia, inv, out_id = static_cast<int>(a.graph->node_count())](Graph& g) {
            const double dy = (*g.grad(out_id))[0];
            Tensor& da = g.grad_buf(ia);
            for (std::size_t i = 0; i < da.size(); ++i) da[i] += dy * inv;
        },
        "mean_all");
}

Var l2_normalize(Var v) {
    const Tensor& V = v.value();
    require(V.rank() == 1, "l2_normalize: rank-1 required");
    Tensor out(V.shape());
    double nrm = 0.0;
    normalize_span(V.data(), out.data(), V.dim(0), &nrm);
    const int iv = v.id;
    return v.graph->record(
        std::move(out), v.graph->requires_grad(iv),
        [iv, nrm, out_id = static_cast<int>(v.graph->node_count())](Graph& g) {
            const Tensor& dy = *g.grad(out_id);
            const Tensor& y = g.value(out_id);
            Tensor& dv = g.grad_buf(iv);
            double dot = 0.0;
            for (std::size_t i = 0; i < dy.size(); ++i) dot += dy[i] * y[i];
            for (std::size_t i = 0; i < dy.size(); ++i) dv[i] += (dy[i] - y[i] * dot) / nrm;
        },
        "l2_normalize");
}

Var l2_normalize_rows(Var a) {
    const Tensor& A = a.value();
    require(A.rank() == 2, "l2_normalize_rows: rank-2 required");
    const int m = A.rows(), n = A.cols();
    Tensor out({m, n});
    std::vector<double> norms(static_cast<std::size_t>(m));
    for (int r = 0; r < m; ++r)
        normalize_span(A.data() + static_cast<std::size_t>(r) * n,
                       out.data() + static_cast<std::size_t>(r) * n, n,
                       &norms[static_cast<std::size_t>(r)]);
    const int ia = a.id;
    return a.graph->record(
        std::move(out), a.graph->requires_grad(ia),
        [ia, norms = std::move(norms), m, n,
         out_id = static_cast<int>(a.graph->node_count())](Graph& g) {
            const Tensor& dy = *g.grad(out_id);
            const Tensor& y = g.value(out_id);
            Tensor& da = g.grad_buf(ia);
            for (int r = 0; r < m; ++r) {
                double dot = 0.0;
                for (int c = 0; c < n; ++c) dot += dy.at(r, c) * y.at(r, c);
                for (int c = 0; c < n; ++c)
                    da.at(r, c) += (dy.at(r, c) - y.at(r, c) * dot) / norms[static_cast<std::size_t>(r)];
            }
        },
        "l2_normalize_rows");
}

Var cosine_similarity(Var a, Var b) {
    require_same_graph(a, b);
    const Tensor& A = a.value();
    const Tensor& B = b.value();
    require(A.rank() == 1 && B.rank() == 1 && A.dim(0) == B.dim(0),
            "cosine_similarity: need equal-length vectors, got " + A.shape_str() + " and " +
                B.shape_str());
    double na2 = 0.0, nb2 = 0.0, dot = 0.0;
    for (std::size_t i = 0; i < A.size(); ++i) {
        na2 += A[i] * A[i];
        nb2 += B[i] * B[i];
        dot += A[i] * B[i];
    }
    const double na = std::sqrt(na2), nb = std::sqrt(nb2);
    if (na == 0.0 || nb == 0.0) throw InvalidArgument("cosine_similarity: zero-norm input");
    const double c = dot / (na * nb);
    const int ia = a.id, ib = b.id;
    return a.graph->record(
        Tensor::scalar(c), any_requires({a, b}),
        [ia, ib, na, nb, c, out_id = static_cast<int>(a.graph->node_count())](Graph& g) {
            const double dy = (*g.grad(out_id))[0];
            const Tensor& av = g.value(ia);
            const Tensor& bv = g.value(ib);
            if (g.requires_grad(ia)) {
                Tensor& da = g.grad_buf(ia);
                for (std::size_t i = 0; i < av.size(); ++i)
                    da[i] += dy * (bv[i] / (na * nb) - c * av[i] / (na * na));
            }
            if (g.requires_grad(ib)) {
                Tensor& db = g.grad_buf(ib);
                for (std::size_t i = 0; i < bv.size(); ++i)
                    db[i] += dy * (av[i] / (na * nb) - c * bv[i] / (nb * nb));
            }
        },
        "cosine_similarity");
}

Var log_sigmoid(Var a) {
    const Tensor& A = a.value();
    Tensor out = A;
    for (std::size_t i = 0; i < out.size(); ++i) {
        const double x = out[i];
        // stable -softplus(-x)
        out[i] = x >= 0.0 ? -std::log1p(std::exp(-x)) : x - std::log1p(std::exp(x));
    }
    const int ia = a.id;
    return a.graph->record(
        std::move(out), a.graph->requires_grad(ia),
        [ia, out_id = static_cast<int>(a.graph->node_count())](Graph& g) {
            const Tensor& dy = *g.grad(out_id);
            const Tensor& x = g.value(ia);
            Tensor& da = g.grad_buf(ia);
            for (std::size_t i = 0; i < dy.size(); ++i) {
                const double xi = x[i];
                const double sig_neg = xi >= 0.0 ? std::exp(-xi) / (1.0 + std::exp(-xi))
                                                 : 1.0 / (1.0 + std::exp(xi));
                da[i] += dy[i] * sig_neg;  // d/dx log sigmoid(x) = sigmoid(-x)
            }
        },
        "log_sigmoid");
}

Var cross_entropy_logits(Var logits, std::vector<int> targets) {
    const Tensor& L = logits.value();
    require(L.rank() == 2, "cross_entropy_logits: rank-2 required");
    const int m = L.rows(), n = L.cols();
    require(static_cast<int>(targets.size()) == m, "cross_entropy_logits: one target per row");
    for (int t : targets)
        require(t >= 0 && t < n, "cross_entropy_logits: target out of range");
    Tensor probs({m, n});
    double total = 0.0;
    for (int r = 0; r < m; ++r) {
        double mx = L.at(r, 0);
        for (int c = 1; c < n; ++c) mx = std::max(mx, L.at(r, c));
        double s = 0.0;
        for (int c = 0; c < n; ++c) {
            const double e = std::exp(L.at(r, c) - mx);
            probs.at(r, c) = e;
            s += e;
        }
        for (int c = 0; c < n; ++c) probs.at(r, c) /= s;
        total += std::log(s) + mx - L.at(r, targets[static_cast<std::size_t>(r)]);
    }
    const int il = logits.id;
    return logits.graph->record(
        Tensor::scalar(total / m), logits.graph->requires_grad(il),
        [il, probs = std::move(probs), targets = std::move(targets), m, n,
         out_id = static_cast<int>(logits.graph->node_count())](Graph& g) {
            const double dy = (*g.grad(out_id))[0];
            Tensor& dl = g.grad_buf(il);
            for (int r = 0; r < m; ++r)
                for (int c = 0; c < n; ++c) {
                    const double onehot = (c == targets[static_cast<std::size_t>(r)]) ? 1.0 : 0.0;
                    dl.at(r, c) += dy * (probs.at(r, c) - onehot) / m;
                }
        },
        "cross_entropy_logits");
}

Var reshape(Var a, std::vector<int> shape) {
    const Tensor& A = a.value();
    Tensor out(std::move(shape), std::vector<double>(A.data(), A.data() + A.size()));
    const int ia = a.id;
    return a.graph->record(
        std::move(out), a.graph->requires_grad(ia),
        [ia, out_id = static_cast<int>(a.graph->node_count())](Graph& g) {
            const Tensor& dy = *g.grad(out_id);
            Tensor& da = g.grad_buf(ia);
            for (std::size_t i = 0; i < dy.size(); ++i) da[i] += dy[i];
        },
        "reshape");
}

// ---- plain-tensor counterparts ----------------------------------------------

Tensor l2_normalize(const Tensor& v) {
    Tensor out(v.shape());
    double nrm = 0.0;
    normalize_span(v.data(), out.data(), static_cast<int>(v.size()), &nrm);
    return out;
}

double cosine_similarity(const Tensor& a, const Tensor& b) {
    if (a.size() != b.size() || a.size() == 0)
        throw InvalidArgument("cosine_similarity: need equal-length vectors");
    double na2 = 0.0, nb2 = 0.0, dot = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        na2 += a[i] * a[i];
        nb2 += b[i] * b[i];
        dot += a[i] * b[i];
    }
    if (na2 == 0.0 || nb2 == 0.0) throw InvalidArgument("cosine_similarity: zero-norm input");
    return dot / (std::sqrt(na2) * std::sqrt(nb2));
}

// ---- grad_check --------------------------------------------------------------

double grad_check(const GraphFn& fn, const std::vector<Tensor>& inputs, double eps) {
    if (!(eps > 0.0 && eps <= 1e-2)) throw InvalidArgument("grad_check: eps must be in (0, 1e-2]");

    auto eval = [&fn](const std::vector<Tensor>& xs, bool with_grad,
                      std::vector<Tensor>* grads) -> double {
        Graph g;
        std::vector<Var> vars;
        vars.reserve(xs.size());
        for (const Tensor& x : xs) vars.push_back(g.input(x, with_grad));
        Var out = fn(g, vars);
        if (out.value().size() != 1) throw InvalidArgument("grad_check: function must be scalar");
        const double y = out.value()[0];
        if (!std::isfinite(y)) throw NumericError("grad_check: non-finite function value");
        if (with_grad) {
            g.backward(out);
            grads->clear();
            for (Var v : vars) grads->push_back(v.grad_or_zero());
        }
        return y;
    };

    std::vector<Tensor> analytic;
    eval(inputs, true, &analytic);

    double max_rel = 0.0;
    std::vector<Tensor> xs = inputs;
    for (std::size_t t = 0; t < xs.size(); ++t) {
        for (std::size_t i = 0; i < xs[t].size(); ++i) {
            const double orig = xs[t][i];
            xs[t][i] = orig + eps;
            const double fp = eval(xs, false, nullptr);
            xs[t][i] = orig - eps;
            const double fm = eval(xs, false, nullptr);
            xs[t][i] = orig;
            const double numeric = (fp - fm) / (2.0 * eps);
            const double a = analytic[t][i];
            const double denom = std::max({std::fabs(a), std::fabs(numeric), 1e-8});
            max_rel = std::max(max_rel, std::fabs(a - numeric) / denom);
        }
    }
    return max_rel;
}

}  // namespace xgap
