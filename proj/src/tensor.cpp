#include "kds/tensor.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <atomic>
#include <cmath>
#include <stdexcept>
#include <unordered_set>

namespace kds::tensor {

namespace {

std::atomic<std::uint64_t> g_next_id{1};

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapM = Eigen::Map<RowMat>;
using CMapM = Eigen::Map<const RowMat>;
using MapA = Eigen::Map<Eigen::ArrayXd>;
using CMapA = Eigen::Map<const Eigen::ArrayXd>;
using MapV = Eigen::Map<Eigen::VectorXd>;
using CMapV = Eigen::Map<const Eigen::VectorXd>;

void check(bool cond, const char* msg) {
    if (!cond) throw std::invalid_argument(msg);
}

MapA arr(TensorNode& n) { return MapA(n.value.data(), static_cast<Eigen::Index>(n.value.size())); }
CMapA carr(const TensorNode& n) {
    return CMapA(n.value.data(), static_cast<Eigen::Index>(n.value.size()));
}
MapA garr(TensorNode& n) {
    n.ensure_grad();
    return MapA(n.grad.data(), static_cast<Eigen::Index>(n.grad.size()));
}
CMapA cgarr(const TensorNode& n) {
    return CMapA(n.grad.data(), static_cast<Eigen::Index>(n.grad.size()));
}

}  // namespace

NodePtr make_node(std::vector<std::size_t> shape, std::vector<NodePtr> parents) {
    auto n = std::make_shared<TensorNode>();
    n->shape = std::move(shape);
    n->parents = std::move(parents);
    n->id = g_next_id.fetch_add(1, std::memory_order_relaxed);
    for (const auto& p : n->parents)
        if (p && p->requires_grad) n->requires_grad = true;
    n->value.resize(n->numel());
    return n;
}

NodePtr leaf(std::vector<std::size_t> shape, std::vector<double> values, bool requires_grad) {
    auto n = std::make_shared<TensorNode>();
    n->shape = std::move(shape);
    n->value = std::move(values);
    check(n->value.size() == n->numel(), "leaf: value count does not match shape");
    n->requires_grad = requires_grad;
    n->id = g_next_id.fetch_add(1, std::memory_order_relaxed);
    return n;
}

NodePtr zeros(std::vector<std::size_t> shape, bool requires_grad) {
    std::size_t n = 1;
    for (std::size_t d : shape) n *= d;
    return leaf(std::move(shape), std::vector<double>(n, 0.0), requires_grad);
}

NodePtr add(const NodePtr& a, const NodePtr& b) {
    check(a->shape == b->shape, "add: shape mismatch");
    auto out = make_node(a->shape, {a, b});
    arr(*out) = carr(*a) + carr(*b);
    if (out->requires_grad) {
        TensorNode *pa = a.get(), *pb = b.get();
        out->backward_fn = [pa, pb](TensorNode& o) {
            if (pa->requires_grad) garr(*pa) += cgarr(o);
            if (pb->requires_grad) garr(*pb) += cgarr(o);
        };
    }
    return out;
}

NodePtr sub(const NodePtr& a, const NodePtr& b) {
    check(a->shape == b->shape, "sub: shape mismatch");
    auto out = make_node(a->shape, {a, b});
    arr(*out) = carr(*a) - carr(*b);
    if (out->requires_grad) {
        TensorNode *pa = a.get(), *pb = b.get();
        out->backward_fn = [pa, pb](TensorNode& o) {
            if (pa->requires_grad) garr(*pa) += cgarr(o);
            if (pb->requires_grad) garr(*pb) -= cgarr(o);
        };
    }
    return out;
}

NodePtr mul(const NodePtr& a, const NodePtr& b) {
    check(a->shape == b->shape, "mul: shape mismatch");
    auto out = make_node(a->shape, {a, b});
    arr(*out) = carr(*a) * carr(*b);
    if (out->requires_grad) {
        TensorNode *pa = a.get(), *pb = b.get();
        out->backward_fn = [pa, pb](TensorNode& o) {
            if (pa->requires_grad) garr(*pa) += cgarr(o) * carr(*pb);
            if (pb->requires_grad) garr(*pb) += cgarr(o) * carr(*pa);
        };
    }
    return out;
}

NodePtr scale(const NodePtr& a, double c) {
    auto out = make_node(a->shape, {a});
    arr(*out) = carr(*a) * c;
    if (out->requires_grad) {
        TensorNode* pa = a.get();
        out->backward_fn = [pa, c](TensorNode& o) { garr(*pa) += cgarr(o) * c; };
    }
    return out;
}

NodePtr sigmoid(const NodePtr& a) {
    auto out = make_node(a->shape, {a});
    arr(*out) = 1.0 / (1.0 + (-carr(*a)).exp());
    if (out->requires_grad) {
        TensorNode* pa = a.get();
        out->backward_fn = [pa](TensorNode& o) {
            garr(*pa) += cgarr(o) * carr(o) * (1.0 - carr(o));
        };
    }
    return out;
}

NodePtr tanh_(const NodePtr& a) {
    auto out = make_node(a->shape, {a});
    arr(*out) = carr(*a).tanh();
    if (out->requires_grad) {
        TensorNode* pa = a.get();
        out->backward_fn = [pa](TensorNode& o) {
            garr(*pa) += cgarr(o) * (1.0 - carr(o) * carr(o));
        };
    }
    return out;
}

NodePtr relu(const NodePtr& a) {
    auto out = make_node(a->shape, {a});
    arr(*out) = carr(*a).max(0.0);
    if (out->requires_grad) {
        TensorNode* pa = a.get();
        out->backward_fn = [pa](TensorNode& o) {
            garr(*pa) += cgarr(o) * (carr(*pa) > 0.0).cast<double>();
        };
    }
    return out;
}

NodePtr linear(const NodePtr& x, const NodePtr& w, const NodePtr& b) {
    check(w->shape.size() == 2, "linear: weight must be 2-D");
    std::size_t c = x->last_dim(), co = w->shape[0];
    check(w->shape[1] == c, "linear: weight/input width mismatch");
    if (b) check(b->numel() == co, "linear: bias size mismatch");
    std::vector<std::size_t> oshape = x->shape;
    oshape.back() = co;
    auto out = b ? make_node(oshape, {x, w, b}) : make_node(oshape, {x, w});
    auto n = static_cast<Eigen::Index>(x->lead());
    auto ci = static_cast<Eigen::Index>(c), coi = static_cast<Eigen::Index>(co);
    CMapM X(x->value.data(), n, ci);
    CMapM W(w->value.data(), coi, ci);
    MapM O(out->value.data(), n, coi);
    O.noalias() = X * W.transpose();
    if (b) O.rowwise() += CMapV(b->value.data(), coi).transpose();
    if (out->requires_grad) {
        TensorNode *px = x.get(), *pw = w.get(), *pb = b ? b.get() : nullptr;
        out->backward_fn = [px, pw, pb, n, ci, coi](TensorNode& o) {
            CMapM G(o.grad.data(), n, coi);
            CMapM W(pw->value.data(), coi, ci);
            CMapM X(px->value.data(), n, ci);
            if (px->requires_grad) {
                px->ensure_grad();
                MapM(px->grad.data(), n, ci).noalias() += G * W;
            }
            if (pw->requires_grad) {
                pw->ensure_grad();
                MapM(pw->grad.data(), coi, ci).noalias() += G.transpose() * X;
            }
            if (pb && pb->requires_grad) {
                pb->ensure_grad();
                MapV(pb->grad.data(), coi) += G.colwise().sum().transpose();
            }
        };
    }
    return out;
}

NodePtr matmul(const NodePtr& a, const NodePtr& b) {
    check(a->shape.size() == 2 && b->shape.size() == 2, "matmul: 2-D operands required");
    check(a->shape[1] == b->shape[0], "matmul: inner dimension mismatch");
    auto m = static_cast<Eigen::Index>(a->shape[0]);
    auto k = static_cast<Eigen::Index>(a->shape[1]);
    auto n = static_cast<Eigen::Index>(b->shape[1]);
    auto out = make_node({a->shape[0], b->shape[1]}, {a, b});
    MapM(out->value.data(), m, n).noalias() =
        CMapM(a->value.data(), m, k) * CMapM(b->value.data(), k, n);
    if (out->requires_grad) {
        TensorNode *pa = a.get(), *pb = b.get();
        out->backward_fn = [pa, pb, m, k, n](TensorNode& o) {
            CMapM G(o.grad.data(), m, n);
            if (pa->requires_grad) {
                pa->ensure_grad();
                MapM(pa->grad.data(), m, k).noalias() +=
                    G * CMapM(pb->value.data(), k, n).transpose();
            }
            if (pb->requires_grad) {
                pb->ensure_grad();
                MapM(pb->grad.data(), k, n).noalias() +=
                    CMapM(pa->value.data(), m, k).transpose() * G;
            }
        };
    }
    return out;
}

NodePtr slice_last(const NodePtr& x, std::size_t start, std::size_t len) {
    std::size_t c = x->last_dim();
    check(start + len <= c, "slice_last: out of range");
    std::vector<std::size_t> oshape = x->shape;
    oshape.back() = len;
    auto out = make_node(oshape, {x});
    auto rows = static_cast<Eigen::Index>(x->lead());
    MapM(out->value.data(), rows, static_cast<Eigen::Index>(len)) =
        CMapM(x->value.data(), rows, static_cast<Eigen::Index>(c))
            .middleCols(static_cast<Eigen::Index>(start), static_cast<Eigen::Index>(len));
    if (out->requires_grad) {
        TensorNode* px = x.get();
        out->backward_fn = [px, rows, c, start, len](TensorNode& o) {
            px->ensure_grad();
            MapM(px->grad.data(), rows, static_cast<Eigen::Index>(c))
                .middleCols(static_cast<Eigen::Index>(start), static_cast<Eigen::Index>(len)) +=
                CMapM(o.grad.data(), rows, static_cast<Eigen::Index>(len));
        };
    }
    return out;
}

NodePtr concat_last(const NodePtr& a, const NodePtr& b) {
    check(a->shape.size() == b->shape.size(), "concat_last: rank mismatch");
    for (std::size_t i = 0; i + 1 < a->shape.size(); ++i)
        check(a->shape[i] == b->shape[i], "concat_last: leading shape mismatch");
    std::size_t ca = a->last_dim(), cb = b->last_dim();
    std::vector<std::size_t> oshape = a->shape;
    oshape.back() = ca + cb;
    auto out = make_node(oshape, {a, b});
    auto rows = static_cast<Eigen::Index>(a->lead());
    auto ia = static_cast<Eigen::Index>(ca), ib = static_cast<Eigen::Index>(cb);
    MapM O(out->value.data(), rows, ia + ib);
    O.leftCols(ia) = CMapM(a->value.data(), rows, ia);
    O.rightCols(ib) = CMapM(b->value.data(), rows, ib);
    if (out->requires_grad) {
        TensorNode *pa = a.get(), *pb = b.get();
        out->backward_fn = [pa, pb, rows, ia, ib](TensorNode& o) {
            CMapM G(o.grad.data(), rows, ia + ib);
            if (pa->requires_grad) {
                pa->ensure_grad();
                MapM(pa->grad.data(), rows, ia) += G.leftCols(ia);
            }
            if (pb->requires_grad) {
                pb->ensure_grad();
                MapM(pb->grad.data(), rows, ib) += G.rightCols(ib);
            }
        };
    }
    return out;
}

NodePtr softmax_last(const NodePtr& x) {
    auto out = make_node(x->shape, {x});
    auto rows = static_cast<Eigen::Index>(x->lead());
    auto c = static_cast<Eigen::Index>(x->last_dim());
    CMapM X(x->value.data(), rows, c);
    MapM Y(out->value.data(), rows, c);
    for (Eigen::Index r = 0; r < rows; ++r) {
        double m = X.row(r).maxCoeff();
        Y.row(r) = (X.row(r).array() - m).exp();
        Y.row(r) /= Y.row(r).sum();
    }
    if (out->requires_grad) {
        TensorNode* px = x.get();
        out->backward_fn = [px, rows, c](TensorNode& o) {
            px->ensure_grad();
            CMapM Y(o.value.data(), rows, c);
            CMapM G(o.grad.data(), rows, c);
            MapM DX(px->grad.data(), rows, c);
            for (Eigen::Index r = 0; r < rows; ++r) {
                double dot = (G.row(r).array() * Y.row(r).array()).sum();
                DX.row(r).array() += Y.row(r).array() * (G.row(r).array() - dot);
            }
        };
    }
    return out;
}

NodePtr layer_norm(const NodePtr& x, const NodePtr& gain, const NodePtr& bias, double eps) {
    std::size_t c = x->last_dim();
    check(gain->numel() == c && bias->numel() == c, "layer_norm: affine size mismatch");
    auto out = make_node(x->shape, {x, gain, bias});
    auto rows = static_cast<Eigen::Index>(x->lead());
    auto ci = static_cast<Eigen::Index>(c);
    CMapM X(x->value.data(), rows, ci);
    MapM Y(out->value.data(), rows, ci);
    std::vector<double> xhat(x->numel());
    std::vector<double> inv_std(static_cast<std::size_t>(rows));
    MapM XH(xhat.data(), rows, ci);
    CMapV Gn(gain->value.data(), ci);
    CMapV Bs(bias->value.data(), ci);
    for (Eigen::Index r = 0; r < rows; ++r) {
        double mu = X.row(r).mean();
        double var = (X.row(r).array() - mu).square().mean();
        double inv = 1.0 / std::sqrt(var + eps);
        inv_std[static_cast<std::size_t>(r)] = inv;
        XH.row(r) = (X.row(r).array() - mu) * inv;
        Y.row(r) = XH.row(r).array() * Gn.transpose().array() + Bs.transpose().array();
    }
    if (out->requires_grad) {
        TensorNode *px = x.get(), *pg = gain.get(), *pb = bias.get();
        out->backward_fn = [px, pg, pb, rows, ci, xh = std::move(xhat),
                            inv = std::move(inv_std)](TensorNode& o) {
            CMapM G(o.grad.data(), rows, ci);
            CMapM XH(xh.data(), rows, ci);
            CMapV Gn(pg->value.data(), ci);
            if (pg->requires_grad) {
                pg->ensure_grad();
                MapV dg(pg->grad.data(), ci);
                for (Eigen::Index r = 0; r < rows; ++r)
                    dg.array() += (G.row(r).array() * XH.row(r).array()).transpose();
            }
            if (pb->requires_grad) {
                pb->ensure_grad();
                MapV(pb->grad.data(), ci) += G.colwise().sum().transpose();
            }
            if (px->requires_grad) {
                px->ensure_grad();
                MapM DX(px->grad.data(), rows, ci);
                double n = static_cast<double>(ci);
                for (Eigen::Index r = 0; r < rows; ++r) {
                    Eigen::ArrayXd dxhat = G.row(r).array().transpose() * Gn.array();
                    double m1 = dxhat.sum() / n;
                    double m2 = (dxhat * XH.row(r).array().transpose()).sum() / n;
                    DX.row(r).array() +=
                        (inv[static_cast<std::size_t>(r)] *
                         (dxhat - m1 - XH.row(r).array().transpose() * m2))
                            .transpose();
                }
            }
        };
    }
    return out;
}

NodePtr mean_time(const NodePtr& x) {
    check(x->shape.size() == 3, "mean_time: [B,W,C] required");
    std::size_t b = x->shape[0], w = x->shape[1], c = x->shape[2];
    auto out = make_node({b, c}, {x});
    auto wc = static_cast<Eigen::Index>(w);
    auto ci = static_cast<Eigen::Index>(c);
    for (std::size_t i = 0; i < b; ++i) {
        CMapM Xi(x->value.data() + i * w * c, wc, ci);
        MapV(out->value.data() + i * c, ci) = Xi.colwise().mean().transpose();
    }
    if (out->requires_grad) {
        TensorNode* px = x.get();
        out->backward_fn = [px, b, w, c, wc, ci](TensorNode& o) {
            px->ensure_grad();
            double s = 1.0 / static_cast<double>(w);
            for (std::size_t i = 0; i < b; ++i) {
                CMapV Gi(o.grad.data() + i * c, ci);
                MapM DXi(px->grad.data() + i * w * c, wc, ci);
                DXi.rowwise() += (Gi * s).transpose();
            }
        };
    }
    return out;
}

NodePtr time_step(const NodePtr& x, std::size_t t) {
    check(x->shape.size() == 3, "time_step: [B,W,C] required");
    std::size_t b = x->shape[0], w = x->shape[1], c = x->shape[2];
    check(t < w, "time_step: index out of range");
    auto out = make_node({b, c}, {x});
    for (std::size_t i = 0; i < b; ++i)
        std::copy_n(x->value.data() + (i * w + t) * c, c, out->value.data() + i * c);
    if (out->requires_grad) {
        TensorNode* px = x.get();
        out->backward_fn = [px, b, w, c, t](TensorNode& o) {
            px->ensure_grad();
            for (std::size_t i = 0; i < b; ++i) {
                double* dst = px->grad.data() + (i * w + t) * c;
                const double* src = o.grad.data() + i * c;
                for (std::size_t j = 0; j < c; ++j) dst[j] += src[j];
            }
        };
    }
    return out;
}

NodePtr add_time_bias(const NodePtr& x, const NodePtr& pe) {
    check(x->shape.size() == 3 && pe->shape.size() == 2, "add_time_bias: [B,W,C] + [W,C]");
    check(x->shape[1] == pe->shape[0] && x->shape[2] == pe->shape[1],
          "add_time_bias: shape mismatch");
    std::size_t b = x->shape[0], wc = x->shape[1] * x->shape[2];
    auto out = make_node(x->shape, {x, pe});
    CMapA P(pe->value.data(), static_cast<Eigen::Index>(wc));
    for (std::size_t i = 0; i < b; ++i)
        MapA(out->value.data() + i * wc, static_cast<Eigen::Index>(wc)) =
            CMapA(x->value.data() + i * wc, static_cast<Eigen::Index>(wc)) + P;
    if (out->requires_grad) {
        TensorNode *px = x.get(), *pp = pe.get();
        out->backward_fn = [px, pp, b, wc](TensorNode& o) {
            if (px->requires_grad) garr(*px) += cgarr(o);
            if (pp->requires_grad) {
                pp->ensure_grad();
                MapA DP(pp->grad.data(), static_cast<Eigen::Index>(wc));
                for (std::size_t i = 0; i < b; ++i)
                    DP += CMapA(o.grad.data() + i * wc, static_cast<Eigen::Index>(wc));
            }
        };
    }
    return out;
}

NodePtr bmm(const NodePtr& a, const NodePtr& b) {
    check(a->shape.size() == 3 && b->shape.size() == 3, "bmm: [B,m,k]·[B,k,n]");
    check(a->shape[0] == b->shape[0] && a->shape[2] == b->shape[1], "bmm: shape mismatch");
    std::size_t bs = a->shape[0], m = a->shape[1], k = a->shape[2], n = b->shape[2];
    auto out = make_node({bs, m, n}, {a, b});
    auto mi = static_cast<Eigen::Index>(m), ki = static_cast<Eigen::Index>(k),
         ni = static_cast<Eigen::Index>(n);
    for (std::size_t i = 0; i < bs; ++i)
        MapM(out->value.data() + i * m * n, mi, ni).noalias() =
            CMapM(a->value.data() + i * m * k, mi, ki) *
            CMapM(b->value.data() + i * k * n, ki, ni);
    if (out->requires_grad) {
        TensorNode *pa = a.get(), *pb = b.get();
        out->backward_fn = [pa, pb, bs, m, k, n, mi, ki, ni](TensorNode& o) {
            for (std::size_t i = 0; i < bs; ++i) {
                CMapM G(o.grad.data() + i * m * n, mi, ni);
                if (pa->requires_grad) {
                    pa->ensure_grad();
                    MapM(pa->grad.data() + i * m * k, mi, ki).noalias() +=
                        G * CMapM(pb->value.data() + i * k * n, ki, ni).transpose();
                }
                if (pb->requires_grad) {
                    pb->ensure_grad();
                    MapM(pb->grad.data() + i * k * n, ki, ni).noalias() +=
                        CMapM(pa->value.data() + i * m * k, mi, ki).transpose() * G;
                }
            }
        };
    }
    return out;
}

NodePtr bmm_nt(const NodePtr& a, const NodePtr& b) {
    check(a->shape.size() == 3 && b->shape.size() == 3, "bmm_nt: [B,m,k]·[B,n,k]^T");
    check(a->shape[0] == b->shape[0] && a->shape[2] == b->shape[2], "bmm_nt: shape mismatch");
    std::size_t bs = a->shape[0], m = a->shape[1], k = a->shape[2], n = b->shape[1];
    auto out = make_node({bs, m, n}, {a, b});
    auto mi = static_cast<Eigen::Index>(m), ki = static_cast<Eigen::Index>(k),
         ni = static_cast<Eigen::Index>(n);
    for (std::size_t i = 0; i < bs; ++i)
        MapM(out->value.data() + i * m * n, mi, ni).noalias() =
            CMapM(a->value.data() + i * m * k, mi, ki) *
            CMapM(b->value.data() + i * n * k, ni, ki).transpose();
    if (out->requires_grad) {
        TensorNode *pa = a.get(), *pb = b.get();
        out->backward_fn = [pa, pb, bs, m, k, n, mi, ki, ni](TensorNode& o) {
            for (std::size_t i = 0; i < bs; ++i) {
                CMapM G(o.grad.data() + i * m * n, mi, ni);
                if (pa->requires_grad) {
                    pa->ensure_grad();
                    MapM(pa->grad.data() + i * m * k, mi, ki).noalias() +=
                        G * CMapM(pb->value.data() + i * n * k, ni, ki);
                }
                if (pb->requires_grad) {
                    pb->ensure_grad();
                    MapM(pb->grad.data() + i * n * k, ni, ki).noalias() +=
                        G.transpose() * CMapM(pa->value.data() + i * m * k, mi, ki);
                }
            }
        };
    }
    return out;
}

NodePtr conv1d(const NodePtr& x, const NodePtr& w, const NodePtr& b, std::size_t kernel,
               std::size_t dilation, PadMode mode) {
    check(x->shape.size() == 3, "conv1d: input [B,W,C] required");
    check(w->shape.size() == 2, "conv1d: weight [Co,Ci*K] required");
    std::size_t bs = x->shape[0], steps = x->shape[1], ci = x->shape[2];
    std::size_t co = w->shape[0];
    check(w->shape[1] == ci * kernel, "conv1d: weight width != Ci*K");
    check(!b || b->numel() == co, "conv1d: bias size mismatch");
    check(dilation >= 1, "conv1d: dilation must be >= 1");

    // src index per (t, tap); -1 means zero padding
    std::vector<std::ptrdiff_t> idx(steps * kernel);
    auto left = static_cast<std::ptrdiff_t>((kernel - 1) / 2);
    for (std::size_t t = 0; t < steps; ++t) {
        for (std::size_t k = 0; k < kernel; ++k) {
            std::ptrdiff_t src;
            if (mode == PadMode::causal) {
                src = static_cast<std::ptrdiff_t>(t) -
                      static_cast<std::ptrdiff_t>((kernel - 1 - k) * dilation);
                if (src < 0) src = -1;
            } else {
                std::ptrdiff_t off = (static_cast<std::ptrdiff_t>(k) - left) *
                                     static_cast<std::ptrdiff_t>(dilation);
                std::ptrdiff_t ws = static_cast<std::ptrdiff_t>(steps);
                src = ((static_cast<std::ptrdiff_t>(t) + off) % ws + ws) % ws;
            }
            idx[t * kernel + k] = src;
        }
    }

    std::vector<double> col(bs * steps * ci * kernel, 0.0);
    for (std::size_t i = 0; i < bs; ++i) {
        const double* xi = x->value.data() + i * steps * ci;
        double* coli = col.data() + i * steps * ci * kernel;
        for (std::size_t t = 0; t < steps; ++t) {
            for (std::size_t k = 0; k < kernel; ++k) {
                std::ptrdiff_t src = idx[t * kernel + k];
                if (src < 0) continue;
                std::copy_n(xi + static_cast<std::size_t>(src) * ci, ci,
                            coli + (t * kernel + k) * ci);
            }
        }
    }

    auto out = b ? make_node({bs, steps, co}, {x, w, b}) : make_node({bs, steps, co}, {x, w});
    auto rows = static_cast<Eigen::Index>(bs * steps);
    auto kc = static_cast<Eigen::Index>(ci * kernel);
    auto coi = static_cast<Eigen::Index>(co);
    CMapM C(col.data(), rows, kc);
    CMapM W(w->value.data(), coi, kc);
    MapM O(out->value.data(), rows, coi);
    O.noalias() = C * W.transpose();
    if (b) O.rowwise() += CMapV(b->value.data(), coi).transpose();

    if (out->requires_grad) {
        TensorNode *px = x.get(), *pw = w.get(), *pb = b ? b.get() : nullptr;
        out->backward_fn = [px, pw, pb, bs, steps, ci, kernel, rows, kc, coi,
                            colbuf = std::move(col), map = std::move(idx)](TensorNode& o) {
            CMapM G(o.grad.data(), rows, coi);
            CMapM W(pw->value.data(), coi, kc);
            if (pw->requires_grad) {
                pw->ensure_grad();
                MapM(pw->grad.data(), coi, kc).noalias() +=
                    G.transpose() * CMapM(colbuf.data(), rows, kc);
            }
            if (pb && pb->requires_grad) {
                pb->ensure_grad();
                MapV(pb->grad.data(), coi) += G.colwise().sum().transpose();
            }
            if (px->requires_grad) {
                px->ensure_grad();
                RowMat dcol(rows, kc);
                dcol.noalias() = G * W;
                for (std::size_t i = 0; i < bs; ++i) {
                    double* dxi = px->grad.data() + i * steps * ci;
                    const double* dci = dcol.data() + i * steps * ci * kernel;
                    for (std::size_t t = 0; t < steps; ++t) {
                        for (std::size_t k = 0; k < kernel; ++k) {
                            std::ptrdiff_t src = map[t * kernel + k];
                            if (src < 0) continue;
                            double* dst = dxi + static_cast<std::size_t>(src) * ci;
                            const double* g = dci + (t * kernel + k) * ci;
                            for (std::size_t j = 0; j < ci; ++j) dst[j] += g[j];
                        }
                    }
                }
            }
        };
    }
    return out;
}

NodePtr gru_cell(const NodePtr& xp, const NodePtr& h_prev, const NodePtr& w_hh,
                 const NodePtr& b_hh) {
    check(xp->shape.size() == 2 && h_prev->shape.size() == 2, "gru_cell: 2-D operands");
    std::size_t bs = xp->shape[0], h = h_prev->shape[1];
    check(xp->shape[1] == 3 * h, "gru_cell: xp must be [B,3H]");
    check(w_hh->shape == std::vector<std::size_t>({3 * h, h}), "gru_cell: w_hh must be [3H,H]");
    check(b_hh->numel() == 3 * h, "gru_cell: b_hh must be [3H]");
    auto out = make_node({bs, h}, {xp, h_prev, w_hh, b_hh});

    auto bi = static_cast<Eigen::Index>(bs), hi = static_cast<Eigen::Index>(h);
    CMapM XP(xp->value.data(), bi, 3 * hi);
    CMapM HP(h_prev->value.data(), bi, hi);
    CMapM Whh(w_hh->value.data(), 3 * hi, hi);
    CMapV Bhh(b_hh->value.data(), 3 * hi);

    RowMat hp(bi, 3 * hi);
    hp.noalias() = HP * Whh.transpose();
    hp.rowwise() += Bhh.transpose();

    std::vector<double> rv(bs * h), zv(bs * h), nv(bs * h), hpn(bs * h);
    MapM R(rv.data(), bi, hi), Z(zv.data(), bi, hi), N(nv.data(), bi, hi),
        HPN(hpn.data(), bi, hi);
    R.array() = 1.0 / (1.0 + (-(XP.leftCols(hi) + hp.leftCols(hi))).array().exp());
    Z.array() = 1.0 / (1.0 + (-(XP.middleCols(hi, hi) + hp.middleCols(hi, hi))).array().exp());
    HPN = hp.rightCols(hi);
    N.array() = (XP.rightCols(hi).array() + R.array() * HPN.array()).tanh();
    MapM O(out->value.data(), bi, hi);
    O.array() = (1.0 - Z.array()) * N.array() + Z.array() * HP.array();

    if (out->requires_grad) {
        TensorNode *pxp = xp.get(), *ph = h_prev.get(), *pw = w_hh.get(), *pbh = b_hh.get();
        out->backward_fn = [pxp, ph, pw, pbh, bi, hi, rv = std::move(rv), zv = std::move(zv),
                            nv = std::move(nv), hpn = std::move(hpn)](TensorNode& o) {
            CMapM GH(o.grad.data(), bi, hi);
            CMapM R(rv.data(), bi, hi), Z(zv.data(), bi, hi), N(nv.data(), bi, hi),
                HPN(hpn.data(), bi, hi);
            CMapM HP(ph->value.data(), bi, hi);
            CMapM Whh(pw->value.data(), 3 * hi, hi);

            Eigen::ArrayXXd dz = GH.array() * (HP.array() - N.array());
            Eigen::ArrayXXd dn_pre =
                GH.array() * (1.0 - Z.array()) * (1.0 - N.array() * N.array());
            Eigen::ArrayXXd dr_pre =
                dn_pre * HPN.array() * R.array() * (1.0 - R.array());
            Eigen::ArrayXXd dz_pre = dz * Z.array() * (1.0 - Z.array());

            RowMat dhp(bi, 3 * hi);
            dhp.leftCols(hi) = dr_pre.matrix();
            dhp.middleCols(hi, hi) = dz_pre.matrix();
            dhp.rightCols(hi) = (dn_pre * R.array()).matrix();

            if (pxp->requires_grad) {
                pxp->ensure_grad();
                MapM DXP(pxp->grad.data(), bi, 3 * hi);
                DXP.leftCols(hi) += dr_pre.matrix();
                DXP.middleCols(hi, hi) += dz_pre.matrix();
                DXP.rightCols(hi) += dn_pre.matrix();
            }
            if (ph->requires_grad) {
                ph->ensure_grad();
                MapM DH(ph->grad.data(), bi, hi);
                DH.array() += GH.array() * Z.array();
                DH.noalias() += dhp * Whh;
            }
            if (pw->requires_grad) {
                pw->ensure_grad();
                MapM(pw->grad.data(), 3 * hi, hi).noalias() += dhp.transpose() * HP;
            }
            if (pbh->requires_grad) {
                pbh->ensure_grad();
                MapV(pbh->grad.data(), 3 * hi) += dhp.colwise().sum().transpose();
            }
        };
    }
    return out;
}

NodePtr lstm_cell(const NodePtr& xp, const NodePtr& hc_prev, const NodePtr& w_hh,
                  const NodePtr& b_hh) {
    check(xp->shape.size() == 2 && hc_prev->shape.size() == 2, "lstm_cell: 2-D operands");
    std::size_t bs = xp->shape[0], h2 = hc_prev->shape[1];
    check(h2 % 2 == 0, "lstm_cell: hc must pack [h|c]");
    std::size_t h = h2 / 2;
    check(xp->shape[1] == 4 * h, "lstm_cell: xp must be [B,4H]");
    check(w_hh->shape == std::vector<std::size_t>({4 * h, h}), "lstm_cell: w_hh must be [4H,H]");
    check(b_hh->numel() == 4 * h, "lstm_cell: b_hh must be [4H]");
    auto out = make_node({bs, 2 * h}, {xp, hc_prev, w_hh, b_hh});

    auto bi = static_cast<Eigen::Index>(bs), hi = static_cast<Eigen::Index>(h);
    CMapM XP(xp->value.data(), bi, 4 * hi);
    CMapM HC(hc_prev->value.data(), bi, 2 * hi);
    CMapM Whh(w_hh->value.data(), 4 * hi, hi);
    CMapV Bhh(b_hh->value.data(), 4 * hi);

    RowMat p(bi, 4 * hi);
    p.noalias() = HC.leftCols(hi) * Whh.transpose();
    p += XP;
    p.rowwise() += Bhh.transpose();

    std::vector<double> iv(bs * h), fv(bs * h), gv(bs * h), ov(bs * h), tcv(bs * h);
    MapM I(iv.data(), bi, hi), F(fv.data(), bi, hi), G(gv.data(), bi, hi),
        Og(ov.data(), bi, hi), TC(tcv.data(), bi, hi);
    I.array() = 1.0 / (1.0 + (-p.leftCols(hi)).array().exp());
    F.array() = 1.0 / (1.0 + (-p.middleCols(hi, hi)).array().exp());
    G.array() = p.middleCols(2 * hi, hi).array().tanh();
    Og.array() = 1.0 / (1.0 + (-p.rightCols(hi)).array().exp());

    MapM O(out->value.data(), bi, 2 * hi);
    O.rightCols(hi).array() =
        F.array() * HC.rightCols(hi).array() + I.array() * G.array();  // c
    TC.array() = O.rightCols(hi).array().tanh();
    O.leftCols(hi).array() = Og.array() * TC.array();  // h

    if (out->requires_grad) {
        TensorNode *pxp = xp.get(), *phc = hc_prev.get(), *pw = w_hh.get(), *pbh = b_hh.get();
        out->backward_fn = [pxp, phc, pw, pbh, bi, hi, iv = std::move(iv), fv = std::move(fv),
                            gv = std::move(gv), ov = std::move(ov),
                            tcv = std::move(tcv)](TensorNode& o) {
            CMapM GO(o.grad.data(), bi, 2 * hi);
            CMapM I(iv.data(), bi, hi), F(fv.data(), bi, hi), G(gv.data(), bi, hi),
                Og(ov.data(), bi, hi), TC(tcv.data(), bi, hi);
            CMapM HC(phc->value.data(), bi, 2 * hi);
            CMapM Whh(pw->value.data(), 4 * hi, hi);

            auto gh = GO.leftCols(hi).array();
            Eigen::ArrayXXd gc =
                GO.rightCols(hi).array() + gh * Og.array() * (1.0 - TC.array() * TC.array());
            Eigen::ArrayXXd dp(bi, 4 * hi);
            dp.leftCols(hi) = gc * G.array() * I.array() * (1.0 - I.array());
            dp.middleCols(hi, hi) =
                gc * HC.rightCols(hi).array() * F.array() * (1.0 - F.array());
            dp.middleCols(2 * hi, hi) = gc * I.array() * (1.0 - G.array() * G.array());
            dp.rightCols(hi) = gh * TC.array() * Og.array() * (1.0 - Og.array());

            if (pxp->requires_grad) {
                pxp->ensure_grad();
                MapM(pxp->grad.data(), bi, 4 * hi) += dp.matrix();
            }
            if (phc->requires_grad) {
                phc->ensure_grad();
                MapM DHC(phc->grad.data(), bi, 2 * hi);
                DHC.leftCols(hi).noalias() += dp.matrix() * Whh;
                DHC.rightCols(hi).array() += gc * F.array();
            }
            if (pw->requires_grad) {
                pw->ensure_grad();
                MapM(pw->grad.data(), 4 * hi, hi).noalias() +=
                    dp.matrix().transpose() * HC.leftCols(hi);
            }
            if (pbh->requires_grad) {
                pbh->ensure_grad();
                MapV(pbh->grad.data(), 4 * hi) += dp.matrix().colwise().sum().transpose();
            }
        };
    }
    return out;
}

void backward(const NodePtr& root) {
    check(root != nullptr, "backward: null root");
    check(root->numel() == 1, "backward: root must be scalar");
    check(root->requires_grad, "backward: root does not require grad");
    root->ensure_grad();
    root->grad[0] = 1.0;

    std::vector<TensorNode*> order;
    std::unordered_set<TensorNode*> seen;
    std::vector<TensorNode*> stack{root.get()};
    seen.insert(root.get());
    while (!stack.empty()) {
        TensorNode* n = stack.back();
        stack.pop_back();
        order.push_back(n);
        for (const auto& p : n->parents) {
            if (!p || !p->requires_grad) continue;
            if (seen.insert(p.get()).second) stack.push_back(p.get());
        }
    }
    std::sort(order.begin(), order.end(),
              [](const TensorNode* a, const TensorNode* b) { return a->id > b->id; });
    for (TensorNode* n : order) {
        if (!n->backward_fn) continue;
        n->ensure_grad();
        n->backward_fn(*n);
    }
}

}  // namespace kds::tensor
