#include "videdit/autograd.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <stdexcept>

namespace videdit::ag {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using CMapMat = Eigen::Map<const RowMat>;

static CMapMat map2d(const Tensor& t) {
    require(t.ndim() == 2, "expected 2-D tensor, got " + t.shape_str());
    return CMapMat(t.data(), t.dim(0), t.dim(1));
}

static MapMat map2d(Tensor& t) {
    require(t.ndim() == 2, "expected 2-D tensor, got " + t.shape_str());
    return MapMat(t.data(), t.dim(0), t.dim(1));
}

void gemm(const Tensor& a, bool ta, const Tensor& b, bool tb, Tensor& out, bool accumulate, double alpha) {
    auto A = map2d(a);
    auto B = map2d(b);
    int m = ta ? a.dim(1) : a.dim(0);
    int k = ta ? a.dim(0) : a.dim(1);
    int kb = tb ? b.dim(1) : b.dim(0);
    int n = tb ? b.dim(0) : b.dim(1);
    require(k == kb, "gemm: inner dimension mismatch " + a.shape_str() + (ta ? "^T" : "") + " * " +
                         b.shape_str() + (tb ? "^T" : ""));
    if (out.empty()) out = Tensor({m, n});
    require(out.dim(0) == m && out.dim(1) == n, "gemm: bad output shape");
    auto C = map2d(out);
    if (!ta && !tb) {
        if (accumulate) C.noalias() += alpha * (A * B); else C.noalias() = alpha * (A * B);
    } else if (ta && !tb) {
        if (accumulate) C.noalias() += alpha * (A.transpose() * B); else C.noalias() = alpha * (A.transpose() * B);
    } else if (!ta && tb) {
        if (accumulate) C.noalias() += alpha * (A * B.transpose()); else C.noalias() = alpha * (A * B.transpose());
    } else {
        if (accumulate) C.noalias() += alpha * (A.transpose() * B.transpose()); else C.noalias() = alpha * (A.transpose() * B.transpose());
    }
}

void softmax_rows(Tensor& t) {
    require(t.ndim() == 2, "softmax_rows: expected 2-D");
    int n = t.dim(0), m = t.dim(1);
    for (int i = 0; i < n; ++i) {
        double* row = t.data() + static_cast<int64_t>(i) * m;
        double mx = row[0];
        for (int j = 1; j < m; ++j) mx = std::max(mx, row[j]);
        double s = 0.0;
        for (int j = 0; j < m; ++j) {
            row[j] = std::exp(row[j] - mx);
            s += row[j];
        }
        double inv = 1.0 / s;
        for (int j = 0; j < m; ++j) row[j] *= inv;
    }
}

void softmax_rows_backward(const Tensor& a, const Tensor& da, Tensor& ds) {
    int n = a.dim(0), m = a.dim(1);
    if (ds.empty()) ds = Tensor({n, m});
    for (int i = 0; i < n; ++i) {
        const double* ar = a.data() + static_cast<int64_t>(i) * m;
        const double* dr = da.data() + static_cast<int64_t>(i) * m;
        double* sr = ds.data() + static_cast<int64_t>(i) * m;
        double dot = 0.0;
        for (int j = 0; j < m; ++j) dot += ar[j] * dr[j];
        for (int j = 0; j < m; ++j) sr[j] = ar[j] * (dr[j] - dot);
    }
}

// ---- graph machinery ----

Var Graph::leaf(Tensor value, bool requires_grad) {
    auto n = std::make_shared<Node>();
    n->val = std::move(value);
    n->requires_grad = grad_enabled && requires_grad;
    if (n->requires_grad) tape_.push_back(n);
    return n;
}

Var Graph::make(Tensor value, std::vector<Var> parents, std::function<void(Node&)> bw) {
    auto n = std::make_shared<Node>();
    n->val = std::move(value);
    bool need = false;
    if (grad_enabled)
        for (const auto& p : parents)
            if (p && p->requires_grad) need = true;
    n->requires_grad = need;
    if (need) {
        n->parents = std::move(parents);
        n->backward = std::move(bw);
        tape_.push_back(n);
    }
    return n;
}

void Graph::backward(const Var& root) {
    require(grad_enabled, "backward() on a no-grad graph");
    require(root->requires_grad, "backward(): root does not require grad");
    root->g().fill(1.0);
    for (auto it = tape_.rbegin(); it != tape_.rend(); ++it) {
        Node& n = **it;
        if (!n.has_grad() || !n.backward) continue;
        n.backward(n);
    }
}

// ---- elementwise ----

Var add(Graph& g, Var a, Var b) {
    require(a->val.same_shape(b->val), "add: shape mismatch");
    Tensor out = a->val + b->val;
    return g.make(std::move(out), {a, b}, [a, b](Node& n) {
        if (a->requires_grad) a->g() += n.grad;
        if (b->requires_grad) b->g() += n.grad;
    });
}

Var sub(Graph& g, Var a, Var b) { return add_scaled(g, a, 1.0, b, -1.0); }

Var mul(Graph& g, Var a, Var b) {
    require(a->val.same_shape(b->val), "mul: shape mismatch");
    Tensor out = a->val;
    for (int64_t i = 0; i < out.numel(); ++i) out[i] *= b->val[i];
    return g.make(std::move(out), {a, b}, [a, b](Node& n) {
        if (a->requires_grad) {
            Tensor& ga = a->g();
            for (int64_t i = 0; i < ga.numel(); ++i) ga[i] += n.grad[i] * b->val[i];
        }
        if (b->requires_grad) {
            Tensor& gb = b->g();
            for (int64_t i = 0; i < gb.numel(); ++i) gb[i] += n.grad[i] * a->val[i];
        }
    });
}

Var scale(Graph& g, Var a, double s) {
    Tensor out = a->val * s;
    return g.make(std::move(out), {a}, [a, s](Node& n) {
        if (!a->requires_grad) return;
        Tensor& ga = a->g();
        for (int64_t i = 0; i < ga.numel(); ++i) ga[i] += n.grad[i] * s;
    });
}

Var add_scaled(Graph& g, Var a, double sa, Var b, double sb) {
    require(a->val.same_shape(b->val), "add_scaled: shape mismatch");
    Tensor out = a->val;
    for (int64_t i = 0; i < out.numel(); ++i) out[i] = sa * out[i] + sb * b->val[i];
    return g.make(std::move(out), {a, b}, [a, b, sa, sb](Node& n) {
        if (a->requires_grad) {
            Tensor& ga = a->g();
            for (int64_t i = 0; i < ga.numel(); ++i) ga[i] += n.grad[i] * sa;
        }
        if (b->requires_grad) {
            Tensor& gb = b->g();
            for (int64_t i = 0; i < gb.numel(); ++i) gb[i] += n.grad[i] * sb;
        }
    });
}

Var silu(Graph& g, Var x) {
    Tensor out = x->val;
    for (int64_t i = 0; i < out.numel(); ++i) {
        double s = 1.0 / (1.0 + std::exp(-out[i]));
        out[i] = out[i] * s;
    }
    return g.make(std::move(out), {x}, [x](Node& n) {
        if (!x->requires_grad) return;
        Tensor& gx = x->g();
        for (int64_t i = 0; i < gx.numel(); ++i) {
            double v = x->val[i];
            double s = 1.0 / (1.0 + std::exp(-v));
            gx[i] += n.grad[i] * s * (1.0 + v * (1.0 - s));
        }
    });
}

// ---- matmul / affine / gather ----

Var matmul(Graph& g, Var a, Var b, bool trans_a, bool trans_b) {
    Tensor out;
    gemm(a->val, trans_a, b->val, trans_b, out);
    return g.make(std::move(out), {a, b}, [a, b, trans_a, trans_b](Node& n) {
        if (a->requires_grad) {
            Tensor& ga = a->g();
            if (!trans_a && !trans_b) gemm(n.grad, false, b->val, true, ga, true);
            else if (!trans_a && trans_b) gemm(n.grad, false, b->val, false, ga, true);
            else if (trans_a && !trans_b) gemm(b->val, false, n.grad, true, ga, true);
            else gemm(b->val, true, n.grad, true, ga, true);
        }
        if (b->requires_grad) {
            Tensor& gb = b->g();
            if (!trans_a && !trans_b) gemm(a->val, true, n.grad, false, gb, true);
            else if (trans_a && !trans_b) gemm(a->val, false, n.grad, false, gb, true);
            else if (!trans_a && trans_b) gemm(n.grad, true, a->val, false, gb, true);
            else gemm(n.grad, true, a->val, true, gb, true);
        }
    });
}

Var affine(Graph& g, Var x, Var w, Var b) {
    Tensor out;
    gemm(x->val, false, w->val, false, out);
    if (b) {
        int n = out.dim(0), m = out.dim(1);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < m; ++j) out.at(i, j) += b->val[j];
    }
    std::vector<Var> parents = b ? std::vector<Var>{x, w, b} : std::vector<Var>{x, w};
    return g.make(std::move(out), std::move(parents), [x, w, b](Node& n) {
        if (x->requires_grad) gemm(n.grad, false, w->val, true, x->g(), true);
        if (w->requires_grad) gemm(x->val, true, n.grad, false, w->g(), true);
        if (b && b->requires_grad) {
            Tensor& gb = b->g();
            int rows = n.grad.dim(0), cols = n.grad.dim(1);
            for (int i = 0; i < rows; ++i)
                for (int j = 0; j < cols; ++j) gb[j] += n.grad.at(i, j);
        }
    });
}

Var gather_rows(Graph& g, Var table, std::vector<int> ids) {
    require(table->val.ndim() == 2, "gather_rows: table must be 2-D");
    int d = table->val.dim(1);
    Tensor out({static_cast<int>(ids.size()), d});
    for (size_t i = 0; i < ids.size(); ++i) {
        require(ids[i] >= 0 && ids[i] < table->val.dim(0), "gather_rows: id out of range");
        for (int j = 0; j < d; ++j) out.at(static_cast<int>(i), j) = table->val.at(ids[i], j);
    }
    return g.make(std::move(out), {table}, [table, ids = std::move(ids), d](Node& n) {
        if (!table->requires_grad) return;
        Tensor& gt = table->g();
        for (size_t i = 0; i < ids.size(); ++i)
            for (int j = 0; j < d; ++j) gt.at(ids[i], j) += n.grad.at(static_cast<int>(i), j);
    });
}

// ---- image ops ----

static void im2col(const double* x, int ci, int h, int w, int k, int stride, int pad, Tensor& cols) {
    int ho = (h + 2 * pad - k) / stride + 1;
    int wo = (w + 2 * pad - k) / stride + 1;
    if (cols.empty()) cols = Tensor({ho * wo, ci * k * k});
    double* c = cols.data();
    for (int oh = 0; oh < ho; ++oh) {
        for (int ow = 0; ow < wo; ++ow) {
            double* dst = c + static_cast<int64_t>(oh * wo + ow) * (ci * k * k);
            for (int cc = 0; cc < ci; ++cc) {
                const double* plane = x + static_cast<int64_t>(cc) * h * w;
                for (int r = 0; r < k; ++r) {
                    int ih = oh * stride - pad + r;
                    for (int s = 0; s < k; ++s) {
                        int iw = ow * stride - pad + s;
                        *dst++ = (ih >= 0 && ih < h && iw >= 0 && iw < w) ? plane[ih * w + iw] : 0.0;
                    }
                }
            }
        }
    }
}

static void col2im_accum(const Tensor& cols, int ci, int h, int w, int k, int stride, int pad, double* dx) {
    int ho = (h + 2 * pad - k) / stride + 1;
    int wo = (w + 2 * pad - k) / stride + 1;
    const double* c = cols.data();
    for (int oh = 0; oh < ho; ++oh) {
        for (int ow = 0; ow < wo; ++ow) {
            const double* src = c + static_cast<int64_t>(oh * wo + ow) * (ci * k * k);
            for (int cc = 0; cc < ci; ++cc) {
                double* plane = dx + static_cast<int64_t>(cc) * h * w;
                for (int r = 0; r < k; ++r) {
                    int ih = oh * stride - pad + r;
                    for (int s = 0; s < k; ++s) {
                        int iw = ow * stride - pad + s;
                        double v = *src++;
                        if (ih >= 0 && ih < h && iw >= 0 && iw < w) plane[ih * w + iw] += v;
                    }
                }
            }
        }
    }
}

Var conv2d(Graph& g, Var x, Var w, Var b, int stride, int pad) {
    const Tensor& X = x->val;
    const Tensor& W = w->val;
    require(X.ndim() == 4 && W.ndim() == 4, "conv2d: x and w must be 4-D");
    int batch = X.dim(0), ci = X.dim(1), h = X.dim(2), wd = X.dim(3);
    int co = W.dim(0), k = W.dim(2);
    require(W.dim(1) == ci && W.dim(3) == k, "conv2d: weight shape mismatch");
    int ho = (h + 2 * pad - k) / stride + 1;
    int wo = (wd + 2 * pad - k) / stride + 1;

    Tensor wmat = W.reshaped({co, ci * k * k});
    Tensor out({batch, co, ho, wo});
    Tensor cols, omat;
    for (int bi = 0; bi < batch; ++bi) {
        im2col(X.data() + static_cast<int64_t>(bi) * ci * h * wd, ci, h, wd, k, stride, pad, cols);
        gemm(cols, false, wmat, true, omat);  // [ho*wo, co]
        double* op = out.data() + static_cast<int64_t>(bi) * co * ho * wo;
        for (int cc = 0; cc < co; ++cc) {
            double bias = b ? b->val[cc] : 0.0;
            for (int p = 0; p < ho * wo; ++p) op[static_cast<int64_t>(cc) * ho * wo + p] = omat.at(p, cc) + bias;
        }
    }

    std::vector<Var> parents = b ? std::vector<Var>{x, w, b} : std::vector<Var>{x, w};
    return g.make(std::move(out), std::move(parents),
                  [x, w, b, stride, pad, batch, ci, h, wd, co, k, ho, wo](Node& n) {
        Tensor wmat = w->val.reshaped({co, ci * k * k});
        Tensor cols, gmat({ho * wo, co}), dcols;
        Tensor* gw = nullptr;
        if (w->requires_grad) gw = &w->g();
        Tensor gwmat = gw ? Tensor({co, ci * k * k}) : Tensor();
        for (int bi = 0; bi < batch; ++bi) {
            const double* gp = n.grad.data() + static_cast<int64_t>(bi) * co * ho * wo;
            for (int cc = 0; cc < co; ++cc)
                for (int p = 0; p < ho * wo; ++p) gmat.at(p, cc) = gp[static_cast<int64_t>(cc) * ho * wo + p];
            if (b && b->requires_grad) {
                Tensor& gb = b->g();
                for (int cc = 0; cc < co; ++cc)
                    for (int p = 0; p < ho * wo; ++p) gb[cc] += gmat.at(p, cc);
            }
            if (gw || x->requires_grad)
                im2col(x->val.data() + static_cast<int64_t>(bi) * ci * h * wd, ci, h, wd, k, stride, pad, cols);
            if (gw) gemm(gmat, true, cols, false, gwmat, bi > 0);
            if (x->requires_grad) {
                gemm(gmat, false, wmat, false, dcols);  // [ho*wo, ci*k*k]
                col2im_accum(dcols, ci, h, wd, k, stride, pad,
                             x->g().data() + static_cast<int64_t>(bi) * ci * h * wd);
            }
        }
        if (gw) *gw += gwmat.reshaped(w->val.shape());
    });
}

Var upsample_nearest2x(Graph& g, Var x) {
    const Tensor& X = x->val;
    require(X.ndim() == 4, "upsample_nearest2x: expected 4-D");
    int batch = X.dim(0), c = X.dim(1), h = X.dim(2), w = X.dim(3);
    Tensor out({batch, c, 2 * h, 2 * w});
    for (int bi = 0; bi < batch; ++bi)
        for (int cc = 0; cc < c; ++cc)
            for (int i = 0; i < h; ++i)
                for (int j = 0; j < w; ++j) {
                    double v = X.at(bi, cc, i, j);
                    out.at(bi, cc, 2 * i, 2 * j) = v;
                    out.at(bi, cc, 2 * i, 2 * j + 1) = v;
                    out.at(bi, cc, 2 * i + 1, 2 * j) = v;
                    out.at(bi, cc, 2 * i + 1, 2 * j + 1) = v;
                }
    return g.make(std::move(out), {x}, [x, batch, c, h, w](Node& n) {
        if (!x->requires_grad) return;
        Tensor& gx = x->g();
        for (int bi = 0; bi < batch; ++bi)
            for (int cc = 0; cc < c; ++cc)
                for (int i = 0; i < h; ++i)
                    for (int j = 0; j < w; ++j)
                        gx.at(bi, cc, i, j) += n.grad.at(bi, cc, 2 * i, 2 * j) + n.grad.at(bi, cc, 2 * i, 2 * j + 1) +
                                               n.grad.at(bi, cc, 2 * i + 1, 2 * j) + n.grad.at(bi, cc, 2 * i + 1, 2 * j + 1);
    });
}

Var concat_channels(Graph& g, Var a, Var b) {
    const Tensor& A = a->val;
    const Tensor& B = b->val;
    require(A.ndim() == 4 && B.ndim() == 4, "concat_channels: expected 4-D");
    require(A.dim(0) == B.dim(0) && A.dim(2) == B.dim(2) && A.dim(3) == B.dim(3),
            "concat_channels: shape mismatch");
    int batch = A.dim(0), ca = A.dim(1), cb = B.dim(1), h = A.dim(2), w = A.dim(3);
    Tensor out({batch, ca + cb, h, w});
    int64_t plane = static_cast<int64_t>(h) * w;
    for (int bi = 0; bi < batch; ++bi) {
        std::copy_n(A.data() + bi * ca * plane, ca * plane, out.data() + bi * (ca + cb) * plane);
        std::copy_n(B.data() + bi * cb * plane, cb * plane, out.data() + bi * (ca + cb) * plane + ca * plane);
    }
    return g.make(std::move(out), {a, b}, [a, b, batch, ca, cb, plane](Node& n) {
        for (int bi = 0; bi < batch; ++bi) {
            const double* gp = n.grad.data() + bi * (ca + cb) * plane;
            if (a->requires_grad) {
                double* ga = a->g().data() + bi * ca * plane;
                for (int64_t i = 0; i < ca * plane; ++i) ga[i] += gp[i];
            }
            if (b->requires_grad) {
                double* gb = b->g().data() + bi * cb * plane;
                for (int64_t i = 0; i < cb * plane; ++i) gb[i] += gp[ca * plane + i];
            }
        }
    });
}

Var add_channel_bias(Graph& g, Var x, Var bias_rows) {
    const Tensor& X = x->val;
    const Tensor& B = bias_rows->val;
    require(X.ndim() == 4 && B.ndim() == 2 && B.dim(0) == X.dim(0) && B.dim(1) == X.dim(1),
            "add_channel_bias: shape mismatch");
    int batch = X.dim(0), c = X.dim(1), h = X.dim(2), w = X.dim(3);
    Tensor out = X;
    for (int bi = 0; bi < batch; ++bi)
        for (int cc = 0; cc < c; ++cc) {
            double v = B.at(bi, cc);
            double* p = out.data() + (static_cast<int64_t>(bi) * c + cc) * h * w;
            for (int i = 0; i < h * w; ++i) p[i] += v;
        }
    return g.make(std::move(out), {x, bias_rows}, [x, bias_rows, batch, c, h, w](Node& n) {
        if (x->requires_grad) x->g() += n.grad;
        if (bias_rows->requires_grad) {
            Tensor& gb = bias_rows->g();
            for (int bi = 0; bi < batch; ++bi)
                for (int cc = 0; cc < c; ++cc) {
                    const double* p = n.grad.data() + (static_cast<int64_t>(bi) * c + cc) * h * w;
                    double s = 0.0;
                    for (int i = 0; i < h * w; ++i) s += p[i];
                    gb.at(bi, cc) += s;
                }
        }
    });
}

Var group_norm(Graph& g, Var x, Var gamma, Var beta, int groups, double eps) {
    const Tensor& X = x->val;
    require(X.ndim() == 4, "group_norm: expected 4-D");
    int batch = X.dim(0), c = X.dim(1), h = X.dim(2), w = X.dim(3);
    require(c % groups == 0, "group_norm: channels not divisible by groups");
    int cg = c / groups;
    int64_t gsize = static_cast<int64_t>(cg) * h * w;

    Tensor out({batch, c, h, w});
    auto xhat = std::make_shared<Tensor>(Tensor({batch, c, h, w}));
    auto inv_std = std::make_shared<Tensor>(Tensor({batch, groups}));
    for (int bi = 0; bi < batch; ++bi) {
        for (int gi = 0; gi < groups; ++gi) {
            const double* xp = X.data() + (static_cast<int64_t>(bi) * c + gi * cg) * h * w;
            double mean = 0.0;
            for (int64_t i = 0; i < gsize; ++i) mean += xp[i];
            mean /= static_cast<double>(gsize);
            double var = 0.0;
            for (int64_t i = 0; i < gsize; ++i) {
                double d = xp[i] - mean;
                var += d * d;
            }
            var /= static_cast<double>(gsize);
            double istd = 1.0 / std::sqrt(var + eps);
            inv_std->at(bi, gi) = istd;
            double* xh = xhat->data() + (static_cast<int64_t>(bi) * c + gi * cg) * h * w;
            double* op = out.data() + (static_cast<int64_t>(bi) * c + gi * cg) * h * w;
            for (int cc = 0; cc < cg; ++cc) {
                double ga = gamma->val[gi * cg + cc];
                double be = beta->val[gi * cg + cc];
                for (int i = 0; i < h * w; ++i) {
                    int64_t idx = static_cast<int64_t>(cc) * h * w + i;
                    xh[idx] = (xp[idx] - mean) * istd;
                    op[idx] = ga * xh[idx] + be;
                }
            }
        }
    }
    return g.make(std::move(out), {x, gamma, beta},
                  [x, gamma, beta, xhat, inv_std, batch, c, h, w, groups, cg, gsize](Node& n) {
        for (int bi = 0; bi < batch; ++bi) {
            for (int gi = 0; gi < groups; ++gi) {
                const double* xh = xhat->data() + (static_cast<int64_t>(bi) * c + gi * cg) * h * w;
                const double* gp = n.grad.data() + (static_cast<int64_t>(bi) * c + gi * cg) * h * w;
                // d(gamma), d(beta)
                if (gamma->requires_grad || beta->requires_grad) {
                    for (int cc = 0; cc < cg; ++cc) {
                        double sg = 0.0, sb = 0.0;
                        for (int i = 0; i < h * w; ++i) {
                            int64_t idx = static_cast<int64_t>(cc) * h * w + i;
                            sg += gp[idx] * xh[idx];
                            sb += gp[idx];
                        }
                        if (gamma->requires_grad) gamma->g()[gi * cg + cc] += sg;
                        if (beta->requires_grad) beta->g()[gi * cg + cc] += sb;
                    }
                }
                if (!x->requires_grad) continue;
                // dxhat = dy * gamma; dx = istd/n * (n*dxhat - sum(dxhat) - xhat*sum(dxhat*xhat))
                double istd = inv_std->at(bi, gi);
                double sum_dxh = 0.0, sum_dxh_xh = 0.0;
                for (int cc = 0; cc < cg; ++cc) {
                    double ga = gamma->val[gi * cg + cc];
                    for (int i = 0; i < h * w; ++i) {
                        int64_t idx = static_cast<int64_t>(cc) * h * w + i;
                        double dxh = gp[idx] * ga;
                        sum_dxh += dxh;
                        sum_dxh_xh += dxh * xh[idx];
                    }
                }
                double* gx = x->g().data() + (static_cast<int64_t>(bi) * c + gi * cg) * h * w;
                double inv_n = 1.0 / static_cast<double>(gsize);
                for (int cc = 0; cc < cg; ++cc) {
                    double ga = gamma->val[gi * cg + cc];
                    for (int i = 0; i < h * w; ++i) {
                        int64_t idx = static_cast<int64_t>(cc) * h * w + i;
                        double dxh = gp[idx] * ga;
                        gx[idx] += istd * (dxh - inv_n * sum_dxh - xh[idx] * inv_n * sum_dxh_xh);
                    }
                }
            }
        }
    });
}

Var mse_loss(Graph& g, Var pred, const Tensor& target) {
    require(pred->val.same_shape(target), "mse_loss: shape mismatch");
    int64_t n = pred->val.numel();
    double s = 0.0;
    for (int64_t i = 0; i < n; ++i) {
        double d = pred->val[i] - target[i];
        s += d * d;
    }
    Tensor out = Tensor::scalar(s / static_cast<double>(n));
    auto tgt = std::make_shared<Tensor>(target);
    return g.make(std::move(out), {pred}, [pred, tgt, n](Node& node) {
        if (!pred->requires_grad) return;
        double gl = node.grad[0] * 2.0 / static_cast<double>(n);
        Tensor& gp = pred->g();
        for (int64_t i = 0; i < n; ++i) gp[i] += gl * (pred->val[i] - (*tgt)[i]);
    });
}

}  // namespace videdit::ag
