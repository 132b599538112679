#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <functional>
#include <unordered_map>
#include <utility>
#include <vector>

#include "rs2/tensor.hpp"

namespace rs2 {

// Reverse-mode tape. One Graph per forward/backward pass; parameters enter
// as leaves bound to their storage so gradients can be read back by address.
//
// Every op records an analytic vector-Jacobian product. GeLU uses the tanh
// approximation throughout (matching the gelu() op below), so gradient
// checks and modules agree on one closed form.
template <class S>
class Graph;

template <class S>
struct Var {
    Graph<S>* g = nullptr;
    int id = -1;

    const Tensor<S>& val() const { return g->value(id); }
    const std::vector<std::size_t>& shape() const { return val().shape(); }
};

template <class S>
class Graph {
public:
    using BackFn = std::function<void(Graph&, int)>;

    struct Node {
        Tensor<S> value;
        Tensor<S> grad;
        BackFn backward;
        bool requires_grad = false;
        bool grad_set = false;
        const Tensor<S>* bound = nullptr; // parameter storage, if a leaf
    };

    // Leaf bound to parameter storage; gradient retrievable via grad_of(&t).
    Var<S> param(const Tensor<S>& t) {
        int id = push(t, nullptr, true);
        nodes_[id].bound = &t;
        return {this, id};
    }

    // Leaf with gradient tracking but no external binding (e.g. probed inputs).
    Var<S> input(Tensor<S> t) { return {this, push(std::move(t), nullptr, true)}; }

    // Leaf without gradient tracking.
    Var<S> constant(Tensor<S> t) { return {this, push(std::move(t), nullptr, false)}; }

    const Tensor<S>& value(int id) const { return nodes_[id].value; }

    std::size_t num_nodes() const { return nodes_.size(); }

    // ---- elementwise ----

    Var<S> add(Var<S> a, Var<S> b) {
        check_same_shape(a, b, "add");
        Tensor<S> out = val(a);
        const Tensor<S>& bv = val(b);
        for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i];
        return make(std::move(out), {a.id, b.id}, [a, b](Graph& g, int self) {
            const Tensor<S>& go = g.nodes_[self].grad;
            g.accum(a.id, go);
            g.accum(b.id, go);
        });
    }

    Var<S> sub(Var<S> a, Var<S> b) {
        check_same_shape(a, b, "sub");
        Tensor<S> out = val(a);
        const Tensor<S>& bv = val(b);
        for (std::size_t i = 0; i < out.size(); ++i) out[i] -= bv[i];
        return make(std::move(out), {a.id, b.id}, [a, b](Graph& g, int self) {
            const Tensor<S>& go = g.nodes_[self].grad;
            g.accum(a.id, go);
            g.accum_scaled(b.id, go, S(-1));
        });
    }

    Var<S> mul(Var<S> a, Var<S> b) {
        check_same_shape(a, b, "mul");
        Tensor<S> out = val(a);
        const Tensor<S>& bv = val(b);
        for (std::size_t i = 0; i < out.size(); ++i) out[i] *= bv[i];
        return make(std::move(out), {a.id, b.id}, [a, b](Graph& g, int self) {
            const Tensor<S>& go = g.nodes_[self].grad;
            const Tensor<S>& av = g.val(a);
            const Tensor<S>& bv2 = g.val(b);
            if (g.wants(a.id)) {
                Tensor<S> da(av.shape());
                for (std::size_t i = 0; i < da.size(); ++i) da[i] = go[i] * bv2[i];
                g.accum(a.id, da);
            }
            if (g.wants(b.id)) {
                Tensor<S> db(bv2.shape());
                for (std::size_t i = 0; i < db.size(); ++i) db[i] = go[i] * av[i];
                g.accum(b.id, db);
            }
        });
    }

    Var<S> div(Var<S> a, Var<S> b) {
        check_same_shape(a, b, "div");
        Tensor<S> out = val(a);
        const Tensor<S>& bv = val(b);
        for (std::size_t i = 0; i < out.size(); ++i) out[i] /= bv[i];
        return make(std::move(out), {a.id, b.id}, [a, b](Graph& g, int self) {
            const Tensor<S>& go = g.nodes_[self].grad;
            const Tensor<S>& av = g.val(a);
            const Tensor<S>& bv2 = g.val(b);
            if (g.wants(a.id)) {
                Tensor<S> da(av.shape());
                for (std::size_t i = 0; i < da.size(); ++i) da[i] = go[i] / bv2[i];
                g.accum(a.id, da);
            }
            if (g.wants(b.id)) {
                Tensor<S> db(bv2.shape());
                for (std::size_t i = 0; i < db.size(); ++i)
                    db[i] = -go[i] * av[i] / (bv2[i] * bv2[i]);
                g.accum(b.id, db);
            }
        });
    }

    Var<S> scale(Var<S> a, double c) {
        Tensor<S> out = val(a);
        const S sc = static_cast<S>(c);
        for (auto i = 0u; i < out.size(); ++i) out[i] *= sc;
        return make(std::move(out), {a.id}, [a, sc](Graph& g, int self) {
            g.accum_scaled(a.id, g.nodes_[self].grad, sc);
        });
    }

    Var<S> add_const(Var<S> a, double c) {
        Tensor<S> out = val(a);
        const S sc = static_cast<S>(c);
        for (auto i = 0u; i < out.size(); ++i) out[i] += sc;
        return make(std::move(out), {a.id}, [a](Graph& g, int self) {
            g.accum(a.id, g.nodes_[self].grad);
        });
    }

    // c - x
    Var<S> rsub_const(double c, Var<S> a) {
        Tensor<S> out = val(a);
        const S sc = static_cast<S>(c);
        for (auto i = 0u; i < out.size(); ++i) out[i] = sc - out[i];
        return make(std::move(out), {a.id}, [a](Graph& g, int self) {
            g.accum_scaled(a.id, g.nodes_[self].grad, S(-1));
        });
    }

    Var<S> gelu(Var<S> a) {
        Tensor<S> out(val(a).shape());
        const Tensor<S>& x = val(a);
        for (std::size_t i = 0; i < out.size(); ++i)
            out[i] = static_cast<S>(gelu_tanh(static_cast<double>(x[i])));
        return make(std::move(out), {a.id}, [a](Graph& g, int self) {
            const Tensor<S>& go = g.nodes_[self].grad;
            const Tensor<S>& x2 = g.val(a);
            Tensor<S> da(x2.shape());
            for (std::size_t i = 0; i < da.size(); ++i)
                da[i] = go[i] * static_cast<S>(gelu_tanh_grad(static_cast<double>(x2[i])));
            g.accum(a.id, da);
        });
    }

    Var<S> sigmoid(Var<S> a) {
        Tensor<S> out(val(a).shape());
        const Tensor<S>& x = val(a);
        for (std::size_t i = 0; i < out.size(); ++i)
            out[i] = static_cast<S>(1.0 / (1.0 + std::exp(-static_cast<double>(x[i]))));
        int id = push_op(std::move(out), {a.id});
        nodes_[id].backward = [a, id](Graph& g, int self) {
            const Tensor<S>& go = g.nodes_[self].grad;
            const Tensor<S>& y = g.nodes_[id].value;
            Tensor<S> da(y.shape());
            for (std::size_t i = 0; i < da.size(); ++i)
                da[i] = go[i] * y[i] * (S(1) - y[i]);
            g.accum(a.id, da);
        };
        return {this, id};
    }

    // ---- linear algebra ----

    Var<S> matmul(Var<S> a, Var<S> b) {
        const Tensor<S>& A = val(a);
        const Tensor<S>& B = val(b);
        require(A.rank() == 2 && B.rank() == 2 && A.extent(1) == B.extent(0),
                "matmul: incompatible shapes ", A.shape_str(), " x ", B.shape_str());
        Tensor<S> out = matmul_values(A, B);
        return make(std::move(out), {a.id, b.id}, [a, b](Graph& g, int self) {
            const Tensor<S>& go = g.nodes_[self].grad;
            const Tensor<S>& A2 = g.val(a);
            const Tensor<S>& B2 = g.val(b);
            if (g.wants(a.id)) g.accum(a.id, matmul_nt(go, B2));
            if (g.wants(b.id)) g.accum(b.id, matmul_tn(A2, go));
        });
    }

    Var<S> transpose(Var<S> a) {
        const Tensor<S>& A = val(a);
        require(A.rank() == 2, "transpose: rank-2 only");
        Tensor<S> out({A.extent(1), A.extent(0)});
        for (std::size_t i = 0; i < A.extent(0); ++i)
            for (std::size_t j = 0; j < A.extent(1); ++j) out.at(j, i) = A.at(i, j);
        return make(std::move(out), {a.id}, [a](Graph& g, int self) {
            const Tensor<S>& go = g.nodes_[self].grad;
            Tensor<S> da({go.extent(1), go.extent(0)});
            for (std::size_t i = 0; i < go.extent(0); ++i)
                for (std::size_t j = 0; j < go.extent(1); ++j) da.at(j, i) = go.at(i, j);
            g.accum(a.id, da);
        });
    }

    // y = x W^T + b over the last axis; leading axes flattened to rows.
    Var<S> linear(Var<S> x, Var<S> w, Var<S> b) {
        const Tensor<S>& X = val(x);
        const Tensor<S>& W = val(w);
        const Tensor<S>& Bv = val(b);
        require(X.rank() >= 1, "linear: input rank must be >= 1");
        const std::size_t d_in = X.extent(X.rank() - 1);
        require(W.rank() == 2 && W.extent(1) == d_in,
                "linear: weight ", W.shape_str(), " incompatible with input last extent ", d_in);
        const std::size_t d_out = W.extent(0);
        require(Bv.rank() == 1 && Bv.extent(0) == d_out, "linear: bias extent mismatch");
        const std::size_t rows = X.size() / d_in;

        std::vector<std::size_t> out_shape = X.shape();
        out_shape.back() = d_out;
        Tensor<S> out(out_shape);
        for (std::size_t r = 0; r < rows; ++r) {
            const S* xr = X.data() + r * d_in;
            S* yr = out.data() + r * d_out;
            for (std::size_t o = 0; o < d_out; ++o) {
                const S* wr = W.data() + o * d_in;
                S acc = Bv[o];
                for (std::size_t i = 0; i < d_in; ++i) acc += xr[i] * wr[i];
                yr[o] = acc;
            }
        }
        return make(std::move(out), {x.id, w.id, b.id},
                    [x, w, b, rows, d_in, d_out](Graph& g, int self) {
                        const Tensor<S>& go = g.nodes_[self].grad;
                        const Tensor<S>& X2 = g.val(x);
                        const Tensor<S>& W2 = g.val(w);
                        if (g.wants(x.id)) {
                            Tensor<S> dx(X2.shape());
                            for (std::size_t r = 0; r < rows; ++r) {
                                const S* gr = go.data() + r * d_out;
                                S* dr = dx.data() + r * d_in;
                                for (std::size_t o = 0; o < d_out; ++o) {
                                    const S* wr = W2.data() + o * d_in;
                                    const S gv = gr[o];
                                    for (std::size_t i = 0; i < d_in; ++i) dr[i] += gv * wr[i];
                                }
                            }
                            g.accum(x.id, dx);
                        }
                        if (g.wants(w.id)) {
                            Tensor<S> dw(W2.shape());
                            for (std::size_t r = 0; r < rows; ++r) {
                                const S* gr = go.data() + r * d_out;
                                const S* xr = X2.data() + r * d_in;
                                for (std::size_t o = 0; o < d_out; ++o) {
                                    S* wr = dw.data() + o * d_in;
                                    const S gv = gr[o];
                                    for (std::size_t i = 0; i < d_in; ++i) wr[i] += gv * xr[i];
                                }
                            }
                            g.accum(w.id, dw);
                        }
                        if (g.wants(b.id)) {
                            Tensor<S> db({d_out});
                            for (std::size_t r = 0; r < rows; ++r) {
                                const S* gr = go.data() + r * d_out;
                                for (std::size_t o = 0; o < d_out; ++o) db[o] += gr[o];
                            }
                            g.accum(b.id, db);
                        }
                    });
    }

    // Zero-mean unit-variance over the last axis (eps-stabilized), then affine.
    Var<S> layer_norm(Var<S> x, Var<S> gamma, Var<S> beta, double eps = 1e-5) {
        const Tensor<S>& X = val(x);
        const std::size_t d = X.extent(X.rank() - 1);
        require(val(gamma).size() == d && val(beta).size() == d,
                "layer_norm: affine params must have extent ", d);
        const std::size_t rows = X.size() / d;

        Tensor<S> out(X.shape());
        Tensor<S> inv_std({rows});
        Tensor<S> xhat(X.shape());
        const Tensor<S>& G = val(gamma);
        const Tensor<S>& B = val(beta);
        for (std::size_t r = 0; r < rows; ++r) {
            const S* xr = X.data() + r * d;
            double mean = 0;
            for (std::size_t i = 0; i < d; ++i) mean += static_cast<double>(xr[i]);
            mean /= static_cast<double>(d);
            double var = 0;
            for (std::size_t i = 0; i < d; ++i) {
                const double c = static_cast<double>(xr[i]) - mean;
                var += c * c;
            }
            var /= static_cast<double>(d);
            const double is = 1.0 / std::sqrt(var + eps);
            inv_std[r] = static_cast<S>(is);
            S* hr = xhat.data() + r * d;
            S* yr = out.data() + r * d;
            for (std::size_t i = 0; i < d; ++i) {
                hr[i] = static_cast<S>((static_cast<double>(xr[i]) - mean) * is);
                yr[i] = G[i] * hr[i] + B[i];
            }
        }
        return make(std::move(out), {x.id, gamma.id, beta.id},
                    [x, gamma, beta, rows, d, inv_std, xhat](Graph& g, int self) {
                        const Tensor<S>& go = g.nodes_[self].grad;
                        const Tensor<S>& G2 = g.val(gamma);
                        if (g.wants(x.id)) {
                            Tensor<S> dx(g.val(x).shape());
                            for (std::size_t r = 0; r < rows; ++r) {
                                const S* gr = go.data() + r * d;
                                const S* hr = xhat.data() + r * d;
                                S* dr = dx.data() + r * d;
                                double sum_gy = 0, sum_gyh = 0;
                                for (std::size_t i = 0; i < d; ++i) {
                                    const double gy = static_cast<double>(gr[i]) * G2[i];
                                    sum_gy += gy;
                                    sum_gyh += gy * static_cast<double>(hr[i]);
                                }
                                const double inv_d = 1.0 / static_cast<double>(d);
                                for (std::size_t i = 0; i < d; ++i) {
                                    const double gy = static_cast<double>(gr[i]) * G2[i];
                                    dr[i] = static_cast<S>(
                                        (gy - sum_gy * inv_d -
                                         static_cast<double>(hr[i]) * sum_gyh * inv_d) *
                                        static_cast<double>(inv_std[r]));
                                }
                            }
                            g.accum(x.id, dx);
                        }
                        if (g.wants(gamma.id)) {
                            Tensor<S> dg({d});
                            for (std::size_t r = 0; r < rows; ++r)
                                for (std::size_t i = 0; i < d; ++i)
                                    dg[i] += go.data()[r * d + i] * xhat.data()[r * d + i];
                            g.accum(gamma.id, dg);
                        }
                        if (g.wants(beta.id)) {
                            Tensor<S> db({d});
                            for (std::size_t r = 0; r < rows; ++r)
                                for (std::size_t i = 0; i < d; ++i) db[i] += go.data()[r * d + i];
                            g.accum(beta.id, db);
                        }
                    });
    }

    Var<S> softmax_rows(Var<S> a) {
        const Tensor<S>& X = val(a);
        require(X.rank() == 2, "softmax_rows: rank-2 only");
        const std::size_t rows = X.extent(0), d = X.extent(1);
        Tensor<S> out(X.shape());
        for (std::size_t r = 0; r < rows; ++r) {
            const S* xr = X.data() + r * d;
            S* yr = out.data() + r * d;
            double mx = static_cast<double>(xr[0]);
            for (std::size_t i = 1; i < d; ++i) mx = std::max(mx, static_cast<double>(xr[i]));
            double sum = 0;
            for (std::size_t i = 0; i < d; ++i) {
                const double e = std::exp(static_cast<double>(xr[i]) - mx);
                yr[i] = static_cast<S>(e);
                sum += e;
            }
            const double inv = 1.0 / sum;
            for (std::size_t i = 0; i < d; ++i) yr[i] = static_cast<S>(static_cast<double>(yr[i]) * inv);
        }
        int id = push_op(std::move(out), {a.id});
        nodes_[id].backward = [a, id, rows, d](Graph& g, int self) {
            const Tensor<S>& go = g.nodes_[self].grad;
            const Tensor<S>& P = g.nodes_[id].value;
            Tensor<S> da(P.shape());
            for (std::size_t r = 0; r < rows; ++r) {
                const S* pr = P.data() + r * d;
                const S* gr = go.data() + r * d;
                double dot = 0;
                for (std::size_t i = 0; i < d; ++i)
                    dot += static_cast<double>(pr[i]) * static_cast<double>(gr[i]);
                S* dr = da.data() + r * d;
                for (std::size_t i = 0; i < d; ++i)
                    dr[i] = static_cast<S>(static_cast<double>(pr[i]) *
                                           (static_cast<double>(gr[i]) - dot));
            }
            g.accum(a.id, da);
        };
        return {this, id};
    }

    // ---- reshapes, slices, concatenation, gathers ----

    Var<S> reshape(Var<S> a, std::vector<std::size_t> shape) {
        Tensor<S> out = val(a).reshaped(shape);
        return make(std::move(out), {a.id}, [a](Graph& g, int self) {
            g.accum(a.id, g.nodes_[self].grad.reshaped(g.val(a).shape()));
        });
    }

    Var<S> slice_rows(Var<S> a, std::size_t off, std::size_t len) {
        const Tensor<S>& A = val(a);
        require(A.rank() == 2 && off + len <= A.extent(0), "slice_rows: out of range");
        const std::size_t d = A.extent(1);
        Tensor<S> out({len, d});
        for (std::size_t r = 0; r < len; ++r)
            for (std::size_t j = 0; j < d; ++j) out.at(r, j) = A.at(off + r, j);
        return make(std::move(out), {a.id}, [a, off, len, d](Graph& g, int self) {
            const Tensor<S>& go = g.nodes_[self].grad;
            Tensor<S> da(g.val(a).shape());
            for (std::size_t r = 0; r < len; ++r)
                for (std::size_t j = 0; j < d; ++j) da.at(off + r, j) = go.at(r, j);
            g.accum(a.id, da);
        });
    }

    Var<S> slice_cols(Var<S> a, std::size_t off, std::size_t len) {
        const Tensor<S>& A = val(a);
        require(A.rank() == 2 && off + len <= A.extent(1), "slice_cols: out of range");
        const std::size_t n = A.extent(0);
        Tensor<S> out({n, len});
        for (std::size_t r = 0; r < n; ++r)
            for (std::size_t j = 0; j < len; ++j) out.at(r, j) = A.at(r, off + j);
        return make(std::move(out), {a.id}, [a, off, len, n](Graph& g, int self) {
            const Tensor<S>& go = g.nodes_[self].grad;
            Tensor<S> da(g.val(a).shape());
            for (std::size_t r = 0; r < n; ++r)
                for (std::size_t j = 0; j < len; ++j) da.at(r, off + j) = go.at(r, j);
            g.accum(a.id, da);
        });
    }

    Var<S> concat_rows(const std::vector<Var<S>>& parts) {
        require(!parts.empty(), "concat_rows: empty");
        const std::size_t d = val(parts[0]).extent(1);
        std::size_t total = 0;
        for (auto& p : parts) {
            require(val(p).rank() == 2 && val(p).extent(1) == d, "concat_rows: column mismatch");
            total += val(p).extent(0);
        }
        Tensor<S> out({total, d});
        std::vector<int> ids;
        std::vector<std::size_t> offsets;
        std::size_t off = 0;
        for (auto& p : parts) {
            const Tensor<S>& P = val(p);
            for (std::size_t r = 0; r < P.extent(0); ++r)
                for (std::size_t j = 0; j < d; ++j) out.at(off + r, j) = P.at(r, j);
            ids.push_back(p.id);
            offsets.push_back(off);
            off += P.extent(0);
        }
        return make(std::move(out), ids, [ids, offsets, d](Graph& g, int self) {
            const Tensor<S>& go = g.nodes_[self].grad;
            for (std::size_t k = 0; k < ids.size(); ++k) {
                if (!g.wants(ids[k])) continue;
                const std::size_t rows = g.value(ids[k]).extent(0);
                Tensor<S> dp({rows, d});
                for (std::size_t r = 0; r < rows; ++r)
                    for (std::size_t j = 0; j < d; ++j) dp.at(r, j) = go.at(offsets[k] + r, j);
                g.accum(ids[k], dp);
            }
        });
    }

    Var<S> concat_cols(const std::vector<Var<S>>& parts) {
        require(!parts.empty(), "concat_cols: empty");
        const std::size_t n = val(parts[0]).extent(0);
        std::size_t total = 0;
        for (auto& p : parts) {
            require(val(p).rank() == 2 && val(p).extent(0) == n, "concat_cols: row mismatch");
            total += val(p).extent(1);
        }
        Tensor<S> out({n, total});
        std::vector<int> ids;
        std::vector<std::size_t> offsets;
        std::size_t off = 0;
        for (auto& p : parts) {
            const Tensor<S>& P = val(p);
            for (std::size_t r = 0; r < n; ++r)
                for (std::size_t j = 0; j < P.extent(1); ++j) out.at(r, off + j) = P.at(r, j);
            ids.push_back(p.id);
            offsets.push_back(off);
            off += P.extent(1);
        }
        return make(std::move(out), ids, [ids, offsets, n](Graph& g, int self) {
            const Tensor<S>& go = g.nodes_[self].grad;
            for (std::size_t k = 0; k < ids.size(); ++k) {
                if (!g.wants(ids[k])) continue;
                const std::size_t cols = g.value(ids[k]).extent(1);
                Tensor<S> dp({n, cols});
                for (std::size_t r = 0; r < n; ++r)
                    for (std::size_t j = 0; j < cols; ++j) dp.at(r, j) = go.at(r, offsets[k] + j);
                g.accum(ids[k], dp);
            }
        });
    }

    // Rows of an embedding table selected by index.
    Var<S> gather_rows(Var<S> table, std::vector<std::size_t> ids) {
        const Tensor<S>& T = val(table);
        require(T.rank() == 2, "gather_rows: table must be rank 2");
        const std::size_t d = T.extent(1);
        Tensor<S> out({ids.size(), d});
        for (std::size_t r = 0; r < ids.size(); ++r) {
            require(ids[r] < T.extent(0), "gather_rows: id ", ids[r], " out of range");
            for (std::size_t j = 0; j < d; ++j) out.at(r, j) = T.at(ids[r], j);
        }
        return make(std::move(out), {table.id},
                    [table, ids = std::move(ids), d](Graph& g, int self) {
                        const Tensor<S>& go = g.nodes_[self].grad;
                        Tensor<S> dt(g.val(table).shape());
                        for (std::size_t r = 0; r < ids.size(); ++r)
                            for (std::size_t j = 0; j < d; ++j) dt.at(ids[r], j) += go.at(r, j);
                        g.accum(table.id, dt);
                    });
    }

    // X [n,d] * row [1,d], broadcast over rows.
    Var<S> mul_broadcast_row(Var<S> x, Var<S> row) {
        const Tensor<S>& X = val(x);
        const Tensor<S>& R = val(row);
        require(X.rank() == 2 && R.rank() == 2 && R.extent(0) == 1 && R.extent(1) == X.extent(1),
                "mul_broadcast_row: shapes ", X.shape_str(), " vs ", R.shape_str());
        const std::size_t n = X.extent(0), d = X.extent(1);
        Tensor<S> out(X.shape());
        for (std::size_t r = 0; r < n; ++r)
            for (std::size_t j = 0; j < d; ++j) out.at(r, j) = X.at(r, j) * R.at(0, j);
        return make(std::move(out), {x.id, row.id}, [x, row, n, d](Graph& g, int self) {
            const Tensor<S>& go = g.nodes_[self].grad;
            const Tensor<S>& X2 = g.val(x);
            const Tensor<S>& R2 = g.val(row);
            if (g.wants(x.id)) {
                Tensor<S> dx(X2.shape());
                for (std::size_t r = 0; r < n; ++r)
                    for (std::size_t j = 0; j < d; ++j) dx.at(r, j) = go.at(r, j) * R2.at(0, j);
                g.accum(x.id, dx);
            }
            if (g.wants(row.id)) {
                Tensor<S> dr({1, d});
                for (std::size_t r = 0; r < n; ++r)
                    for (std::size_t j = 0; j < d; ++j) dr.at(0, j) += go.at(r, j) * X2.at(r, j);
                g.accum(row.id, dr);
            }
        });
    }

    // x * s where s is a [1,1] scalar node.
    Var<S> mul_scalar(Var<S> x, Var<S> s) {
        require(val(s).size() == 1, "mul_scalar: scalar operand must have one element");
        const S sv = val(s)[0];
        Tensor<S> out = val(x);
        for (std::size_t i = 0; i < out.size(); ++i) out[i] *= sv;
        return make(std::move(out), {x.id, s.id}, [x, s](Graph& g, int self) {
            const Tensor<S>& go = g.nodes_[self].grad;
            const Tensor<S>& X2 = g.val(x);
            const S sv2 = g.val(s)[0];
            if (g.wants(x.id)) {
                Tensor<S> dx(X2.shape());
                for (std::size_t i = 0; i < dx.size(); ++i) dx[i] = go[i] * sv2;
                g.accum(x.id, dx);
            }
            if (g.wants(s.id)) {
                double acc = 0;
                for (std::size_t i = 0; i < X2.size(); ++i)
                    acc += static_cast<double>(go[i]) * static_cast<double>(X2[i]);
                Tensor<S> ds({1, 1});
                ds[0] = static_cast<S>(acc);
                g.accum(s.id, ds);
            }
        });
    }

    // ---- spatial ----

    // [H,W,3] -> [N_p, p*p*3], row-major block order.
    Var<S> patchify(Var<S> image, std::size_t p) {
        Tensor<S> out = patchify_values(val(image), p);
        const std::size_t h = val(image).extent(0), w = val(image).extent(1);
        return make(std::move(out), {image.id}, [image, p, h, w](Graph& g, int self) {
            const Tensor<S>& go = g.nodes_[self].grad;
            g.accum(image.id, unpatchify_values(go, p, h, w));
        });
    }

    // 2x2 space-to-depth on a row-major [h*w, c] token grid: out row
    // (y,x) = concat of rows (2y,2x),(2y,2x+1),(2y+1,2x),(2y+1,2x+1).
    Var<S> space_to_depth2(Var<S> tokens, std::size_t h, std::size_t w) {
        const Tensor<S>& T = val(tokens);
        require(T.rank() == 2 && T.extent(0) == h * w && h % 2 == 0 && w % 2 == 0,
                "space_to_depth2: grid ", h, "x", w, " invalid for ", T.shape_str());
        const std::size_t c = T.extent(1);
        Tensor<S> out({(h / 2) * (w / 2), 4 * c});
        for (std::size_t y = 0; y < h / 2; ++y)
            for (std::size_t x = 0; x < w / 2; ++x) {
                const std::size_t r = y * (w / 2) + x;
                const std::size_t src[4] = {(2 * y) * w + 2 * x, (2 * y) * w + 2 * x + 1,
                                            (2 * y + 1) * w + 2 * x, (2 * y + 1) * w + 2 * x + 1};
                for (std::size_t k = 0; k < 4; ++k)
                    for (std::size_t j = 0; j < c; ++j) out.at(r, k * c + j) = T.at(src[k], j);
            }
        return make(std::move(out), {tokens.id}, [tokens, h, w, c](Graph& g, int self) {
            const Tensor<S>& go = g.nodes_[self].grad;
            Tensor<S> dt({h * w, c});
            for (std::size_t y = 0; y < h / 2; ++y)
                for (std::size_t x = 0; x < w / 2; ++x) {
                    const std::size_t r = y * (w / 2) + x;
                    const std::size_t src[4] = {(2 * y) * w + 2 * x, (2 * y) * w + 2 * x + 1,
                                                (2 * y + 1) * w + 2 * x,
                                                (2 * y + 1) * w + 2 * x + 1};
                    for (std::size_t k = 0; k < 4; ++k)
                        for (std::size_t j = 0; j < c; ++j) dt.at(src[k], j) = go.at(r, k * c + j);
                }
            g.accum(tokens.id, dt);
        });
    }

    // Single-channel bilinear resize, align-corners-false, edge-clamped.
    Var<S> bilinear_resize(Var<S> m, std::size_t out_h, std::size_t out_w) {
        Tensor<S> out = bilinear_resize_values(val(m), out_h, out_w);
        const std::size_t h = val(m).extent(0), w = val(m).extent(1);
        return make(std::move(out), {m.id}, [m, out_h, out_w, h, w](Graph& g, int self) {
            const Tensor<S>& go = g.nodes_[self].grad;
            Tensor<S> dm({h, w});
            for (std::size_t y = 0; y < out_h; ++y) {
                const auto ty = detail::lerp_tap(y, out_h, h);
                for (std::size_t x = 0; x < out_w; ++x) {
                    const auto tx = detail::lerp_tap(x, out_w, w);
                    const double gv = static_cast<double>(go.at(y, x));
                    dm.at(ty.lo, tx.lo) += static_cast<S>(gv * (1 - ty.w_hi) * (1 - tx.w_hi));
                    dm.at(ty.lo, tx.hi) += static_cast<S>(gv * (1 - ty.w_hi) * tx.w_hi);
                    dm.at(ty.hi, tx.lo) += static_cast<S>(gv * ty.w_hi * (1 - tx.w_hi));
                    dm.at(ty.hi, tx.hi) += static_cast<S>(gv * ty.w_hi * tx.w_hi);
                }
            }
            g.accum(m.id, dm);
        });
    }

    // Sum of horizontal and vertical absolute adjacent-pixel differences,
    // zero-padded at the trailing edge so the output keeps shape [H,W].
    Var<S> gradient_map(Var<S> m) {
        const Tensor<S>& M = val(m);
        require(M.rank() == 2, "gradient_map: expected [H,W]");
        const std::size_t h = M.extent(0), w = M.extent(1);
        Tensor<S> out({h, w});
        for (std::size_t i = 0; i < h; ++i)
            for (std::size_t j = 0; j < w; ++j) {
                S v = S(0);
                if (j + 1 < w) v += std::abs(M.at(i, j + 1) - M.at(i, j));
                if (i + 1 < h) v += std::abs(M.at(i + 1, j) - M.at(i, j));
                out.at(i, j) = v;
            }
        return make(std::move(out), {m.id}, [m, h, w](Graph& g, int self) {
            const Tensor<S>& go = g.nodes_[self].grad;
            const Tensor<S>& M2 = g.val(m);
            Tensor<S> dm({h, w});
            auto sgn = [](S x) { return x > S(0) ? S(1) : (x < S(0) ? S(-1) : S(0)); };
            for (std::size_t i = 0; i < h; ++i)
                for (std::size_t j = 0; j < w; ++j) {
                    const S gv = go.at(i, j);
                    if (j + 1 < w) {
                        const S s = sgn(M2.at(i, j + 1) - M2.at(i, j));
                        dm.at(i, j + 1) += gv * s;
                        dm.at(i, j) -= gv * s;
                    }
                    if (i + 1 < h) {
                        const S s = sgn(M2.at(i + 1, j) - M2.at(i, j));
                        dm.at(i + 1, j) += gv * s;
                        dm.at(i, j) -= gv * s;
                    }
                }
            g.accum(m.id, dm);
        });
    }

    // ---- reductions & scalar probes ----

    Var<S> sum_all(Var<S> a) {
        const Tensor<S>& A = val(a);
        double s = 0;
        for (std::size_t i = 0; i < A.size(); ++i) s += static_cast<double>(A[i]);
        Tensor<S> out({1, 1});
        out[0] = static_cast<S>(s);
        return make(std::move(out), {a.id}, [a](Graph& g, int self) {
            const S gv = g.nodes_[self].grad[0];
            Tensor<S> da(g.val(a).shape());
            for (std::size_t i = 0; i < da.size(); ++i) da[i] = gv;
            g.accum(a.id, da);
        });
    }

    Var<S> mean_all(Var<S> a) {
        const std::size_t n = val(a).size();
        return scale(sum_all(a), 1.0 / static_cast<double>(n));
    }

    // Scalar probe <a, weights> used by gradient checks.
    Var<S> dot_const(Var<S> a, Tensor<S> weights) {
        const Tensor<S>& A = val(a);
        require(A.size() == weights.size(), "dot_const: size mismatch");
        double s = 0;
        for (std::size_t i = 0; i < A.size(); ++i)
            s += static_cast<double>(A[i]) * static_cast<double>(weights[i]);
        Tensor<S> out({1, 1});
        out[0] = static_cast<S>(s);
        return make(std::move(out), {a.id}, [a, weights = std::move(weights)](Graph& g, int self) {
            const S gv = g.nodes_[self].grad[0];
            Tensor<S> da(g.val(a).shape());
            for (std::size_t i = 0; i < da.size(); ++i) da[i] = gv * weights[i];
            g.accum(a.id, da);
        });
    }

    // Elementwise binary cross-entropy with logits against a {0,1} target,
    // log-sum-exp stabilized.
    Var<S> bce_with_logits(Var<S> logits, const Tensor<S>& target) {
        const Tensor<S>& X = val(logits);
        require(X.same_shape(target), "bce_with_logits: shape mismatch");
        for (std::size_t i = 0; i < target.size(); ++i)
            require(target[i] == S(0) || target[i] == S(1),
                    "bce_with_logits: target values must be 0 or 1");
        Tensor<S> out(X.shape());
        for (std::size_t i = 0; i < X.size(); ++i) {
            const double x = static_cast<double>(X[i]);
            const double t = static_cast<double>(target[i]);
            out[i] = static_cast<S>(std::max(x, 0.0) - x * t + std::log1p(std::exp(-std::abs(x))));
        }
        return make(std::move(out), {logits.id}, [logits, target](Graph& g, int self) {
            const Tensor<S>& go = g.nodes_[self].grad;
            const Tensor<S>& X2 = g.val(logits);
            Tensor<S> dx(X2.shape());
            for (std::size_t i = 0; i < dx.size(); ++i) {
                const double sig = 1.0 / (1.0 + std::exp(-static_cast<double>(X2[i])));
                dx[i] = go[i] * static_cast<S>(sig - static_cast<double>(target[i]));
            }
            g.accum(logits.id, dx);
        });
    }

    // ---- backward ----

    // Seeds `out` with d(probe)/d(out) = seed and propagates to all leaves.
    void backward(Var<S> out, Tensor<S> seed) {
        require(seed.same_shape(nodes_[out.id].value), "backward: seed shape mismatch");
        ensure_grad(out.id);
        nodes_[out.id].grad = std::move(seed);
        for (int i = out.id; i >= 0; --i) {
            Node& n = nodes_[i];
            if (!n.grad_set || !n.requires_grad || !n.backward) continue;
            n.backward(*this, i);
        }
        param_grads_.clear();
        for (auto& n : nodes_) {
            if (!n.bound || !n.grad_set) continue;
            auto [it, inserted] = param_grads_.try_emplace(n.bound, n.grad);
            if (!inserted) {
                Tensor<S>& acc = it->second;
                for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += n.grad[i];
            }
        }
    }

    // Scalar convenience: seed = 1.
    void backward(Var<S> out) {
        require(nodes_[out.id].value.size() == 1, "backward: output is not scalar");
        backward(out, Tensor<S>::full(nodes_[out.id].value.shape(), S(1)));
    }

    // Gradient w.r.t. an input/param leaf created on this graph.
    const Tensor<S>& grad(Var<S> leaf) {
        ensure_grad(leaf.id);
        return nodes_[leaf.id].grad;
    }

    // Accumulated gradient for bound parameter storage; zeros if untouched.
    Tensor<S> grad_of(const Tensor<S>* storage) const {
        auto it = param_grads_.find(storage);
        if (it != param_grads_.end()) return it->second;
        return Tensor<S>(storage->shape());
    }

    bool has_grad(const Tensor<S>* storage) const { return param_grads_.count(storage) > 0; }

    static double gelu_tanh(double x) {
        constexpr double k = 0.7978845608028654; // sqrt(2/pi)
        const double u = k * (x + 0.044715 * x * x * x);
        return 0.5 * x * (1.0 + std::tanh(u));
    }

    static double gelu_tanh_grad(double x) {
        constexpr double k = 0.7978845608028654;
        const double u = k * (x + 0.044715 * x * x * x);
        const double t = std::tanh(u);
        const double du = k * (1.0 + 3.0 * 0.044715 * x * x);
        return 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * du;
    }

private:
    std::vector<Node> nodes_;
    std::unordered_map<const Tensor<S>*, Tensor<S>> param_grads_;

    const Tensor<S>& val(Var<S> v) const { return nodes_[v.id].value; }

    bool wants(int id) const { return nodes_[id].requires_grad; }

    void ensure_grad(int id) {
        Node& n = nodes_[id];
        if (!n.grad_set) {
            n.grad = Tensor<S>(n.value.shape());
            n.grad_set = true;
        }
    }

    void accum(int id, const Tensor<S>& g) {
        if (!wants(id)) return;
        ensure_grad(id);
        Tensor<S>& acc = nodes_[id].grad;
        for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += g[i];
    }

    void accum_scaled(int id, const Tensor<S>& g, S c) {
        if (!wants(id)) return;
        ensure_grad(id);
        Tensor<S>& acc = nodes_[id].grad;
        for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += c * g[i];
    }

    int push(Tensor<S> value, BackFn fn, bool requires_grad) {
        Node n;
        n.value = std::move(value);
        n.backward = std::move(fn);
        n.requires_grad = requires_grad;
        nodes_.push_back(std::move(n));
        return static_cast<int>(nodes_.size()) - 1;
    }

    int push_op(Tensor<S> value, std::initializer_list<int> parents) {
        bool rg = false;
        for (int p : parents) rg = rg || nodes_[p].requires_grad;
        return push(std::move(value), nullptr, rg);
    }

    Var<S> make(Tensor<S> value, std::initializer_list<int> parents, BackFn fn) {
        int id = push_op(std::move(value), parents);
        if (nodes_[id].requires_grad) nodes_[id].backward = std::move(fn);
        return {this, id};
    }

    Var<S> make(Tensor<S> value, const std::vector<int>& parents, BackFn fn) {
        bool rg = false;
        for (int p : parents) rg = rg || nodes_[p].requires_grad;
        int id = push(std::move(value), nullptr, rg);
        if (rg) nodes_[id].backward = std::move(fn);
        return {this, id};
    }

    static Tensor<S> matmul_values(const Tensor<S>& A, const Tensor<S>& B) {
        const std::size_t m = A.extent(0), k = A.extent(1), n = B.extent(1);
        Tensor<S> out({m, n});
        for (std::size_t i = 0; i < m; ++i) {
            const S* ar = A.data() + i * k;
            S* orow = out.data() + i * n;
            for (std::size_t kk = 0; kk < k; ++kk) {
                const S a = ar[kk];
                const S* br = B.data() + kk * n;
                for (std::size_t j = 0; j < n; ++j) orow[j] += a * br[j];
            }
        }
        return out;
    }

    // A [m,k] * B^T where B is [n,k]  -> [m,n]
    static Tensor<S> matmul_nt(const Tensor<S>& A, const Tensor<S>& B) {
        const std::size_t m = A.extent(0), k = A.extent(1), n = B.extent(0);
        Tensor<S> out({m, n});
        for (std::size_t i = 0; i < m; ++i) {
            const S* ar = A.data() + i * k;
            S* orow = out.data() + i * n;
            for (std::size_t j = 0; j < n; ++j) {
                const S* br = B.data() + j * k;
                S acc = S(0);
                for (std::size_t kk = 0; kk < k; ++kk) acc += ar[kk] * br[kk];
                orow[j] = acc;
            }
        }
        return out;
    }

    // A^T * B where A is [k,m], B is [k,n] -> [m,n]
    static Tensor<S> matmul_tn(const Tensor<S>& A, const Tensor<S>& B) {
        const std::size_t k = A.extent(0), m = A.extent(1), n = B.extent(1);
        Tensor<S> out({m, n});
        for (std::size_t kk = 0; kk < k; ++kk) {
            const S* ar = A.data() + kk * m;
            const S* br = B.data() + kk * n;
            for (std::size_t i = 0; i < m; ++i) {
                const S a = ar[i];
                S* orow = out.data() + i * n;
                for (std::size_t j = 0; j < n; ++j) orow[j] += a * br[j];
            }
        }
        return out;
    }

    void check_same_shape(Var<S> a, Var<S> b, const char* op) const {
        require(val(a).same_shape(val(b)), op, ": shape mismatch ", val(a).shape_str(), " vs ",
                val(b).shape_str());
    }
};

} // namespace rs2
