#pragma once

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "rs2/graph.hpp"
#include "rs2/rng.hpp"
#include "rs2/tensor.hpp"

namespace rs2 {

// Named handle into a module's parameter storage. Names are dotted paths
// ("bhfm.layer0.text_in.w") and double as checkpoint keys and LR-group keys.
template <class S>
struct ParamRef {
    std::string name;
    Tensor<S>* tensor;
};

template <class S>
using ParamList = std::vector<ParamRef<S>>;

template <class S>
class ParamReg {
public:
    explicit ParamReg(ParamList<S>& out, std::string prefix = "")
        : out_(&out), prefix_(std::move(prefix)) {}

    ParamReg scoped(const std::string& name) const {
        return ParamReg(*out_, prefix_.empty() ? name : prefix_ + "." + name);
    }

    void add(const std::string& name, Tensor<S>& t) {
        out_->push_back({prefix_.empty() ? name : prefix_ + "." + name, &t});
    }

private:
    ParamList<S>* out_;
    std::string prefix_;
};

// ---- parameter bundles ----

template <class S>
struct LinearParams {
    Tensor<S> w; // [d_out, d_in]
    Tensor<S> b; // [d_out]

    LinearParams() = default;
    LinearParams(std::size_t d_out, std::size_t d_in, Rng& rng) {
        const double bound = 1.0 / std::sqrt(static_cast<double>(d_in));
        w = Tensor<S>::uniform(rng, {d_out, d_in}, -bound, bound);
        b = Tensor<S>({d_out});
    }

    void reg(ParamReg<S> r) {
        r.add("w", w);
        r.add("b", b);
    }

    Var<S> operator()(Graph<S>& g, Var<S> x) const {
        return g.linear(x, g.param(w), g.param(b));
    }
};

template <class S>
struct LayerNormParams {
    Tensor<S> gamma;
    Tensor<S> beta;

    LayerNormParams() = default;
    explicit LayerNormParams(std::size_t d)
        : gamma(Tensor<S>::full({d}, S(1))), beta(Tensor<S>({d})) {}

    void reg(ParamReg<S> r) {
        r.add("gamma", gamma);
        r.add("beta", beta);
    }

    Var<S> operator()(Graph<S>& g, Var<S> x) const {
        return g.layer_norm(x, g.param(gamma), g.param(beta));
    }
};

template <class S>
struct MlpParams {
    LinearParams<S> fc1;
    LinearParams<S> fc2;

    MlpParams() = default;
    MlpParams(std::size_t d, std::size_t hidden, Rng& rng)
        : fc1(hidden, d, rng), fc2(d, hidden, rng) {}

    void reg(ParamReg<S> r) {
        fc1.reg(r.scoped("fc1"));
        fc2.reg(r.scoped("fc2"));
    }

    Var<S> operator()(Graph<S>& g, Var<S> x) const { return fc2(g, g.gelu(fc1(g, x))); }
};

// Multi-head cross-attention: queries from x [n, d], keys/values from y
// [m, d_kv] projected into the query space. Softmax over keys per query,
// scaled by 1/sqrt(head_dim). With x == y this is self-attention.
template <class S>
struct AttentionParams {
    LinearParams<S> q, k, v, o;
    std::size_t heads = 1;

    AttentionParams() = default;
    AttentionParams(std::size_t d, std::size_t n_heads, Rng& rng)
        : AttentionParams(d, d, n_heads, rng) {}
    AttentionParams(std::size_t d, std::size_t d_kv, std::size_t n_heads, Rng& rng)
        : q(d, d, rng), k(d, d_kv, rng), v(d, d_kv, rng), o(d, d, rng), heads(n_heads) {
        require(d % n_heads == 0, "attention: dim ", d, " not divisible by ", n_heads, " heads");
    }

    void reg(ParamReg<S> r) {
        q.reg(r.scoped("q"));
        k.reg(r.scoped("k"));
        v.reg(r.scoped("v"));
        o.reg(r.scoped("o"));
    }

    Var<S> operator()(Graph<S>& g, Var<S> x, Var<S> y) const {
        const std::size_t d = q.w.extent(0);
        const std::size_t hd = d / heads;
        Var<S> Q = q(g, x);
        Var<S> K = k(g, y);
        Var<S> V = v(g, y);
        std::vector<Var<S>> outs;
        outs.reserve(heads);
        for (std::size_t h = 0; h < heads; ++h) {
            Var<S> Qh = g.slice_cols(Q, h * hd, hd);
            Var<S> Kh = g.slice_cols(K, h * hd, hd);
            Var<S> Vh = g.slice_cols(V, h * hd, hd);
            Var<S> logits = g.scale(g.matmul(Qh, g.transpose(Kh)),
                                    1.0 / std::sqrt(static_cast<double>(hd)));
            outs.push_back(g.matmul(g.softmax_rows(logits), Vh));
        }
        return o(g, g.concat_cols(outs));
    }
};

// Pre-norm transformer encoder block:
//   x <- x + MHSA(LN(x));  x <- x + MLP(LN(x))
template <class S>
struct TransformerBlock {
    LayerNormParams<S> ln1, ln2;
    AttentionParams<S> attn;
    MlpParams<S> mlp;

    TransformerBlock() = default;
    TransformerBlock(std::size_t d, std::size_t heads, std::size_t mlp_hidden, Rng& rng)
        : ln1(d), ln2(d), attn(d, heads, rng), mlp(d, mlp_hidden, rng) {}

    void reg(ParamReg<S> r) {
        ln1.reg(r.scoped("ln1"));
        ln2.reg(r.scoped("ln2"));
        attn.reg(r.scoped("attn"));
        mlp.reg(r.scoped("mlp"));
    }

    Var<S> operator()(Graph<S>& g, Var<S> x) const {
        Var<S> h = ln1(g, x);
        x = g.add(x, attn(g, h, h));
        return g.add(x, mlp(g, ln2(g, x)));
    }
};

} // namespace rs2
