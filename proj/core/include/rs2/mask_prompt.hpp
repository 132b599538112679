#pragma once

#include "rs2/nn.hpp"

namespace rs2 {

struct MpgConfig {
    bool enabled = true;
    bool use_mhca = true;
    std::size_t heads = 4;
};

// Pseudo-mask generator: the multimodal class token queries the visual
// embeddings, gates itself with the response, and is broadcast-multiplied
// over the patch grid; a small MLP maps each D-channel cell to one logit.
template <class S>
struct Mpg {
    MpgConfig cfg;
    AttentionParams<S> attn;  // query V_cls, kv V (dim D)
    LinearParams<S> cls_proj; // D -> D
    LinearParams<S> mask_fc1; // D -> D/2 (GeLU after)
    LinearParams<S> mask_fc2; // D/2 -> 1

    Mpg() = default;
    Mpg(const MpgConfig& c, std::size_t dim, Rng& rng) : cfg(c) {
        require(dim % 2 == 0, "mpg: dim ", dim, " must be even");
        require(dim % cfg.heads == 0, "mpg: dim ", dim, " not divisible by ", cfg.heads,
                " heads");
        attn = AttentionParams<S>(dim, cfg.heads, rng);
        cls_proj = LinearParams<S>(dim, dim, rng);
        mask_fc1 = LinearParams<S>(dim / 2, dim, rng);
        mask_fc2 = LinearParams<S>(1, dim / 2, rng);
    }

    void reg(ParamReg<S> r) {
        attn.reg(r.scoped("attn"));
        cls_proj.reg(r.scoped("cls_proj"));
        mask_fc1.reg(r.scoped("mask_fc1"));
        mask_fc2.reg(r.scoped("mask_fc2"));
    }

    // Core pipeline with the attention response supplied by the caller;
    // tests use this to pin the gate to a known value.
    Var<S> generate_with_attn(Graph<S>& g, Var<S> v_cls, Var<S> v, Var<S> attn_out,
                              std::size_t gh, std::size_t gw) const {
        Var<S> gated = g.mul(v_cls, attn_out);
        return finish(g, gated, v, gh, gw);
    }

    Var<S> generate(Graph<S>& g, Var<S> v_cls, Var<S> v, std::size_t gh, std::size_t gw) const {
        if (cfg.use_mhca) return generate_with_attn(g, v_cls, v, attn(g, v_cls, v), gh, gw);
        return finish(g, v_cls, v, gh, gw);
    }

private:
    Var<S> finish(Graph<S>& g, Var<S> cls_eff, Var<S> v, std::size_t gh, std::size_t gw) const {
        require(v.shape().size() == 2 && v.shape()[0] == gh * gw,
                "mpg: V rows ", v.val().shape_str(), " do not factor into grid ", gh, "x", gw);
        Var<S> b = cls_proj(g, cls_eff);                // [1, D]
        Var<S> cells = g.mul_broadcast_row(v, b);       // [N_p, D]
        Var<S> logits = mask_fc2(g, g.gelu(mask_fc1(g, cells))); // [N_p, 1]
        return g.reshape(logits, {gh, gw});
    }
};

// Bilinear adjustment of the pseudo-mask onto the decoder feature grid.
template <class S>
Var<S> resize_prompt(Graph<S>& g, Var<S> m, std::size_t h, std::size_t w) {
    require(h >= 1 && w >= 1, "resize_prompt: target extents must be >= 1");
    return g.bilinear_resize(m, h, w);
}

} // namespace rs2
