#pragma once

#include <vector>

#include "rs2/nn.hpp"

namespace rs2 {

struct HeadConfig {
    std::size_t rounds = 2;
    std::size_t heads = 4;

    void validate() const { require(rounds >= 1, "head.rounds must be >= 1"); }
};

template <class S>
struct PromptBundle {
    Var<S> sparse; // [2, C]: V_cls-derived token, then the learned token
    Var<S> dense;  // [grid^2, C]
};

// Prompt encoder + mask decoder. The sparse prompt is a token MLP of V_cls
// next to a zero-initialized learned token; the dense prompt is the resized
// pseudo-mask lifted to C channels. Decoding alternates cross-attention
// between the sparse tokens and the feature map, then the learned (object)
// token scores each pixel by dot product and the grid is upsampled x16.
template <class S>
struct Sam2Head {
    HeadConfig cfg;
    LinearParams<S> tok_fc1; // D -> C (GeLU after)
    LinearParams<S> tok_fc2; // C -> C
    Tensor<S> sparse_token;  // [1, C], zero-initialized
    LinearParams<S> dense_proj; // 1 -> C
    Tensor<S> grid_pos;         // [grid^2, C] decode-grid position table
    // Pre-norm cross-attention rounds: token and feature streams are
    // normalized going into each attention so repeated residual updates
    // cannot blow up the dot-product scale.
    struct Round {
        LayerNormParams<S> ln_tt;         // token self-attention input
        AttentionParams<S> t2t;           // tokens exchange with each other
        LayerNormParams<S> ln_sq, ln_skv; // sparse query / feature key-value
        AttentionParams<S> t2f;           // sparse queries vs features
        LayerNormParams<S> ln_fq, ln_fkv; // feature query / sparse key-value
        AttentionParams<S> f2t;           // feature queries vs sparse
    };
    std::vector<Round> rounds;
    LayerNormParams<S> ln_pix, ln_obj;
    LinearParams<S> pix_proj; // C -> C
    LinearParams<S> obj_proj; // C -> C
    LinearParams<S> out_proj; // 1 -> 1, after upsampling

    Sam2Head() = default;
    Sam2Head(const HeadConfig& c, std::size_t union_dim, std::size_t enc_dim, std::size_t grid,
             Rng& rng)
        : cfg(c) {
        cfg.validate();
        require(enc_dim % cfg.heads == 0, "head: dim ", enc_dim, " not divisible by ", cfg.heads,
                " heads");
        tok_fc1 = LinearParams<S>(enc_dim, union_dim, rng);
        tok_fc2 = LinearParams<S>(enc_dim, enc_dim, rng);
        sparse_token = Tensor<S>({1, enc_dim});
        dense_proj = LinearParams<S>(enc_dim, 1, rng);
        const double emb = 1.0 / std::sqrt(static_cast<double>(enc_dim));
        grid_pos = Tensor<S>::uniform(rng, {grid * grid, enc_dim}, -emb, emb);
        rounds.reserve(cfg.rounds);
        for (std::size_t i = 0; i < cfg.rounds; ++i)
            rounds.push_back({LayerNormParams<S>(enc_dim),
                              AttentionParams<S>(enc_dim, cfg.heads, rng),
                              LayerNormParams<S>(enc_dim), LayerNormParams<S>(enc_dim),
                              AttentionParams<S>(enc_dim, cfg.heads, rng),
                              LayerNormParams<S>(enc_dim), LayerNormParams<S>(enc_dim),
                              AttentionParams<S>(enc_dim, cfg.heads, rng)});
        ln_pix = LayerNormParams<S>(enc_dim);
        ln_obj = LayerNormParams<S>(enc_dim);
        pix_proj = LinearParams<S>(enc_dim, enc_dim, rng);
        obj_proj = LinearParams<S>(enc_dim, enc_dim, rng);
        out_proj = LinearParams<S>(1, 1, rng);
        // The output calibration starts as the identity instead of a random
        // scalar: it multiplies every upstream gradient, and a small or
        // collapsing draw here silences the whole decoder.
        out_proj.w[0] = S(1);
    }

    void reg(ParamReg<S> r) {
        tok_fc1.reg(r.scoped("tok_fc1"));
        tok_fc2.reg(r.scoped("tok_fc2"));
        r.add("sparse_token", sparse_token);
        dense_proj.reg(r.scoped("dense_proj"));
        r.add("grid_pos", grid_pos);
        for (std::size_t i = 0; i < rounds.size(); ++i) {
            auto rr = r.scoped("round" + std::to_string(i));
            rounds[i].ln_tt.reg(rr.scoped("ln_tt"));
            rounds[i].t2t.reg(rr.scoped("t2t"));
            rounds[i].ln_sq.reg(rr.scoped("ln_sq"));
            rounds[i].ln_skv.reg(rr.scoped("ln_skv"));
            rounds[i].t2f.reg(rr.scoped("t2f"));
            rounds[i].ln_fq.reg(rr.scoped("ln_fq"));
            rounds[i].ln_fkv.reg(rr.scoped("ln_fkv"));
            rounds[i].f2t.reg(rr.scoped("f2t"));
        }
        ln_pix.reg(r.scoped("ln_pix"));
        ln_obj.reg(r.scoped("ln_obj"));
        pix_proj.reg(r.scoped("pix_proj"));
        obj_proj.reg(r.scoped("obj_proj"));
        out_proj.reg(r.scoped("out_proj"));
    }

    PromptBundle<S> encode_prompts(Graph<S>& g, Var<S> v_cls, Var<S> dense) const {
        require(dense.shape().size() == 2, "head: dense prompt must be a [h,w] grid");
        const std::size_t n = dense.shape()[0] * dense.shape()[1];
        Var<S> tok = tok_fc2(g, g.gelu(tok_fc1(g, v_cls)));
        Var<S> sparse = g.concat_rows({tok, g.param(sparse_token)});
        Var<S> dense_tok = dense_proj(g, g.reshape(dense, {n, 1}));
        return {sparse, dense_tok};
    }

    Var<S> decode_mask(Graph<S>& g, Var<S> f_en, const PromptBundle<S>& prompts, std::size_t gh,
                       std::size_t gw, std::size_t out_h, std::size_t out_w) const {
        require(f_en.shape().size() == 2 && f_en.shape()[0] == gh * gw,
                "head: features ", f_en.val().shape_str(), " do not cover grid ", gh, "x", gw);
        require(f_en.val().same_shape(prompts.dense.val()),
                "head: dense prompt grid mismatches features");
        require(grid_pos.extent(0) == gh * gw, "head: built for grid ", grid_pos.extent(0),
                ", asked to decode ", gh * gw);
        // mask prior and per-cell position are both added to the features
        Var<S> feat = g.add(g.add(f_en, prompts.dense), g.param(grid_pos));
        Var<S> sparse = prompts.sparse;
        for (const auto& r : rounds) {
            Var<S> tn = r.ln_tt(g, sparse);
            sparse = g.add(sparse, r.t2t(g, tn, tn));
            sparse = g.add(sparse, r.t2f(g, r.ln_sq(g, sparse), r.ln_skv(g, feat)));
            feat = g.add(feat, r.f2t(g, r.ln_fq(g, feat), r.ln_fkv(g, sparse)));
        }
        // learned token -> object query
        Var<S> obj = obj_proj(g, ln_obj(g, g.slice_rows(sparse, 1, 1)));
        Var<S> scores = g.matmul(pix_proj(g, ln_pix(g, feat)), g.transpose(obj)); // [gh*gw, 1]
        // Scores are centered across the grid before upsampling, so the global
        // operating point lives in the output bias alone and the score pathway
        // only carries where the object is, not how much of the image is
        // foreground. Without this the whole decoder chases the foreground
        // rate and settles into the all-background prediction.
        Tensor<S> ones_t({gh * gw, 1});
        for (std::size_t i = 0; i < ones_t.size(); ++i) ones_t[i] = S(1);
        scores = g.sub(scores, g.mul_scalar(g.constant(std::move(ones_t)), g.mean_all(scores)));
        Var<S> up = g.bilinear_resize(g.reshape(scores, {gh, gw}), out_h, out_w);
        Var<S> out = out_proj(g, g.reshape(up, {out_h * out_w, 1}));
        return g.reshape(out, {out_h, out_w});
    }
};

} // namespace rs2
