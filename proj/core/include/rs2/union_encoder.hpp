#pragma once

#include <cstddef>
#include <vector>

#include "rs2/nn.hpp"
#include "rs2/vocab.hpp"

namespace rs2 {

struct UnionConfig {
    std::size_t image = 64;   // H_u = W_u
    std::size_t patch = 8;
    std::size_t dim = 32;     // D
    std::size_t depth = 2;
    std::size_t heads = 4;
    std::size_t mlp_ratio = 2;
    std::size_t max_text = 12; // max token count incl. CLS/EOS
    std::size_t vocab = 0;

    std::size_t grid() const { return image / patch; }
    std::size_t n_patches() const { return grid() * grid(); }

    void validate() const {
        require(patch > 0 && image % patch == 0, "union: patch ", patch, " must divide image ",
                image);
        require(heads > 0 && dim % heads == 0, "union: dim ", dim, " not divisible by ", heads,
                " heads");
        require(depth > 0 && max_text >= 3 && vocab > Vocab::kUnk, "union: degenerate config");
    }
};

// Joint image+text embeddings produced by one pass over the union sequence.
template <class S>
struct UnionOut {
    Var<S> v_cls; // [1, D]
    Var<S> v;     // [N_p, D]
    Var<S> t;     // [N_t, D]
};

// Single transformer over the concatenated sequence
// [visual class token; image patches; text tokens], so attention mixes
// modalities at every layer. The final representation is split back into
// (V_cls, V, T).
template <class S>
struct UnionEncoder {
    UnionConfig cfg;
    LinearParams<S> patch_embed;        // p*p*3 -> D
    Tensor<S> vis_cls;                  // [1, D]
    Tensor<S> vis_pos;                  // [N_p + 1, D]
    Tensor<S> tok_embed;                // [vocab, D]
    Tensor<S> txt_pos;                  // [max_text, D]
    std::vector<TransformerBlock<S>> blocks;
    LayerNormParams<S> ln_f;

    UnionEncoder() = default;
    UnionEncoder(const UnionConfig& c, Rng& rng) : cfg(c) {
        cfg.validate();
        const double emb = 1.0 / std::sqrt(static_cast<double>(cfg.dim));
        patch_embed = LinearParams<S>(cfg.dim, cfg.patch * cfg.patch * 3, rng);
        vis_cls = Tensor<S>::uniform(rng, {1, cfg.dim}, -emb, emb);
        vis_pos = Tensor<S>::uniform(rng, {cfg.n_patches() + 1, cfg.dim}, -emb, emb);
        tok_embed = Tensor<S>::uniform(rng, {cfg.vocab, cfg.dim}, -emb, emb);
        txt_pos = Tensor<S>::uniform(rng, {cfg.max_text, cfg.dim}, -emb, emb);
        blocks.reserve(cfg.depth);
        for (std::size_t i = 0; i < cfg.depth; ++i)
            blocks.emplace_back(cfg.dim, cfg.heads, cfg.mlp_ratio * cfg.dim, rng);
        ln_f = LayerNormParams<S>(cfg.dim);
    }

    void reg(ParamReg<S> r) {
        patch_embed.reg(r.scoped("patch_embed"));
        r.add("vis_cls", vis_cls);
        r.add("vis_pos", vis_pos);
        r.add("tok_embed", tok_embed);
        r.add("txt_pos", txt_pos);
        for (std::size_t i = 0; i < blocks.size(); ++i)
            blocks[i].reg(r.scoped("block" + std::to_string(i)));
        ln_f.reg(r.scoped("ln_f"));
    }

    UnionOut<S> operator()(Graph<S>& g, Var<S> image, const std::vector<std::size_t>& ids) const {
        const auto& sh = image.shape();
        require(sh.size() == 3 && sh[0] == cfg.image && sh[1] == cfg.image && sh[2] == 3,
                "union: image must be [", cfg.image, ",", cfg.image, ",3], got ",
                image.val().shape_str());
        require(ids.size() >= 3 && ids.size() <= cfg.max_text, "union: token count ", ids.size(),
                " outside [3, ", cfg.max_text, "]");
        require(ids.front() == Vocab::kCls && ids.back() == Vocab::kEos,
                "union: sequence must be CLS ... EOS");

        const std::size_t n_p = cfg.n_patches();
        const std::size_t n_t = ids.size();

        Var<S> patches = patch_embed(g, g.patchify(image, cfg.patch)); // [N_p, D]
        Var<S> vis = g.concat_rows({g.param(vis_cls), patches});       // [N_p+1, D]
        vis = g.add(vis, g.param(vis_pos));

        Var<S> txt = g.gather_rows(g.param(tok_embed), ids);
        Var<S> pos_t = g.slice_rows(g.param(txt_pos), 0, n_t);
        txt = g.add(txt, pos_t);

        Var<S> u = g.concat_rows({vis, txt}); // [N_p + 1 + N_t, D]
        for (const auto& b : blocks) u = b(g, u);
        u = ln_f(g, u);

        return {g.slice_rows(u, 0, 1), g.slice_rows(u, 1, n_p), g.slice_rows(u, 1 + n_p, n_t)};
    }
};

} // namespace rs2
