#pragma once

#include <optional>
#include <vector>

#include "rs2/image_encoder.hpp"
#include "rs2/losses.hpp"
#include "rs2/mask_prompt.hpp"
#include "rs2/sam_head.hpp"
#include "rs2/union_encoder.hpp"

namespace rs2 {

struct ModelConfig {
    UnionConfig union_;
    EncoderConfig enc;
    FusionConfig fusion;
    MpgConfig mpg;
    HeadConfig head;
    LossWeights loss;

    void validate() const {
        union_.validate();
        enc.validate();
        fusion.validate();
        head.validate();
        loss.validate();
        for (std::size_t w : enc.widths)
            require((w / 2) % fusion.heads == 0, "bhfm.heads ", fusion.heads,
                    " must divide stage bottleneck ", w / 2);
        require(enc.dim % fusion.heads == 0, "bhfm.heads must divide enc.dim for guidance");
        require(union_.dim % mpg.heads == 0, "mpg.heads must divide union.dim");
    }
};

// Everything trainable, assembled. Parameter construction order is fixed
// and flag-independent so a given seed yields the same initial weights in
// every ablation setting.
template <class S>
struct Model {
    ModelConfig cfg;
    UnionEncoder<S> union_enc;
    ImageEncoder<S> encoder;
    BhfmStack<S> bhfm;
    Mpg<S> mpg;
    Sam2Head<S> head;
    LinearParams<S> tbl_linear; // D -> 1, the boundary-loss text weight

    Model(const ModelConfig& c, std::uint64_t seed) : cfg(c) {
        cfg.validate();
        Rng rng(seed);
        union_enc = UnionEncoder<S>(cfg.union_, rng);
        encoder = ImageEncoder<S>(cfg.enc, rng);
        bhfm = BhfmStack<S>(cfg.fusion,
                            {cfg.enc.widths[0], cfg.enc.widths[1], cfg.enc.widths[2],
                             cfg.enc.widths[3]},
                            cfg.union_.dim, cfg.enc.dim, rng);
        mpg = Mpg<S>(cfg.mpg, cfg.union_.dim, rng);
        head = Sam2Head<S>(cfg.head, cfg.union_.dim, cfg.enc.dim, cfg.enc.out_grid(), rng);
        tbl_linear = LinearParams<S>(1, cfg.union_.dim, rng);
    }

    ParamList<S> params() {
        ParamList<S> out;
        ParamReg<S> r(out);
        union_enc.reg(r.scoped("union"));
        encoder.reg(r.scoped("enc"));
        bhfm.reg(r.scoped("bhfm"));
        mpg.reg(r.scoped("mpg"));
        head.reg(r.scoped("head"));
        tbl_linear.reg(r.scoped("loss.tbl_linear"));
        return out;
    }

    struct Forward {
        Var<S> logits;      // [H_s, W_s]
        Var<S> pseudo;      // [H_u/p, W_u/p] MPG logits (zeros when disabled)
        Var<S> t;           // [N_t, D] union text embeddings
        Var<S> v_cls;       // [1, D]
        Var<S> text_weight; // [1, 1] Linear(T_s)
    };

    Forward forward(Graph<S>& g, Var<S> image_s, Var<S> image_u,
                    const std::vector<std::size_t>& ids) const {
        UnionOut<S> u = union_enc(g, image_u, ids);

        std::optional<Var<S>> text_state;
        if (bhfm.cfg.layers_active()) text_state = bhfm.entry(g, u.t);
        EncodeOut<S> enc = encoder(g, image_s, &bhfm, text_state);

        Var<S> f_en = bhfm.cfg.guidance_active()
                          ? post_encode_guidance(g, enc.f_n, u.t, bhfm.guidance)
                          : enc.f_n;

        const std::size_t pg = cfg.union_.grid();   // pseudo-mask grid
        const std::size_t dg = cfg.enc.out_grid();  // decoder grid
        Var<S> pseudo = cfg.mpg.enabled ? mpg.generate(g, u.v_cls, u.v, pg, pg)
                                        : g.constant(Tensor<S>({pg, pg}));
        Var<S> dense = resize_prompt(g, pseudo, dg, dg);

        PromptBundle<S> prompts = head.encode_prompts(g, u.v_cls, dense);
        Var<S> logits = head.decode_mask(g, f_en, prompts, dg, dg, cfg.enc.input, cfg.enc.input);

        Var<S> w = tbl_linear(g, sentence_embedding(g, u.t));
        return {logits, pseudo, u.t, u.v_cls, w};
    }
};

} // namespace rs2
