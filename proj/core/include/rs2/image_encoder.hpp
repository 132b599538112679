#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "rs2/fusion.hpp"
#include "rs2/nn.hpp"

namespace rs2 {

// Four stages at strides 4/8/16/16: a patch-embed stem, per-stage pre-norm
// transformer blocks, 2x2 patch-merging between stages 1-2 and 2-3, a
// channel-only transition into stage 4, and a final projection to the
// decoding width C.
struct EncoderConfig {
    std::size_t input = 128; // H_s = W_s
    std::array<std::size_t, 4> widths{16, 32, 64, 64};
    std::array<std::size_t, 4> blocks{1, 1, 1, 1};
    std::size_t dim = 64; // C
    std::size_t heads = 4;
    std::size_t mlp_ratio = 2;
    bool frozen = false;

    std::size_t stem_grid() const { return input / 4; }
    std::size_t out_grid() const { return input / 16; }
    std::size_t stage_grid(std::size_t i) const { return i < 2 ? input / (4u << i) : input / 16; }

    void validate() const {
        require(input >= 16 && input % 16 == 0, "enc.input ", input, " must be a multiple of 16");
        for (std::size_t i = 0; i < 4; ++i) {
            require(widths[i] > 0 && widths[i] % 2 == 0, "enc width ", widths[i],
                    " must be positive and even");
            require(widths[i] % heads == 0, "enc width ", widths[i], " not divisible by ", heads,
                    " heads");
            require(blocks[i] > 0, "enc stage ", i + 1, " needs at least one block");
        }
        require(dim > 0 && dim % heads == 0, "enc.dim not divisible by heads");
    }
};

template <class S>
struct EncodeOut {
    Var<S> f_n;  // [out_grid^2, C] tokens, row-major grid
    std::optional<Var<S>> text; // carried text state, present when fusion ran
};

template <class S>
struct ImageEncoder {
    EncoderConfig cfg;
    LinearParams<S> stem;  // 4*4*3 -> c1
    Tensor<S> stem_pos;    // [stem_grid^2, c1]
    std::array<std::vector<TransformerBlock<S>>, 4> stages;
    // Stage transitions normalize before projecting: residual streams grow
    // across stages, and the norms keep activations bounded without touching
    // the fusion-layer equations that sit upstream of them.
    LayerNormParams<S> ln1, ln2, ln3, ln_out;
    LinearParams<S> down1; // 4*c1 -> c2, after 2x2 merge
    LinearParams<S> down2; // 4*c2 -> c3, after 2x2 merge
    LinearParams<S> down3; // c3 -> c4, stride holds
    LinearParams<S> out_proj; // c4 -> C

    ImageEncoder() = default;
    ImageEncoder(const EncoderConfig& c, Rng& rng) : cfg(c) {
        cfg.validate();
        stem = LinearParams<S>(cfg.widths[0], 4 * 4 * 3, rng);
        const std::size_t g1 = cfg.stem_grid();
        const double emb = 1.0 / std::sqrt(static_cast<double>(cfg.widths[0]));
        stem_pos = Tensor<S>::uniform(rng, {g1 * g1, cfg.widths[0]}, -emb, emb);
        for (std::size_t i = 0; i < 4; ++i) {
            stages[i].reserve(cfg.blocks[i]);
            for (std::size_t b = 0; b < cfg.blocks[i]; ++b)
                stages[i].emplace_back(cfg.widths[i], cfg.heads, cfg.mlp_ratio * cfg.widths[i],
                                       rng);
        }
        ln1 = LayerNormParams<S>(cfg.widths[0]);
        ln2 = LayerNormParams<S>(cfg.widths[1]);
        ln3 = LayerNormParams<S>(cfg.widths[2]);
        ln_out = LayerNormParams<S>(cfg.widths[3]);
        down1 = LinearParams<S>(cfg.widths[1], 4 * cfg.widths[0], rng);
        down2 = LinearParams<S>(cfg.widths[2], 4 * cfg.widths[1], rng);
        down3 = LinearParams<S>(cfg.widths[3], cfg.widths[2], rng);
        out_proj = LinearParams<S>(cfg.dim, cfg.widths[3], rng);
    }

    void reg(ParamReg<S> r) {
        stem.reg(r.scoped("stem.proj"));
        r.add("stem.pos", stem_pos);
        for (std::size_t i = 0; i < 4; ++i) {
            auto rs = r.scoped("stage" + std::to_string(i + 1));
            for (std::size_t b = 0; b < stages[i].size(); ++b)
                stages[i][b].reg(rs.scoped("block" + std::to_string(b)));
        }
        ln1.reg(r.scoped("ln1"));
        ln2.reg(r.scoped("ln2"));
        ln3.reg(r.scoped("ln3"));
        ln_out.reg(r.scoped("ln_out"));
        down1.reg(r.scoped("down1"));
        down2.reg(r.scoped("down2"));
        down3.reg(r.scoped("down3"));
        out_proj.reg(r.scoped("out_proj"));
    }

    // fusion == nullptr (or inactive flags) runs the plain backbone; the
    // text argument is then ignored. With fusion, each stage records its
    // block input F_in, runs its blocks to F_i, and hands both plus the
    // carried text state to the stage's fusion layer.
    EncodeOut<S> operator()(Graph<S>& g, Var<S> image, const BhfmStack<S>* fusion,
                            std::optional<Var<S>> text) const {
        const auto& sh = image.shape();
        require(sh.size() == 3 && sh[0] == cfg.input && sh[1] == cfg.input && sh[2] == 3,
                "encoder: image must be [", cfg.input, ",", cfg.input, ",3], got ",
                image.val().shape_str());
        const bool fused = fusion != nullptr && fusion->cfg.layers_active();
        if (fused) require(text.has_value(), "encoder: fusion requires a text state");

        Var<S> x = g.add(stem(g, g.patchify(image, 4)), g.param(stem_pos));
        std::size_t hw = cfg.stem_grid();

        for (std::size_t i = 0; i < 4; ++i) {
            Var<S> f_in = x;
            for (const auto& b : stages[i]) x = b(g, x);
            if (fused) {
                auto [f_out, t_next] = bhfm_layer(g, x, *text, f_in, fusion->cfg.coeffs,
                                                  fusion->layers[i], fusion->cfg.variant);
                x = f_out;
                text = t_next;
            }
            if (i == 0) {
                x = down1(g, g.space_to_depth2(ln1(g, x), hw, hw));
                hw /= 2;
            } else if (i == 1) {
                x = down2(g, g.space_to_depth2(ln2(g, x), hw, hw));
                hw /= 2;
            } else if (i == 2) {
                x = down3(g, ln3(g, x));
            }
        }
        return {out_proj(g, ln_out(g, x)), fused ? text : std::nullopt};
    }
};

} // namespace rs2
