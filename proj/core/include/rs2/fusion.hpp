#pragma once

#include <string>
#include <utility>
#include <vector>

#include "rs2/nn.hpp"

namespace rs2 {

enum class FusionVariant { Bi, Uni, Linear, Off };

inline FusionVariant parse_variant(const std::string& s) {
    if (s == "bi") return FusionVariant::Bi;
    if (s == "uni") return FusionVariant::Uni;
    if (s == "linear") return FusionVariant::Linear;
    if (s == "off") return FusionVariant::Off;
    fail("bhfm.variant: expected bi|uni|linear|off, got '", s, "'");
}

struct FusionCoeffs {
    double alpha_t = 0.2; // text blend weight, in [0,1]
    double alpha_i = 0.5; // gated image-branch weight

    void validate() const {
        require(alpha_t >= 0.0 && alpha_t <= 1.0, "bhfm.alpha_t must be in [0,1]");
        require(alpha_i >= 0.0, "bhfm.alpha_i must be >= 0");
    }
};

// One fusion layer at backbone width c. The image stream is bottlenecked to
// c/2 where it cross-attends with the text stream (projected from its
// carried width d_t to c/2); both streams are restored afterwards. One
// restore linear serves both the dimensionality restore and the image-path
// residual projection.
template <class S>
struct FusionLayerParams {
    LinearParams<S> img_down;     // c -> c/2 (GeLU applied after)
    LinearParams<S> text_proj;    // d_t -> c/2
    AttentionParams<S> mhca_img;  // queries: image, kv: text (dim c/2)
    AttentionParams<S> mhca_txt;  // queries: text, kv: image (dim c/2)
    LinearParams<S> img_restore;  // c/2 -> c
    LinearParams<S> text_restore; // c/2 -> d_t
    LayerNormParams<S> ln;        // over c
    MlpParams<S> mlp;             // c -> ratio*c -> c
    LinearParams<S> gate_down;    // c -> c/2 (GeLU applied after)
    LinearParams<S> gate_up;      // c/2 -> c

    FusionLayerParams() = default;
    FusionLayerParams(std::size_t c, std::size_t d_t, std::size_t heads, std::size_t mlp_ratio,
                      Rng& rng) {
        require(c % 2 == 0, "fusion layer: width ", c, " must be even");
        const std::size_t cb = c / 2;
        require(cb % heads == 0, "fusion layer: bottleneck ", cb, " not divisible by ", heads,
                " heads");
        img_down = LinearParams<S>(cb, c, rng);
        text_proj = LinearParams<S>(cb, d_t, rng);
        mhca_img = AttentionParams<S>(cb, heads, rng);
        mhca_txt = AttentionParams<S>(cb, heads, rng);
        img_restore = LinearParams<S>(c, cb, rng);
        text_restore = LinearParams<S>(d_t, cb, rng);
        ln = LayerNormParams<S>(c);
        mlp = MlpParams<S>(c, mlp_ratio * c, rng);
        gate_down = LinearParams<S>(cb, c, rng);
        gate_up = LinearParams<S>(c, cb, rng);
    }

    void reg(ParamReg<S> r) {
        img_down.reg(r.scoped("img_down"));
        text_proj.reg(r.scoped("text_proj"));
        mhca_img.reg(r.scoped("mhca_img"));
        mhca_txt.reg(r.scoped("mhca_txt"));
        img_restore.reg(r.scoped("img_restore"));
        text_restore.reg(r.scoped("text_restore"));
        ln.reg(r.scoped("ln"));
        mlp.reg(r.scoped("mlp"));
        gate_down.reg(r.scoped("gate_down"));
        gate_up.reg(r.scoped("gate_up"));
    }
};

// Bidirectional enhancement of one backbone stage:
//   F' = GeLU(Linear(F)),  T' = Linear(T)
//   F'' = MHCA(F', T') + F',  T'' = MHCA(T', F') + T'   (Bi; Uni drops the
//       text update, Linear drops both attentions)
//   T_next = (1 - a_t) T + a_t Linear(T'')
//   F''' = F_in + Linear(F'') + F
//   F_out = F''' + MLP(LN(F''')) + a_i Linear(GeLU(Linear(F''')))
template <class S>
std::pair<Var<S>, Var<S>> bhfm_layer(Graph<S>& g, Var<S> f, Var<S> t, Var<S> f_in,
                                     const FusionCoeffs& coeffs,
                                     const FusionLayerParams<S>& p, FusionVariant variant) {
    require(variant != FusionVariant::Off, "bhfm_layer: variant Off is a bypass, not a layer");
    require(f.val().same_shape(f_in.val()), "bhfm_layer: F and F_in shapes differ: ",
            f.val().shape_str(), " vs ", f_in.val().shape_str());

    Var<S> f1 = g.gelu(p.img_down(g, f));
    Var<S> t1 = p.text_proj(g, t);

    Var<S> f2 = f1;
    Var<S> t_next = t;
    if (variant != FusionVariant::Linear) {
        f2 = g.add(p.mhca_img(g, f1, t1), f1);
        if (variant == FusionVariant::Bi) {
            Var<S> t2 = g.add(p.mhca_txt(g, t1, f1), t1);
            t_next = g.add(g.scale(t, 1.0 - coeffs.alpha_t),
                           g.scale(p.text_restore(g, t2), coeffs.alpha_t));
        }
    }

    Var<S> f3 = g.add(g.add(f_in, p.img_restore(g, f2)), f);
    Var<S> gated = p.gate_up(g, g.gelu(p.gate_down(g, f3)));
    Var<S> f_out = g.add(g.add(f3, p.mlp(g, p.ln(g, f3))), g.scale(gated, coeffs.alpha_i));
    return {f_out, t_next};
}

// Post-encoding guidance: the encoded feature map queries the union-encoder
// text and is gated by the attention response.
template <class S>
struct GuidanceParams {
    AttentionParams<S> mhca; // queries: F (dim c), kv: T (dim d_text)

    GuidanceParams() = default;
    GuidanceParams(std::size_t c, std::size_t d_text, std::size_t heads, Rng& rng)
        : mhca(c, d_text, heads, rng) {}

    void reg(ParamReg<S> r) { mhca.reg(r.scoped("mhca")); }
};

// F_en = F (elementwise *) A; split out so tests can force A.
template <class S>
Var<S> guidance_multiply(Graph<S>& g, Var<S> f, Var<S> attn_out) {
    return g.mul(f, attn_out);
}

template <class S>
Var<S> post_encode_guidance(Graph<S>& g, Var<S> f, Var<S> t, const GuidanceParams<S>& p) {
    return guidance_multiply(g, f, p.mhca(g, f, t));
}

struct FusionConfig {
    FusionVariant variant = FusionVariant::Bi;
    bool use_bc = true; // post-encoding guidance
    bool use_bl = true; // per-stage fusion layers
    FusionCoeffs coeffs;
    std::size_t text_dim = 32; // carried text width d_t
    std::size_t heads = 2;
    std::size_t mlp_ratio = 2;

    bool layers_active() const { return variant != FusionVariant::Off && use_bl; }
    bool guidance_active() const { return variant != FusionVariant::Off && use_bc; }

    void validate() const {
        coeffs.validate();
        require(text_dim > 0 && heads > 0 && mlp_ratio > 0, "bhfm: degenerate dims");
        if (variant == FusionVariant::Off)
            require(!use_bc && !use_bl, "bhfm: variant=off requires use_bc/use_bl false");
    }
};

// All fusion state for one model: the entry projection of the union-encoder
// text into the carried width, one fusion layer per backbone stage, and the
// post-encoding guidance block. Parameters exist regardless of which flags
// are active so that weights are comparable across ablation settings.
template <class S>
struct BhfmStack {
    FusionConfig cfg;
    LinearParams<S> entry; // union dim D -> d_t
    std::vector<FusionLayerParams<S>> layers;
    GuidanceParams<S> guidance;

    BhfmStack() = default;
    BhfmStack(const FusionConfig& c, const std::vector<std::size_t>& stage_widths,
              std::size_t union_dim, std::size_t enc_dim, Rng& rng)
        : cfg(c) {
        cfg.validate();
        entry = LinearParams<S>(cfg.text_dim, union_dim, rng);
        layers.reserve(stage_widths.size());
        for (std::size_t w : stage_widths)
            layers.emplace_back(w, cfg.text_dim, cfg.heads, cfg.mlp_ratio, rng);
        guidance = GuidanceParams<S>(enc_dim, union_dim, cfg.heads, rng);
    }

    void reg(ParamReg<S> r) {
        entry.reg(r.scoped("entry"));
        for (std::size_t i = 0; i < layers.size(); ++i)
            layers[i].reg(r.scoped("layer" + std::to_string(i + 1)));
        guidance.reg(r.scoped("guidance"));
    }
};

} // namespace rs2
