#pragma once

#include "rs2/nn.hpp"

namespace rs2 {

struct LossWeights {
    double ce = 1.0;
    double dice = 0.1;
    double tbl = 0.2;
    double dice_eps = 1e-6;

    void validate() const {
        require(ce >= 0 && dice >= 0 && tbl >= 0 && dice_eps > 0,
                "loss weights must be non-negative (and dice_eps > 0)");
    }
};

// Mean binary cross-entropy on logits.
template <class S>
Var<S> ce_loss(Graph<S>& g, Var<S> logits, const Tensor<S>& gt) {
    return g.mean_all(g.bce_with_logits(logits, gt));
}

// 1 - (2*sum(p*g) + eps) / (sum(p) + sum(g) + eps) on probabilities.
template <class S>
Var<S> dice_loss(Graph<S>& g, Var<S> probs, const Tensor<S>& gt, double eps) {
    require(probs.val().same_shape(gt), "dice_loss: shape mismatch");
    double sum_g = 0;
    for (std::size_t i = 0; i < gt.size(); ++i) sum_g += static_cast<double>(gt[i]);
    Var<S> inter = g.sum_all(g.mul(probs, g.constant(gt)));
    Var<S> num = g.add_const(g.scale(inter, 2.0), eps);
    Var<S> den = g.add_const(g.sum_all(probs), sum_g + eps);
    return g.rsub_const(1.0, g.div(num, den));
}

// Value-level gradient map for constant (ground-truth) masks.
template <class S>
Tensor<S> gradient_map_values(const Tensor<S>& m) {
    require(m.rank() == 2, "gradient_map_values: expected [H,W]");
    const std::size_t h = m.extent(0), w = m.extent(1);
    Tensor<S> out({h, w});
    for (std::size_t i = 0; i < h; ++i)
        for (std::size_t j = 0; j < w; ++j) {
            S v = S(0);
            if (j + 1 < w) v += std::abs(m.at(i, j + 1) - m.at(i, j));
            if (i + 1 < h) v += std::abs(m.at(i + 1, j) - m.at(i, j));
            out.at(i, j) = v;
        }
    return out;
}

// Mean over pixels of (w * (grad(pred) - grad(gt)))^2; w is the [1,1]
// text-derived weight node.
template <class S>
Var<S> tbl_loss(Graph<S>& g, Var<S> probs, const Tensor<S>& gt, Var<S> w) {
    require(probs.val().same_shape(gt), "tbl_loss: shape mismatch");
    Var<S> diff = g.sub(g.gradient_map(probs), g.constant(gradient_map_values(gt)));
    Var<S> weighted = g.mul_scalar(diff, w);
    return g.mean_all(g.mul(weighted, weighted));
}

// Mean of the text rows between CLS and EOS: [N_t, D] -> [1, D].
template <class S>
Var<S> sentence_embedding(Graph<S>& g, Var<S> t) {
    const auto& sh = t.shape();
    require(sh.size() == 2 && sh[0] >= 3, "sentence_embedding: need [N_t >= 3, D]");
    const std::size_t l = sh[0] - 2;
    Tensor<S> pool({1, l});
    for (std::size_t i = 0; i < l; ++i) pool[i] = static_cast<S>(1.0 / static_cast<double>(l));
    return g.matmul(g.constant(std::move(pool)), g.slice_rows(t, 1, l));
}

template <class S>
struct LossBundle {
    Var<S> total;
    Var<S> ce;
    Var<S> dice;
    Var<S> tbl;
};

// L = l_ce * CE + l_dice * DICE + l_tbl * TBL. All three terms are always
// evaluated so logs show them even when their weight is zero.
template <class S>
LossBundle<S> total_loss(Graph<S>& g, Var<S> logits, const Tensor<S>& gt, Var<S> text_weight,
                         const LossWeights& w) {
    w.validate();
    Var<S> probs = g.sigmoid(logits);
    Var<S> ce = ce_loss(g, logits, gt);
    Var<S> dice = dice_loss(g, probs, gt, w.dice_eps);
    Var<S> tbl = tbl_loss(g, probs, gt, text_weight);
    Var<S> total =
        g.add(g.add(g.scale(ce, w.ce), g.scale(dice, w.dice)), g.scale(tbl, w.tbl));
    return {total, ce, dice, tbl};
}

} // namespace rs2
