#pragma once

#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "rs2/config.hpp"
#include "rs2/graph.hpp"
#include "rs2/nn.hpp"

namespace rs2 {

inline constexpr const char* kBackbonePrefix = "enc.";

inline bool has_prefix(const std::string& name, const std::string& prefix) {
    return name.rfind(prefix, 0) == 0;
}

// Decoupled-weight-decay Adam with two learning-rate groups (fusion-module
// parameters train faster, mirroring the adapter-style recipe), an optional
// linear warmup, and a global x0.1 decay from opt.decay_at on. Moments are
// kept in float64 regardless of
// the model scalar so f32 runs checkpoint/resume exactly.
template <class S>
class AdamW {
public:
    struct Slot {
        std::uint64_t t = 0;
        std::vector<double> m, v;
    };

    explicit AdamW(const OptConfig& cfg) : cfg_(cfg) {}

    const OptConfig& config() const { return cfg_; }

    bool is_fusion(const std::string& name) const {
        for (const auto& p : cfg_.fusion_prefixes)
            if (has_prefix(name, p)) return true;
        return false;
    }

    double lr_base(std::size_t step) const { return cfg_.lr_base * schedule(step); }
    double lr_fusion(std::size_t step) const { return cfg_.lr_fusion * schedule(step); }

    double lr_for(const std::string& name, std::size_t step) const {
        return is_fusion(name) ? lr_fusion(step) : lr_base(step);
    }

    // One update from the gradients accumulated on `g`. Parameters under the
    // backbone prefix are skipped entirely when frozen. Gradients are
    // rescaled to the configured global norm first; single-sample steps are
    // spiky and unclipped spikes stall the run in saturated regions.
    void step(const ParamList<S>& params, const Graph<S>& g, std::size_t global_step,
              bool frozen_backbone) {
        std::vector<Tensor<S>> grads(params.size());
        double sq = 0.0;
        for (std::size_t i = 0; i < params.size(); ++i) {
            if (frozen_backbone && has_prefix(params[i].name, kBackbonePrefix)) continue;
            grads[i] = g.grad_of(params[i].tensor);
            for (std::size_t k = 0; k < grads[i].size(); ++k) {
                const double gk = static_cast<double>(grads[i][k]);
                sq += gk * gk;
            }
        }
        double rescale = 1.0;
        if (cfg_.clip_norm > 0.0 && sq > cfg_.clip_norm * cfg_.clip_norm)
            rescale = cfg_.clip_norm / std::sqrt(sq);

        for (std::size_t pi = 0; pi < params.size(); ++pi) {
            const auto& p = params[pi];
            if (frozen_backbone && has_prefix(p.name, kBackbonePrefix)) continue;
            const Tensor<S>& grad = grads[pi];
            Slot& slot = slots_[p.name];
            if (slot.m.empty()) {
                slot.m.assign(p.tensor->size(), 0.0);
                slot.v.assign(p.tensor->size(), 0.0);
            }
            require(slot.m.size() == p.tensor->size(), "adamw: state size mismatch for ",
                    p.name);
            slot.t += 1;
            const double lr = lr_for(p.name, global_step);
            const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(slot.t));
            const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(slot.t));
            Tensor<S>& t = *p.tensor;
            for (std::size_t i = 0; i < t.size(); ++i) {
                const double gi = static_cast<double>(grad[i]) * rescale;
                slot.m[i] = cfg_.beta1 * slot.m[i] + (1.0 - cfg_.beta1) * gi;
                slot.v[i] = cfg_.beta2 * slot.v[i] + (1.0 - cfg_.beta2) * gi * gi;
                const double mhat = slot.m[i] / bc1;
                const double vhat = slot.v[i] / bc2;
                const double upd = mhat / (std::sqrt(vhat) + cfg_.eps) +
                                   cfg_.weight_decay * static_cast<double>(t[i]);
                t[i] = static_cast<S>(static_cast<double>(t[i]) - lr * upd);
            }
        }
    }

    std::map<std::string, Slot>& slots() { return slots_; }
    const std::map<std::string, Slot>& slots() const { return slots_; }

private:
    OptConfig cfg_;
    std::map<std::string, Slot> slots_;

    // Linear ramp over the first `warmup` steps, x0.1 from `decay_at` on.
    double schedule(std::size_t step) const {
        double f = step >= cfg_.decay_at ? 0.1 : 1.0;
        if (step < cfg_.warmup)
            f *= static_cast<double>(step + 1) / static_cast<double>(cfg_.warmup);
        return f;
    }
};

} // namespace rs2
