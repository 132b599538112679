#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "rs2/graph.hpp"
#include "rs2/nn.hpp"
#include "rs2/rng.hpp"

namespace rs2 {

struct GradCheckRow {
    std::string name;
    std::size_t coords = 0;
    double max_rel = 0.0;
};

struct GradCheckReport {
    std::vector<GradCheckRow> rows;
    double max_rel = 0.0;
    std::size_t coords = 0;

    bool pass(double tol) const { return max_rel <= tol; }

    // Worst row per top-level path segment ("bhfm", "enc", ...), for the
    // per-module summary table.
    std::vector<GradCheckRow> by_module() const {
        std::vector<GradCheckRow> out;
        for (const auto& r : rows) {
            const std::string mod = r.name.substr(0, r.name.find('.'));
            auto it = std::find_if(out.begin(), out.end(),
                                   [&](const GradCheckRow& m) { return m.name == mod; });
            if (it == out.end()) {
                out.push_back({mod, r.coords, r.max_rel});
            } else {
                it->coords += r.coords;
                it->max_rel = std::max(it->max_rel, r.max_rel);
            }
        }
        return out;
    }
};

// Compares tape gradients of a scalar objective against central differences.
// `build` must assemble the objective on a fresh graph from the parameters'
// *current* storage (it is re-run with perturbed values). For tensors larger
// than `coords_per_tensor`, a deterministic random subset of coordinates is
// probed. `corrupt` distorts one parameter's analytic gradient (scale and
// shift, so even near-zero entries move) — a self-test that the detector
// actually detects.
template <class S, class Build>
GradCheckReport gradcheck_params(Build&& build, const ParamList<S>& params, double h,
                                 std::size_t coords_per_tensor, Rng& rng,
                                 const std::string& corrupt = "") {
    GradCheckReport rep;

    std::vector<Tensor<S>> analytic;
    {
        Graph<S> g;
        Var<S> out = build(g);
        require(out.val().size() == 1, "gradcheck: objective must be scalar");
        g.backward(out);
        analytic.reserve(params.size());
        bool corrupted = corrupt.empty();
        for (const auto& p : params) {
            Tensor<S> a = g.grad_of(p.tensor);
            if (p.name == corrupt) {
                for (std::size_t i = 0; i < a.size(); ++i) a[i] = S(1.5) * a[i] + S(0.25);
                corrupted = true;
            }
            analytic.push_back(std::move(a));
        }
        require(corrupted, "gradcheck: no parameter named '", corrupt, "'");
    }

    auto objective = [&]() -> double {
        Graph<S> g;
        return static_cast<double>(build(g).val()[0]);
    };

    for (std::size_t pi = 0; pi < params.size(); ++pi) {
        Tensor<S>& t = *params[pi].tensor;
        std::vector<std::size_t> coords(t.size());
        for (std::size_t i = 0; i < coords.size(); ++i) coords[i] = i;
        if (coords.size() > coords_per_tensor) {
            // Fisher-Yates prefix: first coords_per_tensor entries are a
            // uniform sample without replacement.
            for (std::size_t i = 0; i < coords_per_tensor; ++i)
                std::swap(coords[i], coords[i + rng.below(coords.size() - i)]);
            coords.resize(coords_per_tensor);
        }

        GradCheckRow row{params[pi].name, coords.size(), 0.0};
        for (std::size_t c : coords) {
            const S saved = t[c];
            t[c] = static_cast<S>(static_cast<double>(saved) + h);
            const double fp = objective();
            t[c] = static_cast<S>(static_cast<double>(saved) - h);
            const double fm = objective();
            t[c] = saved;
            const double fd = (fp - fm) / (2.0 * h);
            const double an = static_cast<double>(analytic[pi][c]);
            const double rel =
                std::abs(an - fd) / std::max({1.0, std::abs(an), std::abs(fd)});
            row.max_rel = std::max(row.max_rel, rel);
        }
        rep.coords += row.coords;
        rep.max_rel = std::max(rep.max_rel, row.max_rel);
        rep.rows.push_back(std::move(row));
    }
    return rep;
}

} // namespace rs2
