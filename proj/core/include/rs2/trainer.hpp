#pragma once

#include <cmath>
#include <filesystem>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include "rs2/checkpoint.hpp"
#include "rs2/config.hpp"
#include "rs2/image_io.hpp"
#include "rs2/metrics.hpp"
#include "rs2/model.hpp"
#include "rs2/optim.hpp"
#include "rs2/synth.hpp"
#include "rs2/vocab.hpp"

namespace rs2 {

// A dataset record with model-ready inputs: the full-resolution image for the
// segmentation branch, the downsized copy for the union encoder, token ids,
// and the reference mask both as values (losses) and bytes (metrics).
template <class S>
struct PreparedSample {
    std::size_t id = 0;
    Tensor<S> image_s; // [canvas, canvas, 3]
    Tensor<S> image_u; // [union.image, union.image, 3]
    std::vector<std::size_t> ids;
    Tensor<S> gt; // [canvas, canvas] in {0,1}
    Mask gt_mask;
};

template <class S>
std::vector<PreparedSample<S>> prepare_samples(const std::vector<LoadedSample>& data,
                                               const ModelConfig& mc) {
    const Vocab vocab = Vocab::builtin();
    std::vector<PreparedSample<S>> out;
    out.reserve(data.size());
    for (const auto& d : data) {
        require(d.image.extent(0) == mc.enc.input && d.image.extent(1) == mc.enc.input,
                "prepare: sample ", d.meta.id, " is ", d.image.extent(0), "x",
                d.image.extent(1), ", model expects ", mc.enc.input, "x", mc.enc.input);
        PreparedSample<S> s;
        s.id = d.meta.id;
        s.image_s = tensor_cast<S>(d.image);
        s.image_u =
            tensor_cast<S>(bilinear_resize_image(d.image, mc.union_.image, mc.union_.image));
        s.ids = tokenize(d.meta.expression, vocab);
        require(s.ids.size() <= mc.union_.max_text, "prepare: sample ", d.meta.id, " has ",
                s.ids.size(), " tokens, union.max_text is ", mc.union_.max_text);
        s.gt = Tensor<S>({d.gt.h, d.gt.w});
        for (std::size_t i = 0; i < s.gt.size(); ++i) s.gt[i] = static_cast<S>(d.gt.v[i]);
        s.gt_mask = d.gt;
        out.push_back(std::move(s));
    }
    return out;
}

namespace detail {

inline std::string pad_index(std::size_t i, std::size_t width) {
    std::string s = std::to_string(i);
    while (s.size() < width) s.insert(s.begin(), '0');
    return s;
}

} // namespace detail

struct TrainResult {
    std::size_t steps = 0;
    double final_total = 0.0;
    std::string checkpoint; // path of the final checkpoint
};

// Full-batch-of-one training loop. Sample order is step % n: with a handful
// of samples the round-robin's perfectly uniform visitation outperforms
// shuffling, whose coverage gaps let batch-of-one steps drift off whichever
// sample goes unvisited longest. Runs are a pure function of
// (config, dataset). Every logged line is one JSON object; a non-finite loss
// aborts with the step, sample and per-term values.
template <class S>
TrainResult train_run(const Config& cfg, Model<S>& model,
                      const std::vector<LoadedSample>& data, const std::string& out_dir,
                      const std::string& resume = "") {
    require(!data.empty(), "train: dataset is empty");
    const OptConfig oc = opt_config(cfg);
    const auto prepared = prepare_samples<S>(data, model.cfg);

    ParamList<S> params = model.params();
    AdamW<S> opt(oc);

    std::size_t step0 = 0;
    if (!resume.empty()) {
        const CheckpointHead head = load_checkpoint<S>(resume, params, &opt);
        require(head.config_text == cfg.canonical(),
                "train: checkpoint config does not match the current config");
        step0 = head.step;
        require(step0 < oc.steps, "train: checkpoint already at step ", step0, " of ",
                oc.steps);
    }

    std::filesystem::create_directories(out_dir);
    std::ofstream log(out_dir + "/loss.jsonl",
                      step0 > 0 ? std::ios::app : std::ios::trunc);
    if (!log) fail("train: cannot write ", out_dir, "/loss.jsonl");

    double last_total = 0.0;
    for (std::size_t t = step0; t < oc.steps; ++t) {
        const PreparedSample<S>& s = prepared[t % prepared.size()];
        Graph<S> g;
        auto fwd = model.forward(g, g.constant(s.image_s), g.constant(s.image_u), s.ids);
        LossBundle<S> lb = total_loss(g, fwd.logits, s.gt, fwd.text_weight, model.cfg.loss);

        const double ce = static_cast<double>(lb.ce.val()[0]);
        const double dice = static_cast<double>(lb.dice.val()[0]);
        const double tbl = static_cast<double>(lb.tbl.val()[0]);
        const double total = static_cast<double>(lb.total.val()[0]);
        if (!std::isfinite(total))
            fail("train: non-finite loss at step ", t, " on sample ", s.id, " (ce=", ce,
                 ", dice=", dice, ", tbl=", tbl, ")");
        last_total = total;

        g.backward(lb.total);
        opt.step(params, g, t, model.cfg.enc.frozen);

        if (t % oc.log_every == 0 || t + 1 == oc.steps) {
            log << "{\"step\": " << t << ", \"total\": " << fmt_double(total)
                << ", \"ce\": " << fmt_double(ce) << ", \"dice\": " << fmt_double(dice)
                << ", \"tbl\": " << fmt_double(tbl)
                << ", \"lr_base\": " << fmt_double(opt.lr_base(t))
                << ", \"lr_fusion\": " << fmt_double(opt.lr_fusion(t)) << "}\n";
        }
        if (oc.ckpt_every != 0 && (t + 1) % oc.ckpt_every == 0 && t + 1 != oc.steps)
            save_checkpoint<S>(out_dir + "/ckpt_" + detail::pad_index(t + 1, 6) + ".rs2",
                               params, &opt, t + 1, cfg.canonical(), cfg.hash());
    }
    log.flush();
    if (!log) fail("train: write to ", out_dir, "/loss.jsonl failed");

    const std::string final_path = out_dir + "/ckpt_final.rs2";
    save_checkpoint<S>(final_path, params, &opt, oc.steps, cfg.canonical(), cfg.hash());
    return {oc.steps, last_total, final_path};
}

// Thresholded prediction for one sample. The cut is on sigmoid probability,
// applied to logits through the equivalent logit threshold.
template <class S>
Mask predict_mask(const Model<S>& model, const PreparedSample<S>& s, double threshold) {
    require(threshold > 0.0 && threshold < 1.0, "eval: threshold must be in (0,1), got ",
            threshold);
    const double cut = std::log(threshold / (1.0 - threshold));
    Graph<S> g;
    auto fwd = model.forward(g, g.constant(s.image_s), g.constant(s.image_u), s.ids);
    const Tensor<S>& logits = fwd.logits.val();
    Mask pred(logits.extent(0), logits.extent(1));
    for (std::size_t i = 0; i < logits.size(); ++i)
        pred.v[i] = static_cast<double>(logits[i]) > cut ? 1 : 0;
    return pred;
}

// Evaluates the model over a dataset and writes report.json / report.txt /
// per_sample.csv (and red-tinted overlay images when asked for).
template <class S>
MetricReport eval_run(const Config& cfg, const Model<S>& model,
                      const std::vector<LoadedSample>& data, const std::string& out_dir,
                      bool overlays = false) {
    require(!data.empty(), "eval: dataset is empty");
    const auto prepared = prepare_samples<S>(data, model.cfg);
    const double threshold = cfg.get_double("eval.threshold");

    std::vector<std::pair<Mask, Mask>> pairs;
    pairs.reserve(prepared.size());
    for (const auto& s : prepared) pairs.emplace_back(predict_mask(model, s, threshold), s.gt_mask);

    const MetricReport report = evaluate(pairs);
    const std::vector<double> ious = per_sample_iou(pairs);

    std::filesystem::create_directories(out_dir);
    {
        std::ofstream out(out_dir + "/report.json", std::ios::trunc);
        if (!out) fail("eval: cannot write ", out_dir, "/report.json");
        out << report.to_json() << "\n";
    }
    {
        std::ofstream out(out_dir + "/report.txt", std::ios::trunc);
        if (!out) fail("eval: cannot write ", out_dir, "/report.txt");
        out << report.to_table();
    }
    {
        std::ofstream out(out_dir + "/per_sample.csv", std::ios::trunc);
        if (!out) fail("eval: cannot write ", out_dir, "/per_sample.csv");
        out << "id,iou\n";
        for (std::size_t i = 0; i < prepared.size(); ++i)
            out << prepared[i].id << "," << fmt_double(ious[i]) << "\n";
    }
    if (overlays) {
        for (std::size_t i = 0; i < prepared.size(); ++i) {
            // Tint predicted pixels toward red with exact byte arithmetic so
            // overlays are reproducible bit-for-bit.
            Tensor<double> img = data[i].image;
            const Mask& pred = pairs[i].first;
            for (std::size_t px = 0; px < pred.v.size(); ++px) {
                if (!pred.v[px]) continue;
                const auto byte_of = [&](std::size_t c) {
                    return static_cast<int>(std::lround(img[px * 3 + c] * 255.0));
                };
                const int r = (byte_of(0) + 255) / 2, gch = byte_of(1) / 2,
                          b = byte_of(2) / 2;
                img[px * 3 + 0] = r / 255.0;
                img[px * 3 + 1] = gch / 255.0;
                img[px * 3 + 2] = b / 255.0;
            }
            write_ppm(out_dir + "/ovl_" + detail::pad_index(prepared[i].id, 4) + ".ppm", img);
        }
    }
    return report;
}

} // namespace rs2
