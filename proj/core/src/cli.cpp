#include "rs2/cli.hpp"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <utility>
#include <vector>

#include <CLI11.hpp>

#include "rs2/checkpoint.hpp"
#include "rs2/config.hpp"
#include "rs2/gradcheck.hpp"
#include "rs2/text_table.hpp"
#include "rs2/trainer.hpp"

namespace rs2 {
namespace {

bool verify_mode() {
    const char* v = std::getenv("RS2_VERIFY");
    return v != nullptr && std::string(v) == "1";
}

Config load_config(const std::string& file, const std::vector<std::string>& sets) {
    Config c;
    if (!file.empty()) c.apply_file(file);
    for (const auto& kv : sets) c.apply_set(kv);
    if (verify_mode()) c.set("run.precision", "f64");
    return c;
}

// Runs fn with the scalar type selected by run.precision.
template <class Fn>
int with_precision(const Config& cfg, Fn&& fn) {
    if (cfg.get_str("run.precision") == "f64") return fn(double{});
    return fn(float{});
}

std::string json_escape(const std::string& s) {
    std::string out;
    out.reserve(s.size() + 2);
    for (char ch : s) {
        switch (ch) {
        case '"': out += "\\\""; break;
        case '\\': out += "\\\\"; break;
        case '\n': out += "\\n"; break;
        case '\r': out += "\\r"; break;
        case '\t': out += "\\t"; break;
        default:
            if (static_cast<unsigned char>(ch) < 0x20) {
                char buf[8];
                std::snprintf(buf, sizeof(buf), "\\u%04x", ch);
                out += buf;
            } else {
                out += ch;
            }
        }
    }
    return out;
}

int cmd_synth(const Config& cfg, const std::string& out_dir, std::size_t n) {
    const auto manifest = write_dataset(n, static_cast<std::uint64_t>(cfg.get_int("run.seed")),
                                        out_dir, synth_config(cfg));
    std::cout << "synth: wrote " << manifest.size() << " samples to " << out_dir << "\n";
    return 0;
}

int cmd_train(const Config& cfg, const std::string& data_dir, const std::string& out_dir,
              const std::string& resume) {
    const auto data = read_dataset(data_dir);
    return with_precision(cfg, [&](auto tag) {
        using S = decltype(tag);
        Model<S> model(model_config(cfg), static_cast<std::uint64_t>(cfg.get_int("run.seed")));
        const TrainResult r = train_run<S>(cfg, model, data, out_dir, resume);
        std::cout << "train: " << r.steps << " steps, final total "
                  << fmt_double(r.final_total) << ", wrote " << r.checkpoint << "\n";
        return 0;
    });
}

// Rebuilds the model recorded in the checkpoint and evaluates it. The config
// travels inside the checkpoint; --set can still adjust evaluation keys.
int cmd_eval(const std::string& ckpt, const std::vector<std::string>& sets,
             const std::string& data_dir, const std::string& out_dir, bool overlays) {
    const CheckpointHead head = peek_checkpoint(ckpt);
    Config cfg;
    cfg.apply_text(head.config_text, ckpt);
    for (const auto& kv : sets) cfg.apply_set(kv);
    if (verify_mode()) cfg.set("run.precision", "f64");

    const auto data = read_dataset(data_dir);
    return with_precision(cfg, [&](auto tag) {
        using S = decltype(tag);
        Model<S> model(model_config(cfg), static_cast<std::uint64_t>(cfg.get_int("run.seed")));
        ParamList<S> params = model.params();
        load_checkpoint<S>(ckpt, params, nullptr);
        const MetricReport report = eval_run<S>(cfg, model, data, out_dir, overlays);
        std::cout << report.to_table();
        std::cout << "eval: wrote " << out_dir << "/report.json\n";
        return 0;
    });
}

// Shrunken model dimensions for the finite-difference audit: every module
// and fusion path stays active, only the tensor sizes drop so probing every
// parameter group stays fast.
const std::vector<std::pair<std::string, std::string>>& gradcheck_probe_keys() {
    static const std::vector<std::pair<std::string, std::string>> keys = {
        {"data.canvas", "32"},     {"union.image", "16"},
        {"union.patch", "8"},      {"union.dim", "16"},
        {"union.depth", "1"},      {"union.heads", "2"},
        {"union.mlp_ratio", "2"},  {"enc.widths", "8,8,16,16"},
        {"enc.blocks", "1,1,1,1"}, {"enc.dim", "16"},
        {"enc.heads", "2"},        {"enc.mlp_ratio", "2"},
        {"enc.frozen", "false"},   {"bhfm.variant", "bi"},
        {"bhfm.use_bc", "true"},   {"bhfm.use_bl", "true"},
        {"bhfm.text_dim", "8"},    {"bhfm.heads", "2"},
        {"mpg.enabled", "true"},   {"mpg.use_mhca", "true"},
        {"mpg.heads", "2"},        {"head.rounds", "2"},
        {"head.heads", "2"},
    };
    return keys;
}

template <class S>
int do_gradcheck(const Config& cfg, double tol, double h, std::size_t coords,
                 const std::string& corrupt) {
    const std::uint64_t seed = static_cast<std::uint64_t>(cfg.get_int("run.seed"));
    const ModelConfig mc = model_config(cfg);
    Model<S> model(mc, seed);
    ParamList<S> params = model.params();

    // Random probe inputs; random, not synthesized, so no pixel sits on a
    // kink of the piecewise-linear resampling paths.
    Rng rng(seed ^ 0x5bf0a8b145fe9f5dull);
    Tensor<S> img_s({mc.enc.input, mc.enc.input, 3});
    for (std::size_t i = 0; i < img_s.size(); ++i) img_s[i] = static_cast<S>(rng.uniform());
    Tensor<S> img_u({mc.union_.image, mc.union_.image, 3});
    for (std::size_t i = 0; i < img_u.size(); ++i) img_u[i] = static_cast<S>(rng.uniform());
    Tensor<S> gt({mc.enc.input, mc.enc.input});
    for (std::size_t i = 0; i < gt.size(); ++i) gt[i] = static_cast<S>(rng.coin() ? 1 : 0);
    const std::vector<std::size_t> ids =
        tokenize("the red tank on the left", Vocab::builtin());

    auto build = [&](Graph<S>& g) {
        auto fwd = model.forward(g, g.constant(img_s), g.constant(img_u), ids);
        return total_loss(g, fwd.logits, gt, fwd.text_weight, mc.loss).total;
    };
    const GradCheckReport rep = gradcheck_params<S>(build, params, h, coords, rng, corrupt);

    TextTable table;
    table.header({"module", "max_rel", "coords"});
    for (const auto& m : rep.by_module())
        table.row({m.name, fmt_double(m.max_rel), std::to_string(m.coords)});
    std::cout << table.render();

    std::string worst;
    for (const auto& r : rep.rows)
        if (r.max_rel == rep.max_rel) { worst = r.name; break; }
    const bool ok = rep.pass(tol);
    std::cout << "gradcheck: " << (ok ? "PASS" : "FAIL") << " max_rel="
              << fmt_double(rep.max_rel) << " tol=" << fmt_double(tol) << " params="
              << rep.rows.size() << " coords=" << rep.coords << " worst=" << worst << "\n";
    return ok ? 0 : 1;
}

int cmd_gradcheck(const std::string& config_file, const std::vector<std::string>& sets,
                  double tol, double h, std::size_t coords, bool f32,
                  const std::string& corrupt) {
    Config cfg;
    if (!config_file.empty()) cfg.apply_file(config_file);
    for (const auto& [k, v] : gradcheck_probe_keys()) cfg.set(k, v);
    for (const auto& kv : sets) cfg.apply_set(kv);
    cfg.set("run.precision", f32 && !verify_mode() ? "f32" : "f64");

    const bool f64 = cfg.get_str("run.precision") == "f64";
    if (h <= 0) h = f64 ? 1e-5 : 4e-3;
    if (tol <= 0) tol = f64 ? 1e-4 : 1e-2;
    if (f64) return do_gradcheck<double>(cfg, tol, h, coords, corrupt);
    return do_gradcheck<float>(cfg, tol, h, coords, corrupt);
}

struct CellSpec {
    const char* slug;
    const char* name;
    int group; // 0 = components, 1 = fusion layer variant, 2 = prompt interaction
    std::vector<std::pair<std::string, std::string>> sets;
};

const std::vector<CellSpec>& ablation_cells() {
    const std::vector<std::pair<std::string, std::string>> off = {
        {"bhfm.variant", "off"}, {"bhfm.use_bc", "false"}, {"bhfm.use_bl", "false"}};
    const std::vector<std::pair<std::string, std::string>> on = {
        {"bhfm.variant", "bi"}, {"bhfm.use_bc", "true"}, {"bhfm.use_bl", "true"}};
    auto with = [](std::vector<std::pair<std::string, std::string>> base,
                   std::vector<std::pair<std::string, std::string>> extra) {
        base.insert(base.end(), extra.begin(), extra.end());
        return base;
    };
    static const std::vector<CellSpec> cells = {
        {"baseline", "baseline", 0,
         with(off, {{"mpg.enabled", "false"}, {"loss.tbl", "0"}})},
        {"tbl", "+L_tbl", 0, with(off, {{"mpg.enabled", "false"}})},
        {"tbl_mpg", "+L_tbl+MPG", 0, with(off, {{"mpg.enabled", "true"}})},
        {"tbl_bhfm", "+L_tbl+BHFM", 0, with(on, {{"mpg.enabled", "false"}})},
        {"full", "full", 0, with(on, {{"mpg.enabled", "true"}})},
        {"linear", "linear", 1,
         with(on, {{"bhfm.variant", "linear"}, {"mpg.enabled", "true"}})},
        {"uni", "uni", 1, with(on, {{"bhfm.variant", "uni"}, {"mpg.enabled", "true"}})},
        {"bi", "bi", 1, with(on, {{"mpg.enabled", "true"}})},
        {"mpg_womhca", "w/o MHCA", 2,
         with(on, {{"mpg.enabled", "true"}, {"mpg.use_mhca", "false"}})},
        {"mpg_wmhca", "w MHCA", 2,
         with(on, {{"mpg.enabled", "true"}, {"mpg.use_mhca", "true"}})},
    };
    return cells;
}

struct CellResult {
    const CellSpec* spec = nullptr;
    bool ok = false;
    MetricReport report;
    std::string error;
};

// Trains and evaluates one ablation cell through the same code paths the
// train and eval subcommands use, so a cell is reproducible by launching
// those commands on the cell's written config.
template <class S>
MetricReport run_cell(const Config& cell_cfg, const std::vector<LoadedSample>& data,
                      const std::string& dir) {
    const std::uint64_t seed = static_cast<std::uint64_t>(cell_cfg.get_int("run.seed"));
    Model<S> model(model_config(cell_cfg), seed);
    const TrainResult tr = train_run<S>(cell_cfg, model, data, dir);

    Model<S> fresh(model_config(cell_cfg), seed);
    ParamList<S> params = fresh.params();
    load_checkpoint<S>(tr.checkpoint, params, nullptr);
    return eval_run<S>(cell_cfg, fresh, data, dir, false);
}

std::vector<std::string> metric_cells(const CellResult& r) {
    if (!r.ok) return {"-", "-", "-", "-", "-"};
    const MetricReport& m = r.report;
    return {fmt_fixed(m.pr[0], 2), fmt_fixed(m.pr[2], 2), fmt_fixed(m.pr[4], 2),
            fmt_fixed(m.miou, 2), fmt_fixed(m.oiou, 2)};
}

std::string group_table(const std::vector<CellResult>& results, int group,
                        const std::string& title) {
    TextTable t;
    t.header({"method", "Pr@0.5", "Pr@0.7", "Pr@0.9", "mIoU", "oIoU"});
    for (const auto& r : results) {
        if (r.spec->group != group) continue;
        std::vector<std::string> row{r.spec->name};
        const auto vals = metric_cells(r);
        row.insert(row.end(), vals.begin(), vals.end());
        t.row(row);
    }
    return title + "\n" + t.render();
}

int cmd_ablate(const Config& base, const std::string& data_dir, const std::string& out_dir) {
    const auto data = read_dataset(data_dir);
    const std::size_t steps = static_cast<std::size_t>(base.get_int("ablate.steps"));
    std::filesystem::create_directories(out_dir + "/cells");

    std::vector<CellResult> results;
    for (const CellSpec& cell : ablation_cells()) {
        Config cfg = base;
        for (const auto& [k, v] : cell.sets) cfg.set(k, v);
        cfg.set("opt.steps", std::to_string(steps));
        cfg.set("opt.decay_at", std::to_string(steps * 8 / 10));

        const std::string dir = out_dir + "/cells/" + cell.slug;
        std::filesystem::create_directories(dir);
        {
            std::ofstream out(dir + "/config.txt", std::ios::trunc);
            if (!out) fail("ablate: cannot write ", dir, "/config.txt");
            out << cfg.canonical();
        }

        CellResult res;
        res.spec = &cell;
        try {
            with_precision(cfg, [&](auto tag) {
                using S = decltype(tag);
                res.report = run_cell<S>(cfg, data, dir);
                return 0;
            });
            res.ok = true;
            std::cout << "ablate: cell " << cell.slug << " done\n";
        } catch (const std::exception& e) {
            res.error = e.what();
            std::ofstream err(dir + "/error.txt", std::ios::trunc);
            err << e.what() << "\n";
            std::cout << "ablate: cell " << cell.slug << " failed: " << e.what() << "\n";
        }
        results.push_back(std::move(res));
    }

    const std::string tables = group_table(results, 0, "components") + "\n" +
                               group_table(results, 1, "fusion layer") + "\n" +
                               group_table(results, 2, "prompt interaction");
    {
        std::ofstream out(out_dir + "/ablation.txt", std::ios::trunc);
        if (!out) fail("ablate: cannot write ", out_dir, "/ablation.txt");
        out << tables;
    }
    {
        std::ofstream out(out_dir + "/ablation.json", std::ios::trunc);
        if (!out) fail("ablate: cannot write ", out_dir, "/ablation.json");
        out << "{\n";
        for (std::size_t i = 0; i < results.size(); ++i) {
            const CellResult& r = results[i];
            out << "  \"" << r.spec->slug << "\": ";
            if (r.ok)
                out << r.report.to_json();
            else
                out << "{\"error\": \"" << json_escape(r.error) << "\"}";
            out << (i + 1 < results.size() ? ",\n" : "\n");
        }
        out << "}\n";
    }
    std::cout << tables;
    std::cout << "ablate: wrote " << out_dir << "/ablation.json\n";

    for (const auto& r : results)
        if (!r.ok) return 1;
    return 0;
}

} // namespace

int run_cli(int argc, char** argv) {
    CLI::App app{"referring remote-sensing segmentation workbench"};
    app.require_subcommand(1);

    std::string config_file, sets_help = "override a config key (key=value, repeatable)";
    std::vector<std::string> sets;

    auto* synth = app.add_subcommand("synth", "generate a synthetic referring dataset");
    std::string synth_out;
    std::size_t synth_n = 0;
    synth->add_option("--config", config_file, "config file");
    synth->add_option("--set", sets, sets_help);
    synth->add_option("--out", synth_out, "output directory")->required();
    synth->add_option("--n", synth_n, "number of samples")->required();

    auto* train = app.add_subcommand("train", "train on a dataset directory");
    std::string train_data, train_out, train_resume;
    train->add_option("--config", config_file, "config file");
    train->add_option("--set", sets, sets_help);
    train->add_option("--data", train_data, "dataset directory")->required();
    train->add_option("--out", train_out, "run directory")->required();
    train->add_option("--resume", train_resume, "checkpoint to resume from");

    auto* eval = app.add_subcommand("eval", "evaluate a checkpoint on a dataset");
    std::string eval_ckpt, eval_data, eval_out;
    bool eval_overlays = false;
    eval->add_option("--checkpoint", eval_ckpt, "checkpoint file (carries its config)")
        ->required();
    eval->add_option("--set", sets, sets_help);
    eval->add_option("--data", eval_data, "dataset directory")->required();
    eval->add_option("--out", eval_out, "output directory")->required();
    eval->add_flag("--overlays", eval_overlays, "write prediction overlay images");

    auto* gradcheck =
        app.add_subcommand("gradcheck", "finite-difference audit of all gradients");
    double gc_tol = 0, gc_h = 0;
    std::size_t gc_coords = 4;
    bool gc_f32 = false;
    std::string gc_corrupt;
    gradcheck->add_option("--config", config_file, "config file (dims are shrunk)");
    gradcheck->add_option("--set", sets, sets_help);
    gradcheck->add_option("--tolerance", gc_tol, "max relative error (default per precision)");
    gradcheck->add_option("--fd-step", gc_h, "finite-difference step (default per precision)");
    gradcheck->add_option("--coords", gc_coords, "coordinates probed per tensor");
    gradcheck->add_flag("--f32", gc_f32, "check the float32 path instead of float64");
    gradcheck->add_option("--corrupt", gc_corrupt,
                          "distort one parameter's analytic gradient (self-test)");

    auto* ablate = app.add_subcommand("ablate", "train and evaluate every ablation cell");
    std::string ab_data, ab_out;
    ablate->add_option("--config", config_file, "config file");
    ablate->add_option("--set", sets, sets_help);
    ablate->add_option("--data", ab_data, "dataset directory")->required();
    ablate->add_option("--out", ab_out, "output directory")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    }

    try {
        if (*synth) return cmd_synth(load_config(config_file, sets), synth_out, synth_n);
        if (*train)
            return cmd_train(load_config(config_file, sets), train_data, train_out,
                             train_resume);
        if (*eval) return cmd_eval(eval_ckpt, sets, eval_data, eval_out, eval_overlays);
        if (*gradcheck)
            return cmd_gradcheck(config_file, sets, gc_tol, gc_h, gc_coords, gc_f32,
                                 gc_corrupt);
        if (*ablate) return cmd_ablate(load_config(config_file, sets), ab_data, ab_out);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}

} // namespace rs2
