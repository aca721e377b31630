// asfs: semi-supervised feature selection pipeline.
//
// Subcommands: pretrain, select, evaluate, corrupt, sweep, verify.
// Exit codes: 0 success, 2 config/usage error, 3 numerical failure.

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "asfs/checkpoint.hpp"
#include "asfs/config.hpp"
#include "asfs/data.hpp"
#include "asfs/harness.hpp"
#include "asfs/noise.hpp"
#include "asfs/pretext.hpp"
#include "asfs/results.hpp"
#include "asfs/selector.hpp"

namespace fs = std::filesystem;
using namespace asfs;

namespace {

struct CommonOpts {
    std::string config_path;
    std::vector<std::string> overrides;
    bool quiet = false;
};

void add_common(CLI::App* cmd, CommonOpts& opts) {
    cmd->add_option("-c,--config", opts.config_path, "Run configuration file (JSON)")
        ->required();
    cmd->add_option("--set", opts.overrides,
                    "Dotted-path config override, e.g. --set hyperparameters.k=10");
    cmd->add_flag("-q,--quiet", opts.quiet, "Suppress progress logging");
}

RunConfig load_config(const CommonOpts& opts) {
    return RunConfig::from_file(opts.config_path, opts.overrides);
}

fs::path run_dir(const RunConfig& cfg, const std::string& kind) {
    fs::path dir = fs::path(cfg.output_dir()) / kind / cfg.digest();
    fs::create_directories(dir);
    return dir;
}

int cmd_pretrain(const CommonOpts& opts) {
    const RunConfig cfg = load_config(opts);
    if (cfg.mode() == SelectorMode::NoSelfsup)
        throw ConfigError("pretrain: mode no-selfsup has no self-supervised stage");
    const Dataset ds = cfg.build_dataset(true);
    const PipelineConfig pc = cfg.pipeline_config();
    const AutoencoderModel model = pretrain_for(ds, pc);

    if (!opts.quiet)
        for (std::size_t e = 0; e < model.log.size(); ++e)
            std::cout << "epoch " << e + 1 << " l_m " << model.log[e].l_m << " l_r "
                      << model.log[e].l_r << " total " << model.log[e].total << "\n";

    const fs::path dir = run_dir(cfg, "checkpoints");
    Checkpoint ck;
    ck.seed = cfg.seed();
    ck.meta["config_digest"] = cfg.digest();
    autoencoder_to_checkpoint(model, ck);
    const fs::path ck_path = dir / "autoencoder.ckpt";
    ck.save_file(ck_path.string());

    std::ofstream log(dir / "pretrain_loss.tsv");
    log << "epoch\tl_m\tl_r\ttotal\n" << std::setprecision(17);
    for (std::size_t e = 0; e < model.log.size(); ++e)
        log << e + 1 << "\t" << model.log[e].l_m << "\t" << model.log[e].l_r << "\t"
            << model.log[e].total << "\n";

    if (!opts.quiet) std::cout << "checkpoint written to " << ck_path.string() << "\n";
    return 0;
}

int cmd_select(const CommonOpts& opts, const std::string& checkpoint_path) {
    const RunConfig cfg = load_config(opts);
    const Dataset ds = cfg.build_dataset(true);
    const PipelineConfig pc = cfg.pipeline_config();

    std::optional<AutoencoderModel> ae;
    if (cfg.mode() != SelectorMode::NoSelfsup) {
        fs::path ck_path = checkpoint_path;
        if (ck_path.empty())
            ck_path = fs::path(cfg.output_dir()) / "checkpoints" / cfg.digest() / "autoencoder.ckpt";
        if (!fs::exists(ck_path))
            throw ConfigError("select: mode " + std::string(mode_name(cfg.mode())) +
                              " requires a pretrained checkpoint (looked at " + ck_path.string() +
                              "); run `asfs pretrain` first or pass --checkpoint");
        ae = autoencoder_from_checkpoint(Checkpoint::load_file(ck_path.string()));
        if (ae->dim() != ds.dim())
            throw ConfigError("select: checkpoint d=" + std::to_string(ae->dim()) +
                              " does not match dataset d=" + std::to_string(ds.dim()));
    }

    Rng rng = Rng(pc.seed).split("selector-init");
    AttentionSelector sel =
        AttentionSelector::make(ds.dim(), pc.attention_hidden, pc.eval_hidden,
                                std::max(ds.num_classes(), 2), pc.mode, std::move(ae), rng);
    SelectConfig sc = pc.select;
    sc.seed = pc.seed;
    const FeatureRanking ranking = train_selector(sel, ds, sc);

    const fs::path dir = run_dir(cfg, "rankings");
    const fs::path ranking_path = dir / "ranking.tsv";
    save_ranking(ranking, ds.feature_names, ranking_path.string());
    Checkpoint ck;
    ck.seed = cfg.seed();
    ck.meta["config_digest"] = cfg.digest();
    selector_to_checkpoint(sel, ck);
    ck.save_file((dir / "selector.ckpt").string());

    std::cout << "top-" << ranking.top_k.size() << ":";
    for (std::size_t j : ranking.top_k) std::cout << " " << j;
    std::cout << "\n";
    if (!opts.quiet) std::cout << "ranking written to " << ranking_path.string() << "\n";
    return 0;
}

int cmd_evaluate(const CommonOpts& opts, const std::string& ranking_path, long k_arg) {
    const RunConfig cfg = load_config(opts);
    const Dataset ds = cfg.build_dataset(true);
    const auto test_rows = ds.rows_in(Split::Test);
    for (std::size_t i : test_rows)
        if (ds.label(i) < 0) throw ConfigError("evaluate: test rows are missing labels");

    fs::path rpath = ranking_path;
    if (rpath.empty())
        rpath = fs::path(cfg.output_dir()) / "rankings" / cfg.digest() / "ranking.tsv";
    const FeatureRanking ranking = load_ranking(rpath.string());
    const std::size_t k = k_arg > 0 ? static_cast<std::size_t>(k_arg)
                                    : (ranking.k > 0 ? ranking.k : ranking.order.size());

    DownstreamConfig de = cfg.downstream_config();
    const EvalMetrics m = downstream_eval(ds, select_top_k(ranking, k), de);
    std::cout << "accuracy " << m.accuracy << "\n";
    std::cout << "macro_f1 " << m.macro_f1 << "\n";

    const fs::path dir = run_dir(cfg, "results");
    std::ofstream os(dir / "records.jsonl", std::ios::app);
    RunRecord rec;
    rec.tags["command"] = "evaluate";
    rec.tags["k"] = std::to_string(k);
    rec.tags["mode"] = ranking.mode;
    rec.metrics["accuracy"] = m.accuracy;
    rec.metrics["macro_f1"] = m.macro_f1;
    write_record(os, rec, cfg.digest());
    return 0;
}

int cmd_corrupt(const CommonOpts& opts, const std::string& out_path) {
    const RunConfig cfg = load_config(opts);
    Dataset ds = cfg.build_dataset(false);
    const auto specs = cfg.noise_specs();
    if (specs.empty()) throw ConfigError("corrupt: config declares no noise specs");
    ds = corrupt_dataset(ds, specs);
    fs::path path = out_path;
    if (path.empty()) path = run_dir(cfg, "results") / "corrupted.csv";
    save_csv(ds, path.string());
    if (!opts.quiet) std::cout << "corrupted dataset written to " << path.string() << "\n";
    return 0;
}

int cmd_sweep(const CommonOpts& opts, const std::string& kind) {
    const RunConfig cfg = load_config(opts);
    const Dataset ds = cfg.build_dataset(false);
    const auto& sw = cfg.doc.value("sweep", nlohmann::json::object());

    SweepConfig scfg;
    scfg.pipeline = cfg.pipeline_config();
    scfg.eval = cfg.downstream_config();
    scfg.seeds = cfg.seeds();
    scfg.ablation = sw.value("ablation", false);
    if (cfg.doc["dataset"].contains("synthetic"))
        scfg.informative = cfg.synthetic_spec().informative;

    const fs::path dir = run_dir(cfg, "results");
    std::ofstream records(dir / "records.jsonl");
    scfg.on_record = [&](const RunRecord& rec) { write_record(records, rec, cfg.digest()); };

    ExperimentResult result;
    if (kind == "noise") {
        std::vector<std::size_t> k_range;
        if (sw.contains("k_range")) k_range = sw["k_range"].get<std::vector<std::size_t>>();
        else k_range = {scfg.pipeline.select.k};
        result = noise_robustness_sweep(ds, cfg.noise_specs(), k_range, scfg);
    } else if (kind == "budget") {
        if (!sw.contains("budgets")) throw ConfigError("sweep budget: config lacks sweep.budgets");
        const auto budgets = sw["budgets"].get<std::vector<std::size_t>>();
        const Dataset noisy = corrupt_dataset(ds, cfg.noise_specs());
        result = label_budget_sweep(noisy, budgets, scfg);
    } else {
        throw ConfigError("sweep: kind must be 'noise' or 'budget'");
    }
    result.config_digest = cfg.digest();
    write_table_file(result, (dir / "table.tsv").string());
    if (!opts.quiet)
        std::cout << result.runs.size() << " runs written to " << dir.string() << "\n";
    return 0;
}

int cmd_verify(const CommonOpts& opts, const std::vector<std::string>& artifacts) {
    const RunConfig cfg = load_config(opts);
    const std::string digest = cfg.digest();
    bool ok = true;
    for (const std::string& path : artifacts) {
        std::string embedded;
        if (path.ends_with(".ckpt")) {
            const Checkpoint ck = Checkpoint::load_file(path);
            embedded = ck.meta.count("config_digest") ? ck.meta.at("config_digest") : "";
        } else if (path.ends_with(".jsonl")) {
            std::ifstream is(path);
            std::string line;
            while (std::getline(is, line)) {
                if (line.empty()) continue;
                const auto j = nlohmann::json::parse(line);
                embedded = j.value("config_digest", std::string());
                if (embedded != digest) break;
            }
        } else {
            embedded = load_ranking(path).config_digest;
        }
        const bool match = embedded == digest;
        std::cout << (match ? "ok" : "MISMATCH") << " " << path << "\n";
        ok = ok && match;
    }
    if (!ok) throw ConfigError("verify: config digest mismatch");
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"A-SFS: attention-based semi-supervised feature selection"};
    app.require_subcommand(1);

    CommonOpts pretrain_opts, select_opts, eval_opts, corrupt_opts, sweep_opts, verify_opts;
    std::string checkpoint_path, ranking_path, corrupt_out, sweep_kind = "noise";
    long k_arg = 0;
    std::vector<std::string> artifacts;

    auto* pre = app.add_subcommand("pretrain", "Train the self-supervised autoencoder");
    add_common(pre, pretrain_opts);

    auto* sel = app.add_subcommand("select", "Train the attention selector and rank features");
    add_common(sel, select_opts);
    sel->add_option("--checkpoint", checkpoint_path, "Pretrained autoencoder checkpoint");

    auto* ev = app.add_subcommand("evaluate", "Score a feature subset with the downstream classifier");
    add_common(ev, eval_opts);
    ev->add_option("--ranking", ranking_path, "Ranking file (defaults to the run's ranking)");
    ev->add_option("-k", k_arg, "Subset size (defaults to the ranking's k)");

    auto* cor = app.add_subcommand("corrupt", "Apply configured noise and export the dataset as CSV");
    add_common(cor, corrupt_opts);
    cor->add_option("-o,--out", corrupt_out, "Output CSV path");

    auto* sw = app.add_subcommand("sweep", "Run a noise-robustness or label-budget sweep");
    add_common(sw, sweep_opts);
    sw->add_option("--kind", sweep_kind, "Sweep kind: noise | budget");

    auto* ver = app.add_subcommand("verify", "Check artifact config digests against the config");
    add_common(ver, verify_opts);
    ver->add_option("artifacts", artifacts, "Artifact files to verify")->required();

    try {
        app.parse(argc, argv);
        if (pre->parsed()) return cmd_pretrain(pretrain_opts);
        if (sel->parsed()) return cmd_select(select_opts, checkpoint_path);
        if (ev->parsed()) return cmd_evaluate(eval_opts, ranking_path, k_arg);
        if (cor->parsed()) return cmd_corrupt(corrupt_opts, corrupt_out);
        if (sw->parsed()) return cmd_sweep(sweep_opts, sweep_kind);
        if (ver->parsed()) return cmd_verify(verify_opts, artifacts);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    } catch (const NumericalError& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return 3;
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 2;
}
