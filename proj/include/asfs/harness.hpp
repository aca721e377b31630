#pragma once

#include <algorithm>
#include <chrono>
#include <functional>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <numeric>
#include <set>
#include <string>
#include <vector>

#include "asfs/data.hpp"
#include "asfs/errors.hpp"
#include "asfs/noise.hpp"
#include "asfs/pretext.hpp"
#include "asfs/selector.hpp"

namespace asfs {

// ---- Pipeline glue: pretrain (when the mode wants it) then select. ----

struct PipelineConfig {
    SelectorMode mode = SelectorMode::Full;
    PretrainConfig pretrain;
    SelectConfig select;
    std::size_t attention_hidden = 300;
    std::vector<std::size_t> eval_hidden{64, 32};
    std::size_t ae_hidden = 0;  // 0 = width heuristic
    std::size_t ae_latent = 0;
    double alpha = 2.0;
    std::uint64_t seed = 0;
};

inline AutoencoderModel pretrain_for(const Dataset& ds, const PipelineConfig& cfg) {
    Rng rng = Rng(cfg.seed).split("autoencoder-init");
    const std::size_t d = ds.dim();
    const std::size_t h = cfg.ae_hidden ? cfg.ae_hidden : AutoencoderModel::default_hidden(d);
    const std::size_t z = cfg.ae_latent ? cfg.ae_latent : AutoencoderModel::default_latent(d);
    AutoencoderModel model = AutoencoderModel::make(d, h, z, cfg.alpha, rng);
    PretrainConfig pc = cfg.pretrain;
    pc.seed = cfg.seed;
    pc.include_mask_task = cfg.mode != SelectorMode::NoLocation;
    pretrain(model, ds, pc);
    return model;
}

inline FeatureRanking run_pipeline(const Dataset& ds, const PipelineConfig& cfg,
                                   AttentionSelector* out_selector = nullptr) {
    std::optional<AutoencoderModel> ae;
    if (cfg.mode != SelectorMode::NoSelfsup) ae = pretrain_for(ds, cfg);
    Rng rng = Rng(cfg.seed).split("selector-init");
    AttentionSelector sel =
        AttentionSelector::make(ds.dim(), cfg.attention_hidden, cfg.eval_hidden,
                                std::max(ds.num_classes(), 2), cfg.mode, std::move(ae), rng);
    SelectConfig sc = cfg.select;
    sc.seed = cfg.seed;
    FeatureRanking ranking = train_selector(sel, ds, sc);
    if (out_selector) *out_selector = std::move(sel);
    return ranking;
}

// ---- Downstream evaluation ----

struct DownstreamConfig {
    std::vector<std::size_t> hidden{64, 32};
    std::size_t epochs = 200;
    double learning_rate = 1e-3;
    std::size_t batch_size = 128;
    std::uint64_t seed = 0;
};

struct EvalMetrics {
    double accuracy = 0.0;
    double macro_f1 = 0.0;
};

// Unweighted mean of per-class F1 over classes present in the reference.
inline double macro_f1_score(const std::vector<int>& truth, const std::vector<int>& pred) {
    if (truth.size() != pred.size() || truth.empty())
        throw ValueError("macro_f1_score: size mismatch or empty");
    std::set<int> classes(truth.begin(), truth.end());
    double sum = 0.0;
    for (int c : classes) {
        std::size_t tp = 0, fp = 0, fn = 0;
        for (std::size_t i = 0; i < truth.size(); ++i) {
            if (pred[i] == c && truth[i] == c) ++tp;
            else if (pred[i] == c) ++fp;
            else if (truth[i] == c) ++fn;
        }
        const double denom = 2.0 * tp + fp + fn;
        sum += denom == 0.0 ? 0.0 : 2.0 * static_cast<double>(tp) / denom;
    }
    return sum / static_cast<double>(classes.size());
}

// Trains the internal dense classifier on labeled-train rows restricted to
// `subset` and scores the test partition. Stands in for the paper's
// gradient-boosting evaluator; absolute benchmark numbers are out of scope.
inline EvalMetrics downstream_eval(const Dataset& ds, const std::vector<std::size_t>& subset,
                                   const DownstreamConfig& cfg) {
    if (subset.empty()) throw ValueError("downstream_eval: empty feature subset");
    for (std::size_t j : subset)
        if (j >= ds.dim()) throw ValueError("downstream_eval: feature index out of range");
    const auto train_rows = ds.rows_in(Split::LabeledTrain);
    const auto test_rows = ds.rows_in(Split::Test);
    if (train_rows.empty()) throw ValueError("downstream_eval: no labeled training rows");
    if (test_rows.empty()) throw ValueError("downstream_eval: no test rows");
    for (std::size_t i : test_rows)
        if (ds.label(i) < 0) throw ValueError("downstream_eval: test rows are missing labels");

    auto restrict = [&](const std::vector<std::size_t>& rows) {
        Matrix m(rows.size(), subset.size());
        for (std::size_t i = 0; i < rows.size(); ++i)
            for (std::size_t j = 0; j < subset.size(); ++j)
                m(i, j) = ds.features(rows[i], subset[j]);
        return m;
    };
    const Matrix x_test = restrict(test_rows);
    const std::vector<int> y_test = ds.gather_labels(test_rows);
    const int n_classes = std::max(ds.num_classes(), 2);

    Rng rng = Rng(cfg.seed).split("downstream");
    std::vector<std::size_t> dims{subset.size()};
    std::vector<Activation> acts;
    for (std::size_t h : cfg.hidden) {
        dims.push_back(h);
        acts.push_back(Activation::Relu);
    }
    dims.push_back(static_cast<std::size_t>(n_classes));
    acts.push_back(Activation::Identity);
    Mlp net = Mlp::make(dims, acts, rng);
    OptimizerState opt = OptimizerState::adam(cfg.learning_rate);
    auto params = net.param_views();

    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        const auto batches =
            batch_indices(ds, Split::LabeledTrain, cfg.batch_size, cfg.seed ^ 0xd05eULL, epoch);
        for (const auto& rows : batches) {
            const Matrix x = restrict(rows);
            const std::vector<int> y = ds.gather_labels(rows);
            const auto acts_fwd = net.forward_all(x);
            auto [loss, dlogits] = loss_categorical_ce(acts_fwd.back(), y);
            const auto grads = net.backward(acts_fwd, dlogits);
            optimizer_step(opt, params, Mlp::grad_views(grads));
        }
    }

    const Matrix logits = net.forward(x_test);
    std::vector<int> pred(test_rows.size());
    std::size_t correct = 0;
    for (std::size_t i = 0; i < logits.rows; ++i) {
        std::size_t best = 0;
        for (std::size_t j = 1; j < logits.cols; ++j)
            if (logits(i, j) > logits(i, best)) best = j;
        pred[i] = static_cast<int>(best);
        if (pred[i] == y_test[i]) ++correct;
    }
    EvalMetrics m;
    m.accuracy = static_cast<double>(correct) / static_cast<double>(test_rows.size());
    m.macro_f1 = macro_f1_score(y_test, pred);
    return m;
}

// ---- Fisher score baseline ----

// Per-feature Fisher criterion over labeled training rows (all labeled rows
// when no partition is assigned). Zero within-class variance with a nonzero
// numerator yields +inf, ranking the feature above all finite scores.
inline std::vector<double> fisher_score(const Dataset& ds) {
    std::vector<std::size_t> rows = ds.rows_in(Split::LabeledTrain);
    if (rows.empty())
        for (std::size_t i = 0; i < ds.n(); ++i)
            if (ds.label(i) >= 0) rows.push_back(i);
    std::map<int, std::vector<std::size_t>> by_class;
    for (std::size_t i : rows)
        if (ds.label(i) >= 0) by_class[ds.label(i)].push_back(i);
    if (by_class.size() < 2) throw ValueError("fisher_score: need at least 2 classes");

    const std::size_t d = ds.dim();
    std::vector<double> scores(d, 0.0);
    for (std::size_t j = 0; j < d; ++j) {
        double mu = 0.0;
        std::size_t n = 0;
        for (const auto& [cls, idx] : by_class)
            for (std::size_t i : idx) {
                mu += ds.features(i, j);
                ++n;
            }
        mu /= static_cast<double>(n);
        double numer = 0.0, denom = 0.0;
        for (const auto& [cls, idx] : by_class) {
            double mu_c = 0.0;
            for (std::size_t i : idx) mu_c += ds.features(i, j);
            mu_c /= static_cast<double>(idx.size());
            double var_c = 0.0;
            for (std::size_t i : idx) {
                const double dlt = ds.features(i, j) - mu_c;
                var_c += dlt * dlt;
            }
            var_c /= static_cast<double>(idx.size());
            numer += static_cast<double>(idx.size()) * (mu_c - mu) * (mu_c - mu);
            denom += static_cast<double>(idx.size()) * var_c;
        }
        scores[j] = denom == 0.0
                        ? (numer == 0.0 ? 0.0 : std::numeric_limits<double>::infinity())
                        : numer / denom;
    }
    return scores;
}

// ---- Results ----

struct RunRecord {
    std::map<std::string, std::string> tags;
    std::map<std::string, double> metrics;
};

struct ExperimentResult {
    std::string run_id;
    std::string config_digest;
    std::vector<std::uint64_t> seeds;
    std::vector<RunRecord> runs;
    double wall_clock_seconds = 0.0;
};

inline double median(std::vector<double> v) {
    if (v.empty()) throw ValueError("median: empty");
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

inline double stddev(const std::vector<double>& v) {
    if (v.empty()) throw ValueError("stddev: empty");
    const double mu = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
    double acc = 0.0;
    for (double x : v) acc += (x - mu) * (x - mu);
    return std::sqrt(acc / static_cast<double>(v.size()));
}

inline std::vector<double> collect_metric(const ExperimentResult& res, const std::string& name,
                                          const std::map<std::string, std::string>& match = {}) {
    std::vector<double> out;
    for (const auto& run : res.runs) {
        bool ok = true;
        for (const auto& [k, v] : match) {
            auto it = run.tags.find(k);
            if (it == run.tags.end() || it->second != v) {
                ok = false;
                break;
            }
        }
        auto it = run.metrics.find(name);
        if (ok && it != run.metrics.end()) out.push_back(it->second);
    }
    return out;
}

inline double precision_at_k(const std::vector<std::size_t>& top_k,
                             const std::vector<std::size_t>& informative) {
    if (top_k.empty()) throw ValueError("precision_at_k: empty subset");
    const std::set<std::size_t> truth(informative.begin(), informative.end());
    std::size_t hits = 0;
    for (std::size_t j : top_k) hits += truth.count(j);
    return static_cast<double>(hits) / static_cast<double>(top_k.size());
}

// ---- Cross-validation ----

// Stratified fold ids (0..folds-1) for the given labeled rows.
inline std::vector<std::size_t> stratified_folds(const Dataset& ds,
                                                 const std::vector<std::size_t>& rows,
                                                 std::size_t folds, std::uint64_t seed) {
    if (folds < 2) throw ValueError("stratified_folds: folds must be >= 2");
    std::map<int, std::vector<std::size_t>> by_class;  // positions into rows
    for (std::size_t p = 0; p < rows.size(); ++p) by_class[ds.label(rows[p])].push_back(p);
    std::vector<std::size_t> fold_of(rows.size(), 0);
    Rng rng = Rng(seed).split("cv-folds");
    std::size_t next = 0;
    for (auto& [cls, positions] : by_class) {
        rng.shuffle(positions);
        for (std::size_t p : positions) fold_of[p] = next++ % folds;
    }
    return fold_of;
}

// `repeats` repetitions of `folds`-fold CV over the labeled rows; the
// unlabeled pool stays fixed. The full pipeline (pretrain -> select -> eval)
// runs per fold.
inline ExperimentResult cross_validate(const Dataset& ds, const PipelineConfig& cfg,
                                       const DownstreamConfig& eval_cfg, std::size_t folds,
                                       std::size_t repeats) {
    std::vector<std::size_t> labeled;
    for (std::size_t i = 0; i < ds.n(); ++i)
        if (ds.label(i) >= 0 && ds.partition[i] != Split::UnlabeledTrain) labeled.push_back(i);
    if (labeled.size() < folds)
        throw ValueError("cross_validate: fewer labeled rows than folds");

    const auto t0 = std::chrono::steady_clock::now();
    ExperimentResult result;
    result.config_digest = cfg.select.config_digest;
    for (std::size_t rep = 0; rep < repeats; ++rep) {
        const std::uint64_t rep_seed = Rng(cfg.seed).split("cv-repeat").split(rep).seed();
        const auto fold_of = stratified_folds(ds, labeled, folds, rep_seed);
        for (std::size_t fold = 0; fold < folds; ++fold) {
            Dataset fold_ds = ds;
            for (std::size_t p = 0; p < labeled.size(); ++p)
                fold_ds.partition[labeled[p]] =
                    fold_of[p] == fold ? Split::Test : Split::LabeledTrain;
            PipelineConfig fold_cfg = cfg;
            fold_cfg.seed = rep_seed ^ fold;
            const FeatureRanking ranking = run_pipeline(fold_ds, fold_cfg);
            DownstreamConfig de = eval_cfg;
            de.seed = fold_cfg.seed;
            const EvalMetrics m =
                downstream_eval(fold_ds, select_top_k(ranking, cfg.select.k), de);
            RunRecord rec;
            rec.tags["repeat"] = std::to_string(rep);
            rec.tags["fold"] = std::to_string(fold);
            rec.tags["mode"] = mode_name(cfg.mode);
            rec.metrics["accuracy"] = m.accuracy;
            rec.metrics["macro_f1"] = m.macro_f1;
            result.runs.push_back(std::move(rec));
            result.seeds.push_back(fold_cfg.seed);
        }
    }
    result.wall_clock_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return result;
}

// ---- Sweeps ----

struct SweepConfig {
    PipelineConfig pipeline;
    DownstreamConfig eval;
    std::vector<std::uint64_t> seeds{0};
    bool ablation = false;  // also run the no-selfsup variant
    std::vector<std::size_t> informative;  // ground truth, when known
    std::function<void(const RunRecord&)> on_record;  // flushed per completed cell
};

inline Dataset corrupt_dataset(const Dataset& ds, const std::vector<NoiseSpec>& specs) {
    Dataset out = ds;
    for (const auto& spec : specs) out.features = apply_noise(out.features, spec);
    return out;
}

namespace detail {

inline void run_pipeline_cell(const Dataset& ds, const SweepConfig& cfg, SelectorMode mode,
                              std::size_t k, std::uint64_t seed,
                              std::map<std::string, std::string> tags, ExperimentResult& result) {
    PipelineConfig pc = cfg.pipeline;
    pc.mode = mode;
    pc.seed = seed;
    pc.select.k = k;
    const FeatureRanking ranking = run_pipeline(ds, pc);
    DownstreamConfig de = cfg.eval;
    de.seed = seed;
    const EvalMetrics m = downstream_eval(ds, select_top_k(ranking, k), de);
    RunRecord rec;
    rec.tags = std::move(tags);
    rec.tags["mode"] = mode_name(mode);
    rec.tags["k"] = std::to_string(k);
    rec.tags["seed"] = std::to_string(seed);
    rec.metrics["accuracy"] = m.accuracy;
    rec.metrics["macro_f1"] = m.macro_f1;
    if (!cfg.informative.empty())
        rec.metrics["precision_at_k"] = precision_at_k(ranking.top_k, cfg.informative);
    if (cfg.on_record) cfg.on_record(rec);
    result.runs.push_back(std::move(rec));
}

} // namespace detail

// For each noise spec (clean data when the list is empty) and each k, run
// the pipeline on the corrupted dataset and record downstream metrics.
inline ExperimentResult noise_robustness_sweep(const Dataset& ds,
                                               const std::vector<NoiseSpec>& specs,
                                               const std::vector<std::size_t>& k_range,
                                               const SweepConfig& cfg) {
    const auto t0 = std::chrono::steady_clock::now();
    ExperimentResult result;
    result.config_digest = cfg.pipeline.select.config_digest;
    result.seeds = cfg.seeds;
    std::vector<std::optional<NoiseSpec>> cells;
    if (specs.empty()) cells.push_back(std::nullopt);
    for (const auto& s : specs) cells.push_back(s);
    for (const auto& cell : cells) {
        const Dataset noisy = cell ? corrupt_dataset(ds, {*cell}) : ds;
        const std::string noise_tag = cell ? noise_name(cell->kind) : "clean";
        for (std::size_t k : k_range) {
            for (std::uint64_t seed : cfg.seeds) {
                detail::run_pipeline_cell(noisy, cfg, cfg.pipeline.mode, k, seed,
                                          {{"noise", noise_tag}}, result);
                if (cfg.ablation)
                    detail::run_pipeline_cell(noisy, cfg, SelectorMode::NoSelfsup, k, seed,
                                              {{"noise", noise_tag}}, result);
            }
        }
    }
    result.wall_clock_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return result;
}

// Restrict the labeled-train partition to `budget` rows (stratified).
inline Dataset with_label_budget(const Dataset& ds, std::size_t budget, std::uint64_t seed) {
    const auto labeled = ds.rows_in(Split::LabeledTrain);
    if (budget > labeled.size())
        throw ValueError("label budget " + std::to_string(budget) + " exceeds available " +
                         std::to_string(labeled.size()) + " labeled rows");
    Dataset out = ds;
    std::map<int, std::size_t> avail;
    for (std::size_t i : labeled) ++avail[ds.label(i)];
    auto counts = detail::stratified_counts(avail, labeled.size(), budget);
    std::vector<std::size_t> order = labeled;
    Rng rng = Rng(seed).split("label-budget");
    rng.shuffle(order);
    for (std::size_t i : order) {
        auto& left = counts[ds.label(i)];
        if (left > 0) --left;
        else out.partition[i] = Split::Unassigned;
    }
    return out;
}

// Pipeline per label budget with a fixed unlabeled pool.
inline ExperimentResult label_budget_sweep(const Dataset& ds,
                                           const std::vector<std::size_t>& budgets,
                                           const SweepConfig& cfg) {
    const auto t0 = std::chrono::steady_clock::now();
    ExperimentResult result;
    result.config_digest = cfg.pipeline.select.config_digest;
    result.seeds = cfg.seeds;
    for (std::size_t budget : budgets) {
        for (std::uint64_t seed : cfg.seeds) {
            const Dataset budget_ds = with_label_budget(ds, budget, seed);
            detail::run_pipeline_cell(budget_ds, cfg, cfg.pipeline.mode, cfg.pipeline.select.k,
                                      seed, {{"budget", std::to_string(budget)}}, result);
            if (cfg.ablation)
                detail::run_pipeline_cell(budget_ds, cfg, SelectorMode::NoSelfsup,
                                          cfg.pipeline.select.k, seed,
                                          {{"budget", std::to_string(budget)}}, result);
        }
    }
    result.wall_clock_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return result;
}

} // namespace asfs
