#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "asfs/data.hpp"
#include "asfs/errors.hpp"
#include "asfs/nn.hpp"
#include "asfs/pretext.hpp"

namespace asfs {

enum class SelectorMode { Full, NoSelfsup, NoLocation };

inline const char* mode_name(SelectorMode m) {
    switch (m) {
        case SelectorMode::Full: return "full";
        case SelectorMode::NoSelfsup: return "no-selfsup";
        case SelectorMode::NoLocation: return "no-location";
    }
    return "unknown";
}

inline SelectorMode mode_from_name(const std::string& s) {
    if (s == "full") return SelectorMode::Full;
    if (s == "no-selfsup") return SelectorMode::NoSelfsup;
    if (s == "no-location") return SelectorMode::NoLocation;
    throw ValueError("unknown selector mode: " + s);
}

// Softmax-normalized per-feature weights plus the induced ranking.
struct FeatureRanking {
    std::vector<double> weights;     // sums to 1
    std::vector<std::size_t> order;  // feature indices, descending weight, ties by index
    std::size_t k = 0;
    std::vector<std::size_t> top_k;
    std::uint64_t seed = 0;
    std::string config_digest;
    std::string mode = "full";
};

// Attention transform (two dense layers, tanh hidden) feeding a batch-mean
// softmax weight vector, plus the evaluator network trained on the weighted
// features.
struct AttentionSelector {
    SelectorMode mode = SelectorMode::Full;
    DenseLayer attn1;  // H x d, tanh
    DenseLayer attn2;  // d x H, identity
    Mlp evaluator;     // d -> hidden... -> C, relu hidden, identity output
    std::optional<AutoencoderModel> autoencoder;

    std::size_t dim() const { return attn1.in_dim(); }
    std::size_t attention_hidden() const { return attn1.out_dim(); }

    bool uses_autoencoder() const { return mode != SelectorMode::NoSelfsup; }

    static AttentionSelector make(std::size_t d, std::size_t attention_hidden,
                                  const std::vector<std::size_t>& eval_hidden,
                                  std::size_t n_classes, SelectorMode mode,
                                  std::optional<AutoencoderModel> autoencoder, Rng& rng) {
        if (attention_hidden == 0) throw ValueError("AttentionSelector: H must be > 0");
        if (mode != SelectorMode::NoSelfsup) {
            if (!autoencoder) throw ValueError("AttentionSelector: mode requires an autoencoder");
            if (autoencoder->dim() != d)
                throw DimensionError("AttentionSelector: autoencoder d=" +
                                     std::to_string(autoencoder->dim()) + " != dataset d=" +
                                     std::to_string(d));
        }
        AttentionSelector sel;
        sel.mode = mode;
        Rng a_rng = rng.split("attention");
        sel.attn1 = DenseLayer::init(d, attention_hidden, Activation::Tanh, a_rng);
        sel.attn2 = DenseLayer::init(attention_hidden, d, Activation::Identity, a_rng);
        std::vector<std::size_t> dims{d};
        std::vector<Activation> acts;
        for (std::size_t hdim : eval_hidden) {
            dims.push_back(hdim);
            acts.push_back(Activation::Relu);
        }
        dims.push_back(n_classes);
        acts.push_back(Activation::Identity);
        Rng e_rng = rng.split("evaluator");
        sel.evaluator = Mlp::make(dims, acts, e_rng);
        if (mode != SelectorMode::NoSelfsup) sel.autoencoder = std::move(autoencoder);
        return sel;
    }
};

// Per-sample attention scores tau_i = W2 * tanh(W1 * r_i + b1) + b2 where
// r_i is the reconstructed representation S_r(E(x_i)) in modes with an
// autoencoder and the raw x_i otherwise.
inline Matrix attention_scores(const AttentionSelector& sel, const Matrix& batch) {
    if (batch.cols != sel.dim())
        throw DimensionError("attention_scores: batch cols " + std::to_string(batch.cols) +
                             " != d " + std::to_string(sel.dim()));
    if (sel.uses_autoencoder() && !sel.autoencoder)
        throw ValueError("attention_scores: mode requires an autoencoder but none attached");
    const Matrix r = sel.uses_autoencoder() ? reconstruct(*sel.autoencoder, batch) : batch;
    return dense_forward(sel.attn2, dense_forward(sel.attn1, r));
}

// tau_bar = column mean of the scores; a = softmax(tau_bar).
inline std::vector<double> batch_weights(const Matrix& scores) {
    if (scores.rows == 0) throw ValueError("batch_weights: empty batch");
    std::vector<double> tau_bar = column_mean(scores);
    const double mx = *std::max_element(tau_bar.begin(), tau_bar.end());
    double sum = 0.0;
    std::vector<double> a(tau_bar.size());
    for (std::size_t j = 0; j < tau_bar.size(); ++j) {
        a[j] = std::exp(tau_bar[j] - mx);
        sum += a[j];
    }
    for (double& v : a) v /= sum;
    return a;
}

struct SelectionStepResult {
    double loss = 0.0;
    std::vector<double> weights;  // a, for diagnostics
    LayerGrads attn1_grads;
    LayerGrads attn2_grads;
    Mlp::Grads eval_grads;
    Mlp::Grads enc_grads;    // empty in no-selfsup mode
    Mlp::Grads recon_grads;  // empty in no-selfsup mode
};

// One supervised step: a = softmax(mean(attention(batch))), G = batch ⊙ a,
// loss = CE(f(G), labels). Gradients flow through f, the broadcast, the
// softmax, the batch mean, the attention layers and (when present) S_r∘E.
// S_m receives no gradient.
inline SelectionStepResult selection_step(const AttentionSelector& sel, const Matrix& batch,
                                          const std::vector<int>& labels) {
    if (batch.rows == 0) throw ValueError("selection_step: empty labeled batch");
    if (labels.size() != batch.rows)
        throw DimensionError("selection_step: label count != batch rows");
    const std::size_t b = batch.rows;
    const std::size_t d = batch.cols;

    // Forward.
    std::vector<Matrix> enc_acts, recon_acts;
    Matrix r = batch;
    if (sel.uses_autoencoder()) {
        enc_acts = sel.autoencoder->encoder.forward_all(batch);
        recon_acts = sel.autoencoder->dec_recon.forward_all(enc_acts.back());
        r = recon_acts.back();
    }
    const Matrix t1 = dense_forward(sel.attn1, r);
    const Matrix tau = dense_forward(sel.attn2, t1);
    const std::vector<double> a = batch_weights(tau);
    Matrix weighted(b, d);
    for (std::size_t i = 0; i < b; ++i)
        for (std::size_t j = 0; j < d; ++j) weighted(i, j) = batch(i, j) * a[j];
    const auto eval_acts = sel.evaluator.forward_all(weighted);
    auto [loss, dlogits] = loss_categorical_ce(eval_acts.back(), labels);
    if (!std::isfinite(loss)) throw NumericalError("selection_step: non-finite loss");

    // Backward.
    SelectionStepResult res;
    res.loss = loss;
    res.weights = a;
    res.eval_grads = sel.evaluator.backward(eval_acts, dlogits);
    const Matrix& dweighted = res.eval_grads.dinput;
    std::vector<double> da(d, 0.0);
    for (std::size_t i = 0; i < b; ++i)
        for (std::size_t j = 0; j < d; ++j) da[j] += dweighted(i, j) * batch(i, j);
    double dot = 0.0;
    for (std::size_t j = 0; j < d; ++j) dot += da[j] * a[j];
    Matrix dtau(b, d);
    for (std::size_t j = 0; j < d; ++j) {
        const double dtau_bar = a[j] * (da[j] - dot);
        for (std::size_t i = 0; i < b; ++i) dtau(i, j) = dtau_bar / static_cast<double>(b);
    }
    auto [g2, dt1] = dense_backward(sel.attn2, t1, tau, dtau);
    res.attn2_grads = std::move(g2);
    auto [g1, dr] = dense_backward(sel.attn1, r, t1, dt1);
    res.attn1_grads = std::move(g1);
    if (sel.uses_autoencoder()) {
        res.recon_grads = sel.autoencoder->dec_recon.backward(recon_acts, dr);
        res.enc_grads = sel.autoencoder->encoder.backward(enc_acts, res.recon_grads.dinput);
    }
    return res;
}

struct SelectConfig {
    std::size_t epochs = 2000;
    double learning_rate = 1e-3;
    std::size_t batch_size = 128;
    std::size_t k = 5;
    bool finetune_autoencoder = true;
    bool ema_ranking = false;     // alternative to the final full-batch pass
    double ema_decay = 0.99;
    std::uint64_t seed = 0;
    std::string config_digest;
};

struct SelectorTrainLog {
    std::vector<double> epoch_loss;
};

// Adam training over the labeled partition, then one full-labeled-set pass
// to produce the final weight vector and ranking.
inline FeatureRanking train_selector(AttentionSelector& sel, const Dataset& ds,
                                     const SelectConfig& config,
                                     SelectorTrainLog* train_log = nullptr) {
    const auto labeled = ds.rows_in(Split::LabeledTrain);
    if (labeled.empty()) throw ValueError("train_selector: empty labeled partition");
    const std::size_t d = ds.dim();

    const bool tune_ae = sel.uses_autoencoder() && config.finetune_autoencoder;
    OptimizerState opt = OptimizerState::adam(config.learning_rate);
    std::vector<double> ema(d, 1.0 / static_cast<double>(d));

    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        const auto batches = batch_indices(ds, Split::LabeledTrain, config.batch_size,
                                           config.seed ^ 0x5e1ec7ULL, epoch);
        double epoch_loss = 0.0;
        for (const auto& rows : batches) {
            const Matrix batch = ds.gather(rows);
            const std::vector<int> labels = ds.gather_labels(rows);
            SelectionStepResult res;
            try {
                res = selection_step(sel, batch, labels);
            } catch (const NumericalError& e) {
                throw NumericalError("train_selector diverged at epoch " +
                                     std::to_string(epoch) + ": " + e.what());
            }
            std::vector<std::span<double>> params;
            std::vector<std::span<const double>> grads;
            params.emplace_back(sel.attn1.weights.data);
            params.emplace_back(sel.attn1.bias);
            params.emplace_back(sel.attn2.weights.data);
            params.emplace_back(sel.attn2.bias);
            grads.emplace_back(res.attn1_grads.dweights.data);
            grads.emplace_back(res.attn1_grads.dbias);
            grads.emplace_back(res.attn2_grads.dweights.data);
            grads.emplace_back(res.attn2_grads.dbias);
            for (auto v : sel.evaluator.param_views()) params.push_back(v);
            for (auto v : Mlp::grad_views(res.eval_grads)) grads.push_back(v);
            if (tune_ae) {
                for (auto v : sel.autoencoder->encoder.param_views()) params.push_back(v);
                for (auto v : Mlp::grad_views(res.enc_grads)) grads.push_back(v);
                for (auto v : sel.autoencoder->dec_recon.param_views()) params.push_back(v);
                for (auto v : Mlp::grad_views(res.recon_grads)) grads.push_back(v);
            }
            optimizer_step(opt, params, grads);
            epoch_loss += res.loss;
            if (config.ema_ranking)
                for (std::size_t j = 0; j < d; ++j)
                    ema[j] = config.ema_decay * ema[j] + (1.0 - config.ema_decay) * res.weights[j];
        }
        if (train_log) train_log->epoch_loss.push_back(epoch_loss / static_cast<double>(batches.size()));
    }

    FeatureRanking ranking;
    if (config.ema_ranking) {
        const double sum = std::accumulate(ema.begin(), ema.end(), 0.0);
        ranking.weights = ema;
        for (double& w : ranking.weights) w /= sum;
    } else {
        // One pass over the whole labeled partition as a single batch.
        ranking.weights = batch_weights(attention_scores(sel, ds.gather(labeled)));
    }
    ranking.order.resize(d);
    std::iota(ranking.order.begin(), ranking.order.end(), 0);
    std::stable_sort(ranking.order.begin(), ranking.order.end(),
                     [&](std::size_t x, std::size_t y) {
                         if (ranking.weights[x] != ranking.weights[y])
                             return ranking.weights[x] > ranking.weights[y];
                         return x < y;
                     });
    ranking.k = config.k;
    ranking.seed = config.seed;
    ranking.config_digest = config.config_digest;
    ranking.mode = mode_name(sel.mode);
    ranking.top_k.assign(ranking.order.begin(),
                         ranking.order.begin() + std::min(config.k, d));
    return ranking;
}

inline std::vector<std::size_t> select_top_k(const FeatureRanking& ranking, std::size_t k) {
    if (k < 1 || k > ranking.order.size())
        throw ValueError("select_top_k: k=" + std::to_string(k) + " out of range [1, " +
                         std::to_string(ranking.order.size()) + "]");
    return std::vector<std::size_t>(ranking.order.begin(), ranking.order.begin() + k);
}

// ---- Checkpoint adapter: selector parameters plus the attached autoencoder. ----

inline void selector_to_checkpoint(const AttentionSelector& sel, Checkpoint& ck) {
    ck.meta["model"] = "selector";
    ck.meta["mode"] = mode_name(sel.mode);
    Mlp attention;
    attention.layers = {sel.attn1, sel.attn2};
    ck.nets.emplace_back("attention", std::move(attention));
    ck.nets.emplace_back("evaluator", sel.evaluator);
    if (sel.autoencoder) autoencoder_to_checkpoint(*sel.autoencoder, ck);
}

inline AttentionSelector selector_from_checkpoint(const Checkpoint& ck) {
    const Mlp* attention = ck.find_net("attention");
    const Mlp* evaluator = ck.find_net("evaluator");
    if (!attention || attention->layers.size() != 2 || !evaluator)
        throw IoError("checkpoint does not contain a selector");
    AttentionSelector sel;
    sel.mode = mode_from_name(ck.meta.count("mode") ? ck.meta.at("mode") : "full");
    sel.attn1 = attention->layers[0];
    sel.attn2 = attention->layers[1];
    sel.evaluator = *evaluator;
    if (sel.mode != SelectorMode::NoSelfsup) sel.autoencoder = autoencoder_from_checkpoint(ck);
    return sel;
}

// ---- Ranking file: header block then (rank, feature_index, name, weight). ----

inline void save_ranking(const FeatureRanking& ranking,
                         const std::vector<std::string>& feature_names,
                         const std::string& path) {
    std::ofstream os(path);
    if (!os) throw IoError("cannot open ranking file for writing: " + path);
    os << "# asfs-ranking 1\n";
    os << "# seed " << ranking.seed << "\n";
    os << "# mode " << ranking.mode << "\n";
    os << "# k " << ranking.k << "\n";
    os << "# config_digest " << ranking.config_digest << "\n";
    os << "rank\tfeature_index\tfeature_name\tweight\n";
    os << std::setprecision(17);
    for (std::size_t r = 0; r < ranking.order.size(); ++r) {
        const std::size_t j = ranking.order[r];
        os << r << "\t" << j << "\t"
           << (j < feature_names.size() ? feature_names[j] : "f" + std::to_string(j)) << "\t"
           << ranking.weights[j] << "\n";
    }
}

inline FeatureRanking load_ranking(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw IoError("cannot open ranking file: " + path);
    FeatureRanking ranking;
    std::string line;
    std::vector<std::pair<std::size_t, double>> entries;
    bool saw_magic = false;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        if (line[0] == '#') {
            std::istringstream ls(line.substr(1));
            std::string key;
            ls >> key;
            if (key == "asfs-ranking") saw_magic = true;
            else if (key == "seed") ls >> ranking.seed;
            else if (key == "mode") ls >> ranking.mode;
            else if (key == "k") ls >> ranking.k;
            else if (key == "config_digest") ls >> ranking.config_digest;
            continue;
        }
        if (line.rfind("rank\t", 0) == 0) continue;
        std::istringstream ls(line);
        std::size_t rank, idx;
        std::string name;
        double weight;
        if (!(ls >> rank >> idx >> name >> weight))
            throw IoError("malformed ranking line: " + line);
        entries.emplace_back(idx, weight);
    }
    if (!saw_magic || entries.empty()) throw IoError("not an asfs ranking file: " + path);
    std::size_t d = 0;
    for (const auto& [idx, w] : entries) d = std::max(d, idx + 1);
    if (entries.size() != d) throw IoError("ranking file does not cover all features: " + path);
    ranking.weights.assign(d, 0.0);
    for (const auto& [idx, w] : entries) {
        ranking.order.push_back(idx);
        ranking.weights[idx] = w;
    }
    ranking.top_k.assign(ranking.order.begin(),
                         ranking.order.begin() + std::min(ranking.k, d));
    return ranking;
}

} // namespace asfs
