#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "asfs/errors.hpp"
#include "asfs/matrix.hpp"
#include "asfs/rng.hpp"

namespace asfs {

enum class Split { Unassigned, LabeledTrain, UnlabeledTrain, Test };

inline const char* split_name(Split s) {
    switch (s) {
        case Split::Unassigned: return "unassigned";
        case Split::LabeledTrain: return "labeled-train";
        case Split::UnlabeledTrain: return "unlabeled-train";
        case Split::Test: return "test";
    }
    return "unknown";
}

// Tabular dataset: N x d feature matrix, optional integer class labels,
// per-column scaler metadata and a train/test partition tag per row.
struct Dataset {
    Matrix features;                 // N x d
    std::vector<int> labels;         // -1 where absent; size N when any labels exist
    std::vector<std::string> feature_names;
    std::vector<std::pair<double, double>> scaler;  // per-column (min, max); empty if unscaled
    std::vector<Split> partition;    // size N

    std::size_t n() const { return features.rows; }
    std::size_t dim() const { return features.cols; }

    bool has_labels() const { return !labels.empty(); }
    bool is_scaled() const { return !scaler.empty(); }

    int label(std::size_t row) const { return labels.empty() ? -1 : labels[row]; }

    int num_classes() const {
        int c = 0;
        for (int y : labels) c = std::max(c, y + 1);
        return c;
    }

    std::vector<std::size_t> rows_in(Split s) const {
        std::vector<std::size_t> out;
        for (std::size_t i = 0; i < partition.size(); ++i)
            if (partition[i] == s) out.push_back(i);
        return out;
    }

    Matrix gather(const std::vector<std::size_t>& rows) const {
        Matrix m(rows.size(), dim());
        for (std::size_t i = 0; i < rows.size(); ++i)
            for (std::size_t j = 0; j < dim(); ++j) m(i, j) = features(rows[i], j);
        return m;
    }

    std::vector<int> gather_labels(const std::vector<std::size_t>& rows) const {
        std::vector<int> out(rows.size());
        for (std::size_t i = 0; i < rows.size(); ++i) out[i] = label(rows[i]);
        return out;
    }
};

// RFC-4180 subset: comma separated, decimal floats, optional header row.
inline Dataset load_csv(const std::string& path, const std::optional<std::string>& label_column,
                        bool has_header) {
    std::ifstream is(path);
    if (!is) throw IoError("cannot open CSV: " + path);
    std::vector<std::vector<std::string>> rows;
    std::string line;
    while (std::getline(is, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() && rows.empty()) continue;
        std::vector<std::string> cells;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) cells.push_back(cell);
        if (!line.empty() && line.back() == ',') cells.push_back("");
        rows.push_back(std::move(cells));
    }
    if (rows.empty()) throw IoError("empty CSV: " + path);

    std::vector<std::string> header;
    std::size_t first_data = 0;
    if (has_header) {
        header = rows[0];
        first_data = 1;
        if (rows.size() == 1) throw IoError("CSV has a header but no data rows: " + path);
    } else {
        for (std::size_t j = 0; j < rows[0].size(); ++j) header.push_back("f" + std::to_string(j));
    }

    std::size_t label_idx = header.size();  // sentinel = no label column
    if (label_column) {
        if (!has_header) throw ConfigError("label column requested but CSV has no header");
        auto it = std::find(header.begin(), header.end(), *label_column);
        if (it == header.end())
            throw ConfigError("label column '" + *label_column + "' not found in CSV header");
        label_idx = static_cast<std::size_t>(it - header.begin());
    }

    const std::size_t ncols = header.size();
    const std::size_t d = label_column ? ncols - 1 : ncols;
    Dataset ds;
    ds.features = Matrix(rows.size() - first_data, d);
    if (label_column) ds.labels.assign(ds.features.rows, -1);
    for (std::size_t j = 0, fj = 0; j < ncols; ++j)
        if (j != label_idx) ds.feature_names.push_back(has_header ? header[j] : "f" + std::to_string(fj)), ++fj;

    for (std::size_t r = first_data; r < rows.size(); ++r) {
        const auto& cells = rows[r];
        if (cells.size() != ncols)
            throw IoError("ragged CSV row " + std::to_string(r) + " in " + path + ": expected " +
                          std::to_string(ncols) + " cells, got " + std::to_string(cells.size()));
        std::size_t fj = 0;
        for (std::size_t j = 0; j < ncols; ++j) {
            const std::string& cell = cells[j];
            std::size_t consumed = 0;
            double v;
            try {
                v = std::stod(cell, &consumed);
            } catch (const std::exception&) {
                throw IoError("non-numeric cell at row " + std::to_string(r) + ", col " +
                              std::to_string(j) + ": '" + cell + "'");
            }
            if (consumed != cell.size())
                throw IoError("non-numeric cell at row " + std::to_string(r) + ", col " +
                              std::to_string(j) + ": '" + cell + "'");
            if (j == label_idx) {
                const int y = static_cast<int>(std::llround(v));
                if (y < 0 || std::abs(v - y) > 1e-9)
                    throw ValueError("label at row " + std::to_string(r) +
                                     " is not a non-negative integer: " + cell);
                ds.labels[r - first_data] = y;
            } else {
                ds.features(r - first_data, fj++) = v;
            }
        }
    }
    ds.partition.assign(ds.features.rows, Split::Unassigned);
    return ds;
}

inline void save_csv(const Dataset& ds, const std::string& path) {
    std::ofstream os(path);
    if (!os) throw IoError("cannot open CSV for writing: " + path);
    os << std::setprecision(17);
    for (std::size_t j = 0; j < ds.dim(); ++j) os << ds.feature_names[j] << (j + 1 == ds.dim() ? "" : ",");
    if (ds.has_labels()) os << ",y";
    os << "\n";
    for (std::size_t i = 0; i < ds.n(); ++i) {
        for (std::size_t j = 0; j < ds.dim(); ++j) os << ds.features(i, j) << (j + 1 == ds.dim() ? "" : ",");
        if (ds.has_labels()) os << "," << ds.labels[i];
        os << "\n";
    }
}

// MinMax scaling to [0,1], x' = (x - min) / (max - min). Fit on the union of
// train partitions (all rows when no partition is assigned); test rows are
// transformed with the same parameters and clamped to [0,1]. Constant
// columns map to 0 and a warning is emitted.
inline Dataset minmax_scale(const Dataset& input, std::ostream* warn = &std::cerr) {
    Dataset ds = input;
    const std::size_t d = ds.dim();
    ds.scaler.assign(d, {0.0, 0.0});
    std::vector<std::size_t> fit_rows;
    for (std::size_t i = 0; i < ds.n(); ++i)
        if (ds.partition[i] == Split::LabeledTrain || ds.partition[i] == Split::UnlabeledTrain)
            fit_rows.push_back(i);
    if (fit_rows.empty())
        for (std::size_t i = 0; i < ds.n(); ++i) fit_rows.push_back(i);

    for (std::size_t j = 0; j < d; ++j) {
        double lo = ds.features(fit_rows[0], j), hi = lo;
        for (std::size_t i : fit_rows) {
            lo = std::min(lo, ds.features(i, j));
            hi = std::max(hi, ds.features(i, j));
        }
        ds.scaler[j] = {lo, hi};
        if (hi == lo) {
            if (warn) *warn << "warning: constant column " << j << " scaled to 0\n";
            for (std::size_t i = 0; i < ds.n(); ++i) ds.features(i, j) = 0.0;
        } else {
            for (std::size_t i = 0; i < ds.n(); ++i)
                ds.features(i, j) =
                    std::clamp((ds.features(i, j) - lo) / (hi - lo), 0.0, 1.0);
        }
    }
    return ds;
}

// Inverse of minmax_scale for values produced from fit rows.
inline Matrix inverse_scale(const Dataset& ds, const Matrix& scaled) {
    if (!ds.is_scaled()) throw ValueError("inverse_scale: dataset has no scaler");
    if (scaled.cols != ds.dim()) throw DimensionError("inverse_scale: column mismatch");
    Matrix out = scaled;
    for (std::size_t j = 0; j < ds.dim(); ++j) {
        const auto [lo, hi] = ds.scaler[j];
        for (std::size_t i = 0; i < out.rows; ++i)
            out(i, j) = hi == lo ? lo : lo + out(i, j) * (hi - lo);
    }
    return out;
}

namespace detail {

// Proportional per-class allocation, largest remainder.
inline std::map<int, std::size_t> stratified_counts(const std::map<int, std::size_t>& available,
                                                    std::size_t total_avail, std::size_t want) {
    std::map<int, std::size_t> out;
    std::vector<std::pair<double, int>> remainders;
    std::size_t assigned = 0;
    for (const auto& [cls, avail] : available) {
        const double exact =
            static_cast<double>(want) * static_cast<double>(avail) / static_cast<double>(total_avail);
        const std::size_t base = static_cast<std::size_t>(std::floor(exact));
        out[cls] = std::min(base, avail);
        assigned += out[cls];
        remainders.emplace_back(exact - std::floor(exact), cls);
    }
    std::sort(remainders.begin(), remainders.end(), [](const auto& a, const auto& b) {
        if (a.first != b.first) return a.first > b.first;
        return a.second < b.second;
    });
    for (const auto& [rem, cls] : remainders) {
        if (assigned >= want) break;
        if (out[cls] < available.at(cls)) {
            ++out[cls];
            ++assigned;
        }
    }
    return out;
}

} // namespace detail

// Seeded shuffle then split into labeled-train / unlabeled-train / test.
// Labeled and test partitions are stratified by class.
inline void assign_partition(Dataset& ds, std::size_t n_labeled, std::size_t n_unlabeled,
                             std::size_t n_test, std::uint64_t seed) {
    if (n_labeled + n_unlabeled + n_test > ds.n())
        throw ValueError("partition: requested " +
                         std::to_string(n_labeled + n_unlabeled + n_test) + " rows, have " +
                         std::to_string(ds.n()));
    if ((n_labeled > 0 || n_test > 0) && !ds.has_labels())
        throw ValueError("partition: labeled/test rows requested but dataset has no labels");

    std::vector<std::size_t> order(ds.n());
    for (std::size_t i = 0; i < ds.n(); ++i) order[i] = i;
    Rng rng(seed);
    rng.shuffle(order);
    ds.partition.assign(ds.n(), Split::Unassigned);

    auto take_stratified = [&](std::size_t want, Split tag) {
        std::map<int, std::size_t> avail;
        std::size_t total = 0;
        for (std::size_t i : order)
            if (ds.partition[i] == Split::Unassigned && ds.label(i) >= 0) {
                ++avail[ds.label(i)];
                ++total;
            }
        if (total < want)
            throw ValueError(std::string("partition: not enough labeled rows for ") +
                             split_name(tag));
        auto counts = detail::stratified_counts(avail, total, want);
        for (std::size_t i : order) {
            if (ds.partition[i] != Split::Unassigned || ds.label(i) < 0) continue;
            auto& left = counts[ds.label(i)];
            if (left > 0) {
                ds.partition[i] = tag;
                --left;
            }
        }
    };

    if (n_labeled > 0) take_stratified(n_labeled, Split::LabeledTrain);
    if (n_test > 0) take_stratified(n_test, Split::Test);
    std::size_t taken = 0;
    for (std::size_t i : order) {
        if (taken == n_unlabeled) break;
        if (ds.partition[i] == Split::Unassigned) {
            ds.partition[i] = Split::UnlabeledTrain;
            ++taken;
        }
    }
}

// Seeded per-epoch shuffle into minibatches; the final short batch is kept.
inline std::vector<std::vector<std::size_t>> batch_indices(const Dataset& ds, Split tag,
                                                           std::size_t batch_size,
                                                           std::uint64_t seed, std::size_t epoch) {
    if (batch_size == 0) throw ValueError("batches: batch_size must be >= 1");
    std::vector<std::size_t> rows = ds.rows_in(tag);
    if (rows.empty())
        throw ValueError(std::string("batches: empty partition ") + split_name(tag));
    Rng rng = Rng(seed).split("batches").split(epoch);
    rng.shuffle(rows);
    std::vector<std::vector<std::size_t>> out;
    for (std::size_t start = 0; start < rows.size(); start += batch_size) {
        const std::size_t end = std::min(start + batch_size, rows.size());
        out.emplace_back(rows.begin() + start, rows.begin() + end);
    }
    return out;
}

// ---- Synthetic ground-truth generator ----

enum class TargetRule { LinearLogit, XorPair };

struct SyntheticSpec {
    std::size_t n_samples = 1000;
    std::size_t n_features = 20;
    std::vector<std::size_t> informative;  // S*
    TargetRule rule = TargetRule::LinearLogit;
    double noise_level = 0.0;  // stddev of logit noise
    std::uint64_t seed = 0;
};

// Features in [0,1]; the label depends only on the informative columns.
// The table has the low-rank cross-column structure real tabular data has
// (and that the self-supervised stage exists to exploit): noise columns mix
// two shared latent factors, and informative columns are related
// measurements of one underlying quantity — each blends a private component
// with a factor shared only among themselves, so a corrupted informative
// cell can be partially restored from its siblings. Linear-logit: positive
// graded weights on centered informative columns (every column associates
// with the label in the same direction) plus optional Gaussian logit noise,
// thresholded at 0.
inline Dataset generate_synthetic(const SyntheticSpec& spec) {
    if (spec.informative.empty() || spec.informative.size() >= spec.n_features)
        throw ValueError("generate_synthetic: need 0 < |S*| < d");
    for (std::size_t j : spec.informative)
        if (j >= spec.n_features) throw ValueError("generate_synthetic: informative index out of range");
    if (spec.rule == TargetRule::XorPair && spec.informative.size() < 2)
        throw ValueError("generate_synthetic: XOR rule needs >= 2 informative columns");

    Rng rng = Rng(spec.seed).split("synthetic");
    Dataset ds;
    ds.features = Matrix(spec.n_samples, spec.n_features);
    ds.labels.assign(spec.n_samples, -1);
    for (std::size_t j = 0; j < spec.n_features; ++j)
        ds.feature_names.push_back("f" + std::to_string(j));

    std::vector<bool> is_informative(spec.n_features, false);
    for (std::size_t j : spec.informative) is_informative[j] = true;

    // Fixed per-column mixing weight and orientation.
    Rng mix_rng = rng.split("mixing");
    std::vector<double> mix(spec.n_features, 0.0);
    std::vector<bool> flip(spec.n_features, false);
    for (std::size_t j = 0; j < spec.n_features; ++j) {
        mix[j] = mix_rng.uniform();
        if (!is_informative[j]) flip[j] = mix_rng.bernoulli(0.5);
    }

    // Bell-shaped variate on [0,1] (mean of three uniforms); measurement-like
    // marginals that concentrate around mid-range.
    const auto bell = [](Rng& r) { return (r.uniform() + r.uniform() + r.uniform()) / 3.0; };

    // Values sit in a tight mid-range band with occasional full-range
    // glitches, the shape min-max scaling gives a heavy-tailed measurement.
    Rng glitch_rng = rng.split("glitches");
    const auto place = [&](double centered) { return 0.5 + 0.35 * (centered - 0.5); };
    const auto cell = [&](double centered) {
        return glitch_rng.bernoulli(0.02) ? glitch_rng.uniform() : place(centered);
    };

    // Noise columns mix two shared latent factors (v1, v2) and carry no label
    // information. Informative columns blend a private component u_j (which
    // keeps each one individually necessary for the label) with a factor c
    // shared only among informative columns; a single informative column
    // stays purely private.
    const std::size_t k_true = spec.informative.size();
    const double shared_load = k_true >= 2 ? 0.4 : 0.0;
    Rng factor_rng = rng.split("factors");
    for (std::size_t i = 0; i < spec.n_samples; ++i) {
        const double v1 = bell(factor_rng);
        const double v2 = bell(factor_rng);
        const double c = bell(factor_rng);
        for (std::size_t j = 0; j < spec.n_features; ++j) {
            if (is_informative[j]) {
                ds.features(i, j) = (1.0 - shared_load) * bell(rng) + shared_load * c;
            } else {
                const double v = mix[j] * v1 + (1.0 - mix[j]) * v2;
                ds.features(i, j) = cell(flip[j] ? 1.0 - v : v);
            }
        }
    }

    // Positive graded weights: the shared factor adds coherently, so every
    // informative column keeps a strong same-direction label association.
    std::vector<double> weights(k_true);
    for (std::size_t t = 0; t < k_true; ++t) weights[t] = 6.0 + 2.0 * static_cast<double>(t);

    Rng noise_rng = rng.split("label-noise");
    for (std::size_t i = 0; i < spec.n_samples; ++i) {
        if (spec.rule == TargetRule::LinearLogit) {
            double logit = 0.0;
            for (std::size_t t = 0; t < k_true; ++t)
                logit += weights[t] * (ds.features(i, spec.informative[t]) - 0.5);
            logit += noise_rng.normal(0.0, spec.noise_level);
            ds.labels[i] = logit > 0.0 ? 1 : 0;
        } else {
            const bool a = ds.features(i, spec.informative[0]) > 0.5;
            const bool b = ds.features(i, spec.informative[1]) > 0.5;
            bool y = a != b;
            if (spec.noise_level > 0.0 && noise_rng.uniform() < spec.noise_level) y = !y;
            ds.labels[i] = y ? 1 : 0;
        }
    }
    ds.partition.assign(spec.n_samples, Split::Unassigned);
    return ds;
}

} // namespace asfs
