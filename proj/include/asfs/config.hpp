#pragma once

#include <cstdint>
#include <filesystem>
#include <iomanip>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "asfs/data.hpp"
#include "asfs/errors.hpp"
#include "asfs/harness.hpp"
#include "asfs/noise.hpp"

namespace asfs {

// Declarative run configuration, loaded from a JSON file with optional
// dotted-path command-line overrides. The digest is a stable hash of the
// canonicalized document and is embedded in every artifact.
struct RunConfig {
    nlohmann::json doc;

    static RunConfig from_file(const std::string& path,
                               const std::vector<std::string>& overrides = {}) {
        std::ifstream is(path);
        if (!is) throw ConfigError("cannot open config file: " + path);
        RunConfig cfg;
        try {
            is >> cfg.doc;
        } catch (const nlohmann::json::exception& e) {
            throw ConfigError(std::string("config parse error: ") + e.what());
        }
        cfg.apply_overrides(overrides);
        cfg.validate();
        return cfg;
    }

    static RunConfig from_json(const nlohmann::json& j) {
        RunConfig cfg;
        cfg.doc = j;
        cfg.validate();
        return cfg;
    }

    // "a.b.c=value"; the value is parsed as JSON when possible, else kept
    // as a string.
    void apply_overrides(const std::vector<std::string>& overrides) {
        for (const std::string& ov : overrides) {
            const auto eq = ov.find('=');
            if (eq == std::string::npos)
                throw ConfigError("override must look like path.to.key=value: " + ov);
            std::string pointer = "/" + ov.substr(0, eq);
            for (auto& c : pointer)
                if (c == '.') c = '/';
            const std::string raw = ov.substr(eq + 1);
            nlohmann::json value;
            try {
                value = nlohmann::json::parse(raw);
            } catch (const nlohmann::json::exception&) {
                value = raw;
            }
            doc[nlohmann::json::json_pointer(pointer)] = value;
        }
    }

    // FNV-1a over the canonical (key-sorted) serialization.
    std::string digest() const {
        const std::string canon = doc.dump();
        std::uint64_t h = 0xcbf29ce484222325ULL;
        for (unsigned char c : canon) {
            h ^= c;
            h *= 0x100000001b3ULL;
        }
        std::ostringstream os;
        os << std::hex << std::setw(16) << std::setfill('0') << h;
        return os.str();
    }

    std::uint64_t seed() const { return doc.value("seed", std::uint64_t{0}); }

    std::vector<std::uint64_t> seeds() const {
        if (doc.contains("seeds")) return doc["seeds"].get<std::vector<std::uint64_t>>();
        return {seed()};
    }

    std::string output_dir() const { return doc.value("output_dir", std::string("out")); }

    SelectorMode mode() const { return mode_from_name(doc.value("mode", std::string("full"))); }

    void validate() const {
        if (!doc.is_object()) throw ConfigError("config root must be an object");
        if (!doc.contains("dataset")) throw ConfigError("config missing 'dataset'");
        const auto& d = doc["dataset"];
        if (d.contains("csv")) {
            const std::string path = d["csv"].get<std::string>();
            if (!std::filesystem::exists(path))
                throw ConfigError("dataset csv does not exist: " + path);
        } else if (!d.contains("synthetic")) {
            throw ConfigError("dataset needs either 'csv' or 'synthetic'");
        }
        const auto& h = doc.value("hyperparameters", nlohmann::json::object());
        const double p_m = h.value("p_m", 0.2);
        if (p_m < 0.0 || p_m > 1.0) throw ConfigError("hyperparameters.p_m outside [0,1]");
        if (h.value("alpha", 2.0) < 0.0) throw ConfigError("hyperparameters.alpha must be >= 0");
        if (h.value("batch_size", 128) < 1) throw ConfigError("hyperparameters.batch_size must be >= 1");
        if (h.value("lr_pretext", 1e-3) <= 0.0 || h.value("lr_select", 1e-3) <= 0.0)
            throw ConfigError("learning rates must be > 0");
        if (h.value("k", 5) < 1) throw ConfigError("hyperparameters.k must be >= 1");
        mode();  // throws on unknown mode
        for (const auto& n : doc.value("noise", nlohmann::json::array())) noise_spec_from_json(n);
    }

    static NoiseSpec noise_spec_from_json(const nlohmann::json& j) {
        NoiseSpec spec;
        spec.kind = noise_from_name(j.at("kind").get<std::string>());
        spec.mean = j.value("mean", 0.0);
        spec.var = j.value("var", 0.01);
        spec.amount = j.value("amount", 0.05);
        spec.salt_ratio = j.value("salt_ratio", 0.5);
        spec.poisson_scale = j.value("poisson_scale", 255.0);
        spec.blur_sigma = j.value("blur_sigma", 1.0);
        if (j.contains("grid"))
            spec.grid = {j["grid"].at(0).get<std::size_t>(), j["grid"].at(1).get<std::size_t>()};
        spec.seed = j.value("seed", std::uint64_t{0});
        return spec;
    }

    std::vector<NoiseSpec> noise_specs() const {
        std::vector<NoiseSpec> out;
        for (const auto& n : doc.value("noise", nlohmann::json::array()))
            out.push_back(noise_spec_from_json(n));
        return out;
    }

    SyntheticSpec synthetic_spec() const {
        const auto& s = doc["dataset"]["synthetic"];
        SyntheticSpec spec;
        spec.n_samples = s.value("n_samples", std::size_t{1000});
        spec.n_features = s.value("n_features", std::size_t{20});
        if (s.contains("informative"))
            spec.informative = s["informative"].get<std::vector<std::size_t>>();
        else
            for (std::size_t j = 0; j < std::min<std::size_t>(5, spec.n_features - 1); ++j)
                spec.informative.push_back(j);
        const std::string rule = s.value("rule", std::string("linear_logit"));
        if (rule == "linear_logit") spec.rule = TargetRule::LinearLogit;
        else if (rule == "xor_pair") spec.rule = TargetRule::XorPair;
        else throw ConfigError("unknown synthetic rule: " + rule);
        spec.noise_level = s.value("noise_level", 0.0);
        spec.seed = s.value("seed", seed());
        return spec;
    }

    PipelineConfig pipeline_config() const {
        const auto& h = doc.value("hyperparameters", nlohmann::json::object());
        PipelineConfig pc;
        pc.mode = mode();
        pc.seed = seed();
        pc.alpha = h.value("alpha", 2.0);
        pc.attention_hidden = h.value("attention_hidden", std::size_t{300});
        pc.ae_hidden = h.value("ae_hidden", std::size_t{0});
        pc.ae_latent = h.value("ae_latent", std::size_t{0});
        if (h.contains("eval_hidden"))
            pc.eval_hidden = h["eval_hidden"].get<std::vector<std::size_t>>();
        pc.pretrain.epochs = h.value("epochs_pretext", std::size_t{40});
        pc.pretrain.learning_rate = h.value("lr_pretext", 1e-3);
        pc.pretrain.batch_size = h.value("batch_size", std::size_t{128});
        pc.pretrain.p_m = h.value("p_m", 0.2);
        pc.select.epochs = h.value("epochs_select", std::size_t{2000});
        pc.select.learning_rate = h.value("lr_select", 1e-3);
        pc.select.batch_size = h.value("batch_size", std::size_t{128});
        pc.select.k = h.value("k", std::size_t{5});
        pc.select.finetune_autoencoder = h.value("finetune_autoencoder", true);
        pc.select.ema_ranking = h.value("ema_ranking", false);
        pc.select.config_digest = digest();
        return pc;
    }

    DownstreamConfig downstream_config() const {
        const auto& e = doc.value("downstream", nlohmann::json::object());
        DownstreamConfig dc;
        if (e.contains("hidden")) dc.hidden = e["hidden"].get<std::vector<std::size_t>>();
        dc.epochs = e.value("epochs", std::size_t{200});
        dc.learning_rate = e.value("lr", 1e-3);
        dc.batch_size = e.value("batch_size", std::size_t{128});
        dc.seed = seed();
        return dc;
    }

    // Load or generate, partition, scale; noise (when configured) is applied
    // after scaling, since every noise kind expects values in [0,1].
    Dataset build_dataset(bool apply_configured_noise = false) const {
        const auto& dcfg = doc["dataset"];
        Dataset ds;
        if (dcfg.contains("csv")) {
            std::optional<std::string> label_col;
            if (dcfg.contains("label_column"))
                label_col = dcfg["label_column"].get<std::string>();
            ds = load_csv(dcfg["csv"].get<std::string>(), label_col, dcfg.value("header", true));
        } else {
            ds = generate_synthetic(synthetic_spec());
        }
        const auto& p = doc.value("partition", nlohmann::json::object());
        std::size_t n_labeled = p.value("labeled", std::size_t{0});
        std::size_t n_test = p.value("test", std::size_t{0});
        std::size_t n_unlabeled = p.value("unlabeled", std::size_t{0});
        if (n_labeled + n_test + n_unlabeled == 0) {
            // Default split: 20% labeled, 60% unlabeled, 20% test.
            n_labeled = ds.n() / 5;
            n_test = ds.n() / 5;
            n_unlabeled = ds.n() - n_labeled - n_test;
        }
        assign_partition(ds, n_labeled, n_unlabeled, n_test, seed());
        ds = minmax_scale(ds, nullptr);
        if (apply_configured_noise) ds = corrupt_dataset(ds, noise_specs());
        return ds;
    }
};

} // namespace asfs
