#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "asfs/checkpoint.hpp"
#include "asfs/data.hpp"
#include "asfs/errors.hpp"
#include "asfs/masking.hpp"
#include "asfs/nn.hpp"

namespace asfs {

// Shared encoder with two decoder heads: mask-location estimation and
// feature reconstruction, trained jointly on l_m + alpha * l_r.
struct AutoencoderModel {
    Mlp encoder;    // d -> h -> z_dim, sigmoid
    Mlp dec_mask;   // z_dim -> h -> d, sigmoid
    Mlp dec_recon;  // z_dim -> h -> d, sigmoid
    double alpha = 2.0;
    double p_m = 0.2;
    std::size_t h = 0;
    std::size_t z_dim = 0;

    struct EpochLog {
        double l_m = 0.0;
        double l_r = 0.0;
        double total = 0.0;
    };
    std::vector<EpochLog> log;

    std::size_t dim() const { return encoder.in_dim(); }

    static std::size_t default_hidden(std::size_t d) {
        return std::max<std::size_t>(16, (d + 1) / 2);
    }
    static std::size_t default_latent(std::size_t d) {
        return std::max<std::size_t>(8, (d + 3) / 4);
    }

    static AutoencoderModel make(std::size_t d, std::size_t h, std::size_t z_dim, double alpha,
                                 Rng& rng) {
        if (z_dim >= d) throw ValueError("AutoencoderModel: z_dim must be < d (compression)");
        if (alpha < 0.0) throw ValueError("AutoencoderModel: alpha must be >= 0");
        AutoencoderModel m;
        m.alpha = alpha;
        m.h = h;
        m.z_dim = z_dim;
        Rng enc_rng = rng.split("encoder");
        Rng sm_rng = rng.split("dec-mask");
        Rng sr_rng = rng.split("dec-recon");
        m.encoder = Mlp::make({d, h, z_dim}, {Activation::Sigmoid, Activation::Sigmoid}, enc_rng);
        m.dec_mask = Mlp::make({z_dim, h, d}, {Activation::Sigmoid, Activation::Sigmoid}, sm_rng);
        m.dec_recon = Mlp::make({z_dim, h, d}, {Activation::Sigmoid, Activation::Sigmoid}, sr_rng);
        return m;
    }

    static AutoencoderModel make(std::size_t d, double alpha, Rng& rng) {
        return make(d, default_hidden(d), default_latent(d), alpha, rng);
    }
};

inline Matrix encode(const AutoencoderModel& model, const Matrix& x) {
    return model.encoder.forward(x);
}

// S_r(E(x)); used for denoising checks and as the selector's attention input.
inline Matrix reconstruct(const AutoencoderModel& model, const Matrix& x) {
    return model.dec_recon.forward(encode(model, x));
}

struct PretextResult {
    double total = 0.0;
    double l_m = 0.0;
    double l_r = 0.0;
    Mlp::Grads enc_grads;
    Mlp::Grads mask_grads;
    Mlp::Grads recon_grads;
};

// Joint pretext objective on a masked batch. l_m: per-feature-mean BCE of
// the mask head against the mask rows. l_r: per-feature-mean squared error
// of the reconstruction head against the ORIGINAL uncorrupted batch.
// Setting include_mask_task=false trains on alpha*l_r alone (the
// no-location ablation).
inline PretextResult pretext_loss(const AutoencoderModel& model, const MaskedBatch& masked,
                                  bool include_mask_task = true) {
    const auto enc_acts = model.encoder.forward_all(masked.corrupted);
    const Matrix& z = enc_acts.back();
    const auto mask_acts = model.dec_mask.forward_all(z);
    const auto recon_acts = model.dec_recon.forward_all(z);

    PretextResult res;
    Matrix dmask_pred(masked.mask.rows, masked.mask.cols, 0.0);
    {
        auto [lm, grad] = loss_bce(mask_acts.back(), masked.mask);
        res.l_m = lm;
        if (include_mask_task) dmask_pred = std::move(grad);
    }
    auto [lr, drecon_pred] = loss_mse(recon_acts.back(), masked.original);
    res.l_r = lr;
    res.total = (include_mask_task ? res.l_m : 0.0) + model.alpha * res.l_r;
    if (!std::isfinite(res.total))
        throw NumericalError("pretext_loss: non-finite loss (l_m=" + std::to_string(res.l_m) +
                             ", l_r=" + std::to_string(res.l_r) + ")");

    for (double& v : drecon_pred.data) v *= model.alpha;
    res.mask_grads = model.dec_mask.backward(mask_acts, dmask_pred);
    res.recon_grads = model.dec_recon.backward(recon_acts, drecon_pred);
    const Matrix dz = add(res.mask_grads.dinput, res.recon_grads.dinput);
    res.enc_grads = model.encoder.backward(enc_acts, dz);
    return res;
}

// ---- Checkpoint adapters ----

inline void autoencoder_to_checkpoint(const AutoencoderModel& model, Checkpoint& ck) {
    ck.meta["model"] = "autoencoder";
    ck.meta["alpha"] = std::to_string(model.alpha);
    ck.meta["p_m"] = std::to_string(model.p_m);
    ck.meta["h"] = std::to_string(model.h);
    ck.meta["z_dim"] = std::to_string(model.z_dim);
    ck.nets.emplace_back("encoder", model.encoder);
    ck.nets.emplace_back("dec_mask", model.dec_mask);
    ck.nets.emplace_back("dec_recon", model.dec_recon);
}

inline AutoencoderModel autoencoder_from_checkpoint(const Checkpoint& ck) {
    const Mlp* enc = ck.find_net("encoder");
    const Mlp* sm = ck.find_net("dec_mask");
    const Mlp* sr = ck.find_net("dec_recon");
    if (!enc || !sm || !sr) throw IoError("checkpoint does not contain an autoencoder");
    AutoencoderModel m;
    m.encoder = *enc;
    m.dec_mask = *sm;
    m.dec_recon = *sr;
    m.alpha = ck.meta.count("alpha") ? std::stod(ck.meta.at("alpha")) : 2.0;
    m.p_m = ck.meta.count("p_m") ? std::stod(ck.meta.at("p_m")) : 0.2;
    m.h = ck.meta.count("h") ? std::stoul(ck.meta.at("h")) : m.encoder.layers[0].out_dim();
    m.z_dim = ck.meta.count("z_dim") ? std::stoul(ck.meta.at("z_dim")) : m.encoder.out_dim();
    return m;
}

struct PretrainConfig {
    std::size_t epochs = 40;
    double learning_rate = 1e-3;
    std::size_t batch_size = 128;
    double p_m = 0.2;
    bool include_mask_task = true;  // false = no-location ablation
    std::uint64_t seed = 0;
};

// RMSprop training loop over the unlabeled partition: sample_mask ->
// corrupt -> pretext_loss -> step. Returns the per-epoch loss log in
// model.log.
inline void pretrain(AutoencoderModel& model, const Dataset& ds, const PretrainConfig& config) {
    const auto unlabeled = ds.rows_in(Split::UnlabeledTrain);
    if (unlabeled.empty()) throw ValueError("pretrain: empty unlabeled partition");
    model.p_m = config.p_m;
    model.log.clear();
    const Matrix pool = ds.gather(unlabeled);

    OptimizerState opt = OptimizerState::rmsprop(config.learning_rate);
    Rng mask_rng = Rng(config.seed).split("pretext-mask");

    std::vector<std::span<double>> params;
    for (auto v : model.encoder.param_views()) params.push_back(v);
    for (auto v : model.dec_mask.param_views()) params.push_back(v);
    for (auto v : model.dec_recon.param_views()) params.push_back(v);

    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        const auto batches =
            batch_indices(ds, Split::UnlabeledTrain, config.batch_size, config.seed, epoch);
        AutoencoderModel::EpochLog elog;
        std::size_t nbatch = 0;
        for (const auto& rows : batches) {
            // Map dataset rows to pool rows so a cell never donates to itself.
            std::vector<std::size_t> pool_rows(rows.size());
            for (std::size_t i = 0; i < rows.size(); ++i) {
                const auto it = std::lower_bound(unlabeled.begin(), unlabeled.end(), rows[i]);
                pool_rows[i] = static_cast<std::size_t>(it - unlabeled.begin());
            }
            const Matrix batch = ds.gather(rows);
            const Matrix mask = sample_mask(batch.rows, batch.cols, config.p_m, mask_rng);
            MaskedBatch masked = corrupt(batch, pool, mask, mask_rng, &pool_rows);
            masked.p_m = config.p_m;

            PretextResult res;
            try {
                res = pretext_loss(model, masked, config.include_mask_task);
            } catch (const NumericalError& e) {
                throw NumericalError("pretrain diverged at epoch " + std::to_string(epoch) +
                                     ", batch " + std::to_string(nbatch) + ": " + e.what());
            }
            std::vector<std::span<const double>> grads;
            for (auto v : Mlp::grad_views(res.enc_grads)) grads.push_back(v);
            for (auto v : Mlp::grad_views(res.mask_grads)) grads.push_back(v);
            for (auto v : Mlp::grad_views(res.recon_grads)) grads.push_back(v);
            optimizer_step(opt, params, grads);

            elog.l_m += res.l_m;
            elog.l_r += res.l_r;
            elog.total += res.total;
            ++nbatch;
        }
        elog.l_m /= static_cast<double>(nbatch);
        elog.l_r /= static_cast<double>(nbatch);
        elog.total /= static_cast<double>(nbatch);
        model.log.push_back(elog);
    }
}

} // namespace asfs
