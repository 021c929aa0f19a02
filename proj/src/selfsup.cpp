#include "sgem/selfsup.hpp"

#include <fstream>
#include <numeric>

#include "sgem/layers.hpp"
#include "sgem/parallel.hpp"
#include "sgem/rng.hpp"

namespace sgem {

void TrainConfig::validate() const {
    require(epochs >= 1, "train config: epochs must be >= 1");
    require(batch_size >= 1, "train config: batch_size must be >= 1");
    require(lr >= 0.0f, "train config: lr must be non-negative");
}

TrainResult train_encoder_decoder(const std::vector<GestureWindow>& windows,
                                  const TrainConfig& cfg) {
    cfg.validate();
    // a single window is allowed: the memorization oracle trains on one
    require(!windows.empty(), "training needs at least 1 window");

    const int n = int(windows.size());
    Normalizer norm = Normalizer::fit(windows);

    std::vector<TensorXf> targets;
    targets.reserve(std::size_t(n));
    for (const auto& w : windows) {
        TensorXf t = w.kinematics;
        norm.transform(t);
        targets.push_back(std::move(t));
    }

    auto [enc, dec] = init_params(cfg.seed, cfg.model);
    AdamConfig adam;
    adam.lr = cfg.lr;

    const int bs = std::min(cfg.batch_size, n);
    std::vector<ModelGrads> sample_grads(static_cast<std::size_t>(bs));
    for (auto& g : sample_grads) g.init_like(enc, dec);
    std::vector<double> sample_loss(static_cast<std::size_t>(bs));
    std::vector<double> window_loss(static_cast<std::size_t>(n));

    std::vector<int> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), 0);

    TrainResult result;
    long step = 0;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        if (cfg.shuffle) {
            Rng rng(derive_seed(cfg.seed, "shuffle/" + std::to_string(epoch)));
            rng.shuffle(order);
        }

        for (int b0 = 0; b0 < n; b0 += bs) {
            const int bn = std::min(bs, n - b0);

            parallel_for(bn, cfg.threads, [&](int j) {
                const int wi = order[std::size_t(b0 + j)];
                sample_grads[std::size_t(j)].set_zero();

                EncoderCache ec;
                DecoderCache dc;
                auto rep = encode_cached(windows[std::size_t(wi)].flow, enc, ec);
                auto out = decode_cached(rep, dec, dc);
                auto mse = mse_loss(out, targets[std::size_t(wi)]);
                sample_loss[std::size_t(j)] = double(mse.loss);

                auto grad_rep = decode_backward(dc, dec, mse.grad_pred, sample_grads[std::size_t(j)]);
                encode_backward(ec, enc, grad_rep, sample_grads[std::size_t(j)]);
            });

            // reduce per-sample gradients in index order (thread-count invariant)
            const float inv = 1.0f / float(bn);
            for (int j = 0; j < bn; ++j) {
                if (!std::isfinite(sample_loss[std::size_t(j)]))
                    throw TrainingError("non-finite loss at epoch " + std::to_string(epoch) +
                                        ", batch " + std::to_string(b0 / bs));
                window_loss[std::size_t(order[std::size_t(b0 + j)])] =
                    sample_loss[std::size_t(j)];
                for (auto& [name, g] : sample_grads[std::size_t(j)].g) {
                    if (name.starts_with("enc."))
                        enc.p.grad(name).array() += inv * g.array();
                    else
                        dec.p.grad(name).array() += inv * g.array();
                }
            }

            ++step;
            adam_step(enc.p, adam, step);
            adam_step(dec.p, adam, step);
        }

        // epoch mean in window-index order, independent of the shuffle
        double sum = 0;
        for (int i = 0; i < n; ++i) sum += window_loss[std::size_t(i)];
        result.loss_curve.push_back(sum / double(n));
    }

    if (!cfg.loss_log_path.empty()) write_loss_csv(cfg.loss_log_path, result.loss_curve);

    result.encoder = std::move(enc);
    result.decoder = std::move(dec);
    result.normalizer = std::move(norm);
    return result;
}

void write_loss_csv(const std::filesystem::path& path, const std::vector<double>& curve) {
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw IoError("cannot open for writing: " + path.string());
    os << "epoch,loss\n";
    char buf[64];
    for (std::size_t e = 0; e < curve.size(); ++e) {
        std::snprintf(buf, sizeof buf, "%zu,%.9g\n", e, curve[e]);
        os << buf;
    }
    if (!os) throw IoError("write failed: " + path.string());
}

EmbeddedDataset embed_dataset(const std::vector<GestureWindow>& windows,
                              const EncoderParams& enc, int threads) {
    require(!windows.empty(), "embed_dataset: empty window list");
    const int n = int(windows.size());

    EmbeddedDataset ds;
    ds.X.resize(n, enc.cfg.embed_dim);
    ds.gesture.resize(std::size_t(n));
    ds.skill.resize(std::size_t(n));
    ds.trial.resize(std::size_t(n));
    ds.task.resize(std::size_t(n));

    parallel_for(n, threads, [&](int i) {
        const auto& w = windows[std::size_t(i)];
        auto rep = encode(w.flow, enc);
        ds.X.row(i) = rep.vector().transpose();
        ds.gesture[std::size_t(i)] = w.gesture;
        ds.skill[std::size_t(i)] = w.skill;
        ds.trial[std::size_t(i)] = w.trial_id;
        ds.task[std::size_t(i)] = w.task;
    });
    return ds;
}

} // namespace sgem
