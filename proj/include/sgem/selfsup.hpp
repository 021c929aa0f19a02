#pragma once

// Self-supervised training loop: minimize the MSE between decoded
// representations and the (z-scored) kinematics targets, and batch embedding
// of datasets with a frozen encoder.

#include <string>
#include <vector>

#include "sgem/model.hpp"

namespace sgem {

struct TrainConfig {
    int epochs = 1000; // desk-scale acceptance runs override this to 50
    int batch_size = 16;
    float lr = 1e-3f;
    std::uint64_t seed = 0;
    bool shuffle = true;
    std::string loss_log_path; // optional CSV "epoch,loss"
    int threads = 1;
    ModelConfig model;

    void validate() const;
};

struct TrainResult {
    EncoderParams encoder;
    DecoderParams decoder;
    Normalizer normalizer;
    std::vector<double> loss_curve; // per-epoch mean training loss
};

/// Fits the normalizer on the given windows, then runs seeded mini-batch
/// training; per-sample gradients are reduced in sample-index order, so the
/// result is bit-identical for any thread count. Throws TrainingError with
/// the epoch/batch index if the loss turns non-finite.
TrainResult train_encoder_decoder(const std::vector<GestureWindow>& windows,
                                  const TrainConfig& cfg);

void write_loss_csv(const std::filesystem::path& path, const std::vector<double>& curve);

struct EmbeddedDataset {
    MatrixRM<float> X; // n x d
    std::vector<std::string> gesture;
    std::vector<Skill> skill;
    std::vector<std::string> trial;
    std::vector<std::string> task;
};

/// Row i = encode(windows[i].flow); parameters are never mutated and label
/// order is preserved.
EmbeddedDataset embed_dataset(const std::vector<GestureWindow>& windows,
                              const EncoderParams& enc, int threads = 1);

} // namespace sgem
