#pragma once

// The 5-split evaluation protocol over frozen representations: gesture
// recognition, skill recognition, and cross-task transfer, reported as
// mean +- std of accuracy / precision / recall / F1 (support-weighted).

#include <filesystem>
#include <optional>

#include "sgem/gbt.hpp"
#include "sgem/selfsup.hpp"

namespace sgem {

struct SplitMetrics {
    double accuracy = 0, precision = 0, recall = 0, f1 = 0;
};

/// Support-weighted per-class precision/recall/F1 plus plain accuracy.
/// Classes absent from y_true contribute zero support.
SplitMetrics evaluate(const std::vector<std::string>& y_true,
                      const std::vector<std::string>& y_pred,
                      const std::vector<std::string>& classes);

struct Stat {
    double mean = 0, stddev = 0; // population std over splits
};

struct Metrics {
    std::string dataset;
    Stat accuracy, precision, recall, f1;
    std::vector<SplitMetrics> splits;
};

enum class SplitBy { Window, Trial };

struct SplitConfig {
    int n_splits = 5;
    double test_fraction = 0.2;
    std::uint64_t seed = 0;
    SplitBy split_by = SplitBy::Window;
};

/// Runs n seeded random train/test splits (resampled until the train side
/// covers every class, up to 100 attempts each), training a fresh GBT per
/// split. Trial-level splitting keeps all windows of a trial together.
Metrics run_split_experiment(const MatrixRM<float>& X, const std::vector<std::string>& y,
                             const std::string& dataset_name, const GBTConfig& gbt,
                             const SplitConfig& split,
                             const std::vector<std::string>* trial_ids = nullptr);

/// Embeds task-B windows with the task-A encoder from `checkpoint_path`
/// (never retraining it) and runs the split experiment on the result.
Metrics transfer_experiment(const std::filesystem::path& checkpoint_path,
                            const std::vector<GestureWindow>& windows,
                            const std::string& dataset_name, const GBTConfig& gbt,
                            const SplitConfig& split, int threads = 1);

// CSV/JSON emission; one row per Metrics entry, paper-table column layout.
void write_metrics_csv(const std::filesystem::path& path, const std::vector<Metrics>& rows);
void write_metrics_json(const std::filesystem::path& path, const std::vector<Metrics>& rows);
std::vector<Metrics> read_metrics_json(const std::filesystem::path& path);

} // namespace sgem
