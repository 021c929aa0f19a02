#pragma once

// Config-driven, resumable experiment stages. Every stage writes its artifact
// plus a manifest (config digest, derived seed, input digests); reruns with
// unchanged inputs are no-ops unless forced. The master seed fixes every
// stage seed via derive_seed(master, stage-name).

#include <filesystem>
#include <optional>

#include <json.hpp>

#include "sgem/analysis.hpp"
#include "sgem/experiments.hpp"

namespace sgem {

struct RunConfig {
    std::vector<std::string> tasks = {"synthA", "synthB"};

    // data source
    std::string source = "synthetic"; // "synthetic" | "jigsaws"
    std::string jigsaws_root;         // parent of per-task JIGSAWS directories
    int trials_per_task = 12;
    int duration_frames = 1000;
    bool dump_frames = false; // also write per-trial FRMS dumps

    FarnebackParams flow;
    TrainConfig train;  // epochs defaults to 50 at desk scale (see ctor)
    GBTConfig gbt;
    SplitConfig split;

    std::filesystem::path out_dir = "runs/out";
    std::uint64_t master_seed = 7;
    int threads = 0; // 0: SGEM_THREADS or hardware

    RunConfig() { train.epochs = 50; }

    static RunConfig from_json_file(const std::filesystem::path& path);
    static RunConfig from_json(const nlohmann::json& j);
    nlohmann::json to_json() const;
    Digest digest() const; // sha256 of the canonical JSON dump
    void validate() const;

    std::filesystem::path task_dir(const std::string& task) const { return out_dir / task; }
};

// windows artifact: <task>/windows.sgem + windows.json (labels + trial manifest)
void save_windows(const std::filesystem::path& dir, const std::string& task,
                  const std::vector<GestureWindow>& windows, const nlohmann::json& extra,
                  const Digest& digest);
std::vector<GestureWindow> load_windows(const std::filesystem::path& dir);

// embeddings artifact: <task>/embeddings.sgem + embeddings.json
void save_embeddings(const std::filesystem::path& dir, const EmbeddedDataset& ds,
                     const Digest& digest);
EmbeddedDataset load_embeddings(const std::filesystem::path& dir);

// stage entry points; each returns the paths it produced (empty when skipped)
struct StageOptions {
    bool force = false;
    std::optional<std::string> only_task; // restrict multi-task stages
};

void stage_gen_data(const RunConfig& cfg, const StageOptions& opt);
void stage_ingest(const RunConfig& cfg, const StageOptions& opt);
void stage_train(const RunConfig& cfg, const StageOptions& opt);
void stage_embed(const RunConfig& cfg, const StageOptions& opt,
                 const std::optional<std::filesystem::path>& checkpoint_override = {});
void stage_eval_gesture(const RunConfig& cfg, const StageOptions& opt);
void stage_eval_skill(const RunConfig& cfg, const StageOptions& opt);
void stage_transfer(const RunConfig& cfg, const StageOptions& opt,
                    const std::optional<std::pair<std::string, std::string>>& pair = {});
void stage_project(const RunConfig& cfg, const StageOptions& opt);

/// Aggregates existing artifacts into report/; returns false when a gate
/// fails (the CLI maps that to exit code 3 under --strict).
bool stage_report(const RunConfig& cfg);

/// Gradient, flow, and boosting oracle suites; returns false on any failure.
bool run_selftest(int threads);

/// Thrown artifact requirement: names the command that must run first.
void require_artifact(const std::filesystem::path& path, const std::string& producer);

} // namespace sgem
