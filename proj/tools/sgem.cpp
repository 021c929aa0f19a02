// sgem: subcommand-based experiment runner for self-supervised gesture
// representation learning. Stages are resumable and fully seeded; rerunning
// a stage with unchanged inputs is a no-op unless --force is given.
//
// Exit codes: 0 success, 1 validation error, 2 stage-order error, 3 gate
// failure (selftest / strict report), 4 I/O error.

#include <CLI11.hpp>

#include <iostream>

#include "sgem/parallel.hpp"
#include "sgem/pipeline.hpp"

using namespace sgem;

namespace {

struct CliState {
    std::string config_path;
    std::string out_dir;
    std::string task;
    std::uint64_t seed = 0;
    bool seed_set = false;
    int threads = 0;
    bool force = false;
};

RunConfig build_config(const CliState& s) {
    RunConfig cfg;
    if (!s.config_path.empty()) cfg = RunConfig::from_json_file(s.config_path);
    if (!s.out_dir.empty()) cfg.out_dir = s.out_dir;
    if (s.seed_set) cfg.master_seed = s.seed;
    if (s.threads > 0) cfg.threads = s.threads;
    return cfg;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"self-supervised gesture representations from optical flow"};
    app.require_subcommand(1);

    CliState st;
    app.add_option("--config", st.config_path, "JSON configuration file");
    app.add_option("--out-dir", st.out_dir, "output directory (overrides config)");
    app.add_option("--seed", st.seed, "master seed (overrides config)")
        ->each([&](const std::string&) { st.seed_set = true; });
    app.add_option("--threads", st.threads,
                   "worker threads (overrides SGEM_THREADS and config)");
    app.add_flag("--force", st.force, "rerun stages even when up to date");
    app.add_option("--task", st.task, "restrict per-task stages to one task");

    int trials = 0, duration = 0, epochs = 0;
    bool dump_frames = false;
    auto* gen = app.add_subcommand("gen-data", "generate synthetic trials and windows");
    gen->add_option("--trials", trials, "trials per task");
    gen->add_option("--duration", duration, "frames per trial");
    gen->add_flag("--dump-frames", dump_frames, "also write per-trial FRMS dumps");

    std::string root;
    auto* ingest = app.add_subcommand("ingest", "window a JIGSAWS-format directory tree");
    ingest->add_option("--root", root, "directory containing per-task JIGSAWS trees");

    auto* train = app.add_subcommand("train-encoder", "self-supervised encoder training");
    train->add_option("--epochs", epochs, "training epochs");

    std::string checkpoint;
    auto* embed = app.add_subcommand("embed", "embed windows with a frozen encoder");
    embed->add_option("--checkpoint", checkpoint, "checkpoint override (transfer)");

    auto* eval_g = app.add_subcommand("eval-gesture", "gesture recognition experiment");
    auto* eval_s = app.add_subcommand("eval-skill", "skill recognition experiment");

    std::string source, target;
    auto* transfer = app.add_subcommand("transfer", "cross-task gesture recognition");
    transfer->add_option("--source", source, "encoder task");
    transfer->add_option("--target", target, "windows task");

    auto* project = app.add_subcommand("project", "2-D projection and silhouettes");

    bool strict = false;
    auto* report = app.add_subcommand("report", "aggregate tables, scatters, gates");
    report->add_flag("--strict", strict, "exit 3 when a gate fails");

    auto* selftest = app.add_subcommand("selftest", "gradient/flow/boosting oracles");

    CLI11_PARSE(app, argc, argv);

    try {
        StageOptions opt;
        opt.force = st.force;
        if (!st.task.empty()) opt.only_task = st.task;

        if (selftest->parsed()) {
            return run_selftest(resolve_threads(st.threads)) ? 0 : 3;
        }

        RunConfig cfg = build_config(st);
        if (gen->parsed()) {
            if (trials > 0) cfg.trials_per_task = trials;
            if (duration > 0) cfg.duration_frames = duration;
            if (dump_frames) cfg.dump_frames = true;
            stage_gen_data(cfg, opt);
        } else if (ingest->parsed()) {
            cfg.source = "jigsaws";
            if (!root.empty()) cfg.jigsaws_root = root;
            stage_ingest(cfg, opt);
        } else if (train->parsed()) {
            if (epochs > 0) cfg.train.epochs = epochs;
            stage_train(cfg, opt);
        } else if (embed->parsed()) {
            std::optional<std::filesystem::path> override_path;
            if (!checkpoint.empty()) override_path = checkpoint;
            stage_embed(cfg, opt, override_path);
        } else if (eval_g->parsed()) {
            stage_eval_gesture(cfg, opt);
        } else if (eval_s->parsed()) {
            stage_eval_skill(cfg, opt);
        } else if (transfer->parsed()) {
            std::optional<std::pair<std::string, std::string>> pair;
            if (!source.empty() || !target.empty()) {
                if (source.empty() || target.empty())
                    throw ConfigError("transfer needs both --source and --target");
                pair = {{source, target}};
            }
            stage_transfer(cfg, opt, pair);
        } else if (project->parsed()) {
            stage_project(cfg, opt);
        } else if (report->parsed()) {
            const bool ok = stage_report(cfg);
            if (strict && !ok) return 3;
        }
        return 0;
    } catch (const StageOrderError& e) {
        std::cerr << "stage-order error: " << e.what() << "\n";
        return 2;
    } catch (const IoError& e) {
        std::cerr << "i/o error: " << e.what() << "\n";
        return 4;
    } catch (const ParseError& e) {
        std::cerr << "i/o error: " << e.what() << "\n";
        return 4;
    } catch (const ConfigError& e) {
        std::cerr << "validation error: " << e.what() << "\n";
        return 1;
    } catch (const ContractError& e) {
        std::cerr << "validation error: " << e.what() << "\n";
        return 1;
    } catch (const DataError& e) {
        std::cerr << "validation error: " << e.what() << "\n";
        return 1;
    } catch (const TrainingError& e) {
        std::cerr << "training error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
