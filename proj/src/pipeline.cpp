#include "sgem/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <set>

#include "sgem/gradcheck.hpp"
#include "sgem/parallel.hpp"
#include "sgem/rng.hpp"
#include "sgem/serialize.hpp"

namespace sgem {

namespace fs = std::filesystem;
using nlohmann::json;

// ---- config -----------------------------------------------------------------

RunConfig RunConfig::from_json_file(const fs::path& path) {
    std::ifstream is(path);
    if (!is) throw IoError("cannot open config: " + path.string());
    json j;
    try {
        is >> j;
    } catch (const json::exception& e) {
        throw ConfigError("config " + path.string() + " is not valid JSON: " + e.what());
    }
    return from_json(j);
}

RunConfig RunConfig::from_json(const json& j) {
    RunConfig c;
    c.tasks = j.value("tasks", c.tasks);
    if (j.contains("data")) {
        const auto& d = j.at("data");
        c.source = d.value("source", c.source);
        c.jigsaws_root = d.value("jigsaws_root", c.jigsaws_root);
        c.trials_per_task = d.value("trials_per_task", c.trials_per_task);
        c.duration_frames = d.value("duration_frames", c.duration_frames);
        c.dump_frames = d.value("dump_frames", c.dump_frames);
    }
    if (j.contains("flow")) {
        const auto& f = j.at("flow");
        c.flow.pyramid_levels = f.value("pyramid_levels", c.flow.pyramid_levels);
        c.flow.pyramid_scale = f.value("pyramid_scale", c.flow.pyramid_scale);
        c.flow.window = f.value("window", c.flow.window);
        c.flow.iterations = f.value("iterations", c.flow.iterations);
        c.flow.poly_n = f.value("poly_n", c.flow.poly_n);
        c.flow.poly_sigma = f.value("poly_sigma", c.flow.poly_sigma);
    }
    if (j.contains("train")) {
        const auto& t = j.at("train");
        c.train.epochs = t.value("epochs", c.train.epochs);
        c.train.batch_size = t.value("batch_size", c.train.batch_size);
        c.train.lr = t.value("lr", c.train.lr);
        c.train.shuffle = t.value("shuffle", c.train.shuffle);
        c.train.model.embed_dim = t.value("embed_dim", c.train.model.embed_dim);
    }
    if (j.contains("gbt")) {
        const auto& g = j.at("gbt");
        c.gbt.rounds = g.value("rounds", c.gbt.rounds);
        c.gbt.max_depth = g.value("max_depth", c.gbt.max_depth);
        c.gbt.shrinkage = g.value("shrinkage", c.gbt.shrinkage);
        c.gbt.l2_lambda = g.value("l2_lambda", c.gbt.l2_lambda);
        c.gbt.min_samples_leaf = g.value("min_samples_leaf", c.gbt.min_samples_leaf);
    }
    if (j.contains("split")) {
        const auto& s = j.at("split");
        c.split.n_splits = s.value("n_splits", c.split.n_splits);
        c.split.test_fraction = s.value("test_fraction", c.split.test_fraction);
        const std::string by = s.value("split_by", std::string("window"));
        if (by == "window")
            c.split.split_by = SplitBy::Window;
        else if (by == "trial")
            c.split.split_by = SplitBy::Trial;
        else
            throw ConfigError("split_by must be 'window' or 'trial', got '" + by + "'");
    }
    c.out_dir = fs::path(j.value("out_dir", c.out_dir.string()));
    c.master_seed = j.value("seed", c.master_seed);
    c.threads = j.value("threads", c.threads);
    return c;
}

json RunConfig::to_json() const {
    return json{
        {"tasks", tasks},
        {"data",
         {{"source", source},
          {"jigsaws_root", jigsaws_root},
          {"trials_per_task", trials_per_task},
          {"duration_frames", duration_frames},
          {"dump_frames", dump_frames}}},
        {"flow",
         {{"pyramid_levels", flow.pyramid_levels},
          {"pyramid_scale", flow.pyramid_scale},
          {"window", flow.window},
          {"iterations", flow.iterations},
          {"poly_n", flow.poly_n},
          {"poly_sigma", flow.poly_sigma}}},
        {"train",
         {{"epochs", train.epochs},
          {"batch_size", train.batch_size},
          {"lr", train.lr},
          {"shuffle", train.shuffle},
          {"embed_dim", train.model.embed_dim}}},
        {"gbt",
         {{"rounds", gbt.rounds},
          {"max_depth", gbt.max_depth},
          {"shrinkage", gbt.shrinkage},
          {"l2_lambda", gbt.l2_lambda},
          {"min_samples_leaf", gbt.min_samples_leaf}}},
        {"split",
         {{"n_splits", split.n_splits},
          {"test_fraction", split.test_fraction},
          {"split_by", split.split_by == SplitBy::Trial ? "trial" : "window"}}},
        {"out_dir", out_dir.string()},
        {"seed", master_seed},
        {"threads", threads}};
}

Digest RunConfig::digest() const {
    // out_dir and threads do not affect results, so they stay out of the digest
    json j = to_json();
    j.erase("out_dir");
    j.erase("threads");
    return sha256(j.dump());
}

void RunConfig::validate() const {
    std::vector<std::string> problems;
    if (tasks.empty()) problems.push_back("tasks list is empty");
    if (source != "synthetic" && source != "jigsaws")
        problems.push_back("data.source must be 'synthetic' or 'jigsaws'");
    if (source == "synthetic")
        for (const auto& t : tasks) {
            const auto& known = synthetic_tasks();
            if (std::find(known.begin(), known.end(), t) == known.end())
                problems.push_back("unknown synthetic task '" + t + "'");
        }
    if (source == "jigsaws" && jigsaws_root.empty())
        problems.push_back("data.jigsaws_root is required for the jigsaws source");
    if (trials_per_task < 1) problems.push_back("data.trials_per_task must be >= 1");
    if (duration_frames < 150) problems.push_back("data.duration_frames must be >= 150");
    if (train.epochs < 1) problems.push_back("train.epochs must be >= 1");
    if (train.batch_size < 1) problems.push_back("train.batch_size must be >= 1");
    if (gbt.rounds < 1) problems.push_back("gbt.rounds must be >= 1");
    if (split.n_splits < 1) problems.push_back("split.n_splits must be >= 1");
    if (split.test_fraction <= 0 || split.test_fraction >= 1)
        problems.push_back("split.test_fraction must be in (0,1)");
    try {
        flow.validate();
    } catch (const ContractError& e) {
        problems.push_back(e.what());
    }
    if (!problems.empty()) {
        std::string msg = "invalid configuration:";
        for (const auto& p : problems) msg += "\n  - " + p;
        throw ConfigError(msg);
    }
}

// ---- artifacts ----------------------------------------------------------------

namespace {

std::string skill_name(Skill s) { return to_string(s); }

std::string window_key(int i) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "w%05d", i);
    return buf;
}

void warn_digest(const fs::path& path, const Digest& got, const Digest& want) {
    if (got != want)
        std::cerr << "[warn] " << path.string()
                  << " was produced under a different configuration (digest "
                  << to_hex(got).substr(0, 12) << " != " << to_hex(want).substr(0, 12)
                  << ")\n";
}

} // namespace

void save_windows(const fs::path& dir, const std::string& task,
                  const std::vector<GestureWindow>& windows, const json& extra,
                  const Digest& digest) {
    fs::create_directories(dir);
    TensorContainer c;
    c.digest = digest;
    json meta;
    meta["task"] = task;
    meta["n_windows"] = windows.size();
    meta["windows"] = json::array();
    for (int i = 0; i < int(windows.size()); ++i) {
        const auto& w = windows[std::size_t(i)];
        c.tensors.emplace(window_key(i) + ".flow", w.flow);
        c.tensors.emplace(window_key(i) + ".kin", w.kinematics);
        meta["windows"].push_back({{"gesture", w.gesture},
                                   {"skill", skill_name(w.skill)},
                                   {"trial", w.trial_id},
                                   {"task", w.task},
                                   {"first_index", w.sampled_indices[0]}});
    }
    for (auto it = extra.begin(); it != extra.end(); ++it) meta[it.key()] = it.value();

    write_tensor_container(dir / "windows.sgem", c);
    std::ofstream os(dir / "windows.json", std::ios::trunc);
    if (!os) throw IoError("cannot open for writing: " + (dir / "windows.json").string());
    os << meta.dump(2) << '\n';
}

std::vector<GestureWindow> load_windows(const fs::path& dir) {
    const auto sgem_path = dir / "windows.sgem";
    const auto json_path = dir / "windows.json";
    TensorContainer c = read_tensor_container(sgem_path);

    std::ifstream is(json_path);
    if (!is) throw IoError("cannot open: " + json_path.string());
    json meta;
    try {
        is >> meta;
    } catch (const json::exception& e) {
        throw ParseError("broken windows manifest " + json_path.string() + ": " + e.what());
    }

    const int n = meta.at("n_windows").get<int>();
    std::vector<GestureWindow> windows;
    windows.reserve(std::size_t(n));
    for (int i = 0; i < n; ++i) {
        GestureWindow w;
        const auto& m = meta.at("windows").at(std::size_t(i));
        w.gesture = m.at("gesture").get<std::string>();
        w.skill = skill_from_string(m.at("skill").get<std::string>());
        w.trial_id = m.at("trial").get<std::string>();
        w.task = m.at("task").get<std::string>();
        auto fit = c.tensors.find(window_key(i) + ".flow");
        auto kit = c.tensors.find(window_key(i) + ".kin");
        if (fit == c.tensors.end() || kit == c.tensors.end())
            throw ParseError("windows container lacks tensors for window " +
                             std::to_string(i));
        w.flow = std::move(fit->second);
        w.kinematics = std::move(kit->second);
        windows.push_back(std::move(w));
    }
    return windows;
}

void save_embeddings(const fs::path& dir, const EmbeddedDataset& ds, const Digest& digest) {
    fs::create_directories(dir);
    TensorContainer c;
    c.digest = digest;
    TensorXf X({int(ds.X.rows()), int(ds.X.cols())});
    X.matrix(ds.X.rows(), ds.X.cols()) = ds.X;
    c.tensors.emplace("embeddings", std::move(X));
    write_tensor_container(dir / "embeddings.sgem", c);

    json meta;
    meta["n"] = ds.X.rows();
    meta["d"] = ds.X.cols();
    meta["gesture"] = ds.gesture;
    meta["trial"] = ds.trial;
    meta["task"] = ds.task;
    std::vector<std::string> skills;
    for (auto s : ds.skill) skills.push_back(skill_name(s));
    meta["skill"] = skills;
    std::ofstream os(dir / "embeddings.json", std::ios::trunc);
    if (!os) throw IoError("cannot open for writing: " + (dir / "embeddings.json").string());
    os << meta.dump(2) << '\n';
}

EmbeddedDataset load_embeddings(const fs::path& dir) {
    TensorContainer c = read_tensor_container(dir / "embeddings.sgem");
    std::ifstream is(dir / "embeddings.json");
    if (!is) throw IoError("cannot open: " + (dir / "embeddings.json").string());
    json meta;
    try {
        is >> meta;
    } catch (const json::exception& e) {
        throw ParseError("broken embeddings manifest: " + std::string(e.what()));
    }

    EmbeddedDataset ds;
    auto it = c.tensors.find("embeddings");
    if (it == c.tensors.end()) throw ParseError("embeddings container lacks 'embeddings'");
    const auto& t = it->second;
    ds.X = t.matrix(t.extent(0), t.extent(1));
    ds.gesture = meta.at("gesture").get<std::vector<std::string>>();
    ds.trial = meta.at("trial").get<std::vector<std::string>>();
    ds.task = meta.at("task").get<std::vector<std::string>>();
    for (const auto& s : meta.at("skill").get<std::vector<std::string>>())
        ds.skill.push_back(skill_from_string(s));
    require(Eigen::Index(ds.gesture.size()) == ds.X.rows(),
            "embeddings manifest out of sync with tensor rows");
    return ds;
}

void require_artifact(const fs::path& path, const std::string& producer) {
    if (!fs::exists(path))
        throw StageOrderError("missing artifact " + path.string() + "; run `" + producer +
                              "` first");
}

// ---- stage manifests ----------------------------------------------------------

namespace {

struct StageIo {
    std::map<std::string, std::string> inputs; // path -> digest hex
    std::vector<fs::path> outputs;
};

void add_input(StageIo& io, const fs::path& p) { io.inputs[p.string()] = to_hex(sha256_file(p)); }

fs::path manifest_path(const fs::path& dir, const std::string& stage) {
    std::string name = stage;
    std::replace(name.begin(), name.end(), '/', '_');
    return dir / (name + ".manifest.json");
}

bool stage_up_to_date(const fs::path& mpath, const RunConfig& cfg, const StageIo& io) {
    if (!fs::exists(mpath)) return false;
    json m;
    std::ifstream is(mpath);
    try {
        is >> m;
    } catch (...) {
        return false;
    }
    if (m.value("config_digest", "") != to_hex(cfg.digest())) return false;
    for (const auto& [path, digest] : io.inputs) {
        if (!fs::exists(path)) return false;
        if (m.value("inputs", json::object()).value(path, "") != digest) return false;
    }
    for (const auto& out : m.value("outputs", std::vector<std::string>{}))
        if (!fs::exists(out)) return false;
    return true;
}

void write_stage_manifest(const fs::path& mpath, const std::string& stage,
                          const RunConfig& cfg, std::uint64_t seed, const StageIo& io) {
    json m;
    m["stage"] = stage;
    m["config_digest"] = to_hex(cfg.digest());
    m["seed"] = seed;
    m["inputs"] = io.inputs;
    std::vector<std::string> outs;
    for (const auto& o : io.outputs) outs.push_back(o.string());
    m["outputs"] = outs;
    std::ofstream os(mpath, std::ios::trunc);
    if (!os) throw IoError("cannot open for writing: " + mpath.string());
    os << m.dump(2) << '\n';
}

int effective_threads(const RunConfig& cfg) { return resolve_threads(cfg.threads); }

std::vector<double> read_loss_csv(const fs::path& path) {
    std::ifstream is(path);
    if (!is) throw IoError("cannot open: " + path.string());
    std::string line;
    std::getline(is, line); // header
    std::vector<double> curve;
    while (std::getline(is, line)) {
        const auto comma = line.find(',');
        if (comma == std::string::npos) continue;
        curve.push_back(std::stod(line.substr(comma + 1)));
    }
    return curve;
}

} // namespace

// ---- stages -------------------------------------------------------------------

void stage_gen_data(const RunConfig& cfg, const StageOptions& opt) {
    cfg.validate();
    require(cfg.source == "synthetic", "gen-data requires data.source == synthetic");
    for (const auto& task : cfg.tasks) {
        if (opt.only_task && task != *opt.only_task) continue;
        const std::string stage = "gen-data/" + task;
        const fs::path dir = cfg.task_dir(task);
        const fs::path mpath = manifest_path(dir, stage);
        const std::uint64_t seed = derive_seed(cfg.master_seed, stage);

        StageIo io;
        if (!opt.force && stage_up_to_date(mpath, cfg, io)) {
            std::cout << "[skip] " << stage << " (up to date)\n";
            continue;
        }

        std::vector<GestureWindow> windows;
        json trials = json::array();
        int skipped = 0, discarded = 0;
        fs::create_directories(dir);
        for (int i = 0; i < cfg.trials_per_task; ++i) {
            const Skill skill = std::array{Skill::Expert, Skill::Intermediate,
                                           Skill::Beginner}[std::size_t(i % 3)];
            const std::uint64_t trial_seed =
                derive_seed(seed, "trial/" + std::to_string(i));
            SyntheticSpec spec{task, skill, cfg.duration_frames};
            Trial trial = generate_synthetic_trial(spec, trial_seed);
            auto res = window_and_sample(trial, cfg.flow, effective_threads(cfg));
            skipped += res.skipped_segments;
            discarded += res.discarded_frames;
            for (auto& w : res.windows) windows.push_back(std::move(w));
            trials.push_back({{"id", trial.trial_id},
                              {"seed", trial_seed},
                              {"task", task},
                              {"skill", skill_name(skill)},
                              {"frames", trial.frames.size()}});
            if (cfg.dump_frames) {
                fs::create_directories(dir / "frames");
                write_frames(dir / "frames" / (trial.trial_id + ".frms"), trial.frames);
            }
        }

        json extra;
        extra["trials"] = trials;
        extra["skipped_segments"] = skipped;
        extra["discarded_frames"] = discarded;
        extra["gestures"] = synthetic_gestures(task);
        save_windows(dir, task, windows, extra, cfg.digest());

        io.outputs = {dir / "windows.sgem", dir / "windows.json"};
        write_stage_manifest(mpath, stage, cfg, seed, io);
        std::cout << "[done] " << stage << ": " << windows.size() << " windows ("
                  << skipped << " short segments skipped, " << discarded
                  << " frames discarded)\n";
    }
}

void stage_ingest(const RunConfig& cfg, const StageOptions& opt) {
    cfg.validate();
    require(cfg.source == "jigsaws", "ingest requires data.source == jigsaws");
    for (const auto& task : cfg.tasks) {
        if (opt.only_task && task != *opt.only_task) continue;
        const std::string stage = "ingest/" + task;
        const fs::path src_dir = fs::path(cfg.jigsaws_root) / task;
        const fs::path dir = cfg.task_dir(task);
        const fs::path mpath = manifest_path(dir, stage);
        const std::uint64_t seed = derive_seed(cfg.master_seed, stage);

        if (!fs::is_directory(src_dir))
            throw IoError("jigsaws task directory not found: " + src_dir.string());

        StageIo io;
        const auto stems = list_jigsaws_stems(src_dir);
        for (const auto& stem : stems) {
            const auto kin = src_dir / "kinematics" / "AllGestures" / (stem + ".txt");
            const auto tr = src_dir / "transcriptions" / (stem + ".txt");
            if (fs::exists(kin)) add_input(io, kin);
            if (fs::exists(tr)) add_input(io, tr);
        }
        if (!opt.force && stage_up_to_date(mpath, cfg, io)) {
            std::cout << "[skip] " << stage << " (up to date)\n";
            continue;
        }

        std::vector<GestureWindow> windows;
        json trials = json::array();
        int skipped = 0, discarded = 0;
        for (const auto& stem : stems) {
            Trial trial = load_jigsaws_trial(src_dir, stem);
            auto res = window_and_sample(trial, cfg.flow, effective_threads(cfg));
            skipped += res.skipped_segments;
            discarded += res.discarded_frames;
            for (auto& w : res.windows) windows.push_back(std::move(w));
            trials.push_back({{"id", trial.trial_id},
                              {"task", trial.task},
                              {"skill", skill_name(trial.skill)},
                              {"frames", trial.frames.size()}});
        }
        if (windows.empty())
            throw DataError("no usable windows in " + src_dir.string());

        json extra;
        extra["trials"] = trials;
        extra["skipped_segments"] = skipped;
        extra["discarded_frames"] = discarded;
        save_windows(dir, task, windows, extra, cfg.digest());

        io.outputs = {dir / "windows.sgem", dir / "windows.json"};
        write_stage_manifest(mpath, stage, cfg, seed, io);
        std::cout << "[done] " << stage << ": " << windows.size() << " windows from "
                  << stems.size() << " trials\n";
    }
}

void stage_train(const RunConfig& cfg, const StageOptions& opt) {
    cfg.validate();
    for (const auto& task : cfg.tasks) {
        if (opt.only_task && task != *opt.only_task) continue;
        const std::string stage = "train-encoder/" + task;
        const fs::path dir = cfg.task_dir(task);
        const fs::path mpath = manifest_path(dir, stage);
        const std::uint64_t seed = derive_seed(cfg.master_seed, stage);

        require_artifact(dir / "windows.sgem", "sgem gen-data (or sgem ingest)");
        StageIo io;
        add_input(io, dir / "windows.sgem");
        if (!opt.force && stage_up_to_date(mpath, cfg, io)) {
            std::cout << "[skip] " << stage << " (up to date)\n";
            continue;
        }

        auto container_digest = read_tensor_container(dir / "windows.sgem").digest;
        warn_digest(dir / "windows.sgem", container_digest, cfg.digest());
        auto windows = load_windows(dir);

        TrainConfig tc = cfg.train;
        tc.seed = seed;
        tc.threads = effective_threads(cfg);
        tc.loss_log_path = (dir / "loss.csv").string();
        auto result = train_encoder_decoder(windows, tc);

        save_checkpoint(dir / "checkpoint.sgem", result.encoder, result.decoder,
                        result.normalizer, cfg.digest());

        io.outputs = {dir / "checkpoint.sgem", dir / "loss.csv"};
        write_stage_manifest(mpath, stage, cfg, seed, io);
        std::cout << "[done] " << stage << ": first-epoch loss "
                  << result.loss_curve.front() << ", final " << result.loss_curve.back()
                  << "\n";
    }
}

void stage_embed(const RunConfig& cfg, const StageOptions& opt,
                 const std::optional<fs::path>& checkpoint_override) {
    cfg.validate();
    for (const auto& task : cfg.tasks) {
        if (opt.only_task && task != *opt.only_task) continue;
        const std::string stage = "embed/" + task;
        const fs::path dir = cfg.task_dir(task);
        const fs::path mpath = manifest_path(dir, stage);
        const std::uint64_t seed = derive_seed(cfg.master_seed, stage);

        const fs::path ckpt =
            checkpoint_override.value_or(dir / "checkpoint.sgem");
        require_artifact(dir / "windows.sgem", "sgem gen-data (or sgem ingest)");
        require_artifact(ckpt, "sgem train-encoder");

        StageIo io;
        add_input(io, dir / "windows.sgem");
        add_input(io, ckpt);
        if (!opt.force && stage_up_to_date(mpath, cfg, io)) {
            std::cout << "[skip] " << stage << " (up to date)\n";
            continue;
        }

        auto ck = load_checkpoint(ckpt);
        warn_digest(ckpt, ck.config_digest, cfg.digest());
        auto windows = load_windows(dir);
        auto ds = embed_dataset(windows, ck.encoder, effective_threads(cfg));
        save_embeddings(dir, ds, cfg.digest());

        io.outputs = {dir / "embeddings.sgem", dir / "embeddings.json"};
        write_stage_manifest(mpath, stage, cfg, seed, io);
        std::cout << "[done] " << stage << ": " << ds.X.rows() << " x " << ds.X.cols()
                  << " embeddings\n";
    }
}

namespace {

void eval_stage(const RunConfig& cfg, const StageOptions& opt, const std::string& kind) {
    for (const auto& task : cfg.tasks) {
        if (opt.only_task && task != *opt.only_task) continue;
        const std::string stage = "eval-" + kind + "/" + task;
        const fs::path dir = cfg.task_dir(task);
        const fs::path mpath = manifest_path(dir, stage);
        const std::uint64_t seed = derive_seed(cfg.master_seed, stage);

        require_artifact(dir / "embeddings.sgem", "sgem embed");
        StageIo io;
        add_input(io, dir / "embeddings.sgem");
        if (!opt.force && stage_up_to_date(mpath, cfg, io)) {
            std::cout << "[skip] " << stage << " (up to date)\n";
            continue;
        }

        auto container_digest = read_tensor_container(dir / "embeddings.sgem").digest;
        warn_digest(dir / "embeddings.sgem", container_digest, cfg.digest());
        auto ds = load_embeddings(dir);

        std::vector<std::string> labels;
        if (kind == "gesture") {
            labels = ds.gesture;
        } else {
            for (auto s : ds.skill) labels.push_back(skill_name(s));
        }

        SplitConfig split = cfg.split;
        split.seed = seed;
        auto metrics =
            run_split_experiment(ds.X, labels, task, cfg.gbt, split, &ds.trial);

        const auto csv = dir / (kind + "_metrics.csv");
        const auto jsn = dir / (kind + "_metrics.json");
        write_metrics_csv(csv, {metrics});
        write_metrics_json(jsn, {metrics});

        io.outputs = {csv, jsn};
        write_stage_manifest(mpath, stage, cfg, seed, io);
        char buf[64];
        std::snprintf(buf, sizeof buf, "%.3f +- %.3f", metrics.accuracy.mean,
                      metrics.accuracy.stddev);
        std::cout << "[done] " << stage << ": accuracy " << buf << "\n";
    }
}

} // namespace

void stage_eval_gesture(const RunConfig& cfg, const StageOptions& opt) {
    cfg.validate();
    eval_stage(cfg, opt, "gesture");
}

void stage_eval_skill(const RunConfig& cfg, const StageOptions& opt) {
    cfg.validate();
    eval_stage(cfg, opt, "skill");
}

void stage_transfer(const RunConfig& cfg, const StageOptions& opt,
                    const std::optional<std::pair<std::string, std::string>>& pair) {
    cfg.validate();
    std::vector<std::pair<std::string, std::string>> pairs;
    if (pair) {
        pairs.push_back(*pair);
    } else {
        for (const auto& a : cfg.tasks)
            for (const auto& b : cfg.tasks)
                if (a != b) pairs.emplace_back(a, b);
    }
    for (const auto& [src, dst] : pairs) {
        const std::string stage = "transfer/" + src + "->" + dst;
        const fs::path mpath = manifest_path(cfg.out_dir, stage);
        const std::uint64_t seed = derive_seed(cfg.master_seed, stage);

        const fs::path ckpt = cfg.task_dir(src) / "checkpoint.sgem";
        const fs::path wnd = cfg.task_dir(dst) / "windows.sgem";
        require_artifact(ckpt, "sgem train-encoder");
        require_artifact(wnd, "sgem gen-data (or sgem ingest)");

        StageIo io;
        add_input(io, ckpt);
        add_input(io, wnd);
        if (!opt.force && stage_up_to_date(mpath, cfg, io)) {
            std::cout << "[skip] " << stage << " (up to date)\n";
            continue;
        }

        auto windows = load_windows(cfg.task_dir(dst));
        SplitConfig split = cfg.split;
        split.seed = seed;
        auto metrics = transfer_experiment(ckpt, windows, dst, cfg.gbt, split,
                                           effective_threads(cfg));

        const std::string base = "transfer_" + src + "_to_" + dst;
        const auto csv = cfg.out_dir / (base + ".csv");
        const auto jsn = cfg.out_dir / (base + ".json");
        write_metrics_csv(csv, {metrics});
        write_metrics_json(jsn, {metrics});

        io.outputs = {csv, jsn};
        write_stage_manifest(mpath, stage, cfg, seed, io);
        char buf[64];
        std::snprintf(buf, sizeof buf, "%.3f +- %.3f", metrics.accuracy.mean,
                      metrics.accuracy.stddev);
        std::cout << "[done] " << stage << ": accuracy " << buf << "\n";
    }
}

namespace {

Projection2D project_task(const EmbeddedDataset& ds) {
    Projection2D proj = pca_project(ds.X);
    proj.gesture = ds.gesture;
    for (auto s : ds.skill) proj.skill.push_back(skill_name(s));
    proj.trial = ds.trial;
    return proj;
}

json silhouette_report(const EmbeddedDataset& ds) {
    std::vector<std::string> skills;
    for (auto s : ds.skill) skills.push_back(skill_name(s));

    json rep;
    rep["expert_beginner_silhouette"] =
        silhouette(ds.X, skills, {"Expert", "Beginner"});
    auto all = silhouette_breakdown(ds.X, skills, {"Expert", "Beginner", "Intermediate"});
    rep["three_class"] = {{"mean", all.mean}};
    for (const auto& [label, value] : all.by_label) rep["three_class"][label] = value;

    // per-gesture expert-vs-beginner silhouette where both sides have members
    json per_gesture = json::object();
    std::set<std::string> gestures(ds.gesture.begin(), ds.gesture.end());
    for (const auto& g : gestures) {
        std::vector<int> rows;
        for (int i = 0; i < int(ds.gesture.size()); ++i)
            if (ds.gesture[std::size_t(i)] == g) rows.push_back(i);
        int experts = 0, beginners = 0;
        for (int i : rows) {
            experts += ds.skill[std::size_t(i)] == Skill::Expert;
            beginners += ds.skill[std::size_t(i)] == Skill::Beginner;
        }
        if (experts < 2 || beginners < 2) continue;
        MatrixRM<float> sub(rows.size(), ds.X.cols());
        std::vector<std::string> sub_skills;
        for (std::size_t r = 0; r < rows.size(); ++r) {
            sub.row(Eigen::Index(r)) = ds.X.row(rows[r]);
            sub_skills.push_back(skills[std::size_t(rows[r])]);
        }
        per_gesture[g] = silhouette(sub, sub_skills, {"Expert", "Beginner"});
    }
    rep["per_gesture_expert_beginner"] = per_gesture;
    return rep;
}

} // namespace

void stage_project(const RunConfig& cfg, const StageOptions& opt) {
    cfg.validate();
    for (const auto& task : cfg.tasks) {
        if (opt.only_task && task != *opt.only_task) continue;
        const std::string stage = "project/" + task;
        const fs::path dir = cfg.task_dir(task);
        const fs::path mpath = manifest_path(dir, stage);
        const std::uint64_t seed = derive_seed(cfg.master_seed, stage);

        require_artifact(dir / "embeddings.sgem", "sgem embed");
        StageIo io;
        add_input(io, dir / "embeddings.sgem");
        if (!opt.force && stage_up_to_date(mpath, cfg, io)) {
            std::cout << "[skip] " << stage << " (up to date)\n";
            continue;
        }

        auto ds = load_embeddings(dir);
        Projection2D proj = project_task(ds);

        const auto scatter = dir / "projection.csv";
        {
            std::ofstream os(scatter, std::ios::trunc);
            if (!os) throw IoError("cannot open for writing: " + scatter.string());
            os << "x,y,gesture,skill,trial_id\n";
            char buf[64];
            for (int i = 0; i < int(proj.coords.rows()); ++i) {
                std::snprintf(buf, sizeof buf, "%.6f,%.6f,", double(proj.coords(i, 0)),
                              double(proj.coords(i, 1)));
                os << buf << proj.gesture[std::size_t(i)] << ','
                   << proj.skill[std::size_t(i)] << ',' << proj.trial[std::size_t(i)]
                   << '\n';
            }
        }

        const auto sil_path = dir / "silhouette.json";
        {
            json rep = silhouette_report(ds);
            rep["explained_variance"] = proj.explained_variance;
            std::ofstream os(sil_path, std::ios::trunc);
            if (!os) throw IoError("cannot open for writing: " + sil_path.string());
            os << rep.dump(2) << '\n';
        }

        io.outputs = {scatter, sil_path};
        write_stage_manifest(mpath, stage, cfg, seed, io);
        std::cout << "[done] " << stage << "\n";
    }
}

bool stage_report(const RunConfig& cfg) {
    cfg.validate();
    ReportInputs in;
    in.config_digest_hex = to_hex(cfg.digest());
    in.master_seed = cfg.master_seed;

    auto read_metrics = [](const fs::path& path) -> std::vector<Metrics> {
        return read_metrics_json(path);
    };

    std::vector<Metrics> gesture_rows, skill_rows;
    std::map<std::string, double> in_task_accuracy;
    for (const auto& task : cfg.tasks) {
        const fs::path dir = cfg.task_dir(task);
        in.stage_seeds["train-encoder/" + task] =
            derive_seed(cfg.master_seed, "train-encoder/" + task);
        if (fs::exists(dir / "gesture_metrics.json")) {
            auto rows = read_metrics(dir / "gesture_metrics.json");
            for (auto& r : rows) {
                in_task_accuracy[task] = r.accuracy.mean;
                gesture_rows.push_back(std::move(r));
            }
        }
        if (fs::exists(dir / "skill_metrics.json"))
            for (auto& r : read_metrics(dir / "skill_metrics.json"))
                skill_rows.push_back(std::move(r));
    }
    if (!gesture_rows.empty()) in.experiments.push_back({"gesture_recognition", gesture_rows});
    if (!skill_rows.empty()) in.experiments.push_back({"skill_recognition", skill_rows});

    // transfer tables grouped by source task
    std::map<std::string, std::vector<Metrics>> transfer_by_src;
    std::map<std::pair<std::string, std::string>, double> transfer_accuracy;
    for (const auto& a : cfg.tasks)
        for (const auto& b : cfg.tasks) {
            if (a == b) continue;
            const fs::path p = cfg.out_dir / ("transfer_" + a + "_to_" + b + ".json");
            if (!fs::exists(p)) continue;
            for (auto& r : read_metrics(p)) {
                transfer_accuracy[{a, b}] = r.accuracy.mean;
                transfer_by_src[a].push_back(std::move(r));
            }
        }
    for (auto& [src, rows] : transfer_by_src)
        in.experiments.push_back({"transfer_from_" + src, rows});

    // projections and skill-structure gates from embeddings
    const bool synthetic = cfg.source == "synthetic";
    for (const auto& task : cfg.tasks) {
        const fs::path dir = cfg.task_dir(task);
        if (!fs::exists(dir / "embeddings.sgem")) continue;
        auto ds = load_embeddings(dir);
        in.projections[task] = project_task(ds);

        if (!synthetic) continue;
        std::vector<std::string> skills;
        for (auto s : ds.skill) skills.push_back(skill_name(s));
        const double eb = silhouette(ds.X, skills, {"Expert", "Beginner"});
        char buf[128];
        std::snprintf(buf, sizeof buf, "expert/beginner silhouette %.4f > 0.1", eb);
        in.gates.push_back({"skill_structure/" + task, eb > 0.1, buf});

        auto all =
            silhouette_breakdown(ds.X, skills, {"Expert", "Beginner", "Intermediate"});
        const double mid = all.by_label.at("Intermediate");
        const bool bridging = mid < all.by_label.at("Expert") &&
                              mid < all.by_label.at("Beginner");
        std::snprintf(buf, sizeof buf,
                      "intermediate %.4f below expert %.4f and beginner %.4f", mid,
                      all.by_label.at("Expert"), all.by_label.at("Beginner"));
        in.gates.push_back({"intermediate_spread/" + task, bridging, buf});
    }

    if (synthetic) {
        for (const auto& [task, acc] : in_task_accuracy) {
            char buf[96];
            std::snprintf(buf, sizeof buf, "mean accuracy %.4f >= 0.70 (chance 0.25)", acc);
            in.gates.push_back({"gesture_accuracy/" + task, acc >= 0.70, buf});
        }
        for (const auto& [pair, acc] : transfer_accuracy) {
            const auto it = in_task_accuracy.find(pair.second);
            if (it == in_task_accuracy.end()) continue;
            const bool ok = acc >= 1.5 * 0.25 && acc < it->second;
            char buf[128];
            std::snprintf(buf, sizeof buf,
                          "cross accuracy %.4f >= 0.375 and below in-task %.4f", acc,
                          it->second);
            in.gates.push_back({"transfer/" + pair.first + "->" + pair.second, ok, buf});
        }
        for (const auto& task : cfg.tasks) {
            const fs::path loss = cfg.task_dir(task) / "loss.csv";
            if (!fs::exists(loss)) continue;
            const auto curve = read_loss_csv(loss);
            if (curve.size() < 8) continue;
            int non_monotone = 0;
            for (std::size_t e = 6; e < curve.size(); ++e)
                if (curve[e] > curve[e - 1]) ++non_monotone;
            const double ratio = curve.back() / curve.front();
            const bool ok = ratio < 0.2 && non_monotone <= 2;
            char buf[128];
            std::snprintf(buf, sizeof buf,
                          "final/first loss %.4f < 0.2, %d non-monotone steps <= 2",
                          ratio, non_monotone);
            in.gates.push_back({"training_loss/" + task, ok, buf});
        }
    }

    emit_report(in, cfg.out_dir / "report");
    bool all_passed = true;
    for (const auto& g : in.gates) {
        std::cout << (g.passed ? "[pass] " : "[FAIL] ") << g.name << ": " << g.detail
                  << "\n";
        all_passed &= g.passed;
    }
    std::cout << "[done] report -> " << (cfg.out_dir / "report").string() << "\n";
    return all_passed;
}

// ---- selftest -------------------------------------------------------------------

namespace {

FrameGray selftest_texture(int canvas, std::uint64_t seed, int oy, int ox, int size) {
    Rng rng(seed);
    std::vector<float> raw(std::size_t(canvas) * canvas);
    for (auto& v : raw) v = rng.next_float();
    auto clampi = [canvas](int v) { return std::clamp(v, 0, canvas - 1); };
    std::vector<float> tmp(raw.size()), smooth(raw.size());
    const int r = 6;
    std::vector<double> k(std::size_t(2 * r + 1));
    double sum = 0;
    for (int i = -r; i <= r; ++i) {
        k[std::size_t(i + r)] = std::exp(-0.5 * i * i / 4.0);
        sum += k[std::size_t(i + r)];
    }
    for (auto& v : k) v /= sum;
    for (int y = 0; y < canvas; ++y)
        for (int x = 0; x < canvas; ++x) {
            double acc = 0;
            for (int i = -r; i <= r; ++i)
                acc += k[std::size_t(i + r)] * raw[std::size_t(y) * canvas + clampi(x + i)];
            tmp[std::size_t(y) * canvas + x] = float(acc);
        }
    for (int y = 0; y < canvas; ++y)
        for (int x = 0; x < canvas; ++x) {
            double acc = 0;
            for (int i = -r; i <= r; ++i)
                acc += k[std::size_t(i + r)] * tmp[std::size_t(clampi(y + i)) * canvas + x];
            smooth[std::size_t(y) * canvas + x] = float(acc);
        }
    FrameGray f(size, size);
    for (int y = 0; y < size; ++y)
        for (int x = 0; x < size; ++x)
            f.at(y, x) = std::clamp(smooth[std::size_t(oy + y) * canvas + ox + x], 0.f, 1.f);
    return f;
}

bool selftest_gradients() {
    GradCheckSpec conv;
    conv.kind = LayerKind::Conv2d;
    conv.input_shape = {2, 6, 6};
    conv.kernel = 3;
    conv.stride = 2;
    conv.pad = 1;
    GradCheckSpec fc;
    fc.kind = LayerKind::FullyConnected;
    fc.input_shape = {8};
    fc.out_features = 5;
    GradCheckSpec relu;
    relu.kind = LayerKind::Relu;
    relu.input_shape = {32};
    GradCheckSpec mse;
    mse.kind = LayerKind::MseLoss;
    mse.input_shape = {16};

    bool ok = true;
    for (std::uint64_t seed = 1; seed <= 3; ++seed) {
        conv.seed = fc.seed = relu.seed = mse.seed = seed;
        ok &= grad_check(conv, 1e-3f) < 1e-3f;
        ok &= grad_check(fc, 1e-3f) < 1e-4f;
        ok &= grad_check(relu, 1e-3f) < 1e-3f;
        ok &= grad_check(mse, 1e-3f) < 1e-4f;
    }
    ok &= composite_grad_check(1, 2, 1e-3f) < 1e-2f;
    return ok;
}

bool selftest_flow() {
    bool ok = true;
    for (auto [tx, ty, seed] : {std::tuple{2, 0, 10ull}, std::tuple{-1, 1, 11ull},
                                std::tuple{3, -2, 12ull}}) {
        auto prev = selftest_texture(96, seed, 16, 16, 64);
        auto next = selftest_texture(96, seed, 16 - ty, 16 - tx, 64);
        auto flow = farneback_flow(prev, next, FarnebackParams{});
        double acc = 0;
        int n = 0;
        for (int y = 12; y < 52; ++y)
            for (int x = 12; x < 52; ++x) {
                const Eigen::Index i = Eigen::Index(y) * 64 + x;
                acc += std::hypot(double(flow.u[i]) - tx, double(flow.v[i]) - ty);
                ++n;
            }
        ok &= acc / n < 0.3;

        auto zero = farneback_flow(prev, prev, FarnebackParams{});
        ok &= zero.u.abs().maxCoeff() < 1e-3f && zero.v.abs().maxCoeff() < 1e-3f;
    }
    return ok;
}

bool selftest_boosting() {
    bool ok = true;
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        Rng rng(seed);
        const int n = 40 + int(rng.next_below(100));
        MatrixRM<float> X(n, 6);
        std::vector<std::string> y;
        for (int i = 0; i < n; ++i) {
            for (int f = 0; f < 6; ++f) X(i, f) = rng.uniform(-2.f, 2.f);
            y.push_back(rng.next_float() < 0.5f ? "a" : "b");
        }
        y[0] = "a";
        y[1] = "b";

        GBTConfig cfg;
        cfg.rounds = 1;
        cfg.max_depth = 1;
        auto model = gbt_train(X, y, cfg);
        const auto& root = model.rounds.at(0).at(0).nodes.at(0);
        if (root.leaf) {
            ok = false;
            continue;
        }

        // exhaustive oracle over every feature/midpoint
        const double p = 0.5, lambda = double(cfg.l2_lambda);
        std::vector<double> g(static_cast<std::size_t>(n));
        for (int i = 0; i < n; ++i)
            g[std::size_t(i)] = p - (y[std::size_t(i)] == "a" ? 1.0 : 0.0);
        const double h = p * (1 - p);
        double gsum = 0;
        for (double v : g) gsum += v;
        const double parent = gsum * gsum / (h * n + lambda + 1e-12);
        double best_gain = 0;
        int best_f = -1;
        float best_thr = 0;
        for (int f = 0; f < 6; ++f) {
            std::vector<float> vals;
            for (int i = 0; i < n; ++i) vals.push_back(X(i, f));
            std::sort(vals.begin(), vals.end());
            vals.erase(std::unique(vals.begin(), vals.end()), vals.end());
            for (std::size_t k = 0; k + 1 < vals.size(); ++k) {
                const float thr = 0.5f * (vals[k] + vals[k + 1]);
                double gl = 0;
                int nl = 0;
                for (int i = 0; i < n; ++i)
                    if (X(i, f) < thr) {
                        gl += g[std::size_t(i)];
                        ++nl;
                    }
                if (nl < cfg.min_samples_leaf || n - nl < cfg.min_samples_leaf) continue;
                const double gr = gsum - gl;
                const double gain =
                    0.5 * (gl * gl / (h * nl + lambda + 1e-12) +
                           gr * gr / (h * (n - nl) + lambda + 1e-12) - parent);
                if (gain > best_gain + 1e-12) {
                    best_gain = gain;
                    best_f = f;
                    best_thr = thr;
                }
            }
        }
        ok &= root.feature == best_f && std::abs(root.threshold - best_thr) < 1e-6f;
    }

    // xor reaches 1.0 at depth 2
    Rng rng(99);
    MatrixRM<float> X(48, 2);
    std::vector<std::string> y;
    for (int i = 0; i < 48; ++i) {
        const int cx = (i / 12) % 2, cy = i % 2;
        X(i, 0) = float(cx) + rng.uniform(-0.1f, 0.1f);
        X(i, 1) = float(cy) + rng.uniform(-0.1f, 0.1f);
        y.push_back(cx == cy ? "a" : "b");
    }
    GBTConfig deep;
    deep.rounds = 30;
    deep.max_depth = 2;
    auto model = gbt_train(X, y, deep);
    auto pred = gbt_predict(model, X);
    int correct = 0;
    for (std::size_t i = 0; i < y.size(); ++i) correct += pred.labels[i] == y[i];
    ok &= correct == 48;
    return ok;
}

} // namespace

bool run_selftest(int threads) {
    (void)threads;
    struct Suite {
        const char* name;
        bool (*fn)();
    };
    const Suite suites[] = {{"gradient-check", selftest_gradients},
                            {"flow-oracle", selftest_flow},
                            {"boosting-oracle", selftest_boosting}};
    bool all = true;
    for (const auto& s : suites) {
        const bool ok = s.fn();
        std::cout << (ok ? "[pass] " : "[FAIL] ") << s.name << "\n";
        all &= ok;
    }
    return all;
}

} // namespace sgem
