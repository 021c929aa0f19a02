#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <fstream>

#include "sgem/pipeline.hpp"

using namespace sgem;
namespace fs = std::filesystem;

#ifndef SGEM_CLI_PATH
#define SGEM_CLI_PATH "sgem"
#endif

namespace {

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& tag) {
        path = fs::temp_directory_path() / ("sgem_pl_" + tag + "_" +
                                            std::to_string(::getpid()));
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

int run_cli(const std::string& args) {
    const std::string cmd = std::string(SGEM_CLI_PATH) + " " + args + " >/dev/null 2>&1";
    const int rc = std::system(cmd.c_str());
    return WEXITSTATUS(rc);
}

fs::path write_config(const fs::path& dir, const nlohmann::json& patch) {
    nlohmann::json j = {
        {"tasks", {"synthA"}},
        {"data", {{"source", "synthetic"}, {"trials_per_task", 2}, {"duration_frames", 260}}},
        {"train", {{"epochs", 2}, {"batch_size", 8}}},
        {"gbt", {{"rounds", 15}}},
        {"flow", {{"pyramid_levels", 2}, {"iterations", 2}}},
        {"out_dir", (dir / "out").string()},
        {"seed", 9},
        {"threads", 1},
    };
    for (auto it = patch.begin(); it != patch.end(); ++it) j[it.key()] = it.value();
    const fs::path p = dir / "config.json";
    std::ofstream os(p);
    os << j.dump(2);
    return p;
}

std::string slurp(const fs::path& p) {
    std::ifstream is(p);
    return std::string((std::istreambuf_iterator<char>(is)), {});
}

} // namespace

TEST_CASE("run config round-trips through JSON with a stable digest") {
    RunConfig a;
    a.tasks = {"synthB", "synthC"};
    a.trials_per_task = 5;
    a.train.epochs = 77;
    a.gbt.rounds = 42;
    a.split.split_by = SplitBy::Trial;
    a.master_seed = 1234;

    auto b = RunConfig::from_json(a.to_json());
    CHECK(b.tasks == a.tasks);
    CHECK(b.trials_per_task == 5);
    CHECK(b.train.epochs == 77);
    CHECK(b.gbt.rounds == 42);
    CHECK(b.split.split_by == SplitBy::Trial);
    CHECK(to_hex(b.digest()) == to_hex(a.digest()));

    // storage location and worker count do not change experiment identity
    b.out_dir = "/somewhere/else";
    b.threads = 13;
    CHECK(to_hex(b.digest()) == to_hex(a.digest()));

    a.master_seed = 99;
    CHECK(to_hex(a.digest()) != to_hex(b.digest()));
}

TEST_CASE("config validation lists every violation at once") {
    RunConfig c;
    c.tasks = {"synthA", "nonsense"};
    c.trials_per_task = 0;
    c.duration_frames = 10;
    c.split.test_fraction = 1.5;
    try {
        c.validate();
        FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("nonsense") != std::string::npos);
        CHECK(msg.find("trials_per_task") != std::string::npos);
        CHECK(msg.find("duration_frames") != std::string::npos);
        CHECK(msg.find("test_fraction") != std::string::npos);
    }
}

TEST_CASE("windows and embeddings artifacts round-trip") {
    TempDir tmp("artifacts");
    FarnebackParams fast;
    fast.pyramid_levels = 2;
    fast.iterations = 2;

    auto trial = generate_synthetic_trial({"synthA", Skill::Expert, 260}, 3);
    auto res = window_and_sample(trial, fast, 1);
    REQUIRE(res.windows.size() >= 2);

    const Digest digest = sha256("windows-test");
    save_windows(tmp.path, "synthA", res.windows, nlohmann::json::object(), digest);
    auto back = load_windows(tmp.path);
    REQUIRE(back.size() == res.windows.size());
    for (std::size_t i = 0; i < back.size(); ++i) {
        CHECK((back[i].flow.array() == res.windows[i].flow.array()).all());
        CHECK((back[i].kinematics.array() == res.windows[i].kinematics.array()).all());
        CHECK(back[i].gesture == res.windows[i].gesture);
        CHECK(back[i].skill == res.windows[i].skill);
        CHECK(back[i].trial_id == res.windows[i].trial_id);
    }

    auto [enc, dec] = init_params(1);
    auto ds = embed_dataset(res.windows, enc, 1);
    save_embeddings(tmp.path, ds, digest);
    auto ds2 = load_embeddings(tmp.path);
    CHECK(ds2.X == ds.X);
    CHECK(ds2.gesture == ds.gesture);
    CHECK(ds2.trial == ds.trial);
}

TEST_CASE("cli: gen-data is a no-op on rerun and deterministic across directories") {
    TempDir tmp("cli_det");
    const auto cfg = write_config(tmp.path, {});
    REQUIRE(run_cli("--config " + cfg.string() + " gen-data") == 0);
    const auto manifest1 = slurp(tmp.path / "out" / "synthA" / "windows.json");
    REQUIRE(!manifest1.empty());

    // rerun: skipped, artifact untouched
    const auto mtime = fs::last_write_time(tmp.path / "out" / "synthA" / "windows.sgem");
    REQUIRE(run_cli("--config " + cfg.string() + " gen-data") == 0);
    CHECK(fs::last_write_time(tmp.path / "out" / "synthA" / "windows.sgem") == mtime);

    // same seed, fresh directory: byte-identical windows artifact
    const auto out2 = (tmp.path / "out2").string();
    REQUIRE(run_cli("--config " + cfg.string() + " --out-dir " + out2 + " gen-data") == 0);
    CHECK(slurp(tmp.path / "out2" / "synthA" / "windows.json") == manifest1);
    CHECK(slurp(tmp.path / "out" / "synthA" / "windows.sgem") ==
          slurp(tmp.path / "out2" / "synthA" / "windows.sgem"));
}

TEST_CASE("cli: stage order and validation failures use the documented exit codes") {
    TempDir tmp("cli_codes");
    const auto cfg = write_config(tmp.path, {});

    CHECK(run_cli("--config " + cfg.string() + " train-encoder") == 2); // no windows yet
    CHECK(run_cli("--config " + cfg.string() + " embed") == 2);

    const fs::path bad = tmp.path / "bad.json";
    {
        std::ofstream os(bad);
        os << R"({"tasks": ["nope"]})";
    }
    CHECK(run_cli("--config " + bad.string() + " gen-data") == 1);
    CHECK(run_cli("--config " + (tmp.path / "missing.json").string() + " gen-data") == 4);
}

TEST_CASE("cli: full pipeline emits a gesture table and projection artifacts") {
    TempDir tmp("cli_full");
    const auto cfg = write_config(tmp.path, {{"train", {{"epochs", 3}, {"batch_size", 8}}}});

    REQUIRE(run_cli("--config " + cfg.string() + " gen-data") == 0);
    REQUIRE(run_cli("--config " + cfg.string() + " train-encoder") == 0);
    REQUIRE(run_cli("--config " + cfg.string() + " embed") == 0);
    REQUIRE(run_cli("--config " + cfg.string() + " eval-gesture") == 0);
    REQUIRE(run_cli("--config " + cfg.string() + " project") == 0);
    REQUIRE(run_cli("--config " + cfg.string() + " report") == 0);

    const fs::path table = tmp.path / "out" / "report" / "gesture_recognition.csv";
    REQUIRE(fs::exists(table));
    std::ifstream is(table);
    std::string header, row;
    std::getline(is, header);
    CHECK(header ==
          "dataset,accuracy_mean,accuracy_std,precision_mean,precision_std,"
          "recall_mean,recall_std,f1_mean,f1_std");
    std::getline(is, row);
    CHECK(row.starts_with("synthA,"));
    CHECK(std::count(row.begin(), row.end(), ',') == 8);

    CHECK(fs::exists(tmp.path / "out" / "synthA" / "projection.csv"));
    CHECK(fs::exists(tmp.path / "out" / "synthA" / "silhouette.json"));
    CHECK(fs::exists(tmp.path / "out" / "report" / "summary.txt"));

    const auto summary = slurp(tmp.path / "out" / "report" / "summary.txt");
    CHECK(summary.find("config_digest: ") != std::string::npos);
    CHECK(summary.find("gate.") != std::string::npos);
}

TEST_CASE("cli: selftest passes and reports its suites") {
    CHECK(run_cli("selftest") == 0);
}
