#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/Dense>

#include <filesystem>
#include <fstream>

#include "sgem/analysis.hpp"
#include "sgem/rng.hpp"

using namespace sgem;
namespace fs = std::filesystem;

namespace {

MatrixRM<float> gaussian_cloud(int n, int d, std::uint64_t seed,
                               const std::vector<double>& axis_scales = {}) {
    Rng rng(seed);
    MatrixRM<float> X(n, d);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < d; ++j) {
            const double scale =
                axis_scales.empty() ? 1.0 : axis_scales[std::size_t(j) % axis_scales.size()];
            X(i, j) = float(scale * rng.next_normal());
        }
    return X;
}

} // namespace

TEST_CASE("pca recovers axis-aligned 2-D data up to sign") {
    auto X = gaussian_cloud(300, 2, 7, {3.0, 1.0});
    auto p = pca_project(X);

    // centered input should equal the projection up to per-axis sign
    Eigen::MatrixXd xd = X.cast<double>();
    xd.rowwise() -= xd.colwise().mean().eval();
    for (int axis = 0; axis < 2; ++axis) {
        double best = 1e9;
        for (double sign : {1.0, -1.0}) {
            double err = 0;
            for (int i = 0; i < 300; ++i)
                err += std::abs(sign * double(p.coords(i, axis)) - xd(i, axis));
            best = std::min(best, err / 300.0);
        }
        CHECK(best < 0.05);
    }

    // explained-variance fractions track the axis variance ratio
    const double vx = xd.col(0).squaredNorm(), vy = xd.col(1).squaredNorm();
    CHECK(p.explained_variance[0] == doctest::Approx(vx / (vx + vy)).epsilon(0.02));
    CHECK(p.explained_variance[1] == doctest::Approx(vy / (vx + vy)).epsilon(0.02));
    CHECK(p.explained_variance[0] >= p.explained_variance[1]);
}

TEST_CASE("pca eigenvalues match a full eigendecomposition oracle") {
    for (std::uint64_t seed : {1ull, 2ull}) {
        auto X = gaussian_cloud(400, 6, seed);
        auto p = pca_project(X);

        Eigen::MatrixXd xd = X.cast<double>();
        xd.rowwise() -= xd.colwise().mean().eval();
        Eigen::MatrixXd cov = xd.transpose() * xd / 399.0;
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov);
        const auto& ev = es.eigenvalues(); // ascending
        const double total = cov.trace();

        CHECK(p.explained_variance[0] == doctest::Approx(ev[5] / total).epsilon(1e-6));
        CHECK(p.explained_variance[1] == doctest::Approx(ev[4] / total).epsilon(1e-6));
        // isotropic cloud: each top fraction is near 1/d, i.e. about 2/d combined
        CHECK(p.explained_variance[0] + p.explained_variance[1] ==
              doctest::Approx(2.0 / 6.0).epsilon(0.2));
    }
}

TEST_CASE("duplicated rows project to duplicated rows") {
    auto X = gaussian_cloud(40, 5, 3);
    MatrixRM<float> Xd(80, 5);
    Xd.topRows(40) = X;
    Xd.bottomRows(40) = X;
    auto p = pca_project(Xd);
    for (int i = 0; i < 40; ++i) {
        CHECK(p.coords(i, 0) == doctest::Approx(p.coords(40 + i, 0)).epsilon(1e-6));
        CHECK(p.coords(i, 1) == doctest::Approx(p.coords(40 + i, 1)).epsilon(1e-6));
    }
}

TEST_CASE("pca explained variance is invariant under orthogonal rotation") {
    auto X = gaussian_cloud(200, 5, 11, {2.0, 1.3, 0.9, 0.5, 0.2});
    auto p1 = pca_project(X);

    // random orthogonal matrix via QR
    Eigen::MatrixXd M = Eigen::MatrixXd::Random(5, 5);
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(M);
    Eigen::MatrixXd Q = qr.householderQ();
    MatrixRM<float> Xr = (X.cast<double>() * Q).cast<float>();
    auto p2 = pca_project(Xr);

    CHECK(p1.explained_variance[0] ==
          doctest::Approx(p2.explained_variance[0]).epsilon(1e-6));
    CHECK(p1.explained_variance[1] ==
          doctest::Approx(p2.explained_variance[1]).epsilon(1e-6));
    // coordinates agree up to per-axis sign
    for (int axis = 0; axis < 2; ++axis) {
        double same = 0, flipped = 0;
        for (int i = 0; i < 200; ++i) {
            same += std::abs(double(p1.coords(i, axis)) - double(p2.coords(i, axis)));
            flipped += std::abs(double(p1.coords(i, axis)) + double(p2.coords(i, axis)));
        }
        CHECK(std::min(same, flipped) / 200.0 < 1e-3);
    }
}

TEST_CASE("pca rejects rank-0 data") {
    MatrixRM<float> X(5, 4);
    for (int i = 0; i < 5; ++i)
        for (int j = 0; j < 4; ++j) X(i, j) = 1.5f;
    CHECK_THROWS_AS(pca_project(X), DataError);
    CHECK_THROWS_AS(pca_project(MatrixRM<float>::Random(2, 4)), ContractError);
}

TEST_CASE("silhouette separates well-separated clusters") {
    Rng rng(5);
    MatrixRM<float> X(60, 3);
    std::vector<std::string> labels;
    for (int i = 0; i < 60; ++i) {
        const bool first = i < 30;
        for (int j = 0; j < 3; ++j)
            X(i, j) = (first ? 0.0f : 20.0f) + float(rng.next_normal());
        labels.push_back(first ? "one" : "two");
    }
    CHECK(silhouette(X, labels, {"one", "two"}) > 0.8);

    // invariance under translation and uniform scaling
    MatrixRM<float> Xt = (X.array() * 3.7f + 11.0f).matrix();
    CHECK(silhouette(Xt, labels, {"one", "two"}) ==
          doctest::Approx(silhouette(X, labels, {"one", "two"})).epsilon(1e-5));
}

TEST_CASE("silhouette of shuffled labels and split clusters is near zero") {
    Rng rng(9);
    MatrixRM<float> X(200, 4);
    for (int i = 0; i < 200; ++i)
        for (int j = 0; j < 4; ++j) X(i, j) = float(rng.next_normal());

    // permutation oracle: random labels on one cloud
    std::vector<std::string> labels;
    for (int i = 0; i < 200; ++i) labels.push_back(rng.next_float() < 0.5f ? "a" : "b");
    CHECK(std::abs(silhouette(X, labels, {"a", "b"})) < 0.1);

    // single cluster split arbitrarily in half
    std::vector<std::string> halves;
    for (int i = 0; i < 200; ++i) halves.push_back(i < 100 ? "h1" : "h2");
    CHECK(silhouette(X, halves, {"h1", "h2"}) < 0.1);

    CHECK_THROWS_AS(silhouette(X, halves, {"h1"}), ContractError);
}

TEST_CASE("silhouette breakdown reports per-label means and honors the subset") {
    Rng rng(13);
    MatrixRM<float> X(90, 2);
    std::vector<std::string> labels;
    for (int i = 0; i < 90; ++i) {
        std::string label;
        float cx;
        if (i < 30) {
            label = "expert";
            cx = 0.0f;
        } else if (i < 60) {
            label = "beginner";
            cx = 12.0f;
        } else {
            label = "mid";
            cx = (i % 2 == 0) ? 1.0f : 11.0f; // spread across both clusters
        }
        X(i, 0) = cx + float(rng.next_normal());
        X(i, 1) = float(rng.next_normal());
        labels.push_back(label);
    }

    // subset excluding the bridging class: crisp separation
    CHECK(silhouette(X, labels, {"expert", "beginner"}) > 0.8);

    auto all = silhouette_breakdown(X, labels, {"expert", "beginner", "mid"});
    CHECK(all.counted == 90);
    CHECK(all.by_label.at("mid") < all.by_label.at("expert"));
    CHECK(all.by_label.at("mid") < all.by_label.at("beginner"));
}

TEST_CASE("emit_report writes tables, scatters, and the gate summary") {
    const fs::path dir = fs::temp_directory_path() / "sgem_report_test";
    fs::remove_all(dir);

    ReportInputs in;
    in.config_digest_hex = "deadbeef";
    in.master_seed = 42;
    in.stage_seeds["train-encoder"] = 7;

    Metrics m;
    m.dataset = "synthA";
    m.accuracy = {0.8, 0.02};
    m.precision = {0.79, 0.03};
    m.recall = {0.8, 0.02};
    m.f1 = {0.78, 0.04};
    in.experiments.push_back({"gesture_recognition", {m}});

    Projection2D proj;
    proj.coords = MatrixRM<float>::Random(5, 2);
    proj.explained_variance = {0.6, 0.2};
    for (int i = 0; i < 5; ++i) {
        proj.gesture.push_back("A1");
        proj.skill.push_back("Expert");
        proj.trial.push_back("t" + std::to_string(i));
    }
    in.projections["synthA"] = proj;
    in.gates.push_back({"gesture_accuracy", true, "0.80 >= 0.70"});

    auto files = emit_report(in, dir);
    CHECK(files.size() == 4); // csv + json + scatter + summary

    std::ifstream scatter(dir / "projection_synthA.csv");
    std::string header;
    std::getline(scatter, header);
    CHECK(header == "x,y,gesture,skill,trial_id");
    int rows = 0;
    std::string line;
    while (std::getline(scatter, line))
        if (!line.empty()) ++rows;
    CHECK(rows == 5); // scatter row count equals representation count

    std::ifstream csv(dir / "gesture_recognition.csv");
    std::getline(csv, header);
    CHECK(header ==
          "dataset,accuracy_mean,accuracy_std,precision_mean,precision_std,"
          "recall_mean,recall_std,f1_mean,f1_std");
    std::getline(csv, line);
    CHECK(line.starts_with("synthA,0.800000,0.020000,"));

    std::ifstream summary(dir / "summary.txt");
    std::string all((std::istreambuf_iterator<char>(summary)), {});
    CHECK(all.find("config_digest: deadbeef") != std::string::npos);
    CHECK(all.find("gate.gesture_accuracy: PASS") != std::string::npos);
    fs::remove_all(dir);
}
