#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <set>

#include "sgem/experiments.hpp"
#include "sgem/gbt.hpp"
#include "sgem/rng.hpp"

using namespace sgem;

namespace {

// Brute-force oracle for the first boosting round of the lowest class:
// enumerate every (feature, midpoint) pair and compute the exact gain from
// uniform-softmax gradients, independently of the tree builder.
struct OracleSplit {
    bool found = false;
    int feature = -1;
    float threshold = 0;
    double gain = 0;
};

OracleSplit brute_force_split(const MatrixRM<float>& X, const std::vector<std::string>& y,
                              float lambda, int min_leaf) {
    std::set<std::string> classes(y.begin(), y.end());
    const std::string c0 = *classes.begin();
    const double p = 1.0 / double(classes.size());
    const int n = int(X.rows());

    std::vector<double> g(static_cast<std::size_t>(n)), h(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        g[std::size_t(i)] = p - (y[std::size_t(i)] == c0 ? 1.0 : 0.0);
        h[std::size_t(i)] = p * (1.0 - p);
    }
    double gsum = 0, hsum = 0;
    for (int i = 0; i < n; ++i) {
        gsum += g[std::size_t(i)];
        hsum += h[std::size_t(i)];
    }
    const double parent = gsum * gsum / (hsum + double(lambda) + 1e-12);

    OracleSplit best;
    for (int f = 0; f < int(X.cols()); ++f) {
        std::vector<float> values;
        for (int i = 0; i < n; ++i) values.push_back(X(i, f));
        std::sort(values.begin(), values.end());
        values.erase(std::unique(values.begin(), values.end()), values.end());
        for (std::size_t k = 0; k + 1 < values.size(); ++k) {
            const float thr = 0.5f * (values[k] + values[k + 1]);
            double gl = 0, hl = 0;
            int nl = 0;
            for (int i = 0; i < n; ++i)
                if (X(i, f) < thr) {
                    gl += g[std::size_t(i)];
                    hl += h[std::size_t(i)];
                    ++nl;
                }
            if (nl < min_leaf || n - nl < min_leaf) continue;
            const double gr = gsum - gl, hr = hsum - hl;
            const double gain = 0.5 * (gl * gl / (hl + double(lambda) + 1e-12) +
                                       gr * gr / (hr + double(lambda) + 1e-12) - parent);
            if (gain > best.gain && gain > 1e-12) {
                best = {true, f, thr, gain};
            }
        }
    }
    return best;
}

MatrixRM<float> xor_features(int per_cell, std::uint64_t seed, std::vector<std::string>& y) {
    Rng rng(seed);
    MatrixRM<float> X(4 * per_cell, 2);
    y.clear();
    int r = 0;
    for (int cx = 0; cx < 2; ++cx)
        for (int cy = 0; cy < 2; ++cy)
            for (int i = 0; i < per_cell; ++i, ++r) {
                X(r, 0) = float(cx) + rng.uniform(-0.1f, 0.1f);
                X(r, 1) = float(cy) + rng.uniform(-0.1f, 0.1f);
                y.push_back(cx == cy ? "a" : "b");
            }
    return X;
}

double train_accuracy(const GBTModel& m, const MatrixRM<float>& X,
                      const std::vector<std::string>& y) {
    auto pred = gbt_predict(m, X);
    int ok = 0;
    for (std::size_t i = 0; i < y.size(); ++i) ok += pred.labels[i] == y[i];
    return double(ok) / double(y.size());
}

} // namespace

TEST_CASE("two 1-D classes split at zero reach full training accuracy") {
    Rng rng(1);
    MatrixRM<float> X(40, 1);
    std::vector<std::string> y;
    for (int i = 0; i < 40; ++i) {
        const bool neg = i % 2 == 0;
        X(i, 0) = neg ? -rng.uniform(0.2f, 2.f) : rng.uniform(0.2f, 2.f);
        y.push_back(neg ? "left" : "right");
    }
    GBTConfig cfg;
    cfg.rounds = 10;
    cfg.max_depth = 1;
    auto model = gbt_train(X, y, cfg);
    CHECK(train_accuracy(model, X, y) == 1.0);
}

TEST_CASE("depth-1 single-round split equals the brute-force oracle") {
    for (std::uint64_t seed = 1; seed <= 6; ++seed) {
        Rng rng(seed);
        const int n = 40 + int(rng.next_below(161)); // up to ~200
        MatrixRM<float> X(n, 8);
        std::vector<std::string> y;
        for (int i = 0; i < n; ++i) {
            for (int f = 0; f < 8; ++f) X(i, f) = rng.uniform(-2.f, 2.f);
            y.push_back(rng.next_float() < 0.4f ? "u" : (rng.next_float() < 0.5f ? "v" : "w"));
        }
        // guarantee class coverage
        y[0] = "u";
        y[1] = "v";
        y[2] = "w";

        GBTConfig cfg;
        cfg.rounds = 1;
        cfg.max_depth = 1;
        auto model = gbt_train(X, y, cfg);
        const auto& root = model.rounds.at(0).at(0).nodes.at(0);
        auto oracle = brute_force_split(X, y, cfg.l2_lambda, cfg.min_samples_leaf);

        REQUIRE(oracle.found);
        REQUIRE(!root.leaf);
        CAPTURE(seed);
        CHECK(root.feature == oracle.feature);
        CHECK(root.threshold == doctest::Approx(oracle.threshold).epsilon(1e-6));
    }
}

TEST_CASE("xor needs depth 2; depth-1 boosting is capped at 0.75") {
    std::vector<std::string> y;
    auto X = xor_features(20, 9, y);

    GBTConfig deep;
    deep.rounds = 30;
    deep.max_depth = 2;
    CHECK(train_accuracy(gbt_train(X, y, deep), X, y) == 1.0);

    GBTConfig stumps;
    stumps.rounds = 30;
    stumps.max_depth = 1;
    CHECK(train_accuracy(gbt_train(X, y, stumps), X, y) <= 0.75);

    // enumeration oracle: additive per-axis scores s_ij = f_i + g_j can label
    // at most 3 of the 4 xor cells correctly
    int best_cells = 0;
    const double grid[5] = {-1.0, -0.5, 0.0, 0.5, 1.0};
    for (double f0 : grid)
        for (double f1 : grid)
            for (double g0 : grid)
                for (double g1 : grid) {
                    int cells = 0;
                    cells += (f0 + g0 > 0) ? 1 : 0; // cell (0,0) wants "a" (positive)
                    cells += (f1 + g1 > 0) ? 1 : 0; // cell (1,1) wants "a"
                    cells += (f0 + g1 < 0) ? 1 : 0; // cell (0,1) wants "b"
                    cells += (f1 + g0 < 0) ? 1 : 0; // cell (1,0) wants "b"
                    best_cells = std::max(best_cells, cells);
                }
    CHECK(best_cells == 3);
}

TEST_CASE("zero-round model predicts uniformly and class 0 everywhere") {
    GBTModel model;
    model.classes = {"alpha", "beta", "gamma"};
    model.n_features = 4;
    MatrixRM<float> X = MatrixRM<float>::Random(6, 4);
    auto pred = gbt_predict(model, X);
    for (int i = 0; i < 6; ++i) {
        CHECK(pred.labels[std::size_t(i)] == "alpha");
        double sum = 0;
        for (int c = 0; c < 3; ++c) {
            CHECK(pred.probabilities(i, c) == doctest::Approx(1.0 / 3).epsilon(1e-6));
            sum += double(pred.probabilities(i, c));
        }
        CHECK(sum == doctest::Approx(1.0).epsilon(1e-6));
    }
}

TEST_CASE("prediction rows always sum to one") {
    std::vector<std::string> y;
    auto X = xor_features(10, 3, y);
    GBTConfig cfg;
    cfg.rounds = 12;
    cfg.max_depth = 2;
    auto model = gbt_train(X, y, cfg);
    auto pred = gbt_predict(model, X);
    for (int i = 0; i < int(X.rows()); ++i) {
        double sum = 0;
        for (int c = 0; c < 2; ++c) sum += double(pred.probabilities(i, c));
        CHECK(sum == doctest::Approx(1.0).epsilon(1e-6));
    }
    CHECK_THROWS_AS(gbt_predict(model, MatrixRM<float>::Random(3, 5)), ContractError);
}

TEST_CASE("gbt_train rejects single-class input") {
    MatrixRM<float> X = MatrixRM<float>::Random(10, 3);
    std::vector<std::string> y(10, "only");
    CHECK_THROWS_AS(gbt_train(X, y, GBTConfig{}), ConfigError);
}

TEST_CASE("splits are invariant to strictly monotone feature transforms") {
    std::vector<std::string> y;
    auto X = xor_features(15, 21, y);
    MatrixRM<float> Xt = X;
    for (int i = 0; i < int(X.rows()); ++i) {
        Xt(i, 0) = std::exp(X(i, 0));                    // monotone
        Xt(i, 1) = X(i, 1) * X(i, 1) * X(i, 1) + 2.0f * X(i, 1); // monotone
    }
    GBTConfig cfg;
    cfg.rounds = 15;
    cfg.max_depth = 2;
    auto m1 = gbt_train(X, y, cfg);
    auto m2 = gbt_train(Xt, y, cfg);
    auto p1 = gbt_predict(m1, X);
    auto p2 = gbt_predict(m2, Xt);
    CHECK(p1.labels == p2.labels);
    // identical tree shapes: same features chosen round for round
    for (std::size_t r = 0; r < m1.rounds.size(); ++r)
        for (std::size_t c = 0; c < m1.rounds[r].size(); ++c) {
            REQUIRE(m1.rounds[r][c].nodes.size() == m2.rounds[r][c].nodes.size());
            for (std::size_t k = 0; k < m1.rounds[r][c].nodes.size(); ++k)
                CHECK(m1.rounds[r][c].nodes[k].feature == m2.rounds[r][c].nodes[k].feature);
        }
}

TEST_CASE("constant features never change predictions") {
    std::vector<std::string> y;
    auto X = xor_features(15, 33, y);
    MatrixRM<float> Xc(X.rows(), 3);
    Xc.leftCols(2) = X;
    Xc.col(2).setConstant(13.7f);
    GBTConfig cfg;
    cfg.rounds = 15;
    cfg.max_depth = 2;
    auto p1 = gbt_predict(gbt_train(X, y, cfg), X);
    auto p2 = gbt_predict(gbt_train(Xc, y, cfg), Xc);
    CHECK(p1.labels == p2.labels);
}

TEST_CASE("duplicating training samples preserves the decision function at lambda 0") {
    std::vector<std::string> y;
    auto X = xor_features(12, 5, y);
    MatrixRM<float> Xd(X.rows() * 5, 2);
    std::vector<std::string> yd;
    for (int rep = 0; rep < 5; ++rep)
        for (int i = 0; i < int(X.rows()); ++i) {
            Xd.row(rep * X.rows() + i) = X.row(i);
            yd.push_back(y[std::size_t(i)]);
        }
    GBTConfig cfg;
    cfg.rounds = 3; // stop before the fit saturates and gains shrink to ties
    cfg.max_depth = 2;
    cfg.l2_lambda = 0.0f;
    auto test = xor_features(7, 77, y); // fresh points, labels regenerated in y
    auto p1 = gbt_predict(gbt_train(X, std::vector<std::string>(yd.begin(), yd.begin() + X.rows()), cfg), test);
    auto p2 = gbt_predict(gbt_train(Xd, yd, cfg), test);
    CHECK(p1.labels == p2.labels);
}

TEST_CASE("evaluate matches hand-computed confusion cases") {
    SplitMetrics perfect = evaluate({"a", "b", "c"}, {"a", "b", "c"}, {"a", "b", "c"});
    CHECK(perfect.accuracy == 1.0);
    CHECK(perfect.precision == 1.0);
    CHECK(perfect.recall == 1.0);
    CHECK(perfect.f1 == 1.0);

    auto m = evaluate({"a", "a", "b", "b"}, {"a", "b", "b", "b"}, {"a", "b"});
    CHECK(m.accuracy == doctest::Approx(0.75));
    CHECK(m.precision == doctest::Approx(0.5 * 1.0 + 0.5 * (2.0 / 3.0))); // 0.8333
    CHECK(m.recall == doctest::Approx(0.75));

    auto one_sided = evaluate({"a", "a", "b", "b"}, {"a", "a", "a", "a"}, {"a", "b"});
    CHECK(one_sided.accuracy == doctest::Approx(0.5));

    CHECK_THROWS_AS(evaluate({}, {}, {"a"}), ContractError);
}

TEST_CASE("weighted recall equals accuracy for single-label multiclass") {
    Rng rng(17);
    const std::vector<std::string> classes = {"c0", "c1", "c2", "c3"};
    for (int rep = 0; rep < 10; ++rep) {
        const int n = 20 + int(rng.next_below(50));
        std::vector<std::string> yt, yp;
        for (int i = 0; i < n; ++i) {
            yt.push_back(classes[rng.next_below(4)]);
            yp.push_back(classes[rng.next_below(4)]);
        }
        auto m = evaluate(yt, yp, classes);
        CHECK(m.recall == doctest::Approx(m.accuracy).epsilon(1e-12));
    }
}

TEST_CASE("evaluate is invariant to joint sample permutation") {
    Rng rng(23);
    std::vector<std::string> yt, yp;
    const std::vector<std::string> classes = {"x", "y", "z"};
    for (int i = 0; i < 60; ++i) {
        yt.push_back(classes[rng.next_below(3)]);
        yp.push_back(classes[rng.next_below(3)]);
    }
    auto base = evaluate(yt, yp, classes);

    std::vector<int> perm(60);
    std::iota(perm.begin(), perm.end(), 0);
    rng.shuffle(perm);
    std::vector<std::string> yt2, yp2;
    for (int i : perm) {
        yt2.push_back(yt[std::size_t(i)]);
        yp2.push_back(yp[std::size_t(i)]);
    }
    auto shuffled = evaluate(yt2, yp2, classes);
    CHECK(base.accuracy == shuffled.accuracy);
    CHECK(base.precision == doctest::Approx(shuffled.precision).epsilon(1e-12));
    CHECK(base.recall == doctest::Approx(shuffled.recall).epsilon(1e-12));
    CHECK(base.f1 == doctest::Approx(shuffled.f1).epsilon(1e-12));
}

TEST_CASE("split experiment runs 5 splits on separable blobs") {
    Rng rng(31);
    MatrixRM<float> X(80, 4);
    std::vector<std::string> y;
    for (int i = 0; i < 80; ++i) {
        const bool pos = i % 2 == 0;
        for (int f = 0; f < 4; ++f)
            X(i, f) = (pos ? 2.0f : -2.0f) + rng.uniform(-0.5f, 0.5f);
        y.push_back(pos ? "p" : "q");
    }
    GBTConfig gbt;
    gbt.rounds = 20;
    SplitConfig split;
    split.seed = 3;
    auto m = run_split_experiment(X, y, "blobs", gbt, split);
    CHECK(m.splits.size() == 5);
    CHECK(m.accuracy.mean > 0.95);
    CHECK(m.accuracy.stddev >= 0.0);
    CHECK(m.recall.mean == doctest::Approx(m.accuracy.mean).epsilon(1e-12));

    // determinism: same seed, same result
    auto m2 = run_split_experiment(X, y, "blobs", gbt, split);
    CHECK(m.accuracy.mean == m2.accuracy.mean);
    CHECK(m.f1.stddev == m2.f1.stddev);
}

TEST_CASE("split experiment reports unattainable class coverage") {
    MatrixRM<float> X = MatrixRM<float>::Random(2, 3);
    std::vector<std::string> y = {"a", "b"};
    SplitConfig split;
    split.test_fraction = 0.5; // one test row: train can never cover both classes
    CHECK_THROWS_AS(run_split_experiment(X, y, "tiny", GBTConfig{}, split), DataError);

    std::vector<std::string> single(10, "only");
    MatrixRM<float> X2 = MatrixRM<float>::Random(10, 3);
    CHECK_THROWS_AS(run_split_experiment(X2, single, "mono", GBTConfig{}, SplitConfig{}),
                    ConfigError);
}
