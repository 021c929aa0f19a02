#include "sgem/gbt.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include "sgem/errors.hpp"

namespace sgem {

void GBTConfig::validate() const {
    require(rounds >= 1, "gbt config: rounds must be >= 1");
    require(max_depth >= 1, "gbt config: max_depth must be >= 1");
    require(shrinkage > 0.0f, "gbt config: shrinkage must be positive");
    require(l2_lambda >= 0.0f, "gbt config: l2_lambda must be non-negative");
    require(min_samples_leaf >= 1, "gbt config: min_samples_leaf must be >= 1");
}

namespace {

struct SplitCandidate {
    double gain = 0.0;
    int feature = -1;
    float threshold = 0.0f;
    bool found = false;
};

struct TreeBuilder {
    const MatrixRM<float>& X;
    const std::vector<double>& g;
    const std::vector<double>& h;
    const GBTConfig& cfg;
    RegressionTree tree;

    // scratch reused across nodes: (value, sample) pairs per feature scan
    std::vector<std::pair<float, int>> sorted;

    int build(std::vector<int>& samples, int depth) {
        double gsum = 0, hsum = 0;
        for (int i : samples) {
            gsum += g[std::size_t(i)];
            hsum += h[std::size_t(i)];
        }
        const double lambda = double(cfg.l2_lambda);

        const int node = int(tree.nodes.size());
        tree.nodes.emplace_back();

        SplitCandidate best;
        if (depth < cfg.max_depth && int(samples.size()) >= 2 * cfg.min_samples_leaf)
            best = find_split(samples, gsum, hsum);

        if (!best.found) {
            tree.nodes[std::size_t(node)].leaf = true;
            tree.nodes[std::size_t(node)].value =
                float(-gsum / (hsum + lambda + 1e-12));
            return node;
        }

        std::vector<int> left, right;
        for (int i : samples)
            (X(i, best.feature) < best.threshold ? left : right).push_back(i);

        tree.nodes[std::size_t(node)].leaf = false;
        tree.nodes[std::size_t(node)].feature = best.feature;
        tree.nodes[std::size_t(node)].threshold = best.threshold;
        samples.clear();
        samples.shrink_to_fit();
        const int l = build(left, depth + 1);
        const int r = build(right, depth + 1);
        tree.nodes[std::size_t(node)].left = l;
        tree.nodes[std::size_t(node)].right = r;
        return node;
    }

    // Exact greedy scan: every feature, every midpoint between distinct
    // neighboring values. Gain ties keep the lowest feature index then the
    // lowest threshold (ascending scan order, strict improvement required).
    SplitCandidate find_split(const std::vector<int>& samples, double gsum, double hsum) {
        const double lambda = double(cfg.l2_lambda);
        const double parent = gsum * gsum / (hsum + lambda + 1e-12);
        SplitCandidate best;

        for (int f = 0; f < int(X.cols()); ++f) {
            sorted.clear();
            for (int i : samples) sorted.emplace_back(X(i, f), i);
            std::sort(sorted.begin(), sorted.end());

            double gl = 0, hl = 0;
            for (std::size_t k = 0; k + 1 < sorted.size(); ++k) {
                gl += g[std::size_t(sorted[k].second)];
                hl += h[std::size_t(sorted[k].second)];
                if (sorted[k].first == sorted[k + 1].first) continue; // no boundary
                const int nl = int(k) + 1, nr = int(sorted.size()) - nl;
                if (nl < cfg.min_samples_leaf || nr < cfg.min_samples_leaf) continue;

                const double gr = gsum - gl, hr = hsum - hl;
                const double gain = 0.5 * (gl * gl / (hl + lambda + 1e-12) +
                                           gr * gr / (hr + lambda + 1e-12) - parent);
                if (gain > best.gain + 1e-12 || (!best.found && gain > 1e-12)) {
                    best.found = true;
                    best.gain = gain;
                    best.feature = f;
                    best.threshold = 0.5f * (sorted[k].first + sorted[k + 1].first);
                }
            }
        }
        return best;
    }
};

} // namespace

GBTModel gbt_train(const MatrixRM<float>& X, const std::vector<std::string>& y,
                   const GBTConfig& cfg) {
    cfg.validate();
    require(X.rows() == Eigen::Index(y.size()), "gbt_train: X rows must match labels");
    require(X.rows() >= 2, "gbt_train: need at least 2 samples");
    require(X.allFinite(), "gbt_train: non-finite feature values");

    const int n = int(X.rows());

    GBTModel model;
    {
        std::set<std::string> uniq(y.begin(), y.end());
        if (uniq.size() < 2)
            throw ConfigError("gbt_train: need at least 2 classes, got " +
                              std::to_string(uniq.size()));
        model.classes.assign(uniq.begin(), uniq.end()); // sorted
    }
    model.n_features = int(X.cols());
    model.shrinkage = cfg.shrinkage;

    const int k = int(model.classes.size());
    std::map<std::string, int> class_index;
    for (int c = 0; c < k; ++c) class_index[model.classes[std::size_t(c)]] = c;
    std::vector<int> yi(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) yi[std::size_t(i)] = class_index.at(y[std::size_t(i)]);

    // scores and softmax state in double for stable gradients
    std::vector<double> scores(static_cast<std::size_t>(n) * static_cast<std::size_t>(k), 0.0);
    std::vector<double> probs(scores.size());
    std::vector<double> g(static_cast<std::size_t>(n)), h(static_cast<std::size_t>(n));

    for (int round = 0; round < cfg.rounds; ++round) {
        for (int i = 0; i < n; ++i) {
            const double* row = scores.data() + std::size_t(i) * std::size_t(k);
            double mx = row[0];
            for (int c = 1; c < k; ++c) mx = std::max(mx, row[c]);
            double sum = 0;
            for (int c = 0; c < k; ++c) sum += std::exp(row[c] - mx);
            for (int c = 0; c < k; ++c)
                probs[std::size_t(i) * std::size_t(k) + std::size_t(c)] =
                    std::exp(row[c] - mx) / sum;
        }

        model.rounds.emplace_back();
        for (int c = 0; c < k; ++c) {
            for (int i = 0; i < n; ++i) {
                const double p = probs[std::size_t(i) * std::size_t(k) + std::size_t(c)];
                g[std::size_t(i)] = p - (yi[std::size_t(i)] == c ? 1.0 : 0.0);
                h[std::size_t(i)] = std::max(p * (1.0 - p), 1e-16);
            }
            TreeBuilder builder{X, g, h, cfg, {}, {}};
            std::vector<int> all(static_cast<std::size_t>(n));
            for (int i = 0; i < n; ++i) all[std::size_t(i)] = i;
            builder.build(all, 0);

            for (int i = 0; i < n; ++i)
                scores[std::size_t(i) * std::size_t(k) + std::size_t(c)] +=
                    double(cfg.shrinkage) * double(builder.tree.predict(&X(i, 0)));
            model.rounds.back().push_back(std::move(builder.tree));
        }
    }
    return model;
}

GBTPrediction gbt_predict(const GBTModel& model, const MatrixRM<float>& X) {
    require(int(X.cols()) == model.n_features,
            "gbt_predict: feature width " + std::to_string(X.cols()) +
                " does not match training width " + std::to_string(model.n_features));
    const int n = int(X.rows());
    const int k = int(model.classes.size());

    GBTPrediction out;
    out.probabilities.resize(n, k);
    out.labels.resize(std::size_t(n));

    for (int i = 0; i < n; ++i) {
        std::vector<double> score(std::size_t(k), double(model.base_score));
        for (const auto& round : model.rounds)
            for (int c = 0; c < k; ++c)
                score[std::size_t(c)] += double(model.shrinkage) *
                                         double(round[std::size_t(c)].predict(&X(i, 0)));
        double mx = score[0];
        for (int c = 1; c < k; ++c) mx = std::max(mx, score[std::size_t(c)]);
        double sum = 0;
        for (int c = 0; c < k; ++c) sum += std::exp(score[std::size_t(c)] - mx);
        int arg = 0;
        double best = -1;
        for (int c = 0; c < k; ++c) {
            const double p = std::exp(score[std::size_t(c)] - mx) / sum;
            out.probabilities(i, c) = float(p);
            if (p > best) { // strict: ties keep the lowest class index
                best = p;
                arg = c;
            }
        }
        out.labels[std::size_t(i)] = model.classes[std::size_t(arg)];
    }
    return out;
}

} // namespace sgem
