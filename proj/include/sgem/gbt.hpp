#pragma once

// Gradient-boosted regression trees over frozen representations: multiclass
// softmax objective, exact greedy split search over all features and midpoint
// thresholds, second-order leaf weights with L2 regularization. No histogram
// approximation, no subsampling.

#include <cstdint>
#include <string>
#include <vector>

#include "sgem/tensor.hpp"

namespace sgem {

struct GBTConfig {
    int rounds = 100;
    int max_depth = 4;
    float shrinkage = 0.1f;
    float l2_lambda = 1.0f;
    int min_samples_leaf = 2;
    std::uint64_t seed = 0; // training itself is deterministic; kept for config digests

    void validate() const;
};

struct TreeNode {
    bool leaf = true;
    int feature = -1;
    float threshold = 0.0f;
    int left = -1;
    int right = -1;
    float value = 0.0f; // leaf weight
};

struct RegressionTree {
    std::vector<TreeNode> nodes; // nodes[0] is the root

    float predict(const float* x) const {
        int i = 0;
        while (!nodes[std::size_t(i)].leaf)
            i = x[nodes[std::size_t(i)].feature] < nodes[std::size_t(i)].threshold
                    ? nodes[std::size_t(i)].left
                    : nodes[std::size_t(i)].right;
        return nodes[std::size_t(i)].value;
    }
};

struct GBTModel {
    std::vector<std::string> classes; // sorted; prediction ties break low index
    int n_features = 0;
    float shrinkage = 0.1f;
    float base_score = 0.0f;
    std::vector<std::vector<RegressionTree>> rounds; // [round][class]
};

/// Exact greedy multiclass boosting. Throws ConfigError when y holds fewer
/// than two classes, ContractError on non-finite features.
GBTModel gbt_train(const MatrixRM<float>& X, const std::vector<std::string>& y,
                   const GBTConfig& cfg);

struct GBTPrediction {
    std::vector<std::string> labels;
    MatrixRM<float> probabilities; // n x K, rows sum to 1
};

GBTPrediction gbt_predict(const GBTModel& model, const MatrixRM<float>& X);

} // namespace sgem
