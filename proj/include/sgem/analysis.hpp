#pragma once

// 2-D projection of representations (power-iteration PCA), silhouette-based
// cluster-structure scoring, and report emission. Silhouettes for cluster
// claims are computed in the full representation space; the 2-D projection is
// presentation only.

#include <map>

#include "sgem/experiments.hpp"

namespace sgem {

struct Projection2D {
    MatrixRM<float> coords; // n x 2
    std::array<double, 2> explained_variance{}; // fractions, non-increasing
    // aligned labels, filled by the caller before emission
    std::vector<std::string> gesture;
    std::vector<std::string> skill;
    std::vector<std::string> trial;
};

/// Mean-centers and projects onto the top-2 covariance eigenvectors found by
/// iterated power method with deflation (tol 1e-9, <= 1e4 iterations). Sign
/// convention: the largest-magnitude component of each eigenvector is
/// positive. Throws DataError when all rows are identical.
Projection2D pca_project(const MatrixRM<float>& representations);

/// Mean silhouette (Euclidean) over samples whose label is in `subset`.
/// Requires >= 2 subset labels, each with >= 2 members.
double silhouette(const MatrixRM<float>& points, const std::vector<std::string>& labels,
                  const std::vector<std::string>& subset);

struct SilhouetteBreakdown {
    double mean = 0;
    int counted = 0;
    std::map<std::string, double> by_label;
};

SilhouetteBreakdown silhouette_breakdown(const MatrixRM<float>& points,
                                         const std::vector<std::string>& labels,
                                         const std::vector<std::string>& subset);

// ---- report emission -------------------------------------------------------

struct GateResult {
    std::string name;
    bool passed = false;
    std::string detail;
};

struct ReportInputs {
    std::string config_digest_hex;
    std::uint64_t master_seed = 0;
    std::map<std::string, std::uint64_t> stage_seeds;
    // experiment name -> table rows (one row per dataset)
    std::vector<std::pair<std::string, std::vector<Metrics>>> experiments;
    // task -> projection with labels attached
    std::map<std::string, Projection2D> projections;
    std::vector<GateResult> gates;
};

/// Writes per-experiment metrics CSV/JSON, per-task scatter CSVs
/// (x,y,gesture,skill,trial_id) and a plain-text summary with config digest,
/// seeds, and each gate's pass/fail. Returns the list of written files.
std::vector<std::filesystem::path> emit_report(const ReportInputs& inputs,
                                               const std::filesystem::path& out_dir);

} // namespace sgem
