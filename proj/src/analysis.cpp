#include "sgem/analysis.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <fstream>
#include <set>

#include "sgem/rng.hpp"

namespace sgem {

namespace {

// dominant eigenpair of a symmetric PSD matrix by power iteration
std::pair<double, Eigen::VectorXd> power_iterate(const Eigen::MatrixXd& c) {
    const int d = int(c.rows());
    Rng rng(0x5eed2024u);
    Eigen::VectorXd v(d);
    for (int i = 0; i < d; ++i) v[i] = rng.uniform(-1.f, 1.f);
    v.normalize();

    for (int it = 0; it < 10000; ++it) {
        Eigen::VectorXd w = c * v;
        const double norm = w.norm();
        if (norm < 1e-300) break; // deflated to zero: any unit vector works
        w /= norm;
        if (w.dot(v) < 0) w = -w;
        const double delta = (w - v).norm();
        v = w;
        if (delta < 1e-9) break;
    }
    const double lambda = v.dot(c * v);
    return {lambda, v};
}

void fix_sign(Eigen::VectorXd& v) {
    int arg = 0;
    for (int i = 1; i < int(v.size()); ++i)
        if (std::abs(v[i]) > std::abs(v[arg])) arg = i;
    if (v[arg] < 0) v = -v;
}

} // namespace

Projection2D pca_project(const MatrixRM<float>& representations) {
    const int n = int(representations.rows());
    const int d = int(representations.cols());
    require(n >= 3, "pca_project: need at least 3 rows");

    Eigen::MatrixXd x = representations.cast<double>();
    const Eigen::RowVectorXd mean = x.colwise().mean();
    x.rowwise() -= mean;

    Eigen::MatrixXd cov = (x.transpose() * x) / double(n - 1);
    const double total = cov.trace();
    if (!(total > 1e-18))
        throw DataError("pca_project: degenerate input (all rows identical)");

    auto [l1, v1] = power_iterate(cov);
    Eigen::MatrixXd deflated = cov - l1 * (v1 * v1.transpose());
    auto [l2, v2] = power_iterate(deflated);
    fix_sign(v1);
    fix_sign(v2);

    Projection2D p;
    p.coords.resize(n, 2);
    p.coords.col(0) = (x * v1).cast<float>();
    p.coords.col(1) = (x * v2).cast<float>();
    p.explained_variance = {std::max(0.0, l1) / total, std::max(0.0, l2) / total};
    return p;
}

SilhouetteBreakdown silhouette_breakdown(const MatrixRM<float>& points,
                                         const std::vector<std::string>& labels,
                                         const std::vector<std::string>& subset) {
    require(points.rows() == Eigen::Index(labels.size()),
            "silhouette: points/labels length mismatch");
    const std::set<std::string> keep(subset.begin(), subset.end());
    require(keep.size() >= 2, "silhouette: subset must contain >= 2 labels");

    // member indices per subset label
    std::map<std::string, std::vector<int>> members;
    for (int i = 0; i < int(labels.size()); ++i)
        if (keep.contains(labels[std::size_t(i)]))
            members[labels[std::size_t(i)]].push_back(i);
    require(members.size() >= 2, "silhouette: fewer than 2 subset labels present");
    for (const auto& [label, rows] : members)
        require(rows.size() >= 2,
                "silhouette: label '" + label + "' has fewer than 2 members");

    auto dist = [&](int i, int j) {
        return double((points.row(i) - points.row(j)).norm());
    };

    SilhouetteBreakdown out;
    std::map<std::string, std::pair<double, int>> per_label;
    for (const auto& [label, rows] : members) {
        for (int i : rows) {
            double a = 0;
            for (int j : rows)
                if (j != i) a += dist(i, j);
            a /= double(rows.size() - 1);

            double b = std::numeric_limits<double>::infinity();
            for (const auto& [other, other_rows] : members) {
                if (other == label) continue;
                double m = 0;
                for (int j : other_rows) m += dist(i, j);
                b = std::min(b, m / double(other_rows.size()));
            }
            const double denom = std::max(a, b);
            const double s = denom > 0 ? (b - a) / denom : 0.0;
            out.mean += s;
            ++out.counted;
            per_label[label].first += s;
            per_label[label].second += 1;
        }
    }
    out.mean /= double(out.counted);
    for (const auto& [label, acc] : per_label)
        out.by_label[label] = acc.first / double(acc.second);
    return out;
}

double silhouette(const MatrixRM<float>& points, const std::vector<std::string>& labels,
                  const std::vector<std::string>& subset) {
    return silhouette_breakdown(points, labels, subset).mean;
}

std::vector<std::filesystem::path> emit_report(const ReportInputs& inputs,
                                               const std::filesystem::path& out_dir) {
    std::error_code ec;
    std::filesystem::create_directories(out_dir, ec);
    if (!std::filesystem::is_directory(out_dir))
        throw IoError("cannot create report directory: " + out_dir.string());

    std::vector<std::filesystem::path> written;

    for (const auto& [name, rows] : inputs.experiments) {
        const auto csv = out_dir / (name + ".csv");
        const auto json = out_dir / (name + ".json");
        write_metrics_csv(csv, rows);
        write_metrics_json(json, rows);
        written.push_back(csv);
        written.push_back(json);
    }

    for (const auto& [task, proj] : inputs.projections) {
        const auto path = out_dir / ("projection_" + task + ".csv");
        std::ofstream os(path, std::ios::trunc);
        if (!os) throw IoError("cannot open for writing: " + path.string());
        os << "x,y,gesture,skill,trial_id\n";
        char buf[64];
        for (int i = 0; i < int(proj.coords.rows()); ++i) {
            std::snprintf(buf, sizeof buf, "%.6f,%.6f,", double(proj.coords(i, 0)),
                          double(proj.coords(i, 1)));
            os << buf << proj.gesture[std::size_t(i)] << ',' << proj.skill[std::size_t(i)]
               << ',' << proj.trial[std::size_t(i)] << '\n';
        }
        if (!os) throw IoError("write failed: " + path.string());
        written.push_back(path);
    }

    const auto summary = out_dir / "summary.txt";
    {
        std::ofstream os(summary, std::ios::trunc);
        if (!os) throw IoError("cannot open for writing: " + summary.string());
        os << "config_digest: " << inputs.config_digest_hex << '\n';
        os << "master_seed: " << inputs.master_seed << '\n';
        for (const auto& [stage, seed] : inputs.stage_seeds)
            os << "seed." << stage << ": " << seed << '\n';
        os << '\n';
        for (const auto& [task, proj] : inputs.projections) {
            char buf[96];
            std::snprintf(buf, sizeof buf, "projection.%s.explained_variance: %.4f %.4f\n",
                          task.c_str(), proj.explained_variance[0],
                          proj.explained_variance[1]);
            os << buf;
        }
        os << '\n';
        for (const auto& gate : inputs.gates)
            os << "gate." << gate.name << ": " << (gate.passed ? "PASS" : "FAIL") << " ("
               << gate.detail << ")\n";
        if (!os) throw IoError("write failed: " + summary.string());
    }
    written.push_back(summary);
    return written;
}

} // namespace sgem
