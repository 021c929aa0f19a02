#include "sgem/experiments.hpp"

#include <algorithm>
#include <fstream>
#include <cmath>
#include <map>
#include <set>

#include <json.hpp>

#include "sgem/rng.hpp"

namespace sgem {

SplitMetrics evaluate(const std::vector<std::string>& y_true,
                      const std::vector<std::string>& y_pred,
                      const std::vector<std::string>& classes) {
    require(!y_true.empty(), "evaluate: empty input");
    require(y_true.size() == y_pred.size(), "evaluate: length mismatch");

    const int n = int(y_true.size());
    std::map<std::string, int> idx;
    for (const auto& c : classes) idx.emplace(c, int(idx.size()));
    const int k = int(idx.size());

    std::vector<int> tp(static_cast<std::size_t>(k)), fp(static_cast<std::size_t>(k)), support(static_cast<std::size_t>(k));
    int correct = 0;
    for (int i = 0; i < n; ++i) {
        const auto ti = idx.find(y_true[std::size_t(i)]);
        const auto pi = idx.find(y_pred[std::size_t(i)]);
        require(ti != idx.end() && pi != idx.end(),
                "evaluate: label outside the provided class set");
        ++support[std::size_t(ti->second)];
        if (ti->second == pi->second) {
            ++correct;
            ++tp[std::size_t(ti->second)];
        } else {
            ++fp[std::size_t(pi->second)];
        }
    }

    SplitMetrics m;
    m.accuracy = double(correct) / double(n);
    for (int c = 0; c < k; ++c) {
        if (support[std::size_t(c)] == 0) continue; // absent class: zero weight
        const double weight = double(support[std::size_t(c)]) / double(n);
        const int predicted = tp[std::size_t(c)] + fp[std::size_t(c)];
        const double precision =
            predicted > 0 ? double(tp[std::size_t(c)]) / double(predicted) : 0.0;
        const double recall = double(tp[std::size_t(c)]) / double(support[std::size_t(c)]);
        const double f1 =
            precision + recall > 0 ? 2 * precision * recall / (precision + recall) : 0.0;
        m.precision += weight * precision;
        m.recall += weight * recall;
        m.f1 += weight * f1;
    }
    return m;
}

namespace {

Stat aggregate(const std::vector<double>& values) {
    Stat s;
    for (double v : values) s.mean += v;
    s.mean /= double(values.size());
    double var = 0;
    for (double v : values) var += (v - s.mean) * (v - s.mean);
    s.stddev = std::sqrt(var / double(values.size()));
    return s;
}

// one seeded train/test partition; retried until train covers every class
std::pair<std::vector<int>, std::vector<int>> make_split(
    const std::vector<std::string>& y, const SplitConfig& cfg, int split_index,
    const std::vector<std::string>* trial_ids) {
    const int n = int(y.size());
    const std::set<std::string> all_classes(y.begin(), y.end());

    for (int attempt = 0; attempt < 100; ++attempt) {
        Rng rng(derive_seed(cfg.seed, "split/" + std::to_string(split_index) + "/" +
                                          std::to_string(attempt)));
        std::vector<int> test_rows, train_rows;

        if (cfg.split_by == SplitBy::Trial) {
            require(trial_ids && int(trial_ids->size()) == n,
                    "trial-level split needs trial ids");
            std::vector<std::string> trials;
            {
                std::set<std::string> uniq(trial_ids->begin(), trial_ids->end());
                trials.assign(uniq.begin(), uniq.end());
            }
            rng.shuffle(trials);
            const int n_test = std::max(1, int(std::lround(cfg.test_fraction *
                                                           double(trials.size()))));
            std::set<std::string> test_trials(trials.begin(), trials.begin() + n_test);
            for (int i = 0; i < n; ++i)
                ((test_trials.contains((*trial_ids)[std::size_t(i)])) ? test_rows
                                                                      : train_rows)
                    .push_back(i);
        } else {
            std::vector<int> perm(static_cast<std::size_t>(n));
            for (int i = 0; i < n; ++i) perm[std::size_t(i)] = i;
            rng.shuffle(perm);
            const int n_test = std::max(1, int(std::lround(cfg.test_fraction * double(n))));
            test_rows.assign(perm.begin(), perm.begin() + std::min(n_test, n - 1));
            train_rows.assign(perm.begin() + std::min(n_test, n - 1), perm.end());
        }

        std::set<std::string> train_classes;
        for (int i : train_rows) train_classes.insert(y[std::size_t(i)]);
        if (train_classes == all_classes && !test_rows.empty()) {
            std::sort(train_rows.begin(), train_rows.end());
            std::sort(test_rows.begin(), test_rows.end());
            return {std::move(train_rows), std::move(test_rows)};
        }
    }
    throw DataError("could not build a class-covering train split in 100 attempts");
}

} // namespace

Metrics run_split_experiment(const MatrixRM<float>& X, const std::vector<std::string>& y,
                             const std::string& dataset_name, const GBTConfig& gbt,
                             const SplitConfig& split,
                             const std::vector<std::string>* trial_ids) {
    require(X.rows() == Eigen::Index(y.size()), "split experiment: X rows != labels");
    {
        std::set<std::string> uniq(y.begin(), y.end());
        if (uniq.size() < 2)
            throw ConfigError("split experiment needs >= 2 classes in '" + dataset_name + "'");
    }

    Metrics m;
    m.dataset = dataset_name;
    std::vector<double> acc, prec, rec, f1;
    for (int s = 0; s < split.n_splits; ++s) {
        auto [train_rows, test_rows] = make_split(y, split, s, trial_ids);

        MatrixRM<float> x_train(train_rows.size(), X.cols());
        std::vector<std::string> y_train;
        y_train.reserve(train_rows.size());
        for (std::size_t i = 0; i < train_rows.size(); ++i) {
            x_train.row(Eigen::Index(i)) = X.row(train_rows[i]);
            y_train.push_back(y[std::size_t(train_rows[i])]);
        }
        MatrixRM<float> x_test(test_rows.size(), X.cols());
        std::vector<std::string> y_test;
        y_test.reserve(test_rows.size());
        for (std::size_t i = 0; i < test_rows.size(); ++i) {
            x_test.row(Eigen::Index(i)) = X.row(test_rows[i]);
            y_test.push_back(y[std::size_t(test_rows[i])]);
        }

        auto model = gbt_train(x_train, y_train, gbt);
        auto pred = gbt_predict(model, x_test);
        auto sm = evaluate(y_test, pred.labels, model.classes);
        m.splits.push_back(sm);
        acc.push_back(sm.accuracy);
        prec.push_back(sm.precision);
        rec.push_back(sm.recall);
        f1.push_back(sm.f1);
    }
    m.accuracy = aggregate(acc);
    m.precision = aggregate(prec);
    m.recall = aggregate(rec);
    m.f1 = aggregate(f1);
    return m;
}

Metrics transfer_experiment(const std::filesystem::path& checkpoint_path,
                            const std::vector<GestureWindow>& windows,
                            const std::string& dataset_name, const GBTConfig& gbt,
                            const SplitConfig& split, int threads) {
    auto ck = load_checkpoint(checkpoint_path);
    require(!windows.empty(), "transfer: no windows");
    const auto& flow = windows.front().flow;
    if (flow.rank() != 3 || flow.extent(0) != ck.encoder.cfg.in_channels ||
        flow.extent(1) != ck.encoder.cfg.input_size ||
        flow.extent(2) != ck.encoder.cfg.input_size)
        throw DataError("transfer: checkpoint expects flow stacks of [" +
                        std::to_string(ck.encoder.cfg.in_channels) + "," +
                        std::to_string(ck.encoder.cfg.input_size) + "," +
                        std::to_string(ck.encoder.cfg.input_size) + "], windows carry " +
                        flow.shape_str());

    auto ds = embed_dataset(windows, ck.encoder, threads);
    return run_split_experiment(ds.X, ds.gesture, dataset_name, gbt, split, &ds.trial);
}

namespace {
std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6f", v);
    return buf;
}
} // namespace

void write_metrics_csv(const std::filesystem::path& path, const std::vector<Metrics>& rows) {
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw IoError("cannot open for writing: " + path.string());
    os << "dataset,accuracy_mean,accuracy_std,precision_mean,precision_std,"
          "recall_mean,recall_std,f1_mean,f1_std\n";
    for (const auto& m : rows)
        os << m.dataset << ',' << fmt(m.accuracy.mean) << ',' << fmt(m.accuracy.stddev)
           << ',' << fmt(m.precision.mean) << ',' << fmt(m.precision.stddev) << ','
           << fmt(m.recall.mean) << ',' << fmt(m.recall.stddev) << ',' << fmt(m.f1.mean)
           << ',' << fmt(m.f1.stddev) << '\n';
    if (!os) throw IoError("write failed: " + path.string());
}

std::vector<Metrics> read_metrics_json(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw IoError("cannot open: " + path.string());
    nlohmann::json doc;
    try {
        is >> doc;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError("broken metrics file " + path.string() + ": " + e.what());
    }
    std::vector<Metrics> rows;
    for (const auto& j : doc) {
        Metrics m;
        m.dataset = j.at("dataset").get<std::string>();
        m.accuracy = {j.at("accuracy_mean").get<double>(), j.at("accuracy_std").get<double>()};
        m.precision = {j.at("precision_mean").get<double>(),
                       j.at("precision_std").get<double>()};
        m.recall = {j.at("recall_mean").get<double>(), j.at("recall_std").get<double>()};
        m.f1 = {j.at("f1_mean").get<double>(), j.at("f1_std").get<double>()};
        for (const auto& s : j.value("splits", nlohmann::json::array()))
            m.splits.push_back({s.at("accuracy").get<double>(), s.at("precision").get<double>(),
                                s.at("recall").get<double>(), s.at("f1").get<double>()});
        rows.push_back(std::move(m));
    }
    return rows;
}

void write_metrics_json(const std::filesystem::path& path, const std::vector<Metrics>& rows) {
    nlohmann::json doc = nlohmann::json::array();
    for (const auto& m : rows) {
        nlohmann::json splits = nlohmann::json::array();
        for (const auto& s : m.splits)
            splits.push_back({{"accuracy", s.accuracy},
                              {"precision", s.precision},
                              {"recall", s.recall},
                              {"f1", s.f1}});
        doc.push_back({{"dataset", m.dataset},
                       {"accuracy_mean", m.accuracy.mean},
                       {"accuracy_std", m.accuracy.stddev},
                       {"precision_mean", m.precision.mean},
                       {"precision_std", m.precision.stddev},
                       {"recall_mean", m.recall.mean},
                       {"recall_std", m.recall.stddev},
                       {"f1_mean", m.f1.mean},
                       {"f1_std", m.f1.stddev},
                       {"splits", splits}});
    }
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw IoError("cannot open for writing: " + path.string());
    os << doc.dump(2) << '\n';
    if (!os) throw IoError("write failed: " + path.string());
}

} // namespace sgem
