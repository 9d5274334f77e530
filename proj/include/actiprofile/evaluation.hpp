#pragma once

#include <map>
#include <ostream>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "actiprofile/csv.hpp"
#include "actiprofile/error.hpp"
#include "actiprofile/metrics.hpp"

namespace actiprofile {

struct EvalReport {
    std::string measure;
    std::string model_id;
    double auc1 = 0;
    double auc3 = 0;
    double gamma = 0;
    bool gamma_degenerate = false;   // every pair tied; gamma reported as 0
    std::size_t n = 0;
    std::string split;   // "holdout" or "temporal:<A>-><B>"
    double width = 0;    // activity class width, 0 for demographics only
    bool selected = false;
};

/// AUC for category 1 from p1, for category 3 from p3, Gamma between the
/// argmax category and the truth.
inline EvalReport evaluate_probs(const Eigen::MatrixXd& probs, std::span<const int> truth) {
    if (static_cast<std::size_t>(probs.rows()) != truth.size())
        throw DataError("evaluate: probability rows and categories differ");
    const auto k = probs.cols();
    std::vector<double> p1(truth.size()), pk(truth.size());
    std::vector<int> is1(truth.size()), isk(truth.size()), predicted(truth.size());
    std::vector<int> truth_v(truth.begin(), truth.end());
    for (std::size_t i = 0; i < truth.size(); ++i) {
        const auto r = static_cast<Eigen::Index>(i);
        p1[i] = probs(r, 0);
        pk[i] = probs(r, k - 1);
        is1[i] = truth[i] == 1;
        isk[i] = truth[i] == k;
        std::vector<double> row(static_cast<std::size_t>(k));
        for (Eigen::Index c = 0; c < k; ++c)
            row[static_cast<std::size_t>(c)] = probs(r, c);
        predicted[i] = argmax_category(row);
    }
    EvalReport rep;
    rep.n = truth.size();
    rep.auc1 = auc(p1, is1);
    rep.auc3 = auc(pk, isk);
    try {
        rep.gamma = gamma_stat(predicted, truth_v);
    } catch (const DegenerateGamma&) {
        rep.gamma = 0;
        rep.gamma_degenerate = true;
    }
    return rep;
}

inline nlohmann::json to_json(const EvalReport& r) {
    return {{"measure", r.measure}, {"model_id", r.model_id},   {"auc1", r.auc1},
            {"auc3", r.auc3},       {"gamma", r.gamma},         {"gamma_degenerate", r.gamma_degenerate},
            {"n", r.n},             {"split", r.split},         {"width", r.width},
            {"selected", r.selected}};
}

inline EvalReport eval_report_from_json(const nlohmann::json& j) {
    EvalReport r;
    r.measure = j.at("measure").get<std::string>();
    r.model_id = j.at("model_id").get<std::string>();
    r.auc1 = j.at("auc1").get<double>();
    r.auc3 = j.at("auc3").get<double>();
    r.gamma = j.at("gamma").get<double>();
    r.gamma_degenerate = j.value("gamma_degenerate", false);
    r.n = j.at("n").get<std::size_t>();
    r.split = j.at("split").get<std::string>();
    r.width = j.value("width", 0.0);
    r.selected = j.value("selected", false);
    return r;
}

/// Table layout: one row per metric, one column per report.
inline void write_table_csv(std::ostream& out, const std::vector<EvalReport>& reports) {
    out << "metric";
    for (const auto& r : reports)
        out << ',' << r.measure << '|' << (r.width > 0 ? csv::format_double(r.width) : std::string("none")) << '|'
            << r.model_id << '|' << r.split;
    out << '\n';
    auto row = [&](const char* name, auto get) {
        out << name;
        for (const auto& r : reports)
            out << ',' << csv::format_double(get(r));
        out << '\n';
    };
    row("Gamma", [](const EvalReport& r) { return r.gamma; });
    row("AUC1", [](const EvalReport& r) { return r.auc1; });
    row("AUC3", [](const EvalReport& r) { return r.auc3; });
    row("selected", [](const EvalReport& r) { return r.selected ? 1.0 : 0.0; });
}

} // namespace actiprofile
