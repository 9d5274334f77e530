#pragma once

// End-to-end orchestration: clean traces, segment days, select the activity
// class width and penalty by repeated stratified cross-validation, refit on
// the full training partition and evaluate on held-out or later-epoch data.

#include <algorithm>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "actiprofile/changepoint.hpp"
#include "actiprofile/evaluation.hpp"
#include "actiprofile/gam.hpp"
#include "actiprofile/ingest.hpp"
#include "actiprofile/metrics.hpp"
#include "actiprofile/ordinal.hpp"
#include "actiprofile/parallel.hpp"
#include "actiprofile/profile.hpp"
#include "actiprofile/random.hpp"
#include "actiprofile/split.hpp"

namespace actiprofile {

// ---------------------------------------------------------------------------
// Trace cleaning and segmentation

struct CleanTraces {
    std::vector<MinuteTrace> traces;   // valid days only, wear mask set
    std::vector<FilterEvent> events;
};

inline CleanTraces clean_traces(std::vector<MinuteTrace> raw, std::vector<FilterEvent> events,
                                const NonwearParams& nonwear = {}, int min_wear_minutes = 600) {
    for (auto& t : raw)
        t = detect_nonwear(std::move(t), nonwear);
    auto v = valid_days(std::move(raw), min_wear_minutes);
    events.insert(events.end(), v.events.begin(), v.events.end());
    return {std::move(v.kept), std::move(events)};
}

inline void write_clean_minute_csv(std::ostream& out, const std::vector<MinuteTrace>& traces) {
    out << "subject_id,day_index,minute,counts,wear\n";
    for (const auto& t : traces)
        for (int m = 0; m < minutes_per_day; ++m)
            out << t.subject_id << ',' << t.day_index << ',' << m << ',' << t.counts[m] << ',' << (t.wear[m] ? 1 : 0)
                << '\n';
}

inline std::vector<MinuteTrace> parse_clean_minute_csv(std::istream& in) {
    csv::Reader reader(in);
    reader.expect_header({"subject_id", "day_index", "minute", "counts", "wear"});
    std::map<std::pair<std::string, int>, std::pair<MinuteTrace, int>> slots;
    std::vector<std::string_view> f;
    while (reader.next(f)) {
        const auto line = reader.line_number();
        if (f.size() != 5)
            throw ParseError(line, "expected 5 fields, got " + std::to_string(f.size()));
        const int day = csv::parse_number<int>(f[1], line, "day_index");
        const int minute = csv::parse_number<int>(f[2], line, "minute");
        const int count = csv::parse_number<int>(f[3], line, "counts");
        const int wear = csv::parse_number<int>(f[4], line, "wear");
        if (minute < 0 || minute >= minutes_per_day || count < 0 || (wear != 0 && wear != 1))
            throw ParseError(line, "field out of range");
        auto [it, inserted] = slots.try_emplace({std::string(f[0]), day});
        auto& [trace, filled] = it->second;
        if (inserted) {
            trace.subject_id = std::string(f[0]);
            trace.day_index = day;
        }
        trace.counts[minute] = count;
        trace.wear[minute] = wear == 1;
        ++filled;
    }
    std::vector<MinuteTrace> out;
    for (auto& [key, slot] : slots) {
        if (slot.second != minutes_per_day)
            throw DataError("clean minute file: subject " + key.first + " day " + std::to_string(key.second) +
                            " does not have 1440 rows");
        out.push_back(std::move(slot.first));
    }
    return out;
}

/// Segments every trace; output ordered like the input traces.
inline std::vector<Segment> segment_traces(const std::vector<MinuteTrace>& traces, const CpParams& params,
                                           int threads = 1) {
    params.validate();
    std::vector<std::vector<Segment>> per_day(traces.size());
    parallel_for(traces.size(), threads, [&](std::size_t i) { per_day[i] = segment_day(traces[i], params); });
    std::vector<Segment> out;
    for (auto& day : per_day)
        out.insert(out.end(), day.begin(), day.end());
    return out;
}

// ---------------------------------------------------------------------------
// Modeling data

struct Dataset {
    SegmentsBySubject segments;
    std::map<std::string, Demographics> demographics;
    Responses responses;
};

inline Dataset make_dataset(const std::vector<Segment>& segments, const std::vector<Demographics>& demographics,
                            Responses responses) {
    Dataset d;
    d.segments = group_by_subject(segments);
    for (const auto& row : demographics)
        d.demographics.emplace(row.subject_id, row);
    d.responses = std::move(responses);
    return d;
}

/// Subjects usable for one measure: segments, demographics and a response value.
struct MeasureRows {
    std::vector<std::string> ids;
    std::vector<double> values;
};

inline MeasureRows measure_rows(const Dataset& data, Measure measure) {
    MeasureRows rows;
    for (const auto& [id, response] : data.responses) {
        const auto& v = response[static_cast<int>(measure)];
        if (!v || !data.segments.contains(id) || !data.demographics.contains(id))
            continue;
        rows.ids.push_back(id);
        rows.values.push_back(*v);
    }
    return rows;
}

inline FeatureMatrix demographic_features(const std::vector<std::string>& ids, const Dataset& data) {
    FeatureMatrix fm;
    fm.subject_ids = ids;
    fm.names = demographic_feature_names();
    fm.values.resize(static_cast<Eigen::Index>(ids.size()), n_demographic_features);
    for (std::size_t r = 0; r < ids.size(); ++r) {
        auto it = data.demographics.find(ids[r]);
        if (it == data.demographics.end())
            throw DataError("missing demographics for: " + ids[r], "MissingDemographics");
        DailyActivityProfile empty{ids[r], {}, 1};
        auto desc = composite_descriptor(empty, it->second);
        for (int c = 0; c < n_demographic_features; ++c)
            fm.values(static_cast<Eigen::Index>(r), c) = desc.values[static_cast<std::size_t>(c)];
    }
    return fm;
}

/// Descriptor rows; demographics only when `grid` is empty.
inline FeatureMatrix make_features(const std::vector<std::string>& ids, const Dataset& data,
                                   const std::optional<ActivityClassGrid>& grid) {
    return grid ? build_features(ids, data.segments, data.demographics, *grid) : demographic_features(ids, data);
}

inline ActivityClassGrid fit_grid_for(const std::vector<std::string>& ids, const Dataset& data, double width) {
    std::vector<Segment> segs;
    for (const auto& id : ids)
        if (auto it = data.segments.find(id); it != data.segments.end())
            segs.insert(segs.end(), it->second.begin(), it->second.end());
    return fit_grid(segs, width, width);
}

template <class T>
std::vector<T> pick(const std::vector<T>& v, std::span<const std::size_t> idx) {
    std::vector<T> out;
    out.reserve(idx.size());
    for (auto i : idx)
        out.push_back(v[i]);
    return out;
}

// ---------------------------------------------------------------------------
// Cross-validation

struct TrainConfig {
    std::vector<double> widths{500, 700, 2100};
    int folds = 5;
    int repeats = 3;
    int lambda_points = 30;
    double lambda_min_ratio = 1e-3;
    double train_fraction = 0.8;
    std::uint64_t seed = 20240101;
    bool fit_gam = true;
    double gam_df = 4.0;
    bool gam_active_only = true;
    SolverParams solver;
};

struct CvCurvePoint {
    double width = 0;   // 0 for the demographics-only model
    std::size_t lambda_index = 0;
    double lambda = 0;
    double mean_gamma = 0;
};

struct WidthScore {
    double width = 0;
    double lambda = 0;
    double mean_gamma = 0;
};

struct CvSelection {
    double width = 0;
    double lambda = 0;
    double mean_gamma = 0;
    std::vector<WidthScore> widths;
    std::vector<CvCurvePoint> curve;
};

/// Largest null-model threshold over the continuation logits of standardized rows.
inline double shared_lambda_max(const Eigen::MatrixXd& xs, std::span<const int> categories) {
    double lmax = 0;
    for (const auto& data : expand_continuation(categories))
        lmax = std::max(lmax, lambda_max(select_rows(xs, data.rows), data.y));
    return lmax;
}

/// Probabilities for rows `xs` (already standardized) along a fitted path.
inline std::vector<Eigen::MatrixXd> path_probs(const std::vector<std::vector<LogisticFit>>& path,
                                               const Eigen::MatrixXd& xs) {
    const std::size_t n_lambda = path.front().size();
    std::vector<Eigen::MatrixXd> out;
    for (std::size_t l = 0; l < n_lambda; ++l) {
        Eigen::MatrixXd probs(xs.rows(), static_cast<Eigen::Index>(path.size() + 1));
        std::vector<Eigen::VectorXd> eta;
        for (const auto& logit : path)
            eta.push_back((xs * logit[l].beta).array() + logit[l].intercept);
        for (Eigen::Index r = 0; r < xs.rows(); ++r) {
            std::vector<double> h;
            for (const auto& e : eta)
                h.push_back(logistic(e[r]));
            auto p = continuation_probs(h);
            for (std::size_t k = 0; k < p.size(); ++k)
                probs(r, static_cast<Eigen::Index>(k)) = p[k];
        }
        out.push_back(std::move(probs));
    }
    return out;
}

inline bool has_all_categories(std::span<const int> cats) {
    bool seen[4] = {false, false, false, false};
    for (int c : cats)
        if (c >= 1 && c <= 3)
            seen[c] = true;
    return seen[1] && seen[2] && seen[3];
}

/// Mean held-out Gamma for every lambda of the grid at one width (0 = demographics only).
/// Degenerate folds (every pair tied) count as Gamma 0.
inline std::vector<double> cv_gamma_curve(const std::vector<std::string>& ids, std::span<const int> cats,
                                          const Dataset& data, double width, std::span<const double> lambdas,
                                          const TrainConfig& cfg, const SeedSeq& stream) {
    std::vector<double> sum(lambdas.size(), 0.0);
    int evaluated = 0;
    for (int rep = 0; rep < cfg.repeats; ++rep) {
        std::vector<int> fold;
        bool ok = false;
        for (int attempt = 0; attempt < 10 && !ok; ++attempt) {
            fold = stratified_folds(cats, cfg.folds,
                                    stream.with(static_cast<std::uint64_t>(rep)).with(static_cast<std::uint64_t>(attempt)).value());
            ok = true;
            for (int f = 0; f < cfg.folds && ok; ++f) {
                std::vector<int> train_cats, test_cats;
                for (std::size_t i = 0; i < cats.size(); ++i)
                    (fold[i] == f ? test_cats : train_cats).push_back(cats[i]);
                ok = has_all_categories(train_cats) && !test_cats.empty();
            }
        }
        if (!ok)
            throw DataError("cross-validation: could not form folds containing every category in 10 attempts",
                            "MissingCategory");

        for (int f = 0; f < cfg.folds; ++f) {
            std::vector<std::size_t> tr, te;
            for (std::size_t i = 0; i < ids.size(); ++i)
                (fold[i] == f ? te : tr).push_back(i);
            const auto tr_ids = pick(ids, tr), te_ids = pick(ids, te);
            std::vector<int> tr_cats, te_cats;
            for (auto i : tr)
                tr_cats.push_back(cats[i]);
            for (auto i : te)
                te_cats.push_back(cats[i]);

            std::optional<ActivityClassGrid> grid;
            if (width > 0)
                grid = fit_grid_for(tr_ids, data, width);
            const auto fm_tr = make_features(tr_ids, data, grid);
            const auto fm_te = make_features(te_ids, data, grid);
            const auto st = Standardizer::fit(fm_tr.values);
            const Eigen::MatrixXd xs_tr = st.apply(fm_tr.values), xs_te = st.apply(fm_te.values);

            std::vector<std::vector<LogisticFit>> path;
            for (const auto& d : expand_continuation(tr_cats))
                path.push_back(fit_l1_path(select_rows(xs_tr, d.rows), d.y, lambdas, cfg.solver));
            const auto probs = path_probs(path, xs_te);
            for (std::size_t l = 0; l < lambdas.size(); ++l) {
                std::vector<int> pred;
                for (Eigen::Index r = 0; r < probs[l].rows(); ++r) {
                    std::vector<double> row(probs[l].row(r).data(), probs[l].row(r).data() + probs[l].cols());
                    Eigen::RowVectorXd rr = probs[l].row(r);
                    pred.push_back(argmax_category(std::vector<double>(rr.data(), rr.data() + rr.size())));
                }
                double g = 0;
                try {
                    if (pred.size() >= 2)
                        g = gamma_stat(pred, te_cats);
                } catch (const DegenerateGamma&) {
                }
                sum[l] += g;
            }
            ++evaluated;
        }
    }
    for (auto& s : sum)
        s /= evaluated;
    return sum;
}

/// Chooses the class width (and shared lambda) with the highest mean CV Gamma.
/// Width ties go to the smaller width, lambda ties to the larger lambda.
/// An empty width list selects the penalty of the demographics-only model.
inline CvSelection select_interval_cv(const std::vector<std::string>& ids, std::span<const int> cats,
                                      const Dataset& data, std::vector<double> widths, const TrainConfig& cfg,
                                      const SeedSeq& stream) {
    if (!has_all_categories(cats))
        throw DataError("cross-validation: training categories incomplete", "MissingCategory");
    const bool demographics_only = widths.empty();
    if (demographics_only)
        widths = {0.0};
    std::sort(widths.begin(), widths.end());

    CvSelection sel;
    bool first = true;
    for (double w : widths) {
        std::optional<ActivityClassGrid> grid;
        if (w > 0)
            grid = fit_grid_for(ids, data, w);
        const auto fm = make_features(ids, data, grid);
        const Eigen::MatrixXd xs = Standardizer::fit(fm.values).apply(fm.values);
        const auto lambdas = lambda_grid(shared_lambda_max(xs, cats), cfg.lambda_points, cfg.lambda_min_ratio);
        // the same folds for every width
        const auto curve = cv_gamma_curve(ids, cats, data, w, lambdas, cfg, stream);

        WidthScore best{w, lambdas[0], curve[0]};
        for (std::size_t l = 0; l < lambdas.size(); ++l) {
            sel.curve.push_back({w, l, lambdas[l], curve[l]});
            if (curve[l] > best.mean_gamma)
                best = {w, lambdas[l], curve[l]};
        }
        sel.widths.push_back(best);
        if (first || best.mean_gamma > sel.mean_gamma) {
            sel.width = w;
            sel.lambda = best.lambda;
            sel.mean_gamma = best.mean_gamma;
            first = false;
        }
    }
    return sel;
}

inline nlohmann::json to_json(const CvSelection& s) {
    nlohmann::json curve = nlohmann::json::array();
    for (const auto& p : s.curve)
        curve.push_back({{"width", p.width}, {"lambda_index", p.lambda_index}, {"lambda", p.lambda},
                         {"mean_gamma", p.mean_gamma}});
    nlohmann::json widths = nlohmann::json::array();
    for (const auto& w : s.widths)
        widths.push_back({{"width", w.width}, {"lambda", w.lambda}, {"mean_gamma", w.mean_gamma}});
    return {{"selected_width", s.width}, {"selected_lambda", s.lambda}, {"mean_gamma", s.mean_gamma},
            {"widths", widths}, {"curve", curve}};
}

// ---------------------------------------------------------------------------
// Training

struct TrainedMeasure {
    Measure measure = Measure::walk400;
    std::vector<std::string> train_ids;
    std::vector<std::string> test_ids;
    CutPoints cuts;
    CvSelection cv;
    CvSelection baseline_cv;
    std::vector<LpormModel> by_width;   // refit per candidate width, same order as cv.widths
    std::size_t selected = 0;
    LpormModel baseline;
    std::optional<GamModel> gam;
    std::string gam_error;

    const LpormModel& lporm() const { return by_width.at(selected); }
};

inline LpormModel refit_lporm(const std::vector<std::string>& ids, std::span<const int> cats, const Dataset& data,
                              double width, double lambda, Measure measure, CutPoints cuts, const SolverParams& solver) {
    std::optional<ActivityClassGrid> grid;
    if (width > 0)
        grid = fit_grid_for(ids, data, width);
    auto model = fit_lporm(make_features(ids, data, grid), cats, lambda, solver);
    model.grid = grid;
    model.measure = measure;
    model.cuts = cuts;
    return model;
}

/// Split, discretize on the training partition, select width and lambda by CV,
/// refit on the full training partition (per width, plus the demographics-only
/// baseline and, optionally, the additive model at the selected width).
inline TrainedMeasure train_measure(const Dataset& data, Measure measure, const TrainConfig& cfg) {
    const auto rows = measure_rows(data, measure);
    const SeedSeq stream = SeedSeq(cfg.seed).with(measure_name(measure));

    // whole-cohort quartiles only stratify the split; cut points come from training rows
    const auto strata = discretize_response(rows.values, {}, measure).train;
    const auto split = split_train_test(strata, cfg.train_fraction, stream.with("split").value());

    TrainedMeasure out;
    out.measure = measure;
    out.train_ids = pick(rows.ids, split.train);
    out.test_ids = pick(rows.ids, split.test);
    const auto cats = discretize_response(pick(rows.values, split.train), pick(rows.values, split.test), measure);
    out.cuts = cats.cuts;

    out.cv = select_interval_cv(out.train_ids, cats.train, data, cfg.widths, cfg, stream.with("cv"));
    for (std::size_t k = 0; k < out.cv.widths.size(); ++k) {
        const auto& w = out.cv.widths[k];
        out.by_width.push_back(refit_lporm(out.train_ids, cats.train, data, w.width, w.lambda, measure, out.cuts, cfg.solver));
        if (w.width == out.cv.width)
            out.selected = k;
    }
    out.baseline_cv = select_interval_cv(out.train_ids, cats.train, data, {}, cfg, stream.with("cv"));
    out.baseline = refit_lporm(out.train_ids, cats.train, data, 0.0, out.baseline_cv.lambda, measure, out.cuts, cfg.solver);

    if (cfg.fit_gam) {
        const auto& lp = out.lporm();
        const auto fm = make_features(out.train_ids, data, lp.grid);
        const auto active = lp.active_features();
        const auto specs = default_term_specs(fm, cfg.gam_df, cfg.gam_active_only ? &active : nullptr);
        try {
            GamModel g = fit_ordinal_gam(fm, cats.train, specs);
            g.measure = measure;
            g.cuts = out.cuts;
            g.grid = lp.grid;
            out.gam = std::move(g);
        } catch (const ConvergenceError& e) {
            out.gam_error = e.what();
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Evaluation

/// Rows of `ids` that carry a response for the model's measure, categorized with the model's cut points.
inline std::pair<std::vector<std::string>, std::vector<int>> categorized(const std::vector<std::string>& ids,
                                                                         const Dataset& data, Measure measure,
                                                                         CutPoints cuts) {
    std::vector<std::string> kept;
    std::vector<int> cats;
    for (const auto& id : ids) {
        auto it = data.responses.find(id);
        if (it == data.responses.end() || !it->second[static_cast<int>(measure)] || !data.segments.contains(id) ||
            !data.demographics.contains(id))
            continue;
        kept.push_back(id);
        cats.push_back(cuts.categorize(*it->second[static_cast<int>(measure)]));
    }
    return {kept, cats};
}

inline EvalReport holdout_eval(const LpormModel& model, const FeatureMatrix& features, std::span<const int> cats,
                               std::string model_id = "lporm") {
    auto rep = evaluate_probs(predict_probs(model, features), cats);
    rep.measure = std::string(measure_name(model.measure));
    rep.model_id = std::move(model_id);
    rep.split = "holdout";
    rep.width = model.grid ? model.grid->width_mean() : 0.0;
    return rep;
}

inline EvalReport holdout_eval(const GamModel& model, const FeatureMatrix& features, std::span<const int> cats,
                               std::string model_id = "gam") {
    auto rep = evaluate_probs(predict_probs(model, features), cats);
    rep.measure = std::string(measure_name(model.measure));
    rep.model_id = std::move(model_id);
    rep.split = "holdout";
    rep.width = model.grid ? model.grid->width_mean() : 0.0;
    return rep;
}

/// Scores a later-epoch cohort with everything frozen from the training epoch:
/// class grid (edge bins clamp), standardization and cut points.
inline EvalReport temporal_eval(const LpormModel& model, const Dataset& epoch_b, const std::vector<std::string>& ids,
                                const std::string& epochs = "A->B") {
    if (model.with_profile && !model.grid)
        throw DataError("temporal_eval: model lacks its activity class grid", "ModelFormat");
    if (model.standardizer.mean.size() != model.feature_names.size())
        throw DataError("temporal_eval: model lacks standardization parameters", "ModelFormat");
    auto [kept, cats] = categorized(ids, epoch_b, model.measure, model.cuts);
    auto rep = holdout_eval(model, make_features(kept, epoch_b, model.grid), cats);
    rep.split = "temporal:" + epochs;
    return rep;
}

inline std::vector<EvalReport> evaluate_trained(const TrainedMeasure& tm, const Dataset& data) {
    auto [ids, cats] = categorized(tm.test_ids, data, tm.measure, tm.cuts);
    std::vector<EvalReport> out;
    for (std::size_t k = 0; k < tm.by_width.size(); ++k) {
        const auto& m = tm.by_width[k];
        auto rep = holdout_eval(m, make_features(ids, data, m.grid), cats, "lporm");
        rep.selected = k == tm.selected;
        out.push_back(rep);
    }
    out.push_back(holdout_eval(tm.baseline, make_features(ids, data, std::nullopt), cats, "lporm_no_profile"));
    if (tm.gam) {
        auto rep = holdout_eval(*tm.gam, make_features(ids, data, tm.gam->grid), cats, "gam");
        rep.selected = true;
        out.push_back(rep);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Bundle serialization

inline nlohmann::json to_json(const TrainedMeasure& tm) {
    nlohmann::json models = nlohmann::json::array();
    for (std::size_t k = 0; k < tm.by_width.size(); ++k)
        models.push_back({{"width", tm.cv.widths[k].width}, {"selected", k == tm.selected}, {"model", to_json(tm.by_width[k])}});
    nlohmann::json j = {{"measure", measure_name(tm.measure)},
                        {"split", {{"train", tm.train_ids}, {"test", tm.test_ids}}},
                        {"cut_points", {{"p25", tm.cuts.p25}, {"p75", tm.cuts.p75}}},
                        {"cv", to_json(tm.cv)},
                        {"baseline_cv", to_json(tm.baseline_cv)},
                        {"models", models},
                        {"lporm", to_json(tm.lporm())},
                        {"baseline", to_json(tm.baseline)}};
    j["gam"] = tm.gam ? to_json(*tm.gam) : nlohmann::json(nullptr);
    if (!tm.gam_error.empty())
        j["gam_error"] = tm.gam_error;
    return j;
}

inline TrainedMeasure trained_from_json(const nlohmann::json& j) {
    TrainedMeasure tm;
    tm.measure = parse_measure(j.at("measure").get<std::string>());
    tm.train_ids = j.at("split").at("train").get<std::vector<std::string>>();
    tm.test_ids = j.at("split").at("test").get<std::vector<std::string>>();
    tm.cuts = {j.at("cut_points").at("p25").get<double>(), j.at("cut_points").at("p75").get<double>()};
    for (const auto& m : j.at("models")) {
        if (m.at("selected").get<bool>())
            tm.selected = tm.by_width.size();
        tm.by_width.push_back(lporm_from_json(m.at("model")));
        tm.cv.widths.push_back({m.at("width").get<double>(), tm.by_width.back().lambda, 0});
    }
    if (tm.by_width.empty())
        throw DataError("model bundle has no LPORM models", "ModelFormat");
    tm.cv.width = tm.by_width[tm.selected].grid ? tm.by_width[tm.selected].grid->width_mean() : 0;
    tm.baseline = lporm_from_json(j.at("baseline"));
    if (!j.at("gam").is_null())
        tm.gam = gam_from_json(j.at("gam"));
    tm.gam_error = j.value("gam_error", "");
    return tm;
}

} // namespace actiprofile
