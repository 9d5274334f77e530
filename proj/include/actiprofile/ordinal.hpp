#pragma once

// Continuation-ratio ordinal models. For categories 1..K the likelihood factors
// into K-1 binomials, logit P(Y = j | Y >= j) = intercept_j + beta_j' x, each
// fitted independently. The L1 fit is cyclic coordinate descent on the
// penalized quadratic approximation (proximal Newton) with a backtracking guard.

#include <algorithm>
#include <cmath>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "actiprofile/error.hpp"
#include "actiprofile/ingest.hpp"
#include "actiprofile/profile.hpp"

namespace actiprofile {

inline constexpr int n_categories = 3;

/// Empirical quantile at 1-based position 1 + (n - 1) q with linear interpolation.
inline double quantile(std::vector<double> values, double q) {
    if (values.empty())
        throw DataError("quantile of empty sample");
    std::sort(values.begin(), values.end());
    const double h = (static_cast<double>(values.size()) - 1) * q;
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const auto hi = std::min(lo + 1, values.size() - 1);
    return values[lo] + (h - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

struct CutPoints {
    double p25 = 0;
    double p75 = 0;

    /// 1 for values at or below p25, 3 above p75, else 2.
    int categorize(double v) const noexcept { return v <= p25 ? 1 : (v > p75 ? 3 : 2); }
};

struct OrdinalCategories {
    Measure measure = Measure::walk400;
    CutPoints cuts;
    std::vector<int> train;
    std::vector<int> eval;
};

/// Quartile categories from training values only; evaluation rows reuse the training cut points.
inline OrdinalCategories discretize_response(std::span<const double> train, std::span<const double> eval,
                                             Measure measure) {
    if (train.size() < 4)
        throw DataError("discretize_response: need at least 4 training values", "DegenerateResponse");
    OrdinalCategories out;
    out.measure = measure;
    std::vector<double> v(train.begin(), train.end());
    out.cuts = {quantile(v, 0.25), quantile(v, 0.75)};
    int seen[4] = {0, 0, 0, 0};
    for (double x : train) {
        out.train.push_back(out.cuts.categorize(x));
        ++seen[out.train.back()];
    }
    if (seen[1] == 0 || seen[2] == 0 || seen[3] == 0)
        throw DegenerateResponse("discretize_response: training values of " + std::string(measure_name(measure)) +
                                 " do not populate all three categories");
    for (double x : eval)
        out.eval.push_back(out.cuts.categorize(x));
    return out;
}

/// Binomial sub-problem of the continuation-ratio factorization.
struct BinomialData {
    std::vector<std::size_t> rows;   // indices into the originating feature matrix
    Eigen::VectorXd y;               // 1 when the category equals j
};

/// Logit j (0-based here) uses rows with category >= j + 1 and outcome [category == j + 1].
inline std::vector<BinomialData> expand_continuation(std::span<const int> categories, int k = n_categories) {
    std::vector<BinomialData> out(static_cast<std::size_t>(k - 1));
    for (int j = 0; j < k - 1; ++j) {
        std::vector<double> y;
        for (std::size_t i = 0; i < categories.size(); ++i) {
            const int c = categories[i];
            if (c < 1 || c > k)
                throw DataError("category out of range: " + std::to_string(c));
            if (c >= j + 1) {
                out[j].rows.push_back(i);
                y.push_back(c == j + 1 ? 1.0 : 0.0);
            }
        }
        if (out[j].rows.empty())
            throw DegenerateLogit("continuation logit " + std::to_string(j + 1) + " has no rows");
        out[j].y = Eigen::Map<Eigen::VectorXd>(y.data(), static_cast<Eigen::Index>(y.size()));
    }
    return out;
}

inline Eigen::MatrixXd select_rows(const Eigen::MatrixXd& x, std::span<const std::size_t> rows) {
    Eigen::MatrixXd out(static_cast<Eigen::Index>(rows.size()), x.cols());
    for (std::size_t r = 0; r < rows.size(); ++r)
        out.row(static_cast<Eigen::Index>(r)) = x.row(static_cast<Eigen::Index>(rows[r]));
    return out;
}

// ---------------------------------------------------------------------------
// L1-penalized logistic regression

struct LogisticFit {
    double intercept = 0;
    Eigen::VectorXd beta;
    int passes = 0;   // coordinate descent passes used
};

struct SolverParams {
    double tol = 1e-7;       // max coefficient change
    double kkt_tol = 1e-6;   // also stop once the optimality conditions hold this tightly
    int max_passes = 100000;
    int max_inner = 1000;    // coordinate sweeps per quadratic approximation
};

inline double logistic(double eta) noexcept {
    return eta >= 0 ? 1.0 / (1.0 + std::exp(-eta)) : std::exp(eta) / (1.0 + std::exp(eta));
}

/// log(1 + e^eta) without overflow.
inline double log1pexp(double eta) noexcept {
    return eta > 0 ? eta + std::log1p(std::exp(-eta)) : std::log1p(std::exp(eta));
}

inline double mean_neg_loglik(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, double b0,
                              const Eigen::VectorXd& beta) {
    const Eigen::VectorXd eta = (x * beta).array() + b0;
    double s = 0;
    for (Eigen::Index i = 0; i < y.size(); ++i)
        s += log1pexp(eta[i]) - y[i] * eta[i];
    return s / static_cast<double>(y.size());
}

inline double l1_objective(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, double lambda, const LogisticFit& f) {
    return mean_neg_loglik(x, y, f.intercept, f.beta) + lambda * f.beta.lpNorm<1>();
}

/// Smallest penalty at which every slope is zero: max_j |x_j'(y - ybar)| / n.
inline double lambda_max(const Eigen::MatrixXd& x, const Eigen::VectorXd& y) {
    const double ybar = y.mean();
    const Eigen::VectorXd score = x.transpose() * (y.array() - ybar).matrix();
    return x.cols() ? score.cwiseAbs().maxCoeff() / static_cast<double>(y.size()) : 0.0;
}

inline void require_both_outcomes(const Eigen::VectorXd& y, const char* who) {
    const double s = y.sum();
    if (y.size() == 0 || s == 0 || s == static_cast<double>(y.size()))
        throw DegenerateLogit(std::string(who) + ": outcome takes a single value");
}

/// Largest KKT violation: zero slopes need |g_j| <= lambda, active slopes g_j = lambda sign(beta_j),
/// with g_j = x_j'(y - p) / n. The intercept score must vanish.
inline double kkt_from_residual(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const Eigen::VectorXd& eta,
                                double lambda, const LogisticFit& f) {
    Eigen::VectorXd r(y.size());
    for (Eigen::Index i = 0; i < y.size(); ++i)
        r[i] = y[i] - logistic(eta[i]);
    const double n = static_cast<double>(y.size());
    double worst = std::abs(r.sum() / n);
    const Eigen::VectorXd g = x.transpose() * r / n;
    for (Eigen::Index j = 0; j < g.size(); ++j) {
        const double v = f.beta[j] == 0 ? std::max(0.0, std::abs(g[j]) - lambda)
                                        : std::abs(g[j] - lambda * (f.beta[j] > 0 ? 1.0 : -1.0));
        worst = std::max(worst, v);
    }
    return worst;
}

inline double kkt_violation(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, double lambda, const LogisticFit& f) {
    const Eigen::VectorXd eta = (x * f.beta).array() + f.intercept;
    return kkt_from_residual(x, y, eta, lambda, f);
}

/// Minimizes (1/n) negative log-likelihood + lambda * ||beta||_1 with an unpenalized intercept.
/// `warm` (same dimension) seeds the iteration.
inline LogisticFit fit_l1_logistic(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, double lambda,
                                   const SolverParams& params = {}, const LogisticFit* warm = nullptr) {
    require_both_outcomes(y, "fit_l1_logistic");
    const Eigen::Index n = x.rows(), p = x.cols();
    const double nd = static_cast<double>(n);
    const double ybar = y.mean();

    LogisticFit fit;
    fit.beta = Eigen::VectorXd::Zero(p);
    fit.intercept = std::log(ybar / (1 - ybar));
    if (lambda >= lambda_max(x, y))
        return fit;
    if (warm && warm->beta.size() == p)
        fit = LogisticFit{warm->intercept, warm->beta, 0};

    Eigen::VectorXd eta(n), w(n), r(n);
    Eigen::VectorXd xwx(p);
    std::vector<char> active(static_cast<std::size_t>(p), 0);
    int passes = 0;
    double objective = l1_objective(x, y, lambda, fit);
    double last_change = INFINITY;

    for (;;) {
        eta = (x * fit.beta).array() + fit.intercept;
        for (Eigen::Index i = 0; i < n; ++i) {
            const double pi = logistic(eta[i]);
            w[i] = std::max(pi * (1 - pi), 1e-5);
            r[i] = (y[i] - pi) / w[i];   // working residual z - eta
        }
        // flat directions (near-collinear columns) let coefficients creep long after the
        // score conditions are met, so the certificate itself is a stopping rule
        if (kkt_from_residual(x, y, eta, lambda, fit) < params.kkt_tol)
            break;
        for (Eigen::Index j = 0; j < p; ++j)
            xwx[j] = (x.col(j).array().square() * w.array()).sum() / nd;
        const double wsum = w.sum() / nd;

        // inner coordinate descent on the weighted least-squares problem
        LogisticFit next = fit;
        double inner_change = 0;
        bool full_pass = true;
        for (int sweep = 0; sweep < params.max_inner; ++sweep) {
            if (++passes > params.max_passes)
                throw ConvergenceError("fit_l1_logistic: no convergence after " +
                                           std::to_string(params.max_passes) + " passes",
                                       last_change);
            inner_change = 0;
            const double d0 = (w.array() * r.array()).sum() / nd / wsum;
            next.intercept += d0;
            r.array() -= d0;
            inner_change = std::abs(d0);
            for (Eigen::Index j = 0; j < p; ++j) {
                if (!full_pass && !active[static_cast<std::size_t>(j)])
                    continue;
                if (xwx[j] <= 0)
                    continue;
                const double old = next.beta[j];
                const double g = (x.col(j).array() * w.array() * r.array()).sum() / nd + xwx[j] * old;
                const double shrunk = std::abs(g) > lambda ? (g - std::copysign(lambda, g)) / xwx[j] : 0.0;
                if (shrunk != old) {
                    r -= x.col(j) * (shrunk - old);
                    next.beta[j] = shrunk;
                    inner_change = std::max(inner_change, std::abs(shrunk - old));
                }
                active[static_cast<std::size_t>(j)] = shrunk != 0;
            }
            if (inner_change < params.tol * 0.1) {
                if (full_pass)
                    break;
                full_pass = true;   // confirm the active set with one sweep over all coordinates
            } else {
                full_pass = false;
            }
        }

        // backtrack if the quadratic step overshoots
        double step = 1.0;
        LogisticFit trial = next;
        double trial_obj = l1_objective(x, y, lambda, trial);
        while (trial_obj > objective + 1e-12 && step > 1e-6) {
            step *= 0.5;
            trial.intercept = fit.intercept + step * (next.intercept - fit.intercept);
            trial.beta = fit.beta + step * (next.beta - fit.beta);
            trial_obj = l1_objective(x, y, lambda, trial);
        }
        const double change = std::max(std::abs(trial.intercept - fit.intercept),
                                       (trial.beta - fit.beta).cwiseAbs().maxCoeff() * (p > 0));
        last_change = change;
        fit.intercept = trial.intercept;
        fit.beta = trial.beta;
        objective = std::min(objective, trial_obj);
        if (change < params.tol)
            break;
    }
    fit.passes = passes;
    return fit;
}

/// Decreasing log-spaced grid from lambda_max down to lambda_max * min_ratio.
inline std::vector<double> lambda_grid(double lmax, int points = 30, double min_ratio = 1e-3) {
    std::vector<double> out;
    if (points == 1)
        return {lmax};
    for (int k = 0; k < points; ++k)
        out.push_back(lmax * std::pow(min_ratio, static_cast<double>(k) / (points - 1)));
    return out;
}

/// Warm-started fits along a decreasing lambda sequence.
inline std::vector<LogisticFit> fit_l1_path(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                                            std::span<const double> lambdas, const SolverParams& params = {}) {
    std::vector<LogisticFit> out;
    for (double l : lambdas)
        out.push_back(fit_l1_logistic(x, y, l, params, out.empty() ? nullptr : &out.back()));
    return out;
}

// ---------------------------------------------------------------------------
// Ordinal model

struct LogitCoefficients {
    double intercept = 0;
    Eigen::VectorXd beta;
};

/// Category probabilities from the conditional continuation probabilities h_j:
/// p_1 = h_1, p_j = h_j prod_{k<j} (1 - h_k), p_K = prod_{k<K} (1 - h_k).
inline std::vector<double> continuation_probs(std::span<const double> hazards) {
    std::vector<double> p;
    double survive = 1.0;
    for (double h : hazards) {
        p.push_back(survive * h);
        survive *= 1.0 - h;
    }
    p.push_back(survive);
    return p;
}

struct LpormModel {
    Measure measure = Measure::walk400;
    CutPoints cuts;
    double lambda = 0;
    bool with_profile = true;
    std::optional<ActivityClassGrid> grid;
    Standardizer standardizer;
    std::vector<std::string> feature_names;
    std::vector<LogitCoefficients> logits;   // K - 1 entries
    int solver_passes = 0;

    std::size_t n_features() const noexcept { return feature_names.size(); }

    /// Indices of nonzero slopes in either logit.
    std::vector<std::size_t> active_features() const {
        std::vector<std::size_t> out;
        for (std::size_t j = 0; j < feature_names.size(); ++j)
            for (const auto& l : logits)
                if (l.beta[static_cast<Eigen::Index>(j)] != 0) {
                    out.push_back(j);
                    break;
                }
        return out;
    }
};

/// Probabilities for one raw (unstandardized) descriptor row.
inline std::vector<double> predict_probs(const LpormModel& model, std::span<const double> raw) {
    if (raw.size() != model.n_features())
        throw DataError("predict_probs: descriptor has " + std::to_string(raw.size()) + " features, model expects " +
                            std::to_string(model.n_features()),
                        "FeatureMismatch");
    std::vector<double> hazards;
    for (const auto& l : model.logits) {
        double eta = l.intercept;
        for (std::size_t j = 0; j < raw.size(); ++j)
            eta += l.beta[static_cast<Eigen::Index>(j)] * (raw[j] - model.standardizer.mean[j]) / model.standardizer.sd[j];
        hazards.push_back(logistic(eta));
    }
    return continuation_probs(hazards);
}

/// Row-wise probabilities for a raw feature matrix (columns must match the model).
inline Eigen::MatrixXd predict_probs(const LpormModel& model, const FeatureMatrix& fm) {
    if (fm.names != model.feature_names)
        throw DataError("predict_probs: feature names differ from the model's", "FeatureMismatch");
    Eigen::MatrixXd out(fm.values.rows(), static_cast<Eigen::Index>(model.logits.size() + 1));
    std::vector<double> row(static_cast<std::size_t>(fm.values.cols()));
    for (Eigen::Index r = 0; r < fm.values.rows(); ++r) {
        for (Eigen::Index c = 0; c < fm.values.cols(); ++c)
            row[static_cast<std::size_t>(c)] = fm.values(r, c);
        auto p = predict_probs(model, row);
        for (std::size_t k = 0; k < p.size(); ++k)
            out(r, static_cast<Eigen::Index>(k)) = p[k];
    }
    return out;
}

/// Fits the K - 1 continuation logits independently at one shared lambda.
/// `x` holds raw rows; standardization is learned here.
inline LpormModel fit_lporm(const FeatureMatrix& fm, std::span<const int> categories, double lambda,
                            const SolverParams& params = {}, int k = n_categories) {
    LpormModel model;
    model.lambda = lambda;
    model.feature_names = fm.names;
    model.with_profile = static_cast<int>(fm.names.size()) > n_demographic_features;
    model.standardizer = Standardizer::fit(fm.values);
    const Eigen::MatrixXd xs = model.standardizer.apply(fm.values);
    for (auto& data : expand_continuation(categories, k)) {
        const Eigen::MatrixXd xj = select_rows(xs, data.rows);
        auto f = fit_l1_logistic(xj, data.y, lambda, params);
        model.solver_passes += f.passes;
        model.logits.push_back({f.intercept, f.beta});
    }
    return model;
}

// ---------------------------------------------------------------------------
// Deviance

inline double binomial_deviance(const Eigen::VectorXd& y, const Eigen::VectorXd& eta) {
    double d = 0;
    for (Eigen::Index i = 0; i < y.size(); ++i)
        d += 2.0 * (log1pexp(eta[i]) - y[i] * eta[i]);
    return d;
}

/// -2 log-likelihood of the categories under the model, computed from the
/// category probabilities directly (not through the binomial factors).
inline double multinomial_deviance(const LpormModel& model, const FeatureMatrix& fm, std::span<const int> categories) {
    const auto p = predict_probs(model, fm);
    double d = 0;
    for (std::size_t i = 0; i < categories.size(); ++i)
        d -= 2.0 * std::log(p(static_cast<Eigen::Index>(i), categories[i] - 1));
    return d;
}

/// Sum of the K - 1 binomial deviances of the continuation factorization.
inline double factorized_deviance(const LpormModel& model, const FeatureMatrix& fm, std::span<const int> categories) {
    const Eigen::MatrixXd xs = model.standardizer.apply(fm.values);
    auto data = expand_continuation(categories, static_cast<int>(model.logits.size()) + 1);
    double d = 0;
    for (std::size_t j = 0; j < data.size(); ++j) {
        const Eigen::MatrixXd xj = select_rows(xs, data[j].rows);
        const Eigen::VectorXd eta = (xj * model.logits[j].beta).array() + model.logits[j].intercept;
        d += binomial_deviance(data[j].y, eta);
    }
    return d;
}

// ---------------------------------------------------------------------------
// Serialization

inline nlohmann::json to_json(const LpormModel& m) {
    nlohmann::json logits = nlohmann::json::array();
    for (const auto& l : m.logits)
        logits.push_back({{"intercept", l.intercept},
                          {"coefficients", std::vector<double>(l.beta.data(), l.beta.data() + l.beta.size())}});
    nlohmann::json j = {{"model_type", "lporm"},
                        {"measure", measure_name(m.measure)},
                        {"cut_points", {{"p25", m.cuts.p25}, {"p75", m.cuts.p75}}},
                        {"lambda", m.lambda},
                        {"with_profile", m.with_profile},
                        {"standardization", m.standardizer.to_json()},
                        {"feature_names", m.feature_names},
                        {"logits", logits},
                        {"solver", {{"method", "proximal-newton coordinate descent"}, {"passes", m.solver_passes}}}};
    j["grid"] = m.grid ? m.grid->to_json() : nlohmann::json(nullptr);
    return j;
}

inline LpormModel lporm_from_json(const nlohmann::json& j) {
    if (j.value("model_type", "") != "lporm")
        throw DataError("model file is not an LPORM model", "ModelFormat");
    LpormModel m;
    m.measure = parse_measure(j.at("measure").get<std::string>());
    m.cuts = {j.at("cut_points").at("p25").get<double>(), j.at("cut_points").at("p75").get<double>()};
    m.lambda = j.at("lambda").get<double>();
    m.with_profile = j.at("with_profile").get<bool>();
    m.standardizer = Standardizer::from_json(j.at("standardization"));
    m.feature_names = j.at("feature_names").get<std::vector<std::string>>();
    if (!j.at("grid").is_null())
        m.grid = ActivityClassGrid::from_json(j.at("grid"));
    for (const auto& l : j.at("logits")) {
        auto c = l.at("coefficients").get<std::vector<double>>();
        if (c.size() != m.feature_names.size())
            throw DataError("model file: coefficient count does not match feature names", "ModelFormat");
        m.logits.push_back({l.at("intercept").get<double>(),
                            Eigen::Map<Eigen::VectorXd>(c.data(), static_cast<Eigen::Index>(c.size()))});
    }
    m.solver_passes = j.at("solver").value("passes", 0);
    return m;
}

} // namespace actiprofile
