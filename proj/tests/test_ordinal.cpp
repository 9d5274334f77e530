#include <gtest/gtest.h>

#include <cmath>
#include <functional>
#include <random>

#include "actiprofile/ordinal.hpp"

#include "oracles.hpp"

using namespace actiprofile;

namespace {

struct Dataset {
    Eigen::MatrixXd x;
    Eigen::VectorXd y;
};

Dataset random_logistic(std::mt19937_64& rng, int n, int p, double signal) {
    std::normal_distribution<double> z;
    std::uniform_real_distribution<double> u;
    Dataset d{Eigen::MatrixXd(n, p), Eigen::VectorXd(n)};
    Eigen::VectorXd beta = Eigen::VectorXd::Zero(p);
    for (int j = 0; j < std::min(p, 3); ++j)
        beta[j] = signal * (j % 2 ? -1 : 1);
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < p; ++j)
            d.x(i, j) = z(rng) + (j > 0 ? 0.5 * d.x(i, j - 1) : 0.0);
        d.y[i] = u(rng) < logistic(d.x.row(i).dot(beta)) ? 1.0 : 0.0;
    }
    d.y[0] = 1;
    d.y[1] = 0;
    return d;
}

// category probabilities written out for K = 3
std::array<double, 3> closed_form(double eta1, double eta2) {
    const double h1 = 1 / (1 + std::exp(-eta1)), h2 = 1 / (1 + std::exp(-eta2));
    return {h1, (1 - h1) * h2, (1 - h1) * (1 - h2)};
}

} // namespace

TEST(Quantile, StatedRule) {
    std::vector<double> v{8, 7, 6, 5, 4, 3, 2, 1};
    EXPECT_DOUBLE_EQ(quantile(v, 0.25), 2.75);
    EXPECT_DOUBLE_EQ(quantile(v, 0.75), 6.25);
    EXPECT_DOUBLE_EQ(quantile(v, 0.0), 1);
    EXPECT_DOUBLE_EQ(quantile(v, 1.0), 8);
    EXPECT_THROW(quantile({}, 0.5), DataError);
}

TEST(Discretize, Examples) {
    std::vector<double> train{1, 2, 3, 4, 5, 6, 7, 8};
    std::vector<double> eval{-100, 2.75, 2.76, 6.25, 6.26};
    auto c = discretize_response(train, eval, Measure::walk400);
    EXPECT_EQ(c.train, (std::vector<int>{1, 1, 2, 2, 2, 2, 3, 3}));
    EXPECT_EQ(c.eval, (std::vector<int>{1, 1, 2, 2, 3}));
    std::vector<double> flat(10, 4.0);
    EXPECT_THROW(discretize_response(flat, eval, Measure::pace20), DegenerateResponse);
    EXPECT_THROW(discretize_response(std::vector<double>{1, 2, 3}, eval, Measure::pace20), DataError);
}

TEST(ExpandContinuation, Rules) {
    auto d = expand_continuation(std::vector<int>{1, 2, 3});
    ASSERT_EQ(d.size(), 2u);
    EXPECT_EQ(d[0].rows, (std::vector<std::size_t>{0, 1, 2}));
    EXPECT_EQ(d[0].y, (Eigen::Vector3d(1, 0, 0)));
    EXPECT_EQ(d[1].rows, (std::vector<std::size_t>{1, 2}));
    EXPECT_EQ(d[1].y, (Eigen::Vector2d(1, 0)));
    EXPECT_THROW(expand_continuation(std::vector<int>{1, 1, 1}), DegenerateLogit);
    std::vector<int> cats{1, 3, 2, 1, 2, 3, 3, 1};
    EXPECT_EQ(expand_continuation(cats)[1].rows.size(), cats.size() - 3);
    EXPECT_THROW(expand_continuation(std::vector<int>{1, 4}), DataError);
}

TEST(L1Logistic, FourPointOracle) {
    Eigen::MatrixXd x(4, 1);
    x << -2, -1, 1, 2;
    Eigen::VectorXd y(4);
    y << 0, 0, 1, 1;
    const double lambda = 0.1;
    auto objective = [&](double b0, double b1) {
        double s = 0;
        for (int i = 0; i < 4; ++i) {
            const double eta = b0 + b1 * x(i, 0);
            s += std::log1p(std::exp(eta)) - y[i] * eta;
        }
        return s / 4 + lambda * std::abs(b1);
    };
    auto inner = [&](double b1) {
        return oracle::golden_min([&](double b0) { return objective(b0, b1); }, -20, 20);
    };
    const double b1 = oracle::golden_min([&](double b) { return objective(inner(b), b); }, -20, 20);
    const double b0 = inner(b1);

    auto fit = fit_l1_logistic(x, y, lambda);
    EXPECT_NEAR(fit.beta[0], b1, 1e-4);
    EXPECT_NEAR(fit.intercept, b0, 1e-4);
    EXPECT_LE(kkt_violation(x, y, lambda, fit), 1e-5);
}

TEST(L1Logistic, NullModelAtLambdaMax) {
    std::mt19937_64 rng(2);
    auto d = random_logistic(rng, 80, 6, 1.0);
    const double lmax = lambda_max(d.x, d.y);
    const double ybar = d.y.mean();
    for (double lambda : {lmax, lmax * 1.5}) {
        auto fit = fit_l1_logistic(d.x, d.y, lambda);
        EXPECT_TRUE((fit.beta.array() == 0).all());
        EXPECT_EQ(fit.intercept, std::log(ybar / (1 - ybar)));
    }
    auto below = fit_l1_logistic(d.x, d.y, 0.9 * lmax);
    EXPECT_GT(below.beta.cwiseAbs().maxCoeff(), 0);
    Eigen::VectorXd ones = Eigen::VectorXd::Ones(5);
    EXPECT_THROW(fit_l1_logistic(Eigen::MatrixXd::Zero(5, 2), ones, 0.1), DegenerateLogit);
}

TEST(L1Logistic, KktAndMonotoneDevianceAlongPaths) {
    std::mt19937_64 rng(10);
    for (int t = 0; t < 20; ++t) {
        auto d = random_logistic(rng, 60 + 10 * t, 3 + t % 8, 0.5 + 0.2 * t);
        const auto grid = lambda_grid(lambda_max(d.x, d.y), 30, 1e-3);
        const auto path = fit_l1_path(d.x, d.y, grid);
        double previous = INFINITY;
        for (std::size_t k = 0; k < path.size(); ++k) {
            ASSERT_LE(kkt_violation(d.x, d.y, grid[k], path[k]), 1e-5) << t << " " << k;
            const double loss = mean_neg_loglik(d.x, d.y, path[k].intercept, path[k].beta);
            ASSERT_LE(loss, previous + 1e-8) << t << " " << k;
            previous = loss;
        }
    }
}

TEST(L1Logistic, RowDuplicationInvariance) {
    std::mt19937_64 rng(4);
    auto d = random_logistic(rng, 50, 5, 1.0);
    Eigen::MatrixXd x2(100, 5);
    Eigen::VectorXd y2(100);
    x2 << d.x, d.x;
    y2 << d.y, d.y;
    const double lambda = 0.2 * lambda_max(d.x, d.y);
    auto a = fit_l1_logistic(d.x, d.y, lambda);
    auto b = fit_l1_logistic(x2, y2, lambda);
    EXPECT_NEAR(a.intercept, b.intercept, 1e-5);
    for (int j = 0; j < 5; ++j)
        EXPECT_NEAR(a.beta[j], b.beta[j], 1e-5);
}

TEST(PredictProbs, ClosedForms) {
    LpormModel m;
    m.feature_names = {"f"};
    m.standardizer = {{0.0}, {1.0}};
    m.logits = {{0, Eigen::VectorXd::Zero(1)}, {0, Eigen::VectorXd::Zero(1)}};
    const std::vector<double> row{3.0};
    auto p = predict_probs(m, row);
    EXPECT_EQ(p, (std::vector<double>{0.5, 0.25, 0.25}));

    m.logits = {{-std::log(3.0), Eigen::VectorXd::Zero(1)}, {-std::log(2.0), Eigen::VectorXd::Zero(1)}};
    p = predict_probs(m, row);
    EXPECT_NEAR(p[0], 0.25, 1e-15);
    EXPECT_NEAR(p[1], 0.25, 1e-15);
    EXPECT_NEAR(p[2], 0.50, 1e-15);

    const std::vector<double> wrong{1.0, 2.0};
    EXPECT_THROW(predict_probs(m, wrong), DataError);
}

TEST(PredictProbs, SimplexAndDevianceFactorization) {
    std::mt19937_64 rng(50);
    std::normal_distribution<double> z;
    std::uniform_int_distribution<int> cat(1, 3);
    for (int t = 0; t < 50; ++t) {
        const int n = 20 + t, p = 1 + t % 5;
        FeatureMatrix fm;
        fm.values.resize(n, p);
        for (int j = 0; j < p; ++j)
            fm.names.push_back("f" + std::to_string(j));
        for (int i = 0; i < n; ++i) {
            fm.subject_ids.push_back(std::to_string(i));
            for (int j = 0; j < p; ++j)
                fm.values(i, j) = 10 * z(rng) + j;
        }
        std::vector<int> cats(n);
        for (auto& c : cats)
            c = cat(rng);
        cats[0] = 1, cats[1] = 2, cats[2] = 3;

        LpormModel m;
        m.feature_names = fm.names;
        m.standardizer = Standardizer::fit(fm.values);
        for (int j = 0; j < 2; ++j) {
            Eigen::VectorXd b(p);
            for (auto& v : b)
                v = 2 * z(rng);
            m.logits.push_back({z(rng), b});
        }
        const Eigen::MatrixXd probs = predict_probs(m, fm);
        const Eigen::MatrixXd xs = m.standardizer.apply(fm.values);
        double direct = 0;
        for (int i = 0; i < n; ++i) {
            ASSERT_NEAR(probs.row(i).sum(), 1.0, 1e-12);
            ASSERT_GE(probs.row(i).minCoeff(), 0.0);
            const auto want = closed_form(m.logits[0].intercept + xs.row(i).dot(m.logits[0].beta),
                                          m.logits[1].intercept + xs.row(i).dot(m.logits[1].beta));
            for (int k = 0; k < 3; ++k)
                ASSERT_NEAR(probs(i, k), want[k], 1e-12);
            direct -= 2 * std::log(want[cats[i] - 1]);
        }
        ASSERT_NEAR(factorized_deviance(m, fm, cats), direct, 1e-9 * std::max(1.0, direct));
        ASSERT_NEAR(multinomial_deviance(m, fm, cats), direct, 1e-9 * std::max(1.0, direct));
    }
}

TEST(FitLporm, NullOnNoiseAndJsonRoundTrip) {
    std::mt19937_64 rng(6);
    std::normal_distribution<double> z;
    std::uniform_int_distribution<int> cat(1, 3);
    FeatureMatrix fm;
    fm.values.resize(90, 4);
    fm.names = {"a", "b", "c", "d"};
    std::vector<int> cats(90);
    for (int i = 0; i < 90; ++i) {
        fm.subject_ids.push_back(std::to_string(i));
        for (int j = 0; j < 4; ++j)
            fm.values(i, j) = z(rng);
        cats[i] = cat(rng);
    }
    auto strong = fit_lporm(fm, cats, 10.0);
    EXPECT_TRUE(strong.active_features().empty());
    EXPECT_FALSE(strong.with_profile);

    auto m = fit_lporm(fm, cats, 0.01);
    m.cuts = {1.5, 2.5};
    m.measure = Measure::chair_stand;
    auto back = lporm_from_json(to_json(m));
    EXPECT_EQ(to_json(back), to_json(m));
    EXPECT_TRUE(back.grid == std::nullopt);
    EXPECT_TRUE(predict_probs(back, fm).isApprox(predict_probs(m, fm), 0));
    auto again = fit_lporm(fm, cats, 0.01);
    EXPECT_EQ(to_json(again), to_json(fit_lporm(fm, cats, 0.01)));

    nlohmann::json bad = to_json(m);
    bad["model_type"] = "gam";
    EXPECT_THROW(lporm_from_json(bad), DataError);
}
