// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fails.

#include <chrono>
#include <cstdio>
#include <iostream>
#include <numeric>
#include <random>
#include <sstream>
#include <string>

#include "actiprofile/changepoint.hpp"
#include "actiprofile/gam.hpp"
#include "actiprofile/ingest.hpp"
#include "actiprofile/metrics.hpp"
#include "actiprofile/ordinal.hpp"
#include "actiprofile/parallel.hpp"
#include "actiprofile/pipeline.hpp"
#include "actiprofile/profile.hpp"
#include "actiprofile/synth.hpp"

#include "oracles.hpp"

using namespace actiprofile;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

// Collects failed checks of one criterion; the first few are printed.
struct Check {
    std::vector<std::string> failures;
    void expect(bool ok, const std::string& what) {
        if (!ok)
            failures.push_back(what);
    }
    bool ok() const { return failures.empty(); }
};

int failed = 0;

void report(int id, const std::string& title, const Check& c, const std::string& detail) {
    std::cout << (c.ok() ? "PASS" : "FAIL") << "  criterion " << id << ": " << title << "  [" << detail << "]\n";
    for (std::size_t k = 0; k < std::min<std::size_t>(c.failures.size(), 5); ++k)
        std::cout << "        " << c.failures[k] << '\n';
    std::cout.flush();
    failed += !c.ok();
}

std::string fmt(double v, int prec = 4) {
    std::ostringstream s;
    s.precision(prec);
    s << v;
    return s.str();
}

MinuteTrace trace_from(std::vector<std::int32_t> c) {
    MinuteTrace t;
    t.subject_id = "s";
    c.resize(minutes_per_day, 500);
    t.counts = std::move(c);
    return t;
}

// ---------------------------------------------------------------------------

void criterion1() {
    Check c;
    const auto t0 = Clock::now();
    const ActivityClass low_sd{{2800, 3500}, {0, 700}};
    const ActivityClass high_sd{{2800, 3500}, {1400, 2100}};
    const auto a = chebyshev_bound(low_sd, 1.8);
    const auto b = chebyshev_bound(high_sd, 1.8);
    const double ms = seconds_since(t0) * 1e3;
    c.expect(std::abs(a.probability - 0.6914) <= 0.0005, "bound " + fmt(a.probability));
    c.expect(a.lo == 2520 && a.hi == 3780, "interval (" + fmt(a.lo, 8) + ", " + fmt(a.hi, 8) + ")");
    c.expect(b.hi == 6300, "upper " + fmt(b.hi, 8));
    c.expect(ms < 1.0, "runtime " + fmt(ms) + " ms");
    report(1, "Chebyshev bound reproduction", c,
           "p=" + fmt(a.probability) + " (" + fmt(a.lo, 8) + ", " + fmt(a.hi, 8) + ") hi=" + fmt(b.hi, 8) + " " +
               fmt(ms, 3) + " ms");
}

void criterion2() {
    Check c;
    const auto t0 = Clock::now();
    // worked examples
    {
        std::vector<std::int32_t> z90(1440, 500), z91(1440, 500), inter(1440, 500);
        std::fill(z90.begin() + 300, z90.begin() + 390, 0);
        std::fill(z91.begin() + 300, z91.begin() + 391, 0);
        std::fill(inter.begin() + 200, inter.begin() + 295, 0);
        inter[295] = 50;
        inter[296] = 80;
        std::fill(inter.begin() + 297, inter.begin() + 307, 0);
        c.expect(detect_nonwear(trace_from(z90)).wear_minutes() == 1440, "90 zeros flagged");
        c.expect(detect_nonwear(trace_from(z91)).wear_minutes() == 1440 - 91, "91 zeros not flagged");
        const auto t = detect_nonwear(trace_from(inter));
        bool span = t.wear_minutes() == 1440 - 107;
        for (int m = 200; m < 307; ++m)
            span = span && !t.wear[m];
        c.expect(span, "interrupted 107-minute window");
    }
    std::mt19937_64 rng(2024);
    for (int k = 0; k < 500; ++k) {
        const auto t = detect_nonwear(trace_from(oracle::random_counts(rng)));
        const auto want = oracle::nonwear(t.counts);
        bool same = true;
        for (int m = 0; m < minutes_per_day; ++m)
            same = same && (t.wear[m] == !want[m]);
        c.expect(same, "case " + std::to_string(k) + " differs from the oracle");
        // partition: every minute is wear xor non-wear; non-wear runs are at least 91 long, start and end on a zero
        int m = 0;
        while (m < minutes_per_day) {
            if (t.wear[m]) {
                ++m;
                continue;
            }
            int e = m;
            while (e < minutes_per_day && !t.wear[e])
                ++e;
            c.expect(e - m >= 91, "short non-wear run in case " + std::to_string(k));
            c.expect(t.counts[m] == 0 && t.counts[e - 1] == 0, "run edge not zero in case " + std::to_string(k));
            m = e;
        }
        const auto again = detect_nonwear(t);
        c.expect(again.wear == t.wear, "not idempotent in case " + std::to_string(k));
    }
    const double s = seconds_since(t0);
    c.expect(s < 5, "runtime " + fmt(s) + " s");
    report(2, "non-wear rule suite", c, "3 examples + 500 randomized, " + fmt(s, 3) + " s");
}

void criterion3() {
    Check c;
    const auto t0 = Clock::now();
    std::mt19937_64 rng(99);
    std::uniform_int_distribution<int> size(20, 200);
    CpParams p;
    for (int k = 0; k < 100; ++k) {
        const auto x = oracle::random_regimes(rng, static_cast<std::size_t>(size(rng)));
        const auto got = best_split(x, p);
        const auto want = oracle::best_split(x, p.min_segment_size, 1.0);
        c.expect(got.tau == want.tau, "sequence " + std::to_string(k) + " tau " + std::to_string(got.tau) + " vs " +
                                          std::to_string(want.tau));
        c.expect(std::abs(got.q - want.q) <= 1e-9 * std::max(1.0, std::abs(want.q)),
                 "sequence " + std::to_string(k) + " Q " + fmt(got.q, 17) + " vs " + fmt(want.q, 17));
    }
    std::vector<double> x(100, 0.0);
    std::fill(x.begin() + 50, x.end(), 10.0);
    const auto s = best_split(x, p);
    const double pv = permutation_test(x, s.tau, s.q, p);
    c.expect(s.tau == 50, "two-regime tau " + std::to_string(s.tau));
    c.expect(pv == 0.005, "two-regime p " + fmt(pv, 10));
    const double secs = seconds_since(t0);
    c.expect(secs < 30, "runtime " + fmt(secs) + " s");
    report(3, "change-point oracle equivalence", c,
           "100 sequences, tau=" + std::to_string(s.tau) + " p=" + fmt(pv) + ", " + fmt(secs, 3) + " s");
}

void criterion4() {
    Check c;
    std::mt19937_64 rng(4);
    std::uniform_int_distribution<int> len(10, 120), days(1, 7), wear(600, 1000);
    std::uniform_real_distribution<double> mean(0, 5000), sd(0, 2000);
    double worst = 0;
    for (int subject = 0; subject < 200; ++subject) {
        std::vector<Segment> segs;
        const int k = days(rng);
        double total = 0;
        for (int d = 0; d < k; ++d) {
            const int end = wear(rng);
            for (int pos = 0; pos < end;) {
                const int e = std::min(end, pos + len(rng));
                segs.push_back({"s", d, pos, e, mean(rng), sd(rng)});
                pos = e;
            }
            total += end;
        }
        for (double w : {350.0, 700.0, 2100.0}) {
            const auto grid = fit_grid(segs, w, w);
            const auto prof = daily_profile(segs, grid);
            const double sum = std::accumulate(prof.minutes.begin(), prof.minutes.end(), 0.0);
            worst = std::max(worst, std::abs(sum - total / k));
        }
    }
    c.expect(worst <= 1e-9, "mass error " + fmt(worst));
    const ActivityClassGrid g(100, 100, 250, 50);
    const std::vector<Segment> hand{{"x", 0, 0, 600, 50, 10},  {"x", 0, 600, 660, 150, 10},
                                    {"x", 1, 0, 500, 50, 10},  {"x", 1, 500, 600, 150, 10},
                                    {"x", 1, 600, 630, 250, 10}};
    const auto p = daily_profile(hand, g);
    const double a = p.minutes[g.assign(50, 10)], b = p.minutes[g.assign(150, 10)], d = p.minutes[g.assign(250, 10)];
    c.expect(a == 550 && b == 80 && d == 15, "hand example (" + fmt(a) + ", " + fmt(b) + ", " + fmt(d) + ")");
    report(4, "profile mass conservation", c,
           "max |sum - wear| = " + fmt(worst) + ", hand example (" + fmt(a) + ", " + fmt(b) + ", " + fmt(d) + ")");
}

void criterion5() {
    Check c;
    LpormModel zero;
    zero.feature_names = {"f"};
    zero.standardizer = {{0.0}, {1.0}};
    zero.logits = {{0, Eigen::VectorXd::Zero(1)}, {0, Eigen::VectorXd::Zero(1)}};
    const std::vector<double> row{2.0};
    const auto probs = predict_probs(zero, row);
    c.expect(probs == std::vector<double>{0.5, 0.25, 0.25}, "zero-parameter probabilities");

    std::mt19937_64 rng(55);
    std::normal_distribution<double> z;
    std::uniform_real_distribution<double> u;
    double worst_dev = 0, worst_kkt = 0;
    for (int t = 0; t < 50; ++t) {
        const int n = 40 + 4 * t, p = 2 + t % 6;
        FeatureMatrix fm;
        fm.values.resize(n, p);
        for (int j = 0; j < p; ++j)
            fm.names.push_back("f" + std::to_string(j));
        std::vector<int> cats(n);
        for (int i = 0; i < n; ++i) {
            fm.subject_ids.push_back(std::to_string(i));
            for (int j = 0; j < p; ++j)
                fm.values(i, j) = 5 * z(rng) + j;
            const double eta = fm.values(i, 0) / 5 - (p > 1 ? fm.values(i, 1) / 10 : 0) + 0.5 * z(rng);
            cats[i] = eta < -0.7 ? 1 : eta < 0.7 ? 2 : 3;
        }
        cats[0] = 1, cats[1] = 2, cats[2] = 3;
        const double lambda = 0.02 + 0.2 * u(rng);
        const auto m = fit_lporm(fm, cats, lambda);
        const double fd = factorized_deviance(m, fm, cats), md = multinomial_deviance(m, fm, cats);
        const double rel = std::abs(fd - md) / std::max(1.0, std::abs(md));
        worst_dev = std::max(worst_dev, rel);
        c.expect(rel <= 1e-9, "dataset " + std::to_string(t) + " deviance gap " + fmt(rel));
        const Eigen::MatrixXd xs = m.standardizer.apply(fm.values);
        const auto parts = expand_continuation(cats);
        for (std::size_t j = 0; j < parts.size(); ++j) {
            const LogisticFit f{m.logits[j].intercept, m.logits[j].beta, 0};
            const double v = kkt_violation(select_rows(xs, parts[j].rows), parts[j].y, lambda, f);
            worst_kkt = std::max(worst_kkt, v);
            c.expect(v <= SolverParams{}.kkt_tol * 10, "dataset " + std::to_string(t) + " logit " +
                                                           std::to_string(j + 1) + " KKT " + fmt(v));
        }
    }
    report(5, "ordinal algebra", c,
           "zero model (" + fmt(probs[0]) + ", " + fmt(probs[1]) + ", " + fmt(probs[2]) + "), max deviance gap " +
               fmt(worst_dev) + ", max KKT " + fmt(worst_kkt));
}

void criterion6() {
    Check c;
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
    auto inner = [&](double b1) { return oracle::golden_min([&](double b0) { return objective(b0, b1); }, -20, 20); };
    const double b1 = oracle::golden_min([&](double b) { return objective(inner(b), b); }, -20, 20);
    const double b0 = inner(b1);
    const auto fit = fit_l1_logistic(x, y, lambda);
    c.expect(std::abs(fit.beta[0] - b1) <= 1e-4, "slope " + fmt(fit.beta[0], 8) + " vs " + fmt(b1, 8));
    c.expect(std::abs(fit.intercept - b0) <= 1e-4, "intercept " + fmt(fit.intercept, 8) + " vs " + fmt(b0, 8));

    std::mt19937_64 rng(6);
    std::normal_distribution<double> z;
    std::uniform_real_distribution<double> u;
    for (int t = 0; t < 20; ++t) {
        Eigen::MatrixXd xx(60, 4);
        Eigen::VectorXd yy(60);
        for (int i = 0; i < 60; ++i) {
            for (int j = 0; j < 4; ++j)
                xx(i, j) = z(rng);
            yy[i] = u(rng) < logistic(xx(i, 0) - xx(i, 2)) ? 1.0 : 0.0;
        }
        yy[0] = 1, yy[1] = 0;
        const double lmax = lambda_max(xx, yy), ybar = yy.mean();
        for (double l : {lmax, 2 * lmax}) {
            const auto f = fit_l1_logistic(xx, yy, l);
            c.expect((f.beta.array() == 0).all() && f.intercept == std::log(ybar / (1 - ybar)),
                     "dataset " + std::to_string(t) + " not the null model at " + fmt(l / lmax) + " lambda_max");
        }
    }
    report(6, "L1 solver oracle", c,
           "fit (" + fmt(fit.intercept, 7) + ", " + fmt(fit.beta[0], 7) + ") vs brute force (" + fmt(b0, 7) + ", " +
               fmt(b1, 7) + "); null model at lambda_max on 20 datasets");
}

void criterion7() {
    Check c;
    std::mt19937_64 rng(7);
    std::uniform_int_distribution<int> size(2, 60), level(0, 9), bit(0, 1), cat(1, 3);
    for (int t = 0; t < 200; ++t) {
        const int n = size(rng);
        std::vector<double> s(n);
        std::vector<int> y(n), a(n), b(n);
        for (int i = 0; i < n; ++i) {
            s[i] = level(rng) / 8.0;
            y[i] = bit(rng);
            a[i] = cat(rng);
            b[i] = cat(rng);
        }
        y[0] = 1, y[1] = 0;
        c.expect(auc(s, y) == oracle::auc(s, y), "auc instance " + std::to_string(t));
        const auto [cc, dd] = oracle::gamma_pairs(a, b);
        if (cc + dd > 0)
            c.expect(gamma_stat(a, b) == (cc - dd) / (cc + dd), "gamma instance " + std::to_string(t));
    }
    const double a5 = auc(std::vector<double>{0.8, 0.2, 0.6, 0.4}, std::vector<int>{1, 1, 0, 0});
    const double g5 = gamma_stat(std::vector<int>{1, 2, 3, 3}, std::vector<int>{1, 3, 2, 3});
    c.expect(a5 == 0.5, "AUC example " + fmt(a5, 17));
    c.expect(g5 == 0.5, "Gamma example " + fmt(g5, 17));
    report(7, "metric oracles", c, "200 random instances, AUC example " + fmt(a5) + ", Gamma example " + fmt(g5));
}

// ---------------------------------------------------------------------------
// End-to-end synthetic runs (criteria 8 and 10 share the high run)

struct PipelineRun {
    std::vector<TrainedMeasure> trained;
    std::vector<std::vector<EvalReport>> reports;
    std::string fingerprint;   // every artifact, serialized
    double seconds = 0;
};

PipelineRun run_pipeline(Separation level, int threads) {
    const auto t0 = Clock::now();
    auto spec = planted_separation_spec(level);
    spec.n_subjects = 300;
    spec.days = 7;
    const auto cohort = generate_cohort(spec);

    // round-trip the raw minutes through CSV the way a user would feed them in
    std::stringstream minutes;
    write_minute_csv(minutes, cohort.traces);
    auto parsed = parse_minute_csv(minutes);
    const auto clean = clean_traces(std::move(parsed.traces), std::move(parsed.gaps));
    const auto segments = segment_traces(clean.traces, CpParams{}, threads);
    const auto data = make_dataset(segments, cohort.demographics, cohort.responses);

    PipelineRun run;
    std::ostringstream fp;
    write_segment_csv(fp, segments);
    TrainConfig cfg;
    for (auto m : all_measures) {
        run.trained.push_back(train_measure(data, m, cfg));
        run.reports.push_back(evaluate_trained(run.trained.back(), data));
        fp << to_json(run.trained.back()).dump();
        for (const auto& r : run.reports.back())
            fp << to_json(r).dump();
    }
    run.fingerprint = fp.str();
    run.seconds = seconds_since(t0);
    return run;
}

const EvalReport* find_report(const std::vector<EvalReport>& rs, const std::string& model, bool selected_only) {
    for (const auto& r : rs)
        if (r.model_id == model && (!selected_only || r.selected))
            return &r;
    return nullptr;
}

void criterion8(const PipelineRun& high, const PipelineRun& high_again, const PipelineRun& low) {
    Check c;
    std::string detail;
    for (std::size_t k = 0; k < high.reports.size(); ++k) {
        const auto* sel = find_report(high.reports[k], "lporm", true);
        const auto* base = find_report(high.reports[k], "lporm_no_profile", false);
        const std::string m(measure_name(high.trained[k].measure));
        c.expect(sel->auc1 >= 0.85, m + " auc1 " + fmt(sel->auc1));
        c.expect(sel->auc3 >= 0.85, m + " auc3 " + fmt(sel->auc3));
        c.expect(sel->gamma - base->gamma >= 0.05,
                 m + " gamma gain " + fmt(sel->gamma) + " - " + fmt(base->gamma));
        detail += m + " auc1=" + fmt(sel->auc1, 3) + " auc3=" + fmt(sel->auc3, 3) + " gamma " + fmt(sel->gamma, 3) +
                  " vs " + fmt(base->gamma, 3) + "; ";
    }
    for (std::size_t k = 0; k < low.reports.size(); ++k) {
        const auto* sel = find_report(low.reports[k], "lporm", true);
        const std::string m(measure_name(low.trained[k].measure));
        c.expect(sel->auc1 >= 0.4 && sel->auc1 <= 0.6, "low " + m + " auc1 " + fmt(sel->auc1));
        detail += "low " + m + " auc1=" + fmt(sel->auc1, 3) + "; ";
    }
    c.expect(high.seconds < 300, "high run took " + fmt(high.seconds) + " s");
    c.expect(high.fingerprint == high_again.fingerprint, "rerun with the same seed differs");
    detail += "high run " + fmt(high.seconds, 3) + " s, low run " + fmt(low.seconds, 3) + " s, rerun " +
              (high.fingerprint == high_again.fingerprint ? "identical" : "DIFFERS");
    report(8, "end-to-end synthetic recovery", c, detail);
}

void criterion9(int threads) {
    Check c;
    const auto t0 = Clock::now();
    auto build = [&](const SyntheticCohort& coh) {
        const auto clean = clean_traces(coh.traces, {});
        return make_dataset(segment_traces(clean.traces, CpParams{}, threads), coh.demographics, coh.responses);
    };
    int wins = 0;
    std::string detail;
    TrainConfig cfg;
    cfg.fit_gam = false;
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
        auto still = planted_drift_spec(0);
        auto drift = planted_drift_spec(60);
        for (auto* s : {&still, &drift}) {
            s->n_subjects = 80;
            s->days = 2;
            s->seed = seed;
        }
        const auto a = build(generate_cohort(still, 0));
        const auto b0 = build(generate_cohort(still, 1));
        const auto b1 = build(generate_cohort(drift, 1));
        cfg.seed = seed;
        const auto tm = train_measure(a, Measure::walk400, cfg);
        const auto ids = measure_rows(b0, Measure::walk400).ids;
        const double r0 = temporal_eval(tm.lporm(), b0, ids).auc3;
        const double r1 = temporal_eval(tm.lporm(), b1, ids).auc3;
        wins += r1 > r0;
        detail += fmt(r1 - r0, 2) + " ";
    }
    c.expect(wins >= 9, "auc3 moved in the predicted direction in " + std::to_string(wins) + "/10 seeds");
    report(9, "temporal-evaluation drift sign test", c,
           std::to_string(wins) + "/10 seeds with higher auc3 under drift; deltas " + detail + "; " +
               fmt(seconds_since(t0), 3) + " s");
}

void criterion10(const PipelineRun& high) {
    Check c;
    std::mt19937_64 rng(10);
    std::uniform_real_distribution<double> u(0, 1);
    const int n = 400;
    Eigen::MatrixXd x(n, 3);
    Eigen::VectorXd y(n);
    for (int i = 0; i < n; ++i) {
        x(i, 0) = std::round(u(rng) * 200) / 10;
        x(i, 1) = u(rng) * 5;
        x(i, 2) = u(rng) < 0.5 ? 1.0 : 0.0;
        const double eta = std::sin(x(i, 0) / 4) + 0.3 * (x(i, 1) - 2.5) * (x(i, 1) - 2.5) - 0.5 + 0.4 * x(i, 2);
        y[i] = u(rng) < logistic(eta) ? 1.0 : 0.0;
    }
    auto fitted = [&](const GamLogit& g) {
        Eigen::VectorXd p(n);
        for (int i = 0; i < n; ++i) {
            const std::vector<double> row{x(i, 0), x(i, 1), x(i, 2)};
            p[i] = logistic(linear_predictor(g, row));
        }
        return p;
    };
    auto specs = [](double df) { return std::vector<TermSpec>{{0, "a", true, df}, {1, "b", true, df}, {2, "c", false, 1}}; };

    const auto g1 = backfit_binomial_gam(x, y, specs(1.0));
    const double df1_gap = (fitted(g1) - oracle::newton_logistic(x, y)).cwiseAbs().maxCoeff();
    c.expect(df1_gap <= 1e-3, "df=1 vs logistic regression " + fmt(df1_gap));

    const auto g4 = backfit_binomial_gam(x, y, specs(4.0));
    double worst_mean = 0;
    for (const auto& t : g4.terms) {
        double mean = 0;
        for (int i = 0; i < n; ++i)
            mean += t(x(i, static_cast<Eigen::Index>(t.column)));
        worst_mean = std::max(worst_mean, std::abs(mean / n));
    }
    c.expect(worst_mean <= 1e-9, "smooth mean " + fmt(worst_mean));

    Eigen::VectorXd lx(60), ly(60), lw(60);
    for (int i = 0; i < 60; ++i) {
        lx[i] = std::round(u(rng) * 40) / 4;
        ly[i] = 3 - 1.5 * lx[i];
        lw[i] = 0.2 + u(rng);
    }
    double worst_lin = 0;
    for (double df : {1.5, 3.0, 6.0, 12.0}) {
        double ic = 0;
        const auto term = fit_smoothing_spline(lx, ly, lw, df, &ic);
        for (int i = 0; i < 60; ++i)
            worst_lin = std::max(worst_lin, std::abs(term(lx[i]) + ic - ly[i]));
    }
    c.expect(worst_lin <= 1e-8, "linear reproduction error " + fmt(worst_lin));

    std::string cohort;
    for (std::size_t k = 0; k < high.trained.size(); ++k) {
        const std::string m(measure_name(high.trained[k].measure));
        const auto* lp = find_report(high.reports[k], "lporm", true);
        const auto* gam = find_report(high.reports[k], "gam", false);
        if (!gam) {
            c.expect(false, m + " GAM not fitted: " + high.trained[k].gam_error);
            continue;
        }
        c.expect(std::abs(gam->auc1 - lp->auc1) <= 0.1, m + " GAM auc1 " + fmt(gam->auc1) + " vs " + fmt(lp->auc1));
        cohort += m + " " + fmt(gam->auc1, 3) + " vs " + fmt(lp->auc1, 3) + "; ";
    }
    report(10, "GAM checks", c,
           "df=1 gap " + fmt(df1_gap) + ", max smooth mean " + fmt(worst_mean) + ", linear error " + fmt(worst_lin) +
               "; auc1 GAM vs LPORM: " + cohort);
}

} // namespace

int main() {
    const int threads = default_threads();
    std::cout << "acceptance run, " << threads << " threads\n";
    criterion1();
    criterion2();
    criterion3();
    criterion4();
    criterion5();
    criterion6();
    criterion7();
    const auto high = run_pipeline(Separation::high, threads);
    const auto high_again = run_pipeline(Separation::high, threads);
    const auto low = run_pipeline(Separation::low, threads);
    criterion8(high, high_again, low);
    criterion9(threads);
    criterion10(high);
    std::cout << (failed ? std::to_string(failed) + " criteria failed" : std::string("all criteria passed")) << '\n';
    return failed ? 1 : 0;
}
