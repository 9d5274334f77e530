#pragma once

// Additive continuation-ratio model. Each logit is fitted by local scoring:
// an IRLS outer loop whose weighted least-squares step is solved by
// backfitting smoothing splines on partial residuals.
//
// Smoothing splines use the Reinsch form with knots at the unique predictor
// values: with h_k = t_{k+1} - t_k, the tridiagonal R and the second-difference
// matrix Q, the fitted knot values are
//
//   g = ybar - lambda W^-1 Q gamma,   (R + lambda Q' W^-1 Q) gamma = Q' ybar,
//
// and tr(S) = n - lambda tr(B^-1 Q' W^-1 Q) only needs the band of B^-1.

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "actiprofile/error.hpp"
#include "actiprofile/ordinal.hpp"
#include "actiprofile/profile.hpp"

namespace actiprofile {

/// Weighted natural cubic smoothing spline on fixed knots.
class SplineSmoother {
public:
    static constexpr double infinite_lambda = std::numeric_limits<double>::infinity();

    /// `knots` strictly increasing (at least 3), `weights` positive.
    SplineSmoother(std::vector<double> knots, std::vector<double> weights)
        : t_(std::move(knots)), w_(std::move(weights)) {
        const std::size_t n = t_.size();
        if (n < 3 || w_.size() != n)
            throw DataError("SplineSmoother: need at least 3 knots with matching weights");
        h_.resize(n - 1);
        for (std::size_t k = 0; k + 1 < n; ++k) {
            h_[k] = t_[k + 1] - t_[k];
            if (!(h_[k] > 0))
                throw DataError("SplineSmoother: knots must be strictly increasing");
        }
        const std::size_t m = n - 2;
        q0_.resize(m), q1_.resize(m), q2_.resize(m);
        r0_.resize(m), r1_.resize(m);
        for (std::size_t a = 0; a < m; ++a) {
            q0_[a] = 1.0 / h_[a];
            q2_[a] = 1.0 / h_[a + 1];
            q1_[a] = -q0_[a] - q2_[a];
            r0_[a] = (h_[a] + h_[a + 1]) / 3.0;
            r1_[a] = h_[a + 1] / 6.0;
        }
        c0_.assign(m, 0), c1_.assign(m, 0), c2_.assign(m, 0);
        for (std::size_t a = 0; a < m; ++a) {
            c0_[a] = q0_[a] * q0_[a] / w_[a] + q1_[a] * q1_[a] / w_[a + 1] + q2_[a] * q2_[a] / w_[a + 2];
            if (a + 1 < m)
                c1_[a] = q1_[a] * q0_[a + 1] / w_[a + 1] + q2_[a] * q1_[a + 1] / w_[a + 2];
            if (a + 2 < m)
                c2_[a] = q2_[a] * q0_[a + 2] / w_[a + 2];
        }
        double tr_r = 0, tr_c = 0;
        for (std::size_t a = 0; a < m; ++a)
            tr_r += r0_[a], tr_c += c0_[a];
        scale_ = tr_r / tr_c;
        set_lambda(infinite_lambda);
    }

    std::size_t size() const noexcept { return t_.size(); }
    const std::vector<double>& knots() const noexcept { return t_; }
    const std::vector<double>& weights() const noexcept { return w_; }
    double lambda() const noexcept { return lambda_; }

    void set_lambda(double lambda) {
        lambda_ = lambda;
        if (std::isfinite(lambda_))
            factor();
    }

    /// Trace of the smoother matrix at the current lambda (2 when lambda is infinite).
    double trace() const {
        const std::size_t n = t_.size(), m = n - 2;
        if (!std::isfinite(lambda_))
            return 2.0;
        if (lambda_ == 0)
            return static_cast<double>(n);
        // band of B^-1 from the LDL' factors
        std::vector<double> s0(m + 2, 0), s1(m + 2, 0), s2(m + 2, 0);
        for (std::size_t i = m; i-- > 0;) {
            const double a = l1_[i], b = l2_[i];
            const double s_i1_i1 = i + 1 < m ? s0[i + 1] : 0, s_i1_i2 = i + 1 < m ? s1[i + 1] : 0;
            const double s_i2_i2 = i + 2 < m ? s0[i + 2] : 0;
            s2[i] = -a * s_i1_i2 - b * s_i2_i2;
            s1[i] = -a * s_i1_i1 - b * s_i1_i2;
            s0[i] = 1.0 / d_[i] - a * s1[i] - b * s2[i];
        }
        double tr = 0;
        for (std::size_t a = 0; a < m; ++a)
            tr += s0[a] * c0_[a] + 2 * s1[a] * c1_[a] + 2 * s2[a] * c2_[a];
        return static_cast<double>(n) - lambda_ * tr;
    }

    /// Chooses lambda so that the trace matches `df`, clamped to [2, n].
    /// df <= 2 gives the weighted linear fit, df >= n interpolation.
    void set_df(double df) {
        const double n = static_cast<double>(t_.size());
        if (df <= 2.0) {
            set_lambda(infinite_lambda);
            return;
        }
        if (df >= n) {
            set_lambda(0.0);
            return;
        }
        // bisect log(lambda / scale) all the way down: a loose early exit makes lambda
        // jump with tiny weight changes, which stalls local scoring
        double lo = -40, hi = 40;   // trace decreases in lambda
        while (hi - lo > 1e-11) {
            const double mid = 0.5 * (lo + hi);
            set_lambda(scale_ * std::exp(mid));
            (trace() > df ? lo : hi) = mid;
        }
        set_lambda(scale_ * std::exp(0.5 * (lo + hi)));
    }

    /// Smoothed knot values for knot-level responses `ybar`.
    Eigen::VectorXd smooth(const Eigen::VectorXd& ybar) const {
        const std::size_t n = t_.size(), m = n - 2;
        if (!std::isfinite(lambda_))
            return linear_fit(ybar);
        if (lambda_ == 0)
            return ybar;
        std::vector<double> rhs(m);
        for (std::size_t a = 0; a < m; ++a)
            rhs[a] = q0_[a] * ybar[a] + q1_[a] * ybar[a + 1] + q2_[a] * ybar[a + 2];
        solve(rhs);
        Eigen::VectorXd g = ybar;
        for (std::size_t a = 0; a < m; ++a) {
            g[a] -= lambda_ * q0_[a] * rhs[a] / w_[a];
            g[a + 1] -= lambda_ * q1_[a] * rhs[a] / w_[a + 1];
            g[a + 2] -= lambda_ * q2_[a] * rhs[a] / w_[a + 2];
        }
        return g;
    }

    /// Dense smoother matrix (column k = smooth of the k-th unit vector).
    Eigen::MatrixXd matrix() const {
        const auto n = static_cast<Eigen::Index>(t_.size());
        Eigen::MatrixXd s(n, n);
        for (Eigen::Index k = 0; k < n; ++k)
            s.col(k) = smooth(Eigen::VectorXd::Unit(n, k));
        return s;
    }

private:
    Eigen::VectorXd linear_fit(const Eigen::VectorXd& ybar) const {
        double sw = 0, sx = 0, sy = 0;
        for (std::size_t k = 0; k < t_.size(); ++k)
            sw += w_[k], sx += w_[k] * t_[k], sy += w_[k] * ybar[static_cast<Eigen::Index>(k)];
        const double xm = sx / sw, ym = sy / sw;
        double sxx = 0, sxy = 0;
        for (std::size_t k = 0; k < t_.size(); ++k) {
            const double dx = t_[k] - xm;
            sxx += w_[k] * dx * dx;
            sxy += w_[k] * dx * (ybar[static_cast<Eigen::Index>(k)] - ym);
        }
        const double slope = sxx > 0 ? sxy / sxx : 0.0;
        Eigen::VectorXd g(static_cast<Eigen::Index>(t_.size()));
        for (std::size_t k = 0; k < t_.size(); ++k)
            g[static_cast<Eigen::Index>(k)] = ym + slope * (t_[k] - xm);
        return g;
    }

    // LDL' of the pentadiagonal B = R + lambda C
    void factor() {
        const std::size_t m = t_.size() - 2;
        d_.assign(m, 0), l1_.assign(m, 0), l2_.assign(m, 0);
        for (std::size_t i = 0; i < m; ++i) {
            const double b0 = r0_[i] + lambda_ * c0_[i];
            const double b1 = i + 1 < m ? r1_[i] + lambda_ * c1_[i] : 0.0;
            const double b2 = i + 2 < m ? lambda_ * c2_[i] : 0.0;
            double d = b0;
            if (i >= 1)
                d -= l1_[i - 1] * l1_[i - 1] * d_[i - 1];
            if (i >= 2)
                d -= l2_[i - 2] * l2_[i - 2] * d_[i - 2];
            d_[i] = d;
            double e = b1;
            if (i >= 1)
                e -= l1_[i - 1] * l2_[i - 1] * d_[i - 1];
            l1_[i] = e / d;
            l2_[i] = b2 / d;
        }
    }

    void solve(std::vector<double>& x) const {
        const std::size_t m = x.size();
        for (std::size_t i = 0; i < m; ++i) {
            if (i >= 1)
                x[i] -= l1_[i - 1] * x[i - 1];
            if (i >= 2)
                x[i] -= l2_[i - 2] * x[i - 2];
        }
        for (std::size_t i = 0; i < m; ++i)
            x[i] /= d_[i];
        for (std::size_t i = m; i-- > 0;) {
            if (i + 1 < m)
                x[i] -= l1_[i] * x[i + 1];
            if (i + 2 < m)
                x[i] -= l2_[i] * x[i + 2];
        }
    }

    std::vector<double> t_, w_, h_;
    std::vector<double> q0_, q1_, q2_, r0_, r1_, c0_, c1_, c2_;
    std::vector<double> d_, l1_, l2_;
    double scale_ = 1;
    double lambda_ = infinite_lambda;
};

/// Second derivatives (zero at both ends) of the natural cubic spline through knot values `g`.
inline std::vector<double> natural_spline_curvature(std::span<const double> t, const Eigen::VectorXd& g) {
    const std::size_t n = t.size();
    const std::size_t m = n - 2;
    // R gamma = Q' g (tridiagonal solve)
    std::vector<double> diag(m), off(m), rhs(m);
    for (std::size_t a = 0; a < m; ++a) {
        const double h0 = t[a + 1] - t[a], h1 = t[a + 2] - t[a + 1];
        diag[a] = (h0 + h1) / 3.0;
        off[a] = h1 / 6.0;
        rhs[a] = (g[a + 2] - g[a + 1]) / h1 - (g[a + 1] - g[a]) / h0;
    }
    for (std::size_t a = 1; a < m; ++a) {
        const double f = off[a - 1] / diag[a - 1];
        diag[a] -= f * off[a - 1];
        rhs[a] -= f * rhs[a - 1];
    }
    std::vector<double> gam(n, 0.0);
    for (std::size_t a = m; a-- > 0;)
        gam[a + 1] = (rhs[a] - (a + 1 < m ? off[a] * gam[a + 2] : 0.0)) / diag[a];
    return gam;
}

inline double natural_spline_eval(std::span<const double> t, const Eigen::VectorXd& g, std::span<const double> gam,
                                  double x) {
    const std::size_t n = t.size();
    if (x <= t[0]) {
        const double h0 = t[1] - t[0];
        const double slope = (g[1] - g[0]) / h0 - h0 * gam[1] / 6.0;
        return g[0] + slope * (x - t[0]);
    }
    if (x >= t[n - 1]) {
        const double h = t[n - 1] - t[n - 2];
        const double slope = (g[n - 1] - g[n - 2]) / h + h * gam[n - 2] / 6.0;
        return g[n - 1] + slope * (x - t[n - 1]);
    }
    const auto k = static_cast<std::size_t>(std::upper_bound(t.begin(), t.end(), x) - t.begin()) - 1;
    const double a = x - t[k], b = t[k + 1] - x, hk = t[k + 1] - t[k];
    return (a * g[k + 1] + b * g[k]) / hk -
           a * b / 6.0 * ((1 + a / hk) * gam[k + 1] + (1 + b / hk) * gam[k]);
}

/// Evaluates the natural cubic spline through knot values `g` at `x`;
/// linear beyond the boundary knots.
inline double natural_spline_eval(std::span<const double> t, const Eigen::VectorXd& g, double x) {
    return natural_spline_eval(t, g, natural_spline_curvature(t, g), x);
}

/// Spline values at every entry of `x`, centered to mean zero over those entries.
/// Returns the removed mean.
inline double spline_at_rows(std::span<const double> t, const Eigen::VectorXd& g, const Eigen::VectorXd& x,
                             Eigen::VectorXd& out) {
    const auto gam = natural_spline_curvature(t, g);
    out.resize(x.size());
    for (Eigen::Index i = 0; i < x.size(); ++i)
        out[i] = natural_spline_eval(t, g, gam, x[i]);
    const double center = out.mean();
    out.array() -= center;
    return center;
}

// ---------------------------------------------------------------------------

/// One fitted additive component, f(x) = spline(x) - center (or slope * (x - xbar)).
struct SmoothTerm {
    std::string name;
    std::size_t column = 0;
    bool linear = false;            // linear term (binary predictor or too few distinct values)
    double df = 0;
    std::vector<double> knots;
    std::vector<double> knot_weights;   // final IRLS weights summed per knot
    std::vector<std::size_t> knot_counts;
    Eigen::VectorXd values;         // centered fitted values at the knots
    double lambda = SplineSmoother::infinite_lambda;
    double slope = 0;
    double xbar = 0;

    double operator()(double x) const {
        if (linear)
            return slope * (x - xbar);
        return natural_spline_eval(knots, values, x);
    }
};

struct KnotData {
    std::vector<double> knots;
    std::vector<std::size_t> index;   // knot index per row
    std::vector<std::size_t> counts;
};

inline KnotData make_knots(const Eigen::VectorXd& x) {
    KnotData k;
    std::vector<double> v(x.data(), x.data() + x.size());
    std::sort(v.begin(), v.end());
    // values within 1e-6 of the range share one knot at their mean (smooth.spline
    // rounds x at 1e-6 of the IQR); closer knots only add ill-conditioning
    const double tol = v.empty() ? 0.0 : 1e-6 * (v.back() - v.front());
    std::vector<double> leaders;
    std::vector<double> sums;
    for (double value : v) {
        if (leaders.empty() || value - leaders.back() > tol) {
            leaders.push_back(value);
            sums.push_back(0.0);
            k.counts.push_back(0);
        }
        sums.back() += value;
        ++k.counts.back();
    }
    for (std::size_t g = 0; g < leaders.size(); ++g)
        k.knots.push_back(sums[g] / static_cast<double>(k.counts[g]));
    for (Eigen::Index i = 0; i < x.size(); ++i)
        k.index.push_back(
            static_cast<std::size_t>(std::upper_bound(leaders.begin(), leaders.end(), x[i]) - leaders.begin()) - 1);
    return k;
}

/// Weighted smoothing-spline fit of y on x with the requested effective degrees
/// of freedom, centered to mean zero over the rows. `intercept` receives the
/// removed constant. Fewer than 4 distinct x values fall back to a linear term.
inline SmoothTerm fit_smoothing_spline(const Eigen::VectorXd& x, const Eigen::VectorXd& y, const Eigen::VectorXd& w,
                                       double df, double* intercept = nullptr, bool* fell_back = nullptr) {
    const auto kd = make_knots(x);
    const std::size_t nk = kd.knots.size();
    SmoothTerm term;
    term.df = df;
    std::vector<double> kw(nk, 0.0);
    Eigen::VectorXd ybar = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(nk));
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        kw[kd.index[static_cast<std::size_t>(i)]] += w[i];
        ybar[static_cast<Eigen::Index>(kd.index[static_cast<std::size_t>(i)])] += w[i] * y[i];
    }
    for (std::size_t k = 0; k < nk; ++k)
        ybar[static_cast<Eigen::Index>(k)] /= kw[k];
    if (fell_back)
        *fell_back = nk < 4;
    if (nk < 4) {
        term.linear = true;
        term.xbar = x.mean();
        double sw = w.sum(), xw = (w.array() * x.array()).sum() / sw, yw = (w.array() * y.array()).sum() / sw;
        double sxx = (w.array() * (x.array() - xw).square()).sum();
        term.slope = sxx > 0 ? (w.array() * (x.array() - xw) * (y.array() - yw)).sum() / sxx : 0.0;
        if (intercept)
            *intercept = yw + term.slope * (term.xbar - xw);
        return term;
    }
    SplineSmoother s(kd.knots, kw);
    s.set_df(df);
    Eigen::VectorXd g = s.smooth(ybar);
    // centered over the rows themselves, which may sit slightly off their merged knot
    Eigen::VectorXd rows;
    const double center = spline_at_rows(kd.knots, g, x, rows);
    term.knots = kd.knots;
    term.knot_weights = kw;
    term.knot_counts = kd.counts;
    term.values = g.array() - center;
    term.lambda = s.lambda();
    if (intercept)
        *intercept = center;
    return term;
}

// ---------------------------------------------------------------------------
// Backfitting

struct TermSpec {
    std::size_t column = 0;
    std::string name;
    bool smooth = true;
    double df = 4.0;
};

struct BackfitParams {
    int max_outer = 100;
    int max_inner = 500;
    double tol = 1e-6;
};

struct GamLogit {
    double intercept = 0;
    std::vector<SmoothTerm> terms;
    int outer_iterations = 0;
    int inner_iterations = 0;
    std::vector<std::string> fallbacks;   // smooth terms fitted linearly
    // working quantities of the final local-scoring step
    Eigen::VectorXd weights;
    Eigen::VectorXd working_response;
};

namespace detail {

/// Backfitting state for one term: knot layout and the smoother under the current weights.
struct TermState {
    const TermSpec* spec;
    KnotData kd;
    std::optional<SplineSmoother> smoother;
    bool linear = false;
    double xbar = 0;
    double slope = 0;
    Eigen::VectorXd f;   // per-row nonlinear part (centered)
    Eigen::VectorXd g;   // nonlinear part at the knots, before centering
    double center = 0;
    std::vector<double> kw;
};

// weighted least-squares line through knot-level values
inline Eigen::VectorXd knot_linear_fit(const std::vector<double>& t, const std::vector<double>& w,
                                       const Eigen::VectorXd& v) {
    double sw = 0, st = 0, sv = 0;
    for (std::size_t k = 0; k < t.size(); ++k)
        sw += w[k], st += w[k] * t[k], sv += w[k] * v[static_cast<Eigen::Index>(k)];
    const double tm = st / sw, vm = sv / sw;
    double stt = 0, stv = 0;
    for (std::size_t k = 0; k < t.size(); ++k) {
        stt += w[k] * (t[k] - tm) * (t[k] - tm);
        stv += w[k] * (t[k] - tm) * (v[static_cast<Eigen::Index>(k)] - vm);
    }
    const double b = stt > 0 ? stv / stt : 0.0;
    Eigen::VectorXd out(static_cast<Eigen::Index>(t.size()));
    for (std::size_t k = 0; k < t.size(); ++k)
        out[static_cast<Eigen::Index>(k)] = vm + b * (t[k] - tm);
    return out;
}

// nonlinear part (S - H) of the smooth of `partial`
inline void update_nonlinear(TermState& ts, const Eigen::VectorXd& x, const Eigen::VectorXd& partial,
                             const Eigen::VectorXd& w) {
    const std::size_t nk = ts.kd.knots.size();
    Eigen::VectorXd ybar = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(nk));
    for (Eigen::Index i = 0; i < x.size(); ++i)
        ybar[static_cast<Eigen::Index>(ts.kd.index[static_cast<std::size_t>(i)])] += w[i] * partial[i];
    for (std::size_t k = 0; k < nk; ++k)
        ybar[static_cast<Eigen::Index>(k)] /= ts.kw[k];
    ts.g = ts.smoother->smooth(ybar) - knot_linear_fit(ts.kd.knots, ts.kw, ybar);
    ts.center = spline_at_rows(ts.kd.knots, ts.g, x, ts.f);
}

} // namespace detail

/// Binomial additive logistic model by local scoring. The inner weighted fit is
/// modified backfitting: every cycle solves the intercept and all linear
/// components jointly, then backfits only the nonlinear parts of the smooths.
/// Plain backfitting crawls along correlated linear directions (activity
/// minutes across classes are close to collinear); both reach the same solution.
inline GamLogit backfit_binomial_gam(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                                     const std::vector<TermSpec>& specs, const BackfitParams& params = {}) {
    require_both_outcomes(y, "backfit_binomial_gam");
    const Eigen::Index n = x.rows();
    const auto p = static_cast<Eigen::Index>(specs.size());
    GamLogit out;

    std::vector<detail::TermState> states;
    Eigen::MatrixXd design(n, p + 1);   // intercept, then centered columns
    design.col(0).setOnes();
    for (const auto& spec : specs) {
        detail::TermState ts;
        ts.spec = &spec;
        const Eigen::VectorXd col = x.col(static_cast<Eigen::Index>(spec.column));
        ts.kd = make_knots(col);
        ts.linear = !spec.smooth || ts.kd.knots.size() < 4;
        if (spec.smooth && ts.kd.knots.size() < 4)
            out.fallbacks.push_back(spec.name);
        ts.xbar = col.mean();
        ts.f = Eigen::VectorXd::Zero(n);
        design.col(static_cast<Eigen::Index>(states.size()) + 1) = col.array() - ts.xbar;
        states.push_back(std::move(ts));
    }

    const double ybar = y.mean();
    Eigen::VectorXd beta = Eigen::VectorXd::Zero(p + 1);
    beta[0] = std::log(ybar / (1 - ybar));
    Eigen::VectorXd eta = Eigen::VectorXd::Constant(n, beta[0]);
    Eigen::VectorXd prob(n), w(n), z(n);
    for (Eigen::Index i = 0; i < n; ++i)
        prob[i] = logistic(eta[i]);

    double outer_delta = INFINITY;
    for (int outer = 1;; ++outer) {
        if (outer > params.max_outer)
            throw ConvergenceError("backfit_binomial_gam: local scoring did not converge in " +
                                       std::to_string(params.max_outer) + " iterations",
                                   outer_delta);
        for (Eigen::Index i = 0; i < n; ++i) {
            w[i] = std::max(prob[i] * (1 - prob[i]), 1e-10);
            z[i] = eta[i] + (y[i] - prob[i]) / w[i];
        }
        for (auto& ts : states) {
            if (ts.linear)
                continue;
            ts.kw.assign(ts.kd.knots.size(), 0.0);
            for (Eigen::Index i = 0; i < n; ++i)
                ts.kw[ts.kd.index[static_cast<std::size_t>(i)]] += w[i];
            ts.smoother.emplace(ts.kd.knots, ts.kw);
            ts.smoother->set_df(ts.spec->df);
        }
        const Eigen::VectorXd sw = w.array().sqrt();
        // minimum-norm solution keeps exactly collinear columns well defined
        const Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> wls(sw.asDiagonal() * design);

        Eigen::VectorXd nonlinear = Eigen::VectorXd::Zero(n);
        for (const auto& ts : states)
            nonlinear += ts.f;
        Eigen::VectorXd fitted = design * beta + nonlinear;
        double inner_delta = INFINITY;
        int inner = 0;
        while (inner_delta >= params.tol) {
            if (++inner > params.max_inner)
                throw ConvergenceError("backfit_binomial_gam: backfitting did not converge in " +
                                           std::to_string(params.max_inner) + " cycles",
                                       inner_delta);
            const Eigen::VectorXd before = fitted;
            beta = wls.solve((sw.array() * (z - nonlinear).array()).matrix());
            const Eigen::VectorXd lin = design * beta;
            for (std::size_t k = 0; k < states.size(); ++k) {
                auto& ts = states[k];
                if (ts.linear)
                    continue;
                nonlinear -= ts.f;
                detail::update_nonlinear(ts, x.col(static_cast<Eigen::Index>(ts.spec->column)), z - lin - nonlinear, w);
                nonlinear += ts.f;
            }
            fitted = lin + nonlinear;
            inner_delta = (fitted - before).cwiseAbs().maxCoeff();
        }
        out.inner_iterations += inner;

        eta = fitted;
        outer_delta = 0;
        for (Eigen::Index i = 0; i < n; ++i) {
            const double pr = logistic(eta[i]);
            outer_delta = std::max(outer_delta, std::abs(pr - prob[i]));
            prob[i] = pr;
        }
        out.outer_iterations = outer;
        if (outer_delta < params.tol)
            break;
    }

    // the intercept absorbs the centering constants of the nonlinear parts
    out.intercept = beta[0];
    out.weights = w;
    out.working_response = z;
    for (std::size_t k = 0; k < states.size(); ++k) {
        const auto& ts = states[k];
        SmoothTerm term;
        term.name = ts.spec->name;
        term.column = ts.spec->column;
        term.df = ts.spec->df;
        term.linear = ts.linear;
        term.xbar = ts.xbar;
        term.slope = beta[static_cast<Eigen::Index>(k) + 1];
        if (!ts.linear) {
            term.knots = ts.kd.knots;
            term.knot_weights = ts.kw;
            term.knot_counts = ts.kd.counts;
            term.lambda = ts.smoother->lambda();
            term.values.resize(static_cast<Eigen::Index>(term.knots.size()));
            for (std::size_t j = 0; j < term.knots.size(); ++j)
                term.values[static_cast<Eigen::Index>(j)] =
                    ts.g[static_cast<Eigen::Index>(j)] - ts.center + term.slope * (term.knots[j] - ts.xbar);
        }
        out.terms.push_back(std::move(term));
    }
    return out;
}

inline double linear_predictor(const GamLogit& logit, std::span<const double> row) {
    double eta = logit.intercept;
    for (const auto& t : logit.terms)
        eta += t(row[t.column]);
    return eta;
}

// ---------------------------------------------------------------------------

struct GamModel {
    Measure measure = Measure::walk400;
    CutPoints cuts;
    std::optional<ActivityClassGrid> grid;
    std::vector<std::string> feature_names;
    std::vector<TermSpec> specs;
    std::vector<GamLogit> logits;
};

inline bool is_binary_column(const Eigen::VectorXd& v) {
    return (v.array() == 0 || v.array() == 1).all();
}

/// Default term layout: binary columns linear, all others smooth with `df`.
/// `only` restricts the predictors (e.g. to an L1 model's active set).
inline std::vector<TermSpec> default_term_specs(const FeatureMatrix& fm, double df = 4.0,
                                                const std::vector<std::size_t>* only = nullptr) {
    std::vector<TermSpec> specs;
    for (std::size_t j = 0; j < fm.names.size(); ++j) {
        if (only && std::find(only->begin(), only->end(), j) == only->end())
            continue;
        const Eigen::VectorXd col = fm.values.col(static_cast<Eigen::Index>(j));
        if ((col.array() == col[0]).all())
            continue;   // constant column carries no information
        specs.push_back({j, fm.names[j], !is_binary_column(col), df});
    }
    return specs;
}

/// Additive continuation-ratio model: one backfitted logit per continuation step.
inline GamModel fit_ordinal_gam(const FeatureMatrix& fm, std::span<const int> categories,
                                const std::vector<TermSpec>& specs, const BackfitParams& params = {},
                                int k = n_categories) {
    GamModel model;
    model.feature_names = fm.names;
    model.specs = specs;
    for (auto& data : expand_continuation(categories, k)) {
        const Eigen::MatrixXd xj = select_rows(fm.values, data.rows);
        model.logits.push_back(backfit_binomial_gam(xj, data.y, specs, params));
    }
    return model;
}

inline std::vector<double> predict_probs(const GamModel& model, std::span<const double> raw) {
    if (raw.size() != model.feature_names.size())
        throw DataError("predict_probs: descriptor length does not match the GAM", "FeatureMismatch");
    std::vector<double> hazards;
    for (const auto& l : model.logits)
        hazards.push_back(logistic(linear_predictor(l, raw)));
    return continuation_probs(hazards);
}

inline Eigen::MatrixXd predict_probs(const GamModel& model, const FeatureMatrix& fm) {
    if (fm.names != model.feature_names)
        throw DataError("predict_probs: feature names differ from the GAM's", "FeatureMismatch");
    Eigen::MatrixXd out(fm.values.rows(), static_cast<Eigen::Index>(model.logits.size() + 1));
    std::vector<double> row(static_cast<std::size_t>(fm.values.cols()));
    for (Eigen::Index r = 0; r < fm.values.rows(); ++r) {
        for (Eigen::Index c = 0; c < fm.values.cols(); ++c)
            row[static_cast<std::size_t>(c)] = fm.values(r, c);
        auto p = predict_probs(model, row);
        for (std::size_t q = 0; q < p.size(); ++q)
            out(r, static_cast<Eigen::Index>(q)) = p[q];
    }
    return out;
}

// ---------------------------------------------------------------------------
// Curves

struct CurvePoint {
    double x = 0;
    double fit = 0;
    double se = 0;
};

/// Pointwise standard errors from Cov(g) = S W^-1 S' at the final IRLS weights.
inline std::vector<CurvePoint> smooth_curve(const SmoothTerm& term, std::span<const double> grid) {
    std::vector<CurvePoint> out;
    if (term.linear) {
        // the slope's variance is not retained for linear terms; report the fit only
        for (double x : grid)
            out.push_back({x, term(x), 0.0});
        return out;
    }
    SplineSmoother s(term.knots, term.knot_weights);
    s.set_lambda(term.lambda);
    const Eigen::MatrixXd sm = s.matrix();
    const auto nk = static_cast<Eigen::Index>(term.knots.size());
    Eigen::VectorXd inv_w(nk);
    for (Eigen::Index k = 0; k < nk; ++k)
        inv_w[k] = 1.0 / term.knot_weights[static_cast<std::size_t>(k)];
    const Eigen::MatrixXd cov = sm * inv_w.asDiagonal() * sm.transpose();
    for (double x : grid) {
        Eigen::VectorXd l(nk);
        for (Eigen::Index k = 0; k < nk; ++k)
            l[k] = natural_spline_eval(term.knots, Eigen::VectorXd::Unit(nk, k), x);
        const double var = l.dot(cov * l);
        out.push_back({x, term(x), std::sqrt(std::max(var, 0.0))});
    }
    return out;
}

inline std::vector<CurvePoint> smooth_curve(const GamModel& model, std::size_t logit, const std::string& predictor,
                                            std::span<const double> grid) {
    if (logit >= model.logits.size())
        throw UsageError("smooth_curve: logit index out of range");
    for (const auto& t : model.logits[logit].terms)
        if (t.name == predictor)
            return smooth_curve(t, grid);
    throw UsageError("smooth_curve: unknown predictor '" + predictor + "'");
}

/// A smooth is reported significant when its +-2 SE band excludes zero at some knot.
inline bool smooth_significant(const SmoothTerm& term) {
    if (term.linear)
        return term.slope != 0;
    auto pts = smooth_curve(term, term.knots);
    return std::any_of(pts.begin(), pts.end(), [](const CurvePoint& p) { return std::abs(p.fit) > 2 * p.se; });
}

inline void write_curve_csv(std::ostream& out, const std::string& predictor, const std::vector<CurvePoint>& pts) {
    for (const auto& p : pts)
        out << predictor << ',' << csv::format_double(p.x) << ',' << csv::format_double(p.fit) << ','
            << csv::format_double(p.se) << '\n';
}

// ---------------------------------------------------------------------------
// Serialization

inline nlohmann::json to_json(const GamModel& m) {
    nlohmann::json logits = nlohmann::json::array();
    for (const auto& l : m.logits) {
        nlohmann::json terms = nlohmann::json::array();
        for (const auto& t : l.terms) {
            nlohmann::json jt = {{"name", t.name}, {"column", t.column}, {"linear", t.linear}, {"df", t.df}};
            if (t.linear) {
                jt["slope"] = t.slope;
                jt["xbar"] = t.xbar;
            } else {
                jt["knots"] = t.knots;
                jt["knot_weights"] = t.knot_weights;
                jt["knot_counts"] = t.knot_counts;
                jt["values"] = std::vector<double>(t.values.data(), t.values.data() + t.values.size());
                jt["lambda"] = std::isfinite(t.lambda) ? nlohmann::json(t.lambda) : nlohmann::json("inf");
            }
            terms.push_back(jt);
        }
        logits.push_back({{"intercept", l.intercept},
                          {"terms", terms},
                          {"outer_iterations", l.outer_iterations},
                          {"inner_iterations", l.inner_iterations},
                          {"linear_fallbacks", l.fallbacks}});
    }
    nlohmann::json j = {{"model_type", "gam"},
                        {"measure", measure_name(m.measure)},
                        {"cut_points", {{"p25", m.cuts.p25}, {"p75", m.cuts.p75}}},
                        {"feature_names", m.feature_names},
                        {"logits", logits}};
    j["grid"] = m.grid ? m.grid->to_json() : nlohmann::json(nullptr);
    return j;
}

inline GamModel gam_from_json(const nlohmann::json& j) {
    if (j.value("model_type", "") != "gam")
        throw DataError("model file is not a GAM", "ModelFormat");
    GamModel m;
    m.measure = parse_measure(j.at("measure").get<std::string>());
    m.cuts = {j.at("cut_points").at("p25").get<double>(), j.at("cut_points").at("p75").get<double>()};
    m.feature_names = j.at("feature_names").get<std::vector<std::string>>();
    if (!j.at("grid").is_null())
        m.grid = ActivityClassGrid::from_json(j.at("grid"));
    for (const auto& jl : j.at("logits")) {
        GamLogit l;
        l.intercept = jl.at("intercept").get<double>();
        l.outer_iterations = jl.value("outer_iterations", 0);
        l.inner_iterations = jl.value("inner_iterations", 0);
        for (const auto& jt : jl.at("terms")) {
            SmoothTerm t;
            t.name = jt.at("name").get<std::string>();
            t.column = jt.at("column").get<std::size_t>();
            t.linear = jt.at("linear").get<bool>();
            t.df = jt.at("df").get<double>();
            if (t.column >= m.feature_names.size())
                throw DataError("GAM file: term column out of range", "ModelFormat");
            if (t.linear) {
                t.slope = jt.at("slope").get<double>();
                t.xbar = jt.at("xbar").get<double>();
            } else {
                t.knots = jt.at("knots").get<std::vector<double>>();
                t.knot_weights = jt.at("knot_weights").get<std::vector<double>>();
                t.knot_counts = jt.at("knot_counts").get<std::vector<std::size_t>>();
                auto v = jt.at("values").get<std::vector<double>>();
                t.values = Eigen::Map<Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
                const auto& jl_ = jt.at("lambda");
                t.lambda = jl_.is_string() ? SplineSmoother::infinite_lambda : jl_.get<double>();
            }
            l.terms.push_back(std::move(t));
        }
        m.logits.push_back(std::move(l));
    }
    return m;
}

} // namespace actiprofile
