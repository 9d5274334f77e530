#pragma once

// Hierarchical divisive change-point segmentation with the energy divergence
// statistic. The statistic for a split of z into x = z[0, tau) and y = z[tau, n) is
//
//   Q = m n / (m + n) * ( 2/(m n) sum |x_i - y_j|^a
//                         - C(m,2)^-1 sum_{i<i'} |x_i - x_i'|^a
//                         - C(n,2)^-1 sum_{j<j'} |y_j - y_j'|^a )
//
// For a = 1 the within-prefix sums are maintained with a Fenwick tree over value
// ranks, so one scan over all split points is O(n log n). Other exponents fall
// back to the O(n^2) incremental scan.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "actiprofile/error.hpp"
#include "actiprofile/ingest.hpp"
#include "actiprofile/random.hpp"

namespace actiprofile {

struct CpParams {
    double alpha = 1.0;
    int min_segment_size = 10;
    int n_permutations = 199;
    double significance = 0.05;
    std::uint64_t seed = 20240101;

    void validate() const {
        if (!(alpha > 0 && alpha < 2))
            throw UsageError("changepoint alpha must lie in (0, 2)");
        if (min_segment_size < 2)
            throw UsageError("min_segment_size must be at least 2");
        if (n_permutations < 19)
            throw UsageError("n_permutations must be at least 19");
        if (!(significance > 0 && significance < 1))
            throw UsageError("significance must lie in (0, 1)");
    }
};

struct Segment {
    std::string subject_id;
    int day_index = 0;
    int start = 0;   // wear-minute positions, half-open
    int end = 0;
    double mean = 0;
    double sd = 0;
    int duration() const noexcept { return end - start; }
};

namespace detail {

inline double pair_distance(double a, double b, double alpha) {
    const double d = std::abs(a - b);
    return alpha == 1.0 ? d : std::pow(d, alpha);
}

/// Q from the three pair sums; shared by every route so that equal sums give equal Q.
inline double scaled_divergence(double m, double n, double cross, double within_left, double within_right) {
    const double e = 2.0 / (m * n) * cross - within_left / (m * (m - 1) / 2) -
                     within_right / (n * (n - 1) / 2);
    return m * n / (m + n) * e;
}

class Fenwick {
public:
    explicit Fenwick(std::size_t n) : nodes_(n + 1) {}

    void add(std::size_t rank, double value) {
        for (std::size_t i = rank + 1; i < nodes_.size(); i += i & (~i + 1)) {
            nodes_[i].count += 1;
            nodes_[i].sum += value;
        }
    }
    /// (count, sum) of inserted values with rank <= `rank`.
    std::pair<std::int64_t, double> prefix(std::size_t rank) const {
        std::int64_t c = 0;
        double s = 0;
        for (std::size_t i = rank + 1; i > 0; i -= i & (~i + 1)) {
            c += nodes_[i].count;
            s += nodes_[i].sum;
        }
        return {c, s};
    }
    void clear() { std::fill(nodes_.begin(), nodes_.end(), Node{}); }

private:
    struct Node {
        std::int64_t count = 0;
        double sum = 0;
    };
    std::vector<Node> nodes_;
};

/// Sequence prepared for repeated scans: values, dense ranks, and for each rank
/// the summed distance to every element of the sequence.
struct RankedSequence {
    std::vector<double> values;
    std::vector<std::uint32_t> ranks;
    std::vector<double> distance_to_all;   // by rank
    double within_total = 0;               // sum over all pairs
    std::size_t n_ranks = 0;

    explicit RankedSequence(std::span<const double> x) : values(x.begin(), x.end()), ranks(x.size()) {
        std::vector<double> sorted(values);
        std::sort(sorted.begin(), sorted.end());
        std::vector<double> distinct(sorted);
        distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
        n_ranks = distinct.size();
        for (std::size_t i = 0; i < values.size(); ++i)
            ranks[i] = static_cast<std::uint32_t>(
                std::lower_bound(distinct.begin(), distinct.end(), values[i]) - distinct.begin());

        const double n = static_cast<double>(sorted.size());
        double total = 0;
        for (double v : sorted)
            total += v;
        distance_to_all.resize(n_ranks);
        double below_sum = 0;
        std::size_t below = 0;
        for (std::size_t r = 0; r < n_ranks; ++r) {
            const double v = distinct[r];
            while (below < sorted.size() && sorted[below] < v)
                below_sum += sorted[below++];
            const double c = static_cast<double>(below);
            distance_to_all[r] = v * c - below_sum + (total - below_sum) - v * (n - c);
        }
        for (auto r : ranks)
            within_total += distance_to_all[r];
        within_total /= 2;
    }
};

struct SplitScan {
    std::vector<double> prefix_within;   // [tau] = within-pair sum of x[0, tau)
    std::vector<double> suffix_within;   // [tau] = within-pair sum of x[tau, n)
};

/// alpha = 1: one pass; the distance from x_t to everything before it comes from
/// the tree, to everything after it from distance_to_all.
inline void scan_l1(const std::vector<double>& v, const std::vector<std::uint32_t>& r, const RankedSequence& seq,
                    SplitScan& out, Fenwick& tree) {
    const std::size_t n = v.size();
    out.prefix_within.resize(n + 1);
    out.suffix_within.resize(n + 1);
    out.prefix_within[0] = 0;
    out.suffix_within[0] = seq.within_total;
    tree.clear();
    double total = 0, cross = 0;
    for (std::size_t t = 0; t < n; ++t) {
        auto [c_le, s_le] = tree.prefix(r[t]);
        const double x = v[t];
        const double k = static_cast<double>(t);
        const double before = x * static_cast<double>(c_le) - s_le + (total - s_le) -
                              x * (k - static_cast<double>(c_le));
        const double after = seq.distance_to_all[r[t]] - before;
        out.prefix_within[t + 1] = out.prefix_within[t] + before;
        cross += after - before;
        out.suffix_within[t + 1] = seq.within_total - out.prefix_within[t + 1] - cross;
        tree.add(r[t], x);
        total += x;
    }
}

inline void scan_general(const std::vector<double>& v, double alpha, SplitScan& out) {
    const std::size_t n = v.size();
    out.prefix_within.assign(n + 1, 0.0);
    out.suffix_within.assign(n + 1, 0.0);
    for (std::size_t t = 0; t < n; ++t) {
        double acc = 0;
        for (std::size_t i = 0; i < t; ++i)
            acc += pair_distance(v[t], v[i], alpha);
        out.prefix_within[t + 1] = out.prefix_within[t] + acc;
    }
    for (std::size_t t = n; t-- > 0;) {
        double acc = 0;
        for (std::size_t i = t + 1; i < n; ++i)
            acc += pair_distance(v[t], v[i], alpha);
        out.suffix_within[t] = out.suffix_within[t + 1] + acc;
    }
}

} // namespace detail

struct SplitResult {
    int tau = 0;
    double q = 0;
};

/// Scaled energy divergence between two samples, each of size at least 2.
inline double divergence_stat(std::span<const double> left, std::span<const double> right, double alpha) {
    if (left.size() < 2 || right.size() < 2)
        throw DataError("divergence_stat: each side needs at least 2 values", "SegmentTooShort");
    double cross = 0, wl = 0, wr = 0;
    for (double a : left)
        for (double b : right)
            cross += detail::pair_distance(a, b, alpha);
    for (std::size_t i = 0; i < left.size(); ++i)
        for (std::size_t j = i + 1; j < left.size(); ++j)
            wl += detail::pair_distance(left[i], left[j], alpha);
    for (std::size_t i = 0; i < right.size(); ++i)
        for (std::size_t j = i + 1; j < right.size(); ++j)
            wr += detail::pair_distance(right[i], right[j], alpha);
    return detail::scaled_divergence(static_cast<double>(left.size()), static_cast<double>(right.size()),
                                     cross, wl, wr);
}

namespace detail {

inline SplitResult argmax_split(const SplitScan& scan, std::size_t n, int min_size) {
    const double total = scan.prefix_within[n];
    SplitResult best{-1, 0};
    for (std::size_t tau = static_cast<std::size_t>(min_size); tau + static_cast<std::size_t>(min_size) <= n; ++tau) {
        const double wl = scan.prefix_within[tau];
        const double wr = scan.suffix_within[tau];
        const double q = scaled_divergence(static_cast<double>(tau), static_cast<double>(n - tau),
                                           total - wl - wr, wl, wr);
        if (best.tau < 0 || q > best.q)
            best = {static_cast<int>(tau), q};
    }
    return best;
}

/// Reusable scratch space for repeated split scans over one sequence.
class SplitSearcher {
public:
    SplitSearcher(std::span<const double> x, const CpParams& params)
        : seq_(x), params_(params), tree_(seq_.n_ranks) {}

    std::size_t size() const noexcept { return seq_.values.size(); }

    SplitResult best() { return scan(seq_.values, seq_.ranks); }

    /// Max Q of the unpermuted sequence, computed like best_permuted's so the
    /// two can be compared directly.
    double max_q_fast() { return fast_max(seq_.values, seq_.ranks); }

    /// Max Q over splits of a random permutation of the sequence.
    double max_q_permuted(std::mt19937_64& rng) {
        permute(rng);
        return fast_max(pv_, pr_);
    }

    /// Best split of a random permutation of the sequence.
    SplitResult best_permuted(std::mt19937_64& rng) {
        permute(rng);
        return scan(pv_, pr_);
    }

private:
    void permute(std::mt19937_64& rng) {
        if (order_.empty()) {
            order_.resize(size());
            pv_.resize(size());
            pr_.resize(size());
        }
        std::iota(order_.begin(), order_.end(), 0);
        std::shuffle(order_.begin(), order_.end(), rng);
        for (std::size_t i = 0; i < order_.size(); ++i) {
            pv_[i] = seq_.values[order_[i]];
            pr_[i] = seq_.ranks[order_[i]];
        }
    }

    // Q(tau) = (2/n) cross - b[tau] within_left - c[tau] within_right
    double fast_max(const std::vector<double>& v, const std::vector<std::uint32_t>& r) {
        if (params_.alpha == 1.0)
            scan_l1(v, r, seq_, scratch_, tree_);
        else
            scan_general(v, params_.alpha, scratch_);
        const std::size_t n = v.size();
        const auto lo = static_cast<std::size_t>(params_.min_segment_size);
        if (coef_b_.empty()) {
            coef_b_.assign(n + 1, 0.0);
            coef_c_.assign(n + 1, 0.0);
            const double nd = static_cast<double>(n);
            for (std::size_t tau = lo; tau + lo <= n; ++tau) {
                const double m = static_cast<double>(tau), k = nd - m;
                coef_b_[tau] = 2.0 * k / (nd * (m - 1));
                coef_c_[tau] = 2.0 * m / (nd * (k - 1));
            }
        }
        const double total = scratch_.prefix_within[n];
        const double a = 2.0 / static_cast<double>(n);
        double best = -INFINITY;
        for (std::size_t tau = lo; tau + lo <= n; ++tau) {
            const double wl = scratch_.prefix_within[tau], wr = scratch_.suffix_within[tau];
            best = std::max(best, a * (total - wl - wr) - coef_b_[tau] * wl - coef_c_[tau] * wr);
        }
        return best;
    }

    SplitResult scan(const std::vector<double>& v, const std::vector<std::uint32_t>& r) {
        if (params_.alpha == 1.0)
            scan_l1(v, r, seq_, scratch_, tree_);
        else
            scan_general(v, params_.alpha, scratch_);
        return argmax_split(scratch_, v.size(), params_.min_segment_size);
    }

    RankedSequence seq_;
    const CpParams& params_;
    Fenwick tree_;
    SplitScan scratch_;
    std::vector<std::size_t> order_;
    std::vector<double> pv_;
    std::vector<std::uint32_t> pr_;
    std::vector<double> coef_b_, coef_c_;
};

} // namespace detail

/// Split point maximizing the divergence over tau in [min, n - min]; ties go to the smallest tau.
inline SplitResult best_split(std::span<const double> x, const CpParams& params) {
    const auto n = x.size();
    if (n < 2 * static_cast<std::size_t>(params.min_segment_size))
        throw NoAdmissibleSplit("best_split: sequence of length " + std::to_string(n) +
                                " is shorter than twice the minimum segment size");
    detail::SplitSearcher searcher(x, params);
    return searcher.best();
}

/// Permutation p-value (1 + #{Q_perm >= q_obs}) / (1 + B). The caller supplies the
/// generator; segment_day derives one stream per (subject, day, piece).
inline double permutation_test(std::span<const double> x, int tau, double q_obs, const CpParams& params,
                               std::mt19937_64& rng) {
    (void)tau;
    detail::SplitSearcher searcher(x, params);
    // q_obs is compared on the permutation scale when it is this sequence's own maximum
    if (x.size() >= 2 * static_cast<std::size_t>(params.min_segment_size) && q_obs == searcher.best().q)
        q_obs = searcher.max_q_fast();
    int exceed = 0;
    for (int b = 0; b < params.n_permutations; ++b)
        if (searcher.max_q_permuted(rng) >= q_obs)
            ++exceed;
    return (1.0 + exceed) / (1.0 + params.n_permutations);
}

inline double permutation_test(std::span<const double> x, int tau, double q_obs, const CpParams& params) {
    auto rng = SeedSeq(params.seed).engine();
    return permutation_test(x, tau, q_obs, params, rng);
}

namespace detail {

/// Same decision as permutation_test(...) <= significance, but stops as soon as
/// the exceedance count rules significance out.
inline bool permutation_significant(SplitSearcher& searcher, const CpParams& params, std::mt19937_64& rng) {
    const double q_obs = searcher.max_q_fast();
    const int B = params.n_permutations;
    // significant iff 1 + exceed <= significance * (1 + B)
    const double budget = params.significance * (1.0 + B);
    int exceed = 0;
    for (int b = 0; b < B; ++b) {
        if (searcher.max_q_permuted(rng) >= q_obs) {
            ++exceed;
            if (1.0 + exceed > budget)
                return false;
        }
    }
    return 1.0 + exceed <= budget;
}

inline void finish_segment(std::span<const double> x, Segment& s) {
    const auto n = static_cast<double>(s.duration());
    double sum = 0;
    for (int i = s.start; i < s.end; ++i)
        sum += x[i];
    s.mean = sum / n;
    double ss = 0;
    for (int i = s.start; i < s.end; ++i)
        ss += (x[i] - s.mean) * (x[i] - s.mean);
    s.sd = n > 1 ? std::sqrt(ss / (n - 1)) : 0.0;
}

/// Hierarchical divisive segmentation of one contiguous run x[begin, end).
inline void segment_run(std::span<const double> x, int begin, int end, const CpParams& params,
                        const SeedSeq& stream, std::vector<std::pair<int, int>>& out) {
    struct Piece {
        int begin, end;
        SplitResult split;
        bool candidate;
    };
    auto make_piece = [&](int b, int e) {
        Piece p{b, e, {}, e - b >= 2 * params.min_segment_size};
        if (p.candidate)
            p.split = best_split(x.subspan(b, e - b), params);
        return p;
    };

    std::vector<Piece> pieces{make_piece(begin, end)};
    for (;;) {
        // untested piece with the largest divergence; ties to the earliest piece
        int pick = -1;
        for (int i = 0; i < static_cast<int>(pieces.size()); ++i)
            if (pieces[i].candidate && (pick < 0 || pieces[i].split.q > pieces[pick].split.q))
                pick = i;
        if (pick < 0)
            break;
        Piece& p = pieces[pick];
        SplitSearcher searcher(x.subspan(p.begin, p.end - p.begin), params);
        auto rng = stream.with(static_cast<std::uint64_t>(p.begin)).with(static_cast<std::uint64_t>(p.end)).engine();
        if (!permutation_significant(searcher, params, rng)) {
            p.candidate = false;
            continue;
        }
        const int cut = p.begin + p.split.tau;
        Piece left = make_piece(p.begin, cut);
        Piece right = make_piece(cut, p.end);
        pieces[pick] = left;
        pieces.insert(pieces.begin() + pick + 1, right);
    }
    for (const auto& p : pieces)
        out.emplace_back(p.begin, p.end);
}

} // namespace detail

/// Segments the wear minutes of one day. Non-wear minutes are excised; each
/// contiguous wear run is segmented on its own. Positions are indices into the
/// day's wear-only sequence.
inline std::vector<Segment> segment_day(const MinuteTrace& trace, const CpParams& params) {
    params.validate();
    std::vector<double> x;
    std::vector<std::pair<int, int>> runs;
    for (int m = 0; m < static_cast<int>(trace.counts.size());) {
        if (!trace.wear[m]) {
            ++m;
            continue;
        }
        const int run_begin = static_cast<int>(x.size());
        while (m < static_cast<int>(trace.counts.size()) && trace.wear[m])
            x.push_back(static_cast<double>(trace.counts[m++]));
        runs.emplace_back(run_begin, static_cast<int>(x.size()));
    }

    const SeedSeq stream = SeedSeq(params.seed).with(trace.subject_id).with(static_cast<std::uint64_t>(trace.day_index));
    std::vector<std::pair<int, int>> bounds;
    for (auto [b, e] : runs)
        detail::segment_run(x, b, e, params, stream, bounds);

    std::vector<Segment> out;
    out.reserve(bounds.size());
    for (auto [b, e] : bounds) {
        Segment s{trace.subject_id, trace.day_index, b, e, 0, 0};
        detail::finish_segment(x, s);
        out.push_back(s);
    }
    return out;
}

/// Maps wear-minute positions of a day back to clock minutes.
inline std::vector<int> wear_positions_to_clock(const MinuteTrace& trace) {
    std::vector<int> clock;
    for (int m = 0; m < static_cast<int>(trace.wear.size()); ++m)
        if (trace.wear[m])
            clock.push_back(m);
    return clock;
}

inline void write_segment_csv(std::ostream& out, const std::vector<Segment>& segments) {
    out << "subject_id,day_index,start,end,mean,sd,duration\n";
    for (const auto& s : segments)
        out << s.subject_id << ',' << s.day_index << ',' << s.start << ',' << s.end << ','
            << csv::format_double(s.mean) << ',' << csv::format_double(s.sd) << ',' << s.duration() << '\n';
}

inline std::vector<Segment> parse_segment_csv(std::istream& in) {
    csv::Reader reader(in);
    reader.expect_header({"subject_id", "day_index", "start", "end", "mean", "sd", "duration"});
    std::vector<Segment> out;
    std::vector<std::string_view> f;
    while (reader.next(f)) {
        const auto line = reader.line_number();
        if (f.size() != 7)
            throw ParseError(line, "expected 7 fields, got " + std::to_string(f.size()));
        Segment s;
        s.subject_id = std::string(f[0]);
        s.day_index = csv::parse_number<int>(f[1], line, "day_index");
        s.start = csv::parse_number<int>(f[2], line, "start");
        s.end = csv::parse_number<int>(f[3], line, "end");
        s.mean = csv::parse_number<double>(f[4], line, "mean");
        s.sd = csv::parse_number<double>(f[5], line, "sd");
        const int duration = csv::parse_number<int>(f[6], line, "duration");
        if (s.end <= s.start || duration != s.end - s.start)
            throw ParseError(line, "inconsistent segment bounds");
        if (s.mean < 0 || s.sd < 0)
            throw ParseError(line, "negative segment mean or sd");
        out.push_back(std::move(s));
    }
    return out;
}

} // namespace actiprofile
