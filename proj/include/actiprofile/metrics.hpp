#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "actiprofile/error.hpp"

namespace actiprofile {

/// Mann-Whitney AUC: (concordant + 0.5 tied) / (positives * negatives).
inline double auc(std::span<const double> scores, std::span<const int> labels) {
    if (scores.size() != labels.size())
        throw DataError("auc: scores and labels differ in length");
    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](auto a, auto b) { return scores[a] < scores[b]; });

    // sum of positive ranks with midranks for ties
    double rank_sum = 0;
    double pos = 0;
    for (std::size_t i = 0; i < order.size();) {
        std::size_t j = i;
        double tied_pos = 0;
        while (j < order.size() && scores[order[j]] == scores[order[i]]) {
            tied_pos += labels[order[j]] != 0;
            ++j;
        }
        const double midrank = 0.5 * (static_cast<double>(i + 1) + static_cast<double>(j));
        rank_sum += tied_pos * midrank;
        pos += tied_pos;
        i = j;
    }
    const double neg = static_cast<double>(scores.size()) - pos;
    if (pos == 0 || neg == 0)
        throw DataError("auc: labels contain a single class", "SingleClassLabels");
    return (rank_sum - pos * (pos + 1) / 2) / (pos * neg);
}

struct GammaCounts {
    double concordant = 0;
    double discordant = 0;
};

/// Concordant and discordant pair counts from the cross-tabulation of the two
/// variables; pairs tied in either variable are ignored.
template <class T>
GammaCounts gamma_counts(std::span<const T> a, std::span<const T> b) {
    if (a.size() != b.size())
        throw DataError("gamma: inputs differ in length");
    auto dense = [](std::span<const T> v, std::vector<int>& idx) {
        std::vector<T> u(v.begin(), v.end());
        std::sort(u.begin(), u.end());
        u.erase(std::unique(u.begin(), u.end()), u.end());
        idx.resize(v.size());
        for (std::size_t i = 0; i < v.size(); ++i)
            idx[i] = static_cast<int>(std::lower_bound(u.begin(), u.end(), v[i]) - u.begin());
        return static_cast<int>(u.size());
    };
    std::vector<int> ia, ib;
    const int ra = dense(a, ia), rb = dense(b, ib);
    std::vector<double> table(static_cast<std::size_t>(ra) * rb, 0.0);
    for (std::size_t i = 0; i < ia.size(); ++i)
        table[static_cast<std::size_t>(ia[i]) * rb + ib[i]] += 1;

    // below[i][j] = number of rows with a < i and b < j; above_right analogous for b > j
    std::vector<double> below(static_cast<std::size_t>(ra + 1) * (rb + 1), 0.0);
    auto at = [&](int i, int j) -> double& { return below[static_cast<std::size_t>(i) * (rb + 1) + j]; };
    for (int i = 0; i < ra; ++i)
        for (int j = 0; j < rb; ++j)
            at(i + 1, j + 1) = table[static_cast<std::size_t>(i) * rb + j] + at(i, j + 1) + at(i + 1, j) - at(i, j);

    GammaCounts g;
    for (int i = 0; i < ra; ++i)
        for (int j = 0; j < rb; ++j) {
            const double n = table[static_cast<std::size_t>(i) * rb + j];
            if (n == 0)
                continue;
            const double lower_left = at(i, j);
            const double lower_rows = at(i, rb);             // a < i, any b
            const double lower_rows_b_le = at(i, j + 1);     // a < i, b <= j
            const double lower_right = lower_rows - lower_rows_b_le;
            g.concordant += n * lower_left;
            g.discordant += n * lower_right;
        }
    return g;
}

/// Goodman-Kruskal Gamma (C - D) / (C + D).
template <class T>
double gamma_stat(std::span<const T> predicted, std::span<const T> truth) {
    if (predicted.size() < 2)
        throw DataError("gamma: need at least 2 rows");
    const auto g = gamma_counts(predicted, truth);
    if (g.concordant + g.discordant == 0)
        throw DegenerateGamma("gamma: every pair is tied");
    return (g.concordant - g.discordant) / (g.concordant + g.discordant);
}

inline double gamma_stat(const std::vector<int>& predicted, const std::vector<int>& truth) {
    return gamma_stat<int>(std::span<const int>(predicted), std::span<const int>(truth));
}

/// Most probable category (1-based); ties go to the lower category.
inline int argmax_category(std::span<const double> probs) {
    int best = 0;
    for (int k = 1; k < static_cast<int>(probs.size()); ++k)
        if (probs[k] > probs[best])
            best = k;
    return best + 1;
}

} // namespace actiprofile
