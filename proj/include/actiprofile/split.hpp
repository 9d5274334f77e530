#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <span>
#include <vector>

#include "actiprofile/error.hpp"
#include "actiprofile/random.hpp"

namespace actiprofile {

struct TrainTestSplit {
    std::vector<std::size_t> train;   // row indices, ascending
    std::vector<std::size_t> test;
};

/// Stratified split: the overall train size is round(fraction * n) and the
/// per-category shares are apportioned by largest remainder, so every category
/// lands within one row of `fraction`.
inline TrainTestSplit split_train_test(std::span<const int> categories, double fraction, std::uint64_t seed,
                                       int n_categories = 3) {
    if (categories.size() < 5)
        throw DataError("split_train_test: need at least 5 subjects", "CohortTooSmall");
    if (!(fraction > 0 && fraction < 1))
        throw UsageError("split_train_test: fraction must lie in (0, 1)");
    std::map<int, std::vector<std::size_t>> by_cat;
    for (std::size_t i = 0; i < categories.size(); ++i)
        by_cat[categories[i]].push_back(i);
    for (int c = 1; c <= n_categories; ++c)
        if (by_cat[c].empty())
            throw DataError("split_train_test: category " + std::to_string(c) + " is absent", "MissingCategory");

    const auto n = static_cast<double>(categories.size());
    const auto target = static_cast<std::size_t>(std::llround(fraction * n));
    std::vector<std::pair<double, int>> remainders;
    std::map<int, std::size_t> take;
    std::size_t assigned = 0;
    for (auto& [c, rows] : by_cat) {
        const double exact = fraction * static_cast<double>(rows.size());
        take[c] = static_cast<std::size_t>(std::floor(exact));
        assigned += take[c];
        remainders.emplace_back(exact - std::floor(exact), c);
    }
    std::stable_sort(remainders.begin(), remainders.end(), [](auto a, auto b) { return a.first > b.first; });
    for (std::size_t k = 0; assigned < target && k < remainders.size(); ++k, ++assigned)
        ++take[remainders[k].second];

    TrainTestSplit out;
    const SeedSeq root(seed);
    for (auto& [c, rows] : by_cat) {
        auto rng = root.with(static_cast<std::uint64_t>(c)).engine();
        std::shuffle(rows.begin(), rows.end(), rng);
        out.train.insert(out.train.end(), rows.begin(), rows.begin() + static_cast<std::ptrdiff_t>(take[c]));
        out.test.insert(out.test.end(), rows.begin() + static_cast<std::ptrdiff_t>(take[c]), rows.end());
    }
    std::sort(out.train.begin(), out.train.end());
    std::sort(out.test.begin(), out.test.end());
    return out;
}

/// Fold label (0..folds-1) per row. Rows of each category are shuffled and
/// dealt round-robin, the rotation continuing across categories.
inline std::vector<int> stratified_folds(std::span<const int> categories, int folds, std::uint64_t seed) {
    if (folds < 2)
        throw UsageError("need at least 2 folds");
    std::map<int, std::vector<std::size_t>> by_cat;
    for (std::size_t i = 0; i < categories.size(); ++i)
        by_cat[categories[i]].push_back(i);
    std::vector<int> fold(categories.size(), 0);
    const SeedSeq root(seed);
    int next = 0;
    for (auto& [c, rows] : by_cat) {
        auto rng = root.with(static_cast<std::uint64_t>(c)).engine();
        std::shuffle(rows.begin(), rows.end(), rng);
        for (auto r : rows) {
            fold[r] = next;
            next = (next + 1) % folds;
        }
    }
    return fold;
}

} // namespace actiprofile
