#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "actiprofile/changepoint.hpp"
#include "actiprofile/csv.hpp"
#include "actiprofile/error.hpp"
#include "actiprofile/ingest.hpp"

namespace actiprofile {

/// Half-open interval [lo, hi).
struct Interval {
    double lo = 0;
    double hi = 0;
    double mid() const noexcept { return 0.5 * (lo + hi); }
    bool contains(double v) const noexcept { return lo <= v && v < hi; }
    bool operator==(const Interval&) const = default;
};

struct ActivityClass {
    Interval mean;
    Interval sd;
    bool operator==(const ActivityClass&) const = default;
};

/// Rectangular tiling of (segment mean, segment SD) space anchored at zero.
/// Class index is row-major: mean bin major, SD bin minor.
class ActivityClassGrid {
public:
    ActivityClassGrid() = default;
    ActivityClassGrid(double width_mean, double width_sd, double max_mean, double max_sd)
        : width_mean_(width_mean), width_sd_(width_sd), max_mean_(max_mean), max_sd_(max_sd) {
        if (!(width_mean > 0) || !(width_sd > 0))
            throw UsageError("activity class widths must be positive");
        if (!(max_mean >= 0) || !(max_sd >= 0))
            throw DataError("segment maxima must be non-negative");
        // floor + 1 bins so that the maximum itself falls inside a half-open bin
        n_mean_ = static_cast<int>(std::floor(max_mean / width_mean)) + 1;
        n_sd_ = static_cast<int>(std::floor(max_sd / width_sd)) + 1;
    }

    double width_mean() const noexcept { return width_mean_; }
    double width_sd() const noexcept { return width_sd_; }
    double max_mean() const noexcept { return max_mean_; }
    double max_sd() const noexcept { return max_sd_; }
    int mean_bins() const noexcept { return n_mean_; }
    int sd_bins() const noexcept { return n_sd_; }
    int size() const noexcept { return n_mean_ * n_sd_; }

    ActivityClass at(int index) const {
        const int i = index / n_sd_, j = index % n_sd_;
        return {{i * width_mean_, (i + 1) * width_mean_}, {j * width_sd_, (j + 1) * width_sd_}};
    }

    /// Class containing (mean, sd); values past the outermost bins clamp to them.
    int assign(double mean, double sd) const noexcept {
        auto bin = [](double v, double w, int n) {
            const double b = std::floor(v / w);
            if (!(b >= 0))
                return 0;
            return b >= n ? n - 1 : static_cast<int>(b);
        };
        return bin(mean, width_mean_, n_mean_) * n_sd_ + bin(sd, width_sd_, n_sd_);
    }

    std::string class_name(int index) const {
        const auto c = at(index);
        return "m" + csv::format_double(c.mean.lo) + "-" + csv::format_double(c.mean.hi) + "_s" +
               csv::format_double(c.sd.lo) + "-" + csv::format_double(c.sd.hi);
    }

    std::vector<std::string> class_names() const {
        std::vector<std::string> out;
        for (int l = 0; l < size(); ++l)
            out.push_back(class_name(l));
        return out;
    }

    nlohmann::json to_json() const {
        return {{"width_mean", width_mean_}, {"width_sd", width_sd_}, {"max_mean", max_mean_},
                {"max_sd", max_sd_}, {"mean_bins", n_mean_}, {"sd_bins", n_sd_}};
    }
    static ActivityClassGrid from_json(const nlohmann::json& j) {
        return ActivityClassGrid(j.at("width_mean").get<double>(), j.at("width_sd").get<double>(),
                                 j.at("max_mean").get<double>(), j.at("max_sd").get<double>());
    }

    bool operator==(const ActivityClassGrid&) const = default;

private:
    double width_mean_ = 1, width_sd_ = 1, max_mean_ = 0, max_sd_ = 0;
    int n_mean_ = 1, n_sd_ = 1;
};

/// Grid spanning the largest mean and SD among the (training) segments.
inline ActivityClassGrid fit_grid(std::span<const Segment> segments, double width_mean, double width_sd) {
    if (segments.empty())
        throw DataError("fit_grid: no segments", "EmptySegments");
    double m = 0, s = 0;
    for (const auto& seg : segments) {
        m = std::max(m, seg.mean);
        s = std::max(s, seg.sd);
    }
    return ActivityClassGrid(width_mean, width_sd, m, s);
}

inline int assign_class(const Segment& segment, const ActivityClassGrid& grid) {
    return grid.assign(segment.mean, segment.sd);
}

struct DailyActivityProfile {
    std::string subject_id;
    std::vector<double> minutes;   // average minutes per day, one entry per class
    int n_days = 0;
};

/// a_l = (1 / K) * sum over days of the minutes spent in class l, where K is
/// the number of distinct days among the subject's segments.
inline DailyActivityProfile daily_profile(std::span<const Segment> subject_segments, const ActivityClassGrid& grid) {
    if (subject_segments.empty())
        throw DataError("daily_profile: subject has no valid days", "NoValidDays");
    DailyActivityProfile p;
    p.subject_id = subject_segments.front().subject_id;
    p.minutes.assign(grid.size(), 0.0);
    std::set<int> days;
    for (const auto& s : subject_segments) {
        if (s.subject_id != p.subject_id)
            throw DataError("daily_profile: segments from several subjects");
        days.insert(s.day_index);
        p.minutes[assign_class(s, grid)] += s.duration();
    }
    p.n_days = static_cast<int>(days.size());
    for (auto& v : p.minutes)
        v /= p.n_days;
    return p;
}

/// Segments grouped per subject, subjects in sorted order.
using SegmentsBySubject = std::map<std::string, std::vector<Segment>>;

inline SegmentsBySubject group_by_subject(std::span<const Segment> segments) {
    SegmentsBySubject out;
    for (const auto& s : segments)
        out[s.subject_id].push_back(s);
    return out;
}

inline void write_profile_csv(std::ostream& out, const std::vector<DailyActivityProfile>& profiles,
                              const ActivityClassGrid& grid) {
    out << "subject_id,class_mean_lo,class_mean_hi,class_sd_lo,class_sd_hi,avg_minutes\n";
    for (const auto& p : profiles)
        for (int l = 0; l < grid.size(); ++l) {
            const auto c = grid.at(l);
            out << p.subject_id << ',' << csv::format_double(c.mean.lo) << ',' << csv::format_double(c.mean.hi)
                << ',' << csv::format_double(c.sd.lo) << ',' << csv::format_double(c.sd.hi) << ','
                << csv::format_double(p.minutes[l]) << '\n';
        }
}

// ---------------------------------------------------------------------------
// Composite descriptor

inline const std::vector<std::string>& demographic_feature_names() {
    static const std::vector<std::string> names{"bmi", "age", "sex_male", "height_cm", "oa_incidence",
                                                "oa_progression"};
    return names;
}

inline constexpr int n_demographic_features = 6;

/// Demographics followed by the activity profile. Sex is 1 for male, 0 for
/// female; OA status becomes two indicators with control as reference.
struct CompositeDescriptor {
    std::string subject_id;
    std::vector<double> values;
};

inline CompositeDescriptor composite_descriptor(const DailyActivityProfile& profile, const Demographics& d) {
    if (profile.subject_id != d.subject_id)
        throw DataError("composite_descriptor: subject mismatch " + profile.subject_id + " / " + d.subject_id);
    CompositeDescriptor c;
    c.subject_id = d.subject_id;
    c.values = {d.bmi,
                d.age,
                d.sex == Sex::male ? 1.0 : 0.0,
                d.height_cm,
                d.oa_status == OaStatus::incidence ? 1.0 : 0.0,
                d.oa_status == OaStatus::progression ? 1.0 : 0.0};
    c.values.insert(c.values.end(), profile.minutes.begin(), profile.minutes.end());
    return c;
}

/// Per-column centering and scaling learned from training rows.
struct Standardizer {
    std::vector<double> mean;
    std::vector<double> sd;   // population sd; constant columns keep sd = 1

    static Standardizer fit(const Eigen::MatrixXd& x) {
        Standardizer s;
        const auto n = static_cast<double>(x.rows());
        for (Eigen::Index j = 0; j < x.cols(); ++j) {
            const double mu = x.col(j).sum() / n;
            const double var = (x.col(j).array() - mu).square().sum() / n;
            s.mean.push_back(mu);
            s.sd.push_back(var > 1e-24 ? std::sqrt(var) : 1.0);
        }
        return s;
    }

    Eigen::MatrixXd apply(const Eigen::MatrixXd& x) const {
        if (static_cast<std::size_t>(x.cols()) != mean.size())
            throw DataError("standardizer: column count mismatch", "FeatureMismatch");
        Eigen::MatrixXd out(x.rows(), x.cols());
        for (Eigen::Index j = 0; j < x.cols(); ++j)
            out.col(j) = (x.col(j).array() - mean[j]) / sd[j];
        return out;
    }

    nlohmann::json to_json() const { return {{"mean", mean}, {"sd", sd}}; }
    static Standardizer from_json(const nlohmann::json& j) {
        return {j.at("mean").get<std::vector<double>>(), j.at("sd").get<std::vector<double>>()};
    }
};

/// Raw descriptor rows for a set of subjects.
struct FeatureMatrix {
    std::vector<std::string> subject_ids;
    std::vector<std::string> names;
    Eigen::MatrixXd values;

    /// Demographic block only.
    FeatureMatrix demographics_only() const {
        FeatureMatrix out{subject_ids,
                          std::vector<std::string>(names.begin(), names.begin() + n_demographic_features),
                          values.leftCols(n_demographic_features)};
        return out;
    }

    FeatureMatrix rows(std::span<const std::size_t> idx) const {
        FeatureMatrix out;
        out.names = names;
        out.values.resize(static_cast<Eigen::Index>(idx.size()), values.cols());
        for (std::size_t r = 0; r < idx.size(); ++r) {
            out.subject_ids.push_back(subject_ids[idx[r]]);
            out.values.row(static_cast<Eigen::Index>(r)) = values.row(static_cast<Eigen::Index>(idx[r]));
        }
        return out;
    }
};

/// Builds descriptors for `subjects` (each must have segments and demographics).
inline FeatureMatrix build_features(const std::vector<std::string>& subjects, const SegmentsBySubject& segments,
                                    const std::map<std::string, Demographics>& demographics,
                                    const ActivityClassGrid& grid) {
    FeatureMatrix fm;
    fm.subject_ids = subjects;
    fm.names = demographic_feature_names();
    for (auto& n : grid.class_names())
        fm.names.push_back(n);
    fm.values.resize(static_cast<Eigen::Index>(subjects.size()), static_cast<Eigen::Index>(fm.names.size()));
    std::vector<std::string> missing;
    for (std::size_t r = 0; r < subjects.size(); ++r) {
        auto d = demographics.find(subjects[r]);
        auto s = segments.find(subjects[r]);
        if (d == demographics.end()) {
            missing.push_back(subjects[r]);
            continue;
        }
        if (s == segments.end())
            throw DataError("no valid days for subject " + subjects[r], "NoValidDays");
        auto desc = composite_descriptor(daily_profile(s->second, grid), d->second);
        fm.values.row(static_cast<Eigen::Index>(r)) =
            Eigen::Map<const Eigen::RowVectorXd>(desc.values.data(), static_cast<Eigen::Index>(desc.values.size()));
    }
    if (!missing.empty()) {
        std::string list;
        for (const auto& m : missing)
            list += (list.empty() ? "" : ", ") + m;
        throw DataError("missing demographics for: " + list, "MissingDemographics");
    }
    return fm;
}

inline void write_feature_csv(std::ostream& out, const FeatureMatrix& fm) {
    out << "subject_id";
    for (const auto& n : fm.names)
        out << ',' << n;
    out << '\n';
    for (Eigen::Index r = 0; r < fm.values.rows(); ++r) {
        out << fm.subject_ids[static_cast<std::size_t>(r)];
        for (Eigen::Index c = 0; c < fm.values.cols(); ++c)
            out << ',' << csv::format_double(fm.values(r, c));
        out << '\n';
    }
}

inline FeatureMatrix parse_feature_csv(std::istream& in) {
    FeatureMatrix fm;
    std::string header;
    if (!std::getline(in, header))
        throw ParseError(1, "missing header");
    auto cols = csv::split(header);
    if (cols.empty() || cols[0] != "subject_id")
        throw ParseError(1, "feature header must start with subject_id");
    for (std::size_t i = 1; i < cols.size(); ++i)
        fm.names.emplace_back(cols[i]);
    csv::Reader reader(in);
    std::vector<std::vector<double>> rows;
    std::vector<std::string_view> f;
    while (reader.next(f)) {
        const auto line = reader.line_number() + 1;
        if (f.size() != cols.size())
            throw ParseError(line, "wrong field count");
        fm.subject_ids.emplace_back(f[0]);
        std::vector<double> row;
        for (std::size_t i = 1; i < f.size(); ++i)
            row.push_back(csv::parse_number<double>(f[i], line, "feature value"));
        rows.push_back(std::move(row));
    }
    fm.values.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(fm.names.size()));
    for (std::size_t r = 0; r < rows.size(); ++r)
        for (std::size_t c = 0; c < rows[r].size(); ++c)
            fm.values(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = rows[r][c];
    return fm;
}

// ---------------------------------------------------------------------------

struct ChebyshevBound {
    double probability = 0;   // lower bound on P(|X - mu| < k sigma)
    double lo = 0;
    double hi = 0;
};

/// Chebyshev interval for counts in an activity class, taking the interval
/// midpoints as mean and SD.
inline ChebyshevBound chebyshev_bound(const ActivityClass& cls, double k) {
    if (!(k > 1))
        throw UsageError("chebyshev_bound: k must exceed 1");
    const double mu = cls.mean.mid();
    const double sigma = cls.sd.mid();
    return {1.0 - 1.0 / (k * k), mu - k * sigma, mu + k * sigma};
}

} // namespace actiprofile
