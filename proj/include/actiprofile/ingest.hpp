#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "actiprofile/csv.hpp"
#include "actiprofile/error.hpp"

namespace actiprofile {

inline constexpr int minutes_per_day = 1440;

/// One subject-day of minute-level activity counts.
struct MinuteTrace {
    std::string subject_id;
    int day_index = 0;
    std::vector<std::int32_t> counts = std::vector<std::int32_t>(minutes_per_day, 0);
    std::vector<bool> wear = std::vector<bool>(minutes_per_day, true);

    int wear_minutes() const {
        return static_cast<int>(std::count(wear.begin(), wear.end(), true));
    }
};

enum class Sex { female = 0, male = 1 };
enum class OaStatus { control, incidence, progression };

struct Demographics {
    std::string subject_id;
    double bmi = 0;
    double age = 0;
    Sex sex = Sex::female;
    double height_cm = 0;
    OaStatus oa_status = OaStatus::control;
};

/// One line of the filter report.
struct FilterEvent {
    enum class Kind { filled_gap, dropped_day, no_valid_days };
    Kind kind;
    std::string subject_id;
    int day_index = -1;
    int minute = -1;   // filled_gap: first missing minute
    int length = 0;    // filled_gap: run length; dropped_day: wear minutes
};

inline nlohmann::json to_json(const FilterEvent& e) {
    nlohmann::json j;
    switch (e.kind) {
    case FilterEvent::Kind::filled_gap:
        j = {{"event", "filled_gap"}, {"subject_id", e.subject_id}, {"day_index", e.day_index},
             {"start_minute", e.minute}, {"length", e.length}};
        break;
    case FilterEvent::Kind::dropped_day:
        j = {{"event", "dropped_day"}, {"subject_id", e.subject_id}, {"day_index", e.day_index},
             {"wear_minutes", e.length}};
        break;
    case FilterEvent::Kind::no_valid_days:
        j = {{"event", "no_valid_days"}, {"subject_id", e.subject_id}};
        break;
    }
    return j;
}

inline void write_filter_report(std::ostream& out, const std::vector<FilterEvent>& events) {
    for (const auto& e : events)
        out << to_json(e).dump() << '\n';
}

struct ParsedMinutes {
    std::vector<MinuteTrace> traces;   // sorted by (subject_id, day_index)
    std::vector<FilterEvent> gaps;
};

/// Parses `subject_id,day_index,minute,counts`. Minutes absent from the file
/// are filled with zero counts and reported as gaps; wear is left all-true.
inline ParsedMinutes parse_minute_csv(std::istream& in) {
    csv::Reader reader(in);
    reader.expect_header({"subject_id", "day_index", "minute", "counts"});

    struct Slot {
        MinuteTrace trace;
        std::vector<bool> seen = std::vector<bool>(minutes_per_day, false);
    };
    std::map<std::pair<std::string, int>, Slot> slots;

    std::vector<std::string_view> f;
    while (reader.next(f)) {
        const auto line = reader.line_number();
        if (f.size() != 4)
            throw ParseError(line, "expected 4 fields, got " + std::to_string(f.size()));
        if (f[0].empty())
            throw ParseError(line, "empty subject_id");
        const int day = csv::parse_number<int>(f[1], line, "day_index");
        const int minute = csv::parse_number<int>(f[2], line, "minute");
        const auto count = csv::parse_number<std::int64_t>(f[3], line, "counts");
        if (day < 0)
            throw ParseError(line, "negative day_index");
        if (minute < 0 || minute >= minutes_per_day)
            throw ParseError(line, "minute out of range 0..1439");
        if (count < 0)
            throw ParseError(line, "negative count");
        if (count > INT32_MAX)
            throw ParseError(line, "count too large");

        auto [it, inserted] = slots.try_emplace({std::string(f[0]), day});
        Slot& slot = it->second;
        if (inserted) {
            slot.trace.subject_id = std::string(f[0]);
            slot.trace.day_index = day;
        }
        if (slot.seen[minute])
            throw ParseError(line, "duplicate minute " + std::to_string(minute) + " for subject " +
                                       std::string(f[0]) + " day " + std::to_string(day));
        slot.seen[minute] = true;
        slot.trace.counts[minute] = static_cast<std::int32_t>(count);
    }

    ParsedMinutes out;
    out.traces.reserve(slots.size());
    for (auto& [key, slot] : slots) {
        for (int m = 0; m < minutes_per_day;) {
            if (slot.seen[m]) {
                ++m;
                continue;
            }
            int start = m;
            while (m < minutes_per_day && !slot.seen[m])
                ++m;
            out.gaps.push_back({FilterEvent::Kind::filled_gap, key.first, key.second, start, m - start});
        }
        out.traces.push_back(std::move(slot.trace));
    }
    return out;
}

inline void write_minute_csv(std::ostream& out, const std::vector<MinuteTrace>& traces) {
    out << "subject_id,day_index,minute,counts\n";
    for (const auto& t : traces)
        for (int m = 0; m < minutes_per_day; ++m)
            out << t.subject_id << ',' << t.day_index << ',' << m << ',' << t.counts[m] << '\n';
}

/// Non-wear rule parameters: zero runs longer than `min_window - 1` minutes,
/// bridged by short low-count interruptions.
struct NonwearParams {
    int min_window = 91;
    int max_interruption = 2;
    int interruption_ceiling = 100;   // interrupted minutes must stay strictly below this
};

/// Marks every minute inside a qualifying non-wear window. Windows start and
/// end on zero counts; interior non-zero runs of at most `max_interruption`
/// minutes, each below `interruption_ceiling`, do not break a window.
inline MinuteTrace detect_nonwear(MinuteTrace trace, const NonwearParams& params = {}) {
    const auto& c = trace.counts;
    const int n = static_cast<int>(c.size());
    trace.wear.assign(n, true);

    int i = 0;
    while (i < n) {
        if (c[i] != 0) {
            ++i;
            continue;
        }
        // chain of zero runs joined by bridgeable interruptions
        const int start = i;
        int end = i;   // one past the last zero in the chain
        int j = i;
        for (;;) {
            while (j < n && c[j] == 0)
                ++j;
            end = j;
            int k = j;
            bool low = true;
            while (k < n && c[k] != 0 && k - j < params.max_interruption + 1) {
                low = low && c[k] < params.interruption_ceiling;
                ++k;
            }
            const bool bridged = k < n && c[k] == 0 && k > j && low && k - j <= params.max_interruption;
            if (!bridged)
                break;
            j = k;
        }
        if (end - start >= params.min_window)
            std::fill(trace.wear.begin() + start, trace.wear.begin() + end, false);
        i = end;
    }
    return trace;
}

struct ValidDays {
    std::vector<MinuteTrace> kept;
    std::vector<FilterEvent> events;
};

/// Keeps days with at least `min_wear_minutes` wear minutes (inclusive).
/// Traces may span several subjects; each subject left without a valid day is reported.
inline ValidDays valid_days(std::vector<MinuteTrace> traces, int min_wear_minutes = 600) {
    ValidDays out;
    std::map<std::string, int> kept_per_subject;
    for (auto& t : traces) {
        auto& kept = kept_per_subject[t.subject_id];
        const int wear = t.wear_minutes();
        if (wear >= min_wear_minutes) {
            ++kept;
            out.kept.push_back(std::move(t));
        } else {
            out.events.push_back({FilterEvent::Kind::dropped_day, t.subject_id, t.day_index, -1, wear});
        }
    }
    for (const auto& [id, kept] : kept_per_subject)
        if (kept == 0)
            out.events.push_back({FilterEvent::Kind::no_valid_days, id});
    return out;
}

// ---------------------------------------------------------------------------
// Demographics and responses

inline std::string_view to_string(OaStatus s) {
    switch (s) {
    case OaStatus::control: return "control";
    case OaStatus::incidence: return "incidence";
    case OaStatus::progression: return "progression";
    }
    return "control";
}

/// Parses `subject_id,bmi,age,sex,height_cm,oa_status`; result sorted by subject.
inline std::vector<Demographics> parse_demographics_csv(std::istream& in) {
    csv::Reader reader(in);
    reader.expect_header({"subject_id", "bmi", "age", "sex", "height_cm", "oa_status"});
    std::map<std::string, Demographics> rows;
    std::vector<std::string_view> f;
    while (reader.next(f)) {
        const auto line = reader.line_number();
        if (f.size() != 6)
            throw ParseError(line, "expected 6 fields, got " + std::to_string(f.size()));
        Demographics d;
        d.subject_id = std::string(f[0]);
        if (d.subject_id.empty())
            throw ParseError(line, "empty subject_id");
        d.bmi = csv::parse_number<double>(f[1], line, "bmi");
        d.age = csv::parse_number<double>(f[2], line, "age");
        d.height_cm = csv::parse_number<double>(f[4], line, "height_cm");
        if (!(d.bmi > 0) || !(d.age > 0) || !(d.height_cm > 0))
            throw ParseError(line, "bmi, age and height_cm must be positive");
        if (f[3] == "M")
            d.sex = Sex::male;
        else if (f[3] == "F")
            d.sex = Sex::female;
        else
            throw ParseError(line, "sex must be M or F");
        if (f[5] == "control")
            d.oa_status = OaStatus::control;
        else if (f[5] == "incidence")
            d.oa_status = OaStatus::incidence;
        else if (f[5] == "progression")
            d.oa_status = OaStatus::progression;
        else
            throw ParseError(line, "oa_status must be control, incidence or progression");
        if (!rows.emplace(d.subject_id, d).second)
            throw ParseError(line, "duplicate subject " + d.subject_id);
    }
    std::vector<Demographics> out;
    for (auto& [id, d] : rows)
        out.push_back(std::move(d));
    return out;
}

inline void write_demographics_csv(std::ostream& out, const std::vector<Demographics>& rows) {
    out << "subject_id,bmi,age,sex,height_cm,oa_status\n";
    for (const auto& d : rows)
        out << d.subject_id << ',' << csv::format_double(d.bmi) << ',' << csv::format_double(d.age) << ','
            << (d.sex == Sex::male ? "M" : "F") << ',' << csv::format_double(d.height_cm) << ','
            << to_string(d.oa_status) << '\n';
}

enum class Measure { walk400 = 0, pace20 = 1, chair_stand = 2 };
inline constexpr std::array<Measure, 3> all_measures{Measure::walk400, Measure::pace20, Measure::chair_stand};

inline std::string_view measure_name(Measure m) {
    switch (m) {
    case Measure::walk400: return "400MWT";
    case Measure::pace20: return "20MPACE";
    case Measure::chair_stand: return "5CSPACE";
    }
    return "";
}

inline Measure parse_measure(std::string_view name) {
    for (auto m : all_measures)
        if (measure_name(m) == name)
            return m;
    throw UsageError("unknown measure '" + std::string(name) + "' (expected 400MWT, 20MPACE or 5CSPACE)");
}

/// Performance measures per subject; a missing cell is std::nullopt.
using ResponseRow = std::array<std::optional<double>, 3>;
using Responses = std::map<std::string, ResponseRow>;

/// Parses `subject_id,400MWT,20MPACE,5CSPACE`; empty cells mean not measured.
inline Responses parse_response_csv(std::istream& in) {
    csv::Reader reader(in);
    reader.expect_header({"subject_id", "400MWT", "20MPACE", "5CSPACE"});
    Responses out;
    std::vector<std::string_view> f;
    while (reader.next(f)) {
        const auto line = reader.line_number();
        if (f.size() != 4)
            throw ParseError(line, "expected 4 fields, got " + std::to_string(f.size()));
        ResponseRow row;
        for (int k = 0; k < 3; ++k)
            if (!f[k + 1].empty()) {
                double v = csv::parse_number<double>(f[k + 1], line, measure_name(all_measures[k]));
                if (!std::isfinite(v))
                    throw ParseError(line, "non-finite response");
                row[k] = v;
            }
        if (!out.emplace(std::string(f[0]), row).second)
            throw ParseError(line, "duplicate subject " + std::string(f[0]));
    }
    return out;
}

inline void write_response_csv(std::ostream& out, const Responses& rows) {
    out << "subject_id,400MWT,20MPACE,5CSPACE\n";
    for (const auto& [id, row] : rows) {
        out << id;
        for (const auto& v : row)
            out << ',' << (v ? csv::format_double(*v) : std::string());
        out << '\n';
    }
}

// ---------------------------------------------------------------------------

struct CohortSummary {
    std::size_t n_subjects = 0;
    double pct_male = 0;
    double bmi_mean = 0;
    double bmi_sd = 0;   // sample standard deviation (n - 1); 0 for a single subject
    double median_valid_days = 0;
};

/// Table-1 style aggregates over the subjects present in `demographics`;
/// valid days are counted from `traces`.
inline CohortSummary cohort_summary(const std::vector<Demographics>& demographics,
                                    const std::vector<MinuteTrace>& traces) {
    if (demographics.empty())
        throw DataError("cohort_summary: empty cohort", "EmptyCohort");
    CohortSummary s;
    s.n_subjects = demographics.size();
    const double n = static_cast<double>(s.n_subjects);
    double males = 0, sum = 0;
    for (const auto& d : demographics) {
        males += d.sex == Sex::male;
        sum += d.bmi;
    }
    s.pct_male = 100.0 * males / n;
    s.bmi_mean = sum / n;
    if (s.n_subjects > 1) {
        double ss = 0;
        for (const auto& d : demographics)
            ss += (d.bmi - s.bmi_mean) * (d.bmi - s.bmi_mean);
        s.bmi_sd = std::sqrt(ss / (n - 1));
    }
    std::map<std::string, int> days;
    for (const auto& d : demographics)
        days[d.subject_id] = 0;
    for (const auto& t : traces)
        if (auto it = days.find(t.subject_id); it != days.end())
            ++it->second;
    std::vector<int> v;
    for (const auto& [id, k] : days)
        v.push_back(k);
    std::sort(v.begin(), v.end());
    const std::size_t mid = v.size() / 2;
    s.median_valid_days = v.size() % 2 ? v[mid] : 0.5 * (v[mid - 1] + v[mid]);
    return s;
}

inline nlohmann::json to_json(const CohortSummary& s) {
    return {{"n_subjects", s.n_subjects},     {"pct_male", s.pct_male},
            {"bmi_mean", s.bmi_mean},         {"bmi_sd", s.bmi_sd},
            {"median_valid_days", s.median_valid_days}};
}

} // namespace actiprofile
