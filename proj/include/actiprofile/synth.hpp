#pragma once

// Seeded synthetic cohorts. Every subject has a latent physical-function value
// u in [0, 1]. Each wear day is a shuffled sequence of blocks drawn from
// activity templates (i.i.d. discretized normal counts within a block); the
// daily minutes of each template depend linearly on u. Performance measures
// are linear in u plus noise.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "actiprofile/error.hpp"
#include "actiprofile/ingest.hpp"
#include "actiprofile/random.hpp"

namespace actiprofile {

struct ActivityTemplate {
    std::string name;
    double mean = 0;           // counts per minute
    double sd = 0;
    double base_minutes = 0;   // minutes per day at u = 0
    double slope = 0;          // extra minutes per day per unit of u
    double drift = 0;          // epoch shift: minutes += drift * (2u - 1) when generating a later epoch
};

struct ResponseLink {
    double intercept = 0;
    double slope = 0;
    double noise_sd = 0;
};

struct SynthSpec {
    std::string version = "1";
    int n_subjects = 100;
    int days = 7;
    /// templates[0] fills whatever wear time the other templates leave.
    std::vector<ActivityTemplate> templates;
    double day_noise_sd = 10;   // day-to-day sd of each template's minutes
    int block_min = 15;
    int block_max = 60;
    int night_nonwear_min = 360;   // leading non-wear block
    int night_nonwear_max = 480;
    int evening_nonwear_min = 95;  // trailing non-wear block
    int evening_nonwear_max = 180;
    double midday_nonwear_prob = 0.2;
    int midday_nonwear_min = 95;
    int midday_nonwear_max = 150;
    std::array<ResponseLink, 3> links{{{360, -120, 6}, {1.0, 0.6, 0.03}, {0.3, 0.3, 0.015}}};
    std::uint64_t seed = 1;

    void validate() const {
        if (n_subjects < 0 || days < 1)
            throw UsageError("synth: n_subjects must be >= 0 and days >= 1");
        if (templates.empty())
            throw UsageError("synth: at least one template is required");
        for (const auto& t : templates)
            if (t.mean < 0 || t.sd < 0)
                throw UsageError("synth: template means and sds must be non-negative");
        if (block_min < 1 || block_max < block_min)
            throw UsageError("synth: invalid block length range");
        if (night_nonwear_min < 91 || evening_nonwear_min < 91 || midday_nonwear_min < 91)
            throw UsageError("synth: non-wear blocks must be at least 91 minutes");
        if (night_nonwear_max < night_nonwear_min || evening_nonwear_max < evening_nonwear_min ||
            midday_nonwear_max < midday_nonwear_min)
            throw UsageError("synth: invalid non-wear length range");
        double fixed = night_nonwear_max + evening_nonwear_max + (midday_nonwear_prob > 0 ? midday_nonwear_max : 0);
        for (std::size_t k = 1; k < templates.size(); ++k) {
            const auto& t = templates[k];
            fixed += std::max({t.base_minutes, t.base_minutes + t.slope, 0.0}) + std::abs(t.drift);
        }
        if (fixed > minutes_per_day)
            throw UsageError("synth: non-wear plus template minutes exceed 1440 minutes per day");
    }
};

inline nlohmann::json to_json(const SynthSpec& s) {
    nlohmann::json templates = nlohmann::json::array();
    for (const auto& t : s.templates)
        templates.push_back({{"name", t.name}, {"mean", t.mean}, {"sd", t.sd}, {"base_minutes", t.base_minutes},
                             {"slope", t.slope}, {"drift", t.drift}});
    nlohmann::json links = nlohmann::json::object();
    for (auto m : all_measures) {
        const auto& l = s.links[static_cast<int>(m)];
        links[std::string(measure_name(m))] = {{"intercept", l.intercept}, {"slope", l.slope}, {"noise_sd", l.noise_sd}};
    }
    return {{"version", s.version},
            {"n_subjects", s.n_subjects},
            {"days", s.days},
            {"templates", templates},
            {"day_noise_sd", s.day_noise_sd},
            {"block_min", s.block_min},
            {"block_max", s.block_max},
            {"night_nonwear", {s.night_nonwear_min, s.night_nonwear_max}},
            {"evening_nonwear", {s.evening_nonwear_min, s.evening_nonwear_max}},
            {"midday_nonwear_prob", s.midday_nonwear_prob},
            {"midday_nonwear", {s.midday_nonwear_min, s.midday_nonwear_max}},
            {"links", links},
            {"seed", s.seed}};
}

/// Reads a spec; absent keys keep their defaults.
inline SynthSpec synth_spec_from_json(const nlohmann::json& j) {
    SynthSpec s;
    s.version = j.value("version", s.version);
    s.n_subjects = j.value("n_subjects", s.n_subjects);
    s.days = j.value("days", s.days);
    if (j.contains("templates"))
        for (const auto& t : j.at("templates"))
            s.templates.push_back({t.value("name", std::string()), t.at("mean").get<double>(), t.at("sd").get<double>(),
                                   t.value("base_minutes", 0.0), t.value("slope", 0.0), t.value("drift", 0.0)});
    s.day_noise_sd = j.value("day_noise_sd", s.day_noise_sd);
    s.block_min = j.value("block_min", s.block_min);
    s.block_max = j.value("block_max", s.block_max);
    if (j.contains("night_nonwear"))
        s.night_nonwear_min = j["night_nonwear"][0], s.night_nonwear_max = j["night_nonwear"][1];
    if (j.contains("evening_nonwear"))
        s.evening_nonwear_min = j["evening_nonwear"][0], s.evening_nonwear_max = j["evening_nonwear"][1];
    s.midday_nonwear_prob = j.value("midday_nonwear_prob", s.midday_nonwear_prob);
    if (j.contains("midday_nonwear"))
        s.midday_nonwear_min = j["midday_nonwear"][0], s.midday_nonwear_max = j["midday_nonwear"][1];
    if (j.contains("links"))
        for (auto m : all_measures)
            if (j["links"].contains(std::string(measure_name(m)))) {
                const auto& l = j["links"][std::string(measure_name(m))];
                s.links[static_cast<int>(m)] = {l.at("intercept").get<double>(), l.at("slope").get<double>(),
                                                l.at("noise_sd").get<double>()};
            }
    s.seed = j.value("seed", s.seed);
    return s;
}

enum class Separation { high, low };

/// Bundled specs (version "1"). `high`: light and moderate minutes rise steeply
/// with latent function; `low`: template minutes ignore it.
inline SynthSpec planted_separation_spec(Separation level) {
    SynthSpec s;
    s.version = level == Separation::high ? "planted-high/1" : "planted-low/1";
    const bool high = level == Separation::high;
    s.templates = {
        {"sedentary", 150, 60, 0, 0, 0},
        {"light", 1150, 180, high ? 60.0 : 140.0, high ? 160.0 : 0.0, 0},
        {"moderate", 3150, 300, high ? 5.0 : 40.0, high ? 70.0 : 0.0, 0},
        {"intermittent", 550, 250, 60, 0, 0},
    };
    return s;
}

/// Temporal-drift spec: moderate separation through light minutes only. In later
/// epochs high-function subjects gain up to `drift` light minutes a day and
/// low-function subjects lose as many.
inline SynthSpec planted_drift_spec(double drift = 60.0) {
    SynthSpec s = planted_separation_spec(Separation::high);
    s.version = "planted-drift/1";
    s.templates[1].slope = 30;
    s.templates[1].drift = drift;
    s.templates[2].base_minutes = 40;
    s.templates[2].slope = 0;
    return s;
}

struct TrueBlock {
    int start = 0;   // clock minutes, half-open
    int end = 0;
    int template_index = -1;   // -1 for non-wear
};

struct SyntheticCohort {
    std::vector<MinuteTrace> traces;
    std::vector<Demographics> demographics;
    Responses responses;
    std::vector<double> latent;   // per subject, same order as demographics
    std::vector<std::vector<std::vector<TrueBlock>>> blocks;   // [subject][day]
};

inline std::string synth_subject_id(int i) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "S%05d", i);
    return buf;
}

namespace detail {

inline int uniform_int(std::mt19937_64& rng, int lo, int hi) {
    return std::uniform_int_distribution<int>(lo, hi)(rng);
}

inline std::vector<TrueBlock> synth_day(const SynthSpec& spec, double u, bool later_epoch, std::mt19937_64& rng,
                                        std::vector<std::int32_t>& counts) {
    std::normal_distribution<double> unit(0.0, 1.0);
    std::uniform_real_distribution<double> unif(0.0, 1.0);

    const int night = uniform_int(rng, spec.night_nonwear_min, spec.night_nonwear_max);
    const int evening = uniform_int(rng, spec.evening_nonwear_min, spec.evening_nonwear_max);
    const bool midday = unif(rng) < spec.midday_nonwear_prob;
    const int midday_len = midday ? uniform_int(rng, spec.midday_nonwear_min, spec.midday_nonwear_max) : 0;
    const int wear = minutes_per_day - night - evening - midday_len;

    // minutes per template; template 0 takes the remainder
    const std::size_t nt = spec.templates.size();
    std::vector<int> minutes(nt, 0);
    int used = 0;
    for (std::size_t k = 1; k < nt; ++k) {
        const auto& t = spec.templates[k];
        double m = t.base_minutes + t.slope * u + spec.day_noise_sd * unit(rng);
        if (later_epoch)
            m += t.drift * (2 * u - 1);
        minutes[k] = std::max(0, static_cast<int>(std::lround(m)));
        used += minutes[k];
    }
    if (used > wear) {
        const double f = static_cast<double>(wear) / used;
        used = 0;
        for (std::size_t k = 1; k < nt; ++k) {
            minutes[k] = static_cast<int>(std::floor(minutes[k] * f));
            used += minutes[k];
        }
    }
    minutes[0] = wear - used;

    // cut into blocks
    std::vector<std::pair<int, int>> pieces;   // (template, length)
    for (std::size_t k = 0; k < nt; ++k) {
        int left = minutes[k];
        while (left > 0) {
            int len = std::min(left, uniform_int(rng, spec.block_min, spec.block_max));
            if (left - len > 0 && left - len < spec.block_min)
                len = left;
            pieces.emplace_back(static_cast<int>(k), len);
            left -= len;
        }
    }
    std::shuffle(pieces.begin(), pieces.end(), rng);
    // avoid adjacent blocks of one template where possible
    for (std::size_t i = 1; i < pieces.size(); ++i) {
        if (pieces[i].first != pieces[i - 1].first)
            continue;
        for (std::size_t j = i + 1; j < pieces.size(); ++j)
            if (pieces[j].first != pieces[i - 1].first) {
                std::swap(pieces[i], pieces[j]);
                break;
            }
    }

    std::vector<TrueBlock> blocks;
    auto push = [&](int start, int len, int tmpl) {
        if (!blocks.empty() && blocks.back().template_index == tmpl && blocks.back().end == start)
            blocks.back().end += len;
        else
            blocks.push_back({start, start + len, tmpl});
    };
    int clock = 0;
    push(clock, night, -1);
    clock += night;
    const std::size_t midday_after = pieces.empty() ? 0 : static_cast<std::size_t>(uniform_int(rng, 0, static_cast<int>(pieces.size()) - 1));
    for (std::size_t i = 0; i < pieces.size(); ++i) {
        push(clock, pieces[i].second, pieces[i].first);
        clock += pieces[i].second;
        if (midday && i == midday_after) {
            push(clock, midday_len, -1);
            clock += midday_len;
        }
    }
    if (midday && pieces.empty()) {
        push(clock, midday_len, -1);
        clock += midday_len;
    }
    push(clock, evening, -1);
    clock += evening;

    counts.assign(minutes_per_day, 0);
    for (const auto& b : blocks) {
        if (b.template_index < 0)
            continue;
        const auto& t = spec.templates[static_cast<std::size_t>(b.template_index)];
        for (int m = b.start; m < b.end; ++m)
            counts[m] = static_cast<std::int32_t>(std::max(0.0, std::round(t.mean + t.sd * unit(rng))));
    }
    // wear minutes bordering non-wear carry at least 100 counts so the
    // non-wear windows cannot extend into them
    for (std::size_t i = 0; i < blocks.size(); ++i) {
        if (blocks[i].template_index < 0)
            continue;
        if (i > 0 && blocks[i - 1].template_index < 0)
            counts[blocks[i].start] = std::max(counts[blocks[i].start], 100);
        if (i + 1 < blocks.size() && blocks[i + 1].template_index < 0)
            counts[blocks[i].end - 1] = std::max(counts[blocks[i].end - 1], 100);
    }
    return blocks;
}

} // namespace detail

/// Generates the cohort. `epoch` 0 is the baseline wave; later epochs keep each
/// subject's latent value and demographics, redraw traces and responses, and
/// apply template drift.
inline SyntheticCohort generate_cohort(const SynthSpec& spec, int epoch = 0) {
    spec.validate();
    SyntheticCohort c;
    const SeedSeq root(spec.seed);
    for (int i = 0; i < spec.n_subjects; ++i) {
        const std::string id = synth_subject_id(i);
        const SeedSeq subject = root.with(id);
        auto rng = subject.with("subject").engine();
        std::uniform_real_distribution<double> unif(0.0, 1.0);
        std::normal_distribution<double> unit(0.0, 1.0);

        const double u = unif(rng);
        Demographics d;
        d.subject_id = id;
        d.sex = unif(rng) < 0.45 ? Sex::male : Sex::female;
        d.bmi = std::max(16.0, 28.5 + 4.9 * unit(rng));
        d.age = 45.0 + 34.0 * unif(rng);
        d.height_cm = d.sex == Sex::male ? 176.0 + 7.0 * unit(rng) : 162.0 + 6.5 * unit(rng);
        const double oa = unif(rng);
        d.oa_status = oa < 0.3 ? OaStatus::control : (oa < 0.8 ? OaStatus::incidence : OaStatus::progression);
        // rounding keeps the CSV compact and the round trip exact
        d.bmi = std::round(d.bmi * 10) / 10;
        d.age = std::round(d.age);
        d.height_cm = std::round(d.height_cm * 10) / 10;

        const SeedSeq wave = subject.with(static_cast<std::uint64_t>(epoch));
        auto rrng = wave.with("responses").engine();
        ResponseRow row;
        for (auto m : all_measures) {
            const auto& l = spec.links[static_cast<int>(m)];
            row[static_cast<int>(m)] = std::round((l.intercept + l.slope * u + l.noise_sd * unit(rrng)) * 1e4) / 1e4;
        }

        std::vector<std::vector<TrueBlock>> days;
        for (int day = 0; day < spec.days; ++day) {
            auto drng = wave.with("day").with(static_cast<std::uint64_t>(day)).engine();
            MinuteTrace t;
            t.subject_id = id;
            t.day_index = day;
            days.push_back(detail::synth_day(spec, u, epoch > 0, drng, t.counts));
            c.traces.push_back(std::move(t));
        }
        c.demographics.push_back(d);
        c.responses.emplace(id, row);
        c.latent.push_back(u);
        c.blocks.push_back(std::move(days));
    }
    return c;
}

inline nlohmann::json ground_truth_json(const SynthSpec& spec, const SyntheticCohort& c, int epoch = 0) {
    nlohmann::json subjects = nlohmann::json::array();
    for (std::size_t i = 0; i < c.demographics.size(); ++i) {
        nlohmann::json days = nlohmann::json::array();
        for (std::size_t d = 0; d < c.blocks[i].size(); ++d) {
            nlohmann::json blocks = nlohmann::json::array();
            for (const auto& b : c.blocks[i][d])
                blocks.push_back({b.start, b.end, b.template_index});
            days.push_back({{"day_index", d}, {"blocks", blocks}});
        }
        subjects.push_back({{"subject_id", c.demographics[i].subject_id}, {"latent", c.latent[i]}, {"days", days}});
    }
    return {{"spec", to_json(spec)},
            {"epoch", epoch},
            {"block_format", "[start_minute, end_minute, template_index (-1 = non-wear)]"},
            {"subjects", subjects}};
}

} // namespace actiprofile
