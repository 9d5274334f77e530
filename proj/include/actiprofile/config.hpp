#pragma once

// Run configuration: one JSON document; absent keys keep their defaults.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "actiprofile/changepoint.hpp"
#include "actiprofile/error.hpp"
#include "actiprofile/ingest.hpp"
#include "actiprofile/pipeline.hpp"
#include "actiprofile/random.hpp"
#include "actiprofile/synth.hpp"

namespace actiprofile {

struct RunConfig {
    std::string minutes_path;        // empty: <output_dir>/minutes.csv
    std::string demographics_path;   // empty: <output_dir>/demographics.csv
    std::string responses_path;      // empty: <output_dir>/responses.csv
    std::string output_dir = "out";
    NonwearParams nonwear;
    int min_wear_minutes = 600;
    CpParams changepoint;
    TrainConfig train;
    std::vector<Measure> measures{all_measures.begin(), all_measures.end()};
    bool no_profile = false;
    std::uint64_t seed = 20240101;
    std::optional<SynthSpec> synth;   // simulate falls back to a bundled spec

    std::filesystem::path out(const std::string& name) const { return std::filesystem::path(output_dir) / name; }
    std::filesystem::path input(const std::string& configured, const std::string& fallback) const {
        return configured.empty() ? out(fallback) : std::filesystem::path(configured);
    }

    /// Pushes the top-level seed into the components that consume one.
    void apply_seed(std::uint64_t s) {
        seed = s;
        changepoint.seed = s;
        train.seed = s;
    }

    void validate() const {
        changepoint.validate();
        if (nonwear.min_window < 1 || nonwear.max_interruption < 0 || nonwear.interruption_ceiling < 1)
            throw UsageError("config: invalid non-wear parameters");
        if (min_wear_minutes < 0 || min_wear_minutes > minutes_per_day)
            throw UsageError("config: min_wear_minutes must lie in [0, 1440]");
        for (double w : train.widths)
            if (!(w > 0))
                throw UsageError("config: widths must be positive");
        if (train.widths.empty() && !no_profile)
            throw UsageError("config: at least one width is required unless no_profile is set");
        if (train.folds < 2 || train.repeats < 1)
            throw UsageError("config: cv needs folds >= 2 and repeats >= 1");
        if (train.lambda_points < 1 || !(train.lambda_min_ratio > 0) || train.lambda_min_ratio > 1)
            throw UsageError("config: lambda grid needs points >= 1 and min_ratio in (0, 1]");
        if (!(train.train_fraction > 0) || !(train.train_fraction < 1))
            throw UsageError("config: train_fraction must lie in (0, 1)");
        if (!(train.gam_df > 0))
            throw UsageError("config: gam df must be positive");
        if (measures.empty())
            throw UsageError("config: measure list is empty");
        if (synth)
            synth->validate();
    }
};

inline nlohmann::json to_json(const RunConfig& c) {
    nlohmann::json measures = nlohmann::json::array();
    for (auto m : c.measures)
        measures.push_back(measure_name(m));
    nlohmann::json j = {
        {"paths",
         {{"minutes", c.minutes_path},
          {"demographics", c.demographics_path},
          {"responses", c.responses_path},
          {"output_dir", c.output_dir}}},
        {"nonwear",
         {{"min_window", c.nonwear.min_window},
          {"max_interruption", c.nonwear.max_interruption},
          {"interruption_ceiling", c.nonwear.interruption_ceiling},
          {"min_wear_minutes", c.min_wear_minutes}}},
        {"changepoint",
         {{"alpha", c.changepoint.alpha},
          {"min_segment_size", c.changepoint.min_segment_size},
          {"n_permutations", c.changepoint.n_permutations},
          {"significance", c.changepoint.significance}}},
        {"widths", c.train.widths},
        {"lambda", {{"points", c.train.lambda_points}, {"min_ratio", c.train.lambda_min_ratio}}},
        {"cv", {{"folds", c.train.folds}, {"repeats", c.train.repeats}}},
        {"train_fraction", c.train.train_fraction},
        {"solver", {{"tol", c.train.solver.tol}, {"kkt_tol", c.train.solver.kkt_tol}, {"max_passes", c.train.solver.max_passes}}},
        {"gam", {{"enabled", c.train.fit_gam}, {"df", c.train.gam_df}, {"active_only", c.train.gam_active_only}}},
        {"measures", measures},
        {"no_profile", c.no_profile},
        {"seed", c.seed},
    };
    if (c.synth)
        j["synth"] = to_json(*c.synth);
    return j;
}

inline RunConfig run_config_from_json(const nlohmann::json& j) {
    RunConfig c;
    try {
        if (!j.is_object())
            throw UsageError("config: top level must be an object");
        if (j.contains("paths")) {
            const auto& p = j["paths"];
            c.minutes_path = p.value("minutes", c.minutes_path);
            c.demographics_path = p.value("demographics", c.demographics_path);
            c.responses_path = p.value("responses", c.responses_path);
            c.output_dir = p.value("output_dir", c.output_dir);
        }
        if (j.contains("nonwear")) {
            const auto& p = j["nonwear"];
            c.nonwear.min_window = p.value("min_window", c.nonwear.min_window);
            c.nonwear.max_interruption = p.value("max_interruption", c.nonwear.max_interruption);
            c.nonwear.interruption_ceiling = p.value("interruption_ceiling", c.nonwear.interruption_ceiling);
            c.min_wear_minutes = p.value("min_wear_minutes", c.min_wear_minutes);
        }
        if (j.contains("changepoint")) {
            const auto& p = j["changepoint"];
            c.changepoint.alpha = p.value("alpha", c.changepoint.alpha);
            c.changepoint.min_segment_size = p.value("min_segment_size", c.changepoint.min_segment_size);
            c.changepoint.n_permutations = p.value("n_permutations", c.changepoint.n_permutations);
            c.changepoint.significance = p.value("significance", c.changepoint.significance);
        }
        if (j.contains("widths"))
            c.train.widths = j["widths"].get<std::vector<double>>();
        if (j.contains("lambda")) {
            c.train.lambda_points = j["lambda"].value("points", c.train.lambda_points);
            c.train.lambda_min_ratio = j["lambda"].value("min_ratio", c.train.lambda_min_ratio);
        }
        if (j.contains("cv")) {
            c.train.folds = j["cv"].value("folds", c.train.folds);
            c.train.repeats = j["cv"].value("repeats", c.train.repeats);
        }
        c.train.train_fraction = j.value("train_fraction", c.train.train_fraction);
        if (j.contains("solver")) {
            c.train.solver.tol = j["solver"].value("tol", c.train.solver.tol);
            c.train.solver.kkt_tol = j["solver"].value("kkt_tol", c.train.solver.kkt_tol);
            c.train.solver.max_passes = j["solver"].value("max_passes", c.train.solver.max_passes);
        }
        if (j.contains("gam")) {
            c.train.fit_gam = j["gam"].value("enabled", c.train.fit_gam);
            c.train.gam_df = j["gam"].value("df", c.train.gam_df);
            c.train.gam_active_only = j["gam"].value("active_only", c.train.gam_active_only);
        }
        if (j.contains("measures")) {
            c.measures.clear();
            for (const auto& m : j["measures"])
                c.measures.push_back(parse_measure(m.get<std::string>()));
        }
        c.no_profile = j.value("no_profile", c.no_profile);
        c.apply_seed(j.value("seed", c.seed));
        if (j.contains("synth"))
            c.synth = synth_spec_from_json(j["synth"]);
    } catch (const nlohmann::json::exception& e) {
        throw UsageError(std::string("config: ") + e.what());
    }
    return c;
}

inline RunConfig load_run_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in)
        throw UsageError("cannot open config file: " + path.string());
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw UsageError("config " + path.string() + ": " + e.what());
    }
    return run_config_from_json(j);
}

/// Hash of the canonical dump (object keys sorted by nlohmann::json).
inline std::uint64_t config_hash(const RunConfig& c) { return fnv1a64(to_json(c).dump()); }

inline std::string hex64(std::uint64_t v) {
    static const char* digits = "0123456789abcdef";
    std::string s(16, '0');
    for (int i = 15; i >= 0; --i, v >>= 4)
        s[static_cast<std::size_t>(i)] = digits[v & 0xf];
    return s;
}

} // namespace actiprofile
