// actiprofile command-line front end.
//
// Every command works inside one output directory: it reads the upstream
// artifacts written there by the previous command and writes its own next to
// them, each with a <file>.meta.json provenance sidecar.

#include <cstdint>
#include <algorithm>
#include <filesystem>
#include <functional>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "actiprofile/changepoint.hpp"
#include "actiprofile/config.hpp"
#include "actiprofile/error.hpp"
#include "actiprofile/evaluation.hpp"
#include "actiprofile/gam.hpp"
#include "actiprofile/ingest.hpp"
#include "actiprofile/ordinal.hpp"
#include "actiprofile/parallel.hpp"
#include "actiprofile/pipeline.hpp"
#include "actiprofile/profile.hpp"
#include "actiprofile/synth.hpp"

namespace fs = std::filesystem;
using namespace actiprofile;
using json = nlohmann::json;

namespace {

constexpr const char* tool_version = "actiprofile 0.1.0";

struct Options {
    std::string config;
    std::string out;
    int threads = 0;
    std::optional<std::uint64_t> seed;
    std::vector<std::string> measures;

    // simulate
    std::string level = "high";
    std::optional<int> subjects;
    std::optional<int> days;
    int epoch = 0;
    // train
    bool no_profile = false;
    bool no_gam = false;
    bool gam_all_predictors = false;
    // evaluate
    std::string epoch_b;
    // predict
    std::string model;
    std::string minutes;
    std::string demographics;
    std::string features;
    // report
    int curve_points = 50;
};

struct Context {
    RunConfig cfg;
    std::string command;
    int threads = 1;
    std::string hash;

    void write(const std::string& name, const std::function<void(std::ostream&)>& body,
               std::optional<std::uint64_t> seed = std::nullopt) const {
        const fs::path path = cfg.out(name);
        fs::create_directories(path.parent_path());
        {
            std::ofstream out(path, std::ios::binary);
            if (!out)
                throw UsageError("cannot write " + path.string());
            body(out);
        }
        json meta = {{"command", command}, {"config_hash", hash}, {"seed", seed.value_or(cfg.seed)},
                     {"tool", tool_version}};
        std::ofstream side(path.string() + ".meta.json", std::ios::binary);
        side << meta.dump(2) << '\n';
    }

    void write_json(const std::string& name, const json& j, std::optional<std::uint64_t> seed = std::nullopt) const {
        write(name, [&](std::ostream& o) { o << j.dump(2) << '\n'; }, seed);
    }
};

std::ifstream open_input(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw UsageError("missing input file: " + path.string());
    return in;
}

json read_json(const fs::path& path) {
    auto in = open_input(path);
    try {
        return json::parse(in);
    } catch (const json::exception& e) {
        throw DataError(path.string() + ": " + e.what(), "ParseError");
    }
}

std::vector<Segment> load_segments(const fs::path& path) {
    auto in = open_input(path);
    return parse_segment_csv(in);
}

std::vector<Demographics> load_demographics(const fs::path& path) {
    auto in = open_input(path);
    return parse_demographics_csv(in);
}

Responses load_responses(const fs::path& path) {
    auto in = open_input(path);
    return parse_response_csv(in);
}

Dataset load_dataset(const fs::path& segments, const fs::path& demographics, const fs::path& responses) {
    return make_dataset(load_segments(segments), load_demographics(demographics), load_responses(responses));
}

std::vector<TrainedMeasure> load_model(const fs::path& path) {
    const json j = read_json(path);
    std::vector<TrainedMeasure> out;
    try {
        for (const auto& m : j.at("measures"))
            out.push_back(trained_from_json(m));
    } catch (const json::exception& e) {
        throw DataError(path.string() + ": " + e.what(), "ModelFormat");
    }
    return out;
}

// ---------------------------------------------------------------------------

void cmd_simulate(const Context& ctx, const Options& opt, bool level_given) {
    SynthSpec spec;
    if (ctx.cfg.synth && !level_given) {
        spec = *ctx.cfg.synth;
    } else if (opt.level == "high" || opt.level == "low") {
        spec = planted_separation_spec(opt.level == "high" ? Separation::high : Separation::low);
        spec.n_subjects = 300;
    } else if (opt.level == "drift") {
        spec = planted_drift_spec();
        spec.n_subjects = 300;
    } else {
        throw UsageError("--level must be high, low or drift");
    }
    if (opt.subjects)
        spec.n_subjects = *opt.subjects;
    if (opt.days)
        spec.days = *opt.days;
    if (opt.seed)
        spec.seed = *opt.seed;
    if (opt.epoch < 0)
        throw UsageError("--epoch must be non-negative");
    spec.validate();

    const auto cohort = generate_cohort(spec, opt.epoch);
    ctx.write("minutes.csv", [&](std::ostream& o) { write_minute_csv(o, cohort.traces); }, spec.seed);
    ctx.write("demographics.csv", [&](std::ostream& o) { write_demographics_csv(o, cohort.demographics); }, spec.seed);
    ctx.write("responses.csv", [&](std::ostream& o) { write_response_csv(o, cohort.responses); }, spec.seed);
    ctx.write_json("ground_truth.json", ground_truth_json(spec, cohort, opt.epoch), spec.seed);
}

void cmd_ingest(const Context& ctx) {
    const auto& cfg = ctx.cfg;
    auto in = open_input(cfg.input(cfg.minutes_path, "minutes.csv"));
    auto parsed = parse_minute_csv(in);
    auto clean = clean_traces(std::move(parsed.traces), std::move(parsed.gaps), cfg.nonwear, cfg.min_wear_minutes);
    ctx.write("clean_minutes.csv", [&](std::ostream& o) { write_clean_minute_csv(o, clean.traces); });
    ctx.write("filter_report.jsonl", [&](std::ostream& o) { write_filter_report(o, clean.events); });

    const fs::path demo = cfg.input(cfg.demographics_path, "demographics.csv");
    if (fs::exists(demo))
        ctx.write_json("cohort_summary.json", to_json(cohort_summary(load_demographics(demo), clean.traces)));
}

void cmd_segment(const Context& ctx) {
    auto in = open_input(ctx.cfg.out("clean_minutes.csv"));
    const auto traces = parse_clean_minute_csv(in);
    const auto segments = segment_traces(traces, ctx.cfg.changepoint, ctx.threads);
    ctx.write("segments.csv", [&](std::ostream& o) { write_segment_csv(o, segments); });
}

void cmd_profile(const Context& ctx) {
    const auto& cfg = ctx.cfg;
    const auto segments = load_segments(cfg.out("segments.csv"));
    Dataset data = make_dataset(segments, load_demographics(cfg.input(cfg.demographics_path, "demographics.csv")), {});
    std::vector<std::string> ids;
    for (const auto& [id, segs] : data.segments)
        if (data.demographics.contains(id))
            ids.push_back(id);
    if (ids.empty())
        throw DataError("profile: no subject has both segments and demographics", "EmptyCohort");

    for (double w : cfg.train.widths) {
        const std::string tag = "w" + csv::format_double(w);
        const auto grid = fit_grid_for(ids, data, w);
        std::vector<DailyActivityProfile> profiles;
        for (const auto& id : ids)
            profiles.push_back(daily_profile(data.segments.at(id), grid));
        const auto fm = build_features(ids, data.segments, data.demographics, grid);
        ctx.write_json("grid_" + tag + ".json", grid.to_json());
        ctx.write("profiles_" + tag + ".csv", [&](std::ostream& o) { write_profile_csv(o, profiles, grid); });
        ctx.write("features_" + tag + ".csv", [&](std::ostream& o) { write_feature_csv(o, fm); });
    }
}

void cmd_train(const Context& ctx) {
    const auto& cfg = ctx.cfg;
    const Dataset data = load_dataset(cfg.out("segments.csv"), cfg.input(cfg.demographics_path, "demographics.csv"),
                                      cfg.input(cfg.responses_path, "responses.csv"));
    TrainConfig tc = cfg.train;
    if (cfg.no_profile)
        tc.widths.clear();

    std::vector<std::optional<TrainedMeasure>> trained(cfg.measures.size());
    parallel_for(cfg.measures.size(), ctx.threads,
                 [&](std::size_t i) { trained[i] = train_measure(data, cfg.measures[i], tc); });

    json measures = json::array();
    for (const auto& t : trained)
        measures.push_back(to_json(*t));
    ctx.write_json("model.json", {{"format", "actiprofile-model/1"},
                                  {"config_hash", ctx.hash},
                                  {"seed", cfg.seed},
                                  {"config", to_json(cfg)},
                                  {"measures", measures}});
}

void cmd_evaluate(const Context& ctx, const Options& opt) {
    const auto& cfg = ctx.cfg;
    const auto models = load_model(cfg.out("model.json"));
    const Dataset data = load_dataset(cfg.out("segments.csv"), cfg.input(cfg.demographics_path, "demographics.csv"),
                                      cfg.input(cfg.responses_path, "responses.csv"));
    std::optional<Dataset> epoch_b;
    if (!opt.epoch_b.empty()) {
        const fs::path dir(opt.epoch_b);
        epoch_b = load_dataset(dir / "segments.csv", dir / "demographics.csv", dir / "responses.csv");
    }

    std::vector<EvalReport> reports;
    for (const auto& tm : models) {
        auto r = evaluate_trained(tm, data);
        reports.insert(reports.end(), r.begin(), r.end());
        if (epoch_b) {
            const auto ids = measure_rows(*epoch_b, tm.measure).ids;
            auto sel = temporal_eval(tm.lporm(), *epoch_b, ids);
            sel.selected = true;
            reports.push_back(sel);
            auto base = temporal_eval(tm.baseline, *epoch_b, ids);
            base.model_id = "lporm_no_profile";
            reports.push_back(base);
        }
    }
    json arr = json::array();
    for (const auto& r : reports)
        arr.push_back(to_json(r));
    ctx.write_json("eval_report.json", arr);
    ctx.write("eval_table.csv", [&](std::ostream& o) { write_table_csv(o, reports); });
}

void cmd_predict(const Context& ctx, const Options& opt) {
    const auto& cfg = ctx.cfg;
    const auto models = load_model(opt.model.empty() ? cfg.out("model.json") : fs::path(opt.model));
    auto write_probs = [](std::ostream& o, const TrainedMeasure& tm, const FeatureMatrix& fm) {
        const auto probs = predict_probs(tm.lporm(), fm);
        for (std::size_t r = 0; r < fm.subject_ids.size(); ++r) {
            const Eigen::RowVectorXd p = probs.row(static_cast<Eigen::Index>(r));
            o << fm.subject_ids[r] << ',' << measure_name(tm.measure);
            for (Eigen::Index k = 0; k < p.size(); ++k)
                o << ',' << csv::format_double(p[k]);
            o << ',' << argmax_category(std::vector<double>(p.data(), p.data() + p.size())) << '\n';
        }
    };
    const char* header = "subject_id,measure,p1,p2,p3,category\n";

    if (!opt.features.empty()) {
        // descriptors already built with the model's grid
        auto in = open_input(opt.features);
        const auto fm = parse_feature_csv(in);
        // a feature file carries one grid; only measures whose model uses it are scored
        std::vector<const TrainedMeasure*> usable;
        for (const auto& tm : models)
            if (tm.lporm().feature_names == fm.names)
                usable.push_back(&tm);
        if (usable.empty())
            throw DataError("predict: feature columns match no model in the bundle", "FeatureMismatch");
        ctx.write("predictions.csv", [&](std::ostream& o) {
            o << header;
            for (const auto* tm : usable)
                write_probs(o, *tm, fm);
        });
        return;
    }
    if (opt.minutes.empty() || opt.demographics.empty())
        throw UsageError("predict needs --features, or --minutes with --demographics");

    auto in = open_input(opt.minutes);
    auto parsed = parse_minute_csv(in);
    auto clean = clean_traces(std::move(parsed.traces), std::move(parsed.gaps), cfg.nonwear, cfg.min_wear_minutes);
    const auto segments = segment_traces(clean.traces, cfg.changepoint, ctx.threads);
    const Dataset data = make_dataset(segments, load_demographics(opt.demographics), {});
    std::vector<std::string> ids;
    for (const auto& [id, segs] : data.segments)
        if (data.demographics.contains(id))
            ids.push_back(id);

    ctx.write("predictions.csv", [&](std::ostream& o) {
        o << header;
        for (const auto& tm : models)
            write_probs(o, tm, make_features(ids, data, tm.lporm().grid));
    });
    ctx.write("predict_filter_report.jsonl", [&](std::ostream& o) { write_filter_report(o, clean.events); });
}

void cmd_report(const Context& ctx, const Options& opt) {
    if (opt.curve_points < 2)
        throw UsageError("--curve-points must be at least 2");
    const auto models = load_model(ctx.cfg.out("model.json"));
    std::ostringstream selected;
    selected << "measure,predictor,lporm_selected,gam_significant\n";
    for (const auto& tm : models) {
        const auto& lp = tm.lporm();
        const std::string measure(measure_name(tm.measure));
        std::map<std::string, bool> gam_sig;
        if (tm.gam) {
            for (std::size_t j = 0; j < tm.gam->logits.size(); ++j) {
                const auto& logit = tm.gam->logits[j];
                ctx.write("curves/" + measure + "_logit" + std::to_string(j + 1) + ".csv", [&](std::ostream& o) {
                    o << "predictor,x,fit,se\n";
                    for (const auto& term : logit.terms) {
                        const double lo = term.linear ? term.xbar : term.knots.front();
                        const double hi = term.linear ? term.xbar : term.knots.back();
                        std::vector<double> grid;
                        if (term.linear && term.knots.size() >= 2)
                            grid = {term.knots.front(), term.knots.back()};
                        else
                            for (int g = 0; g < opt.curve_points; ++g)
                                grid.push_back(lo + (hi - lo) * g / (opt.curve_points - 1));
                        write_curve_csv(o, term.name, smooth_curve(term, grid));
                    }
                });
                for (const auto& term : logit.terms)
                    gam_sig[term.name] = gam_sig[term.name] || smooth_significant(term);
            }
        }
        const auto active = lp.active_features();
        for (std::size_t f = 0; f < lp.feature_names.size(); ++f) {
            const bool sel = std::find(active.begin(), active.end(), f) != active.end();
            const auto it = gam_sig.find(lp.feature_names[f]);
            selected << measure << ',' << lp.feature_names[f] << ',' << (sel ? 1 : 0) << ','
                     << (it != gam_sig.end() && it->second ? 1 : 0) << '\n';
        }
    }
    ctx.write("selected_predictors.csv", [&](std::ostream& o) { o << selected.str(); });
}

int fail(ErrorKind kind, const std::string& code, const std::string& message) {
    const char* names[] = {"", "usage", "data", "numerical"};
    json err = {{"error", {{"kind", names[static_cast<int>(kind)]}, {"code", code}, {"message", message}}}};
    std::cerr << err.dump() << '\n';
    return static_cast<int>(kind);
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"actiprofile: daily activity profiles from minute-level activity counts, and ordinal models "
                 "of physical performance built on them"};
    app.require_subcommand(1);
    Options opt;

    auto common = [&](CLI::App* sc) {
        sc->add_option("--config", opt.config, "Run configuration (JSON); defaults apply to absent keys");
        sc->add_option("--out", opt.out, "Working directory for inputs and outputs (overrides paths.output_dir)");
        sc->add_option("--threads", opt.threads, "Worker threads; results do not depend on it")
            ->envname("ACTIPROFILE_THREADS")
            ->check(CLI::PositiveNumber);
        sc->add_option("--seed", opt.seed, "Seed overriding the configuration");
    };

    auto* simulate = app.add_subcommand("simulate", "Generate a synthetic cohort (minutes, demographics, responses, ground truth)");
    common(simulate);
    auto* level_opt = simulate->add_option("--level", opt.level, "Bundled spec: high, low or drift (ignored when the config has a synth spec, unless given)");
    simulate->add_option("--subjects", opt.subjects, "Number of subjects");
    simulate->add_option("--days", opt.days, "Days per subject");
    simulate->add_option("--epoch", opt.epoch, "Data-collection wave; later waves apply template drift");

    auto* ingest = app.add_subcommand("ingest", "Parse minute counts, flag non-wear, keep valid days");
    common(ingest);
    auto* segment = app.add_subcommand("segment", "Change-point segmentation of every valid day");
    common(segment);
    auto* profile = app.add_subcommand("profile", "Activity class grids, daily profiles and descriptors per configured width");
    common(profile);

    auto* train = app.add_subcommand("train", "Cross-validate width and lambda, refit LPORM (and the GAM) per measure");
    common(train);
    train->add_option("--measure", opt.measures, "Restrict to these measures (400MWT, 20MPACE, 5CSPACE)");
    train->add_flag("--no-profile", opt.no_profile, "Demographics-only model, no activity-class features");
    train->add_flag("--no-gam", opt.no_gam, "Skip the additive model");
    train->add_flag("--gam-all-predictors", opt.gam_all_predictors, "GAM on every predictor instead of LPORM's active set");

    auto* evaluate = app.add_subcommand("evaluate", "Held-out (and optional later-epoch) AUC and Gamma reports");
    common(evaluate);
    evaluate->add_option("--epoch-b", opt.epoch_b, "Directory of a later epoch with segments.csv, demographics.csv, responses.csv");

    auto* predict = app.add_subcommand("predict", "Category probabilities for new minute data from a saved model");
    common(predict);
    predict->add_option("--model", opt.model, "Model bundle (default <out>/model.json)");
    predict->add_option("--minutes", opt.minutes, "Minute-count CSV of the new subjects");
    predict->add_option("--demographics", opt.demographics, "Demographics CSV of the new subjects");
    predict->add_option("--features", opt.features, "Feature CSV built with the model's grid (instead of --minutes)");

    auto* report = app.add_subcommand("report", "Smooth-curve CSVs and the selected-predictor grid");
    common(report);
    report->add_option("--curve-points", opt.curve_points, "Grid points per smooth curve");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        return fail(ErrorKind::usage, "UsageError", e.what());
    }

    try {
        Context ctx;
        ctx.cfg = opt.config.empty() ? RunConfig{} : load_run_config(opt.config);
        if (!opt.out.empty())
            ctx.cfg.output_dir = opt.out;
        if (opt.seed)
            ctx.cfg.apply_seed(*opt.seed);
        if (!opt.measures.empty()) {
            ctx.cfg.measures.clear();
            for (const auto& m : opt.measures)
                ctx.cfg.measures.push_back(parse_measure(m));
        }
        if (opt.no_profile)
            ctx.cfg.no_profile = true;
        if (opt.no_gam)
            ctx.cfg.train.fit_gam = false;
        if (opt.gam_all_predictors)
            ctx.cfg.train.gam_active_only = false;
        ctx.cfg.validate();
        ctx.threads = opt.threads > 0 ? opt.threads : default_threads();
        ctx.hash = hex64(config_hash(ctx.cfg));
        ctx.command = app.get_subcommands().front()->get_name();

        if (ctx.command == "simulate")
            cmd_simulate(ctx, opt, level_opt->count() > 0);
        else if (ctx.command == "ingest")
            cmd_ingest(ctx);
        else if (ctx.command == "segment")
            cmd_segment(ctx);
        else if (ctx.command == "profile")
            cmd_profile(ctx);
        else if (ctx.command == "train")
            cmd_train(ctx);
        else if (ctx.command == "evaluate")
            cmd_evaluate(ctx, opt);
        else if (ctx.command == "predict")
            cmd_predict(ctx, opt);
        else if (ctx.command == "report")
            cmd_report(ctx, opt);
    } catch (const Error& e) {
        return fail(e.kind(), e.code(), e.what());
    } catch (const json::exception& e) {
        return fail(ErrorKind::data, "FormatError", e.what());
    } catch (const fs::filesystem_error& e) {
        return fail(ErrorKind::usage, "FileError", e.what());
    } catch (const std::exception& e) {
        return fail(ErrorKind::numerical, "InternalError", e.what());
    }
    return 0;
}
