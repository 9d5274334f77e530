#include <gtest/gtest.h>

#include <random>
#include <sstream>

#include "actiprofile/ingest.hpp"

#include "oracles.hpp"

using namespace actiprofile;

namespace {

MinuteTrace trace_from(std::vector<std::int32_t> counts, std::string id = "s1", int day = 0) {
    MinuteTrace t;
    t.subject_id = std::move(id);
    t.day_index = day;
    counts.resize(minutes_per_day, 500);
    t.counts = std::move(counts);
    return t;
}

} // namespace

TEST(ParseMinuteCsv, HeaderOnlyGivesEmptyCollection) {
    std::istringstream in("subject_id,day_index,minute,counts\n");
    auto parsed = parse_minute_csv(in);
    EXPECT_TRUE(parsed.traces.empty());
    EXPECT_TRUE(parsed.gaps.empty());
}

TEST(ParseMinuteCsv, FullDayOfZeros) {
    std::ostringstream s;
    s << "subject_id,day_index,minute,counts\n";
    for (int m = 0; m < 1440; ++m)
        s << "A,0," << m << ",0\n";
    std::istringstream in(s.str());
    auto parsed = parse_minute_csv(in);
    ASSERT_EQ(parsed.traces.size(), 1u);
    EXPECT_EQ(parsed.traces[0].subject_id, "A");
    EXPECT_EQ(std::count(parsed.traces[0].counts.begin(), parsed.traces[0].counts.end(), 0), 1440);
    EXPECT_EQ(parsed.traces[0].wear_minutes(), 1440);
    EXPECT_TRUE(parsed.gaps.empty());
}

TEST(ParseMinuteCsv, MissingLastMinuteIsFilledAndReported) {
    std::ostringstream s;
    s << "subject_id,day_index,minute,counts\n";
    for (int m = 0; m < 1439; ++m)
        s << "A,2," << m << ",7\n";
    std::istringstream in(s.str());
    auto parsed = parse_minute_csv(in);
    ASSERT_EQ(parsed.traces.size(), 1u);
    EXPECT_EQ(parsed.traces[0].counts[1439], 0);
    EXPECT_EQ(parsed.traces[0].counts[1438], 7);
    ASSERT_EQ(parsed.gaps.size(), 1u);
    EXPECT_EQ(parsed.gaps[0].kind, FilterEvent::Kind::filled_gap);
    EXPECT_EQ(parsed.gaps[0].minute, 1439);
    EXPECT_EQ(parsed.gaps[0].length, 1);
    EXPECT_EQ(parsed.gaps[0].day_index, 2);
}

TEST(ParseMinuteCsv, TracesSortedBySubjectAndDay) {
    std::istringstream in("subject_id,day_index,minute,counts\nB,1,0,1\nA,3,0,1\nA,0,5,1\n");
    auto parsed = parse_minute_csv(in);
    ASSERT_EQ(parsed.traces.size(), 3u);
    EXPECT_EQ(parsed.traces[0].subject_id, "A");
    EXPECT_EQ(parsed.traces[0].day_index, 0);
    EXPECT_EQ(parsed.traces[1].day_index, 3);
    EXPECT_EQ(parsed.traces[2].subject_id, "B");
}

TEST(ParseMinuteCsv, Errors) {
    auto parse = [](const std::string& body) {
        std::istringstream in("subject_id,day_index,minute,counts\n" + body);
        return parse_minute_csv(in);
    };
    try {
        parse("A,0,0,1\nA,0,1\n");
        FAIL() << "expected a parse error";
    } catch (const ParseError& e) {
        EXPECT_EQ(e.line, 3u);
        EXPECT_EQ(e.kind(), ErrorKind::data);
    }
    EXPECT_THROW(parse("A,0,0,1\nA,0,0,2\n"), ParseError);   // duplicate minute
    EXPECT_THROW(parse("A,0,0,-1\n"), ParseError);
    EXPECT_THROW(parse("A,0,1440,1\n"), ParseError);
    EXPECT_THROW(parse("A,zero,0,1\n"), ParseError);
    EXPECT_THROW(parse("A,0,0,1.5\n"), ParseError);
    std::istringstream wrong_header("id,day,minute,counts\n");
    EXPECT_THROW(parse_minute_csv(wrong_header), ParseError);
}

TEST(ParseMinuteCsv, ToleratesBomCrLfAndBlankLines) {
    std::istringstream in("\xEF\xBB\xBFsubject_id,day_index,minute,counts\r\nA,0,0,3\r\n\r\nA,0,1,4\r\n");
    auto parsed = parse_minute_csv(in);
    ASSERT_EQ(parsed.traces.size(), 1u);
    EXPECT_EQ(parsed.traces[0].counts[0], 3);
    EXPECT_EQ(parsed.traces[0].counts[1], 4);
}

TEST(ParseMinuteCsv, RoundTrip) {
    std::mt19937_64 rng(3);
    std::vector<MinuteTrace> traces{trace_from(oracle::random_counts(rng), "x", 0), trace_from(oracle::random_counts(rng), "y", 4)};
    std::stringstream s;
    write_minute_csv(s, traces);
    auto parsed = parse_minute_csv(s);
    ASSERT_EQ(parsed.traces.size(), 2u);
    EXPECT_EQ(parsed.traces[0].counts, traces[0].counts);
    EXPECT_EQ(parsed.traces[1].counts, traces[1].counts);
    EXPECT_TRUE(parsed.gaps.empty());
}

TEST(DetectNonwear, AllZerosIsNonwear) {
    auto t = detect_nonwear(trace_from(std::vector<std::int32_t>(1440, 0)));
    EXPECT_EQ(t.wear_minutes(), 0);
}

TEST(DetectNonwear, EightyNineZerosStayWear) {
    std::vector<std::int32_t> c(1440, 500);
    std::fill(c.begin() + 300, c.begin() + 389, 0);
    auto t = detect_nonwear(trace_from(c));
    EXPECT_EQ(t.wear_minutes(), 1440);
}

TEST(DetectNonwear, NinetyVersusNinetyOne) {
    std::vector<std::int32_t> c(1440, 500);
    std::fill(c.begin() + 300, c.begin() + 390, 0);
    EXPECT_EQ(detect_nonwear(trace_from(c)).wear_minutes(), 1440);
    c[390] = 0;
    EXPECT_EQ(detect_nonwear(trace_from(c)).wear_minutes(), 1440 - 91);
}

TEST(DetectNonwear, InterruptedWindow) {
    // 95 zeros, counts (50, 80), 10 zeros: one 107-minute window
    std::vector<std::int32_t> c(1440, 500);
    const int s = 200;
    std::fill(c.begin() + s, c.begin() + s + 95, 0);
    c[s + 95] = 50;
    c[s + 96] = 80;
    std::fill(c.begin() + s + 97, c.begin() + s + 107, 0);
    auto t = detect_nonwear(trace_from(c));
    EXPECT_EQ(t.wear_minutes(), 1440 - 107);
    for (int m = s; m < s + 107; ++m)
        EXPECT_FALSE(t.wear[m]) << m;
    EXPECT_TRUE(t.wear[s - 1]);
    EXPECT_TRUE(t.wear[s + 107]);
}

TEST(DetectNonwear, InterruptionRules) {
    std::vector<std::int32_t> base(1440, 500);
    std::fill(base.begin() + 100, base.begin() + 160, 0);
    std::fill(base.begin() + 163, base.begin() + 223, 0);
    // three-minute interruption breaks the chain: two 60-minute runs, both too short
    auto c = base;
    c[160] = c[161] = c[162] = 10;
    EXPECT_EQ(detect_nonwear(trace_from(c)).wear_minutes(), 1440);
    // two-minute interruption bridges: 60 + 2 + 61 zeros
    c = base;
    c[160] = c[161] = 10;
    c[162] = 0;
    EXPECT_EQ(detect_nonwear(trace_from(c)).wear_minutes(), 1440 - 123);
    // an interruption minute at 100 counts breaks it
    c[161] = 100;
    EXPECT_EQ(detect_nonwear(trace_from(c)).wear_minutes(), 1440);
}

TEST(DetectNonwear, WindowDoesNotAbsorbTrailingInterruption) {
    std::vector<std::int32_t> c(1440, 500);
    std::fill(c.begin() + 100, c.begin() + 200, 0);
    c[200] = 20;   // low minute followed by activity, not a bridge
    auto t = detect_nonwear(trace_from(c));
    EXPECT_EQ(t.wear_minutes(), 1440 - 100);
    EXPECT_TRUE(t.wear[200]);
}

TEST(DetectNonwear, RandomizedPropertiesAgainstOracle) {
    std::mt19937_64 rng(20240101);
    for (int trial = 0; trial < 500; ++trial) {
        auto t = detect_nonwear(trace_from(oracle::random_counts(rng)));
        const auto expect = oracle::nonwear(t.counts);
        int nonwear = 0;
        for (int m = 0; m < 1440; ++m) {
            ASSERT_EQ(!t.wear[m], expect[m]) << "trial " << trial << " minute " << m;
            nonwear += !t.wear[m];
        }
        // partition
        ASSERT_EQ(t.wear_minutes() + nonwear, 1440);
        // idempotence
        ASSERT_EQ(detect_nonwear(t).wear, t.wear);
        // every maximal non-wear run is >= 91 minutes, starts and ends on zero counts,
        // and its interruptions are short and low
        for (int m = 0; m < 1440;) {
            if (t.wear[m]) {
                ++m;
                continue;
            }
            int e = m;
            while (e < 1440 && !t.wear[e])
                ++e;
            ASSERT_GE(e - m, 91);
            ASSERT_EQ(t.counts[m], 0);
            ASSERT_EQ(t.counts[e - 1], 0);
            int run = 0;
            for (int k = m; k < e; ++k) {
                run = t.counts[k] == 0 ? 0 : run + 1;
                ASSERT_LE(run, 2);
                ASSERT_LT(t.counts[k], 100);
            }
            m = e;
        }
    }
}

TEST(ValidDays, Boundaries) {
    auto with_wear = [](int wear, int day) {
        MinuteTrace t = trace_from({}, "s", day);
        std::fill(t.wear.begin() + wear, t.wear.end(), false);
        return t;
    };
    auto v = valid_days({with_wear(1440, 0), with_wear(599, 1), with_wear(600, 2)});
    ASSERT_EQ(v.kept.size(), 2u);
    EXPECT_EQ(v.kept[0].day_index, 0);
    EXPECT_EQ(v.kept[1].day_index, 2);
    ASSERT_EQ(v.events.size(), 1u);
    EXPECT_EQ(v.events[0].kind, FilterEvent::Kind::dropped_day);
    EXPECT_EQ(v.events[0].length, 599);
}

TEST(ValidDays, SubjectWithoutValidDaysIsReported) {
    MinuteTrace t = trace_from({}, "gone", 0);
    std::fill(t.wear.begin(), t.wear.end(), false);
    auto v = valid_days({t});
    EXPECT_TRUE(v.kept.empty());
    ASSERT_EQ(v.events.size(), 2u);
    EXPECT_EQ(v.events[1].kind, FilterEvent::Kind::no_valid_days);
    EXPECT_EQ(v.events[1].subject_id, "gone");
    EXPECT_EQ(to_json(v.events[1]).at("event"), "no_valid_days");
}

TEST(ValidDays, MonotoneInThreshold) {
    std::mt19937_64 rng(5);
    std::vector<MinuteTrace> traces;
    for (int d = 0; d < 40; ++d)
        traces.push_back(detect_nonwear(trace_from(oracle::random_counts(rng), "s", d)));
    std::size_t previous = traces.size() + 1;
    for (int threshold = 0; threshold <= 1440; threshold += 60) {
        const auto kept = valid_days(traces, threshold).kept.size();
        EXPECT_LE(kept, previous);
        previous = kept;
    }
}

TEST(Demographics, ParseAndRoundTrip) {
    std::istringstream in("subject_id,bmi,age,sex,height_cm,oa_status\nA,28.5,61,M,175.5,incidence\n"
                          "B,31,70,F,160,control\n");
    auto rows = parse_demographics_csv(in);
    ASSERT_EQ(rows.size(), 2u);
    EXPECT_EQ(rows[0].sex, Sex::male);
    EXPECT_EQ(rows[0].oa_status, OaStatus::incidence);
    EXPECT_DOUBLE_EQ(rows[1].height_cm, 160.0);
    std::stringstream s;
    write_demographics_csv(s, rows);
    auto again = parse_demographics_csv(s);
    ASSERT_EQ(again.size(), 2u);
    EXPECT_EQ(again[0].subject_id, "A");
    EXPECT_DOUBLE_EQ(again[0].bmi, 28.5);
    EXPECT_EQ(again[1].oa_status, OaStatus::control);
}

TEST(Demographics, Errors) {
    auto parse = [](const std::string& row) {
        std::istringstream in("subject_id,bmi,age,sex,height_cm,oa_status\n" + row);
        return parse_demographics_csv(in);
    };
    EXPECT_THROW(parse("A,28,60,X,170,control\n"), ParseError);
    EXPECT_THROW(parse("A,28,60,M,170,healthy\n"), ParseError);
    EXPECT_THROW(parse("A,-1,60,M,170,control\n"), ParseError);
    EXPECT_THROW(parse("A,28,60,M,170,control\nA,28,60,M,170,control\n"), ParseError);
}

TEST(Responses, MissingCellsAndRoundTrip) {
    std::istringstream in("subject_id,400MWT,20MPACE,5CSPACE\nA,300.5,,0.4\nB,280,1.2,0.5\n");
    auto r = parse_response_csv(in);
    ASSERT_EQ(r.size(), 2u);
    EXPECT_DOUBLE_EQ(*r["A"][0], 300.5);
    EXPECT_FALSE(r["A"][1].has_value());
    std::stringstream s;
    write_response_csv(s, r);
    auto again = parse_response_csv(s);
    EXPECT_FALSE(again["A"][1].has_value());
    EXPECT_DOUBLE_EQ(*again["B"][1], 1.2);
    EXPECT_EQ(parse_measure("20MPACE"), Measure::pace20);
    EXPECT_THROW(parse_measure("10MWT"), UsageError);
}

TEST(CohortSummary, Examples) {
    auto demo = [](std::string id, double bmi, Sex sex) {
        Demographics d;
        d.subject_id = std::move(id);
        d.bmi = bmi;
        d.age = 60;
        d.height_cm = 170;
        d.sex = sex;
        return d;
    };
    auto one = cohort_summary({demo("a", 28.0, Sex::female)}, {});
    EXPECT_DOUBLE_EQ(one.bmi_mean, 28.0);
    EXPECT_DOUBLE_EQ(one.bmi_sd, 0.0);

    auto two = cohort_summary({demo("a", 26, Sex::female), demo("b", 30, Sex::male)}, {});
    EXPECT_DOUBLE_EQ(two.bmi_mean, 28.0);
    EXPECT_NEAR(two.bmi_sd, 2.8284, 1e-4);   // sample sd

    std::vector<MinuteTrace> traces{trace_from({}, "a", 0), trace_from({}, "a", 1), trace_from({}, "b", 0),
                                    trace_from({}, "c", 0), trace_from({}, "c", 1), trace_from({}, "c", 2)};
    auto four = cohort_summary({demo("a", 25, Sex::male), demo("b", 25, Sex::male), demo("c", 25, Sex::female),
                                demo("d", 25, Sex::female)},
                               traces);
    EXPECT_DOUBLE_EQ(four.pct_male, 50.0);
    EXPECT_DOUBLE_EQ(four.median_valid_days, 1.5);   // days {2, 1, 3, 0}
    EXPECT_EQ(four.n_subjects, 4u);

    EXPECT_THROW(cohort_summary({}, {}), DataError);
}
