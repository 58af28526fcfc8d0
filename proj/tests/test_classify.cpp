#include <catch2/catch_amalgamated.hpp>

#include <map>
#include <sstream>
#include <vector>

#include "hyps/classify.hpp"
#include "hyps/rng.hpp"

using Catch::Matchers::ContainsSubstring;
using Catch::Matchers::MessageMatches;
using hyps::ClassifyTask;
using hyps::Diagnosis;
using hyps::Sex;
using hyps::SubjectRecord;

namespace {

std::vector<SubjectRecord> parse(const std::string& csv) {
    std::istringstream is(csv);
    return hyps::read_subject_table(is);
}

// AUC as a literal count over positive/negative pairs.
double pair_count_auc(const std::vector<double>& s, const std::vector<int>& y) {
    double wins = 0.0, ties = 0.0;
    long long p = 0, n = 0;
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (y[i] != 1) continue;
        ++p;
        for (std::size_t j = 0; j < s.size(); ++j) {
            if (y[j] == 1) continue;
            if (s[i] > s[j]) wins += 1.0;
            else if (s[i] == s[j]) ties += 1.0;
        }
    }
    for (int v : y) n += v != 1;
    return (wins + 0.5 * ties) / (static_cast<double>(p) * static_cast<double>(n));
}

// Volumes separated by diagnosis, everything else nuisance.
std::vector<SubjectRecord> synthetic_cohort(std::size_t per_class, std::uint64_t seed) {
    hyps::Rng rng(seed);
    std::vector<SubjectRecord> recs;
    for (std::size_t i = 0; i < 2 * per_class; ++i) {
        SubjectRecord r;
        const bool ad = i >= per_class;
        r.id = (ad ? "AD" : "CN") + std::to_string(i);
        const double mean = ad ? 2.28 : 2.70;
        r.left_volume = rng.normal(mean, 0.12);
        r.right_volume = rng.normal(mean, 0.12);
        r.age = rng.uniform(65.0, 85.0);
        r.sex = rng.flip(0.5) ? Sex::M : Sex::F;
        r.diagnosis = ad ? Diagnosis::AD : Diagnosis::CN;
        recs.push_back(r);
    }
    return recs;
}

} // namespace

TEST_CASE("subject table parses with reordered and extra columns") {
    const std::string csv =
        "age,scanner,sex,id,left_volume_cm3,right_volume_cm3,diagnosis\n"
        "71.5,GE,M,s001,2.31,2.40,AD\n"
        "\n"
        "68.2,Siemens,F,s002,2.85,2.79,CN\r\n"
        "70.0,GE,F,s003,2.61,2.66,EMCI\n"
        "74.9,GE,M,s004,2.44,2.37,LMCI\n";
    std::vector<SubjectRecord> recs = parse(csv);
    REQUIRE(recs.size() == 4);
    REQUIRE(recs[0].id == "s001");
    REQUIRE(recs[0].left_volume == 2.31);
    REQUIRE(recs[0].right_volume == 2.40);
    REQUIRE(recs[0].age == 71.5);
    REQUIRE(recs[0].sex == Sex::M);
    REQUIRE(recs[0].diagnosis == Diagnosis::AD);
    REQUIRE(recs[1].sex == Sex::F);
    REQUIRE(recs[1].diagnosis == Diagnosis::CN);
    REQUIRE(recs[2].diagnosis == Diagnosis::EMCI);
    REQUIRE(recs[3].diagnosis == Diagnosis::LMCI);
}

TEST_CASE("subject table names the offending column and line") {
    REQUIRE_THROWS_MATCHES(parse("id,left_volume_cm3,age,sex,diagnosis\n"), hyps::DataError,
                           MessageMatches(ContainsSubstring("right_volume_cm3")));
    REQUIRE_THROWS_MATCHES(parse(""), hyps::DataError,
                           MessageMatches(ContainsSubstring("empty file")));

    const std::string head = "id,left_volume_cm3,right_volume_cm3,age,sex,diagnosis\n";
    REQUIRE_THROWS_MATCHES(parse(head + "s1,abc,2.4,70,M,AD\n"), hyps::DataError,
                           MessageMatches(ContainsSubstring("line 2") &&
                                          ContainsSubstring("left_volume_cm3")));
    REQUIRE_THROWS_MATCHES(parse(head + "s1,2.3,-1.0,70,M,AD\n"), hyps::DataError,
                           MessageMatches(ContainsSubstring("right_volume_cm3")));
    REQUIRE_THROWS_MATCHES(parse(head + "s1,2.3,2.4,70,x,AD\n"), hyps::DataError,
                           MessageMatches(ContainsSubstring("sex must be M or F")));
    REQUIRE_THROWS_MATCHES(parse(head + "s1,2.3,2.4,70,M,MCI\n"), hyps::DataError,
                           MessageMatches(ContainsSubstring("unknown diagnosis \"MCI\"")));
    REQUIRE_THROWS_MATCHES(parse(head + ",2.3,2.4,70,M,AD\n"), hyps::DataError,
                           MessageMatches(ContainsSubstring("empty id")));
    REQUIRE_THROWS_MATCHES(parse(head + "s1,2.3,2.4\n"), hyps::DataError,
                           MessageMatches(ContainsSubstring("expected 6 fields, got 3")));
    REQUIRE_THROWS_MATCHES(parse(head + "s1,2.3,2.4,70,M,AD\ns2,2.2,2.1,0,F,CN\n"),
                           hyps::DataError,
                           MessageMatches(ContainsSubstring("line 3") &&
                                          ContainsSubstring("age")));
}

TEST_CASE("task labels pick the progressed class as positive") {
    REQUIRE(hyps::task_label(Diagnosis::AD, ClassifyTask::AdVsCn) == 1);
    REQUIRE(hyps::task_label(Diagnosis::CN, ClassifyTask::AdVsCn) == -1);
    REQUIRE(hyps::task_label(Diagnosis::EMCI, ClassifyTask::AdVsCn) == 0);
    REQUIRE(hyps::task_label(Diagnosis::LMCI, ClassifyTask::AdVsCn) == 0);
    REQUIRE(hyps::task_label(Diagnosis::LMCI, ClassifyTask::EmciVsLmci) == 1);
    REQUIRE(hyps::task_label(Diagnosis::EMCI, ClassifyTask::EmciVsLmci) == -1);
    REQUIRE(hyps::task_label(Diagnosis::AD, ClassifyTask::EmciVsLmci) == 0);
    REQUIRE(hyps::task_label(Diagnosis::CN, ClassifyTask::EmciVsLmci) == 0);
}

TEST_CASE("feature rows are volume, volume, age, sex") {
    SubjectRecord a{"a", 2.3, 2.4, 71.0, Sex::M, Diagnosis::AD};
    SubjectRecord b{"b", 2.8, 2.7, 65.5, Sex::F, Diagnosis::CN};
    auto [x, y] = hyps::build_features({a, b}, ClassifyTask::AdVsCn);
    REQUIRE(x.rows() == 2);
    REQUIRE(x.cols() == 4);
    REQUIRE(x(0, 0) == 2.3);
    REQUIRE(x(0, 1) == 2.4);
    REQUIRE(x(0, 2) == 71.0);
    REQUIRE(x(0, 3) == 1.0);
    REQUIRE(x(1, 3) == 0.0);
    REQUIRE(y == std::vector<int>{1, -1});

    SubjectRecord c{"c77", 2.5, 2.5, 70.0, Sex::M, Diagnosis::EMCI};
    REQUIRE_THROWS_MATCHES(hyps::build_features({a, c}, ClassifyTask::AdVsCn), hyps::DataError,
                           MessageMatches(ContainsSubstring("EMCI") &&
                                          ContainsSubstring("c77")));
    REQUIRE_THROWS_AS(hyps::build_features({}, ClassifyTask::AdVsCn), hyps::DataError);
}

TEST_CASE("cross validation is stratified and deterministic") {
    std::vector<SubjectRecord> recs = synthetic_cohort(12, 77);
    auto scored = hyps::cross_validate(recs, ClassifyTask::AdVsCn, 5, 42);
    REQUIRE(scored.size() == recs.size());

    // Every subject appears exactly once.
    std::map<std::string, std::size_t> seen;
    for (const auto& s : scored) ++seen[s.id];
    REQUIRE(seen.size() == recs.size());

    // Per class, fold occupancy differs by at most one.
    std::map<std::size_t, std::size_t> pos_per_fold, neg_per_fold;
    for (const auto& s : scored) {
        REQUIRE(s.fold < 5);
        ++(s.label == 1 ? pos_per_fold : neg_per_fold)[s.fold];
    }
    for (const auto& by_fold : {pos_per_fold, neg_per_fold}) {
        std::size_t lo = recs.size(), hi = 0;
        for (auto [fold, cnt] : by_fold) {
            lo = std::min(lo, cnt);
            hi = std::max(hi, cnt);
        }
        REQUIRE(by_fold.size() == 5);
        REQUIRE(hi - lo <= 1);
    }

    auto again = hyps::cross_validate(recs, ClassifyTask::AdVsCn, 5, 42);
    for (std::size_t i = 0; i < scored.size(); ++i) {
        REQUIRE(scored[i].id == again[i].id);
        REQUIRE(scored[i].score == again[i].score);
        REQUIRE(scored[i].fold == again[i].fold);
    }

    auto reseeded = hyps::cross_validate(recs, ClassifyTask::AdVsCn, 5, 43);
    bool any_moved = false;
    for (std::size_t i = 0; i < scored.size(); ++i)
        any_moved = any_moved || scored[i].id != reseeded[i].id ||
                    scored[i].fold != reseeded[i].fold;
    REQUIRE(any_moved);
}

TEST_CASE("cross validation rejects undersized classes") {
    std::vector<SubjectRecord> recs = synthetic_cohort(12, 5);
    // Keep only 4 positives.
    std::vector<SubjectRecord> trimmed;
    std::size_t ad = 0;
    for (const auto& r : recs)
        if (r.diagnosis == Diagnosis::CN || ad++ < 4) trimmed.push_back(r);
    REQUIRE_THROWS_MATCHES(hyps::cross_validate(trimmed, ClassifyTask::AdVsCn, 5, 42),
                           hyps::InsufficientDataError,
                           MessageMatches(ContainsSubstring("at least 5") &&
                                          ContainsSubstring("4 positive")));
    REQUIRE_THROWS_AS(hyps::cross_validate(recs, ClassifyTask::AdVsCn, 1, 42),
                      hyps::ConfigError);
}

TEST_CASE("auc hand values") {
    REQUIRE(hyps::auc_exact({3, 2, 1, 0}, {1, 1, -1, -1}) == 1.0);
    REQUIRE(hyps::auc_exact({0, 1, 2, 3}, {1, 1, -1, -1}) == 0.0);
    REQUIRE(hyps::auc_exact({5, 5, 5, 5}, {1, 1, -1, -1}) == 0.5);
    // pos {2,1}, neg {2,1}: one win, two ties, one loss -> 0.5.
    REQUIRE(hyps::auc_exact({2, 1, 2, 1}, {1, 1, -1, -1}) == 0.5);
    // pos {4,2}, neg {3,1}: pairs 4>3,4>1,2<3,2>1 -> 3/4.
    REQUIRE(hyps::auc_exact({4, 2, 3, 1}, {1, 1, -1, -1}) == 0.75);
    REQUIRE_THROWS_AS(hyps::auc_exact({1, 2}, {1, 1}), hyps::UsageError);
    REQUIRE_THROWS_AS(hyps::auc_exact({1, 2}, {-1, -1}), hyps::UsageError);
}

TEST_CASE("auc equals the pair count on random tied data") {
    hyps::Rng rng(404);
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<double> s;
        std::vector<int> y;
        const std::size_t n = 5 + rng.below(40);
        bool has_pos = false, has_neg = false;
        for (std::size_t i = 0; i < n; ++i) {
            s.push_back(static_cast<double>(rng.below(8)));  // heavy ties
            const int label = rng.flip(0.5) ? 1 : -1;
            y.push_back(label);
            (label == 1 ? has_pos : has_neg) = true;
        }
        if (!has_pos || !has_neg) continue;
        REQUIRE(hyps::auc_exact(s, y) == pair_count_auc(s, y));
    }
}

TEST_CASE("report metrics from a fixed confusion") {
    // 93 positives (83 hits), 57 negatives (17 false alarms).
    std::vector<double> s;
    std::vector<int> y;
    auto add = [&](int n, double score, int label) {
        for (int i = 0; i < n; ++i) {
            s.push_back(score);
            y.push_back(label);
        }
    };
    add(83, 1.0, 1);
    add(10, -1.0, 1);
    add(17, 1.0, -1);
    add(40, -1.0, -1);
    hyps::ClassReport r = hyps::classification_report(s, y);
    REQUIRE(r.tp == 83);
    REQUIRE(r.fp == 17);
    REQUIRE(r.tn == 40);
    REQUIRE(r.fn == 10);
    REQUIRE(r.precision == Catch::Approx(0.83).margin(1e-12));
    REQUIRE(r.sensitivity == Catch::Approx(83.0 / 93.0).margin(1e-12));
    REQUIRE(r.specificity == Catch::Approx(40.0 / 57.0).margin(1e-12));
    REQUIRE(r.accuracy == Catch::Approx(123.0 / 150.0).margin(1e-12));
    const double f1 = 2.0 * r.precision * r.sensitivity / (r.precision + r.sensitivity);
    REQUIRE(r.f1 == Catch::Approx(f1).margin(1e-12));

    // Score exactly zero counts as a negative call.
    hyps::ClassReport z = hyps::classification_report({0.0, 0.5}, {1, -1});
    REQUIRE(z.fn == 1);
    REQUIRE(z.fp == 1);

    REQUIRE_THROWS_AS(hyps::classification_report({1.0}, {1}), hyps::UsageError);
    REQUIRE_THROWS_AS(hyps::classification_report({}, {}), hyps::UsageError);
    REQUIRE_THROWS_AS(hyps::classification_report({1.0, 2.0}, {1}), hyps::UsageError);
}

TEST_CASE("report formatting") {
    std::vector<double> s{2.0, 1.0, -1.0, -2.0};
    std::vector<int> y{1, 1, -1, -1};
    const std::string text = hyps::format_report(hyps::classification_report(s, y), "HyPS");
    REQUIRE_THAT(text, ContainsSubstring(
        "Method\tAUC\tPrecision\tSensitivity\tSpecificity\tF1-score\tAccuracy\n"));
    REQUIRE_THAT(text, ContainsSubstring(
        "HyPS\t1.0000\t1.0000\t1.0000\t1.0000\t1.0000\t1.0000\n"));
    REQUIRE_THAT(text, ContainsSubstring("Confusion\tTP=2\tFP=0\tTN=2\tFN=0\n"));
}

TEST_CASE("separated cohort cross-validates accurately") {
    std::vector<SubjectRecord> recs = synthetic_cohort(30, 2024);
    auto scored = hyps::cross_validate(recs, ClassifyTask::AdVsCn, 5, 42);
    hyps::ClassReport r = hyps::classification_report(scored);
    REQUIRE(r.accuracy >= 0.85);
    REQUIRE(r.auc >= 0.9);
}
