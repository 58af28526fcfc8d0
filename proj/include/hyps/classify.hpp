#pragma once
// SPDX-License-Identifier: Apache-2.0
//
// Diagnosis pipeline: subject table parsing, feature assembly
// [left_volume, right_volume, age, sex(M=1)], stratified seeded k-fold
// cross-validation around the SMO-trained RBF SVM, and a six-metric
// report (AUC, precision, sensitivity, specificity, F1, accuracy).
// AUC is computed with integer pair counts so it equals the
// Mann-Whitney statistic exactly, ties rank-averaged.

#include <algorithm>
#include <cstdint>
#include <iomanip>
#include <istream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "hyps/errors.hpp"
#include "hyps/matrix.hpp"
#include "hyps/rng.hpp"
#include "hyps/svm.hpp"

namespace hyps {

enum class Diagnosis { CN, AD, EMCI, LMCI };
enum class Sex { M, F };
enum class ClassifyTask { AdVsCn, EmciVsLmci };

inline const char* diagnosis_name(Diagnosis d) {
    switch (d) {
        case Diagnosis::CN: return "CN";
        case Diagnosis::AD: return "AD";
        case Diagnosis::EMCI: return "EMCI";
        case Diagnosis::LMCI: return "LMCI";
    }
    return "?";
}

struct SubjectRecord {
    std::string id;
    double left_volume = 0.0;   // cm^3
    double right_volume = 0.0;  // cm^3
    double age = 0.0;
    Sex sex = Sex::M;
    Diagnosis diagnosis = Diagnosis::CN;
};

// ---- subject table ---------------------------------------------------
// Comma-separated with a header line naming at least: id,
// left_volume_cm3, right_volume_cm3, age, sex, diagnosis (any column
// order; unknown columns ignored).

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char ch : line) {
        if (ch == ',') {
            out.push_back(cur);
            cur.clear();
        } else if (ch != '\r') {
            cur += ch;
        }
    }
    out.push_back(cur);
    for (std::string& s : out) {
        const std::size_t a = s.find_first_not_of(" \t");
        const std::size_t b = s.find_last_not_of(" \t");
        s = a == std::string::npos ? "" : s.substr(a, b - a + 1);
    }
    return out;
}

inline double parse_positive(const std::string& s, const char* field, std::size_t line_no) {
    std::size_t pos = 0;
    double v = 0.0;
    try {
        v = std::stod(s, &pos);
    } catch (const std::exception&) {
        pos = 0;
    }
    if (pos != s.size() || !(v > 0.0))
        throw DataError("subject table line " + std::to_string(line_no) + ": field " + field +
                        " must be a positive number, got \"" + s + "\"");
    return v;
}

} // namespace detail

inline std::vector<SubjectRecord> read_subject_table(std::istream& is) {
    std::string line;
    if (!std::getline(is, line)) throw DataError("subject table: empty file");
    const std::vector<std::string> header = detail::split_csv_line(line);
    std::map<std::string, std::size_t> col;
    for (std::size_t i = 0; i < header.size(); ++i) col[header[i]] = i;
    for (const char* req : {"id", "left_volume_cm3", "right_volume_cm3", "age", "sex", "diagnosis"})
        if (col.find(req) == col.end())
            throw DataError(std::string("subject table: missing column \"") + req + "\"");

    std::vector<SubjectRecord> out;
    std::size_t line_no = 1;
    while (std::getline(is, line)) {
        ++line_no;
        if (line.empty() || line == "\r") continue;
        const std::vector<std::string> f = detail::split_csv_line(line);
        if (f.size() < header.size())
            throw DataError("subject table line " + std::to_string(line_no) + ": expected " +
                            std::to_string(header.size()) + " fields, got " +
                            std::to_string(f.size()));
        SubjectRecord r;
        r.id = f[col["id"]];
        if (r.id.empty())
            throw DataError("subject table line " + std::to_string(line_no) + ": empty id");
        r.left_volume = detail::parse_positive(f[col["left_volume_cm3"]], "left_volume_cm3", line_no);
        r.right_volume = detail::parse_positive(f[col["right_volume_cm3"]], "right_volume_cm3", line_no);
        r.age = detail::parse_positive(f[col["age"]], "age", line_no);
        const std::string& sex = f[col["sex"]];
        if (sex == "M") r.sex = Sex::M;
        else if (sex == "F") r.sex = Sex::F;
        else
            throw DataError("subject table line " + std::to_string(line_no) +
                            ": field sex must be M or F, got \"" + sex + "\"");
        const std::string& dx = f[col["diagnosis"]];
        if (dx == "CN") r.diagnosis = Diagnosis::CN;
        else if (dx == "AD") r.diagnosis = Diagnosis::AD;
        else if (dx == "EMCI") r.diagnosis = Diagnosis::EMCI;
        else if (dx == "LMCI") r.diagnosis = Diagnosis::LMCI;
        else
            throw DataError("subject table line " + std::to_string(line_no) +
                            ": unknown diagnosis \"" + dx + "\"");
        out.push_back(std::move(r));
    }
    return out;
}

// ---- features --------------------------------------------------------

// Positive class is the disease-progressed one: AD, or LMCI.
inline int task_label(Diagnosis d, ClassifyTask task) {
    if (task == ClassifyTask::AdVsCn) {
        if (d == Diagnosis::AD) return 1;
        if (d == Diagnosis::CN) return -1;
    } else {
        if (d == Diagnosis::LMCI) return 1;
        if (d == Diagnosis::EMCI) return -1;
    }
    return 0;
}

inline std::pair<Matrix, std::vector<int>> build_features(const std::vector<SubjectRecord>& recs,
                                                          ClassifyTask task) {
    if (recs.empty()) throw DataError("build_features: no records");
    Matrix x(recs.size(), 4);
    std::vector<int> y(recs.size());
    for (std::size_t i = 0; i < recs.size(); ++i) {
        const SubjectRecord& r = recs[i];
        const int label = task_label(r.diagnosis, task);
        if (label == 0)
            throw DataError("build_features: diagnosis " +
                            std::string(diagnosis_name(r.diagnosis)) +
                            " does not belong to this task (subject " + r.id + ")");
        x(i, 0) = r.left_volume;
        x(i, 1) = r.right_volume;
        x(i, 2) = r.age;
        x(i, 3) = r.sex == Sex::M ? 1.0 : 0.0;
        y[i] = label;
    }
    return {std::move(x), std::move(y)};
}

// ---- cross-validation ------------------------------------------------

struct ScoredSubject {
    std::string id;
    double score;
    int label;
    std::size_t fold;
};

inline std::vector<ScoredSubject> cross_validate(const std::vector<SubjectRecord>& recs,
                                                 ClassifyTask task, std::size_t k = 5,
                                                 std::uint64_t seed = 42, double c = 1.0,
                                                 double gamma = 0.0) {
    if (k < 2) throw ConfigError("cross_validate: need k >= 2 folds");
    auto [x, y] = build_features(recs, task);

    std::vector<std::size_t> pos, neg;
    for (std::size_t i = 0; i < y.size(); ++i) (y[i] == 1 ? pos : neg).push_back(i);
    if (pos.size() < k || neg.size() < k)
        throw InsufficientDataError(
            "cross_validate: each class needs at least " + std::to_string(k) + " members, got " +
            std::to_string(pos.size()) + " positive / " + std::to_string(neg.size()) + " negative");

    Rng rng(seed);
    auto shuffle = [&rng](std::vector<std::size_t>& v) {
        for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[rng.below(i)]);
    };
    shuffle(pos);
    shuffle(neg);
    std::vector<std::size_t> fold_of(y.size());
    for (std::size_t i = 0; i < pos.size(); ++i) fold_of[pos[i]] = i % k;
    for (std::size_t i = 0; i < neg.size(); ++i) fold_of[neg[i]] = i % k;

    std::vector<ScoredSubject> out;
    out.reserve(recs.size());
    for (std::size_t fold = 0; fold < k; ++fold) {
        std::vector<std::size_t> train_idx, test_idx;
        for (std::size_t i = 0; i < y.size(); ++i)
            (fold_of[i] == fold ? test_idx : train_idx).push_back(i);
        Matrix xt(train_idx.size(), 4);
        std::vector<int> yt(train_idx.size());
        for (std::size_t r = 0; r < train_idx.size(); ++r) {
            for (std::size_t j = 0; j < 4; ++j) xt(r, j) = x(train_idx[r], j);
            yt[r] = y[train_idx[r]];
        }
        const SvmModel model = svm_train(xt, yt, c, gamma, seed * 1000 + fold + 1);
        for (std::size_t i : test_idx) {
            const std::vector<double> row = {x(i, 0), x(i, 1), x(i, 2), x(i, 3)};
            out.push_back({recs[i].id, svm_decision(model, row), y[i], fold});
        }
    }
    return out;
}

// ---- report ----------------------------------------------------------

struct ClassReport {
    double auc = 0.0, precision = 0.0, sensitivity = 0.0, specificity = 0.0, f1 = 0.0,
           accuracy = 0.0;
    long long tp = 0, fp = 0, tn = 0, fn = 0;
};

// AUC numerator as an exact integer: 2*wins + ties over all
// positive/negative pairs, accumulated per unique descending score.
inline double auc_exact(const std::vector<double>& scores, const std::vector<int>& labels) {
    std::vector<std::size_t> idx(scores.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    std::sort(idx.begin(), idx.end(),
              [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
    long long tp_above = 0, num2 = 0, npos = 0, nneg = 0;
    std::size_t i = 0;
    while (i < idx.size()) {
        std::size_t j = i;
        long long p = 0, q = 0;
        while (j < idx.size() && scores[idx[j]] == scores[idx[i]]) {
            if (labels[idx[j]] == 1) ++p;
            else ++q;
            ++j;
        }
        num2 += q * (2 * tp_above + p);
        tp_above += p;
        npos += p;
        nneg += q;
        i = j;
    }
    if (npos == 0 || nneg == 0)
        throw UsageError("auc: both classes must be present");
    return static_cast<double>(num2) / (2.0 * static_cast<double>(npos) * static_cast<double>(nneg));
}

inline ClassReport classification_report(const std::vector<double>& scores,
                                         const std::vector<int>& labels) {
    if (scores.size() != labels.size() || scores.empty())
        throw UsageError("classification_report: scores and labels must match and be non-empty");
    ClassReport r;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        const bool pred_pos = scores[i] > 0.0;
        if (labels[i] == 1) (pred_pos ? r.tp : r.fn)++;
        else (pred_pos ? r.fp : r.tn)++;
    }
    if (r.tp + r.fn == 0 || r.tn + r.fp == 0)
        throw UsageError("classification_report: single-class labels");
    auto ratio = [](long long a, long long b) {
        return b == 0 ? 0.0 : static_cast<double>(a) / static_cast<double>(b);
    };
    r.precision = ratio(r.tp, r.tp + r.fp);
    r.sensitivity = ratio(r.tp, r.tp + r.fn);
    r.specificity = ratio(r.tn, r.tn + r.fp);
    r.f1 = (r.precision + r.sensitivity) > 0.0
               ? 2.0 * r.precision * r.sensitivity / (r.precision + r.sensitivity)
               : 0.0;
    r.accuracy = ratio(r.tp + r.tn, r.tp + r.fp + r.tn + r.fn);
    r.auc = auc_exact(scores, labels);
    return r;
}

inline ClassReport classification_report(const std::vector<ScoredSubject>& pooled) {
    std::vector<double> s;
    std::vector<int> l;
    s.reserve(pooled.size());
    l.reserve(pooled.size());
    for (const ScoredSubject& p : pooled) {
        s.push_back(p.score);
        l.push_back(p.label);
    }
    return classification_report(s, l);
}

// Tab-separated, four decimals, confusion counts on a trailing line.
inline std::string format_report(const ClassReport& r, const std::string& method) {
    std::ostringstream ss;
    ss << "Method\tAUC\tPrecision\tSensitivity\tSpecificity\tF1-score\tAccuracy\n";
    ss << method << std::fixed << std::setprecision(4);
    for (double v : {r.auc, r.precision, r.sensitivity, r.specificity, r.f1, r.accuracy})
        ss << '\t' << v;
    ss << "\nConfusion\tTP=" << r.tp << "\tFP=" << r.fp << "\tTN=" << r.tn << "\tFN=" << r.fn
       << "\n";
    return ss.str();
}

} // namespace hyps
