#include "dcan/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "dcan/error.hpp"

namespace dcan {

namespace {

void check_dims(int64_t n, int64_t m, size_t truth, size_t other, const char* who) {
    if (n < 1) throw std::invalid_argument(std::string(who) + ": need at least one example");
    if (m < 1) throw std::invalid_argument(std::string(who) + ": need at least one label");
    if (truth != static_cast<size_t>(n * m) || other != static_cast<size_t>(n * m))
        throw ShapeError(std::string(who) + ": matrix sizes do not match N*m");
}

double f1_from_counts(int64_t tp, int64_t fp, int64_t fn) {
    const double denom = 2.0 * double(tp) + double(fp) + double(fn);
    return denom == 0.0 ? 0.0 : 2.0 * double(tp) / denom;
}

// Rank-statistic AUC over one binary column; nullopt when a class is absent.
// Tied scores receive the average rank, which credits each tied
// positive/negative pair exactly 0.5.
std::optional<double> binary_auc(const std::vector<double>& scores,
                                 const std::vector<uint8_t>& truth) {
    const size_t n = scores.size();
    int64_t pos = 0;
    for (uint8_t t : truth) pos += t ? 1 : 0;
    const int64_t neg = static_cast<int64_t>(n) - pos;
    if (pos == 0 || neg == 0) return std::nullopt;

    std::vector<size_t> order(n);
    std::iota(order.begin(), order.end(), size_t{0});
    std::sort(order.begin(), order.end(),
              [&](size_t a, size_t b) { return scores[a] < scores[b]; });

    double rank_sum_pos = 0.0;
    size_t i = 0;
    while (i < n) {
        size_t j = i;
        while (j + 1 < n && scores[order[j + 1]] == scores[order[i]]) ++j;
        const double avg_rank = 0.5 * (double(i + 1) + double(j + 1));  // 1-based
        for (size_t t = i; t <= j; ++t)
            if (truth[order[t]]) rank_sum_pos += avg_rank;
        i = j + 1;
    }
    const double u = rank_sum_pos - 0.5 * double(pos) * double(pos + 1);
    return u / (double(pos) * double(neg));
}

std::string format_metric(const std::optional<double>& v) {
    if (!v) return "na";
    std::ostringstream os;
    os.precision(17);
    os << *v;
    return os.str();
}

std::string format_metric(double v) { return format_metric(std::optional<double>(v)); }

}  // namespace

F1Scores f1_scores(int64_t n, int64_t m, const std::vector<uint8_t>& y_true,
                   const std::vector<uint8_t>& y_pred) {
    check_dims(n, m, y_true.size(), y_pred.size(), "f1_scores");
    F1Scores out;
    out.per_label.resize(static_cast<size_t>(m));
    int64_t tp_all = 0, fp_all = 0, fn_all = 0;
    for (int64_t j = 0; j < m; ++j) {
        auto& lab = out.per_label[static_cast<size_t>(j)];
        for (int64_t i = 0; i < n; ++i) {
            const bool t = y_true[static_cast<size_t>(i * m + j)] != 0;
            const bool p = y_pred[static_cast<size_t>(i * m + j)] != 0;
            lab.tp += (t && p) ? 1 : 0;
            lab.fp += (!t && p) ? 1 : 0;
            lab.fn += (t && !p) ? 1 : 0;
        }
        lab.precision = (lab.tp + lab.fp) == 0 ? 0.0 : double(lab.tp) / double(lab.tp + lab.fp);
        lab.recall = (lab.tp + lab.fn) == 0 ? 0.0 : double(lab.tp) / double(lab.tp + lab.fn);
        lab.f1 = f1_from_counts(lab.tp, lab.fp, lab.fn);
        tp_all += lab.tp;
        fp_all += lab.fp;
        fn_all += lab.fn;
        out.macro += lab.f1;
    }
    out.macro /= double(m);
    out.micro = f1_from_counts(tp_all, fp_all, fn_all);
    return out;
}

AucScores auc_scores(int64_t n, int64_t m, const std::vector<uint8_t>& y_true,
                     const std::vector<double>& y_score) {
    check_dims(n, m, y_true.size(), y_score.size(), "auc_scores");
    AucScores out;
    out.per_label.resize(static_cast<size_t>(m));

    std::vector<double> col_scores(static_cast<size_t>(n));
    std::vector<uint8_t> col_truth(static_cast<size_t>(n));
    double macro_sum = 0.0;
    int64_t macro_count = 0;
    for (int64_t j = 0; j < m; ++j) {
        for (int64_t i = 0; i < n; ++i) {
            col_scores[static_cast<size_t>(i)] = y_score[static_cast<size_t>(i * m + j)];
            col_truth[static_cast<size_t>(i)] = y_true[static_cast<size_t>(i * m + j)];
        }
        auto auc = binary_auc(col_scores, col_truth);
        out.per_label[static_cast<size_t>(j)] = auc;
        if (auc) {
            macro_sum += *auc;
            ++macro_count;
        }
    }
    if (macro_count > 0) out.macro = macro_sum / double(macro_count);
    out.micro = binary_auc(y_score, y_true);
    return out;
}

double precision_at_k(int64_t n, int64_t m, const std::vector<uint8_t>& y_true,
                      const std::vector<double>& y_score, int64_t k) {
    check_dims(n, m, y_true.size(), y_score.size(), "precision_at_k");
    if (k < 1 || k > m)
        throw std::invalid_argument("precision_at_k: k must lie in [1, num_labels]");

    std::vector<int64_t> idx(static_cast<size_t>(m));
    int64_t hits = 0;  // integer pooling keeps the mean exact under permutation
    for (int64_t i = 0; i < n; ++i) {
        std::iota(idx.begin(), idx.end(), int64_t{0});
        const double* row = y_score.data() + i * m;
        std::sort(idx.begin(), idx.end(), [&](int64_t a, int64_t b) {
            if (row[a] != row[b]) return row[a] > row[b];
            return a < b;
        });
        for (int64_t t = 0; t < k; ++t)
            hits += y_true[static_cast<size_t>(i * m + idx[static_cast<size_t>(t)])] ? 1 : 0;
    }
    return double(hits) / (double(k) * double(n));
}

EvalReport evaluate_all(int64_t n, int64_t m, const std::vector<uint8_t>& y_true,
                        const std::vector<double>& y_score, int64_t k, double threshold,
                        const std::vector<std::string>& label_names) {
    if (!label_names.empty() && static_cast<int64_t>(label_names.size()) != m)
        throw std::invalid_argument("evaluate_all: label name count mismatch");

    std::vector<uint8_t> y_pred(y_score.size());
    for (size_t i = 0; i < y_score.size(); ++i) y_pred[i] = y_score[i] >= threshold ? 1 : 0;

    const F1Scores f1 = f1_scores(n, m, y_true, y_pred);
    const AucScores auc = auc_scores(n, m, y_true, y_score);

    EvalReport report;
    report.micro_f1 = f1.micro;
    report.macro_f1 = f1.macro;
    report.micro_auc = auc.micro;
    report.macro_auc = auc.macro;
    report.k = k;
    report.precision_at_k = precision_at_k(n, m, y_true, y_score, k);
    report.per_label.resize(static_cast<size_t>(m));
    for (int64_t j = 0; j < m; ++j) {
        auto& out = report.per_label[static_cast<size_t>(j)];
        const auto& lab = f1.per_label[static_cast<size_t>(j)];
        out.label = label_names.empty() ? "label" + std::to_string(j)
                                        : label_names[static_cast<size_t>(j)];
        out.precision = lab.precision;
        out.recall = lab.recall;
        out.f1 = lab.f1;
        out.auc = auc.per_label[static_cast<size_t>(j)];
        out.support = lab.tp + lab.fn;
    }
    return report;
}

std::string report_to_text(const EvalReport& report) {
    std::ostringstream os;
    os << "macro_auc " << format_metric(report.macro_auc) << '\n';
    os << "micro_auc " << format_metric(report.micro_auc) << '\n';
    os << "macro_f1 " << format_metric(report.macro_f1) << '\n';
    os << "micro_f1 " << format_metric(report.micro_f1) << '\n';
    os << "p_at_" << report.k << ' ' << format_metric(report.precision_at_k) << '\n';
    for (const auto& lab : report.per_label) {
        os << "label " << lab.label << " precision " << format_metric(lab.precision)
           << " recall " << format_metric(lab.recall) << " f1 " << format_metric(lab.f1)
           << " auc " << format_metric(lab.auc) << " support " << lab.support << '\n';
    }
    return os.str();
}

std::string report_to_json_string(const EvalReport& report) {
    nlohmann::json j;
    j["macro_auc"] = report.macro_auc ? nlohmann::json(*report.macro_auc) : nlohmann::json();
    j["micro_auc"] = report.micro_auc ? nlohmann::json(*report.micro_auc) : nlohmann::json();
    j["macro_f1"] = report.macro_f1;
    j["micro_f1"] = report.micro_f1;
    j["precision_at_k"] = report.precision_at_k;
    j["k"] = report.k;
    j["per_label"] = nlohmann::json::array();
    for (const auto& lab : report.per_label) {
        nlohmann::json e;
        e["label"] = lab.label;
        e["precision"] = lab.precision;
        e["recall"] = lab.recall;
        e["f1"] = lab.f1;
        e["auc"] = lab.auc ? nlohmann::json(*lab.auc) : nlohmann::json();
        e["support"] = lab.support;
        j["per_label"].push_back(e);
    }
    return j.dump(2) + "\n";
}

}  // namespace dcan
