#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace dcan {

struct LabelF1 {
    int64_t tp = 0, fp = 0, fn = 0;
    double precision = 0.0, recall = 0.0, f1 = 0.0;
};

struct F1Scores {
    double micro = 0.0;
    double macro = 0.0;
    std::vector<LabelF1> per_label;
};

struct AucScores {
    std::optional<double> micro;  // undefined when all pairs share one class
    std::optional<double> macro;  // averaged over labels with both classes present
    std::vector<std::optional<double>> per_label;
};

// The five reported metrics plus the per-label breakdown.
struct PerLabelReport {
    std::string label;
    double precision = 0.0, recall = 0.0, f1 = 0.0;
    std::optional<double> auc;
    int64_t support = 0;
};

struct EvalReport {
    std::optional<double> macro_auc, micro_auc;
    double macro_f1 = 0.0, micro_f1 = 0.0;
    double precision_at_k = 0.0;
    int64_t k = 5;
    std::vector<PerLabelReport> per_label;
};

// Matrices are row-major N x m. Micro pools TP/FP/FN across all labels; macro
// averages per-label F1 with the 0/0 -> 0 convention.
F1Scores f1_scores(int64_t n, int64_t m, const std::vector<uint8_t>& y_true,
                   const std::vector<uint8_t>& y_pred);

// Per-label AUC-ROC via the rank statistic (ties credited 0.5). Micro pools
// every (example, label) pair into one binary problem; macro skips labels
// lacking a positive or a negative.
AucScores auc_scores(int64_t n, int64_t m, const std::vector<uint8_t>& y_true,
                     const std::vector<double>& y_score);

// Fraction of the k highest-scored labels per example that are true, averaged
// over examples. Score ties break toward the lower label index.
double precision_at_k(int64_t n, int64_t m, const std::vector<uint8_t>& y_true,
                      const std::vector<double>& y_score, int64_t k);

EvalReport evaluate_all(int64_t n, int64_t m, const std::vector<uint8_t>& y_true,
                        const std::vector<double>& y_score, int64_t k, double threshold,
                        const std::vector<std::string>& label_names);

// Flat key/value lines, stable order, "na" for undefined AUCs.
std::string report_to_text(const EvalReport& report);
std::string report_to_json_string(const EvalReport& report);

}  // namespace dcan
