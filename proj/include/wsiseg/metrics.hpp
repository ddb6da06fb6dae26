#pragma once

#include "wsiseg/image.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace wsiseg {

struct Confusion {
    std::int64_t tp = 0;
    std::int64_t fp = 0;
    std::int64_t fn = 0;
    std::int64_t tn = 0;
};

Confusion confusion_counts(const BinaryMask& pred, const BinaryMask& truth);

struct PrfScores {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    bool degenerate = false;  // some denominator was zero and its ratio set to 0
};

PrfScores prf(std::int64_t tp, std::int64_t fp, std::int64_t fn);

struct MetricsReport {
    std::string slide_id;
    double dsc = 0.0;
    double iou = 0.0;
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    std::optional<double> avg_hausdorff;  // absent when either mask is empty
    std::int64_t tp = 0;
    std::int64_t fp = 0;
    std::int64_t fn = 0;
    std::int64_t tn = 0;
    bool both_empty = false;     // dsc = iou = 1 by convention
    bool prf_degenerate = false;
};

/// Confusion counts and ratios; avg_hausdorff is left absent.
MetricsReport overlap_metrics(const BinaryMask& pred, const BinaryMask& truth);

/// overlap_metrics plus average_hausdorff.
MetricsReport evaluate_masks(const BinaryMask& pred, const BinaryMask& truth, std::string slide_id = {});

/// Symmetric average of the mean nearest-foreground Euclidean distances in
/// both directions; nullopt when either mask is empty.
std::optional<double> average_hausdorff(const BinaryMask& a, const BinaryMask& b);

/// Exact squared Euclidean distance from every pixel to the nearest set pixel
/// of `mask` (separable lower-envelope transform). Infinity when mask is empty.
std::vector<double> squared_distance_transform(const BinaryMask& mask);

enum class WilcoxonMethod { Exact, NormalApprox };
enum class Alternative { TwoSided, Greater, Less };  // Greater: a tends to exceed b

struct WilcoxonResult {
    int n_effective = 0;
    double w_statistic = 0.0;  // min(T+, T-)
    double t_plus = 0.0;
    double p_value = 1.0;
    WilcoxonMethod method = WilcoxonMethod::Exact;
    Alternative alternative = Alternative::TwoSided;
};

inline constexpr int kWilcoxonExactMaxN = 25;

/// Zero differences are dropped and ties receive mid-ranks. For up to 25
/// nonzero differences the null distribution of T+ is computed exactly (it
/// equals enumerating every sign assignment of the ranks); beyond that a
/// normal approximation with tie and continuity corrections is used.
/// Throws DegenerateError when every difference is zero, InputError on
/// unequal or empty samples.
WilcoxonResult wilcoxon_signed_rank(std::span<const double> a, std::span<const double> b,
                                    Alternative alternative = Alternative::TwoSided);

std::string_view to_string(WilcoxonMethod m);
std::string_view to_string(Alternative a);

struct SummaryStats {
    std::size_t n = 0;
    double mean = 0.0;
    double median = 0.0;
    double q1 = 0.0;
    double q3 = 0.0;
    double min = 0.0;
    double max = 0.0;
};

/// Quartiles by linear interpolation between order statistics (h = (n-1)p).
SummaryStats summarize(std::span<const double> values);

struct CohortSummary {
    std::size_t slides = 0;
    SummaryStats dsc, iou, precision, recall, f1;
    std::optional<SummaryStats> avg_hausdorff;  // over slides where it is defined
};

CohortSummary aggregate(std::span<const MetricsReport> reports);

void write_report_json(const std::filesystem::path& path, const MetricsReport& report);
MetricsReport read_report_json(const std::filesystem::path& path);
/// One row per slide.
void write_reports_csv(const std::filesystem::path& path, std::span<const MetricsReport> reports);
/// One row per metric: metric,n,mean,median,q1,q3,min,max.
void write_summary_csv(const std::filesystem::path& path, const CohortSummary& summary);

}  // namespace wsiseg
