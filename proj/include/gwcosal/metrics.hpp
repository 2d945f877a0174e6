#ifndef GWCOSAL_METRICS_HPP
#define GWCOSAL_METRICS_HPP

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "gwcosal/error.hpp"

namespace gwcosal::metrics {

// One saliency map / ground-truth pair. sal values in [0, 1]; gt strictly
// binary (ingestion thresholds 8-bit masks at >= 128).
struct EvalPair {
    std::string id;
    long h = 0;
    long w = 0;
    std::vector<double> sal;
    std::vector<std::uint8_t> gt;

    std::size_t numel() const { return sal.size(); }
    void validate() const;
};

struct PrPoint {
    double threshold = 0.0;
    double precision = 0.0;
    double recall = 0.0;
};

// 256 points at thresholds t = j/255, j = 0..255. Binarization is sal >= t;
// precision is defined as 1 when nothing is predicted positive.
struct PrCurve {
    std::array<PrPoint, 256> points{};
};

// F = (1 + eta2) * P * R / (eta2 * P + R); 0 when the denominator is 0.
double f_measure(double precision, double recall, double eta2 = 0.3);

// t = min(2 * mean(sal), 1).
double adaptive_threshold(const std::vector<double>& sal);

// Dataset curve: unweighted mean of the per-image curves at matched
// thresholds. Pairs with empty ground truth are skipped; an empty (or fully
// skipped) list is rejected.
PrCurve pr_curve(const std::vector<EvalPair>& pairs);

// Mean F-measure at the per-image adaptive threshold, eta2 = 0.3.
double mean_f_adaptive(const std::vector<EvalPair>& pairs);

// Mean over images of the per-pixel mean absolute error; uses every pair.
double mae(const std::vector<EvalPair>& pairs);

// Area under the ROC curve over the 256 thresholds plus the (0,0) and (1,1)
// endpoints, trapezoidal, averaged over images. Pairs lacking a positive or
// a negative pixel are excluded (recorded via the report's excluded list).
double roc_auc(const std::vector<EvalPair>& pairs);

// Area under the per-image PR curve swept over the 256 thresholds (recall on
// x, step integration), averaged over images; exclusions as for roc_auc.
double average_precision(const std::vector<EvalPair>& pairs);

struct PerImageMetrics {
    std::string id;
    double mae = 0.0;
    // NaN when the image was excluded from threshold-based metrics.
    double f_adaptive = 0.0;
    double auc = 0.0;
    double ap = 0.0;
};

struct MetricsReport {
    double mf = 0.0;
    double mae = 0.0;
    double auc = 0.0;
    double ap = 0.0;
    PrCurve curve;
    std::vector<PerImageMetrics> per_image;
    std::vector<std::string> excluded_no_positive; // skipped by PR/mF/AUC/AP
    std::vector<std::string> excluded_no_negative; // skipped by AUC/AP only
};

MetricsReport evaluate(const std::vector<EvalPair>& pairs);

} // namespace gwcosal::metrics

#endif
