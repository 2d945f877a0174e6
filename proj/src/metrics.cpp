#include "gwcosal/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace gwcosal::metrics {

namespace {

constexpr double kNan = std::numeric_limits<double>::quiet_NaN();

struct Counts {
    long tp = 0;
    long fp = 0;
    long fn = 0;
    long tn = 0;
};

Counts counts_at(const EvalPair& pair, double threshold) {
    Counts c;
    for (std::size_t i = 0; i < pair.sal.size(); ++i) {
        const bool pred = pair.sal[i] >= threshold;
        const bool pos = pair.gt[i] != 0;
        if (pred && pos) ++c.tp;
        else if (pred && !pos) ++c.fp;
        else if (!pred && pos) ++c.fn;
        else ++c.tn;
    }
    return c;
}

long positive_count(const EvalPair& pair) {
    long n = 0;
    for (std::uint8_t g : pair.gt) n += g != 0 ? 1 : 0;
    return n;
}

double precision_of(const Counts& c) {
    const long predicted = c.tp + c.fp;
    return predicted == 0 ? 1.0 : static_cast<double>(c.tp) / static_cast<double>(predicted);
}

double recall_of(const Counts& c) {
    const long pos = c.tp + c.fn;
    return pos == 0 ? 0.0 : static_cast<double>(c.tp) / static_cast<double>(pos);
}

double image_auc(const EvalPair& pair) {
    double prev_fpr = 0.0;
    double prev_tpr = 0.0;
    double area = 0.0;
    for (int j = 255; j >= 0; --j) {
        const Counts c = counts_at(pair, static_cast<double>(j) / 255.0);
        const double tpr = recall_of(c);
        const double fpr = static_cast<double>(c.fp) / static_cast<double>(c.fp + c.tn);
        area += (fpr - prev_fpr) * (tpr + prev_tpr) / 2.0;
        prev_fpr = fpr;
        prev_tpr = tpr;
    }
    area += (1.0 - prev_fpr) * (1.0 + prev_tpr) / 2.0;
    return area;
}

double image_ap(const EvalPair& pair) {
    double prev_recall = 0.0;
    double ap = 0.0;
    for (int j = 255; j >= 0; --j) {
        const Counts c = counts_at(pair, static_cast<double>(j) / 255.0);
        const double p = precision_of(c);
        const double r = recall_of(c);
        ap += (r - prev_recall) * p;
        prev_recall = r;
    }
    return ap;
}

double image_f_adaptive(const EvalPair& pair) {
    const Counts c = counts_at(pair, adaptive_threshold(pair.sal));
    return f_measure(precision_of(c), recall_of(c));
}

} // namespace

void EvalPair::validate() const {
    const std::size_t expect = static_cast<std::size_t>(h) * static_cast<std::size_t>(w);
    if (h <= 0 || w <= 0 || sal.size() != expect || gt.size() != expect) {
        throw ShapeError("EvalPair '" + id + "': saliency/ground-truth sizes do not match " +
                         std::to_string(h) + "x" + std::to_string(w));
    }
    for (double v : sal) {
        if (!(v >= 0.0 && v <= 1.0)) {
            throw ShapeError("EvalPair '" + id + "': saliency value outside [0, 1]");
        }
    }
    for (std::uint8_t g : gt) {
        if (g > 1) throw ShapeError("EvalPair '" + id + "': ground truth is not binary");
    }
}

double f_measure(double precision, double recall, double eta2) {
    const double denom = eta2 * precision + recall;
    if (denom == 0.0) return 0.0;
    return (1.0 + eta2) * precision * recall / denom;
}

double adaptive_threshold(const std::vector<double>& sal) {
    if (sal.empty()) return 0.0;
    double sum = 0.0;
    for (double v : sal) sum += v;
    return std::min(2.0 * sum / static_cast<double>(sal.size()), 1.0);
}

PrCurve pr_curve(const std::vector<EvalPair>& pairs) {
    std::vector<const EvalPair*> usable;
    for (const EvalPair& p : pairs) {
        if (positive_count(p) > 0) usable.push_back(&p);
    }
    if (usable.empty()) {
        throw ShapeError("pr_curve: no evaluation pairs with a positive ground-truth pixel");
    }
    PrCurve curve;
    for (int j = 0; j < 256; ++j) {
        const double t = static_cast<double>(j) / 255.0;
        double p_sum = 0.0;
        double r_sum = 0.0;
        for (const EvalPair* pair : usable) {
            const Counts c = counts_at(*pair, t);
            p_sum += precision_of(c);
            r_sum += recall_of(c);
        }
        curve.points[static_cast<std::size_t>(j)] = PrPoint{
            t, p_sum / static_cast<double>(usable.size()),
            r_sum / static_cast<double>(usable.size())};
    }
    return curve;
}

double mean_f_adaptive(const std::vector<EvalPair>& pairs) {
    double sum = 0.0;
    long n = 0;
    for (const EvalPair& pair : pairs) {
        if (positive_count(pair) == 0) continue;
        sum += image_f_adaptive(pair);
        ++n;
    }
    if (n == 0) {
        throw ShapeError("mean_f_adaptive: no evaluation pairs with a positive ground-truth pixel");
    }
    return sum / static_cast<double>(n);
}

double mae(const std::vector<EvalPair>& pairs) {
    if (pairs.empty()) throw ShapeError("mae: empty evaluation list");
    double sum = 0.0;
    for (const EvalPair& pair : pairs) {
        double img = 0.0;
        for (std::size_t i = 0; i < pair.sal.size(); ++i) {
            img += std::abs(pair.sal[i] - static_cast<double>(pair.gt[i]));
        }
        sum += img / static_cast<double>(pair.sal.size());
    }
    return sum / static_cast<double>(pairs.size());
}

double roc_auc(const std::vector<EvalPair>& pairs) {
    double sum = 0.0;
    long n = 0;
    for (const EvalPair& pair : pairs) {
        const long pos = positive_count(pair);
        if (pos == 0 || pos == static_cast<long>(pair.gt.size())) continue;
        sum += image_auc(pair);
        ++n;
    }
    if (n == 0) throw ShapeError("roc_auc: no pair has both positive and negative pixels");
    return sum / static_cast<double>(n);
}

double average_precision(const std::vector<EvalPair>& pairs) {
    double sum = 0.0;
    long n = 0;
    for (const EvalPair& pair : pairs) {
        const long pos = positive_count(pair);
        if (pos == 0 || pos == static_cast<long>(pair.gt.size())) continue;
        sum += image_ap(pair);
        ++n;
    }
    if (n == 0) {
        throw ShapeError("average_precision: no pair has both positive and negative pixels");
    }
    return sum / static_cast<double>(n);
}

MetricsReport evaluate(const std::vector<EvalPair>& pairs) {
    if (pairs.empty()) throw ShapeError("evaluate: empty evaluation list");
    for (const EvalPair& p : pairs) p.validate();

    MetricsReport report;
    report.mae = mae(pairs);
    report.curve = pr_curve(pairs);
    report.mf = mean_f_adaptive(pairs);
    report.auc = roc_auc(pairs);
    report.ap = average_precision(pairs);

    for (const EvalPair& pair : pairs) {
        PerImageMetrics pm;
        pm.id = pair.id;
        double img_err = 0.0;
        for (std::size_t i = 0; i < pair.sal.size(); ++i) {
            img_err += std::abs(pair.sal[i] - static_cast<double>(pair.gt[i]));
        }
        pm.mae = img_err / static_cast<double>(pair.sal.size());

        const long pos = positive_count(pair);
        if (pos == 0) {
            pm.f_adaptive = kNan;
            pm.auc = kNan;
            pm.ap = kNan;
            report.excluded_no_positive.push_back(pair.id);
        } else if (pos == static_cast<long>(pair.gt.size())) {
            pm.f_adaptive = image_f_adaptive(pair);
            pm.auc = kNan;
            pm.ap = kNan;
            report.excluded_no_negative.push_back(pair.id);
        } else {
            pm.f_adaptive = image_f_adaptive(pair);
            pm.auc = image_auc(pair);
            pm.ap = image_ap(pair);
        }
        report.per_image.push_back(std::move(pm));
    }
    return report;
}

} // namespace gwcosal::metrics
