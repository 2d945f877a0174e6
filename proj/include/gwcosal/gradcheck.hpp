#ifndef GWCOSAL_GRADCHECK_HPP
#define GWCOSAL_GRADCHECK_HPP

#include <algorithm>
#include <cmath>
#include <functional>

#include "gwcosal/tensor.hpp"

namespace gwcosal {

inline double dot(const TensorD& a, const TensorD& b) {
    if (!(a.shape == b.shape)) {
        throw ShapeError("dot: shapes differ: " + a.shape.str() + " vs " + b.shape.str());
    }
    double s = 0.0;
    for (std::size_t i = 0; i < a.data.size(); ++i) s += a.data[i] * b.data[i];
    return s;
}

// Central-difference check of an analytic gradient, always at 64-bit
// precision. `forward` maps x to the op output; the op is probed through the
// scalar projection L(x) = <forward(x), probe>, whose exact gradient the
// caller supplies as `analytic` (i.e. the op's backward evaluated at
// dY = probe). Returns the max per-coordinate relative error with
// denominator max(|analytic|, |numeric|, 1e-8).
inline double grad_check(const std::function<TensorD(const TensorD&)>& forward,
                         const TensorD& x0,
                         const TensorD& analytic,
                         const TensorD& probe,
                         double eps) {
    if (!(analytic.shape == x0.shape)) {
        throw ShapeError("grad_check: analytic gradient shape differs from input");
    }
    TensorD x = x0;
    double max_rel = 0.0;
    for (std::size_t i = 0; i < x.data.size(); ++i) {
        const double orig = x.data[i];
        x.data[i] = orig + eps;
        const double fp = dot(forward(x), probe);
        x.data[i] = orig - eps;
        const double fm = dot(forward(x), probe);
        x.data[i] = orig;
        const double numeric = (fp - fm) / (2.0 * eps);
        const double a = analytic.data[i];
        const double denom = std::max({std::abs(a), std::abs(numeric), 1e-8});
        max_rel = std::max(max_rel, std::abs(a - numeric) / denom);
    }
    return max_rel;
}

// Variant for closures that already produce a scalar (end-to-end losses).
inline double grad_check_scalar(const std::function<double(const TensorD&)>& loss,
                                const TensorD& x0,
                                const TensorD& analytic,
                                double eps) {
    TensorD x = x0;
    double max_rel = 0.0;
    for (std::size_t i = 0; i < x.data.size(); ++i) {
        const double orig = x.data[i];
        x.data[i] = orig + eps;
        const double fp = loss(x);
        x.data[i] = orig - eps;
        const double fm = loss(x);
        x.data[i] = orig;
        const double numeric = (fp - fm) / (2.0 * eps);
        const double a = analytic.data[i];
        const double denom = std::max({std::abs(a), std::abs(numeric), 1e-8});
        max_rel = std::max(max_rel, std::abs(a - numeric) / denom);
    }
    return max_rel;
}

struct FdReport {
    double max_rel = 0.0;     // worst relative error over smooth coordinates
    long total = 0;           // coordinates checked
    long kink = 0;            // coordinates whose +/-eps window straddles a kink
    long envelope_fail = 0;   // kink coordinates whose analytic value escapes
                              // the one-sided slope envelope
};

// Per-coordinate central-difference check for losses over piecewise-smooth
// networks (ReLU, max-pooling). A coordinate whose two-scale estimates
// (eps and eps/4) disagree has a kink inside the probe window, where the
// central difference is not an oracle for the derivative; such coordinates
// are instead required to carry an analytic value inside the envelope of the
// two one-sided slopes. Everything else must match at `max_rel`.
inline FdReport fd_check_scalar(const std::function<double(const TensorD&)>& loss,
                                const TensorD& x0, const TensorD& analytic, double eps) {
    TensorD x = x0;
    FdReport report;
    report.total = static_cast<long>(x.data.size());
    const double f0 = loss(x);
    for (std::size_t i = 0; i < x.data.size(); ++i) {
        const double orig = x.data[i];
        const auto at = [&](double delta) {
            x.data[i] = orig + delta;
            const double v = loss(x);
            x.data[i] = orig;
            return v;
        };
        const double fp = at(eps);
        const double fm = at(-eps);
        const double n1 = (fp - fm) / (2.0 * eps);
        const double n2 = (at(eps / 4.0) - at(-eps / 4.0)) / (eps / 2.0);
        const double a = analytic.data[i];

        const double scale = std::max({std::abs(n1), std::abs(n2), 1e-6});
        if (std::abs(n1 - n2) > 1e-3 * scale) {
            ++report.kink;
            const double up = (fp - f0) / eps;
            const double down = (f0 - fm) / eps;
            const double lo = std::min(up, down);
            const double hi = std::max(up, down);
            const double slack = 1e-3 * std::max({std::abs(lo), std::abs(hi), 1e-6});
            if (a < lo - slack || a > hi + slack) ++report.envelope_fail;
            continue;
        }
        const double denom = std::max({std::abs(a), std::abs(n1), 1e-8});
        report.max_rel = std::max(report.max_rel, std::abs(a - n1) / denom);
    }
    return report;
}

} // namespace gwcosal

#endif
