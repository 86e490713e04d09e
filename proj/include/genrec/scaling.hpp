#pragma once

// Offset power-law fit P(N) = P0 - (N/N0)^(-a) against the log-linear
// baseline P = a*log(N) + b. Points are (backbone parameter count, best
// validation metric); RMSE is reported on raw metric values.

#include <cstdint>
#include <string>
#include <vector>

#include "genrec/common.hpp"

namespace genrec::scaling {

struct ScalingPoint {
    double n = 0;  // backbone parameter count
    double p = 0;  // best validation metric, in (0, 1]
};

struct OffsetFit {
    double p0 = 0;   // saturation level; may exceed the metric bound
    double n0 = 0;   // scale parameter, > 0
    double a = 0;    // improvement rate, > 0
    double rmse = 0;
    int iterations = 0;

    double predict(double n) const;
    // Residual headroom at scale n: p0 - predict(n) = (n/n0)^(-a).
    double headroom(double n) const;
};

struct LogFit {
    double slope = 0;
    double intercept = 0;
    double rmse = 0;

    double predict(double n) const;
};

struct FitComparison {
    OffsetFit offset;
    LogFit log;
    double rmse_reduction = 0;  // 1 - rmse_offset / rmse_log
};

// Deduplicate by N keeping the max P, then sort by N ascending.
std::vector<ScalingPoint> dedupe_points(std::vector<ScalingPoint> points);

// Multi-start grid initialization followed by damped Gauss-Newton in
// (P0, log N0, softplus^-1 a). Requires >= 4 points with >= 3 distinct N.
OffsetFit fit_offset(const std::vector<ScalingPoint>& points);

// Closed-form OLS in (log N, P). Requires >= 2 distinct N.
LogFit fit_log(const std::vector<ScalingPoint>& points);

FitComparison compare_fits(const std::vector<ScalingPoint>& points);

// Sum-of-squares gradient norm at the fitted parameters (first-order check).
double offset_gradient_norm(const OffsetFit& fit, const std::vector<ScalingPoint>& points);

}  // namespace genrec::scaling
