#include "genrec/scaling.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>

namespace genrec::scaling {

namespace {

double softplus(double s) {
    if (s > 30.0) return s;
    return std::log1p(std::exp(s));
}

double softplus_inv(double a) {
    if (a > 30.0) return a;
    return std::log(std::expm1(a));
}

double logistic(double s) { return 1.0 / (1.0 + std::exp(-s)); }

struct Params {
    double p0;
    double u;  // log N0
    double s;  // softplus^-1 a
};

double model_value(const Params& t, double log_n) {
    const double a = softplus(t.s);
    return t.p0 - std::exp(-a * (log_n - t.u));
}

double sum_sq(const Params& t, const std::vector<ScalingPoint>& pts) {
    double ss = 0.0;
    for (const auto& pt : pts) {
        const double r = pt.p - model_value(t, std::log(pt.n));
        ss += r * r;
    }
    return ss;
}

// Solve the symmetric 3x3 system (A + lambda I) x = b by Gaussian
// elimination with partial pivoting.
bool solve3(std::array<std::array<double, 3>, 3> A, std::array<double, 3> b,
            std::array<double, 3>& x) {
    std::array<int, 3> idx = {0, 1, 2};
    for (int col = 0; col < 3; ++col) {
        int piv = col;
        for (int r = col + 1; r < 3; ++r)
            if (std::fabs(A[idx[r]][col]) > std::fabs(A[idx[piv]][col])) piv = r;
        std::swap(idx[col], idx[piv]);
        const double diag = A[idx[col]][col];
        if (std::fabs(diag) < 1e-300) return false;
        for (int r = col + 1; r < 3; ++r) {
            const double f = A[idx[r]][col] / diag;
            for (int c = col; c < 3; ++c) A[idx[r]][c] -= f * A[idx[col]][c];
            b[idx[r]] -= f * b[idx[col]];
        }
    }
    for (int col = 2; col >= 0; --col) {
        double v = b[idx[col]];
        for (int c = col + 1; c < 3; ++c) v -= A[idx[col]][c] * x[c];
        x[col] = v / A[idx[col]][col];
    }
    return std::isfinite(x[0]) && std::isfinite(x[1]) && std::isfinite(x[2]);
}

struct GnResult {
    Params params;
    double ss;
    int iterations;
};

// Damped Gauss-Newton from one start. Converges on step norm < 1e-10 or
// 500 iterations.
GnResult gauss_newton(Params t, const std::vector<ScalingPoint>& pts) {
    double lambda = 1e-6;
    double ss = sum_sq(t, pts);
    int iter = 0;
    for (; iter < 500; ++iter) {
        std::array<std::array<double, 3>, 3> jtj{};
        std::array<double, 3> jtr{};
        const double a = softplus(t.s);
        const double da_ds = logistic(t.s);
        for (const auto& pt : pts) {
            const double log_n = std::log(pt.n);
            const double e = std::exp(-a * (log_n - t.u));
            const double r = pt.p - (t.p0 - e);
            // d model / d theta
            const double j0 = 1.0;
            const double j1 = -a * e;
            const double j2 = e * (log_n - t.u) * da_ds;
            const double j[3] = {j0, j1, j2};
            for (int i = 0; i < 3; ++i) {
                jtr[i] += j[i] * r;
                for (int k = 0; k < 3; ++k) jtj[i][k] += j[i] * j[k];
            }
        }
        bool stepped = false;
        for (int tries = 0; tries < 12; ++tries) {
            auto damped = jtj;
            for (int i = 0; i < 3; ++i) damped[i][i] += lambda;
            std::array<double, 3> step{};
            if (solve3(damped, jtr, step)) {
                const Params cand{t.p0 + step[0], t.u + step[1], t.s + step[2]};
                const double cand_ss = sum_sq(cand, pts);
                if (std::isfinite(cand_ss) && cand_ss <= ss) {
                    const double norm =
                        std::sqrt(step[0] * step[0] + step[1] * step[1] + step[2] * step[2]);
                    t = cand;
                    ss = cand_ss;
                    lambda = std::max(lambda * 0.3, 1e-12);
                    stepped = true;
                    if (norm < 1e-10) return {t, ss, iter + 1};
                    break;
                }
            }
            lambda *= 10.0;
        }
        if (!stepped) break;
    }
    return {t, ss, iter};
}

}  // namespace

double OffsetFit::predict(double n) const { return p0 - std::pow(n / n0, -a); }

double OffsetFit::headroom(double n) const { return std::pow(n / n0, -a); }

double LogFit::predict(double n) const { return slope * std::log(n) + intercept; }

std::vector<ScalingPoint> dedupe_points(std::vector<ScalingPoint> points) {
    std::sort(points.begin(), points.end(), [](const ScalingPoint& a, const ScalingPoint& b) {
        if (a.n != b.n) return a.n < b.n;
        return a.p > b.p;
    });
    std::vector<ScalingPoint> out;
    for (const auto& pt : points) {
        if (pt.n < 1.0) throw DataError("scaling point with N < 1");
        if (!(pt.p > 0.0 && pt.p <= 1.0)) throw DataError("scaling point with P outside (0,1]");
        if (out.empty() || out.back().n != pt.n) out.push_back(pt);
    }
    return out;
}

OffsetFit fit_offset(const std::vector<ScalingPoint>& raw) {
    const auto pts = dedupe_points(raw);
    if (raw.size() < 4) throw DataError("offset fit needs >= 4 points");
    size_t distinct = pts.size();
    if (distinct < 3) throw DataError("offset fit needs >= 3 distinct N");
    double pmin = pts.front().p, pmax = pts.front().p;
    double nmin = pts.front().n, nmax = pts.back().n;
    for (const auto& pt : pts) {
        pmin = std::min(pmin, pt.p);
        pmax = std::max(pmax, pt.p);
    }
    if (pmax - pmin < 1e-15) throw DataError("degenerate offset fit: all P identical");

    // Multi-start grid: a in {0.05..1.0}, N0 over the decades spanning the
    // observed N, P0 from maxP to maxP + 0.3.
    std::vector<double> a_grid;
    for (int i = 0; i < 10; ++i) a_grid.push_back(0.05 + (1.0 - 0.05) * i / 9.0);
    std::vector<double> u_grid;
    const int dec_lo = static_cast<int>(std::floor(std::log10(nmin))) - 1;
    const int dec_hi = static_cast<int>(std::ceil(std::log10(nmax))) + 1;
    for (int d = dec_lo; d <= dec_hi; ++d) u_grid.push_back(d * std::log(10.0));
    std::vector<double> p0_grid;
    for (int i = 0; i < 7; ++i) p0_grid.push_back(pmax + 0.3 * i / 6.0);

    GnResult best{{0, 0, 0}, std::numeric_limits<double>::infinity(), 0};
    double best_a = std::numeric_limits<double>::infinity();
    for (double p0 : p0_grid) {
        for (double u : u_grid) {
            for (double a : a_grid) {
                const GnResult res = gauss_newton({p0, u, softplus_inv(a)}, pts);
                const double res_a = softplus(res.params.s);
                const bool better =
                    res.ss < best.ss - 1e-15 ||
                    (std::fabs(res.ss - best.ss) <= 1e-15 && res_a < best_a);
                if (std::isfinite(res.ss) && better) {
                    best = res;
                    best_a = res_a;
                }
            }
        }
    }
    if (!std::isfinite(best.ss)) throw NumericError("offset fit failed to converge");

    // Polish with undamped steps so the first-order condition holds tightly.
    GnResult polished = gauss_newton(best.params, pts);
    if (polished.ss <= best.ss) best.params = polished.params, best.ss = polished.ss;

    OffsetFit fit;
    fit.p0 = best.params.p0;
    fit.n0 = std::exp(best.params.u);
    fit.a = softplus(best.params.s);
    fit.rmse = std::sqrt(best.ss / static_cast<double>(pts.size()));
    fit.iterations = best.iterations;
    return fit;
}

LogFit fit_log(const std::vector<ScalingPoint>& raw) {
    const auto pts = dedupe_points(raw);
    if (pts.size() < 2) throw DataError("log fit needs >= 2 distinct N");
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    const double n = static_cast<double>(pts.size());
    for (const auto& pt : pts) {
        const double x = std::log(pt.n);
        sx += x;
        sy += pt.p;
        sxx += x * x;
        sxy += x * pt.p;
    }
    const double denom = n * sxx - sx * sx;
    if (std::fabs(denom) < 1e-300) throw DataError("log fit needs >= 2 distinct N");
    LogFit fit;
    fit.slope = (n * sxy - sx * sy) / denom;
    fit.intercept = (sy - fit.slope * sx) / n;
    double ss = 0;
    for (const auto& pt : pts) {
        const double r = pt.p - fit.predict(pt.n);
        ss += r * r;
    }
    fit.rmse = std::sqrt(ss / n);
    return fit;
}

FitComparison compare_fits(const std::vector<ScalingPoint>& points) {
    FitComparison cmp;
    cmp.offset = fit_offset(points);
    cmp.log = fit_log(points);
    cmp.rmse_reduction = cmp.log.rmse > 0 ? 1.0 - cmp.offset.rmse / cmp.log.rmse
                                          : 0.0;
    return cmp;
}

double offset_gradient_norm(const OffsetFit& fit, const std::vector<ScalingPoint>& raw) {
    const auto pts = dedupe_points(raw);
    // Gradient of 0.5 * sum r^2 w.r.t. (P0, log N0, softplus^-1 a).
    const Params t{fit.p0, std::log(fit.n0), softplus_inv(fit.a)};
    const double a = softplus(t.s);
    const double da_ds = logistic(t.s);
    double g0 = 0, g1 = 0, g2 = 0;
    for (const auto& pt : pts) {
        const double log_n = std::log(pt.n);
        const double e = std::exp(-a * (log_n - t.u));
        const double r = pt.p - (t.p0 - e);
        g0 += -r;
        g1 += -r * (-a * e);
        g2 += -r * e * (log_n - t.u) * da_ds;
    }
    return std::sqrt(g0 * g0 + g1 * g1 + g2 * g2);
}

}  // namespace genrec::scaling
