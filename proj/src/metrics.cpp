#include "lager/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include <fmt/format.h>

namespace lager::metrics {

namespace {

void check_pair(std::span<const double> x, std::span<const double> y, const char* what) {
    if (x.size() != y.size())
        throw ArgumentError(fmt::format("{}: series lengths differ ({} vs {})", what, x.size(), y.size()));
    if (x.size() < 2) throw ArgumentError(fmt::format("{}: needs at least 2 samples", what));
    for (std::size_t i = 0; i < x.size(); ++i) {
        if (!std::isfinite(x[i]) || !std::isfinite(y[i]))
            throw NumericError(fmt::format("{}: non-finite value at index {}", what, i));
    }
}

double mean(std::span<const double> x) {
    return std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
}

// Linear-interpolated quantile on sorted data (numpy's default).
double quantile_sorted(const std::vector<double>& sorted, double q) {
    const double pos = q * static_cast<double>(sorted.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, sorted.size() - 1);
    return sorted[lo] + (pos - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

}  // namespace

double pearson(std::span<const double> x, std::span<const double> y) {
    check_pair(x, y, "pearson");
    const double mx = mean(x), my = mean(y);
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double dx = x[i] - mx, dy = y[i] - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if (sxx == 0.0 || syy == 0.0) throw UndefinedCorrelation("correlation undefined: constant input");
    return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

std::vector<double> average_ranks(std::span<const double> x) {
    std::vector<std::size_t> idx(x.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
    std::vector<double> ranks(x.size());
    std::size_t i = 0;
    while (i < idx.size()) {
        std::size_t j = i;
        while (j + 1 < idx.size() && x[idx[j + 1]] == x[idx[i]]) ++j;
        const double r = 0.5 * static_cast<double>(i + j) + 1.0;
        for (std::size_t k = i; k <= j; ++k) ranks[idx[k]] = r;
        i = j + 1;
    }
    return ranks;
}

double spearman(std::span<const double> x, std::span<const double> y) {
    check_pair(x, y, "spearman");
    const auto rx = average_ranks(x);
    const auto ry = average_ranks(y);
    return pearson(rx, ry);
}

CorrelationResult correlate(std::span<const double> x, std::span<const double> y) {
    CorrelationResult r;
    r.n = x.size();
    try {
        r.pearson = pearson(x, y);
    } catch (const UndefinedCorrelation&) {
    }
    try {
        r.spearman = spearman(x, y);
    } catch (const UndefinedCorrelation&) {
    }
    return r;
}

std::vector<double> minmax_normalize(std::span<const double> x) {
    std::vector<double> out(x.size(), 0.5);
    if (x.empty()) return out;
    const auto [lo, hi] = std::minmax_element(x.begin(), x.end());
    const double range = *hi - *lo;
    if (!(range > 0.0)) return out;
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = std::clamp((x[i] - *lo) / range, 0.0, 1.0);
    return out;
}

double silverman_bandwidth(std::span<const double> x) {
    if (x.size() < 2) throw ArgumentError("kde: needs at least 2 samples");
    const double m = mean(x);
    double ss = 0.0;
    for (double v : x) ss += (v - m) * (v - m);
    const double sd = std::sqrt(ss / static_cast<double>(x.size() - 1));
    std::vector<double> sorted(x.begin(), x.end());
    std::sort(sorted.begin(), sorted.end());
    const double iqr = (quantile_sorted(sorted, 0.75) - quantile_sorted(sorted, 0.25)) / 1.34;
    double spread = std::min(sd, iqr);
    if (!(spread > 0.0)) spread = std::max(sd, iqr);
    if (!(spread > 0.0))
        throw ArgumentError("kde: Silverman bandwidth is zero (constant data); supply a bandwidth explicitly");
    return 0.9 * spread * std::pow(static_cast<double>(x.size()), -0.2);
}

double kde_at(std::span<const double> x, double bandwidth, double at) {
    static const double inv_sqrt_2pi = 1.0 / std::sqrt(2.0 * std::numbers::pi);
    double sum = 0.0;
    for (double xi : x) {
        const double u = (at - xi) / bandwidth;
        sum += inv_sqrt_2pi * std::exp(-0.5 * u * u);
    }
    return sum / (static_cast<double>(x.size()) * bandwidth);
}

double trapezoid(std::span<const double> grid, std::span<const double> y) {
    double area = 0.0;
    for (std::size_t i = 1; i < grid.size(); ++i) area += 0.5 * (y[i] + y[i - 1]) * (grid[i] - grid[i - 1]);
    return area;
}

DensityEstimate kde(std::span<const double> x, std::size_t grid_size, std::optional<double> bandwidth) {
    if (x.size() < 2) throw ArgumentError("kde: needs at least 2 samples");
    if (grid_size < 2) throw ArgumentError("kde: grid_size must be >= 2");
    for (double v : x) {
        if (!std::isfinite(v)) throw NumericError("kde: non-finite sample");
    }
    if (bandwidth && !(*bandwidth > 0.0)) throw ArgumentError("kde: bandwidth must be > 0");
    DensityEstimate est;
    est.bandwidth = bandwidth ? *bandwidth : silverman_bandwidth(x);
    const auto [lo, hi] = std::minmax_element(x.begin(), x.end());
    const double start = *lo - 3.0 * est.bandwidth;
    const double stop = *hi + 3.0 * est.bandwidth;
    est.grid.resize(grid_size);
    est.density.resize(grid_size);
    for (std::size_t i = 0; i < grid_size; ++i) {
        est.grid[i] = start + (stop - start) * static_cast<double>(i) / static_cast<double>(grid_size - 1);
        est.density[i] = kde_at(x, est.bandwidth, est.grid[i]);
    }
    est.raw_mass = trapezoid(est.grid, est.density);
    for (double& d : est.density) d /= est.raw_mass;
    return est;
}

std::vector<double> histogram01(std::span<const double> x, std::size_t bins, double eps) {
    if (bins < 2) throw ArgumentError("histogram: bins must be >= 2");
    if (x.empty()) throw ArgumentError("histogram: empty series");
    std::vector<double> counts(bins, 0.0);
    for (double v : x) {
        auto b = static_cast<std::size_t>(std::floor(std::clamp(v, 0.0, 1.0) * static_cast<double>(bins)));
        counts[std::min(b, bins - 1)] += 1.0;
    }
    const double n = static_cast<double>(x.size());
    double total = 0.0;
    for (double& c : counts) {
        c = c / n + eps;
        total += c;
    }
    for (double& c : counts) c /= total;
    return counts;
}

double kl_divergence(std::span<const double> p, std::span<const double> q) {
    if (p.size() != q.size()) throw ArgumentError("kl: distributions differ in length");
    double kl = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        if (p[i] > 0.0) kl += p[i] * std::log(p[i] / q[i]);
    }
    return std::max(kl, 0.0);
}

double mse(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size())
        throw ArgumentError(fmt::format("mse: series lengths differ ({} vs {})", a.size(), b.size()));
    if (a.empty()) throw ArgumentError("mse: empty series");
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
    return s / static_cast<double>(a.size());
}

DistributionDistance distribution_distance(std::span<const double> a, std::span<const double> b, std::size_t bins) {
    if (a.empty() || b.empty()) throw ArgumentError("distribution_distance: empty series");
    if (a.size() != b.size())
        throw ArgumentError(fmt::format("distribution_distance: paired series lengths differ ({} vs {})", a.size(),
                                        b.size()));
    const auto na = minmax_normalize(a);
    const auto nb = minmax_normalize(b);
    DistributionDistance d;
    d.bins = bins;
    d.kl = kl_divergence(histogram01(na, bins), histogram01(nb, bins));
    d.mse = mse(na, nb);
    return d;
}

F1Result threshold_f1(std::span<const double> scores, const std::vector<bool>& labels, const CandidateScoreSet& s,
                      double threshold, PositiveClass positive) {
    if (scores.size() != labels.size())
        throw ArgumentError(fmt::format("threshold_f1: {} scores for {} labels", scores.size(), labels.size()));
    if (!(threshold >= 0.0 && threshold <= 1.0)) throw ArgumentError("threshold_f1: threshold outside [0, 1]");
    const double lo = s.min(), range = s.max() - s.min();
    F1Result r;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        const bool predict_know = (scores[i] - lo) / range >= threshold;
        const bool pred = positive == PositiveClass::know ? predict_know : !predict_know;
        const bool truth = positive == PositiveClass::know ? labels[i] : !labels[i];
        if (pred && truth) ++r.tp;
        else if (pred && !truth) ++r.fp;
        else if (!pred && truth) ++r.fn;
        else ++r.tn;
    }
    if (r.tp + r.fp == 0 && r.tp + r.fn == 0) {
        r.degenerate = true;
        return r;
    }
    r.precision = r.tp + r.fp > 0 ? static_cast<double>(r.tp) / static_cast<double>(r.tp + r.fp) : 0.0;
    r.recall = r.tp + r.fn > 0 ? static_cast<double>(r.tp) / static_cast<double>(r.tp + r.fn) : 0.0;
    const double denom = static_cast<double>(2 * r.tp + r.fp + r.fn);
    r.f1 = denom > 0.0 ? 2.0 * static_cast<double>(r.tp) / denom : 0.0;
    return r;
}

double cosine_similarity(std::span<const float> a, std::span<const float> b) {
    if (a.size() != b.size()) throw ArgumentError("cosine: vector lengths differ");
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        dot += static_cast<double>(a[i]) * b[i];
        na += static_cast<double>(a[i]) * a[i];
        nb += static_cast<double>(b[i]) * b[i];
    }
    if (na == 0.0 || nb == 0.0) throw NumericError("cosine: zero vector");
    return std::clamp(dot / std::sqrt(na * nb), -1.0, 1.0);
}

}  // namespace lager::metrics
