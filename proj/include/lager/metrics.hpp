#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "lager/errors.hpp"
#include "lager/record.hpp"

namespace lager::metrics {

/// Correlation of a constant series. Callers that must keep going (the
/// harness) catch this and report the coefficient as undefined.
class UndefinedCorrelation : public ArgumentError {
public:
    using ArgumentError::ArgumentError;
};

struct CorrelationResult {
    std::optional<double> pearson;
    std::optional<double> spearman;
    std::size_t n = 0;
};

double pearson(std::span<const double> x, std::span<const double> y);

/// Pearson over average ranks (ties share the mean of their positions).
double spearman(std::span<const double> x, std::span<const double> y);

/// Both coefficients; an undefined one is left empty rather than thrown.
CorrelationResult correlate(std::span<const double> x, std::span<const double> y);

/// 1-based average ranks.
std::vector<double> average_ranks(std::span<const double> x);

/// (x - min) / (max - min); a constant series maps to all 0.5.
std::vector<double> minmax_normalize(std::span<const double> x);

/// Silverman's rule: 0.9 * min(sd, IQR / 1.34) * n^(-1/5). When one of sd or
/// IQR is zero the other is used; zero only for constant data.
double silverman_bandwidth(std::span<const double> x);

/// Gaussian kernel estimate (1 / nh) * sum K((at - x_i) / h) at one point.
double kde_at(std::span<const double> x, double bandwidth, double at);

struct DensityEstimate {
    std::vector<double> grid;
    std::vector<double> density;
    double bandwidth = 0.0;
    // Trapezoidal mass of the raw estimate over the grid, before rescaling
    // the curve to unit area.
    double raw_mass = 0.0;
};

/// Density on a uniform grid over [min - 3h, max + 3h], scaled to unit
/// trapezoidal area. Bandwidth defaults to Silverman's rule.
DensityEstimate kde(std::span<const double> x, std::size_t grid_size = 512,
                    std::optional<double> bandwidth = std::nullopt);

double trapezoid(std::span<const double> grid, std::span<const double> y);

struct DistributionDistance {
    double kl = 0.0;
    double mse = 0.0;
    std::size_t bins = 0;
};

inline constexpr double kHistogramSmoothing = 1e-9;

/// Smoothed equal-width histogram of values already in [0, 1].
std::vector<double> histogram01(std::span<const double> x, std::size_t bins, double eps = kHistogramSmoothing);

double kl_divergence(std::span<const double> p, std::span<const double> q);

/// Both series min-max normalized independently; KL between their smoothed
/// histograms, MSE between the paired normalized series.
DistributionDistance distribution_distance(std::span<const double> a, std::span<const double> b,
                                           std::size_t bins = 20);

double mse(std::span<const double> a, std::span<const double> b);

enum class PositiveClass { know, dont_know };

struct F1Result {
    double f1 = 0.0;
    double precision = 0.0;
    double recall = 0.0;
    std::size_t tp = 0, fp = 0, fn = 0, tn = 0;
    // No positive predictions and no positive labels: F1 reported as 0.
    bool degenerate = false;
};

/// Scores normalized by the score set's range; predicted "know" iff the
/// normalized score >= threshold. Labels: true = answerable ("know").
F1Result threshold_f1(std::span<const double> scores, const std::vector<bool>& labels, const CandidateScoreSet& s,
                      double threshold = 0.75, PositiveClass positive = PositiveClass::know);

double cosine_similarity(std::span<const float> a, std::span<const float> b);

}  // namespace lager::metrics
