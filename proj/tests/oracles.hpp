#pragma once

// Independent reference computations for tests. Nothing here calls into the
// scoring, calibration or metrics code paths it is compared against.

#include <cmath>
#include <cstring>
#include <functional>
#include <vector>

#include "lager/random.hpp"
#include "lager/record.hpp"

namespace oracle {

/// sum_s s * softmax(mean row)_s, evaluated without max-shifting in long double.
inline double uniform_lager_expectation(const lager::LayerLogitRecord& r) {
    const std::size_t rows = r.logits.rows, cols = r.logits.cols;
    std::vector<long double> mean(cols, 0.0L);
    for (std::size_t l = 0; l < rows; ++l)
        for (std::size_t c = 0; c < cols; ++c) mean[c] += static_cast<long double>(r.logits.data[l * cols + c]);
    for (auto& m : mean) m /= static_cast<long double>(rows);
    long double z = 0.0L, num = 0.0L;
    for (std::size_t c = 0; c < cols; ++c) {
        const long double e = std::exp(mean[c]);
        z += e;
        num += e * r.score_set.values[c];
    }
    return static_cast<double>(num / z);
}

/// sum_s s * softmax(row)_s for one row.
inline double row_expectation(const lager::LayerLogitRecord& r, std::size_t row) {
    long double z = 0.0L, num = 0.0L;
    for (std::size_t c = 0; c < r.logits.cols; ++c) {
        const long double e = std::exp(static_cast<long double>(r.logits.at(row, c)));
        z += e;
        num += e * r.score_set.values[c];
    }
    return static_cast<double>(num / z);
}

/// Score of the first maximal entry of a row.
inline int row_argmax(const lager::LayerLogitRecord& r, std::size_t row) {
    std::size_t best = 0;
    for (std::size_t c = 1; c < r.logits.cols; ++c)
        if (r.logits.at(row, c) > r.logits.at(row, best)) best = c;
    return r.score_set.values[best];
}

/// Population covariance over population standard deviations.
inline double pearson(const std::vector<double>& x, const std::vector<double>& y) {
    const auto n = static_cast<long double>(x.size());
    long double mx = 0, my = 0;
    for (std::size_t i = 0; i < x.size(); ++i) mx += x[i], my += y[i];
    mx /= n, my /= n;
    long double cov = 0, vx = 0, vy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        cov += (x[i] - mx) * (y[i] - my);
        vx += (x[i] - mx) * (x[i] - mx);
        vy += (y[i] - my) * (y[i] - my);
    }
    cov /= n, vx /= n, vy /= n;
    return static_cast<double>(cov / (std::sqrt(vx) * std::sqrt(vy)));
}

/// O(n^2) average rank: 1 + #smaller + (#equal - 1) / 2.
inline std::vector<double> ranks(const std::vector<double>& x) {
    std::vector<double> r(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        std::size_t less = 0, equal = 0;
        for (double v : x) {
            if (v < x[i]) ++less;
            if (v == x[i]) ++equal;
        }
        r[i] = 1.0 + static_cast<double>(less) + 0.5 * static_cast<double>(equal - 1);
    }
    return r;
}

inline double spearman(const std::vector<double>& x, const std::vector<double>& y) {
    return pearson(ranks(x), ranks(y));
}

/// 1 - 6 sum d^2 / (n (n^2 - 1)); valid only without ties.
inline double spearman_no_ties(const std::vector<double>& x, const std::vector<double>& y) {
    const auto rx = ranks(x), ry = ranks(y);
    double d2 = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) d2 += (rx[i] - ry[i]) * (rx[i] - ry[i]);
    const double n = static_cast<double>(x.size());
    return 1.0 - 6.0 * d2 / (n * (n * n - 1.0));
}

/// Central finite differences of f at w.
inline std::vector<double> central_difference(const std::function<double(const std::vector<double>&)>& f,
                                              std::vector<double> w, double h) {
    std::vector<double> g(w.size());
    for (std::size_t i = 0; i < w.size(); ++i) {
        const double orig = w[i];
        w[i] = orig + h;
        const double up = f(w);
        w[i] = orig - h;
        const double down = f(w);
        w[i] = orig;
        g[i] = (up - down) / (2.0 * h);
    }
    return g;
}

inline bool same_bits(const std::vector<float>& a, const std::vector<float>& b) {
    return a.size() == b.size() && std::memcmp(a.data(), b.data(), a.size() * sizeof(float)) == 0;
}

/// Random record with logits ~ N(0, scale^2).
inline lager::LayerLogitRecord random_record(lager::Rng& rng, int num_layers, const lager::CandidateScoreSet& s,
                                             double scale, const std::string& id) {
    lager::LayerLogitRecord r;
    r.sample_id = id;
    r.model_id = "test";
    r.num_layers = num_layers;
    r.score_set = s;
    r.logits = lager::Matrix(static_cast<std::size_t>(num_layers) + 1, s.size());
    for (auto& x : r.logits.data) x = static_cast<float>(scale * rng.normal());
    r.prompt_hash = "h";
    return r;
}

}  // namespace oracle
