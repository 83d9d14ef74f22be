#include "lager/score.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <fstream>
#include <istream>
#include <ostream>
#include <thread>

#include <fmt/format.h>
#include <json.hpp>

#include "lager/errors.hpp"

namespace lager {

using json = nlohmann::json;

const char* to_string(WeightProvenance p) {
    switch (p) {
        case WeightProvenance::uniform: return "uniform";
        case WeightProvenance::trained: return "trained";
        case WeightProvenance::one_hot_final: return "one_hot_final";
        case WeightProvenance::custom: return "custom";
    }
    return "custom";
}

WeightProvenance parse_provenance(const std::string& s) {
    if (s == "uniform") return WeightProvenance::uniform;
    if (s == "trained") return WeightProvenance::trained;
    if (s == "one_hot_final") return WeightProvenance::one_hot_final;
    if (s == "custom") return WeightProvenance::custom;
    throw ValidationError(fmt::format("unknown weight provenance '{}'", s));
}

LayerWeights LayerWeights::uniform(int num_layers) {
    if (num_layers < 0) throw ArgumentError("num_layers must be >= 0");
    const auto n = static_cast<std::size_t>(num_layers) + 1;
    return {std::vector<double>(n, 1.0 / static_cast<double>(n)), WeightProvenance::uniform};
}

LayerWeights LayerWeights::one_hot_final(int num_layers) {
    if (num_layers < 0) throw ArgumentError("num_layers must be >= 0");
    std::vector<double> w(static_cast<std::size_t>(num_layers) + 1, 0.0);
    w.back() = 1.0;
    return {std::move(w), WeightProvenance::one_hot_final};
}

LayerWeights LayerWeights::custom(std::vector<double> w) {
    return {std::move(w), WeightProvenance::custom};
}

void LayerWeights::validate() const {
    if (weights.empty()) throw ValidationError("layer weights: empty");
    for (std::size_t i = 0; i < weights.size(); ++i) {
        if (!std::isfinite(weights[i]))
            throw ValidationError(fmt::format("layer weights: entry {} is not finite", i));
    }
    const auto n = weights.size();
    if (provenance == WeightProvenance::uniform) {
        for (double x : weights) {
            if (x != 1.0 / static_cast<double>(n))
                throw ValidationError("layer weights: uniform provenance requires every entry = 1/(L+1)");
        }
    }
    if (provenance == WeightProvenance::one_hot_final) {
        for (std::size_t i = 0; i + 1 < n; ++i) {
            if (weights[i] != 0.0)
                throw ValidationError("layer weights: one_hot_final requires zeros before the last entry");
        }
        if (weights.back() != 1.0) throw ValidationError("layer weights: one_hot_final requires last entry 1");
    }
}

const char* to_string(ScoreMethod m) {
    switch (m) {
        case ScoreMethod::vanilla: return "vanilla";
        case ScoreMethod::escore: return "escore";
        case ScoreMethod::lager_expectation: return "lager_expectation";
        case ScoreMethod::lager_argmax: return "lager_argmax";
        case ScoreMethod::per_layer: return "per_layer";
    }
    return "lager_expectation";
}

const char* to_string(Statistic s) {
    return s == Statistic::expectation ? "expectation" : "argmax";
}

Statistic parse_statistic(const std::string& s) {
    if (s == "expectation") return Statistic::expectation;
    if (s == "argmax") return Statistic::argmax;
    throw ArgumentError(fmt::format("unknown statistic '{}' (expected expectation|argmax)", s));
}

std::string to_string(const Aggregation& a) {
    switch (a.kind) {
        case Aggregation::Kind::logits: return "logits";
        case Aggregation::Kind::probability: return "probability";
        case Aggregation::Kind::final_layer_only: return "final";
        case Aggregation::Kind::single_layer: return fmt::format("layer:{}", a.layer);
    }
    return "logits";
}

Aggregation parse_aggregation(const std::string& s) {
    if (s == "logits") return Aggregation::logits();
    if (s == "probability") return Aggregation::probability();
    if (s == "final" || s == "final_layer_only") return Aggregation::final_layer();
    if (s.rfind("layer:", 0) == 0) {
        const auto digits = s.substr(6);
        if (digits.empty() || digits.find_first_not_of("0123456789") != std::string::npos)
            throw ArgumentError(fmt::format("bad aggregation '{}' (expected layer:K with K >= 0)", s));
        try {
            return Aggregation::single_layer(std::stoi(digits));
        } catch (const std::exception&) {
            throw ArgumentError(fmt::format("bad aggregation '{}': layer index out of range", s));
        }
    }
    throw ArgumentError(
        fmt::format("unknown aggregation '{}' (expected logits|probability|final|layer:K)", s));
}

ScoreMethod ScoringMode::method() const {
    switch (aggregation.kind) {
        case Aggregation::Kind::final_layer_only:
            return statistic == Statistic::argmax ? ScoreMethod::vanilla : ScoreMethod::escore;
        case Aggregation::Kind::single_layer: return ScoreMethod::per_layer;
        default:
            return statistic == Statistic::argmax ? ScoreMethod::lager_argmax : ScoreMethod::lager_expectation;
    }
}

void ScoringMode::validate(int num_layers) const {
    if (aggregation.kind == Aggregation::Kind::single_layer &&
        (aggregation.layer < 0 || aggregation.layer > num_layers))
        throw ArgumentError(fmt::format("aggregation layer:{} outside [0, {}] (records have {} layers)",
                                        aggregation.layer, num_layers, num_layers));
}

std::string to_string(const ScoringMode& m) {
    return fmt::format("{}:{}", to_string(m.statistic), to_string(m.aggregation));
}

ScoringMode parse_scoring_mode(const std::string& s) {
    const auto colon = s.find(':');
    if (colon == std::string::npos)
        throw ArgumentError(fmt::format("bad mode '{}' (expected <statistic>:<aggregation>)", s));
    return {parse_statistic(s.substr(0, colon)), parse_aggregation(s.substr(colon + 1))};
}

namespace {

void check_weights(const LayerLogitRecord& record, const LayerWeights& w) {
    if (w.weights.size() != record.num_rows())
        throw ArgumentError(fmt::format("record '{}': {} layer weights for {} logit rows", record.sample_id,
                                        w.weights.size(), record.num_rows()));
}

std::vector<double> row_as_double(const LayerLogitRecord& record, std::size_t l) {
    const auto row = record.logits.row(l);
    return {row.begin(), row.end()};
}

void check_distribution(const ScoreDistribution& dist) {
    if (dist.probs.size() != dist.values.size() || dist.values.empty())
        throw ArgumentError("distribution: probs and values differ in length");
    double total = 0.0;
    for (double p : dist.probs) {
        if (!(p >= 0.0) || !std::isfinite(p)) throw ArgumentError("distribution: negative or non-finite probability");
        total += p;
    }
    if (std::abs(total - 1.0) > 1e-9)
        throw ArgumentError(fmt::format("distribution: probabilities sum to {} (expected 1)", total));
}

}  // namespace

std::vector<double> aggregate_logits(const LayerLogitRecord& record, const LayerWeights& w) {
    check_weights(record, w);
    const std::size_t k = record.logits.cols;
    std::vector<double> out(k, 0.0);
    for (std::size_t l = 0; l < record.num_rows(); ++l) {
        const double wl = w.weights[l];
        const auto row = record.logits.row(l);
        for (std::size_t c = 0; c < k; ++c) {
            const double term = wl * static_cast<double>(row[c]);
            if (!std::isfinite(term))
                throw NumericError(fmt::format("record '{}': non-finite weighted logit at row {}",
                                               record.sample_id, l));
            out[c] += term;
        }
    }
    for (double x : out) {
        if (!std::isfinite(x))
            throw NumericError(fmt::format("record '{}': aggregated logits overflow", record.sample_id));
    }
    return out;
}

ScoreDistribution softmax_scores(std::span<const double> logits, const CandidateScoreSet& s) {
    if (logits.size() != s.size())
        throw ArgumentError(fmt::format("softmax: {} logits for {} candidate scores", logits.size(), s.size()));
    for (double z : logits) {
        if (!std::isfinite(z)) throw NumericError("softmax: non-finite logit");
    }
    const double top = *std::max_element(logits.begin(), logits.end());
    ScoreDistribution dist{s.values, std::vector<double>(logits.size())};
    double total = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        dist.probs[i] = std::exp(logits[i] - top);
        total += dist.probs[i];
    }
    for (double& p : dist.probs) p /= total;
    return dist;
}

JudgeScore expected_score(const ScoreDistribution& dist, ScoreMethod method) {
    check_distribution(dist);
    double value = 0.0;
    for (std::size_t i = 0; i < dist.values.size(); ++i) value += dist.values[i] * dist.probs[i];
    value = std::clamp(value, static_cast<double>(dist.values.front()), static_cast<double>(dist.values.back()));
    return {value, method, std::nullopt, {}};
}

JudgeScore argmax_score(std::span<const double> values, const CandidateScoreSet& s, ScoreMethod method) {
    if (values.size() != s.size() || values.empty())
        throw ArgumentError(fmt::format("argmax: {} entries for {} candidate scores", values.size(), s.size()));
    std::size_t best = 0;
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (!std::isfinite(values[i])) throw NumericError("argmax: non-finite entry");
        if (values[i] > values[best]) best = i;
    }
    return {static_cast<double>(s.values[best]), method, std::nullopt, {}};
}

namespace {

JudgeScore apply_statistic(Statistic statistic, const ScoreDistribution& dist, const CandidateScoreSet& s,
                           ScoreMethod method, bool keep_dist) {
    JudgeScore out = statistic == Statistic::expectation ? expected_score(dist, method)
                                                         : argmax_score(dist.probs, s, method);
    if (keep_dist) out.probs = dist.probs;
    return out;
}

// Softmax is monotone, so argmax over the logit row equals argmax over its
// distribution; the logit row is used to keep exact ties exact.
JudgeScore score_row(const LayerLogitRecord& record, std::size_t l, Statistic statistic, ScoreMethod method,
                     bool keep_dist) {
    const auto row = row_as_double(record, l);
    const auto dist = softmax_scores(row, record.score_set);
    JudgeScore out = statistic == Statistic::expectation ? expected_score(dist, method)
                                                         : argmax_score(row, record.score_set, method);
    if (keep_dist) out.probs = dist.probs;
    return out;
}

}  // namespace

JudgeScore score_record(const LayerLogitRecord& record, const LayerWeights& w, const ScoringMode& mode,
                        bool keep_dist) {
    mode.validate(record.num_layers);
    const auto method = mode.method();
    switch (mode.aggregation.kind) {
        case Aggregation::Kind::logits: {
            const auto z = aggregate_logits(record, w);
            const auto dist = softmax_scores(z, record.score_set);
            if (mode.statistic == Statistic::argmax) {
                JudgeScore out = argmax_score(z, record.score_set, method);
                if (keep_dist) out.probs = dist.probs;
                return out;
            }
            return apply_statistic(mode.statistic, dist, record.score_set, method, keep_dist);
        }
        case Aggregation::Kind::probability: {
            check_weights(record, w);
            std::vector<double> mix(record.score_set.size(), 0.0);
            for (std::size_t l = 0; l < record.num_rows(); ++l) {
                const auto p = softmax_scores(row_as_double(record, l), record.score_set);
                for (std::size_t c = 0; c < mix.size(); ++c) mix[c] += w.weights[l] * p.probs[c];
            }
            double total = 0.0;
            for (double m : mix) total += m;
            if (!(total > 0.0) || !std::isfinite(total))
                throw NumericError(fmt::format(
                    "record '{}': probability mixture sums to {} and cannot be renormalized", record.sample_id,
                    total));
            for (std::size_t c = 0; c < mix.size(); ++c) {
                mix[c] /= total;
                if (mix[c] < 0.0) {
                    if (mix[c] > -1e-15) {
                        mix[c] = 0.0;
                        continue;
                    }
                    throw NumericError(fmt::format("record '{}': probability mixture has negative mass {} at score {}",
                                                   record.sample_id, mix[c], record.score_set.values[c]));
                }
            }
            ScoreDistribution dist{record.score_set.values, std::move(mix)};
            return apply_statistic(mode.statistic, dist, record.score_set, method, keep_dist);
        }
        case Aggregation::Kind::final_layer_only:
            return score_row(record, record.num_rows() - 1, mode.statistic, method, keep_dist);
        case Aggregation::Kind::single_layer: {
            auto out = score_row(record, static_cast<std::size_t>(mode.aggregation.layer), mode.statistic, method,
                                 keep_dist);
            out.layer = mode.aggregation.layer;
            return out;
        }
    }
    throw ArgumentError("unknown aggregation");
}

std::vector<std::pair<std::string, JudgeScore>> score_batch(const RecordBatch& batch, const LayerWeights& w,
                                                            const ScoringMode& mode, bool keep_dist,
                                                            unsigned jobs) {
    std::vector<std::pair<std::string, JudgeScore>> out(batch.size());
    auto work = [&](std::size_t begin, std::size_t end) {
        for (std::size_t i = begin; i < end; ++i) {
            const auto& r = batch.records[i];
            try {
                out[i] = {r.sample_id, score_record(r, w, mode, keep_dist)};
            } catch (const Error&) {
                rethrow_with_prefix(fmt::format("sample '{}'", r.sample_id));
            }
        }
    };
    jobs = std::max(1u, std::min<unsigned>(jobs, static_cast<unsigned>(std::max<std::size_t>(1, batch.size()))));
    if (jobs == 1) {
        work(0, batch.size());
        return out;
    }
    // Each chunk reports its first failure; the earliest chunk's error wins so
    // the surfaced error matches the sequential run.
    std::vector<std::exception_ptr> errors(jobs);
    std::vector<std::thread> threads;
    const std::size_t chunk = (batch.size() + jobs - 1) / jobs;
    for (unsigned t = 0; t < jobs; ++t) {
        const std::size_t begin = std::min(batch.size(), t * chunk);
        const std::size_t end = std::min(batch.size(), begin + chunk);
        threads.emplace_back([&, t, begin, end] {
            try {
                work(begin, end);
            } catch (...) {
                errors[t] = std::current_exception();
            }
        });
    }
    for (auto& th : threads) th.join();
    for (const auto& e : errors) {
        if (e) std::rethrow_exception(e);
    }
    return out;
}

std::vector<JudgeScore> per_layer_scores(const LayerLogitRecord& record, Statistic statistic) {
    std::vector<JudgeScore> out;
    out.reserve(record.num_rows());
    for (std::size_t l = 0; l < record.num_rows(); ++l) {
        auto s = score_row(record, l, statistic, ScoreMethod::per_layer, false);
        s.layer = static_cast<int>(l);
        out.push_back(std::move(s));
    }
    return out;
}

void write_scores(const std::vector<std::pair<std::string, JudgeScore>>& scores, const ScoringMode& mode,
                  std::ostream& out) {
    for (const auto& [id, s] : scores) {
        nlohmann::ordered_json j;
        j["sample_id"] = id;
        j["method"] = to_string(s.method);
        j["aggregation"] = to_string(mode.aggregation);
        if (s.layer) j["layer"] = *s.layer;
        j["value"] = s.value;
        if (!s.probs.empty()) j["probs"] = s.probs;
        out << j.dump() << '\n';
    }
    if (!out) throw IoError("failed writing score stream");
}

std::vector<ScoredSample> read_scores(std::istream& in) {
    std::vector<ScoredSample> rows;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            const auto j = json::parse(line);
            ScoredSample s;
            s.sample_id = j.at("sample_id").get<std::string>();
            s.method = j.value("method", "");
            s.aggregation = j.value("aggregation", "");
            if (j.contains("layer") && !j["layer"].is_null()) s.layer = j["layer"].get<int>();
            s.value = j.at("value").get<double>();
            if (j.contains("probs")) s.probs = j["probs"].get<std::vector<double>>();
            rows.push_back(std::move(s));
        } catch (const json::exception& e) {
            throw ParseError(fmt::format("bad score line: {}", e.what()), lineno);
        }
    }
    return rows;
}

std::vector<ScoredSample> read_scores_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError(fmt::format("{}: cannot open for reading", path));
    try {
        return read_scores(in);
    } catch (const ParseError& e) {
        throw ParseError(fmt::format("{}: {}", path, e.what()), e.line());
    }
}

LayerWeights read_weights_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError(fmt::format("{}: cannot open for reading", path));
    try {
        const auto j = json::parse(in);
        LayerWeights w;
        w.weights = j.at("weights").get<std::vector<double>>();
        w.provenance = parse_provenance(j.value("provenance", "custom"));
        if (j.contains("num_layers") && j["num_layers"].get<int>() != w.num_layers())
            throw ValidationError(fmt::format("{}: num_layers {} but {} weights", path, j["num_layers"].get<int>(),
                                              w.weights.size()));
        w.validate();
        return w;
    } catch (const json::exception& e) {
        throw ValidationError(fmt::format("{}: bad weights file: {}", path, e.what()));
    }
}

}  // namespace lager
