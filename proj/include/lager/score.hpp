#pragma once

#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "lager/record.hpp"

namespace lager {

enum class WeightProvenance { uniform, trained, one_hot_final, custom };

const char* to_string(WeightProvenance p);
WeightProvenance parse_provenance(const std::string& s);

/// Mixing coefficients w_0..w_L over the L+1 logit rows. Unconstrained reals.
struct LayerWeights {
    std::vector<double> weights;
    WeightProvenance provenance = WeightProvenance::custom;

    static LayerWeights uniform(int num_layers);
    static LayerWeights one_hot_final(int num_layers);
    static LayerWeights custom(std::vector<double> w);

    int num_layers() const { return static_cast<int>(weights.size()) - 1; }
    void validate() const;

    bool operator==(const LayerWeights&) const = default;
};

struct ScoreDistribution {
    std::vector<int> values;
    std::vector<double> probs;
};

enum class ScoreMethod { vanilla, escore, lager_expectation, lager_argmax, per_layer };

const char* to_string(ScoreMethod m);

struct JudgeScore {
    double value = 0.0;
    ScoreMethod method = ScoreMethod::lager_expectation;
    std::optional<int> layer;
    // Filled when the caller asks for the distribution (--emit-dist).
    std::vector<double> probs;
};

enum class Statistic { expectation, argmax };

const char* to_string(Statistic s);
Statistic parse_statistic(const std::string& s);

struct Aggregation {
    enum class Kind { logits, probability, final_layer_only, single_layer };
    Kind kind = Kind::logits;
    int layer = 0;  // single_layer only

    static Aggregation logits() { return {Kind::logits, 0}; }
    static Aggregation probability() { return {Kind::probability, 0}; }
    static Aggregation final_layer() { return {Kind::final_layer_only, 0}; }
    static Aggregation single_layer(int l) { return {Kind::single_layer, l}; }

    bool operator==(const Aggregation&) const = default;
};

/// "logits" | "probability" | "final" | "layer:K"
std::string to_string(const Aggregation& a);
Aggregation parse_aggregation(const std::string& s);

struct ScoringMode {
    Statistic statistic = Statistic::expectation;
    Aggregation aggregation;

    ScoreMethod method() const;
    /// Throws ArgumentError when a single_layer index is outside [0, num_layers].
    void validate(int num_layers) const;

    bool operator==(const ScoringMode&) const = default;
};

/// "expectation:logits", "argmax:final", "expectation:layer:3", ...
std::string to_string(const ScoringMode& m);
ScoringMode parse_scoring_mode(const std::string& s);

/// sum_i w_i * row_i over the candidate columns.
std::vector<double> aggregate_logits(const LayerLogitRecord& record, const LayerWeights& w);

/// Max-subtracted softmax restricted to the candidate set.
ScoreDistribution softmax_scores(std::span<const double> logits, const CandidateScoreSet& s);

JudgeScore expected_score(const ScoreDistribution& dist,
                          ScoreMethod method = ScoreMethod::lager_expectation);

/// Ties resolve to the smallest score value.
JudgeScore argmax_score(std::span<const double> values, const CandidateScoreSet& s,
                        ScoreMethod method = ScoreMethod::lager_argmax);

JudgeScore score_record(const LayerLogitRecord& record, const LayerWeights& w, const ScoringMode& mode,
                        bool keep_dist = false);

/// Order-preserving. jobs > 1 splits the batch across threads; output is
/// identical for any jobs value.
std::vector<std::pair<std::string, JudgeScore>> score_batch(const RecordBatch& batch, const LayerWeights& w,
                                                            const ScoringMode& mode, bool keep_dist = false,
                                                            unsigned jobs = 1);

std::vector<JudgeScore> per_layer_scores(const LayerLogitRecord& record, Statistic statistic);

// Score output file: {sample_id, method, aggregation, layer?, value, probs?}.
struct ScoredSample {
    std::string sample_id;
    std::string method;
    std::string aggregation;
    std::optional<int> layer;
    double value = 0.0;
    std::vector<double> probs;
};

void write_scores(const std::vector<std::pair<std::string, JudgeScore>>& scores, const ScoringMode& mode,
                  std::ostream& out);
std::vector<ScoredSample> read_scores(std::istream& in);
std::vector<ScoredSample> read_scores_file(const std::string& path);

// Weights file: {model_id, num_layers, weights, provenance, train_config?, loss_curve?}.
LayerWeights read_weights_file(const std::string& path);

}  // namespace lager
