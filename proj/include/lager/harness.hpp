#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "lager/metrics.hpp"
#include "lager/record.hpp"
#include "lager/score.hpp"

namespace lager::harness {

struct JoinedSample {
    const LayerLogitRecord* record = nullptr;
    double human_score = 0.0;
    std::optional<std::string> dimension;
};

struct JoinResult {
    std::vector<JoinedSample> samples;  // record order
    std::size_t records_without_annotation = 0;
    std::size_t annotations_without_record = 0;
    std::vector<std::string> warnings;
};

/// Inner join on sample_id. The annotation file wins over an embedded
/// human_score (with a warning). Throws ValidationError when nothing joins.
JoinResult join(const RecordBatch& records, const std::vector<AnnotatedSample>& annotations);

/// One scored configuration: a mode plus the weights it aggregates with.
struct ModeSpec {
    ScoringMode mode;
    LayerWeights weights;
    std::string weights_label = "uniform";  // "uniform" or the weights file path

    std::string label() const;
};

/// "<statistic>:<aggregation>[@uniform|@path/to/weights.json]"; without a
/// suffix the default weights apply.
ModeSpec parse_mode_spec(const std::string& text, const LayerWeights& default_weights,
                         const std::string& default_label, int num_layers);

struct ModeResult {
    ModeSpec spec;
    metrics::CorrelationResult correlation;
    std::vector<std::string> sample_ids;
    std::vector<double> scores;
    std::vector<double> human;
    std::optional<metrics::DistributionDistance> distance;
    std::size_t failures = 0;
    std::vector<std::string> errors;
    std::map<std::string, metrics::CorrelationResult> by_dimension;
};

struct EvalReport {
    std::vector<ModeResult> modes;
    std::size_t joined = 0;
    std::size_t records_without_annotation = 0;
    std::size_t annotations_without_record = 0;
    std::vector<std::string> warnings;
};

struct EvalOptions {
    std::size_t bins = 20;
    bool group_by_dimension = false;
    unsigned jobs = 1;
};

/// Scores every mode and correlates it with the human scores. A constant
/// score series leaves the coefficient undefined; the run continues.
EvalReport evaluate(const JoinResult& joined, const std::vector<ModeSpec>& modes, const EvalOptions& opts = {});

/// report.json plus scores_<k>.csv per mode.
void write_eval_report(const EvalReport& report, const std::filesystem::path& out_dir);

struct EvalRun {
    std::string records_path;
    std::string annotations_path;
    std::string weights = "uniform";  // "uniform" or a weights file path
    std::vector<std::string> modes;
    std::filesystem::path output_dir;
    EvalOptions options;
};

EvalReport run_eval(const EvalRun& run);

struct LayerAnalysis {
    std::vector<std::optional<double>> per_layer_spearman;
    std::vector<std::optional<double>> per_layer_pearson;
    // Mean per-sample cosine between layer hidden states, when every joined
    // record carries hidden_vectors.
    std::optional<std::vector<std::vector<double>>> cosine_matrix;
    std::vector<std::string> notices;
};

LayerAnalysis layer_analysis(const JoinResult& joined, Statistic statistic);

void write_layer_analysis(const LayerAnalysis& analysis, const std::filesystem::path& out_dir);

struct MethodDistribution {
    std::string method;
    std::optional<metrics::DensityEstimate> density;
    std::optional<std::string> density_error;
    metrics::DistributionDistance distance;
};

struct DistributionReport {
    std::optional<metrics::DensityEstimate> human_density;
    std::optional<std::string> human_density_error;
    std::vector<MethodDistribution> methods;
};

/// Series are min-max normalized before density estimation.
DistributionReport distribution_report(const std::vector<std::pair<std::string, std::vector<double>>>& methods,
                                       const std::vector<double>& human, std::size_t bins = 20,
                                       std::size_t grid_size = 512);

void write_distribution_report(const DistributionReport& report, const std::filesystem::path& out_dir);

struct RankedSample {
    std::string sample_id;
    double mean_score = 0.0;
};

struct SelectionResult {
    std::vector<RankedSample> ranked;
    std::vector<std::string> selected;
    double ratio = 0.0;
};

/// Equal-weight mean over dimensions, descending, ties by ascending id;
/// keeps the top ceil(ratio * N).
SelectionResult select_data(const std::map<std::string, std::map<std::string, double>>& dimension_scores,
                            double ratio);

/// Lines of {sample_id, dimension, value} or {sample_id, scores: {dim: value}}.
std::map<std::string, std::map<std::string, double>> read_dimension_scores_file(const std::string& path);

/// Manifest lines {sample_id, mean_score, rank, selected}.
void write_selection_manifest(const SelectionResult& result, std::ostream& out);

}  // namespace lager::harness
