#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace lager {

inline constexpr const char* kSchemaVersion = "lagrec/1";

/// Ordered integer scores a judge may emit, with the vocabulary token each
/// one maps to. values are strictly increasing; token ids are distinct.
struct CandidateScoreSet {
    std::vector<int> values;
    std::vector<std::int64_t> token_ids;
    std::vector<std::string> labels;

    std::size_t size() const { return values.size(); }
    int min() const { return values.front(); }
    int max() const { return values.back(); }

    /// Score set with labels "v" and placeholder token ids, for synthetic data.
    static CandidateScoreSet from_values(std::vector<int> values);
    /// 1..n inclusive.
    static CandidateScoreSet range(int lo, int hi);

    /// Throws ValidationError naming the violated rule.
    void validate() const;

    bool operator==(const CandidateScoreSet&) const = default;
};

/// Dense row-major float32 matrix.
struct Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<float> data;

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0f) {}

    std::span<const float> row(std::size_t r) const { return {data.data() + r * cols, cols}; }
    std::span<float> row(std::size_t r) { return {data.data() + r * cols, cols}; }
    float& at(std::size_t r, std::size_t c) { return data[r * cols + c]; }
    float at(std::size_t r, std::size_t c) const { return data[r * cols + c]; }

    bool operator==(const Matrix&) const = default;
};

enum class JudgeMode { direct, reasoning };

const char* to_string(JudgeMode m);
JudgeMode parse_judge_mode(const std::string& s);

/// Per-sample candidate-score logits, one row per layer. Row 0 is the
/// embedding output, row L the final decoder layer.
struct LayerLogitRecord {
    std::string sample_id;
    std::string model_id;
    JudgeMode mode = JudgeMode::direct;
    int num_layers = 0;
    CandidateScoreSet score_set;
    Matrix logits;
    std::optional<Matrix> hidden_vectors;
    std::optional<double> avg_logprob;
    std::optional<double> human_score;
    std::string prompt_hash;
    std::optional<std::string> generated_text;
    // Free-form extractor settings (e.g. apply_final_norm).
    std::map<std::string, std::string> metadata;

    std::size_t num_rows() const { return static_cast<std::size_t>(num_layers) + 1; }

    void validate() const;

    bool operator==(const LayerLogitRecord&) const = default;
};

struct RecordBatch {
    std::vector<LayerLogitRecord> records;
    std::string schema_version = kSchemaVersion;

    bool empty() const { return records.empty(); }
    std::size_t size() const { return records.size(); }
    int num_layers() const { return records.empty() ? 0 : records.front().num_layers; }
    const CandidateScoreSet& score_set() const { return records.front().score_set; }

    /// Checks every record plus cross-record homogeneity and id uniqueness.
    void validate() const;

    bool operator==(const RecordBatch&) const = default;
};

struct AnnotatedSample {
    std::string sample_id;
    double human_score = 0.0;
    std::optional<std::string> dimension;
    std::optional<std::string> split;

    bool operator==(const AnnotatedSample&) const = default;
};

// Record file I/O (JSON Lines, schema "lagrec/1").
std::size_t write_records(const RecordBatch& batch, std::ostream& out);
RecordBatch read_records(std::istream& in);
std::size_t write_records_file(const RecordBatch& batch, const std::string& path);
RecordBatch read_records_file(const std::string& path);

// Annotation file I/O: {sample_id, human_score, dimension?, split?}.
std::size_t write_annotations(const std::vector<AnnotatedSample>& rows, std::ostream& out);
std::vector<AnnotatedSample> read_annotations(std::istream& in);
std::vector<AnnotatedSample> read_annotations_file(const std::string& path);

/// Throws ValidationError when any human_score is outside [min S, max S].
void validate_annotations(const std::vector<AnnotatedSample>& rows, const CandidateScoreSet& s);

struct SynthOptions {
    std::size_t n = 0;
    int num_layers = 0;
    CandidateScoreSet score_set;
    std::optional<int> oracle_layer;
    double noise_scale = 1.0;
    std::uint64_t seed = 0;
    // Width of synthetic hidden vectors; 0 omits them.
    std::size_t hidden_dim = 0;
};

/// Deterministic synthetic batch. Each sample's truth is drawn uniformly
/// from the score set; the oracle row is 10 * one_hot(truth) and every
/// other row is N(0, noise_scale^2) noise.
RecordBatch synth_records(const SynthOptions& opts);

}  // namespace lager
