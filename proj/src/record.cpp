#include "lager/record.hpp"

#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <set>
#include <unordered_set>

#include <fmt/format.h>
#include <json.hpp>

#include "lager/base64.hpp"
#include "lager/errors.hpp"
#include "lager/random.hpp"

namespace lager {

using json = nlohmann::json;
using ordered_json = nlohmann::ordered_json;

CandidateScoreSet CandidateScoreSet::from_values(std::vector<int> values) {
    CandidateScoreSet s;
    s.values = std::move(values);
    for (std::size_t i = 0; i < s.values.size(); ++i) {
        s.token_ids.push_back(static_cast<std::int64_t>(i));
        s.labels.push_back(std::to_string(s.values[i]));
    }
    return s;
}

CandidateScoreSet CandidateScoreSet::range(int lo, int hi) {
    std::vector<int> v;
    for (int x = lo; x <= hi; ++x) v.push_back(x);
    return from_values(std::move(v));
}

void CandidateScoreSet::validate() const {
    if (values.size() < 2) throw ValidationError("score_set: needs at least 2 values");
    for (std::size_t i = 1; i < values.size(); ++i) {
        if (values[i] <= values[i - 1])
            throw ValidationError("score_set: values must be strictly increasing");
    }
    if (token_ids.size() != values.size())
        throw ValidationError("score_set: token_ids length differs from values");
    if (!labels.empty() && labels.size() != values.size())
        throw ValidationError("score_set: labels length differs from values");
    std::set<std::int64_t> ids(token_ids.begin(), token_ids.end());
    if (ids.size() != token_ids.size()) throw ValidationError("score_set: token_ids must be distinct");
}

const char* to_string(JudgeMode m) {
    return m == JudgeMode::direct ? "direct" : "reasoning";
}

JudgeMode parse_judge_mode(const std::string& s) {
    if (s == "direct") return JudgeMode::direct;
    if (s == "reasoning") return JudgeMode::reasoning;
    throw ValidationError(fmt::format("unknown mode '{}'", s));
}

void LayerLogitRecord::validate() const {
    auto fail = [&](const std::string& why) {
        throw ValidationError(fmt::format("record '{}': {}", sample_id, why));
    };
    if (sample_id.empty()) throw ValidationError("record with empty sample_id");
    if (num_layers < 0) fail("num_layers must be >= 0");
    try {
        score_set.validate();
    } catch (const ValidationError& e) {
        fail(e.what());
    }
    if (logits.rows != num_rows())
        fail(fmt::format("logits has {} rows, expected num_layers+1 = {}", logits.rows, num_rows()));
    if (logits.cols != score_set.size())
        fail(fmt::format("logits has {} columns, expected |S| = {}", logits.cols, score_set.size()));
    if (logits.data.size() != logits.rows * logits.cols) fail("logits payload size mismatch");
    for (std::size_t i = 0; i < logits.data.size(); ++i) {
        if (!std::isfinite(logits.data[i]))
            fail(fmt::format("non-finite logit at row {} column {}", i / logits.cols, i % logits.cols));
    }
    if (hidden_vectors) {
        const auto& h = *hidden_vectors;
        if (h.rows != num_rows())
            fail(fmt::format("hidden_vectors has {} rows, expected {}", h.rows, num_rows()));
        if (h.cols < 1) fail("hidden_vectors needs at least one column");
        if (h.data.size() != h.rows * h.cols) fail("hidden_vectors payload size mismatch");
    }
    if (mode == JudgeMode::reasoning && !generated_text) fail("reasoning mode requires generated_text");
}

void RecordBatch::validate() const {
    if (schema_version != kSchemaVersion)
        throw ValidationError(fmt::format("unsupported schema_version '{}'", schema_version));
    std::unordered_set<std::string> seen;
    for (const auto& r : records) {
        r.validate();
        const auto& first = records.front();
        if (r.num_layers != first.num_layers)
            throw ValidationError(fmt::format("record '{}': num_layers {} differs from batch ({})",
                                              r.sample_id, r.num_layers, first.num_layers));
        if (!(r.score_set == first.score_set))
            throw ValidationError(fmt::format("record '{}': score_set differs from batch", r.sample_id));
        if (r.model_id != first.model_id)
            throw ValidationError(fmt::format("record '{}': model_id '{}' differs from batch ('{}')",
                                              r.sample_id, r.model_id, first.model_id));
        if (!seen.insert(r.sample_id).second)
            throw ValidationError(fmt::format("record '{}': duplicate sample_id", r.sample_id));
    }
}

namespace {

ordered_json matrix_to_json(const Matrix& m) {
    ordered_json j;
    j["rows"] = m.rows;
    j["cols"] = m.cols;
    j["data_b64"] = base64::encode_floats(m.data);
    return j;
}

Matrix matrix_from_json(const json& j, const char* field) {
    Matrix m;
    m.rows = j.at("rows").get<std::size_t>();
    m.cols = j.at("cols").get<std::size_t>();
    m.data = base64::decode_floats(j.at("data_b64").get<std::string>());
    if (m.data.size() != m.rows * m.cols)
        throw ValidationError(fmt::format("{}: payload has {} floats, declared {}x{}", field,
                                          m.data.size(), m.rows, m.cols));
    return m;
}

ordered_json record_to_json(const LayerLogitRecord& r, const std::string& schema) {
    ordered_json j;
    j["schema_version"] = schema;
    j["sample_id"] = r.sample_id;
    j["model_id"] = r.model_id;
    j["mode"] = to_string(r.mode);
    j["num_layers"] = r.num_layers;
    j["score_set"] = {{"values", r.score_set.values},
                      {"token_ids", r.score_set.token_ids},
                      {"labels", r.score_set.labels}};
    j["logits"] = matrix_to_json(r.logits);
    if (r.hidden_vectors) j["hidden_vectors"] = matrix_to_json(*r.hidden_vectors);
    if (r.avg_logprob) j["avg_logprob"] = *r.avg_logprob;
    if (r.human_score) j["human_score"] = *r.human_score;
    j["prompt_hash"] = r.prompt_hash;
    if (r.generated_text) j["generated_text"] = *r.generated_text;
    if (!r.metadata.empty()) j["metadata"] = r.metadata;
    return j;
}

LayerLogitRecord record_from_json(const json& j) {
    LayerLogitRecord r;
    r.sample_id = j.at("sample_id").get<std::string>();
    r.model_id = j.at("model_id").get<std::string>();
    r.mode = parse_judge_mode(j.at("mode").get<std::string>());
    r.num_layers = j.at("num_layers").get<int>();
    const auto& s = j.at("score_set");
    r.score_set.values = s.at("values").get<std::vector<int>>();
    r.score_set.token_ids = s.at("token_ids").get<std::vector<std::int64_t>>();
    if (s.contains("labels")) r.score_set.labels = s.at("labels").get<std::vector<std::string>>();
    r.logits = matrix_from_json(j.at("logits"), "logits");
    if (j.contains("hidden_vectors") && !j["hidden_vectors"].is_null())
        r.hidden_vectors = matrix_from_json(j["hidden_vectors"], "hidden_vectors");
    if (j.contains("avg_logprob") && !j["avg_logprob"].is_null())
        r.avg_logprob = j["avg_logprob"].get<double>();
    if (j.contains("human_score") && !j["human_score"].is_null())
        r.human_score = j["human_score"].get<double>();
    r.prompt_hash = j.value("prompt_hash", "");
    if (j.contains("generated_text") && !j["generated_text"].is_null())
        r.generated_text = j["generated_text"].get<std::string>();
    if (j.contains("metadata"))
        r.metadata = j["metadata"].get<std::map<std::string, std::string>>();
    return r;
}

bool blank(const std::string& line) {
    return line.find_first_not_of(" \t\r") == std::string::npos;
}

}  // namespace

std::size_t write_records(const RecordBatch& batch, std::ostream& out) {
    batch.validate();
    for (const auto& r : batch.records) {
        out << record_to_json(r, batch.schema_version).dump() << '\n';
    }
    if (!out) throw IoError("failed writing record stream");
    return batch.records.size();
}

RecordBatch read_records(std::istream& in) {
    RecordBatch batch;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (blank(line)) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::exception& e) {
            throw ParseError(fmt::format("malformed JSON: {}", e.what()), lineno);
        }
        try {
            const auto version = j.at("schema_version").get<std::string>();
            if (version != kSchemaVersion)
                throw ParseError(fmt::format("unsupported schema_version '{}'", version), lineno);
            batch.records.push_back(record_from_json(j));
        } catch (const json::exception& e) {
            throw ParseError(fmt::format("bad record field: {}", e.what()), lineno);
        } catch (const ParseError&) {
            throw;
        } catch (const ValidationError& e) {
            throw ParseError(e.what(), lineno);
        }
    }
    if (in.bad()) throw IoError("failed reading record stream");
    batch.validate();
    return batch;
}

std::size_t write_records_file(const RecordBatch& batch, const std::string& path) {
    batch.validate();
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError(fmt::format("{}: cannot open for writing", path));
    const auto n = write_records(batch, out);
    out.flush();
    if (!out) throw IoError(fmt::format("{}: write failed", path));
    return n;
}

RecordBatch read_records_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError(fmt::format("{}: cannot open for reading", path));
    try {
        return read_records(in);
    } catch (const ParseError& e) {
        throw ParseError(fmt::format("{}: {}", path, e.what()), e.line());
    } catch (const ValidationError& e) {
        throw ValidationError(fmt::format("{}: {}", path, e.what()));
    }
}

std::size_t write_annotations(const std::vector<AnnotatedSample>& rows, std::ostream& out) {
    for (const auto& a : rows) {
        ordered_json j;
        j["sample_id"] = a.sample_id;
        j["human_score"] = a.human_score;
        if (a.dimension) j["dimension"] = *a.dimension;
        if (a.split) j["split"] = *a.split;
        out << j.dump() << '\n';
    }
    if (!out) throw IoError("failed writing annotation stream");
    return rows.size();
}

std::vector<AnnotatedSample> read_annotations(std::istream& in) {
    std::vector<AnnotatedSample> rows;
    std::unordered_set<std::string> seen;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (blank(line)) continue;
        try {
            const auto j = json::parse(line);
            AnnotatedSample a;
            a.sample_id = j.at("sample_id").get<std::string>();
            a.human_score = j.at("human_score").get<double>();
            if (j.contains("dimension") && !j["dimension"].is_null())
                a.dimension = j["dimension"].get<std::string>();
            if (j.contains("split") && !j["split"].is_null()) a.split = j["split"].get<std::string>();
            if (!std::isfinite(a.human_score))
                throw ParseError(fmt::format("sample '{}': non-finite human_score", a.sample_id), lineno);
            if (!seen.insert(a.sample_id).second)
                throw ParseError(fmt::format("duplicate sample_id '{}'", a.sample_id), lineno);
            rows.push_back(std::move(a));
        } catch (const json::exception& e) {
            throw ParseError(fmt::format("bad annotation: {}", e.what()), lineno);
        }
    }
    if (in.bad()) throw IoError("failed reading annotation stream");
    return rows;
}

std::vector<AnnotatedSample> read_annotations_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError(fmt::format("{}: cannot open for reading", path));
    try {
        return read_annotations(in);
    } catch (const ParseError& e) {
        throw ParseError(fmt::format("{}: {}", path, e.what()), e.line());
    }
}

void validate_annotations(const std::vector<AnnotatedSample>& rows, const CandidateScoreSet& s) {
    for (const auto& a : rows) {
        if (a.human_score < s.min() || a.human_score > s.max())
            throw ValidationError(fmt::format("annotation '{}': human_score {} outside [{}, {}]",
                                              a.sample_id, a.human_score, s.min(), s.max()));
    }
}

RecordBatch synth_records(const SynthOptions& opts) {
    opts.score_set.validate();
    if (opts.num_layers < 0) throw ArgumentError("synth: num_layers must be >= 0");
    if (opts.oracle_layer && (*opts.oracle_layer < 0 || *opts.oracle_layer > opts.num_layers))
        throw ArgumentError(fmt::format("synth: oracle_layer {} outside [0, {}]", *opts.oracle_layer,
                                        opts.num_layers));
    if (!(opts.noise_scale >= 0.0) || !std::isfinite(opts.noise_scale))
        throw ArgumentError("synth: noise_scale must be finite and >= 0");

    Rng rng(opts.seed);
    const std::size_t rows = static_cast<std::size_t>(opts.num_layers) + 1;
    const std::size_t k = opts.score_set.size();
    const int width = static_cast<int>(std::to_string(opts.n > 0 ? opts.n - 1 : 0).size());

    RecordBatch batch;
    batch.records.reserve(opts.n);
    for (std::size_t i = 0; i < opts.n; ++i) {
        LayerLogitRecord r;
        r.sample_id = fmt::format("synth-{:0{}}", i, std::max(width, 6));
        r.model_id = "synthetic";
        r.num_layers = opts.num_layers;
        r.score_set = opts.score_set;
        r.prompt_hash = fmt::format("synth:{}:{}", opts.seed, i);

        const auto truth_col = static_cast<std::size_t>(rng.index(k));
        r.human_score = static_cast<double>(opts.score_set.values[truth_col]);

        r.logits = Matrix(rows, k);
        for (std::size_t l = 0; l < rows; ++l) {
            const bool oracle = opts.oracle_layer && static_cast<std::size_t>(*opts.oracle_layer) == l;
            for (std::size_t c = 0; c < k; ++c) {
                r.logits.at(l, c) = oracle ? (c == truth_col ? 10.0f : 0.0f)
                                           : static_cast<float>(opts.noise_scale * rng.normal());
            }
        }
        if (opts.hidden_dim > 0) {
            Matrix h(rows, opts.hidden_dim);
            for (auto& x : h.data) x = static_cast<float>(rng.normal());
            r.hidden_vectors = std::move(h);
        }
        batch.records.push_back(std::move(r));
    }
    return batch;
}

}  // namespace lager
