#include "lager/harness.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <unordered_map>

#include <fmt/format.h>
#include <json.hpp>

#include "lager/errors.hpp"
#include "lager/plots.hpp"

namespace lager::harness {

using ordered_json = nlohmann::ordered_json;
using json = nlohmann::json;

JoinResult join(const RecordBatch& records, const std::vector<AnnotatedSample>& annotations) {
    std::unordered_map<std::string, const AnnotatedSample*> by_id;
    for (const auto& a : annotations) by_id.emplace(a.sample_id, &a);

    JoinResult out;
    std::size_t matched = 0;
    for (const auto& r : records.records) {
        const auto it = by_id.find(r.sample_id);
        if (it == by_id.end()) {
            ++out.records_without_annotation;
            continue;
        }
        const auto& a = *it->second;
        if (r.human_score && *r.human_score != a.human_score) {
            out.warnings.push_back(fmt::format(
                "sample '{}': embedded human_score {} conflicts with annotation {}; using the annotation",
                r.sample_id, *r.human_score, a.human_score));
        }
        out.samples.push_back({&r, a.human_score, a.dimension});
        ++matched;
    }
    out.annotations_without_record = annotations.size() - matched;
    if (out.samples.empty())
        throw ValidationError(fmt::format("join: no sample_id shared between {} records and {} annotations",
                                          records.size(), annotations.size()));
    return out;
}

std::string ModeSpec::label() const {
    const bool weighted = mode.aggregation.kind == Aggregation::Kind::logits ||
                          mode.aggregation.kind == Aggregation::Kind::probability;
    return weighted ? fmt::format("{}@{}", to_string(mode), weights_label) : to_string(mode);
}

ModeSpec parse_mode_spec(const std::string& text, const LayerWeights& default_weights,
                         const std::string& default_label, int num_layers) {
    ModeSpec spec;
    const auto at = text.find('@');
    spec.mode = parse_scoring_mode(text.substr(0, at));
    spec.mode.validate(num_layers);
    if (at == std::string::npos) {
        spec.weights = default_weights;
        spec.weights_label = default_label;
    } else {
        spec.weights_label = text.substr(at + 1);
        spec.weights = spec.weights_label == "uniform" ? LayerWeights::uniform(num_layers)
                                                       : read_weights_file(spec.weights_label);
    }
    if (spec.weights.num_layers() != num_layers)
        throw ArgumentError(fmt::format("mode '{}': weights cover {} layers but records have {}", text,
                                        spec.weights.num_layers(), num_layers));
    return spec;
}

EvalReport evaluate(const JoinResult& joined, const std::vector<ModeSpec>& modes, const EvalOptions& opts) {
    if (modes.empty()) throw ArgumentError("evaluate: at least one mode is required");
    EvalReport report;
    report.joined = joined.samples.size();
    report.records_without_annotation = joined.records_without_annotation;
    report.annotations_without_record = joined.annotations_without_record;
    report.warnings = joined.warnings;

    for (const auto& spec : modes) {
        ModeResult res;
        res.spec = spec;
        std::map<std::string, std::pair<std::vector<double>, std::vector<double>>> dims;
        for (const auto& s : joined.samples) {
            try {
                const auto score = score_record(*s.record, spec.weights, spec.mode);
                res.sample_ids.push_back(s.record->sample_id);
                res.scores.push_back(score.value);
                res.human.push_back(s.human_score);
                if (opts.group_by_dimension) {
                    auto& d = dims[s.dimension.value_or("")];
                    d.first.push_back(score.value);
                    d.second.push_back(s.human_score);
                }
            } catch (const ArgumentError&) {
                throw;
            } catch (const Error& e) {
                ++res.failures;
                res.errors.push_back(fmt::format("sample '{}': {}", s.record->sample_id, e.what()));
            }
        }
        res.correlation.n = res.scores.size();
        if (res.scores.size() >= 2) {
            res.correlation = metrics::correlate(res.scores, res.human);
            res.distance = metrics::distribution_distance(res.scores, res.human, opts.bins);
        }
        for (const auto& [dim, series] : dims) {
            metrics::CorrelationResult c;
            c.n = series.first.size();
            if (c.n >= 2) c = metrics::correlate(series.first, series.second);
            res.by_dimension.emplace(dim, c);
        }
        report.modes.push_back(std::move(res));
    }
    return report;
}

namespace {

ordered_json correlation_json(const metrics::CorrelationResult& c) {
    ordered_json j;
    j["n"] = c.n;
    j["pearson"] = c.pearson ? json(*c.pearson) : json(nullptr);
    j["spearman"] = c.spearman ? json(*c.spearman) : json(nullptr);
    j["pearson_defined"] = c.pearson.has_value();
    j["spearman_defined"] = c.spearman.has_value();
    return j;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError(fmt::format("{}: cannot open for writing", path.string()));
    out << text;
    if (!out) throw IoError(fmt::format("{}: write failed", path.string()));
}

ordered_json density_json(const metrics::DensityEstimate& d) {
    ordered_json j;
    j["bandwidth"] = d.bandwidth;
    j["raw_mass"] = d.raw_mass;
    j["grid_size"] = d.grid.size();
    return j;
}

void write_density_csv(const std::filesystem::path& path, const metrics::DensityEstimate& d) {
    std::ostringstream csv;
    csv << "x,density\n";
    for (std::size_t i = 0; i < d.grid.size(); ++i)
        csv << plots::format_number(d.grid[i]) << ',' << plots::format_number(d.density[i]) << '\n';
    write_text(path, csv.str());
}

}  // namespace

void write_eval_report(const EvalReport& report, const std::filesystem::path& out_dir) {
    std::filesystem::create_directories(out_dir);
    ordered_json j;
    j["joined"] = report.joined;
    j["skipped"] = {{"records_without_annotation", report.records_without_annotation},
                    {"annotations_without_record", report.annotations_without_record}};
    j["warnings"] = report.warnings;
    ordered_json modes = ordered_json::array();
    for (std::size_t k = 0; k < report.modes.size(); ++k) {
        const auto& m = report.modes[k];
        ordered_json mj;
        mj["mode"] = m.spec.label();
        mj["statistic"] = to_string(m.spec.mode.statistic);
        mj["aggregation"] = to_string(m.spec.mode.aggregation);
        mj["method"] = to_string(m.spec.mode.method());
        mj["weights"] = m.spec.weights_label;
        mj["correlation"] = correlation_json(m.correlation);
        if (m.distance) {
            mj["distance"] = {{"kl", m.distance->kl}, {"mse", m.distance->mse}, {"bins", m.distance->bins}};
        } else {
            mj["distance"] = nullptr;
        }
        mj["failures"] = m.failures;
        mj["errors"] = m.errors;
        if (!m.by_dimension.empty()) {
            ordered_json dj;
            for (const auto& [dim, c] : m.by_dimension) dj[dim.empty() ? "(none)" : dim] = correlation_json(c);
            mj["by_dimension"] = dj;
        }
        mj["scores_csv"] = fmt::format("scores_{}.csv", k);
        modes.push_back(std::move(mj));

        std::ostringstream csv;
        csv << "sample_id,score,human_score\n";
        for (std::size_t i = 0; i < m.scores.size(); ++i)
            csv << m.sample_ids[i] << ',' << plots::format_number(m.scores[i]) << ','
                << plots::format_number(m.human[i]) << '\n';
        write_text(out_dir / fmt::format("scores_{}.csv", k), csv.str());
    }
    j["modes"] = modes;
    write_text(out_dir / "report.json", j.dump(2) + "\n");

    std::ostringstream table;
    table << "mode,n,pearson,spearman,kl,mse,failures\n";
    for (const auto& m : report.modes) {
        table << m.spec.label() << ',' << m.correlation.n << ','
              << (m.correlation.pearson ? plots::format_number(*m.correlation.pearson) : "undefined") << ','
              << (m.correlation.spearman ? plots::format_number(*m.correlation.spearman) : "undefined") << ','
              << (m.distance ? plots::format_number(m.distance->kl) : "") << ','
              << (m.distance ? plots::format_number(m.distance->mse) : "") << ',' << m.failures << '\n';
    }
    write_text(out_dir / "correlations.csv", table.str());
}

EvalReport run_eval(const EvalRun& run) {
    const auto batch = read_records_file(run.records_path);
    const auto annotations = read_annotations_file(run.annotations_path);
    if (batch.empty()) throw ValidationError(fmt::format("{}: no records", run.records_path));
    validate_annotations(annotations, batch.score_set());
    const int layers = batch.num_layers();
    const auto default_weights =
        run.weights == "uniform" ? LayerWeights::uniform(layers) : read_weights_file(run.weights);
    std::vector<ModeSpec> specs;
    for (const auto& m : run.modes) specs.push_back(parse_mode_spec(m, default_weights, run.weights, layers));
    const auto joined = join(batch, annotations);
    auto report = evaluate(joined, specs, run.options);
    write_eval_report(report, run.output_dir);
    return report;
}

LayerAnalysis layer_analysis(const JoinResult& joined, Statistic statistic) {
    if (joined.samples.empty()) throw ArgumentError("layer_analysis: no joined samples");
    const std::size_t rows = joined.samples.front().record->num_rows();
    std::vector<std::vector<double>> per_layer(rows);
    std::vector<double> human;
    for (const auto& s : joined.samples) {
        const auto scores = per_layer_scores(*s.record, statistic);
        for (std::size_t l = 0; l < rows; ++l) per_layer[l].push_back(scores[l].value);
        human.push_back(s.human_score);
    }
    LayerAnalysis out;
    for (std::size_t l = 0; l < rows; ++l) {
        metrics::CorrelationResult c;
        if (human.size() >= 2) c = metrics::correlate(per_layer[l], human);
        out.per_layer_spearman.push_back(c.spearman);
        out.per_layer_pearson.push_back(c.pearson);
        if (!c.spearman) out.notices.push_back(fmt::format("layer {}: Spearman undefined (constant scores)", l));
    }

    const bool have_hidden = std::all_of(joined.samples.begin(), joined.samples.end(),
                                         [](const JoinedSample& s) { return s.record->hidden_vectors.has_value(); });
    if (!have_hidden) {
        out.notices.push_back("hidden_vectors absent from some records; cosine heatmap omitted");
        return out;
    }
    std::vector<std::vector<double>> cos(rows, std::vector<double>(rows, 0.0));
    std::size_t used = 0;
    for (const auto& s : joined.samples) {
        const auto& h = *s.record->hidden_vectors;
        try {
            std::vector<std::vector<double>> local(rows, std::vector<double>(rows, 1.0));
            for (std::size_t i = 0; i < rows; ++i) {
                for (std::size_t j = i + 1; j < rows; ++j)
                    local[i][j] = local[j][i] = metrics::cosine_similarity(h.row(i), h.row(j));
            }
            for (std::size_t i = 0; i < rows; ++i) {
                for (std::size_t j = 0; j < rows; ++j) cos[i][j] += local[i][j];
            }
            ++used;
        } catch (const NumericError&) {
            out.notices.push_back(
                fmt::format("sample '{}': zero hidden vector, excluded from cosine average", s.record->sample_id));
        }
    }
    if (used == 0) {
        out.notices.push_back("no sample had non-zero hidden vectors; cosine heatmap omitted");
        return out;
    }
    for (auto& row : cos) {
        for (double& v : row) v /= static_cast<double>(used);
    }
    out.cosine_matrix = std::move(cos);
    return out;
}

void write_layer_analysis(const LayerAnalysis& analysis, const std::filesystem::path& out_dir) {
    std::filesystem::create_directories(out_dir);
    plots::Series spearman{"spearman", {}, analysis.per_layer_spearman};
    plots::Series pearson{"pearson", {}, analysis.per_layer_pearson};
    for (std::size_t l = 0; l < analysis.per_layer_spearman.size(); ++l) {
        spearman.x.push_back(static_cast<double>(l));
        pearson.x.push_back(static_cast<double>(l));
    }
    plots::write_line_plot(out_dir, "layer_curve", "Per-layer agreement with human scores", "layer", "correlation",
                           {spearman, pearson});
    if (analysis.cosine_matrix) {
        plots::write_heatmap(out_dir, "cosine_heatmap", "Cross-layer hidden-state cosine similarity",
                             *analysis.cosine_matrix);
    }

    ordered_json j;
    auto opt_array = [](const std::vector<std::optional<double>>& v) {
        ordered_json a = ordered_json::array();
        for (const auto& x : v) a.push_back(x ? ordered_json(*x) : ordered_json(nullptr));
        return a;
    };
    j["per_layer_spearman"] = opt_array(analysis.per_layer_spearman);
    j["per_layer_pearson"] = opt_array(analysis.per_layer_pearson);
    j["cosine_matrix"] = analysis.cosine_matrix ? ordered_json(*analysis.cosine_matrix) : ordered_json(nullptr);
    j["notices"] = analysis.notices;
    write_text(out_dir / "layers.json", j.dump(2) + "\n");
}

DistributionReport distribution_report(const std::vector<std::pair<std::string, std::vector<double>>>& methods,
                                       const std::vector<double>& human, std::size_t bins, std::size_t grid_size) {
    DistributionReport report;
    if (methods.empty()) return report;
    if (human.empty()) throw ArgumentError("distribution_report: empty human score series");
    const auto human_norm = metrics::minmax_normalize(human);
    try {
        report.human_density = metrics::kde(human_norm, grid_size);
    } catch (const ArgumentError& e) {
        report.human_density_error = e.what();
    }
    for (const auto& [name, scores] : methods) {
        if (scores.empty()) throw ArgumentError(fmt::format("distribution_report: method '{}' has no scores", name));
        MethodDistribution md;
        md.method = name;
        const auto norm = metrics::minmax_normalize(scores);
        try {
            md.density = metrics::kde(norm, grid_size);
        } catch (const ArgumentError& e) {
            md.density_error = fmt::format("method '{}': {}", name, e.what());
        }
        md.distance = metrics::distribution_distance(scores, human, bins);
        report.methods.push_back(std::move(md));
    }
    return report;
}

void write_distribution_report(const DistributionReport& report, const std::filesystem::path& out_dir) {
    std::filesystem::create_directories(out_dir);
    ordered_json j;
    j["human"] = report.human_density ? density_json(*report.human_density) : ordered_json(nullptr);
    if (report.human_density_error) j["human_error"] = *report.human_density_error;
    if (report.human_density) write_density_csv(out_dir / "kde_human.csv", *report.human_density);

    std::vector<plots::Series> curves;
    ordered_json methods = ordered_json::array();
    for (std::size_t k = 0; k < report.methods.size(); ++k) {
        const auto& m = report.methods[k];
        ordered_json mj;
        mj["method"] = m.method;
        mj["kl"] = m.distance.kl;
        mj["mse"] = m.distance.mse;
        mj["bins"] = m.distance.bins;
        mj["density"] = m.density ? density_json(*m.density) : ordered_json(nullptr);
        if (m.density_error) mj["density_error"] = *m.density_error;
        if (m.density) {
            write_density_csv(out_dir / fmt::format("kde_{}.csv", k), *m.density);
            curves.push_back({m.method, m.density->grid, {m.density->density.begin(), m.density->density.end()}});
        }
        methods.push_back(std::move(mj));
    }
    j["methods"] = methods;
    write_text(out_dir / "distribution.json", j.dump(2) + "\n");

    // Each curve has its own grid, so the SVG plots each against its own x;
    // the CSVs above keep the exact series.
    if (report.human_density)
        curves.insert(curves.begin(), {"human", report.human_density->grid,
                                       {report.human_density->density.begin(), report.human_density->density.end()}});
    if (!curves.empty()) {
        plots::write_line_plot(out_dir, "kde", "Score density (min-max normalized)", "normalized score", "density",
                               curves);
    }
}

SelectionResult select_data(const std::map<std::string, std::map<std::string, double>>& dimension_scores,
                            double ratio) {
    if (!(ratio > 0.0 && ratio <= 1.0)) throw ArgumentError(fmt::format("select: ratio {} outside (0, 1]", ratio));
    SelectionResult out;
    out.ratio = ratio;
    if (dimension_scores.empty()) return out;

    const auto& reference = dimension_scores.begin()->second;
    for (const auto& [id, dims] : dimension_scores) {
        bool same = dims.size() == reference.size();
        for (auto a = dims.begin(), b = reference.begin(); same && a != dims.end(); ++a, ++b)
            same = a->first == b->first;
        if (!same)
            throw ValidationError(fmt::format("select: sample '{}' has a different dimension set than '{}'", id,
                                              dimension_scores.begin()->first));
        if (dims.empty()) throw ValidationError(fmt::format("select: sample '{}' has no dimension scores", id));
        double sum = 0.0;
        for (const auto& [_, v] : dims) sum += v;
        out.ranked.push_back({id, sum / static_cast<double>(dims.size())});
    }
    std::sort(out.ranked.begin(), out.ranked.end(), [](const RankedSample& a, const RankedSample& b) {
        if (a.mean_score != b.mean_score) return a.mean_score > b.mean_score;
        return a.sample_id < b.sample_id;
    });
    const auto keep = static_cast<std::size_t>(std::ceil(ratio * static_cast<double>(out.ranked.size()) - 1e-9));
    for (std::size_t i = 0; i < std::min(keep, out.ranked.size()); ++i) out.selected.push_back(out.ranked[i].sample_id);
    return out;
}

std::map<std::string, std::map<std::string, double>> read_dimension_scores_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError(fmt::format("{}: cannot open for reading", path));
    std::map<std::string, std::map<std::string, double>> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            const auto j = json::parse(line);
            const auto id = j.at("sample_id").get<std::string>();
            auto& dims = out[id];
            auto put = [&](const std::string& dim, double v) {
                if (!std::isfinite(v))
                    throw ParseError(fmt::format("{}: sample '{}' dimension '{}' is not finite", path, id, dim), lineno);
                if (!dims.emplace(dim, v).second)
                    throw ParseError(fmt::format("{}: sample '{}' repeats dimension '{}'", path, id, dim), lineno);
            };
            if (j.contains("scores")) {
                for (const auto& [dim, v] : j["scores"].items()) put(dim, v.get<double>());
            } else {
                put(j.at("dimension").get<std::string>(), j.at("value").get<double>());
            }
        } catch (const json::exception& e) {
            throw ParseError(fmt::format("{}: bad dimension score line: {}", path, e.what()), lineno);
        }
    }
    return out;
}

void write_selection_manifest(const SelectionResult& result, std::ostream& out) {
    for (std::size_t i = 0; i < result.ranked.size(); ++i) {
        ordered_json j;
        j["sample_id"] = result.ranked[i].sample_id;
        j["mean_score"] = result.ranked[i].mean_score;
        j["rank"] = i + 1;
        j["selected"] = i < result.selected.size();
        out << j.dump() << '\n';
    }
    if (!out) throw IoError("failed writing selection manifest");
}

}  // namespace lager::harness
