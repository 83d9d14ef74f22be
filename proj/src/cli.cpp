#include "lager/cli.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "lager/calibration.hpp"
#include "lager/convert.hpp"
#include "lager/errors.hpp"
#include "lager/harness.hpp"
#include "lager/record.hpp"
#include "lager/score.hpp"

namespace lager::cli {

namespace {

std::vector<int> parse_int_list(const std::string& text, const char* flag) {
    std::vector<int> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        try {
            std::size_t used = 0;
            out.push_back(std::stoi(item, &used));
            if (used != item.size()) throw std::invalid_argument(item);
        } catch (const std::exception&) {
            throw ArgumentError(fmt::format("{}: '{}' is not an integer list", flag, text));
        }
    }
    return out;
}

std::ofstream open_out(const std::string& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError(fmt::format("{}: cannot open for writing", path));
    return out;
}

void close_out(std::ofstream& out, const std::string& path) {
    out.flush();
    if (!out) throw IoError(fmt::format("{}: write failed", path));
}

LayerWeights load_weights(const std::string& spec, int num_layers) {
    auto w = spec == "uniform" ? LayerWeights::uniform(num_layers) : read_weights_file(spec);
    if (w.num_layers() != num_layers)
        throw ArgumentError(fmt::format("--weights {}: covers {} layers but records have {}", spec, w.num_layers(),
                                        num_layers));
    return w;
}

std::vector<LabeledRecord> labeled(const harness::JoinResult& joined) {
    std::vector<LabeledRecord> out;
    for (const auto& s : joined.samples) out.push_back({s.record, s.human_score});
    return out;
}

void print_warnings(const std::vector<std::string>& warnings, std::ostream& err) {
    for (const auto& w : warnings) err << "warning: " << w << '\n';
}

}  // namespace

int run(const std::vector<std::string>& argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Layer-aggregated LLM-as-a-judge scoring, calibration and analysis", "lager"};
    app.set_config("--config", "", "TOML/INI file supplying any flag; explicit flags override it");
    app.require_subcommand(1, 1);
    app.allow_extras(false);

    std::function<void()> action;

    // validate
    std::string v_records, v_annotations;
    auto* validate = app.add_subcommand("validate", "Schema-check a record file");
    validate->add_option("--records", v_records, "Record file (JSON Lines)")->required();
    validate->add_option("--annotations", v_annotations, "Optional annotation file to range-check");
    validate->callback([&] {
        action = [&] {
            const auto batch = read_records_file(v_records);
            if (!v_annotations.empty() && !batch.empty())
                validate_annotations(read_annotations_file(v_annotations), batch.score_set());
            out << fmt::format("{}: {} valid records", v_records, batch.size()) << '\n';
        };
    });

    // synth
    SynthOptions so;
    std::string s_scores = "1,2,3,4,5", s_out, s_ann_out;
    int s_oracle = -1;
    auto* synth = app.add_subcommand("synth", "Write a deterministic synthetic record batch");
    synth->add_option("--n", so.n, "Number of samples")->required();
    synth->add_option("--layers", so.num_layers, "Decoder layer count L (records carry L+1 rows)")->required();
    synth->add_option("--oracle-layer", s_oracle, "Row holding 10 * one_hot(truth); omit for pure noise");
    synth->add_option("--noise", so.noise_scale, "Standard deviation of the noise rows")->capture_default_str();
    synth->add_option("--seed", so.seed, "RNG seed")->capture_default_str();
    synth->add_option("--scores", s_scores, "Comma-separated candidate score values")->capture_default_str();
    synth->add_option("--hidden-dim", so.hidden_dim, "Width of synthetic hidden vectors (0 = none)")
        ->capture_default_str();
    synth->add_option("--out", s_out, "Output record file")->required();
    synth->add_option("--annotations-out", s_ann_out, "Also write the ground truth as an annotation file");
    synth->callback([&] {
        action = [&] {
            so.score_set = CandidateScoreSet::from_values(parse_int_list(s_scores, "--scores"));
            if (s_oracle >= 0) so.oracle_layer = s_oracle;
            if (so.oracle_layer && *so.oracle_layer > so.num_layers)
                throw ArgumentError(
                    fmt::format("--oracle-layer {} outside [0, {}]", *so.oracle_layer, so.num_layers));
            const auto batch = synth_records(so);
            write_records_file(batch, s_out);
            if (!s_ann_out.empty()) {
                std::vector<AnnotatedSample> rows;
                for (const auto& r : batch.records) rows.push_back({r.sample_id, *r.human_score, {}, {}});
                auto f = open_out(s_ann_out);
                write_annotations(rows, f);
                close_out(f, s_ann_out);
            }
            out << fmt::format("wrote {} records to {}", batch.size(), s_out) << '\n';
        };
    });

    // score
    std::string sc_records, sc_weights = "uniform", sc_statistic = "expectation", sc_aggregation = "logits", sc_out;
    bool sc_emit_dist = false;
    unsigned sc_jobs = 1;
    auto* score = app.add_subcommand("score", "Score every record under one mode");
    score->add_option("--records", sc_records, "Record file")->required();
    score->add_option("--weights", sc_weights, "'uniform' or a weights JSON file")->capture_default_str();
    score->add_option("--statistic", sc_statistic, "expectation | argmax")->capture_default_str();
    score->add_option("--aggregation", sc_aggregation, "logits | probability | final | layer:K")
        ->capture_default_str();
    score->add_flag("--emit-dist", sc_emit_dist, "Include the score distribution in each output line");
    score->add_option("--jobs", sc_jobs, "Worker threads (output is identical for any value)")->capture_default_str();
    score->add_option("--out", sc_out, "Output score file (JSON Lines)")->required();
    score->callback([&] {
        action = [&] {
            ScoringMode mode;
            try {
                mode = {parse_statistic(sc_statistic), parse_aggregation(sc_aggregation)};
            } catch (const ArgumentError& e) {
                throw ArgumentError(fmt::format("--statistic/--aggregation: {}", e.what()));
            }
            const auto batch = read_records_file(sc_records);
            const int layers = batch.num_layers();
            try {
                mode.validate(layers);
            } catch (const ArgumentError& e) {
                throw ArgumentError(fmt::format("--aggregation ({}): {}", sc_records, e.what()));
            }
            const auto w = batch.empty() ? LayerWeights{} : load_weights(sc_weights, layers);
            const auto scores = score_batch(batch, w, mode, sc_emit_dist, sc_jobs);
            auto f = open_out(sc_out);
            write_scores(scores, mode, f);
            close_out(f, sc_out);
            out << fmt::format("scored {} records ({}) -> {}", scores.size(), to_string(mode), sc_out) << '\n';
        };
    });

    // train
    std::string t_records, t_annotations, t_init = "uniform", t_out;
    TrainConfig tc;
    auto* train_cmd = app.add_subcommand("train", "Fit layer weights on an annotated validation set");
    train_cmd->add_option("--records", t_records, "Record file")->required();
    train_cmd->add_option("--annotations", t_annotations, "Annotation file")->required();
    train_cmd->add_option("--alpha", tc.alpha, "Cross-entropy share of the loss")->capture_default_str();
    train_cmd->add_option("--lr", tc.learning_rate, "Initial Adam learning rate")->capture_default_str();
    train_cmd->add_option("--batch", tc.batch_size, "Mini-batch size")->capture_default_str();
    train_cmd->add_option("--epochs", tc.epochs, "Training epochs")->capture_default_str();
    train_cmd->add_option("--seed", tc.seed, "Shuffle seed")->capture_default_str();
    train_cmd->add_option("--min-lr", tc.scheduler.min_lr, "Plateau scheduler floor")->capture_default_str();
    train_cmd->add_option("--patience", tc.scheduler.patience, "Plateau scheduler patience")->capture_default_str();
    train_cmd->add_option("--factor", tc.scheduler.factor, "Plateau scheduler decay factor")->capture_default_str();
    train_cmd->add_option("--init", t_init, "'uniform' or a weights JSON file to start from")->capture_default_str();
    train_cmd->add_option("--out", t_out, "Output weights JSON")->required();
    train_cmd->callback([&] {
        action = [&] {
            tc.validate();
            const auto batch = read_records_file(t_records);
            const auto annotations = read_annotations_file(t_annotations);
            if (batch.empty()) throw ValidationError(fmt::format("{}: no records", t_records));
            validate_annotations(annotations, batch.score_set());
            if (t_init != "uniform") tc.init_weights = load_weights(t_init, batch.num_layers()).weights;
            const auto joined = harness::join(batch, annotations);
            print_warnings(joined.warnings, err);
            const auto data = labeled(joined);
            const auto report = train(data, tc);
            write_weights_file(report, tc, batch.records.front().model_id, t_out);
            out << fmt::format("trained on {} samples; final epoch loss {}; weights -> {}", report.num_samples,
                               report.loss_curve.empty() ? 0.0 : report.loss_curve.back(), t_out)
                << '\n';
        };
    });

    // eval
    harness::EvalRun er;
    std::string er_out_dir;
    auto* eval = app.add_subcommand("eval", "Correlate scoring modes with human annotations");
    eval->add_option("--records", er.records_path, "Record file")->required();
    eval->add_option("--annotations", er.annotations_path, "Annotation file")->required();
    eval->add_option("--weights", er.weights, "Default weights: 'uniform' or a weights JSON file")
        ->capture_default_str();
    eval->add_option("--modes", er.modes,
                     "Modes as <statistic>:<aggregation>[@weights], e.g. argmax:final expectation:logits@w.json")
        ->required();
    eval->add_option("--bins", er.options.bins, "Histogram bins for KL")->capture_default_str();
    eval->add_flag("--group-by-dimension", er.options.group_by_dimension, "Add per-dimension correlation tables");
    eval->add_option("--jobs", er.options.jobs, "Worker threads")->capture_default_str();
    eval->add_option("--out-dir", er_out_dir, "Report directory")->required();
    eval->callback([&] {
        action = [&] {
            er.output_dir = er_out_dir;
            const auto report = harness::run_eval(er);
            print_warnings(report.warnings, err);
            for (const auto& m : report.modes) {
                const auto show = [](const std::optional<double>& v) {
                    return v ? fmt::format("{:.4f}", *v) : std::string("undefined");
                };
                out << fmt::format("{:<40} n={:<6} pearson={:<10} spearman={}", m.spec.label(), m.correlation.n,
                                   show(m.correlation.pearson), show(m.correlation.spearman))
                    << '\n';
            }
        };
    });

    // layers
    std::string l_records, l_annotations, l_statistic = "expectation", l_out_dir;
    auto* layers = app.add_subcommand("layers", "Per-layer agreement curve and cross-layer cosine heatmap");
    layers->add_option("--records", l_records, "Record file")->required();
    layers->add_option("--annotations", l_annotations, "Annotation file")->required();
    layers->add_option("--statistic", l_statistic, "expectation | argmax")->capture_default_str();
    layers->add_option("--out-dir", l_out_dir, "Output directory")->required();
    layers->callback([&] {
        action = [&] {
            const auto statistic = parse_statistic(l_statistic);
            const auto batch = read_records_file(l_records);
            const auto annotations = read_annotations_file(l_annotations);
            const auto joined = harness::join(batch, annotations);
            print_warnings(joined.warnings, err);
            const auto analysis = harness::layer_analysis(joined, statistic);
            harness::write_layer_analysis(analysis, l_out_dir);
            for (const auto& n : analysis.notices) err << "notice: " << n << '\n';
            for (std::size_t l = 0; l < analysis.per_layer_spearman.size(); ++l) {
                const auto& s = analysis.per_layer_spearman[l];
                out << fmt::format("layer {:>3}  spearman {}", l, s ? fmt::format("{:.4f}", *s) : "undefined")
                    << '\n';
            }
        };
    });

    // distrib
    std::vector<std::string> d_scores;
    std::string d_annotations, d_out_dir;
    std::size_t d_bins = 20, d_grid = 512;
    auto* distrib = app.add_subcommand("distrib", "KDE curves and KL/MSE distances against human scores");
    distrib->add_option("--scores", d_scores, "Score file(s) written by `score`; repeatable")->required();
    distrib->add_option("--annotations", d_annotations, "Annotation file")->required();
    distrib->add_option("--bins", d_bins, "Histogram bins for KL")->capture_default_str();
    distrib->add_option("--grid-size", d_grid, "KDE grid points")->capture_default_str();
    distrib->add_option("--out-dir", d_out_dir, "Output directory")->required();
    distrib->callback([&] {
        action = [&] {
            const auto annotations = read_annotations_file(d_annotations);
            std::map<std::string, double> human_by_id;
            for (const auto& a : annotations) human_by_id.emplace(a.sample_id, a.human_score);

            // Pair on the samples every score file and the annotations share,
            // in the first score file's order.
            std::vector<std::vector<ScoredSample>> files;
            for (const auto& path : d_scores) files.push_back(read_scores_file(path));
            std::vector<std::map<std::string, double>> by_id(files.size());
            for (std::size_t f = 0; f < files.size(); ++f) {
                for (const auto& s : files[f]) by_id[f].emplace(s.sample_id, s.value);
            }
            std::vector<std::string> ids;
            for (const auto& s : files.front()) {
                bool everywhere = human_by_id.count(s.sample_id) > 0;
                for (const auto& m : by_id) everywhere = everywhere && m.count(s.sample_id) > 0;
                if (everywhere) ids.push_back(s.sample_id);
            }
            if (ids.empty()) throw ValidationError("distrib: no sample_id shared by all score files and annotations");
            std::vector<double> human;
            for (const auto& id : ids) human.push_back(human_by_id.at(id));
            std::vector<std::pair<std::string, std::vector<double>>> methods;
            for (std::size_t f = 0; f < files.size(); ++f) {
                std::vector<double> series;
                for (const auto& id : ids) series.push_back(by_id[f].at(id));
                auto name = std::filesystem::path(d_scores[f]).stem().string();
                methods.emplace_back(std::move(name), std::move(series));
            }
            const auto report = harness::distribution_report(methods, human, d_bins, d_grid);
            harness::write_distribution_report(report, d_out_dir);
            if (report.human_density_error) err << "notice: human scores: " << *report.human_density_error << '\n';
            for (const auto& m : report.methods) {
                if (m.density_error) err << "notice: " << *m.density_error << '\n';
                out << fmt::format("{:<30} n={:<6} kl={:.6f} mse={:.6f}", m.method, ids.size(), m.distance.kl,
                                   m.distance.mse)
                    << '\n';
            }
        };
    });

    // select
    std::string se_in, se_out, se_subset;
    double se_ratio = 0.1;
    auto* select = app.add_subcommand("select", "Rank samples by mean dimension score and keep the top fraction");
    select->add_option("--dimension-scores", se_in, "JSON Lines of per-dimension scores")->required();
    select->add_option("--ratio", se_ratio, "Fraction to keep, rounded up")->capture_default_str();
    select->add_option("--out", se_out, "Ranked manifest (JSON Lines)")->required();
    select->add_option("--subset-out", se_subset, "Optional file listing selected sample ids, one per line");
    select->callback([&] {
        action = [&] {
            if (!(se_ratio > 0.0 && se_ratio <= 1.0))
                throw ArgumentError(fmt::format("--ratio {} outside (0, 1]", se_ratio));
            const auto result = harness::select_data(harness::read_dimension_scores_file(se_in), se_ratio);
            auto f = open_out(se_out);
            harness::write_selection_manifest(result, f);
            close_out(f, se_out);
            if (!se_subset.empty()) {
                auto g = open_out(se_subset);
                for (const auto& id : result.selected) g << id << '\n';
                close_out(g, se_subset);
            }
            out << fmt::format("selected {} of {} samples", result.selected.size(), result.ranked.size()) << '\n';
        };
    });

    // convert
    std::string c_format, c_in, c_out;
    double c_offset = 0.0;
    auto* convert_cmd = app.add_subcommand("convert", "Convert a benchmark annotation layout to annotation JSONL");
    convert_cmd->add_option("--format", c_format, "flask | helpsteer | biggen")->required();
    convert_cmd->add_option("--in", c_in, "Input file")->required();
    convert_cmd->add_option("--out", c_out, "Output annotation file")->required();
    auto* offset_opt = convert_cmd->add_option("--score-offset", c_offset,
                                               "Added to every label (default +1 for helpsteer, 0 otherwise)");
    convert_cmd->callback([&] {
        action = [&] {
            const auto format = convert::parse_format(c_format);
            convert::ConvertOptions opts;
            if (offset_opt->count() > 0) opts.score_offset = c_offset;
            std::ifstream in(c_in, std::ios::binary);
            if (!in) throw IoError(fmt::format("{}: cannot open for reading", c_in));
            std::vector<AnnotatedSample> rows;
            try {
                rows = convert::convert_annotations(format, in, opts);
            } catch (const Error&) {
                rethrow_with_prefix(c_in);
            }
            auto f = open_out(c_out);
            write_annotations(rows, f);
            close_out(f, c_out);
            out << fmt::format("wrote {} annotations to {}", rows.size(), c_out) << '\n';
        };
    });

    std::vector<std::string> args(argv.size() > 1 ? argv.begin() + 1 : argv.end(), argv.end());
    std::reverse(args.begin(), args.end());
    try {
        app.parse(args);
    } catch (const CLI::CallForHelp& e) {
        out << app.help();
        return 0;
    } catch (const CLI::CallForAllHelp& e) {
        out << app.help("", CLI::AppFormatMode::All);
        return 0;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << '\n';
        return 1;
    }

    try {
        if (action) action();
        return 0;
    } catch (const Error& e) {
        err << "error: " << e.what() << '\n';
        return exit_code(e);
    } catch (const std::filesystem::filesystem_error& e) {
        err << "error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return 1;
    }
}

}  // namespace lager::cli
