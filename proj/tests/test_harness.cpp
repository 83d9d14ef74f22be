#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "lager/convert.hpp"
#include "lager/errors.hpp"
#include "lager/harness.hpp"
#include "oracles.hpp"

#include <fmt/format.h>

using namespace lager;
using namespace lager::harness;
namespace fs = std::filesystem;

namespace {

RecordBatch oracle_batch(std::size_t n, int layers = 8, std::size_t hidden = 0, std::uint64_t seed = 7) {
    SynthOptions o;
    o.n = n;
    o.num_layers = layers;
    o.score_set = CandidateScoreSet::range(1, 5);
    o.oracle_layer = 2;
    o.noise_scale = 1.0;
    o.seed = seed;
    o.hidden_dim = hidden;
    return synth_records(o);
}

std::vector<AnnotatedSample> truth_annotations(const RecordBatch& b) {
    std::vector<AnnotatedSample> rows;
    for (const auto& r : b.records) rows.push_back({r.sample_id, *r.human_score, {}, {}});
    return rows;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

fs::path scratch(const std::string& name) {
    auto p = fs::temp_directory_path() / ("lager_harness_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

ModeSpec spec(const std::string& text, int layers = 8) {
    return parse_mode_spec(text, LayerWeights::uniform(layers), "uniform", layers);
}

}  // namespace

TEST_CASE("join") {
    const auto b = oracle_batch(3);
    auto ann = truth_annotations(b);
    SUBCASE("all matched") {
        const auto j = join(b, ann);
        CHECK(j.samples.size() == 3);
        CHECK(j.records_without_annotation == 0);
    }
    SUBCASE("one record unannotated") {
        ann.pop_back();
        ann.push_back({"stranger", 2.0, {}, {}});
        const auto j = join(b, ann);
        CHECK(j.samples.size() == 2);
        CHECK(j.records_without_annotation == 1);
        CHECK(j.annotations_without_record == 1);
    }
    SUBCASE("annotation wins a conflict") {
        ann[0].human_score = *b.records[0].human_score == 1.0 ? 2.0 : 1.0;
        const auto j = join(b, ann);
        CHECK(j.samples[0].human_score == ann[0].human_score);
        REQUIRE(j.warnings.size() == 1);
        CHECK(j.warnings[0].find(b.records[0].sample_id) != std::string::npos);
    }
    SUBCASE("empty join") {
        CHECK_THROWS_AS(join(b, {{"nobody", 3.0, {}, {}}}), ValidationError);
    }
}

TEST_CASE("evaluate on the synthetic oracle batch") {
    const auto b = oracle_batch(300);
    const auto j = join(b, truth_annotations(b));
    const auto report = evaluate(j, {spec("expectation:logits"), spec("argmax:final"), spec("expectation:layer:2")});
    REQUIRE(report.modes.size() == 3);
    const auto& lager_uniform = report.modes[0];
    REQUIRE(lager_uniform.correlation.spearman);
    CHECK(*lager_uniform.correlation.spearman > 0.5);
    CHECK(lager_uniform.correlation.n == 300);
    CHECK(lager_uniform.distance.has_value());
    CHECK(*report.modes[2].correlation.spearman > 0.99);
    CHECK(report.modes[0].spec.label() == "expectation:logits@uniform");
    CHECK(report.modes[1].spec.label() == "argmax:final");
}

TEST_CASE("constant scores leave correlations undefined without failing") {
    auto b = oracle_batch(20, 3);
    for (auto& r : b.records) {
        auto row = r.logits.row(3);
        std::fill(row.begin(), row.end(), 0.0f);
        row[2] = 9.0f;
    }
    const auto j = join(b, truth_annotations(b));
    const auto report = evaluate(j, {spec("argmax:final", 3)});
    CHECK_FALSE(report.modes[0].correlation.spearman.has_value());
    CHECK_FALSE(report.modes[0].correlation.pearson.has_value());
    CHECK(report.modes[0].correlation.n == 20);

    const auto dir = scratch("undefined");
    write_eval_report(report, dir);
    const auto text = slurp(dir / "report.json");
    CHECK(text.find("\"spearman_defined\": false") != std::string::npos);
}

TEST_CASE("per-mode failures are counted, not fatal") {
    auto b = oracle_batch(10, 2);
    const auto j = join(b, truth_annotations(b));
    ModeSpec bad = spec("expectation:probability", 2);
    bad.weights = LayerWeights::custom({1.0, -1.0, 0.0});
    bad.weights_label = "custom";
    const auto report = evaluate(j, {bad});
    CHECK(report.modes[0].failures == 10);
    CHECK(report.modes[0].correlation.n == 0);
}

TEST_CASE("reports are byte-identical across runs") {
    const auto b = oracle_batch(100);
    const auto j = join(b, truth_annotations(b));
    EvalOptions opts;
    opts.group_by_dimension = true;
    const auto modes = std::vector<ModeSpec>{spec("expectation:logits"), spec("argmax:probability")};
    const auto d1 = scratch("det1"), d2 = scratch("det2");
    write_eval_report(evaluate(j, modes, opts), d1);
    write_eval_report(evaluate(j, modes, opts), d2);
    for (const auto* f : {"report.json", "correlations.csv", "scores_0.csv", "scores_1.csv"})
        CHECK(slurp(d1 / f) == slurp(d2 / f));
}

TEST_CASE("monotone transform of a method's scores keeps its Spearman") {
    const auto b = oracle_batch(200);
    const auto j = join(b, truth_annotations(b));
    const auto report = evaluate(j, {spec("expectation:logits")});
    auto transformed = report.modes[0].scores;
    for (auto& v : transformed) v = std::exp(3 * v);
    CHECK(std::abs(metrics::spearman(transformed, report.modes[0].human) - *report.modes[0].correlation.spearman) <
          1e-12);
}

TEST_CASE("layer analysis") {
    SUBCASE("oracle peak and cosine diagonal") {
        const auto b = oracle_batch(500, 8, 16);
        const auto a = layer_analysis(join(b, truth_annotations(b)), Statistic::expectation);
        REQUIRE(a.per_layer_spearman.size() == 9);
        std::size_t best = 0;
        for (std::size_t l = 0; l < 9; ++l)
            if (a.per_layer_spearman[l].value_or(-2) > a.per_layer_spearman[best].value_or(-2)) best = l;
        CHECK(best == 2);
        REQUIRE(a.cosine_matrix);
        for (std::size_t i = 0; i < 9; ++i) {
            CHECK(std::abs((*a.cosine_matrix)[i][i] - 1.0) < 1e-6);
            for (std::size_t k = 0; k < 9; ++k)
                CHECK(std::abs((*a.cosine_matrix)[i][k] - (*a.cosine_matrix)[k][i]) < 1e-6);
        }
    }
    SUBCASE("identical hidden vectors give an all-ones matrix") {
        auto b = oracle_batch(30, 4, 8);
        for (auto& r : b.records) {
            auto& h = *r.hidden_vectors;
            for (std::size_t l = 1; l < h.rows; ++l)
                std::copy(h.row(0).begin(), h.row(0).end(), h.row(l).begin());
        }
        const auto a = layer_analysis(join(b, truth_annotations(b)), Statistic::argmax);
        REQUIRE(a.cosine_matrix);
        for (const auto& row : *a.cosine_matrix)
            for (double v : row) CHECK(std::abs(v - 1.0) < 1e-6);
    }
    SUBCASE("no hidden vectors") {
        const auto b = oracle_batch(30, 4);
        const auto a = layer_analysis(join(b, truth_annotations(b)), Statistic::expectation);
        CHECK_FALSE(a.cosine_matrix);
        CHECK_FALSE(a.notices.empty());
    }
}

TEST_CASE("layer plots") {
    const auto b = oracle_batch(100, 8);
    const auto a = layer_analysis(join(b, truth_annotations(b)), Statistic::expectation);
    const auto d1 = scratch("plots1"), d2 = scratch("plots2");
    write_layer_analysis(a, d1);
    write_layer_analysis(a, d2);
    const auto csv = slurp(d1 / "layer_curve.csv");
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 10);  // header + 9 layers
    const auto svg = slurp(d1 / "layer_curve.svg");
    CHECK(svg.find("<polyline") != std::string::npos);
    CHECK(csv == slurp(d2 / "layer_curve.csv"));
    CHECK(svg == slurp(d2 / "layer_curve.svg"));
    CHECK_FALSE(fs::exists(d1 / "cosine_heatmap.svg"));
}

TEST_CASE("distribution report") {
    const std::vector<double> human{1, 2, 3, 4, 5, 2, 3, 4, 3, 3};
    SUBCASE("identical series") {
        const auto r = distribution_report({{"same", human}}, human, 20, 256);
        REQUIRE(r.methods.size() == 1);
        CHECK(r.methods[0].distance.kl <= 1e-9);
        CHECK(r.methods[0].distance.mse == 0.0);
    }
    SUBCASE("two methods integrate to one") {
        std::vector<double> a, b;
        for (double h : human) a.push_back(h + 0.3 * std::sin(h)), b.push_back(6 - h);
        const auto r = distribution_report({{"a", a}, {"b", b}}, human, 20, 512);
        REQUIRE(r.methods.size() == 2);
        for (const auto& m : r.methods) {
            REQUIRE(m.density);
            CHECK(std::abs(metrics::trapezoid(m.density->grid, m.density->density) - 1.0) < 1e-3);
        }
        const auto dir = scratch("distrib");
        write_distribution_report(r, dir);
        CHECK(fs::exists(dir / "kde.svg"));
        CHECK(fs::exists(dir / "kde_human.csv"));
        CHECK(fs::exists(dir / "kde_1.csv"));
    }
    SUBCASE("no methods") {
        CHECK(distribution_report({}, human).methods.empty());
    }
    SUBCASE("constant method series surfaces a bandwidth error") {
        const auto r = distribution_report({{"flat", std::vector<double>(10, 3.0)}}, human);
        CHECK_FALSE(r.methods[0].density);
        REQUIRE(r.methods[0].density_error);
        CHECK(r.methods[0].density_error->find("flat") != std::string::npos);
    }
}

TEST_CASE("select_data") {
    SUBCASE("count contract") {
        std::map<std::string, std::map<std::string, double>> scores;
        Rng rng(1);
        for (int i = 0; i < 100; ++i) scores[fmt::format("s{:03}", i)] = {{"a", rng.uniform()}, {"b", rng.uniform()}};
        const auto r = select_data(scores, 0.1);
        CHECK(r.selected.size() == 10);
        CHECK(r.ranked.size() == 100);
        CHECK(select_data(scores, 0.07).selected.size() == 7);
        CHECK(select_data(scores, 0.075).selected.size() == 8);
    }
    SUBCASE("ties by ascending sample id") {
        const auto r = select_data({{"b", {{"x", 3}}}, {"a", {{"x", 3}}}}, 0.5);
        CHECK(r.selected == std::vector<std::string>{"a"});
    }
    SUBCASE("hand-built 5 x 7 table") {
        const std::vector<std::string> dims{"accuracy", "logic", "relevance", "fluency", "length", "diversity",
                                            "difficulty"};
        const std::map<std::string, std::vector<double>> table{{"s1", {5, 5, 4, 4, 5, 4, 5}},
                                                               {"s2", {3, 3, 3, 3, 3, 3, 3}},
                                                               {"s3", {4, 4, 4, 4, 4, 4, 4}},
                                                               {"s4", {2, 5, 1, 4, 3, 5, 1}},
                                                               {"s5", {5, 5, 5, 5, 5, 5, 2}}};
        std::map<std::string, std::map<std::string, double>> scores;
        for (const auto& [id, row] : table)
            for (std::size_t d = 0; d < dims.size(); ++d) scores[id][dims[d]] = row[d];
        const auto r = select_data(scores, 0.5);
        std::vector<std::string> order;
        for (const auto& s : r.ranked) order.push_back(s.sample_id);
        CHECK(order == std::vector<std::string>{"s1", "s5", "s3", "s2", "s4"});
        CHECK(r.selected == std::vector<std::string>{"s1", "s5", "s3"});
        CHECK(r.ranked[0].mean_score == doctest::Approx(32.0 / 7.0));
    }
    SUBCASE("inconsistent dimensions") {
        try {
            select_data({{"a", {{"x", 1}, {"y", 2}}}, {"b", {{"x", 1}}}}, 0.5);
            FAIL("expected ValidationError");
        } catch (const ValidationError& e) {
            CHECK(std::string(e.what()).find("'b'") != std::string::npos);
        }
    }
    CHECK_THROWS_AS(select_data({}, 0.0), ArgumentError);
    CHECK_THROWS_AS(select_data({}, 1.5), ArgumentError);
}

TEST_CASE("selection manifest and dimension score files") {
    const auto dir = scratch("select");
    {
        std::ofstream f(dir / "dims.jsonl");
        f << R"({"sample_id":"a","dimension":"x","value":2})" << '\n'
          << R"({"sample_id":"a","dimension":"y","value":4})" << '\n'
          << R"({"sample_id":"b","scores":{"x":5,"y":5}})" << '\n';
    }
    const auto scores = read_dimension_scores_file((dir / "dims.jsonl").string());
    const auto r = select_data(scores, 0.5);
    std::ostringstream out;
    write_selection_manifest(r, out);
    CHECK(out.str() ==
          "{\"sample_id\":\"b\",\"mean_score\":5.0,\"rank\":1,\"selected\":true}\n"
          "{\"sample_id\":\"a\",\"mean_score\":3.0,\"rank\":2,\"selected\":false}\n");
}

TEST_CASE("annotation converters") {
    SUBCASE("helpsteer shifts 0..4 onto 1..5") {
        std::istringstream in(
            R"({"prompt":"p","response":"r","helpfulness":4,"correctness":3,"coherence":4,"complexity":0,"verbosity":2})");
        const auto rows = convert::convert_annotations(convert::Format::helpsteer, in);
        REQUIRE(rows.size() == 5);
        CHECK(rows[0].sample_id == "0:helpfulness");
        CHECK(rows[0].human_score == 5.0);
        CHECK(rows[3].human_score == 1.0);
        CHECK(rows[3].dimension == "complexity");
    }
    SUBCASE("flask averages annotators per rubric") {
        std::istringstream in(R"({"question_id":17,"human_score":{"conciseness":[4,5],"factuality":3}})");
        const auto rows = convert::convert_annotations(convert::Format::flask, in);
        REQUIRE(rows.size() == 2);
        CHECK(rows[0].sample_id == "17:conciseness");
        CHECK(rows[0].human_score == 4.5);
        CHECK(rows[1].dimension == "factuality");
    }
    SUBCASE("biggen") {
        std::istringstream in("{\"id\":\"t1\",\"human_score\":2,\"capability\":\"reasoning\"}\n\n");
        const auto rows = convert::convert_annotations(convert::Format::biggen, in);
        REQUIRE(rows.size() == 1);
        CHECK(rows[0].sample_id == "t1");
        CHECK(rows[0].dimension == "reasoning");
    }
    SUBCASE("malformed rows name the line") {
        std::istringstream in("{\"id\":\"t1\",\"human_score\":2}\n{\"id\":\"t2\"}\n");
        try {
            convert::convert_annotations(convert::Format::biggen, in);
            FAIL("expected ParseError");
        } catch (const ParseError& e) {
            CHECK(e.line() == 2);
        }
    }
    CHECK_THROWS_AS(convert::parse_format("mtbench"), ArgumentError);
}
