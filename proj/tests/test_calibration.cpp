#include <doctest.h>

#include <cmath>

#include "lager/calibration.hpp"
#include "lager/errors.hpp"
#include "lager/metrics.hpp"
#include "oracles.hpp"

using namespace lager;

namespace {

LayerLogitRecord single_row_record(std::vector<float> row) {
    LayerLogitRecord r;
    r.sample_id = "one";
    r.model_id = "m";
    r.num_layers = 0;
    r.score_set = CandidateScoreSet::range(1, 5);
    r.logits = Matrix(1, row.size());
    r.logits.data = std::move(row);
    return r;
}

RecordBatch oracle_batch(std::size_t n, std::uint64_t seed) {
    SynthOptions o;
    o.n = n;
    o.num_layers = 8;
    o.score_set = CandidateScoreSet::range(1, 5);
    o.oracle_layer = 2;
    o.noise_scale = 1.0;
    o.seed = seed;
    return synth_records(o);
}

std::vector<LabeledRecord> labeled(const RecordBatch& b) {
    std::vector<LabeledRecord> out;
    for (const auto& r : b.records) out.push_back({&r, *r.human_score});
    return out;
}

}  // namespace

TEST_CASE("nearest_score snaps ties to the smaller candidate") {
    const auto s = CandidateScoreSet::range(1, 5);
    CHECK(nearest_score(s, 3.0) == 3);
    CHECK(nearest_score(s, 3.4) == 3);
    CHECK(nearest_score(s, 3.5) == 3);
    CHECK(nearest_score(s, 3.6) == 4);
    CHECK(nearest_score(CandidateScoreSet::from_values({2, 4, 6}), 5.0) == 4);
}

TEST_CASE("loss endpoint values") {
    const auto w = LayerWeights::custom({1.0});
    SUBCASE("alpha = 1, distribution one-hot at truth") {
        // exp(-1000) underflows to zero: the restricted softmax is exactly one-hot
        const auto r = single_row_record({-1000, -1000, 0, -1000, -1000});
        const std::vector<LabeledRecord> b{{&r, 3.0}};
        CHECK(loss(b, w, 1.0) == 0.0);
    }
    SUBCASE("alpha = 0, expectation equals truth") {
        const auto r = single_row_record({0.7, -0.2, 0.1, -0.2, 0.7});
        const std::vector<LabeledRecord> b{{&r, 3.0}};
        CHECK(std::abs(loss(b, w, 0.0)) < 1e-24);
    }
    SUBCASE("alpha = 0.5, uniform distribution, truth 3") {
        const auto r = single_row_record({0, 0, 0, 0, 0});
        const std::vector<LabeledRecord> b{{&r, 3.0}};
        CHECK(std::abs(loss(b, w, 0.5) - 0.5 * std::log(5.0)) < 1e-12);
        CHECK(std::abs(loss(b, w, 0.5) - 0.80471895621705) < 1e-12);
    }
}

TEST_CASE("loss argument errors") {
    const auto r = single_row_record({0, 0, 0, 0, 0});
    const auto w = LayerWeights::custom({1.0});
    CHECK_THROWS_AS(loss({}, w, 0.5), ArgumentError);
    const std::vector<LabeledRecord> out_of_range{{&r, 5.5}};
    CHECK_THROWS_AS(loss(out_of_range, w, 0.5), ArgumentError);
    CHECK_THROWS_AS(loss_gradient(out_of_range, w, 0.5), ArgumentError);
}

TEST_CASE("loss is affine in alpha") {
    Rng rng(8);
    const auto s = CandidateScoreSet::range(1, 5);
    std::vector<LayerLogitRecord> recs;
    for (int i = 0; i < 6; ++i) recs.push_back(oracle::random_record(rng, 3, s, 2.0, "a"));
    std::vector<LabeledRecord> b;
    for (auto& r : recs) b.push_back({&r, 1.0 + 4.0 * rng.uniform()});
    const auto w = LayerWeights::custom({0.3, -0.2, 0.9, 0.1});
    const double ce = loss(b, w, 1.0), reg = loss(b, w, 0.0);
    for (double a : {0.1, 0.25, 0.5, 0.9}) CHECK(std::abs(loss(b, w, a) - (a * ce + (1 - a) * reg)) < 1e-12);
}

TEST_CASE("gradient vanishes at a one-hot CE minimum") {
    const auto r = single_row_record({-1000, -1000, 0, -1000, -1000});
    const std::vector<LabeledRecord> b{{&r, 3.0}};
    for (double g : loss_gradient(b, LayerWeights::custom({1.0}), 1.0)) CHECK(std::abs(g) < 1e-6);
}

TEST_CASE("analytic gradient matches central differences") {
    Rng rng(2024);
    const auto s = CandidateScoreSet::range(1, 5);
    for (int trial = 0; trial < 40; ++trial) {
        const int layers = 1 + static_cast<int>(rng.index(6));
        const std::size_t bs = 1 + rng.index(5);
        std::vector<LayerLogitRecord> recs;
        for (std::size_t i = 0; i < bs; ++i) recs.push_back(oracle::random_record(rng, layers, s, 2.0, "g"));
        std::vector<LabeledRecord> b;
        for (auto& r : recs) b.push_back({&r, 1.0 + 4.0 * rng.uniform()});
        std::vector<double> w0(static_cast<std::size_t>(layers) + 1);
        for (auto& x : w0) x = rng.normal() * 0.5;
        const double alpha = rng.uniform();

        const auto analytic = loss_gradient(b, LayerWeights::custom(w0), alpha);
        const auto numeric = oracle::central_difference(
            [&](const std::vector<double>& w) { return loss(b, LayerWeights::custom(w), alpha); }, w0, 1e-5);
        for (std::size_t i = 0; i < w0.size(); ++i) {
            const double scale = std::max(std::abs(numeric[i]), 1e-6);
            CHECK(std::abs(analytic[i] - numeric[i]) / scale < 1e-4);
        }
    }
}

TEST_CASE("duplicating the batch leaves the gradient unchanged") {
    Rng rng(3);
    const auto s = CandidateScoreSet::range(1, 5);
    std::vector<LayerLogitRecord> recs;
    for (int i = 0; i < 5; ++i) recs.push_back(oracle::random_record(rng, 2, s, 1.0, "d"));
    std::vector<LabeledRecord> b;
    for (auto& r : recs) b.push_back({&r, 2.0});
    auto twice = b;
    twice.insert(twice.end(), b.begin(), b.end());
    const auto w = LayerWeights::custom({0.2, 0.5, 0.3});
    const auto g1 = loss_gradient(b, w, 0.4), g2 = loss_gradient(twice, w, 0.4);
    for (std::size_t i = 0; i < g1.size(); ++i) CHECK(std::abs(g1[i] - g2[i]) < 1e-15);
}

TEST_CASE("train config validation") {
    TrainConfig c;
    CHECK_NOTHROW(c.validate());
    c.alpha = 1.5;
    CHECK_THROWS_AS(c.validate(), ArgumentError);
    c = {};
    c.scheduler.min_lr = 0.1;
    CHECK_THROWS_AS(c.validate(), ArgumentError);
    c = {};
    c.batch_size = 0;
    CHECK_THROWS_AS(c.validate(), ArgumentError);
}

TEST_CASE("train with zero epochs returns the initialization") {
    const auto batch = oracle_batch(20, 1);
    const auto data = labeled(batch);
    TrainConfig c;
    c.epochs = 0;
    const auto rep = train(data, c);
    CHECK(rep.final_weights.weights == LayerWeights::uniform(8).weights);
    CHECK(rep.final_weights.provenance == WeightProvenance::trained);
    CHECK(rep.loss_curve.empty());
    CHECK_THROWS_AS(train({}, c), ArgumentError);
}

TEST_CASE("training recovers the oracle layer and is deterministic") {
    const auto batch = oracle_batch(1000, 7);
    const auto before = batch;
    const auto data = labeled(batch);
    TrainConfig c;
    c.epochs = 2;
    const auto rep = train(data, c);
    CHECK(batch == before);  // frozen records
    const auto& w = rep.final_weights.weights;
    CHECK(std::max_element(w.begin(), w.end()) - w.begin() == 2);
    REQUIRE(rep.loss_curve.size() == 2);
    CHECK(rep.loss_curve[1] <= rep.loss_curve[0] + 1e-6);
    CHECK(rep.lr_curve == std::vector<double>{0.01, 0.01});

    const auto again = train(data, c);
    CHECK(again.final_weights.weights == rep.final_weights.weights);
    CHECK(again.loss_curve == rep.loss_curve);

    const auto held_out = oracle_batch(500, 8);
    std::vector<double> truth, trained, uniform;
    const ScoringMode mode{Statistic::expectation, Aggregation::logits()};
    for (const auto& r : held_out.records) {
        truth.push_back(*r.human_score);
        trained.push_back(score_record(r, rep.final_weights, mode).value);
        uniform.push_back(score_record(r, LayerWeights::uniform(8), mode).value);
    }
    const double rho_trained = metrics::spearman(trained, truth);
    const double rho_uniform = metrics::spearman(uniform, truth);
    MESSAGE("trained rho=" << rho_trained << " uniform rho=" << rho_uniform);
    CHECK(rho_trained > rho_uniform);
    CHECK(rho_trained >= 0.9);
}

TEST_CASE("different seeds shuffle differently") {
    const auto batch = oracle_batch(40, 2);
    const auto data = labeled(batch);
    TrainConfig a, b;
    b.seed = 43;
    CHECK(train(data, a).final_weights.weights != train(data, b).final_weights.weights);
}
