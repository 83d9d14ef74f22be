#include "lager/calibration.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>

#include <fmt/format.h>
#include <json.hpp>

#include "lager/errors.hpp"
#include "lager/random.hpp"

namespace lager {

void TrainConfig::validate() const {
    if (!(alpha >= 0.0 && alpha <= 1.0)) throw ArgumentError(fmt::format("alpha {} outside [0, 1]", alpha));
    if (!(learning_rate > 0.0)) throw ArgumentError("learning_rate must be > 0");
    if (batch_size < 1) throw ArgumentError("batch_size must be >= 1");
    if (epochs < 0) throw ArgumentError("epochs must be >= 0");
    if (!(scheduler.min_lr <= learning_rate))
        throw ArgumentError(fmt::format("min_lr {} exceeds learning_rate {}", scheduler.min_lr, learning_rate));
    if (!(scheduler.factor > 0.0 && scheduler.factor < 1.0))
        throw ArgumentError("scheduler factor must be in (0, 1)");
    if (scheduler.patience < 0) throw ArgumentError("scheduler patience must be >= 0");
}

int nearest_score(const CandidateScoreSet& s, double truth) {
    int best = s.values.front();
    for (int v : s.values) {
        if (std::abs(v - truth) < std::abs(best - truth)) best = v;
    }
    return best;
}

namespace {

struct SampleTerms {
    double ce = 0.0;
    double reg = 0.0;
    // d(alpha*ce + (1-alpha)*reg) / d z over the candidate columns.
    std::vector<double> dz;
};

void check_batch(std::span<const LabeledRecord> batch) {
    if (batch.empty()) throw ArgumentError("loss: empty batch");
    for (const auto& ex : batch) {
        const auto& s = ex.record->score_set;
        if (!(ex.truth >= s.min() && ex.truth <= s.max()))
            throw ArgumentError(fmt::format("sample '{}': truth {} outside [{}, {}]", ex.record->sample_id, ex.truth,
                                            s.min(), s.max()));
    }
}

SampleTerms sample_terms(const LabeledRecord& ex, const LayerWeights& w, double alpha, bool want_grad) {
    const auto& s = ex.record->score_set;
    const auto z = aggregate_logits(*ex.record, w);
    const auto dist = softmax_scores(z, s);
    const auto& p = dist.probs;

    const int target = nearest_score(s, ex.truth);
    const auto t = static_cast<std::size_t>(
        std::distance(s.values.begin(), std::find(s.values.begin(), s.values.end(), target)));

    double expect = 0.0;
    for (std::size_t k = 0; k < p.size(); ++k) expect += s.values[k] * p[k];

    // log p_t from the max-shifted logits, so a vanishing p_t stays finite.
    const double top = *std::max_element(z.begin(), z.end());
    double denom = 0.0;
    for (double zk : z) denom += std::exp(zk - top);
    SampleTerms out;
    out.ce = -((z[t] - top) - std::log(denom));
    const double resid = expect - ex.truth;
    out.reg = 0.5 * resid * resid;

    if (want_grad) {
        out.dz.resize(p.size());
        for (std::size_t k = 0; k < p.size(); ++k) {
            const double d_ce = p[k] - (k == t ? 1.0 : 0.0);
            const double d_reg = resid * p[k] * (s.values[k] - expect);
            out.dz[k] = alpha * d_ce + (1.0 - alpha) * d_reg;
        }
    }
    return out;
}

}  // namespace

double loss(std::span<const LabeledRecord> batch, const LayerWeights& w, double alpha) {
    check_batch(batch);
    double ce = 0.0, reg = 0.0;
    for (const auto& ex : batch) {
        const auto terms = sample_terms(ex, w, alpha, false);
        ce += terms.ce;
        reg += terms.reg;
    }
    const double n = static_cast<double>(batch.size());
    return alpha * ce / n + (1.0 - alpha) * reg / n;
}

std::vector<double> loss_gradient(std::span<const LabeledRecord> batch, const LayerWeights& w, double alpha) {
    check_batch(batch);
    std::vector<double> grad(w.weights.size(), 0.0);
    for (const auto& ex : batch) {
        const auto terms = sample_terms(ex, w, alpha, true);
        const auto& logits = ex.record->logits;
        for (std::size_t l = 0; l < grad.size(); ++l) {
            const auto row = logits.row(l);
            double g = 0.0;
            for (std::size_t k = 0; k < row.size(); ++k) g += static_cast<double>(row[k]) * terms.dz[k];
            grad[l] += g;
        }
    }
    for (double& g : grad) g /= static_cast<double>(batch.size());
    return grad;
}

namespace {

class Adam {
public:
    Adam(std::size_t n, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
        : m_(n, 0.0), v_(n, 0.0), beta1_(beta1), beta2_(beta2), eps_(eps) {}

    void step(std::vector<double>& params, const std::vector<double>& grad, double lr) {
        ++t_;
        const double bc1 = 1.0 - std::pow(beta1_, t_);
        const double bc2 = 1.0 - std::pow(beta2_, t_);
        for (std::size_t i = 0; i < params.size(); ++i) {
            m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * grad[i];
            v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * grad[i] * grad[i];
            const double m_hat = m_[i] / bc1;
            const double v_hat = v_[i] / bc2;
            params[i] -= lr * m_hat / (std::sqrt(v_hat) + eps_);
        }
    }

private:
    std::vector<double> m_, v_;
    double beta1_, beta2_, eps_;
    int t_ = 0;
};

// Mode "min", relative threshold, no cooldown.
class PlateauScheduler {
public:
    PlateauScheduler(const PlateauConfig& cfg, double lr) : cfg_(cfg), lr_(lr) {}

    double lr() const { return lr_; }

    void step(double metric) {
        if (metric < best_ * (1.0 - cfg_.threshold)) {
            best_ = metric;
            bad_epochs_ = 0;
        } else {
            ++bad_epochs_;
        }
        if (bad_epochs_ > cfg_.patience) {
            lr_ = std::max(lr_ * cfg_.factor, cfg_.min_lr);
            bad_epochs_ = 0;
        }
    }

private:
    PlateauConfig cfg_;
    double lr_;
    double best_ = std::numeric_limits<double>::infinity();
    int bad_epochs_ = 0;
};

}  // namespace

TrainReport train(std::span<const LabeledRecord> data, const TrainConfig& config) {
    config.validate();
    if (data.empty()) throw ArgumentError("train: no annotated records");
    const auto& first = *data.front().record;
    for (const auto& ex : data) {
        if (ex.record->num_layers != first.num_layers || !(ex.record->score_set == first.score_set))
            throw ValidationError(fmt::format("train: record '{}' is not homogeneous with '{}'",
                                              ex.record->sample_id, first.sample_id));
    }
    check_batch(data);

    LayerWeights w = LayerWeights::uniform(first.num_layers);
    if (!config.init_weights.empty()) {
        if (config.init_weights.size() != first.num_rows())
            throw ArgumentError(fmt::format("train: {} initial weights for {} layer rows",
                                            config.init_weights.size(), first.num_rows()));
        w.weights = config.init_weights;
    }
    w.provenance = WeightProvenance::trained;

    TrainReport report;
    report.num_samples = data.size();

    Rng rng(config.seed);
    Adam adam(w.weights.size());
    PlateauScheduler scheduler(config.scheduler, config.learning_rate);
    std::vector<std::size_t> order(data.size());
    std::vector<LabeledRecord> batch;
    std::size_t step = 0;

    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        std::iota(order.begin(), order.end(), std::size_t{0});
        rng.shuffle(order);
        const double lr = scheduler.lr();
        double loss_sum = 0.0;
        std::size_t batches = 0;
        for (std::size_t begin = 0; begin < order.size(); begin += config.batch_size) {
            const std::size_t end = std::min(order.size(), begin + config.batch_size);
            batch.clear();
            for (std::size_t i = begin; i < end; ++i) batch.push_back(data[order[i]]);

            const double batch_loss = loss(batch, w, config.alpha);
            if (!std::isfinite(batch_loss))
                throw NumericError(fmt::format("train: non-finite loss at step {} (epoch {})", step, epoch));
            const auto grad = loss_gradient(batch, w, config.alpha);
            for (double g : grad) {
                if (!std::isfinite(g))
                    throw NumericError(fmt::format("train: non-finite gradient at step {} (epoch {})", step, epoch));
            }
            adam.step(w.weights, grad, lr);
            loss_sum += batch_loss;
            ++batches;
            ++step;
        }
        const double mean_loss = loss_sum / static_cast<double>(batches);
        report.loss_curve.push_back(mean_loss);
        report.lr_curve.push_back(lr);
        scheduler.step(mean_loss);
    }
    report.final_weights = std::move(w);
    return report;
}

void write_weights_file(const TrainReport& report, const TrainConfig& config, const std::string& model_id,
                        const std::string& path) {
    nlohmann::ordered_json j;
    j["model_id"] = model_id;
    j["num_layers"] = report.final_weights.num_layers();
    j["weights"] = report.final_weights.weights;
    j["provenance"] = to_string(report.final_weights.provenance);
    j["train_config"] = {{"alpha", config.alpha},
                         {"learning_rate", config.learning_rate},
                         {"batch_size", config.batch_size},
                         {"epochs", config.epochs},
                         {"seed", config.seed},
                         {"scheduler",
                          {{"factor", config.scheduler.factor},
                           {"patience", config.scheduler.patience},
                           {"min_lr", config.scheduler.min_lr},
                           {"threshold", config.scheduler.threshold}}},
                         {"init", config.init_weights.empty() ? "uniform" : "custom"}};
    j["loss_curve"] = report.loss_curve;
    j["lr_curve"] = report.lr_curve;
    j["num_samples"] = report.num_samples;
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError(fmt::format("{}: cannot open for writing", path));
    out << j.dump(2) << '\n';
    if (!out) throw IoError(fmt::format("{}: write failed", path));
}

}  // namespace lager
