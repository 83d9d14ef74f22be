#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "lager/record.hpp"
#include "lager/score.hpp"

namespace lager {

/// One training example: a frozen record and its human score.
struct LabeledRecord {
    const LayerLogitRecord* record = nullptr;
    double truth = 0.0;
};

struct PlateauConfig {
    double factor = 0.5;
    int patience = 1;
    double min_lr = 1e-4;
    // Relative improvement threshold, same default as torch ReduceLROnPlateau.
    double threshold = 1e-4;
};

struct TrainConfig {
    double alpha = 0.5;
    double learning_rate = 0.01;
    std::size_t batch_size = 4;
    int epochs = 1;
    std::uint64_t seed = 42;
    PlateauConfig scheduler;
    // Empty means uniform 1/(L+1) initialization.
    std::vector<double> init_weights;

    void validate() const;
};

struct TrainReport {
    LayerWeights final_weights;
    std::vector<double> loss_curve;
    std::vector<double> lr_curve;
    std::size_t num_samples = 0;
};

/// Closest candidate value to `truth`; ties go to the smaller candidate.
int nearest_score(const CandidateScoreSet& s, double truth);

/// alpha * CE(nearest(truth)) + (1 - alpha) * mean((s* - truth)^2) / 2 over the
/// logits-aggregated distribution.
double loss(std::span<const LabeledRecord> batch, const LayerWeights& w, double alpha);

/// Analytic d loss / d w_i.
std::vector<double> loss_gradient(std::span<const LabeledRecord> batch, const LayerWeights& w, double alpha);

/// Mini-batch Adam over the layer weights only; records are never modified.
TrainReport train(std::span<const LabeledRecord> data, const TrainConfig& config);

/// Trained weights file.
void write_weights_file(const TrainReport& report, const TrainConfig& config, const std::string& model_id,
                        const std::string& path);

}  // namespace lager
