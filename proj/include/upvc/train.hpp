#pragma once

// Mini-batch training with Adam, validation-AUROC early stopping and
// per-dataset gradient provenance counters.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "upvc/config.hpp"
#include "upvc/dataset.hpp"
#include "upvc/nn.hpp"

namespace upvc {

struct EpochLog {
    std::size_t epoch = 0;
    double train_loss = 0.0; // mean over the epoch's examples
    std::optional<double> val_loss;
    std::optional<double> val_auroc;
    bool operator==(const EpochLog&) const = default;
};

struct TrainResult {
    nn::ModelParams params;
    std::vector<EpochLog> epochs;
    std::size_t best_epoch = 0;
    std::uint64_t steps = 0;
    /// Example-gradient evaluations per dataset, summed over all epochs.
    std::map<std::string, std::size_t> gradient_provenance;
};

/// Features and targets addressed by corpus example index.
struct TrainingData {
    const data::Corpus& corpus;
    const data::FeatureTable& features;
};

/// Called after each epoch; returning true stops training early.
using EpochCallback = std::function<bool(const EpochLog&, const nn::ModelParams&)>;

/// Trains from a fresh initialization seeded with `options.seed`. With a
/// non-empty validation set the parameters of the best validation epoch are
/// returned (AUROC when both classes are present, otherwise lowest loss) and
/// training stops after `patience` epochs without improvement. Throws
/// DivergenceError on a non-finite loss.
[[nodiscard]] TrainResult train_model(const nn::ModelConfig& model, const TrainingOptions& options,
                                      const TrainingData& data, std::span<const std::size_t> train,
                                      std::span<const std::size_t> val, const EpochCallback& on_epoch = {});

/// Probabilities for the given examples.
[[nodiscard]] std::vector<double> predict(const nn::ModelParams& params, const data::FeatureTable& features,
                                          std::span<const std::size_t> examples);

[[nodiscard]] std::vector<int> targets_of(const data::Corpus& corpus, std::span<const std::size_t> examples);

} // namespace upvc
