#include "upvc/train.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "upvc/error.hpp"
#include "upvc/kernels.hpp"
#include "upvc/metrics.hpp"

namespace upvc {

std::vector<int> targets_of(const data::Corpus& corpus, std::span<const std::size_t> examples)
{
    std::vector<int> y;
    y.reserve(examples.size());
    for (const auto i : examples) {
        y.push_back(corpus.examples()[i].target());
    }
    return y;
}

std::vector<double> predict(const nn::ModelParams& params, const data::FeatureTable& features,
                            std::span<const std::size_t> examples)
{
    std::vector<double> x;
    features.gather(examples, x);
    return kernels::predict_parallel(params, x, examples.size());
}

TrainResult train_model(const nn::ModelConfig& model, const TrainingOptions& options, const TrainingData& data,
                        std::span<const std::size_t> train, std::span<const std::size_t> val,
                        const EpochCallback& on_epoch)
{
    if (train.empty()) {
        throw DataError("training pool is empty");
    }
    if (data.features.feature_size() != model.feature_size()) {
        throw InvalidArgument("feature size does not match the model input");
    }

    TrainResult result{nn::init_params(model, options.seed), {}, 0, 0, {}};
    auto& params = result.params;
    nn::AdamState adam(params.size(), options.learning_rate);
    std::vector<double> grad(params.size());
    std::vector<double> x;
    std::vector<double> y;
    std::vector<std::size_t> rows;

    const auto train_targets = targets_of(data.corpus, train);
    const auto val_targets = targets_of(data.corpus, val);
    const bool val_has_both = !val.empty() && std::find(val_targets.begin(), val_targets.end(), 1) != val_targets.end() &&
                              std::find(val_targets.begin(), val_targets.end(), 0) != val_targets.end();
    std::vector<double> val_x;
    data.features.gather(val, val_x);

    std::optional<nn::ModelParams> best;
    double best_score = -std::numeric_limits<double>::infinity();
    std::size_t stale = 0;

    for (std::size_t epoch = 0; epoch < options.epochs_max; ++epoch) {
        double loss_sum = 0.0;
        for (const auto& batch : data::batch_iterator(train.size(), options.batch_size, options.seed, epoch)) {
            rows.clear();
            y.clear();
            for (const auto pos : batch) {
                rows.push_back(train[pos]);
                y.push_back(static_cast<double>(train_targets[pos]));
                ++result.gradient_provenance[data.corpus.examples()[train[pos]].dataset_id];
            }
            data.features.gather(rows, x);
            const double loss = kernels::gradient_parallel(params, x, y, batch.size(), grad, options.deterministic);
            if (!std::isfinite(loss)) {
                throw DivergenceError("non-finite training loss at epoch " + std::to_string(epoch) + ", step " +
                                      std::to_string(result.steps));
            }
            loss_sum += loss;
            const double scale = 1.0 / static_cast<double>(batch.size());
            for (auto& g : grad) {
                g *= scale;
            }
            if (options.grad_clip > 0.0) {
                nn::clip_gradient_norm(grad, options.grad_clip);
            }
            nn::adam_step(params.values(), grad, adam);
            ++result.steps;
        }

        EpochLog log;
        log.epoch = epoch;
        log.train_loss = loss_sum / static_cast<double>(train.size());
        if (!val.empty()) {
            const auto p = kernels::predict_parallel(params, val_x, val.size());
            std::vector<double> yv(val_targets.begin(), val_targets.end());
            log.val_loss = nn::bce_loss_mean(p, yv);
            if (val_has_both) {
                log.val_auroc = metrics::roc_auc(p, val_targets);
            }
            const double score = log.val_auroc ? *log.val_auroc : -*log.val_loss;
            if (score > best_score) {
                best_score = score;
                best = params;
                result.best_epoch = epoch;
                stale = 0;
            } else {
                ++stale;
            }
        } else {
            result.best_epoch = epoch;
        }
        result.epochs.push_back(log);
        if (on_epoch && on_epoch(log, params)) {
            break;
        }
        if (!val.empty() && stale >= std::max<std::size_t>(options.patience, 1)) {
            break;
        }
    }
    if (best) {
        result.params = std::move(*best);
    }
    return result;
}

} // namespace upvc
