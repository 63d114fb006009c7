#pragma once

// Two-layer bidirectional GRU over spectral frames with a central-step
// readout and a Dense-ReLU-Dense-Sigmoid head. Gradients are derived by hand
// for exactly this architecture; all parameters live in one flat buffer so the
// optimizer, checkpointing and gradient reduction work on plain spans.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace upvc::nn {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMatrixMap = Eigen::Map<const RowMatrix>;
using MatrixMap = Eigen::Map<RowMatrix>;
using ConstVectorMap = Eigen::Map<const Eigen::VectorXd>;
using VectorMap = Eigen::Map<Eigen::VectorXd>;

/// Recurrent backbone, or its ablation replacement (flatten -> Dense -> ReLU).
enum class Backbone { BiGru, Dense };

struct ModelConfig {
    std::size_t input_size = 48;  // features per time step (filters)
    std::size_t seq_len = 11;     // time steps (kept frames)
    std::size_t hidden = 64;      // per direction
    std::size_t layers = 2;
    std::size_t classifier_hidden = 64;
    std::size_t dense_width = 128; // Dense backbone only
    Backbone backbone = Backbone::BiGru;
    double init_k = 1.0 / 128.0;   // GRU init bound is sqrt(init_k)

    [[nodiscard]] std::size_t central_index() const { return seq_len / 2; }
    [[nodiscard]] std::size_t readout_size() const { return backbone == Backbone::BiGru ? 2 * hidden : dense_width; }
    [[nodiscard]] std::size_t feature_size() const { return input_size * seq_len; }
    void validate() const;
    bool operator==(const ModelConfig&) const = default;
};

enum class BlockKind { GruWeight, GruBias, DenseWeight, DenseBias, HeadWeight, HeadBias };

struct ParamBlock {
    std::string name;
    BlockKind kind;
    std::size_t offset;
    std::size_t rows;
    std::size_t cols; // 1 for bias vectors
    [[nodiscard]] std::size_t size() const { return rows * cols; }
};

/// Offsets of every parameter tensor inside the flat buffer.
class ParamLayout {
public:
    explicit ParamLayout(const ModelConfig& config);

    [[nodiscard]] std::size_t total() const { return total_; }
    [[nodiscard]] const std::vector<ParamBlock>& blocks() const { return blocks_; }
    [[nodiscard]] const ParamBlock& block(const std::string& name) const;

    // GRU direction blocks: layer l, direction d (0 forward, 1 backward).
    [[nodiscard]] const ParamBlock& gru_w_input(std::size_t l, std::size_t d) const;
    [[nodiscard]] const ParamBlock& gru_w_hidden(std::size_t l, std::size_t d) const;
    [[nodiscard]] const ParamBlock& gru_b_input(std::size_t l, std::size_t d) const;
    [[nodiscard]] const ParamBlock& gru_b_hidden(std::size_t l, std::size_t d) const;

private:
    std::size_t add(std::string name, BlockKind kind, std::size_t rows, std::size_t cols);
    std::vector<ParamBlock> blocks_;
    std::vector<std::size_t> gru_index_; // 4 entries per (layer, direction)
    std::size_t total_ = 0;
    std::size_t directions_ = 2;
};

/// Read-only view of one GRU direction; gates stacked as (reset, update, new).
struct GruDirectionView {
    ConstMatrixMap w_input;  // 3H x D
    ConstMatrixMap w_hidden; // 3H x H
    ConstVectorMap b_input;  // 3H
    ConstVectorMap b_hidden; // 3H
};

/// Owning GRU direction parameters, convenient for tests.
struct GruDirectionParams {
    RowMatrix w_input;
    RowMatrix w_hidden;
    Eigen::VectorXd b_input;
    Eigen::VectorXd b_hidden;

    [[nodiscard]] GruDirectionView view() const;
};

class ModelParams {
public:
    explicit ModelParams(const ModelConfig& config);
    ModelParams(const ModelConfig& config, std::vector<double> values);

    [[nodiscard]] const ModelConfig& config() const { return config_; }
    [[nodiscard]] const ParamLayout& layout() const { return layout_; }
    [[nodiscard]] std::span<const double> values() const { return values_; }
    [[nodiscard]] std::span<double> values() { return values_; }
    [[nodiscard]] std::size_t size() const { return values_.size(); }

    [[nodiscard]] ConstMatrixMap matrix(const ParamBlock& b) const;
    [[nodiscard]] ConstVectorMap vector(const ParamBlock& b) const;
    [[nodiscard]] MatrixMap matrix(const ParamBlock& b);
    [[nodiscard]] VectorMap vector(const ParamBlock& b);

    [[nodiscard]] GruDirectionView direction(std::size_t layer, std::size_t dir) const;

    bool operator==(const ModelParams& other) const
    {
        return config_ == other.config_ && values_ == other.values_;
    }

private:
    ModelConfig config_;
    ParamLayout layout_;
    std::vector<double> values_;
};

/// Single GRU step: r, z, n gates with the reset gate applied to the hidden
/// projection (W_hn h + b_hn).
[[nodiscard]] Eigen::VectorXd gru_cell(const Eigen::VectorXd& x, const Eigen::VectorXd& h_prev,
                                       const GruDirectionView& p);

/// Backbone output for one feature laid out filter-major (input_size x seq_len).
/// For the BiGru backbone this is the layer-2 state at the central step,
/// [forward; backward].
[[nodiscard]] Eigen::VectorXd bigru_forward(std::span<const double> feature, const ModelParams& params);

[[nodiscard]] double classifier_forward(const Eigen::VectorXd& readout, const ModelParams& params);

/// End-to-end probability of PVC for one feature.
[[nodiscard]] double forward(std::span<const double> feature, const ModelParams& params);

/// Probabilities for `count` features stored contiguously.
[[nodiscard]] std::vector<double> forward_batch(std::span<const double> features, std::size_t count,
                                                const ModelParams& params);

constexpr double kProbabilityClamp = 1e-7;

[[nodiscard]] double bce_loss(double p, double y);
[[nodiscard]] double bce_loss_mean(std::span<const double> p, std::span<const double> y);

/// Adds d(sum of per-example BCE losses)/d(params) into `grad` and returns the
/// summed loss.
double accumulate_gradient(std::span<const double> features, std::span<const double> labels, std::size_t count,
                           const ModelParams& params, std::span<double> grad);

/// Gradient of the single-example loss, shaped like the parameter buffer.
[[nodiscard]] std::vector<double> backward(std::span<const double> feature, double label, const ModelParams& params);

/// Uniform(-sqrt(k), sqrt(k)) for GRU weights and biases, Kaiming-uniform
/// (bound sqrt(6 / fan_in)) for dense weights, zero dense biases.
[[nodiscard]] ModelParams init_params(const ModelConfig& config, std::uint64_t seed);

struct AdamState {
    std::uint64_t step = 0;
    std::vector<double> m;
    std::vector<double> v;
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;

    AdamState() = default;
    explicit AdamState(std::size_t n, double learning_rate = 1e-3) : m(n, 0.0), v(n, 0.0), lr(learning_rate) {}
};

/// Bias-corrected Adam update in place.
void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state);

/// Scales `grads` so its L2 norm is at most `max_norm`; returns the original norm.
double clip_gradient_norm(std::span<double> grads, double max_norm);

struct CheckpointMeta {
    std::uint64_t seed = 0;
    std::uint64_t step = 0;
};

constexpr std::uint32_t kCheckpointVersion = 1;

/// `<stem>.json` (architecture, seed, step) and `<stem>.bin` (magic, version,
/// count, little-endian float64 values).
void save_checkpoint(const std::filesystem::path& stem, const ModelParams& params, const CheckpointMeta& meta);
[[nodiscard]] ModelParams load_checkpoint(const std::filesystem::path& stem, CheckpointMeta* meta = nullptr);

[[nodiscard]] std::string to_string(Backbone b);
[[nodiscard]] Backbone backbone_from_string(const std::string& s);

} // namespace upvc::nn
