#include "upvc/nn.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <random>

#include <json.hpp>

#include "upvc/error.hpp"

namespace upvc::nn {

namespace {

using Mat = Eigen::MatrixXd; // column-major; columns index examples

constexpr std::array<char, 8> kMagic = {'U', 'P', 'V', 'C', 'N', 'E', 'T', '\0'};

Mat sigmoid(const Mat& a)
{
    return (1.0 + (-a.array()).exp()).inverse().matrix();
}

double sigmoid(double a)
{
    return 1.0 / (1.0 + std::exp(-a));
}

// Activations of one GRU direction over `times` (processing order), with the
// per-step quantities needed for backpropagation stored column-block-wise:
// block s holds the batch at step s.
struct DirectionCache {
    std::vector<std::size_t> times;
    Mat x;      // D x (S*B)
    Mat h_prev; // H x (S*B)
    Mat r;
    Mat z;
    Mat n;
    Mat gh_n;   // W_hn h_prev + b_hn
    Mat h;      // H x (S*B)
};

void run_direction(const GruDirectionView& p, const std::vector<Mat>& inputs, std::vector<std::size_t> times,
                   std::size_t batch, DirectionCache& c)
{
    const auto B = static_cast<Eigen::Index>(batch);
    const auto S = static_cast<Eigen::Index>(times.size());
    const Eigen::Index H = p.w_hidden.cols();
    const Eigen::Index D = p.w_input.cols();
    c.times = std::move(times);
    c.x.resize(D, S * B);
    for (Eigen::Index s = 0; s < S; ++s) {
        c.x.middleCols(s * B, B) = inputs[c.times[static_cast<std::size_t>(s)]];
    }
    Mat gi = p.w_input * c.x;
    gi.colwise() += p.b_input;

    c.h_prev.resize(H, S * B);
    c.r.resize(H, S * B);
    c.z.resize(H, S * B);
    c.n.resize(H, S * B);
    c.gh_n.resize(H, S * B);
    c.h.resize(H, S * B);

    Mat h = Mat::Zero(H, B);
    Mat gh(3 * H, B);
    for (Eigen::Index s = 0; s < S; ++s) {
        const Eigen::Index col = s * B;
        gh.noalias() = p.w_hidden * h;
        gh.colwise() += p.b_hidden;
        auto r = c.r.middleCols(col, B);
        auto z = c.z.middleCols(col, B);
        auto n = c.n.middleCols(col, B);
        r = sigmoid(gi.block(0, col, H, B) + gh.topRows(H));
        z = sigmoid(gi.block(H, col, H, B) + gh.middleRows(H, H));
        c.gh_n.middleCols(col, B) = gh.bottomRows(H);
        n = (gi.block(2 * H, col, H, B).array() + r.array() * gh.bottomRows(H).array()).tanh().matrix();
        c.h_prev.middleCols(col, B) = h;
        h = ((1.0 - z.array()) * n.array() + z.array() * h.array()).matrix();
        c.h.middleCols(col, B) = h;
    }
}

struct GruGradMaps {
    MatrixMap w_input;
    MatrixMap w_hidden;
    VectorMap b_input;
    VectorMap b_hidden;
};

// Backpropagates through one direction. `inject` (H x S*B) is the external
// gradient on each step's output; returns the gradient on the inputs
// (D x S*B, same block order as the cache).
Mat backprop_direction(const GruDirectionView& p, const DirectionCache& c, const Mat& inject, std::size_t batch,
                       GruGradMaps& g)
{
    const auto B = static_cast<Eigen::Index>(batch);
    const auto S = static_cast<Eigen::Index>(c.times.size());
    const Eigen::Index H = p.w_hidden.cols();
    Mat gi(3 * H, S * B);
    Mat gh(3 * H, S * B);
    Mat dh = Mat::Zero(H, B);
    for (Eigen::Index s = S - 1; s >= 0; --s) {
        const Eigen::Index col = s * B;
        dh += inject.middleCols(col, B);
        const auto r = c.r.middleCols(col, B).array();
        const auto z = c.z.middleCols(col, B).array();
        const auto n = c.n.middleCols(col, B).array();
        const auto hp = c.h_prev.middleCols(col, B).array();
        const auto ghn = c.gh_n.middleCols(col, B).array();
        const auto d = dh.array();

        const Eigen::ArrayXXd dan = d * (1.0 - z) * (1.0 - n * n);
        const Eigen::ArrayXXd dar = dan * ghn * r * (1.0 - r);
        const Eigen::ArrayXXd daz = d * (hp - n) * z * (1.0 - z);

        gi.block(0, col, H, B) = dar.matrix();
        gi.block(H, col, H, B) = daz.matrix();
        gi.block(2 * H, col, H, B) = dan.matrix();
        gh.block(0, col, H, B) = dar.matrix();
        gh.block(H, col, H, B) = daz.matrix();
        gh.block(2 * H, col, H, B) = (dan * r).matrix();

        Mat carry = (d * z).matrix();
        carry.noalias() += p.w_hidden.transpose() * gh.middleCols(col, B);
        dh = std::move(carry);
    }
    g.w_input.noalias() += gi * c.x.transpose();
    g.b_input += gi.rowwise().sum();
    g.w_hidden.noalias() += gh * c.h_prev.transpose();
    g.b_hidden += gh.rowwise().sum();
    return p.w_input.transpose() * gi;
}

// Full forward state of a batch.
struct ForwardState {
    std::size_t batch = 0;
    std::vector<std::array<DirectionCache, 2>> layers; // BiGru
    Mat x_flat;   // Dense backbone input, FS x B
    Mat dense_pre;
    Mat readout;  // R x B
    Mat head_pre; // C x B
    Mat head_act;
    Eigen::RowVectorXd logits;
    Eigen::RowVectorXd probs;
};

std::vector<std::size_t> iota_times(std::size_t first, std::size_t last_inclusive, bool reverse)
{
    std::vector<std::size_t> t;
    if (!reverse) {
        for (std::size_t i = first; i <= last_inclusive; ++i) {
            t.push_back(i);
        }
    } else {
        for (std::size_t i = last_inclusive + 1; i-- > first;) {
            t.push_back(i);
        }
    }
    return t;
}

void forward_state(std::span<const double> features, std::size_t batch, const ModelParams& params, ForwardState& st)
{
    const auto& cfg = params.config();
    const std::size_t fs = cfg.feature_size();
    if (features.size() < batch * fs) {
        throw InvalidArgument("forward: feature buffer shorter than batch * feature_size");
    }
    const auto B = static_cast<Eigen::Index>(batch);
    st.batch = batch;

    if (cfg.backbone == Backbone::BiGru) {
        const std::size_t T = cfg.seq_len;
        const std::size_t c = cfg.central_index();
        const auto D = static_cast<Eigen::Index>(cfg.input_size);
        const auto H = static_cast<Eigen::Index>(cfg.hidden);
        std::vector<Mat> inputs(T, Mat(D, B));
        for (Eigen::Index b = 0; b < B; ++b) {
            const double* f = features.data() + static_cast<std::size_t>(b) * fs;
            for (std::size_t t = 0; t < T; ++t) {
                for (Eigen::Index d = 0; d < D; ++d) {
                    inputs[t](d, b) = f[static_cast<std::size_t>(d) * T + t];
                }
            }
        }
        st.layers.assign(cfg.layers, {});
        for (std::size_t l = 0; l < cfg.layers; ++l) {
            const bool last = l + 1 == cfg.layers;
            auto& fw = st.layers[l][0];
            auto& bw = st.layers[l][1];
            run_direction(params.direction(l, 0), inputs, last ? iota_times(0, c, false) : iota_times(0, T - 1, false),
                          batch, fw);
            run_direction(params.direction(l, 1), inputs, last ? iota_times(c, T - 1, true) : iota_times(0, T - 1, true),
                          batch, bw);
            if (!last) {
                std::vector<Mat> next(T, Mat(2 * H, B));
                for (std::size_t t = 0; t < T; ++t) {
                    next[t].topRows(H) = fw.h.middleCols(static_cast<Eigen::Index>(t) * B, B);
                    next[t].bottomRows(H) = bw.h.middleCols(static_cast<Eigen::Index>(T - 1 - t) * B, B);
                }
                inputs = std::move(next);
            }
        }
        const auto& fw = st.layers.back()[0];
        const auto& bw = st.layers.back()[1];
        st.readout.resize(2 * H, B);
        st.readout.topRows(H) = fw.h.rightCols(B);
        st.readout.bottomRows(H) = bw.h.rightCols(B);
    } else {
        const auto& lay = params.layout();
        st.x_flat = Eigen::Map<const Mat>(features.data(), static_cast<Eigen::Index>(fs), B);
        st.dense_pre = params.matrix(lay.block("dense.weight")) * st.x_flat;
        st.dense_pre.colwise() += params.vector(lay.block("dense.bias"));
        st.readout = st.dense_pre.cwiseMax(0.0);
    }

    const auto& lay = params.layout();
    st.head_pre = params.matrix(lay.block("head.w1")) * st.readout;
    st.head_pre.colwise() += params.vector(lay.block("head.b1"));
    st.head_act = st.head_pre.cwiseMax(0.0);
    st.logits = params.matrix(lay.block("head.w2")) * st.head_act;
    st.logits.array() += params.vector(lay.block("head.b2"))(0);
    st.probs = st.logits.unaryExpr([](double v) { return sigmoid(v); });
}

double clamp_probability(double p)
{
    return std::clamp(p, kProbabilityClamp, 1.0 - kProbabilityClamp);
}

} // namespace

// --- configuration and layout ------------------------------------------------

void ModelConfig::validate() const
{
    if (input_size == 0 || seq_len == 0 || classifier_hidden == 0) {
        throw InvalidArgument("model config: sizes must be positive");
    }
    if (backbone == Backbone::BiGru && (hidden == 0 || layers == 0)) {
        throw InvalidArgument("model config: GRU needs hidden > 0 and layers > 0");
    }
    if (backbone == Backbone::Dense && dense_width == 0) {
        throw InvalidArgument("model config: dense backbone needs dense_width > 0");
    }
    if (!(init_k > 0.0)) {
        throw InvalidArgument("model config: init_k must be positive");
    }
}

ParamLayout::ParamLayout(const ModelConfig& cfg)
{
    cfg.validate();
    if (cfg.backbone == Backbone::BiGru) {
        const std::size_t H = cfg.hidden;
        for (std::size_t l = 0; l < cfg.layers; ++l) {
            const std::size_t D = l == 0 ? cfg.input_size : 2 * H;
            for (std::size_t d = 0; d < directions_; ++d) {
                const std::string pre = "gru.l" + std::to_string(l) + (d == 0 ? ".fwd." : ".bwd.");
                gru_index_.push_back(blocks_.size());
                add(pre + "w_input", BlockKind::GruWeight, 3 * H, D);
                gru_index_.push_back(blocks_.size());
                add(pre + "w_hidden", BlockKind::GruWeight, 3 * H, H);
                gru_index_.push_back(blocks_.size());
                add(pre + "b_input", BlockKind::GruBias, 3 * H, 1);
                gru_index_.push_back(blocks_.size());
                add(pre + "b_hidden", BlockKind::GruBias, 3 * H, 1);
            }
        }
    } else {
        add("dense.weight", BlockKind::DenseWeight, cfg.dense_width, cfg.feature_size());
        add("dense.bias", BlockKind::DenseBias, cfg.dense_width, 1);
    }
    add("head.w1", BlockKind::HeadWeight, cfg.classifier_hidden, cfg.readout_size());
    add("head.b1", BlockKind::HeadBias, cfg.classifier_hidden, 1);
    add("head.w2", BlockKind::HeadWeight, 1, cfg.classifier_hidden);
    add("head.b2", BlockKind::HeadBias, 1, 1);
}

std::size_t ParamLayout::add(std::string name, BlockKind kind, std::size_t rows, std::size_t cols)
{
    blocks_.push_back({std::move(name), kind, total_, rows, cols});
    total_ += rows * cols;
    return blocks_.size() - 1;
}

const ParamBlock& ParamLayout::block(const std::string& name) const
{
    for (const auto& b : blocks_) {
        if (b.name == name) {
            return b;
        }
    }
    throw InvalidArgument("param layout: no block named '" + name + "'");
}

const ParamBlock& ParamLayout::gru_w_input(std::size_t l, std::size_t d) const
{
    return blocks_.at(gru_index_.at((l * directions_ + d) * 4 + 0));
}
const ParamBlock& ParamLayout::gru_w_hidden(std::size_t l, std::size_t d) const
{
    return blocks_.at(gru_index_.at((l * directions_ + d) * 4 + 1));
}
const ParamBlock& ParamLayout::gru_b_input(std::size_t l, std::size_t d) const
{
    return blocks_.at(gru_index_.at((l * directions_ + d) * 4 + 2));
}
const ParamBlock& ParamLayout::gru_b_hidden(std::size_t l, std::size_t d) const
{
    return blocks_.at(gru_index_.at((l * directions_ + d) * 4 + 3));
}

GruDirectionView GruDirectionParams::view() const
{
    return {ConstMatrixMap(w_input.data(), w_input.rows(), w_input.cols()),
            ConstMatrixMap(w_hidden.data(), w_hidden.rows(), w_hidden.cols()),
            ConstVectorMap(b_input.data(), b_input.size()), ConstVectorMap(b_hidden.data(), b_hidden.size())};
}

ModelParams::ModelParams(const ModelConfig& config) : config_(config), layout_(config), values_(layout_.total(), 0.0) {}

ModelParams::ModelParams(const ModelConfig& config, std::vector<double> values)
    : config_(config), layout_(config), values_(std::move(values))
{
    if (values_.size() != layout_.total()) {
        throw InvalidArgument("model params: value count does not match the architecture");
    }
}

ConstMatrixMap ModelParams::matrix(const ParamBlock& b) const
{
    return {values_.data() + b.offset, static_cast<Eigen::Index>(b.rows), static_cast<Eigen::Index>(b.cols)};
}
ConstVectorMap ModelParams::vector(const ParamBlock& b) const
{
    return {values_.data() + b.offset, static_cast<Eigen::Index>(b.size())};
}
MatrixMap ModelParams::matrix(const ParamBlock& b)
{
    return {values_.data() + b.offset, static_cast<Eigen::Index>(b.rows), static_cast<Eigen::Index>(b.cols)};
}
VectorMap ModelParams::vector(const ParamBlock& b)
{
    return {values_.data() + b.offset, static_cast<Eigen::Index>(b.size())};
}

GruDirectionView ModelParams::direction(std::size_t layer, std::size_t dir) const
{
    return {matrix(layout_.gru_w_input(layer, dir)), matrix(layout_.gru_w_hidden(layer, dir)),
            vector(layout_.gru_b_input(layer, dir)), vector(layout_.gru_b_hidden(layer, dir))};
}

// --- forward -----------------------------------------------------------------

Eigen::VectorXd gru_cell(const Eigen::VectorXd& x, const Eigen::VectorXd& h_prev, const GruDirectionView& p)
{
    const Eigen::Index H = p.w_hidden.cols();
    if (p.w_input.rows() != 3 * H || p.w_hidden.rows() != 3 * H || x.size() != p.w_input.cols() ||
        h_prev.size() != H || p.b_input.size() != 3 * H || p.b_hidden.size() != 3 * H) {
        throw InvalidArgument("gru_cell: shape mismatch");
    }
    const Eigen::VectorXd gi = p.w_input * x + p.b_input;
    const Eigen::VectorXd gh = p.w_hidden * h_prev + p.b_hidden;
    const Eigen::ArrayXd r = sigmoid(Mat(gi.head(H) + gh.head(H))).array();
    const Eigen::ArrayXd z = sigmoid(Mat(gi.segment(H, H) + gh.segment(H, H))).array();
    const Eigen::ArrayXd n = (gi.tail(H).array() + r * gh.tail(H).array()).tanh();
    return ((1.0 - z) * n + z * h_prev.array()).matrix();
}

Eigen::VectorXd bigru_forward(std::span<const double> feature, const ModelParams& params)
{
    if (feature.size() != params.config().feature_size()) {
        throw InvalidArgument("bigru_forward: wrong feature shape");
    }
    ForwardState st;
    forward_state(feature, 1, params, st);
    return st.readout.col(0);
}

double classifier_forward(const Eigen::VectorXd& readout, const ModelParams& params)
{
    const auto& lay = params.layout();
    if (readout.size() != static_cast<Eigen::Index>(params.config().readout_size())) {
        throw InvalidArgument("classifier_forward: wrong readout size");
    }
    Eigen::VectorXd u = params.matrix(lay.block("head.w1")) * readout + params.vector(lay.block("head.b1"));
    u = u.cwiseMax(0.0);
    const double o = (params.matrix(lay.block("head.w2")) * u)(0) + params.vector(lay.block("head.b2"))(0);
    return sigmoid(o);
}

double forward(std::span<const double> feature, const ModelParams& params)
{
    if (feature.size() != params.config().feature_size()) {
        throw InvalidArgument("forward: wrong feature shape");
    }
    ForwardState st;
    forward_state(feature, 1, params, st);
    return st.probs(0);
}

std::vector<double> forward_batch(std::span<const double> features, std::size_t count, const ModelParams& params)
{
    if (count == 0) {
        return {};
    }
    ForwardState st;
    forward_state(features, count, params, st);
    return {st.probs.data(), st.probs.data() + st.probs.size()};
}

// --- loss and gradients ------------------------------------------------------

double bce_loss(double p, double y)
{
    const double pc = clamp_probability(p);
    return -(y * std::log(pc) + (1.0 - y) * std::log(1.0 - pc));
}

double bce_loss_mean(std::span<const double> p, std::span<const double> y)
{
    if (p.size() != y.size() || p.empty()) {
        throw InvalidArgument("bce_loss_mean: need equal, non-empty inputs");
    }
    double s = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        s += bce_loss(p[i], y[i]);
    }
    return s / static_cast<double>(p.size());
}

double accumulate_gradient(std::span<const double> features, std::span<const double> labels, std::size_t count,
                           const ModelParams& params, std::span<double> grad)
{
    if (grad.size() != params.size()) {
        throw InvalidArgument("accumulate_gradient: gradient buffer size mismatch");
    }
    if (labels.size() < count) {
        throw InvalidArgument("accumulate_gradient: fewer labels than examples");
    }
    if (count == 0) {
        return 0.0;
    }
    const auto& cfg = params.config();
    const auto& lay = params.layout();
    const auto B = static_cast<Eigen::Index>(count);
    ForwardState st;
    forward_state(features, count, params, st);

    auto gmat = [&](const ParamBlock& b) {
        return MatrixMap(grad.data() + b.offset, static_cast<Eigen::Index>(b.rows), static_cast<Eigen::Index>(b.cols));
    };
    auto gvec = [&](const ParamBlock& b) {
        return VectorMap(grad.data() + b.offset, static_cast<Eigen::Index>(b.size()));
    };

    double loss = 0.0;
    Eigen::RowVectorXd d_logit(B);
    for (Eigen::Index b = 0; b < B; ++b) {
        const double p = st.probs(b);
        const double y = labels[static_cast<std::size_t>(b)];
        loss += bce_loss(p, y);
        // The clamp has zero derivative outside [eps, 1-eps].
        d_logit(b) = (p < kProbabilityClamp || p > 1.0 - kProbabilityClamp) ? 0.0 : p - y;
    }

    // head
    const auto& w1 = lay.block("head.w1");
    const auto& w2 = lay.block("head.w2");
    gmat(w2).noalias() += d_logit * st.head_act.transpose();
    gvec(lay.block("head.b2"))(0) += d_logit.sum();
    Mat d_act = params.matrix(w2).transpose() * d_logit;
    Mat d_pre = (d_act.array() * (st.head_pre.array() > 0.0).cast<double>()).matrix();
    gmat(w1).noalias() += d_pre * st.readout.transpose();
    gvec(lay.block("head.b1")) += d_pre.rowwise().sum();
    Mat d_readout = params.matrix(w1).transpose() * d_pre;

    if (cfg.backbone == Backbone::Dense) {
        Mat d_dense = (d_readout.array() * (st.dense_pre.array() > 0.0).cast<double>()).matrix();
        gmat(lay.block("dense.weight")).noalias() += d_dense * st.x_flat.transpose();
        gvec(lay.block("dense.bias")) += d_dense.rowwise().sum();
        return loss;
    }

    const std::size_t T = cfg.seq_len;
    const auto H = static_cast<Eigen::Index>(cfg.hidden);
    // Per-time gradient on the current layer's outputs ([fwd; bwd], 2H x B).
    std::vector<Mat> d_out;
    for (std::size_t l = cfg.layers; l-- > 0;) {
        const bool last = l + 1 == cfg.layers;
        std::array<Mat, 2> inject;
        for (std::size_t d = 0; d < 2; ++d) {
            const auto& cache = st.layers[l][d];
            const auto S = static_cast<Eigen::Index>(cache.times.size());
            inject[d] = Mat::Zero(H, S * B);
            if (last) {
                inject[d].rightCols(B) = d == 0 ? d_readout.topRows(H) : d_readout.bottomRows(H);
            } else {
                for (Eigen::Index s = 0; s < S; ++s) {
                    const std::size_t t = cache.times[static_cast<std::size_t>(s)];
                    inject[d].middleCols(s * B, B) = d == 0 ? d_out[t].topRows(H) : d_out[t].bottomRows(H);
                }
            }
        }
        const auto D = static_cast<Eigen::Index>(l == 0 ? cfg.input_size : 2 * cfg.hidden);
        std::vector<Mat> d_in(T, Mat::Zero(D, B));
        for (std::size_t d = 0; d < 2; ++d) {
            GruGradMaps g{gmat(lay.gru_w_input(l, d)), gmat(lay.gru_w_hidden(l, d)), gvec(lay.gru_b_input(l, d)),
                          gvec(lay.gru_b_hidden(l, d))};
            const auto& cache = st.layers[l][d];
            Mat dx = backprop_direction(params.direction(l, d), cache, inject[d], count, g);
            if (l > 0) {
                for (std::size_t s = 0; s < cache.times.size(); ++s) {
                    d_in[cache.times[s]] += dx.middleCols(static_cast<Eigen::Index>(s) * B, B);
                }
            }
        }
        d_out = std::move(d_in);
    }
    return loss;
}

std::vector<double> backward(std::span<const double> feature, double label, const ModelParams& params)
{
    std::vector<double> grad(params.size(), 0.0);
    const double y = label;
    accumulate_gradient(feature, std::span(&y, 1), 1, params, grad);
    return grad;
}

// --- initialization and optimizer --------------------------------------------

ModelParams init_params(const ModelConfig& config, std::uint64_t seed)
{
    ModelParams params(config);
    std::mt19937_64 gen(seed);
    auto uniform = [&](double bound) {
        const double u = static_cast<double>(gen() >> 11) * 0x1.0p-53;
        return (2.0 * u - 1.0) * bound;
    };
    auto values = params.values();
    const double gru_bound = std::sqrt(config.init_k);
    for (const auto& b : params.layout().blocks()) {
        double bound = 0.0;
        switch (b.kind) {
        case BlockKind::GruWeight:
        case BlockKind::GruBias:
            bound = gru_bound;
            break;
        case BlockKind::DenseWeight:
        case BlockKind::HeadWeight:
            bound = std::sqrt(6.0 / static_cast<double>(b.cols));
            break;
        case BlockKind::DenseBias:
        case BlockKind::HeadBias:
            bound = 0.0;
            break;
        }
        for (std::size_t i = 0; i < b.size(); ++i) {
            values[b.offset + i] = bound == 0.0 ? 0.0 : uniform(bound);
        }
    }
    return params;
}

void adam_step(std::span<double> params, std::span<const double> grads, AdamState& s)
{
    if (params.size() != grads.size() || s.m.size() != params.size() || s.v.size() != params.size()) {
        throw InvalidArgument("adam_step: size mismatch");
    }
    ++s.step;
    const double t = static_cast<double>(s.step);
    const double c1 = 1.0 - std::pow(s.beta1, t);
    const double c2 = 1.0 - std::pow(s.beta2, t);
    for (std::size_t i = 0; i < params.size(); ++i) {
        const double g = grads[i];
        s.m[i] = s.beta1 * s.m[i] + (1.0 - s.beta1) * g;
        s.v[i] = s.beta2 * s.v[i] + (1.0 - s.beta2) * g * g;
        const double m_hat = s.m[i] / c1;
        const double v_hat = s.v[i] / c2;
        params[i] -= s.lr * m_hat / (std::sqrt(v_hat) + s.eps);
    }
}

double clip_gradient_norm(std::span<double> grads, double max_norm)
{
    double sq = 0.0;
    for (double g : grads) {
        sq += g * g;
    }
    const double norm = std::sqrt(sq);
    if (max_norm > 0.0 && norm > max_norm) {
        const double scale = max_norm / norm;
        for (auto& g : grads) {
            g *= scale;
        }
    }
    return norm;
}

// --- checkpoints -------------------------------------------------------------

std::string to_string(Backbone b)
{
    return b == Backbone::BiGru ? "bigru" : "dense";
}

Backbone backbone_from_string(const std::string& s)
{
    if (s == "bigru") {
        return Backbone::BiGru;
    }
    if (s == "dense") {
        return Backbone::Dense;
    }
    throw InvalidArgument("unknown backbone '" + s + "'");
}

void save_checkpoint(const std::filesystem::path& stem, const ModelParams& params, const CheckpointMeta& meta)
{
    auto bin_path = stem;
    bin_path += ".bin";
    auto json_path = stem;
    json_path += ".json";

    std::ofstream bin(bin_path, std::ios::binary | std::ios::trunc);
    if (!bin) {
        throw DataError("cannot write '" + bin_path.string() + "'");
    }
    auto put_le = [&](std::uint64_t v, int bytes) {
        for (int i = 0; i < bytes; ++i) {
            bin.put(static_cast<char>((v >> (8 * i)) & 0xFF));
        }
    };
    bin.write(kMagic.data(), kMagic.size());
    put_le(kCheckpointVersion, 4);
    put_le(0, 4);
    put_le(params.size(), 8);
    for (double v : params.values()) {
        put_le(std::bit_cast<std::uint64_t>(v), 8);
    }

    const auto& c = params.config();
    nlohmann::json j = {
        {"format", "upvc-checkpoint"},
        {"version", kCheckpointVersion},
        {"blob", bin_path.filename().string()},
        {"parameter_count", params.size()},
        {"seed", meta.seed},
        {"step", meta.step},
        {"architecture",
         {{"backbone", to_string(c.backbone)},
          {"input_size", c.input_size},
          {"seq_len", c.seq_len},
          {"hidden", c.hidden},
          {"layers", c.layers},
          {"classifier_hidden", c.classifier_hidden},
          {"dense_width", c.dense_width},
          {"init_k", c.init_k}}},
    };
    std::ofstream js(json_path, std::ios::trunc);
    if (!js) {
        throw DataError("cannot write '" + json_path.string() + "'");
    }
    js << j.dump(2) << '\n';
}

ModelParams load_checkpoint(const std::filesystem::path& stem, CheckpointMeta* meta)
{
    auto bin_path = stem;
    bin_path += ".bin";
    auto json_path = stem;
    json_path += ".json";

    std::ifstream js(json_path);
    if (!js) {
        throw DataError("cannot open '" + json_path.string() + "'");
    }
    nlohmann::json j;
    try {
        js >> j;
    } catch (const nlohmann::json::exception& e) {
        throw DataError("checkpoint manifest: " + std::string(e.what()));
    }
    ModelConfig c;
    try {
        const auto& a = j.at("architecture");
        c.backbone = backbone_from_string(a.at("backbone").get<std::string>());
        c.input_size = a.at("input_size").get<std::size_t>();
        c.seq_len = a.at("seq_len").get<std::size_t>();
        c.hidden = a.at("hidden").get<std::size_t>();
        c.layers = a.at("layers").get<std::size_t>();
        c.classifier_hidden = a.at("classifier_hidden").get<std::size_t>();
        c.dense_width = a.at("dense_width").get<std::size_t>();
        c.init_k = a.at("init_k").get<double>();
        if (meta) {
            meta->seed = j.at("seed").get<std::uint64_t>();
            meta->step = j.at("step").get<std::uint64_t>();
        }
    } catch (const nlohmann::json::exception& e) {
        throw DataError("checkpoint manifest: " + std::string(e.what()));
    }

    std::ifstream bin(bin_path, std::ios::binary);
    if (!bin) {
        throw DataError("cannot open '" + bin_path.string() + "'");
    }
    std::array<char, 8> magic{};
    bin.read(magic.data(), magic.size());
    if (!bin || magic != kMagic) {
        throw DataError("checkpoint: bad magic in '" + bin_path.string() + "'");
    }
    auto get_le = [&](int bytes) {
        std::uint64_t v = 0;
        for (int i = 0; i < bytes; ++i) {
            const int ch = bin.get();
            if (ch == std::char_traits<char>::eof()) {
                throw DataError("checkpoint: truncated blob");
            }
            v |= static_cast<std::uint64_t>(static_cast<unsigned char>(ch)) << (8 * i);
        }
        return v;
    };
    const auto version = get_le(4);
    if (version != kCheckpointVersion) {
        throw DataError("checkpoint: unsupported version " + std::to_string(version));
    }
    (void)get_le(4);
    const auto count = get_le(8);
    std::vector<double> values(count);
    for (auto& v : values) {
        v = std::bit_cast<double>(get_le(8));
    }
    return ModelParams(c, std::move(values));
}

} // namespace upvc::nn
