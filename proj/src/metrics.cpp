#include "upvc/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <random>

namespace upvc::metrics {

namespace {

void check_pair(std::span<const double> scores, std::span<const int> labels)
{
    if (scores.size() != labels.size()) {
        throw InvalidArgument("metrics: scores and labels differ in length");
    }
    for (int y : labels) {
        if (y != 0 && y != 1) {
            throw InvalidArgument("metrics: labels must be 0 or 1");
        }
    }
}

std::optional<double> ratio(std::size_t num, std::size_t den)
{
    if (den == 0) {
        return std::nullopt;
    }
    return static_cast<double>(num) / static_cast<double>(den);
}

// Unbiased enough for n << 2^64 and platform-independent.
std::size_t draw_index(std::mt19937_64& gen, std::size_t n)
{
    return static_cast<std::size_t>((static_cast<unsigned __int128>(gen()) * n) >> 64);
}

} // namespace

std::size_t ScoredSet::positives() const
{
    return static_cast<std::size_t>(std::count(labels.begin(), labels.end(), 1));
}

void ScoredSet::validate() const
{
    check_pair(scores, labels);
    for (double s : scores) {
        if (!(s >= 0.0 && s <= 1.0)) {
            throw InvalidArgument("metrics: scores must lie in [0, 1]");
        }
    }
}

std::vector<double> midranks(std::span<const double> values)
{
    const std::size_t n = values.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
    std::vector<double> ranks(n);
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j + 1 < n && values[order[j + 1]] == values[order[i]]) {
            ++j;
        }
        const double r = 0.5 * static_cast<double>(i + j) + 1.0;
        for (std::size_t k = i; k <= j; ++k) {
            ranks[order[k]] = r;
        }
        i = j + 1;
    }
    return ranks;
}

double roc_auc(std::span<const double> scores, std::span<const int> labels)
{
    check_pair(scores, labels);
    const auto ranks = midranks(scores);
    double pos_rank_sum = 0.0;
    std::size_t n_pos = 0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] == 1) {
            pos_rank_sum += ranks[i];
            ++n_pos;
        }
    }
    const std::size_t n_neg = labels.size() - n_pos;
    if (n_pos == 0 || n_neg == 0) {
        throw InvalidArgument("roc_auc: both classes must be present");
    }
    const double np = static_cast<double>(n_pos);
    return (pos_rank_sum - np * (np + 1.0) / 2.0) / (np * static_cast<double>(n_neg));
}

double roc_auc(const ScoredSet& s)
{
    return roc_auc(s.scores, s.labels);
}

std::vector<RocPoint> roc_curve(std::span<const double> scores, std::span<const int> labels)
{
    check_pair(scores, labels);
    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
    const auto n_pos = static_cast<double>(std::count(labels.begin(), labels.end(), 1));
    const auto n_neg = static_cast<double>(labels.size()) - n_pos;
    if (n_pos == 0 || n_neg == 0) {
        throw InvalidArgument("roc_curve: both classes must be present");
    }
    std::vector<RocPoint> pts{{std::numeric_limits<double>::infinity(), 0.0, 0.0}};
    double tp = 0;
    double fp = 0;
    for (std::size_t i = 0; i < order.size(); ++i) {
        (labels[order[i]] == 1 ? tp : fp) += 1.0;
        if (i + 1 == order.size() || scores[order[i + 1]] != scores[order[i]]) {
            pts.push_back({scores[order[i]], fp / n_neg, tp / n_pos});
        }
    }
    return pts;
}

ThresholdMetrics confusion_at(std::span<const double> scores, std::span<const int> labels, double threshold)
{
    check_pair(scores, labels);
    if (!(threshold >= 0.0 && threshold <= 1.0)) {
        throw InvalidArgument("confusion_at: threshold must lie in [0, 1]");
    }
    ThresholdMetrics m;
    m.threshold = threshold;
    auto& c = m.counts;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        const bool pred = scores[i] >= threshold;
        if (labels[i] == 1) {
            (pred ? c.tp : c.fn) += 1;
        } else {
            (pred ? c.fp : c.tn) += 1;
        }
    }
    m.sensitivity = ratio(c.tp, c.tp + c.fn);
    m.specificity = ratio(c.tn, c.tn + c.fp);
    m.ppv = ratio(c.tp, c.tp + c.fp);
    m.npv = ratio(c.tn, c.tn + c.fn);
    m.accuracy = ratio(c.tp + c.tn, c.n());
    if (m.ppv && m.sensitivity && (*m.ppv + *m.sensitivity) > 0.0) {
        m.f1 = 2.0 * *m.ppv * *m.sensitivity / (*m.ppv + *m.sensitivity);
    }
    return m;
}

std::string to_string(MetricKind m)
{
    switch (m) {
    case MetricKind::Auroc:
        return "auroc";
    case MetricKind::Sensitivity:
        return "sensitivity";
    case MetricKind::Specificity:
        return "specificity";
    case MetricKind::Ppv:
        return "ppv";
    case MetricKind::Npv:
        return "npv";
    case MetricKind::F1:
        return "f1";
    case MetricKind::Accuracy:
        return "accuracy";
    }
    return "unknown";
}

std::optional<double> evaluate(MetricKind m, std::span<const double> scores, std::span<const int> labels,
                               double threshold)
{
    if (m == MetricKind::Auroc) {
        const auto pos = std::count(labels.begin(), labels.end(), 1);
        if (pos == 0 || pos == static_cast<std::ptrdiff_t>(labels.size())) {
            return std::nullopt;
        }
        return roc_auc(scores, labels);
    }
    const auto t = confusion_at(scores, labels, threshold);
    switch (m) {
    case MetricKind::Sensitivity:
        return t.sensitivity;
    case MetricKind::Specificity:
        return t.specificity;
    case MetricKind::Ppv:
        return t.ppv;
    case MetricKind::Npv:
        return t.npv;
    case MetricKind::F1:
        return t.f1;
    case MetricKind::Accuracy:
        return t.accuracy;
    case MetricKind::Auroc:
        break;
    }
    return std::nullopt;
}

double percentile(std::vector<double> values, double q)
{
    if (values.empty()) {
        throw InvalidArgument("percentile: empty input");
    }
    std::sort(values.begin(), values.end());
    const double pos = q * static_cast<double>(values.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, values.size() - 1);
    const double frac = pos - static_cast<double>(lo);
    return values[lo] + (values[hi] - values[lo]) * frac;
}

Interval bootstrap_ci(const ScoredSet& s, const MetricFn& metric, const BootstrapOptions& opt)
{
    check_pair(s.scores, s.labels);
    const std::size_t n = s.size();
    if (n == 0 || opt.n_resamples == 0) {
        throw InvalidArgument("bootstrap_ci: need data and at least one resample");
    }
    if (!opt.clusters.empty() && opt.clusters.size() != n) {
        throw InvalidArgument("bootstrap_ci: cluster ids must match the data length");
    }

    // Cluster membership lists (one singleton per element at beat level).
    std::vector<std::vector<std::size_t>> members;
    if (opt.clusters.empty()) {
        members.resize(n);
        for (std::size_t i = 0; i < n; ++i) {
            members[i] = {i};
        }
    } else {
        std::map<std::size_t, std::size_t> index;
        for (std::size_t i = 0; i < n; ++i) {
            auto [it, inserted] = index.emplace(opt.clusters[i], members.size());
            if (inserted) {
                members.emplace_back();
            }
            members[it->second].push_back(i);
        }
    }
    const std::size_t n_units = members.size();

    std::vector<std::optional<double>> values(opt.n_resamples);
    const auto resamples = static_cast<std::int64_t>(opt.n_resamples);
#pragma omp parallel for schedule(dynamic, 1)
    for (std::int64_t r = 0; r < resamples; ++r) {
        std::mt19937_64 gen(opt.seed + static_cast<std::uint64_t>(r));
        std::vector<double> sc;
        std::vector<int> lb;
        for (std::size_t attempt = 0; attempt < opt.max_redraws; ++attempt) {
            sc.clear();
            lb.clear();
            for (std::size_t u = 0; u < n_units; ++u) {
                for (std::size_t i : members[draw_index(gen, n_units)]) {
                    sc.push_back(s.scores[i]);
                    lb.push_back(s.labels[i]);
                }
            }
            if (auto v = metric(sc, lb)) {
                values[static_cast<std::size_t>(r)] = v;
                break;
            }
        }
    }
    std::vector<double> ok;
    for (const auto& v : values) {
        if (v) {
            ok.push_back(*v);
        }
    }
    if (ok.empty()) {
        throw InvalidArgument("bootstrap_ci: metric undefined on every resample");
    }
    const double alpha = (1.0 - opt.level) / 2.0;
    return {percentile(ok, alpha), percentile(ok, 1.0 - alpha)};
}

double normal_two_sided_p(double z)
{
    return std::erfc(std::abs(z) / std::sqrt(2.0));
}

DelongResult delong_test(std::span<const double> scores_a, std::span<const double> scores_b,
                         std::span<const int> labels)
{
    check_pair(scores_a, labels);
    check_pair(scores_b, labels);
    std::vector<std::size_t> pos;
    std::vector<std::size_t> neg;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        (labels[i] == 1 ? pos : neg).push_back(i);
    }
    const std::size_t m = pos.size();
    const std::size_t n = neg.size();
    if (m < 2 || n < 2) {
        throw InvalidArgument("delong_test: need at least two examples of each class");
    }
    const double dm = static_cast<double>(m);
    const double dn = static_cast<double>(n);

    // Structural components: v10[i] for positives, v01[j] for negatives.
    auto components = [&](std::span<const double> sc, double& auc, std::vector<double>& v10, std::vector<double>& v01) {
        std::vector<double> xs(m);
        std::vector<double> ys(n);
        for (std::size_t i = 0; i < m; ++i) {
            xs[i] = sc[pos[i]];
        }
        for (std::size_t j = 0; j < n; ++j) {
            ys[j] = sc[neg[j]];
        }
        std::vector<double> all(xs);
        all.insert(all.end(), ys.begin(), ys.end());
        const auto tx = midranks(xs);
        const auto ty = midranks(ys);
        const auto tz = midranks(all);
        v10.resize(m);
        v01.resize(n);
        double sum_pos = 0.0;
        for (std::size_t i = 0; i < m; ++i) {
            v10[i] = (tz[i] - tx[i]) / dn;
            sum_pos += tz[i];
        }
        for (std::size_t j = 0; j < n; ++j) {
            v01[j] = 1.0 - (tz[m + j] - ty[j]) / dm;
        }
        auc = (sum_pos - dm * (dm + 1.0) / 2.0) / (dm * dn);
    };

    DelongResult r;
    std::vector<double> a10, a01, b10, b01;
    components(scores_a, r.auc_a, a10, a01);
    components(scores_b, r.auc_b, b10, b01);

    auto cov = [](const std::vector<double>& u, const std::vector<double>& v) {
        const double k = static_cast<double>(u.size());
        const double mu = std::accumulate(u.begin(), u.end(), 0.0) / k;
        const double mv = std::accumulate(v.begin(), v.end(), 0.0) / k;
        double s = 0.0;
        for (std::size_t i = 0; i < u.size(); ++i) {
            s += (u[i] - mu) * (v[i] - mv);
        }
        return s / (k - 1.0);
    };
    r.var_a = cov(a10, a10) / dm + cov(a01, a01) / dn;
    r.var_b = cov(b10, b10) / dm + cov(b01, b01) / dn;
    r.covariance = cov(a10, b10) / dm + cov(a01, b01) / dn;
    r.variance_of_difference = std::max(0.0, r.var_a + r.var_b - 2.0 * r.covariance);

    const double diff = r.auc_a - r.auc_b;
    const double scale = std::max(r.var_a + r.var_b, 1e-300);
    if (r.variance_of_difference <= 1e-14 * scale) {
        if (diff == 0.0) {
            r.variance_of_difference = 0.0;
            r.z = 0.0;
            r.p = 1.0;
            return r;
        }
        throw DegenerateVariance("delong_test: zero variance with unequal AUCs");
    }
    r.z = diff / std::sqrt(r.variance_of_difference);
    r.p = normal_two_sided_p(r.z);
    return r;
}

const OddsRow* OddsTable::find(char label) const
{
    for (const auto& r : rows) {
        if (r.label == label) {
            return &r;
        }
    }
    return nullptr;
}

OddsTable odds_table(std::span<const int> predicted_pvc, std::span<const char> reference_symbols)
{
    if (predicted_pvc.size() != reference_symbols.size()) {
        throw InvalidArgument("odds_table: predictions and references differ in length");
    }
    std::map<char, OddsRow> rows;
    for (std::size_t i = 0; i < predicted_pvc.size(); ++i) {
        auto& row = rows[reference_symbols[i]];
        row.label = reference_symbols[i];
        (predicted_pvc[i] ? row.pred_pvc : row.pred_nonpvc) += 1;
    }
    OddsTable t;
    for (auto& [label, row] : rows) {
        if (row.pred_nonpvc == 0) {
            row.infinite = true;
            row.odds = std::numeric_limits<double>::infinity();
        } else {
            row.odds = static_cast<double>(row.pred_pvc) / static_cast<double>(row.pred_nonpvc);
        }
        t.rows.push_back(row);
    }
    std::stable_sort(t.rows.begin(), t.rows.end(), [](const OddsRow& a, const OddsRow& b) { return a.odds < b.odds; });
    return t;
}

std::vector<std::size_t> extreme_errors(const ScoredSet& s, std::span<const TieKey> keys, std::size_t k,
                                        ErrorDirection direction, double threshold)
{
    check_pair(s.scores, s.labels);
    if (keys.size() != s.size()) {
        throw InvalidArgument("extreme_errors: tie keys must match the data length");
    }
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < s.size(); ++i) {
        const bool pred = s.scores[i] >= threshold;
        if (direction == ErrorDirection::FalseNegative ? (s.labels[i] == 1 && !pred) : (s.labels[i] == 0 && pred)) {
            idx.push_back(i);
        }
    }
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
        if (s.scores[a] != s.scores[b]) {
            return direction == ErrorDirection::FalseNegative ? s.scores[a] < s.scores[b] : s.scores[a] > s.scores[b];
        }
        if (keys[a].record_id != keys[b].record_id) {
            return keys[a].record_id < keys[b].record_id;
        }
        return keys[a].center < keys[b].center;
    });
    if (idx.size() > k) {
        idx.resize(k);
    }
    return idx;
}

} // namespace upvc::metrics
