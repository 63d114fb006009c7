#include "upvc/report.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "upvc/error.hpp"

namespace upvc::report {

namespace fs = std::filesystem;
using nlohmann::json;
using harness::LeadEvaluation;
using harness::RunResult;

namespace {

std::string num(double v, const char* fmt = "%.10g")
{
    if (std::isinf(v)) {
        return v > 0 ? "inf" : "-inf";
    }
    char buf[64];
    std::snprintf(buf, sizeof buf, fmt, v);
    return buf;
}

std::string opt(const std::optional<double>& v)
{
    return v ? num(*v) : "";
}

json opt_json(const std::optional<double>& v)
{
    return v ? json(*v) : json(nullptr);
}

json estimate_json(const harness::MetricEstimate& e)
{
    return {{"point", opt_json(e.point)},
            {"ci_lo", e.ci ? json(e.ci->lo) : json(nullptr)},
            {"ci_hi", e.ci ? json(e.ci->hi) : json(nullptr)}};
}

void write_text(const fs::path& path, const std::string& text)
{
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw DataError("cannot write " + path.string());
    }
    out << text;
}

std::string odds_file(const std::string& dataset, const std::string& run, bool first)
{
    return first ? "odds_" + dataset + ".csv" : "odds_" + dataset + "__" + run + ".csv";
}

std::set<std::size_t> leads_of(const std::vector<RunResult>& runs)
{
    std::set<std::size_t> leads;
    for (const auto& r : runs) {
        for (const auto& l : r.leads) {
            leads.insert(l.lead);
        }
    }
    return leads;
}

// Tables that are pure functions of the scores; shared by emit and recompute.
void write_tables(const std::vector<RunResult>& runs, const fs::path& out)
{
    write_text(out / "metrics.csv", metrics_csv(runs));
    std::set<std::string> seen;
    for (const auto& r : runs) {
        const bool first = seen.insert(r.holdout_id).second;
        write_text(out / odds_file(r.holdout_id, r.name, first), odds_csv(r.odds));
    }
    for (const auto lead : leads_of(runs)) {
        write_text(out / ("roc_" + std::to_string(lead) + ".csv"), roc_csv(runs, lead));
    }
}

// --- SVG ---------------------------------------------------------------------

constexpr const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#17becf"};

class Svg {
public:
    Svg(double w, double h) : w_(w), h_(h)
    {
        os_ << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h
            << "\" font-family=\"sans-serif\" font-size=\"12\">\n"
            << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    }
    void line(double x1, double y1, double x2, double y2, const std::string& stroke, const std::string& extra = "")
    {
        os_ << "<line x1=\"" << num(x1, "%.2f") << "\" y1=\"" << num(y1, "%.2f") << "\" x2=\"" << num(x2, "%.2f")
            << "\" y2=\"" << num(y2, "%.2f") << "\" stroke=\"" << stroke << "\" " << extra << "/>\n";
    }
    void polyline(const std::vector<std::pair<double, double>>& pts, const std::string& stroke)
    {
        os_ << "<polyline fill=\"none\" stroke-width=\"1.5\" stroke=\"" << stroke << "\" points=\"";
        for (const auto& [x, y] : pts) {
            os_ << num(x, "%.2f") << ',' << num(y, "%.2f") << ' ';
        }
        os_ << "\"/>\n";
    }
    void circle(double x, double y, const std::string& fill)
    {
        os_ << "<circle cx=\"" << num(x, "%.2f") << "\" cy=\"" << num(y, "%.2f") << "\" r=\"3\" fill=\"" << fill
            << "\"/>\n";
    }
    void rect(double x, double y, double w, double h, const std::string& fill)
    {
        os_ << "<rect x=\"" << num(x, "%.2f") << "\" y=\"" << num(y, "%.2f") << "\" width=\"" << num(w, "%.2f")
            << "\" height=\"" << num(h, "%.2f") << "\" fill=\"" << fill << "\"/>\n";
    }
    void text(double x, double y, const std::string& s, const std::string& anchor = "start")
    {
        os_ << "<text x=\"" << num(x, "%.2f") << "\" y=\"" << num(y, "%.2f") << "\" text-anchor=\"" << anchor << "\">"
            << s << "</text>\n";
    }
    [[nodiscard]] std::string str() const { return os_.str() + "</svg>\n"; }
    [[nodiscard]] double width() const { return w_; }
    [[nodiscard]] double height() const { return h_; }

private:
    double w_;
    double h_;
    std::ostringstream os_;
};

// Plot area with data ranges; y grows upwards.
struct Frame {
    double left = 60, top = 30, right = 20, bottom = 50;
    double x0 = 0, x1 = 1, y0 = 0, y1 = 1;
    double w = 480, h = 400;
    [[nodiscard]] double px(double x) const { return left + (x - x0) / (x1 - x0) * (w - left - right); }
    [[nodiscard]] double py(double y) const { return h - bottom - (y - y0) / (y1 - y0) * (h - top - bottom); }
};

void axes(Svg& svg, const Frame& f, const std::string& xlabel, const std::string& ylabel, const std::string& title)
{
    svg.line(f.px(f.x0), f.py(f.y0), f.px(f.x1), f.py(f.y0), "black");
    svg.line(f.px(f.x0), f.py(f.y0), f.px(f.x0), f.py(f.y1), "black");
    for (int i = 0; i <= 4; ++i) {
        const double y = f.y0 + (f.y1 - f.y0) * i / 4.0;
        svg.line(f.px(f.x0) - 4, f.py(y), f.px(f.x0), f.py(y), "black");
        svg.text(f.px(f.x0) - 6, f.py(y) + 4, num(y, "%.2f"), "end");
    }
    svg.text((f.px(f.x0) + f.px(f.x1)) / 2, f.h - 12, xlabel, "middle");
    svg.text(14, f.top - 10, ylabel);
    svg.text((f.px(f.x0) + f.px(f.x1)) / 2, f.top - 10, title, "middle");
}

std::string roc_svg(const std::vector<RunResult>& runs, std::size_t lead)
{
    Svg svg(480, 420);
    Frame f;
    f.h = 420;
    axes(svg, f, "False positive rate", "True positive rate", "ROC, lead " + std::to_string(lead));
    for (int i = 0; i <= 4; ++i) {
        const double x = i / 4.0;
        svg.line(f.px(x), f.py(0), f.px(x), f.py(0) + 4, "black");
        svg.text(f.px(x), f.py(0) + 18, num(x, "%.2f"), "middle");
    }
    svg.line(f.px(0), f.py(0), f.px(1), f.py(1), "#bbbbbb", "stroke-dasharray=\"4 4\"");
    std::size_t k = 0;
    for (const auto& r : runs) {
        for (const auto& l : r.leads) {
            if (l.lead != lead || l.roc.empty()) {
                continue;
            }
            const std::size_t step = std::max<std::size_t>(1, l.roc.size() / 2000);
            std::vector<std::pair<double, double>> pts;
            for (std::size_t i = 0; i < l.roc.size(); i += step) {
                pts.emplace_back(f.px(l.roc[i].fpr), f.py(l.roc[i].tpr));
            }
            pts.emplace_back(f.px(l.roc.back().fpr), f.py(l.roc.back().tpr));
            const std::string color = kPalette[k % std::size(kPalette)];
            svg.polyline(pts, color);
            const std::string label = r.name + (l.auroc.point ? " (AUROC " + num(*l.auroc.point, "%.4f") + ")" : "");
            svg.rect(f.px(0.45), f.py(0.25 - 0.06 * static_cast<double>(k)) - 8, 10, 10, color);
            svg.text(f.px(0.45) + 14, f.py(0.25 - 0.06 * static_cast<double>(k)), label);
            ++k;
        }
    }
    return svg.str();
}

std::string ablation_svg(const std::vector<RunResult>& runs)
{
    const auto leads = leads_of(runs);
    const double group = 40.0 * static_cast<double>(runs.size()) + 30.0;
    Svg svg(std::max(480.0, 80.0 + group * static_cast<double>(leads.size())), 420);
    Frame f;
    f.w = svg.width();
    f.h = 420;
    f.bottom = 80;
    f.x0 = 0;
    f.x1 = static_cast<double>(leads.size());
    f.y0 = 0.5;
    f.y1 = 1.0;
    axes(svg, f, "Holdout lead", "AUROC", "Ablation");
    std::size_t g = 0;
    for (const auto lead : leads) {
        const double gx = f.px(static_cast<double>(g)) + 15;
        for (std::size_t k = 0; k < runs.size(); ++k) {
            for (const auto& l : runs[k].leads) {
                if (l.lead == lead && l.auroc.point) {
                    const double v = std::clamp(*l.auroc.point, f.y0, f.y1);
                    const double x = gx + 40.0 * static_cast<double>(k);
                    svg.rect(x, f.py(v), 30, f.py(f.y0) - f.py(v), kPalette[k % std::size(kPalette)]);
                    if (l.auroc.ci) {
                        svg.line(x + 15, f.py(std::clamp(l.auroc.ci->lo, f.y0, f.y1)), x + 15,
                                 f.py(std::clamp(l.auroc.ci->hi, f.y0, f.y1)), "black");
                    }
                }
            }
        }
        svg.text(gx + group / 2 - 15, f.py(f.y0) + 18, std::to_string(lead), "middle");
        ++g;
    }
    for (std::size_t k = 0; k < runs.size(); ++k) {
        const double x = f.left + 130.0 * static_cast<double>(k);
        svg.rect(x, f.h - 30, 10, 10, kPalette[k % std::size(kPalette)]);
        svg.text(x + 14, f.h - 21, runs[k].name);
    }
    return svg.str();
}

std::string source_curve_svg(const harness::CurveResult& c)
{
    Svg svg(560, 420);
    Frame f;
    f.w = 560;
    f.h = 420;
    f.bottom = 80;
    f.x0 = 0;
    f.x1 = std::max<double>(1.0, static_cast<double>(c.points.size()) - 1.0);
    f.y0 = 0.5;
    f.y1 = 1.0;
    axes(svg, f, "Training examples n", "AUROC", "Single- vs multi-source");
    for (std::size_t i = 0; i < c.points.size(); ++i) {
        svg.text(f.px(static_cast<double>(i)), f.py(f.y0) + 18, std::to_string(c.points[i].n), "middle");
    }
    std::set<std::size_t> leads;
    for (const auto& p : c.points) {
        for (const auto& [l, v] : p.multi) {
            leads.insert(l);
        }
        for (const auto& [l, v] : p.single_median) {
            leads.insert(l);
        }
    }
    std::size_t k = 0;
    for (const auto lead : leads) {
        for (int strategy = 0; strategy < 2; ++strategy) {
            const std::string color = kPalette[k % std::size(kPalette)];
            std::vector<std::pair<double, double>> pts;
            for (std::size_t i = 0; i < c.points.size(); ++i) {
                const auto& m = strategy == 0 ? c.points[i].multi : c.points[i].single_median;
                if (const auto it = m.find(lead); it != m.end()) {
                    const double x = f.px(static_cast<double>(i));
                    const double y = f.py(std::clamp(it->second, f.y0, f.y1));
                    pts.emplace_back(x, y);
                    svg.circle(x, y, color);
                }
            }
            if (pts.size() > 1) {
                svg.polyline(pts, color);
            }
            const double x = f.left + 240.0 * static_cast<double>(strategy);
            const double y = f.h - 40 + 14.0 * static_cast<double>(k / 2);
            svg.rect(x, y - 9, 10, 10, color);
            svg.text(x + 14, y, std::string(strategy == 0 ? "multi-source" : "single-source median") + ", lead " +
                                    std::to_string(lead));
            ++k;
        }
    }
    return svg.str();
}

json lead_json(const LeadEvaluation& l)
{
    json thresholds = json::array();
    for (const auto& t : l.thresholds) {
        json m = {{"threshold", t.threshold},
                  {"tp", t.counts.tp},
                  {"fp", t.counts.fp},
                  {"tn", t.counts.tn},
                  {"fn", t.counts.fn}};
        for (const auto& [kind, e] : t.values) {
            m[metrics::to_string(kind)] = estimate_json(e);
        }
        thresholds.push_back(std::move(m));
    }
    return {{"lead", l.lead},
            {"dataset", l.dataset_id},
            {"n", l.scored.size()},
            {"positives", l.scored.positives()},
            {"auroc", estimate_json(l.auroc)},
            {"thresholds", thresholds}};
}

json odds_json(const metrics::OddsTable& t)
{
    json rows = json::array();
    for (const auto& r : t.rows) {
        rows.push_back({{"label", std::string(1, r.label)},
                        {"nonpvc_count", r.pred_nonpvc},
                        {"pvc_count", r.pred_pvc},
                        {"odds", r.infinite ? json(nullptr) : json(r.odds)},
                        {"infinite", r.infinite}});
    }
    return rows;
}

json run_json(const RunResult& r)
{
    json epochs = json::array();
    for (const auto& e : r.epochs) {
        epochs.push_back({{"epoch", e.epoch},
                          {"train_loss", e.train_loss},
                          {"val_loss", opt_json(e.val_loss)},
                          {"val_auroc", opt_json(e.val_auroc)}});
    }
    json leads = json::array();
    std::vector<double> thresholds;
    for (const auto& l : r.leads) {
        leads.push_back(lead_json(l));
        if (thresholds.empty()) {
            for (const auto& t : l.thresholds) {
                thresholds.push_back(t.threshold);
            }
        }
    }
    return {{"name", r.name},
            {"holdout", r.holdout_id},
            {"backbone", nn::to_string(r.config.model_config().backbone)},
            {"flags",
             {{"bandpass_on", r.config.flags.bandpass_on},
              {"bigru_on", r.config.flags.bigru_on},
              {"quality_filter_on", r.config.flags.quality_filter_on}}},
            {"parameter_count", r.parameter_count},
            {"best_epoch", r.best_epoch},
            {"steps", r.steps},
            {"checkpoint", r.checkpoint},
            {"thresholds", thresholds},
            {"odds_threshold", r.odds_threshold},
            {"provenance",
             {{"train", r.train_provenance}, {"validation", r.val_provenance}, {"gradient", r.gradient_provenance}}},
            {"epochs", epochs},
            {"leads", leads},
            {"odds", odds_json(r.odds)}};
}

std::vector<std::string> split_csv(const std::string& line)
{
    std::vector<std::string> out;
    std::string cur;
    for (const char c : line) {
        if (c == ',') {
            out.push_back(cur);
            cur.clear();
        } else if (c != '\r') {
            cur.push_back(c);
        }
    }
    out.push_back(cur);
    return out;
}

} // namespace

std::string utc_now_iso()
{
    const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

std::string metrics_csv(const std::vector<RunResult>& runs)
{
    std::ostringstream os;
    os << "run,dataset,lead,threshold,metric,point,ci_lo,ci_hi\n";
    auto row = [&](const RunResult& r, const LeadEvaluation& l, const std::string& t, const std::string& metric,
                   const harness::MetricEstimate& e) {
        os << r.name << ',' << l.dataset_id << ',' << l.lead << ',' << t << ',' << metric << ',' << opt(e.point)
           << ',' << (e.ci ? num(e.ci->lo) : "") << ',' << (e.ci ? num(e.ci->hi) : "") << '\n';
    };
    for (const auto& r : runs) {
        for (const auto& l : r.leads) {
            row(r, l, "", "auroc", l.auroc);
            for (const auto& t : l.thresholds) {
                const auto ts = num(t.threshold);
                for (const auto& [kind, e] : t.values) {
                    row(r, l, ts, metrics::to_string(kind), e);
                }
                const std::pair<const char*, std::size_t> counts[] = {
                    {"tp", t.counts.tp}, {"fp", t.counts.fp}, {"tn", t.counts.tn}, {"fn", t.counts.fn}};
                for (const auto& [name, v] : counts) {
                    row(r, l, ts, name, {static_cast<double>(v), std::nullopt});
                }
            }
        }
    }
    return os.str();
}

std::string odds_csv(const metrics::OddsTable& t)
{
    std::ostringstream os;
    os << "label,nonpvc_count,pvc_count,odds\n";
    for (const auto& r : t.rows) {
        os << r.label << ',' << r.pred_nonpvc << ',' << r.pred_pvc << ',' << (r.infinite ? "inf" : num(r.odds, "%.3f"))
           << '\n';
    }
    return os.str();
}

std::string roc_csv(const std::vector<RunResult>& runs, std::size_t lead)
{
    std::ostringstream os;
    os << "run,threshold,fpr,tpr\n";
    for (const auto& r : runs) {
        for (const auto& l : r.leads) {
            if (l.lead != lead) {
                continue;
            }
            for (const auto& p : l.roc) {
                os << r.name << ',' << num(p.threshold, "%.17g") << ',' << num(p.fpr, "%.17g") << ','
                   << num(p.tpr, "%.17g") << '\n';
            }
        }
    }
    return os.str();
}

std::string scores_csv(const std::vector<RunResult>& runs)
{
    std::ostringstream os;
    os << "run,dataset,lead,record,patient,center_200hz,symbol,label,score\n";
    for (const auto& r : runs) {
        for (const auto& l : r.leads) {
            for (std::size_t i = 0; i < l.scored.size(); ++i) {
                os << r.name << ',' << l.dataset_id << ',' << l.lead << ',' << l.keys[i].record_id << ','
                   << l.patients[i] << ',' << l.keys[i].center << ',' << l.symbols[i] << ',' << l.scored.labels[i]
                   << ',' << num(l.scored.scores[i], "%.17g") << '\n';
            }
        }
    }
    return os.str();
}

std::string training_curve_csv(const std::vector<RunResult>& runs)
{
    std::ostringstream os;
    os << "run,epoch,train_loss,val_loss,val_auroc\n";
    for (const auto& r : runs) {
        for (const auto& e : r.epochs) {
            os << r.name << ',' << e.epoch << ',' << num(e.train_loss) << ',' << opt(e.val_loss) << ','
               << opt(e.val_auroc) << '\n';
        }
    }
    return os.str();
}

std::string source_curve_csv(const harness::CurveResult& c)
{
    std::ostringstream os;
    os << "strategy,source,n,repeat,lead,auroc,status\n";
    for (const auto& r : c.rows) {
        if (r.skipped || r.auroc.empty()) {
            os << r.strategy << ',' << r.source << ',' << r.n << ',' << r.repeat << ",,," << (r.skipped ? "skipped" : "no_auroc")
               << '\n';
            continue;
        }
        for (const auto& [lead, a] : r.auroc) {
            os << r.strategy << ',' << r.source << ',' << r.n << ',' << r.repeat << ',' << lead << ',' << num(a)
               << ",ok\n";
        }
    }
    return os.str();
}

std::string census_table(const std::vector<data::Census>& census)
{
    std::ostringstream os;
    char buf[256];
    std::snprintf(buf, sizeof buf, "%-16s %8s %8s %8s %6s %10s %10s %10s %10s\n", "dataset", "records", "patients",
                  "channels", "fs", "non_pvc", "pvc", "unlabeled", "examples");
    os << buf;
    for (const auto& c : census) {
        std::snprintf(buf, sizeof buf, "%-16s %8zu %8zu %8zu %6g %10zu %10zu %10zu %10zu\n", c.dataset_id.c_str(),
                      c.records, c.patients, c.channels, c.fs, c.non_pvc, c.pvc, c.unlabeled, c.examples);
        os << buf;
    }
    return os.str();
}

json report_json(const Report& r)
{
    json census = json::array();
    for (const auto& c : r.census) {
        census.push_back({{"dataset", c.dataset_id},
                          {"records", c.records},
                          {"patients", c.patients},
                          {"channels", c.channels},
                          {"fs", c.fs},
                          {"non_pvc", c.non_pvc},
                          {"pvc", c.pvc},
                          {"unlabeled", c.unlabeled},
                          {"examples", c.examples}});
    }
    json runs = json::array();
    json timing = json::object();
    for (const auto& run : r.runs) {
        runs.push_back(run_json(run));
        timing[run.name] = run.wall_seconds;
    }
    json comparisons = json::array();
    for (const auto& c : r.comparisons) {
        json j = {{"run_a", c.run_a}, {"run_b", c.run_b}, {"lead", c.lead}, {"significant", c.significant}};
        if (c.result) {
            j["auc_a"] = c.result->auc_a;
            j["auc_b"] = c.result->auc_b;
            j["variance_of_difference"] = c.result->variance_of_difference;
            j["z"] = c.result->z;
            j["p"] = c.result->p;
        }
        if (!c.error.empty()) {
            j["error"] = c.error;
        }
        comparisons.push_back(std::move(j));
    }
    json j = {{"command", r.command},
              {"config", to_json(r.config)},
              {"census", census},
              {"runs", runs},
              {"comparisons", comparisons},
              {"scores_file", "scores.csv"},
              {"method",
               {{"ci", "percentile bootstrap"},
                {"bootstrap_unit", r.config.bootstrap.cluster_by_patient ? "patient" : "beat"},
                {"multi_source_allocation", r.config.curve.pooled_uniform ? "pooled_uniform" : "even"},
                {"early_stopping", "validation AUROC, patient-level split"}}},
              {"timestamp", {{"started_at", r.started_at}, {"wall_seconds", r.wall_seconds}, {"runs", timing}}}};
    if (r.curve) {
        json rows = json::array();
        for (const auto& row : r.curve->rows) {
            json a = json::object();
            for (const auto& [lead, v] : row.auroc) {
                a[std::to_string(lead)] = v;
            }
            rows.push_back({{"strategy", row.strategy},
                            {"source", row.source},
                            {"n", row.n},
                            {"repeat", row.repeat},
                            {"auroc", a},
                            {"skipped", row.skipped},
                            {"note", row.note}});
        }
        json points = json::array();
        for (const auto& p : r.curve->points) {
            json multi = json::object();
            json single = json::object();
            for (const auto& [lead, v] : p.multi) {
                multi[std::to_string(lead)] = v;
            }
            for (const auto& [lead, v] : p.single_median) {
                single[std::to_string(lead)] = v;
            }
            points.push_back({{"n", p.n}, {"multi", multi}, {"single_median", single}});
        }
        j["curve"] = {{"rows", rows}, {"points", points}};
    }
    return j;
}

void emit_report(const Report& r, const fs::path& out)
{
    std::error_code ec;
    fs::create_directories(out, ec);
    if (ec) {
        throw DataError("cannot create output directory " + out.string() + ": " + ec.message());
    }
    write_text(out / "report.json", report_json(r).dump(2) + "\n");
    write_text(out / "config.json", to_json(r.config).dump(2) + "\n");
    write_text(out / "scores.csv", scores_csv(r.runs));
    write_text(out / "training_curve.csv", training_curve_csv(r.runs));
    write_tables(r.runs, out);
    for (const auto lead : leads_of(r.runs)) {
        write_text(out / ("roc_" + std::to_string(lead) + ".svg"), roc_svg(r.runs, lead));
    }
    if (r.runs.size() > 1) {
        write_text(out / "ablation.svg", ablation_svg(r.runs));
    }
    if (r.curve) {
        write_text(out / "source_curve.csv", source_curve_csv(*r.curve));
        write_text(out / "source_curve.svg", source_curve_svg(*r.curve));
    }
}

void recompute_report(const fs::path& in, const fs::path& out)
{
    std::ifstream rj(in / "report.json");
    if (!rj) {
        throw DataError("no report.json in " + in.string());
    }
    json j;
    try {
        rj >> j;
    } catch (const json::exception& e) {
        throw DataError("malformed report.json: " + std::string(e.what()));
    }
    const auto config = config_from_json(j.at("config"));

    std::vector<RunResult> runs;
    std::map<std::string, std::size_t> run_index;
    for (const auto& jr : j.at("runs")) {
        RunResult r;
        r.name = jr.at("name").get<std::string>();
        r.holdout_id = jr.at("holdout").get<std::string>();
        r.odds_threshold = jr.at("odds_threshold").get<double>();
        r.config = config;
        run_index[r.name] = runs.size();
        runs.push_back(std::move(r));
    }
    std::map<std::string, std::vector<double>> thresholds;
    for (const auto& jr : j.at("runs")) {
        thresholds[jr.at("name").get<std::string>()] = jr.at("thresholds").get<std::vector<double>>();
    }

    std::ifstream sc(in / "scores.csv");
    if (!sc) {
        throw DataError("no scores.csv in " + in.string());
    }
    std::string line;
    std::getline(sc, line);
    while (std::getline(sc, line)) {
        if (line.empty()) {
            continue;
        }
        const auto f = split_csv(line);
        if (f.size() != 9) {
            throw DataError("scores.csv: malformed row '" + line + "'");
        }
        const auto it = run_index.find(f[0]);
        if (it == run_index.end()) {
            throw DataError("scores.csv: unknown run '" + f[0] + "'");
        }
        auto& r = runs[it->second];
        const auto lead = static_cast<std::size_t>(std::stoull(f[2]));
        auto li = std::find_if(r.leads.begin(), r.leads.end(), [&](const auto& l) { return l.lead == lead; });
        if (li == r.leads.end()) {
            r.leads.emplace_back();
            li = std::prev(r.leads.end());
            li->lead = lead;
            li->dataset_id = f[1];
        }
        li->keys.push_back({f[3], std::stoll(f[5])});
        li->patients.push_back(f[4]);
        li->symbols.push_back(f[6].empty() ? '\0' : f[6][0]);
        li->scored.labels.push_back(std::stoi(f[7]));
        li->scored.scores.push_back(std::stod(f[8]));
    }

    for (auto& r : runs) {
        const harness::EvalSettings settings{thresholds.at(r.name), config.bootstrap};
        std::vector<int> predicted;
        std::vector<char> symbols;
        for (auto& l : r.leads) {
            harness::summarize_lead(l, settings);
            for (std::size_t k = 0; k < l.scored.size(); ++k) {
                predicted.push_back(l.scored.scores[k] >= r.odds_threshold ? 1 : 0);
            }
            symbols.insert(symbols.end(), l.symbols.begin(), l.symbols.end());
        }
        r.odds = metrics::odds_table(predicted, symbols);
    }
    fs::create_directories(out);
    write_tables(runs, out);
    for (const auto lead : leads_of(runs)) {
        write_text(out / ("roc_" + std::to_string(lead) + ".svg"), roc_svg(runs, lead));
    }
}

} // namespace upvc::report
