#include "wsiseg/metrics.hpp"

#include "wsiseg/errors.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numeric>

namespace wsiseg {

namespace fs = std::filesystem;
using nlohmann::json;

Confusion confusion_counts(const BinaryMask& pred, const BinaryMask& truth) {
    if (!pred.same_dims(truth)) {
        throw ConsistencyError("prediction is " + std::to_string(pred.width) + "x" + std::to_string(pred.height) +
                               " but truth is " + std::to_string(truth.width) + "x" + std::to_string(truth.height));
    }
    Confusion c;
    for (std::size_t i = 0; i < pred.bits.size(); ++i) {
        const bool p = pred.bits[i] != 0;
        const bool t = truth.bits[i] != 0;
        if (p && t) ++c.tp;
        else if (p) ++c.fp;
        else if (t) ++c.fn;
        else ++c.tn;
    }
    return c;
}

PrfScores prf(std::int64_t tp, std::int64_t fp, std::int64_t fn) {
    if (tp < 0 || fp < 0 || fn < 0) throw InputError("confusion counts must be non-negative");
    PrfScores s;
    if (tp + fp > 0) s.precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
    else s.degenerate = true;
    if (tp + fn > 0) s.recall = static_cast<double>(tp) / static_cast<double>(tp + fn);
    else s.degenerate = true;
    if (s.precision + s.recall > 0.0) s.f1 = 2.0 * s.precision * s.recall / (s.precision + s.recall);
    else s.degenerate = true;
    return s;
}

MetricsReport overlap_metrics(const BinaryMask& pred, const BinaryMask& truth) {
    const Confusion c = confusion_counts(pred, truth);
    MetricsReport r;
    r.tp = c.tp;
    r.fp = c.fp;
    r.fn = c.fn;
    r.tn = c.tn;
    const std::int64_t den = 2 * c.tp + c.fp + c.fn;
    if (den == 0) {
        r.both_empty = true;
        r.dsc = 1.0;
        r.iou = 1.0;
    } else {
        r.dsc = 2.0 * static_cast<double>(c.tp) / static_cast<double>(den);
        r.iou = static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fp + c.fn);
    }
    const PrfScores s = prf(c.tp, c.fp, c.fn);
    r.precision = s.precision;
    r.recall = s.recall;
    r.f1 = s.f1;
    r.prf_degenerate = s.degenerate;
    return r;
}

MetricsReport evaluate_masks(const BinaryMask& pred, const BinaryMask& truth, std::string slide_id) {
    MetricsReport r = overlap_metrics(pred, truth);
    r.slide_id = std::move(slide_id);
    r.avg_hausdorff = average_hausdorff(pred, truth);
    return r;
}

namespace {

// 1-D squared distance transform of a sampled function (lower envelope of parabolas).
void dt1d(const double* f, double* d, int n, std::vector<int>& v, std::vector<double>& z) {
    constexpr double inf = std::numeric_limits<double>::infinity();
    int k = -1;
    for (int q = 0; q < n; ++q) {
        if (f[q] == inf) continue;
        if (k < 0) {
            k = 0;
            v[0] = q;
            z[0] = -inf;
            z[1] = inf;
            continue;
        }
        double s;
        while (true) {
            const int p = v[static_cast<std::size_t>(k)];
            s = ((f[q] + static_cast<double>(q) * q) - (f[p] + static_cast<double>(p) * p)) / (2.0 * (q - p));
            if (s <= z[static_cast<std::size_t>(k)]) {
                if (--k < 0) break;
            } else {
                break;
            }
        }
        ++k;
        v[static_cast<std::size_t>(k)] = q;
        z[static_cast<std::size_t>(k)] = k == 0 ? -inf : s;
        z[static_cast<std::size_t>(k) + 1] = inf;
    }
    if (k < 0) {
        std::fill(d, d + n, inf);
        return;
    }
    k = 0;
    for (int q = 0; q < n; ++q) {
        while (z[static_cast<std::size_t>(k) + 1] < q) ++k;
        const int p = v[static_cast<std::size_t>(k)];
        d[q] = static_cast<double>(q - p) * (q - p) + f[p];
    }
}

}  // namespace

std::vector<double> squared_distance_transform(const BinaryMask& mask) {
    constexpr double inf = std::numeric_limits<double>::infinity();
    const int w = mask.width;
    const int h = mask.height;
    std::vector<double> grid(static_cast<std::size_t>(w) * h);
    for (std::size_t i = 0; i < grid.size(); ++i) grid[i] = mask.bits[i] ? 0.0 : inf;

    const int n = std::max(w, h);
    std::vector<double> f(static_cast<std::size_t>(n));
    std::vector<double> d(static_cast<std::size_t>(n));
    std::vector<int> v(static_cast<std::size_t>(n));
    std::vector<double> z(static_cast<std::size_t>(n) + 1);
    for (int x = 0; x < w; ++x) {
        for (int y = 0; y < h; ++y) f[static_cast<std::size_t>(y)] = grid[static_cast<std::size_t>(y) * w + x];
        dt1d(f.data(), d.data(), h, v, z);
        for (int y = 0; y < h; ++y) grid[static_cast<std::size_t>(y) * w + x] = d[static_cast<std::size_t>(y)];
    }
    for (int y = 0; y < h; ++y) {
        double* row = grid.data() + static_cast<std::size_t>(y) * w;
        std::copy(row, row + w, f.begin());
        dt1d(f.data(), row, w, v, z);
    }
    return grid;
}

std::optional<double> average_hausdorff(const BinaryMask& a, const BinaryMask& b) {
    if (!a.same_dims(b)) throw ConsistencyError("masks differ in size");
    const std::size_t na = a.count();
    const std::size_t nb = b.count();
    if (na == 0 || nb == 0) return std::nullopt;
    auto directed = [](const BinaryMask& from, const BinaryMask& to, std::size_t n_from) {
        const std::vector<double> dt = squared_distance_transform(to);
        double sum = 0.0;
        for (std::size_t i = 0; i < from.bits.size(); ++i) {
            if (from.bits[i]) sum += std::sqrt(dt[i]);
        }
        return sum / static_cast<double>(n_from);
    };
    return (directed(a, b, na) + directed(b, a, nb)) / 2.0;
}

// ---------------------------------------------------------------------------

std::string_view to_string(WilcoxonMethod m) { return m == WilcoxonMethod::Exact ? "EXACT" : "NORMAL_APPROX"; }

std::string_view to_string(Alternative a) {
    switch (a) {
        case Alternative::TwoSided: return "two-sided";
        case Alternative::Greater: return "greater";
        case Alternative::Less: return "less";
    }
    return "two-sided";
}

namespace {

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

}  // namespace

WilcoxonResult wilcoxon_signed_rank(std::span<const double> a, std::span<const double> b, Alternative alternative) {
    if (a.size() != b.size()) throw InputError("paired samples differ in length");
    if (a.empty()) throw InputError("paired samples are empty");

    std::vector<double> diffs;
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (!std::isfinite(a[i]) || !std::isfinite(b[i])) throw NumericError("non-finite sample value");
        const double d = a[i] - b[i];
        if (d != 0.0) diffs.push_back(d);
    }
    if (diffs.empty()) throw DegenerateError("all paired differences are zero");
    const int n = static_cast<int>(diffs.size());

    std::vector<std::size_t> order(diffs.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](std::size_t i, std::size_t j) { return std::abs(diffs[i]) < std::abs(diffs[j]); });

    // Doubled mid-ranks are integers, which keeps the exact distribution on an integer lattice.
    std::vector<int> rank2(diffs.size());
    double tie_term = 0.0;
    for (std::size_t i = 0; i < order.size();) {
        std::size_t j = i;
        while (j + 1 < order.size() && std::abs(diffs[order[j + 1]]) == std::abs(diffs[order[i]])) ++j;
        const int r2 = static_cast<int>(i + 1 + j + 1);
        for (std::size_t k = i; k <= j; ++k) rank2[order[k]] = r2;
        const double t = static_cast<double>(j - i + 1);
        tie_term += t * t * t - t;
        i = j + 1;
    }

    int t_plus2 = 0;
    for (std::size_t i = 0; i < diffs.size(); ++i) {
        if (diffs[i] > 0) t_plus2 += rank2[i];
    }
    const int total2 = n * (n + 1);
    const int t_minus2 = total2 - t_plus2;

    WilcoxonResult r;
    r.n_effective = n;
    r.t_plus = t_plus2 / 2.0;
    r.w_statistic = std::min(t_plus2, t_minus2) / 2.0;
    r.alternative = alternative;

    if (n <= kWilcoxonExactMaxN) {
        r.method = WilcoxonMethod::Exact;
        std::vector<double> count(static_cast<std::size_t>(total2) + 1, 0.0);
        count[0] = 1.0;
        int reach = 0;
        for (int r2 : rank2) {
            for (int s = reach; s >= 0; --s) {
                if (count[static_cast<std::size_t>(s)] != 0.0) count[static_cast<std::size_t>(s + r2)] += count[static_cast<std::size_t>(s)];
            }
            reach += r2;
        }
        const double all = std::ldexp(1.0, n);
        auto cdf = [&](int upto) {
            double c = 0.0;
            for (int s = 0; s <= upto; ++s) c += count[static_cast<std::size_t>(s)];
            return c / all;
        };
        switch (alternative) {
            case Alternative::TwoSided: r.p_value = std::min(1.0, 2.0 * cdf(std::min(t_plus2, t_minus2))); break;
            case Alternative::Greater: r.p_value = cdf(t_minus2); break;  // P(T+ >= t) = P(T- <= t-) by symmetry
            case Alternative::Less: r.p_value = cdf(t_plus2); break;
        }
    } else {
        r.method = WilcoxonMethod::NormalApprox;
        const double mean = n * (n + 1) / 4.0;
        const double var = n * (n + 1.0) * (2.0 * n + 1.0) / 24.0 - tie_term / 48.0;
        const double sd = std::sqrt(var);
        const double t = r.t_plus;
        switch (alternative) {
            case Alternative::TwoSided: {
                const double z = std::max(0.0, std::abs(t - mean) - 0.5) / sd;
                r.p_value = std::min(1.0, 2.0 * (1.0 - normal_cdf(z)));
                break;
            }
            case Alternative::Greater: r.p_value = 1.0 - normal_cdf((t - mean - 0.5) / sd); break;
            case Alternative::Less: r.p_value = normal_cdf((t - mean + 0.5) / sd); break;
        }
    }
    return r;
}

// ---------------------------------------------------------------------------

SummaryStats summarize(std::span<const double> values) {
    if (values.empty()) throw InputError("cannot summarise an empty sample");
    std::vector<double> v(values.begin(), values.end());
    std::sort(v.begin(), v.end());
    auto quantile = [&](double p) {
        const double h = (static_cast<double>(v.size()) - 1.0) * p;
        const auto lo = static_cast<std::size_t>(std::floor(h));
        const std::size_t hi = std::min(lo + 1, v.size() - 1);
        return v[lo] + (h - static_cast<double>(lo)) * (v[hi] - v[lo]);
    };
    SummaryStats s;
    s.n = v.size();
    s.mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
    s.median = quantile(0.5);
    s.q1 = quantile(0.25);
    s.q3 = quantile(0.75);
    s.min = v.front();
    s.max = v.back();
    return s;
}

CohortSummary aggregate(std::span<const MetricsReport> reports) {
    if (reports.empty()) throw InputError("cannot aggregate an empty cohort");
    auto column = [&](auto member) {
        std::vector<double> v;
        for (const MetricsReport& r : reports) v.push_back(r.*member);
        return summarize(v);
    };
    CohortSummary c;
    c.slides = reports.size();
    c.dsc = column(&MetricsReport::dsc);
    c.iou = column(&MetricsReport::iou);
    c.precision = column(&MetricsReport::precision);
    c.recall = column(&MetricsReport::recall);
    c.f1 = column(&MetricsReport::f1);
    std::vector<double> hd;
    for (const MetricsReport& r : reports) {
        if (r.avg_hausdorff) hd.push_back(*r.avg_hausdorff);
    }
    if (!hd.empty()) c.avg_hausdorff = summarize(hd);
    return c;
}

namespace {

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::ofstream open_out(const fs::path& path) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path);
    if (!out) throw InputError("cannot write " + path.string());
    return out;
}

}  // namespace

void write_report_json(const fs::path& path, const MetricsReport& r) {
    json j = {{"slide_id", r.slide_id}, {"dsc", r.dsc},   {"iou", r.iou},   {"precision", r.precision},
              {"recall", r.recall},     {"f1", r.f1},     {"tp", r.tp},     {"fp", r.fp},
              {"fn", r.fn},             {"tn", r.tn},     {"both_empty", r.both_empty},
              {"prf_degenerate", r.prf_degenerate}};
    j["avg_hausdorff"] = r.avg_hausdorff ? json(*r.avg_hausdorff) : json(nullptr);
    open_out(path) << j.dump(2) << '\n';
}

MetricsReport read_report_json(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open " + path.string());
    try {
        const json j = json::parse(in);
        MetricsReport r;
        r.slide_id = j.at("slide_id").get<std::string>();
        r.dsc = j.at("dsc").get<double>();
        r.iou = j.at("iou").get<double>();
        r.precision = j.at("precision").get<double>();
        r.recall = j.at("recall").get<double>();
        r.f1 = j.at("f1").get<double>();
        r.tp = j.at("tp").get<std::int64_t>();
        r.fp = j.at("fp").get<std::int64_t>();
        r.fn = j.at("fn").get<std::int64_t>();
        r.tn = j.at("tn").get<std::int64_t>();
        r.both_empty = j.value("both_empty", false);
        r.prf_degenerate = j.value("prf_degenerate", false);
        if (j.contains("avg_hausdorff") && !j["avg_hausdorff"].is_null()) r.avg_hausdorff = j["avg_hausdorff"].get<double>();
        return r;
    } catch (const json::exception& e) {
        throw InputError("malformed metrics report " + path.string() + ": " + e.what());
    }
}

void write_reports_csv(const fs::path& path, std::span<const MetricsReport> reports) {
    auto out = open_out(path);
    out << "slide_id,dsc,iou,precision,recall,f1,avg_hausdorff,tp,fp,fn,tn\n";
    for (const MetricsReport& r : reports) {
        out << r.slide_id << ',' << fmt(r.dsc) << ',' << fmt(r.iou) << ',' << fmt(r.precision) << ','
            << fmt(r.recall) << ',' << fmt(r.f1) << ',' << (r.avg_hausdorff ? fmt(*r.avg_hausdorff) : "") << ','
            << r.tp << ',' << r.fp << ',' << r.fn << ',' << r.tn << '\n';
    }
}

void write_summary_csv(const fs::path& path, const CohortSummary& s) {
    auto out = open_out(path);
    out << "metric,n,mean,median,q1,q3,min,max\n";
    auto row = [&](const char* name, const SummaryStats& st) {
        out << name << ',' << st.n << ',' << fmt(st.mean) << ',' << fmt(st.median) << ',' << fmt(st.q1) << ','
            << fmt(st.q3) << ',' << fmt(st.min) << ',' << fmt(st.max) << '\n';
    };
    row("dsc", s.dsc);
    row("iou", s.iou);
    row("precision", s.precision);
    row("recall", s.recall);
    row("f1", s.f1);
    if (s.avg_hausdorff) row("avg_hausdorff", *s.avg_hausdorff);
}

}  // namespace wsiseg
