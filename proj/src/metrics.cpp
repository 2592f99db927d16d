#include "rankprobe/metrics.hpp"

#include "rankprobe/error.hpp"

#include <fmt/format.h>
#include <fmt/ostream.h>
#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <ostream>
#include <stdexcept>

namespace rankprobe {
namespace {

double gain_of(int grade, Gain g) {
    return g == Gain::Linear ? static_cast<double>(grade) : std::exp2(static_cast<double>(grade)) - 1.0;
}

double mean(const std::vector<double>& xs) {
    if (xs.empty()) return 0.0;
    double s = 0.0;
    for (double x : xs) s += x;
    return s / static_cast<double>(xs.size());
}

std::string group_name(QueryType t, Grouping g) {
    return std::string(g == Grouping::Fine8 ? to_string(t) : to_string(coarse_group(t)));
}

std::vector<std::string> group_order(Grouping g) {
    std::vector<std::string> names;
    if (g == Grouping::Fine8) {
        for (auto t : kAllQueryTypes) names.emplace_back(to_string(t));
    } else {
        for (auto t : kAllQueryGroups) names.emplace_back(to_string(t));
    }
    return names;
}

} // namespace

std::string_view to_string(Gain g) { return g == Gain::Linear ? "linear" : "exponential"; }

void MetricConfig::validate() const {
    if (cutoffs.empty()) throw std::invalid_argument("at least one cutoff is required");
    for (std::size_t i = 0; i < cutoffs.size(); ++i) {
        if (cutoffs[i] == 0) throw std::invalid_argument("cutoffs must be positive");
        if (i > 0 && cutoffs[i] <= cutoffs[i - 1]) throw std::invalid_argument("cutoffs must be strictly increasing");
    }
    if (!(tie_band >= 0.0)) throw std::invalid_argument("tie band must be >= 0");
}

double ndcg_at_k(const RankedList& ranked, const LabelMatrix::Row& qrels, std::size_t k, Gain gain) {
    if (k == 0) throw std::invalid_argument("ndcg: k must be >= 1");
    std::vector<int> grades;
    grades.reserve(qrels.size());
    for (const auto& [pid, g] : qrels) {
        if (g.relevant()) grades.push_back(g.value());
    }
    if (grades.empty()) {
        throw UndefinedMetricError("nDCG undefined for query '" + ranked.query_id + "': no relevant passage");
    }
    std::sort(grades.begin(), grades.end(), std::greater<>());

    double ideal = 0.0;
    for (std::size_t i = 0; i < std::min(k, grades.size()); ++i) {
        ideal += gain_of(grades[i], gain) / std::log2(static_cast<double>(i) + 2.0);
    }
    double dcg = 0.0;
    for (std::size_t i = 0; i < std::min(k, ranked.entries.size()); ++i) {
        const auto it = qrels.find(ranked.entries[i].passage_id);
        if (it == qrels.end()) continue;
        dcg += gain_of(it->second.value(), gain) / std::log2(static_cast<double>(i) + 2.0);
    }
    return dcg / ideal;
}

std::size_t MetricReport::cutoff_index(std::size_t k) const {
    const auto it = std::find(cutoffs.begin(), cutoffs.end(), k);
    if (it == cutoffs.end()) throw std::invalid_argument(fmt::format("cutoff {} was not evaluated", k));
    return static_cast<std::size_t>(it - cutoffs.begin());
}

MetricReport evaluate_run(const Run& run, const Dataset& d, const MetricConfig& cfg, bool with_by_type) {
    cfg.validate();
    MetricReport report;
    report.run_name = run.name;
    report.cutoffs = cfg.cutoffs;
    report.gain = cfg.gain;
    report.excluded = zero_positive_queries(d);

    std::vector<std::string> missing;
    for (const auto& q : d.queries()) {
        const auto& row = d.labels().row(q.id);
        if (row.empty()) continue;
        const RankedList* list = run.find(q.id);
        if (!list) {
            missing.push_back(q.id);
            continue;
        }
        QueryScore score{q.qtype, {}};
        for (auto k : cfg.cutoffs) score.ndcg.push_back(ndcg_at_k(*list, row, k, cfg.gain));
        report.per_query.emplace(q.id, std::move(score));
    }
    if (!missing.empty()) {
        std::sort(missing.begin(), missing.end());
        throw CoverageError(fmt::format("run '{}' lacks {} queries: {}", run.name, missing.size(), fmt::join(missing, ", ")));
    }

    const std::size_t nc = cfg.cutoffs.size();
    std::vector<std::vector<double>> columns(nc);
    std::map<QueryType, std::vector<std::vector<double>>> typed;
    for (const auto& [qid, s] : report.per_query) {
        for (std::size_t c = 0; c < nc; ++c) columns[c].push_back(s.ndcg[c]);
        if (with_by_type) {
            auto& cols = typed[s.qtype];
            cols.resize(nc);
            for (std::size_t c = 0; c < nc; ++c) cols[c].push_back(s.ndcg[c]);
        }
    }
    for (const auto& col : columns) report.aggregate.push_back(100.0 * mean(col));
    if (with_by_type) {
        report.by_type.emplace();
        for (const auto& [t, cols] : typed) {
            auto& agg = (*report.by_type)[t];
            for (const auto& col : cols) agg.push_back(100.0 * mean(col));
        }
    }
    return report;
}

std::vector<TypeRow> by_type_report(const MetricReport& report, Grouping grouping, std::size_t cutoff) {
    const std::size_t c = report.cutoff_index(cutoff);
    std::map<std::string, std::vector<double>> groups;
    for (const auto& [qid, s] : report.per_query) groups[group_name(s.qtype, grouping)].push_back(s.ndcg[c]);
    std::vector<TypeRow> rows;
    for (const auto& name : group_order(grouping)) {
        const auto it = groups.find(name);
        if (it == groups.end()) continue;
        rows.push_back({name, it->second.size(), 100.0 * mean(it->second)});
    }
    return rows;
}

Comparison compare_runs(const MetricReport& a, const MetricReport& b, double tie_band, Grouping grouping,
                        std::size_t cutoff) {
    const std::size_t ca = a.cutoff_index(cutoff);
    const std::size_t cb = b.cutoff_index(cutoff);
    bool same = a.per_query.size() == b.per_query.size();
    for (auto ia = a.per_query.begin(), ib = b.per_query.begin(); same && ia != a.per_query.end(); ++ia, ++ib) {
        same = ia->first == ib->first;
    }
    if (!same) throw IntegrityError("compare_runs: the reports cover different query sets");

    struct Acc {
        std::size_t n = 0, gt = 0, lt = 0, eq = 0;
        double sa = 0.0, sb = 0.0;
    };
    std::map<std::string, Acc> groups;
    Acc all;
    for (const auto& [qid, sa] : a.per_query) {
        const double va = sa.ndcg[ca];
        const double vb = b.per_query.at(qid).ndcg[cb];
        for (Acc* acc : {&groups[group_name(sa.qtype, grouping)], &all}) {
            ++acc->n;
            acc->sa += va;
            acc->sb += vb;
            if (va - vb > tie_band) {
                ++acc->gt;
            } else if (vb - va > tie_band) {
                ++acc->lt;
            } else {
                ++acc->eq;
            }
        }
    }

    auto to_row = [](std::string name, const Acc& acc) {
        const double n = static_cast<double>(acc.n);
        return ComparisonRow{std::move(name), acc.n, 100.0 * acc.sa / n, 100.0 * acc.sb / n,
                             static_cast<double>(acc.gt) / n, static_cast<double>(acc.lt) / n,
                             static_cast<double>(acc.eq) / n};
    };
    Comparison cmp{a.run_name, b.run_name, cutoff, tie_band, {}};
    for (const auto& name : group_order(grouping)) {
        const auto it = groups.find(name);
        if (it != groups.end()) cmp.rows.push_back(to_row(name, it->second));
    }
    if (all.n > 0) cmp.rows.push_back(to_row("All", all));
    return cmp;
}

void print_report(const MetricReport& report, std::ostream& out) {
    fmt::print(out, "# run={} gain={} scored={} excluded={}\n", report.run_name, to_string(report.gain),
               report.per_query.size(), report.excluded.size());
    std::string header = fmt::format("{:<20}", "");
    std::string line = fmt::format("{:<20}", report.run_name);
    for (std::size_t c = 0; c < report.cutoffs.size(); ++c) {
        header += fmt::format(" {:>9}", fmt::format("nDCG@{}", report.cutoffs[c]));
        line += fmt::format(" {:>9.2f}", report.aggregate[c]);
    }
    fmt::print(out, "{}\n{}\n", header, line);
    if (report.by_type) {
        for (const auto& [t, agg] : *report.by_type) {
            std::string row = fmt::format("  {:<18}", to_string(t));
            for (double v : agg) row += fmt::format(" {:>9.2f}", v);
            fmt::print(out, "{}\n", row);
        }
    }
}

void write_report_records(const MetricReport& report, std::ostream& out) {
    using nlohmann::json;
    auto cut_object = [&](const std::vector<double>& values) {
        json obj = json::object();
        for (std::size_t c = 0; c < report.cutoffs.size(); ++c) obj[fmt::format("ndcg@{}", report.cutoffs[c])] = values[c];
        return obj;
    };
    for (const auto& [qid, s] : report.per_query) {
        out << json{{"record", "query"}, {"query_id", qid}, {"qtype", to_string(s.qtype)}, {"scores", cut_object(s.ndcg)}}
                   .dump()
            << '\n';
    }
    for (const auto& qid : report.excluded) out << json{{"record", "excluded"}, {"query_id", qid}}.dump() << '\n';
    if (report.by_type) {
        for (const auto& [t, agg] : *report.by_type) {
            out << json{{"record", "type"}, {"qtype", to_string(t)}, {"scores", cut_object(agg)}}.dump() << '\n';
        }
    }
    out << json{{"record", "aggregate"}, {"run", report.run_name}, {"gain", to_string(report.gain)},
                {"scored", report.per_query.size()}, {"scores", cut_object(report.aggregate)}}
               .dump()
        << '\n';
}

void print_type_table(const std::vector<TypeRow>& rows, std::size_t cutoff, std::ostream& out) {
    fmt::print(out, "{:<18} {:>7} {:>9}\n", "", "queries", fmt::format("nDCG@{}", cutoff));
    for (const auto& r : rows) fmt::print(out, "{:<18} {:>7} {:>9.2f}\n", r.group, r.queries, r.ndcg);
}

void print_comparison(const Comparison& cmp, std::ostream& out) {
    fmt::print(out, "# A={} B={} cutoff={} tie_band={}\n", cmp.run_a, cmp.run_b, cmp.cutoff, cmp.tie_band);
    fmt::print(out, "{:<18} {:>7} {:>9} {:>9} {:>6} {:>6} {:>6}\n", "", "queries", "A", "B", "A>B", "A<B", "A=B");
    for (const auto& r : cmp.rows) {
        fmt::print(out, "{:<18} {:>7} {:>9.2f} {:>9.2f} {:>5.0f}% {:>5.0f}% {:>5.0f}%\n", r.group, r.queries, r.mean_a,
                   r.mean_b, 100.0 * r.a_better, 100.0 * r.b_better, 100.0 * r.similar);
    }
}

void write_comparison_records(const Comparison& cmp, std::ostream& out) {
    using nlohmann::json;
    for (const auto& r : cmp.rows) {
        out << json{{"group", r.group},       {"queries", r.queries},   {"mean_a", r.mean_a},
                    {"mean_b", r.mean_b},     {"a_better", r.a_better}, {"b_better", r.b_better},
                    {"similar", r.similar},   {"cutoff", cmp.cutoff},   {"tie_band", cmp.tie_band},
                    {"run_a", cmp.run_a},     {"run_b", cmp.run_b}}
                   .dump()
            << '\n';
    }
}

} // namespace rankprobe
