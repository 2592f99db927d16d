#pragma once

#include "rankprobe/corpus.hpp"
#include "rankprobe/run.hpp"

#include <cstddef>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace rankprobe {

enum class Gain {
    Linear,      ///< g(r) = r
    Exponential, ///< g(r) = 2^r - 1
};

std::string_view to_string(Gain g);

struct MetricConfig {
    std::vector<std::size_t> cutoffs{1, 5, 10};
    Gain gain = Gain::Linear;
    /// Half-width of the "similar" band in compare_runs, on the [0, 1] nDCG scale.
    double tie_band = 0.01;

    /// std::invalid_argument unless cutoffs are non-empty, positive and strictly increasing.
    void validate() const;
};

/// DCG@k / IDCG@k with log2(rank + 1) discounts. The ideal ranking sorts the row's
/// grades in descending order. UndefinedMetricError when the row has no positive grade.
double ndcg_at_k(const RankedList& ranked, const LabelMatrix::Row& qrels, std::size_t k, Gain gain = Gain::Linear);

struct QueryScore {
    QueryType qtype = QueryType::SingletonObject;
    /// One value in [0, 1] per cutoff.
    std::vector<double> ndcg;
};

struct MetricReport {
    std::string run_name;
    std::vector<std::size_t> cutoffs;
    Gain gain = Gain::Linear;
    std::map<std::string, QueryScore> per_query;
    /// Macro mean x 100, one per cutoff.
    std::vector<double> aggregate;
    /// Zero-positive queries, ascending id.
    std::vector<std::string> excluded;
    /// Macro mean x 100 per fine type, one per cutoff.
    std::optional<std::map<QueryType, std::vector<double>>> by_type;

    /// Position of k in cutoffs; std::invalid_argument when absent.
    [[nodiscard]] std::size_t cutoff_index(std::size_t k) const;
    [[nodiscard]] double aggregate_at(std::size_t k) const { return aggregate[cutoff_index(k)]; }
};

/// Excludes zero-positive queries, scores the rest and macro-averages. Queries in the run
/// that are not in the dataset are ignored. CoverageError listing every included query
/// the run lacks.
MetricReport evaluate_run(const Run& run, const Dataset& d, const MetricConfig& cfg, bool with_by_type = false);

enum class Grouping { Fine8, Coarse5 };

struct TypeRow {
    std::string group;
    std::size_t queries = 0;
    /// Mean nDCG x 100 at the requested cutoff.
    double ndcg = 0.0;
};

/// One row per group with at least one scored query, in canonical type order.
std::vector<TypeRow> by_type_report(const MetricReport& report, Grouping grouping, std::size_t cutoff = 10);

struct ComparisonRow {
    std::string group;
    std::size_t queries = 0;
    double mean_a = 0.0; ///< x 100
    double mean_b = 0.0; ///< x 100
    double a_better = 0.0;
    double b_better = 0.0;
    double similar = 0.0;
};

struct Comparison {
    std::string run_a;
    std::string run_b;
    std::size_t cutoff = 10;
    double tie_band = 0.01;
    /// Per group rows followed by an "All" row.
    std::vector<ComparisonRow> rows;
};

/// Per-query comparison at `cutoff`: a > b when nDCG_a - nDCG_b > tie_band, a < b when
/// nDCG_b - nDCG_a > tie_band, similar otherwise. IntegrityError when the two reports
/// score different query sets.
Comparison compare_runs(const MetricReport& a, const MetricReport& b, double tie_band, Grouping grouping = Grouping::Coarse5,
                        std::size_t cutoff = 10);

void print_report(const MetricReport& report, std::ostream& out);
/// One JSON object per query, then one per aggregate/type row.
void write_report_records(const MetricReport& report, std::ostream& out);
void print_type_table(const std::vector<TypeRow>& rows, std::size_t cutoff, std::ostream& out);
void print_comparison(const Comparison& cmp, std::ostream& out);
void write_comparison_records(const Comparison& cmp, std::ostream& out);

} // namespace rankprobe
