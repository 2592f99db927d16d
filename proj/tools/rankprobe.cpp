// rankprobe: command-line front end for dataset checks, dense and BM25 retrieval,
// graded nDCG evaluation, error worksheets and training-query generation.
//
// Exit codes: 0 success, 1 runtime error, 2 usage error. Diagnostics go to stderr;
// reports go to stdout or the requested files. Every invocation writes a JSON
// metadata sidecar (resolved configuration, its hash, version, timestamps).

#include "rankprobe/analysis.hpp"
#include "rankprobe/corpus.hpp"
#include "rankprobe/datagen.hpp"
#include "rankprobe/embedding.hpp"
#include "rankprobe/error.hpp"
#include "rankprobe/lexical.hpp"
#include "rankprobe/metrics.hpp"
#include "rankprobe/retrieval.hpp"
#include "rankprobe/run.hpp"
#include "rankprobe/text.hpp"
#include "rankprobe/tokenizer.hpp"

#include <CLI11.hpp>
#include <fmt/format.h>
#include <fmt/ostream.h>
#include <json.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using namespace rankprobe;

namespace {

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

std::string utc_now() {
    const auto now = std::chrono::system_clock::now();
    const std::time_t t = std::chrono::system_clock::to_time_t(now);
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

std::string fnv1a_hex(std::string_view s) {
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return fmt::format("{:016x}", h);
}

// ---------------------------------------------------------------- shared options

struct DatasetOpts {
    std::string dir;
    std::string passages;
    std::string queries;
    std::string labels;
    std::string jsonl;
    std::string name;

    void add(CLI::App* app) {
        auto* group = app->add_option_group("dataset", "Dataset location");
        group->add_option("--dataset", dir, "Directory with passages.tsv, queries.tsv, labels.tsv");
        group->add_option("--passages", passages, "Passage file (id<TAB>text)");
        group->add_option("--queries", queries, "Query file (id<TAB>text<TAB>qtype)");
        group->add_option("--labels", labels, "Label file (query_id<TAB>passage_id<TAB>grade)");
        group->add_option("--dataset-jsonl", jsonl, "Single-file JSON-lines dataset");
        group->add_option("--dataset-name", name, "Dataset name recorded in outputs");
    }

    [[nodiscard]] bool given() const { return !dir.empty() || !passages.empty() || !jsonl.empty(); }

    void check() const {
        const int forms = int(!dir.empty()) + int(!passages.empty() || !queries.empty() || !labels.empty()) +
                          int(!jsonl.empty());
        if (forms == 0) throw UsageError("a dataset is required (--dataset, --passages/--queries/--labels or --dataset-jsonl)");
        if (forms > 1) throw UsageError("give exactly one of --dataset, --passages/--queries/--labels, --dataset-jsonl");
        if (!passages.empty() || !queries.empty() || !labels.empty()) {
            if (passages.empty() || queries.empty() || labels.empty()) {
                throw UsageError("--passages, --queries and --labels must be given together");
            }
        }
    }

    [[nodiscard]] std::vector<std::string> inputs() const {
        if (!jsonl.empty()) return {jsonl};
        if (!dir.empty()) {
            const auto p = DatasetPaths::in_directory(dir);
            return {p.passages.string(), p.queries.string(), p.labels.string()};
        }
        return {passages, queries, labels};
    }

    [[nodiscard]] Dataset load() const {
        std::optional<std::string> n;
        if (!name.empty()) n = name;
        if (!jsonl.empty()) return load_dataset_jsonl(jsonl, n);
        if (!dir.empty()) return load_dataset(DatasetPaths::in_directory(dir), n);
        return load_dataset({passages, queries, labels}, n);
    }
};

struct TokenizerOpts {
    std::string kind = "unigram";
    std::string dict;
    std::string passage_tokens;
    std::string query_tokens;

    void add(CLI::App* app) {
        app->add_option("--tokenizer", kind, "unigram | dictionary | pretokenized")
            ->check(CLI::IsMember({"unigram", "dictionary", "pretokenized"}))
            ->capture_default_str();
        app->add_option("--dict", dict, "Word list for the dictionary tokenizer")->check(CLI::ExistingFile);
        app->add_option("--passage-tokens", passage_tokens, "Pre-tokenized passages (id<TAB>tokens)")
            ->check(CLI::ExistingFile);
        app->add_option("--query-tokens", query_tokens, "Pre-tokenized queries (id<TAB>tokens)")->check(CLI::ExistingFile);
    }

    void check() const {
        if (kind == "dictionary" && dict.empty()) throw UsageError("--tokenizer dictionary requires --dict");
        if (kind == "pretokenized" && passage_tokens.empty() && query_tokens.empty()) {
            throw UsageError("--tokenizer pretokenized requires --passage-tokens and/or --query-tokens");
        }
    }

    [[nodiscard]] std::shared_ptr<const Tokenizer> make(const Dataset* d) const {
        if (kind == "dictionary") return std::make_shared<DictionaryTokenizer>(DictionaryTokenizer::from_file(dict));
        if (kind == "pretokenized") {
            if (!d) throw UsageError("--tokenizer pretokenized needs a dataset to bind token ids");
            auto tok = std::make_shared<PretokenizedTokenizer>(std::make_shared<UnigramTokenizer>());
            std::unordered_map<std::string, std::string> texts;
            if (!passage_tokens.empty()) {
                for (const auto& p : d->passages()) texts.emplace(p.id, p.text);
                tok->add_file(passage_tokens, texts);
            }
            if (!query_tokens.empty()) {
                texts.clear();
                for (const auto& q : d->queries()) texts.emplace(q.id, q.text);
                tok->add_file(query_tokens, texts);
            }
            std::size_t covered = 0;
            const std::size_t expected = (passage_tokens.empty() ? 0 : d->passages().size()) +
                                         (query_tokens.empty() ? 0 : d->queries().size());
            covered = tok->size();
            if (covered < expected) {
                spdlog::warn("token files cover {} of {} texts; the rest fall back to unigram tokens", covered, expected);
            }
            return tok;
        }
        return std::make_shared<UnigramTokenizer>();
    }
};

struct ProviderOpts {
    std::string kind = "file";
    std::string query_vectors;
    std::string passage_vectors;
    std::string endpoint;
    std::string model;
    std::string instruction;
    std::string instruction_template = std::string(kDefaultInstructionTemplate);
    std::size_t batch_size = 32;
    std::size_t timeout_ms = 30000;
    unsigned retries = 2;
    std::size_t fan_out = 1;

    void add(CLI::App* app, bool vectors_are_inputs) {
        app->add_option("--provider", kind, "file | remote")->check(CLI::IsMember({"file", "remote"}))->capture_default_str();
        if (vectors_are_inputs) {
            app->add_option("--query-vectors", query_vectors, "Query vector file (file provider)")->check(CLI::ExistingFile);
            app->add_option("--passage-vectors", passage_vectors, "Passage vector file (file provider)")
                ->check(CLI::ExistingFile);
        }
        app->add_option("--endpoint", endpoint, "Embedding service URL (remote provider)");
        app->add_option("--model", model, "Model name sent to the service");
        app->add_option("--instruction", instruction, "Instruction composed into query-side text");
        app->add_option("--instruction-template", instruction_template, "Composition template with {instruction} and {text}")
            ->capture_default_str();
        app->add_option("--batch-size", batch_size, "Texts per request")->check(CLI::PositiveNumber)->capture_default_str();
        app->add_option("--timeout-ms", timeout_ms, "Per-request timeout")->capture_default_str();
        app->add_option("--retries", retries, "Retries per failed request")->capture_default_str();
        app->add_option("--fan-out", fan_out, "Concurrent requests")->check(CLI::PositiveNumber)->capture_default_str();
    }

    [[nodiscard]] ProviderConfig config() const {
        ProviderConfig cfg;
        cfg.kind = kind == "remote" ? ProviderKind::RemoteService : ProviderKind::VectorFile;
        cfg.model = model;
        if (!instruction.empty()) cfg.instruction = instruction;
        cfg.instruction_template = instruction_template;
        if (!endpoint.empty()) cfg.endpoint = endpoint;
        cfg.batch_size = batch_size;
        cfg.timeout = std::chrono::milliseconds(timeout_ms);
        cfg.retries = retries;
        cfg.fan_out = fan_out;
        if (!query_vectors.empty()) cfg.query_vectors = query_vectors;
        if (!passage_vectors.empty()) cfg.passage_vectors = passage_vectors;
        try {
            cfg.validate();
        } catch (const std::invalid_argument& e) {
            throw UsageError(e.what());
        }
        return cfg;
    }
};

// ---------------------------------------------------------------- sidecar

struct Session {
    CLI::App* app = nullptr;
    std::string subcommand;
    std::string started = utc_now();
    std::vector<std::string> inputs;
    std::vector<std::string> outputs;
    std::map<std::string, std::string> extra;
    std::string meta_path;
    std::string out_dir = ".";

    void input(const std::string& p) {
        if (!p.empty()) inputs.push_back(p);
    }
    void output(const std::string& p) {
        if (!p.empty()) outputs.push_back(p);
    }

    // No subcommand may write over one of its inputs.
    void check_outputs() const {
        for (const auto& o : outputs) {
            for (const auto& i : inputs) {
                std::error_code ec;
                if (o == i || (fs::exists(o) && fs::equivalent(o, i, ec))) {
                    throw UsageError("output '" + o + "' would overwrite input '" + i + "'");
                }
            }
        }
    }

    void write_sidecar() const {
        std::string path = meta_path;
        if (path.empty()) {
            path = outputs.empty() ? (fs::path(out_dir) / fmt::format("rankprobe-{}.meta.json", subcommand)).string()
                                   : outputs.front() + ".meta.json";
        }
        // Keep global keys and the active subcommand's keys; other sections are noise.
        const std::string full = app->config_to_str(true, false);
        std::string config;
        for (auto line : text::split(full, '\n')) {
            if (line.empty() || line.ends_with("=\"\"") || line.ends_with("=''")) continue;
            const auto eq = line.find('=');
            const auto dot = line.find('.');
            const bool global = dot == std::string_view::npos || dot > eq;
            if (global || line.starts_with(subcommand + ".")) {
                config.append(line);
                config.push_back('\n');
            }
        }
        nlohmann::json meta{{"tool", "rankprobe"},
                            {"version", RANKPROBE_VERSION},
                            {"subcommand", subcommand},
                            {"config", config},
                            {"config_hash", fnv1a_hex(config)},
                            {"inputs", inputs},
                            {"outputs", outputs},
                            {"started_at", started},
                            {"finished_at", utc_now()},
                            {"details", extra}};
        std::ofstream out(path, std::ios::trunc);
        if (!out) throw IoError("cannot write sidecar " + path);
        out << meta.dump(2) << '\n';
        spdlog::debug("metadata written to {}", path);
    }
};

std::ofstream open_output(const std::string& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + path);
    return out;
}

std::vector<std::size_t> parse_cutoffs(const std::string& s) {
    std::vector<std::size_t> out;
    for (auto part : text::split(s, ',')) {
        part = text::trim(part);
        if (part.empty()) continue;
        try {
            const long long v = std::stoll(std::string(part));
            if (v <= 0) throw std::invalid_argument("");
            out.push_back(static_cast<std::size_t>(v));
        } catch (const std::exception&) {
            throw UsageError("invalid cutoff '" + std::string(part) + "'");
        }
    }
    return out;
}

Grouping parse_grouping(const std::string& s) { return s == "fine8" ? Grouping::Fine8 : Grouping::Coarse5; }

} // namespace

int main(int argc, char** argv) {
    auto logger = spdlog::stderr_color_mt("rankprobe");
    spdlog::set_default_logger(logger);
    spdlog::set_pattern("[%l] %v");

    CLI::App app{"rankprobe: graded retrieval evaluation and training-query generation"};
    app.set_version_flag("--version", std::string(RANKPROBE_VERSION));
    app.require_subcommand(1);
    app.fallthrough();
    app.failure_message(CLI::FailureMessage::help);
    app.set_config("--config", "", "Key-value config file (TOML/INI); explicit flags win");

    Session session;
    session.app = &app;
    std::size_t jobs = 0;
    std::uint64_t seed = kDefaultSeed;
    int verbosity = 0;
    bool quiet = false;
    app.add_option("--jobs,-j", jobs, "Worker threads (0 = logical cores)")->capture_default_str();
    app.add_option("--seed", seed, "Seed for randomized operations")->capture_default_str();
    app.add_flag("-v,--verbose", verbosity, "More diagnostics");
    app.add_flag("-q,--quiet", quiet, "Errors only");
    app.add_option("--meta", session.meta_path, "Metadata sidecar path (default: <output>.meta.json)");
    app.add_option("--out-dir", session.out_dir, "Directory for sidecars of commands that write to stdout")
        ->capture_default_str();

    // ------------------------------------------------------------ embed
    auto* embed = app.add_subcommand("embed", "Embed queries and passages and store unit-norm vectors");
    DatasetOpts embed_ds;
    ProviderOpts embed_prov;
    std::string embed_out_q, embed_out_p, embed_format = "binary";
    embed_ds.add(embed);
    embed_prov.add(embed, false);
    embed->add_option("--out-query-vectors", embed_out_q, "Output file for query vectors");
    embed->add_option("--out-passage-vectors", embed_out_p, "Output file for passage vectors");
    embed->add_option("--format", embed_format, "binary | text")->check(CLI::IsMember({"binary", "text"}))->capture_default_str();

    // ------------------------------------------------------------ search
    auto* search = app.add_subcommand("search", "Exact dense top-k retrieval for every query");
    DatasetOpts search_ds;
    ProviderOpts search_prov;
    std::size_t search_k = 100;
    std::string search_out, search_name = "dense";
    search_ds.add(search);
    search_prov.add(search, true);
    search->add_option("-k,--top-k", search_k, "Depth of each ranked list")->check(CLI::PositiveNumber)->capture_default_str();
    search->add_option("--out,-o", search_out, "Run file")->required();
    search->add_option("--name", search_name, "Run name")->capture_default_str();

    // ------------------------------------------------------------ bm25
    auto* bm25 = app.add_subcommand("bm25", "BM25 retrieval for every query");
    DatasetOpts bm25_ds;
    TokenizerOpts bm25_tok;
    std::size_t bm25_k = 100;
    double bm25_k1 = 1.5, bm25_b = 0.75;
    std::string bm25_idf = "lucene", bm25_out, bm25_name = "bm25";
    bm25_ds.add(bm25);
    bm25_tok.add(bm25);
    bm25->add_option("-k,--top-k", bm25_k, "Depth of each ranked list")->check(CLI::PositiveNumber)->capture_default_str();
    bm25->add_option("--k1", bm25_k1, "Term-frequency saturation")->capture_default_str();
    bm25->add_option("--b", bm25_b, "Length normalization")->capture_default_str();
    bm25->add_option("--idf", bm25_idf, "lucene | classic-eps")->check(CLI::IsMember({"lucene", "classic-eps"}))->capture_default_str();
    bm25->add_option("--out,-o", bm25_out, "Run file")->required();
    bm25->add_option("--name", bm25_name, "Run name")->capture_default_str();

    // ------------------------------------------------------------ eval
    auto* eval = app.add_subcommand("eval", "Graded nDCG report for a run");
    DatasetOpts eval_ds;
    std::string eval_run, eval_cutoffs = "1,5,10", eval_gain = "linear", eval_records, eval_grouping = "coarse5";
    bool eval_by_type = false;
    eval_ds.add(eval);
    eval->add_option("--run", eval_run, "Run file")->required()->check(CLI::ExistingFile);
    eval->add_option("--cutoffs", eval_cutoffs, "Comma-separated, increasing")->capture_default_str();
    eval->add_option("--gain", eval_gain, "linear | exponential")->check(CLI::IsMember({"linear", "exponential"}))->capture_default_str();
    eval->add_flag("--by-type", eval_by_type, "Add the per-query-type table");
    eval->add_option("--grouping", eval_grouping, "fine8 | coarse5")->check(CLI::IsMember({"fine8", "coarse5"}))->capture_default_str();
    eval->add_option("--records", eval_records, "Machine-readable JSON-lines report");

    // ------------------------------------------------------------ compare
    auto* compare = app.add_subcommand("compare", "Per-type >/</= comparison of two runs");
    DatasetOpts cmp_ds;
    std::string cmp_a, cmp_b, cmp_gain = "linear", cmp_records, cmp_grouping = "coarse5";
    double cmp_band = 0.01;
    std::size_t cmp_cutoff = 10;
    bool cmp_by_type = false;
    cmp_ds.add(compare);
    compare->add_option("--run-a", cmp_a, "First run (A)")->required()->check(CLI::ExistingFile);
    compare->add_option("--run-b", cmp_b, "Second run (B)")->required()->check(CLI::ExistingFile);
    compare->add_option("--tie-band", cmp_band, "|A - B| <= band counts as similar (nDCG in [0,1])")->capture_default_str();
    compare->add_option("--cutoff", cmp_cutoff, "nDCG cutoff")->check(CLI::PositiveNumber)->capture_default_str();
    compare->add_option("--gain", cmp_gain, "linear | exponential")->check(CLI::IsMember({"linear", "exponential"}))->capture_default_str();
    compare->add_flag("--by-type", cmp_by_type, "One row per query type (otherwise only the overall row)");
    compare->add_option("--grouping", cmp_grouping, "fine8 | coarse5")->check(CLI::IsMember({"fine8", "coarse5"}))->capture_default_str();
    compare->add_option("--records", cmp_records, "Machine-readable JSON-lines output");

    // ------------------------------------------------------------ analyze
    auto* analyze = app.add_subcommand("analyze", "False-negative / false-positive worksheets");
    DatasetOpts an_ds;
    TokenizerOpts an_tok;
    std::string an_run, an_criterion = "bm25", an_lexical, an_out, an_category, an_qtype;
    std::size_t an_k = 10, an_min_overlap = 0;
    an_ds.add(analyze);
    an_tok.add(analyze);
    analyze->add_option("--run", an_run, "Run to analyze")->required()->check(CLI::ExistingFile);
    analyze->add_option("-k,--top-k", an_k, "Cutoff defining a miss")->check(CLI::PositiveNumber)->capture_default_str();
    analyze->add_option("--criterion", an_criterion, "Literal-miss criterion: bm25 | containment")
        ->check(CLI::IsMember({"bm25", "containment"}))
        ->capture_default_str();
    analyze->add_option("--min-overlap", an_min_overlap, "Containment: matched query tokens needed (0 = all)")->capture_default_str();
    analyze->add_option("--lexical-run", an_lexical, "BM25 run for the bm25 criterion (built on the fly otherwise)")
        ->check(CLI::ExistingFile);
    analyze->add_option("--category", an_category, "Keep only LiteralMiss | SemanticMiss | FalsePositive");
    analyze->add_option("--qtype", an_qtype, "Keep only one query type");
    analyze->add_option("--out,-o", an_out, "Worksheet (JSON lines)")->required();

    // ------------------------------------------------------------ gen
    auto* gen = app.add_subcommand("gen", "Generate SM/KW training queries with an LLM");
    GenConfig gen_cfg;
    std::string gen_passages, gen_endpoint, gen_kinds = "SM,KW", gen_prompt_dir, gen_audit, gen_out;
    std::size_t gen_timeout_ms = 60000;
    unsigned gen_retries = 3;
    gen->add_option("--passages", gen_passages, "Training passage pool (id<TAB>text)")->required()->check(CLI::ExistingFile);
    gen->add_option("--endpoint", gen_endpoint, "Chat-completions URL")->required();
    gen->add_option("--model", gen_cfg.model, "LLM model name")->required();
    gen->add_option("--temperature", gen_cfg.temperature, "Sampling temperature")->capture_default_str();
    gen->add_option("--kinds", gen_kinds, "Comma-separated: SM, KW")->capture_default_str();
    gen->add_option("--max-per-kind", gen_cfg.max_per_kind, "Queries kept per passage and kind")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    gen->add_option("--sm-template", gen_cfg.sm_template, "Prompt template id for SM")->capture_default_str();
    gen->add_option("--kw-template", gen_cfg.kw_template, "Prompt template id for KW")->capture_default_str();
    gen->add_option("--prompt-dir", gen_prompt_dir, "Directory of additional *.txt templates")->check(CLI::ExistingDirectory);
    gen->add_option("--concurrency", gen_cfg.concurrency, "LLM calls in flight")->check(CLI::PositiveNumber)->capture_default_str();
    gen->add_option("--parse-retries", gen_cfg.parse_retries, "Re-asks after an unparseable reply")->capture_default_str();
    gen->add_option("--retries", gen_retries, "Transport retries per call")->capture_default_str();
    gen->add_option("--timeout-ms", gen_timeout_ms, "Per-call timeout")->capture_default_str();
    gen->add_option("--audit-log", gen_audit, "Append request/response pairs here");
    gen->add_option("--out,-o", gen_out, "Generated queries (JSON lines)")->required();

    // ------------------------------------------------------------ filter
    auto* filter = app.add_subcommand("filter", "Drop training passages too similar to test passages");
    std::string f_train, f_test, f_kept, f_dropped;
    DatasetOpts f_ds;
    double f_threshold = 0.6;
    filter->add_option("--train", f_train, "Training passage pool")->required()->check(CLI::ExistingFile);
    filter->add_option("--test", f_test, "Test passages (id<TAB>text); or use a dataset option")->check(CLI::ExistingFile);
    f_ds.add(filter);
    filter->add_option("--threshold", f_threshold, "Drop when ROUGE-L F1 exceeds this")->capture_default_str();
    filter->add_option("--out-kept", f_kept, "Kept passages")->required();
    filter->add_option("--out-dropped", f_dropped, "Dropped passages with their best F1 (JSON lines)");

    // ------------------------------------------------------------ split
    auto* split = app.add_subcommand("split", "Seeded, kind-stratified holdout split of generated queries");
    std::string s_in, s_train, s_holdout;
    double s_fraction = 0.05;
    split->add_option("--generated", s_in, "Generated queries (JSON lines)")->required()->check(CLI::ExistingFile);
    split->add_option("--fraction", s_fraction, "Holdout fraction")->capture_default_str();
    split->add_option("--out-train", s_train, "Training part")->required();
    split->add_option("--out-holdout", s_holdout, "Holdout part")->required();

    // ------------------------------------------------------------ export
    auto* exp = app.add_subcommand("export", "Write contrastive training pairs");
    std::string e_in, e_passages, e_out;
    exp->add_option("--generated", e_in, "Generated queries (JSON lines)")->required()->check(CLI::ExistingFile);
    exp->add_option("--passages", e_passages, "Passage pool the queries were generated from")->required()->check(CLI::ExistingFile);
    exp->add_option("--out,-o", e_out, "Training file (JSON lines)")->required();

    // ------------------------------------------------------------ stats
    auto* stats = app.add_subcommand("stats", "Dataset or generated-query statistics");
    DatasetOpts st_ds;
    TokenizerOpts st_tok;
    std::string st_generated, st_passages, st_records;
    st_ds.add(stats);
    st_tok.add(stats);
    stats->add_option("--generated", st_generated, "Generated queries; reports per-kind statistics")->check(CLI::ExistingFile);
    stats->add_option("--pool", st_passages, "Passage pool for --generated")->check(CLI::ExistingFile);
    stats->add_option("--records", st_records, "Machine-readable JSON output");

    // ------------------------------------------------------------ convert
    auto* convert = app.add_subcommand("convert", "Convert between the tab-separated and JSON-lines dataset forms");
    DatasetOpts cv_ds;
    std::string cv_to_dir, cv_to_jsonl;
    cv_ds.add(convert);
    convert->add_option("--to-dir", cv_to_dir, "Write passages.tsv/queries.tsv/labels.tsv here");
    convert->add_option("--to-jsonl", cv_to_jsonl, "Write a single JSON-lines file");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    if (quiet) {
        spdlog::set_level(spdlog::level::err);
    } else if (verbosity > 0) {
        spdlog::set_level(spdlog::level::debug);
    }

    CLI::App* sub = app.get_subcommands().front();
    session.subcommand = sub->get_name();

    try {
        if (sub == embed) {
            embed_ds.check();
            if (embed_out_q.empty() && embed_out_p.empty()) {
                throw UsageError("embed needs --out-query-vectors and/or --out-passage-vectors");
            }
            if (embed_prov.kind != "remote") throw UsageError("embed requires --provider remote");
            const auto cfg = embed_prov.config();
            for (const auto& i : embed_ds.inputs()) session.input(i);
            session.output(embed_out_q);
            session.output(embed_out_p);
            session.check_outputs();

            const Dataset d = embed_ds.load();
            const auto provider = make_provider(cfg);
            const auto format = embed_format == "text" ? VectorFileFormat::Text : VectorFileFormat::Binary;
            if (!embed_out_p.empty()) {
                std::vector<TextItem> items;
                for (const auto& p : d.passages()) items.push_back({p.id, p.text});
                save_vectors(embed_batch(*provider, items, EmbedRole::PassageSide, cfg), embed_out_p, format);
            }
            if (!embed_out_q.empty()) {
                std::vector<TextItem> items;
                for (const auto& q : d.queries()) items.push_back({q.id, q.text});
                save_vectors(embed_batch(*provider, items, EmbedRole::QuerySide, cfg), embed_out_q, format);
            }
            session.extra["provider"] = provider->describe();
        } else if (sub == search) {
            search_ds.check();
            const auto cfg = search_prov.config();
            for (const auto& i : search_ds.inputs()) session.input(i);
            session.input(search_prov.query_vectors);
            session.input(search_prov.passage_vectors);
            session.output(search_out);
            session.check_outputs();

            const Dataset d = search_ds.load();
            const auto provider = make_provider(cfg);
            Run run = run_all(d, *provider, cfg, search_k, jobs, search_name);
            run.metadata["dataset"] = d.name();
            write_run(run, search_out);
            session.extra.insert(run.metadata.begin(), run.metadata.end());
            spdlog::info("wrote {} ranked lists to {}", run.lists.size(), search_out);
        } else if (sub == bm25) {
            bm25_ds.check();
            bm25_tok.check();
            if (!(bm25_k1 > 0.0) || bm25_b < 0.0 || bm25_b > 1.0) throw UsageError("need k1 > 0 and 0 <= b <= 1");
            for (const auto& i : bm25_ds.inputs()) session.input(i);
            session.output(bm25_out);
            session.check_outputs();

            const Dataset d = bm25_ds.load();
            const auto tok = bm25_tok.make(&d);
            Bm25Params params{bm25_k1, bm25_b, bm25_idf == "lucene" ? IdfForm::Lucene : IdfForm::ClassicEpsilon, 0.25};
            Run run = bm25_run(d, *tok, bm25_k, params, bm25_name);
            run.metadata["dataset"] = d.name();
            write_run(run, bm25_out);
            session.extra.insert(run.metadata.begin(), run.metadata.end());
            spdlog::info("wrote {} ranked lists to {}", run.lists.size(), bm25_out);
        } else if (sub == eval) {
            eval_ds.check();
            MetricConfig mc;
            mc.cutoffs = parse_cutoffs(eval_cutoffs);
            mc.gain = eval_gain == "exponential" ? Gain::Exponential : Gain::Linear;
            try {
                mc.validate();
            } catch (const std::invalid_argument& e) {
                throw UsageError(e.what());
            }
            for (const auto& i : eval_ds.inputs()) session.input(i);
            session.input(eval_run);
            session.output(eval_records);
            session.check_outputs();

            const Dataset d = eval_ds.load();
            const Run run = read_run(eval_run);
            const auto report = evaluate_run(run, d, mc, eval_by_type);
            print_report(report, std::cout);
            if (eval_by_type) {
                const std::size_t cutoff = std::find(mc.cutoffs.begin(), mc.cutoffs.end(), 10) != mc.cutoffs.end()
                                               ? 10
                                               : mc.cutoffs.back();
                std::cout << '\n';
                print_type_table(by_type_report(report, parse_grouping(eval_grouping), cutoff), cutoff, std::cout);
            }
            if (!eval_records.empty()) {
                auto out = open_output(eval_records);
                write_report_records(report, out);
            }
            for (std::size_t c = 0; c < report.cutoffs.size(); ++c) {
                session.extra[fmt::format("ndcg@{}", report.cutoffs[c])] = fmt::format("{:.4f}", report.aggregate[c]);
            }
        } else if (sub == compare) {
            cmp_ds.check();
            if (cmp_band < 0.0) throw UsageError("--tie-band must be >= 0");
            for (const auto& i : cmp_ds.inputs()) session.input(i);
            session.input(cmp_a);
            session.input(cmp_b);
            session.output(cmp_records);
            session.check_outputs();

            const Dataset d = cmp_ds.load();
            MetricConfig mc;
            mc.cutoffs = {cmp_cutoff};
            mc.gain = cmp_gain == "exponential" ? Gain::Exponential : Gain::Linear;
            mc.tie_band = cmp_band;
            const auto ra = evaluate_run(read_run(cmp_a), d, mc);
            const auto rb = evaluate_run(read_run(cmp_b), d, mc);
            auto cmp = compare_runs(ra, rb, cmp_band, parse_grouping(cmp_grouping), cmp_cutoff);
            if (!cmp_by_type) cmp.rows.erase(cmp.rows.begin(), cmp.rows.end() - 1);
            print_comparison(cmp, std::cout);
            if (!cmp_records.empty()) {
                auto out = open_output(cmp_records);
                write_comparison_records(cmp, out);
            }
        } else if (sub == analyze) {
            an_ds.check();
            an_tok.check();
            std::optional<ErrorCategory> category;
            if (!an_category.empty()) {
                category = parse_error_category(an_category);
                if (!category) throw UsageError("unknown --category '" + an_category + "'");
            }
            std::optional<QueryType> qtype;
            if (!an_qtype.empty()) {
                qtype = parse_query_type(an_qtype);
                if (!qtype) throw UsageError("unknown --qtype '" + an_qtype + "'");
            }
            for (const auto& i : an_ds.inputs()) session.input(i);
            session.input(an_run);
            session.input(an_lexical);
            session.output(an_out);
            session.check_outputs();

            const Dataset d = an_ds.load();
            const Run run = read_run(an_run);
            const auto tok = an_tok.make(&d);
            std::optional<Run> lexical;
            if (!an_lexical.empty()) lexical = read_run(an_lexical);
            LiteralOptions opts;
            opts.criterion = an_criterion == "containment" ? LiteralCriterion::Containment : LiteralCriterion::Bm25Recall;
            if (an_min_overlap > 0) opts.min_overlap = an_min_overlap;
            opts.lexical_run = lexical ? &*lexical : nullptr;

            auto records = false_negatives(run, d, an_k, *tok, opts);
            auto fps = false_positives(run, d, an_k);
            records.insert(records.end(), std::make_move_iterator(fps.begin()), std::make_move_iterator(fps.end()));
            std::erase_if(records, [&](const ErrorRecord& r) {
                return (category && r.category != *category) || (qtype && r.qtype != *qtype);
            });
            std::map<std::string, std::size_t> counts;
            for (const auto& r : records) ++counts[std::string(to_string(r.category))];
            auto out = open_output(an_out);
            write_worksheet(records, d, out);
            for (const auto& [name, n] : counts) {
                fmt::print("{:<14} {}\n", name, n);
                session.extra[name] = std::to_string(n);
            }
        } else if (sub == gen) {
            gen_cfg.kinds.clear();
            for (auto part : text::split(gen_kinds, ',')) {
                if (text::trim(part).empty()) continue;
                const auto kind = parse_query_kind(part);
                if (!kind) throw UsageError("unknown kind '" + std::string(part) + "'");
                gen_cfg.kinds.push_back(*kind);
            }
            try {
                gen_cfg.validate();
            } catch (const std::invalid_argument& e) {
                throw UsageError(e.what());
            }
            session.input(gen_passages);
            session.output(gen_out);
            session.output(gen_audit);
            session.check_outputs();

            const auto passages = load_passages(gen_passages);
            const auto prompts = gen_prompt_dir.empty() ? PromptLibrary::builtin() : PromptLibrary::with_directory(gen_prompt_dir);
            std::optional<fs::path> audit;
            if (!gen_audit.empty()) audit = gen_audit;
            const HttpLlmClient client(gen_endpoint, {gen_retries, std::chrono::milliseconds(gen_timeout_ms), std::chrono::milliseconds(500)},
                                       audit);
            GenerationStats gs;
            const auto queries = generate_queries(passages, gen_cfg, client, prompts, &gs);
            write_generated(queries, gen_out);
            session.extra["queries"] = std::to_string(queries.size());
            session.extra["requests"] = std::to_string(gs.requests);
            session.extra["parse_failures"] = std::to_string(gs.parse_failures);
            session.extra["skipped"] = std::to_string(gs.skipped);
            session.extra["duplicates_dropped"] = std::to_string(gs.duplicates_dropped);
            session.extra["sm_template"] = gen_cfg.sm_template;
            session.extra["kw_template"] = gen_cfg.kw_template;
            spdlog::info("{} queries from {} passages ({} skipped after parse failures)", queries.size(), passages.size(),
                         gs.skipped);
        } else if (sub == filter) {
            if (f_test.empty() == !f_ds.given()) throw UsageError("give exactly one of --test or a dataset option");
            if (!(f_threshold > 0.0 && f_threshold <= 1.0)) throw UsageError("--threshold must be in (0, 1]");
            session.input(f_train);
            session.input(f_test);
            if (f_ds.given()) {
                f_ds.check();
                for (const auto& i : f_ds.inputs()) session.input(i);
            }
            session.output(f_kept);
            session.output(f_dropped);
            session.check_outputs();

            const auto train = load_passages(f_train);
            const auto test = f_test.empty() ? f_ds.load().passages() : load_passages(f_test);
            const auto result = filter_leakage(train, test, f_threshold, jobs);
            save_passages(result.kept, f_kept);
            if (!f_dropped.empty()) {
                auto out = open_output(f_dropped);
                for (std::size_t i = 0; i < result.dropped.size(); ++i) {
                    out << nlohmann::json{{"id", result.dropped[i].id},
                                          {"text", result.dropped[i].text},
                                          {"rouge_l_f1", result.dropped_scores[i]}}
                               .dump()
                        << '\n';
                }
            }
            session.extra["kept"] = std::to_string(result.kept.size());
            session.extra["dropped"] = std::to_string(result.dropped.size());
            spdlog::info("kept {}, dropped {} (threshold {})", result.kept.size(), result.dropped.size(), f_threshold);
        } else if (sub == split) {
            if (!(s_fraction > 0.0 && s_fraction < 1.0)) throw UsageError("--fraction must be in (0, 1)");
            session.input(s_in);
            session.output(s_train);
            session.output(s_holdout);
            session.check_outputs();

            const auto queries = read_generated(s_in);
            const auto parts = split_holdout(queries, s_fraction, seed);
            write_generated(parts.train, s_train);
            write_generated(parts.holdout, s_holdout);
            session.extra["train"] = std::to_string(parts.train.size());
            session.extra["holdout"] = std::to_string(parts.holdout.size());
        } else if (sub == exp) {
            session.input(e_in);
            session.input(e_passages);
            session.output(e_out);
            session.check_outputs();

            const auto queries = read_generated(e_in);
            const auto passages = load_passages(e_passages);
            const auto n = export_training(queries, passages, e_out);
            session.extra["records"] = std::to_string(n);
            spdlog::info("wrote {} training records to {}", n, e_out);
        } else if (sub == stats) {
            st_tok.check();
            session.output(st_records);
            nlohmann::json records;
            if (!st_generated.empty()) {
                if (st_passages.empty()) throw UsageError("--generated needs --pool");
                session.input(st_generated);
                session.input(st_passages);
                session.check_outputs();
                const auto queries = read_generated(st_generated);
                const auto passages = load_passages(st_passages);
                const auto tok = st_tok.make(nullptr);
                fmt::print("{:<4} {:>9} {:>10} {:>9} {:>9} {:>8}\n", "kind", "passages", "p.tokens", "queries", "q/pass", "tok/q");
                for (const auto& r : gen_stats(queries, passages, *tok)) {
                    fmt::print("{:<4} {:>9} {:>10} {:>9} {:>9.2f} {:>8.2f}\n", to_string(r.kind), r.passages, r.passage_tokens,
                               r.queries, r.queries_per_passage, r.tokens_per_query);
                    records.push_back({{"kind", to_string(r.kind)},
                                       {"passages", r.passages},
                                       {"passage_tokens", r.passage_tokens},
                                       {"queries", r.queries},
                                       {"queries_per_passage", r.queries_per_passage},
                                       {"tokens_per_query", r.tokens_per_query}});
                }
            } else {
                st_ds.check();
                for (const auto& i : st_ds.inputs()) session.input(i);
                session.check_outputs();
                const Dataset d = st_ds.load();
                const auto tok = st_tok.make(&d);
                const auto r = dataset_stats(d, *tok);
                const auto zero = zero_positive_queries(d);
                fmt::print("# dataset={} tokenizer={}\n", d.name(), r.tokenizer);
                fmt::print("{:<9} {:>8} {:>5} {:>5} {:>7}\n", "", "records", "min", "max", "avg");
                fmt::print("{:<9} {:>8} {:>5} {:>5} {:>7.2f}\n", "passages", r.passages, r.passage_tokens.min,
                           r.passage_tokens.max, r.passage_tokens.mean);
                fmt::print("{:<9} {:>8} {:>5} {:>5} {:>7.2f}\n", "queries", r.queries, r.query_tokens.min, r.query_tokens.max,
                           r.query_tokens.mean);
                fmt::print("positive pairs: {} (strong {}, weak {})\n", r.positive_pairs, r.strong_pairs, r.weak_pairs);
                fmt::print("zero-positive queries: {}\n", zero.size());
                fmt::print("positives per query:");
                for (const auto& [n, c] : r.positives_histogram) fmt::print(" {}:{}", n, c);
                fmt::print("\nqueries per type:");
                for (const auto& [t, c] : r.queries_by_type) fmt::print(" {}:{}", to_string(t), c);
                fmt::print("\n");
                nlohmann::json hist = nlohmann::json::object();
                for (const auto& [n, c] : r.positives_histogram) hist[std::to_string(n)] = c;
                nlohmann::json types = nlohmann::json::object();
                for (const auto& [t, c] : r.queries_by_type) types[std::string(to_string(t))] = c;
                records = {{"dataset", d.name()},
                           {"tokenizer", r.tokenizer},
                           {"passages", r.passages},
                           {"queries", r.queries},
                           {"passage_tokens", {{"min", r.passage_tokens.min}, {"max", r.passage_tokens.max}, {"mean", r.passage_tokens.mean}}},
                           {"query_tokens", {{"min", r.query_tokens.min}, {"max", r.query_tokens.max}, {"mean", r.query_tokens.mean}}},
                           {"positive_pairs", r.positive_pairs},
                           {"strong_pairs", r.strong_pairs},
                           {"weak_pairs", r.weak_pairs},
                           {"zero_positive_queries", zero},
                           {"positives_histogram", hist},
                           {"queries_by_type", types}};
            }
            if (!st_records.empty()) {
                auto out = open_output(st_records);
                out << records.dump(2) << '\n';
            }
        } else if (sub == convert) {
            cv_ds.check();
            if (cv_to_dir.empty() == cv_to_jsonl.empty()) throw UsageError("give exactly one of --to-dir or --to-jsonl");
            for (const auto& i : cv_ds.inputs()) session.input(i);
            if (!cv_to_jsonl.empty()) {
                session.output(cv_to_jsonl);
            } else {
                const auto p = DatasetPaths::in_directory(cv_to_dir);
                session.output(p.passages.string());
                session.output(p.queries.string());
                session.output(p.labels.string());
            }
            session.check_outputs();

            const Dataset d = cv_ds.load();
            if (!cv_to_jsonl.empty()) {
                save_dataset_jsonl(d, cv_to_jsonl);
            } else {
                fs::create_directories(cv_to_dir);
                save_dataset(d, DatasetPaths::in_directory(cv_to_dir));
            }
        }
        session.write_sidecar();
    } catch (const UsageError& e) {
        std::cerr << "error: " << e.what() << "\n\n" << sub->help();
        return 2;
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        spdlog::error("{}", e.what());
        return 1;
    }
    return 0;
}
