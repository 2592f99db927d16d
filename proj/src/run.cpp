#include "rankprobe/run.hpp"

#include "rankprobe/error.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>
#include <unordered_set>

namespace rankprobe {
namespace {

void check_token(const std::string& s, const char* what) {
    if (s.empty() || s.find_first_of(" \t\r\n") != std::string::npos) {
        throw IntegrityError(std::string(what) + " '" + s + "' is empty or contains whitespace");
    }
}

} // namespace

std::size_t RankedList::rank_of(const std::string& passage_id) const {
    for (std::size_t i = 0; i < entries.size(); ++i) {
        if (entries[i].passage_id == passage_id) return i + 1;
    }
    return 0;
}

const RankedList* Run::find(const std::string& query_id) const {
    const auto it = lists.find(query_id);
    return it == lists.end() ? nullptr : &it->second;
}

void write_run(const Run& run, std::ostream& out) {
    const std::string name = run.name.empty() ? "run" : run.name;
    check_token(name, "run name");
    std::string buf;
    for (const auto& [qid, list] : run.lists) {
        check_token(qid, "query id");
        for (std::size_t i = 0; i < list.entries.size(); ++i) {
            const auto& e = list.entries[i];
            check_token(e.passage_id, "passage id");
            buf.clear();
            fmt::format_to(std::back_inserter(buf), "{} Q0 {} {} {} {}\n", qid, e.passage_id, i + 1, e.score, name);
            out << buf;
        }
    }
}

void write_run(const Run& run, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + path.string());
    write_run(run, out);
    if (!out) throw IoError("write failed: " + path.string());
}

Run read_run(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    const std::string src = path.string();

    struct Row {
        std::size_t rank;
        ScoredPassage entry;
    };
    std::map<std::string, std::vector<Row>> rows;
    Run run;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        std::istringstream fields(line);
        std::string qid, q0, pid, rank_s, score_s, name;
        if (!(fields >> qid)) continue;
        if (!(fields >> q0 >> pid >> rank_s >> score_s >> name)) {
            throw ParseError(src, lineno, "expected 6 whitespace-separated columns");
        }
        std::size_t rank = 0;
        const auto [rp, rec] = std::from_chars(rank_s.data(), rank_s.data() + rank_s.size(), rank);
        if (rec != std::errc() || rp != rank_s.data() + rank_s.size()) {
            throw ParseError(src, lineno, "rank '" + rank_s + "' is not an integer");
        }
        double score = 0.0;
        try {
            std::size_t used = 0;
            score = std::stod(score_s, &used);
            if (used != score_s.size()) throw std::invalid_argument(score_s);
        } catch (const std::exception&) {
            throw ParseError(src, lineno, "score '" + score_s + "' is not a number");
        }
        if (run.name.empty()) run.name = name;
        rows[qid].push_back({rank, {pid, score}});
    }
    for (auto& [qid, list] : rows) {
        std::stable_sort(list.begin(), list.end(), [](const Row& a, const Row& b) { return a.rank < b.rank; });
        RankedList ranked{qid, {}};
        std::unordered_set<std::string> seen;
        for (auto& r : list) {
            if (!seen.insert(r.entry.passage_id).second) {
                throw IntegrityError(src + ": passage '" + r.entry.passage_id + "' listed twice for query '" + qid + "'");
            }
            ranked.entries.push_back(std::move(r.entry));
        }
        run.lists.emplace(qid, std::move(ranked));
    }
    return run;
}

} // namespace rankprobe
