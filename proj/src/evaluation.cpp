#include "dime/evaluation.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "dime/error.hpp"

namespace dime {

namespace {

std::size_t hits_at(std::span<const std::string> ranking, const std::set<std::string>& relevant, std::size_t k) {
    std::size_t limit = std::min(k, ranking.size());
    std::size_t hits = 0;
    for (std::size_t i = 0; i < limit; ++i) hits += relevant.count(ranking[i]);
    return hits;
}

void check_k(std::size_t k) {
    if (k == 0) throw Error(ErrorCode::InvalidRequest, "k must be >= 1");
}

}  // namespace

double average_precision(std::span<const std::string> ranking, const std::set<std::string>& relevant) {
    double sum = 0.0;
    std::size_t hits = 0;
    for (std::size_t i = 0; i < ranking.size(); ++i) {
        if (relevant.count(ranking[i])) {
            ++hits;
            sum += static_cast<double>(hits) / static_cast<double>(i + 1);
        }
    }
    if (hits == 0) throw Error(ErrorCode::NoRelevant, "no relevant item occurs in the ranking");
    return sum / static_cast<double>(hits);
}

double precision_at_k(std::span<const std::string> ranking, const std::set<std::string>& relevant, std::size_t k) {
    check_k(k);
    return static_cast<double>(hits_at(ranking, relevant, k)) / static_cast<double>(k);
}

double recall_at_k(std::span<const std::string> ranking, const std::set<std::string>& relevant, std::size_t k) {
    check_k(k);
    if (relevant.empty()) throw Error(ErrorCode::NoRelevant, "recall needs at least one relevant item");
    return static_cast<double>(hits_at(ranking, relevant, k)) / static_cast<double>(relevant.size());
}

EvalReport score_rankings(std::span<const RankedQuery> rankings, const Qrels& qrels, std::span<const std::size_t> ks) {
    for (auto k : ks) check_k(k);
    EvalReport report;
    double ap_sum = 0.0;
    std::set<std::string_view> seen;
    for (const auto& q : rankings) {
        if (!seen.insert(q.query_id).second) {
            throw Error(ErrorCode::InvalidRequest, "duplicate query id '" + q.query_id + "'");
        }
        std::set<std::string> relevant;
        if (auto it = qrels.find(q.query_id); it != qrels.end()) {
            std::set<std::string> ranked(q.ranking.begin(), q.ranking.end());
            for (const auto& id : it->second) {
                if (ranked.count(id)) relevant.insert(id);
            }
        }
        if (relevant.empty()) {
            report.skipped.push_back(q.query_id);
            continue;
        }
        QueryMetrics m;
        m.relevant_count = relevant.size();
        m.ap = average_precision(q.ranking, relevant);
        for (auto k : ks) {
            m.precision_at[k] = precision_at_k(q.ranking, relevant, k);
            m.recall_at[k] = recall_at_k(q.ranking, relevant, k);
        }
        ap_sum += m.ap;
        report.per_query.emplace(q.query_id, std::move(m));
    }
    std::sort(report.skipped.begin(), report.skipped.end());
    if (!report.per_query.empty()) report.mean_ap = ap_sum / static_cast<double>(report.per_query.size());
    return report;
}

Qrels parse_qrels(std::istream& in) {
    Qrels qrels;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::vector<std::string> fields;
        std::stringstream ss(line);
        std::string f;
        while (std::getline(ss, f, '\t')) fields.push_back(f);
        if (fields.size() != 3 || fields[0].empty() || fields[1].empty() || (fields[2] != "0" && fields[2] != "1")) {
            throw Error(ErrorCode::InvalidRequest, "qrels line " + std::to_string(lineno) +
                                                       ": expected query_id<TAB>item_id<TAB>0|1");
        }
        auto& set = qrels[fields[0]];
        if (fields[2] == "1") set.insert(fields[1]);
    }
    return qrels;
}

Qrels load_qrels(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::IoError, "cannot open qrels file " + path);
    return parse_qrels(in);
}

EvalQuery eval_query_from_json(const json& j) {
    if (!j.is_object() || !j.contains("query_id") || !j.at("query_id").is_string() ||
        j.at("query_id").get<std::string>().empty()) {
        throw Error(ErrorCode::InvalidRequest, "query needs a non-empty string 'query_id'");
    }
    return {j.at("query_id").get<std::string>(), payload_from_json(j)};
}

std::vector<EvalQuery> parse_queries(std::istream& in) {
    std::vector<EvalQuery> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            out.push_back(eval_query_from_json(json::parse(line)));
        } catch (const json::exception& e) {
            throw Error(ErrorCode::InvalidRequest, "queries line " + std::to_string(lineno) + ": " + e.what());
        }
    }
    return out;
}

std::vector<EvalQuery> load_queries(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::IoError, "cannot open queries file " + path);
    return parse_queries(in);
}

void to_json(json& j, const EvalReport& r) {
    j = json::object();
    json per_query = json::object();
    for (const auto& [qid, m] : r.per_query) {
        json p = json::object();
        json r_at = json::object();
        for (auto [k, v] : m.precision_at) p[std::to_string(k)] = v;
        for (auto [k, v] : m.recall_at) r_at[std::to_string(k)] = v;
        per_query[qid] = {{"AP", m.ap}, {"P_at", p}, {"R_at", r_at}, {"R", m.relevant_count}};
    }
    j["per_query"] = per_query;
    if (r.mean_ap) j["mAP"] = *r.mean_ap;
    j["skipped"] = r.skipped;
}

}  // namespace dime
