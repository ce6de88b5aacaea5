#pragma once

#include <cstddef>
#include <istream>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "dime/types.hpp"

namespace dime {

/// query id -> relevant item ids.
using Qrels = std::map<std::string, std::set<std::string>>;

/// (1/R) * sum of P@k over the ranks k holding a relevant item, where R is
/// the number of relevant items that occur in the ranking. Throws NoRelevant
/// when R == 0.
double average_precision(std::span<const std::string> ranking, const std::set<std::string>& relevant);

/// hits in the first min(k, len) positions divided by k (not by len).
double precision_at_k(std::span<const std::string> ranking, const std::set<std::string>& relevant, std::size_t k);

/// hits in the first k positions divided by |relevant|. Throws NoRelevant if relevant is empty.
double recall_at_k(std::span<const std::string> ranking, const std::set<std::string>& relevant, std::size_t k);

struct QueryMetrics {
    double ap = 0.0;
    std::map<std::size_t, double> precision_at;
    std::map<std::size_t, double> recall_at;
    std::size_t relevant_count = 0;

    bool operator==(const QueryMetrics&) const = default;
};

struct EvalReport {
    std::map<std::string, QueryMetrics> per_query;
    /// Absent when every query was skipped.
    std::optional<double> mean_ap;
    std::vector<std::string> skipped;

    bool operator==(const EvalReport&) const = default;
};

/// One evaluated query: its id and the full ranking of the index.
struct RankedQuery {
    std::string query_id;
    std::vector<std::string> ranking;
};

/// Scores full-index rankings. Relevant ids absent from a ranking are
/// ignored, and queries left with no relevant item are skipped.
EvalReport score_rankings(std::span<const RankedQuery> rankings, const Qrels& qrels, std::span<const std::size_t> ks);

struct EvalQuery {
    std::string query_id;
    ItemPayload payload;
};

/// TSV lines "query_id<TAB>item_id<TAB>relevance"; relevance 0 lines are
/// dropped, duplicates collapse. Throws InvalidRequest on malformed lines.
Qrels parse_qrels(std::istream& in);
Qrels load_qrels(const std::string& path);

/// Newline-delimited JSON {"query_id":..., "vector"|"text"|"uri":...}.
std::vector<EvalQuery> parse_queries(std::istream& in);
std::vector<EvalQuery> load_queries(const std::string& path);
EvalQuery eval_query_from_json(const json& j);

void to_json(json& j, const EvalReport& r);

}  // namespace dime
