#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <unordered_map>
#include <variant>
#include <vector>

#include "dime/error.hpp"
#include "dime/evaluation.hpp"
#include "dime/index_store.hpp"
#include "dime/registry.hpp"
#include "dime/runtime.hpp"
#include "dime/search.hpp"

namespace dime {

/// A stored item used as the query ("result as query").
struct ItemRef {
    std::string index_id;
    std::string item_id;
    bool operator==(const ItemRef&) const = default;
};

using QueryInput = std::variant<Vector, TextPayload, UriPayload, ItemRef>;

struct QueryRequest {
    QueryInput input;
    std::size_t n = 10;
    std::size_t histogram_bins = 20;
};

/// Reads the input variant plus "n" and "histogram_bins" (or "bins").
/// Throws InvalidRequest.
QueryRequest query_request_from_json(const json& j);

struct ResultNeighbor {
    std::string item_id;
    double distance = 0.0;
    std::map<std::string, std::string> metadata;
    json payload_preview;
};

struct Diagnostics {
    std::string model_name;
    std::string index_id;
    std::string space;
    std::uint64_t index_count = 0;
    bool binarized = false;
    std::int64_t preprocess_us = 0;
    std::int64_t embed_us = 0;
    std::int64_t search_us = 0;
    std::int64_t total_us = 0;
};

struct QueryResult {
    std::vector<ResultNeighbor> neighbors;
    /// Absent when there are no neighbors.
    std::optional<Histogram> histogram;
    std::optional<DistanceStats> stats;
    Diagnostics diagnostics;
};

/// Per-index outcome of a compare: a result or the error that index raised.
using CompareEntry = std::variant<QueryResult, Error>;

void to_json(json& j, const QueryResult& r);
void to_json(json& j, const Histogram& h);
json error_json(const Error& e);
json compare_json(const std::map<std::string, CompareEntry>& results);
json eval_reports_json(const std::map<std::string, EvalReport>& reports);
json dataset_summary_json(const DatasetDescriptor& d);

/// Text truncated to 200 characters, URIs verbatim, the first 8 vector components.
json payload_preview(const ItemPayload& payload);

struct EngineOptions {
    std::filesystem::path root = "dime-data";
    RuntimeOptions runtime;
    SearchOptions search;
};

/// Query, compare and model-evaluation workflows over one registry root.
class Engine {
public:
    explicit Engine(EngineOptions options);

    Registry& registry() noexcept { return registry_; }
    IndexStore& store() noexcept { return store_; }
    EmbeddingRuntime& runtime() noexcept { return runtime_; }
    const std::filesystem::path& root() const noexcept { return options_.root; }

    /// Registers a dataset manifest.
    std::string add_dataset(const json& manifest);
    void add_model(const json& model);
    IndexDescriptor build_index(const std::string& dataset_id, const std::string& model_name, bool binarize,
                                std::optional<std::string> index_id = std::nullopt);

    /// Throws NotFound / UnknownItem.
    Item item(const std::string& dataset_id, const std::string& item_id);

    QueryResult execute_query(const std::string& index_id, const QueryRequest& request);
    /// Throws EmptyRequest when index_ids is empty; per-index failures are
    /// returned as entries.
    std::map<std::string, CompareEntry> execute_compare(const QueryRequest& request,
                                                        const std::vector<std::string>& index_ids);

    /// Ranks the whole index for each query and scores the rankings.
    EvalReport evaluate_run(const std::string& index_id, const std::vector<EvalQuery>& queries, const Qrels& qrels,
                            const std::vector<std::size_t>& ks);
    /// All index ids are checked before any evaluation runs.
    std::map<std::string, EvalReport> compare_models(const std::vector<std::string>& index_ids,
                                                     const std::vector<EvalQuery>& queries, const Qrels& qrels,
                                                     const std::vector<std::size_t>& ks);

    /// Full ranking (n == count) of a payload against an index.
    std::vector<Neighbor> rank(const std::string& index_id, const ItemPayload& payload, std::size_t n);

    /// Stores bytes under <root>/uploads and returns an "upload:<name>" URI.
    std::string add_upload(std::string_view bytes);
    std::filesystem::path upload_dir() const { return options_.root / "uploads"; }

private:
    using ItemTable = std::unordered_map<std::string, Item>;
    std::shared_ptr<const ItemTable> items_of(const std::string& dataset_id);

    EngineOptions options_;
    Registry registry_;
    EmbeddingRuntime runtime_;
    IndexStore store_;
    std::mutex items_mutex_;
    std::map<std::string, std::shared_ptr<const ItemTable>> items_;
};

}  // namespace dime
