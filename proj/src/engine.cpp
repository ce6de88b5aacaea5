#include "dime/engine.hpp"

#include <chrono>

#include "dime/fsutil.hpp"

namespace dime {

namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

std::int64_t micros_between(Clock::time_point a, Clock::time_point b) {
    return std::chrono::duration_cast<std::chrono::microseconds>(b - a).count();
}

double as_ms(std::int64_t us) { return static_cast<double>(us) / 1000.0; }

std::string snake_case(std::string_view name) {
    std::string out;
    for (std::size_t i = 0; i < name.size(); ++i) {
        char c = name[i];
        if (c >= 'A' && c <= 'Z') {
            if (i > 0) out.push_back('_');
            out.push_back(static_cast<char>(c - 'A' + 'a'));
        } else {
            out.push_back(c);
        }
    }
    return out;
}

// Text truncation that never splits a UTF-8 sequence.
std::string truncate_utf8(const std::string& s, std::size_t max_chars) {
    std::size_t chars = 0;
    for (std::size_t i = 0; i < s.size(); ++i) {
        if ((static_cast<unsigned char>(s[i]) & 0xC0) != 0x80) {
            if (chars == max_chars) return s.substr(0, i);
            ++chars;
        }
    }
    return s;
}

ItemPayload to_payload(const QueryInput& input) {
    if (auto* v = std::get_if<Vector>(&input)) return *v;
    if (auto* t = std::get_if<TextPayload>(&input)) return *t;
    return std::get<UriPayload>(input);
}

}  // namespace

QueryRequest query_request_from_json(const json& j) {
    if (!j.is_object()) throw Error(ErrorCode::InvalidRequest, "query request must be a JSON object");
    QueryRequest req;
    int present = int(j.contains("vector")) + int(j.contains("text")) + int(j.contains("uri")) +
                  int(j.contains("item_ref"));
    if (present != 1) {
        throw Error(ErrorCode::InvalidRequest, "exactly one of 'vector', 'text', 'uri', 'item_ref' is required");
    }
    if (j.contains("item_ref")) {
        const json& r = j.at("item_ref");
        if (!r.is_object() || !r.contains("index_id") || !r.contains("item_id") || !r.at("index_id").is_string() ||
            !r.at("item_id").is_string()) {
            throw Error(ErrorCode::InvalidRequest, "'item_ref' needs string 'index_id' and 'item_id'");
        }
        req.input = ItemRef{r.at("index_id").get<std::string>(), r.at("item_id").get<std::string>()};
    } else {
        ItemPayload p = payload_from_json(j);
        if (auto* v = p.as_vector()) {
            req.input = *v;
        } else if (auto* t = p.as_text()) {
            req.input = *t;
        } else {
            req.input = *p.as_uri();
        }
    }
    auto positive = [&](const char* key, std::size_t fallback) -> std::size_t {
        if (!j.contains(key) || j.at(key).is_null()) return fallback;
        const json& v = j.at(key);
        if (!v.is_number_integer() || v.get<std::int64_t>() < 1) {
            throw Error(ErrorCode::InvalidRequest, std::string("'") + key + "' must be a positive integer");
        }
        return v.get<std::size_t>();
    };
    req.n = positive("n", 10);
    req.histogram_bins = positive("bins", positive("histogram_bins", 20));
    return req;
}

json payload_preview(const ItemPayload& payload) {
    if (auto* v = payload.as_vector()) {
        std::size_t keep = std::min<std::size_t>(8, v->size());
        return {{"vector", Vector(v->begin(), v->begin() + static_cast<std::ptrdiff_t>(keep))}, {"dim", v->size()}};
    }
    if (auto* t = payload.as_text()) return {{"text", truncate_utf8(t->value, 200)}};
    return {{"uri", payload.as_uri()->value}};
}

void to_json(json& j, const Histogram& h) { j = {{"bin_edges", h.bin_edges}, {"counts", h.counts}}; }

void to_json(json& j, const QueryResult& r) {
    json neighbors = json::array();
    for (const auto& n : r.neighbors) {
        neighbors.push_back({{"item_id", n.item_id},
                             {"distance", n.distance},
                             {"metadata", n.metadata},
                             {"payload_preview", n.payload_preview}});
    }
    const auto& d = r.diagnostics;
    j = {
        {"neighbors", neighbors},
        {"histogram", r.histogram ? json(*r.histogram) : json(nullptr)},
        {"stats", r.stats ? json{{"min", r.stats->min}, {"max", r.stats->max}, {"mean", r.stats->mean}} : json(nullptr)},
        {"diagnostics",
         {{"model_name", d.model_name},
          {"index_id", d.index_id},
          {"space", d.space},
          {"index_count", d.index_count},
          {"binarized", d.binarized},
          {"preprocess_ms", as_ms(d.preprocess_us)},
          {"embed_ms", as_ms(d.embed_us)},
          {"search_ms", as_ms(d.search_us)},
          {"total_ms", as_ms(d.total_us)}}},
    };
}

json error_json(const Error& e) {
    return {{"error", {{"code", snake_case(error_name(e.code()))}, {"message", e.message()}}}};
}

json compare_json(const std::map<std::string, CompareEntry>& results) {
    json out = json::object();
    for (const auto& [id, entry] : results) {
        if (auto* r = std::get_if<QueryResult>(&entry)) {
            out[id] = *r;
        } else {
            out[id] = error_json(std::get<Error>(entry));
        }
    }
    return {{"results", out}};
}

json eval_reports_json(const std::map<std::string, EvalReport>& reports) {
    json out = json::object();
    for (const auto& [id, r] : reports) out[id] = r;
    return {{"reports", out}};
}

json dataset_summary_json(const DatasetDescriptor& d) {
    return {{"id", d.id},
            {"name", d.name},
            {"modality", to_string(d.modality)},
            {"input_dim", d.input_dim ? json(*d.input_dim) : json(nullptr)},
            {"item_count", d.items.size()}};
}

Engine::Engine(EngineOptions options)
    : options_([&] {
          if (options.runtime.plugin.upload_dir == std::nullopt) options.runtime.plugin.upload_dir = options.root / "uploads";
          return std::move(options);
      }()),
      registry_(options_.root),
      runtime_(options_.runtime),
      store_(registry_, runtime_) {}

std::string Engine::add_dataset(const json& manifest) {
    return registry_.register_dataset(manifest.get<DatasetDescriptor>());
}

void Engine::add_model(const json& model) { registry_.register_model(model.get<ModelDescriptor>()); }

IndexDescriptor Engine::build_index(const std::string& dataset_id, const std::string& model_name, bool binarize,
                                    std::optional<std::string> index_id) {
    return store_.build_index(dataset_id, model_name, binarize, std::move(index_id));
}

std::shared_ptr<const Engine::ItemTable> Engine::items_of(const std::string& dataset_id) {
    {
        std::lock_guard lock(items_mutex_);
        if (auto it = items_.find(dataset_id); it != items_.end()) return it->second;
    }
    DatasetDescriptor d = registry_.dataset(dataset_id);
    auto table = std::make_shared<ItemTable>();
    for (auto& item : d.items) table->emplace(item.id, std::move(item));
    std::lock_guard lock(items_mutex_);
    return items_.emplace(dataset_id, std::move(table)).first->second;
}

Item Engine::item(const std::string& dataset_id, const std::string& item_id) {
    auto table = items_of(dataset_id);
    auto it = table->find(item_id);
    if (it == table->end()) throw Error(ErrorCode::UnknownItem, "item '" + item_id + "' is not in dataset '" + dataset_id + "'");
    return it->second;
}

QueryResult Engine::execute_query(const std::string& index_id, const QueryRequest& request) {
    auto t0 = Clock::now();
    if (request.n == 0) throw Error(ErrorCode::InvalidRequest, "n must be >= 1");
    if (request.histogram_bins == 0) throw Error(ErrorCode::InvalidRequest, "histogram_bins must be >= 1");
    IndexDescriptor index = registry_.index(index_id);
    ModelDescriptor model = registry_.model(index.model_name);

    std::optional<ItemPayload> payload;
    const ItemRef* ref = std::get_if<ItemRef>(&request.input);
    if (ref) {
        IndexDescriptor source = registry_.index(ref->index_id);
        if (source.space != index.space || source.dim != index.dim || source.binarized != index.binarized) {
            throw Error(ErrorCode::Incompatible,
                        "item_ref from index '" + source.id + "' (space '" + source.space + "', dim " +
                            std::to_string(source.dim) + (source.binarized ? ", binary" : ", dense") +
                            ") cannot query index '" + index.id + "' (space '" + index.space + "', dim " +
                            std::to_string(index.dim) + (index.binarized ? ", binary" : ", dense") + ")");
        }
    } else {
        payload = to_payload(request.input);
        try {
            check_payload(model, *payload);
        } catch (const Error& e) {
            throw Error(ErrorCode::Incompatible, e.message());
        }
    }
    auto t1 = Clock::now();

    StoredRow query;
    if (ref) {
        query = store_.get_row(ref->index_id, ref->item_id);
    } else {
        Embedding e = runtime_.embed(model, *payload);
        if (index.binarized) {
            query = binarize_packed(e);
        } else {
            query = std::move(e);
        }
    }
    auto t2 = Clock::now();

    auto matrix = store_.load(index_id);
    std::vector<Neighbor> hits;
    if (index.binarized) {
        hits = knn_binary(*matrix, std::get<PackedCode>(query), request.n, options_.search);
    } else {
        hits = knn_dense(*matrix, std::get<Embedding>(query), request.n, options_.search);
    }
    auto t3 = Clock::now();

    QueryResult result;
    auto items = items_of(index.dataset_id);
    std::vector<double> distances;
    distances.reserve(hits.size());
    for (auto& h : hits) {
        ResultNeighbor n{h.item_id, h.distance, {}, nullptr};
        if (auto it = items->find(h.item_id); it != items->end()) {
            n.metadata = it->second.metadata;
            n.payload_preview = payload_preview(it->second.payload);
        }
        distances.push_back(h.distance);
        result.neighbors.push_back(std::move(n));
    }
    if (!distances.empty()) {
        result.stats = distance_stats(distances);
        result.histogram = histogram(distances, request.histogram_bins);
    }
    auto t4 = Clock::now();

    auto& d = result.diagnostics;
    d.model_name = model.name;
    d.index_id = index.id;
    d.space = index.space;
    d.index_count = index.count;
    d.binarized = index.binarized;
    d.preprocess_us = micros_between(t0, t1);
    d.embed_us = micros_between(t1, t2);
    d.search_us = micros_between(t2, t3);
    d.total_us = micros_between(t0, t4);
    return result;
}

std::map<std::string, CompareEntry> Engine::execute_compare(const QueryRequest& request,
                                                            const std::vector<std::string>& index_ids) {
    if (index_ids.empty()) throw Error(ErrorCode::EmptyRequest, "no index ids given");
    std::map<std::string, CompareEntry> out;
    for (const auto& id : index_ids) {
        try {
            out.insert_or_assign(id, execute_query(id, request));
        } catch (const Error& e) {
            out.insert_or_assign(id, e);
        }
    }
    return out;
}

std::vector<Neighbor> Engine::rank(const std::string& index_id, const ItemPayload& payload, std::size_t n) {
    IndexDescriptor index = registry_.index(index_id);
    ModelDescriptor model = registry_.model(index.model_name);
    Embedding e = runtime_.embed(model, payload);
    auto matrix = store_.load(index_id);
    if (matrix->count() == 0) return {};
    if (index.binarized) return knn_binary(*matrix, binarize_packed(e), n, options_.search);
    return knn_dense(*matrix, e, n, options_.search);
}

EvalReport Engine::evaluate_run(const std::string& index_id, const std::vector<EvalQuery>& queries, const Qrels& qrels,
                                const std::vector<std::size_t>& ks) {
    IndexDescriptor index = registry_.index(index_id);
    ModelDescriptor model = registry_.model(index.model_name);
    for (const auto& q : queries) check_payload(model, q.payload);
    std::vector<RankedQuery> ranked;
    ranked.reserve(queries.size());
    std::size_t count = std::max<std::size_t>(1, index.count);
    for (const auto& q : queries) {
        RankedQuery r{q.query_id, {}};
        for (auto& n : rank(index_id, q.payload, count)) r.ranking.push_back(std::move(n.item_id));
        ranked.push_back(std::move(r));
    }
    return score_rankings(ranked, qrels, ks);
}

std::map<std::string, EvalReport> Engine::compare_models(const std::vector<std::string>& index_ids,
                                                         const std::vector<EvalQuery>& queries, const Qrels& qrels,
                                                         const std::vector<std::size_t>& ks) {
    for (const auto& id : index_ids) registry_.index(id);
    std::map<std::string, EvalReport> out;
    for (const auto& id : index_ids) out[id] = evaluate_run(id, queries, qrels, ks);
    return out;
}

std::string Engine::add_upload(std::string_view bytes) {
    fs::path dir = upload_dir();
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw Error(ErrorCode::IoError, "cannot create " + dir.string() + ": " + ec.message());
    std::string name = sha256_hex(bytes).substr(0, 32);
    fs::path path = dir / name;
    if (!fs::exists(path)) atomic_write_file(path, bytes);
    return "upload:" + name;
}

}  // namespace dime
