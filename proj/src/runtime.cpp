#include "dime/runtime.hpp"

#include <cmath>
#include <fstream>

#include "dime/error.hpp"

namespace dime {

namespace fs = std::filesystem;

std::unordered_map<std::string, Embedding> load_precomputed(const fs::path& path, std::uint32_t dim) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::IoError, "cannot open precomputed embeddings " + path.string());
    std::unordered_map<std::string, Embedding> table;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        auto where = path.string() + ":" + std::to_string(lineno);
        try {
            json j = json::parse(line);
            auto key = j.at("key").get<std::string>();
            auto values = j.at("embedding").get<std::vector<float>>();
            if (values.size() != dim) {
                throw Error(ErrorCode::DimMismatch, where + ": expected " + std::to_string(dim) + " values, got " +
                                                        std::to_string(values.size()));
            }
            for (float v : values) {
                if (!std::isfinite(v)) throw Error(ErrorCode::InvalidRequest, where + ": non-finite value");
            }
            table[key] = std::move(values);
        } catch (const json::exception& e) {
            throw Error(ErrorCode::InvalidRequest, where + ": " + e.what());
        }
    }
    return table;
}

EmbeddingRuntime::EmbeddingRuntime(RuntimeOptions options) : options_(std::move(options)) {}

std::shared_ptr<PluginPool> EmbeddingRuntime::pool_for(const ModelDescriptor& model) {
    std::lock_guard lock(mutex_);
    auto& slot = pools_[model.name];
    if (!slot || !(slot->model() == model)) {
        slot = std::make_shared<PluginPool>(model, options_.sessions_per_model, options_.plugin);
    }
    return slot;
}

const EmbeddingRuntime::Table& EmbeddingRuntime::table_for(const ModelDescriptor& model) {
    std::lock_guard lock(mutex_);
    auto& slot = tables_[model.name];
    if (!slot) {
        fs::path p = *model.embeddings_path;
        if (p.is_relative()) p = options_.base_dir / p;
        slot = std::make_shared<const Table>(load_precomputed(p, model.output_dim));
    }
    return *slot;
}

Embedding EmbeddingRuntime::lookup_precomputed(const ModelDescriptor& model, const ItemPayload& payload,
                                               std::optional<std::string_view> key) {
    check_payload(model, payload);
    const Table& table = table_for(model);
    if (key) {
        if (auto it = table.find(std::string(*key)); it != table.end()) return it->second;
    }
    const std::string* fallback = nullptr;
    if (auto* t = payload.as_text()) fallback = &t->value;
    if (auto* u = payload.as_uri()) fallback = &u->value;
    if (fallback) {
        if (auto it = table.find(*fallback); it != table.end()) return it->second;
    }
    throw Error(ErrorCode::PayloadRejected, "no precomputed embedding for " +
                                                (key ? "'" + std::string(*key) + "'" : std::string("this payload")));
}

Embedding EmbeddingRuntime::embed(const ModelDescriptor& model, const ItemPayload& payload,
                                  std::optional<std::string_view> key) {
    switch (model.kind) {
        case ModelKind::BuiltinIdentity:
        case ModelKind::BuiltinTextHash:
            return embed_builtin(model, payload);
        case ModelKind::Precomputed:
            return lookup_precomputed(model, payload, key);
        case ModelKind::Subprocess: {
            check_payload(model, payload);
            auto pool = pool_for(model);
            auto lease = pool->checkout();
            return lease->embed(payload);
        }
    }
    throw Error(ErrorCode::InvalidRequest, "unknown model kind");
}

std::vector<Embedding> EmbeddingRuntime::embed_items(const ModelDescriptor& model, std::span<const Item> items) {
    std::vector<Embedding> out;
    out.reserve(items.size());
    if (model.kind != ModelKind::Subprocess) {
        for (const auto& item : items) out.push_back(embed(model, item.payload, item.id));
        return out;
    }
    auto pool = pool_for(model);
    for (std::size_t start = 0; start < items.size(); start += kPluginBatchSize) {
        auto lease = pool->checkout();
        std::size_t end = std::min(items.size(), start + kPluginBatchSize);
        for (std::size_t i = start; i < end; ++i) out.push_back(lease->embed(items[i].payload));
    }
    return out;
}

}  // namespace dime
