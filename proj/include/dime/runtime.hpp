#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "dime/embedding.hpp"
#include "dime/plugin.hpp"
#include "dime/types.hpp"

namespace dime {

/// Payloads handed to one plugin session checkout during index builds.
inline constexpr std::size_t kPluginBatchSize = 64;

struct RuntimeOptions {
    std::size_t sessions_per_model = 4;
    PluginOptions plugin;
    /// Base for relative embeddings_path values of precomputed models.
    std::filesystem::path base_dir = ".";
};

/// Dispatches embedding calls to builtin embedders, plugin pools, or
/// precomputed tables. Safe to share across threads.
class EmbeddingRuntime {
public:
    explicit EmbeddingRuntime(RuntimeOptions options = {});

    /// `key` is the item id when embedding a dataset item; precomputed models
    /// look it up first and fall back to the text/uri payload string.
    Embedding embed(const ModelDescriptor& model, const ItemPayload& payload,
                    std::optional<std::string_view> key = std::nullopt);

    /// Embeds items in order. Plugin models process kPluginBatchSize items
    /// per session checkout.
    std::vector<Embedding> embed_items(const ModelDescriptor& model, std::span<const Item> items);

    const RuntimeOptions& options() const noexcept { return options_; }

private:
    using Table = std::unordered_map<std::string, Embedding>;

    std::shared_ptr<PluginPool> pool_for(const ModelDescriptor& model);
    const Table& table_for(const ModelDescriptor& model);
    Embedding lookup_precomputed(const ModelDescriptor& model, const ItemPayload& payload,
                                 std::optional<std::string_view> key);

    RuntimeOptions options_;
    std::mutex mutex_;
    std::map<std::string, std::shared_ptr<PluginPool>> pools_;
    std::map<std::string, std::shared_ptr<const Table>> tables_;
};

/// Parses a precomputed-embeddings file: one JSON object per line,
/// {"key": "...", "embedding": [...]}.
std::unordered_map<std::string, Embedding> load_precomputed(const std::filesystem::path& path, std::uint32_t dim);

}  // namespace dime
