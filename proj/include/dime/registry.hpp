#pragma once

#include <filesystem>
#include <optional>
#include <shared_mutex>
#include <string>
#include <vector>

#include "dime/types.hpp"

namespace dime {

/// Plain catalog contents. Value type: copies are snapshots.
struct RegistryData {
    std::vector<DatasetDescriptor> datasets;
    std::vector<ModelDescriptor> models;
    std::vector<IndexDescriptor> indexes;
    json extra = json::object();

    bool operator==(const RegistryData&) const = default;
};

void to_json(json& j, const RegistryData& r);
void from_json(const json& j, RegistryData& r);

/// Writes <root>/registry.json via temp file + rename.
void persist_registry(const RegistryData& data, const std::filesystem::path& root);
/// Missing registry.json yields an empty catalog; a malformed one throws CorruptRegistry.
RegistryData load_registry(const std::filesystem::path& root);

/// Catalog of datasets, models and indexes.
///
/// Mutations serialize through a writer lock and are persisted before the
/// call returns when the registry is backed by a directory. Lookups return
/// copies taken under a shared lock.
class Registry {
public:
    /// In-memory registry, never persisted.
    Registry() = default;
    /// Loads (or creates) the catalog under root.
    explicit Registry(std::filesystem::path root);

    const std::optional<std::filesystem::path>& root() const noexcept { return root_; }

    std::string register_dataset(DatasetDescriptor desc);
    void register_model(ModelDescriptor desc);
    void register_index(IndexDescriptor desc);

    /// Throws NotFound or Incompatible.
    void validate_compatibility(const std::string& dataset_id, const std::string& model_name) const;

    std::optional<DatasetDescriptor> find_dataset(const std::string& id) const;
    std::optional<ModelDescriptor> find_model(const std::string& name) const;
    std::optional<IndexDescriptor> find_index(const std::string& id) const;

    DatasetDescriptor dataset(const std::string& id) const;
    ModelDescriptor model(const std::string& name) const;
    IndexDescriptor index(const std::string& id) const;

    std::vector<DatasetDescriptor> list_datasets() const;
    std::vector<ModelDescriptor> list_models() const;
    std::vector<IndexDescriptor> list_indexes() const;

    RegistryData snapshot() const;

private:
    void persist_locked() const;

    std::optional<std::filesystem::path> root_;
    mutable std::shared_mutex mutex_;
    RegistryData data_;
};

/// Compatibility rule shared by the registry and the index builder.
void check_compatible(const DatasetDescriptor& dataset, const ModelDescriptor& model);

}  // namespace dime
