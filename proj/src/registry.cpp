#include "dime/registry.hpp"

#include <algorithm>
#include <fstream>
#include <mutex>
#include <sstream>

#include "dime/error.hpp"
#include "dime/fsutil.hpp"

namespace dime {

namespace fs = std::filesystem;

namespace {

constexpr const char* kRegistryFile = "registry.json";

template <class T, class Key>
auto find_by(const std::vector<T>& v, Key T::*key, const std::string& value) {
    return std::find_if(v.begin(), v.end(), [&](const T& x) { return x.*key == value; });
}

}  // namespace

void to_json(json& j, const RegistryData& r) {
    j = r.extra.is_object() ? r.extra : json::object();
    j["datasets"] = r.datasets;
    j["models"] = r.models;
    j["indexes"] = r.indexes;
}

void from_json(const json& j, RegistryData& r) {
    if (!j.is_object()) throw Error(ErrorCode::CorruptRegistry, "catalog root is not an object");
    r.datasets = j.value("datasets", json::array()).get<std::vector<DatasetDescriptor>>();
    r.models = j.value("models", json::array()).get<std::vector<ModelDescriptor>>();
    r.indexes = j.value("indexes", json::array()).get<std::vector<IndexDescriptor>>();
    r.extra = json::object();
    for (auto it = j.begin(); it != j.end(); ++it) {
        if (it.key() != "datasets" && it.key() != "models" && it.key() != "indexes") {
            r.extra[it.key()] = it.value();
        }
    }
}

void persist_registry(const RegistryData& data, const fs::path& root) {
    std::error_code ec;
    fs::create_directories(root, ec);
    if (ec) throw Error(ErrorCode::IoError, "cannot create " + root.string() + ": " + ec.message());
    atomic_write_file(root / kRegistryFile, json(data).dump(2) + "\n");
}

RegistryData load_registry(const fs::path& root) {
    fs::path file = root / kRegistryFile;
    if (!fs::exists(file)) return {};
    std::string text = read_file(file);
    try {
        return json::parse(text).get<RegistryData>();
    } catch (const json::exception& e) {
        throw Error(ErrorCode::CorruptRegistry, file.string() + ": " + e.what());
    } catch (const Error& e) {
        throw Error(ErrorCode::CorruptRegistry, file.string() + ": " + e.what());
    }
}

Registry::Registry(fs::path root) : root_(std::move(root)), data_(load_registry(*root_)) {}

void Registry::persist_locked() const {
    if (root_) persist_registry(data_, *root_);
}

std::string Registry::register_dataset(DatasetDescriptor desc) {
    validate(desc);
    std::unique_lock lock(mutex_);
    if (find_by(data_.datasets, &DatasetDescriptor::id, desc.id) != data_.datasets.end()) {
        throw Error(ErrorCode::DuplicateId, "dataset '" + desc.id + "' already exists");
    }
    std::string id = desc.id;
    data_.datasets.push_back(std::move(desc));
    try {
        persist_locked();
    } catch (...) {
        data_.datasets.pop_back();
        throw;
    }
    return id;
}

void Registry::register_model(ModelDescriptor desc) {
    validate(desc);
    std::unique_lock lock(mutex_);
    if (find_by(data_.models, &ModelDescriptor::name, desc.name) != data_.models.end()) {
        throw Error(ErrorCode::DuplicateName, "model '" + desc.name + "' already exists");
    }
    data_.models.push_back(std::move(desc));
    try {
        persist_locked();
    } catch (...) {
        data_.models.pop_back();
        throw;
    }
}

void Registry::register_index(IndexDescriptor desc) {
    if (!is_valid_id(desc.id)) throw Error(ErrorCode::InvariantViolation, "invalid index id '" + desc.id + "'");
    std::unique_lock lock(mutex_);
    if (find_by(data_.indexes, &IndexDescriptor::id, desc.id) != data_.indexes.end()) {
        throw Error(ErrorCode::DuplicateId, "index '" + desc.id + "' already exists");
    }
    if (find_by(data_.datasets, &DatasetDescriptor::id, desc.dataset_id) == data_.datasets.end()) {
        throw Error(ErrorCode::NotFound, "dataset '" + desc.dataset_id + "'");
    }
    if (find_by(data_.models, &ModelDescriptor::name, desc.model_name) == data_.models.end()) {
        throw Error(ErrorCode::NotFound, "model '" + desc.model_name + "'");
    }
    data_.indexes.push_back(std::move(desc));
    try {
        persist_locked();
    } catch (...) {
        data_.indexes.pop_back();
        throw;
    }
}

void check_compatible(const DatasetDescriptor& dataset, const ModelDescriptor& model) {
    std::set<PayloadKind> kinds;
    for (const auto& item : dataset.items) kinds.insert(item.payload.kind());
    for (PayloadKind k : kinds) {
        if (!model.accepts_kind(k)) {
            throw Error(ErrorCode::Incompatible, "model '" + model.name + "' does not accept " +
                                                     std::string(to_string(k)) + " payloads");
        }
    }
    if (kinds.count(PayloadKind::Vector) && dataset.input_dim != model.input_dim) {
        throw Error(ErrorCode::Incompatible,
                    "dimension mismatch: dataset input_dim " + std::to_string(dataset.input_dim.value_or(0)) +
                        " vs model input_dim " + std::to_string(model.input_dim.value_or(0)));
    }
}

void Registry::validate_compatibility(const std::string& dataset_id, const std::string& model_name) const {
    std::shared_lock lock(mutex_);
    auto d = find_by(data_.datasets, &DatasetDescriptor::id, dataset_id);
    if (d == data_.datasets.end()) throw Error(ErrorCode::NotFound, "dataset '" + dataset_id + "'");
    auto m = find_by(data_.models, &ModelDescriptor::name, model_name);
    if (m == data_.models.end()) throw Error(ErrorCode::NotFound, "model '" + model_name + "'");
    check_compatible(*d, *m);
}

std::optional<DatasetDescriptor> Registry::find_dataset(const std::string& id) const {
    std::shared_lock lock(mutex_);
    auto it = find_by(data_.datasets, &DatasetDescriptor::id, id);
    if (it == data_.datasets.end()) return std::nullopt;
    return *it;
}

std::optional<ModelDescriptor> Registry::find_model(const std::string& name) const {
    std::shared_lock lock(mutex_);
    auto it = find_by(data_.models, &ModelDescriptor::name, name);
    if (it == data_.models.end()) return std::nullopt;
    return *it;
}

std::optional<IndexDescriptor> Registry::find_index(const std::string& id) const {
    std::shared_lock lock(mutex_);
    auto it = find_by(data_.indexes, &IndexDescriptor::id, id);
    if (it == data_.indexes.end()) return std::nullopt;
    return *it;
}

DatasetDescriptor Registry::dataset(const std::string& id) const {
    auto d = find_dataset(id);
    if (!d) throw Error(ErrorCode::NotFound, "dataset '" + id + "'");
    return std::move(*d);
}

ModelDescriptor Registry::model(const std::string& name) const {
    auto m = find_model(name);
    if (!m) throw Error(ErrorCode::NotFound, "model '" + name + "'");
    return std::move(*m);
}

IndexDescriptor Registry::index(const std::string& id) const {
    auto x = find_index(id);
    if (!x) throw Error(ErrorCode::NotFound, "index '" + id + "'");
    return std::move(*x);
}

std::vector<DatasetDescriptor> Registry::list_datasets() const {
    std::shared_lock lock(mutex_);
    return data_.datasets;
}

std::vector<ModelDescriptor> Registry::list_models() const {
    std::shared_lock lock(mutex_);
    return data_.models;
}

std::vector<IndexDescriptor> Registry::list_indexes() const {
    std::shared_lock lock(mutex_);
    return data_.indexes;
}

RegistryData Registry::snapshot() const {
    std::shared_lock lock(mutex_);
    return data_;
}

}  // namespace dime
