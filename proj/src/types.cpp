#include "dime/types.hpp"

#include <array>
#include <chrono>
#include <cmath>
#include <ctime>

#include "dime/error.hpp"

namespace dime {

namespace {

const std::array<std::string_view, 3> kPayloadNames = {"vector", "text", "uri"};
const std::array<std::string_view, 6> kModalityNames = {"vector", "text", "image",
                                                        "audio",  "video", "other"};
const std::array<std::string_view, 4> kModelKindNames = {"builtin_identity", "builtin_text_hash",
                                                         "subprocess", "precomputed"};

template <class Enum, std::size_t N>
Enum enum_from(const std::array<std::string_view, N>& names, std::string_view s,
               std::string_view what) {
    for (std::size_t i = 0; i < N; ++i) {
        if (names[i] == s) return static_cast<Enum>(i);
    }
    throw Error(ErrorCode::InvalidRequest, "unknown " + std::string(what) + " '" + std::string(s) + "'");
}

json::object_t extra_fields(const json& j, std::initializer_list<std::string_view> known) {
    json::object_t out;
    for (auto it = j.begin(); it != j.end(); ++it) {
        bool is_known = false;
        for (auto k : known) {
            if (it.key() == k) {
                is_known = true;
                break;
            }
        }
        if (!is_known) out.emplace(it.key(), it.value());
    }
    return out;
}

void merge_extra(json& j, const json& extra) {
    if (!extra.is_object()) return;
    for (auto it = extra.begin(); it != extra.end(); ++it) {
        if (!j.contains(it.key())) j[it.key()] = it.value();
    }
}

const json& require(const json& j, const char* key) {
    if (!j.is_object() || !j.contains(key)) {
        throw Error(ErrorCode::InvalidRequest, std::string("missing field '") + key + "'");
    }
    return j.at(key);
}

std::string require_string(const json& j, const char* key) {
    const json& v = require(j, key);
    if (!v.is_string()) throw Error(ErrorCode::InvalidRequest, std::string("field '") + key + "' must be a string");
    return v.get<std::string>();
}

std::optional<std::uint32_t> optional_dim(const json& j, const char* key) {
    if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
    const json& v = j.at(key);
    if (!v.is_number_integer() || v.get<std::int64_t>() <= 0 || v.get<std::int64_t>() > UINT32_MAX) {
        throw Error(ErrorCode::InvalidRequest, std::string("field '") + key + "' must be a positive integer");
    }
    return v.get<std::uint32_t>();
}

std::optional<std::string> optional_string(const json& j, const char* key) {
    if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
    if (!j.at(key).is_string()) throw Error(ErrorCode::InvalidRequest, std::string("field '") + key + "' must be a string");
    return j.at(key).get<std::string>();
}

}  // namespace

std::string_view to_string(PayloadKind kind) noexcept { return kPayloadNames[static_cast<std::size_t>(kind)]; }
PayloadKind payload_kind_from_string(std::string_view s) { return enum_from<PayloadKind>(kPayloadNames, s, "payload kind"); }
std::string_view to_string(Modality m) noexcept { return kModalityNames[static_cast<std::size_t>(m)]; }
Modality modality_from_string(std::string_view s) { return enum_from<Modality>(kModalityNames, s, "modality"); }
std::string_view to_string(ModelKind k) noexcept { return kModelKindNames[static_cast<std::size_t>(k)]; }
ModelKind model_kind_from_string(std::string_view s) { return enum_from<ModelKind>(kModelKindNames, s, "model kind"); }

bool is_valid_id(std::string_view s) noexcept {
    if (s.empty()) return false;
    for (unsigned char c : s) {
        bool ok = (c >= 'A' && c <= 'Z') || (c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') ||
                  c == '_' || c == '.' || c == ':' || c == '-';
        if (!ok) return false;
    }
    return true;
}

void validate(const DatasetDescriptor& desc) {
    if (!is_valid_id(desc.id)) {
        throw Error(ErrorCode::InvariantViolation, "invalid dataset id '" + desc.id + "'");
    }
    if (desc.input_dim && *desc.input_dim == 0) {
        throw Error(ErrorCode::InvariantViolation, "input_dim must be positive");
    }
    std::set<std::string_view> seen;
    bool any_vector = false;
    for (const auto& item : desc.items) {
        if (!is_valid_id(item.id)) {
            throw Error(ErrorCode::InvariantViolation, "item '" + item.id + "': invalid id");
        }
        if (!seen.insert(item.id).second) {
            throw Error(ErrorCode::InvariantViolation, "item '" + item.id + "': duplicate id");
        }
        if (const Vector* v = item.payload.as_vector()) {
            any_vector = true;
            if (!desc.input_dim) {
                throw Error(ErrorCode::InvariantViolation,
                            "item '" + item.id + "': vector payload but dataset has no input_dim");
            }
            if (v->size() != *desc.input_dim) {
                throw Error(ErrorCode::InvariantViolation,
                            "item '" + item.id + "': vector length " + std::to_string(v->size()) +
                                " != input_dim " + std::to_string(*desc.input_dim));
            }
            for (float x : *v) {
                if (!std::isfinite(x)) {
                    throw Error(ErrorCode::InvariantViolation, "item '" + item.id + "': non-finite component");
                }
            }
        }
    }
    if (desc.input_dim && !any_vector) {
        throw Error(ErrorCode::InvariantViolation, "input_dim given but dataset has no vector payloads");
    }
}

void validate(const ModelDescriptor& desc) {
    if (desc.name.empty()) throw Error(ErrorCode::MissingField, "model name is empty");
    if (desc.output_dim < 1) throw Error(ErrorCode::InvariantViolation, "output_dim must be >= 1");
    if (desc.accepts.empty()) throw Error(ErrorCode::InvariantViolation, "accepts must be nonempty");
    bool takes_vectors = desc.accepts_kind(PayloadKind::Vector);
    if (takes_vectors && !desc.input_dim) throw Error(ErrorCode::MissingField, "input_dim required when accepting vectors");
    if (!takes_vectors && desc.input_dim) {
        throw Error(ErrorCode::InvariantViolation, "input_dim given but model does not accept vectors");
    }
    bool is_subprocess = desc.kind == ModelKind::Subprocess;
    bool is_precomputed = desc.kind == ModelKind::Precomputed;
    if (is_subprocess && (!desc.command || desc.command->empty())) {
        throw Error(ErrorCode::MissingField, "subprocess model requires 'command'");
    }
    if (!is_subprocess && desc.command) {
        throw Error(ErrorCode::InvariantViolation, "'command' is only valid for subprocess models");
    }
    if (is_precomputed && (!desc.embeddings_path || desc.embeddings_path->empty())) {
        throw Error(ErrorCode::MissingField, "precomputed model requires 'embeddings_path'");
    }
    if (!is_precomputed && desc.embeddings_path) {
        throw Error(ErrorCode::InvariantViolation, "'embeddings_path' is only valid for precomputed models");
    }
    switch (desc.kind) {
        case ModelKind::BuiltinIdentity:
            if (desc.accepts != std::set{PayloadKind::Vector}) {
                throw Error(ErrorCode::InvariantViolation, "builtin_identity accepts only vectors");
            }
            if (*desc.input_dim != desc.output_dim) {
                throw Error(ErrorCode::InvariantViolation, "builtin_identity requires input_dim == output_dim");
            }
            break;
        case ModelKind::BuiltinTextHash:
            if (desc.accepts != std::set{PayloadKind::Text}) {
                throw Error(ErrorCode::InvariantViolation, "builtin_text_hash accepts only text");
            }
            break;
        default:
            break;
    }
}

ItemPayload payload_from_json(const json& j) {
    int present = int(j.contains("vector")) + int(j.contains("text")) + int(j.contains("uri"));
    if (present != 1) {
        throw Error(ErrorCode::InvalidRequest, "exactly one of 'vector', 'text', 'uri' is required");
    }
    if (j.contains("vector")) {
        const json& v = j.at("vector");
        if (!v.is_array()) throw Error(ErrorCode::InvalidRequest, "'vector' must be an array of numbers");
        Vector out;
        out.reserve(v.size());
        for (const auto& x : v) {
            if (!x.is_number()) throw Error(ErrorCode::InvalidRequest, "'vector' must be an array of numbers");
            out.push_back(x.get<float>());
        }
        return out;
    }
    if (j.contains("text")) return ItemPayload::text(require_string(j, "text"));
    return ItemPayload::uri(require_string(j, "uri"));
}

void to_json(json& j, const ItemPayload& p) {
    j = json::object();
    if (const Vector* v = p.as_vector()) {
        j["vector"] = *v;
    } else if (const TextPayload* t = p.as_text()) {
        j["text"] = t->value;
    } else {
        j["uri"] = p.as_uri()->value;
    }
}

void to_json(json& j, const Item& item) {
    to_json(j, item.payload);
    j["id"] = item.id;
    j["metadata"] = item.metadata;
    merge_extra(j, item.extra);
}

void from_json(const json& j, Item& item) {
    item.id = require_string(j, "id");
    item.payload = payload_from_json(j);
    item.metadata.clear();
    if (j.contains("metadata") && !j.at("metadata").is_null()) {
        const json& md = j.at("metadata");
        if (!md.is_object()) throw Error(ErrorCode::InvalidRequest, "'metadata' must be an object");
        for (auto it = md.begin(); it != md.end(); ++it) {
            item.metadata[it.key()] = it.value().is_string() ? it.value().get<std::string>() : it.value().dump();
        }
    }
    item.extra = extra_fields(j, {"id", "vector", "text", "uri", "metadata"});
}

void to_json(json& j, const DatasetDescriptor& d) {
    j = json::object();
    j["id"] = d.id;
    j["name"] = d.name;
    j["modality"] = to_string(d.modality);
    j["input_dim"] = d.input_dim ? json(*d.input_dim) : json(nullptr);
    j["items"] = d.items;
    merge_extra(j, d.extra);
}

void from_json(const json& j, DatasetDescriptor& d) {
    if (!j.is_object()) throw Error(ErrorCode::InvalidRequest, "dataset must be a JSON object");
    d.name = j.contains("name") && j.at("name").is_string() ? j.at("name").get<std::string>() : std::string{};
    d.id = optional_string(j, "id").value_or(d.name);
    d.modality = modality_from_string(j.value("modality", std::string("other")));
    d.input_dim = optional_dim(j, "input_dim");
    const json& items = require(j, "items");
    if (!items.is_array()) throw Error(ErrorCode::InvalidRequest, "'items' must be an array");
    d.items = items.get<std::vector<Item>>();
    d.extra = extra_fields(j, {"id", "name", "modality", "input_dim", "items"});
}

void to_json(json& j, const ModelDescriptor& m) {
    j = json::object();
    j["name"] = m.name;
    j["kind"] = to_string(m.kind);
    json accepts = json::array();
    for (auto k : m.accepts) accepts.push_back(to_string(k));
    j["accepts"] = accepts;
    j["input_dim"] = m.input_dim ? json(*m.input_dim) : json(nullptr);
    j["output_dim"] = m.output_dim;
    j["space"] = m.space;
    if (m.command) j["command"] = *m.command;
    if (m.embeddings_path) j["embeddings_path"] = *m.embeddings_path;
    merge_extra(j, m.extra);
}

void from_json(const json& j, ModelDescriptor& m) {
    if (!j.is_object()) throw Error(ErrorCode::InvalidRequest, "model must be a JSON object");
    m.name = require_string(j, "name");
    m.kind = model_kind_from_string(require_string(j, "kind"));
    m.accepts.clear();
    if (j.contains("accepts")) {
        const json& a = j.at("accepts");
        if (!a.is_array()) throw Error(ErrorCode::InvalidRequest, "'accepts' must be an array");
        for (const auto& k : a) {
            if (!k.is_string()) throw Error(ErrorCode::InvalidRequest, "'accepts' entries must be strings");
            m.accepts.insert(payload_kind_from_string(k.get<std::string>()));
        }
    } else if (m.kind == ModelKind::BuiltinIdentity) {
        m.accepts = {PayloadKind::Vector};
    } else if (m.kind == ModelKind::BuiltinTextHash) {
        m.accepts = {PayloadKind::Text};
    }
    m.input_dim = optional_dim(j, "input_dim");
    auto out = optional_dim(j, "output_dim");
    if (!out) throw Error(ErrorCode::MissingField, "missing field 'output_dim'");
    m.output_dim = *out;
    if (m.kind == ModelKind::BuiltinIdentity && !m.input_dim) m.input_dim = m.output_dim;
    m.space = j.contains("space") && j.at("space").is_string() ? j.at("space").get<std::string>() : std::string{};
    m.command = optional_string(j, "command");
    m.embeddings_path = optional_string(j, "embeddings_path");
    m.extra = extra_fields(j, {"name", "kind", "accepts", "input_dim", "output_dim", "space", "command",
                               "embeddings_path"});
}

void to_json(json& j, const IndexDescriptor& x) {
    j = json::object();
    j["id"] = x.id;
    j["dataset_id"] = x.dataset_id;
    j["model_name"] = x.model_name;
    j["binarized"] = x.binarized;
    j["dim"] = x.dim;
    j["count"] = x.count;
    j["space"] = x.space;
    j["data_path"] = x.data_path;
    j["checksum"] = x.checksum;
    j["created_at"] = x.created_at;
    merge_extra(j, x.extra);
}

void from_json(const json& j, IndexDescriptor& x) {
    if (!j.is_object()) throw Error(ErrorCode::InvalidRequest, "index must be a JSON object");
    x.id = require_string(j, "id");
    x.dataset_id = require_string(j, "dataset_id");
    x.model_name = require_string(j, "model_name");
    x.binarized = require(j, "binarized").get<bool>();
    x.dim = require(j, "dim").get<std::uint32_t>();
    x.count = require(j, "count").get<std::uint64_t>();
    x.space = require_string(j, "space");
    x.data_path = require_string(j, "data_path");
    x.checksum = require_string(j, "checksum");
    x.created_at = require_string(j, "created_at");
    x.extra = extra_fields(j, {"id", "dataset_id", "model_name", "binarized", "dim", "count", "space",
                               "data_path", "checksum", "created_at"});
}

std::string utc_timestamp_now() {
    std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

}  // namespace dime
