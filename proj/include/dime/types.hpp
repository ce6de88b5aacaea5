#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <json.hpp>

namespace dime {

using json = nlohmann::json;

/// Dense embedding or raw vector payload.
using Vector = std::vector<float>;

enum class PayloadKind { Vector, Text, Uri };

struct TextPayload {
    std::string value;
    bool operator==(const TextPayload&) const = default;
};

struct UriPayload {
    std::string value;
    bool operator==(const UriPayload&) const = default;
};

/// One media object in its pre-vectorization form: a vector, a text, or a
/// reference to external media that only plugins know how to decode.
class ItemPayload {
public:
    ItemPayload() = default;
    ItemPayload(Vector v) : value_(std::move(v)) {}
    ItemPayload(TextPayload t) : value_(std::move(t)) {}
    ItemPayload(UriPayload u) : value_(std::move(u)) {}

    static ItemPayload text(std::string s) { return TextPayload{std::move(s)}; }
    static ItemPayload uri(std::string s) { return UriPayload{std::move(s)}; }

    PayloadKind kind() const noexcept { return static_cast<PayloadKind>(value_.index()); }

    const Vector* as_vector() const noexcept { return std::get_if<Vector>(&value_); }
    const TextPayload* as_text() const noexcept { return std::get_if<TextPayload>(&value_); }
    const UriPayload* as_uri() const noexcept { return std::get_if<UriPayload>(&value_); }

    bool operator==(const ItemPayload&) const = default;

private:
    std::variant<Vector, TextPayload, UriPayload> value_;
};

std::string_view to_string(PayloadKind kind) noexcept;
PayloadKind payload_kind_from_string(std::string_view s);

/// True iff s matches [A-Za-z0-9_.:-]+.
bool is_valid_id(std::string_view s) noexcept;

struct Item {
    std::string id;
    ItemPayload payload;
    std::map<std::string, std::string> metadata;
    json extra = json::object();

    bool operator==(const Item&) const = default;
};

enum class Modality { Vector, Text, Image, Audio, Video, Other };

std::string_view to_string(Modality m) noexcept;
Modality modality_from_string(std::string_view s);

struct DatasetDescriptor {
    std::string id;
    std::string name;
    Modality modality = Modality::Other;
    std::vector<Item> items;
    std::optional<std::uint32_t> input_dim;
    json extra = json::object();

    bool operator==(const DatasetDescriptor&) const = default;
};

enum class ModelKind { BuiltinIdentity, BuiltinTextHash, Subprocess, Precomputed };

std::string_view to_string(ModelKind k) noexcept;
ModelKind model_kind_from_string(std::string_view s);

struct ModelDescriptor {
    std::string name;
    ModelKind kind = ModelKind::BuiltinIdentity;
    std::set<PayloadKind> accepts;
    std::optional<std::uint32_t> input_dim;
    std::uint32_t output_dim = 0;
    std::string space;
    std::optional<std::string> command;
    std::optional<std::string> embeddings_path;
    json extra = json::object();

    bool accepts_kind(PayloadKind k) const { return accepts.count(k) != 0; }
    bool operator==(const ModelDescriptor&) const = default;
};

struct IndexDescriptor {
    std::string id;
    std::string dataset_id;
    std::string model_name;
    bool binarized = false;
    std::uint32_t dim = 0;
    std::uint64_t count = 0;
    std::string space;
    std::string data_path;  // relative to the registry root
    std::string checksum;   // hex SHA-256 of the data section
    std::string created_at;
    json extra = json::object();

    bool operator==(const IndexDescriptor&) const = default;
};

/// Throws InvariantViolation naming the first offending item.
void validate(const DatasetDescriptor& desc);
/// Throws MissingField or InvariantViolation.
void validate(const ModelDescriptor& desc);

// JSON mapping. Unknown keys land in `extra` and are written back verbatim.
void to_json(json& j, const ItemPayload& p);
void to_json(json& j, const Item& item);
void from_json(const json& j, Item& item);
void to_json(json& j, const DatasetDescriptor& d);
void from_json(const json& j, DatasetDescriptor& d);
void to_json(json& j, const ModelDescriptor& m);
void from_json(const json& j, ModelDescriptor& m);
void to_json(json& j, const IndexDescriptor& x);
void from_json(const json& j, IndexDescriptor& x);

/// Reads the single payload variant out of an object carrying exactly one of
/// "vector", "text" or "uri". Throws InvalidRequest otherwise.
ItemPayload payload_from_json(const json& j);

/// UTC timestamp of the form 2026-01-31T12:00:00Z.
std::string utc_timestamp_now();

}  // namespace dime
