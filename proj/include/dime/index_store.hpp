#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <unordered_map>
#include <variant>
#include <vector>

#include "dime/embedding.hpp"
#include "dime/registry.hpp"
#include "dime/runtime.hpp"

namespace dime {

enum class DType : std::uint8_t { DenseF32 = 0, PackedBinary = 1 };

/// Row-major embedding storage plus the item id of every row.
/// Immutable once constructed; share via shared_ptr<const EmbeddingMatrix>.
class EmbeddingMatrix {
public:
    EmbeddingMatrix() = default;

    static EmbeddingMatrix dense(std::uint32_t dim, std::vector<std::string> ids, std::vector<float> values);
    /// Throws MalformedCode if any row has padding bits set.
    static EmbeddingMatrix packed(std::uint32_t dim, std::vector<std::string> ids, std::vector<std::uint8_t> bytes);

    DType dtype() const noexcept { return dtype_; }
    std::uint32_t dim() const noexcept { return dim_; }
    std::size_t count() const noexcept { return ids_.size(); }
    /// Bytes per row in the data section.
    std::size_t row_stride() const noexcept;

    std::span<const float> dense_row(std::size_t row) const;
    std::span<const std::uint8_t> packed_row(std::size_t row) const;

    /// The whole data section as it is laid out on disk.
    std::span<const std::uint8_t> data_bytes() const noexcept;

    const std::vector<std::string>& ids() const noexcept { return ids_; }
    /// Position of each row's id in ascending byte order; used for tie-breaks.
    const std::vector<std::uint32_t>& id_rank() const noexcept { return id_rank_; }
    std::optional<std::size_t> find_row(std::string_view id) const;

    bool operator==(const EmbeddingMatrix& other) const;

private:
    void index_ids();

    DType dtype_ = DType::DenseF32;
    std::uint32_t dim_ = 0;
    std::vector<std::string> ids_;
    std::vector<float> dense_;
    std::vector<std::uint8_t> packed_;
    std::vector<std::uint32_t> id_rank_;
    std::vector<std::uint32_t> sorted_rows_;  // rows in ascending id order
};

inline constexpr std::size_t kIndexHeaderSize = 20;
inline constexpr std::uint16_t kIndexFormatVersion = 1;

/// Provenance written to the sidecar manifest alongside ids and checksum.
struct IndexProvenance {
    std::string index_id;  // defaults to the data file stem
    std::string dataset_id;
    std::string model;
    std::string space;
    std::string created_at;
};

/// Sidecar manifest path for a data file: <dir>/<stem>.manifest.json.
std::filesystem::path manifest_path_for(const std::filesystem::path& data_path);

/// Writes the data file and its sidecar manifest (both atomically) and
/// returns the hex SHA-256 of the data section.
std::string write_index_file(const EmbeddingMatrix& m, const std::filesystem::path& path,
                             const IndexProvenance& provenance = {});

/// Reads a data file, taking ids and the expected checksum from its sidecar
/// manifest. Throws BadMagic, UnsupportedVersion, TruncatedFile or
/// ChecksumMismatch.
EmbeddingMatrix read_index_file(const std::filesystem::path& path);

/// A stored row: dense values or a packed code.
using StoredRow = std::variant<Embedding, PackedCode>;

/// Extraction workflow: builds indexes into the registry root and caches
/// loaded matrices.
class IndexStore {
public:
    IndexStore(Registry& registry, EmbeddingRuntime& runtime);

    /// All-or-nothing build. `index_id` defaults to
    /// "<dataset>.<model>.<dense|bin>" with characters outside the id
    /// alphabet replaced by '_'. Throws Conflict while the same id is being
    /// built and DuplicateId if it already exists.
    IndexDescriptor build_index(const std::string& dataset_id, const std::string& model_name, bool binarize,
                                std::optional<std::string> index_id = std::nullopt);

    std::shared_ptr<const EmbeddingMatrix> load(const std::string& index_id);

    /// Throws NotFound for an unknown index and UnknownItem for an unknown item.
    StoredRow get_row(const std::string& index_id, const std::string& item_id);

    static std::string default_index_id(const std::string& dataset_id, const std::string& model_name, bool binarize);

private:
    Registry& registry_;
    EmbeddingRuntime& runtime_;
    std::mutex mutex_;
    std::set<std::string> building_;
    std::map<std::string, std::shared_ptr<const EmbeddingMatrix>> cache_;
};

}  // namespace dime
