#include "dime/index_store.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <numeric>

#include "dime/error.hpp"
#include "dime/fsutil.hpp"

namespace dime {

namespace fs = std::filesystem;

static_assert(std::endian::native == std::endian::little, "index format I/O assumes a little-endian host");

EmbeddingMatrix EmbeddingMatrix::dense(std::uint32_t dim, std::vector<std::string> ids, std::vector<float> values) {
    if (dim == 0) throw Error(ErrorCode::InvalidRequest, "matrix dim must be >= 1");
    if (values.size() != ids.size() * dim) {
        throw Error(ErrorCode::InvalidRequest, "dense storage holds " + std::to_string(values.size()) +
                                                   " values, expected " + std::to_string(ids.size() * dim));
    }
    EmbeddingMatrix m;
    m.dtype_ = DType::DenseF32;
    m.dim_ = dim;
    m.ids_ = std::move(ids);
    m.dense_ = std::move(values);
    m.index_ids();
    return m;
}

EmbeddingMatrix EmbeddingMatrix::packed(std::uint32_t dim, std::vector<std::string> ids,
                                        std::vector<std::uint8_t> bytes) {
    if (dim == 0) throw Error(ErrorCode::InvalidRequest, "matrix dim must be >= 1");
    std::size_t stride = packed_stride(dim);
    if (bytes.size() != ids.size() * stride) {
        throw Error(ErrorCode::InvalidRequest, "packed storage holds " + std::to_string(bytes.size()) +
                                                   " bytes, expected " + std::to_string(ids.size() * stride));
    }
    for (std::size_t r = 0; r < ids.size(); ++r) {
        check_packed(std::span(bytes).subspan(r * stride, stride), dim);
    }
    EmbeddingMatrix m;
    m.dtype_ = DType::PackedBinary;
    m.dim_ = dim;
    m.ids_ = std::move(ids);
    m.packed_ = std::move(bytes);
    m.index_ids();
    return m;
}

void EmbeddingMatrix::index_ids() {
    std::vector<std::uint32_t> order(ids_.size());
    std::iota(order.begin(), order.end(), 0u);
    std::sort(order.begin(), order.end(), [&](std::uint32_t a, std::uint32_t b) { return ids_[a] < ids_[b]; });
    id_rank_.assign(ids_.size(), 0);
    for (std::uint32_t pos = 0; pos < order.size(); ++pos) {
        id_rank_[order[pos]] = pos;
        if (pos > 0 && ids_[order[pos]] == ids_[order[pos - 1]]) {
            throw Error(ErrorCode::InvariantViolation, "duplicate row id '" + ids_[order[pos]] + "'");
        }
    }
    sorted_rows_ = std::move(order);
}

std::size_t EmbeddingMatrix::row_stride() const noexcept {
    return dtype_ == DType::DenseF32 ? std::size_t{dim_} * sizeof(float) : packed_stride(dim_);
}

std::span<const float> EmbeddingMatrix::dense_row(std::size_t row) const {
    return std::span(dense_).subspan(row * dim_, dim_);
}

std::span<const std::uint8_t> EmbeddingMatrix::packed_row(std::size_t row) const {
    std::size_t stride = packed_stride(dim_);
    return std::span(packed_).subspan(row * stride, stride);
}

std::span<const std::uint8_t> EmbeddingMatrix::data_bytes() const noexcept {
    if (dtype_ == DType::DenseF32) {
        return {reinterpret_cast<const std::uint8_t*>(dense_.data()), dense_.size() * sizeof(float)};
    }
    return packed_;
}

std::optional<std::size_t> EmbeddingMatrix::find_row(std::string_view id) const {
    auto it = std::lower_bound(sorted_rows_.begin(), sorted_rows_.end(), id,
                               [&](std::uint32_t row, std::string_view key) { return ids_[row] < key; });
    if (it == sorted_rows_.end() || ids_[*it] != id) return std::nullopt;
    return *it;
}

bool EmbeddingMatrix::operator==(const EmbeddingMatrix& other) const {
    auto a = data_bytes();
    auto b = other.data_bytes();
    return dtype_ == other.dtype_ && dim_ == other.dim_ && ids_ == other.ids_ && a.size() == b.size() &&
           std::equal(a.begin(), a.end(), b.begin());
}

namespace {

template <class T>
void put_le(std::string& out, T v) {
    char buf[sizeof(T)];
    std::memcpy(buf, &v, sizeof(T));
    out.append(buf, sizeof(T));
}

template <class T>
T get_le(const std::string& in, std::size_t offset) {
    T v;
    std::memcpy(&v, in.data() + offset, sizeof(T));
    return v;
}

}  // namespace

fs::path manifest_path_for(const fs::path& data_path) {
    return data_path.parent_path() / (data_path.stem().string() + ".manifest.json");
}

std::string write_index_file(const EmbeddingMatrix& m, const fs::path& path, const IndexProvenance& provenance) {
    auto data = m.data_bytes();
    std::string file;
    file.reserve(kIndexHeaderSize + data.size());
    file.append("DIME", 4);
    put_le<std::uint16_t>(file, kIndexFormatVersion);
    put_le<std::uint8_t>(file, static_cast<std::uint8_t>(m.dtype()));
    put_le<std::uint8_t>(file, 0);
    put_le<std::uint32_t>(file, m.dim());
    put_le<std::uint64_t>(file, m.count());
    file.append(reinterpret_cast<const char*>(data.data()), data.size());

    std::string checksum = sha256_hex(data);

    json manifest = {
        {"index_id", provenance.index_id.empty() ? path.stem().string() : provenance.index_id},
        {"dataset_id", provenance.dataset_id},
        {"model", provenance.model},
        {"space", provenance.space},
        {"binarized", m.dtype() == DType::PackedBinary},
        {"dim", m.dim()},
        {"count", m.count()},
        {"ids", m.ids()},
        {"sha256", checksum},
        {"created_at", provenance.created_at.empty() ? utc_timestamp_now() : provenance.created_at},
    };
    atomic_write_file(path, file);
    atomic_write_file(manifest_path_for(path), manifest.dump(2) + "\n");
    return checksum;
}

EmbeddingMatrix read_index_file(const fs::path& path) {
    std::string file = read_file(path);
    if (file.size() >= 4 && std::memcmp(file.data(), "DIME", 4) != 0) {
        throw Error(ErrorCode::BadMagic, path.string() + " is not an index data file");
    }
    if (file.size() < kIndexHeaderSize) throw Error(ErrorCode::TruncatedFile, path.string() + ": short header");
    auto version = get_le<std::uint16_t>(file, 4);
    if (version != kIndexFormatVersion) {
        throw Error(ErrorCode::UnsupportedVersion, path.string() + ": format version " + std::to_string(version));
    }
    auto dtype_raw = get_le<std::uint8_t>(file, 6);
    if (dtype_raw > 1) throw Error(ErrorCode::BadMagic, path.string() + ": unknown dtype " + std::to_string(dtype_raw));
    auto dtype = static_cast<DType>(dtype_raw);
    auto dim = get_le<std::uint32_t>(file, 8);
    auto count = get_le<std::uint64_t>(file, 12);
    std::size_t stride = dtype == DType::DenseF32 ? std::size_t{dim} * sizeof(float) : packed_stride(dim);
    std::size_t expected = kIndexHeaderSize + stride * count;
    if (file.size() != expected) {
        throw Error(ErrorCode::TruncatedFile, path.string() + ": " + std::to_string(file.size()) + " bytes, header implies " +
                                                  std::to_string(expected));
    }

    json manifest;
    fs::path mpath = manifest_path_for(path);
    try {
        manifest = json::parse(read_file(mpath));
    } catch (const json::exception& e) {
        throw Error(ErrorCode::IoError, mpath.string() + ": " + e.what());
    }
    std::string want = manifest.value("sha256", std::string{});
    std::string_view data(file.data() + kIndexHeaderSize, file.size() - kIndexHeaderSize);
    std::string got = sha256_hex(data);
    if (want != got) throw Error(ErrorCode::ChecksumMismatch, path.string() + ": sha256 " + got + " != manifest " + want);

    std::vector<std::string> ids;
    try {
        ids = manifest.at("ids").get<std::vector<std::string>>();
    } catch (const json::exception& e) {
        throw Error(ErrorCode::IoError, mpath.string() + ": " + e.what());
    }
    if (ids.size() != count) {
        throw Error(ErrorCode::ChecksumMismatch, mpath.string() + ": " + std::to_string(ids.size()) +
                                                     " ids for " + std::to_string(count) + " rows");
    }
    if (dtype == DType::DenseF32) {
        std::vector<float> values(std::size_t{dim} * count);
        std::memcpy(values.data(), data.data(), data.size());
        return EmbeddingMatrix::dense(dim, std::move(ids), std::move(values));
    }
    std::vector<std::uint8_t> bytes(data.begin(), data.end());
    return EmbeddingMatrix::packed(dim, std::move(ids), std::move(bytes));
}

IndexStore::IndexStore(Registry& registry, EmbeddingRuntime& runtime) : registry_(registry), runtime_(runtime) {}

std::string IndexStore::default_index_id(const std::string& dataset_id, const std::string& model_name, bool binarize) {
    std::string id = dataset_id + "." + model_name + (binarize ? ".bin" : ".dense");
    for (char& c : id) {
        if (!is_valid_id(std::string_view(&c, 1))) c = '_';
    }
    return id;
}

IndexDescriptor IndexStore::build_index(const std::string& dataset_id, const std::string& model_name, bool binarize,
                                        std::optional<std::string> index_id) {
    if (!registry_.root()) throw Error(ErrorCode::IoError, "registry has no root directory to hold index files");
    DatasetDescriptor dataset = registry_.dataset(dataset_id);
    ModelDescriptor model = registry_.model(model_name);
    check_compatible(dataset, model);

    std::string id = index_id.value_or(default_index_id(dataset_id, model_name, binarize));
    if (!is_valid_id(id)) throw Error(ErrorCode::InvalidRequest, "invalid index id '" + id + "'");
    {
        std::lock_guard lock(mutex_);
        if (building_.count(id)) throw Error(ErrorCode::Conflict, "index '" + id + "' is already being built");
        if (registry_.find_index(id)) throw Error(ErrorCode::DuplicateId, "index '" + id + "' already exists");
        building_.insert(id);
    }
    struct Release {
        IndexStore* self;
        std::string id;
        ~Release() {
            std::lock_guard lock(self->mutex_);
            self->building_.erase(id);
        }
    } release{this, id};

    std::vector<Embedding> rows = runtime_.embed_items(model, dataset.items);
    std::vector<std::string> ids;
    ids.reserve(dataset.items.size());
    for (const auto& item : dataset.items) ids.push_back(item.id);

    EmbeddingMatrix matrix;
    if (binarize) {
        std::vector<std::uint8_t> bytes;
        bytes.reserve(rows.size() * packed_stride(model.output_dim));
        for (const auto& e : rows) {
            auto code = binarize_packed(e);
            bytes.insert(bytes.end(), code.bytes.begin(), code.bytes.end());
        }
        matrix = EmbeddingMatrix::packed(model.output_dim, std::move(ids), std::move(bytes));
    } else {
        std::vector<float> values;
        values.reserve(rows.size() * model.output_dim);
        for (const auto& e : rows) values.insert(values.end(), e.begin(), e.end());
        matrix = EmbeddingMatrix::dense(model.output_dim, std::move(ids), std::move(values));
    }

    IndexDescriptor desc;
    desc.id = id;
    desc.dataset_id = dataset_id;
    desc.model_name = model_name;
    desc.binarized = binarize;
    desc.dim = model.output_dim;
    desc.count = matrix.count();
    desc.space = model.space;
    desc.data_path = (fs::path("indexes") / (id + ".dime")).string();
    desc.created_at = utc_timestamp_now();

    fs::path root = *registry_.root();
    fs::path data_path = root / desc.data_path;
    std::error_code ec;
    fs::create_directories(data_path.parent_path(), ec);
    if (ec) throw Error(ErrorCode::IoError, "cannot create " + data_path.parent_path().string() + ": " + ec.message());
    desc.checksum = write_index_file(matrix, data_path,
                                     {desc.id, desc.dataset_id, desc.model_name, desc.space, desc.created_at});
    try {
        registry_.register_index(desc);
    } catch (...) {
        fs::remove(data_path, ec);
        fs::remove(manifest_path_for(data_path), ec);
        throw;
    }
    std::lock_guard lock(mutex_);
    cache_[id] = std::make_shared<const EmbeddingMatrix>(std::move(matrix));
    return desc;
}

std::shared_ptr<const EmbeddingMatrix> IndexStore::load(const std::string& index_id) {
    {
        std::lock_guard lock(mutex_);
        if (auto it = cache_.find(index_id); it != cache_.end()) return it->second;
    }
    IndexDescriptor desc = registry_.index(index_id);
    if (!registry_.root()) throw Error(ErrorCode::IoError, "registry has no root directory");
    fs::path path = *registry_.root() / desc.data_path;
    auto matrix = std::make_shared<const EmbeddingMatrix>(read_index_file(path));
    auto sum = sha256_hex(matrix->data_bytes());
    if (sum != desc.checksum) {
        throw Error(ErrorCode::ChecksumMismatch, "index '" + index_id + "' data does not match the registry checksum");
    }
    std::lock_guard lock(mutex_);
    auto [it, inserted] = cache_.emplace(index_id, matrix);
    return it->second;
}

StoredRow IndexStore::get_row(const std::string& index_id, const std::string& item_id) {
    auto matrix = load(index_id);
    auto row = matrix->find_row(item_id);
    if (!row) throw Error(ErrorCode::UnknownItem, "item '" + item_id + "' is not in index '" + index_id + "'");
    if (matrix->dtype() == DType::DenseF32) {
        auto r = matrix->dense_row(*row);
        return Embedding(r.begin(), r.end());
    }
    auto r = matrix->packed_row(*row);
    return PackedCode{{r.begin(), r.end()}, matrix->dim()};
}

}  // namespace dime
