#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "dime/embedding.hpp"
#include "dime/index_store.hpp"

namespace dime {

struct Neighbor {
    std::string item_id;
    /// Euclidean distance for dense indexes, Hamming distance in bits for binary ones.
    double distance = 0.0;
    /// Row in the searched matrix.
    std::size_t row = 0;

    bool operator==(const Neighbor&) const = default;
};

struct SearchOptions {
    /// Row-range partitions scanned in parallel. Results are identical for
    /// any value.
    unsigned threads = 1;
};

/// Exact top-n by Euclidean distance; ties go to the smaller item id.
/// Returns min(n, count) neighbors. Throws DimMismatch or InvalidRequest (n == 0).
std::vector<Neighbor> knn_dense(const EmbeddingMatrix& m, std::span<const float> query, std::size_t n,
                                SearchOptions options = {});

/// Exact top-n by Hamming distance with the same ordering contract.
/// Throws DimMismatch or MalformedCode.
std::vector<Neighbor> knn_binary(const EmbeddingMatrix& m, const PackedCode& query, std::size_t n,
                                 SearchOptions options = {});

/// Squared Euclidean distance accumulated in single precision, in index order.
float squared_l2(std::span<const float> a, std::span<const float> b) noexcept;

/// Number of differing bits; both spans must have the same length.
std::uint32_t hamming(std::span<const std::uint8_t> a, std::span<const std::uint8_t> b) noexcept;

struct DistanceStats {
    double min = 0.0;
    double max = 0.0;
    double mean = 0.0;
};

/// Throws EmptyInput.
DistanceStats distance_stats(std::span<const double> distances);

struct Histogram {
    std::vector<double> bin_edges;  // bins + 1 entries
    std::vector<std::uint64_t> counts;
};

/// Equal-width bins over [min, max]; the maximum lands in the last bin and a
/// zero-width range puts everything in bin 0. Throws EmptyInput.
Histogram histogram(std::span<const double> distances, std::size_t bins);

}  // namespace dime
