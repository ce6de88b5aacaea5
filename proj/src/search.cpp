#include "dime/search.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <queue>
#include <thread>

#include "dime/error.hpp"

namespace dime {

namespace {

// Ordering key of a candidate: distance first, then the rank of its id.
template <class D>
struct Candidate {
    D distance;
    std::uint32_t rank;
    std::uint32_t row;

    bool operator<(const Candidate& o) const noexcept {
        return distance < o.distance || (distance == o.distance && rank < o.rank);
    }
};

// Bounded max-heap over [begin, end). Returns the partition's best k, unsorted.
template <class D, class DistFn>
std::vector<Candidate<D>> scan_range(const EmbeddingMatrix& m, std::size_t begin, std::size_t end, std::size_t k,
                                     DistFn&& dist) {
    std::priority_queue<Candidate<D>> heap;
    const auto& rank = m.id_rank();
    for (std::size_t r = begin; r < end; ++r) {
        Candidate<D> c{dist(r), rank[r], static_cast<std::uint32_t>(r)};
        if (heap.size() < k) {
            heap.push(c);
        } else if (c < heap.top()) {
            heap.pop();
            heap.push(c);
        }
    }
    std::vector<Candidate<D>> out;
    out.reserve(heap.size());
    while (!heap.empty()) {
        out.push_back(heap.top());
        heap.pop();
    }
    return out;
}

template <class D, class DistFn, class ToDistance>
std::vector<Neighbor> top_n(const EmbeddingMatrix& m, std::size_t n, SearchOptions options, DistFn dist,
                            ToDistance to_distance) {
    if (n == 0) throw Error(ErrorCode::InvalidRequest, "n must be >= 1");
    std::size_t count = m.count();
    std::size_t k = std::min(n, count);
    if (k == 0) return {};

    std::size_t parts = std::max<unsigned>(1, options.threads);
    // Small scans are not worth a thread.
    parts = std::min(parts, std::max<std::size_t>(1, count / 4096));
    std::vector<Candidate<D>> merged;
    if (parts == 1) {
        merged = scan_range<D>(m, 0, count, k, dist);
    } else {
        std::vector<std::vector<Candidate<D>>> partial(parts);
        std::vector<std::thread> workers;
        std::size_t chunk = (count + parts - 1) / parts;
        for (std::size_t p = 0; p < parts; ++p) {
            std::size_t b = std::min(count, p * chunk);
            std::size_t e = std::min(count, b + chunk);
            workers.emplace_back([&, p, b, e] { partial[p] = scan_range<D>(m, b, e, k, dist); });
        }
        for (auto& w : workers) w.join();
        for (auto& part : partial) merged.insert(merged.end(), part.begin(), part.end());
    }
    std::sort(merged.begin(), merged.end());
    if (merged.size() > k) merged.resize(k);

    std::vector<Neighbor> out;
    out.reserve(merged.size());
    for (const auto& c : merged) out.push_back({m.ids()[c.row], to_distance(c.distance), c.row});
    return out;
}

}  // namespace

float squared_l2(std::span<const float> a, std::span<const float> b) noexcept {
    float acc = 0.0f;
    for (std::size_t i = 0; i < a.size(); ++i) {
        float d = a[i] - b[i];
        acc += d * d;
    }
    return acc;
}

std::uint32_t hamming(std::span<const std::uint8_t> a, std::span<const std::uint8_t> b) noexcept {
    std::uint32_t bits = 0;
    std::size_t i = 0;
    for (; i + 8 <= a.size(); i += 8) {
        std::uint64_t x, y;
        std::memcpy(&x, a.data() + i, 8);
        std::memcpy(&y, b.data() + i, 8);
        bits += static_cast<std::uint32_t>(std::popcount(x ^ y));
    }
    for (; i < a.size(); ++i) bits += static_cast<std::uint32_t>(std::popcount(static_cast<unsigned>(a[i] ^ b[i])));
    return bits;
}

std::vector<Neighbor> knn_dense(const EmbeddingMatrix& m, std::span<const float> query, std::size_t n,
                                SearchOptions options) {
    if (m.dtype() != DType::DenseF32) throw Error(ErrorCode::InvalidRequest, "knn_dense on a binary index");
    if (query.size() != m.dim()) {
        throw Error(ErrorCode::DimMismatch, "query has " + std::to_string(query.size()) + " components, index dim is " +
                                                std::to_string(m.dim()));
    }
    return top_n<float>(
        m, n, options, [&](std::size_t r) { return squared_l2(query, m.dense_row(r)); },
        [](float d2) { return std::sqrt(static_cast<double>(d2)); });
}

std::vector<Neighbor> knn_binary(const EmbeddingMatrix& m, const PackedCode& query, std::size_t n,
                                 SearchOptions options) {
    if (m.dtype() != DType::PackedBinary) throw Error(ErrorCode::InvalidRequest, "knn_binary on a dense index");
    if (query.dim != m.dim()) {
        throw Error(ErrorCode::DimMismatch, "query code has " + std::to_string(query.dim) + " bits, index dim is " +
                                                std::to_string(m.dim()));
    }
    check_packed(query.bytes, query.dim);
    return top_n<std::uint32_t>(
        m, n, options, [&](std::size_t r) { return hamming(query.bytes, m.packed_row(r)); },
        [](std::uint32_t d) { return static_cast<double>(d); });
}

DistanceStats distance_stats(std::span<const double> distances) {
    if (distances.empty()) throw Error(ErrorCode::EmptyInput, "no distances");
    DistanceStats s{distances[0], distances[0], 0.0};
    double sum = 0.0;
    for (double d : distances) {
        s.min = std::min(s.min, d);
        s.max = std::max(s.max, d);
        sum += d;
    }
    s.mean = sum / static_cast<double>(distances.size());
    return s;
}

Histogram histogram(std::span<const double> distances, std::size_t bins) {
    if (distances.empty()) throw Error(ErrorCode::EmptyInput, "no distances");
    if (bins == 0) throw Error(ErrorCode::InvalidRequest, "histogram needs at least one bin");
    auto [lo_it, hi_it] = std::minmax_element(distances.begin(), distances.end());
    double lo = *lo_it;
    double hi = *hi_it;
    double width = (hi - lo) / static_cast<double>(bins);

    Histogram h;
    h.bin_edges.resize(bins + 1);
    for (std::size_t i = 0; i < bins; ++i) h.bin_edges[i] = lo + width * static_cast<double>(i);
    h.bin_edges[bins] = hi;
    h.counts.assign(bins, 0);
    for (double d : distances) {
        std::size_t b = 0;
        if (width > 0.0) {
            b = std::min(static_cast<std::size_t>(std::floor((d - lo) / width)), bins - 1);
        }
        ++h.counts[b];
    }
    return h;
}

}  // namespace dime
