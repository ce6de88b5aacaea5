#include <gtest/gtest.h>

#include <functional>
#include <random>

#include "dime/error.hpp"
#include "dime/search.hpp"
#include "test_util.hpp"

using namespace dime;
using dime::testing::as_pairs;

namespace {

ErrorCode code_of(const std::function<void()>& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return e.code();
    }
    ADD_FAILURE() << "expected a dime::Error";
    return ErrorCode::InvalidRequest;
}

struct RandomDense {
    std::vector<std::string> ids;
    std::vector<std::vector<float>> rows;
    EmbeddingMatrix matrix;
};

// Values are drawn from a small integer grid so exact distance ties are common.
RandomDense make_dense(std::mt19937_64& rng, std::size_t count, std::uint32_t dim) {
    RandomDense r;
    r.ids = dime::testing::random_ids(rng, count);
    std::uniform_int_distribution<int> grid(-2, 2);
    std::vector<float> flat;
    for (std::size_t i = 0; i < count; ++i) {
        std::vector<float> v(dim);
        for (auto& x : v) x = static_cast<float>(grid(rng)) * 0.5f;
        flat.insert(flat.end(), v.begin(), v.end());
        r.rows.push_back(std::move(v));
    }
    r.matrix = EmbeddingMatrix::dense(dim, r.ids, std::move(flat));
    return r;
}

struct RandomBits {
    std::vector<std::string> ids;
    std::vector<BitVector> rows;
    EmbeddingMatrix matrix;
};

RandomBits make_bits(std::mt19937_64& rng, std::size_t count, std::uint32_t dim) {
    RandomBits r;
    r.ids = dime::testing::random_ids(rng, count);
    std::bernoulli_distribution coin(0.5);
    std::vector<std::uint8_t> flat;
    for (std::size_t i = 0; i < count; ++i) {
        BitVector b(dim);
        for (std::size_t j = 0; j < dim; ++j) b[j] = coin(rng);
        auto code = pack_bits(b);
        flat.insert(flat.end(), code.bytes.begin(), code.bytes.end());
        r.rows.push_back(std::move(b));
    }
    r.matrix = EmbeddingMatrix::packed(dim, r.ids, std::move(flat));
    return r;
}

double kahan_mean(const std::vector<double>& xs) {
    double sum = 0.0, c = 0.0;
    for (double x : xs) {
        double y = x - c;
        double t = sum + y;
        c = (t - sum) - y;
        sum = t;
    }
    return sum / static_cast<double>(xs.size());
}

}  // namespace

TEST(KnnDense, Examples) {
    auto m = EmbeddingMatrix::dense(2, {"a", "b", "c"}, {0, 0, 3, 4, 1, 1});
    std::vector<float> q{0, 0};
    auto r = knn_dense(m, q, 2);
    ASSERT_EQ(r.size(), 2u);
    EXPECT_EQ(r[0].item_id, "a");
    EXPECT_EQ(r[0].distance, 0.0);
    EXPECT_EQ(r[1].item_id, "c");
    EXPECT_NEAR(r[1].distance, 1.41421356, 1e-8);
    EXPECT_EQ(r[1].row, 2u);

    auto tie = EmbeddingMatrix::dense(2, {"b", "a"}, {0, 1, 1, 0});
    auto t = knn_dense(tie, q, 2);
    EXPECT_EQ(as_pairs(t), (std::vector<std::pair<std::string, double>>{{"a", 1.0}, {"b", 1.0}}));
}

TEST(KnnDense, ClampsAndRejects) {
    auto m = EmbeddingMatrix::dense(2, {"a", "b"}, {0, 0, 1, 1});
    std::vector<float> q{0, 0};
    EXPECT_EQ(knn_dense(m, q, 50).size(), 2u);
    EXPECT_EQ(code_of([&] { knn_dense(m, q, 0); }), ErrorCode::InvalidRequest);
    std::vector<float> bad{0, 0, 0};
    EXPECT_EQ(code_of([&] { knn_dense(m, bad, 1); }), ErrorCode::DimMismatch);
    auto empty = EmbeddingMatrix::dense(2, {}, {});
    EXPECT_TRUE(knn_dense(empty, q, 5).empty());
}

TEST(KnnDense, MatchesFullSortOracle) {
    std::mt19937_64 rng(101);
    for (int trial = 0; trial < 20; ++trial) {
        std::uniform_int_distribution<std::size_t> count_d(1, 500);
        std::uniform_int_distribution<std::uint32_t> dim_d(1, 16);
        std::size_t count = count_d(rng);
        auto r = make_dense(rng, count, dim_d(rng));
        std::vector<float> q(r.matrix.dim());
        std::uniform_int_distribution<int> grid(-2, 2);
        for (auto& x : q) x = grid(rng) * 0.5f;
        for (std::size_t n : {std::size_t{1}, std::size_t{5}, count, count + 10}) {
            auto got = knn_dense(r.matrix, q, n);
            ASSERT_EQ(as_pairs(got), dime::testing::full_sort_dense(r.ids, r.rows, q, n)) << trial << " n=" << n;
        }
    }
}

TEST(KnnBinary, Examples) {
    auto m = EmbeddingMatrix::packed(8, {"a", "b"}, {0x59, 0x58});
    auto r = knn_binary(m, PackedCode{{0x59}, 8}, 2);
    EXPECT_EQ(as_pairs(r), (std::vector<std::pair<std::string, double>>{{"a", 0.0}, {"b", 1.0}}));

    auto ones = EmbeddingMatrix::packed(8, {"x"}, {0xff});
    EXPECT_EQ(knn_binary(ones, PackedCode{{0x00}, 8}, 1)[0].distance, 8.0);
    EXPECT_EQ(code_of([&] { knn_binary(ones, PackedCode{{0x00, 0x00}, 16}, 1); }), ErrorCode::DimMismatch);
    EXPECT_EQ(code_of([&] { knn_binary(ones, PackedCode{{0x00}, 8}, 0); }), ErrorCode::InvalidRequest);
}

TEST(KnnBinary, MatchesFullSortOracle) {
    std::mt19937_64 rng(202);
    for (int trial = 0; trial < 20; ++trial) {
        std::uniform_int_distribution<std::size_t> count_d(1, 500);
        std::uniform_int_distribution<std::uint32_t> dim_d(1, 24);
        std::size_t count = count_d(rng);
        auto r = make_bits(rng, count, dim_d(rng));
        BitVector q(r.matrix.dim());
        std::bernoulli_distribution coin(0.5);
        for (std::size_t j = 0; j < q.size(); ++j) q[j] = coin(rng);
        for (std::size_t n : {std::size_t{1}, std::size_t{5}, count, count + 10}) {
            auto got = knn_binary(r.matrix, pack_bits(q), n);
            ASSERT_EQ(as_pairs(got), dime::testing::full_sort_bits(r.ids, r.rows, q, n)) << trial << " n=" << n;
        }
    }
}

TEST(Knn, SelfRetrievalAndMonotonicity) {
    std::mt19937_64 rng(303);
    auto r = make_dense(rng, 300, 8);
    for (std::size_t row = 0; row < 300; row += 37) {
        auto got = knn_dense(r.matrix, r.rows[row], 300);
        EXPECT_EQ(got[0].distance, 0.0);
        bool found = false;
        for (const auto& n : got) {
            if (n.distance != 0.0) break;
            found |= n.item_id == r.ids[row];
        }
        EXPECT_TRUE(found);
        for (std::size_t i = 1; i < got.size(); ++i) EXPECT_LE(got[i - 1].distance, got[i].distance);
    }
}

TEST(Knn, ParallelEqualsSerial) {
    std::mt19937_64 rng(404);
    auto dense = make_dense(rng, 20000, 8);
    auto bits = make_bits(rng, 20000, 40);
    std::vector<float> q(8, 0.5f);
    BitVector qb(40, true);
    for (unsigned threads : {2u, 3u, 8u}) {
        for (std::size_t n : {std::size_t{1}, std::size_t{10}, std::size_t{20000}}) {
            EXPECT_EQ(knn_dense(dense.matrix, q, n, {threads}), knn_dense(dense.matrix, q, n));
            EXPECT_EQ(knn_binary(bits.matrix, pack_bits(qb), n, {threads}), knn_binary(bits.matrix, pack_bits(qb), n));
        }
    }
}

TEST(Knn, HammingEuclideanIdentity) {
    std::mt19937_64 rng(505);
    for (int trial = 0; trial < 1000; ++trial) {
        std::size_t dim = 1 + trial % 100;
        auto u = dime::testing::random_zero_free(rng, dim);
        auto v = dime::testing::random_zero_free(rng, dim);
        auto pu = binarize_packed(u), pv = binarize_packed(v);
        double sq = 0.0;
        for (std::size_t i = 0; i < dim; ++i) {
            double d = (u[i] > 0 ? 1.0 : -1.0) - (v[i] > 0 ? 1.0 : -1.0);
            sq += d * d;
        }
        ASSERT_EQ(4.0 * hamming(pu.bytes, pv.bytes), sq);
    }
}

TEST(DistanceStats, Examples) {
    std::vector<double> a{0, 1, 2, 3};
    auto s = distance_stats(a);
    EXPECT_EQ(s.min, 0.0);
    EXPECT_EQ(s.max, 3.0);
    EXPECT_EQ(s.mean, 1.5);
    std::vector<double> one{7};
    auto t = distance_stats(one);
    EXPECT_EQ(t.min, 7.0);
    EXPECT_EQ(t.max, 7.0);
    EXPECT_EQ(t.mean, 7.0);
    EXPECT_EQ(code_of([] { distance_stats({}); }), ErrorCode::EmptyInput);
}

TEST(DistanceStats, MeanMatchesCompensatedSum) {
    std::mt19937_64 rng(606);
    std::uniform_real_distribution<double> d(0.0, 1000.0);
    std::vector<double> xs(10000);
    for (auto& x : xs) x = d(rng);
    auto s = distance_stats(xs);
    double oracle = kahan_mean(xs);
    EXPECT_NEAR(s.mean, oracle, 1e-9 * oracle);
    EXPECT_EQ(s.min, *std::min_element(xs.begin(), xs.end()));
    EXPECT_EQ(s.max, *std::max_element(xs.begin(), xs.end()));
}

TEST(Histogram, Examples) {
    std::vector<double> a{0, 1, 2, 3};
    auto h = histogram(a, 2);
    EXPECT_EQ(h.bin_edges, (std::vector<double>{0, 1.5, 3}));
    EXPECT_EQ(h.counts, (std::vector<std::uint64_t>{2, 2}));
    std::vector<double> same{5, 5, 5};
    EXPECT_EQ(histogram(same, 3).counts, (std::vector<std::uint64_t>{3, 0, 0}));
    std::vector<double> clamp{0, 2.9, 3.0};
    EXPECT_EQ(histogram(clamp, 3).counts, (std::vector<std::uint64_t>{1, 0, 2}));
    EXPECT_EQ(code_of([] { histogram({}, 3); }), ErrorCode::EmptyInput);
}

TEST(Histogram, CountsSumToInputSize) {
    std::mt19937_64 rng(707);
    std::uniform_real_distribution<double> d(0.0, 50.0);
    for (std::size_t size : {1u, 2u, 17u, 1000u}) {
        std::vector<double> xs(size);
        for (auto& x : xs) x = d(rng);
        for (std::size_t bins : {1u, 3u, 20u}) {
            auto h = histogram(xs, bins);
            ASSERT_EQ(h.counts.size(), bins);
            ASSERT_EQ(h.bin_edges.size(), bins + 1);
            std::uint64_t total = 0;
            for (auto c : h.counts) total += c;
            EXPECT_EQ(total, size);
        }
    }
}
