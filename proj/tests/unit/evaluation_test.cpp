#include <gtest/gtest.h>

#include <algorithm>
#include <functional>
#include <random>
#include <sstream>

#include "dime/engine.hpp"
#include "dime/error.hpp"
#include "dime/evaluation.hpp"
#include "test_util.hpp"

using namespace dime;

namespace {

using Ranking = std::vector<std::string>;

ErrorCode code_of(const std::function<void()>& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return e.code();
    }
    ADD_FAILURE() << "expected a dime::Error";
    return ErrorCode::InvalidRequest;
}

// Enumerates P@k at every relevant rank, summing in rational form.
double hand_ap(const Ranking& ranking, const std::set<std::string>& relevant) {
    std::size_t present = 0;
    for (const auto& id : ranking) present += relevant.count(id);
    double sum = 0.0;
    std::size_t hits = 0;
    for (std::size_t k = 1; k <= ranking.size(); ++k) {
        if (relevant.count(ranking[k - 1])) {
            ++hits;
            sum += static_cast<double>(hits) / static_cast<double>(k);
        }
    }
    return sum / static_cast<double>(present);
}

}  // namespace

TEST(AveragePrecision, Examples) {
    Ranking r{"r1", "x", "r2", "y"};
    std::set<std::string> rel{"r1", "r2"};
    EXPECT_NEAR(average_precision(r, rel), 0.833333, 1e-6);
    EXPECT_DOUBLE_EQ(average_precision(r, rel), 0.5 * (1.0 + 2.0 / 3.0));
    Ranking perfect{"r1", "r2", "x", "y"};
    EXPECT_EQ(average_precision(perfect, rel), 1.0);
    EXPECT_EQ(code_of([&] { average_precision(r, {"q", "z"}); }), ErrorCode::NoRelevant);
}

TEST(AveragePrecision, RelevantIdsAbsentFromRankingAreIgnored) {
    Ranking r{"r1", "x"};
    EXPECT_EQ(average_precision(r, {"r1", "missing"}), 1.0);
}

TEST(AveragePrecision, RandomRankingsMatchHandEnumeration) {
    std::mt19937_64 rng(31);
    for (int trial = 0; trial < 300; ++trial) {
        std::size_t len = 1 + trial % 40;
        Ranking r;
        for (std::size_t i = 0; i < len; ++i) r.push_back("i" + std::to_string(i));
        std::shuffle(r.begin(), r.end(), rng);
        std::set<std::string> rel;
        std::bernoulli_distribution coin(0.3);
        for (const auto& id : r) {
            if (coin(rng)) rel.insert(id);
        }
        if (rel.empty()) rel.insert(r.front());
        double ap = average_precision(r, rel);
        EXPECT_NEAR(ap, hand_ap(r, rel), 1e-12);
        EXPECT_GE(ap, 0.0);
        EXPECT_LE(ap, 1.0);
    }
}

TEST(AveragePrecision, TailPermutationInvariance) {
    std::mt19937_64 rng(37);
    Ranking r{"a", "r1", "b", "r2", "c", "d", "e", "f"};
    std::set<std::string> rel{"r1", "r2"};
    double base = average_precision(r, rel);
    for (int i = 0; i < 20; ++i) {
        std::shuffle(r.begin() + 4, r.end(), rng);
        EXPECT_EQ(average_precision(r, rel), base);
    }
}

TEST(PrecisionRecall, Examples) {
    Ranking r{"r1", "x", "r2"};
    std::set<std::string> rel{"r1", "r2"};
    EXPECT_DOUBLE_EQ(precision_at_k(r, rel, 3), 2.0 / 3.0);
    EXPECT_DOUBLE_EQ(precision_at_k(r, rel, 10), 0.2);
    EXPECT_EQ(recall_at_k(r, {"r1", "r2", "r3", "r4"}, 3), 0.5);
    EXPECT_EQ(code_of([&] { recall_at_k(r, {}, 3); }), ErrorCode::NoRelevant);
}

TEST(ScoreRankings, MeanAndSkipped) {
    std::vector<RankedQuery> runs{{"q1", {"a", "b"}}, {"q2", {"x", "b", "c"}}, {"q3", {"a"}}, {"q4", {"a"}}};
    Qrels qrels{{"q1", {"a"}}, {"q2", {"b"}}, {"q3", {"zz"}}};
    std::vector<std::size_t> ks{1, 2};
    auto rep = score_rankings(runs, qrels, ks);
    EXPECT_EQ(rep.per_query.at("q1").ap, 1.0);
    EXPECT_EQ(rep.per_query.at("q2").ap, 0.5);
    ASSERT_TRUE(rep.mean_ap);
    EXPECT_EQ(*rep.mean_ap, 0.75);
    EXPECT_EQ(rep.skipped, (std::vector<std::string>{"q3", "q4"}));
    EXPECT_EQ(rep.per_query.at("q2").precision_at.at(2), 0.5);
    EXPECT_EQ(rep.per_query.at("q2").recall_at.at(1), 0.0);
    EXPECT_EQ(rep.per_query.at("q2").relevant_count, 1u);

    json j = rep;
    EXPECT_EQ(j["mAP"], 0.75);
    EXPECT_EQ(j["skipped"], json({"q3", "q4"}));
    EXPECT_EQ(j["per_query"]["q1"]["AP"], 1.0);
    EXPECT_EQ(j["per_query"]["q1"]["P_at"]["1"], 1.0);
}

TEST(ScoreRankings, AllSkippedLeavesMapAbsent) {
    std::vector<RankedQuery> runs{{"q1", {"a"}}};
    std::vector<std::size_t> ks{1};
    auto rep = score_rankings(runs, {}, ks);
    EXPECT_FALSE(rep.mean_ap);
    json j = rep;
    EXPECT_FALSE(j.contains("mAP"));
    EXPECT_EQ(code_of([&] {
                  std::vector<RankedQuery> dup{{"q", {"a"}}, {"q", {"a"}}};
                  score_rankings(dup, {}, ks);
              }),
              ErrorCode::InvalidRequest);
}

TEST(ParseQrels, TsvLines) {
    std::istringstream in("q1\ta\t1\nq1\tb\t0\n\nq2\tc\t1\nq1\ta\t1\n");
    auto q = parse_qrels(in);
    EXPECT_EQ(q.at("q1"), std::set<std::string>{"a"});
    EXPECT_EQ(q.at("q2"), std::set<std::string>{"c"});
    std::istringstream bad("q1 a 1\n");
    EXPECT_EQ(code_of([&] { parse_qrels(bad); }), ErrorCode::InvalidRequest);
    std::istringstream grade("q1\ta\t2\n");
    EXPECT_EQ(code_of([&] { parse_qrels(grade); }), ErrorCode::InvalidRequest);
}

TEST(ParseQueries, NdjsonLines) {
    std::istringstream in(R"({"query_id":"q1","text":"dog"}
{"query_id":"q2","vector":[1,2]}
)");
    auto qs = parse_queries(in);
    ASSERT_EQ(qs.size(), 2u);
    EXPECT_EQ(qs[0].payload, ItemPayload::text("dog"));
    EXPECT_EQ(qs[1].payload, ItemPayload(Vector{1, 2}));
}

class EvaluateRunTest : public ::testing::Test {
protected:
    EvaluateRunTest() : engine_(EngineOptions{dir_.path(), {}, {}}) {
        engine_.add_dataset(json::parse(R"({"id":"four","name":"four","modality":"vector","input_dim":2,"items":[
            {"id":"a","vector":[0,0]},{"id":"b","vector":[1,0]},{"id":"c","vector":[0,2]},{"id":"d","vector":[3,3]}]})"));
        engine_.add_model(json::parse(R"({"name":"id2","kind":"builtin_identity","input_dim":2,"output_dim":2,
            "space":"raw","accepts":["vector"]})"));
        engine_.build_index("four", "id2", false);
        engine_.build_index("four", "id2", true);
    }

    dime::testing::TempDir dir_;
    Engine engine_;
};

TEST_F(EvaluateRunTest, FourItemFixture) {
    // Query at b: ranking b(0), a(1), c(sqrt5), d(sqrt13). Relevant {b, c}:
    // AP = (1/1 + 2/3) / 2.
    std::vector<EvalQuery> queries{{"q1", Vector{1, 0}}, {"q2", Vector{3, 3}}, {"q-none", Vector{0, 0}}};
    Qrels qrels{{"q1", {"b", "c"}}, {"q2", {"d"}}};
    auto rep = engine_.evaluate_run("four.id2.dense", queries, qrels, {1, 4});
    EXPECT_DOUBLE_EQ(rep.per_query.at("q1").ap, 0.5 * (1.0 + 2.0 / 3.0));
    EXPECT_EQ(rep.per_query.at("q1").precision_at.at(1), 1.0);
    EXPECT_EQ(rep.per_query.at("q2").ap, 1.0);
    EXPECT_EQ(rep.skipped, std::vector<std::string>{"q-none"});
    EXPECT_DOUBLE_EQ(*rep.mean_ap, (0.5 * (1.0 + 2.0 / 3.0) + 1.0) / 2.0);
}

TEST_F(EvaluateRunTest, CompareModels) {
    std::vector<EvalQuery> queries{{"q1", Vector{1, 0}}};
    Qrels qrels{{"q1", {"b"}}};
    auto reports = engine_.compare_models({"four.id2.dense", "four.id2.bin"}, queries, qrels, {1});
    EXPECT_EQ(reports.size(), 2u);
    EXPECT_TRUE(reports.at("four.id2.bin").mean_ap);
    EXPECT_TRUE(engine_.compare_models({}, queries, qrels, {1}).empty());
    try {
        engine_.compare_models({"four.id2.dense", "ghost"}, queries, qrels, {1});
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::NotFound);
        EXPECT_NE(e.message().find("ghost"), std::string::npos);
    }
}
