#include <gtest/gtest.h>
#include <sys/wait.h>

#include <cstdlib>
#include <fstream>

#include "dime/engine.hpp"
#include "dime/fsutil.hpp"
#include "test_util.hpp"
#include "toy_fixture.hpp"

using namespace dime;

namespace {

struct CliRun {
    int code = -1;
    std::string out;
    std::string err;
};

class CliTest : public ::testing::Test {
protected:
    CliRun dime(const std::string& args) {
        std::string cmd = std::string(DIME_CLI_PATH) + " --registry " + (dir_ / "reg").string() + " " + args + " >" +
                          (dir_ / "out.txt").string() + " 2>" + (dir_ / "err.txt").string();
        int status = std::system(cmd.c_str());
        CliRun r;
        r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
        r.out = read_file(dir_ / "out.txt");
        r.err = read_file(dir_ / "err.txt");
        return r;
    }

    std::string write(const std::string& name, const std::string& content) {
        std::ofstream(dir_ / name) << content;
        return (dir_ / name).string();
    }

    void load_toy() {
        auto manifest = write("toy.json", dime::testing::toy_text_manifest().dump());
        ASSERT_EQ(dime("dataset add --manifest " + manifest).code, 0);
        ASSERT_EQ(dime("model add --name hash16 --builtin text-hash --dim 16 --space toy").code, 0);
        ASSERT_EQ(dime("index build --dataset toy --model hash16").code, 0);
    }

    dime::testing::TempDir dir_;
};

}  // namespace

TEST_F(CliTest, DatasetAddPrintsId) {
    auto manifest = write("toy.json", dime::testing::toy_text_manifest().dump());
    auto r = dime("dataset add --manifest " + manifest);
    EXPECT_EQ(r.code, 0) << r.err;
    EXPECT_EQ(r.out, "toy\n");
    auto ls = dime("--output json dataset ls");
    EXPECT_EQ(ls.code, 0);
    EXPECT_EQ(json::parse(ls.out)["datasets"][0]["item_count"], 8);
}

TEST_F(CliTest, QueryJsonMatchesEngine) {
    load_toy();
    auto r = dime("query --index toy.hash16.dense --text dog -n 3 --output json");
    ASSERT_EQ(r.code, 0) << r.err;
    json cli = json::parse(r.out);

    Engine engine(EngineOptions{dir_ / "reg", {}, {}});
    QueryRequest q;
    q.input = TextPayload{"dog"};
    q.n = 3;
    json api = engine.execute_query("toy.hash16.dense", q);
    EXPECT_EQ(cli["neighbors"], api["neighbors"]);
    EXPECT_EQ(cli["histogram"], api["histogram"]);
    EXPECT_EQ(cli["stats"], api["stats"]);
    EXPECT_EQ(cli["diagnostics"]["index_id"], "toy.hash16.dense");
    EXPECT_EQ(cli["neighbors"].size(), 3u);
}

TEST_F(CliTest, TableOutputAndItemQuery) {
    load_toy();
    auto r = dime("query --index toy.hash16.dense --item t3 -n 2");
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_NE(r.out.find("t3"), std::string::npos);
    EXPECT_NE(r.out.find("black cat"), std::string::npos);
}

TEST_F(CliTest, IncompatibleBuildExitsOne) {
    load_toy();
    ASSERT_EQ(dime("model add --name vec4 --builtin identity --dim 4 --space raw").code, 0);
    auto r = dime("index build --dataset toy --model vec4");
    EXPECT_EQ(r.code, 1);
    EXPECT_NE(r.err.find("Incompatible"), std::string::npos) << r.err;
}

TEST_F(CliTest, UsageErrorsExitTwoWithoutTouchingRegistry) {
    EXPECT_EQ(dime("query --index x").code, 2);
    EXPECT_EQ(dime("query --index x --text a --uri b").code, 2);
    EXPECT_EQ(dime("query --index x --text a -n 0").code, 2);
    EXPECT_EQ(dime("model add --name m --dim 4 --space s").code, 2);
    EXPECT_EQ(dime("bogus").code, 2);
    EXPECT_FALSE(std::filesystem::exists(dir_ / "reg" / "registry.json"));
}

TEST_F(CliTest, CompareAndEval) {
    load_toy();
    ASSERT_EQ(dime("index build --dataset toy --model hash16 --binarize").code, 0);
    auto c = dime("--output json compare --indexes toy.hash16.dense,toy.hash16.bin,ghost --text \"red dog\" -n 2");
    ASSERT_EQ(c.code, 0) << c.err;
    json cj = json::parse(c.out);
    EXPECT_EQ(cj["results"]["toy.hash16.dense"]["neighbors"].size(), 2u);
    EXPECT_EQ(cj["results"]["ghost"]["error"]["code"], "not_found");

    auto queries = write("q.ndjson", R"({"query_id":"q1","text":"red fox"})"
                                     "\n");
    auto qrels = write("qrels.tsv", "q1\tt1\t1\nq1\tt5\t1\n");
    auto e = dime("--output json eval --indexes toy.hash16.dense,toy.hash16.bin --queries " + queries + " --qrels " +
                  qrels + " --ks 1,2");
    ASSERT_EQ(e.code, 0) << e.err;
    json ej = json::parse(e.out);
    EXPECT_EQ(ej["reports"]["toy.hash16.dense"]["per_query"]["q1"]["P_at"]["1"], 1.0);
    EXPECT_TRUE(ej["reports"]["toy.hash16.bin"]["mAP"].is_number());
}

TEST_F(CliTest, UnknownIndexIsNotFound) {
    load_toy();
    auto r = dime("query --index ghost --text dog");
    EXPECT_EQ(r.code, 1);
    EXPECT_NE(r.err.find("NotFound"), std::string::npos) << r.err;
}
