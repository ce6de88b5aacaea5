#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <functional>

#include "dime/error.hpp"
#include "dime/fsutil.hpp"
#include "dime/registry.hpp"
#include "test_util.hpp"

using namespace dime;
using dime::testing::TempDir;

namespace {

DatasetDescriptor vector_dataset(const std::string& id, std::uint32_t dim, std::size_t count) {
    DatasetDescriptor d;
    d.id = id;
    d.name = id;
    d.modality = Modality::Vector;
    d.input_dim = dim;
    for (std::size_t i = 0; i < count; ++i) {
        Vector v(dim, static_cast<float>(i));
        d.items.push_back({"v" + std::to_string(i), v, {{"row", std::to_string(i)}}});
    }
    return d;
}

DatasetDescriptor text_dataset(const std::string& id) {
    DatasetDescriptor d;
    d.id = id;
    d.name = "captions";
    d.modality = Modality::Text;
    d.items.push_back({"t1", ItemPayload::text("a dog"), {}});
    d.items.push_back({"t2", ItemPayload::text("a cat"), {}});
    return d;
}

ModelDescriptor identity_model(const std::string& name, std::uint32_t dim) {
    ModelDescriptor m;
    m.name = name;
    m.kind = ModelKind::BuiltinIdentity;
    m.accepts = {PayloadKind::Vector};
    m.input_dim = dim;
    m.output_dim = dim;
    m.space = "raw";
    return m;
}

ModelDescriptor text_hash_model(const std::string& name, std::uint32_t dim) {
    ModelDescriptor m;
    m.name = name;
    m.kind = ModelKind::BuiltinTextHash;
    m.accepts = {PayloadKind::Text};
    m.output_dim = dim;
    m.space = "toy";
    return m;
}

ErrorCode code_of(const std::function<void()>& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return e.code();
    }
    ADD_FAILURE() << "expected a dime::Error";
    return ErrorCode::InvalidRequest;
}

}  // namespace

TEST(RegisterDataset, AddsThreeItemVectorDataset) {
    Registry reg;
    auto before = reg.list_datasets().size();
    EXPECT_EQ(reg.register_dataset(vector_dataset("d", 4, 3)), "d");
    EXPECT_EQ(reg.list_datasets().size(), before + 1);
    EXPECT_EQ(reg.dataset("d").items.size(), 3u);
}

TEST(RegisterDataset, DuplicateItemIdIsInvariantViolation) {
    Registry reg;
    auto d = vector_dataset("d", 4, 2);
    d.items[1].id = "x";
    d.items[0].id = "x";
    try {
        reg.register_dataset(d);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::InvariantViolation);
        EXPECT_NE(e.message().find("'x'"), std::string::npos);
    }
}

TEST(RegisterDataset, VectorLengthMismatchNamesTheItem) {
    Registry reg;
    auto d = vector_dataset("d", 4, 3);
    d.items[1].payload = Vector{1, 2, 3};
    try {
        reg.register_dataset(d);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::InvariantViolation);
        EXPECT_NE(e.message().find("'v1'"), std::string::npos);
    }
}

TEST(RegisterDataset, RejectsDuplicateDatasetIdAndBadItemIds) {
    Registry reg;
    reg.register_dataset(vector_dataset("d", 2, 1));
    EXPECT_EQ(code_of([&] { reg.register_dataset(vector_dataset("d", 2, 1)); }), ErrorCode::DuplicateId);
    auto bad = vector_dataset("e", 2, 1);
    bad.items[0].id = "has space";
    EXPECT_EQ(code_of([&] { reg.register_dataset(bad); }), ErrorCode::InvariantViolation);
    auto nan = vector_dataset("f", 2, 1);
    nan.items[0].payload = Vector{1.0f, std::nanf("")};
    EXPECT_EQ(code_of([&] { reg.register_dataset(nan); }), ErrorCode::InvariantViolation);
}

TEST(RegisterModel, BuiltinTextHash) {
    Registry reg;
    reg.register_model(text_hash_model("hash8", 8));
    ASSERT_TRUE(reg.find_model("hash8"));
    EXPECT_EQ(reg.model("hash8").output_dim, 8u);
}

TEST(RegisterModel, SubprocessWithoutCommandIsMissingField) {
    Registry reg;
    ModelDescriptor m;
    m.name = "plug";
    m.kind = ModelKind::Subprocess;
    m.accepts = {PayloadKind::Text};
    m.output_dim = 4;
    EXPECT_EQ(code_of([&] { reg.register_model(m); }), ErrorCode::MissingField);
    m.kind = ModelKind::Precomputed;
    EXPECT_EQ(code_of([&] { reg.register_model(m); }), ErrorCode::MissingField);
}

TEST(RegisterModel, SecondRegistrationIsDuplicateName) {
    Registry reg;
    reg.register_model(text_hash_model("m", 8));
    EXPECT_EQ(code_of([&] { reg.register_model(text_hash_model("m", 16)); }), ErrorCode::DuplicateName);
}

TEST(RegisterModel, SubprocessIsNotLaunchedAtRegistration) {
    Registry reg;
    ModelDescriptor m;
    m.name = "ghost";
    m.kind = ModelKind::Subprocess;
    m.accepts = {PayloadKind::Text};
    m.output_dim = 4;
    m.command = "/nonexistent/plugin-binary";
    EXPECT_NO_THROW(reg.register_model(m));
}

TEST(ValidateCompatibility, Examples) {
    Registry reg;
    reg.register_dataset(vector_dataset("vec4", 4, 2));
    reg.register_dataset(text_dataset("txt"));
    reg.register_model(identity_model("id4", 4));
    reg.register_model(identity_model("id8", 8));

    EXPECT_NO_THROW(reg.validate_compatibility("vec4", "id4"));
    try {
        reg.validate_compatibility("vec4", "id8");
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::Incompatible);
        EXPECT_NE(e.message().find("4 vs model input_dim 8"), std::string::npos);
    }
    try {
        reg.validate_compatibility("txt", "id4");
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::Incompatible);
        EXPECT_NE(e.message().find("text"), std::string::npos);
    }
    EXPECT_EQ(code_of([&] { reg.validate_compatibility("nope", "id4"); }), ErrorCode::NotFound);
    EXPECT_EQ(code_of([&] { reg.validate_compatibility("vec4", "nope"); }), ErrorCode::NotFound);
}

TEST(PersistRegistry, EmptyRoundTrip) {
    TempDir dir;
    RegistryData empty;
    persist_registry(empty, dir.path());
    EXPECT_EQ(load_registry(dir.path()), empty);
}

TEST(PersistRegistry, FullRoundTripIsFieldForField) {
    TempDir dir;
    RegistryData r;
    r.datasets = {vector_dataset("vec", 3, 2), text_dataset("txt")};
    r.datasets[1].items[0].metadata = {{"lang", "en"}, {"source", "unit"}};
    r.models = {identity_model("id3", 3), text_hash_model("hash", 16)};
    IndexDescriptor x;
    x.id = "txt.hash.dense";
    x.dataset_id = "txt";
    x.model_name = "hash";
    x.dim = 16;
    x.count = 2;
    x.space = "toy";
    x.data_path = "indexes/txt.hash.dense.dime";
    x.checksum = std::string(64, 'a');
    x.created_at = "2026-01-01T00:00:00Z";
    r.indexes = {x};

    persist_registry(r, dir.path());
    RegistryData back = load_registry(dir.path());

    // Structural oracle: compare every field explicitly, then as a whole.
    ASSERT_EQ(back.datasets.size(), 2u);
    ASSERT_EQ(back.models.size(), 2u);
    ASSERT_EQ(back.indexes.size(), 1u);
    for (std::size_t i = 0; i < 2; ++i) {
        EXPECT_EQ(back.datasets[i].id, r.datasets[i].id);
        EXPECT_EQ(back.datasets[i].name, r.datasets[i].name);
        EXPECT_EQ(back.datasets[i].modality, r.datasets[i].modality);
        EXPECT_EQ(back.datasets[i].input_dim, r.datasets[i].input_dim);
        EXPECT_EQ(back.datasets[i].items, r.datasets[i].items);
        EXPECT_EQ(back.models[i].name, r.models[i].name);
        EXPECT_EQ(back.models[i].kind, r.models[i].kind);
        EXPECT_EQ(back.models[i].accepts, r.models[i].accepts);
        EXPECT_EQ(back.models[i].input_dim, r.models[i].input_dim);
        EXPECT_EQ(back.models[i].output_dim, r.models[i].output_dim);
        EXPECT_EQ(back.models[i].space, r.models[i].space);
    }
    EXPECT_EQ(back.indexes[0].checksum, x.checksum);
    EXPECT_EQ(back.indexes[0].created_at, x.created_at);
    EXPECT_EQ(back, r);
}

TEST(PersistRegistry, UnknownFieldsSurviveRewrite) {
    TempDir dir;
    {
        std::ofstream out(dir / "registry.json");
        out << R"({"version_note":"hand edited","datasets":[{"id":"d","name":"d","modality":"text",
                 "items":[{"id":"a","text":"hi","color":"red"}],"owner":"lab"}],
                 "models":[{"name":"h","kind":"builtin_text_hash","accepts":["text"],"output_dim":4,
                 "space":"s","license":"mit"}],"indexes":[]})";
    }
    Registry reg(dir.path());
    reg.register_model(text_hash_model("h2", 4));
    json j = json::parse(read_file(dir / "registry.json"));
    EXPECT_EQ(j["version_note"], "hand edited");
    EXPECT_EQ(j["datasets"][0]["owner"], "lab");
    EXPECT_EQ(j["datasets"][0]["items"][0]["color"], "red");
    EXPECT_EQ(j["models"][0]["license"], "mit");
    EXPECT_EQ(j["models"].size(), 2u);
}

TEST(PersistRegistry, TruncatedFileIsCorruptRegistry) {
    TempDir dir;
    Registry reg(dir.path());
    reg.register_dataset(vector_dataset("d", 2, 3));
    std::string text = read_file(dir / "registry.json");
    {
        std::ofstream out(dir / "registry.json", std::ios::trunc);
        out << text.substr(0, text.size() / 2);
    }
    EXPECT_EQ(code_of([&] { load_registry(dir.path()); }), ErrorCode::CorruptRegistry);
    EXPECT_EQ(code_of([&] { Registry again(dir.path()); }), ErrorCode::CorruptRegistry);
}

TEST(PersistRegistry, WritesAreAtomicAndReloadable) {
    TempDir dir;
    {
        Registry reg(dir.path());
        reg.register_dataset(vector_dataset("d", 2, 3));
        reg.register_model(identity_model("id2", 2));
    }
    for (const auto& entry : std::filesystem::directory_iterator(dir.path())) {
        EXPECT_EQ(entry.path().filename().string().find(".tmp."), std::string::npos) << entry.path();
    }
    Registry reopened(dir.path());
    EXPECT_EQ(reopened.list_datasets().size(), 1u);
    EXPECT_EQ(reopened.list_models().size(), 1u);
}

TEST(PersistRegistry, LookupsDoNotMutate) {
    TempDir dir;
    Registry reg(dir.path());
    reg.register_dataset(vector_dataset("d", 2, 1));
    auto before = read_file(dir / "registry.json");
    auto mtime = std::filesystem::last_write_time(dir / "registry.json");
    (void)reg.find_dataset("d");
    (void)reg.list_models();
    EXPECT_EQ(code_of([&] { reg.index("missing"); }), ErrorCode::NotFound);
    EXPECT_EQ(read_file(dir / "registry.json"), before);
    EXPECT_EQ(std::filesystem::last_write_time(dir / "registry.json"), mtime);
}

TEST(ManifestImport, ParsesTheDocumentedFormat) {
    json manifest = json::parse(R"({"name":"toy","modality":"vector","input_dim":2,
        "items":[{"id":"a","vector":[1,2],"metadata":{"k":"v"}},{"id":"b","vector":[3,4]}]})");
    auto d = manifest.get<DatasetDescriptor>();
    EXPECT_EQ(d.id, "toy");
    EXPECT_EQ(d.modality, Modality::Vector);
    ASSERT_EQ(d.items.size(), 2u);
    EXPECT_EQ(*d.items[0].payload.as_vector(), (Vector{1, 2}));
    EXPECT_EQ(d.items[0].metadata.at("k"), "v");
    EXPECT_NO_THROW(validate(d));
}

TEST(ManifestImport, PayloadMustHaveExactlyOneVariant) {
    json both = json::parse(R"({"id":"a","text":"x","uri":"file:y"})");
    EXPECT_EQ(code_of([&] { (void)both.get<Item>(); }), ErrorCode::InvalidRequest);
    json none = json::parse(R"({"id":"a"})");
    EXPECT_EQ(code_of([&] { (void)none.get<Item>(); }), ErrorCode::InvalidRequest);
}
