// dime: command-line front end for the retrieval engine.

#include <CLI11.hpp>

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <thread>

#include "dime/engine.hpp"
#include "dime/fsutil.hpp"
#include "dime/http_api.hpp"

using namespace dime;

namespace {

struct QueryFlags {
    std::string text;
    std::string vector_file;
    std::string uri;
    std::string item;
    std::string item_index;
    std::size_t n = 10;
    std::size_t bins = 20;
};

void add_query_flags(CLI::App* cmd, QueryFlags& q) {
    auto* text = cmd->add_option("--text", q.text, "Text query");
    auto* vec = cmd->add_option("--vector-file", q.vector_file, "File holding a JSON array or whitespace-separated numbers");
    auto* uri = cmd->add_option("--uri", q.uri, "URI query (handled by plugin models)");
    auto* item = cmd->add_option("--item", q.item, "Use a stored item as the query");
    text->excludes(vec, uri, item);
    vec->excludes(uri, item);
    uri->excludes(item);
    cmd->add_option("-n", q.n, "Number of neighbors")->check(CLI::PositiveNumber);
    cmd->add_option("--bins", q.bins, "Histogram bins")->check(CLI::PositiveNumber);
}

Vector read_vector_file(const std::string& path) {
    std::string text = read_file(path);
    try {
        return json::parse(text).get<Vector>();
    } catch (const json::exception&) {
    }
    Vector out;
    std::string cleaned = text;
    for (char& c : cleaned) {
        if (c == ',') c = ' ';
    }
    std::istringstream in(cleaned);
    std::string tok;
    while (in >> tok) {
        try {
            std::size_t used = 0;
            out.push_back(std::stof(tok, &used));
            if (used != tok.size()) throw std::invalid_argument(tok);
        } catch (const std::exception&) {
            throw Error(ErrorCode::InvalidRequest, "cannot parse number '" + tok + "' in " + path);
        }
    }
    return out;
}

QueryRequest build_request(const QueryFlags& q, const std::string& default_index) {
    QueryRequest req;
    req.n = q.n;
    req.histogram_bins = q.bins;
    if (!q.text.empty()) {
        req.input = TextPayload{q.text};
    } else if (!q.vector_file.empty()) {
        req.input = read_vector_file(q.vector_file);
    } else if (!q.uri.empty()) {
        req.input = UriPayload{q.uri};
    } else if (!q.item.empty()) {
        req.input = ItemRef{q.item_index.empty() ? default_index : q.item_index, q.item};
    } else {
        throw CLI::ValidationError("query", "one of --text, --vector-file, --uri, --item is required");
    }
    return req;
}

std::vector<std::string> split_csv(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string part;
    while (std::getline(ss, part, ',')) {
        if (!part.empty()) out.push_back(part);
    }
    return out;
}

std::string fmt_distance(double d) {
    std::ostringstream os;
    os << std::fixed << std::setprecision(4) << d;
    return os.str();
}

void print_result_table(const QueryResult& r) {
    const auto& d = r.diagnostics;
    std::cout << "index " << d.index_id << "  model " << d.model_name << "  space " << d.space << "  count "
              << d.index_count << (d.binarized ? "  binary" : "  dense") << "\n";
    if (r.neighbors.empty()) {
        std::cout << "  (no results)\n";
    }
    std::size_t rank = 1;
    for (const auto& n : r.neighbors) {
        std::cout << "  " << std::setw(3) << rank++ << "  " << std::setw(12) << fmt_distance(n.distance) << "  " << n.item_id;
        if (n.payload_preview.contains("text")) std::cout << "  " << n.payload_preview["text"].get<std::string>();
        if (n.payload_preview.contains("uri")) std::cout << "  " << n.payload_preview["uri"].get<std::string>();
        std::cout << "\n";
    }
    if (r.stats) {
        std::cout << "  min " << fmt_distance(r.stats->min) << "  mean " << fmt_distance(r.stats->mean) << "  max "
                  << fmt_distance(r.stats->max) << "\n";
    }
    std::cout << std::fixed << std::setprecision(3) << "  timings ms: preprocess " << d.preprocess_us / 1000.0
              << "  embed " << d.embed_us / 1000.0 << "  search " << d.search_us / 1000.0 << "  total "
              << d.total_us / 1000.0 << "\n";
    std::cout.unsetf(std::ios::floatfield);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"dime: cross-modal retrieval engine and model comparison tool"};
    app.fallthrough();
    app.require_subcommand(1);

    std::string registry = "./dime-data";
    if (const char* env = std::getenv("DIME_REGISTRY"); env && *env) registry = env;
    std::string output = "table";
    app.add_option("--registry", registry, "Registry root directory (env DIME_REGISTRY)");
    app.add_option("--output", output, "Output format")->check(CLI::IsMember({"json", "table"}));

    // dataset
    auto* dataset = app.add_subcommand("dataset", "Manage datasets");
    dataset->require_subcommand(1);
    std::string manifest_path;
    auto* dataset_add = dataset->add_subcommand("add", "Register a dataset manifest");
    dataset_add->add_option("--manifest", manifest_path, "Dataset manifest JSON")->required();
    auto* dataset_ls = dataset->add_subcommand("ls", "List datasets");

    // model
    auto* model = app.add_subcommand("model", "Manage models");
    model->require_subcommand(1);
    auto* model_add = model->add_subcommand("add", "Register a model");
    auto* model_ls = model->add_subcommand("ls", "List models");
    std::string model_name, builtin, command, embeddings, space, accepts;
    std::uint32_t dim = 0, input_dim = 0;
    model_add->add_option("--name", model_name, "Model name")->required();
    auto* builtin_opt = model_add->add_option("--builtin", builtin, "Builtin embedder")
                            ->check(CLI::IsMember({"identity", "text-hash"}));
    auto* cmd_opt = model_add->add_option("--cmd", command, "Plugin launch command");
    auto* emb_opt = model_add->add_option("--embeddings", embeddings, "Precomputed embeddings file (NDJSON)");
    builtin_opt->excludes(cmd_opt, emb_opt);
    cmd_opt->excludes(emb_opt);
    model_add->add_option("--dim", dim, "Output dimension")->required()->check(CLI::PositiveNumber);
    model_add->add_option("--input-dim", input_dim, "Input dimension for vector-accepting plugins")
        ->check(CLI::PositiveNumber);
    model_add->add_option("--accepts", accepts, "Comma-separated payload kinds (plugin/precomputed models)");
    model_add->add_option("--space", space, "Embedding space label")->required();

    // index
    auto* index = app.add_subcommand("index", "Build and list indexes");
    index->require_subcommand(1);
    auto* index_build = index->add_subcommand("build", "Embed a dataset and write an index");
    auto* index_ls = index->add_subcommand("ls", "List indexes");
    std::string build_dataset, build_model, build_id;
    bool binarize = false;
    index_build->add_option("--dataset", build_dataset, "Dataset id")->required();
    index_build->add_option("--model", build_model, "Model name")->required();
    index_build->add_flag("--binarize", binarize, "Binarize and bit-pack embeddings");
    index_build->add_option("--id", build_id, "Index id (defaults to <dataset>.<model>.<dense|bin>)");

    // query / compare
    auto* query = app.add_subcommand("query", "Query one index");
    std::string query_index;
    QueryFlags qflags;
    query->add_option("--index", query_index, "Index id")->required();
    add_query_flags(query, qflags);

    auto* compare = app.add_subcommand("compare", "Query several indexes side by side");
    std::string compare_indexes;
    QueryFlags cflags;
    compare->add_option("--indexes", compare_indexes, "Comma-separated index ids")->required();
    compare->add_option("--item-index", cflags.item_index, "Index holding the --item (defaults to the first)");
    add_query_flags(compare, cflags);

    // eval
    auto* eval = app.add_subcommand("eval", "Compute mAP and P@k/R@k");
    std::string eval_indexes, queries_path, qrels_path, ks_csv = "1,5,10";
    eval->add_option("--indexes", eval_indexes, "Comma-separated index ids")->required();
    eval->add_option("--queries", queries_path, "Queries NDJSON")->required()->check(CLI::ExistingFile);
    eval->add_option("--qrels", qrels_path, "Qrels TSV")->required()->check(CLI::ExistingFile);
    eval->add_option("--ks", ks_csv, "Comma-separated cutoffs");

    // serve
    auto* serve = app.add_subcommand("serve", "Run the HTTP API and UI");
    ServerOptions server_options;
    std::string webui;
    serve->add_option("--port", server_options.port, "Port")->check(CLI::Range(1, 65535));
    serve->add_option("--host", server_options.host, "Bind address");
    serve->add_option("--webui", webui, "Directory with the browser UI assets");
    serve->add_option("--cors", server_options.cors_origins, "Allowed CORS origins");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    bool as_json = output == "json";
    auto emit = [&](const json& j) { std::cout << j.dump(as_json ? -1 : 2) << "\n"; };

    try {
        // Usage checks that need more than the parser come before the engine
        // opens the registry.
        std::vector<std::size_t> ks;
        if (*eval) {
            for (const auto& k : split_csv(ks_csv)) {
                try {
                    ks.push_back(std::stoul(k));
                } catch (const std::exception&) {
                    throw CLI::ValidationError("--ks", "'" + k + "' is not a positive integer");
                }
                if (ks.back() == 0) throw CLI::ValidationError("--ks", "cutoffs must be >= 1");
            }
        }
        std::optional<QueryRequest> request;
        if (*query) request = build_request(qflags, query_index);
        if (*compare) {
            auto ids = split_csv(compare_indexes);
            request = build_request(cflags, ids.empty() ? std::string{} : ids.front());
        }
        if (*model_add && builtin.empty() && command.empty() && embeddings.empty()) {
            throw CLI::ValidationError("model add", "one of --builtin, --cmd, --embeddings is required");
        }

        EngineOptions options;
        options.root = registry;
        options.runtime.base_dir = std::filesystem::current_path();
        options.search.threads = std::max(1u, std::thread::hardware_concurrency());
        Engine engine(options);

        if (*dataset_add) {
            json manifest;
            try {
                manifest = json::parse(read_file(manifest_path));
            } catch (const json::exception& e) {
                throw Error(ErrorCode::InvalidRequest, manifest_path + ": " + e.what());
            }
            std::string id = engine.add_dataset(manifest);
            if (as_json) {
                emit(dataset_summary_json(engine.registry().dataset(id)));
            } else {
                std::cout << id << "\n";
            }
        } else if (*dataset_ls) {
            json out = json::array();
            for (const auto& d : engine.registry().list_datasets()) out.push_back(dataset_summary_json(d));
            if (as_json) {
                emit({{"datasets", out}});
            } else {
                for (const auto& d : out) {
                    std::cout << d["id"].get<std::string>() << "\t" << d["modality"].get<std::string>() << "\t"
                              << d["item_count"] << " items\n";
                }
            }
        } else if (*model_add) {
            ModelDescriptor m;
            m.name = model_name;
            m.output_dim = dim;
            m.space = space;
            if (builtin == "identity") {
                m.kind = ModelKind::BuiltinIdentity;
                m.accepts = {PayloadKind::Vector};
                m.input_dim = input_dim ? input_dim : dim;
            } else if (builtin == "text-hash") {
                m.kind = ModelKind::BuiltinTextHash;
                m.accepts = {PayloadKind::Text};
            } else {
                m.kind = command.empty() ? ModelKind::Precomputed : ModelKind::Subprocess;
                if (!command.empty()) m.command = command;
                if (!embeddings.empty()) m.embeddings_path = embeddings;
                for (const auto& k : split_csv(accepts.empty() ? "text" : accepts)) m.accepts.insert(payload_kind_from_string(k));
                if (input_dim) m.input_dim = input_dim;
            }
            engine.registry().register_model(m);
            if (as_json) {
                emit(engine.registry().model(m.name));
            } else {
                std::cout << m.name << "\n";
            }
        } else if (*model_ls) {
            auto models = engine.registry().list_models();
            if (as_json) {
                emit({{"models", models}});
            } else {
                for (const auto& m : models) {
                    std::cout << m.name << "\t" << to_string(m.kind) << "\tdim " << m.output_dim << "\tspace " << m.space << "\n";
                }
            }
        } else if (*index_build) {
            auto desc = engine.build_index(build_dataset, build_model, binarize,
                                           build_id.empty() ? std::nullopt : std::optional(build_id));
            if (as_json) {
                emit(desc);
            } else {
                std::cout << desc.id << "\t" << desc.count << " rows\tdim " << desc.dim << "\t" << desc.checksum << "\n";
            }
        } else if (*index_ls) {
            auto indexes = engine.registry().list_indexes();
            if (as_json) {
                emit({{"indexes", indexes}});
            } else {
                for (const auto& x : indexes) {
                    std::cout << x.id << "\t" << x.dataset_id << "\t" << x.model_name << "\tdim " << x.dim << "\tcount "
                              << x.count << (x.binarized ? "\tbinary" : "\tdense") << "\tspace " << x.space << "\n";
                }
            }
        } else if (*query) {
            auto result = engine.execute_query(query_index, *request);
            if (as_json) {
                emit(result);
            } else {
                print_result_table(result);
            }
        } else if (*compare) {
            auto results = engine.execute_compare(*request, split_csv(compare_indexes));
            if (as_json) {
                emit(compare_json(results));
            } else {
                for (const auto& [id, entry] : results) {
                    if (auto* r = std::get_if<QueryResult>(&entry)) {
                        print_result_table(*r);
                    } else {
                        std::cout << "index " << id << "  error: " << std::get<Error>(entry).what() << "\n";
                    }
                }
            }
        } else if (*eval) {
            auto reports = engine.compare_models(split_csv(eval_indexes), load_queries(queries_path),
                                                 load_qrels(qrels_path), ks);
            if (as_json) {
                emit(eval_reports_json(reports));
            } else {
                for (const auto& [id, r] : reports) {
                    std::cout << id << "\tmAP " << (r.mean_ap ? std::to_string(*r.mean_ap) : std::string("n/a")) << "\t"
                              << r.per_query.size() << " scored, " << r.skipped.size() << " skipped\n";
                    for (const auto& [qid, m] : r.per_query) {
                        std::cout << "  " << qid << "\tAP " << m.ap;
                        for (auto [k, v] : m.precision_at) std::cout << "\tP@" << k << " " << v;
                        std::cout << "\n";
                    }
                }
            }
        } else if (*serve) {
            if (!webui.empty()) server_options.webui_dir = webui;
            ApiServer server(engine, server_options);
            int port = server.bind();
            if (port < 0) throw Error(ErrorCode::IoError, "cannot bind port " + std::to_string(server_options.port));
            std::cerr << "dime: serving " << engine.root().string() << " on http://" << server_options.host << ":" << port
                      << "/\n";
            server.listen();
        }
    } catch (const CLI::ValidationError& e) {
        std::cerr << "dime: " << e.what() << "\n";
        return 2;
    } catch (const Error& e) {
        std::cerr << "dime: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "dime: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
