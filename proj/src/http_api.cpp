#include "dime/http_api.hpp"

#include <httplib.h>

#include <algorithm>

namespace dime {

namespace {

constexpr const char* kJson = "application/json";

constexpr const char* kPlaceholderPage = R"(<!doctype html>
<html><head><meta charset="utf-8"><title>DIME</title></head>
<body><h1>DIME retrieval engine</h1>
<p>The browser UI is not installed. Start the server with <code>--webui DIR</code> to serve it.</p>
<p>The JSON API lives under <code>/api/v1/</code>.</p></body></html>
)";

void send_json(httplib::Response& res, int status, const json& body) {
    res.status = status;
    res.set_content(body.dump(), kJson);
}

void send_error(httplib::Response& res, const Error& e) { send_json(res, http_status(e.code()), error_json(e)); }

template <class Fn>
void guarded(httplib::Response& res, Fn&& fn) {
    try {
        fn();
    } catch (const Error& e) {
        send_error(res, e);
    } catch (const json::exception& e) {
        send_error(res, Error(ErrorCode::InvalidRequest, e.what()));
    } catch (const std::exception& e) {
        send_json(res, 500, {{"error", {{"code", "internal"}, {"message", e.what()}}}});
    }
}

json parse_body(const httplib::Request& req) {
    try {
        return json::parse(req.body);
    } catch (const json::exception& e) {
        throw Error(ErrorCode::InvalidRequest, std::string("request body is not JSON: ") + e.what());
    }
}

std::vector<std::string> string_list(const json& body, const char* key) {
    if (!body.contains(key) || !body.at(key).is_array()) {
        throw Error(ErrorCode::InvalidRequest, std::string("'") + key + "' must be an array of strings");
    }
    std::vector<std::string> out;
    for (const auto& v : body.at(key)) {
        if (!v.is_string()) throw Error(ErrorCode::InvalidRequest, std::string("'") + key + "' must contain strings");
        out.push_back(v.get<std::string>());
    }
    return out;
}

Qrels qrels_from_body(const json& body) {
    if (body.contains("qrels_path")) return load_qrels(body.at("qrels_path").get<std::string>());
    if (!body.contains("qrels") || !body.at("qrels").is_array()) {
        throw Error(ErrorCode::InvalidRequest, "one of 'qrels' or 'qrels_path' is required");
    }
    Qrels qrels;
    for (const auto& e : body.at("qrels")) {
        std::string q, item;
        int rel = 1;
        if (e.is_array() && e.size() == 3) {
            q = e[0].get<std::string>();
            item = e[1].get<std::string>();
            rel = e[2].get<int>();
        } else if (e.is_object()) {
            q = e.at("query_id").get<std::string>();
            item = e.at("item_id").get<std::string>();
            rel = e.value("relevance", 1);
        } else {
            throw Error(ErrorCode::InvalidRequest, "qrels entries are {query_id,item_id,relevance} or [q,item,rel]");
        }
        if (rel != 0 && rel != 1) throw Error(ErrorCode::InvalidRequest, "relevance must be 0 or 1");
        auto& set = qrels[q];
        if (rel == 1) set.insert(item);
    }
    return qrels;
}

}  // namespace

int http_status(ErrorCode code) noexcept {
    switch (code) {
        case ErrorCode::NotFound:
        case ErrorCode::UnknownItem:
            return 404;
        case ErrorCode::DuplicateId:
        case ErrorCode::DuplicateName:
        case ErrorCode::Conflict:
            return 409;
        case ErrorCode::PluginError:
        case ErrorCode::HandshakeMismatch:
        case ErrorCode::LaunchError:
        case ErrorCode::DimMismatch:
            return 502;
        case ErrorCode::IoError:
        case ErrorCode::CorruptRegistry:
        case ErrorCode::BadMagic:
        case ErrorCode::UnsupportedVersion:
        case ErrorCode::ChecksumMismatch:
        case ErrorCode::TruncatedFile:
            return 500;
        default:
            return 400;
    }
}

ApiServer::ApiServer(Engine& engine, ServerOptions options)
    : engine_(engine), options_(std::move(options)), server_(std::make_unique<httplib::Server>()) {
    install_routes();
}

ApiServer::~ApiServer() { stop(); }

int ApiServer::bind() {
    if (options_.port == 0) return server_->bind_to_any_port(options_.host);
    if (!server_->bind_to_port(options_.host, options_.port)) return -1;
    return options_.port;
}

void ApiServer::listen() {
    {
        std::lock_guard lock(state_mutex_);
        if (stopped_) return;
        listening_ = true;
    }
    server_->listen_after_bind();
}

void ApiServer::stop() {
    bool listening = false;
    {
        std::lock_guard lock(state_mutex_);
        stopped_ = true;
        listening = listening_;
    }
    if (listening) {
        server_->wait_until_ready();
        server_->stop();
    }
}

void ApiServer::install_routes() {
    auto& s = *server_;
    Engine& engine = engine_;

    if (!options_.cors_origins.empty()) {
        auto origins = options_.cors_origins;
        s.set_pre_routing_handler([origins](const httplib::Request& req, httplib::Response& res) {
            std::string origin = req.get_header_value("Origin");
            bool any = std::find(origins.begin(), origins.end(), "*") != origins.end();
            if (!origin.empty() && (any || std::find(origins.begin(), origins.end(), origin) != origins.end())) {
                res.set_header("Access-Control-Allow-Origin", any ? "*" : origin);
                res.set_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS");
                res.set_header("Access-Control-Allow-Headers", "Content-Type");
            }
            if (req.method == "OPTIONS") {
                res.status = 204;
                return httplib::Server::HandlerResponse::Handled;
            }
            return httplib::Server::HandlerResponse::Unhandled;
        });
    }

    s.Get("/api/v1/datasets", [&engine](const httplib::Request&, httplib::Response& res) {
        guarded(res, [&] {
            json out = json::array();
            for (const auto& d : engine.registry().list_datasets()) out.push_back(dataset_summary_json(d));
            send_json(res, 200, {{"datasets", out}});
        });
    });

    s.Post("/api/v1/datasets", [&engine](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] {
            std::string id = engine.add_dataset(parse_body(req));
            send_json(res, 201, dataset_summary_json(engine.registry().dataset(id)));
        });
    });

    s.Get(R"(/api/v1/datasets/([^/]+)/items/([^/]+))", [&engine](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] {
            std::string dataset_id = req.matches[1];
            Item item = engine.item(dataset_id, req.matches[2]);
            json out = item;
            out["dataset_id"] = dataset_id;
            send_json(res, 200, out);
        });
    });

    s.Get("/api/v1/models", [&engine](const httplib::Request&, httplib::Response& res) {
        guarded(res, [&] { send_json(res, 200, {{"models", engine.registry().list_models()}}); });
    });

    s.Post("/api/v1/models", [&engine](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] {
            json body = parse_body(req);
            engine.add_model(body);
            send_json(res, 201, engine.registry().model(body.at("name").get<std::string>()));
        });
    });

    s.Get("/api/v1/indexes", [&engine](const httplib::Request&, httplib::Response& res) {
        guarded(res, [&] { send_json(res, 200, {{"indexes", engine.registry().list_indexes()}}); });
    });

    s.Post("/api/v1/indexes", [&engine](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] {
            json body = parse_body(req);
            if (!body.is_object() || !body.contains("dataset_id") || !body.contains("model")) {
                throw Error(ErrorCode::InvalidRequest, "'dataset_id' and 'model' are required");
            }
            std::optional<std::string> id;
            if (body.contains("id") && !body.at("id").is_null()) id = body.at("id").get<std::string>();
            auto desc = engine.build_index(body.at("dataset_id").get<std::string>(), body.at("model").get<std::string>(),
                                           body.value("binarize", false), id);
            send_json(res, 201, desc);
        });
    });

    s.Post(R"(/api/v1/indexes/([^/]+)/query)", [&engine](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] {
            QueryRequest q = query_request_from_json(parse_body(req));
            send_json(res, 200, engine.execute_query(req.matches[1], q));
        });
    });

    s.Post("/api/v1/compare", [&engine](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] {
            json body = parse_body(req);
            if (!body.is_object() || !body.contains("query") || !body.at("query").is_object()) {
                throw Error(ErrorCode::EmptyRequest, "'query' object is required");
            }
            json q = body.at("query");
            if (body.contains("n")) q["n"] = body.at("n");
            if (body.contains("bins")) q["bins"] = body.at("bins");
            QueryRequest request = query_request_from_json(q);
            auto ids = body.contains("index_ids") ? string_list(body, "index_ids") : std::vector<std::string>{};
            send_json(res, 200, compare_json(engine.execute_compare(request, ids)));
        });
    });

    s.Post("/api/v1/eval", [&engine](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] {
            json body = parse_body(req);
            auto ids = string_list(body, "index_ids");
            std::vector<EvalQuery> queries;
            for (const auto& q : body.value("queries", json::array())) queries.push_back(eval_query_from_json(q));
            std::vector<std::size_t> ks = body.value("ks", std::vector<std::size_t>{1, 5, 10});
            send_json(res, 200, eval_reports_json(engine.compare_models(ids, queries, qrels_from_body(body), ks)));
        });
    });

    s.Post("/api/v1/uploads", [&engine](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] {
            if (req.body.empty()) throw Error(ErrorCode::InvalidRequest, "upload body is empty");
            send_json(res, 201, {{"uri", engine.add_upload(req.body)}});
        });
    });

    bool mounted = false;
    if (options_.webui_dir && std::filesystem::is_directory(*options_.webui_dir)) {
        mounted = s.set_mount_point("/", options_.webui_dir->string());
    }
    if (!mounted) {
        s.Get("/", [](const httplib::Request&, httplib::Response& res) {
            res.set_content(kPlaceholderPage, "text/html; charset=utf-8");
        });
    }

    s.set_error_handler([](const httplib::Request& req, httplib::Response& res) {
        if (req.path.rfind("/api/", 0) == 0 && res.body.empty()) {
            int status = res.status;
            send_error(res, Error(status == 404 ? ErrorCode::NotFound : ErrorCode::InvalidRequest,
                                  "no route for " + req.method + " " + req.path));
            res.status = status;
        }
    });
}

}  // namespace dime
