#pragma once

#include <filesystem>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "dime/engine.hpp"

namespace httplib {
class Server;
}

namespace dime {

struct ServerOptions {
    std::string host = "0.0.0.0";
    int port = 8080;
    /// Directory with the browser UI's static files, served at "/".
    std::optional<std::filesystem::path> webui_dir;
    /// Origins allowed by CORS; "*" allows any.
    std::vector<std::string> cors_origins;
};

/// HTTP status for an engine error code.
int http_status(ErrorCode code) noexcept;

/// JSON API over an Engine (v1 endpoint table) plus static UI assets.
class ApiServer {
public:
    ApiServer(Engine& engine, ServerOptions options);
    ~ApiServer();

    ApiServer(const ApiServer&) = delete;
    ApiServer& operator=(const ApiServer&) = delete;

    /// Binds the configured port (0 picks a free one) and returns the bound port.
    int bind();
    /// Serves until stop(). Call after bind(). Returns at once if stop()
    /// already ran.
    void listen();
    /// Safe to call from any thread, before or after listen() starts.
    void stop();

    httplib::Server& http() noexcept { return *server_; }

private:
    void install_routes();

    Engine& engine_;
    ServerOptions options_;
    std::unique_ptr<httplib::Server> server_;
    std::mutex state_mutex_;
    bool listening_ = false;
    bool stopped_ = false;
};

}  // namespace dime
