#include "dime/plugin.hpp"

#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <spawn.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <cmath>
#include <cstring>
#include <thread>

#include "dime/error.hpp"

extern char** environ;

namespace dime {

namespace {

void ignore_sigpipe_once() {
    static const bool done = [] {
        ::signal(SIGPIPE, SIG_IGN);
        return true;
    }();
    (void)done;
}

void close_fd(int& fd) noexcept {
    if (fd >= 0) {
        ::close(fd);
        fd = -1;
    }
}

}  // namespace

PluginHandshake parse_handshake(std::string_view line) {
    json j;
    try {
        j = json::parse(line);
    } catch (const json::exception& e) {
        throw Error(ErrorCode::HandshakeMismatch, std::string("handshake is not JSON: ") + e.what());
    }
    if (!j.is_object()) throw Error(ErrorCode::HandshakeMismatch, "handshake is not a JSON object");
    PluginHandshake hs;
    try {
        hs.protocol = j.at("protocol").get<std::string>();
        if (hs.protocol != kPluginProtocol) {
            throw Error(ErrorCode::HandshakeMismatch, "unsupported protocol '" + hs.protocol + "'");
        }
        hs.name = j.value("name", std::string{});
        for (const auto& k : j.at("accepts")) hs.accepts.insert(payload_kind_from_string(k.get<std::string>()));
        if (j.contains("input_dim") && !j.at("input_dim").is_null()) hs.input_dim = j.at("input_dim").get<std::uint32_t>();
        hs.output_dim = j.at("output_dim").get<std::uint32_t>();
        hs.space = j.at("space").get<std::string>();
    } catch (const json::exception& e) {
        throw Error(ErrorCode::HandshakeMismatch, std::string("malformed handshake: ") + e.what());
    } catch (const Error& e) {
        if (e.code() == ErrorCode::HandshakeMismatch) throw;
        throw Error(ErrorCode::HandshakeMismatch, e.message());
    }
    return hs;
}

void check_handshake(const PluginHandshake& hs, const ModelDescriptor& model) {
    auto mismatch = [&](const std::string& what, const std::string& plugin, const std::string& registry) {
        throw Error(ErrorCode::HandshakeMismatch, "plugin for model '" + model.name + "' declares " + what + " " +
                                                      plugin + " but the registry says " + registry);
    };
    auto kinds = [](const std::set<PayloadKind>& s) {
        std::string out = "[";
        for (auto k : s) out += (out.size() > 1 ? "," : "") + std::string(to_string(k));
        return out + "]";
    };
    auto dim = [](const std::optional<std::uint32_t>& d) { return d ? std::to_string(*d) : std::string("none"); };
    if (hs.output_dim != model.output_dim) {
        mismatch("output_dim", std::to_string(hs.output_dim), std::to_string(model.output_dim));
    }
    if (hs.accepts != model.accepts) mismatch("accepts", kinds(hs.accepts), kinds(model.accepts));
    if (hs.input_dim != model.input_dim) mismatch("input_dim", dim(hs.input_dim), dim(model.input_dim));
    if (hs.space != model.space) mismatch("space", "'" + hs.space + "'", "'" + model.space + "'");
}

std::string encode_request(std::string_view id, const ItemPayload& payload) {
    json j;
    to_json(j, payload);
    j["id"] = id;
    return j.dump();
}

PluginSession::PluginSession(ModelDescriptor model, PluginOptions options)
    : model_(std::move(model)), options_(std::move(options)) {
    if (model_.kind != ModelKind::Subprocess || !model_.command) {
        throw Error(ErrorCode::InvalidRequest, "model '" + model_.name + "' is not a subprocess model");
    }
    launch();
}

PluginSession::~PluginSession() { shutdown(); }

void PluginSession::launch() {
    ignore_sigpipe_once();
    int in_pipe[2];
    int out_pipe[2];
    if (::pipe2(in_pipe, O_CLOEXEC) != 0) {
        throw Error(ErrorCode::LaunchError, std::string("pipe: ") + std::strerror(errno));
    }
    if (::pipe2(out_pipe, O_CLOEXEC) != 0) {
        ::close(in_pipe[0]);
        ::close(in_pipe[1]);
        throw Error(ErrorCode::LaunchError, std::string("pipe: ") + std::strerror(errno));
    }

    posix_spawn_file_actions_t actions;
    posix_spawn_file_actions_init(&actions);
    posix_spawn_file_actions_adddup2(&actions, in_pipe[0], STDIN_FILENO);
    posix_spawn_file_actions_adddup2(&actions, out_pipe[1], STDOUT_FILENO);

    std::string cmd = *model_.command;
    char sh[] = "/bin/sh";
    char dash_c[] = "-c";
    char* argv[] = {sh, dash_c, cmd.data(), nullptr};
    pid_t pid = -1;
    int rc = ::posix_spawn(&pid, "/bin/sh", &actions, nullptr, argv, environ);
    posix_spawn_file_actions_destroy(&actions);
    ::close(in_pipe[0]);
    ::close(out_pipe[1]);
    if (rc != 0) {
        ::close(in_pipe[1]);
        ::close(out_pipe[0]);
        throw Error(ErrorCode::LaunchError, "cannot launch '" + cmd + "': " + std::strerror(rc));
    }
    pid_ = pid;
    to_child_ = in_pipe[1];
    from_child_ = out_pipe[0];
    buffer_.clear();

    std::string line;
    try {
        line = read_line();
    } catch (const Error& e) {
        shutdown();
        throw Error(ErrorCode::LaunchError, "plugin '" + cmd + "' produced no handshake (" + e.message() + ")");
    }
    try {
        handshake_ = parse_handshake(line);
        check_handshake(handshake_, model_);
    } catch (...) {
        shutdown();
        throw;
    }
}

void PluginSession::mark_dead() noexcept {
    close_fd(to_child_);
    close_fd(from_child_);
    if (pid_ > 0) {
        ::kill(pid_, SIGKILL);
        int status = 0;
        ::waitpid(pid_, &status, 0);
        pid_ = -1;
    }
}

void PluginSession::shutdown() noexcept {
    close_fd(to_child_);
    if (pid_ > 0) {
        // Give the plugin a moment to exit on EOF before forcing it.
        for (int i = 0; i < 20; ++i) {
            int status = 0;
            pid_t r = ::waitpid(pid_, &status, WNOHANG);
            if (r == pid_ || r < 0) {
                pid_ = -1;
                break;
            }
            std::this_thread::sleep_for(std::chrono::milliseconds(10));
        }
    }
    mark_dead();
}

void PluginSession::relaunch() {
    shutdown();
    launch();
}

std::string PluginSession::read_line() {
    auto deadline = std::chrono::steady_clock::now() + options_.timeout;
    for (;;) {
        auto nl = buffer_.find('\n');
        if (nl != std::string::npos) {
            std::string line = buffer_.substr(0, nl);
            buffer_.erase(0, nl + 1);
            if (!line.empty() && line.back() == '\r') line.pop_back();
            return line;
        }
        auto remaining = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - std::chrono::steady_clock::now());
        if (remaining.count() <= 0) {
            mark_dead();
            throw Error(ErrorCode::PluginError, "plugin '" + model_.name + "' timed out");
        }
        pollfd pfd{from_child_, POLLIN, 0};
        int pr = ::poll(&pfd, 1, static_cast<int>(remaining.count()));
        if (pr < 0) {
            if (errno == EINTR) continue;
            mark_dead();
            throw Error(ErrorCode::PluginError, std::string("poll: ") + std::strerror(errno));
        }
        if (pr == 0) continue;
        char chunk[65536];
        ssize_t n = ::read(from_child_, chunk, sizeof chunk);
        if (n < 0) {
            if (errno == EINTR || errno == EAGAIN) continue;
            mark_dead();
            throw Error(ErrorCode::PluginError, std::string("read: ") + std::strerror(errno));
        }
        if (n == 0) {
            mark_dead();
            throw Error(ErrorCode::PluginError, "plugin '" + model_.name + "' exited");
        }
        buffer_.append(chunk, static_cast<std::size_t>(n));
    }
}

void PluginSession::write_line(const std::string& line) {
    std::string out = line + "\n";
    const char* p = out.data();
    std::size_t left = out.size();
    while (left > 0) {
        ssize_t n = ::write(to_child_, p, left);
        if (n < 0) {
            if (errno == EINTR) continue;
            mark_dead();
            throw Error(ErrorCode::PluginError, "plugin '" + model_.name + "' is gone: " + std::strerror(errno));
        }
        p += n;
        left -= static_cast<std::size_t>(n);
    }
}

Embedding PluginSession::embed(const ItemPayload& payload) {
    if (!alive()) throw Error(ErrorCode::PluginError, "plugin '" + model_.name + "' is not running");
    check_payload(model_, payload);

    const ItemPayload* to_send = &payload;
    ItemPayload rewritten;
    if (const UriPayload* u = payload.as_uri(); u && options_.upload_dir && u->value.rfind("upload:", 0) == 0) {
        rewritten = ItemPayload::uri("file:" + (*options_.upload_dir / u->value.substr(7)).string());
        to_send = &rewritten;
    }

    std::string id = "q" + std::to_string(next_request_++);
    write_line(encode_request(id, *to_send));
    std::string line = read_line();

    json reply;
    try {
        reply = json::parse(line);
    } catch (const json::exception&) {
        mark_dead();
        throw Error(ErrorCode::PluginError, "plugin '" + model_.name + "' sent a non-JSON line");
    }
    if (!reply.is_object() || !reply.contains("id") || reply.at("id") != json(id)) {
        mark_dead();
        throw Error(ErrorCode::PluginError, "plugin '" + model_.name + "' answered out of order");
    }
    if (reply.contains("error")) {
        const json& e = reply.at("error");
        throw Error(ErrorCode::PluginError, "plugin '" + model_.name + "': " + (e.is_string() ? e.get<std::string>() : e.dump()));
    }
    if (!reply.contains("embedding") || !reply.at("embedding").is_array()) {
        throw Error(ErrorCode::PluginError, "plugin '" + model_.name + "' reply lacks 'embedding'");
    }
    const json& arr = reply.at("embedding");
    if (arr.size() != model_.output_dim) {
        throw Error(ErrorCode::DimMismatch, "plugin '" + model_.name + "' returned " + std::to_string(arr.size()) +
                                                " values, expected " + std::to_string(model_.output_dim));
    }
    Embedding out;
    out.reserve(arr.size());
    for (const auto& x : arr) {
        if (!x.is_number()) throw Error(ErrorCode::PluginError, "embedding contains a non-number");
        float f = x.get<float>();
        if (!std::isfinite(f)) throw Error(ErrorCode::PluginError, "embedding contains a non-finite value");
        out.push_back(f);
    }
    return out;
}

PluginPool::PluginPool(ModelDescriptor model, std::size_t max_sessions, PluginOptions options)
    : model_(std::move(model)), max_sessions_(max_sessions == 0 ? 1 : max_sessions), options_(std::move(options)) {}

PluginPool::Lease PluginPool::checkout() {
    std::unique_lock lock(mutex_);
    available_.wait(lock, [&] { return !idle_.empty() || live_ < max_sessions_; });
    if (!idle_.empty()) {
        auto s = std::move(idle_.back());
        idle_.pop_back();
        return Lease(this, std::move(s));
    }
    ++live_;
    lock.unlock();
    try {
        return Lease(this, std::make_unique<PluginSession>(model_, options_));
    } catch (...) {
        lock.lock();
        --live_;
        available_.notify_one();
        throw;
    }
}

void PluginPool::give_back(std::unique_ptr<PluginSession> session) {
    std::unique_lock lock(mutex_);
    if (session && session->alive()) {
        idle_.push_back(std::move(session));
    } else {
        --live_;
        lock.unlock();
        session.reset();
        lock.lock();
    }
    available_.notify_one();
}

PluginPool::Lease::~Lease() {
    if (pool_ && session_) pool_->give_back(std::move(session_));
}

}  // namespace dime
