#pragma once

#include <sys/types.h>

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "dime/embedding.hpp"
#include "dime/types.hpp"

namespace dime {

inline constexpr std::string_view kPluginProtocol = "dime-embedder/1";

/// First line a plugin writes on stdout.
struct PluginHandshake {
    std::string protocol;
    std::string name;
    std::set<PayloadKind> accepts;
    std::optional<std::uint32_t> input_dim;
    std::uint32_t output_dim = 0;
    std::string space;
};

/// Throws HandshakeMismatch if the line is not a well-formed handshake.
PluginHandshake parse_handshake(std::string_view line);
/// Throws HandshakeMismatch if the handshake disagrees with the registered model.
/// The plugin's self-reported name is informational and not compared.
void check_handshake(const PluginHandshake& hs, const ModelDescriptor& model);

/// Serializes one request line (without the trailing newline).
std::string encode_request(std::string_view id, const ItemPayload& payload);

struct PluginOptions {
    std::chrono::milliseconds timeout{30000};
    /// Directory holding uploaded files; `upload:NAME` URIs are rewritten to
    /// `file:<dir>/NAME` before they reach the plugin.
    std::optional<std::filesystem::path> upload_dir;
};

/// One running embedder process speaking newline-delimited JSON on
/// stdin/stdout. Strictly one request in flight; not thread-safe.
class PluginSession {
public:
    /// Launches the model's command and validates its handshake.
    explicit PluginSession(ModelDescriptor model, PluginOptions options = {});
    ~PluginSession();

    PluginSession(const PluginSession&) = delete;
    PluginSession& operator=(const PluginSession&) = delete;

    Embedding embed(const ItemPayload& payload);

    bool alive() const noexcept { return pid_ > 0; }
    /// Terminates the current process (if any) and starts a fresh one.
    void relaunch();

    const PluginHandshake& handshake() const noexcept { return handshake_; }
    const ModelDescriptor& model() const noexcept { return model_; }

private:
    void launch();
    void shutdown() noexcept;
    void mark_dead() noexcept;
    std::string read_line();
    void write_line(const std::string& line);

    ModelDescriptor model_;
    PluginOptions options_;
    PluginHandshake handshake_;
    pid_t pid_ = -1;
    int to_child_ = -1;
    int from_child_ = -1;
    std::string buffer_;
    std::uint64_t next_request_ = 1;
};

/// Bounded pool of sessions for one model. Checkout is the synchronization
/// point; dead sessions are dropped on return and replaced lazily.
class PluginPool {
public:
    PluginPool(ModelDescriptor model, std::size_t max_sessions, PluginOptions options = {});

    class Lease {
    public:
        Lease(PluginPool* pool, std::unique_ptr<PluginSession> session)
            : pool_(pool), session_(std::move(session)) {}
        Lease(Lease&&) = default;
        Lease& operator=(Lease&&) = delete;
        ~Lease();

        PluginSession& operator*() const { return *session_; }
        PluginSession* operator->() const { return session_.get(); }

    private:
        PluginPool* pool_;
        std::unique_ptr<PluginSession> session_;
    };

    Lease checkout();

    const ModelDescriptor& model() const noexcept { return model_; }

private:
    void give_back(std::unique_ptr<PluginSession> session);

    ModelDescriptor model_;
    std::size_t max_sessions_;
    PluginOptions options_;
    std::mutex mutex_;
    std::condition_variable available_;
    std::vector<std::unique_ptr<PluginSession>> idle_;
    std::size_t live_ = 0;
};

}  // namespace dime
