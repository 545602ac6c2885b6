#pragma once

#include <chainsmith/error.hpp>

#include <json.hpp>

#include <atomic>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <semaphore>
#include <span>
#include <string>
#include <vector>

namespace chainsmith::backend {

enum class Role { System, User, Assistant };

std::string to_string(Role role);
Role role_from_string(const std::string& s);

/// One content part of a chat message: either text or an opaque image URI.
struct ContentPart {
    enum class Kind { Text, Image };
    Kind kind = Kind::Text;
    std::string value;

    static ContentPart text(std::string s) { return {Kind::Text, std::move(s)}; }
    static ContentPart image(std::string uri) { return {Kind::Image, std::move(uri)}; }

    bool operator==(const ContentPart&) const = default;
};

struct ChatMessage {
    Role role = Role::User;
    std::vector<ContentPart> parts;

    static ChatMessage text(Role role, std::string s) { return {role, {ContentPart::text(std::move(s))}}; }

    /// Concatenation of all text parts, separated by newlines.
    std::string text_content() const;
    /// Throws Error if parts are empty or more than one image part is present.
    void validate() const;

    bool operator==(const ChatMessage&) const = default;
};

struct GenerationParams {
    double temperature = 0.7;
    double top_p = 1.0;
    int max_tokens = 1024;
    std::optional<std::int64_t> seed;

    static constexpr double kMaxTemperature = 2.0;

    void validate() const;
    bool operator==(const GenerationParams&) const = default;
};

enum class BackendKind { Http, Scripted };

struct BackendConfig {
    BackendKind kind = BackendKind::Scripted;
    std::string base_url;
    std::string model_id;
    std::string auth_token_env;
    int max_in_flight = 4;
    int retries = 2;
    double timeout_seconds = 60.0;
    // First backoff window; attempt k waits uniform(0, min(timeout, base * 2^k)).
    double backoff_base_seconds = 0.25;
    std::string script_path;

    /// `prefix` is prepended to field names in ConfigError.
    void validate(const std::string& prefix = "backend") const;
};

// Wire-level JSON forms.
nlohmann::json to_json(const ChatMessage& m);
nlohmann::json to_json(const GenerationParams& p);
GenerationParams params_from_json(const nlohmann::json& j);
BackendConfig backend_config_from_json(const nlohmann::json& j, const std::string& prefix);

/// Canonical serialization of a request; input of request_digest.
std::string canonical_request(std::span<const ChatMessage> messages, const GenerationParams& params);
/// SHA-256 over canonical_request; the key of scripted tables.
std::string request_digest(std::span<const ChatMessage> messages, const GenerationParams& params);

class BackendError : public Error {
public:
    using Error::Error;
};
class TransportError : public BackendError {
public:
    using BackendError::BackendError;
};
class AuthError : public BackendError {
public:
    using BackendError::BackendError;
};
class TimeoutError : public TransportError {
public:
    using TransportError::TransportError;
};
class UnscriptedRequest : public BackendError {
public:
    explicit UnscriptedRequest(std::string digest)
        : BackendError("unscripted request " + digest), digest_(std::move(digest)) {}
    const std::string& digest() const noexcept { return digest_; }

private:
    std::string digest_;
};

struct Request {
    std::vector<ChatMessage> messages;
    GenerationParams params;
};

/// Chat-completion endpoint. Implementations are safe to call concurrently.
class ChatBackend {
public:
    explicit ChatBackend(int max_in_flight);
    virtual ~ChatBackend() = default;
    ChatBackend(const ChatBackend&) = delete;
    ChatBackend& operator=(const ChatBackend&) = delete;

    /// Sends one request. Blocks while max_in_flight calls are outstanding.
    std::string complete(std::span<const ChatMessage> messages, const GenerationParams& params);
    std::string complete(const Request& r) { return complete(r.messages, r.params); }

    int max_in_flight() const noexcept { return max_in_flight_; }
    /// High-water mark of concurrently outstanding calls.
    int peak_in_flight() const noexcept { return peak_; }

protected:
    virtual std::string do_complete(std::span<const ChatMessage> messages, const GenerationParams& params) = 0;

private:
    int max_in_flight_;
    std::counting_semaphore<> gate_;
    std::atomic<int> in_flight_{0};
    std::atomic<int> peak_{0};
};

/// Replays canned replies keyed by request_digest. Every request is logged.
class ScriptedBackend : public ChatBackend {
public:
    struct LoggedRequest {
        std::string digest;
        Request request;
    };

    explicit ScriptedBackend(std::map<std::string, std::string> table, int max_in_flight = 4);

    /// Loads a JSONL table of {"digest", "reply"} records.
    static std::map<std::string, std::string> load_table(const std::string& path);
    static void save_table(const std::string& path, const std::map<std::string, std::string>& table);

    std::vector<LoggedRequest> log() const;
    void clear_log();

protected:
    std::string do_complete(std::span<const ChatMessage> messages, const GenerationParams& params) override;

private:
    std::map<std::string, std::string> table_;
    mutable std::mutex mutex_;
    std::vector<LoggedRequest> log_;
};

/// Delegates to a callable and records (digest, reply) for every call.
/// Used to author scripted tables from a simulated model.
class RecordingBackend : public ChatBackend {
public:
    using Responder = std::function<std::string(const Request&)>;

    explicit RecordingBackend(Responder responder, int max_in_flight = 1);

    std::map<std::string, std::string> table() const;
    std::vector<Request> requests() const;

protected:
    std::string do_complete(std::span<const ChatMessage> messages, const GenerationParams& params) override;

private:
    Responder responder_;
    mutable std::mutex mutex_;
    std::map<std::string, std::string> table_;
    std::vector<Request> requests_;
};

/// OpenAI-style chat-completions client over HTTP(S).
class HttpBackend : public ChatBackend {
public:
    explicit HttpBackend(BackendConfig config);

    /// Number of HTTP attempts made so far, across all calls.
    int attempts() const noexcept { return attempts_; }

    /// Request body sent for a call; exposed for tests.
    nlohmann::json request_body(std::span<const ChatMessage> messages, const GenerationParams& params) const;

protected:
    std::string do_complete(std::span<const ChatMessage> messages, const GenerationParams& params) override;

private:
    BackendConfig config_;
    std::string scheme_host_port_;
    std::string path_;
    std::atomic<int> attempts_{0};
};

std::shared_ptr<ChatBackend> make_backend(const BackendConfig& config);

/// Per-position outcome of complete_many_settled.
struct Settled {
    std::optional<std::string> reply;
    std::string error;
    bool ok() const noexcept { return reply.has_value(); }
};

class BatchError : public BackendError {
public:
    BatchError(std::vector<Settled> results, std::vector<std::size_t> failed);
    const std::vector<Settled>& results() const noexcept { return results_; }
    /// Zero-based positions that failed.
    const std::vector<std::size_t>& failed_positions() const noexcept { return failed_; }

private:
    std::vector<Settled> results_;
    std::vector<std::size_t> failed_;
};

/// Issues all requests with at most backend.max_in_flight() outstanding.
std::vector<Settled> complete_many_settled(ChatBackend& backend, std::span<const Request> requests);
/// As complete_many_settled, but throws BatchError if any position failed.
std::vector<std::string> complete_many(ChatBackend& backend, std::span<const Request> requests);

}  // namespace chainsmith::backend
