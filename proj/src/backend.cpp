#include <chainsmith/backend.hpp>
#include <chainsmith/digest.hpp>
#include <chainsmith/parallel.hpp>

#include <fstream>
#include <sstream>

namespace chainsmith::backend {

using nlohmann::json;

std::string to_string(Role role) {
    switch (role) {
        case Role::System: return "system";
        case Role::User: return "user";
        case Role::Assistant: return "assistant";
    }
    return "user";
}

Role role_from_string(const std::string& s) {
    if (s == "system") return Role::System;
    if (s == "user") return Role::User;
    if (s == "assistant") return Role::Assistant;
    throw Error("unknown chat role '" + s + "'");
}

std::string ChatMessage::text_content() const {
    std::string out;
    for (const auto& p : parts) {
        if (p.kind != ContentPart::Kind::Text) continue;
        if (!out.empty()) out += '\n';
        out += p.value;
    }
    return out;
}

void ChatMessage::validate() const {
    if (parts.empty()) throw Error("chat message has no parts");
    int images = 0;
    for (const auto& p : parts)
        if (p.kind == ContentPart::Kind::Image) ++images;
    if (images > 1) throw Error("chat message has more than one image part");
}

void GenerationParams::validate() const {
    if (!(temperature >= 0.0) || temperature > kMaxTemperature)
        throw ConfigError("temperature", "must be in [0, 2]");
    if (!(top_p > 0.0) || top_p > 1.0) throw ConfigError("top_p", "must be in (0, 1]");
    if (max_tokens <= 0) throw ConfigError("max_tokens", "must be positive");
}

void BackendConfig::validate(const std::string& prefix) const {
    if (kind == BackendKind::Http && base_url.empty())
        throw ConfigError(prefix + ".base_url", "required for http backends");
    if (kind == BackendKind::Scripted && script_path.empty())
        throw ConfigError(prefix + ".script", "required for scripted backends");
    if (max_in_flight < 1) throw ConfigError(prefix + ".max_in_flight", "must be positive");
    if (retries < 0) throw ConfigError(prefix + ".retries", "must be non-negative");
    if (!(timeout_seconds > 0.0)) throw ConfigError(prefix + ".timeout", "must be positive");
    if (!(backoff_base_seconds >= 0.0)) throw ConfigError(prefix + ".backoff_base", "must be non-negative");
}

json to_json(const ChatMessage& m) {
    json parts = json::array();
    for (const auto& p : m.parts) {
        if (p.kind == ContentPart::Kind::Text)
            parts.push_back({{"text", p.value}});
        else
            parts.push_back({{"image_ref", p.value}});
    }
    return {{"role", to_string(m.role)}, {"parts", std::move(parts)}};
}

json to_json(const GenerationParams& p) {
    json j = {{"temperature", p.temperature}, {"top_p", p.top_p}, {"max_tokens", p.max_tokens}};
    if (p.seed) j["seed"] = *p.seed;
    return j;
}

GenerationParams params_from_json(const json& j) {
    GenerationParams p;
    p.temperature = j.value("temperature", p.temperature);
    p.top_p = j.value("top_p", p.top_p);
    p.max_tokens = j.value("max_tokens", p.max_tokens);
    if (j.contains("seed") && !j["seed"].is_null()) p.seed = j["seed"].get<std::int64_t>();
    return p;
}

BackendConfig backend_config_from_json(const json& j, const std::string& prefix) {
    if (!j.is_object()) throw ConfigError(prefix, "must be an object");
    if (!j.contains("kind")) throw ConfigError(prefix + ".kind", "missing field");
    BackendConfig c;
    const auto kind = j["kind"].get<std::string>();
    if (kind == "http")
        c.kind = BackendKind::Http;
    else if (kind == "scripted")
        c.kind = BackendKind::Scripted;
    else
        throw ConfigError(prefix + ".kind", "unknown backend kind '" + kind + "'");
    c.base_url = j.value("base_url", "");
    c.model_id = j.value("model_id", "");
    c.auth_token_env = j.value("auth_token_env", "");
    c.max_in_flight = j.value("max_in_flight", c.max_in_flight);
    c.retries = j.value("retries", c.retries);
    c.timeout_seconds = j.value("timeout", c.timeout_seconds);
    c.backoff_base_seconds = j.value("backoff_base", c.backoff_base_seconds);
    c.script_path = j.value("script", "");
    c.validate(prefix);
    return c;
}

std::string canonical_request(std::span<const ChatMessage> messages, const GenerationParams& params) {
    json msgs = json::array();
    for (const auto& m : messages) msgs.push_back(to_json(m));
    // nlohmann::json objects keep keys sorted, so dump() is canonical.
    return json{{"messages", std::move(msgs)}, {"params", to_json(params)}}.dump();
}

std::string request_digest(std::span<const ChatMessage> messages, const GenerationParams& params) {
    return sha256_hex(canonical_request(messages, params));
}

// ChatBackend

ChatBackend::ChatBackend(int max_in_flight)
    : max_in_flight_(std::max(1, max_in_flight)), gate_(std::max(1, max_in_flight)) {}

std::string ChatBackend::complete(std::span<const ChatMessage> messages, const GenerationParams& params) {
    if (messages.empty()) throw Error("complete: messages must be non-empty");
    for (const auto& m : messages) m.validate();
    gate_.acquire();
    struct Release {
        ChatBackend* self;
        ~Release() {
            --self->in_flight_;
            self->gate_.release();
        }
    } release{this};
    const int now = ++in_flight_;
    int peak = peak_.load();
    while (now > peak && !peak_.compare_exchange_weak(peak, now)) {
    }
    return do_complete(messages, params);
}

// ScriptedBackend

ScriptedBackend::ScriptedBackend(std::map<std::string, std::string> table, int max_in_flight)
    : ChatBackend(max_in_flight), table_(std::move(table)) {}

std::map<std::string, std::string> ScriptedBackend::load_table(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open script table '" + path + "'");
    std::map<std::string, std::string> table;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            const auto j = json::parse(line);
            table[j.at("digest").get<std::string>()] = j.at("reply").get<std::string>();
        } catch (const json::exception& e) {
            throw Error(path + ":" + std::to_string(lineno) + ": " + e.what());
        }
    }
    return table;
}

void ScriptedBackend::save_table(const std::string& path, const std::map<std::string, std::string>& table) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write script table '" + path + "'");
    for (const auto& [digest, reply] : table) out << json{{"digest", digest}, {"reply", reply}}.dump() << '\n';
}

std::vector<ScriptedBackend::LoggedRequest> ScriptedBackend::log() const {
    std::lock_guard lock(mutex_);
    return log_;
}

void ScriptedBackend::clear_log() {
    std::lock_guard lock(mutex_);
    log_.clear();
}

std::string ScriptedBackend::do_complete(std::span<const ChatMessage> messages, const GenerationParams& params) {
    auto digest = request_digest(messages, params);
    {
        std::lock_guard lock(mutex_);
        log_.push_back({digest, Request{{messages.begin(), messages.end()}, params}});
    }
    const auto it = table_.find(digest);
    if (it == table_.end()) throw UnscriptedRequest(std::move(digest));
    return it->second;
}

// RecordingBackend

RecordingBackend::RecordingBackend(Responder responder, int max_in_flight)
    : ChatBackend(max_in_flight), responder_(std::move(responder)) {}

std::map<std::string, std::string> RecordingBackend::table() const {
    std::lock_guard lock(mutex_);
    return table_;
}

std::vector<Request> RecordingBackend::requests() const {
    std::lock_guard lock(mutex_);
    return requests_;
}

std::string RecordingBackend::do_complete(std::span<const ChatMessage> messages, const GenerationParams& params) {
    Request r{{messages.begin(), messages.end()}, params};
    auto reply = responder_(r);
    std::lock_guard lock(mutex_);
    table_[request_digest(messages, params)] = reply;
    requests_.push_back(std::move(r));
    return reply;
}

std::shared_ptr<ChatBackend> make_backend(const BackendConfig& config) {
    config.validate();
    if (config.kind == BackendKind::Scripted)
        return std::make_shared<ScriptedBackend>(ScriptedBackend::load_table(config.script_path),
                                                 config.max_in_flight);
    return std::make_shared<HttpBackend>(config);
}

// Batches

namespace {

std::string describe_failures(const std::vector<Settled>& results, const std::vector<std::size_t>& failed) {
    std::ostringstream os;
    os << failed.size() << " of " << results.size() << " requests failed:";
    for (auto i : failed) os << " [" << i << "] " << results[i].error << ";";
    return os.str();
}

}  // namespace

BatchError::BatchError(std::vector<Settled> results, std::vector<std::size_t> failed)
    : BackendError(describe_failures(results, failed)), results_(std::move(results)), failed_(std::move(failed)) {}

std::vector<Settled> complete_many_settled(ChatBackend& backend, std::span<const Request> requests) {
    if (requests.empty()) throw Error("complete_many: request list must be non-empty");
    std::vector<Settled> out(requests.size());
    parallel_for(requests.size(), static_cast<std::size_t>(backend.max_in_flight()), [&](std::size_t i) {
        try {
            out[i].reply = backend.complete(requests[i]);
        } catch (const std::exception& e) {
            out[i].error = e.what();
        }
    });
    return out;
}

std::vector<std::string> complete_many(ChatBackend& backend, std::span<const Request> requests) {
    auto settled = complete_many_settled(backend, requests);
    std::vector<std::size_t> failed;
    for (std::size_t i = 0; i < settled.size(); ++i)
        if (!settled[i].ok()) failed.push_back(i);
    if (!failed.empty()) throw BatchError(std::move(settled), std::move(failed));
    std::vector<std::string> replies;
    replies.reserve(settled.size());
    for (auto& s : settled) replies.push_back(std::move(*s.reply));
    return replies;
}

}  // namespace chainsmith::backend
