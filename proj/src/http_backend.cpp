#include <chainsmith/backend.hpp>

#include <httplib.h>

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <random>
#include <thread>

namespace chainsmith::backend {

using nlohmann::json;

namespace {

// Splits "http://host:port/v1" into ("http://host:port", "/v1").
std::pair<std::string, std::string> split_url(const std::string& url) {
    const auto scheme_end = url.find("://");
    if (scheme_end == std::string::npos) throw ConfigError("base_url", "missing scheme in '" + url + "'");
    const auto path_start = url.find('/', scheme_end + 3);
    if (path_start == std::string::npos) return {url, ""};
    auto path = url.substr(path_start);
    while (!path.empty() && path.back() == '/') path.pop_back();
    return {url.substr(0, path_start), path};
}

bool retryable_status(int status) { return status == 408 || status == 429 || status >= 500; }

}  // namespace

HttpBackend::HttpBackend(BackendConfig config) : ChatBackend(config.max_in_flight), config_(std::move(config)) {
    config_.validate();
    std::tie(scheme_host_port_, path_) = split_url(config_.base_url);
}

json HttpBackend::request_body(std::span<const ChatMessage> messages, const GenerationParams& params) const {
    json msgs = json::array();
    for (const auto& m : messages) {
        json content = json::array();
        for (const auto& p : m.parts) {
            if (p.kind == ContentPart::Kind::Text)
                content.push_back({{"type", "text"}, {"text", p.value}});
            else
                content.push_back({{"type", "image_url"}, {"image_url", {{"url", p.value}}}});
        }
        msgs.push_back({{"role", to_string(m.role)}, {"content", std::move(content)}});
    }
    json body = {{"model", config_.model_id},
                 {"messages", std::move(msgs)},
                 {"temperature", params.temperature},
                 {"top_p", params.top_p},
                 {"max_tokens", params.max_tokens}};
    if (params.seed) body["seed"] = *params.seed;
    return body;
}

std::string HttpBackend::do_complete(std::span<const ChatMessage> messages, const GenerationParams& params) {
    httplib::Headers headers;
    if (!config_.auth_token_env.empty()) {
        const char* token = std::getenv(config_.auth_token_env.c_str());
        if (token == nullptr || *token == '\0')
            throw AuthError("auth token env var '" + config_.auth_token_env + "' is not set");
        headers.emplace("Authorization", std::string("Bearer ") + token);
    }
    const auto body = request_body(messages, params).dump();
    const auto timeout = std::chrono::duration<double>(config_.timeout_seconds);
    const auto timeout_us = std::chrono::duration_cast<std::chrono::microseconds>(timeout);

    httplib::Client client(scheme_host_port_);
    client.set_connection_timeout(timeout_us);
    client.set_read_timeout(timeout_us);
    client.set_write_timeout(timeout_us);

    thread_local std::mt19937_64 jitter_rng{std::random_device{}()};
    std::string last_error;
    bool last_was_timeout = false;
    for (int attempt = 0; attempt <= config_.retries; ++attempt) {
        if (attempt > 0) {
            const double cap = std::min(config_.timeout_seconds,
                                        config_.backoff_base_seconds * std::ldexp(1.0, attempt - 1));
            std::uniform_real_distribution<double> wait(0.0, std::max(cap, 0.0));
            std::this_thread::sleep_for(std::chrono::duration<double>(wait(jitter_rng)));
        }
        ++attempts_;
        auto res = client.Post(path_ + "/chat/completions", headers, body, "application/json");
        if (!res) {
            last_was_timeout = res.error() == httplib::Error::Read || res.error() == httplib::Error::Write ||
                               res.error() == httplib::Error::ConnectionTimeout;
            last_error = "transport failure: " + httplib::to_string(res.error());
            continue;
        }
        last_was_timeout = false;
        if (res->status == 401 || res->status == 403)
            throw AuthError("endpoint rejected credentials (HTTP " + std::to_string(res->status) + ")");
        if (retryable_status(res->status)) {
            last_error = "HTTP " + std::to_string(res->status);
            continue;
        }
        if (res->status != 200) throw TransportError("HTTP " + std::to_string(res->status) + ": " + res->body);
        try {
            const auto j = json::parse(res->body);
            const auto& content = j.at("choices").at(0).at("message").at("content");
            if (content.is_string()) return content.get<std::string>();
            // Some servers echo structured content parts.
            std::string text;
            for (const auto& part : content)
                if (part.value("type", "") == "text") text += part.value("text", "");
            return text;
        } catch (const json::exception& e) {
            throw TransportError(std::string("malformed completion response: ") + e.what());
        }
    }
    const auto msg = last_error + " after " + std::to_string(config_.retries + 1) + " attempts";
    if (last_was_timeout) throw TimeoutError(msg);
    throw TransportError(msg);
}

}  // namespace chainsmith::backend
