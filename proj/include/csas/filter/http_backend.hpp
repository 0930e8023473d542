#pragma once

// Backend speaking the OpenAI-style REST dialect (chat completions,
// embeddings, moderations). Any server exposing those three routes works.
//
// Environment:
//   CSAS_BACKEND_URL        base URL, e.g. https://api.openai.com
//   CSAS_BACKEND_API_KEY    bearer token (optional for local servers)
//   CSAS_CHAT_MODEL         default gpt-4o-mini
//   CSAS_EMBEDDING_MODEL    default text-embedding-ada-002
//   CSAS_EMBEDDING_DIM      default 1536
//   CSAS_BACKEND_TIMEOUT_S  default 30

#include <cstdlib>
#include <memory>
#include <string>
#include <utility>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "csas/error.hpp"
#include "csas/filter/backend.hpp"
#include "csas/filter/mock_backend.hpp"

namespace csas::filter {

class HttpBackend final : public Backend {
public:
    struct Options {
        std::string base_url;
        std::string api_key;
        std::string chat_model = "gpt-4o-mini";
        std::string embedding_model = "text-embedding-ada-002";
        std::size_t dimension = 1536;
        int timeout_seconds = 30;
    };

    explicit HttpBackend(Options options) : options_(std::move(options)) {
        if (options_.base_url.empty()) throw ConfigError("backend base URL is empty");
        if (options_.dimension == 0) throw ConfigError("embedding dimension must be positive");
        while (!options_.base_url.empty() && options_.base_url.back() == '/') options_.base_url.pop_back();
    }

    static Options options_from_env() {
        const auto env = [](const char* name, std::string fallback) {
            const char* v = std::getenv(name);
            return v && *v ? std::string(v) : fallback;
        };
        Options o;
        o.base_url = env("CSAS_BACKEND_URL", "");
        o.api_key = env("CSAS_BACKEND_API_KEY", "");
        o.chat_model = env("CSAS_CHAT_MODEL", o.chat_model);
        o.embedding_model = env("CSAS_EMBEDDING_MODEL", o.embedding_model);
        try {
            o.dimension = std::stoul(env("CSAS_EMBEDDING_DIM", "1536"));
            o.timeout_seconds = std::stoi(env("CSAS_BACKEND_TIMEOUT_S", "30"));
        } catch (const std::exception&) {
            throw ConfigError("CSAS_EMBEDDING_DIM and CSAS_BACKEND_TIMEOUT_S must be integers");
        }
        return o;
    }

    std::string id() const override { return "http:" + options_.chat_model; }
    std::size_t dimension() const override { return options_.dimension; }

    std::string complete(const PromptTemplate& tmpl, const Variables& vars) override {
        const nlohmann::json body = {
            {"model", options_.chat_model},
            {"temperature", tmpl.temperature},
            {"messages", nlohmann::json::array({{{"role", "user"}, {"content", render(tmpl, vars)}}})},
        };
        const auto reply = post("/v1/chat/completions", body);
        try {
            return reply.at("choices").at(0).at("message").at("content").get<std::string>();
        } catch (const nlohmann::json::exception&) {
            throw BackendError("chat completion reply has no choices[0].message.content");
        }
    }

    Embedding embed(const std::string& text) override {
        const auto reply = post("/v1/embeddings", {{"model", options_.embedding_model}, {"input", text}});
        Embedding v;
        try {
            v = reply.at("data").at(0).at("embedding").get<Embedding>();
        } catch (const nlohmann::json::exception&) {
            throw BackendError("embedding reply has no data[0].embedding");
        }
        if (v.size() != options_.dimension) {
            throw BackendError("embedding has dimension " + std::to_string(v.size()) + ", configured " +
                               std::to_string(options_.dimension));
        }
        return v;
    }

    ModerationResult moderate(const std::string& text) override {
        const auto reply = post("/v1/moderations", {{"input", text}});
        ModerationResult result;
        try {
            const auto& r = reply.at("results").at(0);
            result.flagged = r.at("flagged").get<bool>();
            if (r.contains("categories")) {
                for (const auto& [name, hit] : r.at("categories").items()) {
                    if (hit.is_boolean() && hit.get<bool>()) result.categories.push_back(name);
                }
            }
        } catch (const nlohmann::json::exception&) {
            throw BackendError("moderation reply has no results[0].flagged");
        }
        return result;
    }

private:
    nlohmann::json post(const std::string& path, const nlohmann::json& body) {
        httplib::Client client(options_.base_url);
        client.set_connection_timeout(options_.timeout_seconds, 0);
        client.set_read_timeout(options_.timeout_seconds, 0);
        client.set_write_timeout(options_.timeout_seconds, 0);
        httplib::Headers headers;
        if (!options_.api_key.empty()) headers.emplace("Authorization", "Bearer " + options_.api_key);

        auto res = client.Post(path, headers, body.dump(), "application/json");
        if (!res) throw BackendError("backend request " + path + " failed: " + httplib::to_string(res.error()));
        if (res->status < 200 || res->status >= 300) {
            throw BackendError("backend request " + path + " returned HTTP " + std::to_string(res->status));
        }
        try {
            return nlohmann::json::parse(res->body);
        } catch (const nlohmann::json::parse_error&) {
            throw BackendError("backend reply to " + path + " is not JSON");
        }
    }

    Options options_;
};

// "mock" or "http"; anything else is a configuration error.
inline std::unique_ptr<Backend> make_backend(const std::string& backend_id) {
    if (backend_id == "mock") return std::make_unique<MockBackend>();
    if (backend_id == "http") return std::make_unique<HttpBackend>(HttpBackend::options_from_env());
    throw ConfigError("unknown backend '" + backend_id + "' (expected mock or http)");
}

}  // namespace csas::filter
