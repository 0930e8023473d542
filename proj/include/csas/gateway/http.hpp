#pragma once

// httplib binding for SurveyService. Survey platforms call /sample, /input and
// /update with query or form parameters; the researcher endpoints take JSON.
// When a dashboard token is set, researcher endpoints (and dry-run /input)
// require it in the X-CSAS-Token header.

#include <cstdlib>
#include <filesystem>
#include <functional>
#include <string>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "csas/gateway/service.hpp"

namespace csas::gateway {

struct ServerOptions {
    std::string host = "127.0.0.1";
    int port = 8080;
    std::string store_path;      // empty: in-memory
    std::string dashboard_token;  // empty: researcher endpoints are open
    std::string ui_dir;          // static files mounted at /ui when it exists

    // CSAS_HOST, CSAS_PORT, CSAS_STORE, CSAS_DASHBOARD_TOKEN, CSAS_UI_DIR
    static ServerOptions from_env() {
        ServerOptions o;
        const auto env = [](const char* k) -> std::string {
            const char* v = std::getenv(k);
            return v ? v : "";
        };
        if (auto v = env("CSAS_HOST"); !v.empty()) o.host = v;
        if (auto v = env("CSAS_PORT"); !v.empty()) {
            try {
                o.port = std::stoi(v);
            } catch (const std::exception&) {
                throw ConfigError("CSAS_PORT is not a number: " + v);
            }
        }
        o.store_path = env("CSAS_STORE");
        o.dashboard_token = env("CSAS_DASHBOARD_TOKEN");
        o.ui_dir = env("CSAS_UI_DIR");
        return o;
    }
};

namespace http_detail {

inline Params params_of(const httplib::Request& req) {
    Params out;
    for (const auto& [k, v] : req.params) out.emplace(k, v);  // first value wins
    return out;
}

inline json json_body(const httplib::Request& req) {
    if (req.body.empty()) return json::object();
    try {
        return json::parse(req.body);
    } catch (const json::parse_error& e) {
        throw ValidationError(std::string("request body is not JSON: ") + e.what());
    }
}

inline void send_json(httplib::Response& res, int status, const json& body) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
}

inline bool truthy(const std::string& v) { return v == "1" || v == "true" || v == "yes"; }

}  // namespace http_detail

// Registers every route on `server`. The service must outlive it.
inline void bind_routes(httplib::Server& server, SurveyService& service, const ServerOptions& options) {
    using namespace http_detail;
    using Handler = std::function<void(const httplib::Request&, httplib::Response&)>;

    const auto guarded = [](Handler h) -> httplib::Server::Handler {
        return [h = std::move(h)](const httplib::Request& req, httplib::Response& res) {
            try {
                h(req, res);
            } catch (const ProtocolError& e) {
                send_json(res, e.status(), error_body(e));
            } catch (const Error& e) {
                send_json(res, http_status(e.code()), error_body(e));
            } catch (const std::exception& e) {
                send_json(res, 500, {{"error", "InternalError"}, {"message", e.what()}});
            }
        };
    };
    const std::string token = options.dashboard_token;
    const auto authorize = [token](const httplib::Request& req) {
        if (token.empty()) return;
        if (req.get_header_value("X-CSAS-Token") != token) {
            throw ProtocolError(ErrorCode::ValidationError, 401, "missing or wrong dashboard token");
        }
    };
    const auto researcher = [&, authorize](Handler h) {
        return guarded([h = std::move(h), authorize](const httplib::Request& req, httplib::Response& res) {
            authorize(req);
            h(req, res);
        });
    };

    const Handler sample = [&service](const httplib::Request& req, httplib::Response& res) {
        const auto p = params_of(req);
        send_json(res, 200, service.sample(p.contains("respondent") ? p.at("respondent") : ""));
    };
    server.Get("/sample", guarded(sample));
    server.Post("/sample", guarded(sample));

    const Handler input = [&service, authorize](const httplib::Request& req, httplib::Response& res) {
        const auto p = params_of(req);
        const bool dry_run = p.contains("dry_run") && truthy(p.at("dry_run"));
        if (dry_run) authorize(req);
        const auto text = p.contains("text") ? p.at("text") : "";
        const auto result = service.input(p.contains("respondent") ? p.at("respondent") : "", text, dry_run);
        send_json(res, result.parked ? 503 : 200, result.body);
    };
    server.Get("/input", guarded(input));
    server.Post("/input", guarded(input));

    const Handler update = [&service](const httplib::Request& req, httplib::Response& res) {
        const auto p = params_of(req);
        send_json(res, 200, service.update(p.contains("respondent") ? p.at("respondent") : "", p));
    };
    server.Get("/update", guarded(update));
    server.Post("/update", guarded(update));

    server.Get("/healthz", guarded([&service](const httplib::Request&, httplib::Response& res) {
        send_json(res, 200, service.healthz());
    }));

    server.Get("/config", researcher([&service](const httplib::Request&, httplib::Response& res) {
        send_json(res, 200, service.get_config());
    }));
    server.Put("/config", researcher([&service](const httplib::Request& req, httplib::Response& res) {
        send_json(res, 200, service.put_config(json_body(req)));
    }));

    server.Post("/seed", researcher([&service](const httplib::Request& req, httplib::Response& res) {
        const auto body = json_body(req);
        if (!body.contains("items") || !body["items"].is_array()) {
            throw ValidationError("seed body must be {\"items\": [\"...\", ...]}");
        }
        std::vector<std::string> texts;
        for (const auto& t : body["items"]) {
            if (!t.is_string()) throw ValidationError("seed items must be strings");
            texts.push_back(t.get<std::string>());
        }
        send_json(res, 201, service.seed(texts));
    }));

    server.Get("/bank", researcher([&service](const httplib::Request&, httplib::Response& res) {
        send_json(res, 200, service.bank_view());
    }));
    server.Get("/pending", researcher([&service](const httplib::Request&, httplib::Response& res) {
        send_json(res, 200, service.pending());
    }));
    server.Post("/moderate", researcher([&service](const httplib::Request& req, httplib::Response& res) {
        auto body = json_body(req);
        for (const auto& [k, v] : req.params) body[k] = v;
        if (!body.contains("id")) throw ValidationError("moderate needs id");
        const auto id = body["id"].is_string() ? csv::parse_int(body["id"].get<std::string>())
                                               : body["id"].get<std::int64_t>();
        send_json(res, 200, service.moderate(id, body.value("decision", ""), body.value("reason", "")));
    }));
    server.Get("/estimates", researcher([&service](const httplib::Request& req, httplib::Response& res) {
        auto out = service.estimates(params_of(req));
        if (auto* j = std::get_if<json>(&out)) {
            send_json(res, 200, *j);
        } else {
            const auto& doc = std::get<Document>(out);
            res.status = 200;
            res.set_content(doc.body, doc.content_type);
        }
    }));
    server.Get("/audit", researcher([&service](const httplib::Request&, httplib::Response& res) {
        const auto doc = service.audit_csv();
        res.set_content(doc.body, doc.content_type);
    }));
    server.Get("/events", researcher([&service](const httplib::Request&, httplib::Response& res) {
        const auto doc = service.events_csv();
        res.set_content(doc.body, doc.content_type);
    }));

    if (!options.ui_dir.empty() && std::filesystem::is_directory(options.ui_dir)) {
        server.set_mount_point("/ui", options.ui_dir);
    }
}

}  // namespace csas::gateway
