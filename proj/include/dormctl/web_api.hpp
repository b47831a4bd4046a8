// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "dormctl/control_client.hpp"
#include "dormctl/registry.hpp"
#include "dormctl/server_node.hpp"

#include <functional>
#include <map>
#include <mutex>
#include <string>
#include <vector>

namespace httplib {
class Server;
}

namespace dormctl {

struct WebRequest {
    std::string method;
    std::string path;
    std::string body;
    std::string token; // from "Authorization: Bearer <token>"
    std::map<std::string, std::string> query;
};

struct WebResponse {
    int status = 200;
    wire::Json body;
};

/// HTTP status used for a domain error.
int http_status(ErrorCode code) noexcept;

/// JSON request/response API over the registry. Routing and handlers are
/// independent of the HTTP library so they can be tested in-process.
class WebApi {
public:
    using Clock = std::function<TimeMs()>;
    using Gateway = std::function<ControlOutcome(const ControlRequest&)>;

    /// `guard` serializes registry access with the device event loop.
    WebApi(Registry& registry, ServerNode& server, std::mutex& guard, std::string relay_target, Clock clock,
           Registry::RandomHex random, Gateway gateway);

    WebResponse handle(const WebRequest& request);
    /// Routes every /api/ request on `http` to handle().
    void mount(httplib::Server& http);

private:
    WebResponse route(const WebRequest& request, const std::vector<std::string>& parts);
    WebResponse gateway_ctl(const WebRequest& request);

    Registry& registry_;
    ServerNode& server_;
    std::mutex& guard_;
    std::string relay_target_;
    Clock clock_;
    Registry::RandomHex random_;
    Gateway gateway_;
};

struct SeedAccount {
    std::string username;
    std::string pin;
};

struct ServerConfig {
    std::string host = "127.0.0.1";
    std::uint16_t device_port = 7400;
    std::uint16_t web_port = 7480;
    std::string journal = "dormctl-journal.jsonl";
    std::string relay = "127.0.0.1:7500";
    TimeMs report_interval_ms = 2000;
    int liveness_multiplier = 3;
    std::vector<SeedAccount> managers;
    std::vector<Room> rooms;
    std::vector<Facility> facilities;
};

/// Throws Error(InvalidArgument).
ServerConfig parse_server_config(const wire::Json& j);

/// Applies config-declared managers, rooms and facilities that the
/// recovered state does not yet contain.
void provision(Registry& registry, const ServerConfig& config);

} // namespace dormctl
