// SPDX-License-Identifier: Apache-2.0
// Command-line client: account flows over the web API, direct and relayed
// terminal control over the stream protocol.
//
// Exit codes: 0 success, 1 domain error, 2 transport error.
#include "common.hpp"

#include "dormctl/digest.hpp"
#include "dormctl/protocol.hpp"

#include <CLI11.hpp>
#include <httplib.h>

#include <fcntl.h>
#include <unistd.h>

#include <cstdlib>
#include <iomanip>

using namespace dormctl;
using wire::Json;

namespace {

constexpr int kOk = 0;
constexpr int kDomain = 1;
constexpr int kTransport = 2;

struct ClientConfig {
    std::string server = "127.0.0.1:7480";
    std::string relay = "127.0.0.1:7500";
    std::string token_cache;
    bool json = false;
};

struct Cached {
    std::string username;
    std::string token;
};

/// Domain failures carry exit code 1, transport failures 2.
struct Failure {
    int code;
    std::string message;
};

ClientConfig load_config()
{
    ClientConfig c;
    if (const char* home = std::getenv("HOME"))
        c.token_cache = std::string(home) + "/.dormctl-token";
    else
        c.token_cache = ".dormctl-token";
    if (const char* path = std::getenv("DORMCTL_CONFIG")) {
        const Json j = Json::parse(tools::slurp(path));
        c.server = j.value("server", c.server);
        c.relay = j.value("relay", c.relay);
        c.token_cache = j.value("token_cache", c.token_cache);
    }
    return c;
}

std::optional<Cached> read_token(const ClientConfig& c)
{
    std::ifstream in(c.token_cache);
    if (!in)
        return std::nullopt;
    const Json j = Json::parse(in, nullptr, false);
    if (j.is_discarded() || !j.is_object())
        return std::nullopt;
    return Cached{j.value("username", ""), j.value("token", "")};
}

void write_token(const ClientConfig& c, const Cached& cached)
{
    const int fd = ::open(c.token_cache.c_str(), O_WRONLY | O_CREAT | O_TRUNC, 0600);
    if (fd < 0)
        throw Failure{kDomain, "cannot write token cache " + c.token_cache};
    ::fchmod(fd, 0600);
    const std::string body = Json{{"username", cached.username}, {"token", cached.token}}.dump() + "\n";
    const bool ok = ::write(fd, body.data(), body.size()) == static_cast<ssize_t>(body.size());
    ::close(fd);
    if (!ok)
        throw Failure{kDomain, "cannot write token cache " + c.token_cache};
}

class Api {
public:
    explicit Api(const ClientConfig& c) : config_(c)
    {
        const auto [host, port] = tools::split_host_port(c.server);
        client_ = std::make_unique<httplib::Client>(host, port);
        client_->set_connection_timeout(5);
        client_->set_read_timeout(15);
    }

    /// Returns the raw response body; throws Failure on error responses.
    std::string call(const std::string& method, const std::string& path, const Json& body = Json::object(),
                     bool auth = true)
    {
        httplib::Headers headers;
        if (auth) {
            const auto cached = read_token(config_);
            if (!cached || cached->token.empty())
                throw Failure{kDomain, "AuthFailed: not logged in"};
            headers.emplace("Authorization", "Bearer " + cached->token);
        }
        httplib::Result res = method == "GET" ? client_->Get(path, headers)
                                              : client_->Post(path, headers, body.dump(), "application/json");
        if (!res)
            throw Failure{kTransport, "TransportError: " + httplib::to_string(res.error())};
        if (res->status >= 200 && res->status < 300)
            return res->body;
        const Json err = Json::parse(res->body, nullptr, false);
        std::string name = "HTTP " + std::to_string(res->status);
        if (err.is_object() && err.contains("error"))
            name = err.at("error").get<std::string>();
        throw Failure{res->status == 502 || res->status == 504 ? kTransport : kDomain, name};
    }

private:
    const ClientConfig& config_;
    std::unique_ptr<httplib::Client> client_;
};

std::string path_part(const std::string& s)
{
    return httplib::detail::encode_url(s);
}

void print_devices(const Json& rows)
{
    std::cout << std::left << std::setw(12) << "FACILITY" << std::setw(10) << "ROOM" << std::setw(11) << "KIND"
              << std::setw(8) << "ONLINE" << std::setw(10) << "LOCK" << std::setw(6) << "WL" << "RELAY NAME\n";
    for (const auto& r : rows) {
        std::cout << std::setw(12) << r.at("facility_id").get<std::string>() << std::setw(10)
                  << r.at("room_id").get<std::string>() << std::setw(11) << r.at("kind").get<std::string>()
                  << std::setw(8) << (r.at("online").get<bool>() ? "yes" : "no") << std::setw(10)
                  << r.at("lock_state").get<std::string>() << std::setw(6) << r.at("whitelist_version").dump()
                  << r.at("relay_name").get<std::string>() << '\n';
    }
}

void print_rooms(const Json& rows)
{
    std::cout << std::left << std::setw(10) << "ROOM" << std::setw(15) << "CATEGORY" << std::setw(10) << "OCCUPANCY"
              << "OCCUPANTS\n";
    for (const auto& r : rows) {
        std::string occupants;
        for (const auto& o : r.at("occupants"))
            occupants += (occupants.empty() ? "" : ",") + o.get<std::string>();
        std::cout << std::setw(10) << r.at("room_id").get<std::string>() << std::setw(15)
                  << r.at("category").get<std::string>() << std::setw(10)
                  << (std::to_string(r.at("occupants").size()) + "/" + r.at("capacity").dump()) << occupants << '\n';
    }
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"dormctl client"};
    app.require_subcommand(1);
    app.fallthrough();
    ClientConfig config;
    try {
        config = load_config();
    } catch (const std::exception& e) {
        std::cerr << "config: " << e.what() << '\n';
        return kDomain;
    }
    app.add_option("--server", config.server, "Server web API host:port");
    app.add_option("--relay", config.relay, "Relay host:port");
    app.add_option("--token-cache", config.token_cache, "Token cache file");
    app.add_flag("--json", config.json, "Print raw JSON responses");

    std::string username, pin, facility, level = "basic", request_id, room, trade_id, room_a, room_b, counterparty;
    bool reject = false;

    auto* reg = app.add_subcommand("register", "Request a new account");
    reg->add_option("username", username)->required();
    reg->add_option("pin", pin)->required();

    auto* login = app.add_subcommand("login", "Log in and cache the session token");
    login->add_option("username", username)->required();
    login->add_option("pin", pin)->required();

    auto* apply = app.add_subcommand("apply", "Apply for authority on a facility");
    apply->add_option("facility", facility)->required();
    apply->add_option("--level", level, "basic | extended | admin");

    auto* approve = app.add_subcommand("approve", "Decide a pending authority request or registration (manager)");
    auto* req_opt = approve->add_option("--request", request_id, "Authority request id");
    auto* user_opt = approve->add_option("--user", username, "Pending registration username");
    req_opt->excludes(user_opt);
    approve->add_flag("--reject", reject, "Reject instead of approve");

    auto* pending = app.add_subcommand("pending", "List pending registrations and authority requests (manager)");
    auto* devices = app.add_subcommand("devices", "List devices visible to the caller");
    auto* rooms = app.add_subcommand("rooms", "List rooms");
    auto* claim = app.add_subcommand("claim", "Claim a place in a room");
    claim->add_option("room", room)->required();

    auto* audit = app.add_subcommand("audit", "Show audit records");
    audit->add_option("--facility", facility, "Restrict to one facility");

    auto* trade = app.add_subcommand("trade", "Room trades");
    trade->require_subcommand(1);
    trade->fallthrough();
    auto* propose = trade->add_subcommand("propose", "Propose swapping your room with another occupant");
    propose->add_option("--room-a", room_a, "Your room")->required();
    propose->add_option("--room-b", room_b, "Their room")->required();
    propose->add_option("--with", counterparty, "Counterparty username")->required();
    auto* confirm = trade->add_subcommand("confirm", "Confirm a trade proposed to you");
    confirm->add_option("trade_id", trade_id)->required();

    std::string local, name, command = "unlock", nonce;
    TimeMs timeout_ms = 5000;
    auto* unlock = app.add_subcommand("unlock", "Send a control request to a terminal");
    auto* local_opt = unlock->add_option("--local", local, "Terminal address host:port (direct path)");
    auto* name_opt = unlock->add_option("--name", name, "Terminal relay name (relay path)");
    local_opt->excludes(name_opt);
    unlock->add_option("--user", username, "Requesting username (default: logged-in user)");
    unlock->add_option("--command", command, "Command to send (default unlock)");
    unlock->add_option("--nonce", nonce, "Request nonce (default: random)");
    unlock->add_option("--timeout-ms", timeout_ms, "Response timeout")->check(CLI::PositiveNumber);
    bool raw_frame = false;
    unlock->add_flag("--frame", raw_frame, "Print the CTL_RES frame exactly as received");

    CLI11_PARSE(app, argc, argv);

    auto emit = [&](const std::string& raw, const std::function<void(const Json&)>& human) {
        if (config.json)
            std::cout << raw << '\n';
        else
            human(Json::parse(raw));
    };

    try {
        if (*unlock) {
            if (local.empty() == name.empty())
                throw Failure{kDomain, "InvalidArgument: exactly one of --local or --name is required"};
            if (username.empty()) {
                const auto cached = read_token(config);
                if (!cached || cached->username.empty())
                    throw Failure{kDomain, "InvalidArgument: no --user and not logged in"};
                username = cached->username;
            }
            ControlRequest req;
            req.path = local.empty() ? ControlPath::relay : ControlPath::local;
            req.target = local.empty() ? config.relay : local;
            req.relay_name = name;
            req.timeout_ms = timeout_ms;
            req.request = wire::CtlReq{username, command, nonce.empty() ? random_hex(8) : nonce};
            const ControlOutcome out = run_control(req, username);
            switch (out.status) {
            case ControlStatus::ok:
                break;
            case ControlStatus::name_not_found:
                throw Failure{kDomain, "NameNotFound: " + name};
            default:
                throw Failure{kTransport, std::string(to_string(out.status))};
            }
            const wire::CtlRes& res = *out.response;
            if (raw_frame)
                std::cout << out.response_frame;
            else if (config.json)
                std::cout << payload_to_json(res).dump() << '\n';
            else if (res.success)
                std::cout << command << ": success" << (res.reason.empty() ? "" : " (" + res.reason + ")") << '\n';
            else
                std::cout << command << ": failure (" << res.reason << ")\n";
            return res.success ? kOk : kDomain;
        }

        Api api(config);
        if (*reg) {
            emit(api.call("POST", "/api/register", Json{{"username", username}, {"pin", pin}}, false),
                 [&](const Json& j) {
                     std::cout << "registered " << username << " (" << j.at("status").get<std::string>() << ")\n";
                 });
        } else if (*login) {
            const std::string raw = api.call("POST", "/api/login", Json{{"username", username}, {"pin", pin}}, false);
            const Json j = Json::parse(raw);
            write_token(config, Cached{normalize_username(username), j.at("token").get<std::string>()});
            emit(raw, [&](const Json&) { std::cout << "logged in as " << normalize_username(username) << '\n'; });
        } else if (*apply) {
            emit(api.call("POST", "/api/authority/apply", Json{{"facility_id", facility}, {"level", level}}),
                 [](const Json& j) {
                     std::cout << "request " << j.at("request_id").get<std::string>() << " submitted\n";
                 });
        } else if (*approve) {
            if (request_id.empty() == username.empty())
                throw Failure{kDomain, "InvalidArgument: exactly one of --request or --user is required"};
            const Json body{{"approve", !reject}};
            if (!request_id.empty()) {
                emit(api.call("POST", "/api/authority/" + path_part(request_id) + "/decide", body),
                     [&](const Json& j) {
                         std::cout << "request " << request_id << ' ' << j.at("status").get<std::string>();
                         if (j.contains("version"))
                             std::cout << " (" << j.at("facility_id").get<std::string>() << " whitelist v"
                                       << j.at("version").dump() << ")";
                         std::cout << '\n';
                     });
            } else {
                emit(api.call("POST", "/api/registrations/" + path_part(username) + "/decide", body),
                     [&](const Json& j) {
                         std::cout << j.at("username").get<std::string>() << ' ' << j.at("status").get<std::string>()
                                   << '\n';
                     });
            }
        } else if (*pending) {
            const std::string regs = api.call("GET", "/api/registrations");
            const std::string auths = api.call("GET", "/api/authority");
            if (config.json) {
                std::cout << Json{{"registrations", Json::parse(regs)}, {"authority", Json::parse(auths)}}.dump()
                          << '\n';
            } else {
                for (const auto& u : Json::parse(regs))
                    std::cout << "registration " << u.at("username").get<std::string>() << '\n';
                for (const auto& r : Json::parse(auths))
                    std::cout << "authority " << r.at("request_id").get<std::string>() << ' '
                              << r.at("username").get<std::string>() << ' ' << r.at("facility_id").get<std::string>()
                              << ' ' << r.at("level").get<std::string>() << '\n';
            }
        } else if (*devices) {
            emit(api.call("GET", "/api/devices"), print_devices);
        } else if (*rooms) {
            emit(api.call("GET", "/api/rooms"), print_rooms);
        } else if (*claim) {
            emit(api.call("POST", "/api/rooms/" + path_part(room) + "/claim"), [&](const Json& j) {
                std::cout << "claimed " << room << " (" << j.at("occupants").size() << "/" << j.at("capacity").dump()
                          << ")\n";
            });
        } else if (*audit) {
            const std::string path =
                facility.empty() ? "/api/audit" : "/api/audit?facility=" + path_part(facility);
            emit(api.call("GET", path), [](const Json& rows) {
                for (const auto& r : rows)
                    std::cout << r.at("facility_id").get<std::string>() << '#' << r.at("terminal_seq").dump() << ' '
                              << r.at("username").get<std::string>() << ' ' << r.at("request").get<std::string>()
                              << ' ' << r.at("result").get<std::string>()
                              << (r.at("reason").get<std::string>().empty()
                                      ? ""
                                      : " (" + r.at("reason").get<std::string>() + ")")
                              << '\n';
            });
        } else if (*propose) {
            emit(api.call("POST", "/api/trades",
                          Json{{"room_a", room_a}, {"room_b", room_b}, {"counterparty", counterparty}}),
                 [](const Json& j) { std::cout << "trade " << j.at("trade_id").get<std::string>() << " proposed\n"; });
        } else if (*confirm) {
            emit(api.call("POST", "/api/trades/" + path_part(trade_id) + "/confirm"),
                 [&](const Json&) { std::cout << "trade " << trade_id << " confirmed\n"; });
        }
        return kOk;
    } catch (const Failure& f) {
        std::cerr << f.message << '\n';
        return f.code;
    } catch (const Error& e) {
        std::cerr << to_string(e.code()) << ": " << e.what() << '\n';
        return e.code() == ErrorCode::TransportError ? kTransport : kDomain;
    } catch (const Json::exception& e) {
        std::cerr << "MalformedFrame: " << e.what() << '\n';
        return kTransport;
    }
}
