// SPDX-License-Identifier: Apache-2.0
#include "dormctl/web_api.hpp"

#include <httplib.h>

#include <sstream>

namespace dormctl {

using wire::Json;

namespace {

std::vector<std::string> split_path(const std::string& path)
{
    std::vector<std::string> parts;
    std::stringstream in(path);
    std::string part;
    while (std::getline(in, part, '/')) {
        if (!part.empty())
            parts.push_back(httplib::detail::decode_url(part, false));
    }
    return parts;
}

Json parse_body(const std::string& body)
{
    if (body.empty())
        return Json::object();
    Json j = Json::parse(body, nullptr, false);
    if (j.is_discarded() || !j.is_object())
        throw Error(ErrorCode::MalformedFrame, "request body is not a JSON object");
    return j;
}

template <typename T>
T field(const Json& body, const char* key)
{
    auto it = body.find(key);
    if (it == body.end())
        throw Error(ErrorCode::SchemaViolation, std::string("missing field '") + key + "'");
    try {
        return it->get<T>();
    } catch (const Json::exception&) {
        throw Error(ErrorCode::SchemaViolation, std::string("field '") + key + "' has the wrong type");
    }
}

WebResponse error_response(const Error& e)
{
    return WebResponse{http_status(e.code()), Json{{"error", to_string(e.code())}, {"message", e.what()}}};
}

WebResponse not_found()
{
    return WebResponse{404, Json{{"error", "NotFound"}, {"message", "no such endpoint"}}};
}

template <typename T>
Json array_of(const std::vector<T>& items)
{
    Json out = Json::array();
    for (const auto& item : items)
        out.push_back(to_json(item));
    return out;
}

} // namespace

int http_status(ErrorCode code) noexcept
{
    switch (code) {
    case ErrorCode::AuthFailed:
        return 401;
    case ErrorCode::NotAdmin:
        return 403;
    case ErrorCode::UnknownUser:
    case ErrorCode::UnknownFacility:
    case ErrorCode::UnknownRequest:
    case ErrorCode::UnknownRoom:
    case ErrorCode::NameNotFound:
        return 404;
    case ErrorCode::DuplicateName:
    case ErrorCode::DuplicateFacility:
    case ErrorCode::DuplicateRoom:
    case ErrorCode::NotPending:
    case ErrorCode::CapacityExceeded:
    case ErrorCode::AlreadyOccupant:
    case ErrorCode::NotOccupant:
    case ErrorCode::NoPendingProposal:
        return 409;
    case ErrorCode::Timeout:
        return 504;
    case ErrorCode::SessionClosed:
    case ErrorCode::TransportError:
        return 502;
    case ErrorCode::CorruptJournal:
        return 500;
    default:
        return 400;
    }
}

WebApi::WebApi(Registry& registry, ServerNode& server, std::mutex& guard, std::string relay_target, Clock clock,
               Registry::RandomHex random, Gateway gateway)
    : registry_(registry),
      server_(server),
      guard_(guard),
      relay_target_(std::move(relay_target)),
      clock_(std::move(clock)),
      random_(std::move(random)),
      gateway_(std::move(gateway))
{
}

WebResponse WebApi::handle(const WebRequest& request)
{
    const auto parts = split_path(request.path);
    if (parts.size() < 2 || parts[0] != "api")
        return not_found();
    try {
        // The gateway blocks on the network, so it must not hold the guard.
        if (request.method == "POST" && parts.size() == 3 && parts[1] == "gateway" && parts[2] == "ctl")
            return gateway_ctl(request);
        std::lock_guard lock(guard_);
        return route(request, parts);
    } catch (const Error& e) {
        return error_response(e);
    }
}

WebResponse WebApi::route(const WebRequest& req, const std::vector<std::string>& p)
{
    const bool get = req.method == "GET";
    const bool post = req.method == "POST";
    const std::size_t n = p.size();
    const std::string& top = p[1];

    if (post && n == 2 && top == "register") {
        const Json body = parse_body(req.body);
        const User u = registry_.register_user(field<std::string>(body, "username"), field<std::string>(body, "pin"));
        return {200, payload_to_json(wire::RegisterRes{std::string(to_string(u.status))})};
    }
    if (post && n == 2 && top == "login") {
        const Json body = parse_body(req.body);
        const std::string token =
            registry_.login(field<std::string>(body, "username"), field<std::string>(body, "pin"));
        return {200, payload_to_json(wire::LoginRes{token})};
    }
    if (get && n == 2 && top == "session") {
        const std::string user = registry_.session_user(req.token);
        return {200, Json{{"username", user}, {"role", to_string(registry_.state().users.at(user).role)}}};
    }
    if (get && n == 2 && top == "devices")
        return {200, array_of(registry_.list_devices(req.token))};

    if (top == "authority") {
        if (get && n == 2)
            return {200, array_of(registry_.pending_authority(req.token))};
        if (post && n == 3 && p[2] == "apply") {
            const Json body = parse_body(req.body);
            const std::string id = registry_.apply_authority(req.token, field<std::string>(body, "facility_id"),
                                                             parse_level(field<std::string>(body, "level")));
            return {200, Json{{"request_id", id}}};
        }
        if (post && n == 4 && p[3] == "decide") {
            const Json body = parse_body(req.body);
            const AuthorityDecision d = registry_.decide_authority(req.token, p[2], field<bool>(body, "approve"));
            Json out = to_json(d.request);
            if (d.dispatch) {
                server_.whitelist_changed(clock_(), d.request.facility_id);
                out["version"] = d.dispatch->version;
            }
            return {200, out};
        }
    }

    if (top == "registrations") {
        if (get && n == 2)
            return {200, array_of(registry_.pending_registrations(req.token))};
        if (post && n == 4 && p[3] == "decide") {
            const Json body = parse_body(req.body);
            return {200, to_json(registry_.decide_registration(req.token, p[2], field<bool>(body, "approve")))};
        }
    }

    if (top == "rooms") {
        if (get && n == 2)
            return {200, array_of(registry_.list_rooms(req.token))};
        if (post && n == 2) {
            registry_.require_manager(req.token);
            const Json body = parse_body(req.body);
            return {200, to_json(registry_.create_room(field<std::string>(body, "room_id"),
                                                       parse_room_category(field<std::string>(body, "category")),
                                                       field<std::uint32_t>(body, "capacity")))};
        }
        if (post && n == 4 && p[3] == "claim")
            return {200, to_json(registry_.claim_room(req.token, p[2]))};
        if (post && n == 4 && p[3] == "category") {
            const Json body = parse_body(req.body);
            return {200, to_json(registry_.set_room_category(
                             req.token, p[2], parse_room_category(field<std::string>(body, "category"))))};
        }
    }

    if (post && n == 2 && top == "facilities") {
        registry_.require_manager(req.token);
        const Json body = parse_body(req.body);
        const Facility f = registry_.create_facility(field<std::string>(body, "facility_id"),
                                                     parse_facility_kind(field<std::string>(body, "kind")),
                                                     field<std::string>(body, "room_id"));
        return {200, Json{{"facility_id", f.facility_id},
                          {"kind", to_string(f.kind)},
                          {"room_id", f.room_id},
                          {"relay_name", relay_name_for(f.room_id, f.facility_id)}}};
    }

    if (post && n == 4 && top == "users" && p[3] == "pin") {
        const Json body = parse_body(req.body);
        registry_.change_pin(req.token, p[2], field<std::string>(body, "pin"));
        return {200, Json{{"username", p[2]}, {"changed", true}}};
    }

    if (top == "trades") {
        if (post && n == 2) {
            const Json body = parse_body(req.body);
            const std::string id =
                registry_.propose_trade(req.token, field<std::string>(body, "room_a"),
                                        field<std::string>(body, "room_b"), field<std::string>(body, "counterparty"));
            return {200, Json{{"trade_id", id}}};
        }
        if (post && n == 4 && p[3] == "confirm") {
            const auto [a, b] = registry_.confirm_trade(req.token, p[2]);
            return {200, Json{{"room_a", to_json(a)}, {"room_b", to_json(b)}}};
        }
    }

    if (get && n == 2 && top == "audit") {
        std::optional<std::string_view> facility;
        if (auto it = req.query.find("facility"); it != req.query.end() && !it->second.empty())
            facility = it->second;
        Json out = Json::array();
        for (const auto& r : registry_.audit(req.token, facility))
            out.push_back(wire::to_json(r));
        return {200, out};
    }
    return not_found();
}

WebResponse WebApi::gateway_ctl(const WebRequest& req)
{
    const Json body = parse_body(req.body);
    ControlRequest ctl;
    ctl.path = ControlPath::relay;
    ctl.target = relay_target_;
    ctl.relay_name = field<std::string>(body, "name");
    {
        std::lock_guard lock(guard_);
        ctl.request.username = registry_.session_user(req.token);
        ctl.request.nonce = random_(8);
    }
    ctl.request.command = field<std::string>(body, "command");
    if (ctl.request.command.empty())
        throw Error(ErrorCode::SchemaViolation, "command must not be empty");

    const ControlOutcome out = gateway_(ctl);
    switch (out.status) {
    case ControlStatus::ok:
        return {200, payload_to_json(*out.response)};
    case ControlStatus::name_not_found:
        throw Error(ErrorCode::NameNotFound, ctl.relay_name);
    case ControlStatus::session_closed:
        throw Error(ErrorCode::SessionClosed, ctl.relay_name);
    case ControlStatus::timeout:
        throw Error(ErrorCode::Timeout, ctl.relay_name);
    case ControlStatus::transport_error:
        break;
    }
    throw Error(ErrorCode::TransportError, "relay unreachable");
}

void WebApi::mount(httplib::Server& http)
{
    auto handler = [this](const httplib::Request& hreq, httplib::Response& hres) {
        WebRequest req;
        req.method = hreq.method;
        req.path = hreq.path;
        req.body = hreq.body;
        const std::string auth = hreq.get_header_value("Authorization");
        if (auth.rfind("Bearer ", 0) == 0)
            req.token = auth.substr(7);
        for (const auto& [k, v] : hreq.params)
            req.query[k] = v;
        const WebResponse res = handle(req);
        hres.status = res.status;
        hres.set_content(res.body.dump(), "application/json");
    };
    http.Get(R"(/api/.*)", handler);
    http.Post(R"(/api/.*)", handler);
}

ServerConfig parse_server_config(const Json& j)
{
    try {
        ServerConfig c;
        c.host = j.value("host", c.host);
        c.device_port = j.value("device_port", c.device_port);
        c.web_port = j.value("web_port", c.web_port);
        c.journal = j.value("journal", c.journal);
        c.relay = j.value("relay", c.relay);
        c.report_interval_ms = j.value("report_interval_ms", c.report_interval_ms);
        c.liveness_multiplier = j.value("liveness_multiplier", c.liveness_multiplier);
        if (c.report_interval_ms <= 0 || c.liveness_multiplier <= 0)
            throw Error(ErrorCode::InvalidArgument, "report interval and liveness multiplier must be positive");
        for (const auto& m : j.value("managers", Json::array()))
            c.managers.push_back(SeedAccount{m.at("username").get<std::string>(), m.at("pin").get<std::string>()});
        for (const auto& r : j.value("rooms", Json::array())) {
            Room room;
            room.room_id = r.at("room_id").get<std::string>();
            room.category = parse_room_category(r.value("category", std::string("dormitory")));
            room.capacity = r.value("capacity", std::uint32_t{4});
            c.rooms.push_back(std::move(room));
        }
        for (const auto& f : j.value("facilities", Json::array())) {
            Facility fac;
            fac.facility_id = f.at("facility_id").get<std::string>();
            fac.kind = parse_facility_kind(f.value("kind", std::string("door_lock")));
            fac.room_id = f.at("room_id").get<std::string>();
            c.facilities.push_back(std::move(fac));
        }
        return c;
    } catch (const Json::exception& e) {
        throw Error(ErrorCode::InvalidArgument, std::string("server config: ") + e.what());
    }
}

void provision(Registry& registry, const ServerConfig& config)
{
    const RegistryState& s = registry.state();
    for (const auto& m : config.managers) {
        if (s.users.count(normalize_username(m.username)) == 0)
            registry.seed_manager(m.username, m.pin);
    }
    for (const auto& r : config.rooms) {
        if (s.rooms.count(r.room_id) == 0)
            registry.create_room(r.room_id, r.category, r.capacity);
    }
    for (const auto& f : config.facilities) {
        if (s.facilities.count(f.facility_id) == 0)
            registry.create_facility(f.facility_id, f.kind, f.room_id);
    }
}

} // namespace dormctl
