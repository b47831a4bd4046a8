// SPDX-License-Identifier: Apache-2.0
#include "dormctl/protocol.hpp"

#include <array>
#include <limits>
#include <utility>

namespace dormctl::wire {

namespace {

constexpr std::array<std::string_view, 17> kTypeNames{
    "REGISTER_REQ", "REGISTER_RES", "LOGIN_REQ",     "LOGIN_RES",  "AUTH_APPLY", "AUTH_DECIDE",
    "WL_UPDATE",    "WL_ACK",       "STATUS_REPORT", "STATUS_ACK", "CTL_REQ",    "CTL_RES",
    "NAME_REG",     "NAME_RES_Q",   "NAME_RES_A",    "RELAY_OPEN", "RELAY_DATA",
};

static_assert(kTypeNames.size() == std::variant_size_v<Payload>);

[[noreturn]] void violation(std::string_view key, std::string_view what)
{
    throw Error(ErrorCode::SchemaViolation, std::string(key) + ": " + std::string(what));
}

const Json& field(const Json& obj, std::string_view key)
{
    auto it = obj.find(key);
    if (it == obj.end())
        violation(key, "missing");
    return *it;
}

std::string req_string(const Json& obj, std::string_view key)
{
    const Json& v = field(obj, key);
    if (!v.is_string())
        violation(key, "expected string");
    return v.get<std::string>();
}

std::uint64_t req_u64(const Json& obj, std::string_view key)
{
    const Json& v = field(obj, key);
    if (!v.is_number_unsigned())
        violation(key, "expected non-negative integer");
    return v.get<std::uint64_t>();
}

std::int64_t req_i64(const Json& obj, std::string_view key)
{
    const Json& v = field(obj, key);
    if (v.is_number_unsigned()) {
        if (v.get<std::uint64_t>() > static_cast<std::uint64_t>(std::numeric_limits<std::int64_t>::max()))
            violation(key, "integer out of range");
        return static_cast<std::int64_t>(v.get<std::uint64_t>());
    }
    if (!v.is_number_integer())
        violation(key, "expected integer");
    return v.get<std::int64_t>();
}

bool req_bool(const Json& obj, std::string_view key)
{
    const Json& v = field(obj, key);
    if (!v.is_boolean())
        violation(key, "expected boolean");
    return v.get<bool>();
}

const Json& req_array(const Json& obj, std::string_view key)
{
    const Json& v = field(obj, key);
    if (!v.is_array())
        violation(key, "expected array");
    return v;
}

template <typename Parse>
auto parse_named(std::string_view key, const std::string& text, Parse parse)
{
    try {
        return parse(text);
    } catch (const Error&) {
        violation(key, "unknown value '" + text + "'");
    }
}

void require_object(const Json& j, std::string_view what)
{
    if (!j.is_object())
        violation(what, "expected object");
}

struct PayloadWriter {
    Json operator()(const RegisterReq& p) const { return Json{{"username", p.username}, {"pin", p.pin}}; }
    Json operator()(const RegisterRes& p) const { return Json{{"status", p.status}}; }
    Json operator()(const LoginReq& p) const { return Json{{"username", p.username}, {"pin", p.pin}}; }
    Json operator()(const LoginRes& p) const { return Json{{"token", p.token}}; }
    Json operator()(const AuthApply& p) const
    {
        return Json{{"facility_id", p.facility_id}, {"level", to_string(p.level)}};
    }
    Json operator()(const AuthDecide& p) const
    {
        return Json{{"request_id", p.request_id}, {"approve", p.approve}};
    }
    Json operator()(const WlUpdate& p) const
    {
        Json entries = Json::array();
        for (const auto& e : p.entries)
            entries.push_back(to_json(e));
        return Json{{"facility_id", p.facility_id}, {"version", p.version}, {"entries", std::move(entries)}};
    }
    Json operator()(const WlAck& p) const { return Json{{"facility_id", p.facility_id}, {"version", p.version}}; }
    Json operator()(const StatusReport& p) const
    {
        Json events = Json::array();
        for (const auto& e : p.events)
            events.push_back(to_json(e));
        return Json{{"facility_id", p.facility_id},
                    {"lock_state", to_string(p.lock_state)},
                    {"occupancy", to_json(p.occupancy)},
                    {"last_applied_version", p.last_applied_version},
                    {"events", std::move(events)}};
    }
    Json operator()(const StatusAck& p) const
    {
        return Json{{"facility_id", p.facility_id}, {"upto_seq", p.upto_seq}};
    }
    Json operator()(const CtlReq& p) const
    {
        return Json{{"username", p.username}, {"command", p.command}, {"nonce", p.nonce}};
    }
    Json operator()(const CtlRes& p) const
    {
        return Json{{"success", p.success}, {"reason", p.reason}, {"nonce", p.nonce}};
    }
    Json operator()(const NameReg& p) const { return Json{{"name", p.name}}; }
    Json operator()(const NameResQ& p) const { return Json{{"name", p.name}}; }
    Json operator()(const NameResA& p) const { return Json{{"found", p.found}, {"route", p.route}}; }
    Json operator()(const RelayOpen& p) const { return Json{{"name", p.name}}; }
    Json operator()(const RelayData& p) const
    {
        Json j{{"bytes", p.bytes}};
        if (p.session)
            j["session"] = *p.session;
        return j;
    }
};

void validate(const Payload& payload)
{
    if (const auto* ctl = std::get_if<CtlReq>(&payload)) {
        if (ctl->username.empty())
            violation("username", "must be non-empty");
        if (ctl->command.empty())
            violation("command", "must be non-empty");
    }
    if (const auto* wl = std::get_if<WlUpdate>(&payload)) {
        for (const auto& e : wl->entries) {
            if (e.level < PermissionLevel::basic)
                violation("entries", "stored level must be at least basic");
        }
    }
    if (const auto* apply = std::get_if<AuthApply>(&payload)) {
        if (apply->facility_id.empty())
            violation("facility_id", "must be non-empty");
    }
}

} // namespace

std::string_view to_string(MsgType type) noexcept
{
    return kTypeNames[static_cast<std::size_t>(type)];
}

std::optional<MsgType> parse_msg_type(std::string_view name) noexcept
{
    for (std::size_t i = 0; i < kTypeNames.size(); ++i) {
        if (kTypeNames[i] == name)
            return static_cast<MsgType>(i);
    }
    return std::nullopt;
}

MsgType type_of(const Payload& payload) noexcept
{
    return static_cast<MsgType>(payload.index());
}

Json to_json(const WhitelistEntry& entry)
{
    return Json{{"username", entry.username},
                {"level", to_string(entry.level)},
                {"granted_by", entry.granted_by},
                {"granted_at", entry.granted_at}};
}

WhitelistEntry entry_from_json(const Json& j)
{
    require_object(j, "entry");
    WhitelistEntry e;
    e.username = req_string(j, "username");
    e.level = parse_named("level", req_string(j, "level"), parse_level);
    if (e.level < PermissionLevel::basic)
        violation("level", "stored level must be at least basic");
    e.granted_by = req_string(j, "granted_by");
    e.granted_at = req_i64(j, "granted_at");
    return e;
}

Json to_json(const AuditRecord& r)
{
    return Json{{"facility_id", r.facility_id},
                {"terminal_seq", r.terminal_seq},
                {"username", r.username},
                {"request", r.request},
                {"result", r.success ? "success" : "failure"},
                {"reason", r.reason},
                {"at", r.at}};
}

AuditRecord audit_from_json(const Json& j)
{
    require_object(j, "event");
    AuditRecord r;
    r.facility_id = req_string(j, "facility_id");
    r.terminal_seq = req_u64(j, "terminal_seq");
    r.username = req_string(j, "username");
    r.request = req_string(j, "request");
    const std::string result = req_string(j, "result");
    if (result == "success")
        r.success = true;
    else if (result == "failure")
        r.success = false;
    else
        violation("result", "expected success or failure");
    r.reason = req_string(j, "reason");
    r.at = req_i64(j, "at");
    return r;
}

Json to_json(const Whitelist& wl)
{
    Json entries = Json::array();
    for (const auto& [name, e] : wl.entries)
        entries.push_back(to_json(e));
    return Json{{"facility_id", wl.facility_id}, {"version", wl.version}, {"entries", std::move(entries)}};
}

Whitelist whitelist_from_json(const Json& j)
{
    require_object(j, "whitelist");
    Whitelist wl;
    wl.facility_id = req_string(j, "facility_id");
    wl.version = req_u64(j, "version");
    for (const auto& e : req_array(j, "entries")) {
        auto entry = entry_from_json(e);
        wl.entries[entry.username] = std::move(entry);
    }
    return wl;
}

Json to_json(const Occupancy& occupancy)
{
    if (occupancy.is_free())
        return Json{{"state", "free"}};
    return Json{{"state", "occupied"}, {"username", *occupancy.user}};
}

Occupancy occupancy_from_json(const Json& j)
{
    require_object(j, "occupancy");
    const std::string state = req_string(j, "state");
    if (state == "free")
        return {};
    if (state == "occupied")
        return Occupancy{req_string(j, "username")};
    violation("occupancy.state", "expected free or occupied");
}

WlUpdate to_update(const Whitelist& wl)
{
    WlUpdate u{wl.facility_id, wl.version, {}};
    u.entries.reserve(wl.entries.size());
    for (const auto& [name, e] : wl.entries)
        u.entries.push_back(e);
    return u;
}

Whitelist to_whitelist(const WlUpdate& update)
{
    Whitelist wl{update.facility_id, update.version, {}};
    for (const auto& e : update.entries)
        wl.entries[e.username] = e;
    return wl;
}

Json payload_to_json(const Payload& payload)
{
    return std::visit(PayloadWriter{}, payload);
}

Payload payload_from_json(MsgType type, const Json& p)
{
    require_object(p, "payload");
    switch (type) {
    case MsgType::register_req: return RegisterReq{req_string(p, "username"), req_string(p, "pin")};
    case MsgType::register_res: return RegisterRes{req_string(p, "status")};
    case MsgType::login_req: return LoginReq{req_string(p, "username"), req_string(p, "pin")};
    case MsgType::login_res: return LoginRes{req_string(p, "token")};
    case MsgType::auth_apply:
        return AuthApply{req_string(p, "facility_id"), parse_named("level", req_string(p, "level"), parse_level)};
    case MsgType::auth_decide: return AuthDecide{req_string(p, "request_id"), req_bool(p, "approve")};
    case MsgType::wl_update: {
        WlUpdate u{req_string(p, "facility_id"), req_u64(p, "version"), {}};
        for (const auto& e : req_array(p, "entries"))
            u.entries.push_back(entry_from_json(e));
        return u;
    }
    case MsgType::wl_ack: return WlAck{req_string(p, "facility_id"), req_u64(p, "version")};
    case MsgType::status_report: {
        StatusReport r;
        r.facility_id = req_string(p, "facility_id");
        r.lock_state = parse_named("lock_state", req_string(p, "lock_state"), parse_lock_state);
        r.occupancy = occupancy_from_json(field(p, "occupancy"));
        r.last_applied_version = req_u64(p, "last_applied_version");
        for (const auto& e : req_array(p, "events"))
            r.events.push_back(audit_from_json(e));
        return r;
    }
    case MsgType::status_ack: return StatusAck{req_string(p, "facility_id"), req_u64(p, "upto_seq")};
    case MsgType::ctl_req: return CtlReq{req_string(p, "username"), req_string(p, "command"), req_string(p, "nonce")};
    case MsgType::ctl_res: return CtlRes{req_bool(p, "success"), req_string(p, "reason"), req_string(p, "nonce")};
    case MsgType::name_reg: return NameReg{req_string(p, "name")};
    case MsgType::name_res_q: return NameResQ{req_string(p, "name")};
    case MsgType::name_res_a: return NameResA{req_bool(p, "found"), req_string(p, "route")};
    case MsgType::relay_open: return RelayOpen{req_string(p, "name")};
    case MsgType::relay_data: {
        RelayData d{req_string(p, "bytes"), std::nullopt};
        if (p.contains("session"))
            d.session = req_u64(p, "session");
        return d;
    }
    }
    throw Error(ErrorCode::UnknownType);
}

std::string encode(const Envelope& msg)
{
    if (msg.v != kProtocolVersion)
        violation("v", "unsupported protocol version");
    validate(msg.payload);

    Json j;
    j["v"] = msg.v;
    j["type"] = to_string(msg.type());
    j["seq"] = msg.seq;
    j["sender"] = msg.sender;
    j["auth"] = msg.auth ? Json(*msg.auth) : Json(nullptr);
    j["payload"] = payload_to_json(msg.payload);

    std::string out;
    try {
        out = j.dump();
    } catch (const Json::type_error& e) {
        // invalid UTF-8 in a string field
        violation("payload", e.what());
    }
    out.push_back('\n');
    if (out.size() > kMaxFrameBytes)
        throw Error(ErrorCode::FrameTooLarge, std::to_string(out.size()) + " bytes");
    return out;
}

Envelope decode(std::string_view frame)
{
    if (frame.size() > kMaxFrameBytes)
        throw Error(ErrorCode::FrameTooLarge, std::to_string(frame.size()) + " bytes");
    if (frame.empty() || frame.back() != '\n')
        throw Error(ErrorCode::MalformedFrame, "missing LF terminator");
    const std::string_view body = frame.substr(0, frame.size() - 1);
    if (body.find('\n') != std::string_view::npos)
        throw Error(ErrorCode::MalformedFrame, "interior LF");

    Json j;
    try {
        j = Json::parse(body);
    } catch (const Json::exception& e) {
        throw Error(ErrorCode::MalformedFrame, e.what());
    }
    if (!j.is_object())
        throw Error(ErrorCode::MalformedFrame, "frame is not a JSON object");

    Envelope msg;
    const Json& v = field(j, "v");
    if (!v.is_number_integer() || v.get<std::int64_t>() != kProtocolVersion)
        violation("v", "unsupported protocol version");
    const std::string type_name = req_string(j, "type");
    const auto type = parse_msg_type(type_name);
    if (!type)
        throw Error(ErrorCode::UnknownType, type_name);
    msg.seq = req_u64(j, "seq");
    msg.sender = req_string(j, "sender");
    if (auto it = j.find("auth"); it != j.end() && !it->is_null()) {
        if (!it->is_string())
            violation("auth", "expected string or null");
        msg.auth = it->get<std::string>();
    }
    msg.payload = payload_from_json(*type, field(j, "payload"));
    return msg;
}

void LineBuffer::feed(std::string_view bytes)
{
    buffer_.append(bytes);
    const auto last_lf = buffer_.rfind('\n');
    const std::size_t tail = last_lf == std::string::npos ? buffer_.size() : buffer_.size() - last_lf - 1;
    if (tail > kMaxFrameBytes)
        overflowed_ = true;
}

std::optional<std::string> LineBuffer::next_frame()
{
    const auto pos = buffer_.find('\n', scan_from_);
    if (pos == std::string::npos) {
        scan_from_ = buffer_.size();
        if (buffer_.size() > kMaxFrameBytes)
            overflowed_ = true;
        return std::nullopt;
    }
    std::string frame = buffer_.substr(0, pos + 1);
    buffer_.erase(0, pos + 1);
    scan_from_ = 0;
    return frame;
}

} // namespace dormctl::wire
