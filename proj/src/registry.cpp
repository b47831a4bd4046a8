// SPDX-License-Identifier: Apache-2.0
#include "dormctl/registry.hpp"

#include <sstream>

namespace dormctl {

using wire::Json;

namespace {

constexpr std::string_view kUserRegistered = "user_registered";
constexpr std::string_view kRegistrationDecided = "registration_decided";
constexpr std::string_view kSessionOpened = "session_opened";
constexpr std::string_view kPinChanged = "pin_changed";
constexpr std::string_view kRoomCreated = "room_created";
constexpr std::string_view kFacilityCreated = "facility_created";
constexpr std::string_view kAuthorityRequested = "authority_requested";
constexpr std::string_view kAuthorityDecided = "authority_decided";
constexpr std::string_view kWhitelistAcked = "whitelist_acked";
constexpr std::string_view kStatusIngested = "status_ingested";
constexpr std::string_view kRoomCategorySet = "room_category_set";
constexpr std::string_view kRoomClaimed = "room_claimed";
constexpr std::string_view kTradeProposed = "trade_proposed";
constexpr std::string_view kTradeConfirmed = "trade_confirmed";

std::string str(const Json& j, const char* key) { return j.at(key).get<std::string>(); }

template <typename Map>
auto& must_find(Map& map, const std::string& key)
{
    auto it = map.find(key);
    if (it == map.end())
        throw Error(ErrorCode::CorruptJournal, "record references unknown key " + key);
    return it->second;
}

void record_event(RegistryState& s, const AuditRecord& event)
{
    auto key = std::make_pair(event.facility_id, event.terminal_seq);
    if (!s.dedup_index.insert(key).second)
        return;
    s.audit_log.push_back(event);
    auto& upto = s.audit_upto[event.facility_id];
    while (s.dedup_index.count({event.facility_id, upto + 1}) != 0)
        ++upto;
}

} // namespace

std::string_view to_string(RequestStatus status) noexcept
{
    switch (status) {
    case RequestStatus::pending: return "pending";
    case RequestStatus::approved: return "approved";
    case RequestStatus::denied: return "denied";
    }
    return "?";
}

std::string MemoryJournal::contents() const
{
    std::string out;
    for (const auto& line : lines_)
        out += line;
    return out;
}

FileJournal::FileJournal(const std::string& path) : out_(path, std::ios::app | std::ios::binary)
{
    if (!out_)
        throw Error(ErrorCode::InvalidArgument, "cannot open journal " + path);
}

void FileJournal::append(std::string_view line)
{
    out_.write(line.data(), static_cast<std::streamsize>(line.size()));
    out_.flush();
    if (!out_)
        throw Error(ErrorCode::CorruptJournal, "journal write failed");
}

void apply_mutation(RegistryState& s, const Json& record)
{
    const std::string type = str(record, "type");
    const Json& p = record.at("payload");

    if (type == kUserRegistered) {
        User u;
        u.username = str(p, "username");
        u.pin_salt = str(p, "salt");
        u.pin_hash = str(p, "hash");
        u.role = parse_role(str(p, "role"));
        u.status = parse_status(str(p, "status"));
        s.users[u.username] = std::move(u);
    } else if (type == kRegistrationDecided) {
        auto& u = must_find(s.users, str(p, "username"));
        u.status = p.at("approve").get<bool>() ? UserStatus::active : UserStatus::rejected;
    } else if (type == kSessionOpened) {
        s.sessions[str(p, "token")] = str(p, "username");
    } else if (type == kPinChanged) {
        auto& u = must_find(s.users, str(p, "username"));
        u.pin_salt = str(p, "salt");
        u.pin_hash = str(p, "hash");
    } else if (type == kRoomCreated) {
        Room r;
        r.room_id = str(p, "room_id");
        r.category = parse_room_category(str(p, "category"));
        r.capacity = p.at("capacity").get<std::uint32_t>();
        s.rooms[r.room_id] = std::move(r);
    } else if (type == kFacilityCreated) {
        Facility f;
        f.facility_id = str(p, "facility_id");
        f.kind = parse_facility_kind(str(p, "kind"));
        f.room_id = str(p, "room_id");
        must_find(s.rooms, f.room_id).facilities.insert(f.facility_id);
        s.whitelists[f.facility_id] = Whitelist{f.facility_id, 0, {}};
        s.acked_versions[f.facility_id] = 0;
        s.facilities[f.facility_id] = std::move(f);
    } else if (type == kAuthorityRequested) {
        AuthorityRequest r;
        r.request_id = str(p, "request_id");
        r.username = str(p, "username");
        r.facility_id = str(p, "facility_id");
        r.level = parse_level(str(p, "level"));
        s.authority_requests[r.request_id] = std::move(r);
        ++s.next_request;
    } else if (type == kAuthorityDecided) {
        auto& r = must_find(s.authority_requests, str(p, "request_id"));
        if (p.at("approve").get<bool>()) {
            r.status = RequestStatus::approved;
            auto& wl = must_find(s.whitelists, r.facility_id);
            wl.entries[r.username] = WhitelistEntry{r.username, r.level, str(p, "decided_by"),
                                                    p.at("at").get<TimeMs>()};
            ++wl.version;
        } else {
            r.status = RequestStatus::denied;
        }
    } else if (type == kWhitelistAcked) {
        auto& acked = must_find(s.acked_versions, str(p, "facility_id"));
        acked = std::max(acked, p.at("version").get<std::uint64_t>());
    } else if (type == kStatusIngested) {
        const std::string fid = str(p, "facility_id");
        auto& f = must_find(s.facilities, fid);
        f.lock_state = parse_lock_state(str(p, "lock_state"));
        f.occupancy = wire::occupancy_from_json(p.at("occupancy"));
        f.online = true;
        f.last_report = p.at("at").get<TimeMs>();
        auto& acked = must_find(s.acked_versions, fid);
        acked = std::max(acked, p.at("last_applied_version").get<std::uint64_t>());
        for (const auto& e : p.at("events"))
            record_event(s, wire::audit_from_json(e));
    } else if (type == kRoomCategorySet) {
        must_find(s.rooms, str(p, "room_id")).category = parse_room_category(str(p, "category"));
    } else if (type == kRoomClaimed) {
        must_find(s.rooms, str(p, "room_id")).occupants.insert(str(p, "username"));
    } else if (type == kTradeProposed) {
        TradeProposal t;
        t.trade_id = str(p, "trade_id");
        t.proposer = str(p, "proposer");
        t.counterparty = str(p, "counterparty");
        t.room_a = str(p, "room_a");
        t.room_b = str(p, "room_b");
        s.trades[t.trade_id] = std::move(t);
        ++s.next_trade;
    } else if (type == kTradeConfirmed) {
        auto& t = must_find(s.trades, str(p, "trade_id"));
        auto& a = must_find(s.rooms, t.room_a);
        auto& b = must_find(s.rooms, t.room_b);
        a.occupants.erase(t.proposer);
        b.occupants.erase(t.counterparty);
        a.occupants.insert(t.counterparty);
        b.occupants.insert(t.proposer);
        t.completed = true;
    } else {
        throw Error(ErrorCode::CorruptJournal, "unknown record type " + type);
    }
    s.journal_seq = record.at("seq").get<std::uint64_t>();
}

RecoverResult recover(std::istream& in)
{
    std::stringstream buffer;
    buffer << in.rdbuf();
    const std::string data = buffer.str();

    RecoverResult result;
    std::size_t pos = 0;
    std::size_t line_no = 0;
    while (pos < data.size()) {
        ++line_no;
        const auto lf = data.find('\n', pos);
        const bool complete = lf != std::string::npos;
        const std::string line = data.substr(pos, complete ? lf - pos : std::string::npos);
        pos = complete ? lf + 1 : data.size();
        const bool last = pos >= data.size();

        if (!complete) {
            result.warnings.push_back("dropped truncated final record at line " + std::to_string(line_no));
            break;
        }
        try {
            const Json record = Json::parse(line);
            if (last) {
                RegistryState next = result.state;
                apply_mutation(next, record);
                result.state = std::move(next);
            } else {
                apply_mutation(result.state, record);
            }
            result.valid_bytes = pos;
        } catch (const std::exception& e) {
            if (last) {
                result.warnings.push_back("dropped unreadable final record at line " + std::to_string(line_no) +
                                          ": " + e.what());
                break;
            }
            throw Error(ErrorCode::CorruptJournal, "line " + std::to_string(line_no) + ": " + e.what());
        }
    }
    return result;
}

RecoverResult recover_file(const std::string& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        return {};
    return recover(in);
}

Json to_json(const DeviceRow& row)
{
    return Json{{"facility_id", row.facility_id},
                {"kind", to_string(row.kind)},
                {"room_id", row.room_id},
                {"relay_name", row.relay_name},
                {"online", row.online},
                {"occupancy", wire::to_json(row.occupancy)},
                {"lock_state", to_string(row.lock_state)},
                {"whitelist_version", row.whitelist_version},
                {"last_report", row.last_report}};
}

Json to_json(const Room& room)
{
    return Json{{"room_id", room.room_id},
                {"category", to_string(room.category)},
                {"capacity", room.capacity},
                {"occupants", room.occupants},
                {"facilities", room.facilities}};
}

Json to_json(const AuthorityRequest& r)
{
    return Json{{"request_id", r.request_id},
                {"username", r.username},
                {"facility_id", r.facility_id},
                {"level", to_string(r.level)},
                {"status", to_string(r.status)}};
}

Json to_json(const User& u)
{
    return Json{{"username", u.username}, {"role", to_string(u.role)}, {"status", to_string(u.status)}};
}

Registry::Registry(Journal& journal, Clock clock, RandomHex random, RegistryOptions options,
                   RegistryState initial)
    : journal_(journal),
      clock_(std::move(clock)),
      random_(std::move(random)),
      options_(options),
      state_(std::move(initial))
{
}

void Registry::commit(std::string_view type, Json payload)
{
    Json record;
    record["v"] = wire::kProtocolVersion;
    record["type"] = type;
    record["seq"] = state_.journal_seq + 1;
    record["payload"] = std::move(payload);
    std::string line = record.dump();
    line.push_back('\n');
    journal_.append(line);
    apply_mutation(state_, record);
}

User Registry::seed_manager(std::string_view username, std::string_view pin)
{
    const std::string name = normalize_username(username);
    if (!is_valid_pin(pin))
        throw Error(ErrorCode::InvalidPin);
    if (state_.users.count(name) != 0)
        throw Error(ErrorCode::DuplicateName, name);
    const std::string salt = random_(16);
    commit(kUserRegistered, Json{{"username", name},
                                 {"salt", salt},
                                 {"hash", hash_pin(salt, pin)},
                                 {"role", to_string(UserRole::manager)},
                                 {"status", to_string(UserStatus::active)}});
    return state_.users.at(name);
}

Room Registry::create_room(std::string_view room_id, RoomCategory category, std::uint32_t capacity)
{
    if (room_id.empty() || capacity == 0)
        throw Error(ErrorCode::InvalidArgument, "room needs an id and positive capacity");
    if (state_.rooms.count(std::string(room_id)) != 0)
        throw Error(ErrorCode::DuplicateRoom, std::string(room_id));
    commit(kRoomCreated, Json{{"room_id", room_id}, {"category", to_string(category)}, {"capacity", capacity}});
    return state_.rooms.at(std::string(room_id));
}

Facility Registry::create_facility(std::string_view facility_id, FacilityKind kind, std::string_view room_id)
{
    if (facility_id.empty())
        throw Error(ErrorCode::InvalidArgument, "facility needs an id");
    if (state_.facilities.count(std::string(facility_id)) != 0)
        throw Error(ErrorCode::DuplicateFacility, std::string(facility_id));
    if (state_.rooms.count(std::string(room_id)) == 0)
        throw Error(ErrorCode::UnknownRoom, std::string(room_id));
    commit(kFacilityCreated, Json{{"facility_id", facility_id}, {"kind", to_string(kind)}, {"room_id", room_id}});
    return state_.facilities.at(std::string(facility_id));
}

User Registry::register_user(std::string_view username, std::string_view pin)
{
    const std::string name = normalize_username(username);
    if (!is_valid_pin(pin))
        throw Error(ErrorCode::InvalidPin);
    if (state_.users.count(name) != 0)
        throw Error(ErrorCode::DuplicateName, name);
    const std::string salt = random_(16);
    commit(kUserRegistered, Json{{"username", name},
                                 {"salt", salt},
                                 {"hash", hash_pin(salt, pin)},
                                 {"role", to_string(UserRole::student)},
                                 {"status", to_string(UserStatus::pending)}});
    return state_.users.at(name);
}

User Registry::decide_registration(std::string_view admin_token, std::string_view username, bool approve)
{
    require_manager(admin_token);
    auto it = state_.users.find(std::string(username));
    if (it == state_.users.end())
        throw Error(ErrorCode::UnknownUser, std::string(username));
    if (it->second.status != UserStatus::pending)
        throw Error(ErrorCode::NotPending, std::string(username));
    commit(kRegistrationDecided, Json{{"username", username}, {"approve", approve}});
    return state_.users.at(std::string(username));
}

std::string Registry::login(std::string_view username, std::string_view pin)
{
    std::string name;
    try {
        name = normalize_username(username);
    } catch (const Error&) {
        throw Error(ErrorCode::AuthFailed);
    }
    auto it = state_.users.find(name);
    if (it == state_.users.end() || it->second.status != UserStatus::active ||
        hash_pin(it->second.pin_salt, pin) != it->second.pin_hash)
        throw Error(ErrorCode::AuthFailed);
    const std::string token = random_(16);
    commit(kSessionOpened, Json{{"token", token}, {"username", name}});
    return token;
}

void Registry::change_pin(std::string_view admin_token, std::string_view username, std::string_view pin)
{
    require_manager(admin_token);
    if (state_.users.count(std::string(username)) == 0)
        throw Error(ErrorCode::UnknownUser, std::string(username));
    if (!is_valid_pin(pin))
        throw Error(ErrorCode::InvalidPin);
    const std::string salt = random_(16);
    commit(kPinChanged, Json{{"username", username}, {"salt", salt}, {"hash", hash_pin(salt, pin)}});
}

std::string Registry::apply_authority(std::string_view token, std::string_view facility_id, PermissionLevel level)
{
    const std::string user = session_user(token);
    if (state_.facilities.count(std::string(facility_id)) == 0)
        throw Error(ErrorCode::UnknownFacility, std::string(facility_id));
    if (level < PermissionLevel::basic)
        throw Error(ErrorCode::InvalidLevel, "none encodes absence");
    const std::string id = "R" + std::to_string(state_.next_request);
    commit(kAuthorityRequested, Json{{"request_id", id},
                                     {"username", user},
                                     {"facility_id", facility_id},
                                     {"level", to_string(level)}});
    return id;
}

AuthorityDecision Registry::decide_authority(std::string_view admin_token, std::string_view request_id,
                                             bool approve)
{
    const std::string admin = require_manager(admin_token);
    auto it = state_.authority_requests.find(std::string(request_id));
    if (it == state_.authority_requests.end())
        throw Error(ErrorCode::UnknownRequest, std::string(request_id));
    if (it->second.status != RequestStatus::pending)
        throw Error(ErrorCode::NotPending, std::string(request_id));
    commit(kAuthorityDecided,
           Json{{"request_id", request_id}, {"approve", approve}, {"decided_by", admin}, {"at", clock_()}});

    AuthorityDecision decision{state_.authority_requests.at(std::string(request_id)), std::nullopt};
    if (approve)
        decision.dispatch = wire::to_update(state_.whitelists.at(decision.request.facility_id));
    return decision;
}

wire::StatusAck Registry::ingest_status(const wire::StatusReport& report)
{
    const auto fit = state_.facilities.find(report.facility_id);
    if (fit == state_.facilities.end())
        throw Error(ErrorCode::UnknownFacility, report.facility_id);

    const auto uit = state_.audit_upto.find(report.facility_id);
    std::uint64_t upto = uit == state_.audit_upto.end() ? 0 : uit->second;
    auto& pending = pending_events_[report.facility_id];
    for (const auto& e : report.events) {
        if (e.facility_id == report.facility_id && e.terminal_seq > upto)
            pending.emplace(e.terminal_seq, e);
    }
    Json accepted = Json::array();
    for (auto it = pending.begin(); it != pending.end() && it->first == upto + 1; it = pending.erase(it)) {
        accepted.push_back(wire::to_json(it->second));
        ++upto;
    }

    commit(kStatusIngested, Json{{"facility_id", report.facility_id},
                                 {"lock_state", to_string(report.lock_state)},
                                 {"occupancy", wire::to_json(report.occupancy)},
                                 {"last_applied_version", report.last_applied_version},
                                 {"at", clock_()},
                                 {"events", std::move(accepted)}});
    return wire::StatusAck{report.facility_id, upto};
}

void Registry::ack_whitelist(std::string_view facility_id, std::uint64_t version)
{
    auto it = state_.acked_versions.find(std::string(facility_id));
    if (it == state_.acked_versions.end())
        throw Error(ErrorCode::UnknownFacility, std::string(facility_id));
    if (version <= it->second)
        return;
    commit(kWhitelistAcked, Json{{"facility_id", facility_id}, {"version", version}});
}

std::uint64_t Registry::acked_version(std::string_view facility_id) const
{
    auto it = state_.acked_versions.find(std::string(facility_id));
    return it == state_.acked_versions.end() ? 0 : it->second;
}

std::vector<DeviceRow> Registry::list_devices(std::string_view token) const
{
    const std::string user = session_user(token);
    const bool manager = state_.users.at(user).role == UserRole::manager;
    const TimeMs now = clock_();

    std::vector<DeviceRow> rows;
    for (const auto& [id, f] : state_.facilities) {
        const Whitelist& wl = state_.whitelists.at(id);
        if (!manager && wl.entries.count(user) == 0)
            continue;
        DeviceRow row;
        row.facility_id = id;
        row.kind = f.kind;
        row.room_id = f.room_id;
        row.relay_name = relay_name_for(f.room_id, id);
        row.online = f.online && now - f.last_report <= liveness_window();
        row.occupancy = f.occupancy;
        row.lock_state = f.lock_state;
        row.whitelist_version = wl.version;
        row.last_report = f.last_report;
        rows.push_back(std::move(row));
    }
    return rows;
}

std::vector<User> Registry::pending_registrations(std::string_view admin_token) const
{
    require_manager(admin_token);
    std::vector<User> out;
    for (const auto& [name, u] : state_.users) {
        if (u.status == UserStatus::pending)
            out.push_back(u);
    }
    return out;
}

std::vector<AuthorityRequest> Registry::pending_authority(std::string_view admin_token) const
{
    require_manager(admin_token);
    std::vector<AuthorityRequest> out;
    for (const auto& [id, r] : state_.authority_requests) {
        if (r.status == RequestStatus::pending)
            out.push_back(r);
    }
    return out;
}

std::vector<Room> Registry::list_rooms(std::string_view token) const
{
    session_user(token);
    std::vector<Room> out;
    for (const auto& [id, r] : state_.rooms)
        out.push_back(r);
    return out;
}

std::vector<AuditRecord> Registry::audit(std::string_view token, std::optional<std::string_view> facility_id) const
{
    const std::string user = session_user(token);
    const bool manager = state_.users.at(user).role == UserRole::manager;
    std::vector<AuditRecord> out;
    for (const auto& r : state_.audit_log) {
        if (facility_id && r.facility_id != *facility_id)
            continue;
        if (!manager && r.username != user)
            continue;
        out.push_back(r);
    }
    return out;
}

Room Registry::set_room_category(std::string_view admin_token, std::string_view room_id, RoomCategory category)
{
    require_manager(admin_token);
    if (state_.rooms.count(std::string(room_id)) == 0)
        throw Error(ErrorCode::UnknownRoom, std::string(room_id));
    commit(kRoomCategorySet, Json{{"room_id", room_id}, {"category", to_string(category)}});
    return state_.rooms.at(std::string(room_id));
}

Room Registry::claim_room(std::string_view token, std::string_view room_id)
{
    const std::string user = session_user(token);
    auto it = state_.rooms.find(std::string(room_id));
    if (it == state_.rooms.end())
        throw Error(ErrorCode::UnknownRoom, std::string(room_id));
    if (it->second.occupants.count(user) != 0)
        throw Error(ErrorCode::AlreadyOccupant, user);
    if (it->second.occupants.size() >= it->second.capacity)
        throw Error(ErrorCode::CapacityExceeded, std::string(room_id));
    commit(kRoomClaimed, Json{{"room_id", room_id}, {"username", user}});
    return state_.rooms.at(std::string(room_id));
}

std::string Registry::propose_trade(std::string_view token_a, std::string_view room_a, std::string_view room_b,
                                    std::string_view counterparty)
{
    const std::string proposer = session_user(token_a);
    const auto a = state_.rooms.find(std::string(room_a));
    const auto b = state_.rooms.find(std::string(room_b));
    if (a == state_.rooms.end())
        throw Error(ErrorCode::UnknownRoom, std::string(room_a));
    if (b == state_.rooms.end())
        throw Error(ErrorCode::UnknownRoom, std::string(room_b));
    if (a->second.occupants.count(proposer) == 0)
        throw Error(ErrorCode::NotOccupant, proposer + " in " + std::string(room_a));
    if (b->second.occupants.count(std::string(counterparty)) == 0)
        throw Error(ErrorCode::NotOccupant, std::string(counterparty) + " in " + std::string(room_b));
    const std::string id = "T" + std::to_string(state_.next_trade);
    commit(kTradeProposed, Json{{"trade_id", id},
                                {"proposer", proposer},
                                {"counterparty", counterparty},
                                {"room_a", room_a},
                                {"room_b", room_b}});
    return id;
}

std::pair<Room, Room> Registry::confirm_trade(std::string_view token_b, std::string_view trade_id)
{
    const std::string user = session_user(token_b);
    auto it = state_.trades.find(std::string(trade_id));
    if (it == state_.trades.end() || it->second.completed || it->second.counterparty != user)
        throw Error(ErrorCode::NoPendingProposal, std::string(trade_id));
    const TradeProposal& t = it->second;
    const Room& a = state_.rooms.at(t.room_a);
    const Room& b = state_.rooms.at(t.room_b);
    if (a.occupants.count(t.proposer) == 0)
        throw Error(ErrorCode::NotOccupant, t.proposer + " in " + t.room_a);
    if (b.occupants.count(t.counterparty) == 0)
        throw Error(ErrorCode::NotOccupant, t.counterparty + " in " + t.room_b);
    if (a.occupants.count(t.counterparty) != 0 || b.occupants.count(t.proposer) != 0)
        throw Error(ErrorCode::AlreadyOccupant, "trade parties already share a room");
    commit(kTradeConfirmed, Json{{"trade_id", trade_id}});
    return {state_.rooms.at(t.room_a), state_.rooms.at(t.room_b)};
}

std::string Registry::session_user(std::string_view token) const
{
    auto it = state_.sessions.find(std::string(token));
    if (it == state_.sessions.end())
        throw Error(ErrorCode::AuthFailed);
    return it->second;
}

bool Registry::is_manager(std::string_view token) const
{
    auto it = state_.sessions.find(std::string(token));
    if (it == state_.sessions.end())
        return false;
    return state_.users.at(it->second).role == UserRole::manager;
}

std::string Registry::require_manager(std::string_view token) const
{
    const std::string user = session_user(token);
    if (state_.users.at(user).role != UserRole::manager)
        throw Error(ErrorCode::NotAdmin);
    return user;
}

} // namespace dormctl
