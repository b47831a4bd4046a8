// SPDX-License-Identifier: Apache-2.0
#include "dormctl/terminal.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace dormctl {

using wire::Json;

namespace {

Json whitelist_summary(const Whitelist& wl)
{
    Json entries = Json::object();
    for (const auto& [name, e] : wl.entries)
        entries[name] = to_string(e.level);
    return Json{{"version", wl.version}, {"entries", std::move(entries)}};
}

} // namespace

Json to_json(const PersistedTerminal& state)
{
    Json outbox = Json::array();
    for (const auto& e : state.outbox)
        outbox.push_back(wire::to_json(e));
    return Json{{"whitelist", wire::to_json(state.whitelist)},
                {"next_seq", state.next_seq},
                {"outbox", std::move(outbox)}};
}

PersistedTerminal persisted_terminal_from_json(const Json& j)
{
    PersistedTerminal state;
    state.whitelist = wire::whitelist_from_json(j.at("whitelist"));
    state.next_seq = j.at("next_seq").get<std::uint64_t>();
    for (const auto& e : j.at("outbox"))
        state.outbox.push_back(wire::audit_from_json(e));
    return state;
}

std::optional<PersistedTerminal> FileTerminalStore::load()
{
    std::ifstream in(path_, std::ios::binary);
    if (!in)
        return std::nullopt;
    std::stringstream buffer;
    buffer << in.rdbuf();
    return persisted_terminal_from_json(Json::parse(buffer.str()));
}

void FileTerminalStore::save(const PersistedTerminal& state)
{
    const std::string tmp = path_ + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        out << to_json(state).dump() << '\n';
        out.flush();
        if (!out)
            throw Error(ErrorCode::InvalidArgument, "cannot write terminal state " + tmp);
    }
    std::filesystem::rename(tmp, path_);
}

TerminalNode::TerminalNode(TerminalConfig config, TerminalStore& store)
    : config_(std::move(config)),
      store_(store),
      relay_name_(relay_name_for(config_.room_id, config_.facility_id)),
      channels_(config_.facility_id),
      session_channels_(config_.facility_id)
{
    persisted_.whitelist.facility_id = config_.facility_id;
}

void TerminalNode::load(Runtime& rt)
{
    if (auto stored = store_.load(); stored && stored->whitelist.facility_id == config_.facility_id)
        persisted_ = std::move(*stored);
    else
        persisted_ = PersistedTerminal{Whitelist{config_.facility_id, 0, {}}, 1, {}};
    rt.trace("wl.loaded", whitelist_summary(persisted_.whitelist));
}

void TerminalNode::persist()
{
    store_.save(persisted_);
}

void TerminalNode::on_start(Runtime& rt)
{
    load(rt);
    connect_links(rt);
}

void TerminalNode::connect_links(Runtime& rt)
{
    if (!config_.server_target.empty())
        dial(rt, uplink_, config_.server_target);
    if (!config_.relay_target.empty())
        dial(rt, relay_, config_.relay_target);
}

void TerminalNode::dial(Runtime& rt, Link& link, const std::string& target)
{
    link.state = LinkState::connecting;
    link.retry_at.reset();
    link.conn = rt.connect(target);
}

void TerminalNode::link_down(Runtime& rt, Link& link)
{
    link.state = LinkState::disconnected;
    link.retry_at = rt.now() + config_.reconnect_ms;
    if (&link == &uplink_) {
        next_report_.reset();
        rt.trace("uplink", Json{{"connected", false}});
    } else {
        next_heartbeat_.reset();
    }
}

void TerminalNode::on_connected(Runtime& rt, ConnId conn, bool inbound)
{
    if (!powered_) {
        rt.close(conn);
        return;
    }
    if (inbound) {
        local_conns_.insert(conn);
        return;
    }
    if (uplink_.state == LinkState::connecting && conn == uplink_.conn) {
        uplink_.state = LinkState::connected;
        rt.trace("uplink", Json{{"connected", true}});
        flush_status(rt);
    } else if (relay_.state == LinkState::connecting && conn == relay_.conn) {
        relay_.state = LinkState::connected;
        register_name(rt);
    }
}

void TerminalNode::on_connect_failed(Runtime& rt, ConnId conn)
{
    if (!powered_)
        return;
    if (uplink_.state == LinkState::connecting && conn == uplink_.conn)
        link_down(rt, uplink_);
    else if (relay_.state == LinkState::connecting && conn == relay_.conn)
        link_down(rt, relay_);
}

void TerminalNode::on_closed(Runtime& rt, ConnId conn)
{
    channels_.forget(conn);
    if (local_conns_.erase(conn) != 0 || !powered_)
        return;
    if (uplink_.state != LinkState::disconnected && conn == uplink_.conn)
        link_down(rt, uplink_);
    else if (relay_.state != LinkState::disconnected && conn == relay_.conn)
        link_down(rt, relay_);
}

void TerminalNode::register_name(Runtime& rt)
{
    channels_.send(rt, relay_.conn, wire::NameReg{relay_name_});
    next_heartbeat_ = rt.now() + config_.heartbeat_ms;
}

void TerminalNode::on_frame(Runtime& rt, ConnId conn, std::string_view frame)
{
    if (!powered_)
        return;
    if (local_conns_.count(conn) != 0) {
        on_local_frame(rt, conn, frame);
        return;
    }
    wire::Envelope msg;
    try {
        msg = wire::decode(frame);
    } catch (const Error& e) {
        rt.trace("frame.rejected", Json{{"error", to_string(e.code())}});
        return;
    }
    if (uplink_.state == LinkState::connected && conn == uplink_.conn)
        on_uplink_frame(rt, msg);
    else if (relay_.state == LinkState::connected && conn == relay_.conn)
        on_relay_frame(rt, msg);
}

void TerminalNode::on_uplink_frame(Runtime& rt, const wire::Envelope& msg)
{
    if (const auto* update = std::get_if<wire::WlUpdate>(&msg.payload)) {
        if (auto ack = handle_wl_update(rt, *update))
            channels_.send(rt, uplink_.conn, *ack);
    } else if (const auto* ack = std::get_if<wire::StatusAck>(&msg.payload)) {
        handle_status_ack(rt, *ack);
    }
}

void TerminalNode::on_relay_frame(Runtime& rt, const wire::Envelope& msg)
{
    const auto* data = std::get_if<wire::RelayData>(&msg.payload);
    if (data == nullptr || !data->session)
        return;
    std::string reply;
    std::size_t pos = 0;
    while (pos < data->bytes.size()) {
        auto lf = data->bytes.find('\n', pos);
        const std::size_t end = lf == std::string::npos ? data->bytes.size() : lf + 1;
        reply += ctl_response_frame(rt, std::string_view(data->bytes).substr(pos, end - pos), session_channels_,
                                    *data->session, "relay");
        pos = end;
    }
    if (!reply.empty())
        channels_.send(rt, relay_.conn, wire::RelayData{std::move(reply), data->session});
}

void TerminalNode::on_local_frame(Runtime& rt, ConnId conn, std::string_view frame)
{
    std::string reply = ctl_response_frame(rt, frame, channels_, conn, "local");
    if (!reply.empty())
        rt.send(conn, std::move(reply));
}

std::string TerminalNode::ctl_response_frame(Runtime& rt, std::string_view frame, Channels& channels,
                                             ConnId channel, std::string_view path)
{
    wire::CtlRes res;
    try {
        const wire::Envelope msg = wire::decode(frame);
        const auto* req = std::get_if<wire::CtlReq>(&msg.payload);
        if (req == nullptr)
            return {};
        res = handle_ctl(rt, *req, path);
    } catch (const Error& e) {
        res = wire::CtlRes{false, std::string(to_string(e.code())), ""};
    }
    return channels.frame(channel, res);
}

wire::CtlRes TerminalNode::handle_ctl(Runtime& rt, const wire::CtlReq& req, std::string_view path)
{
    wire::CtlRes res{false, "", req.nonce};
    std::optional<WhitelistEntry> entry;
    if (!config_.commands.contains(req.command)) {
        res.reason = to_string(ErrorCode::UnknownCommand);
    } else if (entry = lookup(persisted_.whitelist, req.username); !entry) {
        res.reason = to_string(ErrorCode::NotWhitelisted);
    } else if (!allows(entry->level, req.command, config_.commands)) {
        res.reason = to_string(ErrorCode::InsufficientLevel);
    } else {
        res.success = true;
        actuate(rt, req.command, req.username);
    }

    AuditRecord record{config_.facility_id, persisted_.next_seq++, req.username, req.command,
                       res.success,         res.reason,           rt.now()};
    persisted_.outbox.push_back(record);
    persist();

    rt.trace("ctl.decision", Json{{"username", req.username},
                                  {"command", req.command},
                                  {"success", res.success},
                                  {"reason", res.reason},
                                  {"seq", record.terminal_seq},
                                  {"path", path},
                                  {"uplink", uplink_connected()},
                                  {"version", persisted_.whitelist.version}});

    if (res.success && req.command == "query_state")
        res.reason = std::string(to_string(lock_state_));
    flush_status(rt);
    return res;
}

std::optional<wire::WlAck> TerminalNode::handle_wl_update(Runtime& rt, const wire::WlUpdate& update)
{
    Whitelist incoming = wire::to_whitelist(update);
    Whitelist merged;
    try {
        merged = apply_update(persisted_.whitelist, incoming);
    } catch (const Error& e) {
        rt.trace("wl.rejected", Json{{"error", to_string(e.code())}, {"facility_id", update.facility_id}});
        return std::nullopt;
    }
    if (merged.version != persisted_.whitelist.version) {
        persisted_.whitelist = std::move(merged);
        persist();
        rt.trace("wl.applied", whitelist_summary(persisted_.whitelist));
    }
    return wire::WlAck{config_.facility_id, persisted_.whitelist.version};
}

void TerminalNode::handle_status_ack(Runtime& rt, const wire::StatusAck& ack)
{
    if (ack.facility_id != config_.facility_id)
        return;
    auto& outbox = persisted_.outbox;
    const std::size_t before = outbox.size();
    while (!outbox.empty() && outbox.front().terminal_seq <= ack.upto_seq)
        outbox.pop_front();
    if (outbox.size() != before) {
        persist();
        rt.trace("outbox.acked", Json{{"upto_seq", ack.upto_seq}, {"remaining", outbox.size()}});
    }
}

void TerminalNode::set_lock(Runtime& rt, LockState next, std::string_view cause)
{
    if (next == lock_state_)
        return;
    rt.trace("lock", Json{{"from", to_string(lock_state_)}, {"to", to_string(next)}, {"cause", cause}});
    lock_state_ = next;
}

void TerminalNode::actuate(Runtime& rt, std::string_view command, std::string_view username)
{
    if (command == "unlock") {
        set_lock(rt, LockState::unlocked, "electronic");
        occupancy_ = Occupancy{std::string(username)};
        relock_at_ = rt.now() + config_.relock_ms;
    } else if (command == "lock") {
        set_lock(rt, LockState::locked, "electronic");
        occupancy_ = {};
        relock_at_.reset();
    }
    // query_state, configure and set_whitelist_local carry no arguments
    // in CTL_REQ and cause no transition.
}

void TerminalNode::manual_key(Runtime& rt, LockState target)
{
    set_lock(rt, target, "manual");
    if (target == LockState::locked) {
        occupancy_ = {};
        relock_at_.reset();
    }
}

bool TerminalNode::flush_status(Runtime& rt)
{
    if (!powered_ || !uplink_connected())
        return false;
    wire::StatusReport report;
    report.facility_id = config_.facility_id;
    report.lock_state = lock_state_;
    report.occupancy = occupancy_;
    report.last_applied_version = persisted_.whitelist.version;
    const std::size_t n = std::min(persisted_.outbox.size(), kMaxEventsPerReport);
    report.events.assign(persisted_.outbox.begin(), persisted_.outbox.begin() + static_cast<std::ptrdiff_t>(n));
    channels_.send(rt, uplink_.conn, std::move(report));
    next_report_ = rt.now() + config_.report_interval_ms;
    return true;
}

void TerminalNode::power_off(Runtime& rt)
{
    if (!powered_)
        return;
    rt.trace("power", Json{{"on", false}});
    powered_ = false;
    for (ConnId conn : local_conns_)
        rt.close(conn);
    local_conns_.clear();
    for (Link* link : {&uplink_, &relay_}) {
        if (link->state != LinkState::disconnected)
            rt.close(link->conn);
        *link = Link{};
    }
    relock_at_.reset();
    next_report_.reset();
    next_heartbeat_.reset();
}

void TerminalNode::power_on(Runtime& rt)
{
    if (powered_)
        return;
    powered_ = true;
    rt.trace("power", Json{{"on", true}});
    load(rt);
    connect_links(rt);
}

std::optional<TimeMs> TerminalNode::next_wakeup() const
{
    if (!powered_)
        return std::nullopt;
    std::optional<TimeMs> next;
    auto consider = [&next](const std::optional<TimeMs>& t) {
        if (t && (!next || *t < *next))
            next = t;
    };
    consider(relock_at_);
    consider(next_report_);
    consider(next_heartbeat_);
    consider(uplink_.retry_at);
    consider(relay_.retry_at);
    return next;
}

void TerminalNode::on_tick(Runtime& rt)
{
    if (!powered_)
        return;
    const TimeMs now = rt.now();
    if (relock_at_ && *relock_at_ <= now) {
        relock_at_.reset();
        set_lock(rt, LockState::locked, "auto_relock");
        occupancy_ = {};
    }
    if (uplink_.retry_at && *uplink_.retry_at <= now)
        dial(rt, uplink_, config_.server_target);
    if (relay_.retry_at && *relay_.retry_at <= now)
        dial(rt, relay_, config_.relay_target);
    if (next_report_ && *next_report_ <= now)
        flush_status(rt);
    if (next_heartbeat_ && *next_heartbeat_ <= now && relay_connected())
        register_name(rt);
}

} // namespace dormctl
