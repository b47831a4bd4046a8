// SPDX-License-Identifier: Apache-2.0
#include "dormctl/relay.hpp"

#include <vector>

namespace dormctl {

using wire::Json;

RelayNode::RelayNode(RelayConfig config) : config_(config), channels_("relay") {}

void RelayNode::on_connected(Runtime&, ConnId, bool) {}

void RelayNode::on_connect_failed(Runtime&, ConnId) {}

const NameLease& RelayNode::name_register(TimeMs now, const std::string& name, ConnId route)
{
    if (!is_valid_relay_name(name))
        throw Error(ErrorCode::InvalidName, name);
    auto& lease = leases_[name];
    lease.name = name;
    lease.route = route;
    lease.expires_at = now + config_.grace_intervals * config_.heartbeat_ms;
    return lease;
}

std::optional<ConnId> RelayNode::resolve(TimeMs now, const std::string& name) const
{
    auto it = leases_.find(name);
    if (it == leases_.end() || it->second.expires_at <= now)
        return std::nullopt;
    return it->second.route;
}

void RelayNode::close_session(Runtime& rt, std::uint64_t id, bool close_client)
{
    auto it = sessions_.find(id);
    if (it == sessions_.end())
        return;
    client_session_.erase(it->second.client);
    if (close_client) {
        rt.close(it->second.client);
        channels_.forget(it->second.client);
    }
    rt.trace("relay.session_closed", Json{{"session", id}});
    sessions_.erase(it);
}

void RelayNode::on_frame(Runtime& rt, ConnId conn, std::string_view frame)
{
    wire::Envelope msg;
    try {
        msg = wire::decode(frame);
    } catch (const Error& e) {
        rt.trace("frame.rejected", Json{{"error", to_string(e.code())}});
        return;
    }
    const TimeMs now = rt.now();

    if (const auto* reg = std::get_if<wire::NameReg>(&msg.payload)) {
        try {
            const auto& lease = name_register(now, reg->name, conn);
            rt.trace("relay.registered", Json{{"name", reg->name}, {"route", route_label(conn)}});
            channels_.send(rt, conn, wire::NameResA{true, route_label(lease.route)});
        } catch (const Error&) {
            channels_.send(rt, conn, wire::NameResA{false, ""});
        }
    } else if (const auto* q = std::get_if<wire::NameResQ>(&msg.payload)) {
        const auto route = resolve(now, q->name);
        channels_.send(rt, conn, wire::NameResA{route.has_value(), route ? route_label(*route) : ""});
    } else if (const auto* open = std::get_if<wire::RelayOpen>(&msg.payload)) {
        const auto route = resolve(now, open->name);
        if (!route || client_session_.count(conn) != 0) {
            channels_.send(rt, conn, wire::NameResA{false, ""});
            return;
        }
        const std::uint64_t id = next_session_++;
        sessions_[id] = Session{id, conn, *route};
        client_session_[conn] = id;
        rt.trace("relay.session_opened", Json{{"session", id}, {"name", open->name}});
        channels_.send(rt, conn, wire::NameResA{true, route_label(*route)});
    } else if (const auto* data = std::get_if<wire::RelayData>(&msg.payload)) {
        if (auto it = client_session_.find(conn); it != client_session_.end()) {
            const Session& s = sessions_.at(it->second);
            channels_.send(rt, s.terminal, wire::RelayData{data->bytes, s.id});
        } else if (data->session) {
            auto sit = sessions_.find(*data->session);
            if (sit != sessions_.end() && sit->second.terminal == conn)
                channels_.send(rt, sit->second.client, wire::RelayData{data->bytes, std::nullopt});
        }
    }
}

void RelayNode::on_closed(Runtime& rt, ConnId conn)
{
    channels_.forget(conn);
    if (auto it = client_session_.find(conn); it != client_session_.end()) {
        close_session(rt, it->second, false);
        return;
    }
    // A dropped route invalidates its leases and every session riding it.
    for (auto it = leases_.begin(); it != leases_.end();) {
        if (it->second.route == conn)
            it = leases_.erase(it);
        else
            ++it;
    }
    std::vector<std::uint64_t> doomed;
    for (const auto& [id, s] : sessions_) {
        if (s.terminal == conn)
            doomed.push_back(id);
    }
    for (auto id : doomed)
        close_session(rt, id, true);
}

std::optional<TimeMs> RelayNode::next_wakeup() const
{
    std::optional<TimeMs> next;
    for (const auto& [name, lease] : leases_) {
        if (!next || lease.expires_at < *next)
            next = lease.expires_at;
    }
    return next;
}

void RelayNode::on_tick(Runtime& rt)
{
    const TimeMs now = rt.now();
    for (auto it = leases_.begin(); it != leases_.end();) {
        if (it->second.expires_at <= now) {
            rt.trace("relay.expired", Json{{"name", it->first}});
            it = leases_.erase(it);
        } else {
            ++it;
        }
    }
}

} // namespace dormctl
