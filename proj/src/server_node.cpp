// SPDX-License-Identifier: Apache-2.0
#include "dormctl/server_node.hpp"

namespace dormctl {

using wire::Json;

ServerNode::ServerNode(Registry& registry, DispatchConfig config)
    : registry_(registry), config_(config), channels_("server")
{
}

void ServerNode::on_connected(Runtime&, ConnId, bool) {}

void ServerNode::on_connect_failed(Runtime&, ConnId) {}

void ServerNode::on_closed(Runtime&, ConnId conn)
{
    channels_.forget(conn);
    auto it = conn_facility_.find(conn);
    if (it == conn_facility_.end())
        return;
    auto& d = dispatch_[it->second];
    if (d.conn == conn)
        d.conn.reset();
    conn_facility_.erase(it);
}

bool ServerNode::needs_push(const std::string& facility_id) const
{
    const auto& wls = registry_.state().whitelists;
    auto it = wls.find(facility_id);
    return it != wls.end() && it->second.version > registry_.acked_version(facility_id);
}

std::optional<ConnId> ServerNode::terminal_conn(const std::string& facility_id) const
{
    auto it = dispatch_.find(facility_id);
    return it == dispatch_.end() ? std::nullopt : it->second.conn;
}

void ServerNode::push(Runtime& rt, const std::string& facility_id, Dispatch& d)
{
    const auto update = wire::to_update(registry_.state().whitelists.at(facility_id));
    channels_.send(rt, *d.conn, update);
    rt.trace("wl.push", Json{{"facility_id", facility_id}, {"version", update.version}});
    d.last_push = rt.now();
    if (d.backoff == 0)
        d.backoff = config_.retry_base_ms;
    d.next_retry = rt.now() + d.backoff;
    d.backoff = std::min(d.backoff * 2, config_.retry_cap_ms);
}

void ServerNode::whitelist_changed(TimeMs now, const std::string& facility_id)
{
    auto& d = dispatch_[facility_id];
    d.backoff = config_.retry_base_ms;
    d.next_retry = now;
}

void ServerNode::on_frame(Runtime& rt, ConnId conn, std::string_view frame)
{
    wire::Envelope msg;
    try {
        msg = wire::decode(frame);
    } catch (const Error& e) {
        rt.trace("frame.rejected", Json{{"error", to_string(e.code())}});
        return;
    }

    try {
        if (const auto* report = std::get_if<wire::StatusReport>(&msg.payload)) {
            const std::size_t logged_before = registry_.state().audit_log.size();
            const wire::StatusAck ack = registry_.ingest_status(*report);
            const auto& log = registry_.state().audit_log;
            for (std::size_t i = logged_before; i < log.size(); ++i) {
                const auto& r = log[i];
                rt.trace("audit.logged", Json{{"facility_id", r.facility_id},
                                              {"seq", r.terminal_seq},
                                              {"username", r.username},
                                              {"request", r.request},
                                              {"success", r.success},
                                              {"reason", r.reason}});
            }

            auto& d = dispatch_[report->facility_id];
            const bool fresh_route = d.conn != conn;
            if (fresh_route) {
                if (d.conn)
                    conn_facility_.erase(*d.conn);
                d.conn = conn;
                conn_facility_[conn] = report->facility_id;
            }
            channels_.send(rt, conn, ack);
            // A lagging terminal gets the current whitelist right away,
            // unless a push went out on this route moments ago.
            if (needs_push(report->facility_id) &&
                (fresh_route || !d.last_push || rt.now() - *d.last_push >= config_.retry_base_ms))
                push(rt, report->facility_id, d);
        } else if (const auto* ack = std::get_if<wire::WlAck>(&msg.payload)) {
            registry_.ack_whitelist(ack->facility_id, ack->version);
            if (!needs_push(ack->facility_id))
                dispatch_[ack->facility_id].backoff = config_.retry_base_ms;
        }
    } catch (const Error& e) {
        rt.trace("frame.rejected", Json{{"error", to_string(e.code())}});
    }
}

std::optional<TimeMs> ServerNode::next_wakeup() const
{
    std::optional<TimeMs> next;
    for (const auto& [fid, d] : dispatch_) {
        if (!d.conn || !needs_push(fid))
            continue;
        if (!next || d.next_retry < *next)
            next = d.next_retry;
    }
    return next;
}

void ServerNode::on_tick(Runtime& rt)
{
    const TimeMs now = rt.now();
    for (auto& [fid, d] : dispatch_) {
        if (d.conn && needs_push(fid) && d.next_retry <= now)
            push(rt, fid, d);
    }
}

} // namespace dormctl
