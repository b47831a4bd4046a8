// SPDX-License-Identifier: Apache-2.0
#include "dormctl/control_client.hpp"

#include <vector>

namespace dormctl {

std::string_view to_string(ControlStatus status) noexcept
{
    switch (status) {
    case ControlStatus::ok: return "ok";
    case ControlStatus::timeout: return "Timeout";
    case ControlStatus::name_not_found: return "NameNotFound";
    case ControlStatus::session_closed: return "SessionClosed";
    case ControlStatus::transport_error: return "TransportError";
    }
    return "?";
}

ControlClient::ControlClient(std::string identity, Callback on_done)
    : identity_(std::move(identity)), on_done_(std::move(on_done)), channels_(identity_)
{
}

std::uint64_t ControlClient::start(Runtime& rt, ControlRequest request)
{
    const std::uint64_t id = next_id_++;
    const TimeMs deadline = rt.now() + request.timeout_ms;
    const ConnId conn = rt.connect(request.target);
    active_[conn] = Active{id, std::move(request), Phase::connecting, deadline};
    return id;
}

void ControlClient::finish(Runtime& rt, ConnId conn, ControlOutcome outcome, bool close)
{
    auto it = active_.find(conn);
    if (it == active_.end())
        return;
    const std::uint64_t id = it->second.id;
    active_.erase(it);
    channels_.forget(conn);
    if (close)
        rt.close(conn);
    auto& stored = finished_[id] = std::move(outcome);
    if (on_done_)
        on_done_(id, stored);
}

void ControlClient::send_request(Runtime& rt, ConnId conn, Active& a)
{
    if (a.request.path == ControlPath::local) {
        channels_.send(rt, conn, a.request.request);
        a.phase = Phase::awaiting;
    } else {
        channels_.send(rt, conn, wire::RelayOpen{a.request.relay_name});
        a.phase = Phase::opening;
    }
}

void ControlClient::on_connected(Runtime& rt, ConnId conn, bool)
{
    auto it = active_.find(conn);
    if (it == active_.end()) {
        rt.close(conn);
        return;
    }
    send_request(rt, conn, it->second);
}

void ControlClient::on_connect_failed(Runtime& rt, ConnId conn)
{
    finish(rt, conn, ControlOutcome{ControlStatus::transport_error, std::nullopt, {}}, false);
}

void ControlClient::on_closed(Runtime& rt, ConnId conn)
{
    auto it = active_.find(conn);
    if (it == active_.end())
        return;
    const auto status =
        it->second.request.path == ControlPath::relay ? ControlStatus::session_closed : ControlStatus::transport_error;
    finish(rt, conn, ControlOutcome{status, std::nullopt, {}}, false);
}

bool ControlClient::accept_response(Runtime& rt, ConnId conn, std::string_view frame)
{
    const auto& a = active_.at(conn);
    try {
        const wire::Envelope msg = wire::decode(frame);
        const auto* res = std::get_if<wire::CtlRes>(&msg.payload);
        if (res == nullptr || res->nonce != a.request.request.nonce)
            return false;
        finish(rt, conn, ControlOutcome{ControlStatus::ok, *res, std::string(frame)}, true);
        return true;
    } catch (const Error&) {
        return false;
    }
}

void ControlClient::on_frame(Runtime& rt, ConnId conn, std::string_view frame)
{
    auto it = active_.find(conn);
    if (it == active_.end())
        return;
    Active& a = it->second;

    if (a.request.path == ControlPath::local) {
        accept_response(rt, conn, frame);
        return;
    }

    wire::Envelope msg;
    try {
        msg = wire::decode(frame);
    } catch (const Error&) {
        return;
    }
    if (a.phase == Phase::opening) {
        const auto* ans = std::get_if<wire::NameResA>(&msg.payload);
        if (ans == nullptr)
            return;
        if (!ans->found) {
            finish(rt, conn, ControlOutcome{ControlStatus::name_not_found, std::nullopt, {}}, true);
            return;
        }
        // The inner channel is fresh, so its first frame carries seq 1 just
        // like a new direct connection.
        Channels inner(identity_);
        channels_.send(rt, conn, wire::RelayData{inner.frame(0, a.request.request), std::nullopt});
        a.phase = Phase::awaiting;
        return;
    }
    if (const auto* data = std::get_if<wire::RelayData>(&msg.payload)) {
        std::size_t pos = 0;
        while (pos < data->bytes.size()) {
            auto lf = data->bytes.find('\n', pos);
            const std::size_t end = lf == std::string::npos ? data->bytes.size() : lf + 1;
            if (accept_response(rt, conn, std::string_view(data->bytes).substr(pos, end - pos)))
                return;
            pos = end;
        }
    }
}

std::optional<TimeMs> ControlClient::next_wakeup() const
{
    std::optional<TimeMs> next;
    for (const auto& [conn, a] : active_) {
        if (!next || a.deadline < *next)
            next = a.deadline;
    }
    return next;
}

void ControlClient::on_tick(Runtime& rt)
{
    const TimeMs now = rt.now();
    std::vector<ConnId> expired;
    for (const auto& [conn, a] : active_) {
        if (a.deadline <= now)
            expired.push_back(conn);
    }
    for (ConnId conn : expired)
        finish(rt, conn, ControlOutcome{ControlStatus::timeout, std::nullopt, {}}, true);
}

} // namespace dormctl
