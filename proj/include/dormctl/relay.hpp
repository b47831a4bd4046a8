// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "dormctl/node.hpp"

#include <map>
#include <optional>
#include <string>

namespace dormctl {

struct RelayConfig {
    TimeMs heartbeat_ms = 10000;
    int grace_intervals = 3;
};

struct NameLease {
    std::string name;
    ConnId route = 0;
    TimeMs expires_at = 0;
};

/// Rendezvous relay: terminals lease a stable name over an outbound link;
/// clients open sessions by name and RELAY_DATA bytes are forwarded
/// verbatim. Holds no whitelist and makes no authorization decisions.
class RelayNode final : public Node {
public:
    explicit RelayNode(RelayConfig config = {});

    void on_connected(Runtime& rt, ConnId conn, bool inbound) override;
    void on_connect_failed(Runtime& rt, ConnId conn) override;
    void on_frame(Runtime& rt, ConnId conn, std::string_view frame) override;
    void on_closed(Runtime& rt, ConnId conn) override;
    void on_tick(Runtime& rt) override;
    std::optional<TimeMs> next_wakeup() const override;

    /// Creates or replaces the lease. Throws Error(InvalidName).
    const NameLease& name_register(TimeMs now, const std::string& name, ConnId route);
    /// Current route iff the lease is unexpired.
    std::optional<ConnId> resolve(TimeMs now, const std::string& name) const;

    static std::string route_label(ConnId conn) { return "conn-" + std::to_string(conn); }
    std::size_t session_count() const noexcept { return sessions_.size(); }

private:
    struct Session {
        std::uint64_t id = 0;
        ConnId client = 0;
        ConnId terminal = 0;
    };

    void close_session(Runtime& rt, std::uint64_t id, bool close_client);

    RelayConfig config_;
    Channels channels_;
    std::map<std::string, NameLease> leases_;
    std::map<std::uint64_t, Session> sessions_;
    std::map<ConnId, std::uint64_t> client_session_;
    std::uint64_t next_session_ = 1;
};

} // namespace dormctl
