// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "dormctl/node.hpp"
#include "dormctl/registry.hpp"

#include <map>
#include <optional>
#include <string>

namespace dormctl {

struct DispatchConfig {
    TimeMs retry_base_ms = 1000;
    TimeMs retry_cap_ms = 60000;
};

/// Device-port side of the registry: ingests terminal status, pushes
/// whitelists and redelivers them with exponential backoff until acked.
class ServerNode final : public Node {
public:
    explicit ServerNode(Registry& registry, DispatchConfig config = {});

    void on_connected(Runtime& rt, ConnId conn, bool inbound) override;
    void on_connect_failed(Runtime& rt, ConnId conn) override;
    void on_frame(Runtime& rt, ConnId conn, std::string_view frame) override;
    void on_closed(Runtime& rt, ConnId conn) override;
    void on_tick(Runtime& rt) override;
    std::optional<TimeMs> next_wakeup() const override;

    /// Call after an approval bumps a facility's whitelist version.
    void whitelist_changed(TimeMs now, const std::string& facility_id);

    Registry& registry() noexcept { return registry_; }
    std::optional<ConnId> terminal_conn(const std::string& facility_id) const;

private:
    struct Dispatch {
        std::optional<ConnId> conn;
        TimeMs next_retry = 0;
        TimeMs backoff = 0;
        std::optional<TimeMs> last_push;
    };

    bool needs_push(const std::string& facility_id) const;
    void push(Runtime& rt, const std::string& facility_id, Dispatch& d);

    Registry& registry_;
    DispatchConfig config_;
    Channels channels_;
    std::map<std::string, Dispatch> dispatch_;
    std::map<ConnId, std::string> conn_facility_;
};

} // namespace dormctl
