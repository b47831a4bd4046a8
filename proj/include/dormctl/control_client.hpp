// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "dormctl/node.hpp"

#include <functional>
#include <map>
#include <optional>
#include <string>

namespace dormctl {

enum class ControlPath { local, relay };

struct ControlRequest {
    ControlPath path = ControlPath::local;
    /// Terminal address for `local`, relay address for `relay`.
    std::string target;
    /// Relay name of the terminal; used only on the relay path.
    std::string relay_name;
    wire::CtlReq request;
    TimeMs timeout_ms = 5000;
};

enum class ControlStatus { ok, timeout, name_not_found, session_closed, transport_error };
std::string_view to_string(ControlStatus status) noexcept;

struct ControlOutcome {
    ControlStatus status = ControlStatus::timeout;
    std::optional<wire::CtlRes> response;
    /// The terminal's CTL_RES frame exactly as received.
    std::string response_frame;
};

/// Client side of the control path. Each request uses its own connection,
/// directly to the terminal or through a relay session, and is matched by
/// nonce.
class ControlClient final : public Node {
public:
    using Callback = std::function<void(std::uint64_t id, const ControlOutcome&)>;

    explicit ControlClient(std::string identity, Callback on_done = {});

    std::uint64_t start(Runtime& rt, ControlRequest request);
    const std::map<std::uint64_t, ControlOutcome>& finished() const noexcept { return finished_; }
    bool idle() const noexcept { return active_.empty(); }

    void on_connected(Runtime& rt, ConnId conn, bool inbound) override;
    void on_connect_failed(Runtime& rt, ConnId conn) override;
    void on_frame(Runtime& rt, ConnId conn, std::string_view frame) override;
    void on_closed(Runtime& rt, ConnId conn) override;
    void on_tick(Runtime& rt) override;
    std::optional<TimeMs> next_wakeup() const override;

private:
    enum class Phase { connecting, opening, awaiting };
    struct Active {
        std::uint64_t id = 0;
        ControlRequest request;
        Phase phase = Phase::connecting;
        TimeMs deadline = 0;
    };

    void send_request(Runtime& rt, ConnId conn, Active& a);
    void finish(Runtime& rt, ConnId conn, ControlOutcome outcome, bool close);
    bool accept_response(Runtime& rt, ConnId conn, std::string_view frame);

    std::string identity_;
    Callback on_done_;
    Channels channels_;
    std::map<ConnId, Active> active_;
    std::map<std::uint64_t, ControlOutcome> finished_;
    std::uint64_t next_id_ = 1;
};

} // namespace dormctl
