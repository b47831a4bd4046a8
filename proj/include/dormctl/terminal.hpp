// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "dormctl/model.hpp"
#include "dormctl/node.hpp"
#include "dormctl/protocol.hpp"

#include <deque>
#include <optional>
#include <set>
#include <string>
#include <string_view>

namespace dormctl {

/// The part of terminal state that survives power loss.
struct PersistedTerminal {
    Whitelist whitelist;
    std::uint64_t next_seq = 1;
    std::deque<AuditRecord> outbox;

    bool operator==(const PersistedTerminal&) const = default;
};

wire::Json to_json(const PersistedTerminal& state);
PersistedTerminal persisted_terminal_from_json(const wire::Json& j);

class TerminalStore {
public:
    virtual ~TerminalStore() = default;
    virtual std::optional<PersistedTerminal> load() = 0;
    virtual void save(const PersistedTerminal& state) = 0;
};

class MemoryTerminalStore final : public TerminalStore {
public:
    std::optional<PersistedTerminal> load() override { return stored_; }
    void save(const PersistedTerminal& state) override { stored_ = state; }

private:
    std::optional<PersistedTerminal> stored_;
};

/// One JSON object per file, replaced atomically via write-then-rename.
class FileTerminalStore final : public TerminalStore {
public:
    explicit FileTerminalStore(std::string path) : path_(std::move(path)) {}
    std::optional<PersistedTerminal> load() override;
    void save(const PersistedTerminal& state) override;

private:
    std::string path_;
};

struct TerminalConfig {
    std::string facility_id;
    std::string room_id;
    FacilityKind kind = FacilityKind::door_lock;
    std::string server_target; // empty: no uplink
    std::string relay_target;  // empty: no relay registration
    TimeMs report_interval_ms = 2000;
    TimeMs relock_ms = 5000;
    TimeMs heartbeat_ms = 10000;
    TimeMs reconnect_ms = 1000;
    CommandTable commands = CommandTable::defaults();
};

/// Emulated facility terminal. Authorizes control requests against its
/// locally persisted whitelist only; the server is never consulted on the
/// request path.
class TerminalNode final : public Node {
public:
    static constexpr std::size_t kMaxEventsPerReport = 200;

    TerminalNode(TerminalConfig config, TerminalStore& store);

    void on_start(Runtime& rt) override;
    void on_connected(Runtime& rt, ConnId conn, bool inbound) override;
    void on_connect_failed(Runtime& rt, ConnId conn) override;
    void on_frame(Runtime& rt, ConnId conn, std::string_view frame) override;
    void on_closed(Runtime& rt, ConnId conn) override;
    void on_tick(Runtime& rt) override;
    std::optional<TimeMs> next_wakeup() const override;
    bool accepting() const override { return powered_; }

    wire::CtlRes handle_ctl(Runtime& rt, const wire::CtlReq& req, std::string_view path);
    /// nullopt on facility mismatch (no ack is sent).
    std::optional<wire::WlAck> handle_wl_update(Runtime& rt, const wire::WlUpdate& update);
    void handle_status_ack(Runtime& rt, const wire::StatusAck& ack);
    void actuate(Runtime& rt, std::string_view command, std::string_view username);
    /// Mechanical key: works without power, emits no event and no traffic.
    void manual_key(Runtime& rt, LockState target);
    /// Sends a STATUS_REPORT if powered and the uplink is connected.
    bool flush_status(Runtime& rt);
    void power_off(Runtime& rt);
    void power_on(Runtime& rt);

    const TerminalConfig& config() const noexcept { return config_; }
    const std::string& relay_name() const noexcept { return relay_name_; }
    bool powered() const noexcept { return powered_; }
    LockState lock_state() const noexcept { return lock_state_; }
    const Occupancy& occupancy() const noexcept { return occupancy_; }
    const PersistedTerminal& persisted() const noexcept { return persisted_; }
    bool uplink_connected() const noexcept { return uplink_.state == LinkState::connected; }
    bool relay_connected() const noexcept { return relay_.state == LinkState::connected; }

private:
    enum class LinkState { disconnected, connecting, connected };
    struct Link {
        LinkState state = LinkState::disconnected;
        ConnId conn = 0;
        std::optional<TimeMs> retry_at;
    };

    void load(Runtime& rt);
    void persist();
    void connect_links(Runtime& rt);
    void dial(Runtime& rt, Link& link, const std::string& target);
    void link_down(Runtime& rt, Link& link);
    void register_name(Runtime& rt);
    void set_lock(Runtime& rt, LockState next, std::string_view cause);
    void on_uplink_frame(Runtime& rt, const wire::Envelope& msg);
    void on_relay_frame(Runtime& rt, const wire::Envelope& msg);
    void on_local_frame(Runtime& rt, ConnId conn, std::string_view frame);
    std::string ctl_response_frame(Runtime& rt, std::string_view frame, Channels& channels, ConnId channel,
                                   std::string_view path);

    TerminalConfig config_;
    TerminalStore& store_;
    std::string relay_name_;
    Channels channels_;
    Channels session_channels_; // keyed by relay session id

    bool powered_ = true;
    LockState lock_state_ = LockState::locked;
    Occupancy occupancy_;
    PersistedTerminal persisted_;
    std::optional<TimeMs> relock_at_;
    std::optional<TimeMs> next_report_;
    std::optional<TimeMs> next_heartbeat_;
    Link uplink_;
    Link relay_;
    std::set<ConnId> local_conns_;
};

} // namespace dormctl
