// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "dormctl/model.hpp"
#include "dormctl/protocol.hpp"

#include <cstdint>
#include <functional>
#include <fstream>
#include <istream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace dormctl {

enum class RequestStatus { pending, approved, denied };
std::string_view to_string(RequestStatus status) noexcept;

struct AuthorityRequest {
    std::string request_id;
    std::string username;
    std::string facility_id;
    PermissionLevel level = PermissionLevel::basic;
    RequestStatus status = RequestStatus::pending;

    bool operator==(const AuthorityRequest&) const = default;
};

struct TradeProposal {
    std::string trade_id;
    std::string proposer;
    std::string counterparty;
    std::string room_a; // proposer's room
    std::string room_b; // counterparty's room
    bool completed = false;

    bool operator==(const TradeProposal&) const = default;
};

/// Everything the registry persists. Reconstructible from the journal.
struct RegistryState {
    std::map<std::string, User> users;
    std::map<std::string, std::string> sessions; // token -> username
    std::map<std::string, Facility> facilities;
    std::map<std::string, Whitelist> whitelists;
    std::map<std::string, std::uint64_t> acked_versions;
    std::map<std::string, Room> rooms;
    std::map<std::string, AuthorityRequest> authority_requests;
    std::map<std::string, TradeProposal> trades;
    std::vector<AuditRecord> audit_log;
    std::set<std::pair<std::string, std::uint64_t>> dedup_index;
    std::map<std::string, std::uint64_t> audit_upto; // highest contiguous terminal_seq
    std::uint64_t next_request = 1;
    std::uint64_t next_trade = 1;
    std::uint64_t journal_seq = 0;

    bool operator==(const RegistryState&) const = default;
};

/// Append-only sink for mutation records (one LF-terminated line each).
class Journal {
public:
    virtual ~Journal() = default;
    virtual void append(std::string_view line) = 0;
};

class NullJournal final : public Journal {
public:
    void append(std::string_view) override {}
};

class MemoryJournal final : public Journal {
public:
    void append(std::string_view line) override { lines_.emplace_back(line); }
    const std::vector<std::string>& lines() const noexcept { return lines_; }
    std::string contents() const;

private:
    std::vector<std::string> lines_;
};

class FileJournal final : public Journal {
public:
    explicit FileJournal(const std::string& path);
    void append(std::string_view line) override;

private:
    std::ofstream out_;
};

struct RecoverResult {
    RegistryState state;
    std::vector<std::string> warnings;
    /// Length of the journal prefix that was applied; anything after it
    /// should be truncated before appending.
    std::size_t valid_bytes = 0;
};

/// Replays a journal. A truncated or unparsable final record is dropped
/// with a warning; any earlier bad record throws Error(CorruptJournal).
RecoverResult recover(std::istream& journal);
RecoverResult recover_file(const std::string& path);

/// Applies one journal record to `state`; shared by the live path and replay.
void apply_mutation(RegistryState& state, const wire::Json& record);

struct DeviceRow {
    std::string facility_id;
    FacilityKind kind = FacilityKind::door_lock;
    std::string room_id;
    std::string relay_name;
    bool online = false;
    Occupancy occupancy;
    LockState lock_state = LockState::locked;
    std::uint64_t whitelist_version = 0;
    TimeMs last_report = 0;

    bool operator==(const DeviceRow&) const = default;
};

struct AuthorityDecision {
    AuthorityRequest request;
    /// Set on approval: the full whitelist to push to the terminal.
    std::optional<wire::WlUpdate> dispatch;
};

struct RegistryOptions {
    TimeMs report_interval_ms = 2000;
    int liveness_multiplier = 3;
};

wire::Json to_json(const DeviceRow& row);
wire::Json to_json(const Room& room);
wire::Json to_json(const AuthorityRequest& request);
wire::Json to_json(const User& user); // never includes pin material

/// Account lifecycle, authority grants, whitelist versions, audit ingestion
/// and room allocation. Every mutation is journaled before it is applied.
/// Not thread-safe: callers funnel all calls through a single writer.
class Registry {
public:
    using Clock = std::function<TimeMs()>;
    /// Returns `nbytes` random bytes as lowercase hex.
    using RandomHex = std::function<std::string(std::size_t nbytes)>;

    Registry(Journal& journal, Clock clock, RandomHex random, RegistryOptions options = {},
             RegistryState initial = {});

    const RegistryState& state() const noexcept { return state_; }
    const RegistryOptions& options() const noexcept { return options_; }
    TimeMs liveness_window() const noexcept { return options_.report_interval_ms * options_.liveness_multiplier; }

    // Provisioning (configuration seeding; no session required).
    User seed_manager(std::string_view username, std::string_view pin);
    Room create_room(std::string_view room_id, RoomCategory category, std::uint32_t capacity);
    Facility create_facility(std::string_view facility_id, FacilityKind kind, std::string_view room_id);

    User register_user(std::string_view username, std::string_view pin);
    User decide_registration(std::string_view admin_token, std::string_view username, bool approve);
    std::string login(std::string_view username, std::string_view pin);
    void change_pin(std::string_view admin_token, std::string_view username, std::string_view pin);

    std::string apply_authority(std::string_view token, std::string_view facility_id, PermissionLevel level);
    AuthorityDecision decide_authority(std::string_view admin_token, std::string_view request_id, bool approve);

    wire::StatusAck ingest_status(const wire::StatusReport& report);
    void ack_whitelist(std::string_view facility_id, std::uint64_t version);

    std::vector<DeviceRow> list_devices(std::string_view token) const;
    std::vector<User> pending_registrations(std::string_view admin_token) const;
    std::vector<AuthorityRequest> pending_authority(std::string_view admin_token) const;
    std::vector<Room> list_rooms(std::string_view token) const;
    std::vector<AuditRecord> audit(std::string_view token, std::optional<std::string_view> facility_id) const;

    Room set_room_category(std::string_view admin_token, std::string_view room_id, RoomCategory category);
    Room claim_room(std::string_view token, std::string_view room_id);
    std::string propose_trade(std::string_view token_a, std::string_view room_a, std::string_view room_b,
                              std::string_view counterparty);
    std::pair<Room, Room> confirm_trade(std::string_view token_b, std::string_view trade_id);

    /// Username bound to the token; throws Error(AuthFailed).
    std::string session_user(std::string_view token) const;
    bool is_manager(std::string_view token) const;
    /// Throws Error(AuthFailed) or Error(NotAdmin).
    std::string require_manager(std::string_view token) const;

    std::uint64_t acked_version(std::string_view facility_id) const;

private:
    void commit(std::string_view type, wire::Json payload);

    Journal& journal_;
    Clock clock_;
    RandomHex random_;
    RegistryOptions options_;
    RegistryState state_;
    // Out-of-order events waiting for the gap below them to fill.
    std::map<std::string, std::map<std::uint64_t, AuditRecord>> pending_events_;
};

} // namespace dormctl
