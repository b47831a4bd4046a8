// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "dormctl/error.hpp"

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>

namespace dormctl {

/// Logical timestamp in milliseconds. Simulated runs start at 0; live
/// processes use milliseconds since the Unix epoch.
using TimeMs = std::int64_t;

// Gradient permission: absence from a whitelist encodes `none`.
enum class PermissionLevel : std::uint8_t { none = 0, basic = 1, extended = 2, admin = 3 };

std::string_view to_string(PermissionLevel level) noexcept;
/// Throws Error(InvalidLevel) for unknown names.
PermissionLevel parse_level(std::string_view name);

enum class UserRole { student, manager, special };
enum class UserStatus { pending, active, rejected };

std::string_view to_string(UserRole role) noexcept;
std::string_view to_string(UserStatus status) noexcept;
UserRole parse_role(std::string_view name);
UserStatus parse_status(std::string_view name);

struct User {
    std::string username;
    std::string pin_salt;
    std::string pin_hash;
    UserRole role = UserRole::student;
    UserStatus status = UserStatus::pending;

    bool operator==(const User&) const = default;
};

struct WhitelistEntry {
    std::string username;
    PermissionLevel level = PermissionLevel::basic;
    std::string granted_by;
    TimeMs granted_at = 0;

    bool operator==(const WhitelistEntry&) const = default;
};

/// Per-facility replicated unit of authority. Entries are keyed by username.
struct Whitelist {
    std::string facility_id;
    std::uint64_t version = 0;
    std::map<std::string, WhitelistEntry> entries;

    bool operator==(const Whitelist&) const = default;
};

enum class FacilityKind { door_lock, laundry, bed, appliance };
enum class LockState { locked, unlocked };
enum class RoomCategory { dormitory, study, meeting, entertainment };

std::string_view to_string(FacilityKind kind) noexcept;
std::string_view to_string(LockState state) noexcept;
std::string_view to_string(RoomCategory category) noexcept;
FacilityKind parse_facility_kind(std::string_view name);
LockState parse_lock_state(std::string_view name);
RoomCategory parse_room_category(std::string_view name);

/// `free` when `user` is empty.
struct Occupancy {
    std::optional<std::string> user;

    bool is_free() const noexcept { return !user.has_value(); }
    bool operator==(const Occupancy&) const = default;
};

struct Facility {
    std::string facility_id;
    FacilityKind kind = FacilityKind::door_lock;
    std::string room_id;
    Occupancy occupancy;
    LockState lock_state = LockState::locked;
    bool online = false;
    TimeMs last_report = 0;

    bool operator==(const Facility&) const = default;
};

struct Room {
    std::string room_id;
    RoomCategory category = RoomCategory::dormitory;
    std::uint32_t capacity = 1;
    std::set<std::string> occupants;
    std::set<std::string> facilities;

    bool operator==(const Room&) const = default;
};

struct AuditRecord {
    std::string facility_id;
    std::uint64_t terminal_seq = 0;
    std::string username;
    std::string request;
    bool success = false;
    std::string reason; // empty on success
    TimeMs at = 0;

    bool operator==(const AuditRecord&) const = default;
};

/// Command name -> minimum permission level required to invoke it.
class CommandTable {
public:
    CommandTable() = default;
    explicit CommandTable(std::map<std::string, PermissionLevel> minimums);

    /// unlock/lock/query_state -> basic, configure -> extended,
    /// set_whitelist_local -> admin.
    static const CommandTable& defaults();

    bool contains(std::string_view command) const;
    const std::map<std::string, PermissionLevel, std::less<>>& entries() const noexcept { return minimums_; }

private:
    std::map<std::string, PermissionLevel, std::less<>> minimums_;

    friend PermissionLevel min_level_for(std::string_view command, const CommandTable& table);
};

/// Throws Error(UnknownCommand) when the command is absent or empty.
PermissionLevel min_level_for(std::string_view command, const CommandTable& table);

/// True iff `level` meets the command's minimum.
bool allows(PermissionLevel level, std::string_view command, const CommandTable& table);

std::optional<WhitelistEntry> lookup(const Whitelist& wl, std::string_view username);

/// Whole-state, last-version-wins merge. Throws Error(FacilityMismatch).
Whitelist apply_update(const Whitelist& local, const Whitelist& incoming);

bool is_valid_username(std::string_view name) noexcept;
/// Lowercases, then validates. Throws Error(InvalidUsername).
std::string normalize_username(std::string_view name);
bool is_valid_pin(std::string_view pin) noexcept;
/// Relay names: 1-64 chars of [a-z0-9_.-].
bool is_valid_relay_name(std::string_view name) noexcept;
/// "dorm-{room}-{facility}", lowercased.
std::string relay_name_for(std::string_view room_id, std::string_view facility_id);

/// Hex SHA-256 of `salt ":" pin`.
std::string hash_pin(std::string_view salt, std::string_view pin);

} // namespace dormctl
