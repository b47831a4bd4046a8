// SPDX-License-Identifier: Apache-2.0
#include "dormctl/model.hpp"

#include "dormctl/digest.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <utility>

namespace dormctl {

namespace {

template <typename Enum, std::size_t N>
Enum parse_enum(std::string_view name, const std::array<std::pair<std::string_view, Enum>, N>& names,
                ErrorCode err)
{
    for (const auto& [text, value] : names) {
        if (text == name)
            return value;
    }
    throw Error(err, std::string(name));
}

constexpr std::array<std::pair<std::string_view, PermissionLevel>, 4> kLevels{{
    {"none", PermissionLevel::none},
    {"basic", PermissionLevel::basic},
    {"extended", PermissionLevel::extended},
    {"admin", PermissionLevel::admin},
}};

constexpr std::array<std::pair<std::string_view, UserRole>, 3> kRoles{{
    {"student", UserRole::student},
    {"manager", UserRole::manager},
    {"special", UserRole::special},
}};

constexpr std::array<std::pair<std::string_view, UserStatus>, 3> kStatuses{{
    {"pending", UserStatus::pending},
    {"active", UserStatus::active},
    {"rejected", UserStatus::rejected},
}};

constexpr std::array<std::pair<std::string_view, FacilityKind>, 4> kKinds{{
    {"door_lock", FacilityKind::door_lock},
    {"laundry", FacilityKind::laundry},
    {"bed", FacilityKind::bed},
    {"appliance", FacilityKind::appliance},
}};

constexpr std::array<std::pair<std::string_view, LockState>, 2> kLockStates{{
    {"locked", LockState::locked},
    {"unlocked", LockState::unlocked},
}};

constexpr std::array<std::pair<std::string_view, RoomCategory>, 4> kCategories{{
    {"dormitory", RoomCategory::dormitory},
    {"study", RoomCategory::study},
    {"meeting", RoomCategory::meeting},
    {"entertainment", RoomCategory::entertainment},
}};

template <typename Enum, std::size_t N>
std::string_view name_of(Enum value, const std::array<std::pair<std::string_view, Enum>, N>& names) noexcept
{
    for (const auto& [text, v] : names) {
        if (v == value)
            return text;
    }
    return "?";
}

std::string lowercase(std::string_view s)
{
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return out;
}

} // namespace

std::string_view to_string(PermissionLevel level) noexcept { return name_of(level, kLevels); }
PermissionLevel parse_level(std::string_view name) { return parse_enum(name, kLevels, ErrorCode::InvalidLevel); }

std::string_view to_string(UserRole role) noexcept { return name_of(role, kRoles); }
std::string_view to_string(UserStatus status) noexcept { return name_of(status, kStatuses); }
UserRole parse_role(std::string_view name) { return parse_enum(name, kRoles, ErrorCode::InvalidArgument); }
UserStatus parse_status(std::string_view name) { return parse_enum(name, kStatuses, ErrorCode::InvalidArgument); }

std::string_view to_string(FacilityKind kind) noexcept { return name_of(kind, kKinds); }
std::string_view to_string(LockState state) noexcept { return name_of(state, kLockStates); }
std::string_view to_string(RoomCategory category) noexcept { return name_of(category, kCategories); }

FacilityKind parse_facility_kind(std::string_view name)
{
    return parse_enum(name, kKinds, ErrorCode::InvalidArgument);
}

LockState parse_lock_state(std::string_view name)
{
    return parse_enum(name, kLockStates, ErrorCode::InvalidArgument);
}

RoomCategory parse_room_category(std::string_view name)
{
    return parse_enum(name, kCategories, ErrorCode::InvalidArgument);
}

CommandTable::CommandTable(std::map<std::string, PermissionLevel> minimums)
{
    for (auto& [command, level] : minimums)
        minimums_.emplace(command, level);
}

const CommandTable& CommandTable::defaults()
{
    static const CommandTable table({
        {"unlock", PermissionLevel::basic},
        {"lock", PermissionLevel::basic},
        {"query_state", PermissionLevel::basic},
        {"configure", PermissionLevel::extended},
        {"set_whitelist_local", PermissionLevel::admin},
    });
    return table;
}

bool CommandTable::contains(std::string_view command) const
{
    return minimums_.find(command) != minimums_.end();
}

PermissionLevel min_level_for(std::string_view command, const CommandTable& table)
{
    if (command.empty())
        throw Error(ErrorCode::UnknownCommand, "empty command");
    auto it = table.minimums_.find(command);
    if (it == table.minimums_.end())
        throw Error(ErrorCode::UnknownCommand, std::string(command));
    return it->second;
}

bool allows(PermissionLevel level, std::string_view command, const CommandTable& table)
{
    return level >= min_level_for(command, table);
}

std::optional<WhitelistEntry> lookup(const Whitelist& wl, std::string_view username)
{
    auto it = wl.entries.find(std::string(username));
    if (it == wl.entries.end())
        return std::nullopt;
    return it->second;
}

Whitelist apply_update(const Whitelist& local, const Whitelist& incoming)
{
    if (local.facility_id != incoming.facility_id)
        throw Error(ErrorCode::FacilityMismatch, local.facility_id + " != " + incoming.facility_id);
    return incoming.version > local.version ? incoming : local;
}

bool is_valid_username(std::string_view name) noexcept
{
    if (name.empty() || name.size() > 32)
        return false;
    return std::all_of(name.begin(), name.end(), [](char c) {
        return (c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') || c == '_' || c == '-';
    });
}

std::string normalize_username(std::string_view name)
{
    std::string lowered = lowercase(name);
    if (!is_valid_username(lowered))
        throw Error(ErrorCode::InvalidUsername, std::string(name));
    return lowered;
}

bool is_valid_pin(std::string_view pin) noexcept
{
    if (pin.size() < 4 || pin.size() > 12)
        return false;
    return std::all_of(pin.begin(), pin.end(), [](char c) { return c >= '0' && c <= '9'; });
}

bool is_valid_relay_name(std::string_view name) noexcept
{
    if (name.empty() || name.size() > 64)
        return false;
    return std::all_of(name.begin(), name.end(), [](char c) {
        return (c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') || c == '_' || c == '-' || c == '.';
    });
}

std::string relay_name_for(std::string_view room_id, std::string_view facility_id)
{
    return "dorm-" + lowercase(room_id) + "-" + lowercase(facility_id);
}

std::string hash_pin(std::string_view salt, std::string_view pin)
{
    std::string material;
    material.reserve(salt.size() + 1 + pin.size());
    material.append(salt).append(":").append(pin);
    return sha256_hex(material);
}

} // namespace dormctl
