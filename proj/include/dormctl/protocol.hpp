// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "dormctl/model.hpp"

#include <json.hpp>

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace dormctl::wire {

using Json = nlohmann::ordered_json;

inline constexpr int kProtocolVersion = 1;
/// Upper bound on an encoded frame, terminating LF included.
inline constexpr std::size_t kMaxFrameBytes = 65536;

enum class MsgType {
    register_req,
    register_res,
    login_req,
    login_res,
    auth_apply,
    auth_decide,
    wl_update,
    wl_ack,
    status_report,
    status_ack,
    ctl_req,
    ctl_res,
    name_reg,
    name_res_q,
    name_res_a,
    relay_open,
    relay_data,
};

std::string_view to_string(MsgType type) noexcept;
std::optional<MsgType> parse_msg_type(std::string_view name) noexcept;

struct RegisterReq {
    std::string username;
    std::string pin;
    bool operator==(const RegisterReq&) const = default;
};

struct RegisterRes {
    std::string status;
    bool operator==(const RegisterRes&) const = default;
};

struct LoginReq {
    std::string username;
    std::string pin;
    bool operator==(const LoginReq&) const = default;
};

struct LoginRes {
    std::string token;
    bool operator==(const LoginRes&) const = default;
};

struct AuthApply {
    std::string facility_id;
    PermissionLevel level = PermissionLevel::basic;
    bool operator==(const AuthApply&) const = default;
};

struct AuthDecide {
    std::string request_id;
    bool approve = false;
    bool operator==(const AuthDecide&) const = default;
};

/// Always carries the complete entry set of the facility.
struct WlUpdate {
    std::string facility_id;
    std::uint64_t version = 0;
    std::vector<WhitelistEntry> entries;
    bool operator==(const WlUpdate&) const = default;
};

struct WlAck {
    std::string facility_id;
    std::uint64_t version = 0;
    bool operator==(const WlAck&) const = default;
};

struct StatusReport {
    std::string facility_id;
    LockState lock_state = LockState::locked;
    Occupancy occupancy;
    std::uint64_t last_applied_version = 0;
    std::vector<AuditRecord> events;
    bool operator==(const StatusReport&) const = default;
};

struct StatusAck {
    std::string facility_id;
    std::uint64_t upto_seq = 0;
    bool operator==(const StatusAck&) const = default;
};

struct CtlReq {
    std::string username;
    std::string command;
    std::string nonce;
    bool operator==(const CtlReq&) const = default;
};

struct CtlRes {
    bool success = false;
    std::string reason;
    std::string nonce;
    bool operator==(const CtlRes&) const = default;
};

struct NameReg {
    std::string name;
    bool operator==(const NameReg&) const = default;
};

struct NameResQ {
    std::string name;
    bool operator==(const NameResQ&) const = default;
};

struct NameResA {
    bool found = false;
    std::string route;
    bool operator==(const NameResA&) const = default;
};

struct RelayOpen {
    std::string name;
    bool operator==(const RelayOpen&) const = default;
};

/// `bytes` holds inner frames verbatim. `session` is present only on the
/// relay <-> terminal leg, where several client sessions share one link.
struct RelayData {
    std::string bytes;
    std::optional<std::uint64_t> session;
    bool operator==(const RelayData&) const = default;
};

// Alternative index == static_cast<size_t>(MsgType).
using Payload = std::variant<RegisterReq, RegisterRes, LoginReq, LoginRes, AuthApply, AuthDecide, WlUpdate,
                             WlAck, StatusReport, StatusAck, CtlReq, CtlRes, NameReg, NameResQ, NameResA,
                             RelayOpen, RelayData>;

MsgType type_of(const Payload& payload) noexcept;

struct Envelope {
    int v = kProtocolVersion;
    std::uint64_t seq = 0;
    std::string sender;
    std::optional<std::string> auth;
    Payload payload;

    MsgType type() const noexcept { return type_of(payload); }
    bool operator==(const Envelope&) const = default;
};

/// One compact JSON object, keys ordered v, type, seq, sender, auth,
/// payload, terminated by a single LF.
/// Throws Error(FrameTooLarge) or Error(SchemaViolation).
std::string encode(const Envelope& msg);

/// Inverse of encode. Unknown payload keys are ignored.
/// Throws Error(MalformedFrame), Error(UnknownType), Error(SchemaViolation)
/// or Error(FrameTooLarge).
Envelope decode(std::string_view frame);

/// Payload object alone; the web API bodies use this shape.
Json payload_to_json(const Payload& payload);
Payload payload_from_json(MsgType type, const Json& body);

/// Per-connection outbound sequence numbers, starting at 1.
class SeqCounter {
public:
    std::uint64_t next() noexcept { return next_++; }
    std::uint64_t peek() const noexcept { return next_; }

private:
    std::uint64_t next_ = 1;
};

/// Reassembles LF-delimited frames from an arbitrary byte stream.
class LineBuffer {
public:
    void feed(std::string_view bytes);
    /// Next complete frame including its LF, if any.
    std::optional<std::string> next_frame();
    /// Set once buffered bytes exceed kMaxFrameBytes without a LF.
    bool overflowed() const noexcept { return overflowed_; }

private:
    std::string buffer_;
    std::size_t scan_from_ = 0;
    bool overflowed_ = false;
};

// Shared JSON shapes (wire, journal and terminal state file).
Json to_json(const WhitelistEntry& entry);
Json to_json(const AuditRecord& record);
Json to_json(const Whitelist& wl);
Json to_json(const Occupancy& occupancy);
WhitelistEntry entry_from_json(const Json& j);
AuditRecord audit_from_json(const Json& j);
Whitelist whitelist_from_json(const Json& j);
Occupancy occupancy_from_json(const Json& j);

WlUpdate to_update(const Whitelist& wl);
Whitelist to_whitelist(const WlUpdate& update);

} // namespace dormctl::wire
