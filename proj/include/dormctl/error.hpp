// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace dormctl {

enum class ErrorCode {
    // core model
    UnknownCommand,
    FacilityMismatch,
    InvalidUsername,
    InvalidLevel,
    // wire protocol
    FrameTooLarge,
    SchemaViolation,
    MalformedFrame,
    UnknownType,
    // registry
    DuplicateName,
    InvalidPin,
    NotAdmin,
    UnknownUser,
    NotPending,
    AuthFailed,
    UnknownFacility,
    DuplicateFacility,
    UnknownRequest,
    UnknownRoom,
    DuplicateRoom,
    CapacityExceeded,
    AlreadyOccupant,
    NotOccupant,
    NoPendingProposal,
    CorruptJournal,
    // terminal
    NotWhitelisted,
    InsufficientLevel,
    // relay / client
    InvalidName,
    NameNotFound,
    SessionClosed,
    Timeout,
    TransportError,
    // simulation
    InvalidScenario,
    InvalidArgument,
};

std::string_view to_string(ErrorCode code) noexcept;

/// Domain error carrying a stable, wire-visible code name.
class Error : public std::runtime_error {
public:
    explicit Error(ErrorCode code)
        : std::runtime_error(std::string(to_string(code))), code_(code) {}

    Error(ErrorCode code, const std::string& detail)
        : std::runtime_error(std::string(to_string(code)) + ": " + detail), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

} // namespace dormctl
