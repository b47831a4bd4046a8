// SPDX-License-Identifier: Apache-2.0
#include "dormctl/error.hpp"

namespace dormctl {

std::string_view to_string(ErrorCode code) noexcept
{
    switch (code) {
    case ErrorCode::UnknownCommand: return "UnknownCommand";
    case ErrorCode::FacilityMismatch: return "FacilityMismatch";
    case ErrorCode::InvalidUsername: return "InvalidUsername";
    case ErrorCode::InvalidLevel: return "InvalidLevel";
    case ErrorCode::FrameTooLarge: return "FrameTooLarge";
    case ErrorCode::SchemaViolation: return "SchemaViolation";
    case ErrorCode::MalformedFrame: return "MalformedFrame";
    case ErrorCode::UnknownType: return "UnknownType";
    case ErrorCode::DuplicateName: return "DuplicateName";
    case ErrorCode::InvalidPin: return "InvalidPin";
    case ErrorCode::NotAdmin: return "NotAdmin";
    case ErrorCode::UnknownUser: return "UnknownUser";
    case ErrorCode::NotPending: return "NotPending";
    case ErrorCode::AuthFailed: return "AuthFailed";
    case ErrorCode::UnknownFacility: return "UnknownFacility";
    case ErrorCode::DuplicateFacility: return "DuplicateFacility";
    case ErrorCode::UnknownRequest: return "UnknownRequest";
    case ErrorCode::UnknownRoom: return "UnknownRoom";
    case ErrorCode::DuplicateRoom: return "DuplicateRoom";
    case ErrorCode::CapacityExceeded: return "CapacityExceeded";
    case ErrorCode::AlreadyOccupant: return "AlreadyOccupant";
    case ErrorCode::NotOccupant: return "NotOccupant";
    case ErrorCode::NoPendingProposal: return "NoPendingProposal";
    case ErrorCode::CorruptJournal: return "CorruptJournal";
    case ErrorCode::NotWhitelisted: return "NotWhitelisted";
    case ErrorCode::InsufficientLevel: return "InsufficientLevel";
    case ErrorCode::InvalidName: return "InvalidName";
    case ErrorCode::NameNotFound: return "NameNotFound";
    case ErrorCode::SessionClosed: return "SessionClosed";
    case ErrorCode::Timeout: return "Timeout";
    case ErrorCode::TransportError: return "TransportError";
    case ErrorCode::InvalidScenario: return "InvalidScenario";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    }
    return "Unknown";
}

} // namespace dormctl
