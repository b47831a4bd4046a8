// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "dormctl/model.hpp"
#include "dormctl/protocol.hpp"

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace dormctl::sim {

using wire::Json;

/// Uniform latency in [latency_min, latency_max] and independent per-frame drops.
struct LinkModel {
    TimeMs latency_min = 10;
    TimeMs latency_max = 50;
    double drop = 0.0;
};

struct ScenarioUser {
    std::string username;
    std::string pin;
    UserRole role = UserRole::student;
    /// Registered and approved before the first event.
    bool active = false;
};

struct ScenarioRoom {
    std::string room_id;
    RoomCategory category = RoomCategory::dormitory;
    std::uint32_t capacity = 4;
};

struct ScenarioTerminal {
    std::string facility_id;
    FacilityKind kind = FacilityKind::door_lock;
    std::string room_id;
};

struct ScenarioEvent {
    TimeMs at = 0;
    std::string action;
    Json args; // the whole event object
};

/// Node ids: "server", "relay", "term/<facility>", "user/<username>".
struct Scenario {
    std::string name;
    std::uint64_t seed = 1;
    TimeMs duration_ms = 30000;
    TimeMs report_interval_ms = 2000;
    int liveness_multiplier = 3;
    TimeMs relock_ms = 5000;
    TimeMs heartbeat_ms = 10000;
    std::vector<ScenarioRoom> rooms;
    std::vector<ScenarioTerminal> terminals;
    std::vector<ScenarioUser> users;
    LinkModel default_link;
    std::map<std::pair<std::string, std::string>, LinkModel> links; // key sorted (a < b)
    std::vector<ScenarioEvent> events;

    /// Link model between two node ids, order-insensitive.
    const LinkModel& link(const std::string& a, const std::string& b) const;
};

/// Throws Error(InvalidScenario).
Scenario parse_scenario(const Json& j);
Json to_json(const Scenario& s);

std::string terminal_node(std::string_view facility_id);
std::string user_node(std::string_view username);

struct TraceRecord {
    TimeMs time = 0;
    std::string node;
    std::uint64_t counter = 0;
    std::string kind;
    Json detail;
    std::string digest;
};

struct Trace {
    Json scenario; // as run, seed included
    std::vector<TraceRecord> records;
    Json final_state;
};

/// JSON lines: header, one line per record, final snapshot.
std::string serialize(const Trace& trace);
/// Throws Error(InvalidArgument) on malformed input.
Trace parse_trace(std::string_view text);

/// Executes the scenario against a virtual clock. Deterministic in
/// (scenario, seed). Throws Error(InvalidScenario).
Trace run(const Scenario& scenario);

struct InvariantResult {
    std::string name;
    bool passed = true;
    std::string detail;
    std::optional<std::size_t> first_violation; // index into Trace::records
};

struct CheckReport {
    std::vector<InvariantResult> results;

    bool all_passed() const;
    const InvariantResult* find(std::string_view name) const;
};

/// Trace-level suite: authorization_soundness, offline_autonomy,
/// convergence, audit_exactly_once, power_safety.
CheckReport check(const Trace& trace);

/// Re-runs the embedded scenario and compares serialized traces byte-for-byte.
InvariantResult check_determinism(const Trace& trace);

struct RandomScenarioOptions {
    int users = 10;
    int facilities = 5;
    double drop = 0.3;
    TimeMs fault_window_ms = 70000;
    TimeMs duration_ms = 120000;
    int partitions = 4;
    int power_cycles = 2;
    int control_requests = 30;
};

Scenario random_scenario(std::uint64_t seed, const RandomScenarioOptions& options = {});

} // namespace dormctl::sim
