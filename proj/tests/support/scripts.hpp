// SPDX-License-Identifier: Apache-2.0
// Randomized registry mutation scripts for replay checks.
#pragma once

#include "dormctl/registry.hpp"

#include <random>
#include <sstream>
#include <string>
#include <vector>

namespace dormctl::fixtures {

/// Counter-backed stand-in for the CSPRNG so runs are reproducible.
inline Registry::RandomHex counter_hex()
{
    auto n = std::make_shared<std::uint64_t>(0);
    return [n](std::size_t nbytes) {
        std::ostringstream out;
        out << std::hex << ++*n;
        std::string s = out.str();
        if (s.size() < nbytes * 2)
            s.insert(0, nbytes * 2 - s.size(), '0');
        return s;
    };
}

struct ScriptRun {
    RegistryState final_state;
    /// State after each journaled record; states[k] reflects lines[0..k].
    std::vector<RegistryState> states;
    std::vector<std::string> lines;
    std::size_t attempted = 0;
    std::size_t rejected = 0;
};

/// Drives `steps` random operations (valid and invalid) against a fresh
/// registry. Rejected operations must leave no journal trace.
inline ScriptRun run_script(std::uint64_t seed, int steps)
{
    std::mt19937_64 rng(seed);
    auto below = [&](std::uint64_t n) { return rng() % n; };
    TimeMs now = 0;

    MemoryJournal journal;
    Registry reg(journal, [&now] { return now; }, counter_hex());
    ScriptRun run;
    auto snapshot = [&] {
        while (run.states.size() < journal.lines().size())
            run.states.push_back(reg.state());
    };

    reg.seed_manager("admin", "0000");
    snapshot();
    const std::string admin = reg.login("admin", "0000");
    snapshot();

    std::vector<std::string> names, tokens, rooms, facilities, requests, trades;
    for (int i = 0; i < steps; ++i) {
        now += static_cast<TimeMs>(below(500));
        ++run.attempted;
        const auto pick = [&](const std::vector<std::string>& v, const char* fallback) {
            return v.empty() || below(10) == 0 ? std::string(fallback) : v[below(v.size())];
        };
        try {
            switch (below(13)) {
            case 0: {
                const std::string name = "u" + std::to_string(below(40));
                reg.register_user(name, below(8) == 0 ? "12" : "1234");
                names.push_back(name);
                break;
            }
            case 1: reg.decide_registration(below(6) == 0 ? "bogus" : admin, pick(names, "ghost"), below(5) != 0); break;
            case 2: tokens.push_back(reg.login(pick(names, "ghost"), below(6) == 0 ? "9999" : "1234")); break;
            case 3: {
                const std::string id = "r" + std::to_string(below(6));
                reg.create_room(id, static_cast<RoomCategory>(below(4)), static_cast<std::uint32_t>(below(3)));
                rooms.push_back(id);
                break;
            }
            case 4: {
                const std::string id = "F" + std::to_string(below(8));
                reg.create_facility(id, static_cast<FacilityKind>(below(4)), pick(rooms, "nowhere"));
                facilities.push_back(id);
                break;
            }
            case 5:
                requests.push_back(reg.apply_authority(pick(tokens, "bogus"), pick(facilities, "F?"),
                                                       static_cast<PermissionLevel>(below(4))));
                break;
            case 6: reg.decide_authority(below(6) == 0 ? "bogus" : admin, pick(requests, "R0"), below(4) != 0); break;
            case 7: {
                wire::StatusReport r;
                r.facility_id = pick(facilities, "F?");
                r.lock_state = static_cast<LockState>(below(2));
                if (below(2) == 0)
                    r.occupancy.user = pick(names, "ghost");
                r.last_applied_version = below(5);
                const auto n = below(4);
                for (std::uint64_t k = 0; k < n; ++k)
                    r.events.push_back(AuditRecord{r.facility_id, 1 + below(8), pick(names, "ghost"), "unlock",
                                                   below(2) == 0, "", now});
                reg.ingest_status(r);
                break;
            }
            case 8: reg.ack_whitelist(pick(facilities, "F?"), below(5)); break;
            case 9: reg.claim_room(pick(tokens, "bogus"), pick(rooms, "nowhere")); break;
            case 10: reg.set_room_category(admin, pick(rooms, "nowhere"), static_cast<RoomCategory>(below(4))); break;
            case 11:
                trades.push_back(reg.propose_trade(pick(tokens, "bogus"), pick(rooms, "nowhere"), pick(rooms, "nowhere"),
                                                   pick(names, "ghost")));
                break;
            case 12: reg.confirm_trade(pick(tokens, "bogus"), pick(trades, "T0")); break;
            }
        } catch (const Error&) {
            ++run.rejected;
        }
        snapshot();
        if (run.states.size() != journal.lines().size())
            throw std::logic_error("snapshot bookkeeping");
    }
    run.lines = journal.lines();
    run.final_state = reg.state();
    return run;
}

inline std::string join(const std::vector<std::string>& lines, std::size_t count)
{
    std::string out;
    for (std::size_t i = 0; i < count && i < lines.size(); ++i)
        out += lines[i];
    return out;
}

} // namespace dormctl::fixtures
