// SPDX-License-Identifier: Apache-2.0
#include "dormctl/registry.hpp"
#include "support/scripts.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <random>
#include <sstream>

using namespace dormctl;

namespace {

ErrorCode code_of(const std::function<void()>& fn)
{
    try {
        fn();
    } catch (const Error& e) {
        return e.code();
    }
    ADD_FAILURE() << "no error";
    return ErrorCode::InvalidArgument;
}

struct World {
    TimeMs now = 1000;
    MemoryJournal journal;
    Registry reg{journal, [this] { return now; }, fixtures::counter_hex()};
    std::string admin;

    World()
    {
        reg.seed_manager("admin", "0000");
        admin = reg.login("admin", "0000");
        reg.create_room("101", RoomCategory::dormitory, 2);
        reg.create_room("102", RoomCategory::dormitory, 1);
        reg.create_facility("L1", FacilityKind::door_lock, "101");
    }

    std::string student(const std::string& name)
    {
        reg.register_user(name, "1234");
        reg.decide_registration(admin, name, true);
        return reg.login(name, "1234");
    }

    RecoverResult replay() const
    {
        std::istringstream in(journal.contents());
        return recover(in);
    }
};

} // namespace

TEST(Accounts, RegistrationLifecycle)
{
    World w;
    const User joe = w.reg.register_user("Joe", "1234");
    EXPECT_EQ(joe.username, "joe");
    EXPECT_EQ(joe.status, UserStatus::pending);
    EXPECT_EQ(code_of([&] { w.reg.login("joe", "1234"); }), ErrorCode::AuthFailed);
    EXPECT_EQ(code_of([&] { w.reg.register_user("joe", "5678"); }), ErrorCode::DuplicateName);
    EXPECT_EQ(code_of([&] { w.reg.register_user("amy", "12"); }), ErrorCode::InvalidPin);
    EXPECT_EQ(code_of([&] { w.reg.register_user("a b", "1234"); }), ErrorCode::InvalidUsername);
    ASSERT_EQ(w.reg.pending_registrations(w.admin).size(), 1u);

    w.reg.decide_registration(w.admin, "joe", true);
    EXPECT_EQ(code_of([&] { w.reg.decide_registration(w.admin, "joe", true); }), ErrorCode::NotPending);
    EXPECT_EQ(code_of([&] { w.reg.decide_registration(w.admin, "nobody", true); }), ErrorCode::UnknownUser);
    const std::string token = w.reg.login("JOE", "1234");
    EXPECT_EQ(w.reg.session_user(token), "joe");
    EXPECT_EQ(code_of([&] { w.reg.login("joe", "9999"); }), ErrorCode::AuthFailed);
    EXPECT_EQ(code_of([&] { w.reg.decide_registration(token, "joe", true); }), ErrorCode::NotAdmin);
    EXPECT_EQ(code_of([&] { w.reg.session_user("nope"); }), ErrorCode::AuthFailed);

    w.reg.register_user("eve", "1234");
    w.reg.decide_registration(w.admin, "eve", false);
    EXPECT_EQ(w.reg.state().users.at("eve").status, UserStatus::rejected);
    EXPECT_EQ(code_of([&] { w.reg.login("eve", "1234"); }), ErrorCode::AuthFailed);
}

TEST(Accounts, PinsAreSaltedAndNeverExported)
{
    World w;
    w.student("joe");
    w.student("amy");
    const auto& users = w.reg.state().users;
    EXPECT_NE(users.at("joe").pin_hash, users.at("amy").pin_hash);
    EXPECT_EQ(users.at("joe").pin_hash, hash_pin(users.at("joe").pin_salt, "1234"));
    const std::string dumped = to_json(users.at("joe")).dump();
    EXPECT_EQ(dumped.find("pin"), std::string::npos);
    EXPECT_EQ(dumped.find("salt"), std::string::npos);

    w.reg.change_pin(w.admin, "joe", "4321");
    EXPECT_EQ(code_of([&] { w.reg.login("joe", "1234"); }), ErrorCode::AuthFailed);
    EXPECT_NO_THROW(w.reg.login("joe", "4321"));
}

TEST(Authority, ApplyDecideBumpsVersionOnlyOnApproval)
{
    World w;
    const std::string joe = w.student("joe");
    EXPECT_EQ(code_of([&] { w.reg.apply_authority(joe, "L9", PermissionLevel::basic); }), ErrorCode::UnknownFacility);
    EXPECT_EQ(code_of([&] { w.reg.apply_authority(joe, "L1", PermissionLevel::none); }), ErrorCode::InvalidLevel);
    EXPECT_EQ(code_of([&] { w.reg.apply_authority("bad", "L1", PermissionLevel::basic); }), ErrorCode::AuthFailed);

    const std::string r1 = w.reg.apply_authority(joe, "L1", PermissionLevel::basic);
    const std::string r2 = w.reg.apply_authority(joe, "L1", PermissionLevel::admin);
    EXPECT_NE(r1, r2);
    EXPECT_EQ(w.reg.pending_authority(w.admin).size(), 2u);
    EXPECT_EQ(code_of([&] { w.reg.decide_authority(joe, r1, true); }), ErrorCode::NotAdmin);

    const auto denied = w.reg.decide_authority(w.admin, r2, false);
    EXPECT_EQ(denied.request.status, RequestStatus::denied);
    EXPECT_FALSE(denied.dispatch);
    EXPECT_EQ(w.reg.state().whitelists.at("L1").version, 0u);

    w.now = 4242;
    const auto approved = w.reg.decide_authority(w.admin, r1, true);
    ASSERT_TRUE(approved.dispatch);
    EXPECT_EQ(approved.dispatch->version, 1u);
    ASSERT_EQ(approved.dispatch->entries.size(), 1u);
    EXPECT_EQ(approved.dispatch->entries[0], (WhitelistEntry{"joe", PermissionLevel::basic, "admin", 4242}));
    EXPECT_EQ(code_of([&] { w.reg.decide_authority(w.admin, r1, true); }), ErrorCode::NotPending);
    EXPECT_EQ(code_of([&] { w.reg.decide_authority(w.admin, "R99", true); }), ErrorCode::UnknownRequest);
    EXPECT_TRUE(w.reg.pending_authority(w.admin).empty());
}

TEST(Authority, VersionIsStrictlyIncreasingPerFacility)
{
    World w;
    w.reg.create_facility("W1", FacilityKind::laundry, "101");
    std::uint64_t last_l1 = 0;
    for (int i = 0; i < 10; ++i) {
        const std::string t = w.student("s" + std::to_string(i));
        const std::string fid = i % 3 == 0 ? "W1" : "L1";
        const auto d = w.reg.decide_authority(w.admin, w.reg.apply_authority(t, fid, PermissionLevel::basic), true);
        if (fid == "L1") {
            EXPECT_GT(d.dispatch->version, last_l1);
            last_l1 = d.dispatch->version;
        }
    }
    EXPECT_EQ(w.reg.state().whitelists.at("L1").version, 6u);
    EXPECT_EQ(w.reg.state().whitelists.at("W1").version, 4u);
}

TEST(Audit, ExactlyOnceUnderShuffledDuplicatedDelivery)
{
    std::mt19937_64 rng(11);
    for (int round = 0; round < 200; ++round) {
        World w;
        const std::uint64_t n = 1 + rng() % 30;
        std::vector<AuditRecord> events;
        for (std::uint64_t s = 1; s <= n; ++s)
            events.push_back(AuditRecord{"L1", s, "joe", "unlock", s % 3 != 0, s % 3 == 0 ? "NotWhitelisted" : "",
                                         static_cast<TimeMs>(s)});

        // Reports carry random windows of the outbox, repeated and reordered.
        std::uint64_t last_upto = 0;
        for (int k = 0; k < 60; ++k) {
            wire::StatusReport r;
            r.facility_id = "L1";
            const auto from = rng() % n;
            const auto len = rng() % (n - from + 1);
            for (auto i = from; i < from + len; ++i)
                r.events.push_back(events[i]);
            std::shuffle(r.events.begin(), r.events.end(), rng);
            const auto ack = w.reg.ingest_status(r);
            EXPECT_GE(ack.upto_seq, last_upto);
            last_upto = ack.upto_seq;
        }
        wire::StatusReport all{"L1", LockState::locked, {}, 0, events};
        EXPECT_EQ(w.reg.ingest_status(all).upto_seq, n);
        EXPECT_EQ(w.reg.ingest_status(all).upto_seq, n);

        std::vector<AuditRecord> log = w.reg.state().audit_log;
        ASSERT_EQ(log.size(), n);
        std::sort(log.begin(), log.end(), [](auto& a, auto& b) { return a.terminal_seq < b.terminal_seq; });
        EXPECT_EQ(log, events);
    }
}

TEST(Audit, GapHoldsBackLaterEvents)
{
    World w;
    const AuditRecord e1{"L1", 1, "joe", "unlock", true, "", 1};
    const AuditRecord e3{"L1", 3, "joe", "lock", true, "", 3};
    EXPECT_EQ(w.reg.ingest_status({"L1", LockState::locked, {}, 0, {e3}}).upto_seq, 0u);
    EXPECT_TRUE(w.reg.state().audit_log.empty());
    EXPECT_EQ(w.reg.ingest_status({"L1", LockState::locked, {}, 0, {e1}}).upto_seq, 1u);
    EXPECT_EQ(w.reg.state().audit_log.size(), 1u);
    // Events for another facility in the batch are ignored.
    const AuditRecord foreign{"L2", 2, "joe", "unlock", true, "", 2};
    EXPECT_EQ(w.reg.ingest_status({"L1", LockState::locked, {}, 0, {foreign}}).upto_seq, 1u);
    EXPECT_EQ(code_of([&] { w.reg.ingest_status({"L9", LockState::locked, {}, 0, {}}); }),
              ErrorCode::UnknownFacility);
}

TEST(Audit, VisibilityAndFilter)
{
    World w;
    const std::string joe = w.student("joe");
    w.reg.create_facility("W1", FacilityKind::laundry, "101");
    w.reg.ingest_status({"L1", LockState::locked, {}, 0,
                         {AuditRecord{"L1", 1, "joe", "unlock", true, "", 1},
                          AuditRecord{"L1", 2, "eve", "unlock", false, "NotWhitelisted", 2}}});
    w.reg.ingest_status({"W1", LockState::locked, {}, 0, {AuditRecord{"W1", 1, "joe", "unlock", true, "", 3}}});
    EXPECT_EQ(w.reg.audit(w.admin, std::nullopt).size(), 3u);
    EXPECT_EQ(w.reg.audit(w.admin, std::string_view("L1")).size(), 2u);
    EXPECT_EQ(w.reg.audit(joe, std::nullopt).size(), 2u);
    EXPECT_EQ(w.reg.audit(joe, std::string_view("W1")).size(), 1u);
}

TEST(Devices, ListingAndLiveness)
{
    World w;
    const std::string joe = w.student("joe");
    EXPECT_TRUE(w.reg.list_devices(joe).empty());
    ASSERT_EQ(w.reg.list_devices(w.admin).size(), 1u);
    EXPECT_FALSE(w.reg.list_devices(w.admin)[0].online);

    w.reg.decide_authority(w.admin, w.reg.apply_authority(joe, "L1", PermissionLevel::basic), true);
    w.reg.ingest_status({"L1", LockState::unlocked, Occupancy{"joe"}, 1, {}});
    auto rows = w.reg.list_devices(joe);
    ASSERT_EQ(rows.size(), 1u);
    EXPECT_TRUE(rows[0].online);
    EXPECT_EQ(rows[0].relay_name, "dorm-101-l1");
    EXPECT_EQ(rows[0].lock_state, LockState::unlocked);
    EXPECT_EQ(rows[0].occupancy.user, std::optional<std::string>("joe"));
    EXPECT_EQ(rows[0].whitelist_version, 1u);
    EXPECT_EQ(w.reg.acked_version("L1"), 1u);

    w.now += w.reg.liveness_window();
    EXPECT_TRUE(w.reg.list_devices(joe)[0].online);
    w.now += 1;
    EXPECT_FALSE(w.reg.list_devices(joe)[0].online);
}

TEST(Rooms, ClaimRespectsCapacity)
{
    World w;
    const std::string a = w.student("amy");
    const std::string b = w.student("bob");
    const std::string c = w.student("cat");
    w.reg.claim_room(a, "101");
    EXPECT_EQ(code_of([&] { w.reg.claim_room(a, "101"); }), ErrorCode::AlreadyOccupant);
    w.reg.claim_room(b, "101");
    EXPECT_EQ(code_of([&] { w.reg.claim_room(c, "101"); }), ErrorCode::CapacityExceeded);
    EXPECT_EQ(code_of([&] { w.reg.claim_room(c, "999"); }), ErrorCode::UnknownRoom);
    EXPECT_EQ(w.reg.list_rooms(c).size(), 2u);
    EXPECT_EQ(code_of([&] { w.reg.set_room_category(a, "101", RoomCategory::study); }), ErrorCode::NotAdmin);
    EXPECT_EQ(w.reg.set_room_category(w.admin, "101", RoomCategory::study).category, RoomCategory::study);
}

TEST(Rooms, TradeSwapsOccupantsOnce)
{
    World w;
    const std::string a = w.student("amy");
    const std::string b = w.student("bob");
    const std::string c = w.student("cat");
    w.reg.claim_room(a, "101");
    w.reg.claim_room(b, "102");
    EXPECT_EQ(code_of([&] { w.reg.propose_trade(a, "102", "101", "bob"); }), ErrorCode::NotOccupant);
    EXPECT_EQ(code_of([&] { w.reg.propose_trade(a, "101", "102", "cat"); }), ErrorCode::NotOccupant);
    const std::string t = w.reg.propose_trade(a, "101", "102", "bob");
    EXPECT_EQ(code_of([&] { w.reg.confirm_trade(c, t); }), ErrorCode::NoPendingProposal);
    EXPECT_EQ(code_of([&] { w.reg.confirm_trade(a, t); }), ErrorCode::NoPendingProposal);
    const auto [ra, rb] = w.reg.confirm_trade(b, t);
    EXPECT_EQ(ra.occupants, (std::set<std::string>{"bob"}));
    EXPECT_EQ(rb.occupants, (std::set<std::string>{"amy"}));
    EXPECT_EQ(code_of([&] { w.reg.confirm_trade(b, t); }), ErrorCode::NoPendingProposal);
}

TEST(Rooms, OccupancyNeverExceedsCapacityUnderRandomScripts)
{
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
        const auto run = fixtures::run_script(seed, 300);
        for (std::size_t k = 0; k < run.states.size(); ++k) {
            const auto& state = run.states[k];
            std::size_t seats = 0;
            for (const auto& [id, room] : state.rooms) {
                EXPECT_LE(room.occupants.size(), room.capacity) << "seed " << seed << " room " << id;
                seats += room.occupants.size();
            }
            // A confirmed trade moves people but never changes the seat count.
            if (k > 0 && run.lines[k].find("\"trade_confirmed\"") != std::string::npos) {
                std::size_t before = 0;
                for (const auto& [id, room] : run.states[k - 1].rooms)
                    before += room.occupants.size();
                EXPECT_EQ(seats, before);
            }
        }
    }
}

TEST(Rooms, ContendedLastSlotHasExactlyOneWinner)
{
    for (int contenders = 2; contenders <= 6; ++contenders) {
        World w;
        std::vector<std::string> tokens;
        for (int i = 0; i < contenders; ++i)
            tokens.push_back(w.student("c" + std::to_string(i)));
        int won = 0;
        for (const auto& t : tokens) {
            try {
                w.reg.claim_room(t, "102");
                ++won;
            } catch (const Error& e) {
                EXPECT_EQ(e.code(), ErrorCode::CapacityExceeded);
            }
        }
        EXPECT_EQ(won, 1);
        EXPECT_EQ(w.reg.state().rooms.at("102").occupants, (std::set<std::string>{"c0"}));
    }
}

TEST(Journal, ReplayReproducesLiveState)
{
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        const auto run = fixtures::run_script(seed, 200);
        ASSERT_FALSE(run.lines.empty());
        std::istringstream in(fixtures::join(run.lines, run.lines.size()));
        const RecoverResult r = recover(in);
        EXPECT_TRUE(r.warnings.empty());
        EXPECT_EQ(r.state, run.final_state) << "seed " << seed;
        EXPECT_EQ(r.valid_bytes, fixtures::join(run.lines, run.lines.size()).size());
        EXPECT_EQ(r.state.journal_seq, run.lines.size());
    }
}

TEST(Journal, RejectedOperationsWriteNothing)
{
    World w;
    const auto before = w.journal.lines().size();
    EXPECT_ANY_THROW(w.reg.register_user("x y", "1234"));
    EXPECT_ANY_THROW(w.reg.claim_room("bogus", "101"));
    EXPECT_ANY_THROW(w.reg.create_facility("L1", FacilityKind::bed, "101"));
    EXPECT_ANY_THROW(w.reg.create_room("101", RoomCategory::study, 1));
    EXPECT_EQ(w.journal.lines().size(), before);
}

TEST(Journal, TruncatedTailIsDroppedAtEveryCutPoint)
{
    const auto run = fixtures::run_script(7, 60);
    const std::size_t n = run.lines.size();
    ASSERT_GE(n, 3u);
    const std::string prefix = fixtures::join(run.lines, n - 1);
    const std::string& last = run.lines.back();
    for (std::size_t cut = 0; cut < last.size(); ++cut) {
        std::istringstream in(prefix + last.substr(0, cut));
        const RecoverResult r = recover(in);
        EXPECT_EQ(r.state, run.states[n - 2]) << "cut " << cut;
        EXPECT_EQ(r.valid_bytes, prefix.size());
        EXPECT_EQ(r.warnings.size(), cut == 0 ? 0u : 1u);
    }
}

TEST(Journal, CorruptInteriorRecordThrows)
{
    World w;
    std::string data = w.journal.contents();
    const auto lf = data.find('\n');
    data.replace(0, lf, "{\"garbage\":");
    std::istringstream in(data);
    EXPECT_EQ(code_of([&] { recover(in); }), ErrorCode::CorruptJournal);
}

TEST(Journal, RecoveredRegistryKeepsAppending)
{
    World w;
    const std::string joe = w.student("joe");
    RecoverResult r = w.replay();
    MemoryJournal tail;
    Registry again(tail, [] { return TimeMs{5}; }, fixtures::counter_hex(), {}, std::move(r.state));
    EXPECT_EQ(again.session_user(joe), "joe");
    again.claim_room(joe, "102");
    ASSERT_EQ(tail.lines().size(), 1u);
    std::istringstream in(w.journal.contents() + tail.contents());
    EXPECT_EQ(recover(in).state, again.state());
}
