// SPDX-License-Identifier: Apache-2.0
#include "dormctl/model.hpp"

#include <gtest/gtest.h>
#include <openssl/evp.h>

#include <algorithm>
#include <array>
#include <random>

using namespace dormctl;

namespace {

Whitelist wl(std::string fid, std::uint64_t version, std::vector<std::pair<std::string, PermissionLevel>> users = {})
{
    Whitelist w{std::move(fid), version, {}};
    for (auto& [name, level] : users)
        w.entries[name] = WhitelistEntry{name, level, "admin", 0};
    return w;
}

// Digest through the EVP interface, independent of the library's helper.
std::string evp_sha256_hex(const std::string& data)
{
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    EVP_Digest(data.data(), data.size(), md, &len, EVP_sha256(), nullptr);
    std::string out;
    char buf[3];
    for (unsigned int i = 0; i < len; ++i) {
        std::snprintf(buf, sizeof buf, "%02x", md[i]);
        out += buf;
    }
    return out;
}

} // namespace

TEST(CommandTable, DefaultMinimums)
{
    const auto& t = CommandTable::defaults();
    EXPECT_EQ(min_level_for("unlock", t), PermissionLevel::basic);
    EXPECT_EQ(min_level_for("lock", t), PermissionLevel::basic);
    EXPECT_EQ(min_level_for("query_state", t), PermissionLevel::basic);
    EXPECT_EQ(min_level_for("configure", t), PermissionLevel::extended);
    EXPECT_EQ(min_level_for("set_whitelist_local", t), PermissionLevel::admin);
    EXPECT_EQ(t.entries().size(), 5u);
}

TEST(CommandTable, UnknownAndEmptyCommands)
{
    const auto& t = CommandTable::defaults();
    for (const char* cmd : {"teleport", ""}) {
        try {
            min_level_for(cmd, t);
            FAIL() << cmd;
        } catch (const Error& e) {
            EXPECT_EQ(e.code(), ErrorCode::UnknownCommand);
        }
    }
    EXPECT_THROW(allows(PermissionLevel::admin, "teleport", t), Error);
}

TEST(CommandTable, AllowsGridMatchesEnumeratedTruthTable)
{
    // Rows: none, basic, extended, admin. Columns: unlock, lock, query_state,
    // configure, set_whitelist_local. Written out by hand.
    const std::array<const char*, 5> commands{"unlock", "lock", "query_state", "configure", "set_whitelist_local"};
    const bool truth[4][5] = {
        {false, false, false, false, false},
        {true, true, true, false, false},
        {true, true, true, true, false},
        {true, true, true, true, true},
    };
    for (int lvl = 0; lvl < 4; ++lvl) {
        for (std::size_t c = 0; c < commands.size(); ++c) {
            EXPECT_EQ(allows(static_cast<PermissionLevel>(lvl), commands[c], CommandTable::defaults()), truth[lvl][c])
                << lvl << " " << commands[c];
        }
    }
}

TEST(CommandTable, AllowsIsMonotoneInLevel)
{
    for (const auto& [cmd, min] : CommandTable::defaults().entries()) {
        for (int a = 0; a < 4; ++a) {
            for (int b = a; b < 4; ++b) {
                if (allows(static_cast<PermissionLevel>(a), cmd, CommandTable::defaults()))
                    EXPECT_TRUE(allows(static_cast<PermissionLevel>(b), cmd, CommandTable::defaults()));
            }
        }
    }
}

TEST(Whitelist, LookupExamples)
{
    const Whitelist joe = wl("L1", 1, {{"joe", PermissionLevel::basic}});
    auto e = lookup(joe, "joe");
    ASSERT_TRUE(e);
    EXPECT_EQ(e->username, "joe");
    EXPECT_EQ(e->level, PermissionLevel::basic);
    EXPECT_FALSE(lookup(wl("L1", 0), "joe"));
}

TEST(Whitelist, LookupAgreesWithLinearScan)
{
    std::mt19937 rng(42);
    for (int round = 0; round < 50; ++round) {
        std::vector<WhitelistEntry> flat;
        Whitelist w{"F", 1, {}};
        for (int i = 0; i < 100; ++i) {
            std::string name = "u" + std::to_string(rng() % 150);
            auto level = static_cast<PermissionLevel>(1 + rng() % 3);
            w.entries[name] = WhitelistEntry{name, level, "admin", i};
            auto it = std::find_if(flat.begin(), flat.end(), [&](const auto& x) { return x.username == name; });
            if (it != flat.end())
                *it = w.entries[name];
            else
                flat.push_back(w.entries[name]);
        }
        for (int probe = 0; probe < 200; ++probe) {
            const std::string name = "u" + std::to_string(probe);
            auto it = std::find_if(flat.begin(), flat.end(), [&](const auto& x) { return x.username == name; });
            const auto got = lookup(w, name);
            ASSERT_EQ(got.has_value(), it != flat.end()) << name;
            if (got)
                EXPECT_EQ(*got, *it);
        }
    }
}

TEST(Whitelist, ApplyUpdateExamples)
{
    const Whitelist v3 = wl("L1", 3, {{"joe", PermissionLevel::basic}});
    const Whitelist v5 = wl("L1", 5, {{"amy", PermissionLevel::admin}});
    EXPECT_EQ(apply_update(v3, v5), v5);
    const Whitelist other_v5 = wl("L1", 5, {{"eve", PermissionLevel::basic}});
    EXPECT_EQ(apply_update(v5, other_v5), v5);
    EXPECT_EQ(apply_update(v5, v3), v5);
    try {
        apply_update(v3, wl("L2", 9));
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::FacilityMismatch);
    }
}

TEST(Whitelist, ApplyUpdateIsIdempotent)
{
    std::mt19937 rng(7);
    for (int i = 0; i < 200; ++i) {
        const Whitelist s = wl("F", rng() % 10, {{"a", PermissionLevel::basic}});
        const Whitelist u = wl("F", rng() % 10, {{"b", PermissionLevel::extended}});
        EXPECT_EQ(apply_update(s, u), apply_update(apply_update(s, u), u));
    }
}

TEST(Whitelist, AllPermutationsConvergeToMaxVersion)
{
    std::vector<Whitelist> updates;
    for (std::uint64_t v = 1; v <= 3; ++v)
        updates.push_back(wl("F", v, {{"user" + std::to_string(v), PermissionLevel::basic}}));
    std::vector<int> order{0, 1, 2};
    do {
        Whitelist s = wl("F", 0);
        for (int i : order)
            s = apply_update(s, updates[static_cast<std::size_t>(i)]);
        EXPECT_EQ(s, updates[2]);
    } while (std::next_permutation(order.begin(), order.end()));

    // Longer sequences: randomized spot checks over v1..v9.
    std::mt19937 rng(99);
    std::vector<Whitelist> nine;
    for (std::uint64_t v = 1; v <= 9; ++v)
        nine.push_back(wl("F", v, {{"u" + std::to_string(v), PermissionLevel::basic}}));
    for (int round = 0; round < 500; ++round) {
        std::shuffle(nine.begin(), nine.end(), rng);
        Whitelist s = wl("F", 0);
        for (const auto& u : nine)
            s = apply_update(s, u);
        EXPECT_EQ(s.version, 9u);
        EXPECT_TRUE(lookup(s, "u9"));
    }
}

TEST(Usernames, Validation)
{
    EXPECT_TRUE(is_valid_username("joe"));
    EXPECT_TRUE(is_valid_username("a_b-9"));
    EXPECT_FALSE(is_valid_username(""));
    EXPECT_FALSE(is_valid_username("Joe"));
    EXPECT_FALSE(is_valid_username("joe smith"));
    EXPECT_FALSE(is_valid_username(std::string(33, 'a')));
    EXPECT_TRUE(is_valid_username(std::string(32, 'a')));
    EXPECT_EQ(normalize_username("JoE"), "joe");
    try {
        normalize_username("j@e");
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::InvalidUsername);
    }
}

TEST(Pins, ValidationAndHashing)
{
    EXPECT_TRUE(is_valid_pin("1234"));
    EXPECT_TRUE(is_valid_pin("123456789012"));
    EXPECT_FALSE(is_valid_pin("123"));
    EXPECT_FALSE(is_valid_pin("1234567890123"));
    EXPECT_FALSE(is_valid_pin("12a4"));
    EXPECT_EQ(hash_pin("salt", "1234"), evp_sha256_hex("salt:1234"));
    EXPECT_NE(hash_pin("salt", "1234"), hash_pin("pepper", "1234"));
}

TEST(RelayNames, DerivationAndValidation)
{
    EXPECT_EQ(relay_name_for("101", "L1"), "dorm-101-l1");
    EXPECT_TRUE(is_valid_relay_name("dorm-101-l1"));
    EXPECT_TRUE(is_valid_relay_name("a.b_c"));
    EXPECT_FALSE(is_valid_relay_name(""));
    EXPECT_FALSE(is_valid_relay_name("Dorm"));
    EXPECT_FALSE(is_valid_relay_name(std::string(65, 'a')));
}

TEST(Enums, NamesRoundTrip)
{
    for (auto l : {PermissionLevel::none, PermissionLevel::basic, PermissionLevel::extended, PermissionLevel::admin})
        EXPECT_EQ(parse_level(to_string(l)), l);
    EXPECT_THROW(parse_level("root"), Error);
    for (auto k : {FacilityKind::door_lock, FacilityKind::laundry, FacilityKind::bed, FacilityKind::appliance})
        EXPECT_EQ(parse_facility_kind(to_string(k)), k);
    for (auto c : {RoomCategory::dormitory, RoomCategory::study, RoomCategory::meeting, RoomCategory::entertainment})
        EXPECT_EQ(parse_room_category(to_string(c)), c);
    for (auto s : {LockState::locked, LockState::unlocked})
        EXPECT_EQ(parse_lock_state(to_string(s)), s);
}
