// SPDX-License-Identifier: Apache-2.0
#include "dormctl/relay.hpp"
#include "support/fake_runtime.hpp"

#include <gtest/gtest.h>

using namespace dormctl;
using fixtures::FakeRuntime;
using fixtures::frame_of;

namespace {

constexpr TimeMs kHeartbeat = 1000;

struct Rig {
    FakeRuntime rt;
    RelayNode relay{RelayConfig{kHeartbeat, 3}};

    ConnId join()
    {
        const ConnId c = rt.inbound();
        relay.on_connected(rt, c, true);
        return c;
    }

    void deliver(ConnId c, wire::Payload p) { relay.on_frame(rt, c, frame_of(std::move(p))); }

    wire::NameResA last_answer(ConnId c) const
    {
        auto answers = rt.payloads<wire::NameResA>(c);
        EXPECT_FALSE(answers.empty());
        return answers.empty() ? wire::NameResA{} : answers.back();
    }
};

} // namespace

TEST(Relay, LeaseLastsThreeHeartbeats)
{
    Rig r;
    r.relay.name_register(0, "dorm-101-l1", 7);
    EXPECT_EQ(r.relay.resolve(0, "dorm-101-l1"), std::optional<ConnId>(7));
    EXPECT_EQ(r.relay.resolve(3 * kHeartbeat - 1, "dorm-101-l1"), std::optional<ConnId>(7));
    EXPECT_FALSE(r.relay.resolve(3 * kHeartbeat, "dorm-101-l1"));
    EXPECT_FALSE(r.relay.resolve(0, "other"));
    EXPECT_THROW(r.relay.name_register(0, "Bad Name", 7), Error);
    EXPECT_THROW(r.relay.name_register(0, "", 7), Error);
}

TEST(Relay, HeartbeatExtendsLease)
{
    Rig r;
    r.relay.name_register(0, "n", 7);
    r.relay.name_register(2500, "n", 7);
    EXPECT_TRUE(r.relay.resolve(5000, "n"));
    EXPECT_EQ(r.relay.next_wakeup(), std::optional<TimeMs>(5500));
    r.rt.clock = 5500;
    r.relay.on_tick(r.rt);
    EXPECT_FALSE(r.relay.resolve(5500, "n"));
    EXPECT_EQ(r.rt.traced("relay.expired").size(), 1u);
    EXPECT_FALSE(r.relay.next_wakeup());
}

TEST(Relay, ReRegistrationReplacesStaleRoute)
{
    Rig r;
    const ConnId old_route = r.join();
    r.deliver(old_route, wire::NameReg{"dorm-101-l1"});
    EXPECT_EQ(r.last_answer(old_route), (wire::NameResA{true, "conn-1"}));

    // The terminal comes back from a different address before the old lease expires.
    r.rt.clock = 500;
    const ConnId new_route = r.join();
    r.deliver(new_route, wire::NameReg{"dorm-101-l1"});
    EXPECT_EQ(r.relay.resolve(500, "dorm-101-l1"), std::optional<ConnId>(new_route));

    const ConnId client = r.join();
    r.deliver(client, wire::RelayOpen{"dorm-101-l1"});
    EXPECT_TRUE(r.last_answer(client).found);
    r.deliver(client, wire::RelayData{"PING\n", std::nullopt});
    const auto forwarded = r.rt.payloads<wire::RelayData>(new_route);
    ASSERT_EQ(forwarded.size(), 1u);
    EXPECT_EQ(forwarded[0].bytes, "PING\n");
    EXPECT_TRUE(r.rt.payloads<wire::RelayData>(old_route).empty());

    // Closing the stale connection must not evict the fresh lease.
    r.relay.on_closed(r.rt, old_route);
    EXPECT_EQ(r.relay.resolve(500, "dorm-101-l1"), std::optional<ConnId>(new_route));
    EXPECT_EQ(r.relay.session_count(), 1u);
}

TEST(Relay, ResolveQueryAndUnknownName)
{
    Rig r;
    const ConnId term = r.join();
    r.deliver(term, wire::NameReg{"dorm-1-x"});
    const ConnId client = r.join();
    r.deliver(client, wire::NameResQ{"dorm-1-x"});
    EXPECT_TRUE(r.last_answer(client).found);
    r.deliver(client, wire::NameResQ{"nobody"});
    EXPECT_EQ(r.last_answer(client), (wire::NameResA{false, ""}));
    r.deliver(client, wire::RelayOpen{"nobody"});
    EXPECT_FALSE(r.last_answer(client).found);
    EXPECT_EQ(r.relay.session_count(), 0u);
    r.deliver(term, wire::NameReg{"UPPER"});
    EXPECT_FALSE(r.last_answer(term).found);
}

TEST(Relay, ForwardsVerbatimBothWays)
{
    Rig r;
    const ConnId term = r.join();
    r.deliver(term, wire::NameReg{"t"});
    const ConnId a = r.join();
    const ConnId b = r.join();
    r.deliver(a, wire::RelayOpen{"t"});
    r.deliver(b, wire::RelayOpen{"t"});
    const std::string payload = "{\"weird\":\"\\u0001\xc3\xa9\"}\n";
    r.deliver(a, wire::RelayData{payload, std::nullopt});
    r.deliver(b, wire::RelayData{"B\n", std::nullopt});
    const auto inbound = r.rt.payloads<wire::RelayData>(term);
    ASSERT_EQ(inbound.size(), 2u);
    EXPECT_EQ(inbound[0], (wire::RelayData{payload, 1}));
    EXPECT_EQ(inbound[1], (wire::RelayData{"B\n", 2}));

    r.deliver(term, wire::RelayData{"reply-b\n", 2});
    r.deliver(term, wire::RelayData{"reply-a\n", 1});
    r.deliver(term, wire::RelayData{"lost\n", 99});
    EXPECT_EQ(r.rt.payloads<wire::RelayData>(a), (std::vector<wire::RelayData>{{"reply-a\n", std::nullopt}}));
    EXPECT_EQ(r.rt.payloads<wire::RelayData>(b), (std::vector<wire::RelayData>{{"reply-b\n", std::nullopt}}));
}

TEST(Relay, RouteLossClosesSessionsAndDropsLease)
{
    Rig r;
    const ConnId term = r.join();
    r.deliver(term, wire::NameReg{"t"});
    const ConnId client = r.join();
    r.deliver(client, wire::RelayOpen{"t"});
    ASSERT_EQ(r.relay.session_count(), 1u);
    r.relay.on_closed(r.rt, term);
    EXPECT_EQ(r.relay.session_count(), 0u);
    EXPECT_FALSE(r.relay.resolve(0, "t"));
    ASSERT_FALSE(r.rt.closed.empty());
    EXPECT_EQ(r.rt.closed.back(), client);
}

TEST(Relay, ClientCloseEndsOnlyItsSession)
{
    Rig r;
    const ConnId term = r.join();
    r.deliver(term, wire::NameReg{"t"});
    const ConnId a = r.join();
    const ConnId b = r.join();
    r.deliver(a, wire::RelayOpen{"t"});
    r.deliver(b, wire::RelayOpen{"t"});
    r.relay.on_closed(r.rt, a);
    EXPECT_EQ(r.relay.session_count(), 1u);
    EXPECT_TRUE(r.relay.resolve(0, "t"));
    // A second open on a connection that already has a session is refused.
    r.deliver(b, wire::RelayOpen{"t"});
    EXPECT_FALSE(r.last_answer(b).found);
}
