// SPDX-License-Identifier: Apache-2.0
#include "dormctl/node.hpp"
#include "dormctl/protocol.hpp"
#include "support/generators.hpp"
#include "support/golden.hpp"

#include <gtest/gtest.h>

using namespace dormctl;
using namespace dormctl::wire;

namespace {

ErrorCode decode_error(std::string_view frame)
{
    try {
        decode(frame);
    } catch (const Error& e) {
        return e.code();
    }
    ADD_FAILURE() << "decoded: " << frame;
    return ErrorCode::InvalidArgument;
}

ErrorCode encode_error(const Envelope& env)
{
    try {
        encode(env);
    } catch (const Error& e) {
        return e.code();
    }
    ADD_FAILURE() << "encoded";
    return ErrorCode::InvalidArgument;
}

Envelope with(Payload p)
{
    Envelope e;
    e.seq = 1;
    e.sender = "t";
    e.payload = std::move(p);
    return e;
}

} // namespace

TEST(Golden, EveryTypeHasAFrameAndMatchesByteForByte)
{
    const auto goldens = fixtures::golden_envelopes();
    ASSERT_EQ(goldens.size(), static_cast<std::size_t>(fixtures::kMessageTypes));
    for (const auto& [type, env] : goldens) {
        const std::string file = fixtures::read_golden(DORMCTL_SOURCE_DIR "/tests/golden", type);
        ASSERT_FALSE(file.empty()) << type;
        EXPECT_EQ(encode(env), file) << type;
        EXPECT_EQ(decode(file), env) << type;
        EXPECT_EQ(to_string(env.type()), type);
    }
}

TEST(Encode, CtlReqMatchesHandBuiltSerialization)
{
    const std::string expected = std::string("{\"v\":1,\"type\":\"CTL_REQ\",\"seq\":9,\"sender\":\"joe\",\"auth\":null,") +
                                 "\"payload\":{\"username\":\"joe\",\"command\":\"unlock\",\"nonce\":\"n1\"}}\n";
    Envelope e = with(CtlReq{"joe", "unlock", "n1"});
    e.seq = 9;
    e.sender = "joe";
    const std::string frame = encode(e);
    EXPECT_EQ(frame, expected);
    EXPECT_EQ(frame.find('\n'), frame.size() - 1);
    EXPECT_EQ(decode(frame), e);
}

TEST(Encode, WlUpdateEntryShape)
{
    const std::string frame = encode(with(WlUpdate{"L1", 2, {WhitelistEntry{"joe", PermissionLevel::basic, "admin", 5}}}));
    EXPECT_NE(frame.find(R"("entries":[{"username":"joe","level":"basic","granted_by":"admin","granted_at":5}])"),
              std::string::npos);
}

TEST(Encode, OversizedFrameRejected)
{
    EXPECT_EQ(encode_error(with(RelayData{std::string(70 * 1024, 'a'), std::nullopt})), ErrorCode::FrameTooLarge);
}

TEST(Encode, ExactCapBoundary)
{
    // Frame length = overhead + payload bytes; find the payload size that
    // lands exactly on the cap.
    const std::size_t overhead = encode(with(RelayData{"", std::nullopt})).size();
    const std::size_t fit = kMaxFrameBytes - overhead;
    EXPECT_EQ(encode(with(RelayData{std::string(fit, 'a'), std::nullopt})).size(), kMaxFrameBytes);
    EXPECT_EQ(encode_error(with(RelayData{std::string(fit + 1, 'a'), std::nullopt})), ErrorCode::FrameTooLarge);
}

TEST(Encode, SchemaViolations)
{
    EXPECT_EQ(encode_error(with(CtlReq{"", "unlock", "n"})), ErrorCode::SchemaViolation);
    EXPECT_EQ(encode_error(with(CtlReq{"joe", "", "n"})), ErrorCode::SchemaViolation);
    EXPECT_EQ(encode_error(with(WlUpdate{"L1", 1, {WhitelistEntry{"x", PermissionLevel::none, "a", 0}}})),
              ErrorCode::SchemaViolation);
    EXPECT_EQ(encode_error(with(CtlReq{"jo\xff", "unlock", "n"})), ErrorCode::SchemaViolation);
    Envelope bad = with(NameReg{"x"});
    bad.v = 2;
    EXPECT_EQ(encode_error(bad), ErrorCode::SchemaViolation);
}

TEST(Decode, Errors)
{
    EXPECT_EQ(decode_error("not json\n"), ErrorCode::MalformedFrame);
    EXPECT_EQ(decode_error("[1,2]\n"), ErrorCode::MalformedFrame);
    EXPECT_EQ(decode_error(R"({"v":1,"type":"NAME_REG","seq":1,"sender":"a","auth":null,"payload":{"name":"x"}})"),
              ErrorCode::MalformedFrame); // no LF
    EXPECT_EQ(decode_error("{\"v\":1,\n\"type\":\"NAME_REG\",\"seq\":1,\"sender\":\"a\",\"auth\":null,\"payload\":{\"name\":\"x\"}}\n"),
              ErrorCode::MalformedFrame);
    EXPECT_EQ(decode_error(R"({"v":1,"type":"WARP","seq":1,"sender":"a","auth":null,"payload":{}})" "\n"),
              ErrorCode::UnknownType);
    EXPECT_EQ(decode_error(R"({"v":2,"type":"NAME_REG","seq":1,"sender":"a","auth":null,"payload":{"name":"x"}})" "\n"),
              ErrorCode::SchemaViolation);
    EXPECT_EQ(decode_error(R"({"v":1,"type":"CTL_REQ","seq":1,"sender":"a","auth":null,"payload":{"command":"unlock","nonce":"n"}})" "\n"),
              ErrorCode::SchemaViolation);
    EXPECT_EQ(decode_error(R"({"v":1,"type":"WL_ACK","seq":1,"sender":"a","auth":null,"payload":{"facility_id":"L1","version":-1}})" "\n"),
              ErrorCode::SchemaViolation);
    EXPECT_EQ(decode_error(std::string(kMaxFrameBytes + 1, ' ')), ErrorCode::FrameTooLarge);
}

TEST(Decode, UnknownPayloadKeysIgnored)
{
    const auto env = decode(
        R"({"v":1,"type":"CTL_RES","seq":3,"sender":"L1","auth":null,"payload":{"success":false,"reason":"NotWhitelisted","nonce":"n","extra":[1,2]}})"
        "\n");
    EXPECT_EQ(std::get<CtlRes>(env.payload), (CtlRes{false, "NotWhitelisted", "n"}));
}

TEST(RoundTrip, GenerativeAllTypes)
{
    fixtures::Gen gen(20240601);
    for (int i = 0; i < 2000; ++i) {
        const auto type = static_cast<MsgType>(i % fixtures::kMessageTypes);
        const Envelope env = gen.envelope(type);
        const std::string frame = encode(env);
        ASSERT_EQ(frame.back(), '\n');
        ASSERT_EQ(frame.find('\n'), frame.size() - 1) << "interior LF";
        ASSERT_EQ(decode(frame), env) << frame;
    }
}

TEST(Framing, ConcatenatedFramesSplitBack)
{
    fixtures::Gen gen(5);
    std::vector<Envelope> sent;
    std::string stream;
    for (int i = 0; i < 200; ++i) {
        sent.push_back(gen.envelope(static_cast<MsgType>(gen.below(fixtures::kMessageTypes))));
        stream += encode(sent.back());
    }
    // Feed in random-sized chunks.
    LineBuffer buf;
    std::vector<Envelope> got;
    std::size_t pos = 0;
    while (pos < stream.size()) {
        const std::size_t n = std::min<std::size_t>(1 + gen.below(300), stream.size() - pos);
        buf.feed(std::string_view(stream).substr(pos, n));
        pos += n;
        while (auto f = buf.next_frame())
            got.push_back(decode(*f));
    }
    EXPECT_FALSE(buf.overflowed());
    EXPECT_EQ(got, sent);
}

TEST(Framing, OverflowWithoutNewline)
{
    LineBuffer buf;
    buf.feed(std::string(kMaxFrameBytes, 'a'));
    EXPECT_FALSE(buf.overflowed());
    buf.feed("a");
    EXPECT_TRUE(buf.overflowed());
}

TEST(Fuzz, DecodeNeverCrashes)
{
    fixtures::Gen gen(77);
    int typed = 0;
    for (int i = 0; i < 10000; ++i) {
        std::string bytes = gen.bytes(512);
        if (gen.coin())
            bytes.push_back('\n');
        try {
            decode(bytes);
        } catch (const Error&) {
            ++typed;
        }
    }
    EXPECT_GT(typed, 9900);
}

TEST(Fuzz, MutatedValidFramesYieldTypedResults)
{
    fixtures::Gen gen(78);
    for (int i = 0; i < 3000; ++i) {
        std::string frame = encode(gen.envelope(static_cast<MsgType>(i % fixtures::kMessageTypes)));
        const auto flips = 1 + gen.below(4);
        for (std::uint64_t k = 0; k < flips; ++k)
            frame[gen.below(frame.size())] = static_cast<char>(gen.below(256));
        try {
            const Envelope e = decode(frame);
            (void)encode(e);
        } catch (const Error&) {
        }
    }
}

TEST(Sequence, StartsAtOneAndIsPerChannel)
{
    SeqCounter c;
    EXPECT_EQ(c.next(), 1u);
    c.next();
    c.next();
    EXPECT_EQ(c.peek(), 4u);

    Channels ch("me");
    std::vector<std::uint64_t> a, b;
    for (int i = 0; i < 5; ++i) {
        a.push_back(decode(ch.frame(1, NameReg{"x"})).seq);
        if (i % 2 == 0)
            b.push_back(decode(ch.frame(2, NameReg{"y"})).seq);
    }
    EXPECT_EQ(a, (std::vector<std::uint64_t>{1, 2, 3, 4, 5}));
    EXPECT_EQ(b, (std::vector<std::uint64_t>{1, 2, 3}));
    ch.forget(1);
    EXPECT_EQ(decode(ch.frame(1, NameReg{"x"})).seq, 1u);
}
