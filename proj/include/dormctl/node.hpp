// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "dormctl/model.hpp"
#include "dormctl/protocol.hpp"

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>

namespace dormctl {

using ConnId = std::uint64_t;

/// Services a node may use. Implemented by the simulator and by the
/// socket event loop; nodes never touch I/O directly.
class Runtime {
public:
    virtual ~Runtime() = default;

    virtual TimeMs now() const = 0;
    /// Starts an outbound connection. The node later receives either
    /// on_connected or on_connect_failed for the returned id.
    virtual ConnId connect(const std::string& target) = 0;
    virtual void send(ConnId conn, std::string frame) = 0;
    virtual void close(ConnId conn) = 0;
    /// Structured trace hook; ignored outside the simulator.
    virtual void trace(std::string_view kind, const wire::Json& detail) { (void)kind, (void)detail; }
};

/// Sans-I/O protocol participant.
class Node {
public:
    virtual ~Node() = default;

    virtual void on_start(Runtime& rt) { (void)rt; }
    virtual void on_connected(Runtime& rt, ConnId conn, bool inbound) = 0;
    virtual void on_connect_failed(Runtime& rt, ConnId conn) = 0;
    virtual void on_frame(Runtime& rt, ConnId conn, std::string_view frame) = 0;
    virtual void on_closed(Runtime& rt, ConnId conn) = 0;
    /// Called once `now()` reaches next_wakeup().
    virtual void on_tick(Runtime& rt) = 0;
    virtual std::optional<TimeMs> next_wakeup() const = 0;
    /// False while the node cannot accept connections (e.g. powered off).
    virtual bool accepting() const { return true; }
};

/// Per-connection outbound sequence state plus envelope helper.
class Channels {
public:
    explicit Channels(std::string sender) : sender_(std::move(sender)) {}

    std::string frame(ConnId conn, wire::Payload payload, std::optional<std::string> auth = std::nullopt)
    {
        wire::Envelope env;
        env.seq = seq_[conn].next();
        env.sender = sender_;
        env.auth = std::move(auth);
        env.payload = std::move(payload);
        return wire::encode(env);
    }

    void send(Runtime& rt, ConnId conn, wire::Payload payload)
    {
        rt.send(conn, frame(conn, std::move(payload)));
    }

    void forget(ConnId conn) { seq_.erase(conn); }
    const std::string& sender() const noexcept { return sender_; }
    void set_sender(std::string sender) { sender_ = std::move(sender); }

private:
    std::string sender_;
    std::map<ConnId, wire::SeqCounter> seq_;
};

} // namespace dormctl
