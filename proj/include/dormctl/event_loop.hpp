// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "dormctl/control_client.hpp"
#include "dormctl/node.hpp"

#include <atomic>
#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <mutex>
#include <string>
#include <vector>

namespace dormctl {

/// Drives one Node over real TCP sockets with a poll() loop. Targets are
/// "host:port" strings. When `guard` is set it is held around every node
/// callback, so other threads can share the node's state under it.
class EventLoop final : public Runtime {
public:
    explicit EventLoop(Node& node, std::mutex* guard = nullptr);
    ~EventLoop() override;

    EventLoop(const EventLoop&) = delete;
    EventLoop& operator=(const EventLoop&) = delete;

    /// Binds a listening socket; port 0 picks an ephemeral one. Returns the bound port.
    std::uint16_t listen(const std::string& host, std::uint16_t port);

    /// Calls node.on_start, then loops until stop().
    void run();
    /// Calls node.on_start if needed, then loops until `done` or `max_ms` elapse.
    bool run_until(const std::function<bool()>& done, TimeMs max_ms);
    /// Safe to call from any thread.
    void stop() noexcept { stop_ = true; }

    TimeMs now() const override;
    ConnId connect(const std::string& target) override;
    void send(ConnId conn, std::string frame) override;
    void close(ConnId conn) override;

private:
    struct Conn {
        int fd = -1;
        bool inbound = false;
        bool connecting = false;
        bool closing = false;
        wire::LineBuffer in;
        std::string out;
    };

    void start_once();
    void poll_once(int max_wait_ms);
    void flush(ConnId id);
    void drop(ConnId id, bool notify);
    void read_from(ConnId id);

    template <typename F>
    void guarded(F&& f)
    {
        if (guard_ != nullptr) {
            std::lock_guard lock(*guard_);
            f();
        } else {
            f();
        }
    }

    Node& node_;
    std::mutex* guard_;
    std::atomic<bool> stop_{false};
    bool started_ = false;
    std::vector<int> listeners_;
    std::map<ConnId, Conn> conns_;
    std::deque<std::function<void()>> deferred_;
    ConnId next_conn_ = 1;
};

/// Runs one control request to completion on a private event loop.
ControlOutcome run_control(const ControlRequest& request, const std::string& identity);

} // namespace dormctl
