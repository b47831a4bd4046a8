// SPDX-License-Identifier: Apache-2.0
// Small helpers shared by the command-line tools.
#pragma once

#include "dormctl/error.hpp"
#include "dormctl/event_loop.hpp"

#include <atomic>
#include <csignal>
#include <cstdint>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <utility>

namespace dormctl::tools {

inline std::pair<std::string, std::uint16_t> split_host_port(const std::string& address)
{
    const auto colon = address.rfind(':');
    if (colon == std::string::npos || colon == 0)
        throw Error(ErrorCode::InvalidArgument, "expected host:port, got '" + address + "'");
    try {
        const unsigned long port = std::stoul(address.substr(colon + 1));
        if (port > 65535)
            throw std::out_of_range("port");
        return {address.substr(0, colon), static_cast<std::uint16_t>(port)};
    } catch (const std::logic_error&) {
        throw Error(ErrorCode::InvalidArgument, "bad port in '" + address + "'");
    }
}

inline std::string slurp(const std::string& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw Error(ErrorCode::InvalidArgument, "cannot read " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

inline std::atomic<EventLoop*> g_loop{nullptr};

/// SIGINT/SIGTERM stop the registered loop.
inline void stop_on_signals(EventLoop& loop)
{
    g_loop = &loop;
    auto handler = [](int) {
        if (EventLoop* l = g_loop.load())
            l->stop();
    };
    std::signal(SIGINT, handler);
    std::signal(SIGTERM, handler);
    std::signal(SIGPIPE, SIG_IGN);
}

/// Startup line consumed by scripts and tests that bind port 0.
inline void announce(const std::string& what, const std::string& host, std::uint16_t port)
{
    std::cout << what << " listening on " << host << ':' << port << std::endl;
}

} // namespace dormctl::tools
