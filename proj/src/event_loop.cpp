// SPDX-License-Identifier: Apache-2.0
#include "dormctl/event_loop.hpp"

#include <arpa/inet.h>
#include <fcntl.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <chrono>
#include <cstring>

namespace dormctl {

namespace {

void set_nonblocking(int fd)
{
    const int flags = ::fcntl(fd, F_GETFL, 0);
    ::fcntl(fd, F_SETFL, flags | O_NONBLOCK);
}

void set_nodelay(int fd)
{
    int one = 1;
    ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
}

bool split_target(const std::string& target, std::string& host, std::string& port)
{
    const auto colon = target.rfind(':');
    if (colon == std::string::npos || colon == 0 || colon + 1 == target.size())
        return false;
    host = target.substr(0, colon);
    port = target.substr(colon + 1);
    return true;
}

} // namespace

EventLoop::EventLoop(Node& node, std::mutex* guard) : node_(node), guard_(guard) {}

EventLoop::~EventLoop()
{
    for (int fd : listeners_)
        ::close(fd);
    for (auto& [id, c] : conns_)
        ::close(c.fd);
}

TimeMs EventLoop::now() const
{
    using namespace std::chrono;
    return duration_cast<milliseconds>(system_clock::now().time_since_epoch()).count();
}

std::uint16_t EventLoop::listen(const std::string& host, std::uint16_t port)
{
    const int fd = ::socket(AF_INET, SOCK_STREAM, 0);
    if (fd < 0)
        throw Error(ErrorCode::TransportError, std::strerror(errno));
    int one = 1;
    ::setsockopt(fd, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);

    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_port = htons(port);
    if (::inet_pton(AF_INET, host.c_str(), &addr.sin_addr) != 1) {
        ::close(fd);
        throw Error(ErrorCode::InvalidArgument, "bad listen address " + host);
    }
    if (::bind(fd, reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0 || ::listen(fd, 64) != 0) {
        const std::string why = std::strerror(errno);
        ::close(fd);
        throw Error(ErrorCode::TransportError, "listen " + host + ":" + std::to_string(port) + ": " + why);
    }
    set_nonblocking(fd);
    socklen_t len = sizeof addr;
    ::getsockname(fd, reinterpret_cast<sockaddr*>(&addr), &len);
    listeners_.push_back(fd);
    return ntohs(addr.sin_port);
}

ConnId EventLoop::connect(const std::string& target)
{
    const ConnId id = next_conn_++;
    auto fail = [this, id] { deferred_.push_back([this, id] { node_.on_connect_failed(*this, id); }); };

    std::string host, port;
    if (!split_target(target, host, port)) {
        fail();
        return id;
    }
    addrinfo hints{};
    hints.ai_family = AF_INET;
    hints.ai_socktype = SOCK_STREAM;
    addrinfo* res = nullptr;
    if (::getaddrinfo(host.c_str(), port.c_str(), &hints, &res) != 0 || res == nullptr) {
        fail();
        return id;
    }
    const int fd = ::socket(res->ai_family, res->ai_socktype, res->ai_protocol);
    if (fd < 0) {
        ::freeaddrinfo(res);
        fail();
        return id;
    }
    set_nonblocking(fd);
    set_nodelay(fd);
    const int rc = ::connect(fd, res->ai_addr, res->ai_addrlen);
    ::freeaddrinfo(res);
    if (rc != 0 && errno != EINPROGRESS) {
        ::close(fd);
        fail();
        return id;
    }
    Conn c;
    c.fd = fd;
    c.connecting = true;
    conns_.emplace(id, std::move(c));
    return id;
}

void EventLoop::send(ConnId id, std::string frame)
{
    auto it = conns_.find(id);
    if (it == conns_.end() || it->second.closing)
        return;
    it->second.out += frame;
    if (!it->second.connecting)
        flush(id);
}

void EventLoop::close(ConnId id)
{
    auto it = conns_.find(id);
    if (it == conns_.end())
        return;
    it->second.closing = true;
    if (it->second.out.empty() || it->second.connecting)
        drop(id, false);
}

void EventLoop::drop(ConnId id, bool notify)
{
    auto it = conns_.find(id);
    if (it == conns_.end())
        return;
    ::close(it->second.fd);
    conns_.erase(it);
    if (notify)
        node_.on_closed(*this, id);
}

void EventLoop::flush(ConnId id)
{
    auto it = conns_.find(id);
    if (it == conns_.end())
        return;
    Conn& c = it->second;
    while (!c.out.empty()) {
        const ssize_t n = ::send(c.fd, c.out.data(), c.out.size(), MSG_NOSIGNAL);
        if (n > 0) {
            c.out.erase(0, static_cast<std::size_t>(n));
            continue;
        }
        if (n < 0 && (errno == EAGAIN || errno == EWOULDBLOCK))
            return;
        drop(id, !c.closing);
        return;
    }
    if (c.closing)
        drop(id, false);
}

void EventLoop::read_from(ConnId id)
{
    char buf[16384];
    for (;;) {
        auto it = conns_.find(id);
        if (it == conns_.end())
            return;
        const ssize_t n = ::recv(it->second.fd, buf, sizeof buf, 0);
        if (n > 0) {
            it->second.in.feed(std::string_view(buf, static_cast<std::size_t>(n)));
            for (;;) {
                auto cit = conns_.find(id);
                if (cit == conns_.end() || cit->second.closing)
                    return;
                auto frame = cit->second.in.next_frame();
                if (!frame) {
                    if (cit->second.in.overflowed())
                        drop(id, true);
                    break;
                }
                node_.on_frame(*this, id, *frame);
            }
            continue;
        }
        if (n < 0 && (errno == EAGAIN || errno == EWOULDBLOCK))
            return;
        drop(id, !it->second.closing);
        return;
    }
}

void EventLoop::start_once()
{
    if (started_)
        return;
    started_ = true;
    guarded([this] { node_.on_start(*this); });
}

void EventLoop::poll_once(int max_wait_ms)
{
    int wait = max_wait_ms;
    guarded([&] {
        if (!deferred_.empty()) {
            wait = 0;
            return;
        }
        if (auto wake = node_.next_wakeup()) {
            const TimeMs delta = *wake - now();
            wait = static_cast<int>(std::clamp<TimeMs>(delta, 0, max_wait_ms));
        }
    });

    std::vector<pollfd> fds;
    std::vector<ConnId> ids;
    for (int fd : listeners_) {
        fds.push_back(pollfd{fd, POLLIN, 0});
        ids.push_back(0);
    }
    for (const auto& [id, c] : conns_) {
        short events = c.connecting ? POLLOUT : POLLIN;
        if (!c.out.empty())
            events |= POLLOUT;
        fds.push_back(pollfd{c.fd, events, 0});
        ids.push_back(id);
    }
    ::poll(fds.data(), fds.size(), wait);

    guarded([&] {
        for (std::size_t i = 0; i < fds.size(); ++i) {
            const short re = fds[i].revents;
            if (re == 0)
                continue;
            if (ids[i] == 0) {
                for (;;) {
                    const int cfd = ::accept(fds[i].fd, nullptr, nullptr);
                    if (cfd < 0)
                        break;
                    set_nonblocking(cfd);
                    set_nodelay(cfd);
                    const ConnId id = next_conn_++;
                    Conn c;
                    c.fd = cfd;
                    c.inbound = true;
                    conns_.emplace(id, std::move(c));
                    node_.on_connected(*this, id, true);
                }
                continue;
            }
            const ConnId id = ids[i];
            auto it = conns_.find(id);
            if (it == conns_.end() || it->second.fd != fds[i].fd)
                continue;
            if (it->second.connecting) {
                int err = 0;
                socklen_t len = sizeof err;
                ::getsockopt(it->second.fd, SOL_SOCKET, SO_ERROR, &err, &len);
                if (err != 0) {
                    ::close(it->second.fd);
                    conns_.erase(it);
                    node_.on_connect_failed(*this, id);
                    continue;
                }
                it->second.connecting = false;
                const bool closing = it->second.closing;
                if (closing) {
                    drop(id, false);
                    continue;
                }
                node_.on_connected(*this, id, false);
                flush(id);
                continue;
            }
            if (re & POLLOUT)
                flush(id);
            if (re & (POLLIN | POLLHUP | POLLERR))
                read_from(id);
        }

        while (!deferred_.empty()) {
            auto fn = std::move(deferred_.front());
            deferred_.pop_front();
            fn();
        }
        if (auto wake = node_.next_wakeup(); wake && *wake <= now())
            node_.on_tick(*this);
    });
}

void EventLoop::run()
{
    start_once();
    while (!stop_)
        poll_once(50);
}

bool EventLoop::run_until(const std::function<bool()>& done, TimeMs max_ms)
{
    start_once();
    const TimeMs deadline = now() + max_ms;
    while (!stop_) {
        bool finished = false;
        guarded([&] { finished = done(); });
        if (finished)
            return true;
        if (now() >= deadline)
            return false;
        poll_once(20);
    }
    return false;
}

ControlOutcome run_control(const ControlRequest& request, const std::string& identity)
{
    ControlClient client(identity);
    EventLoop loop(client);
    std::uint64_t id = 0;
    bool started = false;
    loop.run_until(
        [&] {
            if (!started) {
                id = client.start(loop, request);
                started = true;
            }
            return client.finished().count(id) != 0;
        },
        request.timeout_ms + 1000);
    auto it = client.finished().find(id);
    if (it == client.finished().end())
        return ControlOutcome{ControlStatus::timeout, std::nullopt, {}};
    return it->second;
}

} // namespace dormctl
