#pragma once

#include <arpa/inet.h>
#include <fcntl.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <chrono>
#include <cstdint>
#include <cstring>
#include <memory>
#include <mutex>
#include <string>
#include <string_view>
#include <thread>
#include <utility>

#include "coinflip/error.hpp"

namespace coinflip {

/// Ordered, reliable, newline-delimited record stream.
class Channel {
  public:
    virtual ~Channel() = default;
    virtual void send_line(std::string_view line) = 0;
    /// Next line without its newline. Throws ChannelError on EOF or I/O error and
    /// Timeout (seq 0) when nothing complete arrives in time.
    virtual std::string recv_line(std::chrono::milliseconds timeout) = 0;
};

class UniqueFd {
  public:
    UniqueFd() = default;
    explicit UniqueFd(int fd) noexcept : fd_(fd) {}
    UniqueFd(UniqueFd&& o) noexcept : fd_(std::exchange(o.fd_, -1)) {}
    UniqueFd& operator=(UniqueFd&& o) noexcept {
        if (this != &o) {
            reset();
            fd_ = std::exchange(o.fd_, -1);
        }
        return *this;
    }
    UniqueFd(const UniqueFd&) = delete;
    UniqueFd& operator=(const UniqueFd&) = delete;
    ~UniqueFd() { reset(); }

    int get() const noexcept { return fd_; }
    explicit operator bool() const noexcept { return fd_ >= 0; }
    void reset() noexcept {
        if (fd_ >= 0) ::close(fd_);
        fd_ = -1;
    }

  private:
    int fd_ = -1;
};

inline std::string errno_text(const char* what) {
    return std::string(what) + ": " + std::strerror(errno);
}

/// Channel over a connected stream socket. send_line may be called from several
/// threads; recv_line from one.
class FdChannel final : public Channel {
  public:
    explicit FdChannel(UniqueFd fd) : fd_(std::move(fd)) {}

    void send_line(std::string_view line) override {
        std::string buf(line);
        buf += '\n';
        std::lock_guard lock(*write_mu_);
        const char* p = buf.data();
        std::size_t left = buf.size();
        while (left > 0) {
            ssize_t n = ::send(fd_.get(), p, left, MSG_NOSIGNAL);
            if (n < 0) {
                if (errno == EINTR) continue;
                throw ChannelError(errno_text("send"));
            }
            p += n;
            left -= static_cast<std::size_t>(n);
        }
    }

    std::string recv_line(std::chrono::milliseconds timeout) override {
        const auto deadline = std::chrono::steady_clock::now() + timeout;
        for (;;) {
            if (auto nl = buffer_.find('\n'); nl != std::string::npos) {
                std::string line = buffer_.substr(0, nl);
                buffer_.erase(0, nl + 1);
                return line;
            }
            if (eof_) throw ChannelError("connection closed by peer");
            auto left = std::chrono::duration_cast<std::chrono::milliseconds>(
                deadline - std::chrono::steady_clock::now());
            if (left.count() <= 0) throw Timeout("no record before timeout", 0);
            pollfd pfd{fd_.get(), POLLIN, 0};
            int r = ::poll(&pfd, 1, static_cast<int>(left.count()));
            if (r < 0) {
                if (errno == EINTR) continue;
                throw ChannelError(errno_text("poll"));
            }
            if (r == 0) continue;
            char chunk[4096];
            ssize_t n = ::recv(fd_.get(), chunk, sizeof chunk, 0);
            if (n < 0) {
                if (errno == EINTR || errno == EAGAIN) continue;
                throw ChannelError(errno_text("recv"));
            }
            if (n == 0) eof_ = true;
            buffer_.append(chunk, static_cast<std::size_t>(n));
        }
    }

    /// Half-closes the write side so the peer sees EOF after draining.
    void shutdown_write() noexcept { ::shutdown(fd_.get(), SHUT_WR); }

  private:
    UniqueFd fd_;
    std::unique_ptr<std::mutex> write_mu_ = std::make_unique<std::mutex>();
    std::string buffer_;
    bool eof_ = false;
};

/// A connected in-process pair (AF_UNIX stream).
inline std::pair<FdChannel, FdChannel> socket_pair() {
    int fds[2];
    if (::socketpair(AF_UNIX, SOCK_STREAM, 0, fds) != 0) throw ChannelError(errno_text("socketpair"));
    return {FdChannel(UniqueFd(fds[0])), FdChannel(UniqueFd(fds[1]))};
}

struct Address {
    std::string host = "127.0.0.1";
    std::uint16_t port = 0;

    /// "host:port".
    static Address parse(std::string_view s) {
        auto colon = s.rfind(':');
        if (colon == std::string_view::npos || colon + 1 == s.size())
            throw DomainError("address must be host:port, got '" + std::string(s) + "'");
        Address a;
        a.host = std::string(s.substr(0, colon));
        unsigned long port = 0;
        for (char c : s.substr(colon + 1)) {
            if (c < '0' || c > '9') throw DomainError("bad port in '" + std::string(s) + "'");
            port = port * 10 + static_cast<unsigned long>(c - '0');
            if (port > 65535) throw DomainError("port out of range in '" + std::string(s) + "'");
        }
        a.port = static_cast<std::uint16_t>(port);
        return a;
    }
    std::string str() const { return host + ":" + std::to_string(port); }
};

namespace detail {

inline void set_nodelay(int fd) {
    int one = 1;
    ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
}

inline sockaddr_in resolve_v4(const Address& a) {
    addrinfo hints{};
    hints.ai_family = AF_INET;
    hints.ai_socktype = SOCK_STREAM;
    addrinfo* res = nullptr;
    if (int rc = ::getaddrinfo(a.host.c_str(), nullptr, &hints, &res); rc != 0)
        throw ChannelError("cannot resolve '" + a.host + "': " + ::gai_strerror(rc));
    sockaddr_in sin{};
    std::memcpy(&sin, res->ai_addr, sizeof sin);
    ::freeaddrinfo(res);
    sin.sin_port = htons(a.port);
    return sin;
}

} // namespace detail

/// IPv4 TCP listener. Port 0 binds an ephemeral port; see address().
class TcpListener {
  public:
    explicit TcpListener(const Address& bind_to) {
        fd_ = UniqueFd(::socket(AF_INET, SOCK_STREAM, 0));
        if (!fd_) throw ChannelError(errno_text("socket"));
        int one = 1;
        ::setsockopt(fd_.get(), SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
        sockaddr_in sin = detail::resolve_v4(bind_to);
        if (::bind(fd_.get(), reinterpret_cast<sockaddr*>(&sin), sizeof sin) != 0)
            throw ChannelError(errno_text(("bind " + bind_to.str()).c_str()));
        if (::listen(fd_.get(), 64) != 0) throw ChannelError(errno_text("listen"));
        socklen_t len = sizeof sin;
        ::getsockname(fd_.get(), reinterpret_cast<sockaddr*>(&sin), &len);
        address_ = Address{bind_to.host, ntohs(sin.sin_port)};
    }

    const Address& address() const noexcept { return address_; }

    FdChannel accept(std::chrono::milliseconds timeout) {
        pollfd pfd{fd_.get(), POLLIN, 0};
        int r;
        do {
            r = ::poll(&pfd, 1, static_cast<int>(timeout.count()));
        } while (r < 0 && errno == EINTR);
        if (r < 0) throw ChannelError(errno_text("poll"));
        if (r == 0) throw Timeout("no connection before timeout", 0);
        UniqueFd c(::accept(fd_.get(), nullptr, nullptr));
        if (!c) throw ChannelError(errno_text("accept"));
        detail::set_nodelay(c.get());
        return FdChannel(std::move(c));
    }

  private:
    UniqueFd fd_;
    Address address_;
};

/// Connects, retrying refused connections until the timeout (lets peers start in any order).
inline FdChannel tcp_connect(const Address& to, std::chrono::milliseconds timeout) {
    const auto deadline = std::chrono::steady_clock::now() + timeout;
    sockaddr_in sin = detail::resolve_v4(to);
    for (;;) {
        UniqueFd fd(::socket(AF_INET, SOCK_STREAM, 0));
        if (!fd) throw ChannelError(errno_text("socket"));
        if (::connect(fd.get(), reinterpret_cast<sockaddr*>(&sin), sizeof sin) == 0) {
            detail::set_nodelay(fd.get());
            return FdChannel(std::move(fd));
        }
        if (errno != ECONNREFUSED && errno != EINTR)
            throw ChannelError(errno_text(("connect " + to.str()).c_str()));
        if (std::chrono::steady_clock::now() >= deadline)
            throw ChannelError("connect " + to.str() + ": refused until timeout");
        std::this_thread::sleep_for(std::chrono::milliseconds(20));
    }
}

} // namespace coinflip
