#include "mvopt/net.hpp"

#include <arpa/inet.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>
#include <stdexcept>

namespace mvopt::net {

namespace {

[[noreturn]] void fail(const std::string& what) {
    throw std::runtime_error(what + ": " + std::strerror(errno));
}

sockaddr_in loopback_addr(const std::string& host, int port) {
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_port = htons(static_cast<uint16_t>(port));
    if (inet_pton(AF_INET, host.c_str(), &addr.sin_addr) != 1)
        throw std::runtime_error("bad IPv4 address '" + host + "'");
    return addr;
}

}  // namespace

TcpStream::TcpStream(int fd) : fd_(fd) {
    const int one = 1;
    ::setsockopt(fd_, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
}

TcpStream::~TcpStream() {
    if (fd_ >= 0) ::close(fd_);
}

std::optional<std::string> TcpStream::read_line() {
    for (;;) {
        const auto nl = buffer_.find('\n');
        if (nl != std::string::npos) {
            std::string line = buffer_.substr(0, nl);
            buffer_.erase(0, nl + 1);
            if (!line.empty() && line.back() == '\r') line.pop_back();
            return line;
        }
        if (eof_) {
            if (buffer_.empty()) return std::nullopt;
            std::string line = std::move(buffer_);  // unterminated tail
            buffer_.clear();
            if (!line.empty() && line.back() == '\r') line.pop_back();
            return line;
        }
        char chunk[4096];
        const ssize_t got = ::recv(fd_, chunk, sizeof chunk, 0);
        if (got < 0) {
            if (errno == EINTR) continue;
            eof_ = true;
            continue;
        }
        if (got == 0) {
            eof_ = true;
            continue;
        }
        buffer_.append(chunk, static_cast<size_t>(got));
    }
}

bool TcpStream::write_line(std::string_view line) {
    std::string framed(line);
    framed.push_back('\n');
    size_t sent = 0;
    while (sent < framed.size()) {
        const ssize_t n = ::send(fd_, framed.data() + sent, framed.size() - sent, MSG_NOSIGNAL);
        if (n < 0) {
            if (errno == EINTR) continue;
            return false;
        }
        sent += static_cast<size_t>(n);
    }
    return true;
}

std::unique_ptr<TcpStream> tcp_connect(const std::string& host, int port) {
    const int fd = ::socket(AF_INET, SOCK_STREAM, 0);
    if (fd < 0) fail("socket");
    const sockaddr_in addr = loopback_addr(host, port);
    if (::connect(fd, reinterpret_cast<const sockaddr*>(&addr), sizeof addr) != 0) {
        const int saved = errno;
        ::close(fd);
        errno = saved;
        fail("connect to " + host);
    }
    return std::make_unique<TcpStream>(fd);
}

TcpListener::TcpListener(int port) : fd_(::socket(AF_INET, SOCK_STREAM, 0)), port_(port) {
    if (fd_ < 0) fail("socket");
    const int one = 1;
    ::setsockopt(fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
    sockaddr_in addr = loopback_addr("127.0.0.1", port);
    if (::bind(fd_, reinterpret_cast<const sockaddr*>(&addr), sizeof addr) != 0) fail("bind");
    if (::listen(fd_, 1) != 0) fail("listen");
    socklen_t len = sizeof addr;
    if (::getsockname(fd_, reinterpret_cast<sockaddr*>(&addr), &len) != 0) fail("getsockname");
    port_ = ntohs(addr.sin_port);
}

TcpListener::~TcpListener() {
    if (fd_ >= 0) ::close(fd_);
}

std::unique_ptr<TcpStream> TcpListener::accept(int timeout_ms) {
    if (timeout_ms >= 0) {
        pollfd pfd{fd_, POLLIN, 0};
        for (;;) {
            const int r = ::poll(&pfd, 1, timeout_ms);
            if (r > 0) break;
            if (r == 0) throw std::runtime_error("accept timed out");
            if (errno != EINTR) fail("poll");
        }
    }
    for (;;) {
        const int client = ::accept(fd_, nullptr, nullptr);
        if (client >= 0) return std::make_unique<TcpStream>(client);
        if (errno != EINTR) fail("accept");
    }
}

}  // namespace mvopt::net
