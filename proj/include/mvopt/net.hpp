#pragma once

#include <memory>
#include <string>

#include "mvopt/session.hpp"

// Minimal blocking TCP wrappers so a session can run across processes. Same
// LineStream contract as the in-memory pipe, so the protocol code cannot
// tell the transports apart.

namespace mvopt::net {

class TcpStream : public sess::LineStream {
public:
    explicit TcpStream(int fd);
    ~TcpStream() override;
    TcpStream(const TcpStream&) = delete;
    TcpStream& operator=(const TcpStream&) = delete;

    std::optional<std::string> read_line() override;
    bool write_line(std::string_view line) override;

private:
    int fd_;
    std::string buffer_;
    bool eof_ = false;
};

// Connects to host:port; throws std::runtime_error on failure.
std::unique_ptr<TcpStream> tcp_connect(const std::string& host, int port);

class TcpListener {
public:
    // Binds 127.0.0.1:port; port 0 picks a free port (read it back from
    // port()). Throws std::runtime_error on failure.
    explicit TcpListener(int port);
    ~TcpListener();
    TcpListener(const TcpListener&) = delete;
    TcpListener& operator=(const TcpListener&) = delete;

    int port() const { return port_; }
    // Blocks up to timeout_ms (forever when negative); throws on failure
    // or timeout.
    std::unique_ptr<TcpStream> accept(int timeout_ms = -1);

private:
    int fd_;
    int port_;
};

}  // namespace mvopt::net
