#pragma once

// Websocket transport for r2r-stream/1. One io thread serves every
// connection; each connection owns a StreamSession.

#include "r2r/engine/stream.hpp"

#include <chrono>
#include <memory>
#include <string>

namespace r2r::engine {

struct ServerOptions {
    std::string host = "127.0.0.1";
    unsigned short port = 0;  // 0 picks a free port
    std::chrono::seconds idle_timeout{30};
    SessionConfig session;
};

class StreamServer {
public:
    StreamServer(const model::ReactionPolicy& policy, ServerOptions options);
    ~StreamServer();
    StreamServer(const StreamServer&) = delete;
    StreamServer& operator=(const StreamServer&) = delete;

    /// Binds and starts the io thread; returns the bound port.
    unsigned short start();
    /// SIGINT / SIGTERM stop the server.
    void stop_on_signals();
    /// Blocks until the io thread exits.
    void wait();
    void stop();

    std::size_t active_sessions() const;
    std::size_t total_sessions() const;

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

}  // namespace r2r::engine
