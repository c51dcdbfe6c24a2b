#include "r2r/engine/server.hpp"

#include <boost/asio.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/websocket.hpp>

#include <atomic>
#include <deque>
#include <thread>

namespace r2r::engine {

namespace beast = boost::beast;
namespace websocket = beast::websocket;
namespace net = boost::asio;
using tcp = net::ip::tcp;

namespace {

struct Counters {
    std::atomic<std::size_t> active{0};
    std::atomic<std::size_t> total{0};
};

class Connection : public std::enable_shared_from_this<Connection> {
public:
    Connection(tcp::socket socket, const model::ReactionPolicy& policy, const ServerOptions& options,
               std::shared_ptr<Counters> counters)
        : ws_(std::move(socket)),
          session_(policy, options.session),
          idle_(options.idle_timeout),
          counters_(std::move(counters)) {}

    ~Connection() {
        if (accepted_) --counters_->active;
    }

    void run() {
        net::dispatch(ws_.get_executor(), beast::bind_front_handler(&Connection::on_run, shared_from_this()));
    }

private:
    void on_run() {
        auto timeout = websocket::stream_base::timeout::suggested(beast::role_type::server);
        timeout.idle_timeout = idle_;
        timeout.keep_alive_pings = true;
        ws_.set_option(timeout);
        ws_.async_accept(beast::bind_front_handler(&Connection::on_accept, shared_from_this()));
    }

    void on_accept(beast::error_code ec) {
        if (ec) return;
        accepted_ = true;
        ++counters_->active;
        ++counters_->total;
        for (const auto& m : session_.open()) send(m.dump());
        read();
    }

    void read() {
        ws_.async_read(buffer_, beast::bind_front_handler(&Connection::on_read, shared_from_this()));
    }

    void on_read(beast::error_code ec, std::size_t) {
        if (ec) return;  // closed, timed out or broken; dropping the last reference frees the session
        const std::string text = beast::buffers_to_string(buffer_.data());
        buffer_.consume(buffer_.size());
        for (auto& reply : session_.handle_text(text)) send(std::move(reply));
        read();
    }

    void send(std::string message) {
        outbox_.push_back(std::move(message));
        if (outbox_.size() == 1) write();
    }

    void write() {
        ws_.text(true);
        ws_.async_write(net::buffer(outbox_.front()),
                        beast::bind_front_handler(&Connection::on_write, shared_from_this()));
    }

    void on_write(beast::error_code ec, std::size_t) {
        if (ec) return;
        outbox_.pop_front();
        if (!outbox_.empty()) write();
    }

    websocket::stream<beast::tcp_stream> ws_;
    beast::flat_buffer buffer_;
    std::deque<std::string> outbox_;
    StreamSession session_;
    std::chrono::seconds idle_;
    std::shared_ptr<Counters> counters_;
    bool accepted_ = false;
};

}  // namespace

struct StreamServer::Impl {
    const model::ReactionPolicy* policy;
    ServerOptions options;
    std::shared_ptr<Counters> counters = std::make_shared<Counters>();
    net::io_context ioc{1};
    tcp::acceptor acceptor{ioc};
    std::optional<net::signal_set> signals;
    std::thread thread;

    void accept() {
        acceptor.async_accept(net::make_strand(ioc), [this](beast::error_code ec, tcp::socket socket) {
            if (ec) return;
            std::make_shared<Connection>(std::move(socket), *policy, options, counters)->run();
            accept();
        });
    }
};

StreamServer::StreamServer(const model::ReactionPolicy& policy, ServerOptions options)
    : impl_(std::make_unique<Impl>()) {
    impl_->policy = &policy;
    impl_->options = std::move(options);
}

StreamServer::~StreamServer() { stop(); }

unsigned short StreamServer::start() {
    auto& s = *impl_;
    const tcp::endpoint endpoint(net::ip::make_address(s.options.host), s.options.port);
    s.acceptor.open(endpoint.protocol());
    s.acceptor.set_option(net::socket_base::reuse_address(true));
    s.acceptor.bind(endpoint);
    s.acceptor.listen(net::socket_base::max_listen_connections);
    s.accept();
    s.thread = std::thread([&s] { s.ioc.run(); });
    return s.acceptor.local_endpoint().port();
}

void StreamServer::stop_on_signals() {
    auto& s = *impl_;
    s.signals.emplace(s.ioc, SIGINT, SIGTERM);
    s.signals->async_wait([&s](beast::error_code, int) { s.ioc.stop(); });
}

void StreamServer::wait() {
    if (impl_->thread.joinable()) impl_->thread.join();
}

void StreamServer::stop() {
    if (!impl_) return;
    impl_->ioc.stop();
    wait();
}

std::size_t StreamServer::active_sessions() const { return impl_->counters->active; }
std::size_t StreamServer::total_sessions() const { return impl_->counters->total; }

}  // namespace r2r::engine
