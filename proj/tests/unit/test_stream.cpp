#include "toy_models.hpp"
#include "r2r/engine/server.hpp"
#include "r2r/engine/stream.hpp"

#include <boost/asio/connect.hpp>
#include <boost/asio/ip/tcp.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/websocket.hpp>
#include <doctest.h>

#include <thread>

using namespace r2r::engine;
using namespace r2r::testing;
using nlohmann::json;

namespace {

const ReactionPolicy& sparse_policy() {
    static const ReactionPolicy p = [] {
        auto c = small_config();
        c.sparse = true;
        return fitted_policy(c, 3);
    }();
    return p;
}

json signal_message(long frame, double x) {
    SparseSignal s;
    s.head_pos = r2r::motion::Vec3(x, 1.6, 0.0);
    s.lhand_pos = r2r::motion::Vec3(x - 0.3, 1.0, 0.2);
    s.rhand_pos = r2r::motion::Vec3(x + 0.3, 1.0, 0.2);
    return {{"type", "signal"}, {"frame", frame}, {"signal", signal_to_json(s)}};
}

std::size_t pose_count(const std::vector<json>& messages) {
    std::size_t n = 0;
    for (const auto& m : messages)
        if (m["type"] == "frames") n += m["poses"].size();
    return n;
}

std::string error_code(StreamSession& s, const std::string& text) {
    const auto out = s.handle_text(text);
    REQUIRE(out.size() == 1);
    const auto j = json::parse(out[0]);
    REQUIRE(j["type"] == "error");
    return j["code"].get<std::string>();
}

}  // namespace

TEST_CASE("signal json round trip and validation") {
    SparseSignal s;
    s.head_pos = r2r::motion::Vec3(1, 2, 3);
    s.rhand_rot6d << 1, 0, 0, 0, 0, 1;
    const auto back = signal_from_json(signal_to_json(s));
    CHECK(back.head_pos == s.head_pos);
    CHECK(back.rhand_rot6d == s.rhand_rot6d);
    auto bad = signal_to_json(s);
    bad["lhand_pos"] = json::array({1, 2});
    CHECK_THROWS_AS(signal_from_json(bad), ProtocolError);
    bad.erase("lhand_pos");
    CHECK_THROWS_AS(signal_from_json(bad), ProtocolError);
}

TEST_CASE("session opens with hello and the seed frames") {
    StreamSession s(sparse_policy(), {});
    const auto open = s.open();
    REQUIRE(open.size() == 2);
    CHECK(open[0]["type"] == "hello");
    CHECK(open[0]["protocol"] == kStreamProtocol);
    CHECK(open[0]["d"] == 4);
    CHECK(open[0]["sparse"] == true);
    CHECK(open[0]["skeleton"]["joint_count"].get<int>() > 0);
    CHECK(open[1]["type"] == "frames");
    CHECK(open[1]["poses"].size() == 4);
    CHECK(open[1]["poses"][0]["agents"].size() == 2);
    CHECK(open[1]["poses"][0]["agents"][0]["positions"].size() == open[0]["skeleton"]["joint_count"].get<std::size_t>());
}

TEST_CASE("thirty signals produce at least thirty frames") {
    StreamSession s(sparse_policy(), {});
    std::vector<json> out = s.open();
    for (long f = 0; f < 30; ++f)
        for (auto& m : s.handle(signal_message(f, 0.01 * f))) out.push_back(std::move(m));
    CHECK(pose_count(out) >= 30);
    long expected = 0;
    for (const auto& m : out) {
        if (m["type"] != "frames") continue;
        for (const auto& p : m["poses"]) {
            CHECK(p["frame"] == expected);
            ++expected;
        }
    }
    CHECK(s.frame_index() == expected);
}

TEST_CASE("signals arriving late or out of order are held") {
    StreamSession s(sparse_policy(), {});
    s.open();
    CHECK(s.handle(signal_message(2, 0.0)).empty());  // before the first generated frame
    CHECK(s.handle(signal_message(6, 0.0)).size() == 1);
    CHECK(s.handle(signal_message(5, 0.0)).empty());  // already generated
    const auto jump = s.handle(signal_message(17, 0.0));
    CHECK(pose_count(jump) == 12);
    CHECK(s.frame_index() == 20);
}

TEST_CASE("non-sparse sessions use signals as a clock") {
    auto p = fitted_policy(small_config(), 4);
    StreamSession s(p, {});
    CHECK(s.open()[0]["sparse"] == false);
    CHECK(pose_count(s.handle(signal_message(11, 0.0))) == 8);
}

TEST_CASE("protocol errors are reported with codes") {
    StreamSession s(sparse_policy(), {});
    s.open();
    CHECK(error_code(s, "{not json") == "malformed");
    CHECK(error_code(s, "[1,2]") == "malformed");
    CHECK(error_code(s, R"({"type":"dance"})") == "unknown_type");
    CHECK(error_code(s, R"({"type":"signal","frame":"x"})") == "bad_field");
    CHECK(error_code(s, R"({"type":"signal","frame":5})") == "bad_field");
    auto msg = signal_message(5, 0.0);
    msg["signal"]["head_pos"] = json::array({0, "a", 0});
    CHECK(error_code(s, msg.dump()) == "bad_field");
    CHECK(s.frame_index() == 4);
}

TEST_CASE("heartbeat echoes the client stamp and reset restarts the duel") {
    StreamSession s(sparse_policy(), {});
    const auto first = s.open();
    const auto hb = s.handle({{"type", "heartbeat"}, {"t", 123.5}});
    REQUIRE(hb.size() == 1);
    CHECK(hb[0]["t"] == 123.5);
    CHECK(hb[0].contains("server_ms"));

    const auto before = s.handle(signal_message(8, 0.0));
    CHECK(s.frame_index() == 12);
    const auto again = s.handle({{"type", "reset"}});
    CHECK(s.frame_index() == 4);
    REQUIRE(again.size() == 2);
    CHECK(again[1] == first[1]);
    CHECK(s.handle(signal_message(8, 0.0)) == before);
}

TEST_CASE("sessions are isolated") {
    StreamSession a(sparse_policy(), {});
    StreamSession b(sparse_policy(), {});
    StreamSession solo(sparse_policy(), {});
    a.open();
    b.open();
    solo.open();
    std::vector<json> from_a, from_solo;
    for (long f = 4; f < 24; ++f) {
        for (auto& m : a.handle(signal_message(f, 0.02 * f))) from_a.push_back(m);
        for (auto& m : solo.handle(signal_message(f, 0.02 * f))) from_solo.push_back(m);
        b.handle(signal_message(f, -0.05 * f));
    }
    CHECK(from_a == from_solo);
}

TEST_CASE("numeric failure resets the session") {
    auto c = small_config();
    c.sparse = true;
    ReactionPolicy p = fitted_policy(c, 5);
    auto params = p.parameters();
    params.front().second.mutable_value().setConstant(std::nan(""));
    StreamSession s(p, {});
    s.open();
    CHECK(error_code(s, signal_message(4, 0.0).dump()) == "numeric");
    CHECK(s.frame_index() == 4);
}

namespace {

namespace beast = boost::beast;
namespace websocket = beast::websocket;
namespace net = boost::asio;
using tcp = net::ip::tcp;

struct Client {
    net::io_context ioc;
    websocket::stream<tcp::socket> ws{ioc};

    explicit Client(unsigned short port) {
        tcp::resolver resolver(ioc);
        net::connect(ws.next_layer(), resolver.resolve("127.0.0.1", std::to_string(port)));
        ws.handshake("127.0.0.1", "/");
        ws.text(true);
    }
    json read() {
        beast::flat_buffer buffer;
        ws.read(buffer);
        return json::parse(beast::buffers_to_string(buffer.data()));
    }
    void send(const json& j) { ws.write(net::buffer(j.dump())); }
};

bool wait_for(const std::function<bool()>& condition) {
    for (int i = 0; i < 200; ++i) {
        if (condition()) return true;
        std::this_thread::sleep_for(std::chrono::milliseconds(10));
    }
    return condition();
}

}  // namespace

TEST_CASE("websocket loopback streams frames and frees sessions") {
    StreamServer server(sparse_policy(), {});
    const auto port = server.start();
    {
        Client one(port);
        Client two(port);
        CHECK(one.read()["type"] == "hello");
        CHECK(two.read()["type"] == "hello");
        std::size_t frames_one = one.read()["poses"].size();
        std::size_t frames_two = two.read()["poses"].size();
        CHECK(wait_for([&] { return server.active_sessions() == 2; }));

        for (long f = 0; f < 30; ++f) one.send(signal_message(f, 0.01 * f));
        for (int step = 0; step < 7; ++step) {
            const auto m = one.read();
            REQUIRE(m["type"] == "frames");
            CHECK(m["start_frame"] == 4 + 4 * step);
            frames_one += m["poses"].size();
        }
        CHECK(frames_one >= 30);

        // The second client has not advanced.
        two.send({{"type", "heartbeat"}, {"t", 1}});
        CHECK(two.read()["type"] == "heartbeat");
        two.send(signal_message(4, 0.0));
        const auto m = two.read();
        CHECK(m["start_frame"] == 4);
        frames_two += m["poses"].size();
        CHECK(frames_two == 8);

        one.ws.close(websocket::close_code::normal);
        CHECK(wait_for([&] { return server.active_sessions() == 1; }));
    }
    CHECK(wait_for([&] { return server.active_sessions() == 0; }));
    CHECK(server.total_sessions() == 2);
    server.stop();
}
