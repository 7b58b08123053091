#include <gtest/gtest.h>

#include <random>
#include <thread>

#include <arpa/inet.h>
#include <netinet/in.h>
#include <sys/socket.h>
#include <unistd.h>

#include "messages.hpp"
#include "splitnn/error.hpp"
#include "splitnn/transport.hpp"

using namespace splitnn;
using namespace std::chrono_literals;

namespace {

Matrix two_by_three() { return Matrix::from_rows({{1, 2, 3}, {4, 5, 6}}); }

}  // namespace

TEST(Loopback, SendRecvAndCount) {
  auto [client, server] = loopback_pair(Precision::f32);
  const Message m = ActivationUp{0, 0, two_by_three()};
  client->send(m);
  EXPECT_EQ(server->recv(), m);
  EXPECT_EQ(client->counts().bytes_up, 52u);
  EXPECT_EQ(client->counts().frames_up, 1u);
  EXPECT_EQ(server->counts().bytes_up, 52u);
  EXPECT_EQ(server->counts().bytes_down, 0u);
}

TEST(Loopback, RecvTimesOut) {
  auto [client, server] = loopback_pair(Precision::f64, 10ms);
  const auto start = std::chrono::steady_clock::now();
  EXPECT_THROW(server->recv(), TimeoutError);
  EXPECT_GE(std::chrono::steady_clock::now() - start, 10ms);
  EXPECT_THROW(server->recv(10ms), TransportError);
}

TEST(Loopback, ThousandMessagesInOrderWithExactCounts) {
  auto [client, server] = loopback_pair(Precision::f64);
  std::mt19937_64 rng(77);
  std::vector<Message> sent;
  std::uint64_t expected = 0;
  for (BatchId i = 0; i < 1000; ++i) {
    Message m = testgen::random_message(rng, i);
    // Control frames from the client side only; keeps direction realistic.
    expected += encode_frame(m, Precision::f64).size();
    sent.push_back(m);
  }
  std::thread producer([&, c = client.get()] {
    for (const auto& m : sent) c->send(m);
  });
  for (const auto& m : sent) EXPECT_EQ(server->recv(), m);
  producer.join();
  EXPECT_EQ(client->counts().bytes_up, expected);
  EXPECT_EQ(server->counts().bytes_up, expected);
  EXPECT_EQ(client->counts().frames_up, 1000u);
}

TEST(Loopback, ClosedPeerIsTransportError) {
  auto [client, server] = loopback_pair(Precision::f64, 1s);
  client->send(EpochEnd{0});
  client->close();
  EXPECT_EQ(server->recv(), Message(EpochEnd{0}));
  EXPECT_THROW(server->recv(), TransportError);
  EXPECT_THROW(client->send(EpochEnd{0}), TransportError);
}

TEST(Endpoint, RejectsNonIncreasingBatchIds) {
  auto [client, server] = loopback_pair(Precision::f64, 1s);
  client->send(ActivationUp{0, 5, two_by_three()});
  client->send(ActivationUp{0, 5, two_by_three()});
  EXPECT_NO_THROW(server->recv());
  EXPECT_THROW(server->recv(), ProtocolError);
}

TEST(Endpoint, TapSeesEveryFrame) {
  auto [client, server] = loopback_pair(Precision::f32);
  std::vector<std::pair<Direction, std::size_t>> seen;
  client->set_tap([&](Direction d, std::span<const std::uint8_t> f) { seen.emplace_back(d, f.size()); });
  client->send(ActivationUp{0, 0, two_by_three()});
  server->send(OutputDown{0, 0, two_by_three()});
  client->recv();
  ASSERT_EQ(seen.size(), 2u);
  EXPECT_EQ(seen[0], std::make_pair(Direction::sent, std::size_t{52}));
  EXPECT_EQ(seen[1], std::make_pair(Direction::received, std::size_t{52}));
}

TEST(SocketAddress, Parse) {
  auto a = SocketAddress::parse("10.0.0.1:99");
  EXPECT_EQ(a.host, "10.0.0.1");
  EXPECT_EQ(a.port, 99);
  EXPECT_EQ(SocketAddress::parse(":5").host, "127.0.0.1");
  EXPECT_EQ(SocketAddress::parse("localhost").port, kDefaultPort);
  EXPECT_THROW(SocketAddress::parse("h:99999"), ConfigError);
  EXPECT_THROW(SocketAddress::parse("h:x"), ConfigError);
}

TEST(Tcp, PrefixCountedAsFourBytesPerFrame) {
  auto [client, server] = tcp_loopback_pair(Precision::f32, 5s);
  client->send(ActivationUp{0, 0, two_by_three()});
  EXPECT_EQ(server->recv(), Message(ActivationUp{0, 0, two_by_three()}));
  server->send(EpochEnd{0});
  EXPECT_EQ(client->recv(), Message(EpochEnd{0}));
  EXPECT_EQ(client->counts().bytes_up, 52u + kTcpPrefixBytes);
  EXPECT_EQ(client->counts().bytes_down, 28u + kTcpPrefixBytes);
  EXPECT_EQ(server->counts().bytes_total(), client->counts().bytes_total());
}

TEST(Tcp, LargeFramesSurvivePartialReads) {
  auto [client, server] = tcp_loopback_pair(Precision::f64, 5s);
  std::mt19937_64 rng(3);
  std::vector<Message> sent;
  for (BatchId i = 0; i < 20; ++i) sent.push_back(GradientUp{1, i, testgen::random_matrix(rng, 400)});
  std::thread producer([&, c = client.get()] {
    for (const auto& m : sent) c->send(m);
  });
  for (const auto& m : sent) EXPECT_EQ(server->recv(), m);
  producer.join();
}

TEST(Tcp, TimeoutAndPeerClose) {
  auto [client, server] = tcp_loopback_pair(Precision::f64, 20ms);
  EXPECT_THROW(server->recv(), TimeoutError);
  client->close();
  EXPECT_THROW(server->recv(1s), TransportError);
}

TEST(Tcp, ConnectRefusedAfterTimeout) {
  // Grab an ephemeral port, then release it so nothing listens there.
  std::uint16_t port;
  {
    TcpListener l(SocketAddress{"127.0.0.1", 0});
    port = l.port();
  }
  EXPECT_THROW(tcp_connect(SocketAddress{"127.0.0.1", port}, Role::client, Precision::f64, 100ms),
               TransportError);
}

TEST(Tcp, CorruptFrameOnTheWireIsProtocolError) {
  TcpListener l(SocketAddress{"127.0.0.1", 0});
  Bytes bad = encode_frame(EpochEnd{0}, Precision::f64);
  bad[1] = 'Q';
  std::thread t([&] {
    const int fd = ::socket(AF_INET, SOCK_STREAM, 0);
    sockaddr_in sa{};
    sa.sin_family = AF_INET;
    sa.sin_port = htons(l.port());
    sa.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
    ASSERT_EQ(::connect(fd, reinterpret_cast<sockaddr*>(&sa), sizeof sa), 0);
    const std::uint32_t len = static_cast<std::uint32_t>(bad.size());
    const std::uint8_t prefix[4] = {static_cast<std::uint8_t>(len), static_cast<std::uint8_t>(len >> 8),
                                    static_cast<std::uint8_t>(len >> 16),
                                    static_cast<std::uint8_t>(len >> 24)};
    ASSERT_EQ(::write(fd, prefix, 4), 4);
    ASSERT_EQ(::write(fd, bad.data(), bad.size()), static_cast<ssize_t>(bad.size()));
    std::this_thread::sleep_for(50ms);
    ::close(fd);
  });
  auto s = l.accept(Role::server, Precision::f64, 1s);
  EXPECT_THROW(s->recv(), ProtocolError);
  t.join();
}

TEST(Tcp, OversizedLengthPrefixRejected) {
  TcpListener l(SocketAddress{"127.0.0.1", 0});
  std::thread t([&] {
    const int fd = ::socket(AF_INET, SOCK_STREAM, 0);
    sockaddr_in sa{};
    sa.sin_family = AF_INET;
    sa.sin_port = htons(l.port());
    sa.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
    ASSERT_EQ(::connect(fd, reinterpret_cast<sockaddr*>(&sa), sizeof sa), 0);
    const std::uint8_t prefix[4] = {0xff, 0xff, 0xff, 0xff};
    ASSERT_EQ(::write(fd, prefix, 4), 4);
    std::this_thread::sleep_for(50ms);
    ::close(fd);
  });
  auto s = l.accept(Role::server, Precision::f64, 1s);
  EXPECT_THROW(s->recv(), FramingError);
  t.join();
}
