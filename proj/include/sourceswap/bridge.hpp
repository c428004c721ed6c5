#pragma once

#include <chrono>
#include <cstdint>
#include <functional>
#include <memory>
#include <mutex>
#include <string>
#include <utility>

#include "sourceswap/codec.hpp"
#include "sourceswap/ddim.hpp"
#include "sourceswap/wire.hpp"

namespace sourceswap::bridge {

using Clock = std::chrono::steady_clock;
using Millis = std::chrono::milliseconds;

/// Blocking byte transport with per-read deadlines.
class ByteStream {
public:
    virtual ~ByteStream() = default;
    virtual void write_all(std::span<const std::uint8_t> bytes) = 0;
    /// Fills `out` completely or throws (ProtocolError on EOF or timeout).
    virtual void read_exact(std::span<std::uint8_t> out, Millis timeout) = 0;
    /// Half-closes the write side, if the transport supports it.
    virtual void shutdown_write() {}
};

/// POSIX file descriptors (socket, pipe pair). Owns and closes them.
class FdStream final : public ByteStream {
public:
    FdStream(int read_fd, int write_fd);
    explicit FdStream(int socket_fd) : FdStream(socket_fd, socket_fd) {}
    ~FdStream() override;
    FdStream(const FdStream&) = delete;
    FdStream& operator=(const FdStream&) = delete;

    void write_all(std::span<const std::uint8_t> bytes) override;
    void read_exact(std::span<std::uint8_t> out, Millis timeout) override;
    void shutdown_write() override;

private:
    int read_fd_;
    int write_fd_;
};

std::unique_ptr<ByteStream> connect_unix(const std::string& path);
std::unique_ptr<ByteStream> connect_tcp(const std::string& host, std::uint16_t port);
/// "unix:/path/to.sock" or "tcp:host:port".
std::unique_ptr<ByteStream> connect_address(const std::string& address);
/// Two connected in-process endpoints.
std::pair<std::unique_ptr<ByteStream>, std::unique_ptr<ByteStream>> socket_pair();

enum Capability : std::uint32_t {
    kCapDenoise = 1u << 0,
    kCapEncode = 1u << 1,
    kCapDecode = 1u << 2,
    kCapMetric = 1u << 3,
};

/// Parsed HELLO_ACK blob: {"caps": [...], "latent_channels": int, "scale": int}.
struct Capabilities {
    std::uint32_t mask = 0;
    int latent_channels = 0;
    int scale = 0;
    std::string blob;

    bool has(Capability c) const noexcept { return (mask & c) != 0; }
    static Capabilities parse(const std::string& json_blob);
    std::string to_json() const;
};

/// The peer answered with an ERROR frame.
class RemoteError : public ProtocolError {
public:
    using ProtocolError::ProtocolError;
};

struct SessionOptions {
    Millis timeout = std::chrono::seconds(120);
    /// Largest response payload this client will buffer.
    std::uint64_t max_payload = std::uint64_t{1} << 30;
};

/// One client connection. Requests are strictly serial: the mutex keeps a
/// single request in flight even if several threads share the session. Any
/// framing error poisons the session for good.
class BridgeSession {
public:
    explicit BridgeSession(std::unique_ptr<ByteStream> stream, SessionOptions options = {});

    /// HELLO / HELLO_ACK exchange. Must precede every other request.
    const Capabilities& handshake(const std::string& client_blob = "{}");
    bool ready() const noexcept { return handshaken_; }
    bool poisoned() const noexcept { return poisoned_; }
    const Capabilities& capabilities() const noexcept { return caps_; }

    /// Sends one request and waits for the reply of the expected type.
    wire::Bytes request(wire::MsgType type, std::span<const std::uint8_t> payload,
                        wire::MsgType expected);

    LatentGrid denoise(const LatentGrid& z, std::uint32_t t, ConditioningRef cond);
    LatentGrid encode(const Image& image);
    Image decode(const LatentGrid& latent);
    double metric(const std::string& metric_id, const Image& a, const Image& b,
                  const BinaryMask& region);

private:
    wire::WireMessage exchange(const wire::WireMessage& msg);
    void require(Capability cap, const char* what) const;

    std::unique_ptr<ByteStream> stream_;
    SessionOptions options_;
    Capabilities caps_;
    bool handshaken_ = false;
    bool poisoned_ = false;
    std::uint64_t bytes_read_ = 0;
    std::mutex mutex_;
};

/// Denoiser backed by a session; sends the training timestep of each step.
class RemoteDenoiser final : public Denoiser {
public:
    explicit RemoteDenoiser(std::shared_ptr<BridgeSession> session);
    LatentGrid predict(const LatentGrid& z, const Timestep& t, ConditioningRef cond) override;
    std::string id() const override { return "bridge"; }

private:
    std::shared_ptr<BridgeSession> session_;
};

class RemoteCodec final : public LatentCodec {
public:
    explicit RemoteCodec(std::shared_ptr<BridgeSession> session);
    LatentGrid encode(const Image& image) override;
    Image decode(const LatentGrid& latent) override;
    std::string id() const override { return "bridge"; }
    std::size_t scale() const override;
    std::size_t channels() const override;

private:
    std::shared_ptr<BridgeSession> session_;
};

// --- loopback server --------------------------------------------------------

/// Maps one request to one reply. Throwing produces an ERROR reply.
using RequestHandler = std::function<wire::WireMessage(const wire::WireMessage&)>;

/// Serves one connection until EOF. Malformed frames get an ERROR reply and
/// end the connection; handler exceptions get an ERROR reply and the loop
/// continues. Returns the number of requests answered.
std::size_t serve_connection(ByteStream& stream, const Capabilities& caps,
                             const RequestHandler& handler, Millis idle_timeout = Millis(5000));

/// Handler that returns every request tensor unchanged (DENOISE, ENCODE,
/// DECODE) and answers METRIC with mean squared error over the region.
RequestHandler echo_handler();

/// Handler for DENOISE that returns a tensor of the wrong shape.
RequestHandler shape_mangling_handler();

}  // namespace sourceswap::bridge
