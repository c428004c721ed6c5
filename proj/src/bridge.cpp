#include "sourceswap/bridge.hpp"

#include <arpa/inet.h>
#include <netdb.h>
#include <poll.h>
#include <sys/socket.h>
#include <sys/un.h>
#include <unistd.h>

#include <array>
#include <cerrno>
#include <cstring>

#include <nlohmann/json.hpp>

namespace sourceswap::bridge {

namespace {

/// EOF on a frame boundary; the peer simply went away.
class StreamClosed : public ProtocolError {
public:
    using ProtocolError::ProtocolError;
};

std::string errno_text(const char* what) { return std::string(what) + ": " + std::strerror(errno); }

}  // namespace

FdStream::FdStream(int read_fd, int write_fd) : read_fd_(read_fd), write_fd_(write_fd) {
    if (read_fd < 0 || write_fd < 0) throw InvalidArgument("FdStream: invalid descriptor");
}

FdStream::~FdStream() {
    ::close(read_fd_);
    if (write_fd_ != read_fd_) ::close(write_fd_);
}

void FdStream::write_all(std::span<const std::uint8_t> bytes) {
    std::size_t done = 0;
    while (done < bytes.size()) {
        ssize_t n = ::send(write_fd_, bytes.data() + done, bytes.size() - done, MSG_NOSIGNAL);
        if (n < 0 && errno == ENOTSOCK) n = ::write(write_fd_, bytes.data() + done, bytes.size() - done);
        if (n < 0) {
            if (errno == EINTR) continue;
            throw ProtocolError(errno_text("write failed"));
        }
        done += static_cast<std::size_t>(n);
    }
}

void FdStream::read_exact(std::span<std::uint8_t> out, Millis timeout) {
    const auto deadline = Clock::now() + timeout;
    std::size_t done = 0;
    while (done < out.size()) {
        const auto left = std::chrono::duration_cast<Millis>(deadline - Clock::now());
        if (left.count() <= 0) throw ProtocolError("read timed out");
        pollfd pfd{read_fd_, POLLIN, 0};
        const int ready = ::poll(&pfd, 1, static_cast<int>(left.count()));
        if (ready < 0) {
            if (errno == EINTR) continue;
            throw ProtocolError(errno_text("poll failed"));
        }
        if (ready == 0) throw ProtocolError("read timed out");
        const ssize_t n = ::read(read_fd_, out.data() + done, out.size() - done);
        if (n < 0) {
            if (errno == EINTR || errno == EAGAIN) continue;
            throw ProtocolError(errno_text("read failed"));
        }
        if (n == 0) {
            if (done == 0) throw StreamClosed("connection closed by peer");
            throw ProtocolError("connection closed mid-message");
        }
        done += static_cast<std::size_t>(n);
    }
}

void FdStream::shutdown_write() { ::shutdown(write_fd_, SHUT_WR); }

std::unique_ptr<ByteStream> connect_unix(const std::string& path) {
    sockaddr_un addr{};
    if (path.size() >= sizeof(addr.sun_path)) throw InvalidArgument("unix socket path too long");
    addr.sun_family = AF_UNIX;
    std::memcpy(addr.sun_path, path.c_str(), path.size() + 1);
    const int fd = ::socket(AF_UNIX, SOCK_STREAM, 0);
    if (fd < 0) throw ProtocolError(errno_text("socket"));
    if (::connect(fd, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0) {
        const std::string msg = errno_text(("connect to unix:" + path).c_str());
        ::close(fd);
        throw ProtocolError(msg);
    }
    return std::make_unique<FdStream>(fd);
}

std::unique_ptr<ByteStream> connect_tcp(const std::string& host, std::uint16_t port) {
    addrinfo hints{};
    hints.ai_family = AF_UNSPEC;
    hints.ai_socktype = SOCK_STREAM;
    addrinfo* res = nullptr;
    const std::string service = std::to_string(port);
    if (const int rc = ::getaddrinfo(host.c_str(), service.c_str(), &hints, &res); rc != 0) {
        throw ProtocolError("cannot resolve " + host + ": " + ::gai_strerror(rc));
    }
    std::unique_ptr<addrinfo, decltype(&::freeaddrinfo)> guard(res, &::freeaddrinfo);
    for (addrinfo* ai = res; ai != nullptr; ai = ai->ai_next) {
        const int fd = ::socket(ai->ai_family, ai->ai_socktype, ai->ai_protocol);
        if (fd < 0) continue;
        if (::connect(fd, ai->ai_addr, ai->ai_addrlen) == 0) return std::make_unique<FdStream>(fd);
        ::close(fd);
    }
    throw ProtocolError("cannot connect to tcp:" + host + ":" + service);
}

std::unique_ptr<ByteStream> connect_address(const std::string& address) {
    if (address.starts_with("unix:")) return connect_unix(address.substr(5));
    if (address.starts_with("tcp:")) {
        const std::string rest = address.substr(4);
        const auto colon = rest.rfind(':');
        if (colon == std::string::npos) throw InvalidArgument("tcp address needs host:port");
        const int port = std::stoi(rest.substr(colon + 1));
        if (port <= 0 || port > 65535) throw InvalidArgument("tcp port out of range");
        return connect_tcp(rest.substr(0, colon), static_cast<std::uint16_t>(port));
    }
    throw InvalidArgument("backend address must start with unix: or tcp:, got '" + address + "'");
}

std::pair<std::unique_ptr<ByteStream>, std::unique_ptr<ByteStream>> socket_pair() {
    int fds[2];
    if (::socketpair(AF_UNIX, SOCK_STREAM, 0, fds) != 0) throw ProtocolError(errno_text("socketpair"));
    return {std::make_unique<FdStream>(fds[0]), std::make_unique<FdStream>(fds[1])};
}

Capabilities Capabilities::parse(const std::string& json_blob) {
    Capabilities caps;
    caps.blob = json_blob;
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(json_blob);
    } catch (const nlohmann::json::exception& e) {
        throw ProtocolError(std::string("HELLO_ACK capability blob is not JSON: ") + e.what());
    }
    if (!j.is_object() || !j.contains("caps") || !j["caps"].is_array()) {
        throw ProtocolError("HELLO_ACK capability blob lacks a \"caps\" array");
    }
    for (const auto& c : j["caps"]) {
        if (!c.is_string()) continue;
        const auto name = c.get<std::string>();
        if (name == "denoise") caps.mask |= kCapDenoise;
        else if (name == "encode") caps.mask |= kCapEncode;
        else if (name == "decode") caps.mask |= kCapDecode;
        else if (name == "metric") caps.mask |= kCapMetric;
    }
    caps.latent_channels = j.value("latent_channels", 0);
    caps.scale = j.value("scale", 0);
    return caps;
}

std::string Capabilities::to_json() const {
    nlohmann::json j;
    j["caps"] = nlohmann::json::array();
    if (has(kCapDenoise)) j["caps"].push_back("denoise");
    if (has(kCapEncode)) j["caps"].push_back("encode");
    if (has(kCapDecode)) j["caps"].push_back("decode");
    if (has(kCapMetric)) j["caps"].push_back("metric");
    j["latent_channels"] = latent_channels;
    j["scale"] = scale;
    return j.dump();
}

BridgeSession::BridgeSession(std::unique_ptr<ByteStream> stream, SessionOptions options)
    : stream_(std::move(stream)), options_(options) {
    if (!stream_) throw InvalidArgument("BridgeSession needs a stream");
}

wire::WireMessage BridgeSession::exchange(const wire::WireMessage& msg) {
    if (poisoned_) throw ProtocolError("session is poisoned by an earlier protocol failure");
    try {
        stream_->write_all(wire::frame_message(msg));
        std::array<std::uint8_t, wire::kHeaderSize> header{};
        stream_->read_exact(header, options_.timeout);
        const auto parsed = wire::parse_header(header, bytes_read_, options_.max_payload);
        bytes_read_ += header.size();
        wire::WireMessage reply{parsed.type, wire::Bytes(static_cast<std::size_t>(parsed.payload_len))};
        stream_->read_exact(reply.payload, options_.timeout);
        bytes_read_ += reply.payload.size();
        return reply;
    } catch (const ProtocolError&) {
        poisoned_ = true;
        throw;
    }
}

const Capabilities& BridgeSession::handshake(const std::string& client_blob) {
    std::lock_guard lock(mutex_);
    const auto reply = exchange({wire::MsgType::Hello, wire::text_payload(client_blob)});
    if (reply.type == wire::MsgType::Error) {
        throw RemoteError("handshake refused: " + wire::payload_text(reply.payload));
    }
    if (reply.type != wire::MsgType::HelloAck) {
        poisoned_ = true;
        throw ProtocolError("expected HELLO_ACK, got " + std::string(wire::type_name(reply.type)));
    }
    try {
        caps_ = Capabilities::parse(wire::payload_text(reply.payload));
    } catch (const ProtocolError&) {
        poisoned_ = true;
        throw;
    }
    handshaken_ = true;
    return caps_;
}

wire::Bytes BridgeSession::request(wire::MsgType type, std::span<const std::uint8_t> payload,
                                   wire::MsgType expected) {
    std::lock_guard lock(mutex_);
    if (!handshaken_) throw ProtocolError("handshake must complete before requests");
    auto reply = exchange({type, wire::Bytes(payload.begin(), payload.end())});
    if (reply.type == wire::MsgType::Error) {
        throw RemoteError("backend error: " + wire::payload_text(reply.payload));
    }
    if (reply.type != expected) {
        poisoned_ = true;
        throw ProtocolError("expected " + std::string(wire::type_name(expected)) + ", got " +
                            std::string(wire::type_name(reply.type)));
    }
    return std::move(reply.payload);
}

void BridgeSession::require(Capability cap, const char* what) const {
    if (!caps_.has(cap)) throw ProtocolError(std::string("backend does not advertise ") + what);
}

LatentGrid BridgeSession::denoise(const LatentGrid& z, std::uint32_t t, ConditioningRef cond) {
    require(kCapDenoise, "denoise");
    const auto payload = wire::denoise_request_payload(z, t, cond);
    const auto reply = request(wire::MsgType::DenoiseReq, payload, wire::MsgType::DenoiseResp);
    std::size_t offset = 0;
    const auto tensor = wire::read_tensor(reply, offset);
    LatentGrid out = wire::to_latent(tensor);
    if (!out.same_shape(z)) {
        throw ProtocolError("shape contract violation: DENOISE_RESP is " +
                            std::to_string(out.channels()) + "x" + std::to_string(out.height()) +
                            "x" + std::to_string(out.width()) + ", request was " +
                            std::to_string(z.channels()) + "x" + std::to_string(z.height()) + "x" +
                            std::to_string(z.width()));
    }
    return out;
}

LatentGrid BridgeSession::encode(const Image& image) {
    require(kCapEncode, "encode");
    wire::Bytes payload;
    wire::append_tensor(payload, image);
    const auto reply = request(wire::MsgType::EncodeReq, payload, wire::MsgType::EncodeResp);
    std::size_t offset = 0;
    return wire::to_latent(wire::read_tensor(reply, offset));
}

Image BridgeSession::decode(const LatentGrid& latent) {
    require(kCapDecode, "decode");
    wire::Bytes payload;
    wire::append_tensor(payload, latent);
    const auto reply = request(wire::MsgType::DecodeReq, payload, wire::MsgType::DecodeResp);
    std::size_t offset = 0;
    return wire::to_image(wire::read_tensor(reply, offset));
}

double BridgeSession::metric(const std::string& metric_id, const Image& a, const Image& b,
                             const BinaryMask& region) {
    require(kCapMetric, "metric");
    const auto payload = wire::metric_request_payload(metric_id, a, b, region);
    const auto reply = request(wire::MsgType::MetricReq, payload, wire::MsgType::MetricResp);
    return wire::parse_metric_response(reply);
}

RemoteDenoiser::RemoteDenoiser(std::shared_ptr<BridgeSession> session) : session_(std::move(session)) {
    if (!session_ || !session_->ready()) throw InvalidArgument("RemoteDenoiser needs a handshaken session");
}

LatentGrid RemoteDenoiser::predict(const LatentGrid& z, const Timestep& t, ConditioningRef cond) {
    return session_->denoise(z, t.train_step, cond);
}

RemoteCodec::RemoteCodec(std::shared_ptr<BridgeSession> session) : session_(std::move(session)) {
    if (!session_ || !session_->ready()) throw InvalidArgument("RemoteCodec needs a handshaken session");
}

LatentGrid RemoteCodec::encode(const Image& image) { return session_->encode(image); }
Image RemoteCodec::decode(const LatentGrid& latent) { return session_->decode(latent); }
std::size_t RemoteCodec::scale() const {
    return static_cast<std::size_t>(std::max(1, session_->capabilities().scale));
}
std::size_t RemoteCodec::channels() const {
    return static_cast<std::size_t>(std::max(0, session_->capabilities().latent_channels));
}

std::size_t serve_connection(ByteStream& stream, const Capabilities& caps,
                             const RequestHandler& handler, Millis idle_timeout) {
    std::size_t answered = 0;
    std::uint64_t offset = 0;
    bool greeted = false;
    auto reply = [&](wire::MsgType type, std::span<const std::uint8_t> payload) {
        stream.write_all(wire::frame_message(type, payload));
    };
    for (;;) {
        std::array<std::uint8_t, wire::kHeaderSize> header{};
        try {
            stream.read_exact(header, idle_timeout);
        } catch (const StreamClosed&) {
            return answered;
        }
        wire::FrameHeader parsed{};
        try {
            parsed = wire::parse_header(header, offset);
        } catch (const FramingError& e) {
            reply(wire::MsgType::Error, wire::text_payload(e.what()));
            stream.shutdown_write();
            return answered;
        }
        wire::WireMessage msg{parsed.type, wire::Bytes(static_cast<std::size_t>(parsed.payload_len))};
        stream.read_exact(msg.payload, idle_timeout);
        offset += header.size() + msg.payload.size();

        if (msg.type == wire::MsgType::Hello) {
            greeted = true;
            reply(wire::MsgType::HelloAck, wire::text_payload(caps.to_json()));
        } else if (!greeted) {
            reply(wire::MsgType::Error, wire::text_payload("HELLO required first"));
        } else {
            try {
                const auto out = handler(msg);
                reply(out.type, out.payload);
            } catch (const std::exception& e) {
                reply(wire::MsgType::Error, wire::text_payload(e.what()));
            }
        }
        ++answered;
    }
}

RequestHandler echo_handler() {
    return [](const wire::WireMessage& msg) -> wire::WireMessage {
        switch (msg.type) {
            case wire::MsgType::DenoiseReq: {
                const auto req = wire::parse_denoise_request(msg.payload);
                wire::Bytes out;
                wire::append_tensor(out, req.tensor);
                return {wire::MsgType::DenoiseResp, std::move(out)};
            }
            case wire::MsgType::EncodeReq:
            case wire::MsgType::DecodeReq: {
                std::size_t offset = 0;
                const auto tensor = wire::read_tensor(msg.payload, offset);
                wire::Bytes out;
                wire::append_tensor(out, tensor);
                const auto type = msg.type == wire::MsgType::EncodeReq ? wire::MsgType::EncodeResp
                                                                       : wire::MsgType::DecodeResp;
                return {type, std::move(out)};
            }
            case wire::MsgType::MetricReq: {
                const auto req = wire::parse_metric_request(msg.payload);
                if (req.a.dims != req.b.dims) throw ProtocolError("metric images differ in shape");
                const Image a = wire::to_image(req.a);
                const Image b = wire::to_image(req.b);
                const LatentGrid region = wire::to_latent(req.region);
                double sum = 0.0;
                std::size_t count = 0;
                for (std::size_t c = 0; c < a.channels(); ++c) {
                    for (std::size_t y = 0; y < a.height(); ++y) {
                        for (std::size_t x = 0; x < a.width(); ++x) {
                            if (region.at(0, y, x) == 0.0) continue;
                            const double d = a.at(c, y, x) - b.at(c, y, x);
                            sum += d * d;
                            ++count;
                        }
                    }
                }
                if (count == 0) throw ProtocolError("empty metric region");
                return {wire::MsgType::MetricResp, wire::metric_response_payload(sum / count)};
            }
            default:
                throw ProtocolError("unsupported request " + std::string(wire::type_name(msg.type)));
        }
    };
}

RequestHandler shape_mangling_handler() {
    return [](const wire::WireMessage& msg) -> wire::WireMessage {
        if (msg.type != wire::MsgType::DenoiseReq) throw ProtocolError("only DENOISE is mangled");
        auto req = wire::parse_denoise_request(msg.payload);
        req.tensor.dims.back() += 1;
        req.tensor.data.resize(req.tensor.element_count(), 0.0f);
        wire::Bytes out;
        wire::append_tensor(out, req.tensor);
        return {wire::MsgType::DenoiseResp, std::move(out)};
    };
}

}  // namespace sourceswap::bridge
