#include "sourceswap/wire.hpp"

#include <bit>
#include <cctype>
#include <cstring>
#include <fstream>
#include <iterator>

namespace sourceswap::wire {

bool is_known_type(std::uint8_t raw) noexcept { return raw >= 1 && raw <= 11; }

std::string_view type_name(MsgType type) noexcept {
    switch (type) {
        case MsgType::DenoiseReq: return "DENOISE_REQ";
        case MsgType::DenoiseResp: return "DENOISE_RESP";
        case MsgType::EncodeReq: return "ENCODE_REQ";
        case MsgType::EncodeResp: return "ENCODE_RESP";
        case MsgType::DecodeReq: return "DECODE_REQ";
        case MsgType::DecodeResp: return "DECODE_RESP";
        case MsgType::MetricReq: return "METRIC_REQ";
        case MsgType::MetricResp: return "METRIC_RESP";
        case MsgType::Error: return "ERROR";
        case MsgType::Hello: return "HELLO";
        case MsgType::HelloAck: return "HELLO_ACK";
    }
    return "UNKNOWN";
}

void append_u32(Bytes& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void append_u64(Bytes& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void append_f64(Bytes& out, double v) { append_u64(out, std::bit_cast<std::uint64_t>(v)); }

namespace {

void need(std::span<const std::uint8_t> bytes, std::size_t offset, std::size_t count,
          const char* what) {
    if (offset > bytes.size() || bytes.size() - offset < count) {
        throw ProtocolError(std::string("truncated payload while reading ") + what + " at byte " +
                            std::to_string(offset));
    }
}

std::uint64_t load_le(const std::uint8_t* p, int n) {
    std::uint64_t v = 0;
    for (int i = 0; i < n; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
    return v;
}

}  // namespace

std::uint32_t read_u32(std::span<const std::uint8_t> bytes, std::size_t& offset) {
    need(bytes, offset, 4, "u32");
    const auto v = static_cast<std::uint32_t>(load_le(bytes.data() + offset, 4));
    offset += 4;
    return v;
}

std::uint64_t read_u64(std::span<const std::uint8_t> bytes, std::size_t& offset) {
    need(bytes, offset, 8, "u64");
    const auto v = load_le(bytes.data() + offset, 8);
    offset += 8;
    return v;
}

double read_f64(std::span<const std::uint8_t> bytes, std::size_t& offset) {
    return std::bit_cast<double>(read_u64(bytes, offset));
}

Bytes frame_message(MsgType type, std::span<const std::uint8_t> payload) {
    if (payload.size() > kMaxPayload) {
        throw ProtocolError("payload of " + std::to_string(payload.size()) +
                            " bytes exceeds the 2^32 - 1 limit");
    }
    Bytes out(kHeaderSize + payload.size());
    std::memcpy(out.data(), kMagic, sizeof kMagic);
    out[4] = static_cast<std::uint8_t>(kVersion & 0xff);
    out[5] = static_cast<std::uint8_t>(kVersion >> 8);
    out[6] = static_cast<std::uint8_t>(type);
    const std::uint64_t len = payload.size();
    for (int i = 0; i < 8; ++i) out[7 + i] = static_cast<std::uint8_t>(len >> (8 * i));
    if (!payload.empty()) std::memcpy(out.data() + kHeaderSize, payload.data(), payload.size());
    return out;
}

FrameHeader parse_header(std::span<const std::uint8_t, kHeaderSize> header,
                         std::uint64_t base_offset, std::uint64_t max_payload) {
    for (std::size_t i = 0; i < 4; ++i) {
        if (header[i] != kMagic[i]) throw FramingError(base_offset + i, "bad magic");
    }
    const auto version = static_cast<std::uint16_t>(load_le(header.data() + 4, 2));
    if (version != kVersion) {
        throw FramingError(base_offset + 4, "unsupported version " + std::to_string(version));
    }
    const std::uint8_t raw_type = header[6];
    if (!is_known_type(raw_type)) {
        throw FramingError(base_offset + 6, "unknown message type " + std::to_string(raw_type));
    }
    const std::uint64_t len = load_le(header.data() + 7, 8);
    if (len > kMaxPayload) {
        throw FramingError(base_offset + 7, "payload length " + std::to_string(len) +
                                                " exceeds the 2^32 - 1 limit");
    }
    if (len > max_payload) {
        throw FramingError(base_offset + 7, "payload length " + std::to_string(len) +
                                                " exceeds the reader limit " +
                                                std::to_string(max_payload));
    }
    return {static_cast<MsgType>(raw_type), len};
}

std::optional<ParsedFrame> try_parse_frame(std::span<const std::uint8_t> bytes,
                                           std::uint64_t base_offset, std::uint64_t max_payload) {
    // Check whatever part of the magic has arrived so garbage is rejected early.
    for (std::size_t i = 0; i < std::min<std::size_t>(4, bytes.size()); ++i) {
        if (bytes[i] != kMagic[i]) throw FramingError(base_offset + i, "bad magic");
    }
    if (bytes.size() < kHeaderSize) return std::nullopt;
    const FrameHeader header =
        parse_header(bytes.first<kHeaderSize>(), base_offset, max_payload);
    if (bytes.size() - kHeaderSize < header.payload_len) return std::nullopt;
    const auto len = static_cast<std::size_t>(header.payload_len);
    ParsedFrame frame;
    frame.message.type = header.type;
    frame.message.payload.assign(bytes.begin() + kHeaderSize, bytes.begin() + kHeaderSize + len);
    frame.consumed = kHeaderSize + len;
    return frame;
}

StreamParse parse_stream(std::span<const std::uint8_t> bytes) {
    StreamParse result;
    std::size_t offset = 0;
    while (offset < bytes.size()) {
        try {
            auto frame = try_parse_frame(bytes.subspan(offset), offset);
            if (!frame) {
                result.pending = bytes.size() - offset;
                break;
            }
            offset += frame->consumed;
            result.messages.push_back(std::move(frame->message));
        } catch (const FramingError& e) {
            result.error_offset = e.offset();
            result.error = e.what();
            break;
        }
    }
    return result;
}

std::size_t WireTensor::element_count() const noexcept {
    std::size_t n = 1;
    for (auto d : dims) n *= d;
    return n;
}

void append_tensor(Bytes& out, const WireTensor& tensor) {
    if (tensor.dims.empty() || tensor.dims.size() > kMaxTensorRank) {
        throw ProtocolError("tensor rank must be between 1 and 4");
    }
    if (tensor.data.size() != tensor.element_count()) {
        throw ProtocolError("tensor data length does not match its dims");
    }
    out.push_back(kDtypeFloat32);
    out.push_back(static_cast<std::uint8_t>(tensor.dims.size()));
    for (auto d : tensor.dims) append_u32(out, d);
    for (float f : tensor.data) append_u32(out, std::bit_cast<std::uint32_t>(f));
}

namespace {

template <class Tag>
WireTensor to_wire(const Grid3<Tag>& grid) {
    WireTensor t;
    t.dims = {static_cast<std::uint32_t>(grid.channels()), static_cast<std::uint32_t>(grid.height()),
              static_cast<std::uint32_t>(grid.width())};
    t.data.reserve(grid.size());
    for (double v : grid.values()) t.data.push_back(static_cast<float>(v));
    return t;
}

template <class Tag>
Grid3<Tag> from_wire(const WireTensor& tensor) {
    std::size_t c = 1;
    std::size_t h = 0;
    std::size_t w = 0;
    const auto& d = tensor.dims;
    if (d.size() == 2) {
        h = d[0];
        w = d[1];
    } else if (d.size() == 3) {
        c = d[0];
        h = d[1];
        w = d[2];
    } else if (d.size() == 4 && d[0] == 1) {
        c = d[1];
        h = d[2];
        w = d[3];
    } else {
        throw ProtocolError("tensor of rank " + std::to_string(d.size()) +
                            " cannot be read as a C x H x W grid");
    }
    if (c == 0 || h == 0 || w == 0) throw ProtocolError("tensor has a zero dimension");
    std::vector<double> values(tensor.data.begin(), tensor.data.end());
    return Grid3<Tag>(c, h, w, std::move(values));
}

}  // namespace

void append_tensor(Bytes& out, const LatentGrid& grid) { append_tensor(out, to_wire(grid)); }
void append_tensor(Bytes& out, const Image& image) { append_tensor(out, to_wire(image)); }

WireTensor read_tensor(std::span<const std::uint8_t> bytes, std::size_t& offset) {
    need(bytes, offset, 2, "tensor header");
    const std::uint8_t dtype = bytes[offset];
    const std::uint8_t ndim = bytes[offset + 1];
    if (dtype != kDtypeFloat32) {
        throw ProtocolError("unsupported tensor dtype " + std::to_string(dtype));
    }
    if (ndim == 0 || ndim > kMaxTensorRank) {
        throw ProtocolError("tensor rank " + std::to_string(ndim) + " is outside 1..4");
    }
    offset += 2;
    WireTensor t;
    std::uint64_t count = 1;
    const std::uint64_t limit = bytes.size() / 4;
    for (int i = 0; i < ndim; ++i) {
        const std::uint32_t d = read_u32(bytes, offset);
        t.dims.push_back(d);
        if (d != 0 && count > limit / d) {
            throw ProtocolError("tensor dims exceed the available payload");
        }
        count *= d;
    }
    need(bytes, offset, static_cast<std::size_t>(count) * 4, "tensor data");
    t.data.resize(static_cast<std::size_t>(count));
    for (auto& f : t.data) {
        f = std::bit_cast<float>(static_cast<std::uint32_t>(load_le(bytes.data() + offset, 4)));
        offset += 4;
    }
    return t;
}

LatentGrid to_latent(const WireTensor& tensor) { return from_wire<LatentTag>(tensor); }
Image to_image(const WireTensor& tensor) { return from_wire<PixelTag>(tensor); }

Bytes denoise_request_payload(const LatentGrid& z, std::uint32_t t, ConditioningRef cond) {
    Bytes out;
    append_tensor(out, z);
    append_u32(out, t);
    append_u64(out, cond.token);
    return out;
}

DenoiseRequest parse_denoise_request(std::span<const std::uint8_t> payload) {
    std::size_t offset = 0;
    DenoiseRequest req;
    req.tensor = read_tensor(payload, offset);
    req.t = read_u32(payload, offset);
    req.cond.token = read_u64(payload, offset);
    if (offset != payload.size()) throw ProtocolError("trailing bytes in DENOISE_REQ payload");
    return req;
}

Bytes metric_request_payload(std::string_view metric, const Image& a, const Image& b,
                             const BinaryMask& region) {
    if (metric.size() > 0xffff) throw ProtocolError("metric id too long");
    if (!a.same_shape(b)) throw ShapeMismatch("metric request: images differ in shape");
    if (region.height() != a.height() || region.width() != a.width()) {
        throw ShapeMismatch("metric request: region does not match image size");
    }
    Bytes out;
    out.push_back(static_cast<std::uint8_t>(metric.size() & 0xff));
    out.push_back(static_cast<std::uint8_t>(metric.size() >> 8));
    out.insert(out.end(), metric.begin(), metric.end());
    append_tensor(out, a);
    append_tensor(out, b);
    WireTensor r;
    r.dims = {1, static_cast<std::uint32_t>(region.height()),
              static_cast<std::uint32_t>(region.width())};
    r.data.reserve(region.size());
    for (std::size_t i = 0; i < region.size(); ++i) r.data.push_back(region.test(i) ? 1.0f : 0.0f);
    append_tensor(out, r);
    return out;
}

MetricRequest parse_metric_request(std::span<const std::uint8_t> payload) {
    need(payload, 0, 2, "metric name length");
    const std::size_t len = payload[0] | (static_cast<std::size_t>(payload[1]) << 8);
    need(payload, 2, len, "metric name");
    MetricRequest req;
    req.metric.assign(payload.begin() + 2, payload.begin() + 2 + static_cast<std::ptrdiff_t>(len));
    std::size_t offset = 2 + len;
    req.a = read_tensor(payload, offset);
    req.b = read_tensor(payload, offset);
    req.region = read_tensor(payload, offset);
    if (offset != payload.size()) throw ProtocolError("trailing bytes in METRIC_REQ payload");
    return req;
}

Bytes metric_response_payload(double value) {
    Bytes out;
    append_f64(out, value);
    return out;
}

double parse_metric_response(std::span<const std::uint8_t> payload) {
    if (payload.size() != 8) throw ProtocolError("METRIC_RESP payload must be 8 bytes");
    std::size_t offset = 0;
    return read_f64(payload, offset);
}

Bytes text_payload(std::string_view text) { return Bytes(text.begin(), text.end()); }

std::string payload_text(std::span<const std::uint8_t> payload) {
    return std::string(payload.begin(), payload.end());
}

void write_tensor_file(const std::filesystem::path& path, const LatentGrid& grid) {
    Bytes bytes;
    append_tensor(bytes, grid);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("failed writing '" + path.string() + "'");
}

LatentGrid read_tensor_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open tensor file '" + path.string() + "'");
    const Bytes bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    std::size_t offset = 0;
    WireTensor t = read_tensor(bytes, offset);
    if (offset != bytes.size()) throw IoError("trailing bytes in tensor file '" + path.string() + "'");
    return to_latent(t);
}

std::string to_hex(std::span<const std::uint8_t> bytes) {
    static constexpr char digits[] = "0123456789abcdef";
    std::string out;
    for (std::size_t i = 0; i < bytes.size(); ++i) {
        if (i != 0) out.push_back(' ');
        out.push_back(digits[bytes[i] >> 4]);
        out.push_back(digits[bytes[i] & 0xf]);
    }
    return out;
}

Bytes from_hex(std::string_view text) {
    Bytes out;
    int pending = -1;
    for (std::size_t i = 0; i < text.size(); ++i) {
        const char ch = text[i];
        if (ch == '#') {
            while (i < text.size() && text[i] != '\n') ++i;
            continue;
        }
        if (std::isspace(static_cast<unsigned char>(ch))) continue;
        int v = -1;
        if (ch >= '0' && ch <= '9') v = ch - '0';
        else if (ch >= 'a' && ch <= 'f') v = ch - 'a' + 10;
        else if (ch >= 'A' && ch <= 'F') v = ch - 'A' + 10;
        else throw InvalidArgument(std::string("invalid hex digit '") + ch + "'");
        if (pending < 0) {
            pending = v;
        } else {
            out.push_back(static_cast<std::uint8_t>(pending << 4 | v));
            pending = -1;
        }
    }
    if (pending >= 0) throw InvalidArgument("odd number of hex digits");
    return out;
}

}  // namespace sourceswap::wire
