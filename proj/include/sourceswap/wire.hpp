#pragma once

// Framed binary protocol used to reach external denoisers, latent codecs and
// perceptual metrics.
//
//   frame   := magic "SSWP" | version u16 LE (=1) | type u8 | payload_len u64 LE | payload
//   tensor  := dtype u8 (0 = float32 LE) | ndim u8 (<= 4) | dims u32 LE x ndim | data
//
// All multi-byte integers and floats are little-endian regardless of host.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "sourceswap/ddim.hpp"
#include "sourceswap/lattice.hpp"
#include "sourceswap/maskops.hpp"

namespace sourceswap::wire {

using Bytes = std::vector<std::uint8_t>;

inline constexpr std::uint8_t kMagic[4] = {'S', 'S', 'W', 'P'};
inline constexpr std::uint16_t kVersion = 1;
inline constexpr std::size_t kHeaderSize = 15;
/// Payloads must be strictly below 2^32 bytes.
inline constexpr std::uint64_t kMaxPayload = (std::uint64_t{1} << 32) - 1;

enum class MsgType : std::uint8_t {
    DenoiseReq = 1,
    DenoiseResp = 2,
    EncodeReq = 3,
    EncodeResp = 4,
    DecodeReq = 5,
    DecodeResp = 6,
    MetricReq = 7,
    MetricResp = 8,
    Error = 9,
    Hello = 10,
    HelloAck = 11,
};

bool is_known_type(std::uint8_t raw) noexcept;
std::string_view type_name(MsgType type) noexcept;

struct WireMessage {
    MsgType type = MsgType::Error;
    Bytes payload;
    bool operator==(const WireMessage&) const = default;
};

Bytes frame_message(MsgType type, std::span<const std::uint8_t> payload);
inline Bytes frame_message(const WireMessage& msg) { return frame_message(msg.type, msg.payload); }

struct ParsedFrame {
    WireMessage message;
    std::size_t consumed = 0;
};

/// Parses one frame at the front of `bytes`. Returns nullopt when more bytes
/// are needed; throws FramingError (offset relative to `base_offset`) on a
/// malformed header. `max_payload` lets a reader refuse frames it will not
/// buffer.
std::optional<ParsedFrame> try_parse_frame(std::span<const std::uint8_t> bytes,
                                           std::uint64_t base_offset = 0,
                                           std::uint64_t max_payload = kMaxPayload);

/// Header fields, validated. Used by stream readers that pull the header and
/// payload separately.
struct FrameHeader {
    MsgType type;
    std::uint64_t payload_len;
};
FrameHeader parse_header(std::span<const std::uint8_t, kHeaderSize> header,
                         std::uint64_t base_offset = 0, std::uint64_t max_payload = kMaxPayload);

struct StreamParse {
    std::vector<WireMessage> messages;
    /// Set when framing failed; nothing after the offset is interpreted.
    std::optional<std::uint64_t> error_offset;
    std::string error;
    /// Bytes of an incomplete trailing frame.
    std::size_t pending = 0;
};

/// Splits a byte stream into frames, stopping at the first framing error.
StreamParse parse_stream(std::span<const std::uint8_t> bytes);

// --- tensors ---------------------------------------------------------------

struct WireTensor {
    std::vector<std::uint32_t> dims;
    std::vector<float> data;
    std::size_t element_count() const noexcept;
};

inline constexpr std::uint8_t kDtypeFloat32 = 0;
inline constexpr std::size_t kMaxTensorRank = 4;

void append_tensor(Bytes& out, const WireTensor& tensor);
void append_tensor(Bytes& out, const LatentGrid& grid);
void append_tensor(Bytes& out, const Image& image);

/// Reads a tensor starting at `offset` and advances it. Throws ProtocolError.
WireTensor read_tensor(std::span<const std::uint8_t> bytes, std::size_t& offset);

/// Rank 2 (H, W), 3 (C, H, W) or 4 with a leading 1.
LatentGrid to_latent(const WireTensor& tensor);
Image to_image(const WireTensor& tensor);

void append_u32(Bytes& out, std::uint32_t v);
void append_u64(Bytes& out, std::uint64_t v);
void append_f64(Bytes& out, double v);
std::uint32_t read_u32(std::span<const std::uint8_t> bytes, std::size_t& offset);
std::uint64_t read_u64(std::span<const std::uint8_t> bytes, std::size_t& offset);
double read_f64(std::span<const std::uint8_t> bytes, std::size_t& offset);

// --- payloads --------------------------------------------------------------

/// TensorWire(z) | u32 t | u64 cond token.
Bytes denoise_request_payload(const LatentGrid& z, std::uint32_t t, ConditioningRef cond);

struct DenoiseRequest {
    WireTensor tensor;
    std::uint32_t t = 0;
    ConditioningRef cond;
};
DenoiseRequest parse_denoise_request(std::span<const std::uint8_t> payload);

/// u16 name length | UTF-8 metric id | TensorWire(a) | TensorWire(b) |
/// TensorWire(region as 1xHxW of 0/1).
Bytes metric_request_payload(std::string_view metric, const Image& a, const Image& b,
                             const BinaryMask& region);

struct MetricRequest {
    std::string metric;
    WireTensor a;
    WireTensor b;
    WireTensor region;
};
MetricRequest parse_metric_request(std::span<const std::uint8_t> payload);

/// METRIC_RESP payload: one f64 LE.
Bytes metric_response_payload(double value);
double parse_metric_response(std::span<const std::uint8_t> payload);

Bytes text_payload(std::string_view text);
std::string payload_text(std::span<const std::uint8_t> payload);

// --- files -----------------------------------------------------------------

/// Latents on disk are a bare TensorWire record.
void write_tensor_file(const std::filesystem::path& path, const LatentGrid& grid);
LatentGrid read_tensor_file(const std::filesystem::path& path);

std::string to_hex(std::span<const std::uint8_t> bytes);
/// Parses hex digits, ignoring whitespace and '#' comments to end of line.
Bytes from_hex(std::string_view text);

}  // namespace sourceswap::wire
