#include <doctest.h>

#include <cstring>
#include <fstream>
#include <random>
#include <sstream>

#include "sourceswap/wire.hpp"
#include "support.hpp"

using namespace sourceswap;
using namespace sourceswap::wire;

namespace {

Bytes fixture(const char* name) {
    std::ifstream in(std::filesystem::path(SOURCESWAP_FIXTURES) / name);
    REQUIRE(in);
    std::stringstream ss;
    ss << in.rdbuf();
    return from_hex(ss.str());
}

}  // namespace

TEST_CASE("HELLO with an empty payload matches the golden bytes") {
    const Bytes hello = frame_message(MsgType::Hello, {});
    const Bytes expect = {0x53, 0x53, 0x57, 0x50, 0x01, 0x00, 0x0A, 0, 0, 0, 0, 0, 0, 0, 0};
    CHECK(hello == expect);
    CHECK(hello == fixture("hello.hex"));
}

TEST_CASE("DENOISE_REQ for a 1x2x2 zero tensor matches the golden bytes") {
    const Bytes payload = denoise_request_payload(LatentGrid(1, 2, 2), 10, {0});
    CHECK(payload.size() == 42);
    const Bytes framed = frame_message(MsgType::DenoiseReq, payload);
    CHECK(framed == fixture("denoise_req.hex"));
    const DenoiseRequest req = parse_denoise_request(payload);
    CHECK(req.t == 10);
    CHECK(req.cond.token == 0);
    CHECK(req.tensor.dims == std::vector<std::uint32_t>{1, 2, 2});
}

TEST_CASE("frames round trip for random payloads") {
    std::mt19937_64 eng(1);
    for (int i = 0; i < 500; ++i) {
        Bytes payload(eng() % 300);
        for (auto& b : payload) b = static_cast<std::uint8_t>(eng());
        const auto type = static_cast<MsgType>(1 + eng() % 11);
        const Bytes framed = frame_message(type, payload);
        CHECK(framed.size() == kHeaderSize + payload.size());
        const auto parsed = try_parse_frame(framed);
        REQUIRE(parsed.has_value());
        CHECK(parsed->consumed == framed.size());
        CHECK(parsed->message.type == type);
        CHECK(parsed->message.payload == payload);
    }
}

TEST_CASE("incomplete frames ask for more bytes") {
    const Bytes framed = frame_message(MsgType::MetricResp, metric_response_payload(0.5));
    for (std::size_t n = 0; n < framed.size(); ++n) {
        CHECK_FALSE(try_parse_frame(std::span(framed).first(n)).has_value());
    }
}

TEST_CASE("framing errors report their offset") {
    Bytes framed = frame_message(MsgType::Hello, {});
    Bytes bad_magic = framed;
    bad_magic[2] = 'X';
    try {
        try_parse_frame(bad_magic, 100);
        FAIL("expected FramingError");
    } catch (const FramingError& e) {
        CHECK(e.offset() == 102);
    }
    // Garbage is rejected from the first byte without waiting for a header.
    const Bytes garbage = {'G'};
    CHECK_THROWS_AS(try_parse_frame(garbage), FramingError);

    Bytes bad_version = framed;
    bad_version[4] = 2;
    CHECK_THROWS_AS(try_parse_frame(bad_version), FramingError);

    Bytes unknown = framed;
    unknown[6] = 12;
    try {
        try_parse_frame(unknown);
        FAIL("expected FramingError");
    } catch (const FramingError& e) {
        CHECK(e.offset() == 6);
    }
    unknown[6] = 0;
    CHECK_THROWS_AS(try_parse_frame(unknown), FramingError);

    Bytes huge = framed;
    huge[11] = 1;  // 2^32
    CHECK_THROWS_AS(try_parse_frame(huge), FramingError);
    Bytes limited = frame_message(MsgType::Error, text_payload("0123456789"));
    CHECK_THROWS_AS(try_parse_frame(limited, 0, 4), FramingError);
}

TEST_CASE("stream parsing stops at the first error") {
    Bytes stream;
    const Bytes a = frame_message(MsgType::Hello, text_payload("{}"));
    const Bytes b = frame_message(MsgType::Error, text_payload("nope"));
    stream.insert(stream.end(), a.begin(), a.end());
    stream.insert(stream.end(), b.begin(), b.end());
    StreamParse ok = parse_stream(stream);
    CHECK(ok.messages.size() == 2);
    CHECK_FALSE(ok.error_offset.has_value());
    CHECK(ok.pending == 0);
    CHECK(payload_text(ok.messages[1].payload) == "nope");

    Bytes partial = stream;
    partial.insert(partial.end(), a.begin(), a.begin() + 5);
    StreamParse p = parse_stream(partial);
    CHECK(p.messages.size() == 2);
    CHECK(p.pending == 5);

    Bytes broken = stream;
    broken[a.size()] = 0;
    StreamParse e = parse_stream(broken);
    CHECK(e.messages.size() == 1);
    REQUIRE(e.error_offset.has_value());
    CHECK(*e.error_offset == a.size());
}

TEST_CASE("tensors round trip and validate") {
    const LatentGrid g = testing::random_grid(2, 3, 5, 1);
    Bytes bytes;
    append_tensor(bytes, g);
    CHECK(bytes.size() == 2 + 3 * 4 + 4 * g.size());
    std::size_t off = 0;
    const WireTensor t = read_tensor(bytes, off);
    CHECK(off == bytes.size());
    const LatentGrid back = to_latent(t);
    for (std::size_t i = 0; i < g.size(); ++i) CHECK(back.values()[i] == double(float(g.values()[i])));

    // Little-endian float encoding regardless of host.
    WireTensor one{{1}, {1.0f}};
    Bytes ob;
    append_tensor(ob, one);
    CHECK(ob == Bytes{0, 1, 1, 0, 0, 0, 0x00, 0x00, 0x80, 0x3f});

    WireTensor rank2{{2, 3}, std::vector<float>(6, 2.0f)};
    CHECK(to_latent(rank2).channels() == 1);
    WireTensor rank4{{1, 2, 2, 2}, std::vector<float>(8, 0.0f)};
    CHECK(to_image(rank4).channels() == 2);
    WireTensor rank4b{{2, 1, 2, 2}, std::vector<float>(8, 0.0f)};
    CHECK_THROWS_AS(to_latent(rank4b), ProtocolError);

    Bytes bad_dtype = bytes;
    bad_dtype[0] = 1;
    off = 0;
    CHECK_THROWS_AS(read_tensor(bad_dtype, off), ProtocolError);
    Bytes bad_rank = bytes;
    bad_rank[1] = 5;
    off = 0;
    CHECK_THROWS_AS(read_tensor(bad_rank, off), ProtocolError);
    Bytes truncated(bytes.begin(), bytes.end() - 1);
    off = 0;
    CHECK_THROWS_AS(read_tensor(truncated, off), ProtocolError);
    // Claimed dims far beyond the buffer.
    Bytes giant = {0, 2, 0xff, 0xff, 0xff, 0xff, 0xff, 0xff, 0xff, 0xff};
    off = 0;
    CHECK_THROWS_AS(read_tensor(giant, off), ProtocolError);
    CHECK_THROWS_AS(append_tensor(bytes, WireTensor{{2}, {1.0f}}), ProtocolError);
}

TEST_CASE("metric request and response payloads") {
    const Image a = testing::random_image(3, 4, 4, 1), b = testing::random_image(3, 4, 4, 2);
    const BinaryMask r = testing::random_mask(4, 4, 3);
    const MetricRequest req = parse_metric_request(metric_request_payload("lpips", a, b, r));
    CHECK(req.metric == "lpips");
    CHECK(req.a.dims == std::vector<std::uint32_t>{3, 4, 4});
    CHECK(req.region.dims == std::vector<std::uint32_t>{1, 4, 4});
    for (std::size_t i = 0; i < 16; ++i) CHECK((req.region.data[i] == 1.0f) == r.test(i));
    CHECK(parse_metric_response(metric_response_payload(0.125)) == 0.125);
    CHECK_THROWS_AS(parse_metric_response(Bytes(4)), ProtocolError);
    CHECK_THROWS_AS(metric_request_payload("x", a, Image(3, 4, 5), r), ShapeMismatch);
    Bytes trailing = denoise_request_payload(LatentGrid(1, 1, 1), 1, {2});
    trailing.push_back(0);
    CHECK_THROWS_AS(parse_denoise_request(trailing), ProtocolError);
}

TEST_CASE("tensor files and hex helpers") {
    const auto dir = testing::temp_dir("tw");
    const LatentGrid g = testing::random_grid(4, 8, 8, 3);
    write_tensor_file(dir / "z.tw", g);
    const LatentGrid back = read_tensor_file(dir / "z.tw");
    CHECK(back.same_shape(g));
    CHECK(back.values()[5] == double(float(g.values()[5])));
    CHECK_THROWS_AS(read_tensor_file(dir / "none.tw"), IoError);
    std::filesystem::remove_all(dir);

    CHECK(to_hex(Bytes{0x00, 0xab, 0x10}) == "00 ab 10");
    CHECK(from_hex("00 AB # comment 99\n10") == Bytes{0x00, 0xab, 0x10});
    CHECK_THROWS_AS(from_hex("0"), InvalidArgument);
    CHECK_THROWS_AS(from_hex("zz"), InvalidArgument);
    CHECK(type_name(MsgType::HelloAck) == "HELLO_ACK");
    CHECK_FALSE(is_known_type(0));
    CHECK_FALSE(is_known_type(12));
}
