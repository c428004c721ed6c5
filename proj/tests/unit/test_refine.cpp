#include <doctest.h>

#include "sourceswap/refine.hpp"
#include "support.hpp"

using namespace sourceswap;

namespace {

// Adds one to every pixel and counts calls.
class CountingSwap final : public SwapOperator {
public:
    std::size_t calls = 0;
    std::size_t fail_at = 0;
    Image apply(const Image&, const Image& source, const BinaryMask&) override {
        ++calls;
        if (calls == fail_at) throw std::runtime_error("stub failure");
        Image out = source;
        for (double& v : out.values()) v += 1.0;
        return out;
    }
    std::string id() const override { return "count"; }
};

class ResizingSwap final : public SwapOperator {
public:
    Image apply(const Image&, const Image& source, const BinaryMask&) override {
        return Image(source.channels(), source.height() + 1, source.width());
    }
    std::string id() const override { return "resize"; }
};

// Latent-capable stub that records which path the driver took.
class LatentStub final : public SwapOperator {
public:
    std::size_t image_calls = 0, latent_calls = 0, encodes = 0, decodes = 0;
    Image apply(const Image&, const Image& source, const BinaryMask&) override {
        ++image_calls;
        return source;
    }
    std::string id() const override { return "latent-stub"; }
    bool supports_latent() const override { return true; }
    LatentGrid apply_latent(const Image&, const LatentGrid& z, const BinaryMask&) override {
        ++latent_calls;
        LatentGrid out = z;
        for (double& v : out.values()) v *= 2.0;
        return out;
    }
    LatentGrid encode(const Image& img) override {
        ++encodes;
        return {img.channels(), img.height(), img.width(), img.data()};
    }
    Image decode(const LatentGrid& z) override {
        ++decodes;
        return {z.channels(), z.height(), z.width(), z.data()};
    }
};

}  // namespace

TEST_CASE("default round count") {
    CHECK(kDefaultRefineRounds == 2);
    CHECK(RefineOptions{}.rounds == 2);
}

TEST_CASE("identity operator is a fixed point for any k") {
    IdentitySwap op;
    const Image ref = testing::random_image(3, 8, 8, 1);
    const Image src = testing::random_image(3, 8, 8, 2);
    const BinaryMask m = testing::random_mask(8, 8, 3);
    for (std::size_t k : {1u, 2u, 4u}) {
        const RefineResult r = refine(op, ref, src, m, {k});
        CHECK(r.output == src);
        CHECK(r.intermediates.size() == k);
        CHECK(r.round_seconds.size() == k);
    }
}

TEST_CASE("refine composes the operator k times") {
    const Image ref(3, 4, 4), src(3, 4, 4, 0.5);
    const BinaryMask m(4, 4, true);
    for (std::size_t k : {1u, 2u, 3u, 5u}) {
        CountingSwap op;
        const RefineResult r = refine(op, ref, src, m, {k});
        CHECK(op.calls == k);
        // Manual composition.
        CountingSwap manual;
        Image x = src;
        for (std::size_t i = 0; i < k; ++i) x = manual.apply(ref, x, m);
        CHECK(r.output == x);
        for (std::size_t i = 0; i < k; ++i) CHECK(r.intermediates[i].values()[0] == 0.5 + double(i + 1));
    }
    CountingSwap once;
    CHECK(refine(once, ref, src, m, {1}).output == CountingSwap().apply(ref, src, m));
    CountingSwap quiet;
    CHECK(refine(quiet, ref, src, m, {3, false}).intermediates.empty());
}

TEST_CASE("failures carry the round and the last good image") {
    const Image ref(3, 4, 4), src(3, 4, 4, 0.0);
    const BinaryMask m(4, 4, true);
    CountingSwap op;
    op.fail_at = 3;
    try {
        refine(op, ref, src, m, {4});
        FAIL("expected RefineFailure");
    } catch (const RefineFailure& e) {
        CHECK(e.round() == 3);
        CHECK(e.last_good().values()[0] == 2.0);
    }
    CountingSwap first;
    first.fail_at = 1;
    try {
        refine(first, ref, src, m, {2});
        FAIL("expected RefineFailure");
    } catch (const RefineFailure& e) {
        CHECK(e.round() == 1);
        CHECK(e.last_good() == src);
    }
    ResizingSwap bad;
    CHECK_THROWS_AS(refine(bad, ref, src, m, {1}), RefineFailure);
    CHECK_THROWS_AS(refine(op, ref, src, m, {0}), InvalidArgument);
    CHECK_THROWS_AS(refine(op, ref, src, BinaryMask(5, 4, true), {1}), ShapeMismatch);
}

TEST_CASE("latent chaining is opt-in") {
    const Image ref(3, 2, 2), src(3, 2, 2, 1.0);
    const BinaryMask m(2, 2, true);
    LatentStub off;
    refine(off, ref, src, m, {3});
    CHECK(off.image_calls == 3);
    CHECK(off.latent_calls == 0);

    LatentStub on;
    const RefineResult r = refine(on, ref, src, m, {3, true, true});
    CHECK(on.image_calls == 0);
    CHECK(on.latent_calls == 3);
    CHECK(on.encodes == 1);
    CHECK(r.output.values()[0] == 8.0);

    IdentitySwap plain;
    CHECK(refine(plain, ref, src, m, {2, true, true}).output == src);
    CHECK_THROWS_AS(plain.encode(src), Error);
}

TEST_CASE("diffusion swap with the zero denoiser returns the source") {
    auto codec = std::make_shared<IdentityCodec>();
    auto denoiser = std::make_shared<ZeroDenoiser>();
    DiffusionSwap op(codec, denoiser, NoiseSchedule::linear_beta(20));
    const Image src = testing::random_image(3, 8, 8, 4);
    const RefineResult r = refine(op, src, src, BinaryMask(8, 8, true));
    CHECK(testing::max_abs_diff(r.output, src) < 1e-12);
    CHECK(op.id() == "diffusion:identity+zero");
    CHECK_THROWS_AS(DiffusionSwap(nullptr, denoiser, NoiseSchedule::linear_beta(2)), InvalidArgument);
}
