#include <doctest.h>

#include <cmath>
#include <fstream>

#include "sourceswap/codec.hpp"
#include "sourceswap/image_io.hpp"
#include "support.hpp"

using namespace sourceswap;

TEST_CASE("identity codec is lossless") {
    IdentityCodec c;
    const Image img = testing::random_image(3, 5, 7, 1);
    const LatentGrid z = c.encode(img);
    CHECK(z.channels() == 3);
    CHECK(z.height() == 5);
    const Image back = c.decode(z);
    for (std::size_t i = 0; i < img.size(); ++i) CHECK(back.values()[i] == img.values()[i]);
    CHECK_THROWS_AS(c.encode(Image(1, 4, 4)), ShapeMismatch);
}

TEST_CASE("avgpool codec averages blocks and upsamples by repetition") {
    AvgPoolCodec c(2);
    Image img(3, 4, 4);
    for (std::size_t ch = 0; ch < 3; ++ch)
        for (std::size_t y = 0; y < 4; ++y)
            for (std::size_t x = 0; x < 4; ++x) img.at(ch, y, x) = double(y * 4 + x + ch);
    const LatentGrid z = c.encode(img);
    REQUIRE(z.height() == 2);
    CHECK(z.at(0, 0, 0) == (0 + 1 + 4 + 5) / 4.0);
    CHECK(z.at(2, 1, 1) == (10 + 11 + 14 + 15) / 4.0 + 2);
    const Image up = c.decode(z);
    CHECK(up.height() == 4);
    CHECK(up.at(0, 3, 2) == z.at(0, 1, 1));
    CHECK_THROWS_AS(c.encode(Image(3, 5, 4)), ShapeMismatch);
    CHECK_THROWS_AS(AvgPoolCodec(0), InvalidArgument);
}

TEST_CASE("builtin codec lookup") {
    CHECK(make_builtin_codec("identity")->id() == "identity");
    const auto pool = make_builtin_codec("avgpool-8");
    CHECK(pool->scale() == 8);
    CHECK(pool->id() == "avgpool-8");
    CHECK_THROWS(make_builtin_codec("avgpool-"));
    CHECK_THROWS(make_builtin_codec("avgpool-0"));
    CHECK_THROWS(make_builtin_codec("vae"));
}

TEST_CASE("PNG round trip quantizes to 8 bits") {
    const auto dir = testing::temp_dir("png");
    Image img = testing::random_image(3, 9, 13, 5);
    img.at(0, 0, 0) = -0.5;
    img.at(1, 0, 0) = 1.7;
    save_image_png(img, dir / "a.png");
    const Image back = load_image_png(dir / "a.png");
    REQUIRE(back.same_shape(img));
    CHECK(back.at(0, 0, 0) == 0.0);
    CHECK(back.at(1, 0, 0) == 1.0);
    for (std::size_t i = 3; i < img.size(); ++i) {
        if (i % (9 * 13) == 0) continue;
        const double v = std::clamp(img.values()[i], 0.0, 1.0);
        CHECK(back.values()[i] == std::round(v * 255.0) / 255.0);
    }

    // Gray images load as three identical channels.
    Image gray(1, 4, 6, 0.2);
    save_image_png(gray, dir / "g.png");
    const Image g3 = load_image_png(dir / "g.png");
    CHECK(g3.channels() == 3);
    CHECK(g3.at(2, 3, 5) == std::round(0.2 * 255) / 255.0);

    const BinaryMask m = testing::random_mask(11, 8, 3);
    save_mask_png(m, dir / "m.png");
    CHECK(load_mask_png(dir / "m.png") == m);
    std::filesystem::remove_all(dir);
}

TEST_CASE("PNG loading reports bad files") {
    const auto dir = testing::temp_dir("pngbad");
    CHECK_THROWS_AS(load_image_png(dir / "missing.png"), IoError);
    {
        std::ofstream(dir / "junk.png") << "not a png";
    }
    CHECK_THROWS_AS(load_image_png(dir / "junk.png"), IoError);
    CHECK_THROWS_AS(load_mask_png(dir / "junk.png"), IoError);
    std::filesystem::remove_all(dir);
}
