#include <doctest.h>

#include <cmath>
#include <fstream>
#include <thread>

#include "sourceswap/bridge.hpp"
#include "sourceswap/evalkit.hpp"
#include "sourceswap/image_io.hpp"
#include "support.hpp"

using namespace sourceswap;
using testing::rect_mask;

namespace {

// Direct SSIM oracle: enumerate each region pixel's window into vectors first.
double ssim_oracle(const Image& a, const Image& b, const BinaryMask& region) {
    const long h = long(a.height()), w = long(a.width());
    double total = 0;
    std::size_t count = 0;
    for (std::size_t c = 0; c < a.channels(); ++c)
        for (long y = 0; y < h; ++y)
            for (long x = 0; x < w; ++x) {
                if (!region.at(std::size_t(y), std::size_t(x))) continue;
                std::vector<double> va, vb;
                for (long yy = y - 3; yy <= y + 3; ++yy)
                    for (long xx = x - 3; xx <= x + 3; ++xx) {
                        if (yy < 0 || xx < 0 || yy >= h || xx >= w) continue;
                        if (!region.at(std::size_t(yy), std::size_t(xx))) continue;
                        va.push_back(a.at(c, std::size_t(yy), std::size_t(xx)));
                        vb.push_back(b.at(c, std::size_t(yy), std::size_t(xx)));
                    }
                const double n = double(va.size());
                double ma = 0, mb = 0;
                for (std::size_t i = 0; i < va.size(); ++i) ma += va[i] / n, mb += vb[i] / n;
                double sa = 0, sb = 0, sab = 0;
                for (std::size_t i = 0; i < va.size(); ++i) {
                    sa += (va[i] - ma) * (va[i] - ma) / n;
                    sb += (vb[i] - mb) * (vb[i] - mb) / n;
                    sab += (va[i] - ma) * (vb[i] - mb) / n;
                }
                const double c1 = 1e-4, c2 = 9e-4;
                total += (2 * ma * mb + c1) * (2 * sab + c2) / ((ma * ma + mb * mb + c1) * (sa + sb + c2));
                ++count;
            }
    return 1.0 - total / double(count);
}

RegionParams params(const char* metric, std::size_t r, std::size_t margin) {
    RegionParams p;
    p.metric = metric;
    p.dilate_radius = r;
    p.rect_margin = margin;
    return p;
}

}  // namespace

TEST_CASE("identical images score zero") {
    const Image src = testing::random_image(3, 16, 16, 1);
    const BinaryMask fine = rect_mask(16, 16, 5, 4, 10, 9);
    for (const char* m : {"mse", "ssim"}) {
        const RegionScore s = region_metric(src, src, fine, params(m, 1, 2));
        CHECK(std::abs(s.value) < 1e-12);
    }
    CHECK(region_metric(src, src, fine, params("ssim", 1, 2)).metric_id == "1-ssim");
}

TEST_CASE("changes inside the dilated mask or outside the rectangle do not count") {
    const Image src = testing::random_image(3, 20, 20, 2);
    const BinaryMask fine = rect_mask(20, 20, 6, 6, 12, 10);
    const std::size_t r = 1, margin = 2;
    const BinaryMask dil = testing::enum_morph(fine, true, r);
    const BinaryMask rect = to_bbox_mask(dil, margin);
    Image res = src;
    for (std::size_t c = 0; c < 3; ++c)
        for (std::size_t i = 0; i < 400; ++i)
            if (dil.test(i) || !rect.test(i)) res.plane(c)[i] = 1.0 - res.plane(c)[i];
    for (const char* m : {"mse", "ssim"}) CHECK(std::abs(region_metric(src, res, fine, params(m, r, margin)).value) < 1e-12);
}

TEST_CASE("one altered pixel in the 10x10 example") {
    const Image src(3, 10, 10, 0.25);
    const BinaryMask fine = rect_mask(10, 10, 3, 3, 6, 6);
    Image res = src;
    for (std::size_t c = 0; c < 3; ++c) res.at(c, 2, 4) += 0.5;
    const RegionScore s = region_metric(src, res, fine, params("mse", 0, 1));
    CHECK(s.region_pixel_count == 20);
    CHECK(std::abs(s.value - 0.25 / 20.0) < 1e-15);
}

TEST_CASE("SSIM distance matches the direct oracle and is symmetric") {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const Image a = testing::random_image(3, 18, 15, seed);
        const Image b = testing::random_image(3, 18, 15, seed + 100);
        const BinaryMask region = testing::bernoulli_mask(18, 15, 0.6, seed) | testing::rect_mask(18, 15, 0, 0, 0, 0);
        const double d = region_ssim_distance(a, b, region);
        CHECK(std::abs(d - ssim_oracle(a, b, region)) < 1e-10);
        CHECK(std::abs(d - region_ssim_distance(b, a, region)) < 1e-10);
        CHECK(region_mse(a, b, region) == region_mse(b, a, region));
    }
}

TEST_CASE("degenerate geometry is an error") {
    const Image img(3, 10, 10);
    CHECK_THROWS_AS(region_metric(img, img, BinaryMask(10, 10), params("mse", 1, 0)), InvalidArgument);
    // A rectangle fully covered by the dilated mask leaves nothing.
    CHECK_THROWS_AS(region_metric(img, img, rect_mask(10, 10, 3, 3, 6, 6), params("mse", 1, 0)), InvalidArgument);
    CHECK_THROWS_AS(region_metric(img, img, rect_mask(10, 10, 3, 3, 6, 6), params("lpips", 0, 1)), InvalidArgument);
    CHECK_THROWS_AS(region_mse(img, Image(3, 10, 9), BinaryMask(10, 10, true)), ShapeMismatch);
}

TEST_CASE("default dilation radius follows the image size") {
    const Image a = testing::random_image(3, 100, 100, 1);
    const BinaryMask fine = rect_mask(100, 100, 20, 20, 70, 30) | rect_mask(100, 100, 60, 20, 70, 80);
    RegionParams p;
    const RegionScore s = region_metric(a, a, fine, p);
    CHECK(s.region_pixel_count == boundary_region(fine, 2, 0).popcount());
}

TEST_CASE("perceptual metrics go through the bridge") {
    auto [client, srv] = bridge::socket_pair();
    bridge::Capabilities caps;
    caps.mask = bridge::kCapMetric;
    std::thread t([s = std::move(srv), caps]() mutable { bridge::serve_connection(*s, caps, bridge::echo_handler()); });
    {
        bridge::BridgeSession session(std::move(client));
        session.handshake();
        const Image src(3, 10, 10, 0.0);
        Image res(3, 10, 10, 0.0);
        res.at(0, 2, 4) = 1.0;
        const RegionScore s = region_metric(src, res, rect_mask(10, 10, 3, 3, 6, 6), params("lpips", 0, 1), &session);
        CHECK(s.metric_id == "lpips");
        // The echo server answers with region MSE.
        CHECK(std::abs(s.value - 1.0 / 60.0) < 1e-7);
    }
    t.join();
}

TEST_CASE("report aggregates") {
    const EvalReport one = build_report({{"a", 5, 0.4, "mse"}});
    CHECK(one.mean == 0.4);
    CHECK(one.median == 0.4);

    const EvalReport three = build_report({{"a", 1, 0.1, "mse"}, {"b", 1, 0.2, "mse"}, {"c", 1, 0.6, "mse"}});
    CHECK(std::abs(three.mean - 0.3) < 1e-15);
    CHECK(three.median == 0.2);

    const EvalReport with_nan =
        build_report({{"a", 1, 0.1, "mse"}, {"b", 1, std::nan(""), "mse"}, {"c", 1, 0.3, "mse"}, {"d", 1, 0.5, "mse"}});
    CHECK(with_nan.rows.size() == 4);
    CHECK(with_nan.flagged[1]);
    CHECK(with_nan.counted == 3);
    CHECK(with_nan.excluded == 1);
    CHECK(std::abs(with_nan.mean - 0.3) < 1e-15);
    CHECK(with_nan.median == 0.3);
    CHECK_THROWS_AS(build_report({}), InvalidArgument);
}

TEST_CASE("CSV and JSON output") {
    const EvalReport r = build_report({{"x,\"y\"", 3, 0.5, "mse"}, {"z", 2, std::nan(""), "mse"}});
    const std::string csv = report_csv(r);
    CHECK(csv ==
          "id,region_pixel_count,metric_id,value,flag\r\n"
          "\"x,\"\"y\"\"\",3,mse,0.5,\r\n"
          "z,2,mse,nan,nan\r\n"
          "mean,1,mse,0.5,aggregate\r\n"
          "median,1,mse,0.5,aggregate\r\n");
    const auto j = report_json(r);
    CHECK(j["rows"][1]["value"].is_null());
    CHECK(j["aggregates"]["mean"] == 0.5);
    CHECK(csv_field("plain") == "plain");
    CHECK(csv_field("a\nb") == "\"a\nb\"");

    const auto dir = testing::temp_dir("report");
    emit_report({{"a", 1, 0.25, "mse"}}, dir / "sub" / "report");
    CHECK(std::filesystem::exists(dir / "sub" / "report.csv"));
    CHECK(std::filesystem::exists(dir / "sub" / "report.json"));
    std::filesystem::remove_all(dir);
}

TEST_CASE("2AFC trial records") {
    const Image r(3, 4, 2, 0.1), s(3, 4, 3, 0.2), l(3, 4, 4, 0.3), rt(3, 4, 5, 0.4);
    const Image cat = concat_horizontal({r, s, l, rt});
    CHECK(cat.width() == 14);
    CHECK(cat.at(0, 0, 1) == 0.1);
    CHECK(cat.at(0, 3, 2) == 0.2);
    CHECK(cat.at(2, 1, 13) == 0.4);
    CHECK_THROWS_AS(concat_horizontal({r, Image(3, 5, 2)}), ShapeMismatch);

    const auto dir = testing::temp_dir("afc");
    const TwoAfcTrial trial{"p1", "ours", "baseline", 7};
    const auto j = write_2afc_trial(trial, r, s, l, rt, dir);
    CHECK(j["pair_id"] == "p1");
    CHECK(j["seed"] == 7);
    CHECK(load_image_png(dir / "p1.2afc.png").width() == 14);
    std::filesystem::remove_all(dir);
}
