// SPDX-License-Identifier: Apache-2.0
#include <cmath>
#include <filesystem>
#include <set>

#include <doctest.h>

#include "air/common/rng.hpp"
#include "air/data/dataset.hpp"
#include "air/data/image.hpp"
#include "air/data/ppm.hpp"

using namespace air;
using namespace air::data;

namespace {

Image random_image(int c, int h, int w, std::uint64_t seed) {
  Rng rng(seed);
  Image img(c, h, w);
  for (auto& v : img.pixels) v = static_cast<float>(rng.uniform(0, 1));
  return img;
}

// Keys cubic written from its piecewise definition, a = -1/2.
double cubic_ref(double t) {
  t = std::fabs(t);
  if (t <= 1) return 1.5 * t * t * t - 2.5 * t * t + 1;
  if (t < 2) return -0.5 * t * t * t + 2.5 * t * t - 4 * t + 2;
  return 0;
}

// Direct two-dimensional evaluation of the anti-aliased filter.
Image downsample_ref(const Image& img, int s) {
  const int h = img.height / s, w = img.width / s;
  Image out(img.channels, h, w);
  auto weights = [&](int o, int n) {
    std::vector<double> wt(static_cast<std::size_t>(n), 0.0);
    const double center = (o + 0.5) * s - 0.5;
    double total = 0;
    for (int j = -4 * s; j < n + 4 * s; ++j) {
      const double v = cubic_ref((j - center) / s);
      wt[static_cast<std::size_t>(std::clamp(j, 0, n - 1))] += v;
      total += v;
    }
    for (auto& v : wt) v /= total;
    return wt;
  };
  for (int c = 0; c < img.channels; ++c)
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        const auto wy = weights(y, img.height), wx = weights(x, img.width);
        double acc = 0;
        for (int i = 0; i < img.height; ++i)
          for (int j = 0; j < img.width; ++j) acc += wy[i] * wx[j] * img.at(c, i, j);
        out.at(c, y, x) = static_cast<float>(std::clamp(acc, 0.0, 1.0));
      }
  return out;
}

std::vector<std::byte> bytes_of(const std::string& s) {
  std::vector<std::byte> b;
  for (char c : s) b.push_back(static_cast<std::byte>(c));
  return b;
}

}  // namespace

TEST_SUITE("data") {
  TEST_CASE("synth_image is deterministic, bounded and seed-dependent") {
    const Image a = synth_image(1, 48), b = synth_image(1, 48), c = synth_image(2, 48);
    CHECK(a == b);
    CHECK(a.channels == 3);
    for (float v : a.pixels) CHECK((v >= 0.0f && v <= 1.0f));
    double mad = 0;
    for (std::size_t i = 0; i < a.pixels.size(); ++i) mad += std::abs(a.pixels[i] - c.pixels[i]);
    CHECK(mad / a.pixels.size() > 0.01);
    CHECK_THROWS_AS(synth_image(1, 7), ShapeError);
    for (std::uint64_t s = 10; s < 20; ++s) {
      const Image x = synth_image(s, 32), y = synth_image(s + 100, 32);
      double d = 0;
      for (std::size_t i = 0; i < x.pixels.size(); ++i) d += std::abs(x.pixels[i] - y.pixels[i]);
      CHECK(d / x.pixels.size() > 0.01);
    }
  }

  TEST_CASE("downsample_bicubic") {
    Image flat(3, 16, 16, 0.37f);
    for (int s : {2, 4}) {
      const Image d = downsample_bicubic(flat, s);
      CHECK(d.height == 16 / s);
      for (float v : d.pixels) CHECK(std::abs(v - 0.37f) <= 1e-6);
    }
    const Image r = random_image(3, 32, 32, 3);
    const Image same = downsample_bicubic(r, 1);
    for (std::size_t i = 0; i < r.pixels.size(); ++i) CHECK(std::abs(same.pixels[i] - r.pixels[i]) <= 1e-6);
    for (int s : {2, 4}) {
      const Image got = downsample_bicubic(r, s), want = downsample_ref(r, s);
      double m = 0;
      for (std::size_t i = 0; i < got.pixels.size(); ++i) m = std::max(m, double(std::abs(got.pixels[i] - want.pixels[i])));
      CAPTURE(s);
      CHECK(m <= 1e-6);
    }
    CHECK_THROWS_AS(downsample_bicubic(random_image(3, 10, 12, 1), 4), ShapeError);
  }

  TEST_CASE("add_gaussian_noise") {
    const Image clean = synth_image(4, 64);
    CHECK(add_gaussian_noise(clean, 0.0, 9) == clean);
    const Image raw = add_gaussian_noise(clean, 25.0, 9, false);
    double mean = 0, sq = 0;
    const double n = static_cast<double>(clean.pixels.size());
    for (std::size_t i = 0; i < clean.pixels.size(); ++i) {
      const double d = double(raw.pixels[i]) - clean.pixels[i];
      mean += d;
      sq += d * d;
    }
    mean /= n;
    const double sd = std::sqrt(sq / n - mean * mean);
    CHECK(std::abs(sd - 25.0 / 255.0) <= 0.05 * 25.0 / 255.0);
    const Image a = add_gaussian_noise(clean, 25.0, 9), b = add_gaussian_noise(clean, 25.0, 9);
    CHECK(a == b);
    CHECK_FALSE(a == add_gaussian_noise(clean, 25.0, 10));
    for (float v : a.pixels) CHECK((v >= 0.0f && v <= 1.0f));
  }

  TEST_CASE("degrade compositions") {
    const Image img = synth_image(5, 32);
    auto [lq, hq] = degrade(img, DegradationSpec::parse("sr:2"));
    CHECK(lq.height == 16);
    CHECK(lq.width == 16);
    CHECK(hq == img);

    DegradationSpec so = DegradationSpec::parse("second_order:4:30");
    so.seed = 77;
    CHECK(degrade(img, so).first == add_gaussian_noise(downsample_bicubic(img, 4), 30.0, 77));

    const auto dk = degrade(img, DegradationSpec::parse("darken:0.2:1"));
    for (std::size_t i = 0; i < img.pixels.size(); ++i)
      CHECK(dk.first.pixels[i] == static_cast<float>(double(img.pixels[i]) * 0.2));

    for (const char* text : {"sr:4", "noise:50", "second_order:2:25", "darken:0.3:1.5"}) {
      const auto out = degrade(img, DegradationSpec::parse(text)).first;
      for (float v : out.pixels) CHECK((std::isfinite(v) && v >= 0.0f && v <= 1.0f));
    }
  }

  TEST_CASE("DegradationSpec parsing") {
    const auto s = DegradationSpec::parse("second_order:2:25");
    CHECK(s.kind == DegradationSpec::Kind::second_order);
    CHECK(s.scale == 2);
    CHECK(s.sigma == 25.0);
    CHECK(s.output_scale() == 2);
    for (const char* text : {"sr:3", "noise:25", "second_order:2:25", "darken:0.2:1", "noise:7.5"})
      CHECK(DegradationSpec::parse(text).id() == text);
    CHECK(DegradationSpec::parse("noise:25").output_scale() == 1);
    for (const char* bad : {"", "blur:2", "sr", "sr:x", "sr:2.5", "noise:-1", "darken:0:1", "second_order:2"})
      CHECK_THROWS_AS(DegradationSpec::parse(bad), ConfigError);
  }

  TEST_CASE("dataset order and batches are pure functions of seed and epoch") {
    DatasetConfig cfg;
    cfg.corpus_size = 6;
    cfg.image_size = 40;
    cfg.crop = 16;
    cfg.batch = 3;
    cfg.seed = 8;
    const Dataset d(cfg, DegradationSpec::parse("sr:2"));
    CHECK(d.batches_per_epoch() == 2);
    const auto o0 = d.order(0);
    CHECK(std::set<std::size_t>(o0.begin(), o0.end()).size() == 6);
    CHECK(o0 == d.order(0));
    bool differs = false;
    for (int e = 1; e < 5; ++e) differs |= d.order(e) != o0;
    CHECK(differs);
    const Batch b = d.batch(1, 1);
    CHECK(b.lq.shape() == Shape{3, 3, 16, 16});
    CHECK(b.hq.shape() == Shape{3, 3, 32, 32});
    const Dataset again(cfg, DegradationSpec::parse("sr:2"));
    CHECK(again.batch(1, 1).lq.to_vector() == b.lq.to_vector());
    CHECK(d.batch(2, 1).lq.to_vector() != b.lq.to_vector());
    CHECK_THROWS_AS(d.batch(0, 2), LookupError);
    cfg.crop = 24;
    CHECK_THROWS_AS(Dataset(cfg, DegradationSpec::parse("sr:2")), ConfigError);
  }

  TEST_CASE("held-out set") {
    const auto spec = DegradationSpec::parse("second_order:2:25");
    const auto a = held_out_set(spec, 4, 16, 3), b = held_out_set(spec, 4, 16, 3);
    REQUIRE(a.size() == 4);
    for (std::size_t i = 0; i < a.size(); ++i) {
      CHECK(a[i].first == b[i].first);
      CHECK(a[i].second.height == 32);
      CHECK(a[i].first.height == 16);
    }
    // Distinct from every training source of the same root seed.
    DatasetConfig cfg;
    cfg.corpus_size = 8;
    cfg.image_size = 32;
    cfg.crop = 16;
    cfg.seed = 3;
    const Dataset d(cfg, spec);
    for (const auto& [lq, hq] : a)
      for (const auto& src : d.corpus()) CHECK_FALSE(src == hq);
  }

  TEST_CASE("ppm round trip and fixtures") {
    const Image img = synth_image(6, 20);
    const Image back = decode_ppm(encode_ppm(img));
    REQUIRE(back.same_shape(img));
    for (std::size_t i = 0; i < img.pixels.size(); ++i) CHECK(quantize(back.pixels[i]) == quantize(img.pixels[i]));
    CHECK(encode_ppm(back) == encode_ppm(img));

    CHECK(quantize(0.5f / 255.0f) == 1);  // half rounds up
    CHECK(quantize(-0.2f) == 0);
    CHECK(quantize(1.5f) == 255);

    auto fixture = bytes_of("P6\n# comment\n2 2\n255\n");
    for (int v : {255, 0, 0, 0, 255, 0, 0, 0, 255, 51, 102, 153}) fixture.push_back(static_cast<std::byte>(v));
    const Image f = decode_ppm(fixture);
    CHECK(f.width == 2);
    CHECK(f.height == 2);
    CHECK(f.at(0, 0, 0) == 1.0f);
    CHECK(f.at(1, 0, 1) == 1.0f);
    CHECK(f.at(2, 1, 0) == 1.0f);
    CHECK(f.at(0, 1, 1) == 51.0f / 255.0f);
    CHECK(f.at(2, 1, 1) == 153.0f / 255.0f);

    auto gray = bytes_of("P5 3 1 255\n");
    for (int v : {0, 128, 255}) gray.push_back(static_cast<std::byte>(v));
    const Image g = decode_ppm(gray);
    CHECK(g.channels == 1);
    CHECK(g.at(0, 0, 1) == 128.0f / 255.0f);

    auto expect_error = [](const std::vector<std::byte>& b, const std::string& fragment) {
      try {
        decode_ppm(b);
        FAIL("accepted malformed input");
      } catch (const ParseError& e) {
        CHECK(std::string(e.what()).find(fragment) != std::string::npos);
      }
    };
    expect_error(bytes_of("P3\n2 2\n255\n0 0 0"), "ASCII");
    expect_error(bytes_of("P6\n2 2\n255\n\x01\x02"), "byte offset 13");
    expect_error(bytes_of("P6\n2 2\n65535\n"), "maxval");
    expect_error(bytes_of("P6\n2 x\n255\n"), "byte offset 5");
    expect_error(bytes_of("Q6"), "magic");

    const auto path = std::filesystem::temp_directory_path() / "air_test_roundtrip.ppm";
    save_ppm(img, path);
    CHECK(encode_ppm(load_ppm(path)) == encode_ppm(img));
    std::filesystem::remove(path);
    CHECK_THROWS_AS(load_ppm("/nonexistent/dir/x.ppm"), FileError);
  }
}
