#include <gtest/gtest.h>

#include <random>

#include "flowclas.hpp"
#include "support/oracles.hpp"
#include "support/tempdir.hpp"

using namespace flowclas;

namespace {

Image noise_image(std::size_t h, std::size_t w, std::mt19937_64& rng) {
  Image img(h, w);
  std::uniform_int_distribution<int> d(0, 255);
  for (auto& p : img.pixels) p = static_cast<std::uint8_t>(d(rng));
  return img;
}

BinaryMask random_mask(std::size_t h, std::size_t w, std::mt19937_64& rng, double p) {
  BinaryMask m(h, w);
  std::bernoulli_distribution b(p);
  for (auto& v : m.values) v = b(rng);
  return m;
}

void expect_mixed_invariants(const MixedSample& s, const Image& x_in) {
  ASSERT_EQ(s.mask.height, x_in.height);
  ASSERT_EQ(s.mask.width, x_in.width);
  EXPECT_GT(s.mask.count(), 0u);
  for (std::size_t y = 0; y < x_in.height; ++y)
    for (std::size_t x = 0; x < x_in.width; ++x) {
      EXPECT_LE(s.mask.at(y, x), 1);
      if (!s.mask.at(y, x)) {
        for (std::size_t c = 0; c < 3; ++c) EXPECT_EQ(s.image.at(y, x, c), x_in.at(y, x, c));
      }
    }
}

}  // namespace

TEST(Paste, EmptyObjectRejected) {
  const Image a(8, 8), b(8, 8);
  EXPECT_THROW(paste_object(a, b, BinaryMask(8, 8), 1), ValidationError);
  EXPECT_THROW(paste_object(a, Image(8, 8, 1), BinaryMask(8, 8, 1), 1), ValidationError);
  EXPECT_THROW(paste_object(a, b, BinaryMask(4, 8, 1), 1), ValidationError);
}

TEST(Paste, FullMaskAtUnitScaleCopiesObject) {
  std::mt19937_64 rng(1);
  const Image x_in = noise_image(6, 5, rng), x_out = noise_image(6, 5, rng);
  const MixedSample s = paste_object_at(x_in, x_out, BinaryMask(6, 5, 1), PastePlacement{1.0, 0, 0});
  EXPECT_EQ(s.image.pixels, x_out.pixels);
  EXPECT_EQ(s.mask.count(), 30u);
}

TEST(Paste, CheckerboardMatchesLoopComposite) {
  std::mt19937_64 rng(2);
  const Image x_in = noise_image(12, 12, rng), x_out = noise_image(8, 8, rng);
  BinaryMask checker(8, 8);
  for (std::size_t y = 0; y < 8; ++y)
    for (std::size_t x = 0; x < 8; ++x) checker.at(y, x) = (x + y) % 2;
  for (const PastePlacement& p : {PastePlacement{1.0, 2, 3}, PastePlacement{0.75, 0, 6}, PastePlacement{1.4, 1, 1}}) {
    const PlacedObject obj = place_object(x_out, checker, p, 12, 12);
    const MixedSample s = paste_object_at(x_in, x_out, checker, p);
    EXPECT_EQ(s.image.pixels, oracle::composite(x_in, obj.pixels, obj.mask).pixels);
    EXPECT_EQ(s.mask.values, obj.mask.values);
    expect_mixed_invariants(s, x_in);
  }
}

TEST(Paste, RandomPlacementsKeepInvariants) {
  std::mt19937_64 rng(3);
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const Image x_in = noise_image(32, 24, rng), x_out = noise_image(20, 20, rng);
    const BinaryMask y_out = random_mask(20, 20, rng, 0.5);
    const MixedSample s = paste_object(x_in, x_out, y_out, seed);
    expect_mixed_invariants(s, x_in);
    const PlacedObject obj = place_object(x_out, y_out, s.placement, 32, 24);
    EXPECT_EQ(s.image.pixels, oracle::composite(x_in, obj.pixels, obj.mask).pixels);
    const MixedSample again = paste_object(x_in, x_out, y_out, seed);
    EXPECT_EQ(again.image.pixels, s.image.pixels);
    EXPECT_EQ(again.placement.top, s.placement.top);
  }
}

TEST(Paste, ObjectOutsideTargetRejected) {
  const Image x_in(4, 4), x_out(4, 4);
  EXPECT_THROW(paste_object_at(x_in, x_out, BinaryMask(4, 4, 1), PastePlacement{1.0, 1, 0}), PlacementError);
}

TEST(Downsample, Examples) {
  const BinaryMask zero = downsample_mask(BinaryMask(14, 14), 7, 7);
  EXPECT_EQ(zero.count(), 0u);
  BinaryMask one(14, 14);
  one.at(9, 4) = 1;
  const BinaryMask d = downsample_mask(one, 1, 1);
  EXPECT_EQ(d.at(0, 0), 1);
}

TEST(Downsample, EvenBlocksMatchDirectBlockLoop) {
  std::mt19937_64 rng(4);
  const BinaryMask m = random_mask(16, 12, rng, 0.05);
  const BinaryMask d = downsample_mask(m, 4, 3);
  for (std::size_t oy = 0; oy < 4; ++oy)
    for (std::size_t ox = 0; ox < 3; ++ox) {
      int any = 0;
      for (std::size_t y = 0; y < 4; ++y)
        for (std::size_t x = 0; x < 4; ++x) any |= m.at(oy * 4 + y, ox * 4 + x);
      EXPECT_EQ(d.at(oy, ox), any);
    }
}

TEST(Downsample, RandomMatchesBlockMaxOracle) {
  std::mt19937_64 rng(5);
  for (auto [h, w, oh, ow] : std::vector<std::array<std::size_t, 4>>{{64, 64, 16, 16}, {37, 50, 9, 13}, {10, 7, 4, 3}, {5, 5, 5, 5}}) {
    const BinaryMask m = random_mask(h, w, rng, 0.03);
    EXPECT_EQ(downsample_mask(m, oh, ow).values, oracle::block_max(m, oh, ow).values);
  }
}

TEST(Downsample, Monotone) {
  std::mt19937_64 rng(6);
  BinaryMask m = random_mask(30, 30, rng, 0.02);
  BinaryMask prev = downsample_mask(m, 7, 7);
  for (int i = 0; i < 40; ++i) {
    m.at(rng() % 30, rng() % 30) = 1;
    const BinaryMask next = downsample_mask(m, 7, 7);
    for (std::size_t k = 0; k < prev.values.size(); ++k) EXPECT_GE(next.values[k], prev.values[k]);
    prev = next;
  }
}

namespace {

// 2 inliers, 2 outliers written as PNG with manifests.
std::pair<Manifest, Manifest> toy_sources(const std::filesystem::path& dir) {
  std::mt19937_64 rng(7);
  std::vector<nlohmann::json> in, out;
  for (int i = 0; i < 2; ++i) {
    const std::string name = "in" + std::to_string(i) + ".png";
    write_png(noise_image(24, 24, rng), dir / name);
    in.push_back({{"image", name}});
    const std::string oname = "out" + std::to_string(i) + ".png", mname = "out" + std::to_string(i) + ".mask.png";
    write_png(noise_image(16, 16, rng), dir / oname);
    BinaryMask m(16, 16);
    for (std::size_t y = 4; y < 12; ++y)
      for (std::size_t x = 3 + i; x < 13; ++x) m.at(y, x) = 1;
    write_mask_png(m, dir / mname);
    out.push_back({{"image", oname}, {"mask", mname}});
  }
  write_manifest(dir / "in.jsonl", in);
  write_manifest(dir / "out.jsonl", out);
  return {load_manifest(dir / "in.jsonl"), load_manifest(dir / "out.jsonl")};
}

}  // namespace

TEST(MixedDataset, CountZeroGivesEmptyManifest) {
  TempDir tmp;
  auto [in, out] = toy_sources(tmp.path());
  const auto report = build_mixed_dataset(in, out, 0, 1, tmp / "mix");
  EXPECT_TRUE(report.records.empty());
  EXPECT_TRUE(load_manifest(tmp / "mix" / "mixed.jsonl").empty());
}

TEST(MixedDataset, EightSamplesHoldInvariants) {
  TempDir tmp;
  auto [in, out] = toy_sources(tmp.path());
  const auto report = build_mixed_dataset(in, out, 8, 11, tmp / "mix");
  ASSERT_EQ(report.records.size(), 8u);
  const Manifest m = load_manifest(tmp / "mix" / "mixed.jsonl", true);
  ASSERT_EQ(m.size(), 8u);
  EXPECT_TRUE(m.missing.empty());
  for (const auto& r : m.records) {
    const Image mixed = read_png(m.resolve(r.image));
    const BinaryMask mask = read_mask_png(m.resolve(*r.mask));
    const Image x_in = read_png(in.resolve(r.raw.at("source_in").get<std::string>()));
    const std::string src_out = r.raw.at("source_out").get<std::string>();
    const Image x_out = read_png(out.resolve(src_out));
    const BinaryMask y_out = read_mask_png(out.resolve(src_out.substr(0, src_out.size() - 4) + ".mask.png"));
    const PastePlacement p{r.raw.at("scale").get<double>(), r.raw.at("offset")[0].get<std::size_t>(),
                           r.raw.at("offset")[1].get<std::size_t>()};
    const PlacedObject obj = place_object(x_out, y_out, p, 24, 24);
    EXPECT_EQ(mask.values, obj.mask.values);
    EXPECT_EQ(mixed.pixels, oracle::composite(x_in, obj.pixels, obj.mask).pixels);
  }
}

TEST(MixedDataset, SameSeedIsByteIdentical) {
  TempDir tmp;
  auto [in, out] = toy_sources(tmp.path());
  build_mixed_dataset(in, out, 4, 5, tmp / "a");
  build_mixed_dataset(in, out, 4, 5, tmp / "b");
  for (const char* f : {"mixed.jsonl", "mix_00000.png", "mix_00003.mask.png"})
    EXPECT_EQ(read_bytes(tmp / "a" / f), read_bytes(tmp / "b" / f)) << f;
}

TEST(MixedDataset, UnreadableEntriesSkippedAndAllBadRejected) {
  TempDir tmp;
  auto [in, out] = toy_sources(tmp.path());
  write_manifest(tmp / "bad.jsonl", {{{"image", "nope.png"}}});
  Manifest bad = load_manifest(tmp / "bad.jsonl");
  EXPECT_THROW(build_mixed_dataset(bad, out, 2, 1, tmp / "mix"), ValidationError);
  bad.records.push_back(in.records[0]);
  bad.path = in.path;
  const auto report = build_mixed_dataset(bad, out, 2, 1, tmp / "mix2");
  EXPECT_EQ(report.records.size(), 2u);
  EXPECT_EQ(report.skipped.size(), 1u);
}
