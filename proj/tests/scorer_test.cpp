#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <numbers>
#include <random>

#include "flowclas.hpp"
#include "support/oracles.hpp"
#include "support/tempdir.hpp"

using namespace flowclas;

TEST(Npd, AtMeanIsHalfLogTwoPi) {
  for (std::size_t c : {1u, 3u, 16u}) {
    DiagonalGaussianLatent<double> g(c);
    std::mt19937_64 rng(c);
    g.mu.value = oracle::random_tensor({1, c, 1, 1}, rng);
    Tensor<double> z(Shape{1, c, 1, 1});
    for (std::size_t k = 0; k < c; ++k) z[k] = g.mu.value[k];
    EXPECT_NEAR(npd_map(z, g)[0], 0.5 * std::log(2 * std::numbers::pi), 1e-12);
    EXPECT_NEAR(npd_map(z, g)[0], 0.918939, 1e-6);
  }
}

TEST(Npd, TwoChannelsOffByOne) {
  DiagonalGaussianLatent<double> g(2);
  EXPECT_NEAR(npd_map(Tensor<double>(Shape{1, 2, 1, 1}, {1.0, 0.0}), g)[0], 1.168939, 1e-6);
}

TEST(Npd, MatchesDirectFormula) {
  std::mt19937_64 rng(1);
  DiagonalGaussianLatent<double> g(4);
  g.mu.value = oracle::random_tensor({1, 4, 1, 1}, rng);
  g.log_var.value = oracle::random_tensor({1, 4, 1, 1}, rng, 0.5);
  const Tensor<double> z = oracle::random_tensor({2, 4, 3, 3}, rng, 2.0);
  const Tensor<double> ld = oracle::random_tensor({2, 1, 3, 3}, rng);
  const Tensor<double> s = npd_map(z, g), s_ld = npd_map(z, g, &ld);
  ASSERT_EQ(s.shape(), (Shape{2, 1, 3, 3}));
  for (std::size_t n = 0; n < 2; ++n)
    for (std::size_t p = 0; p < 9; ++p) {
      std::vector<double> v(4);
      for (std::size_t c = 0; c < 4; ++c) v[c] = z[(n * 4 + c) * 9 + p];
      const double lp = oracle::log_density(v, g.mu.value.vec(), g.log_var.value.vec());
      EXPECT_NEAR(s[n * 9 + p], -lp / 4, 1e-6);
      EXPECT_NEAR(s_ld[n * 9 + p], -(lp + ld[n * 9 + p]) / 4, 1e-6);
    }
}

TEST(Npd, MonotoneInLikelihoodAndMinimalAtMean) {
  std::mt19937_64 rng(2);
  DiagonalGaussianLatent<double> g(3);
  g.mu.value = oracle::random_tensor({1, 3, 1, 1}, rng);
  g.log_var.value = oracle::random_tensor({1, 3, 1, 1}, rng, 0.3);
  const Tensor<double> z = oracle::random_tensor({1, 3, 1, 50}, rng, 2.0);
  const Tensor<double> s = npd_map(z, g);
  Tape<double> tape(false);
  const Tensor<double> lp = g.log_prob_map(tape, tape.constant(z)).value();
  Tensor<double> mu_map(Shape{1, 3, 1, 1});
  for (std::size_t c = 0; c < 3; ++c) mu_map[c] = g.mu.value[c];
  const double at_mu = npd_map(mu_map, g)[0];
  for (std::size_t i = 0; i < 50; ++i) {
    EXPECT_GT(s[i], at_mu);
    for (std::size_t j = 0; j < 50; ++j)
      if (lp[i] > lp[j]) {
        EXPECT_LT(s[i], s[j]);
      }
  }
}

TEST(Upsample, TwoByTwoToFourByFour) {
  const Tensor<float> src(Shape{2, 2}, {0.f, 1.f, 1.f, 0.f});
  const Tensor<float> up = upsample_bilinear(src, 4, 4);
  const std::vector<float> expected{0.f,   0.25f,  0.75f,  1.f,    0.25f, 0.375f, 0.625f, 0.75f,
                                    0.75f, 0.625f, 0.375f, 0.25f,  1.f,   0.75f,  0.25f,  0.f};
  for (std::size_t i = 0; i < 16; ++i) EXPECT_NEAR(up[i], expected[i], 1e-7) << i;
  EXPECT_THROW(upsample_bilinear(Tensor<float>(Shape{1, 2, 2}), 4, 4), ShapeError);
  EXPECT_THROW(upsample_bilinear(src, 0, 4), ValidationError);
}

TEST(Upsample, SameSizeIsIdentityAndConstantStaysConstant) {
  std::mt19937_64 rng(3);
  const Tensor<float> m = oracle::random_tensor_f({5, 7}, rng);
  EXPECT_EQ(upsample_bilinear(m, 5, 7), m);
  const Tensor<float> flat = upsample_bilinear(Tensor<float>(Shape{3, 3}, 2.5f), 11, 8);
  for (float v : flat.data()) EXPECT_EQ(v, 2.5f);
}

TEST(Heatmap, ConstantMapIsMidGrey) {
  TempDir tmp;
  ScoreMap s{Tensor<float>(Shape{2, 2}, 0.7f), {}, "c"};
  const HeatmapFiles f = export_heatmap(s, 8, 8, tmp.path(), "c");
  const Image png = read_png(f.heatmap);
  for (auto p : png.pixels) EXPECT_EQ(p, 128);
  const Tensor<float> raw = io::read_features(f.scores);
  ASSERT_EQ(raw.shape(), (Shape{8, 8}));
  for (float v : raw.data()) EXPECT_EQ(v, 0.7f);
}

TEST(Heatmap, RawScoresRoundTripBitExactly) {
  TempDir tmp;
  std::mt19937_64 rng(4);
  ScoreMap s{oracle::random_tensor_f({4, 6}, rng, 3.0), {}, "r"};
  const HeatmapFiles f = export_heatmap(s, 16, 24, tmp.path(), "r");
  EXPECT_TRUE(std::filesystem::exists(f.heatmap));
  EXPECT_EQ(f.scores.filename(), "r.score.ft");
  const Tensor<float> raw = io::read_features(f.scores);
  ASSERT_EQ(raw.shape(), s.upsampled.shape());
  EXPECT_EQ(std::memcmp(raw.data().data(), s.upsampled.data().data(), raw.size() * sizeof(float)), 0);
  const Image png = read_png(f.heatmap);
  EXPECT_EQ(png.height, 16u);
  EXPECT_EQ(png.width, 24u);
}

TEST(Heatmap, ExtremesMapToRampEnds) {
  const Image img = heatmap_image(Tensor<float>(Shape{1, 2}, {0.f, 1.f}));
  EXPECT_GT(img.at(0, 0, 2), img.at(0, 0, 0));  // low: blue
  EXPECT_GT(img.at(0, 1, 0), img.at(0, 1, 2));  // high: red
}

TEST(Npd, ScoreFeaturesAgreesWithFlowPlusLatent) {
  std::mt19937_64 rng(5);
  FlowStack<double> flow(FlowOptions{4, 2, 2.0, 3});
  DiagonalGaussianLatent<double> g(4);
  const Tensor<double> x = oracle::random_tensor({2, 4, 3, 3}, rng);
  const auto maps = score_features(flow, g, x);
  ASSERT_EQ(maps.size(), 2u);
  Tape<double> tape(false);
  const Tensor<double> z = flow.forward(tape, tape.constant(x)).z.value();
  const Tensor<double> direct = npd_map(z, g);
  for (std::size_t n = 0; n < 2; ++n)
    for (std::size_t p = 0; p < 9; ++p) EXPECT_EQ(maps[n][p], direct[n * 9 + p]);
}
