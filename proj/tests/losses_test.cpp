#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "flowclas.hpp"
#include "support/oracles.hpp"

using namespace flowclas;

namespace {

Tensor<double> random_mask(const Shape& s, std::mt19937_64& rng, double p = 0.3) {
  Tensor<double> m(s);
  std::bernoulli_distribution b(p);
  for (auto& v : m.data()) v = b(rng) ? 1.0 : 0.0;
  return m;
}

std::vector<std::vector<double>> random_unit_rows(std::size_t n, std::size_t d, std::mt19937_64& rng) {
  std::normal_distribution<double> g;
  std::vector<std::vector<double>> out(n, std::vector<double>(d));
  for (auto& r : out) {
    double s = 0;
    for (auto& v : r) {
      v = g(rng);
      s += v * v;
    }
    for (auto& v : r) v /= std::sqrt(s);
  }
  return out;
}

Tensor<double> to_tensor(const std::vector<std::vector<double>>& rows) {
  Tensor<double> t(Shape{rows.size(), rows[0].size()});
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t k = 0; k < rows[i].size(); ++k) t[i * rows[i].size() + k] = rows[i][k];
  return t;
}

double con(const std::vector<std::vector<double>>& rows, const std::vector<int>& labels, std::size_t anchors, double tau) {
  Tape<double> tape(false);
  return supervised_contrastive(tape.constant(to_tensor(rows)), labels, anchors, tau).loss.value().item();
}

}  // namespace

TEST(MaskedNll, AllInliersConstantMap) {
  Tape<double> tape(false);
  const Shape s{2, 1, 3, 3};
  const double v = masked_nll(tape.constant(Tensor<double>(s, -0.918939)), tape.constant(Tensor<double>(s)), Tensor<double>(s))
                       .value()
                       .item();
  EXPECT_NEAR(v, 0.918939, 1e-12);
}

TEST(MaskedNll, SingleSurvivingPixel) {
  Tape<double> tape(false);
  const Shape s{1, 1, 2, 2};
  Tensor<double> lp(s, 50.0), ld(s, 7.0), mask(s, 1.0);
  lp[2] = -2.0;
  ld[2] = 0.5;
  mask[2] = 0.0;
  EXPECT_NEAR(masked_nll(tape.constant(lp), tape.constant(ld), mask).value().item(), 1.5, 1e-12);
}

TEST(MaskedNll, MatchesLoopOracle) {
  std::mt19937_64 rng(1);
  const Shape s{3, 1, 4, 5};
  const Tensor<double> lp = oracle::random_tensor(s, rng), ld = oracle::random_tensor(s, rng), m = random_mask(s, rng);
  double acc = 0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < m.size(); ++i)
    if (m[i] == 0.0) {
      acc -= lp[i] + ld[i];
      ++n;
    }
  Tape<double> tape(false);
  EXPECT_NEAR(masked_nll(tape.constant(lp), tape.constant(ld), m).value().item(), acc / n, 1e-6);
}

TEST(MaskedNll, IgnoresMaskedPixels) {
  std::mt19937_64 rng(2);
  const Shape s{2, 1, 4, 4};
  Tensor<double> lp = oracle::random_tensor(s, rng), ld = oracle::random_tensor(s, rng);
  const Tensor<double> m = random_mask(s, rng, 0.5);
  Tape<double> tape(false);
  const double before = masked_nll(tape.constant(lp), tape.constant(ld), m).value().item();
  for (std::size_t i = 0; i < m.size(); ++i)
    if (m[i] == 1.0) {
      lp[i] += 100.0;
      ld[i] -= 37.0;
    }
  EXPECT_EQ(masked_nll(tape.constant(lp), tape.constant(ld), m).value().item(), before);
}

TEST(MaskedNll, AllOutlierMaskIsDegenerate) {
  Tape<double> tape(false);
  const Shape s{1, 1, 2, 2};
  EXPECT_THROW(masked_nll(tape.constant(Tensor<double>(s)), tape.constant(Tensor<double>(s)), Tensor<double>(s, 1.0)),
               DegenerateBatch);
  EXPECT_THROW(masked_nll(tape.constant(Tensor<double>(s)), tape.constant(Tensor<double>(s)), Tensor<double>(Shape{1, 1, 2, 3})),
               ShapeError);
}

TEST(OutlierMin, Examples) {
  Tape<double> tape(false);
  const Shape s{1, 1, 2, 2};
  std::size_t count = 9;
  EXPECT_EQ(outlier_likelihood_min(tape.constant(Tensor<double>(s, 3.0)), tape.constant(Tensor<double>(s)), Tensor<double>(s), &count)
                .value()
                .item(),
            0.0);
  EXPECT_EQ(count, 0u);
  Tensor<double> lp(s, 5.0), mask(s);
  lp[1] = -1.0;
  mask[1] = 1.0;
  EXPECT_NEAR(outlier_likelihood_min(tape.constant(lp), tape.constant(Tensor<double>(s)), mask, &count).value().item(), -1.0,
              1e-15);
  EXPECT_EQ(count, 1u);
}

TEST(OutlierMin, MatchesLoopOracle) {
  std::mt19937_64 rng(3);
  const Shape s{2, 1, 5, 3};
  const Tensor<double> lp = oracle::random_tensor(s, rng), ld = oracle::random_tensor(s, rng), m = random_mask(s, rng);
  double acc = 0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < m.size(); ++i)
    if (m[i] == 1.0) {
      acc += lp[i] + ld[i];
      ++n;
    }
  Tape<double> tape(false);
  EXPECT_NEAR(outlier_likelihood_min(tape.constant(lp), tape.constant(ld), m).value().item(), acc / n, 1e-6);
}

TEST(Contrastive, EqualSimilaritiesGiveLogTwo) {
  // a.p = a.n = 0.3 for unit vectors in 3-D.
  const double c = 0.3, s = std::sqrt(1 - c * c);
  const std::vector<std::vector<double>> rows{{1, 0, 0}, {c, s, 0}, {c, -s, 0}};
  for (double tau : {0.05, 0.1, 1.0, 7.0}) EXPECT_NEAR(con(rows, {0, 0, 1}, 1, tau), std::log(2.0), 1e-12);
}

TEST(Contrastive, ClosedFormOpposite) {
  const std::vector<std::vector<double>> rows{{1, 0}, {1, 0}, {-1, 0}};
  EXPECT_NEAR(con(rows, {0, 0, 1}, 1, 0.1), std::log1p(std::exp(-20.0)), 1e-15);
  EXPECT_NEAR(con(rows, {0, 0, 1}, 1, 0.1), 2.061e-9, 1e-12);
}

TEST(Contrastive, MatchesDirectFormula) {
  std::mt19937_64 rng(4);
  const auto rows = random_unit_rows(6, 4, rng);
  const std::vector<int> labels{0, 1, 0, 1, 1, 0};
  EXPECT_NEAR(con(rows, labels, 6, 0.10), oracle::contrastive(rows, labels, 6, 0.10), 1e-6);
  const auto big = random_unit_rows(40, 8, rng);
  std::vector<int> lab(40);
  for (std::size_t i = 0; i < 40; ++i) lab[i] = static_cast<int>(i % 3 == 0);
  EXPECT_NEAR(con(big, lab, 25, 0.07), oracle::contrastive(big, lab, 25, 0.07), 1e-6);
}

TEST(Contrastive, RotationInvariant) {
  std::mt19937_64 rng(5);
  auto rows = random_unit_rows(8, 3, rng);
  const std::vector<int> labels{0, 0, 0, 1, 1, 1, 0, 1};
  const double before = con(rows, labels, 8, 0.2);
  const double a = 0.7, b = -1.1;  // rotation about z then x
  for (auto& r : rows) {
    const double x = std::cos(a) * r[0] - std::sin(a) * r[1], y = std::sin(a) * r[0] + std::cos(a) * r[1];
    const double y2 = std::cos(b) * y - std::sin(b) * r[2], z2 = std::sin(b) * y + std::cos(b) * r[2];
    r = {x, y2, z2};
  }
  EXPECT_NEAR(con(rows, labels, 8, 0.2), before, 1e-10);
}

TEST(Contrastive, DecreasesAsPositiveMovesCloser) {
  double prev = 1e9;
  for (double c : {-0.5, 0.0, 0.4, 0.8, 0.99}) {
    const double s = std::sqrt(1 - c * c);
    const std::vector<std::vector<double>> rows{{1, 0}, {c, s}, {0, -1}, {0.2, -std::sqrt(0.96)}};
    const double v = con(rows, {0, 0, 1, 1}, 1, 0.3);
    EXPECT_LT(v, prev);
    prev = v;
  }
}

TEST(Contrastive, SkipsAnchorsWithoutPartnersAndRejectsAllSkipped) {
  std::mt19937_64 rng(6);
  const auto rows = random_unit_rows(4, 3, rng);
  Tape<double> tape(false);
  auto t = supervised_contrastive(tape.constant(to_tensor(rows)), {0, 1, 1, 1}, 2, 0.1);
  EXPECT_EQ(t.anchors_skipped, 1u);
  EXPECT_EQ(t.anchors_used, 1u);
  EXPECT_EQ(t.pairs, 2u);
  EXPECT_THROW(supervised_contrastive(tape.constant(to_tensor(rows)), {1, 1, 1, 1}, 4, 0.1), DegenerateBatch);
  EXPECT_THROW(supervised_contrastive(tape.constant(to_tensor(rows)), {0, 1, 0, 1}, 4, 0.0), ValidationError);
  EXPECT_THROW(supervised_contrastive(tape.constant(to_tensor(rows)), {0, 1, 0}, 2, 0.1), ShapeError);
}

TEST(TotalLoss, Examples) {
  LossBreakdown p;
  p.l_ml = 2.0;
  p.l_con = 0.5;
  EXPECT_DOUBLE_EQ(total_loss(p, 1.0, Variant::kContrastive), 2.5);
  p.l_con = 0.7;
  EXPECT_DOUBLE_EQ(total_loss(p, 0.0, Variant::kContrastive), 0.7);
  p.l_ml = 0.918939;
  p.l_min = -4.0;
  EXPECT_DOUBLE_EQ(total_loss(p, 1.0, Variant::kMlOnly), 0.918939);
  EXPECT_DOUBLE_EQ(total_loss(p, 1.0, Variant::kMin), 0.918939 - 4.0);
  EXPECT_EQ(parse_variant("min"), Variant::kMin);
  EXPECT_THROW(parse_variant("max"), ValidationError);
}

TEST(LossGradients, MatchFiniteDifferences) {
  std::mt19937_64 rng(7);
  const Shape s{2, 1, 3, 3};
  Parameter<double> lp("lp", oracle::random_tensor(s, rng)), ld("ld", oracle::random_tensor(s, rng));
  const Tensor<double> m = random_mask(s, rng, 0.4);
  EXPECT_LT(oracle::gradient_error([&](Tape<double>& t) { return masked_nll(t.parameter(lp), t.parameter(ld), m); },
                                   {&lp, &ld}),
            1e-3);
  EXPECT_LT(oracle::gradient_error(
                [&](Tape<double>& t) { return outlier_likelihood_min(t.parameter(lp), t.parameter(ld), m); }, {&lp, &ld}),
            1e-3);
  // Unnormalised rows, normalised on the tape, so the gradient is unconstrained.
  Parameter<double> e("e", oracle::random_tensor({7, 4}, rng));
  const std::vector<int> labels{0, 1, 1, 0, 1, 0, 0};
  EXPECT_LT(oracle::gradient_error(
                [&](Tape<double>& t) { return supervised_contrastive(l2_normalize_channelwise(t.parameter(e)), labels, 5, 0.1).loss; },
                {&e}),
            1e-3);
}
