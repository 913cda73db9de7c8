#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

#include "gngan/eval.hpp"
#include "gngan/synthdata.hpp"
#include "oracles.hpp"

using namespace gngan;

namespace {

/// `per_mode[k]` points placed exactly on center k.
Matrix points_on_centers(const GaussianMixtureSpec& s, const std::vector<std::size_t>& per_mode) {
  const auto total = std::accumulate(per_mode.begin(), per_mode.end(), std::size_t{0});
  Matrix out(static_cast<Eigen::Index>(total), s.centers.cols());
  Eigen::Index r = 0;
  for (std::size_t k = 0; k < per_mode.size(); ++k)
    for (std::size_t i = 0; i < per_mode[k]; ++i) out.row(r++) = s.centers.row(static_cast<Eigen::Index>(k));
  return out;
}

Mlp zero_discriminator(std::size_t dim) {
  Rng rng(0);
  auto d = init_mlp(mlp_specs(dim, 1, 2, 16, Activation::sigmoid), rng);
  for (auto* p : d.parameters()) p->setZero();
  return d;
}

Mlp random_discriminator(std::uint64_t seed, std::size_t dim) {
  Rng rng(seed);
  auto d = init_mlp(mlp_specs(dim, 1, 2, 12, Activation::sigmoid), rng);
  std::mt19937_64 b(seed + 77);
  std::uniform_real_distribution<double> u(-0.5, 0.5);
  for (auto& l : d.layers)
    for (Eigen::Index k = 0; k < l.bias.size(); ++k) l.bias.data()[k] = u(b);
  return d;
}

}  // namespace

TEST(RegisterSamples, AtCenterAndBeyondThreshold) {
  const auto s = grid25_spec();
  const Matrix on = s.centers.row(7);
  EXPECT_EQ(register_samples(on, s)[0], std::optional<std::size_t>(7));
  Matrix off = s.centers.row(7);
  off(0, 0) += 4.0 * s.sigma;
  EXPECT_FALSE(register_samples(off, s)[0].has_value());
  Matrix edge = s.centers.row(3);
  edge(0, 1) -= 2.99 * s.sigma;
  EXPECT_EQ(register_samples(edge, s)[0], std::optional<std::size_t>(3));
}

TEST(RegisterSamples, ShapeMismatch) {
  EXPECT_THROW(register_samples(Matrix::Zero(3, 1), grid25_spec()), ShapeError);
}

TEST(RegisterSamples, PermutationEquivariant) {
  Rng rng(1);
  const auto s = grid25_spec();
  Matrix pts = sample_data(s, 300, rng);
  pts.topRows(50) *= 1.07;  // push some samples off their modes
  const auto base = register_samples(pts, s);
  std::vector<Eigen::Index> perm(static_cast<std::size_t>(pts.rows()));
  std::iota(perm.begin(), perm.end(), Eigen::Index{0});
  std::shuffle(perm.begin(), perm.end(), std::mt19937_64(5));
  Matrix shuffled(pts.rows(), pts.cols());
  for (std::size_t i = 0; i < perm.size(); ++i) shuffled.row(static_cast<Eigen::Index>(i)) = pts.row(perm[i]);
  const auto moved = register_samples(shuffled, s);
  for (std::size_t i = 0; i < perm.size(); ++i) EXPECT_EQ(moved[i], base[static_cast<std::size_t>(perm[i])]);
}

TEST(RegisterSamples, MixtureDrawsMostlyRegister) {
  // P(chi^2_2 <= 9) = 1 - exp(-4.5) ~ 0.9889.
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    Rng rng(seed);
    const auto s = grid25_spec();
    const auto r = mode_report(sample_data(s, 2000, rng), s);
    EXPECT_GE(static_cast<double>(r.registered_points), 0.98 * 2000.0) << "seed " << seed;
  }
}

TEST(RegisterSamples, RegisteredFractionMatchesChiSquareMass) {
  const double p = 1.0 - std::exp(-4.5);
  const double n = 200000.0;
  Rng rng(42);
  const auto s = grid25_spec();
  const auto r = mode_report(sample_data(s, 200000, rng), s);
  EXPECT_NEAR(static_cast<double>(r.registered_points), n * p, 5.0 * std::sqrt(n * p * (1.0 - p)));
}

TEST(ModeReport, UniformCountsAreBalanced) {
  const auto s = grid25_spec();
  const auto r = mode_report(points_on_centers(s, std::vector<std::size_t>(25, 80)), s);
  EXPECT_EQ(r.n_generated, 2000u);
  EXPECT_EQ(r.covered_modes, 25u);
  EXPECT_EQ(r.registered_points, 2000u);
  EXPECT_NEAR(*r.tv_true, 0.0, 1e-15);
}

TEST(ModeReport, AllMassOnOneMode) {
  const auto s = grid25_spec();
  std::vector<std::size_t> counts(25, 0);
  counts[12] = 2000;
  const auto r = mode_report(points_on_centers(s, counts), s);
  EXPECT_EQ(r.covered_modes, 1u);
  EXPECT_NEAR(*r.tv_true, 0.96, 1e-15);
}

TEST(ModeReport, CoverageThresholdIsTwenty) {
  const auto s = grid25_spec();
  std::vector<std::size_t> counts(25, 0);
  counts[0] = 19;
  counts[1] = 20;
  counts[2] = 21;
  EXPECT_EQ(mode_report(points_on_centers(s, counts), s).covered_modes, 2u);
}

TEST(ModeReport, NothingRegisteredLeavesTvUndefined) {
  const auto s = grid25_spec();
  const auto r = mode_report(Matrix::Constant(10, 2, 1.0), s, std::vector<double>(25, 0.04));
  EXPECT_EQ(r.registered_points, 0u);
  EXPECT_FALSE(r.tv_true.has_value());
  EXPECT_FALSE(r.tv_differential.has_value());
}

TEST(ModeReport, DifferentialAgainstReference) {
  const auto s = grid25_spec();
  std::vector<std::size_t> counts(25, 40);
  counts[0] = 1040;
  const auto r = mode_report(points_on_centers(s, counts), s, std::vector<double>(25, 0.04));
  ASSERT_TRUE(r.tv_differential.has_value());
  EXPECT_NEAR(*r.tv_differential, *r.tv_true, 1e-15);

  std::vector<double> ref(25, 0.0);
  for (std::size_t k = 0; k < 25; ++k) ref[k] = static_cast<double>(counts[k]) / 2000.0;
  EXPECT_NEAR(*mode_report(points_on_centers(s, counts), s, ref).tv_differential, 0.0, 1e-15);
}

TEST(ModeReport, InvariantsOnRandomCounts) {
  std::mt19937_64 rng(11);
  const auto s = grid25_spec();
  for (int t = 0; t < 50; ++t) {
    std::vector<std::size_t> counts(25);
    for (auto& c : counts) c = std::uniform_int_distribution<std::size_t>(0, 120)(rng);
    Matrix pts = points_on_centers(s, counts);
    const Eigen::Index stray = std::uniform_int_distribution<Eigen::Index>(0, 30)(rng);
    pts.conservativeResize(pts.rows() + stray, Eigen::NoChange);
    pts.bottomRows(stray).setConstant(1.0);  // between modes
    const auto r = mode_report(pts, s);
    EXPECT_LE(r.covered_modes, 25u);
    EXPECT_LE(r.registered_points, r.n_generated);
    EXPECT_EQ(std::accumulate(r.per_mode_counts.begin(), r.per_mode_counts.end(), std::size_t{0}), r.registered_points);
    EXPECT_EQ(r.per_mode_counts, counts);
    if (r.tv_true) {
      EXPECT_GE(*r.tv_true, 0.0);
      EXPECT_LE(*r.tv_true, 0.96 + 1e-15);
    }
  }
}

TEST(ModeReport, TrainingDataScoresAsBalanced) {
  Rng rng(3);
  const auto s = grid25_spec();
  const Matrix train = sample_data(s, 50000, rng);
  const auto ref = mode_proportions(train, s);
  const auto r = mode_report(train.topRows(2000), s, ref);
  EXPECT_EQ(r.covered_modes, 25u);
  EXPECT_LE(*r.tv_true, 0.1);
  EXPECT_LE(*r.tv_differential, 0.1);
}

TEST(ModeReport, CsvRow) {
  const auto s = tri1d_spec();
  auto r = mode_report(points_on_centers(s, {30, 0, 10}), s);
  r.seed = 4;
  std::ostringstream os;
  write_mode_report_header(os);
  write_mode_report_row(os, r);
  const auto text = os.str();
  const auto header = std::string("seed,n_generated,covered_modes,registered_points,tv_true,tv_differential,per_mode_counts\n");
  ASSERT_EQ(text.substr(0, header.size()), header);
  const auto row = text.substr(header.size());
  EXPECT_EQ(row.substr(0, 10), "4,40,1,40,");
  EXPECT_NEAR(std::stod(row.substr(10)), 5.0 / 12.0, 1e-15);
  EXPECT_EQ(row.substr(row.size() - 10), ",,30;0;10\n");
}

TEST(GradientMap, LatticeCount) {
  const auto field = gradient_map(zero_discriminator(2), {}, 40, 40);
  EXPECT_EQ(field.size(), 1600u);
  EXPECT_DOUBLE_EQ(field.front().point[0], -5.0);
  EXPECT_DOUBLE_EQ(field.back().point[1], 5.0);
}

TEST(GradientMap, ZeroDiscriminatorGivesZeroField) {
  for (const auto& s : gradient_map(zero_discriminator(2), {}, 9, 7)) {
    EXPECT_EQ(s.gradient[0], 0.0);
    EXPECT_EQ(s.gradient[1], 0.0);
  }
}

TEST(GradientMap, LinearPreActivationGivesParallelField) {
  Mlp d;
  d.layers.push_back({make_matrix({{1.5, -0.5}}), make_matrix({{0.2}}), Activation::sigmoid});
  for (const auto& s : gradient_map(d, {-2, 2, -2, 2}, 11, 11)) {
    EXPECT_NEAR(s.gradient[0] * -0.5 - s.gradient[1] * 1.5, 0.0, 1e-15);
    EXPECT_GT(s.gradient[0], 0.0);
  }
}

TEST(GradientMap, MatchesFiniteDifferences) {
  const auto d = random_discriminator(5, 2);
  const auto field = gradient_map(d, {}, 40, 40);
  std::mt19937_64 pick(6);
  int checked = 0;
  while (checked < 20) {
    const auto& s = field[std::uniform_int_distribution<std::size_t>(0, field.size() - 1)(pick)];
    Matrix p = make_matrix({{s.point[0], s.point[1]}});
    if (oracle::min_relu_margin(d, p) < 1e-3) continue;
    const Matrix fd = oracle::central_difference([&] { return evaluate(d, p)(0, 0); }, p, 1e-5);
    for (int j = 0; j < 2; ++j) EXPECT_LE(oracle::relative_error(s.gradient[static_cast<std::size_t>(j)], fd(0, j)), 1e-5);
    ++checked;
  }
}

TEST(GradientMap, OneDimensionalUsesXAxis) {
  const auto field = gradient_map(random_discriminator(2, 1), {-3, 3, 0, 0}, 13, 99);
  ASSERT_EQ(field.size(), 13u);
  EXPECT_EQ(field[0].point.size(), 1u);
  EXPECT_DOUBLE_EQ(field[6].point[0], 0.0);
}

TEST(GradientMap, Errors) {
  EXPECT_THROW(gradient_map(zero_discriminator(2), {}, 0, 5), ValueError);
  EXPECT_THROW(gradient_map(zero_discriminator(3), {}, 5, 5), ValueError);
}

TEST(GradientMap, CsvFormat) {
  Mlp d;
  d.layers.push_back({make_matrix({{1.0, 0.0}}), make_matrix({{0.0}}), Activation::sigmoid});
  std::ostringstream os;
  write_gradient_map_csv(os, gradient_map(d, {0, 0, 0, 0}, 1, 1));
  EXPECT_EQ(os.str(), "x,y,gx,gy\n0,0,0.25,0\n");
}

TEST(ScoreCurve, ZeroDiscriminatorIsHalf) {
  const auto xs = linspace(-4, 4, 33);
  for (const auto& p : score_curve_1d(zero_discriminator(1), xs)) EXPECT_EQ(p.score, 0.5);
}

TEST(ScoreCurve, MonotonePreActivation) {
  Mlp d;
  d.layers.push_back({make_matrix({{-0.7}}), make_matrix({{0.3}}), Activation::sigmoid});
  const auto curve = score_curve_1d(d, linspace(-4, 4, 101));
  for (std::size_t i = 1; i < curve.size(); ++i) EXPECT_LT(curve[i].score, curve[i - 1].score);
}

TEST(ScoreCurve, MatchesForwardOracle) {
  const auto d = random_discriminator(9, 1);
  const auto xs = linspace(-4, 4, 401);
  const auto curve = score_curve_1d(d, xs);
  for (std::size_t i = 0; i < xs.size(); ++i) {
    EXPECT_NEAR(curve[i].score, oracle::forward_row(d, {xs[i]})[0], 1e-12);
    EXPECT_GT(curve[i].score, 0.0);
    EXPECT_LT(curve[i].score, 1.0);
  }
  EXPECT_THROW(score_curve_1d(zero_discriminator(2), xs), ValueError);
}

TEST(ScoreCurve, CsvRoundTripsDoubles) {
  const auto curve = score_curve_1d(random_discriminator(1, 1), std::vector<double>{0.1});
  std::ostringstream os;
  write_score_curve_csv(os, curve);
  const auto text = os.str();
  const auto comma = text.find(',', 8);
  EXPECT_EQ(std::stod(text.substr(comma + 1)), curve[0].score);
}
