#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "mzi/rng.hpp"
#include "mzi/wavepacket.hpp"

using namespace mzi;

namespace {

GaussianPacket packet_at(Vec2 origin, Vec2 dir, double birth = 0.0) {
  GaussianPacket p;
  p.origin = origin;
  p.direction = dir;
  p.birth_time = birth;
  return p;
}

// Riemann sum of |psi|^2 over a square around the packet centre.
double grid_norm(const GaussianPacket& p, double t, double half, double h) {
  const Vec2 c = center_at(p, t);
  double s = 0.0;
  for (double y = c.y - half; y <= c.y + half; y += h)
    for (double x = c.x - half; x <= c.x + half; x += h) s += std::norm(amplitude_at(p, {x, y}, t));
  return s * h * h;
}

}  // namespace

TEST(Wavepacket, CentroidMovesAtGroupSpeed) {
  const auto p = packet_at({0, 0}, {1, 0});
  EXPECT_DOUBLE_EQ(p.constants.group_speed(), 0.4);
  EXPECT_DOUBLE_EQ(center_at(p, 2000).x, 800.0);
  EXPECT_DOUBLE_EQ(center_at(p, 8000).x, 3200.0);
  EXPECT_DOUBLE_EQ(center_at(p, 8000).y, 0.0);
}

TEST(Wavepacket, WidthFollowsSpreadingLaw) {
  const auto p = packet_at({0, 0}, {1, 0});
  EXPECT_DOUBLE_EQ(width_at(p, 0), 50.0);
  EXPECT_NEAR(width_at(p, 5000), 70.7107, 1e-4);
  EXPECT_NEAR(width_at(p, 8000), 94.3398, 1e-4);
}

TEST(Wavepacket, BeforeBirthIsAPreconditionError) {
  const auto p = packet_at({0, 0}, {1, 0}, 100.0);
  EXPECT_THROW(center_at(p, 99.0), PreconditionError);
  EXPECT_THROW(width_at(p, 0.0), PreconditionError);
  EXPECT_THROW(amplitude_at(p, {0, 0}, 50.0), PreconditionError);
}

TEST(Wavepacket, DensityIsNormalizedOnAGrid) {
  const auto p = packet_at({-800, 0}, {1, 0});
  for (double t : {0.0, 2000.0, 8000.0}) EXPECT_NEAR(grid_norm(p, t, 8 * width_at(p, t), 2.0), 1.0, 1e-9) << t;
}

TEST(Wavepacket, DensityPeakSitsAtTheCentre) {
  const auto p = packet_at({0, -800}, {0, 1});
  const double t = 3000;
  const Vec2 c = center_at(p, t);
  const double peak = std::norm(amplitude_at(p, c, t));
  for (Vec2 d : {Vec2{1, 0}, Vec2{-1, 0}, Vec2{0, 1}, Vec2{0, -1}})
    EXPECT_LT(std::norm(amplitude_at(p, c + d * 3.0, t)), peak);
  // Separable: the peak density is the product of the two axis peaks.
  const double w = width_at(p, t);
  EXPECT_NEAR(peak, 1.0 / (2 * std::numbers::pi * w * w), 1e-15);
}

TEST(Wavepacket, PhaseAdvancesAlongTheDirection) {
  // d(arg psi)/ds near the centre approaches k at t = 0.
  const auto p = packet_at({0, 0}, {0, 1});
  const double h = 1e-3;
  const Complex a = amplitude_at(p, {0, -h}, 0), b = amplitude_at(p, {0, h}, 0);
  EXPECT_NEAR(std::arg(b / a) / (2 * h), 0.4, 1e-9);
}

TEST(Wavepacket, OverlapMatchesQuadrature) {
  SplitMix64 rng(11);
  const Vec2 dirs[] = {{1, 0}, {0, 1}, {-1, 0}, {0, -1}};
  for (int trial = 0; trial < 6; ++trial) {
    const auto a = packet_at({rng.uniform() * 60 - 30, rng.uniform() * 60 - 30}, dirs[trial % 4]);
    const auto b = packet_at({rng.uniform() * 60 - 30, rng.uniform() * 60 - 30}, dirs[rng.below(4)]);
    Complex q{};
    const double h = 1.0;
    for (double y = -400; y <= 400; y += h)
      for (double x = -400; x <= 400; x += h)
        q += std::conj(amplitude_at(a, {x, y}, 0)) * amplitude_at(b, {x, y}, 0);
    q *= h * h;
    const Complex z = shape_overlap(a, b);
    EXPECT_NEAR(z.real(), q.real(), 1e-9) << trial;
    EXPECT_NEAR(z.imag(), q.imag(), 1e-9) << trial;
  }
}

TEST(Wavepacket, OverlapIsConstantInTime) {
  // Evaluated by quadrature at a later time, the overlap is unchanged.
  auto a = packet_at({0, 0}, {1, 0});
  auto b = packet_at({20, 10}, {1, 0});
  const double t = 1500;
  Complex q{};
  const double h = 1.0;
  const Vec2 c = center_at(a, t);
  for (double y = c.y - 500; y <= c.y + 500; y += h)
    for (double x = c.x - 500; x <= c.x + 500; x += h)
      q += std::conj(amplitude_at(a, {x, y}, t)) * amplitude_at(b, {x, y}, t);
  q *= h * h;
  const Complex z = shape_overlap(a, b);
  EXPECT_NEAR(std::abs(z - q), 0.0, 1e-9);
}

TEST(Wavepacket, GramNormOfCoincidentPacketsAddsAmplitudes) {
  auto a = packet_at({0, 0}, {1, 0});
  auto b = a;
  a.amplitude = {0.5, 0};
  b.amplitude = {0.5, 0};
  const GaussianPacket both[] = {a, b};
  EXPECT_NEAR(gram_norm(both), 1.0, 1e-15);
  b.amplitude = {-0.5, 0};
  const GaussianPacket cancel[] = {a, b};
  EXPECT_NEAR(gram_norm(cancel), 0.0, 1e-15);
}

TEST(Wavepacket, GramNormOfDisjointPacketsAddsProbabilities) {
  auto a = packet_at({0, 0}, {1, 0});
  auto b = packet_at({0, 800}, {0, 1});
  a.amplitude = b.amplitude = {std::sqrt(0.5), 0};
  const GaussianPacket both[] = {a, b};
  EXPECT_NEAR(gram_norm(both), 1.0, 1e-12);
}

TEST(Wavepacket, FieldRequiresSharedConstants) {
  auto a = packet_at({0, 0}, {1, 0});
  auto b = a;
  b.constants.sigma0 = 40;
  const GaussianPacket both[] = {a, b};
  EXPECT_THROW(field_at(both, {0, 0}, 0), PreconditionError);
  EXPECT_THROW(shape_overlap(a, b), PreconditionError);
}

TEST(Wavepacket, ConstantsAreValidated) {
  PhysicalConstants c;
  EXPECT_NO_THROW(c.validate());
  c.mass = 0;
  EXPECT_THROW(c.validate(), ConfigurationError);
  c = {};
  c.sigma0 = -1;
  EXPECT_THROW(c.validate(), ConfigurationError);
}

TEST(Wavepacket, DensityGridMassAndValidation) {
  const auto p = packet_at({0, 0}, {1, 0});
  const GaussianPacket one[] = {p};
  const GridSpec g{-400, 400, -400, 400, 401, 401};
  const auto f = density_grid(one, g, 0);
  EXPECT_NEAR(f.total_mass(), 1.0, 1e-9);
  // Symmetric grid: the two half-planes carry equal mass.
  const double right = f.mass_where([](Vec2 r) { return r.x > 0; });
  const double left = f.mass_where([](Vec2 r) { return r.x < 0; });
  EXPECT_NEAR(right, left, 1e-12);
  EXPECT_NEAR(right + left + f.mass_where([](Vec2 r) { return r.x == 0; }), f.total_mass(), 1e-12);
  EXPECT_THROW(density_grid(one, GridSpec{0, 0, 0, 1, 4, 4}, 0), ConfigurationError);
  EXPECT_THROW(density_grid(one, GridSpec{0, 1, 0, 1, 1, 4}, 0), ConfigurationError);
}

TEST(Wavepacket, ProductGridIsZeroWithoutEitherLeg) {
  const auto p = packet_at({0, 0}, {1, 0});
  const GaussianPacket one[] = {p};
  const GridSpec g{-100, 100, -100, 100, 11, 11};
  EXPECT_EQ(product_density_grid(one, 0, {}, 0, 1.0, g).max(), 0.0);
  EXPECT_EQ(product_density_grid(one, 0, one, 0, 0.0, g).max(), 0.0);
  EXPECT_GT(product_density_grid(one, 0, one, 0, 1.0, g).max(), 0.0);
}
