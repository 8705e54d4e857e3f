#include <gtest/gtest.h>

#include <cmath>

#include "mzi/oracle.hpp"

using namespace mzi;
using namespace mzi::oracle;

namespace {

SampledWavefunction sampled(double x0, double sigma, double k, std::size_t n, double dx, double x_min) {
  SampledWavefunction f;
  f.x_min = x_min;
  f.dx = dx;
  f.values.resize(n);
  for (std::size_t j = 0; j < n; ++j) f.values[j] = free_gaussian_1d(f.x(j) - x0, 0.0, sigma, k, 1.0, 1.0);
  return f;
}

GaussianPacket unit_packet() {
  GaussianPacket p;
  p.direction = {1, 0};
  return p;
}

}  // namespace

TEST(Oracle, ClosedFormMatchesSpectralEvolution) {
  const auto p = unit_packet();
  const auto c = compare_axes(p, 1000.0, {});
  EXPECT_LT(c.longitudinal, 1e-8);
  EXPECT_LT(c.transverse, 1e-8);
}

TEST(Oracle, ClosedFormMatchesAtLaterTimes) {
  const auto p = unit_packet();
  for (double t : {2000.0, 5000.0, 8000.0}) EXPECT_LT(compare_closed_form(p, t), 1e-8) << t;
}

TEST(Oracle, WidthMatchesSecondMoment) {
  const auto p = unit_packet();
  for (double t : {1000.0, 5000.0, 8000.0}) {
    const auto w = compare_width(p, t);
    EXPECT_LT(w.relative_error(), 1e-6) << t << " oracle " << w.oracle << " closed " << w.closed;
  }
}

TEST(Oracle, LaterBirthTimeOnlyShiftsTheClock) {
  auto p = unit_packet();
  p.birth_time = 2000;
  p.origin = {123, -45};
  EXPECT_LT(compare_closed_form(p, 3000.0), 1e-8);
}

TEST(Oracle, TwoDimensionalSpotCheck) {
  const auto p = unit_packet();
  EXPECT_LT(compare_closed_form_2d(p, 1000.0, 1024, 2.0), 1e-8);
  // Half the side wraps the Gaussian tails around: caught, not reported as an error figure.
  EXPECT_THROW(compare_closed_form_2d(p, 1000.0, 512, 2.0), DomainTooSmallError);
}

TEST(Spectral, NormIsConserved) {
  const auto f = sampled(0, 50, 0.4, 1u << 14, 0.5, -2048);
  const auto g = spectral_evolve(f, 3000, 1.0);
  EXPECT_NEAR(g.norm(), f.norm(), 1e-12);
  EXPECT_NEAR(f.norm(), 1.0, 1e-12);
}

TEST(Spectral, CentroidDriftsAtGroupSpeed) {
  const auto f = sampled(0, 50, 0.4, 1u << 14, 0.5, -2048);
  EXPECT_NEAR(spectral_evolve(f, 2000, 1.0).mean(), 800.0, 1e-8);
}

TEST(Spectral, ComposesInTime) {
  const auto f = sampled(0, 30, 0.2, 1u << 13, 0.5, -1024);
  const auto a = spectral_evolve(spectral_evolve(f, 700, 1.0), 500, 1.0);
  const auto b = spectral_evolve(f, 1200, 1.0);
  EXPECT_LT(relative_l2(a.values, b.values), 1e-12);
}

TEST(Spectral, BackwardEvolutionUndoesForward) {
  const auto f = sampled(0, 30, 0.2, 1u << 13, 0.5, -1024);
  const auto back = spectral_evolve(spectral_evolve(f, 900, 1.0), -900, 1.0);
  EXPECT_LT(relative_l2(back.values, f.values), 1e-12);
}

TEST(Spectral, ConjugationReversesTime) {
  // conj(evolve(f, t)) == evolve(conj f, -t): the advanced equation is the
  // complex conjugate of the retarded one.
  const auto f = sampled(0, 30, 0.3, 1u << 13, 0.5, -1024);
  auto fc = f;
  for (auto& v : fc.values) v = std::conj(v);
  const auto lhs = spectral_evolve(f, 800, 1.0);
  const auto rhs = spectral_evolve(fc, -800, 1.0);
  std::vector<Complex> lc(lhs.values.size());
  for (std::size_t j = 0; j < lc.size(); ++j) lc[j] = std::conj(lhs.values[j]);
  EXPECT_LT(relative_l2(lc, rhs.values), 1e-12);
}

TEST(Spectral, ZeroTimeIsIdentity) {
  const auto f = sampled(0, 30, 0.3, 1u << 10, 0.5, -256);
  EXPECT_EQ(spectral_evolve(f, 0, 1.0).values, f.values);
}

TEST(Spectral, SmallDomainIsDetected) {
  // 256 samples of width 0.5 cannot hold a packet of width 50.
  const auto f = sampled(0, 50, 0.4, 256, 0.5, -64);
  EXPECT_THROW(spectral_evolve(f, 100, 1.0), DomainTooSmallError);
  // Fits initially but drifts into the boundary.
  const auto g = sampled(0, 20, 0.4, 1u << 10, 0.5, -256);
  EXPECT_THROW(spectral_evolve(g, 1000, 1.0), DomainTooSmallError);
}

TEST(Spectral, NonPowerOfTwoIsRejected) {
  auto f = sampled(0, 10, 0.0, 1000, 0.5, -250);
  EXPECT_THROW(spectral_evolve(f, 10, 1.0), PreconditionError);
}

TEST(Oracle, BeforeBirthIsRejected) {
  auto p = unit_packet();
  p.birth_time = 10;
  EXPECT_THROW(compare_closed_form(p, 5), PreconditionError);
}
