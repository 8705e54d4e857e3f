#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <numbers>

#include "mzi/optics.hpp"
#include "mzi/rng.hpp"
#include "mzi/scenario.hpp"

using namespace mzi;

namespace {

constexpr double h = std::numbers::sqrt2 / 2.0;
constexpr double inf = std::numeric_limits<double>::infinity();

GaussianPacket arriving(Vec2 at, Vec2 dir, double t) {
  GaussianPacket p;
  p.direction = dir;
  p.origin = at - dir * (p.constants.group_speed() * t);
  return p;
}

OpticalElement splitter(std::vector<PresenceInterval> presence = {{-inf, inf}}) {
  return {"B", BeamSplitter{{-h, h}}, {0, 0}, std::move(presence)};
}

}  // namespace

TEST(Presence, IntervalClosedness) {
  const PresenceInterval iv{5000, 8000};
  EXPECT_FALSE(iv.contains(4999.999));
  EXPECT_TRUE(iv.contains(5000));
  EXPECT_TRUE(iv.contains(7999.999));
  EXPECT_FALSE(iv.contains(8000));
  const PresenceInterval rev{0, 3000, false, true};
  EXPECT_FALSE(rev.contains(0));
  EXPECT_TRUE(rev.contains(3000));
}

TEST(Presence, ElementValidation) {
  auto e = splitter({{0, 100}, {100, 200}});
  EXPECT_NO_THROW(validate_element(e));  // [0,100) then [100,200) touch without overlap
  e.presence = {{0, 100, true, true}, {100, 200}};
  EXPECT_THROW(validate_element(e), ConfigurationError);
  e.presence = {{200, 100}};
  EXPECT_THROW(validate_element(e), ConfigurationError);
  e.presence = {{300, 400}, {0, 100}};
  EXPECT_THROW(validate_element(e), ConfigurationError);
  e = splitter();
  e.kind = Mirror{{1, 1}};
  EXPECT_THROW(validate_element(e), ConfigurationError);
}

TEST(Splitter, FactorsAreUnitaryWithCoatingPhase) {
  const BeamSplitter bs{{-h, h}};
  const auto coated = splitter_factors(bs, {1, 0});
  EXPECT_TRUE(coated.dielectric_hit);
  EXPECT_DOUBLE_EQ(coated.reflect.real(), -h);
  EXPECT_DOUBLE_EQ(coated.transmit.real(), h);
  const auto glass = splitter_factors(bs, {0, 1});
  EXPECT_FALSE(glass.dielectric_hit);
  EXPECT_DOUBLE_EQ(glass.reflect.real(), h);
  for (const auto& f : {coated, glass})
    EXPECT_NEAR(std::norm(f.reflect) + std::norm(f.transmit), 1.0, 1e-15);
  // Stokes relation r' = -r: the two faces have opposite reflection signs.
  EXPECT_DOUBLE_EQ(coated.reflect.real(), -glass.reflect.real());
}

TEST(Splitter, GrazingIncidenceIsAGeometryError) {
  EXPECT_THROW(splitter_factors(BeamSplitter{{-h, h}}, {h, h}), GeometryError);
}

TEST(Scatter, AlwaysSplitMakesTwoMirrorImages) {
  const auto e = splitter();
  const auto p = arriving(e.position, {1, 0}, 2000);
  SplitMix64 rng(1);
  const auto r = scatter(p, e, 2000, SplitterMode::AlwaysSplit, rng);
  ASSERT_EQ(r.children.size(), 2u);
  const auto& refl = r.children[0];
  const auto& trans = r.children[1];
  EXPECT_EQ(r.kinds[0], Interaction::Reflect);
  EXPECT_NEAR(refl.direction.x, 0.0, 1e-15);
  EXPECT_NEAR(refl.direction.y, 1.0, 1e-15);
  EXPECT_EQ(trans.direction, p.direction);
  // Both children sit where the parent was at the hit, same width.
  for (const auto& c : r.children) {
    EXPECT_NEAR(norm(center_at(c, 2000) - e.position), 0.0, 1e-9);
    EXPECT_DOUBLE_EQ(width_at(c, 2500), width_at(p, 2500));
  }
  EXPECT_NEAR(std::norm(refl.amplitude) + std::norm(trans.amplitude), 1.0, 1e-15);
}

TEST(Scatter, CollapseRatioIsOneHalf) {
  const auto e = splitter();
  const auto p = arriving(e.position, {1, 0}, 2000);
  int reflected = 0;
  const int n = 10000;
  for (int s = 0; s < n; ++s) {
    auto rng = SplitMix64::stream(1234, static_cast<std::uint64_t>(s));
    const auto r = scatter(p, e, 2000, SplitterMode::CollapseAtSplitter, rng);
    ASSERT_EQ(r.children.size(), 1u);
    EXPECT_DOUBLE_EQ(std::abs(r.children[0].amplitude), 1.0);
    reflected += r.kinds[0] == Interaction::Reflect;
  }
  EXPECT_NEAR(static_cast<double>(reflected) / n, 0.5, 0.02);
}

TEST(Scatter, AbsentElementIsTransparent) {
  const auto e = splitter({{5000, 8000}});
  const auto p = arriving(e.position, {1, 0}, 2000);
  SplitMix64 rng(1);
  const auto r = scatter(p, e, 2000, SplitterMode::AlwaysSplit, rng);
  EXPECT_TRUE(r.passed);
  ASSERT_EQ(r.children.size(), 1u);
  EXPECT_EQ(r.children[0], p);
}

TEST(Scatter, MirrorReflectsWithSignFlip) {
  const OpticalElement m{"M", Mirror{{h, -h}}, {0, 800}, {{-inf, inf}}, Arm::Upper};
  const auto p = arriving(m.position, {0, 1}, 4000);
  SplitMix64 rng(1);
  const auto r = scatter(p, m, 4000, SplitterMode::AlwaysSplit, rng);
  ASSERT_EQ(r.children.size(), 1u);
  EXPECT_DOUBLE_EQ(r.children[0].amplitude.real(), -1.0);
  EXPECT_NEAR(r.children[0].direction.x, 1.0, 1e-15);
}

TEST(Scatter, BoundaryAndCapturePreconditions) {
  const OpticalElement d{"D", Detector{{1, 0}}, {100, 0}};
  const auto p = arriving(d.position, {1, 0}, 10);
  SplitMix64 rng(1);
  EXPECT_TRUE(scatter(p, d, 10, SplitterMode::AlwaysSplit, rng).boundary);
  EXPECT_THROW(scatter(p, d, 20, SplitterMode::AlwaysSplit, rng), PreconditionError);
}

TEST(Scatter, ArrivalTimeFromGeometry) {
  const auto s = builtin_scenario("BE");
  GaussianPacket p;
  p.origin = s.at("S1").position;
  p.direction = {1, 0};
  EXPECT_NEAR(*arrival_time(p, s.at("B1")), 2000.0, 1e-9);
  EXPECT_NEAR(*arrival_time(p, s.at("M2")), 4000.0, 1e-9);
  EXPECT_FALSE(arrival_time(p, s.at("M1")).has_value());
}

TEST(Transfer, InterferometerPathsFromS1) {
  const auto s = builtin_scenario("BE");
  auto E = [&](const char* id) { return &s.at(id); };
  using I = Interaction;
  const ChainStep up_d1[] = {{E("S1"), I::Emit}, {E("B1"), I::Reflect}, {E("M1"), I::Reflect},
                             {E("B2"), I::Transmit}, {E("D1"), I::Absorb}};
  const ChainStep lo_d1[] = {{E("S1"), I::Emit}, {E("B1"), I::Transmit}, {E("M2"), I::Reflect},
                             {E("B2"), I::Reflect}, {E("D1"), I::Absorb}};
  const ChainStep up_d2[] = {{E("S1"), I::Emit}, {E("B1"), I::Reflect}, {E("M1"), I::Reflect},
                             {E("B2"), I::Reflect}, {E("D2"), I::Absorb}};
  const ChainStep lo_d2[] = {{E("S1"), I::Emit}, {E("B1"), I::Transmit}, {E("M2"), I::Reflect},
                             {E("B2"), I::Transmit}, {E("D2"), I::Absorb}};
  const Complex d1 = transfer_amplitude(up_d1) + transfer_amplitude(lo_d1);
  const Complex d2 = transfer_amplitude(up_d2) + transfer_amplitude(lo_d2);
  EXPECT_NEAR(d1.real(), 1.0, 1e-12);
  EXPECT_NEAR(std::abs(d2), 0.0, 1e-12);
  EXPECT_NEAR(transfer_amplitude(up_d1).real(), 0.5, 1e-12);
  EXPECT_NEAR(transfer_amplitude(lo_d2).real(), -0.5, 1e-12);
}

TEST(Transfer, InterferometerPathsFromS2) {
  const auto s = builtin_scenario("BE");
  auto E = [&](const char* id) { return &s.at(id); };
  using I = Interaction;
  // S2 emits +y: transmitted at B1 it takes the upper arm, reflected the lower.
  const ChainStep up_d2[] = {{E("S2"), I::Emit}, {E("B1"), I::Transmit}, {E("M1"), I::Reflect},
                             {E("B2"), I::Reflect}, {E("D2"), I::Absorb}};
  const ChainStep lo_d2[] = {{E("S2"), I::Emit}, {E("B1"), I::Reflect}, {E("M2"), I::Reflect},
                             {E("B2"), I::Transmit}, {E("D2"), I::Absorb}};
  const ChainStep up_d1[] = {{E("S2"), I::Emit}, {E("B1"), I::Transmit}, {E("M1"), I::Reflect},
                             {E("B2"), I::Transmit}, {E("D1"), I::Absorb}};
  const ChainStep lo_d1[] = {{E("S2"), I::Emit}, {E("B1"), I::Reflect}, {E("M2"), I::Reflect},
                             {E("B2"), I::Reflect}, {E("D1"), I::Absorb}};
  EXPECT_NEAR(std::abs(transfer_amplitude(up_d2) + transfer_amplitude(lo_d2)), 1.0, 1e-12);
  EXPECT_NEAR(std::abs(transfer_amplitude(up_d1) + transfer_amplitude(lo_d1)), 0.0, 1e-12);
}

TEST(Transfer, InconsistentChainsAreRejected) {
  const auto s = builtin_scenario("BE");
  auto E = [&](const char* id) { return &s.at(id); };
  using I = Interaction;
  const ChainStep wrong_turn[] = {{E("S1"), I::Emit}, {E("B1"), I::Transmit}, {E("M1"), I::Reflect},
                                  {E("D1"), I::Absorb}};
  EXPECT_THROW(transfer_amplitude(wrong_turn), ConfigurationError);
  const ChainStep backwards[] = {{E("D1"), I::Emit}, {E("S1"), I::Absorb}};
  EXPECT_THROW(transfer_amplitude(backwards), ConfigurationError);
}
