#pragma once

#include <cmath>
#include <complex>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "error.hpp"
#include "vec2.hpp"

namespace mzi {

using Complex = std::complex<double>;

/// Natural units: hbar is fixed at 1.
struct PhysicalConstants {
  double hbar{1.0};
  double mass{1.0};
  double wavenumber{0.4};
  double sigma0{50.0};

  double group_speed() const { return hbar * wavenumber / mass; }
  void validate() const {
    if (!(hbar > 0 && mass > 0 && sigma0 > 0 && wavenumber >= 0) ||
        !std::isfinite(hbar + mass + sigma0 + wavenumber))
      throw ConfigurationError("physical constants must be finite and positive");
  }
  bool operator==(const PhysicalConstants&) const = default;
};

inline constexpr double kSigmaCollapse = 5.0;
inline constexpr double kPruneAmplitude = 1e-12;

enum class Interaction { Emit, Reflect, Transmit, Absorb, Collapse };

inline const char* to_string(Interaction k) {
  switch (k) {
    case Interaction::Emit: return "emit";
    case Interaction::Reflect: return "reflect";
    case Interaction::Transmit: return "transmit";
    case Interaction::Absorb: return "absorb";
    case Interaction::Collapse: return "collapse";
  }
  return "?";
}

struct LineageEntry {
  std::string element;
  Interaction kind;
  double time;
  bool operator==(const LineageEntry&) const = default;
};

/// One coherent branch of a wavefunction.
///
/// `origin` and `birth_time` are the free-evolution reference: the packet is
/// an isotropic Gaussian of width sigma0 centred at `origin` at `birth_time`.
/// Scattered children are mirror images of their parent, so they keep the
/// parent's birth time and carry a reflected (virtual) origin.
struct GaussianPacket {
  Complex amplitude{1.0, 0.0};
  double birth_time{0.0};
  Vec2 origin{};
  Vec2 direction{1.0, 0.0};
  PhysicalConstants constants{};
  std::vector<LineageEntry> lineage{};

  bool operator==(const GaussianPacket&) const = default;

  // Time of the last recorded interaction (creation time of this branch).
  double created_at() const { return lineage.empty() ? birth_time : lineage.back().time; }

  bool passed_through(std::string_view element) const {
    for (const auto& e : lineage)
      if (e.element == element) return true;
    return false;
  }
};

namespace detail {
inline void require_after_birth(const GaussianPacket& p, double t) {
  if (!(t >= p.birth_time))
    throw PreconditionError("time " + std::to_string(t) + " precedes packet birth " +
                            std::to_string(p.birth_time));
}
}  // namespace detail

inline Vec2 center_at(const GaussianPacket& p, double t) {
  detail::require_after_birth(p, t);
  return p.origin + p.direction * (p.constants.group_speed() * (t - p.birth_time));
}

inline double width_at(const GaussianPacket& p, double t) {
  detail::require_after_birth(p, t);
  const auto& c = p.constants;
  const double tau = c.hbar * (t - p.birth_time) / (2.0 * c.mass * c.sigma0 * c.sigma0);
  return c.sigma0 * std::sqrt(1.0 + tau * tau);
}

/// Exact 1D free Gaussian: the solution of i hbar psi_t = -(hbar^2/2m) psi_xx whose
/// t=0 slice is (2 pi sigma^2)^(-1/4) exp(-x^2/(4 sigma^2) + i k x).
inline Complex free_gaussian_1d(double x, double dt, double sigma, double k, double mass,
                                double hbar = 1.0) {
  const double tau = hbar * dt / (2.0 * mass * sigma * sigma);
  const Complex spread{1.0, tau};
  const double v = hbar * k / mass;
  const double xc = x - v * dt;
  const Complex gauss = -(xc * xc) / (4.0 * sigma * sigma * spread);
  const double phase = k * x - hbar * k * k * dt / (2.0 * mass);
  const double norm = std::pow(2.0 * std::numbers::pi * sigma * sigma, -0.25);
  return norm / std::sqrt(spread) * std::exp(gauss + Complex{0.0, phase});
}

enum class Axis { Longitudinal, Transverse };

// The packet is separable in (along-direction, across-direction) coordinates.
inline Complex axis_profile(const GaussianPacket& p, Axis axis, double coord, double t) {
  detail::require_after_birth(p, t);
  const auto& c = p.constants;
  const double k = axis == Axis::Longitudinal ? c.wavenumber : 0.0;
  return free_gaussian_1d(coord, t - p.birth_time, c.sigma0, k, c.mass, c.hbar);
}

inline Complex amplitude_at(const GaussianPacket& p, Vec2 r, double t) {
  const Vec2 rel = r - p.origin;
  const double s = dot(rel, p.direction);
  const double u = dot(rel, perp(p.direction));
  return p.amplitude * axis_profile(p, Axis::Longitudinal, s, t) *
         axis_profile(p, Axis::Transverse, u, t);
}

inline Complex field_at(std::span<const GaussianPacket> packets, Vec2 r, double t) {
  Complex sum{0.0, 0.0};
  for (const auto& p : packets) {
    if (!(p.constants == packets.front().constants))
      throw PreconditionError("field_at: packets must share physical constants");
    sum += amplitude_at(p, r, t);
  }
  return sum;
}

/// <a|b> for the unit-amplitude shapes of two packets (amplitudes excluded).
/// Free evolution is unitary, so the overlap is evaluated at the common birth time.
inline Complex shape_overlap(const GaussianPacket& a, const GaussianPacket& b) {
  if (a.birth_time != b.birth_time || !(a.constants == b.constants))
    throw PreconditionError("overlap needs packets with a common birth time and constants");
  const double sigma = a.constants.sigma0;
  const double k = a.constants.wavenumber;
  const Vec2 ka = a.direction * k;
  const Vec2 kb = b.direction * k;
  const Vec2 dk = kb - ka;
  const Vec2 d0 = b.origin - a.origin;
  const Vec2 mid = (a.origin + b.origin) * 0.5;
  const double re = -dot(d0, d0) / (8.0 * sigma * sigma) - 0.5 * sigma * sigma * dot(dk, dk);
  const double im = dot(dk, mid) + dot(ka, a.origin) - dot(kb, b.origin);
  return std::exp(Complex{re, im});
}

/// Squared norm of the coherent sum of packets, via pairwise Gram overlaps.
inline double gram_norm(std::span<const GaussianPacket> packets) {
  double total = 0.0;
  for (std::size_t i = 0; i < packets.size(); ++i) {
    total += std::norm(packets[i].amplitude);
    for (std::size_t j = i + 1; j < packets.size(); ++j)
      total += 2.0 * std::real(std::conj(packets[i].amplitude) * packets[j].amplitude *
                               shape_overlap(packets[i], packets[j]));
  }
  return total;
}

struct GridSpec {
  double x_min{0}, x_max{1}, y_min{0}, y_max{1};
  int nx{2}, ny{2};

  void validate() const {
    if (!(x_min < x_max) || !(y_min < y_max) || nx < 2 || ny < 2)
      throw ConfigurationError("degenerate grid specification");
  }
  double dx() const { return (x_max - x_min) / (nx - 1); }
  double dy() const { return (y_max - y_min) / (ny - 1); }
  Vec2 point(int i, int j) const { return {x_min + i * dx(), y_min + j * dy()}; }
  bool operator==(const GridSpec&) const = default;
};

/// Real field sampled on a grid; row j holds y = y_min + j*dy.
struct FieldGrid {
  GridSpec spec;
  std::vector<double> values;

  double& at(int i, int j) { return values[static_cast<std::size_t>(j) * spec.nx + i]; }
  double at(int i, int j) const { return values[static_cast<std::size_t>(j) * spec.nx + i]; }
  double max() const {
    double m = 0.0;
    for (double v : values) m = std::max(m, v);
    return m;
  }
  double total_mass() const {
    double s = 0.0;
    for (double v : values) s += v;
    return s * spec.dx() * spec.dy();
  }
  template <class Pred>
  double mass_where(Pred&& inside) const {
    double s = 0.0;
    for (int j = 0; j < spec.ny; ++j)
      for (int i = 0; i < spec.nx; ++i)
        if (inside(spec.point(i, j))) s += at(i, j);
    return s * spec.dx() * spec.dy();
  }
};

inline FieldGrid density_grid(std::span<const GaussianPacket> packets, const GridSpec& spec,
                              double t) {
  spec.validate();
  FieldGrid g{spec, std::vector<double>(static_cast<std::size_t>(spec.nx) * spec.ny, 0.0)};
  if (packets.empty()) return g;
  for (int j = 0; j < spec.ny; ++j)
    for (int i = 0; i < spec.nx; ++i) g.at(i, j) = std::norm(field_at(packets, spec.point(i, j), t));
  return g;
}

/// |phi* psi|: retarded packets sampled at t_fwd times advanced packets sampled at
/// t_bwd (their own clock), scaled by `scale`.
inline FieldGrid product_density_grid(std::span<const GaussianPacket> forward, double t_fwd,
                                      std::span<const GaussianPacket> backward, double t_bwd,
                                      Complex scale, const GridSpec& spec) {
  spec.validate();
  FieldGrid g{spec, std::vector<double>(static_cast<std::size_t>(spec.nx) * spec.ny, 0.0)};
  if (forward.empty() || backward.empty() || scale == Complex{}) return g;
  for (int j = 0; j < spec.ny; ++j)
    for (int i = 0; i < spec.nx; ++i) {
      const Vec2 r = spec.point(i, j);
      g.at(i, j) = std::abs(scale * field_at(forward, r, t_fwd) * field_at(backward, r, t_bwd));
    }
  return g;
}

}  // namespace mzi
