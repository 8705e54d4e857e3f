#pragma once

#include <fftw3.h>

#include <cmath>
#include <complex>
#include <memory>
#include <numbers>
#include <vector>

#include "error.hpp"
#include "wavepacket.hpp"

namespace mzi::oracle {

inline constexpr double kEdgeMassTolerance = 1e-10;

/// Uniform samples x_j = x_min + j*dx, j < n (n a power of two), periodic.
struct SampledWavefunction {
  double x_min{0.0};
  double dx{1.0};
  std::vector<Complex> values;

  std::size_t n() const { return values.size(); }
  double x(std::size_t j) const { return x_min + static_cast<double>(j) * dx; }
  double norm() const {
    double s = 0.0;
    for (const auto& v : values) s += std::norm(v);
    return s * dx;
  }
  double mean() const {
    double s = 0.0;
    for (std::size_t j = 0; j < n(); ++j) s += x(j) * std::norm(values[j]);
    return s * dx / norm();
  }
  double stddev() const {
    const double mu = mean();
    double s = 0.0;
    for (std::size_t j = 0; j < n(); ++j) s += (x(j) - mu) * (x(j) - mu) * std::norm(values[j]);
    return std::sqrt(s * dx / norm());
  }
};

inline double relative_l2(const std::vector<Complex>& a, const std::vector<Complex>& ref) {
  double num = 0.0, den = 0.0;
  for (std::size_t j = 0; j < ref.size(); ++j) {
    num += std::norm(a[j] - ref[j]);
    den += std::norm(ref[j]);
  }
  return std::sqrt(num / den);
}

namespace detail {

struct PlanDeleter {
  void operator()(fftw_plan_s* p) const { fftw_destroy_plan(p); }
};
using Plan = std::unique_ptr<fftw_plan_s, PlanDeleter>;

inline fftw_complex* as_fftw(std::vector<Complex>& v) {
  return reinterpret_cast<fftw_complex*>(v.data());
}

inline bool is_power_of_two(std::size_t n) { return n >= 2 && (n & (n - 1)) == 0; }

// Fraction of the mass within n/32 samples of either end.
inline double edge_fraction(const SampledWavefunction& f) {
  const std::size_t band = std::max<std::size_t>(1, f.n() / 32);
  double edge = 0.0, total = 0.0;
  for (std::size_t j = 0; j < f.n(); ++j) {
    const double m = std::norm(f.values[j]);
    total += m;
    if (j < band || j >= f.n() - band) edge += m;
  }
  return total > 0.0 ? edge / total : 0.0;
}

inline void check_edges(const SampledWavefunction& f) {
  if (edge_fraction(f) > kEdgeMassTolerance)
    throw DomainTooSmallError("spectral grid too small: mass reaches the periodic boundary");
}

inline double wavenumber(std::size_t j, std::size_t n, double length) {
  const auto sj = static_cast<double>(j);
  const auto sn = static_cast<double>(n);
  return 2.0 * std::numbers::pi * (j < n / 2 ? sj : sj - sn) / length;
}

}  // namespace detail

/// Free evolution by t, exact in momentum space: every Fourier mode picks up
/// exp(-i hbar k^2 t / 2m). Negative t runs the evolution backwards, which is
/// the advanced equation's forward evolution.
inline SampledWavefunction spectral_evolve(const SampledWavefunction& field, double t, double mass,
                                           double hbar = 1.0) {
  if (!detail::is_power_of_two(field.n()))
    throw PreconditionError("spectral_evolve needs a power-of-two sample count");
  detail::check_edges(field);
  SampledWavefunction out = field;
  if (t == 0.0) return out;
  const std::size_t n = field.n();
  std::vector<Complex> buf = field.values;
  const int ni = static_cast<int>(n);
  detail::Plan fwd(fftw_plan_dft_1d(ni, detail::as_fftw(buf), detail::as_fftw(buf), FFTW_FORWARD,
                                    FFTW_ESTIMATE));
  detail::Plan bwd(fftw_plan_dft_1d(ni, detail::as_fftw(buf), detail::as_fftw(buf), FFTW_BACKWARD,
                                    FFTW_ESTIMATE));
  fftw_execute(fwd.get());
  const double length = field.dx * static_cast<double>(n);
  for (std::size_t j = 0; j < n; ++j) {
    const double k = detail::wavenumber(j, n, length);
    buf[j] *= std::polar(1.0 / static_cast<double>(n), -hbar * k * k * t / (2.0 * mass));
  }
  fftw_execute(bwd.get());
  out.values = std::move(buf);
  detail::check_edges(out);
  return out;
}

struct OracleGrid {
  std::size_t n{1u << 14};
  double dx{0.5};
};

struct AxisComparison {
  double longitudinal;
  double transverse;
  double worst() const { return std::max(longitudinal, transverse); }
};

/// Relative L2 distance between the packet's closed-form axis profiles at t and
/// the spectral evolution of their birth slices, per axis.
inline AxisComparison compare_axes(const GaussianPacket& packet, double t, const OracleGrid& grid) {
  if (!(t >= packet.birth_time)) throw PreconditionError("compare_closed_form: t before birth");
  const double dt = t - packet.birth_time;
  const auto& c = packet.constants;
  auto one = [&](Axis axis) {
    const double drift = axis == Axis::Longitudinal ? c.group_speed() * dt : 0.0;
    SampledWavefunction f;
    f.dx = grid.dx;
    f.x_min = 0.5 * drift - 0.5 * grid.dx * static_cast<double>(grid.n);
    f.values.resize(grid.n);
    std::vector<Complex> closed(grid.n);
    for (std::size_t j = 0; j < grid.n; ++j) {
      f.values[j] = axis_profile(packet, axis, f.x(j), packet.birth_time);
      closed[j] = axis_profile(packet, axis, f.x(j), t);
    }
    const auto evolved = spectral_evolve(f, dt, c.mass, c.hbar);
    return relative_l2(closed, evolved.values);
  };
  return {one(Axis::Longitudinal), one(Axis::Transverse)};
}

inline double compare_closed_form(const GaussianPacket& packet, double t, const OracleGrid& grid = {}) {
  return compare_axes(packet, t, grid).worst();
}

struct WidthCheck {
  double oracle;  // second-moment width of the spectrally evolved density
  double closed;  // width_at
  double relative_error() const { return std::abs(oracle - closed) / closed; }
};

inline WidthCheck compare_width(const GaussianPacket& packet, double t, const OracleGrid& grid = {}) {
  if (!(t >= packet.birth_time)) throw PreconditionError("compare_width: t before birth");
  const double dt = t - packet.birth_time;
  const auto& c = packet.constants;
  SampledWavefunction f;
  f.dx = grid.dx;
  f.x_min = 0.5 * c.group_speed() * dt - 0.5 * grid.dx * static_cast<double>(grid.n);
  f.values.resize(grid.n);
  for (std::size_t j = 0; j < grid.n; ++j)
    f.values[j] = axis_profile(packet, Axis::Longitudinal, f.x(j), packet.birth_time);
  return {spectral_evolve(f, dt, c.mass, c.hbar).stddev(), width_at(packet, t)};
}

/// Independent 2D check of amplitude_at: evolve the packet's birth slice on a
/// square periodic grid with a 2D FFT and compare against the closed form.
inline double compare_closed_form_2d(const GaussianPacket& packet, double t, std::size_t n,
                                     double dx) {
  if (!detail::is_power_of_two(n)) throw PreconditionError("2D oracle needs a power-of-two side");
  const double dt = t - packet.birth_time;
  const Vec2 mid = packet.origin + packet.direction * (0.5 * packet.constants.group_speed() * dt);
  const double x0 = mid.x - 0.5 * dx * static_cast<double>(n);
  const double y0 = mid.y - 0.5 * dx * static_cast<double>(n);
  std::vector<Complex> buf(n * n), closed(n * n);
  for (std::size_t j = 0; j < n; ++j)
    for (std::size_t i = 0; i < n; ++i) {
      const Vec2 r{x0 + static_cast<double>(i) * dx, y0 + static_cast<double>(j) * dx};
      buf[j * n + i] = amplitude_at(packet, r, packet.birth_time);
      closed[j * n + i] = amplitude_at(packet, r, t);
    }
  // Same guard as the 1D evolution: no mass near the periodic frame, before or after.
  auto check_frame = [n](const std::vector<Complex>& v) {
    const std::size_t band = std::max<std::size_t>(1, n / 32);
    double edge = 0.0, total = 0.0;
    for (std::size_t j = 0; j < n; ++j)
      for (std::size_t i = 0; i < n; ++i) {
        const double m = std::norm(v[j * n + i]);
        total += m;
        if (i < band || j < band || i >= n - band || j >= n - band) edge += m;
      }
    if (total > 0.0 && edge / total > kEdgeMassTolerance)
      throw DomainTooSmallError("2D spectral grid too small: mass reaches the periodic boundary");
  };
  check_frame(buf);
  const int ni = static_cast<int>(n);
  detail::Plan fwd(fftw_plan_dft_2d(ni, ni, detail::as_fftw(buf), detail::as_fftw(buf), FFTW_FORWARD,
                                    FFTW_ESTIMATE));
  detail::Plan bwd(fftw_plan_dft_2d(ni, ni, detail::as_fftw(buf), detail::as_fftw(buf), FFTW_BACKWARD,
                                    FFTW_ESTIMATE));
  fftw_execute(fwd.get());
  const double length = dx * static_cast<double>(n);
  const auto& c = packet.constants;
  const double scale = 1.0 / static_cast<double>(n * n);
  for (std::size_t j = 0; j < n; ++j)
    for (std::size_t i = 0; i < n; ++i) {
      const double kx = detail::wavenumber(i, n, length);
      const double ky = detail::wavenumber(j, n, length);
      buf[j * n + i] *= std::polar(scale, -c.hbar * (kx * kx + ky * ky) * dt / (2.0 * c.mass));
    }
  fftw_execute(bwd.get());
  check_frame(buf);
  return relative_l2(closed, buf);
}

}  // namespace mzi::oracle
