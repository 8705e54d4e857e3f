#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "engine.hpp"
#include "error.hpp"
#include "scenario.hpp"
#include "wavepacket.hpp"

namespace mzi {

inline constexpr double kFrameEpsilon = 1.0;

/// Six panels: before B1, on the arms, past the mirrors, just past B2, just
/// before and just after the final boundary.
inline std::vector<double> default_frame_times(double T = 8000.0) {
  const double e = kFrameEpsilon;
  return {2000.0 - e, 3000.0, 5000.0, 6000.0 + e, T - e, T + e};
}

/// Bounding box of all elements padded by 4 sigma0, 512x512 samples.
inline GridSpec default_grid(const Scenario& s, int n = 512) {
  double x0 = 1e300, x1 = -1e300, y0 = 1e300, y1 = -1e300;
  for (const auto& e : s.elements) {
    x0 = std::min(x0, e.position.x);
    x1 = std::max(x1, e.position.x);
    y0 = std::min(y0, e.position.y);
    y1 = std::max(y1, e.position.y);
  }
  const double pad = 4.0 * s.constants.sigma0;
  return {x0 - pad, x1 + pad, y0 - pad, y1 + pad, n, n};
}

enum class Normalization { Global, PerFrame };

struct Frame {
  double time;
  FieldGrid density;
};

struct FrameSequence {
  std::string label;
  GridSpec grid;
  std::vector<Frame> frames;
  Normalization normalization{Normalization::Global};
};

/// Which run the frames follow: CT emits from `source`, AT from `detector`
/// (frames indexed by the backward clock), ST joins the two.
struct FrameRequest {
  Theory theory{Theory::CT};
  SplitterMode mode{SplitterMode::AlwaysSplit};
  std::string source{"S1"};
  std::string detector{"D1"};
  std::uint64_t seed{0};
  std::vector<double> times{default_frame_times()};
  std::optional<GridSpec> grid{};
  Normalization normalization{Normalization::Global};
};

inline FrameSequence compute_frames(const Scenario& scenario, const FrameRequest& req) {
  if (req.times.empty()) throw ConfigurationError("no frame times given");
  for (std::size_t i = 1; i < req.times.size(); ++i)
    if (!(req.times[i] > req.times[i - 1])) throw ConfigurationError("frame times must be strictly increasing");
  if (!(req.times.front() >= 0.0) || !std::isfinite(req.times.back()))
    throw ConfigurationError("frame times must be finite and non-negative");
  FrameSequence seq;
  seq.grid = req.grid.value_or(default_grid(scenario));
  seq.grid.validate();
  seq.normalization = req.normalization;
  seq.label = scenario.name + "_" + to_string(req.theory);
  SplitMix64 rng = SplitMix64::stream(req.seed, 0);
  if (req.theory == Theory::ST) {
    const auto run = simulate_st(scenario, req.source, req.detector, req.mode, req.seed);
    for (double t : req.times) {
      const auto [fwd, bwd] = run.packets_at(t);
      const double tc = std::clamp(t, 0.0, scenario.duration);
      seq.frames.push_back({t, product_density_grid(fwd, tc, bwd, scenario.duration - tc, run.scale, seq.grid)});
    }
    return seq;
  }
  const auto run = req.theory == Theory::CT ? simulate_ct(scenario, req.source, req.mode, rng)
                                            : simulate_at(scenario, req.detector, req.mode, rng);
  for (double t : req.times) {
    const auto packets = run.packets_at(t);
    // Packets born later than t (the collapsed one) are not yet present.
    std::vector<GaussianPacket> alive;
    for (const auto& p : packets)
      if (t >= p.birth_time) alive.push_back(p);
    seq.frames.push_back({t, density_grid(alive, seq.grid, t)});
  }
  return seq;
}

namespace detail {

inline std::string time_tag(double t) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3f", t);
  return buf;
}

inline std::string grid_header(const GridSpec& g) {
  std::ostringstream os;
  os.precision(17);
  os << "x_min=" << g.x_min << " x_max=" << g.x_max << " y_min=" << g.y_min << " y_max=" << g.y_max
     << " nx=" << g.nx << " ny=" << g.ny;
  return os.str();
}

}  // namespace detail

/// Binary PGM (P5), 16-bit big-endian samples, top row = largest y.
inline std::string encode_pgm(const FieldGrid& g, double max_value) {
  std::string out = "P5\n" + std::to_string(g.spec.nx) + " " + std::to_string(g.spec.ny) + "\n65535\n";
  out.reserve(out.size() + 2u * g.values.size());
  for (int j = g.spec.ny - 1; j >= 0; --j)
    for (int i = 0; i < g.spec.nx; ++i) {
      const double v = max_value > 0.0 ? g.at(i, j) / max_value : 0.0;
      const auto s = static_cast<unsigned>(std::lround(std::clamp(v, 0.0, 1.0) * 65535.0));
      out.push_back(static_cast<char>((s >> 8) & 0xFF));
      out.push_back(static_cast<char>(s & 0xFF));
    }
  return out;
}

/// Row-major CSV (row j holds y_min + j*dy), full precision, grid spec in the header.
inline std::string encode_csv(const FieldGrid& g, double t) {
  std::string out = "# " + detail::grid_header(g.spec) + " t=" + detail::time_tag(t) + "\n";
  char buf[40];
  for (int j = 0; j < g.spec.ny; ++j) {
    for (int i = 0; i < g.spec.nx; ++i) {
      std::snprintf(buf, sizeof buf, i ? ",%.17g" : "%.17g", g.at(i, j));
      out += buf;
    }
    out += '\n';
  }
  return out;
}

inline std::vector<std::filesystem::path> write_frames(const FrameSequence& seq,
                                                       const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw ConfigurationError("cannot create output directory " + dir.string() + ": " + ec.message());
  double global = 0.0;
  for (const auto& f : seq.frames) global = std::max(global, f.density.max());
  std::vector<std::filesystem::path> paths;
  for (std::size_t k = 0; k < seq.frames.size(); ++k) {
    const auto& f = seq.frames[k];
    char stem[64];
    std::snprintf(stem, sizeof stem, "_%02zu_t%s", k, detail::time_tag(f.time).c_str());
    const auto base = dir / (seq.label + stem);
    const double peak = seq.normalization == Normalization::Global ? global : f.density.max();
    for (const auto& [ext, body] : {std::pair<std::string, std::string>{".pgm", encode_pgm(f.density, peak)},
                                    std::pair<std::string, std::string>{".csv", encode_csv(f.density, f.time)}}) {
      auto path = base;
      path += ext;
      std::ofstream out(path, std::ios::binary);
      if (!out) throw ConfigurationError("cannot write " + path.string());
      out.write(body.data(), static_cast<std::streamsize>(body.size()));
      if (!out) throw ConfigurationError("write failed for " + path.string());
      paths.push_back(path);
    }
  }
  return paths;
}

inline std::vector<std::filesystem::path> render_frames(const Scenario& scenario, const FrameRequest& req,
                                                        const std::filesystem::path& dir) {
  return write_frames(compute_frames(scenario, req), dir);
}

}  // namespace mzi
