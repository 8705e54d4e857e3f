// mzi: command-line front end for the interferometer simulator.

#include <chrono>
#include <csignal>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

#include "CLI11.hpp"
#include "mzi/ensemble.hpp"
#include "mzi/oracle.hpp"
#include "mzi/render.hpp"
#include "mzi/report.hpp"
#include "mzi/server.hpp"

namespace {

constexpr int kOk = 0;
constexpr int kUsage = 1;
constexpr int kRuntime = 2;
constexpr int kCheckFailed = 3;

struct Globals {
  std::string scenario{"BE"};
  std::string theory{"ct"};
  std::string mode{"always-split"};
  std::uint64_t seed{0};
  std::uint64_t n{10000};
  std::string out;
  std::string format{"text"};
};

void emit(const Globals& g, const std::string& body) {
  if (g.out.empty()) {
    std::cout << body;
    if (!body.empty() && body.back() != '\n') std::cout << '\n';
    return;
  }
  std::ofstream f(g.out, std::ios::binary);
  if (!f) throw mzi::ConfigurationError("cannot write " + g.out);
  f << body;
  if (!f) throw mzi::ConfigurationError("write failed for " + g.out);
}

std::string read_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw mzi::ConfigurationError("cannot read " + path);
  std::ostringstream os;
  os << f.rdbuf();
  return os.str();
}

volatile std::sig_atomic_t g_stop = 0;

extern "C" void on_signal(int) { g_stop = 1; }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Mach-Zehnder wavepacket simulator: collapse, advanced and symmetrical theories"};
  app.require_subcommand(1);
  app.fallthrough();

  Globals g;
  const std::vector<std::string> theories{"ct", "at", "st"};
  const std::vector<std::string> modes{"always-split", "collapse"};
  app.add_option("--scenario", g.scenario, "built-in name (BE, ME, CE, ABE, AME, ACE) or scenario JSON file");
  app.add_option("--theory", g.theory, "ct, at or st")->check(CLI::IsMember(theories));
  app.add_option("--mode", g.mode, "always-split or collapse")->check(CLI::IsMember(modes));
  app.add_option("--seed", g.seed, "rng seed");
  app.add_option("--n", g.n, "ensemble size")->check(CLI::PositiveNumber);
  app.add_option("--out", g.out, "output file (frames: output directory)");
  app.add_option("--format", g.format, "json, csv or text")
      ->check(CLI::IsMember(std::vector<std::string>{"json", "csv", "text"}));

  std::string source, detector, policy{"uniform"};
  auto* simulate = app.add_subcommand("simulate", "one run; prints its TransitionRecord");
  simulate->add_option("--source", source, "emitting source (ct, st); default: first source");
  simulate->add_option("--detector", detector, "final detector (at, st); default: first detector");

  auto* ensemble = app.add_subcommand("ensemble", "n runs; prints the ensemble table");
  ensemble->add_option("--policy", policy, "uniform, or a fixed source (ct, st) / detector (at)");

  std::vector<double> times;
  int grid_n = 512;
  bool per_frame = false;
  auto* frames = app.add_subcommand("frames", "render density frames as 16-bit PGM plus CSV");
  frames->add_option("--times", times, "frame times (default: the six standard panels)");
  frames->add_option("--grid", grid_n, "samples per side")->check(CLI::Range(2, 8192));
  frames->add_flag("--per-frame", per_frame, "normalize each frame to its own maximum");
  frames->add_option("--source", source, "source for ct/st frames (default S1)");
  frames->add_option("--detector", detector, "detector for at/st frames (default D1)");

  auto* compare = app.add_subcommand("compare", "always-split vs collapse ensembles");
  compare->add_option("--policy", policy, "uniform or a fixed boundary element");

  double dt = 1000.0;
  std::size_t oracle_n = 1u << 14;
  double oracle_dx = 0.5;
  double gate = 1e-8;
  auto* oracle = app.add_subcommand("oracle", "closed form vs spectral evolution");
  oracle->add_option("--dt", dt, "evolution time")->check(CLI::NonNegativeNumber);
  oracle->add_option("--samples", oracle_n, "grid size (power of two)");
  oracle->add_option("--dx", oracle_dx, "grid spacing")->check(CLI::PositiveNumber);
  oracle->add_option("--gate", gate, "relative L2 threshold");

  std::string host{"127.0.0.1"};
  int port = 8080;
  auto* serve = app.add_subcommand("serve", "run the live session service");
  serve->add_option("--host", host, "listen address");
  serve->add_option("--port", port, "listen port")->check(CLI::Range(0, 65535));

  std::string replay_in;
  auto* replay = app.add_subcommand("replay", "replay an ensemble report or session log");
  replay->add_option("--in", replay_in, "ensemble JSON or session log JSON")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    app.exit(e);
    return kOk;
  } catch (const CLI::CallForAllHelp& e) {
    app.exit(e);
    return kOk;
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kUsage;
  }

  try {
    const auto theory = mzi::theory_from(g.theory);
    const auto mode = mzi::mode_from(g.mode);

    if (*simulate) {
      const auto s = mzi::load_scenario(g.scenario);
      const auto eff = mzi::effective(s);
      if (source.empty()) source = eff.sources().at(0);
      if (detector.empty()) detector = eff.detectors().at(0);
      auto rng = mzi::SplitMix64::stream(g.seed, 0);
      mzi::TransitionRecord rec;
      if (theory == mzi::Theory::CT) rec = mzi::run_ct(s, source, mode, rng);
      else if (theory == mzi::Theory::AT) rec = mzi::run_at(s, detector, mode, rng);
      else rec = mzi::run_st(s, source, detector, mode, g.seed);
      rec.seed = g.seed;
      emit(g, g.format == "json" ? mzi::to_json(rec).dump(2) : mzi::to_text(rec));
    } else if (*ensemble) {
      const auto s = mzi::load_scenario(g.scenario);
      const auto st = mzi::run_ensemble(s, theory, mode, g.n, g.seed, mzi::SourcePolicy::parse(policy));
      emit(g, g.format == "json" ? mzi::to_json(st).dump(2) : g.format == "csv" ? mzi::to_csv(st) : mzi::to_text(st));
    } else if (*frames) {
      if (g.out.empty()) throw mzi::ConfigurationError("frames needs --out <directory>");
      const auto s = mzi::load_scenario(g.scenario);
      mzi::FrameRequest req;
      req.theory = theory;
      req.mode = mode;
      req.seed = g.seed;
      if (!source.empty()) req.source = source;
      if (!detector.empty()) req.detector = detector;
      if (!times.empty()) req.times = times;
      else req.times = mzi::default_frame_times(s.duration);
      req.grid = mzi::default_grid(s, grid_n);
      req.normalization = per_frame ? mzi::Normalization::PerFrame : mzi::Normalization::Global;
      for (const auto& p : mzi::render_frames(s, req, g.out)) std::cout << p.string() << '\n';
    } else if (*compare) {
      const auto s = mzi::load_scenario(g.scenario);
      const auto rep = mzi::compare_modes(s, theory, g.n, g.seed, mzi::SourcePolicy::parse(policy));
      emit(g, g.format == "json" ? mzi::to_json(rep).dump(2) : g.format == "csv" ? mzi::to_csv(rep) : mzi::to_text(rep));
    } else if (*oracle) {
      mzi::GaussianPacket p;
      p.direction = {1.0, 0.0};
      const mzi::oracle::OracleGrid grid{oracle_n, oracle_dx};
      const auto axes = mzi::oracle::compare_axes(p, dt, grid);
      const auto width = mzi::oracle::compare_width(p, dt, grid);
      const bool pass = axes.worst() < gate;
      std::ostringstream os;
      os.precision(6);
      if (g.format == "json") {
        os << mzi::json{{"dt", dt},
                        {"samples", oracle_n},
                        {"dx", oracle_dx},
                        {"l2_longitudinal", axes.longitudinal},
                        {"l2_transverse", axes.transverse},
                        {"width_oracle", width.oracle},
                        {"width_closed_form", width.closed},
                        {"gate", gate},
                        {"pass", pass}}
                  .dump(2);
      } else {
        os << std::scientific << "dt=" << dt << " n=" << oracle_n << " dx=" << oracle_dx << "\n"
           << "relative L2 (longitudinal) " << axes.longitudinal << "\n"
           << "relative L2 (transverse)   " << axes.transverse << "\n"
           << "width oracle " << width.oracle << "  closed form " << width.closed << "  rel err "
           << width.relative_error() << "\n"
           << (pass ? "PASS" : "FAIL") << " (gate " << gate << ")\n";
      }
      emit(g, os.str());
      return pass ? kOk : kCheckFailed;
    } else if (*serve) {
      mzi::live::Server server;
      const int bound = server.bind(host, port);
      std::signal(SIGINT, on_signal);
      std::signal(SIGTERM, on_signal);
      server.start();
      std::cout << "serving on http://" << host << ":" << bound << std::endl;
      while (!g_stop) std::this_thread::sleep_for(std::chrono::milliseconds(100));
      server.stop();
    } else if (*replay) {
      const auto doc = mzi::json::parse(read_file(replay_in));
      if (doc.contains("entries")) {
        const auto log = mzi::live::log_from_json(doc);
        const auto s = mzi::live::replay(log);
        std::cout << "replay identical: " << s->detections().size() << " detections, "
                  << log.entries.size() << " commands\n";
      } else {
        const auto st = mzi::replay(mzi::stats_from_json(doc));
        std::cout << "replay identical: " << st.n_runs << " runs\n";
      }
    }
  } catch (const mzi::MismatchError& e) {
    std::cerr << "mismatch: " << e.what() << '\n';
    return kRuntime;
  } catch (const mzi::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kRuntime;
  } catch (const mzi::json::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kRuntime;
  }
  return kOk;
}
