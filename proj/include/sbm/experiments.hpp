#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdint>
#include <exception>
#include <fstream>
#include <mutex>
#include <nlohmann/json.hpp>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "sbm/assembly.hpp"
#include "sbm/blocks.hpp"
#include "sbm/errors.hpp"
#include "sbm/graph.hpp"
#include "sbm/rng.hpp"
#include "sbm/spectral.hpp"
#include "sbm/theory.hpp"
#include "sbm/walks.hpp"

namespace sbm {

inline constexpr const char* kVersion = "0.1.0";

enum class Command { SampleSpectrum, Moments, Theory, Universality, Words, Convergence };

inline std::string command_name(Command c) {
  switch (c) {
    case Command::SampleSpectrum: return "sample-spectrum";
    case Command::Moments: return "moments";
    case Command::Theory: return "theory";
    case Command::Universality: return "universality";
    case Command::Words: return "words";
    case Command::Convergence: return "convergence";
  }
  return "?";
}

inline Command parse_command(const std::string& s) {
  if (s == "sample-spectrum") return Command::SampleSpectrum;
  if (s == "moments") return Command::Moments;
  if (s == "theory") return Command::Theory;
  if (s == "universality") return Command::Universality;
  if (s == "words") return Command::Words;
  if (s == "convergence") return Command::Convergence;
  throw SpecError("config: unknown command '" + s + "'");
}

enum class OutputFormat { Csv, Json };

inline MeasureFamily parse_measure_family(const std::string& s) {
  if (s == "sphere") return MeasureFamily::RankOneSphere;
  if (s == "ball") return MeasureFamily::RankOneBall;
  if (s == "gauss") return MeasureFamily::RankOneGauss;
  if (s == "cube") return MeasureFamily::RankOneCube;
  if (s == "orthogonal") return MeasureFamily::RankROrthogonal;
  if (s == "independent") return MeasureFamily::RankRIndependent;
  if (s == "fixed-trace") return MeasureFamily::FullFixedTrace;
  if (s == "bounded-trace") return MeasureFamily::FullBoundedTrace;
  if (s == "full-gauss") return MeasureFamily::FullGauss;
  throw SpecError("config: unknown measure family '" + s + "'");
}

/// One experiment, fully specified. Every field has a flat config-file key
/// with the same name; CLI flags override file values.
struct ExperimentConfig {
  Command command = Command::SampleSpectrum;
  GraphSpec graph{400, 16.0, GraphFamily::ErdosRenyi};
  BlockMeasure measure = BlockMeasure::rank_one(MeasureFamily::RankOneSphere, 8);
  MatrixKind ensemble = MatrixKind::Adjacency;
  int realizations = 1;
  int p_max = 4;
  std::vector<int> d_list = {2, 4, 8};
  double t_override = 0.0;  ///< > 0 forces the theory parameter t
  std::uint64_t n_samples = 100000;
  int n_bins = 60;
  int grid_points = 401;
  std::uint64_t seed = 1;
  std::string output = "out";
  OutputFormat format = OutputFormat::Csv;
  int jobs = 1;
  bool check = false;
  double ks_threshold = 0.0;  ///< used by --check for sample-spectrum
  int dense_limit = 5000;

  /// Theory parameter t = r Z / d unless overridden.
  double theory_t() const {
    if (t_override > 0.0) return t_override;
    return measure.effective_rank() * graph.mean_degree / measure.dim;
  }

  void validate() const {
    graph.validate();
    measure.validate();
    if (realizations < 1) throw SpecError("config: realizations must be >= 1");
    if (p_max < 0) throw SpecError("config: p_max must be >= 0");
    if (n_bins < 1) throw SpecError("config: n_bins must be >= 1");
    if (grid_points < 2) throw SpecError("config: grid_points must be >= 2");
    if (jobs < 1) throw SpecError("config: jobs must be >= 1");
    if (n_samples < 2) throw SpecError("config: n_samples must be >= 2");
    for (int d : d_list) {
      if (d < 1) throw SpecError("config: d_list entries must be >= 1");
    }
  }

  nlohmann::json echo() const {
    nlohmann::json radii = nlohmann::json::array();
    for (double r : measure.radii) radii.push_back(r);
    nlohmann::json dl = nlohmann::json::array();
    for (int d : d_list) dl.push_back(d);
    return {{"command", command_name(command)},
            {"n_vertices", graph.n_vertices},
            {"mean_degree", graph.mean_degree},
            {"graph_family", graph.family == GraphFamily::ErdosRenyi ? "er" : "regular"},
            {"block_dim", measure.dim},
            {"measure_family", measure_family_name(measure.family)},
            {"rank", measure.rank},
            {"radius", measure.radius},
            {"radii", radii},
            {"ensemble", matrix_kind_name(ensemble)},
            {"realizations", realizations},
            {"p_max", p_max},
            {"d_list", dl},
            {"t", t_override},
            {"n_samples", n_samples},
            {"n_bins", n_bins},
            {"grid_points", grid_points},
            {"seed", seed},
            {"output", output},
            {"format", format == OutputFormat::Csv ? "csv" : "json"},
            {"jobs", jobs},
            {"check", check},
            {"ks_threshold", ks_threshold},
            {"dense_limit", dense_limit}};
  }
};

namespace detail {

inline std::vector<int> parse_int_list(const std::string& s) {
  std::vector<int> out;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    if (!tok.empty()) out.push_back(std::stoi(tok));
  }
  return out;
}

inline std::vector<double> parse_double_list(const std::string& s) {
  std::vector<double> out;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    if (!tok.empty()) out.push_back(std::stod(tok));
  }
  return out;
}

}  // namespace detail

/// Apply one flat "key = value" setting. Cited by field path on error.
inline void apply_config_key(ExperimentConfig& cfg, const std::string& key,
                             const std::string& value) {
  try {
    if (key == "command") {
      cfg.command = parse_command(value);
    } else if (key == "n_vertices") {
      cfg.graph.n_vertices = std::stoi(value);
    } else if (key == "mean_degree") {
      cfg.graph.mean_degree = std::stod(value);
    } else if (key == "graph_family") {
      if (value == "er" || value == "erdos-renyi") {
        cfg.graph.family = GraphFamily::ErdosRenyi;
      } else if (value == "regular") {
        cfg.graph.family = GraphFamily::Regular;
      } else {
        throw SpecError("config: graph_family must be 'er' or 'regular'");
      }
    } else if (key == "block_dim") {
      cfg.measure.dim = std::stoi(value);
      if (!is_vector_family(cfg.measure.family)) cfg.measure.rank = cfg.measure.dim;
    } else if (key == "measure_family") {
      cfg.measure.family = parse_measure_family(value);
      if (!is_vector_family(cfg.measure.family)) cfg.measure.rank = cfg.measure.dim;
    } else if (key == "rank") {
      cfg.measure.rank = std::stoi(value);
    } else if (key == "radius") {
      cfg.measure.radius = std::stod(value);
    } else if (key == "radii") {
      cfg.measure.radii = detail::parse_double_list(value);
    } else if (key == "ensemble") {
      if (value == "adjacency") {
        cfg.ensemble = MatrixKind::Adjacency;
      } else if (value == "laplacian") {
        cfg.ensemble = MatrixKind::Laplacian;
      } else {
        throw SpecError("config: ensemble must be 'adjacency' or 'laplacian'");
      }
    } else if (key == "realizations") {
      cfg.realizations = std::stoi(value);
    } else if (key == "p_max") {
      cfg.p_max = std::stoi(value);
    } else if (key == "d_list") {
      cfg.d_list = detail::parse_int_list(value);
    } else if (key == "t") {
      cfg.t_override = std::stod(value);
    } else if (key == "n_samples") {
      cfg.n_samples = std::stoull(value);
    } else if (key == "n_bins") {
      cfg.n_bins = std::stoi(value);
    } else if (key == "grid_points") {
      cfg.grid_points = std::stoi(value);
    } else if (key == "seed") {
      cfg.seed = std::stoull(value);
    } else if (key == "output") {
      cfg.output = value;
    } else if (key == "format") {
      if (value == "csv") {
        cfg.format = OutputFormat::Csv;
      } else if (value == "json") {
        cfg.format = OutputFormat::Json;
      } else {
        throw SpecError("config: format must be 'csv' or 'json'");
      }
    } else if (key == "jobs") {
      cfg.jobs = std::stoi(value);
    } else if (key == "check") {
      cfg.check = (value == "1" || value == "true" || value == "yes");
    } else if (key == "ks_threshold") {
      cfg.ks_threshold = std::stod(value);
    } else if (key == "dense_limit") {
      cfg.dense_limit = std::stoi(value);
    } else {
      throw SpecError("config: unknown key '" + key + "'");
    }
  } catch (const std::invalid_argument& e) {
    throw SpecError("config: bad value for '" + key + "': " + value);
  } catch (const std::out_of_range&) {
    throw SpecError("config: value out of range for '" + key + "': " + value);
  }
}

/// Flat key/value config: "key = value" per line, '#' starts a comment.
inline ExperimentConfig parse_config(std::istream& is) {
  ExperimentConfig cfg;
  std::string line;
  int line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    auto trim = [](std::string s) {
      const auto b = s.find_first_not_of(" \t\r");
      if (b == std::string::npos) return std::string();
      const auto e = s.find_last_not_of(" \t\r");
      return s.substr(b, e - b + 1);
    };
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw SpecError("config: line " + std::to_string(line_no) + " is not 'key = value'");
    }
    apply_config_key(cfg, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  return cfg;
}

inline ExperimentConfig parse_config_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw SpecError("config: cannot open '" + path + "'");
  return parse_config(is);
}

struct RealizationSummary {
  int index = 0;
  double ks = -1.0;  ///< negative when no theory law applies
  std::vector<double> moments;
};

/// Result of one run. The data files and the report content are reproducible
/// bit-for-bit given (config, seed); wall-clock timings are reported
/// separately in the manifest and excluded from that contract.
struct RunReport {
  nlohmann::json config_echo;
  std::string config_hash;
  std::vector<RealizationSummary> realizations;
  EmpiricalMoments aggregated;
  nlohmann::json payload;  ///< per-command extras (edges, tables, polynomials)
  std::vector<std::string> outputs;
  bool check_failed = false;
  double elapsed_seconds = 0.0;

  nlohmann::json to_json() const {
    nlohmann::json reals = nlohmann::json::array();
    for (const auto& r : realizations) {
      nlohmann::json jr = {{"index", r.index}};
      if (r.ks >= 0.0) jr["ks"] = r.ks;
      if (!r.moments.empty()) jr["moments"] = r.moments;
      reals.push_back(jr);
    }
    nlohmann::json agg;
    if (!aggregated.moments.empty()) {
      agg = {{"moments", aggregated.moments}, {"stderr", aggregated.stderrors}};
    }
    return {{"realizations", reals}, {"aggregated", agg}, {"payload", payload},
            {"check_failed", check_failed}};
  }
};

namespace detail {

inline std::string fnv1a_hex(const std::string& s) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

inline void write_text(const std::string& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw ResourceError("cannot open output file " + path);
  os << text;
}

/// Run fn(0..n-1) on up to `jobs` threads; results must be stored by index.
template <class Fn>
void parallel_for(int n, int jobs, Fn&& fn) {
  jobs = std::min(jobs, n);
  if (jobs <= 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(jobs));
  for (int j = 0; j < jobs; ++j) {
    pool.emplace_back([&] {
      for (int i = next.fetch_add(1); i < n; i = next.fetch_add(1)) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(error_mutex);
          if (!error) error = std::current_exception();
          return;
        }
      }
    });
  }
  for (auto& th : pool) th.join();
  if (error) std::rethrow_exception(error);
}

inline EdgeSet sample_edges(const GraphSpec& spec, Rng& rng) {
  return spec.family == GraphFamily::ErdosRenyi ? sample_er_edges(spec, rng)
                                                : sample_regular_edges(spec, rng);
}

inline BlockSparseMatrix assemble(const EdgeSet& e, const BlockMeasure& m, MatrixKind kind,
                                  Rng& rng) {
  return kind == MatrixKind::Adjacency ? assemble_adjacency(e, m, rng)
                                       : assemble_laplacian(e, m, rng);
}

/// The matching limit law, when one exists: EMA(t) for adjacency ensembles
/// with vector-parametrized blocks, MP(t) for Laplacian ones; none for the
/// maximal-rank families.
inline std::optional<TheoreticalCDF> matching_cdf(const ExperimentConfig& cfg) {
  if (!is_vector_family(cfg.measure.family)) return std::nullopt;
  const double t = cfg.theory_t();
  if (!(t > 0.0)) return std::nullopt;
  if (cfg.ensemble == MatrixKind::Adjacency) return ema_cdf(EmaParams{t});
  return mp_cdf(MpParams{t});
}

inline nlohmann::json tpoly_to_json(const TPoly& poly) {
  nlohmann::json out = nlohmann::json::object();
  for (int k = 0; k <= poly.degree(); ++k) {
    if (poly.coeff(k) != 0) out[std::to_string(k)] = poly.coeff(k).str();
  }
  return out;
}

}  // namespace detail

struct UniversalityCell {
  std::string case_name;
  int d = 0;
  std::string word;
  double ratio = 0.0;
  double stderror = 0.0;
  double factor = 0.0;
  double sigmas = 0.0;
};

/// MC ratio table for the measure-comparison law: <tr X^{2k}>_measure over
/// <tr X^{2k}>_gauss against the exact gamma-factor prediction, for the
/// vector trio (sphere, ball vs gauss) and the matrix trio (fixed, bounded
/// vs full-gauss), words X^2 and X^4.
inline std::vector<UniversalityCell> universality_table(std::span<const int> d_list,
                                                        std::uint64_t n_samples,
                                                        std::uint64_t seed) {
  struct CaseSpec {
    const char* name;
    MeasureFamily numerator;
    MeasureFamily denominator;
    RatioCase rc;
    bool vector;
  };
  static const CaseSpec cases[] = {
      {"vector-sphere", MeasureFamily::RankOneSphere, MeasureFamily::RankOneGauss,
       RatioCase::VectorSphere, true},
      {"vector-ball", MeasureFamily::RankOneBall, MeasureFamily::RankOneGauss,
       RatioCase::VectorBall, true},
      {"matrix-fixed", MeasureFamily::FullFixedTrace, MeasureFamily::FullGauss,
       RatioCase::MatrixFixed, false},
      {"matrix-bounded", MeasureFamily::FullBoundedTrace, MeasureFamily::FullGauss,
       RatioCase::MatrixBounded, false},
  };

  std::vector<UniversalityCell> out;
  std::uint64_t cell_index = 0;
  for (const auto& cs : cases) {
    for (int d : d_list) {
      for (int exponent : {2, 4}) {
        Rng rng = seed_stream(seed, cell_index++);
        const Word w{{{1, exponent}}};
        const BlockMeasure num_m = cs.vector
                                       ? BlockMeasure::rank_one(cs.numerator, d)
                                       : BlockMeasure::full(cs.numerator, d);
        const BlockMeasure den_m = cs.vector
                                       ? BlockMeasure::rank_one(cs.denominator, d)
                                       : BlockMeasure::full(cs.denominator, d);
        const auto num = word_expectation_mc(num_m, w, n_samples, rng);
        const auto den = word_expectation_mc(den_m, w, n_samples, rng);
        UniversalityCell cell;
        cell.case_name = cs.name;
        cell.d = d;
        cell.word = w.str();
        cell.ratio = num.value / den.value;
        const double rel_num = num.value != 0.0 ? num.stderror / num.value : 0.0;
        const double rel_den = den.stderror / den.value;
        cell.stderror =
            std::abs(cell.ratio) * std::sqrt(rel_num * rel_num + rel_den * rel_den);
        const std::vector<int> ranks = {exponent};
        cell.factor = measure_ratio_factor(cs.rc, d, ranks);
        cell.sigmas = cell.stderror > 0.0
                          ? std::abs(cell.ratio - cell.factor) / cell.stderror
                          : 0.0;
        out.push_back(std::move(cell));
      }
    }
  }
  return out;
}

namespace detail {

inline void run_sample_spectrum(const ExperimentConfig& cfg, RunReport& report) {
  const int n = cfg.realizations;
  std::vector<Spectrum> spectra(static_cast<std::size_t>(n));
  parallel_for(n, cfg.jobs, [&](int i) {
    Rng rng = seed_stream(cfg.seed, static_cast<std::uint64_t>(i));
    const EdgeSet e = sample_edges(cfg.graph, rng);
    const BlockSparseMatrix a = assemble(e, cfg.measure, cfg.ensemble, rng);
    spectra[static_cast<std::size_t>(i)] = eigenvalues(a, cfg.dense_limit);
  });

  const auto cdf = matching_cdf(cfg);
  MomentAccumulator acc(cfg.p_max);
  RunningStats ks_stats;
  Spectrum combined;
  combined.n_vertices = cfg.graph.n_vertices;
  combined.block_dim = cfg.measure.dim;
  for (int i = 0; i < n; ++i) {
    const auto& s = spectra[static_cast<std::size_t>(i)];
    RealizationSummary rs;
    rs.index = i;
    rs.moments = empirical_moments(s, cfg.p_max).moments;
    if (cdf) {
      rs.ks = ks_distance(s, *cdf);
      ks_stats.add(rs.ks);
    }
    acc.add(s);
    combined.eigenvalues.insert(combined.eigenvalues.end(), s.eigenvalues.begin(),
                                s.eigenvalues.end());
    report.realizations.push_back(std::move(rs));
  }
  report.aggregated = acc.result();

  // Spectrum file: one eigenvalue per line, realizations in order.
  if (cfg.format == OutputFormat::Csv) {
    std::string text;
    for (const auto& s : spectra) {
      for (double lam : s.eigenvalues) {
        text += format_g17(lam);
        text += '\n';
      }
    }
    const std::string path = cfg.output + ".sample-spectrum.csv";
    write_text(path, text);
    report.outputs.push_back(path);
  } else {
    nlohmann::json evs = nlohmann::json::array();
    for (const auto& s : spectra) {
      for (double lam : s.eigenvalues) evs.push_back(lam);
    }
    const std::string path = cfg.output + ".sample-spectrum.json";
    write_text(path, nlohmann::json({{"eigenvalues", evs}}).dump(2) + "\n");
    report.outputs.push_back(path);
  }

  // Histogram of all eigenvalues together.
  std::sort(combined.eigenvalues.begin(), combined.eigenvalues.end());
  const double lo = combined.eigenvalues.front(), hi = combined.eigenvalues.back();
  const double pad = std::max(1e-9, 1e-3 * (hi - lo));
  const auto hist = esd_histogram(combined, cfg.n_bins, {lo - pad, hi + pad});
  std::string htext = "x,density\n";
  for (const auto& [x, rho] : hist) {
    htext += format_g17(x);
    htext += ',';
    htext += format_g17(rho);
    htext += '\n';
  }
  const std::string hpath = cfg.output + ".histogram.csv";
  write_text(hpath, htext);
  report.outputs.push_back(hpath);

  if (cdf) {
    report.payload["t"] = cfg.theory_t();
    report.payload["law"] =
        cfg.ensemble == MatrixKind::Adjacency ? "ema" : "marchenko-pastur";
    report.payload["ks_mean"] = ks_stats.mean();
    report.payload["ks_stderr"] = ks_stats.stderror();
  }
  if (cfg.check) {
    if (!cdf) throw SpecError("check: sample-spectrum needs a finite-rank theory law");
    if (!(cfg.ks_threshold > 0.0)) {
      throw SpecError("check: sample-spectrum needs ks_threshold");
    }
    report.check_failed = ks_stats.mean() > cfg.ks_threshold;
  }
}

inline void run_moments(const ExperimentConfig& cfg, RunReport& report) {
  const int n = cfg.realizations;
  std::vector<std::vector<double>> moments(static_cast<std::size_t>(n));
  parallel_for(n, cfg.jobs, [&](int i) {
    Rng rng = seed_stream(cfg.seed, static_cast<std::uint64_t>(i));
    const EdgeSet e = sample_edges(cfg.graph, rng);
    const BlockSparseMatrix a = assemble(e, cfg.measure, cfg.ensemble, rng);
    const Spectrum s = eigenvalues(a, cfg.dense_limit);
    moments[static_cast<std::size_t>(i)] = empirical_moments(s, cfg.p_max).moments;
  });

  MomentAccumulator acc(cfg.p_max);
  for (int i = 0; i < n; ++i) {
    RealizationSummary rs;
    rs.index = i;
    rs.moments = moments[static_cast<std::size_t>(i)];
    acc.add_moments(rs.moments);
    report.realizations.push_back(std::move(rs));
  }
  report.aggregated = acc.result();

  // Theory moments for finite-rank ensembles: EMA for adjacency, MP for
  // the Laplacian (even moments only in the EMA case).
  std::vector<double> theory;
  if (is_vector_family(cfg.measure.family)) {
    const double t = cfg.theory_t();
    theory.assign(static_cast<std::size_t>(cfg.p_max) + 1, 0.0);
    if (cfg.ensemble == MatrixKind::Adjacency) {
      const auto even = ema_moments(EmaParams{t}, cfg.p_max / 2);
      for (int k = 0; 2 * k <= cfg.p_max; ++k) {
        theory[static_cast<std::size_t>(2 * k)] = even[static_cast<std::size_t>(k)];
      }
    } else {
      const auto mpm = mp_moments(MpParams{t}, cfg.p_max);
      for (int p = 0; p <= cfg.p_max; ++p) {
        theory[static_cast<std::size_t>(p)] = mpm[static_cast<std::size_t>(p)];
      }
    }
    report.payload["theory_moments"] = theory;
    report.payload["t"] = cfg.theory_t();
  }

  std::string text = "p,mu,stderr\n";
  for (int p = 0; p <= cfg.p_max; ++p) {
    text += std::to_string(p);
    text += ',';
    text += format_g17(report.aggregated.moments[static_cast<std::size_t>(p)]);
    text += ',';
    text += format_g17(report.aggregated.stderrors[static_cast<std::size_t>(p)]);
    text += '\n';
  }
  if (cfg.format == OutputFormat::Csv) {
    const std::string path = cfg.output + ".moments.csv";
    write_text(path, text);
    report.outputs.push_back(path);
  } else {
    nlohmann::json rows = nlohmann::json::array();
    for (int p = 0; p <= cfg.p_max; ++p) {
      rows.push_back({{"p", p},
                      {"mu", report.aggregated.moments[static_cast<std::size_t>(p)]},
                      {"stderr", report.aggregated.stderrors[static_cast<std::size_t>(p)]}});
    }
    const std::string path = cfg.output + ".moments.json";
    write_text(path, nlohmann::json({{"moments", rows}}).dump(2) + "\n");
    report.outputs.push_back(path);
  }

  if (cfg.check) {
    if (theory.empty()) throw SpecError("check: moments needs a finite-rank theory law");
    if (cfg.realizations < 2) throw SpecError("check: moments needs realizations >= 2");
    bool failed = false;
    for (int p = 1; p <= cfg.p_max; ++p) {
      // Odd adjacency moments vanish only as N -> infinity (triangles
      // contribute Z^3/(N d^3) at finite N), so the check covers even
      // orders there.
      if (cfg.ensemble == MatrixKind::Adjacency && p % 2 == 1) continue;
      const double mu = report.aggregated.moments[static_cast<std::size_t>(p)];
      const double se = report.aggregated.stderrors[static_cast<std::size_t>(p)];
      const double ref = theory[static_cast<std::size_t>(p)];
      if (std::abs(mu - ref) > 4.0 * se) failed = true;
    }
    report.check_failed = failed;
  }
}

inline void run_theory(const ExperimentConfig& cfg, RunReport& report) {
  const double t = cfg.theory_t();
  if (!(t > 0.0)) throw SpecError("theory: need t > 0 (set t or graph parameters)");
  std::string text = "x,density\n";
  if (cfg.ensemble == MatrixKind::Adjacency) {
    const EmaParams p{t};
    const double edge = ema_support_edge(p);
    report.payload["law"] = "ema";
    report.payload["t"] = t;
    report.payload["support_edge"] = edge;
    report.payload["atom_mass"] = ema_atom_mass(p);
    const auto polys = ema_moments(std::min(cfg.p_max, 64));
    nlohmann::json jpolys = nlohmann::json::array();
    for (std::size_t k = 0; k < polys.size(); ++k) {
      jpolys.push_back({{"k", 2 * k},
                        {"poly", tpoly_to_json(polys[k])},
                        {"value", polys[k].evaluate(t)}});
    }
    report.payload["moments"] = jpolys;
    for (int i = 0; i < cfg.grid_points; ++i) {
      const double x = -edge + 2.0 * edge * i / (cfg.grid_points - 1.0);
      text += format_g17(x);
      text += ',';
      text += format_g17(ema_density(x, p));
      text += '\n';
    }
  } else {
    const MpParams p{t};
    report.payload["law"] = "marchenko-pastur";
    report.payload["t"] = t;
    report.payload["edge_a"] = p.edge_a();
    report.payload["edge_b"] = p.edge_b();
    report.payload["atom_mass"] = p.atom_mass();
    report.payload["moments"] = mp_moments(p, std::min(cfg.p_max, 32));
    for (int i = 0; i < cfg.grid_points; ++i) {
      const double x = p.edge_a() + (p.edge_b() - p.edge_a()) * i / (cfg.grid_points - 1.0);
      text += format_g17(x);
      text += ',';
      const double rho = mp_density(x, p);
      text += format_g17(std::isfinite(rho) ? rho : 0.0);
      text += '\n';
    }
  }
  if (cfg.format == OutputFormat::Csv) {
    const std::string path = cfg.output + ".theory.csv";
    write_text(path, text);
    report.outputs.push_back(path);
  } else {
    const std::string path = cfg.output + ".theory.json";
    write_text(path, report.payload.dump(2) + "\n");
    report.outputs.push_back(path);
  }
}

inline void run_universality(const ExperimentConfig& cfg, RunReport& report) {
  const auto table = universality_table(cfg.d_list, cfg.n_samples, cfg.seed);
  std::string text = "case,d,word,ratio,stderr,factor,sigmas\n";
  nlohmann::json rows = nlohmann::json::array();
  int beyond = 0;
  for (const auto& cell : table) {
    text += cell.case_name + ',' + std::to_string(cell.d) + ',' + cell.word + ',' +
            format_g17(cell.ratio) + ',' + format_g17(cell.stderror) + ',' +
            format_g17(cell.factor) + ',' + format_g17(cell.sigmas) + '\n';
    rows.push_back({{"case", cell.case_name},
                    {"d", cell.d},
                    {"word", cell.word},
                    {"ratio", cell.ratio},
                    {"stderr", cell.stderror},
                    {"factor", cell.factor},
                    {"sigmas", cell.sigmas}});
    if (cell.sigmas > 3.0) ++beyond;
  }
  report.payload["cells"] = rows;
  report.payload["cells_beyond_3_sigma"] = beyond;
  const std::string path = cfg.output + ".universality." +
                           (cfg.format == OutputFormat::Csv ? "csv" : "json");
  write_text(path, cfg.format == OutputFormat::Csv
                       ? text
                       : nlohmann::json({{"cells", rows}}).dump(2) + "\n");
  report.outputs.push_back(path);
  if (cfg.check) {
    report.check_failed =
        beyond > static_cast<int>(0.05 * static_cast<double>(table.size()));
  }
}

inline void run_words(const ExperimentConfig& cfg, RunReport& report) {
  const MomentPolynomial mp = enumerate_tree_walks(cfg.p_max);
  const std::string path = cfg.output + ".words.json";
  write_text(path, to_json(mp).dump(2) + "\n");
  report.outputs.push_back(path);

  nlohmann::json limits = nlohmann::json::array();
  for (int p = 1; p <= cfg.p_max; ++p) {
    const TPoly limit = finite_rank_limit(enumerate_tree_walks(p));
    limits.push_back({{"p", p}, {"poly", tpoly_to_json(limit)}, {"text", limit.str()}});
  }
  report.payload["finite_rank_limits"] = limits;
  report.payload["terms"] = static_cast<int>(mp.terms.size());
}

inline void run_convergence(const ExperimentConfig& cfg, RunReport& report) {
  const double t = cfg.theory_t();
  if (!(t > 0.0)) throw SpecError("convergence: need t > 0 (set t or graph parameters)");
  if (!is_vector_family(cfg.measure.family)) {
    throw SpecError("convergence: needs a finite-rank measure family");
  }
  std::string text = "d,Z,ks_mean,ks_stderr,mu2,mu2_stderr,mu2_theory,mu4,mu4_stderr,mu4_theory\n";
  nlohmann::json rows = nlohmann::json::array();
  double mu2_theory = 0.0, mu4_theory = 0.0;
  if (cfg.ensemble == MatrixKind::Adjacency) {
    const auto em = ema_moments(EmaParams{t}, 2);
    mu2_theory = em[1];
    mu4_theory = em[2];
  } else {
    const auto mm = mp_moments(MpParams{t}, 4);
    mu2_theory = mm[2];
    mu4_theory = mm[4];
  }

  std::uint64_t stream = 0;
  for (int d : cfg.d_list) {
    const double z = t * d / cfg.measure.effective_rank();
    ExperimentConfig sub = cfg;
    sub.measure.dim = d;
    if (!is_vector_family(sub.measure.family)) sub.measure.rank = d;
    sub.graph.mean_degree = z;
    sub.graph.validate();
    sub.measure.validate();

    const auto cdf = matching_cdf(sub);
    RunningStats ks_stats;
    std::vector<Spectrum> spectra(static_cast<std::size_t>(cfg.realizations));
    const std::uint64_t base = stream;
    parallel_for(cfg.realizations, cfg.jobs, [&](int i) {
      Rng rng = seed_stream(cfg.seed, base + static_cast<std::uint64_t>(i));
      const EdgeSet e = sample_edges(sub.graph, rng);
      const BlockSparseMatrix a = assemble(e, sub.measure, sub.ensemble, rng);
      spectra[static_cast<std::size_t>(i)] = eigenvalues(a, cfg.dense_limit);
    });
    stream += static_cast<std::uint64_t>(cfg.realizations);

    MomentAccumulator acc(4);
    for (const auto& s : spectra) {
      acc.add(s);
      if (cdf) ks_stats.add(ks_distance(s, *cdf));
    }
    const auto agg = acc.result();
    text += std::to_string(d) + ',' + format_g17(z) + ',' + format_g17(ks_stats.mean()) +
            ',' + format_g17(ks_stats.stderror()) + ',' + format_g17(agg.moments[2]) + ',' +
            format_g17(agg.stderrors[2]) + ',' + format_g17(mu2_theory) + ',' +
            format_g17(agg.moments[4]) + ',' + format_g17(agg.stderrors[4]) + ',' +
            format_g17(mu4_theory) + '\n';
    rows.push_back({{"d", d},
                    {"Z", z},
                    {"ks_mean", ks_stats.mean()},
                    {"ks_stderr", ks_stats.stderror()},
                    {"mu2", agg.moments[2]},
                    {"mu2_stderr", agg.stderrors[2]},
                    {"mu4", agg.moments[4]},
                    {"mu4_stderr", agg.stderrors[4]}});
  }
  report.payload["t"] = t;
  report.payload["rows"] = rows;
  report.payload["mu2_theory"] = mu2_theory;
  report.payload["mu4_theory"] = mu4_theory;
  const std::string path = cfg.output + ".convergence." +
                           (cfg.format == OutputFormat::Csv ? "csv" : "json");
  write_text(path, cfg.format == OutputFormat::Csv
                       ? text
                       : nlohmann::json({{"rows", rows}}).dump(2) + "\n");
  report.outputs.push_back(path);
}

}  // namespace detail

/// Dispatch one experiment, write its data files and manifest, and return the
/// report. Reduction order is fixed by realization index regardless of the
/// number of worker threads.
inline RunReport run(const ExperimentConfig& cfg) {
  cfg.validate();
  const auto t0 = std::chrono::steady_clock::now();
  RunReport report;
  report.config_echo = cfg.echo();
  report.config_hash = detail::fnv1a_hex(report.config_echo.dump());

  switch (cfg.command) {
    case Command::SampleSpectrum: detail::run_sample_spectrum(cfg, report); break;
    case Command::Moments: detail::run_moments(cfg, report); break;
    case Command::Theory: detail::run_theory(cfg, report); break;
    case Command::Universality: detail::run_universality(cfg, report); break;
    case Command::Words: detail::run_words(cfg, report); break;
    case Command::Convergence: detail::run_convergence(cfg, report); break;
  }

  report.elapsed_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  nlohmann::json manifest = {{"version", kVersion},
                             {"command", command_name(cfg.command)},
                             {"seed", cfg.seed},
                             {"config", report.config_echo},
                             {"config_hash", report.config_hash},
                             {"report", report.to_json()},
                             {"timings", {{"elapsed_seconds", report.elapsed_seconds}}}};
  const std::string mpath = cfg.output + ".manifest.json";
  detail::write_text(mpath, manifest.dump(2) + "\n");
  report.outputs.push_back(mpath);
  return report;
}

}  // namespace sbm
