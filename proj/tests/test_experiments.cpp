#include <catch2/catch_amalgamated.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "sbm/experiments.hpp"

using namespace sbm;
using Catch::Approx;

namespace {

std::string read_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  REQUIRE(is.good());
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

std::string out_prefix(const std::string& name) {
  std::filesystem::create_directories("test_output");
  return "test_output/" + name;
}

}  // namespace

TEST_CASE("seed streams are reproducible and distinct", "[experiments]") {
  Rng a = seed_stream(42, 0), b = seed_stream(42, 0), c = seed_stream(42, 1);
  bool all_equal = true, any_diff = false;
  for (int i = 0; i < 100; ++i) {
    const auto va = a(), vb = b(), vc = c();
    all_equal = all_equal && (va == vb);
    any_diff = any_diff || (va != vc);
  }
  REQUIRE(all_equal);
  REQUIRE(any_diff);

  std::set<std::uint64_t> fingerprints;
  for (int k = 0; k < 1000; ++k) {
    Rng r = seed_stream(42, static_cast<std::uint64_t>(k));
    fingerprints.insert(r());
  }
  REQUIRE(fingerprints.size() == 1000);
}

TEST_CASE("config parsing and overrides", "[experiments]") {
  std::stringstream ss;
  ss << "# sample config\n"
     << "command = moments\n"
     << "n_vertices = 120\n"
     << "mean_degree = 6\n"
     << "graph_family = er\n"
     << "block_dim = 4\n"
     << "measure_family = sphere\n"
     << "ensemble = laplacian\n"
     << "realizations = 3\n"
     << "d_list = 2,4,8\n"
     << "seed = 99\n"
     << "format = json\n";
  ExperimentConfig cfg = parse_config(ss);
  REQUIRE(cfg.command == Command::Moments);
  REQUIRE(cfg.graph.n_vertices == 120);
  REQUIRE(cfg.graph.mean_degree == 6.0);
  REQUIRE(cfg.measure.dim == 4);
  REQUIRE(cfg.ensemble == MatrixKind::Laplacian);
  REQUIRE(cfg.realizations == 3);
  REQUIRE(cfg.d_list == std::vector<int>{2, 4, 8});
  REQUIRE(cfg.seed == 99);
  REQUIRE(cfg.format == OutputFormat::Json);

  apply_config_key(cfg, "seed", "7");
  REQUIRE(cfg.seed == 7);

  REQUIRE_THROWS_WITH(apply_config_key(cfg, "no_such_key", "1"),
                      Catch::Matchers::ContainsSubstring("no_such_key"));
  REQUIRE_THROWS_AS(apply_config_key(cfg, "realizations", "many"), SpecError);
  std::stringstream bad("n_vertices 12\n");
  REQUIRE_THROWS_AS(parse_config(bad), SpecError);
}

TEST_CASE("full-rank families pin rank to the dimension", "[experiments]") {
  ExperimentConfig cfg;
  apply_config_key(cfg, "measure_family", "full-gauss");
  apply_config_key(cfg, "block_dim", "6");
  REQUIRE(cfg.measure.rank == 6);
  cfg.validate();
}

TEST_CASE("words run matches the golden file byte for byte", "[experiments]") {
  ExperimentConfig cfg;
  cfg.command = Command::Words;
  cfg.p_max = 4;
  cfg.output = out_prefix("words");
  const RunReport report = run(cfg);
  const std::string produced = read_file(cfg.output + ".words.json");
  const std::string golden = read_file(std::string(SBM_TEST_DATA_DIR) + "/mu8_golden.json");
  REQUIRE(produced == golden);
  REQUIRE(report.payload["finite_rank_limits"][3]["text"] ==
          "14t^4 + 28t^3 + 12t^2 + t");
}

TEST_CASE("sample-spectrum runs are byte-identical across invocations", "[experiments]") {
  ExperimentConfig cfg;
  cfg.command = Command::SampleSpectrum;
  cfg.graph = GraphSpec{40, 4.0, GraphFamily::ErdosRenyi};
  cfg.measure = BlockMeasure::rank_one(MeasureFamily::RankOneSphere, 2);
  cfg.realizations = 2;
  cfg.p_max = 4;
  cfg.seed = 5;
  cfg.output = out_prefix("spec_a");
  const RunReport ra = run(cfg);
  cfg.output = out_prefix("spec_b");
  cfg.jobs = 2;  // worker count must not change any output byte
  const RunReport rb = run(cfg);
  REQUIRE(read_file(out_prefix("spec_a") + ".sample-spectrum.csv") ==
          read_file(out_prefix("spec_b") + ".sample-spectrum.csv"));
  REQUIRE(read_file(out_prefix("spec_a") + ".histogram.csv") ==
          read_file(out_prefix("spec_b") + ".histogram.csv"));
  REQUIRE(ra.to_json() == rb.to_json());
  REQUIRE(ra.payload.contains("ks_mean"));
}

TEST_CASE("theory run reports the MP edges", "[experiments]") {
  ExperimentConfig cfg;
  cfg.command = Command::Theory;
  cfg.ensemble = MatrixKind::Laplacian;
  cfg.t_override = 2.0;
  cfg.output = out_prefix("theory_mp");
  const RunReport report = run(cfg);
  REQUIRE(report.payload["edge_a"].get<double>() == Approx(0.0).margin(1e-12));
  REQUIRE(report.payload["edge_b"].get<double>() == Approx(8.0).epsilon(1e-12));
  const std::string manifest = read_file(cfg.output + ".manifest.json");
  REQUIRE(manifest.find("\"edge_b\": 8.0") != std::string::npos);

  cfg.ensemble = MatrixKind::Adjacency;
  cfg.output = out_prefix("theory_ema");
  const RunReport ema_report = run(cfg);
  REQUIRE(ema_report.payload["law"] == "ema");
  REQUIRE(ema_report.payload["moments"][1]["value"].get<double>() == Approx(2.0));
}

TEST_CASE("moments run emits p,mu,stderr rows and checks against theory",
          "[experiments]") {
  ExperimentConfig cfg;
  cfg.command = Command::Moments;
  cfg.graph = GraphSpec{150, 8.0, GraphFamily::ErdosRenyi};
  cfg.measure = BlockMeasure::rank_one(MeasureFamily::RankOneSphere, 4);
  cfg.realizations = 8;
  cfg.p_max = 4;
  cfg.seed = 11;
  cfg.check = true;
  cfg.output = out_prefix("moments");
  const RunReport report = run(cfg);
  REQUIRE_FALSE(report.check_failed);
  const std::string csv = read_file(cfg.output + ".moments.csv");
  REQUIRE(csv.rfind("p,mu,stderr\n", 0) == 0);
  REQUIRE(std::count(csv.begin(), csv.end(), '\n') == 6);  // header + p = 0..4
  REQUIRE(report.aggregated.moments[0] == 1.0);
  REQUIRE(report.aggregated.moments[2] ==
          Approx(2.0).margin(4.0 * report.aggregated.stderrors[2] + 0.05));
}

TEST_CASE("universality run and check mode", "[experiments]") {
  ExperimentConfig cfg;
  cfg.command = Command::Universality;
  cfg.d_list = {2, 4};
  cfg.n_samples = 20000;
  cfg.seed = 3;
  cfg.check = true;
  cfg.output = out_prefix("universality");
  const RunReport report = run(cfg);
  REQUIRE(report.payload["cells"].size() == 16);  // 4 cases x 2 dims x 2 words
  REQUIRE_FALSE(report.check_failed);
  const std::string csv = read_file(cfg.output + ".universality.csv");
  REQUIRE(csv.rfind("case,d,word,ratio,stderr,factor,sigmas\n", 0) == 0);
}

TEST_CASE("convergence run tabulates KS against d", "[experiments]") {
  ExperimentConfig cfg;
  cfg.command = Command::Convergence;
  cfg.graph = GraphSpec{60, 2.0, GraphFamily::ErdosRenyi};
  cfg.measure = BlockMeasure::rank_one(MeasureFamily::RankOneSphere, 2);
  cfg.t_override = 2.0;
  cfg.d_list = {2, 4};
  cfg.realizations = 3;
  cfg.seed = 13;
  cfg.output = out_prefix("convergence");
  const RunReport report = run(cfg);
  REQUIRE(report.payload["rows"].size() == 2);
  REQUIRE(report.payload["rows"][0]["Z"].get<double>() == Approx(4.0));
  REQUIRE(report.payload["rows"][1]["Z"].get<double>() == Approx(8.0));
  REQUIRE(report.payload["mu2_theory"].get<double>() == Approx(2.0));
}

TEST_CASE("a run regenerated from its echoed config is identical", "[experiments]") {
  ExperimentConfig cfg;
  cfg.command = Command::SampleSpectrum;
  cfg.graph = GraphSpec{30, 3.0, GraphFamily::ErdosRenyi};
  cfg.measure = BlockMeasure::rank_one(MeasureFamily::RankOneBall, 3, 1.5);
  cfg.realizations = 2;
  cfg.seed = 77;
  cfg.output = out_prefix("echo_a");
  const RunReport first = run(cfg);

  ExperimentConfig again;
  for (const auto& [key, value] : first.config_echo.items()) {
    std::string s;
    if (value.is_string()) {
      s = value.get<std::string>();
    } else if (value.is_boolean()) {
      s = value.get<bool>() ? "1" : "0";
    } else if (value.is_number_unsigned()) {
      s = std::to_string(value.get<std::uint64_t>());
    } else if (value.is_number_integer()) {
      s = std::to_string(value.get<std::int64_t>());
    } else if (value.is_number_float()) {
      char buf[32];
      std::snprintf(buf, sizeof(buf), "%.17g", value.get<double>());
      s = buf;
    } else if (value.is_array()) {
      for (const auto& item : value) {
        if (!s.empty()) s += ',';
        s += item.is_number_integer() ? std::to_string(item.get<int>())
                                      : std::to_string(item.get<double>());
      }
      if (s.empty()) continue;
    }
    if (key == "command") continue;  // set below, mirroring the CLI
    apply_config_key(again, key, s);
  }
  again.command = parse_command(first.config_echo.at("command").get<std::string>());
  again.output = out_prefix("echo_b");
  const RunReport second = run(again);
  REQUIRE(first.to_json() == second.to_json());
  REQUIRE(read_file(out_prefix("echo_a") + ".sample-spectrum.csv") ==
          read_file(out_prefix("echo_b") + ".sample-spectrum.csv"));
}

TEST_CASE("config validation failures", "[experiments]") {
  ExperimentConfig cfg;
  cfg.realizations = 0;
  REQUIRE_THROWS_AS(run(cfg), SpecError);
  cfg.realizations = 1;
  cfg.graph.mean_degree = -2.0;
  REQUIRE_THROWS_AS(run(cfg), SpecError);
}

TEST_CASE("cli produces the golden words file and deterministic output",
          "[experiments]") {
  const std::string tool = SBM_TOOL_PATH;
  const std::string prefix_a = out_prefix("cli_words_a");
  const std::string prefix_b = out_prefix("cli_words_b");
  REQUIRE(std::system((tool + " words --p-max 4 --out " + prefix_a + " > /dev/null").c_str()) == 0);
  REQUIRE(std::system((tool + " words --p-max 4 --out " + prefix_b + " > /dev/null").c_str()) == 0);
  const std::string golden = read_file(std::string(SBM_TEST_DATA_DIR) + "/mu8_golden.json");
  REQUIRE(read_file(prefix_a + ".words.json") == golden);
  REQUIRE(read_file(prefix_b + ".words.json") == golden);

  // exit code 2 on config errors
  const int rc = std::system((tool + " moments --realizations nope > /dev/null 2>&1").c_str());
  REQUIRE(WEXITSTATUS(rc) == 2);
}

TEST_CASE("scalar pipeline matches the walk polynomials", "[scalar-oracle]") {
  // d = 1 with unit blocks reduces the pipeline to scalar ER adjacency:
  // empirical mu_{2p} for p <= 5 matches the tree-walk polynomial evaluated
  // at Z within 4 stderr (N = 2000, 50 realizations).
  const GraphSpec gs{2000, 3.0, GraphFamily::ErdosRenyi};
  const auto scalar = BlockMeasure::rank_one(MeasureFamily::RankOneSphere, 1);
  MomentAccumulator acc(10);
  for (int i = 0; i < 50; ++i) {
    Rng rng = seed_stream(331, static_cast<std::uint64_t>(i));
    const EdgeSet e = sample_er_edges(gs, rng);
    acc.add(eigenvalues(assemble_adjacency(e, scalar, rng)));
  }
  const auto agg = acc.result();
  for (int p = 1; p <= 5; ++p) {
    double expect = 0.0;
    for (const auto& term : enumerate_tree_walks(p).terms) {
      expect += static_cast<double>(term.multiplicity) * std::pow(3.0, term.z_power);
    }
    CAPTURE(p, agg.moments[static_cast<std::size_t>(2 * p)], expect);
    REQUIRE(std::abs(agg.moments[static_cast<std::size_t>(2 * p)] - expect) <
            4.0 * agg.stderrors[static_cast<std::size_t>(2 * p)]);
  }
}
