// Command-line front end: data generation, exact oracles, tabular training, inference,
// experiment presets and the property suite.

#include <atomic>
#include <filesystem>
#include <iostream>
#include <mutex>
#include <thread>

#include "CLI11.hpp"
#include "featgeo/closed_form.hpp"
#include "featgeo/experiments.hpp"
#include "featgeo/generators.hpp"
#include "featgeo/inference.hpp"
#include "featgeo/oracle.hpp"
#include "featgeo/serialize.hpp"
#include "featgeo/trainers.hpp"
#include "featgeo/verify.hpp"

namespace fs = std::filesystem;
using namespace featgeo;

namespace {

constexpr int kUsage = 2;
constexpr int kDiverged = 3;

struct Globals {
  std::optional<std::uint32_t> seed;
  std::optional<std::string> out;
  std::optional<std::size_t> epochs;
  std::optional<std::size_t> batch_size;
  std::optional<double> lr;
  std::optional<std::size_t> grid;
  std::optional<std::size_t> parallel;
  std::string config;
};

template <class T>
void fill(std::optional<T>& slot, const nlohmann::json& j, const char* key) {
  if (!slot && j.contains(key)) slot = j.at(key).get<T>();
}

// Values from the JSON file only fill what the command line left unset.
void merge_config(Globals& g) {
  if (g.config.empty()) return;
  const nlohmann::json j = read_json_file(g.config);
  if (!j.is_object()) throw ConfigError("configuration file must hold a JSON object");
  fill(g.seed, j, "seed");
  fill(g.out, j, "out");
  fill(g.epochs, j, "epochs");
  fill(g.batch_size, j, "batch_size");
  fill(g.lr, j, "lr");
  fill(g.grid, j, "grid");
  fill(g.parallel, j, "parallel");
}

std::string out_path(const Globals& g, const std::string& fallback) { return g.out.value_or(fallback); }

void ensure_parent(const std::string& path) {
  const fs::path parent = fs::path(path).parent_path();
  if (!parent.empty()) fs::create_directories(parent);
}

Shape parse_sizes(const std::vector<std::size_t>& v) { return Shape(v.begin(), v.end()); }

// --- gen -------------------------------------------------------------------

int cmd_gen(const Globals& g, const std::string& kind, std::size_t n, const std::vector<std::size_t>& sizes,
            const std::string& variant) {
  const std::uint32_t seed = g.seed.value_or(0);
  if (kind == "discrete") {
    const std::string path = out_path(g, "table.json");
    ensure_parent(path);
    write_json_file(path, to_json(gen_discrete_joint(parse_sizes(sizes), seed)));
    return 0;
  }
  Artifact a;
  if (kind == "cosine") {
    const ContinuousPairs d = gen_raised_cosine(n, seed);
    a.header = {"x", "y"};
    a.data.resize(d.x.rows(), 2);
    a.data << d.x, d.y;
  } else if (kind == "bms") {
    Eigen::VectorXd uv(4);
    uv << 0.1, 0.4, 0.2, 0.3;
    const SequencePairs d = gen_bms_pairs(n, 40, 30, 0.1, 0.9, ProbTable({2, 2}, uv), seed);
    a.header = {"u", "v"};
    for (Eigen::Index t = 0; t < d.x.cols(); ++t) a.header.push_back("x" + std::to_string(t + 1));
    for (Eigen::Index t = 0; t < d.y.cols(); ++t) a.header.push_back("y" + std::to_string(t + 1));
    a.data.resize(d.x.rows(), 2 + d.x.cols() + d.y.cols());
    a.data << d.u.cast<double>(), d.v.cast<double>(), d.x.cast<double>(), d.y.cast<double>();
  } else if (kind == "multimodal") {
    const MultimodalSamples d = gen_multimodal(n, parse_multimodal_variant(variant), seed);
    a.header = {"x1", "x2", "y"};
    a.data.resize(d.x.rows(), 3);
    a.data << d.x, d.y.cast<double>();
    std::cerr << "clamp frequency " << d.clamp_frequency << "\n";
  } else if (kind == "samples") {
    const ProbTable p = gen_discrete_joint(parse_sizes(sizes), seed);
    const std::vector<Index> s = sample_table(p, n, seed + 1);
    for (std::size_t i = 0; i < sizes.size(); ++i) a.header.push_back("a" + std::to_string(i));
    a.data.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(sizes.size()));
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < sizes.size(); ++j) a.data(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = static_cast<double>(s[i][j]);
  } else {
    throw ConfigError("unknown generator: " + kind);
  }
  const std::string path = out_path(g, kind + ".csv");
  ensure_parent(path);
  write_csv(path, a);
  return 0;
}

// --- oracle ----------------------------------------------------------------

int cmd_oracle(const Globals& g, const std::string& table, std::size_t k, std::size_t split, const std::string& closed) {
  if (!closed.empty()) {
    const Eigen::VectorXd x = grid_1d(g.grid.value_or(201));
    const Eigen::MatrixXd v = closed_form_oracle(closed, x);
    Artifact a{{"x"}, Eigen::MatrixXd(x.size(), 1 + v.cols())};
    for (Eigen::Index j = 0; j < v.cols(); ++j) a.header.push_back(closed + "_" + std::to_string(j + 1));
    a.data << x, v;
    const std::string path = out_path(g, closed + ".csv");
    ensure_parent(path);
    write_csv(path, a);
    return 0;
  }
  if (table.empty()) throw ConfigError("oracle needs --table or --closed-form");
  const ProbTable p = prob_table_from_json(read_json_file(table));
  const std::string path = out_path(g, "decomposition.json");
  ensure_parent(path);
  write_json_file(path, to_json(modal_decompose(p, k, split)));
  return 0;
}

// --- train / infer -----------------------------------------------------------

// Tabular modal features from a CSV of symbol pairs (first two columns).
int cmd_train(const Globals& g, const std::string& data_path, std::size_t k) {
  const Artifact a = read_csv(data_path);
  if (a.data.cols() < 2 || a.data.rows() < 2) throw ConfigError("training data needs two columns and two rows");
  PairData d{a.data.col(0), a.data.col(1)};
  const auto nx = static_cast<std::size_t>(d.x.maxCoeff()) + 1, ny = static_cast<std::size_t>(d.y.maxCoeff()) + 1;
  if (d.x.minCoeff() < 0 || d.y.minCoeff() < 0) throw BadSample("symbols must be nonnegative indices");
  TrainConfig cfg;
  cfg.seed = g.seed.value_or(0);
  cfg.epochs = g.epochs.value_or(100);
  cfg.batch_size = g.batch_size.value_or(128);
  cfg.adam.lr = g.lr.value_or(1e-3);
  const LearnedModes m = train_modal(d, k, cfg, std::make_shared<OneHotLinear>(nx, k, cfg.seed + 1, "f"),
                                     std::make_shared<OneHotLinear>(ny, k, cfg.seed + 2, "g"));
  Eigen::MatrixXd xs(static_cast<Eigen::Index>(nx), 1), ys(static_cast<Eigen::Index>(ny), 1);
  for (std::size_t i = 0; i < nx; ++i) xs(static_cast<Eigen::Index>(i), 0) = static_cast<double>(i);
  for (std::size_t i = 0; i < ny; ++i) ys(static_cast<Eigen::Index>(i), 0) = static_cast<double>(i);
  Eigen::VectorXd prior = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(ny));
  for (Eigen::Index i = 0; i < d.y.rows(); ++i) prior[static_cast<Eigen::Index>(d.y(i, 0))] += 1.0;
  prior /= prior.sum();
  const Eigen::MatrixXd f = evaluate_batched(*m.f_raw, xs), gt = evaluate_batched(*m.g_raw, ys);
  auto rows = [](const Eigen::MatrixXd& mat) {
    nlohmann::json j = nlohmann::json::array();
    for (Eigen::Index r = 0; r < mat.rows(); ++r) {
      std::vector<double> v(static_cast<std::size_t>(mat.cols()));
      for (Eigen::Index c = 0; c < mat.cols(); ++c) v[static_cast<std::size_t>(c)] = mat(r, c);
      j.push_back(v);
    }
    return j;
  };
  nlohmann::json model{{"sigmas", std::vector<double>(m.sigmas.data(), m.sigmas.data() + m.sigmas.size())},
                       {"f", rows(f)},
                       {"g", rows(gt)},
                       {"prior", std::vector<double>(prior.data(), prior.data() + prior.size())},
                       {"final_objective", m.log.final_objective()}};
  const std::string path = out_path(g, "model.json");
  ensure_parent(path);
  write_json_file(path, model);
  std::cout << "trained " << k << " modes, sigmas:";
  for (Eigen::Index i = 0; i < m.sigmas.size(); ++i) std::cout << " " << m.sigmas[i];
  std::cout << "\n";
  return 0;
}

Eigen::MatrixXd matrix_from_rows(const nlohmann::json& j) {
  const auto r = static_cast<Eigen::Index>(j.size());
  const auto c = r ? static_cast<Eigen::Index>(j.at(0).size()) : 0;
  Eigen::MatrixXd m(r, c);
  for (Eigen::Index i = 0; i < r; ++i)
    for (Eigen::Index k = 0; k < c; ++k) m(i, k) = j.at(static_cast<std::size_t>(i)).at(static_cast<std::size_t>(k)).get<double>();
  return m;
}

int cmd_infer(const Globals& g, const std::string& model_path) {
  const nlohmann::json model = read_json_file(model_path);
  const Eigen::MatrixXd f = matrix_from_rows(model.at("f")), gt = matrix_from_rows(model.at("g"));
  const std::vector<double> pv = model.at("prior").get<std::vector<double>>();
  const Eigen::VectorXd prior = Eigen::Map<const Eigen::VectorXd>(pv.data(), static_cast<Eigen::Index>(pv.size()));
  const Posterior p = posterior_bivariate(f, gt, prior);
  const std::vector<Eigen::Index> map = map_predict(p.probs);
  Artifact a{{"x"}, Eigen::MatrixXd(f.rows(), 3 + p.probs.cols())};
  for (Eigen::Index y = 0; y < p.probs.cols(); ++y) a.header.push_back("p" + std::to_string(y));
  a.header.push_back("correction");
  a.header.push_back("map");
  for (Eigen::Index i = 0; i < f.rows(); ++i) {
    a.data(i, 0) = static_cast<double>(i);
    a.data.block(i, 1, 1, p.probs.cols()) = p.probs.row(i);
    a.data(i, 1 + p.probs.cols()) = p.correction[i];
    a.data(i, 2 + p.probs.cols()) = static_cast<double>(map[static_cast<std::size_t>(i)]);
  }
  const std::string path = out_path(g, "posterior.csv");
  ensure_parent(path);
  write_csv(path, a);
  return 0;
}

// --- experiment / verify -------------------------------------------------------

int cmd_experiment(const Globals& g, std::vector<std::string> names) {
  if (names.size() == 1 && names[0] == "all") names = preset_names();
  for (const auto& n : names)
    if (!is_preset(n)) {
      std::cerr << "unknown preset '" << n << "'; choose from:";
      for (const auto& p : preset_names()) std::cerr << " " << p;
      std::cerr << "\n";
      return kUsage;
    }
  const std::string root = out_path(g, "runs");
  std::vector<int> codes(names.size(), 0);
  std::mutex io;
  auto run_one = [&](std::size_t i) {
    ExperimentOptions opt{g.seed, g.epochs, g.batch_size, g.lr, g.grid, std::nullopt};
    // Presets sharing one run get distinct seeds.
    if (g.seed && names.size() > 1) opt.seed = *g.seed + static_cast<std::uint32_t>(i);
    try {
      const ExperimentResult r = run_experiment(names[i], opt);
      const std::string dir = names.size() == 1 && g.out ? root : (fs::path(root) / names[i]).string();
      write_experiment(r, dir);
      std::lock_guard<std::mutex> lock(io);
      for (const auto& m : r.metrics)
        std::cout << (m.pass() ? "PASS " : "FAIL ") << names[i] << " " << m.name << " = " << m.value
                  << (m.upper ? " <= " : " >= ") << m.threshold << "\n";
      std::cout << names[i] << ": " << (r.passed() ? "passed" : "failed") << " in " << r.seconds << " s -> " << dir << "\n";
      codes[i] = r.passed() ? 0 : 1;
    } catch (const TrainingDiverged& e) {
      std::lock_guard<std::mutex> lock(io);
      std::cerr << names[i] << ": training diverged: " << e.what() << "\n";
      codes[i] = kDiverged;
    }
  };
  const std::size_t workers = std::max<std::size_t>(1, std::min(g.parallel.value_or(1), names.size()));
  if (workers == 1) {
    for (std::size_t i = 0; i < names.size(); ++i) run_one(i);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w)
      pool.emplace_back([&] {
        for (std::size_t i; (i = next++) < names.size();) run_one(i);
      });
    for (auto& t : pool) t.join();
  }
  return *std::max_element(codes.begin(), codes.end());
}

int cmd_verify(const Globals& g, std::size_t instances) {
  const std::vector<MetricResult> results = run_property_suite(g.seed.value_or(0), instances);
  bool ok = true;
  Artifact a{{"value", "threshold", "pass"}, Eigen::MatrixXd(static_cast<Eigen::Index>(results.size()), 3)};
  for (std::size_t i = 0; i < results.size(); ++i) {
    const auto& m = results[i];
    std::cout << (m.pass() ? "PASS " : "FAIL ") << m.name << " = " << m.value << " <= " << m.threshold << "\n";
    ok = ok && m.pass();
    a.data.row(static_cast<Eigen::Index>(i)) << m.value, m.threshold, m.pass() ? 1.0 : 0.0;
  }
  if (g.out) {
    fs::create_directories(*g.out);
    nlohmann::json j = nlohmann::json::array();
    for (const auto& m : results) j.push_back({{"name", m.name}, {"value", m.value}, {"threshold", m.threshold}, {"pass", m.pass()}});
    write_json_file((fs::path(*g.out) / "verify.json").string(), j);
  }
  return ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Feature-geometry toolkit: dependence oracles, H-score training and inference"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  app.add_option("--seed", g.seed, "random seed");
  app.add_option("--out", g.out, "output file or directory");
  app.add_option("--epochs", g.epochs, "training epochs");
  app.add_option("--batch-size", g.batch_size, "minibatch size");
  app.add_option("--lr", g.lr, "Adam learning rate");
  app.add_option("--grid", g.grid, "evaluation grid points per axis");
  app.add_option("--parallel", g.parallel, "presets to run concurrently");
  app.add_option("--config", g.config, "JSON file with defaults for the flags above");

  std::string kind, variant = "interaction";
  std::size_t n = 50000;
  std::vector<std::size_t> sizes{8, 6};
  auto* gen = app.add_subcommand("gen", "generate a table or samples");
  gen->add_option("kind", kind, "discrete | samples | cosine | bms | multimodal")->required();
  gen->add_option("-n,--samples", n, "sample count");
  gen->add_option("--sizes", sizes, "alphabet sizes for discrete tables")->delimiter(',');
  gen->add_option("--variant", variant, "multimodal variant: interaction | pairwise");

  std::string table, closed;
  std::size_t k = 1, split = 1;
  auto* oracle = app.add_subcommand("oracle", "exact modal decomposition or closed-form references");
  oracle->add_option("--table", table, "JSON probability table");
  oracle->add_option("-k,--modes", k, "number of modes");
  oracle->add_option("--split", split, "number of leading axes on the left side");
  oracle->add_option("--closed-form", closed, "closed-form reference evaluated on the grid");

  std::string data_path;
  auto* train = app.add_subcommand("train", "learn tabular modal features from symbol pairs");
  train->add_option("data", data_path, "CSV with x, y symbol columns")->required();
  train->add_option("-k,--modes", k, "feature dimension");

  std::string model_path;
  auto* infer = app.add_subcommand("infer", "posterior and MAP labels from a trained model");
  infer->add_option("model", model_path, "model JSON written by train")->required();

  std::vector<std::string> presets;
  auto* experiment = app.add_subcommand("experiment", "run experiment presets");
  experiment->add_option("presets", presets, "preset names, or 'all'")->required();

  std::size_t instances = 100;
  auto* verify = app.add_subcommand("verify", "run the property suites");
  verify->add_option("--instances", instances, "random instances per property");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kUsage;
  }

  try {
    merge_config(g);
    if (*gen) return cmd_gen(g, kind, n, sizes, variant);
    if (*oracle) return cmd_oracle(g, table, k, split, closed);
    if (*train) return cmd_train(g, data_path, k);
    if (*infer) return cmd_infer(g, model_path);
    if (*experiment) return cmd_experiment(g, presets);
    if (*verify) return cmd_verify(g, instances);
  } catch (const ConfigError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kUsage;
  } catch (const TrainingDiverged& e) {
    std::cerr << "training diverged: " << e.what() << "\n";
    return kDiverged;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return kUsage;
}
