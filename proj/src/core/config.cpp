#include "danlab/config.hpp"

#include <charconv>
#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "danlab/error.hpp"

namespace danlab::config {

namespace pt = boost::property_tree;

namespace {

const std::set<std::string>& known_keys() {
  static const std::set<std::string> keys = {
      "ods.model", "ods.n", "ods.d", "ods.dt", "ods.forcing", "ods.q", "ods.r", "ods.burn_in", "ods.init_mean",
      "ods.linear_coeff", "dan.m", "dan.depth", "dan.slope", "train.mode", "train.window", "train.batch",
      "train.steps", "train.lr", "train.test_every", "train.test_len", "train.horizon", "train.fresh_data",
      "baseline.members", "baseline.inflation", "run.seed", "run.out", "run.threads"};
  return keys;
}

template <class T>
void read(const pt::ptree& tree, const std::string& key, T& out) {
  const auto v = tree.get_optional<std::string>(pt::ptree::path_type(key, '.'));
  if (!v) return;
  std::istringstream in(*v);
  T parsed{};
  in >> std::boolalpha >> parsed;
  if (in.fail() || !(in >> std::ws).eof()) throw ConfigError("cannot parse value '" + *v + "' for key " + key);
  out = parsed;
}

std::vector<double> parse_list(const std::string& text, const std::string& key) {
  std::vector<double> out;
  std::istringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    std::istringstream one(item);
    double v = 0.0;
    one >> v;
    if (one.fail() || !(one >> std::ws).eof()) throw ConfigError("cannot parse list item '" + item + "' in " + key);
    out.push_back(v);
  }
  if (out.empty()) throw ConfigError(key + " must list at least one value");
  return out;
}

}  // namespace

void ExperimentConfig::finalize() {
  ods.seed = seed;
  train.seed = seed;
  dan.n = ods.n;
  dan.d = ods.d;
  ods.validate();
  dan.validate();
  train.validate();
  if (baseline.members < 2) throw ConfigError("baseline.members must be >= 2");
  if (threads < 1) throw ConfigError("run.threads must be >= 1");
  if (ods.n != dan.n || ods.d != dan.d) throw ConfigError("ods and dan dimensions disagree");
}

ExperimentConfig parse(const std::string& text) {
  pt::ptree tree;
  try {
    std::istringstream in(text);
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError(std::string("malformed config: ") + e.what());
  }
  for (const auto& [section, body] : tree) {
    if (body.empty()) throw ConfigError("key '" + section + "' outside of a section");
    for (const auto& [key, value] : body) {
      if (!known_keys().contains(section + "." + key)) throw ConfigError("unknown config key " + section + "." + key);
    }
  }

  ExperimentConfig cfg;
  std::string model;
  read(tree, "ods.model", model);
  if (model == "lorenz95" || model.empty()) {
    cfg.ods.model = ods::Model::kLorenz95;
  } else if (model == "linear") {
    cfg.ods.model = ods::Model::kLinear;
  } else {
    throw ConfigError("ods.model must be lorenz95 or linear, got " + model);
  }
  read(tree, "ods.n", cfg.ods.n);
  cfg.ods.d = cfg.ods.n;
  read(tree, "ods.d", cfg.ods.d);
  read(tree, "ods.dt", cfg.ods.dt);
  read(tree, "ods.forcing", cfg.ods.forcing);
  read(tree, "ods.q", cfg.ods.q);
  read(tree, "ods.r", cfg.ods.r);
  read(tree, "ods.burn_in", cfg.ods.burn_in);
  read(tree, "ods.init_mean", cfg.ods.init_mean);
  read(tree, "ods.linear_coeff", cfg.ods.linear_coeff);

  read(tree, "dan.m", cfg.dan.m);
  read(tree, "dan.depth", cfg.dan.depth);
  read(tree, "dan.slope", cfg.dan.slope);

  std::string mode;
  read(tree, "train.mode", mode);
  if (mode == "tbptt" || mode.empty()) {
    cfg.train.mode = train::Mode::kTbptt;
  } else if (mode == "direct") {
    cfg.train.mode = train::Mode::kDirect;
  } else {
    throw ConfigError("train.mode must be direct or tbptt, got " + mode);
  }
  read(tree, "train.window", cfg.train.window);
  read(tree, "train.batch", cfg.train.batch);
  read(tree, "train.steps", cfg.train.steps);
  read(tree, "train.lr", cfg.train.lr);
  read(tree, "train.test_every", cfg.train.test_every);
  read(tree, "train.test_len", cfg.train.test_len);
  read(tree, "train.horizon", cfg.train.horizon);
  read(tree, "train.fresh_data", cfg.train.fresh_data);

  read(tree, "baseline.members", cfg.baseline.members);
  if (auto v = tree.get_optional<std::string>("baseline.inflation")) {
    cfg.baseline.inflation = parse_list(*v, "baseline.inflation");
  }

  read(tree, "run.seed", cfg.seed);
  read(tree, "run.out", cfg.out);
  read(tree, "run.threads", cfg.threads);
  if (const char* env = std::getenv("DANLAB_THREADS")) {
    int threads = 0;
    const std::string s(env);
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), threads);
    if (ec != std::errc() || ptr != s.data() + s.size() || threads < 1) {
      throw ConfigError("DANLAB_THREADS must be a positive integer, got '" + s + "'");
    }
    cfg.threads = threads;
  }
  cfg.finalize();
  return cfg;
}

ExperimentConfig load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse(buffer.str());
}

namespace {

// Shortest text that reads back to the same double.
std::string num(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

}  // namespace

std::string to_text(const ExperimentConfig& cfg) {
  std::ostringstream out;
  out << "[ods]\nmodel = " << (cfg.ods.model == ods::Model::kLinear ? "linear" : "lorenz95") << "\nn = " << cfg.ods.n
      << "\nd = " << cfg.ods.d << "\ndt = " << num(cfg.ods.dt) << "\nforcing = " << num(cfg.ods.forcing) << "\nq = " << num(cfg.ods.q)
      << "\nr = " << num(cfg.ods.r) << "\nburn_in = " << cfg.ods.burn_in << "\ninit_mean = " << num(cfg.ods.init_mean)
      << "\nlinear_coeff = " << num(cfg.ods.linear_coeff) << "\n\n[dan]\nm = " << cfg.dan.m << "\ndepth = " << cfg.dan.depth
      << "\nslope = " << num(cfg.dan.slope) << "\n\n[train]\nmode = "
      << (cfg.train.mode == train::Mode::kDirect ? "direct" : "tbptt") << "\nwindow = " << cfg.train.window
      << "\nbatch = " << cfg.train.batch << "\nsteps = " << cfg.train.steps << "\nlr = " << num(cfg.train.lr)
      << "\ntest_every = " << cfg.train.test_every << "\ntest_len = " << cfg.train.test_len
      << "\nhorizon = " << cfg.train.horizon << "\nfresh_data = " << (cfg.train.fresh_data ? "true" : "false")
      << "\n\n[baseline]\nmembers = " << cfg.baseline.members << "\ninflation = ";
  for (std::size_t k = 0; k < cfg.baseline.inflation.size(); ++k) {
    out << (k ? "," : "") << num(cfg.baseline.inflation[k]);
  }
  out << "\n\n[run]\nseed = " << cfg.seed << "\nout = " << cfg.out << "\nthreads = " << cfg.threads << "\n";
  return out.str();
}

}  // namespace danlab::config
