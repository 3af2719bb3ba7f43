#include "qeba/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <future>
#include <map>
#include <sstream>

#include "qeba/errors.hpp"

namespace qeba {

namespace {

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.12g", v);
  return buf;
}

// ---------------------------------------------------------------------
// flat key=value config scanner

struct RawConfig {
  // section -> key -> value; insertion order preserved for hashing only
  std::map<std::string, std::map<std::string, std::string>> sections;

  bool has(const std::string& section, const std::string& key) const {
    auto s = sections.find(section);
    return s != sections.end() && s->second.count(key) > 0;
  }
  std::string get(const std::string& section, const std::string& key,
                  const std::string& fallback) const {
    auto s = sections.find(section);
    if (s == sections.end()) return fallback;
    auto k = s->second.find(key);
    return k == s->second.end() ? fallback : k->second;
  }
  std::string require(const std::string& section,
                      const std::string& key) const {
    if (!has(section, key)) {
      throw ConfigError(section + "." + key + ": required key missing");
    }
    return get(section, key, "");
  }
};

std::string trim(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t\r");
  if (begin == std::string::npos) return "";
  const auto end = s.find_last_not_of(" \t\r");
  return s.substr(begin, end - begin + 1);
}

RawConfig scan_config(const std::string& text) {
  RawConfig raw;
  std::istringstream is(text);
  std::string line, section;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') {
        throw ConfigError("line " + std::to_string(lineno) +
                          ": unterminated section header");
      }
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("line " + std::to_string(lineno) +
                        ": expected key = value, got '" + line + "'");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) {
      throw ConfigError("line " + std::to_string(lineno) + ": empty key");
    }
    raw.sections[section][key] = value;
  }
  return raw;
}

double parse_double(const std::string& value, const std::string& field) {
  try {
    size_t used = 0;
    const double v = std::stod(value, &used);
    if (used != value.size()) throw std::invalid_argument(value);
    return v;
  } catch (const std::exception&) {
    throw ConfigError(field + ": expected a number, got '" + value + "'");
  }
}

long long parse_int(const std::string& value, const std::string& field) {
  try {
    size_t used = 0;
    const long long v = std::stoll(value, &used);
    if (used != value.size()) throw std::invalid_argument(value);
    return v;
  } catch (const std::exception&) {
    throw ConfigError(field + ": expected an integer, got '" + value + "'");
  }
}

bool parse_bool(const std::string& value, const std::string& field) {
  if (value == "true" || value == "1" || value == "yes") return true;
  if (value == "false" || value == "0" || value == "no") return false;
  throw ConfigError(field + ": expected true/false, got '" + value + "'");
}

std::vector<std::string> split_list(const std::string& value) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream is(value);
  while (std::getline(is, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

ImageShape parse_shape(const std::string& value, const std::string& field) {
  int c = 0, h = 0, w = 0;
  char x1 = 0, x2 = 0;
  std::istringstream is(value);
  is >> c >> x1 >> h >> x2 >> w;
  if (!is || x1 != 'x' || x2 != 'x' || c < 1 || h < 1 || w < 1) {
    throw ConfigError(field + ": expected CxHxW, got '" + value + "'");
  }
  return ImageShape{c, h, w};
}

// spec := "kind" or "kind:arg"
std::pair<std::string, std::string> split_spec(const std::string& spec) {
  const auto colon = spec.find(':');
  if (colon == std::string::npos) return {spec, ""};
  return {spec.substr(0, colon), spec.substr(colon + 1)};
}

Eigen::VectorXd smooth_field(ImageShape shape, RngStream& rng) {
  constexpr int kBand = 4;  // lowest frequencies per axis
  const double pi = std::acos(-1.0);
  Eigen::VectorXd field = Eigen::VectorXd::Zero(shape.size());
  for (int c = 0; c < shape.channels; ++c) {
    double coef[kBand][kBand];
    for (auto& row : coef) {
      for (double& v : row) v = rng.gaussian();
    }
    coef[0][0] = 0.0;  // drop the mean term
    for (int y = 0; y < shape.height; ++y) {
      for (int x = 0; x < shape.width; ++x) {
        double v = 0.0;
        for (int j1 = 0; j1 < kBand; ++j1) {
          for (int j2 = 0; j2 < kBand; ++j2) {
            v += coef[j1][j2] *
                 std::cos((y + 0.5) * j1 * pi / shape.height) *
                 std::cos((x + 0.5) * j2 * pi / shape.width);
          }
        }
        field[(static_cast<Eigen::Index>(c) * shape.height + y) *
                  shape.width +
              x] = v;
      }
    }
  }
  const double peak = field.cwiseAbs().maxCoeff();
  if (peak > 0.0) field /= peak;
  return field;
}

}  // namespace

std::uint64_t fnv1a_hash(const std::string& text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

Image smooth_image(ImageShape shape, std::uint64_t seed, double amplitude) {
  RngStream rng(seed);
  Image img(shape, Eigen::VectorXd::Constant(shape.size(), 0.5) +
                       amplitude * smooth_field(shape, rng));
  clip01_inplace(img);
  return img;
}

Image generate_image(const std::string& spec, ImageShape shape,
                     std::uint64_t salt) {
  const auto [kind, arg] = split_spec(spec);
  if (kind == "uniform") {
    RngStream rng =
        RngStream(static_cast<std::uint64_t>(parse_int(arg, "image seed")))
            .derive(salt);
    Image img = Image::zeros(shape);
    for (Eigen::Index i = 0; i < img.size(); ++i) {
      img.data[i] = rng.uniform01();
    }
    return img;
  }
  if (kind == "smooth") {
    const auto base = static_cast<std::uint64_t>(parse_int(arg, "image seed"));
    return smooth_image(shape, RngStream(base).derive(salt).seed(), 0.4);
  }
  if (kind == "constant") {
    const double v = parse_double(arg, "image constant");
    if (v < 0.0 || v > 1.0) {
      throw ConfigError("image constant: value must lie in [0,1]");
    }
    return Image::constant(shape, v);
  }
  if (kind == "qimg") {
    Image img = load_qimg(arg);
    if (!(img.shape == shape)) {
      throw ConfigError("image " + arg + ": shape mismatch with config");
    }
    return img;
  }
  if (kind == "p8") {
    Image img = load_8bit(arg);
    if (!(img.shape == shape)) {
      throw ConfigError("image " + arg + ": shape mismatch with config");
    }
    return img;
  }
  throw ConfigError("image spec '" + spec + "': unknown generator kind");
}

// ---------------------------------------------------------------------
// config parsing

ExperimentConfig ExperimentConfig::parse(const std::string& text) {
  const RawConfig raw = scan_config(text);
  ExperimentConfig cfg;
  cfg.config_hash = fnv1a_hash(text);

  cfg.shape = parse_shape(raw.require("victim", "shape"), "victim.shape");
  cfg.victim.kind = raw.require("victim", "kind");
  if (cfg.victim.kind == "linear") {
    cfg.victim.w = raw.require("victim", "w");
    cfg.victim.bias = raw.get("victim", "bias", "midpoint");
  } else if (cfg.victim.kind == "quadratic") {
    cfg.victim.center = raw.require("victim", "center");
    cfg.victim.radius = raw.require("victim", "radius");
  } else if (cfg.victim.kind == "mlp") {
    cfg.victim.weights_file = raw.require("victim", "weights");
    cfg.victim.mal_class = static_cast<int>(
        parse_int(raw.get("victim", "mal_class", "0"), "victim.mal_class"));
  } else {
    throw ConfigError("victim.kind: unknown kind '" + cfg.victim.kind + "'");
  }

  cfg.source = raw.get("images", "source", cfg.source);
  cfg.target = raw.get("images", "target", cfg.target);

  cfg.subspace.kind = raw.get("subspace", "kind", "full");
  cfg.subspace.r =
      static_cast<int>(parse_int(raw.get("subspace", "r", "4"), "subspace.r"));
  cfg.subspace.n = parse_int(raw.get("subspace", "n", "0"), "subspace.n");
  cfg.subspace.orthonormalize = parse_bool(
      raw.get("subspace", "orthonormalize", "false"),
      "subspace.orthonormalize");
  cfg.subspace.path = raw.get("subspace", "path", "");
  cfg.subspace.store = raw.get("subspace", "store", "");
  cfg.subspace.oversample =
      parse_int(raw.get("subspace", "oversample", "10"), "subspace.oversample");
  cfg.subspace.power_iters = static_cast<int>(parse_int(
      raw.get("subspace", "power_iters", "2"), "subspace.power_iters"));

  cfg.batch = parse_int(raw.get("attack", "B", "100"), "attack.B");
  if (cfg.batch < 1) throw ConfigError("attack.B: must be >= 1");
  cfg.max_queries = static_cast<std::uint64_t>(
      parse_int(raw.get("attack", "max_queries", "20000"),
                "attack.max_queries"));
  cfg.theta =
      parse_double(raw.get("attack", "theta", "1e-3"), "attack.theta");
  if (cfg.theta <= 0.0 || cfg.theta >= 1.0) {
    throw ConfigError("attack.theta: must lie in (0,1)");
  }
  cfg.discretized = parse_bool(raw.get("attack", "discretized", "false"),
                               "attack.discretized");
  cfg.control_variate = parse_bool(
      raw.get("attack", "control_variate", "false"), "attack.control_variate");
  cfg.orthogonalize_directions =
      parse_bool(raw.get("attack", "orthogonalize", "false"),
                 "attack.orthogonalize");

  cfg.repetitions = static_cast<int>(parse_int(
      raw.get("experiment", "repetitions", "1"), "experiment.repetitions"));
  if (cfg.repetitions < 1) {
    throw ConfigError("experiment.repetitions: must be >= 1");
  }
  cfg.seed = static_cast<std::uint64_t>(
      parse_int(raw.get("experiment", "seed", "0"), "experiment.seed"));
  for (const auto& item : split_list(raw.get("experiment", "thresholds", ""))) {
    cfg.thresholds.push_back(parse_double(item, "experiment.thresholds"));
  }
  for (size_t i = 1; i < cfg.thresholds.size(); ++i) {
    if (cfg.thresholds[i] >= cfg.thresholds[i - 1]) {
      throw ConfigError("experiment.thresholds: must be strictly decreasing");
    }
  }
  for (const auto& item : split_list(raw.get("experiment", "budgets", ""))) {
    cfg.budgets.push_back(
        static_cast<std::uint64_t>(parse_int(item, "experiment.budgets")));
  }
  if (cfg.budgets.empty()) {
    cfg.budgets = {cfg.max_queries / 4, cfg.max_queries / 2, cfg.max_queries};
  }
  cfg.query_grid = static_cast<std::uint64_t>(parse_int(
      raw.get("experiment", "query_grid", "100"), "experiment.query_grid"));
  if (cfg.query_grid < 1) {
    throw ConfigError("experiment.query_grid: must be >= 1");
  }
  cfg.out_dir = raw.get("experiment", "out_dir", "out");
  cfg.label = raw.get("experiment", "label", cfg.subspace.kind);
  return cfg;
}

ExperimentConfig ExperimentConfig::parse_file(
    const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError(path.string() + ": cannot open config file");
  std::stringstream buf;
  buf << is.rdbuf();
  return parse(buf.str());
}

// ---------------------------------------------------------------------
// fixture resolution

namespace {

struct RepSeeds {
  std::uint64_t attack;
  std::uint64_t source_salt;
  std::uint64_t target_salt;
  std::uint64_t victim_salt;
  std::uint64_t basis_salt;
};

RepSeeds rep_seeds(std::uint64_t root, int repetition) {
  RngStream base = RngStream(root).derive(static_cast<std::uint64_t>(repetition));
  return RepSeeds{base.seed(), base.derive(1).seed(), base.derive(2).seed(),
                  base.derive(3).seed(), base.derive(4).seed()};
}

Eigen::VectorXd generate_weight(const std::string& spec, ImageShape shape,
                                std::uint64_t salt) {
  const auto [kind, arg] = split_spec(spec);
  if (kind == "gaussian") {
    RngStream rng =
        RngStream(static_cast<std::uint64_t>(parse_int(arg, "victim.w seed")))
            .derive(salt);
    return rng.gaussian_vector(shape.size()).normalized();
  }
  if (kind == "smooth") {
    RngStream rng =
        RngStream(static_cast<std::uint64_t>(parse_int(arg, "victim.w seed")))
            .derive(salt);
    return smooth_field(shape, rng).normalized();
  }
  throw ConfigError("victim.w: unknown weight spec '" + spec + "'");
}

}  // namespace

ResolvedAttack resolve_attack(const ExperimentConfig& config, int repetition) {
  if (repetition < 0 || repetition >= config.repetitions) {
    throw ConfigError("repetition index out of range");
  }
  const RepSeeds seeds = rep_seeds(config.seed, repetition);

  Image target = generate_image(config.target, config.shape,
                                seeds.target_salt);

  AnalyticVictim victim;
  Image source;
  if (config.victim.kind == "quadratic") {
    Image center =
        generate_image(config.victim.center, config.shape, seeds.victim_salt);
    double radius;
    const auto [rkind, rarg] = split_spec(config.victim.radius);
    if (rkind == "ratio") {
      radius = parse_double(rarg, "victim.radius") * l2(target, center);
    } else {
      radius = parse_double(config.victim.radius, "victim.radius");
    }
    if (radius <= 0.0) throw ConfigError("victim.radius: must be positive");
    victim = make_quadratic_victim(center, radius);
    // source: inside the sphere; "ball:<seed>" puts it at 0.5 r along a
    // random smooth direction from the center
    const auto [skind, sarg] = split_spec(config.source);
    if (skind == "ball") {
      RngStream rng =
          RngStream(static_cast<std::uint64_t>(parse_int(sarg, "images.source")))
              .derive(seeds.source_salt);
      Eigen::VectorXd dir = smooth_field(config.shape, rng);
      dir.normalize();
      source = Image(config.shape, center.data + 0.5 * radius * dir);
      clip01_inplace(source);
    } else {
      source = generate_image(config.source, config.shape, seeds.source_salt);
    }
  } else if (config.victim.kind == "linear") {
    source = generate_image(config.source, config.shape, seeds.source_salt);
    Eigen::VectorXd w =
        generate_weight(config.victim.w, config.shape, seeds.victim_salt);
    double b;
    if (config.victim.bias == "midpoint") {
      b = -w.dot(0.5 * (source.data + target.data));
    } else {
      b = parse_double(config.victim.bias, "victim.bias");
    }
    if (w.dot(source.data) + b < 0.0) {  // orient the malicious side at src
      w = -w;
      b = -b;
    }
    if (w.dot(target.data) + b >= 0.0) {
      throw ConfigError(
          "victim: source and target fall on the same side of the boundary");
    }
    victim = make_linear_victim(w, b);
  } else if (config.victim.kind == "mlp") {
    source = generate_image(config.source, config.shape, seeds.source_salt);
    victim = make_mlp_victim(config.victim.weights_file,
                             config.victim.mal_class);
    if (victim.dim != config.shape.size()) {
      throw ConfigError("victim.weights: input dim " +
                        std::to_string(victim.dim) + " != C*H*W = " +
                        std::to_string(config.shape.size()));
    }
  } else {
    throw ConfigError("victim.kind: unknown kind '" + config.victim.kind +
                      "'");
  }

  const auto& ss = config.subspace;
  RngStream basis_rng(seeds.basis_salt);
  SubspaceBasis basis = [&]() -> SubspaceBasis {
    if (ss.kind == "full") return SubspaceBasis::full(config.shape.size());
    if (ss.kind == "spatial") {
      return SubspaceBasis::spatial(config.shape, ss.r, ss.orthonormalize);
    }
    if (ss.kind == "dct") return SubspaceBasis::dct(config.shape, ss.r);
    if (ss.kind == "random") {
      if (ss.n < 1) throw ConfigError("subspace.n: required for kind=random");
      return SubspaceBasis::random_orthonormal(config.shape.size(), ss.n,
                                               basis_rng);
    }
    if (ss.kind == "aligned") {
      if (ss.n < 1) throw ConfigError("subspace.n: required for kind=aligned");
      if (config.victim.kind != "linear") {
        throw ConfigError(
            "subspace.kind: aligned requires a linear victim (constant "
            "gradient)");
      }
      return SubspaceBasis::span_containing(victim.grad(source.data), ss.n,
                                            basis_rng);
    }
    if (ss.kind == "pca") {
      if (ss.store.empty()) {
        throw ConfigError("subspace.store: required for kind=pca");
      }
      if (ss.n < 1) throw ConfigError("subspace.n: required for kind=pca");
      const GradientStore store = GradientStore::open(ss.store);
      return pca_basis(store, ss.n, ss.oversample, ss.power_iters, basis_rng);
    }
    if (ss.kind == "file") {
      if (ss.path.empty()) {
        throw ConfigError("subspace.path: required for kind=file");
      }
      return load_basis(ss.path);
    }
    throw ConfigError("subspace.kind: unknown kind '" + ss.kind + "'");
  }();
  if (basis.m() != config.shape.size()) {
    throw ConfigError("subspace: ambient dimension " +
                      std::to_string(basis.m()) + " != C*H*W = " +
                      std::to_string(config.shape.size()));
  }

  ResolvedAttack out{std::move(victim), std::move(source), std::move(target),
                     std::move(basis), AttackConfig{}};
  out.attack.source = out.source;
  out.attack.target = out.target;
  out.attack.batch = config.batch;
  out.attack.max_queries = config.max_queries;
  out.attack.theta = config.theta;
  out.attack.seed = seeds.attack;
  out.attack.discretized = config.discretized;
  out.attack.control_variate = config.control_variate;
  out.attack.orthogonalize_directions = config.orthogonalize_directions;
  return out;
}

// ---------------------------------------------------------------------
// experiment runner and aggregation

namespace {

std::vector<std::string> base_metadata(std::uint64_t hash, std::uint64_t seed,
                                       int repetitions) {
  char buf[128];
  std::snprintf(buf, sizeof buf, "config_hash=0x%016llx root_seed=%llu",
                static_cast<unsigned long long>(hash),
                static_cast<unsigned long long>(seed));
  std::vector<std::string> meta{buf};
  std::snprintf(buf, sizeof buf,
                "denominator: repetitions=%d (seeds x pairs at desk scale)",
                repetitions);
  meta.emplace_back(buf);
  return meta;
}

struct RepOutcome {
  AttackTrace trace;
  double initial_mse = 0.0;
};

RepOutcome run_one(const ExperimentConfig& config, int rep) {
  ResolvedAttack fixture = resolve_attack(config, rep);
  HardLabelOracle oracle =
      config.discretized
          ? HardLabelOracle::from_victim_discretized(fixture.victim,
                                                     config.max_queries)
          : HardLabelOracle::from_victim(fixture.victim, config.max_queries);
  RepOutcome outcome;
  outcome.initial_mse = mse(fixture.source, fixture.target);
  outcome.trace = run_attack(fixture.attack, oracle, fixture.basis);
  return outcome;
}

std::vector<RepOutcome> run_all(const ExperimentConfig& config) {
  std::vector<std::future<RepOutcome>> futures;
  futures.reserve(config.repetitions);
  for (int rep = 0; rep < config.repetitions; ++rep) {
    futures.push_back(std::async(std::launch::async,
                                 [&config, rep] { return run_one(config, rep); }));
  }
  std::vector<RepOutcome> outcomes;
  outcomes.reserve(config.repetitions);
  for (auto& f : futures) outcomes.push_back(f.get());
  return outcomes;
}

// last observation carried forward onto a fixed query grid
std::vector<double> locf_curve(const RepOutcome& outcome,
                               const std::vector<std::uint64_t>& grid) {
  std::vector<double> values(grid.size());
  double current = outcome.initial_mse;
  size_t next = 0;
  for (size_t g = 0; g < grid.size(); ++g) {
    while (next < outcome.trace.records.size() &&
           outcome.trace.records[next].cumulative_queries <= grid[g]) {
      current = outcome.trace.records[next].mse;
      ++next;
    }
    values[g] = current;
  }
  return values;
}

double best_mse_within(const AttackTrace& trace, std::uint64_t budget) {
  double best = std::numeric_limits<double>::infinity();
  for (const auto& rec : trace.records) {
    if (rec.cumulative_queries <= budget) best = std::min(best, rec.mse);
  }
  return best;
}

}  // namespace

ExperimentResult run_experiment(const ExperimentConfig& config) {
  std::filesystem::create_directories(config.out_dir);
  const auto meta =
      base_metadata(config.config_hash, config.seed, config.repetitions);
  const auto outcomes = run_all(config);

  ExperimentResult result;
  for (int rep = 0; rep < config.repetitions; ++rep) {
    const auto& outcome = outcomes[static_cast<size_t>(rep)];
    const std::filesystem::path dir(config.out_dir);
    auto rep_meta = meta;
    rep_meta.push_back("repetition=" + std::to_string(rep));
    write_trace_csv(outcome.trace,
                    dir / ("trace_rep" + std::to_string(rep) + ".csv"),
                    rep_meta);
    save_qimg(outcome.trace.final_image,
              dir / ("final_rep" + std::to_string(rep) + ".qimg"));
    result.traces.push_back(outcome.trace);
  }

  for (std::uint64_t q = 0; q <= config.max_queries; q += config.query_grid) {
    result.grid.push_back(q);
  }
  result.mean_mse.assign(result.grid.size(), 0.0);
  for (const auto& outcome : outcomes) {
    const auto curve = locf_curve(outcome, result.grid);
    for (size_t g = 0; g < curve.size(); ++g) result.mean_mse[g] += curve[g];
  }
  for (double& v : result.mean_mse) {
    v /= static_cast<double>(config.repetitions);
  }
  {
    std::ofstream os(std::filesystem::path(config.out_dir) / "curve.csv");
    if (!os) throw ParseError("curve.csv: cannot open for writing");
    for (const auto& line : meta) os << "# " << line << "\n";
    os << "queries,mean_mse\n";
    for (size_t g = 0; g < result.grid.size(); ++g) {
      os << result.grid[g] << "," << format_double(result.mean_mse[g]) << "\n";
    }
  }

  result.success.assign(config.thresholds.size(),
                        std::vector<double>(config.budgets.size(), 0.0));
  for (size_t ti = 0; ti < config.thresholds.size(); ++ti) {
    for (size_t bi = 0; bi < config.budgets.size(); ++bi) {
      int hits = 0;
      for (const auto& outcome : outcomes) {
        if (best_mse_within(outcome.trace, config.budgets[bi]) <=
            config.thresholds[ti]) {
          ++hits;
        }
      }
      result.success[ti][bi] =
          static_cast<double>(hits) / static_cast<double>(config.repetitions);
    }
  }
  {
    std::ofstream os(std::filesystem::path(config.out_dir) / "success.csv");
    if (!os) throw ParseError("success.csv: cannot open for writing");
    for (const auto& line : meta) os << "# " << line << "\n";
    os << "threshold";
    for (const auto b : config.budgets) os << ",q" << b;
    os << "\n";
    for (size_t ti = 0; ti < config.thresholds.size(); ++ti) {
      os << format_double(config.thresholds[ti]);
      for (size_t bi = 0; bi < config.budgets.size(); ++bi) {
        os << "," << format_double(result.success[ti][bi]);
      }
      os << "\n";
    }
  }
  return result;
}

CompareResult compare_methods(const std::vector<ExperimentConfig>& configs) {
  if (configs.empty()) {
    throw ConfigError("compare: need at least one config");
  }
  const auto& ref = configs.front();
  for (size_t i = 1; i < configs.size(); ++i) {
    const auto& c = configs[i];
    const bool same =
        c.shape == ref.shape && c.victim.kind == ref.victim.kind &&
        c.victim.w == ref.victim.w && c.victim.bias == ref.victim.bias &&
        c.victim.center == ref.victim.center &&
        c.victim.radius == ref.victim.radius &&
        c.victim.weights_file == ref.victim.weights_file &&
        c.victim.mal_class == ref.victim.mal_class && c.source == ref.source &&
        c.target == ref.target && c.batch == ref.batch &&
        c.max_queries == ref.max_queries && c.theta == ref.theta &&
        c.discretized == ref.discretized &&
        c.control_variate == ref.control_variate &&
        c.orthogonalize_directions == ref.orthogonalize_directions &&
        c.repetitions == ref.repetitions && c.seed == ref.seed;
    if (!same) {
      throw ConfigError("compare: config " + std::to_string(i) +
                        " differs from the first in more than the subspace");
    }
  }

  CompareResult result;
  for (const auto& config : configs) {
    result.labels.push_back(config.label);
    const auto outcomes = run_all(config);
    std::vector<double> finals;
    finals.reserve(outcomes.size());
    for (const auto& outcome : outcomes) {
      finals.push_back(outcome.trace.records.empty()
                           ? outcome.initial_mse
                           : outcome.trace.records.back().mse);
    }
    result.final_mse.push_back(std::move(finals));
  }

  const size_t methods = configs.size();
  const int reps = ref.repetitions;
  result.win_fraction.assign(methods, std::vector<double>(methods, 0.0));
  for (size_t a = 0; a < methods; ++a) {
    for (size_t b = 0; b < methods; ++b) {
      double points = 0.0;
      for (int rep = 0; rep < reps; ++rep) {
        const double ma = result.final_mse[a][static_cast<size_t>(rep)];
        const double mb = result.final_mse[b][static_cast<size_t>(rep)];
        if (ma < mb) points += 1.0;
        else if (ma == mb) points += 0.5;
      }
      result.win_fraction[a][b] = points / static_cast<double>(reps);
    }
  }

  std::filesystem::create_directories(ref.out_dir);
  const auto meta = base_metadata(ref.config_hash, ref.seed, reps);
  {
    std::ofstream os(std::filesystem::path(ref.out_dir) / "compare.csv");
    if (!os) throw ParseError("compare.csv: cannot open for writing");
    for (const auto& line : meta) os << "# " << line << "\n";
    os << "rep";
    for (const auto& label : result.labels) os << "," << label;
    os << "\n";
    for (int rep = 0; rep < reps; ++rep) {
      os << rep;
      for (size_t a = 0; a < methods; ++a) {
        os << "," << format_double(result.final_mse[a][static_cast<size_t>(rep)]);
      }
      os << "\n";
    }
  }
  {
    std::ofstream os(std::filesystem::path(ref.out_dir) / "compare_wins.csv");
    if (!os) throw ParseError("compare_wins.csv: cannot open for writing");
    for (const auto& line : meta) os << "# " << line << "\n";
    os << "method_a,method_b,win_fraction_a\n";
    for (size_t a = 0; a < methods; ++a) {
      for (size_t b = 0; b < methods; ++b) {
        os << result.labels[a] << "," << result.labels[b] << ","
           << format_double(result.win_fraction[a][b]) << "\n";
      }
    }
  }
  return result;
}

// ---------------------------------------------------------------------
// theory sweeps

TheoryConfig TheoryConfig::parse(const std::string& text) {
  const RawConfig raw = scan_config(text);
  TheoryConfig cfg;
  cfg.config_hash = fnv1a_hash(text);
  cfg.victim = raw.get("theory", "victim", "linear");
  if (cfg.victim != "linear" && cfg.victim != "quadratic") {
    throw ConfigError("theory.victim: unknown kind '" + cfg.victim + "'");
  }
  cfg.shape = parse_shape(raw.require("theory", "shape"), "theory.shape");
  cfg.basis = raw.get("theory", "basis", "full");
  if (cfg.basis != "full" && cfg.basis != "random" && cfg.basis != "aligned") {
    throw ConfigError("theory.basis: unknown kind '" + cfg.basis + "'");
  }
  for (const auto& item : split_list(raw.get("theory", "n_list", ""))) {
    cfg.n_list.push_back(parse_int(item, "theory.n_list"));
  }
  if (cfg.n_list.empty()) cfg.n_list = {cfg.shape.size()};
  for (const auto& item : split_list(raw.require("theory", "B_list"))) {
    cfg.b_list.push_back(parse_int(item, "theory.B_list"));
  }
  for (const auto& item : split_list(raw.require("theory", "delta_list"))) {
    cfg.delta_list.push_back(parse_double(item, "theory.delta_list"));
  }
  cfg.trials =
      parse_int(raw.get("theory", "trials", "200"), "theory.trials");
  if (cfg.trials < 2) throw ConfigError("theory.trials: must be >= 2");
  cfg.seed = static_cast<std::uint64_t>(
      parse_int(raw.get("theory", "seed", "0"), "theory.seed"));
  cfg.orthogonalize = parse_bool(raw.get("theory", "orthogonalize", "true"),
                                 "theory.orthogonalize");
  cfg.out_dir = raw.get("theory", "out_dir", "out");
  for (const auto n : cfg.n_list) {
    if (n < 2 || n > cfg.shape.size()) {
      throw ConfigError("theory.n_list: n must lie in [2, C*H*W]");
    }
    if (cfg.basis == "full" && n != cfg.shape.size()) {
      throw ConfigError("theory.n_list: full basis requires n = C*H*W");
    }
    for (const auto b : cfg.b_list) {
      if (b < 1) throw ConfigError("theory.B_list: B must be >= 1");
      if (cfg.orthogonalize && b > n) {
        throw ConfigError("theory.B_list: B exceeds n with orthogonalized "
                          "directions");
      }
    }
  }
  for (const auto d : cfg.delta_list) {
    if (d <= 0.0) throw ConfigError("theory.delta_list: must be positive");
  }
  return cfg;
}

TheoryConfig TheoryConfig::parse_file(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError(path.string() + ": cannot open config file");
  std::stringstream buf;
  buf << is.rdbuf();
  return parse(buf.str());
}

std::vector<BoundReport> validate_theory(const TheoryConfig& config) {
  RngStream root(config.seed);
  const Eigen::Index m = config.shape.size();

  AnalyticVictim victim;
  Image point;
  RngStream victim_rng = root.derive(1);
  if (config.victim == "linear") {
    const Eigen::VectorXd w = victim_rng.gaussian_vector(m).normalized();
    const double b = -w.dot(Eigen::VectorXd::Constant(m, 0.5));
    victim = make_linear_victim(w, b);
    point = linear_boundary_point(w, b, config.shape, victim_rng);
  } else {
    const Image center = Image::constant(config.shape, 0.5);
    const double radius = 1.0;
    victim = make_quadratic_victim(center, radius);
    point = quadratic_boundary_point(center, radius, config.shape, victim_rng);
  }

  std::vector<BoundReport> reports;
  std::uint64_t row = 0, n_index = 0;
  for (const auto n : config.n_list) {
    // even offsets for basis streams, odd for trial streams
    RngStream basis_rng = root.derive(2 * n_index + 2);
    ++n_index;
    SubspaceBasis basis = [&]() {
      if (config.basis == "full") return SubspaceBasis::full(m);
      if (config.basis == "random") {
        return SubspaceBasis::random_orthonormal(m, n, basis_rng);
      }
      return SubspaceBasis::span_containing(victim.grad(point.data), n,
                                            basis_rng);
    }();
    for (const auto b : config.b_list) {
      for (const auto mult : config.delta_list) {
        const double grad_norm = victim.grad(point.data).norm();
        const double lipschitz = victim.grad_lipschitz.value_or(0.0);
        const double delta =
            lipschitz > 0.0 ? mult * grad_norm / lipschitz : mult;
        RngStream trial_rng = root.derive(2 * row + 3);
        reports.push_back(measure_cosine(victim, point, basis, b, delta,
                                         config.trials, trial_rng,
                                         config.orthogonalize));
        ++row;
      }
    }
  }

  std::filesystem::create_directories(config.out_dir);
  char buf[128];
  std::snprintf(buf, sizeof buf, "config_hash=0x%016llx root_seed=%llu",
                static_cast<unsigned long long>(config.config_hash),
                static_cast<unsigned long long>(config.seed));
  write_bound_reports_csv(reports,
                          std::filesystem::path(config.out_dir) / "theory.csv",
                          {buf});
  return reports;
}

}  // namespace qeba
