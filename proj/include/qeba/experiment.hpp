#ifndef QEBA_EXPERIMENT_HPP
#define QEBA_EXPERIMENT_HPP

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "qeba/attack.hpp"
#include "qeba/image.hpp"
#include "qeba/subspace.hpp"
#include "qeba/theory.hpp"
#include "qeba/victim.hpp"

namespace qeba {

/// Deterministic low-frequency test image: 0.5 plus a random cosine
/// field on the lowest 4x4 frequency block per channel, scaled to the
/// given peak amplitude and clamped into [0,1].
Image smooth_image(ImageShape shape, std::uint64_t seed, double amplitude);

/// Image from a config spec: "uniform:<seed>", "smooth:<seed>",
/// "constant:<value>", "qimg:<path>" or "p8:<path>". Generator seeds
/// are mixed with salt so repetitions draw distinct instances.
Image generate_image(const std::string& spec, ImageShape shape,
                     std::uint64_t salt);

struct VictimSpec {
  std::string kind;         // linear | quadratic | mlp
  std::string w;            // linear: image spec for the weight vector
  std::string bias;         // linear: float, or "midpoint"
  std::string center;       // quadratic: image spec
  std::string radius;       // quadratic: float, or "ratio:<f>" of ||tgt-c||
  std::string weights_file; // mlp
  int mal_class = 0;        // mlp
};

struct SubspaceSpec {
  std::string kind = "full";  // full|spatial|dct|pca|random|aligned|file
  int r = 4;
  Eigen::Index n = 0;
  bool orthonormalize = false;  // spatial: QR variant
  std::string path;             // file: basis cache to load
  std::string store;            // pca: gradient store path
  Eigen::Index oversample = 10;
  int power_iters = 2;
};

/// Flat key=value configuration with [section] headers; '#' starts a
/// comment. Invalid values raise ConfigError naming the field.
struct ExperimentConfig {
  ImageShape shape;
  VictimSpec victim;
  std::string source = "uniform:1";
  std::string target = "uniform:2";
  SubspaceSpec subspace;

  Eigen::Index batch = 100;
  std::uint64_t max_queries = 20000;
  double theta = 1e-3;
  bool discretized = false;
  bool control_variate = false;
  bool orthogonalize_directions = false;

  int repetitions = 1;
  std::uint64_t seed = 0;
  std::vector<double> thresholds;        // strictly decreasing
  std::vector<std::uint64_t> budgets;    // success-table columns
  std::uint64_t query_grid = 100;
  std::string out_dir = "out";
  std::string label;                     // defaults to the subspace kind

  std::uint64_t config_hash = 0;  // FNV-1a of the raw config text

  static ExperimentConfig parse(const std::string& text);
  static ExperimentConfig parse_file(const std::filesystem::path& path);
};

/// Fully constructed fixture for one repetition: victim, image pair
/// (re-drawn per repetition from the spec seeds), basis and the attack
/// configuration with the derived per-repetition seed.
struct ResolvedAttack {
  AnalyticVictim victim;
  Image source;
  Image target;
  SubspaceBasis basis;
  AttackConfig attack;
};
ResolvedAttack resolve_attack(const ExperimentConfig& config, int repetition);

struct ExperimentResult {
  std::vector<AttackTrace> traces;          // one per repetition
  std::vector<std::uint64_t> grid;          // query checkpoints
  std::vector<double> mean_mse;             // LOCF mean across repetitions
  std::vector<std::vector<double>> success; // [threshold][budget] fractions
};

/// Runs all repetitions (concurrently, each on its own oracle and
/// derived seed), writes one trace CSV and final QIMG per repetition,
/// an aggregate MSE-vs-query curve and the success-rate table under
/// out_dir. All outputs carry the config hash and root seed in '#'
/// metadata lines; data rows are byte-identical across re-runs.
ExperimentResult run_experiment(const ExperimentConfig& config);

struct CompareResult {
  std::vector<std::string> labels;
  std::vector<std::vector<double>> final_mse;     // [method][repetition]
  std::vector<std::vector<double>> win_fraction;  // [a][b], ties split 0.5
};

/// Paired A/B comparison of configs that differ only in their subspace
/// section (same victims, pairs and seeds per repetition). Writes the
/// per-repetition final-MSE table and the pairwise win fractions.
CompareResult compare_methods(const std::vector<ExperimentConfig>& configs);

struct TheoryConfig {
  std::string victim = "linear";  // linear | quadratic
  ImageShape shape;
  std::string basis = "full";     // full | random | aligned
  std::vector<Eigen::Index> n_list;
  std::vector<Eigen::Index> b_list;
  std::vector<double> delta_list;  // scaled by ||grad||/L when L > 0
  Eigen::Index trials = 200;
  std::uint64_t seed = 0;
  bool orthogonalize = true;
  std::string out_dir = "out";
  std::uint64_t config_hash = 0;

  static TheoryConfig parse(const std::string& text);
  static TheoryConfig parse_file(const std::filesystem::path& path);
};

/// Sweeps measure_cosine over the (n, B, delta) grid and writes the
/// BoundReport CSV under out_dir.
std::vector<BoundReport> validate_theory(const TheoryConfig& config);

std::uint64_t fnv1a_hash(const std::string& text);

}  // namespace qeba

#endif
