#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "rems/codec.hpp"
#include "rems/ledger.hpp"

namespace rems {

enum class SimMode { Decoupled, NaiveCoupled };
enum class Strategy { Honest, PrivateAttacker, NaiveAttacker };

std::string_view to_string(SimMode m);
std::string_view to_string(Strategy s);

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ModeMismatch : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct MinerSpec {
  std::string name;
  PublicKey key;
  /// Eval executions per round.
  std::uint64_t eval_rate = 1;
  Strategy strategy = Strategy::Honest;
  SelectionPolicy policy;
};

struct ScheduledProblem {
  std::uint64_t round = 0;
  Problem problem;
};

struct DoubleSpendSpec {
  /// Attacker fraction; when absent it is the eval share of the
  /// private-chain attackers among the miners.
  std::optional<double> q;
  std::uint64_t z = 6;
  std::uint64_t trials = 1'000'000;
  /// The catch-up walk is cut off after cap_factor * z steps.
  std::uint64_t cap_factor = 10;
  unsigned workers = 1;
};

struct NaiveAttackSpec {
  std::uint64_t self_reps = 1;
  std::uint16_t self_width = 2;
  std::uint64_t self_prize = 1;
};

struct FeeMarketSpec {
  std::uint64_t runs = 100;
  /// Per-run round limit.
  std::uint64_t max_rounds = 20'000;
};

struct SimConfig {
  std::uint64_t seed = 0;
  /// Round limit.
  std::uint64_t rounds = 1000;
  /// Stop once the main chain reaches this height; 0 runs every round.
  std::uint64_t target_blocks = 0;
  SimMode mode = SimMode::Decoupled;
  ChainParams chain;
  std::vector<MinerSpec> miners;
  std::vector<ScheduledProblem> problems;
  DoubleSpendSpec double_spend;
  NaiveAttackSpec naive_attack;
  FeeMarketSpec fee_market;
};

/// Key for a named account.
PublicKey account_key(std::string_view name);

/// Throws ConfigError with the offending field.
SimConfig parse_config(const Json& j);
SimConfig load_config(const std::filesystem::path& path);

struct MinerReport {
  std::string name;
  Strategy strategy = Strategy::Honest;
  std::uint64_t eval_rate = 0;
  double eval_share = 0;
  std::uint64_t evals = 0;
  std::uint64_t blocks = 0;
  double block_share = 0;
  /// Binomial standard deviation of the block share under the eval share.
  double sigma = 0;
  double z_score = 0;
  std::uint64_t solutions_found = 0;
  std::uint64_t solutions_claimed = 0;
  std::uint64_t prizes_earned = 0;
};

struct RunStats {
  SimMode mode = SimMode::Decoupled;
  std::uint64_t rounds = 0;
  std::uint64_t height = 0;
  std::uint64_t fork_events = 0;
  std::vector<MinerReport> miners;
  HashTally hashes;
  Digest tip;
  Digest state_hash;
};

struct SimReport {
  std::string experiment;
  std::uint64_t seed = 0;
  std::optional<RunStats> run;
  EfficiencyReport efficiency;
  /// Experiment-specific results.
  Json details = Json::object();
  /// Summary table rows, columns fixed per experiment.
  std::vector<std::string> csv_header;
  std::vector<std::vector<std::string>> csv_rows;
};

struct SimOutput {
  SimReport report;
  /// One JSON object per line of the event stream.
  std::vector<Json> events;
};

Json report_json(const SimReport& r);
std::string summary_csv(const SimReport& r);
std::string events_jsonl(const std::vector<Json>& events);

/// Round-based network of miners over one chain. Within a round every miner
/// runs exactly eval_rate passes on the tip as of the round start; passes are
/// interleaved by time (j + 1/2) / eval_rate, ties by miner order. Blocks
/// found in the same round are siblings; the earliest one becomes the tip.
class NetworkSim {
 public:
  NetworkSim(const SimConfig& config, SimMode mode);
  ~NetworkSim();
  NetworkSim(const NetworkSim&) = delete;
  NetworkSim& operator=(const NetworkSim&) = delete;

  /// Runs one round; returns false once the round or height limit is hit.
  bool step();
  void run();

  /// Chain of a decoupled run.
  const Chain& chain() const;
  RunStats stats() const;
  const std::vector<Json>& events() const;

  struct ProblemProgress {
    /// Passes that carried the problem, up to and including the first solve.
    std::uint64_t exposure = 0;
    std::optional<std::uint64_t> solved_round;
    /// Global pass index of the first solve.
    std::optional<std::uint64_t> solved_pass;
    std::optional<std::uint64_t> claimed_height;
  };
  ProblemProgress progress(const ProblemId& id) const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

SimOutput run_fairness(const SimConfig& config);

/// Closed-form catch-up probability: attacker progress while the honest chain
/// gains z blocks is Poisson(z q / p), and a deficit d is closed with
/// probability (q / p)^d.
double oracle_success_probability(double q, std::uint64_t z);
/// Same model with the catch-up walk cut off after `cap` steps.
double capped_success_probability(double q, std::uint64_t z, std::uint64_t cap);

struct DoubleSpendResult {
  double q = 0;
  std::uint64_t z = 0;
  std::uint64_t trials = 0;
  std::uint64_t cap = 0;
  std::uint64_t successes = 0;
  double observed = 0;
  double oracle = 0;
  double capped = 0;
};

/// Monte-Carlo race; trials are split into fixed chunks with their own
/// derived seeds, so the result does not depend on `workers`.
DoubleSpendResult simulate_double_spend(double q, std::uint64_t z,
                                        std::uint64_t trials, std::uint64_t cap,
                                        std::uint64_t seed, unsigned workers);

SimOutput run_double_spend(const SimConfig& config);
SimOutput run_naive_attack(const SimConfig& config);
SimOutput run_fee_market(const SimConfig& config);

/// Dispatch by experiment name: fairness, doublespend, naive-attack,
/// fee-market. Throws ConfigError on an unknown name.
SimOutput run_experiment(std::string_view experiment, const SimConfig& config);

}  // namespace rems
