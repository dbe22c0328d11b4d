#include <atomic>
#include <cmath>
#include <cstdio>
#include <sstream>
#include <thread>

#include "rems/random.hpp"
#include "rems/simulator.hpp"

namespace rems {

namespace {

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

std::string num(std::uint64_t v) { return std::to_string(v); }

Json miner_json(const MinerReport& m) {
  return Json{{"name", m.name},
              {"strategy", to_string(m.strategy)},
              {"eval_rate", m.eval_rate},
              {"eval_share", m.eval_share},
              {"evals", m.evals},
              {"blocks", m.blocks},
              {"block_share", m.block_share},
              {"sigma", m.sigma},
              {"z_score", m.z_score},
              {"solutions_found", m.solutions_found},
              {"solutions_claimed", m.solutions_claimed},
              {"prizes_earned", m.prizes_earned}};
}

Json run_json(const RunStats& s) {
  Json miners = Json::array();
  for (const auto& m : s.miners) miners.push_back(miner_json(m));
  return Json{{"mode", to_string(s.mode)},
              {"rounds", s.rounds},
              {"height", s.height},
              {"fork_events", s.fork_events},
              {"tip", s.tip},
              {"state_hash", s.state_hash},
              {"miners", miners}};
}

const std::vector<std::string> kMinerColumns{
    "mode",  "miner",       "strategy", "eval_rate",       "eval_share",        "evals",
    "blocks", "block_share", "sigma",   "z_score",         "solutions_found",   "solutions_claimed",
    "prizes_earned"};

void add_miner_rows(SimReport& r, const RunStats& s) {
  r.csv_header = kMinerColumns;
  for (const auto& m : s.miners)
    r.csv_rows.push_back({std::string(to_string(s.mode)), m.name,
                          std::string(to_string(m.strategy)), num(m.eval_rate),
                          num(m.eval_share), num(m.evals), num(m.blocks),
                          num(m.block_share), num(m.sigma), num(m.z_score),
                          num(m.solutions_found), num(m.solutions_claimed),
                          num(m.prizes_earned)});
}

bool within_3sigma(const RunStats& s) {
  for (const auto& m : s.miners)
    if (std::abs(m.block_share - m.eval_share) > 3 * m.sigma) return false;
  return true;
}

void tag_events(std::vector<Json>& out, const std::vector<Json>& in, std::string_view mode) {
  for (Json e : in) {
    e["mode"] = mode;
    out.push_back(std::move(e));
  }
}

double poisson_pmf(double lambda, std::uint64_t k) {
  return std::exp(-lambda + static_cast<double>(k) * std::log(lambda) -
                  std::lgamma(static_cast<double>(k) + 1));
}

/// P(K >= from) for K ~ Poisson(lambda), summed term by term.
double poisson_tail(double lambda, std::uint64_t from) {
  double sum = 0;
  for (std::uint64_t k = from;; ++k) {
    double term = poisson_pmf(lambda, k);
    sum += term;
    if (static_cast<double>(k) > lambda && term <= sum * 1e-17) break;
  }
  return sum;
}

void require_rates(double q) {
  if (!(q > 0 && q < 0.5)) throw std::invalid_argument("attacker fraction must be in (0, 0.5)");
}

/// P(walk from deficit d reaches 0 within `cap` steps), attacker step prob q.
double hit_within(double q, std::uint64_t d, std::uint64_t cap) {
  if (d == 0) return 1.0;
  if (d > cap) return 0.0;
  std::vector<double> dist(d + cap + 2, 0.0), next(dist.size());
  dist[d] = 1.0;
  double hit = 0;
  for (std::uint64_t step = 0; step < cap; ++step) {
    std::fill(next.begin(), next.end(), 0.0);
    for (std::size_t x = 1; x + 1 < dist.size(); ++x) {
      if (dist[x] == 0) continue;
      next[x - 1] += dist[x] * q;
      next[x + 1] += dist[x] * (1 - q);
    }
    hit += next[0];
    next[0] = 0;
    dist.swap(next);
  }
  return hit;
}

struct ChunkResult {
  std::uint64_t trials = 0;
  std::uint64_t successes = 0;
};

constexpr std::uint64_t kChunk = 4096;

bool race_trial(Rng& rng, double q, std::uint64_t z, std::uint64_t cap) {
  const double lambda = static_cast<double>(z) * q / (1 - q);
  // Attacker blocks while the honest chain gains z: Poisson arrivals over [0, 1).
  std::uint64_t k = 0;
  if (lambda > 0)
    for (double t = rng.exponential(lambda); t < 1.0 && k <= z; t += rng.exponential(lambda)) ++k;
  if (k >= z) return true;
  std::uint64_t deficit = z - k;
  for (std::uint64_t step = 0; step < cap; ++step) {
    if (rng.bernoulli(q)) {
      if (--deficit == 0) return true;
    } else {
      ++deficit;
    }
    if (deficit >= cap - step) return false;
  }
  return false;
}

std::vector<ChunkResult> race_chunks(double q, std::uint64_t z, std::uint64_t trials,
                                     std::uint64_t cap, std::uint64_t seed,
                                     unsigned workers) {
  const std::uint64_t chunks = (trials + kChunk - 1) / kChunk;
  std::vector<ChunkResult> out(chunks);
  std::atomic<std::uint64_t> next{0};
  auto worker = [&] {
    for (std::uint64_t c = next++; c < chunks; c = next++) {
      Rng rng(mix_seed(seed, c));
      std::uint64_t n = std::min(kChunk, trials - c * kChunk);
      ChunkResult r{n, 0};
      for (std::uint64_t t = 0; t < n; ++t) r.successes += race_trial(rng, q, z, cap);
      out[c] = r;
    }
  };
  workers = std::max(1u, workers);
  std::vector<std::thread> pool;
  for (unsigned w = 1; w < workers; ++w) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  return out;
}

}  // namespace

Json report_json(const SimReport& r) {
  Json j{{"experiment", r.experiment},
         {"seed", r.seed},
         {"efficiency",
          {{"useful_hashes", r.efficiency.useful_hashes},
           {"total_hashes", r.efficiency.total_hashes},
           {"ratio", r.efficiency.ratio},
           {"s0_hashes", r.efficiency.breakdown.s0},
           {"user_hashes", r.efficiency.breakdown.user},
           {"filler_hashes", r.efficiency.breakdown.filler}}},
         {"details", r.details}};
  if (r.run) j["run"] = run_json(*r.run);
  return j;
}

std::string summary_csv(const SimReport& r) {
  std::ostringstream out;
  auto line = [&](const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) out << (i ? "," : "") << cells[i];
    out << '\n';
  };
  line(r.csv_header);
  for (const auto& row : r.csv_rows) line(row);
  return out.str();
}

std::string events_jsonl(const std::vector<Json>& events) {
  std::string out;
  for (const auto& e : events) out += e.dump() + '\n';
  return out;
}

SimOutput run_fairness(const SimConfig& config) {
  if (config.mode != SimMode::Decoupled) throw ModeMismatch("fairness requires mode decoupled");
  NetworkSim sim(config, SimMode::Decoupled);
  sim.run();
  SimOutput out;
  out.report.experiment = "fairness";
  out.report.seed = config.seed;
  out.report.run = sim.stats();
  out.report.efficiency = efficiency_report(out.report.run->hashes);
  out.report.details = Json{{"blocks", out.report.run->height},
                            {"all_within_3sigma", within_3sigma(*out.report.run)}};
  add_miner_rows(out.report, *out.report.run);
  out.events = sim.events();
  return out;
}

double oracle_success_probability(double q, std::uint64_t z) {
  require_rates(q);
  if (z == 0) return 1.0;
  const double p = 1 - q;
  const double lambda = static_cast<double>(z) * q / p;
  // 1 - sum_k pmf(k) (1 - (q/p)^(z-k)), regrouped so no small value is
  // computed as a difference.
  double sum = poisson_tail(lambda, z + 1);
  for (std::uint64_t k = 0; k <= z; ++k)
    sum += poisson_pmf(lambda, k) * std::pow(q / p, static_cast<double>(z - k));
  return std::clamp(sum, 0.0, 1.0);
}

double capped_success_probability(double q, std::uint64_t z, std::uint64_t cap) {
  require_rates(q);
  if (z == 0) return 1.0;
  const double lambda = static_cast<double>(z) * q / (1 - q);
  double total = poisson_tail(lambda, z);
  for (std::uint64_t k = 0; k < z; ++k) total += poisson_pmf(lambda, k) * hit_within(q, z - k, cap);
  return std::clamp(total, 0.0, 1.0);
}

DoubleSpendResult simulate_double_spend(double q, std::uint64_t z, std::uint64_t trials,
                                        std::uint64_t cap, std::uint64_t seed,
                                        unsigned workers) {
  require_rates(q);
  DoubleSpendResult r{q, z, trials, cap};
  for (const auto& c : race_chunks(q, z, trials, cap, seed, workers)) r.successes += c.successes;
  r.observed = trials ? static_cast<double>(r.successes) / static_cast<double>(trials) : 0;
  r.oracle = oracle_success_probability(q, z);
  r.capped = capped_success_probability(q, z, cap);
  return r;
}

SimOutput run_double_spend(const SimConfig& config) {
  if (config.mode != SimMode::Decoupled) throw ModeMismatch("doublespend requires mode decoupled");
  const auto& d = config.double_spend;
  double q;
  if (d.q) {
    q = *d.q;
  } else {
    std::uint64_t attack = 0, total = 0;
    for (const auto& m : config.miners) {
      total += m.eval_rate;
      if (m.strategy == Strategy::PrivateAttacker) attack += m.eval_rate;
    }
    if (total == 0 || attack == 0)
      throw ConfigError("double_spend: give q or a private_attacker miner");
    q = static_cast<double>(attack) / static_cast<double>(total);
  }
  if (!(q > 0 && q < 0.5)) throw ConfigError("double_spend: q must be in (0, 0.5)");

  const std::uint64_t cap = d.cap_factor * d.z;
  auto chunks = race_chunks(q, d.z, d.trials, cap, config.seed, d.workers);
  SimOutput out;
  DoubleSpendResult r{q, d.z, d.trials, cap};
  for (std::size_t i = 0; i < chunks.size(); ++i) {
    r.successes += chunks[i].successes;
    out.events.push_back(Json{{"chunk", i}, {"trials", chunks[i].trials},
                              {"successes", chunks[i].successes}});
  }
  r.observed = static_cast<double>(r.successes) / static_cast<double>(r.trials);
  r.oracle = oracle_success_probability(q, d.z);
  r.capped = capped_success_probability(q, d.z, cap);
  double sigma = std::sqrt(r.oracle * (1 - r.oracle) / static_cast<double>(r.trials));
  double z_score = sigma > 0 ? (r.observed - r.oracle) / sigma : 0.0;

  out.report.experiment = "doublespend";
  out.report.seed = config.seed;
  out.report.details = Json{{"q", q},
                            {"z", d.z},
                            {"trials", d.trials},
                            {"cap", cap},
                            {"successes", r.successes},
                            {"observed", r.observed},
                            {"oracle", r.oracle},
                            {"capped_exact", r.capped},
                            {"truncation_bias", r.oracle - r.capped},
                            {"sigma", sigma},
                            {"z_score", z_score},
                            {"within_3sigma", std::abs(z_score) <= 3}};
  out.report.csv_header = {"q", "z", "trials", "cap", "successes", "observed", "oracle",
                           "capped_exact", "truncation_bias", "sigma", "z_score"};
  out.report.csv_rows.push_back({num(q), num(d.z), num(d.trials), num(cap), num(r.successes),
                                 num(r.observed), num(r.oracle), num(r.capped),
                                 num(r.oracle - r.capped), num(sigma), num(z_score)});
  return out;
}

SimOutput run_naive_attack(const SimConfig& config) {
  if (config.mode != SimMode::NaiveCoupled)
    throw ModeMismatch("naive-attack requires mode naive-coupled");
  std::optional<std::size_t> attacker;
  for (std::size_t i = 0; i < config.miners.size(); ++i)
    if (config.miners[i].strategy == Strategy::NaiveAttacker) {
      attacker = i;
      break;
    }
  if (!attacker) throw ConfigError("naive-attack needs a naive_attacker miner");

  NetworkSim naive(config, SimMode::NaiveCoupled);
  naive.run();
  NetworkSim decoupled(config, SimMode::Decoupled);
  decoupled.run();

  RunStats ns = naive.stats(), ds = decoupled.stats();
  const MinerReport& na = ns.miners[*attacker];
  const MinerReport& da = ds.miners[*attacker];

  const double block_p = config.chain.difficulty.acceptance_probability();
  const double self_p = std::ldexp(1.0, -static_cast<int>(config.naive_attack.self_width));
  const double attacker_p = 1 - (1 - block_p) * (1 - self_p);
  const double a_rate = static_cast<double>(na.eval_rate);
  const double h_rate = a_rate / na.eval_share - a_rate;
  const double predicted = a_rate * attacker_p / (a_rate * attacker_p + h_rate * block_p);

  SimOutput out;
  out.report.experiment = "naive-attack";
  out.report.seed = config.seed;
  out.report.run = ns;
  out.report.efficiency = efficiency_report(ns.hashes);
  out.report.details = Json{
      {"attacker", na.name},
      {"eval_share", na.eval_share},
      {"self_problem_width", config.naive_attack.self_width},
      {"attacker_pass_win_probability", attacker_p},
      {"honest_pass_win_probability", block_p},
      {"predicted_naive_share", predicted},
      {"naive", {{"height", ns.height}, {"blocks", na.blocks}, {"block_share", na.block_share}}},
      {"decoupled",
       {{"height", ds.height},
        {"blocks", da.blocks},
        {"block_share", da.block_share},
        {"sigma", da.sigma},
        {"bound", da.eval_share + 3 * da.sigma},
        {"within_bound", da.block_share <= da.eval_share + 3 * da.sigma}}},
      {"decoupled_run", run_json(ds)}};
  add_miner_rows(out.report, ns);
  SimReport tmp;
  add_miner_rows(tmp, ds);
  for (auto& row : tmp.csv_rows) out.report.csv_rows.push_back(std::move(row));
  tag_events(out.events, naive.events(), to_string(SimMode::NaiveCoupled));
  tag_events(out.events, decoupled.events(), to_string(SimMode::Decoupled));
  return out;
}

SimOutput run_fee_market(const SimConfig& config) {
  if (config.mode != SimMode::Decoupled) throw ModeMismatch("fee-market requires mode decoupled");
  for (const auto& m : config.miners)
    if (m.policy.kind != SelectionPolicy::Kind::FeePriority)
      throw ConfigError("fee-market requires fee_priority miners");
  if (config.problems.empty()) throw ConfigError("fee-market needs scheduled problems");

  struct Tally {
    std::uint64_t solved = 0, claimed = 0, first = 0;
    std::uint64_t exposure = 0, rounds = 0;
  };
  std::vector<Tally> tally(config.problems.size());
  HashTally hashes;
  SimOutput out;

  for (std::uint64_t run = 0; run < config.fee_market.runs; ++run) {
    SimConfig c = config;
    c.seed = mix_seed(config.seed, run);
    c.rounds = config.fee_market.max_rounds;
    c.target_blocks = 0;
    NetworkSim sim(c, SimMode::Decoupled);
    auto all_claimed = [&] {
      for (const auto& sp : config.problems)
        if (!sim.progress(sp.problem.id).claimed_height) return false;
      return true;
    };
    while (!all_claimed() && sim.step()) {
    }

    Json solved = Json::object();
    std::optional<std::size_t> first;
    std::uint64_t first_pass = 0;
    for (std::size_t i = 0; i < config.problems.size(); ++i) {
      const auto& sp = config.problems[i];
      auto pr = sim.progress(sp.problem.id);
      if (pr.claimed_height) ++tally[i].claimed;
      if (!pr.solved_pass) continue;
      ++tally[i].solved;
      tally[i].exposure += pr.exposure;
      tally[i].rounds += *pr.solved_round - std::min(*pr.solved_round, sp.round);
      if (!first || *pr.solved_pass < first_pass) {
        first = i;
        first_pass = *pr.solved_pass;
      }
      solved[sp.problem.id.hex()] = Json{{"pass", *pr.solved_pass},
                                         {"round", *pr.solved_round},
                                         {"exposure", pr.exposure}};
    }
    if (first) ++tally[*first].first;
    RunStats s = sim.stats();
    hashes += s.hashes;
    out.events.push_back(Json{{"run", run}, {"rounds", s.rounds}, {"height", s.height},
                              {"solved", solved}});
  }

  const auto runs = config.fee_market.runs;
  Json problems = Json::array();
  out.report.csv_header = {"problem", "prize", "width", "reps", "upload_round", "runs", "solved",
                           "claimed", "first_solved_fraction", "mean_passes_to_solve",
                           "mean_rounds_to_solve"};
  for (std::size_t i = 0; i < config.problems.size(); ++i) {
    const auto& sp = config.problems[i];
    const Tally& t = tally[i];
    double mean_passes = t.solved ? static_cast<double>(t.exposure) / static_cast<double>(t.solved) : 0;
    double mean_rounds = t.solved ? static_cast<double>(t.rounds) / static_cast<double>(t.solved) : 0;
    double first_frac = static_cast<double>(t.first) / static_cast<double>(runs);
    problems.push_back(Json{{"id", sp.problem.id},
                            {"prize", sp.problem.prize},
                            {"width", sp.problem.window.width()},
                            {"reps", sp.problem.reps},
                            {"upload_round", sp.round},
                            {"solved", t.solved},
                            {"claimed", t.claimed},
                            {"first_solved", t.first},
                            {"first_solved_fraction", first_frac},
                            {"mean_passes_to_solve", mean_passes},
                            {"mean_rounds_to_solve", mean_rounds}});
    out.report.csv_rows.push_back({sp.problem.id.hex(), num(sp.problem.prize),
                                   num(static_cast<std::uint64_t>(sp.problem.window.width())),
                                   num(sp.problem.reps), num(sp.round), num(runs),
                                   num(t.solved), num(t.claimed), num(first_frac),
                                   num(mean_passes), num(mean_rounds)});
  }
  out.report.experiment = "fee-market";
  out.report.seed = config.seed;
  out.report.efficiency = efficiency_report(hashes);
  out.report.details = Json{{"runs", runs}, {"problems", problems}};
  return out;
}

SimOutput run_experiment(std::string_view experiment, const SimConfig& config) {
  if (experiment == "fairness") return run_fairness(config);
  if (experiment == "doublespend") return run_double_spend(config);
  if (experiment == "naive-attack") return run_naive_attack(config);
  if (experiment == "fee-market") return run_fee_market(config);
  throw ConfigError("unknown experiment '" + std::string(experiment) + "'");
}

}  // namespace rems
