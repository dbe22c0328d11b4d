// Acceptance checks, one PASS/FAIL line each. Exit status is nonzero if any
// check fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <thread>

#include "rems/codec.hpp"
#include "rems/node.hpp"
#include "rems/random.hpp"
#include "rems/simulator.hpp"
#include "support/markov_oracle.hpp"

namespace rems {
namespace {

using Clock = std::chrono::steady_clock;

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

PublicKey key(std::uint8_t tag) {
  PublicKey k;
  k.bytes.fill(tag);
  return k;
}

Problem random_problem(Rng& rng) {
  std::uint64_t reps = 1 + rng.below(4);
  std::uint16_t width = static_cast<std::uint16_t>(1 + rng.below(12));
  if (rng.below(8) == 0) width = static_cast<std::uint16_t>(1 + rng.below(256));
  std::uint16_t from = static_cast<std::uint16_t>(rng.below(257 - width));
  BitWindow w{from, static_cast<std::uint16_t>(from + width)};
  Digest t = rng.bytes32<DigestTag>();
  return Problem::make(reps, w, trim_bits(t, w), 1 + rng.below(100), rng.bytes32<PublicKeyTag>());
}

std::vector<Problem> random_subset(Rng& rng) {
  std::vector<Problem> s;
  Digest ek = rng.bytes32<DigestTag>();
  std::size_t users = rng.below(6);
  for (std::size_t i = 0; i < users; ++i) s.push_back(random_problem(rng));
  std::size_t fillers = s.empty() ? 1 + rng.below(3) : rng.below(3);
  for (std::size_t i = 0; i < fillers; ++i) s.push_back(make_filler(ek, i));
  return s;
}

HeaderDraft random_header(Rng& rng, std::span<const Problem> s) {
  HeaderDraft h;
  h.prev = rng.bytes32<DigestTag>();
  h.height = rng.below(1'000'000);
  h.miner = rng.bytes32<PublicKeyTag>();
  h.tx_root = rng.bytes32<DigestTag>();
  h.s_root = subset_commitment(s);
  return h;
}

Difficulty random_difficulty(Rng& rng) {
  return Difficulty::power_of_two(static_cast<unsigned>(248 + rng.below(8)));
}

Outcome correctness() {
  Rng rng(1001);
  const int n = 10'000;
  int accepted = 0;
  for (int i = 0; i < n; ++i) {
    auto s = random_subset(rng);
    auto h = random_header(rng, s);
    auto seed = rng.bytes32<SeedTag>();
    auto diff = random_difficulty(rng);
    if (!verify(s, h, seed, eval(s, h, seed, diff), diff)) ++accepted;
  }
  return {accepted == n, fmt("%d/%d accepted", accepted, n)};
}

// Chain with uploads, claims and forks for block mutations.
Chain mutation_chain() {
  ChainParams params;
  params.difficulty = Difficulty::power_of_two(250);
  params.allocations = {{key(1), 10'000}};
  LocalNode node(Chain(params), key(9), 3);
  Rng rng(77);
  for (int b = 0; b < 30; ++b) {
    if (b % 3 == 0) {
      Digest t = rng.bytes32<DigestTag>();
      BitWindow w{0, static_cast<std::uint16_t>(3 + rng.below(3))};
      node.submit(ProblemUpload{Problem::make(1 + rng.below(2), w, trim_bits(t, w), 5, key(1))});
    }
    if (b % 4 == 1) node.submit(Transfer{key(1), key(2), 3, 1});
    node.mine_block();
  }
  return node.chain();
}

template <typename T>
void flip_bit(T& v, Rng& rng) {
  auto i = rng.below(256);
  v.bytes[i / 8] ^= static_cast<std::uint8_t>(0x80u >> (i % 8));
}

bool mutate_result(EvalResult& r, Rng& rng, const std::vector<ProblemId>& other_ids) {
  switch (rng.below(7)) {
    case 0: r.block_found = !r.block_found; return true;
    case 1: {
      auto it = std::next(r.solved.begin(), static_cast<long>(rng.below(r.solved.size())));
      it->second = !it->second;
      return true;
    }
    case 2: flip_bit(r.proof, rng); return true;
    case 3: flip_bit(r.s0, rng); return true;
    case 4: r.hash_count += rng.below(2) ? 1 : -1; return true;
    case 5: r.solved.erase(std::next(r.solved.begin(), static_cast<long>(rng.below(r.solved.size())))); return true;
    default: {
      if (other_ids.empty()) return false;
      ProblemId extra = other_ids[rng.below(other_ids.size())];
      if (r.solved.contains(extra)) return false;
      r.solved[extra] = rng.below(2);
      return true;
    }
  }
}

bool mutate_block(Block& b, Rng& rng, const std::vector<ProblemId>& all_ids) {
  switch (rng.below(12)) {
    case 0: flip_bit(b.header.prev, rng); return true;
    case 1: b.header.height += rng.below(2) ? 1 : -1; return true;
    case 2: flip_bit(b.header.miner, rng); return true;
    case 3: flip_bit(b.header.tx_root, rng); return true;
    case 4: flip_bit(b.header.s_root, rng); return true;
    case 5: flip_bit(b.seed, rng); return true;
    case 6: {
      if (b.subset.size() < 2) return false;
      auto i = rng.below(b.subset.size()), j = rng.below(b.subset.size());
      if (i == j) return false;
      std::swap(b.subset[i], b.subset[j]);
      return true;
    }
    case 7: b.subset.erase(b.subset.begin() + static_cast<long>(rng.below(b.subset.size()))); return true;
    case 8: {
      ProblemId id = all_ids[rng.below(all_ids.size())];
      auto& slot = b.subset[rng.below(b.subset.size())];
      if (slot == id) return false;
      slot = id;
      return true;
    }
    case 9: {
      if (b.txs.empty()) return false;
      b.txs.erase(b.txs.begin() + static_cast<long>(rng.below(b.txs.size())));
      return true;
    }
    case 10: {
      b.txs.push_back(Transfer{key(1), key(3), 1 + rng.below(5), 0});
      return true;
    }
    default: return mutate_result(b.result, rng, all_ids);
  }
}

Outcome soundness() {
  Rng rng(2002);
  const int per_kind = 5'000;
  int result_accepted = 0, block_accepted = 0;

  std::vector<ProblemId> pool;
  for (int i = 0; i < 64; ++i) pool.push_back(random_problem(rng).id);
  for (int done = 0; done < per_kind;) {
    auto s = random_subset(rng);
    auto h = random_header(rng, s);
    auto seed = rng.bytes32<SeedTag>();
    auto diff = random_difficulty(rng);
    EvalResult r = eval(s, h, seed, diff);
    if (!mutate_result(r, rng, pool)) continue;
    ++done;
    if (!verify(s, h, seed, r, diff)) ++result_accepted;
  }

  Chain chain = mutation_chain();
  std::vector<Digest> blocks;
  std::vector<ProblemId> ids = pool;
  for (const auto& hash : chain.arrival_order()) {
    if (hash == chain.genesis_hash()) continue;
    const Block& b = chain.block(hash);
    if (!validate_block(b, chain).ok()) return {false, "an unmutated block failed validation"};
    blocks.push_back(hash);
    ids.insert(ids.end(), b.subset.begin(), b.subset.end());
  }
  for (int done = 0; done < per_kind;) {
    Block b = chain.block(blocks[rng.below(blocks.size())]);
    Block original = b;
    if (!mutate_block(b, rng, ids) || b == original) continue;
    ++done;
    if (validate_block(b, chain).ok()) ++block_accepted;
  }
  return {result_accepted + block_accepted == 0,
          fmt("%d result mutations and %d block mutations accepted out of %d", result_accepted,
              block_accepted, 2 * per_kind)};
}

Outcome fairness() {
  SimConfig c = parse_config(Json::parse(R"({
    "seed": 42, "rounds": 2000000, "target_blocks": 2000, "mode": "decoupled",
    "chain": {"difficulty": 246, "score_budget": 4},
    "miners": [{"name": "a", "eval_rate": 2}, {"name": "b", "eval_rate": 3},
               {"name": "c", "eval_rate": 5}]
  })"));
  auto out = run_fairness(c);
  const auto& run = *out.report.run;
  bool ok = run.height >= 2000;
  std::string detail = fmt("%llu blocks;", static_cast<unsigned long long>(run.height));
  for (const auto& m : run.miners) {
    ok = ok && std::abs(m.block_share - m.eval_share) <= 3 * m.sigma;
    detail += fmt(" %s %.4f vs %.1f (z %+.2f)", m.name.c_str(), m.block_share, m.eval_share, m.z_score);
  }
  return {ok, detail};
}

Outcome independence() {
  Digest t = sha256("independence");
  BitWindow w{40, 48};
  Problem p = Problem::make(1, w, trim_bits(t, w), 10, key(4));
  std::vector<Problem> s{p};
  Digest ek = sha256("ek");
  for (std::uint64_t i = 0; i < 3; ++i) s.push_back(make_filler(ek, i));
  HeaderDraft h;
  h.prev = ek;
  h.height = 5;
  h.miner = key(5);
  h.s_root = subset_commitment(s);
  const Difficulty diff = Difficulty::power_of_two(252);
  Pipeline pipeline(s, StageLayout::PerProblem);
  Bytes header = h.serialize();
  SeedStream seeds(Seed::from_bytes(sha256("independence seeds").view()));

  const std::uint64_t n = 100'000;
  std::uint64_t blocks = 0, solved = 0, both = 0;
  for (std::uint64_t i = 0; i < n; ++i) {
    auto pass = pipeline.run(header, seeds.at(i));
    bool b = meets_difficulty(pass.proof, diff);
    bool hit = !pass.hits.empty() && pass.hits.front().first == 0;
    blocks += b;
    solved += hit;
    both += b && hit;
  }
  double pb = static_cast<double>(blocks) / n;
  double pbs = solved ? static_cast<double>(both) / solved : 0;
  double sigma = std::sqrt(pb * (1 - pb) * (1.0 / solved + 1.0 / n));
  return {solved > 0 && std::abs(pbs - pb) <= 3 * sigma,
          fmt("P(block)=%.4f P(block|solved)=%.4f over %llu solves, 3 sigma=%.4f", pb, pbs,
              static_cast<unsigned long long>(solved), 3 * sigma)};
}

Outcome double_spend() {
  bool markov_ok = true;
  for (double q : {0.05, 0.1, 0.2, 0.3, 0.4})
    for (unsigned z = 0; z <= 3; ++z)
      markov_ok = markov_ok &&
                  std::abs(oracle_success_probability(q, z) - testing::markov_catch_up(q, z)) < 1e-9;
  unsigned workers = std::max(1u, std::thread::hardware_concurrency());
  auto r = simulate_double_spend(0.1, 6, 1'000'000, 60, 42, workers);
  double sigma = std::sqrt(r.oracle * (1 - r.oracle) / static_cast<double>(r.trials));
  bool ok = markov_ok && std::abs(r.observed - r.oracle) <= 3 * sigma;
  return {ok, fmt("observed %.3e (%llu/%llu) oracle %.4e 3 sigma=%.2e truncation bias %.1e; "
                  "Markov check at z<=3 %s",
                  r.observed, static_cast<unsigned long long>(r.successes),
                  static_cast<unsigned long long>(r.trials), r.oracle, 3 * sigma,
                  r.oracle - r.capped, markov_ok ? "ok" : "FAILED")};
}

Outcome naive_attack() {
  SimConfig c = parse_config(Json::parse(R"({
    "seed": 42, "rounds": 60000, "mode": "naive-coupled",
    "chain": {"difficulty": 248, "score_budget": 4},
    "accounts": {"users": 10000},
    "miners": [
      {"name": "attacker", "eval_rate": 1, "strategy": "naive_attacker", "balance": 10},
      {"name": "h1", "eval_rate": 3}, {"name": "h2", "eval_rate": 3}, {"name": "h3", "eval_rate": 3}],
    "problems": [
      {"uploader": "users", "window": [0, 64], "prize": 100},
      {"uploader": "users", "window": [0, 64], "prize": 100},
      {"uploader": "users", "window": [0, 64], "prize": 100},
      {"uploader": "users", "window": [0, 64], "prize": 100}],
    "naive_attack": {"self_width": 2, "self_prize": 1}
  })"));
  auto out = run_naive_attack(c);
  const auto& d = out.report.details;
  double naive = d["naive"]["block_share"].get<double>();
  double dec = d["decoupled"]["block_share"].get<double>();
  double bound = d["decoupled"]["bound"].get<double>();
  return {naive > 0.5 && dec <= bound,
          fmt("naive share %.3f over %llu blocks; decoupled share %.4f <= %.4f over %llu blocks", naive,
              d["naive"]["height"].get<unsigned long long>(), dec, bound,
              d["decoupled"]["height"].get<unsigned long long>())};
}

Outcome efficiency() {
  std::vector<Problem> s;
  for (int i = 0; i < 100; ++i) {
    Digest t = sha256("efficiency/" + std::to_string(i));
    BitWindow w{0, 32};
    s.push_back(Problem::make(1, w, trim_bits(t, w), 10, key(6)));
  }
  HeaderDraft h;
  h.s_root = subset_commitment(s);
  Pipeline pipeline(s, StageLayout::PerProblem);
  Bytes header = h.serialize();
  const int passes = 1000;
  std::uint64_t before = sha256_invocations();
  for (int i = 0; i < passes; ++i) pipeline.run(header, SeedStream(Seed{}).at(i));
  std::uint64_t measured = sha256_invocations() - before;
  HashTally tally = pipeline.tally_per_pass().scaled(passes);
  auto rep = efficiency_report(tally);
  bool exact = rep.useful_hashes * 101 == rep.total_hashes * 100 && rep.total_hashes == measured &&
               rep.ratio == 100.0 / 101.0;
  return {exact && rep.ratio >= 0.99,
          fmt("useful %llu / total %llu (measured %llu) = %.6f", static_cast<unsigned long long>(rep.useful_hashes),
              static_cast<unsigned long long>(rep.total_hashes), static_cast<unsigned long long>(measured),
              rep.ratio)};
}

std::optional<Chain> g_prize_chain;

Outcome prize_flow() {
  const int runs = 50;
  double sum = 0;
  bool conserved = true, paid = true;
  for (int run = 0; run < runs; ++run) {
    ChainParams params;
    params.difficulty = Difficulty::power_of_two(250);
    params.allocations = {{key(1), 100}};
    LocalNode node(Chain(params), key(9), static_cast<std::uint64_t>(run));
    Digest t = sha256("prize/" + std::to_string(run));
    BitWindow w{0, 8};
    Problem p = Problem::make(1, w, trim_bits(t, w), 10, key(1));
    node.submit(ProblemUpload{p});
    int blocks = 0;
    while (!node.chain().tip_state().solved.contains(p.id) && blocks < 5000) {
      node.mine_block();
      ++blocks;
    }
    const Chain& c = node.chain();
    for (const auto& h : c.main_chain()) conserved = conserved && c.state(h).conserves();
    const auto& s = c.tip_state();
    paid = paid && s.solved.contains(p.id) && !s.escrow.contains(p.id) && s.balance(key(1)) == 90 &&
           s.balance(key(9)) == 50 * c.height() + 10;
    sum += static_cast<double>(node.exposure(p.id));
    if (run == 0) g_prize_chain = c;
  }
  double mean = sum / runs;
  double sigma = std::sqrt((1 - 1.0 / 256) * 256 * 256) / std::sqrt(runs);
  return {conserved && paid && std::abs(mean - 256) <= 3 * sigma,
          fmt("mean passes to solve %.1f vs 256 (3 sigma=%.1f); escrow paid %s; conservation %s", mean,
              3 * sigma, paid ? "yes" : "no", conserved ? "held at every height" : "BROKEN")};
}

Outcome replay() {
  // A chain with siblings from a multi-miner run plus the prize-flow chain.
  SimConfig c = parse_config(Json::parse(R"({
    "seed": 9, "rounds": 4000, "chain": {"difficulty": 251, "score_budget": 4},
    "accounts": {"alice": 1000},
    "miners": [{"name": "a", "eval_rate": 2}, {"name": "b", "eval_rate": 3}],
    "problems": [{"uploader": "alice", "window": [0, 6], "prize": 20},
                 {"round": 50, "uploader": "alice", "window": [10, 15], "prize": 30, "reps": 3}]
  })"));
  NetworkSim sim(c, SimMode::Decoupled);
  sim.run();
  bool ok = true;
  std::string detail;
  std::vector<const Chain*> chains{&sim.chain()};
  if (g_prize_chain) chains.push_back(&*g_prize_chain);
  for (const Chain* chain : chains) {
    std::stringstream file;
    write_chain(*chain, file);
    std::string bytes = file.str();
    Replay r = replay_chain(file);
    bool same = r.ok() && r.chain->tip_state().state_hash() == chain->tip_state().state_hash();
    if (same) {
      std::stringstream again;
      write_chain(*r.chain, again);
      same = again.str() == bytes;
    }
    ok = ok && same;
    detail += fmt("chain of %zu blocks (%zu off the main chain) %s; ", chain->arrival_order().size(),
                  chain->arrival_order().size() - chain->main_chain().size(),
                  same ? "replays identically" : "DIFFERS");
  }

  auto render = [](const SimOutput& o) {
    return report_json(o.report).dump() + events_jsonl(o.events) + summary_csv(o.report);
  };
  SimConfig fair = c;
  fair.rounds = 2000;
  SimConfig ds = c;
  ds.double_spend.q = 0.2;
  ds.double_spend.z = 3;
  ds.double_spend.trials = 100'000;
  ds.double_spend.workers = 3;
  SimConfig naive = parse_config(Json::parse(R"({
    "seed": 5, "rounds": 3000, "mode": "naive-coupled", "chain": {"difficulty": 248},
    "accounts": {"u": 1000},
    "miners": [{"name": "x", "eval_rate": 1, "strategy": "naive_attacker", "balance": 5},
               {"name": "h", "eval_rate": 9}],
    "problems": [{"uploader": "u", "window": [0, 64], "prize": 50}]
  })"));
  SimConfig fee = c;
  fee.fee_market.runs = 5;
  fee.fee_market.max_rounds = 3000;
  int identical = 0;
  for (auto [name, cfg] : std::vector<std::pair<std::string, SimConfig>>{
           {"fairness", fair}, {"doublespend", ds}, {"naive-attack", naive}, {"fee-market", fee}}) {
    bool same = render(run_experiment(name, cfg)) == render(run_experiment(name, cfg));
    identical += same;
    ok = ok && same;
  }
  detail += fmt("%d/4 experiment reruns byte-identical", identical);
  return {ok, detail};
}

}  // namespace
}  // namespace rems

int main() {
  using namespace rems;
  struct Check {
    int id;
    const char* name;
    std::function<Outcome()> run;
  };
  const std::vector<Check> checks{
      {1, "correctness: verify accepts every honest eval", correctness},
      {2, "soundness: mutated results and blocks are rejected", soundness},
      {3, "fairness: block share tracks eval share", fairness},
      {4, "independence: solving does not change block odds", independence},
      {5, "double spend: race frequency matches the catch-up oracle", double_spend},
      {6, "naive coupling: attack succeeds only when coupled", naive_attack},
      {7, "efficiency: useful hash ratio at budget 100", efficiency},
      {8, "prize flow: upload, solve, claim, conserve", prize_flow},
      {9, "replay: chains and experiments reproduce exactly", replay},
  };
  int failed = 0;
  for (const auto& c : checks) {
    auto start = Clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    double secs = std::chrono::duration<double>(Clock::now() - start).count();
    std::cout << (o.pass ? "PASS" : "FAIL") << " [" << c.id << "] " << c.name << " -- " << o.detail
              << " (" << fmt("%.1f", secs) << " s)" << std::endl;
    failed += !o.pass;
  }
  return failed == 0 ? 0 : 1;
}
