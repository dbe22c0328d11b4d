#include <algorithm>
#include <cmath>
#include <set>

#include "rems/simulator.hpp"

namespace rems {

namespace {

struct LightBlock {
  Digest parent;
  std::uint64_t height = 0;
  std::size_t miner = 0;
};

struct Work {
  bool ready = false;
  Digest tip;
  std::uint64_t version = 0;
  BlockTemplate templ;
  Bytes header_bytes;
  std::unique_ptr<Pipeline> pipeline;
  std::vector<ProblemId> user_ids;
};

struct Found {
  std::size_t miner = 0;
  Seed seed;
  Pipeline::Pass pass;
};

Problem self_problem_for(const SimConfig& c, const PublicKey& attacker) {
  Bytes material;
  append_u64(material, c.seed);
  material.insert(material.end(), attacker.bytes.begin(), attacker.bytes.end());
  BitWindow w{0, c.naive_attack.self_width};
  return Problem::make(c.naive_attack.self_reps, w, trim_bits(sha256(material), w),
                       c.naive_attack.self_prize, attacker);
}

}  // namespace

struct NetworkSim::Impl {
  SimConfig cfg;
  SimMode mode;
  std::optional<Chain> chain;

  std::map<Digest, LightBlock> light;
  Digest light_genesis;
  Digest light_tip;
  std::uint64_t light_height = 0;
  std::map<ProblemId, Problem> naive_uploaded;

  std::vector<Transaction> mempool;
  std::uint64_t mempool_version = 0;
  std::set<ProblemId> pending_claims;

  std::vector<std::pair<std::size_t, std::uint64_t>> schedule;
  std::vector<Work> work;
  std::vector<std::uint64_t> evals;
  std::vector<std::uint64_t> solutions_found;
  std::map<PublicKey, std::size_t> miner_index;
  std::map<ProblemId, ProblemProgress> progress;
  std::vector<ScheduledProblem> uploads;
  std::size_t next_upload = 0;
  std::optional<Problem> self_problem;

  HashTally hashes;
  std::uint64_t round = 0;
  std::uint64_t pass_index = 0;
  std::uint64_t fork_events = 0;
  std::vector<Json> events;

  Impl(const SimConfig& c, SimMode m) : cfg(c), mode(m) {
    if (cfg.miners.empty()) throw ConfigError("at least one miner is required");
    for (std::size_t i = 0; i < cfg.miners.size(); ++i) {
      if (cfg.miners[i].eval_rate == 0) throw ConfigError("eval_rate must be positive");
      miner_index[cfg.miners[i].key] = i;
    }
    uploads = cfg.problems;
    for (const auto& m : cfg.miners) {
      if (m.strategy != Strategy::NaiveAttacker || self_problem) continue;
      self_problem = self_problem_for(cfg, m.key);
      if (mode == SimMode::Decoupled &&
          cfg.chain.allocations[m.key] < self_problem->prize)
        throw ConfigError("attacker '" + m.name + "' cannot fund its self-problem");
      uploads.push_back({0, *self_problem});
    }
    std::stable_sort(uploads.begin(), uploads.end(),
                     [](const auto& a, const auto& b) { return a.round < b.round; });

    if (mode == SimMode::Decoupled) {
      chain.emplace(cfg.chain);
    } else {
      light_genesis = make_genesis(cfg.chain).hash();
      light_tip = light_genesis;
    }

    for (std::size_t i = 0; i < cfg.miners.size(); ++i)
      for (std::uint64_t j = 0; j < cfg.miners[i].eval_rate; ++j) schedule.emplace_back(i, j);
    std::sort(schedule.begin(), schedule.end(), [&](const auto& a, const auto& b) {
      // Compare (2j + 1) / rate without rounding.
      unsigned __int128 l = static_cast<unsigned __int128>(2 * a.second + 1) *
                            cfg.miners[b.first].eval_rate;
      unsigned __int128 r = static_cast<unsigned __int128>(2 * b.second + 1) *
                            cfg.miners[a.first].eval_rate;
      if (l != r) return l < r;
      return a.first < b.first;
    });
    work.resize(cfg.miners.size());
    evals.assign(cfg.miners.size(), 0);
    solutions_found.assign(cfg.miners.size(), 0);
  }

  Digest tip() const { return chain ? chain->tip() : light_tip; }
  std::uint64_t height() const { return chain ? chain->height() : light_height; }

  bool done() const {
    if (round >= cfg.rounds) return true;
    return cfg.target_blocks > 0 && height() >= cfg.target_blocks;
  }

  // Forces the attacker's self-problem to the front of its subset.
  std::vector<Problem> attacker_subset(const ActiveSet& active, const MinerSpec& m,
                                       const Digest& ek) const {
    const std::uint64_t budget = cfg.chain.score_budget;
    if (!self_problem || !active.contains(self_problem->id) || self_problem->reps > budget)
      return select_subset(active, budget, m.policy, ek);
    ActiveSet rest = active;
    rest.erase(self_problem->id);
    std::vector<Problem> out{*self_problem};
    if (budget > self_problem->reps) {
      auto tail = select_subset(rest, budget - self_problem->reps, m.policy, ek);
      out.insert(out.end(), tail.begin(), tail.end());
    }
    return out;
  }

  void prepare(std::size_t i) {
    Work& w = work[i];
    const Digest t = tip();
    if (w.ready && w.tip == t && w.version == mempool_version) return;
    const MinerSpec& m = cfg.miners[i];
    BlockTemplate templ;
    if (chain) {
      templ = make_template(*chain, t, m.key, mempool, m.policy);
      if (m.strategy == Strategy::NaiveAttacker) {
        std::set<ProblemId> claimed;
        for (const auto& tx : templ.txs)
          if (const auto* c = std::get_if<SolutionClaim>(&tx)) claimed.insert(c->problem);
        templ.subset = attacker_subset(active_set_at(chain->state(t), claimed), m, t);
        templ.header.s_root = subset_commitment(templ.subset);
      }
    } else {
      ActiveSet active;
      for (const auto& [id, p] : naive_uploaded) active.insert(p);
      templ.subset = m.strategy == Strategy::NaiveAttacker
                         ? attacker_subset(active, m, t)
                         : select_subset(active, cfg.chain.score_budget, m.policy, t);
      templ.header.prev = t;
      templ.header.height = light_height + 1;
      templ.header.miner = m.key;
      templ.header.s_root = subset_commitment(templ.subset);
    }
    w.ready = true;
    w.tip = t;
    w.version = mempool_version;
    w.header_bytes = templ.header.serialize();
    w.pipeline = std::make_unique<Pipeline>(templ.subset, StageLayout::PerProblem);
    w.user_ids.clear();
    for (const auto& p : templ.subset)
      if (!p.is_filler()) w.user_ids.push_back(p.id);
    w.templ = std::move(templ);
  }

  void inject_uploads(Json& ev) {
    while (next_upload < uploads.size() && uploads[next_upload].round <= round) {
      const Problem& p = uploads[next_upload++].problem;
      if (chain) {
        mempool.push_back(ProblemUpload{p});
        ++mempool_version;
      } else {
        naive_uploaded.emplace(p.id, p);
        ++mempool_version;
      }
      ev["uploads"].push_back(p.id.hex());
    }
  }

  void step() {
    Json ev = Json::object();
    inject_uploads(ev);
    for (std::size_t i = 0; i < work.size(); ++i) prepare(i);

    std::vector<SeedStream> streams;
    streams.reserve(work.size());
    for (std::size_t i = 0; i < work.size(); ++i) {
      Bytes material;
      append_u64(material, cfg.seed);
      append_u64(material, round);
      material.insert(material.end(), cfg.miners[i].key.bytes.begin(),
                      cfg.miners[i].key.bytes.end());
      streams.emplace_back(Seed::from_bytes(sha256(material).view()));
    }

    std::vector<Found> found;
    std::vector<bool> has_found(work.size(), false);
    std::vector<SolutionClaim> claims;
    std::set<ProblemId> claimed_this_round;
    const Difficulty& diff = cfg.chain.difficulty;

    for (auto [i, j] : schedule) {
      Work& w = work[i];
      Seed seed = streams[i].at(j);
      Pipeline::Pass pass = w.pipeline->run(w.header_bytes, seed);
      ++evals[i];
      hashes += w.pipeline->tally_per_pass();
      for (const auto& id : w.user_ids) {
        auto& pr = progress[id];
        if (!pr.solved_pass) ++pr.exposure;
      }

      bool user_hit = false;
      for (auto [s, c] : pass.hits) {
        const StageCheck& check = w.pipeline->stages()[s].checks[c];
        if (check.origin != ProblemOrigin::User) continue;
        user_hit = true;
        ++solutions_found[i];
        auto& pr = progress[check.id];
        if (!pr.solved_pass) {
          pr.solved_pass = pass_index;
          pr.solved_round = round;
        }
        ev["solutions"].push_back(Json{{"miner", cfg.miners[i].name},
                                       {"problem", check.id.hex()},
                                       {"pass", pass_index}});
        bool self = self_problem && check.id == self_problem->id;
        if (chain && !self && !pending_claims.contains(check.id) &&
            claimed_this_round.insert(check.id).second) {
          SolutionClaim claim;
          claim.problem = check.id;
          claim.snapshot = w.templ.header;
          claim.seed = seed;
          claim.subset = subset_ids(w.templ.subset);
          claim.stage_index = s;
          claim.claimant = cfg.miners[i].key;
          claims.push_back(std::move(claim));
        }
      }
      ++pass_index;

      bool block = meets_difficulty(pass.proof, diff) ||
                   (mode == SimMode::NaiveCoupled && user_hit);
      // A second find by the same miner repeats its header.
      if (block && !has_found[i]) {
        has_found[i] = true;
        found.push_back({i, seed, std::move(pass)});
      }
    }

    if (!found.empty()) {
      fork_events += found.size() - 1;
      for (std::size_t k = 0; k < found.size(); ++k) {
        const Found& f = found[k];
        const Work& w = work[f.miner];
        Digest hash = w.templ.header.hash();
        if (chain) {
          Block b = w.templ.seal(f.seed, w.pipeline->to_result(f.pass, diff));
          auto verdict = chain->add_block(b);
          if (!verdict.ok()) throw std::logic_error("simulated block rejected: " + verdict.describe());
        } else {
          light.emplace(hash, LightBlock{light_tip, light_height + 1, f.miner});
        }
        ev["blocks"].push_back(Json{{"miner", cfg.miners[f.miner].name},
                                    {"hash", hash.hex()},
                                    {"height", w.templ.header.height},
                                    {"main", k == 0}});
      }
      if (chain) {
        const Block& b = chain->block(chain->tip());
        std::set<Digest> included;
        for (const auto& tx : b.txs) {
          included.insert(transaction_hash(tx));
          if (const auto* c = std::get_if<SolutionClaim>(&tx)) {
            progress[c->problem].claimed_height = b.header.height;
            ev["claims_included"].push_back(c->problem.hex());
          }
        }
        std::erase_if(mempool, [&](const Transaction& tx) {
          return included.contains(transaction_hash(tx));
        });
      } else {
        light_tip = work[found.front().miner].templ.header.hash();
        ++light_height;
      }
    }
    if (chain && (!claims.empty() || !found.empty())) {
      for (auto& c : claims) mempool.push_back(std::move(c));
      mempool = make_template(*chain, chain->tip(), PublicKey{}, mempool,
                              SelectionPolicy::fee_priority())
                    .txs;
      pending_claims.clear();
      for (const auto& tx : mempool)
        if (const auto* c = std::get_if<SolutionClaim>(&tx)) pending_claims.insert(c->problem);
      ++mempool_version;
    }

    if (!ev.empty()) {
      ev["round"] = round;
      events.push_back(std::move(ev));
    }
    ++round;
  }

  RunStats stats() const {
    RunStats s;
    s.mode = mode;
    s.rounds = round;
    s.height = height();
    s.fork_events = fork_events;
    s.hashes = hashes;
    s.tip = tip();
    std::vector<MinerReport> miners(cfg.miners.size());
    if (chain) {
      for (const auto& h : chain->main_chain()) {
        if (h == chain->genesis_hash()) continue;
        const Block& b = chain->block(h);
        ++miners[miner_index.at(b.header.miner)].blocks;
        const ChainState& parent = chain->state(b.header.prev);
        for (const auto& tx : b.txs)
          if (const auto* c = std::get_if<SolutionClaim>(&tx)) {
            auto& m = miners[miner_index.at(c->claimant)];
            ++m.solutions_claimed;
            m.prizes_earned += parent.escrow.at(c->problem) - c->fee;
          }
      }
      s.state_hash = chain->tip_state().state_hash();
    } else {
      for (Digest h = light_tip; h != light_genesis;) {
        const LightBlock& b = light.at(h);
        ++miners[b.miner].blocks;
        h = b.parent;
      }
      s.state_hash = light_tip;
    }
    std::uint64_t total_rate = 0;
    for (const auto& m : cfg.miners) total_rate += m.eval_rate;
    for (std::size_t i = 0; i < miners.size(); ++i) {
      MinerReport& r = miners[i];
      r.name = cfg.miners[i].name;
      r.strategy = cfg.miners[i].strategy;
      r.eval_rate = cfg.miners[i].eval_rate;
      r.eval_share = static_cast<double>(r.eval_rate) / static_cast<double>(total_rate);
      r.evals = evals[i];
      r.solutions_found = solutions_found[i];
      if (s.height > 0) {
        double n = static_cast<double>(s.height);
        r.block_share = static_cast<double>(r.blocks) / n;
        r.sigma = std::sqrt(r.eval_share * (1 - r.eval_share) / n);
        r.z_score = r.sigma > 0 ? (r.block_share - r.eval_share) / r.sigma : 0.0;
      }
    }
    s.miners = std::move(miners);
    return s;
  }
};

NetworkSim::NetworkSim(const SimConfig& config, SimMode mode)
    : impl_(std::make_unique<Impl>(config, mode)) {}

NetworkSim::~NetworkSim() = default;

bool NetworkSim::step() {
  if (impl_->done()) return false;
  impl_->step();
  return true;
}

void NetworkSim::run() {
  while (step()) {
  }
}

const Chain& NetworkSim::chain() const {
  if (!impl_->chain) throw ModeMismatch("naive-coupled runs keep no ledger");
  return *impl_->chain;
}

RunStats NetworkSim::stats() const { return impl_->stats(); }

const std::vector<Json>& NetworkSim::events() const { return impl_->events; }

NetworkSim::ProblemProgress NetworkSim::progress(const ProblemId& id) const {
  auto it = impl_->progress.find(id);
  return it == impl_->progress.end() ? ProblemProgress{} : it->second;
}

}  // namespace rems
