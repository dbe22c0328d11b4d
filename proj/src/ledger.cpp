#include "rems/ledger.hpp"

#include <stdexcept>

namespace rems {

namespace {

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

void append(Bytes& out, ByteView data) {
  out.insert(out.end(), data.begin(), data.end());
}

}  // namespace

Bytes encode_transaction(const Transaction& tx) {
  Bytes out;
  std::visit(
      Overloaded{
          [&](const Transfer& t) {
            out.push_back(0);
            append(out, t.from.view());
            append(out, t.to.view());
            append_u64(out, t.amount);
            append_u64(out, t.fee);
          },
          [&](const ProblemUpload& u) {
            out.push_back(1);
            Bytes enc = u.problem.canonical_encoding();
            append_u64(out, enc.size());
            append(out, enc);
            append_u64(out, u.problem.prize);
          },
          [&](const SolutionClaim& c) {
            out.push_back(2);
            append(out, c.problem.view());
            append(out, c.snapshot.serialize());
            append(out, c.seed.view());
            append_u64(out, c.subset.size());
            for (const auto& id : c.subset) append(out, id.view());
            append_u64(out, c.stage_index);
            append(out, c.claimant.view());
            append_u64(out, c.fee);
          },
      },
      tx);
  return out;
}

Digest transaction_hash(const Transaction& tx) {
  return sha256(encode_transaction(tx));
}

Digest transactions_root(std::span<const Transaction> txs) {
  if (txs.empty()) return Digest{};
  std::vector<Digest> leaves;
  leaves.reserve(txs.size());
  for (const auto& tx : txs) leaves.push_back(transaction_hash(tx));
  return merkle_root(leaves);
}

Digest ChainParams::digest() const {
  Bytes out;
  append(out, difficulty.threshold().view());
  append_u64(out, score_budget);
  append_u64(out, block_reward);
  append_u64(out, freshness_window);
  append_u64(out, min_problem_prize);
  append_u64(out, allocations.size());
  for (const auto& [k, v] : allocations) {
    append(out, k.view());
    append_u64(out, v);
  }
  return sha256(out);
}

std::uint64_t ChainState::balance(const PublicKey& k) const {
  auto it = balances.find(k);
  return it == balances.end() ? 0 : it->second;
}

std::uint64_t ChainState::circulating() const {
  std::uint64_t sum = 0;
  for (const auto& [k, v] : balances) sum += v;
  for (const auto& [k, v] : escrow) sum += v;
  return sum;
}

Digest ChainState::state_hash() const {
  Bytes out;
  append(out, tip.view());
  append_u64(out, height);
  append_u64(out, genesis_supply);
  append_u64(out, minted);
  append_u64(out, balances.size());
  for (const auto& [k, v] : balances) {
    append(out, k.view());
    append_u64(out, v);
  }
  append_u64(out, escrow.size());
  for (const auto& [id, v] : escrow) {
    append(out, id.view());
    append_u64(out, v);
  }
  append_u64(out, solved.size());
  for (const auto& id : solved) append(out, id.view());
  append_u64(out, uploaded.size());
  for (const auto& [id, p] : uploaded) {
    Bytes enc = p.canonical_encoding();
    append_u64(out, enc.size());
    append(out, enc);
    append_u64(out, p.prize);
  }
  return sha256(out);
}

ActiveSet active_set_at(const ChainState& state,
                        const std::set<ProblemId>& pending) {
  return refresh_active(state.uploaded, state.solved, pending);
}

std::string_view to_string(ClaimError e) {
  switch (e) {
    case ClaimError::ProblemInactive: return "ProblemInactive";
    case ClaimError::ClaimantMismatch: return "ClaimantMismatch";
    case ClaimError::StaleHeader: return "StaleHeader";
    case ClaimError::NotInCommittedSubset: return "NotInCommittedSubset";
    case ClaimError::BadPreimage: return "BadPreimage";
    case ClaimError::FeeExceedsPrize: return "FeeExceedsPrize";
  }
  return "Unknown";
}

std::string_view to_string(BlockError e) {
  switch (e) {
    case BlockError::UnknownParent: return "UnknownParent";
    case BlockError::BadHeader: return "BadHeader";
    case BlockError::BadSubset: return "BadSubset";
    case BlockError::ScoreBudgetViolation: return "ScoreBudgetViolation";
    case BlockError::BadPow: return "BadPow";
    case BlockError::BadTransaction: return "BadTransaction";
  }
  return "Unknown";
}

std::string BlockVerdict::describe() const {
  if (ok()) return "ok";
  std::string out(to_string(*error));
  if (*error == BlockError::BadTransaction)
    out += "(" + std::to_string(tx_index) + ")";
  if (!cause.empty()) out += ": " + cause;
  return out;
}

namespace {

std::map<ProblemId, Problem> fillers_for(const Digest& ek, std::uint64_t budget) {
  std::map<ProblemId, Problem> out;
  for (std::uint64_t i = 0; i < budget; ++i) {
    Problem f = make_filler(ek, i);
    out.emplace(f.id, std::move(f));
  }
  return out;
}

bool checked_add(std::uint64_t a, std::uint64_t b, std::uint64_t& out) {
  return !__builtin_add_overflow(a, b, &out);
}

// Applies one transaction to `state`, accumulating fees for the block miner.
// Returns the rejection cause, leaving `state` untouched on failure.
std::optional<std::string> apply_transaction(ChainState& state,
                                             const Transaction& tx,
                                             const Chain& chain,
                                             std::uint64_t& fees) {
  return std::visit(
      Overloaded{
          [&](const Transfer& t) -> std::optional<std::string> {
            std::uint64_t cost;
            if (!checked_add(t.amount, t.fee, cost) || state.balance(t.from) < cost)
              return "Transfer: InsufficientBalance";
            state.balances[t.from] -= cost;
            state.balances[t.to] += t.amount;
            fees += t.fee;
            return std::nullopt;
          },
          [&](const ProblemUpload& u) -> std::optional<std::string> {
            const Problem& p = u.problem;
            if (auto err = validate_problem(p, chain.params().min_problem_prize))
              return "ProblemUpload: " + std::string(to_string(*err));
            if (state.uploaded.contains(p.id))
              return "ProblemUpload: DuplicateProblem";
            if (state.balance(p.uploader) < p.prize)
              return "ProblemUpload: InsufficientBalance";
            state.balances[p.uploader] -= p.prize;
            state.escrow[p.id] = p.prize;
            Problem stored = p;
            stored.origin = ProblemOrigin::User;
            state.uploaded.emplace(p.id, std::move(stored));
            return std::nullopt;
          },
          [&](const SolutionClaim& c) -> std::optional<std::string> {
            if (auto err = validate_solution_claim(c, state, chain))
              return "SolutionClaim: " + std::string(to_string(*err));
            std::uint64_t prize = state.escrow.at(c.problem);
            state.escrow.erase(c.problem);
            state.solved.insert(c.problem);
            state.balances[c.claimant] += prize - c.fee;
            fees += c.fee;
            return std::nullopt;
          },
      },
      tx);
}

// Full validation; on success also produces the post-state.
BlockVerdict check_block(const Block& block, const Chain& chain,
                         ChainState* post) {
  auto fail = [](BlockError e, std::string cause, std::size_t index = 0) {
    return BlockVerdict{e, index, std::move(cause)};
  };
  const HeaderDraft& h = block.header;
  const ChainParams& params = chain.params();

  if (!chain.contains(h.prev)) return fail(BlockError::UnknownParent, h.prev.hex());
  const ChainState& parent = chain.state(h.prev);
  if (h.height != parent.height + 1)
    return fail(BlockError::BadHeader, "height does not follow parent");
  if (h.tx_root != transactions_root(block.txs))
    return fail(BlockError::BadHeader, "tx_root mismatch");

  if (block.subset.empty()) return fail(BlockError::BadSubset, "empty subset");
  if (h.s_root != merkle_root(block.subset))
    return fail(BlockError::BadSubset, "s_root mismatch");

  std::set<ProblemId> claimed;
  for (const auto& tx : block.txs)
    if (const auto* c = std::get_if<SolutionClaim>(&tx)) claimed.insert(c->problem);
  ActiveSet active = active_set_at(parent, claimed);
  auto fillers = fillers_for(h.prev, params.score_budget);

  std::vector<Problem> subset;
  std::set<ProblemId> seen;
  for (const auto& id : block.subset) {
    if (!seen.insert(id).second)
      return fail(BlockError::BadSubset, "duplicate problem " + id.hex());
    if (const Problem* p = active.find(id)) {
      subset.push_back(*p);
    } else if (auto it = fillers.find(id); it != fillers.end()) {
      subset.push_back(it->second);
    } else {
      return fail(BlockError::BadSubset, "not selectable: " + id.hex());
    }
  }
  if (total_score(subset) != params.score_budget)
    return fail(BlockError::ScoreBudgetViolation,
                "score " + std::to_string(total_score(subset)) + " != budget " +
                    std::to_string(params.score_budget));

  if (auto err = verify(subset, h, block.seed, block.result, params.difficulty))
    return fail(BlockError::BadPow, std::string(to_string(*err)));
  if (!block.result.block_found)
    return fail(BlockError::BadPow, "result does not mine a block");

  ChainState next = parent;
  std::uint64_t fees = 0;
  for (std::size_t i = 0; i < block.txs.size(); ++i)
    if (auto err = apply_transaction(next, block.txs[i], chain, fees))
      return fail(BlockError::BadTransaction, *err, i);

  if (post != nullptr) {
    next.balances[h.miner] += params.block_reward + fees;
    next.minted += params.block_reward;
    next.tip = block.hash();
    next.height = h.height;
    *post = std::move(next);
  }
  return {};
}

}  // namespace

std::optional<ClaimError> validate_solution_claim(const SolutionClaim& claim,
                                                  const ChainState& state,
                                                  const Chain& chain) {
  if (!state.uploaded.contains(claim.problem) || state.solved.contains(claim.problem))
    return ClaimError::ProblemInactive;
  if (claim.claimant != claim.snapshot.miner) return ClaimError::ClaimantMismatch;

  const HeaderDraft& snap = claim.snapshot;
  if (!chain.contains(snap.prev)) return ClaimError::StaleHeader;
  std::uint64_t base_height = chain.state(snap.prev).height;
  if (snap.height != base_height + 1 || base_height > state.height ||
      state.height - base_height > chain.params().freshness_window)
    return ClaimError::StaleHeader;
  if (chain.ancestor_at(state.tip, base_height) != snap.prev)
    return ClaimError::StaleHeader;

  if (claim.subset.empty() || merkle_root(claim.subset) != snap.s_root)
    return ClaimError::NotInCommittedSubset;
  auto fillers = fillers_for(snap.prev, chain.params().score_budget);
  std::vector<Problem> subset;
  for (const auto& id : claim.subset) {
    if (auto it = state.uploaded.find(id); it != state.uploaded.end())
      subset.push_back(it->second);
    else if (auto f = fillers.find(id); f != fillers.end())
      subset.push_back(f->second);
    else
      return ClaimError::NotInCommittedSubset;
  }

  std::optional<Pipeline> pipeline;
  try {
    pipeline.emplace(subset, StageLayout::PerProblem);
  } catch (const std::invalid_argument&) {
    return ClaimError::NotInCommittedSubset;
  }
  if (claim.stage_index >= pipeline->stages().size())
    return ClaimError::NotInCommittedSubset;
  const Stage& stage = pipeline->stages()[claim.stage_index];
  const StageCheck* check = nullptr;
  for (const auto& c : stage.checks)
    if (c.id == claim.problem) check = &c;
  if (check == nullptr) return ClaimError::NotInCommittedSubset;

  Digest out = pipeline->output_at(snap.serialize(), claim.seed, claim.stage_index);
  if (!window_matches(out, check->window, check->target))
    return ClaimError::BadPreimage;
  if (claim.fee > state.escrow.at(claim.problem)) return ClaimError::FeeExceedsPrize;
  return std::nullopt;
}

BlockVerdict validate_block(const Block& block, const Chain& chain) {
  return check_block(block, chain, nullptr);
}

ChainState apply_block(const Block& block, const ChainState& parent,
                       const Chain& chain) {
  if (block.header.prev != parent.tip)
    throw std::invalid_argument("apply_block: parent mismatch");
  ChainState next;
  auto verdict = check_block(block, chain, &next);
  if (!verdict.ok())
    throw std::invalid_argument("apply_block on invalid block: " + verdict.describe());
  return next;
}

Block make_genesis(const ChainParams& params) {
  Block g;
  g.header.tx_root = params.digest();
  return g;
}

Chain::Chain(ChainParams params) : params_(std::move(params)) {
  if (params_.score_budget == 0) throw std::invalid_argument("score budget must be positive");
  Block genesis = make_genesis(params_);
  genesis_hash_ = genesis.hash();
  auto state = std::make_shared<ChainState>();
  state->tip = genesis_hash_;
  for (const auto& [k, v] : params_.allocations) {
    if (v == 0) continue;
    state->balances[k] = v;
    state->genesis_supply += v;
  }
  entries_.emplace(genesis_hash_, Entry{std::move(genesis), std::move(state)});
  arrival_.push_back(genesis_hash_);
  tip_ = genesis_hash_;
}

BlockVerdict Chain::add_block(const Block& block) {
  Digest hash = block.hash();
  if (contains(hash)) return {BlockError::BadHeader, 0, "duplicate block"};
  auto state = std::make_shared<ChainState>();
  BlockVerdict verdict = check_block(block, *this, state.get());
  if (!verdict.ok()) return verdict;
  std::uint64_t h = state->height;
  entries_.emplace(hash, Entry{block, std::move(state)});
  arrival_.push_back(hash);
  if (h > height()) tip_ = hash;
  return verdict;
}

const Block& Chain::block(const Digest& hash) const {
  auto it = entries_.find(hash);
  if (it == entries_.end()) throw std::out_of_range("unknown block " + hash.hex());
  return it->second.block;
}

const ChainState& Chain::state(const Digest& hash) const {
  auto it = entries_.find(hash);
  if (it == entries_.end()) throw std::out_of_range("unknown block " + hash.hex());
  return *it->second.state;
}

std::optional<Digest> Chain::ancestor_at(const Digest& from,
                                         std::uint64_t height) const {
  if (!contains(from)) return std::nullopt;
  Digest cur = from;
  while (state(cur).height > height) cur = block(cur).header.prev;
  if (state(cur).height != height) return std::nullopt;
  return cur;
}

std::vector<Digest> Chain::main_chain() const {
  std::vector<Digest> out;
  Digest cur = tip_;
  while (true) {
    out.push_back(cur);
    if (cur == genesis_hash_) break;
    cur = block(cur).header.prev;
  }
  return {out.rbegin(), out.rend()};
}

Block BlockTemplate::seal(const Seed& seed, const EvalResult& result) const {
  return Block{header, seed, subset_ids(subset), txs, result};
}

BlockTemplate make_template(const Chain& chain, const Digest& parent,
                            const PublicKey& miner,
                            std::span<const Transaction> candidates,
                            const SelectionPolicy& policy) {
  const ChainState& base = chain.state(parent);
  BlockTemplate t;
  ChainState scratch = base;
  std::uint64_t fees = 0;
  std::set<ProblemId> claimed;
  for (const auto& tx : candidates) {
    if (apply_transaction(scratch, tx, chain, fees)) continue;
    t.txs.push_back(tx);
    if (const auto* c = std::get_if<SolutionClaim>(&tx)) claimed.insert(c->problem);
  }
  t.subset = select_subset(active_set_at(base, claimed), chain.params().score_budget,
                           policy, parent);
  t.header.prev = parent;
  t.header.height = base.height + 1;
  t.header.miner = miner;
  t.header.tx_root = transactions_root(t.txs);
  t.header.s_root = subset_commitment(t.subset);
  return t;
}

}  // namespace rems
