#include "rems/node.hpp"

#include <algorithm>
#include <set>
#include <stdexcept>

namespace rems {

LocalNode::LocalNode(Chain chain, PublicKey miner, std::uint64_t seed,
                     SelectionPolicy policy)
    : chain_(std::move(chain)), miner_(miner), seed_(seed), policy_(policy) {}

SeedStream LocalNode::seeds_for(const Digest& parent) const {
  Bytes material;
  append_u64(material, seed_);
  material.insert(material.end(), parent.bytes.begin(), parent.bytes.end());
  material.insert(material.end(), miner_.bytes.begin(), miner_.bytes.end());
  return SeedStream(Seed::from_bytes(sha256(material).view()));
}

std::uint64_t LocalNode::exposure(const ProblemId& id) const {
  auto it = exposure_.find(id);
  return it == exposure_.end() ? 0 : it->second;
}

LocalNode::Mined LocalNode::mine_block(std::uint64_t max_attempts) {
  const Digest parent = chain_.tip();
  BlockTemplate t = make_template(chain_, parent, miner_, pending_, policy_);
  const auto& uploaded = chain_.state(parent).uploaded;

  Mined mined;
  std::set<ProblemId> claimed;
  auto on_solution = [&](const SolutionEvent& ev) {
    if (!uploaded.contains(ev.problem) || !claimed.insert(ev.problem).second) return;
    if (!first_solved_.contains(ev.problem)) {
      first_solved_[ev.problem] = true;
      exposure_[ev.problem] += ev.attempt + 1;
    }
    SolutionClaim c;
    c.problem = ev.problem;
    c.snapshot = t.header;
    c.seed = ev.seed;
    c.subset = subset_ids(t.subset);
    c.stage_index = ev.stage_index;
    c.claimant = miner_;
    c.fee = 0;
    mined.claims.push_back(std::move(c));
  };

  MineOutcome out = mine(t.subset, t.header, chain_.params().difficulty, seeds_for(parent),
                         {0, max_attempts}, on_solution);
  mined.attempts = out.attempts;
  total_attempts_ += out.attempts;
  for (const auto& p : t.subset)
    if (!p.is_filler() && !first_solved_.contains(p.id)) exposure_[p.id] += out.attempts;
  if (out.status != MineOutcome::Status::BlockFound)
    throw std::runtime_error("no block within " + std::to_string(max_attempts) + " attempts");

  mined.block = t.seal(*out.seed, *out.result);
  auto verdict = chain_.add_block(mined.block);
  if (!verdict.ok()) throw std::logic_error("mined block rejected: " + verdict.describe());

  std::set<Digest> included;
  for (const auto& tx : mined.block.txs) included.insert(transaction_hash(tx));
  std::erase_if(pending_, [&](const Transaction& tx) {
    return included.contains(transaction_hash(tx));
  });
  for (const auto& c : mined.claims) pending_.push_back(c);
  // Drop what can no longer apply on the new tip.
  pending_ = make_template(chain_, chain_.tip(), miner_, pending_, policy_).txs;
  return mined;
}

}  // namespace rems
