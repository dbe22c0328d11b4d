#pragma once

#include <cstdint>
#include <map>
#include <vector>

#include "rems/ledger.hpp"

namespace rems {

/// Single miner driving a Chain: keeps a pending transaction pool, mines on
/// the tip and turns its own solutions into pending claims.
class LocalNode {
 public:
  LocalNode(Chain chain, PublicKey miner, std::uint64_t seed,
            SelectionPolicy policy = SelectionPolicy::fee_priority());

  const Chain& chain() const { return chain_; }
  Chain& chain() { return chain_; }
  const PublicKey& miner() const { return miner_; }
  const std::vector<Transaction>& pending() const { return pending_; }

  void submit(Transaction tx) { pending_.push_back(std::move(tx)); }

  struct Mined {
    Block block;
    std::uint64_t attempts = 0;
    std::vector<SolutionClaim> claims;
  };

  /// Mines one block on the tip. Throws std::runtime_error if
  /// `max_attempts` pass without a block.
  Mined mine_block(std::uint64_t max_attempts = UINT64_MAX);

  /// Passes run with `id` in the subset up to and including the first pass
  /// that solved it.
  std::uint64_t exposure(const ProblemId& id) const;
  bool has_solved(const ProblemId& id) const { return first_solved_.contains(id); }
  std::uint64_t total_attempts() const { return total_attempts_; }

  /// Seed stream for the next block on `parent`.
  SeedStream seeds_for(const Digest& parent) const;

 private:
  Chain chain_;
  PublicKey miner_;
  std::uint64_t seed_;
  SelectionPolicy policy_;
  std::vector<Transaction> pending_;
  std::map<ProblemId, std::uint64_t> exposure_;
  std::map<ProblemId, bool> first_solved_;
  std::uint64_t total_attempts_ = 0;
};

}  // namespace rems
