#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "rems/hash_core.hpp"
#include "rems/objectives.hpp"
#include "rems/protocol.hpp"

namespace rems {

struct Transfer {
  PublicKey from;
  PublicKey to;
  std::uint64_t amount = 0;
  std::uint64_t fee = 0;
  bool operator==(const Transfer&) const = default;
};

/// Locks `problem.prize` from the uploader's balance into escrow.
struct ProblemUpload {
  Problem problem;
  bool operator==(const ProblemUpload& o) const {
    return problem.canonical_encoding() == o.problem.canonical_encoding() &&
           problem.prize == o.problem.prize && problem.id == o.problem.id;
  }
};

/// Prize claim for a problem solved inside a pipeline pass over `snapshot`.
/// The prize goes to the snapshot's miner; `fee` of it goes to the includer.
struct SolutionClaim {
  ProblemId problem;
  HeaderDraft snapshot;
  Seed seed;
  /// Full subset the snapshot committed to, in pipeline order.
  std::vector<ProblemId> subset;
  std::uint32_t stage_index = 0;
  PublicKey claimant;
  std::uint64_t fee = 0;
  bool operator==(const SolutionClaim&) const = default;
};

using Transaction = std::variant<Transfer, ProblemUpload, SolutionClaim>;

Bytes encode_transaction(const Transaction& tx);
Digest transaction_hash(const Transaction& tx);
/// Merkle root of transaction hashes; the zero digest for an empty list.
Digest transactions_root(std::span<const Transaction> txs);

struct Block {
  HeaderDraft header;
  Seed seed;
  std::vector<ProblemId> subset;
  std::vector<Transaction> txs;
  EvalResult result;

  Digest hash() const { return header.hash(); }
  bool operator==(const Block&) const = default;
};

struct ChainParams {
  Difficulty difficulty = Difficulty::power_of_two(248);
  std::uint64_t score_budget = 4;
  std::uint64_t block_reward = 50;
  /// Max depth between a claim's snapshot parent and the including parent.
  std::uint64_t freshness_window = 100;
  std::uint64_t min_problem_prize = 1;
  std::map<PublicKey, std::uint64_t> allocations;

  /// Bound into the genesis header.
  Digest digest() const;
  bool operator==(const ChainParams&) const = default;
};

struct ChainState {
  Digest tip;
  std::uint64_t height = 0;
  std::map<PublicKey, std::uint64_t> balances;
  std::map<ProblemId, std::uint64_t> escrow;
  std::set<ProblemId> solved;
  std::map<ProblemId, Problem> uploaded;
  std::uint64_t genesis_supply = 0;
  std::uint64_t minted = 0;

  std::uint64_t balance(const PublicKey& k) const;
  /// sum(balances) + sum(escrow).
  std::uint64_t circulating() const;
  bool conserves() const { return circulating() == genesis_supply + minted; }
  Digest state_hash() const;
};

/// Uploaded, unsolved problems minus `pending` (claims in the block being built).
ActiveSet active_set_at(const ChainState& state,
                        const std::set<ProblemId>& pending = {});

enum class ClaimError {
  ProblemInactive,
  ClaimantMismatch,
  StaleHeader,
  NotInCommittedSubset,
  BadPreimage,
  FeeExceedsPrize,
};
std::string_view to_string(ClaimError e);

enum class BlockError {
  UnknownParent,
  BadHeader,
  BadSubset,
  ScoreBudgetViolation,
  BadPow,
  BadTransaction,
};
std::string_view to_string(BlockError e);

struct BlockVerdict {
  std::optional<BlockError> error;
  std::size_t tx_index = 0;
  std::string cause;

  bool ok() const { return !error.has_value(); }
  std::string describe() const;
};

class Chain;

/// Checks a claim against `state`, whose tip is the parent of the block that
/// would include it.
std::optional<ClaimError> validate_solution_claim(const SolutionClaim& claim,
                                                  const ChainState& state,
                                                  const Chain& chain);

BlockVerdict validate_block(const Block& block, const Chain& chain);

/// State transition for a block that passed validate_block.
ChainState apply_block(const Block& block, const ChainState& parent,
                       const Chain& chain);

Block make_genesis(const ChainParams& params);

/// Block tree with per-block state snapshots. The tip is the head of the
/// longest chain; among equal heights the first one received stays.
class Chain {
 public:
  explicit Chain(ChainParams params);

  const ChainParams& params() const { return params_; }
  const Digest& genesis_hash() const { return genesis_hash_; }

  /// Validates, stores and runs fork choice. Duplicates are rejected as
  /// BadHeader.
  BlockVerdict add_block(const Block& block);

  bool contains(const Digest& hash) const { return entries_.contains(hash); }
  const Block& block(const Digest& hash) const;
  const ChainState& state(const Digest& hash) const;

  const Digest& tip() const { return tip_; }
  std::uint64_t height() const { return state(tip_).height; }
  const ChainState& tip_state() const { return state(tip_); }

  /// Hash of the ancestor of `from` (inclusive) at `height`.
  std::optional<Digest> ancestor_at(const Digest& from,
                                    std::uint64_t height) const;
  /// Genesis first.
  std::vector<Digest> main_chain() const;
  /// Every stored block, genesis first, in receive order.
  const std::vector<Digest>& arrival_order() const { return arrival_; }

 private:
  struct Entry {
    Block block;
    std::shared_ptr<const ChainState> state;
  };

  ChainParams params_;
  Digest genesis_hash_;
  std::map<Digest, Entry> entries_;
  std::vector<Digest> arrival_;
  Digest tip_;
};

/// Head of the longest known chain.
inline Digest fork_choice(const Chain& chain) { return chain.tip(); }

/// Header, subset and transactions a miner commits to before searching seeds.
struct BlockTemplate {
  HeaderDraft header;
  std::vector<Problem> subset;
  std::vector<Transaction> txs;

  Block seal(const Seed& seed, const EvalResult& result) const;
};

/// Keeps the candidate transactions that apply cleanly in order on top of
/// `parent`, excludes problems they claim from the active set, and selects
/// the subset.
BlockTemplate make_template(const Chain& chain, const Digest& parent,
                            const PublicKey& miner,
                            std::span<const Transaction> candidates,
                            const SelectionPolicy& policy);

}  // namespace rems
