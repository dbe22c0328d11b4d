#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string_view>
#include <vector>

#include "rems/hash_core.hpp"

namespace rems {

using ProblemId = Digest;

enum class ProblemOrigin : std::uint8_t { User, Filler };

/// A trimmed SHA256^reps preimage problem: find x with
/// trim(SHA256^reps(x), window) == target.
struct Problem {
  ProblemId id;
  std::uint64_t reps = 1;
  BitWindow window;
  BitString target;
  std::uint64_t prize = 0;
  PublicKey uploader;
  ProblemOrigin origin = ProblemOrigin::User;

  /// Builds a user problem and derives its id from the canonical encoding.
  static Problem make(std::uint64_t reps, BitWindow window, BitString target,
                      std::uint64_t prize, PublicKey uploader);

  /// reps (8B BE) | from (2B) | to (2B) | packed target | uploader (32B).
  Bytes canonical_encoding() const;
  ProblemId compute_id() const { return sha256(canonical_encoding()); }

  std::uint64_t score() const { return reps; }
  bool is_filler() const { return origin == ProblemOrigin::Filler; }
};

enum class ProblemError {
  ZeroReps,
  WindowOutOfRange,
  ZeroWidthWindow,
  TargetLengthMismatch,
  ReservedUploader,
  IdMismatch,
  PrizeBelowMinimum,
};

std::string_view to_string(ProblemError e);

/// Upload-time checks. The all-zero uploader key is reserved for fillers.
std::optional<ProblemError> validate_problem(const Problem& p,
                                             std::uint64_t min_prize);

/// 2^-width under the uniform-output model.
double solve_probability(const Problem& p);

/// Problems share an identity iff they evaluate the same untrimmed function.
struct FunctionIdentity {
  std::uint64_t reps = 1;
  auto operator<=>(const FunctionIdentity&) const = default;
};

/// Score in expected SHA-256 invocations per evaluation.
class ScoreTable {
 public:
  std::uint64_t score(FunctionIdentity f) const {
    if (f.reps == 0) throw std::invalid_argument("reps must be positive");
    return f.reps;
  }
  std::uint64_t score(const Problem& p) const { return score(FunctionIdentity{p.reps}); }
};

/// Snapshot of unsolved uploaded problems, iterated by id.
class ActiveSet {
 public:
  void insert(Problem p) { problems_.insert_or_assign(p.id, std::move(p)); }
  bool erase(const ProblemId& id) { return problems_.erase(id) > 0; }
  bool contains(const ProblemId& id) const { return problems_.contains(id); }
  const Problem* find(const ProblemId& id) const;
  std::size_t size() const { return problems_.size(); }
  bool empty() const { return problems_.empty(); }

  auto begin() const { return problems_.begin(); }
  auto end() const { return problems_.end(); }

 private:
  std::map<ProblemId, Problem> problems_;
};

/// uploaded - solved - pending.
ActiveSet refresh_active(const std::map<ProblemId, Problem>& uploaded,
                         const std::set<ProblemId>& solved,
                         const std::set<ProblemId>& pending = {});

/// System filler number `index` for evaluation key `ek`: one SHA-256 with a
/// full-width target drawn from sha256(ek | index), so it adds work but is
/// never expected to be solved.
Problem make_filler(const Digest& ek, std::uint64_t index);

struct SelectionPolicy {
  enum class Kind { FeePriority, UniformRandom };
  Kind kind = Kind::FeePriority;
  std::uint64_t seed = 0;

  static SelectionPolicy fee_priority() { return {}; }
  static SelectionPolicy uniform_random(std::uint64_t seed) {
    return {Kind::UniformRandom, seed};
  }
};

/// Chooses problems whose scores sum exactly to `budget`.
///
/// Candidates are ranked (fee priority: prize desc, prize per score desc, id
/// asc; uniform: seeded shuffle). The first inclusion pattern in rank order
/// that hits the budget exactly with active problems wins. If none exists the
/// greedy prefix is kept and fillers derived from `ek` pad the remainder.
/// Output order: chosen active problems in rank order, then fillers.
std::vector<Problem> select_subset(const ActiveSet& active,
                                   std::uint64_t budget,
                                   const SelectionPolicy& policy,
                                   const Digest& ek);

std::uint64_t total_score(std::span<const Problem> subset);

struct StageCheck {
  ProblemId id;
  BitWindow window;
  BitString target;
  ProblemOrigin origin = ProblemOrigin::User;
};

/// One evaluation of SHA256^reps over the previous stage output, with every
/// trimming checked against that single untrimmed result.
struct Stage {
  std::uint64_t reps = 1;
  std::vector<StageCheck> checks;

  bool has_user_check() const;
};

/// Coalesces adjacent problems with equal FunctionIdentity into one stage.
/// Throws std::invalid_argument on an empty subset.
std::vector<Stage> group_stages(std::span<const Problem> subset);

/// One stage per problem, no coalescing.
std::vector<Stage> single_stages(std::span<const Problem> subset);

/// Binary Merkle root with leaf = sha256(0x00|leaf), node =
/// sha256(0x01|left|right); an odd node is paired with itself. Throws
/// std::invalid_argument on an empty leaf list.
Digest merkle_root(std::span<const Digest> leaves);

std::vector<ProblemId> subset_ids(std::span<const Problem> subset);
/// Merkle root over the ordered ids of the subset.
Digest subset_commitment(std::span<const Problem> subset);

}  // namespace rems
