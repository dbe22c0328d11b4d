#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "rems/hash_core.hpp"
#include "rems/objectives.hpp"

namespace rems {

using EvalKey = Digest;

/// Block header as mined. `prev` doubles as the evaluation key.
struct HeaderDraft {
  EvalKey prev;
  std::uint64_t height = 0;
  PublicKey miner;
  Digest tx_root;
  Digest s_root;

  /// prev (32) | height (8B BE) | miner (32) | tx_root (32) | s_root (32).
  Bytes serialize() const;
  Digest hash() const { return sha256(serialize()); }

  bool operator==(const HeaderDraft&) const = default;
};

/// ek = sha256 of the tip header.
EvalKey setup(const HeaderDraft& tip);

/// How a subset is laid out as pipeline stages. Consensus uses PerProblem.
enum class StageLayout { PerProblem, CoalesceAdjacent };

std::vector<Stage> layout_stages(std::span<const Problem> subset,
                                 StageLayout layout);

/// Hash invocations of one pipeline pass, split by who benefits.
struct HashTally {
  std::uint64_t s0 = 0;
  std::uint64_t user = 0;
  std::uint64_t filler = 0;

  std::uint64_t total() const { return s0 + user + filler; }
  HashTally& operator+=(const HashTally& o) {
    s0 += o.s0;
    user += o.user;
    filler += o.filler;
    return *this;
  }
  HashTally scaled(std::uint64_t passes) const {
    return {s0 * passes, user * passes, filler * passes};
  }
  bool operator==(const HashTally&) const = default;
};

struct EvalResult {
  bool block_found = false;
  /// One entry per problem of S, keyed by id.
  std::map<ProblemId, bool> solved;
  /// Untrimmed output of the last stage.
  Digest proof;
  Digest s0;
  /// 1 + sum of stage reps.
  std::uint64_t hash_count = 0;

  bool any_solved() const;
  bool operator==(const EvalResult&) const = default;
};

/// Precomputed stage plan for one subset; runs individual passes without
/// allocating on the common no-solution path.
class Pipeline {
 public:
  /// Throws std::invalid_argument on an empty subset, duplicate ids or a
  /// zero-width check.
  Pipeline(std::span<const Problem> subset, StageLayout layout);

  struct Pass {
    Digest s0;
    Digest proof;
    /// (stage index, check index) of every matching check.
    std::vector<std::pair<std::uint32_t, std::uint32_t>> hits;
  };

  Digest first_input(ByteView header_bytes, const Seed& seed) const;
  Pass run(ByteView header_bytes, const Seed& seed) const;
  /// Untrimmed output of stage `stage_index` (0-based).
  Digest output_at(ByteView header_bytes, const Seed& seed,
                   std::size_t stage_index) const;

  const std::vector<Stage>& stages() const { return stages_; }
  const HashTally& tally_per_pass() const { return tally_; }
  std::uint64_t hashes_per_pass() const { return tally_.total(); }

  /// Expands a pass into the full (y, pi) result.
  EvalResult to_result(const Pass& pass, const Difficulty& diff) const;

 private:
  std::vector<Stage> stages_;
  HashTally tally_;
};

/// s0 = sha256(header | seed); s_i = SHA256^reps_i(s_{i-1}); each check of
/// stage i is solved iff its window of s_i equals its target; the proof is
/// the final s; block_found iff the proof meets the difficulty.
EvalResult eval(std::span<const Problem> subset, const HeaderDraft& header,
                const Seed& seed, const Difficulty& diff,
                StageLayout layout = StageLayout::PerProblem);

enum class VerifyError {
  EmptySubset,
  MalformedSubset,
  CommitmentMismatch,
  TranscriptMismatch,
  ProofMismatch,
  FlagsMismatch,
  DifficultyNotMet,
};

std::string_view to_string(VerifyError e);

/// Recomputes the pipeline. Accepts iff the commitment matches and the claimed
/// result equals the recomputed one; reports the first failed check.
std::optional<VerifyError> verify(std::span<const Problem> subset,
                                  const HeaderDraft& header, const Seed& seed,
                                  const EvalResult& claimed,
                                  const Difficulty& diff,
                                  StageLayout layout = StageLayout::PerProblem);

/// Seeds for attempt i: `base` with its last 8 bytes xor-ed by i.
class SeedStream {
 public:
  explicit SeedStream(Seed base) : base_(base) {}
  static SeedStream from_entropy();

  Seed at(std::uint64_t index) const;

 private:
  Seed base_;
};

struct SolutionEvent {
  std::uint64_t attempt = 0;
  Seed seed;
  ProblemId problem;
  std::uint32_t stage_index = 0;
  bool block_found = false;
};

struct MineLimits {
  std::uint64_t first_attempt = 0;
  std::uint64_t max_attempts = UINT64_MAX;
};

struct MineOutcome {
  enum class Status { BlockFound, Stopped };
  Status status = Status::Stopped;
  /// Attempts consumed, including the winning one.
  std::uint64_t attempts = 0;
  std::optional<Seed> seed;
  std::optional<EvalResult> result;
  std::vector<SolutionEvent> solutions;
  HashTally hashes;
};

using SolutionSink = std::function<void(const SolutionEvent&)>;

/// Repeated Eval until a block is found or the attempt limit is reached.
/// Solution events are delivered as they occur, in attempt order.
MineOutcome mine(std::span<const Problem> subset, const HeaderDraft& header,
                 const Difficulty& diff, const SeedStream& seeds,
                 const MineLimits& limits, const SolutionSink& on_solution = {},
                 StageLayout layout = StageLayout::PerProblem);

/// Same contract as mine() with attempts interleaved over `workers` threads.
/// The winning attempt is the lowest-indexed block, so the outcome does not
/// depend on the worker count.
MineOutcome mine_parallel(std::span<const Problem> subset,
                          const HeaderDraft& header, const Difficulty& diff,
                          const SeedStream& seeds, const MineLimits& limits,
                          unsigned workers,
                          StageLayout layout = StageLayout::PerProblem);

struct EfficiencyReport {
  std::uint64_t useful_hashes = 0;
  std::uint64_t total_hashes = 0;
  double ratio = 0.0;
  HashTally breakdown;
};

/// useful = hashes in stages carrying a user-uploaded check.
EfficiencyReport efficiency_report(const HashTally& counters);

}  // namespace rems
