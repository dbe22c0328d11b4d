#include "rems/objectives.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <unordered_set>

#include "rems/random.hpp"

namespace rems {

Problem Problem::make(std::uint64_t reps, BitWindow window, BitString target,
                      std::uint64_t prize, PublicKey uploader) {
  Problem p;
  p.reps = reps;
  p.window = window;
  p.target = std::move(target);
  p.prize = prize;
  p.uploader = uploader;
  p.id = p.compute_id();
  return p;
}

Bytes Problem::canonical_encoding() const {
  Bytes out;
  out.reserve(8 + 4 + target.packed().size() + 32);
  append_u64(out, reps);
  append_u16(out, window.from);
  append_u16(out, window.to);
  out.insert(out.end(), target.packed().begin(), target.packed().end());
  out.insert(out.end(), uploader.bytes.begin(), uploader.bytes.end());
  return out;
}

std::string_view to_string(ProblemError e) {
  switch (e) {
    case ProblemError::ZeroReps: return "ZeroReps";
    case ProblemError::WindowOutOfRange: return "WindowOutOfRange";
    case ProblemError::ZeroWidthWindow: return "ZeroWidthWindow";
    case ProblemError::TargetLengthMismatch: return "TargetLengthMismatch";
    case ProblemError::ReservedUploader: return "ReservedUploader";
    case ProblemError::IdMismatch: return "IdMismatch";
    case ProblemError::PrizeBelowMinimum: return "PrizeBelowMinimum";
  }
  return "Unknown";
}

std::optional<ProblemError> validate_problem(const Problem& p,
                                             std::uint64_t min_prize) {
  if (p.reps == 0) return ProblemError::ZeroReps;
  if (!p.window.valid()) return ProblemError::WindowOutOfRange;
  if (p.window.width() == 0) return ProblemError::ZeroWidthWindow;
  if (p.target.size() != p.window.width())
    return ProblemError::TargetLengthMismatch;
  if (p.uploader.is_zero()) return ProblemError::ReservedUploader;
  if (p.id != p.compute_id()) return ProblemError::IdMismatch;
  if (p.prize < min_prize) return ProblemError::PrizeBelowMinimum;
  return std::nullopt;
}

double solve_probability(const Problem& p) {
  return std::ldexp(1.0, -static_cast<int>(p.window.width()));
}

const Problem* ActiveSet::find(const ProblemId& id) const {
  auto it = problems_.find(id);
  return it == problems_.end() ? nullptr : &it->second;
}

ActiveSet refresh_active(const std::map<ProblemId, Problem>& uploaded,
                         const std::set<ProblemId>& solved,
                         const std::set<ProblemId>& pending) {
  ActiveSet out;
  for (const auto& [id, p] : uploaded)
    if (!solved.contains(id) && !pending.contains(id)) out.insert(p);
  return out;
}

Problem make_filler(const Digest& ek, std::uint64_t index) {
  Bytes material(ek.bytes.begin(), ek.bytes.end());
  append_u64(material, index);
  Digest d = sha256(material);
  Problem p;
  p.reps = 1;
  p.window = {0, 256};
  p.target = trim_bits(d, p.window);
  p.origin = ProblemOrigin::Filler;
  p.id = p.compute_id();
  return p;
}

std::uint64_t total_score(std::span<const Problem> subset) {
  ScoreTable table;
  std::uint64_t sum = 0;
  for (const auto& p : subset) sum += table.score(p);
  return sum;
}

namespace {

bool fee_rank_before(const Problem& a, const Problem& b) {
  if (a.prize != b.prize) return a.prize > b.prize;
  // prize_a / score_a > prize_b / score_b without division.
  auto lhs = static_cast<unsigned __int128>(a.prize) * b.score();
  auto rhs = static_cast<unsigned __int128>(b.prize) * a.score();
  if (lhs != rhs) return lhs > rhs;
  return a.id < b.id;
}

class ExactFill {
 public:
  ExactFill(const std::vector<const Problem*>& ranked, std::uint64_t budget)
      : ranked_(ranked), budget_(budget), suffix_(ranked.size() + 1, 0) {
    for (std::size_t i = ranked.size(); i-- > 0;)
      suffix_[i] = suffix_[i + 1] + ranked[i]->score();
  }

  std::optional<std::vector<std::size_t>> solve() {
    std::vector<std::size_t> chosen;
    if (search(0, budget_, chosen)) return chosen;
    return std::nullopt;
  }

 private:
  bool search(std::size_t i, std::uint64_t remaining,
              std::vector<std::size_t>& chosen) {
    if (remaining == 0) return true;
    if (i == ranked_.size() || suffix_[i] < remaining) return false;
    std::uint64_t key = i * (budget_ + 1) + remaining;
    if (failed_.contains(key)) return false;
    std::uint64_t s = ranked_[i]->score();
    if (s <= remaining) {
      chosen.push_back(i);
      if (search(i + 1, remaining - s, chosen)) return true;
      chosen.pop_back();
    }
    if (search(i + 1, remaining, chosen)) return true;
    failed_.insert(key);
    return false;
  }

  const std::vector<const Problem*>& ranked_;
  std::uint64_t budget_;
  std::vector<std::uint64_t> suffix_;
  std::unordered_set<std::uint64_t> failed_;
};

}  // namespace

std::vector<Problem> select_subset(const ActiveSet& active,
                                   std::uint64_t budget,
                                   const SelectionPolicy& policy,
                                   const Digest& ek) {
  if (budget == 0) throw std::invalid_argument("score budget must be positive");

  std::vector<const Problem*> ranked;
  ranked.reserve(active.size());
  for (const auto& [id, p] : active) ranked.push_back(&p);

  if (policy.kind == SelectionPolicy::Kind::FeePriority) {
    std::sort(ranked.begin(), ranked.end(),
              [](const Problem* a, const Problem* b) {
                return fee_rank_before(*a, *b);
              });
  } else {
    Rng rng(policy.seed);
    for (std::size_t i = ranked.size(); i > 1; --i)
      std::swap(ranked[i - 1], ranked[rng.below(i)]);
  }

  std::vector<std::size_t> chosen;
  if (auto exact = ExactFill(ranked, budget).solve()) {
    chosen = std::move(*exact);
  } else {
    std::uint64_t used = 0;
    for (std::size_t i = 0; i < ranked.size(); ++i) {
      if (used + ranked[i]->score() <= budget) {
        chosen.push_back(i);
        used += ranked[i]->score();
      }
    }
  }

  std::vector<Problem> out;
  std::uint64_t used = 0;
  for (auto i : chosen) {
    out.push_back(*ranked[i]);
    used += ranked[i]->score();
  }
  for (std::uint64_t k = 0; used < budget; ++k, ++used)
    out.push_back(make_filler(ek, k));
  return out;
}

bool Stage::has_user_check() const {
  return std::any_of(checks.begin(), checks.end(), [](const StageCheck& c) {
    return c.origin == ProblemOrigin::User;
  });
}

namespace {

StageCheck check_of(const Problem& p) {
  return StageCheck{p.id, p.window, p.target, p.origin};
}

}  // namespace

std::vector<Stage> group_stages(std::span<const Problem> subset) {
  if (subset.empty()) throw std::invalid_argument("empty subset");
  std::vector<Stage> stages;
  for (const auto& p : subset) {
    if (stages.empty() || stages.back().reps != p.reps)
      stages.push_back(Stage{p.reps, {}});
    stages.back().checks.push_back(check_of(p));
  }
  return stages;
}

std::vector<Stage> single_stages(std::span<const Problem> subset) {
  if (subset.empty()) throw std::invalid_argument("empty subset");
  std::vector<Stage> stages;
  stages.reserve(subset.size());
  for (const auto& p : subset) stages.push_back(Stage{p.reps, {check_of(p)}});
  return stages;
}

Digest merkle_root(std::span<const Digest> leaves) {
  if (leaves.empty()) throw std::invalid_argument("merkle_root: empty leaves");
  Sha256 hasher;
  std::vector<Digest> level;
  level.reserve(leaves.size());
  for (const auto& leaf : leaves)
    level.push_back(hasher.update(0x00).update(leaf.view()).finalize());
  while (level.size() > 1) {
    if (level.size() % 2 == 1) level.push_back(level.back());
    std::vector<Digest> next;
    next.reserve(level.size() / 2);
    for (std::size_t i = 0; i < level.size(); i += 2)
      next.push_back(hasher.update(0x01)
                         .update(level[i].view())
                         .update(level[i + 1].view())
                         .finalize());
    level = std::move(next);
  }
  return level.front();
}

std::vector<ProblemId> subset_ids(std::span<const Problem> subset) {
  std::vector<ProblemId> ids;
  ids.reserve(subset.size());
  for (const auto& p : subset) ids.push_back(p.id);
  return ids;
}

Digest subset_commitment(std::span<const Problem> subset) {
  return merkle_root(subset_ids(subset));
}

}  // namespace rems
