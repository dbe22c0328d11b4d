#include "rems/protocol.hpp"

#include <algorithm>
#include <atomic>
#include <random>
#include <set>
#include <stdexcept>
#include <thread>

namespace rems {

Bytes HeaderDraft::serialize() const {
  Bytes out;
  out.reserve(32 + 8 + 32 + 32 + 32);
  out.insert(out.end(), prev.bytes.begin(), prev.bytes.end());
  append_u64(out, height);
  out.insert(out.end(), miner.bytes.begin(), miner.bytes.end());
  out.insert(out.end(), tx_root.bytes.begin(), tx_root.bytes.end());
  out.insert(out.end(), s_root.bytes.begin(), s_root.bytes.end());
  return out;
}

EvalKey setup(const HeaderDraft& tip) { return tip.hash(); }

std::vector<Stage> layout_stages(std::span<const Problem> subset,
                                 StageLayout layout) {
  return layout == StageLayout::CoalesceAdjacent ? group_stages(subset)
                                                 : single_stages(subset);
}

bool EvalResult::any_solved() const {
  return std::any_of(solved.begin(), solved.end(),
                     [](const auto& kv) { return kv.second; });
}

Pipeline::Pipeline(std::span<const Problem> subset, StageLayout layout) {
  if (subset.empty()) throw std::invalid_argument("empty subset");
  std::set<ProblemId> seen;
  for (const auto& p : subset) {
    if (!seen.insert(p.id).second)
      throw std::invalid_argument("duplicate problem in subset");
    if (p.reps == 0) throw std::invalid_argument("zero-reps problem");
    if (!p.window.valid() || p.window.width() == 0)
      throw std::invalid_argument("zero-width problem reached the pipeline");
  }
  stages_ = layout_stages(subset, layout);
  tally_.s0 = 1;
  for (const auto& stage : stages_)
    (stage.has_user_check() ? tally_.user : tally_.filler) += stage.reps;
}

Digest Pipeline::first_input(ByteView header_bytes, const Seed& seed) const {
  thread_local Sha256 hasher;
  return hasher.update(header_bytes).update(seed.view()).finalize();
}

Pipeline::Pass Pipeline::run(ByteView header_bytes, const Seed& seed) const {
  Pass pass;
  pass.s0 = first_input(header_bytes, seed);
  Digest s = pass.s0;
  for (std::uint32_t i = 0; i < stages_.size(); ++i) {
    const Stage& stage = stages_[i];
    s = iterate_hash(s, stage.reps);
    for (std::uint32_t j = 0; j < stage.checks.size(); ++j)
      if (window_matches(s, stage.checks[j].window, stage.checks[j].target))
        pass.hits.emplace_back(i, j);
  }
  pass.proof = s;
  return pass;
}

Digest Pipeline::output_at(ByteView header_bytes, const Seed& seed,
                           std::size_t stage_index) const {
  if (stage_index >= stages_.size())
    throw std::out_of_range("stage index past the end of the pipeline");
  Digest s = first_input(header_bytes, seed);
  for (std::size_t i = 0; i <= stage_index; ++i)
    s = iterate_hash(s, stages_[i].reps);
  return s;
}

EvalResult Pipeline::to_result(const Pass& pass, const Difficulty& diff) const {
  EvalResult r;
  r.s0 = pass.s0;
  r.proof = pass.proof;
  r.block_found = meets_difficulty(pass.proof, diff);
  r.hash_count = hashes_per_pass();
  for (const auto& stage : stages_)
    for (const auto& c : stage.checks) r.solved.emplace(c.id, false);
  for (auto [i, j] : pass.hits) r.solved[stages_[i].checks[j].id] = true;
  return r;
}

EvalResult eval(std::span<const Problem> subset, const HeaderDraft& header,
                const Seed& seed, const Difficulty& diff, StageLayout layout) {
  Pipeline pipeline(subset, layout);
  return pipeline.to_result(pipeline.run(header.serialize(), seed), diff);
}

std::string_view to_string(VerifyError e) {
  switch (e) {
    case VerifyError::EmptySubset: return "EmptySubset";
    case VerifyError::MalformedSubset: return "MalformedSubset";
    case VerifyError::CommitmentMismatch: return "CommitmentMismatch";
    case VerifyError::TranscriptMismatch: return "TranscriptMismatch";
    case VerifyError::ProofMismatch: return "ProofMismatch";
    case VerifyError::FlagsMismatch: return "FlagsMismatch";
    case VerifyError::DifficultyNotMet: return "DifficultyNotMet";
  }
  return "Unknown";
}

std::optional<VerifyError> verify(std::span<const Problem> subset,
                                  const HeaderDraft& header, const Seed& seed,
                                  const EvalResult& claimed,
                                  const Difficulty& diff, StageLayout layout) {
  if (subset.empty()) return VerifyError::EmptySubset;
  if (header.s_root != subset_commitment(subset))
    return VerifyError::CommitmentMismatch;

  std::optional<Pipeline> pipeline;
  try {
    pipeline.emplace(subset, layout);
  } catch (const std::invalid_argument&) {
    return VerifyError::MalformedSubset;
  }
  EvalResult actual =
      pipeline->to_result(pipeline->run(header.serialize(), seed), diff);

  if (claimed.s0 != actual.s0 || claimed.hash_count != actual.hash_count)
    return VerifyError::TranscriptMismatch;
  if (claimed.proof != actual.proof) return VerifyError::ProofMismatch;
  if (claimed.solved != actual.solved) return VerifyError::FlagsMismatch;
  if (claimed.block_found != actual.block_found)
    return claimed.block_found ? VerifyError::DifficultyNotMet
                               : VerifyError::FlagsMismatch;
  return std::nullopt;
}

SeedStream SeedStream::from_entropy() {
  std::random_device rd;
  Seed base;
  for (auto& b : base.bytes) b = static_cast<std::uint8_t>(rd());
  return SeedStream(base);
}

Seed SeedStream::at(std::uint64_t index) const {
  Seed s = base_;
  for (int i = 0; i < 8; ++i)
    s.bytes[24 + i] ^= static_cast<std::uint8_t>(index >> (56 - 8 * i));
  return s;
}

namespace {

std::vector<SolutionEvent> events_of(const Pipeline& pipeline,
                                     const Pipeline::Pass& pass,
                                     std::uint64_t attempt, const Seed& seed,
                                     bool block_found) {
  std::vector<SolutionEvent> out;
  for (auto [i, j] : pass.hits)
    out.push_back(SolutionEvent{attempt, seed,
                                pipeline.stages()[i].checks[j].id, i,
                                block_found});
  return out;
}

}  // namespace

MineOutcome mine(std::span<const Problem> subset, const HeaderDraft& header,
                 const Difficulty& diff, const SeedStream& seeds,
                 const MineLimits& limits, const SolutionSink& on_solution,
                 StageLayout layout) {
  Pipeline pipeline(subset, layout);
  const Bytes header_bytes = header.serialize();
  MineOutcome out;
  for (std::uint64_t n = 0; n < limits.max_attempts; ++n) {
    std::uint64_t attempt = limits.first_attempt + n;
    Seed seed = seeds.at(attempt);
    auto pass = pipeline.run(header_bytes, seed);
    ++out.attempts;
    bool found = meets_difficulty(pass.proof, diff);
    for (auto& ev : events_of(pipeline, pass, attempt, seed, found)) {
      if (on_solution) on_solution(ev);
      out.solutions.push_back(std::move(ev));
    }
    if (found) {
      out.status = MineOutcome::Status::BlockFound;
      out.seed = seed;
      out.result = pipeline.to_result(pass, diff);
      break;
    }
  }
  out.hashes = pipeline.tally_per_pass().scaled(out.attempts);
  return out;
}

MineOutcome mine_parallel(std::span<const Problem> subset,
                          const HeaderDraft& header, const Difficulty& diff,
                          const SeedStream& seeds, const MineLimits& limits,
                          unsigned workers, StageLayout layout) {
  if (workers == 0) throw std::invalid_argument("need at least one worker");
  const Pipeline pipeline(subset, layout);
  const Bytes header_bytes = header.serialize();
  std::atomic<std::uint64_t> best{UINT64_MAX};
  std::vector<std::vector<SolutionEvent>> found_events(workers);

  auto work = [&](unsigned w) {
    for (std::uint64_t n = w; n < limits.max_attempts; n += workers) {
      if (n > best.load(std::memory_order_acquire)) break;
      std::uint64_t attempt = limits.first_attempt + n;
      Seed seed = seeds.at(attempt);
      auto pass = pipeline.run(header_bytes, seed);
      bool found = meets_difficulty(pass.proof, diff);
      for (auto& ev : events_of(pipeline, pass, n, seed, found))
        found_events[w].push_back(std::move(ev));
      if (found) {
        std::uint64_t cur = best.load();
        while (n < cur && !best.compare_exchange_weak(cur, n)) {
        }
        break;
      }
    }
  };

  std::vector<std::thread> threads;
  for (unsigned w = 0; w < workers; ++w) threads.emplace_back(work, w);
  for (auto& t : threads) t.join();

  MineOutcome out;
  std::uint64_t winner = best.load();
  for (auto& evs : found_events)
    for (auto& ev : evs)
      if (ev.attempt <= winner) out.solutions.push_back(ev);
  std::sort(out.solutions.begin(), out.solutions.end(),
            [](const SolutionEvent& a, const SolutionEvent& b) {
              return std::tie(a.attempt, a.stage_index) <
                     std::tie(b.attempt, b.stage_index);
            });
  for (auto& ev : out.solutions) ev.attempt += limits.first_attempt;

  if (winner != UINT64_MAX) {
    out.status = MineOutcome::Status::BlockFound;
    out.attempts = winner + 1;
    out.seed = seeds.at(limits.first_attempt + winner);
    out.result =
        pipeline.to_result(pipeline.run(header_bytes, *out.seed), diff);
  } else {
    out.attempts = limits.max_attempts;
  }
  out.hashes = pipeline.tally_per_pass().scaled(out.attempts);
  return out;
}

EfficiencyReport efficiency_report(const HashTally& counters) {
  EfficiencyReport r;
  r.breakdown = counters;
  r.useful_hashes = counters.user;
  r.total_hashes = counters.total();
  r.ratio = r.total_hashes == 0
                ? 0.0
                : static_cast<double>(r.useful_hashes) / r.total_hashes;
  return r;
}

}  // namespace rems
