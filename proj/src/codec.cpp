#include "rems/codec.hpp"

#include <fstream>
#include <istream>
#include <ostream>
#include <stdexcept>

namespace rems {

void to_json(Json& j, const BitWindow& w) { j = Json::array({w.from, w.to}); }

void from_json(const Json& j, BitWindow& w) {
  if (!j.is_array() || j.size() != 2) throw std::invalid_argument("window must be [from, to]");
  w.from = j[0].get<std::uint16_t>();
  w.to = j[1].get<std::uint16_t>();
}

void to_json(Json& j, const BitString& b) { j = b.to_string(); }

void from_json(const Json& j, BitString& b) {
  b = BitString::from_string(j.get<std::string>());
}

void to_json(Json& j, const Problem& p) {
  j = Json{{"id", p.id},
           {"reps", p.reps},
           {"window", p.window},
           {"target", p.target},
           {"prize", p.prize},
           {"uploader", p.uploader},
           {"origin", p.is_filler() ? "filler" : "user"}};
}

void from_json(const Json& j, Problem& p) {
  p.reps = j.at("reps").get<std::uint64_t>();
  p.window = j.at("window").get<BitWindow>();
  p.target = j.at("target").get<BitString>();
  p.prize = j.at("prize").get<std::uint64_t>();
  p.uploader = j.at("uploader").get<PublicKey>();
  p.origin = j.value("origin", std::string("user")) == "filler" ? ProblemOrigin::Filler
                                                               : ProblemOrigin::User;
  p.id = j.contains("id") ? j["id"].get<ProblemId>() : p.compute_id();
}

void to_json(Json& j, const HeaderDraft& h) {
  j = Json{{"prev", h.prev},
           {"height", h.height},
           {"miner", h.miner},
           {"tx_root", h.tx_root},
           {"s_root", h.s_root}};
}

void from_json(const Json& j, HeaderDraft& h) {
  h.prev = j.at("prev").get<Digest>();
  h.height = j.at("height").get<std::uint64_t>();
  h.miner = j.at("miner").get<PublicKey>();
  h.tx_root = j.at("tx_root").get<Digest>();
  h.s_root = j.at("s_root").get<Digest>();
}

void to_json(Json& j, const EvalResult& r) {
  Json solved = Json::object();
  for (const auto& [id, hit] : r.solved) solved[id.hex()] = hit;
  j = Json{{"block_found", r.block_found},
           {"solved", solved},
           {"proof", r.proof},
           {"s0", r.s0},
           {"hash_count", r.hash_count}};
}

void from_json(const Json& j, EvalResult& r) {
  r.block_found = j.at("block_found").get<bool>();
  r.solved.clear();
  for (const auto& [k, v] : j.at("solved").items())
    r.solved.emplace(Digest::from_hex(k), v.get<bool>());
  r.proof = j.at("proof").get<Digest>();
  r.s0 = j.at("s0").get<Digest>();
  r.hash_count = j.at("hash_count").get<std::uint64_t>();
}

void to_json(Json& j, const Transaction& tx) {
  if (const auto* t = std::get_if<Transfer>(&tx)) {
    j = Json{{"type", "transfer"},
             {"from", t->from},
             {"to", t->to},
             {"amount", t->amount},
             {"fee", t->fee}};
  } else if (const auto* u = std::get_if<ProblemUpload>(&tx)) {
    j = Json{{"type", "upload"}, {"problem", u->problem}};
  } else {
    const auto& c = std::get<SolutionClaim>(tx);
    j = Json{{"type", "claim"},
             {"problem", c.problem},
             {"snapshot", c.snapshot},
             {"seed", c.seed},
             {"subset", c.subset},
             {"stage_index", c.stage_index},
             {"claimant", c.claimant},
             {"fee", c.fee}};
  }
}

void from_json(const Json& j, Transaction& tx) {
  const auto type = j.at("type").get<std::string>();
  if (type == "transfer") {
    tx = Transfer{j.at("from").get<PublicKey>(), j.at("to").get<PublicKey>(),
                  j.at("amount").get<std::uint64_t>(), j.at("fee").get<std::uint64_t>()};
  } else if (type == "upload") {
    tx = ProblemUpload{j.at("problem").get<Problem>()};
  } else if (type == "claim") {
    SolutionClaim c;
    c.problem = j.at("problem").get<ProblemId>();
    c.snapshot = j.at("snapshot").get<HeaderDraft>();
    c.seed = j.at("seed").get<Seed>();
    c.subset = j.at("subset").get<std::vector<ProblemId>>();
    c.stage_index = j.at("stage_index").get<std::uint32_t>();
    c.claimant = j.at("claimant").get<PublicKey>();
    c.fee = j.at("fee").get<std::uint64_t>();
    tx = std::move(c);
  } else {
    throw std::invalid_argument("unknown transaction type: " + type);
  }
}

void to_json(Json& j, const Block& b) {
  j = Json{{"header", b.header},
           {"seed", b.seed},
           {"subset", b.subset},
           {"txs", b.txs},
           {"result", b.result}};
}

void from_json(const Json& j, Block& b) {
  b.header = j.at("header").get<HeaderDraft>();
  b.seed = j.at("seed").get<Seed>();
  b.subset = j.at("subset").get<std::vector<ProblemId>>();
  b.txs = j.at("txs").get<std::vector<Transaction>>();
  b.result = j.at("result").get<EvalResult>();
}

Difficulty difficulty_from_json(const Json& j) {
  if (j.is_number_integer()) {
    auto e = j.get<std::int64_t>();
    if (e < 0 || e > 255) throw std::invalid_argument("difficulty exponent out of range");
    return Difficulty::power_of_two(static_cast<unsigned>(e));
  }
  return Difficulty(Digest::from_hex(j.get<std::string>()));
}

void to_json(Json& j, const ChainParams& p) {
  Json alloc = Json::object();
  for (const auto& [k, v] : p.allocations) alloc[k.hex()] = v;
  j = Json{{"difficulty", p.difficulty.threshold()},
           {"score_budget", p.score_budget},
           {"block_reward", p.block_reward},
           {"freshness_window", p.freshness_window},
           {"min_problem_prize", p.min_problem_prize},
           {"allocations", alloc}};
}

void from_json(const Json& j, ChainParams& p) {
  ChainParams d;
  p.difficulty = j.contains("difficulty") ? difficulty_from_json(j["difficulty"]) : d.difficulty;
  p.score_budget = j.value("score_budget", d.score_budget);
  p.block_reward = j.value("block_reward", d.block_reward);
  p.freshness_window = j.value("freshness_window", d.freshness_window);
  p.min_problem_prize = j.value("min_problem_prize", d.min_problem_prize);
  p.allocations.clear();
  if (j.contains("allocations"))
    for (const auto& [k, v] : j["allocations"].items())
      p.allocations[PublicKey::from_hex(k)] = v.get<std::uint64_t>();
  if (p.score_budget == 0) throw std::invalid_argument("score_budget must be positive");
}

std::string genesis_line(const ChainParams& params) {
  return Json{{"genesis", make_genesis(params).hash()}, {"params", params}}.dump();
}

std::string block_line(const Block& block) {
  return Json{{"hash", block.hash()}, {"block", block}}.dump();
}

void write_chain(const Chain& chain, std::ostream& out) {
  out << genesis_line(chain.params()) << '\n';
  for (const auto& h : chain.arrival_order()) {
    if (h == chain.genesis_hash()) continue;
    out << block_line(chain.block(h)) << '\n';
  }
}

void save_chain_file(const Chain& chain, const std::filesystem::path& path) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
    write_chain(chain, out);
    if (!out.flush()) throw std::runtime_error("write failed: " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

std::string ReplayError::describe() const {
  std::string out = "line " + std::to_string(line);
  if (height) out += " (height " + std::to_string(*height) + ")";
  return out + ": " + cause;
}

Replay replay_chain(std::istream& in) {
  Replay r;
  std::string text;
  std::size_t line = 0;
  auto fail = [&](std::optional<std::uint64_t> height, std::string cause) {
    r.error = ReplayError{line, height, std::move(cause)};
    return std::move(r);
  };

  if (!std::getline(in, text)) {
    line = 1;
    return fail(0, "missing genesis line");
  }
  line = 1;
  try {
    Json j = Json::parse(text);
    auto params = j.at("params").get<ChainParams>();
    r.chain.emplace(params);
    if (j.at("genesis").get<Digest>() != r.chain->genesis_hash()) {
      r.chain.reset();
      return fail(0, "genesis hash does not match parameters");
    }
  } catch (const std::exception& e) {
    r.chain.reset();
    return fail(0, std::string("malformed genesis: ") + e.what());
  }

  while (std::getline(in, text)) {
    ++line;
    if (text.empty()) continue;
    std::optional<std::uint64_t> height;
    Block block;
    Digest stated;
    try {
      Json j = Json::parse(text);
      if (j.contains("block") && j["block"].contains("header") &&
          j["block"]["header"].contains("height") &&
          j["block"]["header"]["height"].is_number_unsigned())
        height = j["block"]["header"]["height"].get<std::uint64_t>();
      block = j.at("block").get<Block>();
      stated = j.at("hash").get<Digest>();
    } catch (const std::exception& e) {
      if (!height) height = line - 1;
      return fail(height, std::string("malformed block: ") + e.what());
    }
    if (block.hash() != stated) return fail(height, "block hash mismatch");
    auto verdict = r.chain->add_block(block);
    if (!verdict.ok()) return fail(height, verdict.describe());
  }
  return r;
}

Replay load_chain_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return replay_chain(in);
}

}  // namespace rems
