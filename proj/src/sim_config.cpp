#include <fstream>
#include <set>

#include "rems/random.hpp"
#include "rems/simulator.hpp"

namespace rems {

std::string_view to_string(SimMode m) {
  return m == SimMode::Decoupled ? "decoupled" : "naive-coupled";
}

std::string_view to_string(Strategy s) {
  switch (s) {
    case Strategy::Honest: return "honest";
    case Strategy::PrivateAttacker: return "private_attacker";
    case Strategy::NaiveAttacker: return "naive_attacker";
  }
  return "unknown";
}

PublicKey account_key(std::string_view name) {
  return PublicKey::from_bytes(sha256("account/" + std::string(name)).view());
}

namespace {

void check_keys(const Json& j, std::string_view where, std::set<std::string> allowed) {
  if (!j.is_object()) throw ConfigError(std::string(where) + ": expected an object");
  for (const auto& [k, v] : j.items())
    if (!allowed.contains(k)) throw ConfigError(std::string(where) + ": unknown field '" + k + "'");
}

template <typename T>
T field(const Json& j, const char* name, T fallback) {
  if (!j.contains(name)) return fallback;
  try {
    return j[name].get<T>();
  } catch (const Json::exception&) {
    throw ConfigError(std::string("field '") + name + "' has the wrong type");
  }
}

Strategy parse_strategy(const std::string& s) {
  if (s == "honest") return Strategy::Honest;
  if (s == "private_attacker") return Strategy::PrivateAttacker;
  if (s == "naive_attacker") return Strategy::NaiveAttacker;
  throw ConfigError("unknown strategy '" + s + "'");
}

}  // namespace

SimConfig parse_config(const Json& j) {
  check_keys(j, "config", {"seed", "rounds", "target_blocks", "mode", "chain", "accounts",
                           "miners", "problems", "double_spend", "naive_attack",
                           "fee_market", "description"});
  SimConfig c;
  c.seed = field<std::uint64_t>(j, "seed", 0);
  c.rounds = field<std::uint64_t>(j, "rounds", c.rounds);
  c.target_blocks = field<std::uint64_t>(j, "target_blocks", 0);
  auto mode = field<std::string>(j, "mode", "decoupled");
  if (mode == "decoupled")
    c.mode = SimMode::Decoupled;
  else if (mode == "naive-coupled")
    c.mode = SimMode::NaiveCoupled;
  else
    throw ConfigError("unknown mode '" + mode + "'");

  if (j.contains("chain")) {
    const Json& ch = j["chain"];
    check_keys(ch, "chain", {"difficulty", "score_budget", "block_reward", "freshness_window",
                             "min_problem_prize"});
    try {
      c.chain = ch.get<ChainParams>();
    } catch (const std::exception& e) {
      throw ConfigError(std::string("chain: ") + e.what());
    }
  }

  std::map<std::string, PublicKey> names;
  auto add_account = [&](const std::string& name, std::uint64_t balance) {
    if (name.empty()) throw ConfigError("account names must be nonempty");
    if (!names.emplace(name, account_key(name)).second)
      throw ConfigError("duplicate account '" + name + "'");
    if (balance > 0) c.chain.allocations[account_key(name)] += balance;
  };
  if (j.contains("accounts")) {
    if (!j["accounts"].is_object()) throw ConfigError("accounts: expected an object");
    for (const auto& [name, v] : j["accounts"].items()) {
      if (!v.is_number_unsigned()) throw ConfigError("accounts: balance of '" + name + "'");
      add_account(name, v.get<std::uint64_t>());
    }
  }

  if (j.contains("miners")) {
    if (!j["miners"].is_array()) throw ConfigError("miners: expected an array");
    for (const auto& m : j["miners"]) {
      check_keys(m, "miner", {"name", "eval_rate", "strategy", "policy", "balance"});
      MinerSpec spec;
      spec.name = field<std::string>(m, "name", "");
      spec.eval_rate = field<std::uint64_t>(m, "eval_rate", 0);
      if (spec.eval_rate == 0) throw ConfigError("miner '" + spec.name + "': eval_rate must be positive");
      spec.strategy = parse_strategy(field<std::string>(m, "strategy", "honest"));
      auto policy = field<std::string>(m, "policy", "fee_priority");
      if (policy == "fee_priority")
        spec.policy = SelectionPolicy::fee_priority();
      else if (policy == "uniform")
        spec.policy = SelectionPolicy::uniform_random(mix_seed(c.seed, c.miners.size()));
      else
        throw ConfigError("unknown policy '" + policy + "'");
      add_account(spec.name, field<std::uint64_t>(m, "balance", 0));
      spec.key = account_key(spec.name);
      c.miners.push_back(std::move(spec));
    }
  }

  if (j.contains("problems")) {
    if (!j["problems"].is_array()) throw ConfigError("problems: expected an array");
    std::uint64_t index = 0;
    for (const auto& p : j["problems"]) {
      check_keys(p, "problem", {"round", "uploader", "reps", "window", "target", "prize"});
      ScheduledProblem sp;
      sp.round = field<std::uint64_t>(p, "round", 0);
      auto uploader = field<std::string>(p, "uploader", "");
      auto it = names.find(uploader);
      if (it == names.end()) throw ConfigError("problem uploader '" + uploader + "' is not an account");
      BitWindow w;
      try {
        w = p.at("window").get<BitWindow>();
      } catch (const std::exception&) {
        throw ConfigError("problem " + std::to_string(index) + ": window must be [from, to]");
      }
      if (!w.valid() || w.width() == 0)
        throw ConfigError("problem " + std::to_string(index) + ": invalid window");
      BitString target;
      if (p.contains("target")) {
        try {
          target = p["target"].get<BitString>();
        } catch (const std::exception&) {
          throw ConfigError("problem " + std::to_string(index) + ": target must be a bit string");
        }
      } else {
        Bytes material;
        append_u64(material, c.seed);
        append_u64(material, index);
        target = trim_bits(sha256(material), w);
      }
      sp.problem = Problem::make(field<std::uint64_t>(p, "reps", 1), w, target,
                                 field<std::uint64_t>(p, "prize", 0), it->second);
      if (auto err = validate_problem(sp.problem, c.chain.min_problem_prize))
        throw ConfigError("problem " + std::to_string(index) + ": " + std::string(to_string(*err)));
      c.problems.push_back(std::move(sp));
      ++index;
    }
  }

  if (j.contains("double_spend")) {
    const Json& d = j["double_spend"];
    check_keys(d, "double_spend", {"q", "z", "trials", "cap_factor", "workers"});
    if (d.contains("q")) c.double_spend.q = field<double>(d, "q", 0.0);
    c.double_spend.z = field<std::uint64_t>(d, "z", c.double_spend.z);
    c.double_spend.trials = field<std::uint64_t>(d, "trials", c.double_spend.trials);
    c.double_spend.cap_factor = field<std::uint64_t>(d, "cap_factor", c.double_spend.cap_factor);
    c.double_spend.workers = field<unsigned>(d, "workers", 1);
    if (c.double_spend.trials == 0) throw ConfigError("double_spend: trials must be positive");
    if (c.double_spend.workers == 0) throw ConfigError("double_spend: workers must be positive");
  }
  if (j.contains("naive_attack")) {
    const Json& n = j["naive_attack"];
    check_keys(n, "naive_attack", {"self_reps", "self_width", "self_prize"});
    c.naive_attack.self_reps = field<std::uint64_t>(n, "self_reps", 1);
    c.naive_attack.self_width = field<std::uint16_t>(n, "self_width", 2);
    c.naive_attack.self_prize = field<std::uint64_t>(n, "self_prize", 1);
    if (c.naive_attack.self_width == 0 || c.naive_attack.self_width > 256)
      throw ConfigError("naive_attack: self_width must be in [1, 256]");
    if (c.naive_attack.self_reps == 0) throw ConfigError("naive_attack: self_reps must be positive");
  }
  if (j.contains("fee_market")) {
    const Json& f = j["fee_market"];
    check_keys(f, "fee_market", {"runs", "max_rounds"});
    c.fee_market.runs = field<std::uint64_t>(f, "runs", c.fee_market.runs);
    c.fee_market.max_rounds = field<std::uint64_t>(f, "max_rounds", c.fee_market.max_rounds);
    if (c.fee_market.runs == 0) throw ConfigError("fee_market: runs must be positive");
  }
  return c;
}

SimConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read " + path.string());
  Json j;
  try {
    j = Json::parse(in);
  } catch (const Json::parse_error& e) {
    throw ConfigError(std::string("malformed JSON: ") + e.what());
  }
  return parse_config(j);
}

}  // namespace rems
