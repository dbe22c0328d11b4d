#include "rems/cli.hpp"

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "rems/codec.hpp"
#include "rems/node.hpp"
#include "rems/simulator.hpp"

namespace rems {

namespace fs = std::filesystem;

namespace {

struct CliError {
  int code;
  Json body;
};

[[noreturn]] void fail(int code, std::string error, std::string cause, Json extra = Json::object()) {
  extra["error"] = std::move(error);
  extra["cause"] = std::move(cause);
  throw CliError{code, std::move(extra)};
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(kExitIo, "IoFailure", "cannot read file", {{"path", path.string()}});
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

void write_file(const fs::path& path, const std::string& data) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out || !(out << data) || !out.flush())
    fail(kExitIo, "IoFailure", "cannot write file", {{"path", path.string()}});
}

void append_file(const fs::path& path, const std::string& data) {
  std::ofstream out(path, std::ios::binary | std::ios::app);
  if (!out || !(out << data) || !out.flush())
    fail(kExitIo, "IoFailure", "cannot append to file", {{"path", path.string()}});
}

SimConfig config_from(const fs::path& path, std::optional<std::uint64_t> seed) {
  std::string text = read_file(path);
  try {
    Json j = Json::parse(text);
    if (seed) j["seed"] = *seed;
    return parse_config(j);
  } catch (const Json::parse_error& e) {
    fail(kExitConfigInvalid, "ConfigInvalid", std::string("malformed JSON: ") + e.what(),
         {{"path", path.string()}});
  } catch (const ConfigError& e) {
    fail(kExitConfigInvalid, "ConfigInvalid", e.what(), {{"path", path.string()}});
  }
}

int cmd_sim(const std::string& experiment, const fs::path& config_path, const fs::path& out_dir,
            std::optional<std::uint64_t> seed, bool force, std::ostream& out) {
  SimConfig config = config_from(config_path, seed);
  const std::vector<std::string> names{"report.json", "events.jsonl", "summary.csv", "config.json"};
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) fail(kExitIo, "IoFailure", ec.message(), {{"path", out_dir.string()}});
  if (!force)
    for (const auto& n : names)
      if (fs::exists(out_dir / n))
        fail(kExitIo, "IoFailure", "output exists; pass --force to overwrite",
             {{"path", (out_dir / n).string()}});

  SimOutput result;
  try {
    result = run_experiment(experiment, config);
  } catch (const ConfigError& e) {
    fail(kExitConfigInvalid, "ConfigInvalid", e.what(), {{"path", config_path.string()}});
  } catch (const ModeMismatch& e) {
    fail(kExitConfigInvalid, "ConfigInvalid", std::string("ModeMismatch: ") + e.what(),
         {{"path", config_path.string()}});
  }
  write_file(out_dir / "report.json", report_json(result.report).dump(2) + "\n");
  write_file(out_dir / "events.jsonl", events_jsonl(result.events));
  write_file(out_dir / "summary.csv", summary_csv(result.report));
  Json resolved = Json::parse(read_file(config_path));
  resolved["seed"] = config.seed;
  write_file(out_dir / "config.json", resolved.dump(2) + "\n");
  out << Json{{"experiment", experiment}, {"out", out_dir.string()}, {"details", result.report.details}}
             .dump()
      << "\n";
  return kExitOk;
}

fs::path pending_path(const fs::path& file) {
  fs::path p = file;
  p += ".pending.jsonl";
  return p;
}

Chain load_chain(const fs::path& file) {
  if (!fs::exists(file)) fail(kExitIo, "IoFailure", "chain file not found", {{"path", file.string()}});
  std::string text = read_file(file);
  std::istringstream in(text);
  Replay r = replay_chain(in);
  if (!r.ok()) {
    Json extra{{"path", file.string()}, {"line", r.error->line}};
    if (r.error->height) extra["height"] = *r.error->height;
    fail(kExitChainInvalid, "ChainInvalid", r.error->cause, extra);
  }
  return std::move(*r.chain);
}

std::vector<Transaction> load_pending(const fs::path& file) {
  std::vector<Transaction> txs;
  fs::path p = pending_path(file);
  if (!fs::exists(p)) return txs;
  std::istringstream in(read_file(p));
  std::size_t line = 0;
  for (std::string text; std::getline(in, text);) {
    ++line;
    if (text.empty()) continue;
    try {
      txs.push_back(Json::parse(text).get<Transaction>());
    } catch (const std::exception& e) {
      fail(kExitChainInvalid, "ChainInvalid", std::string("bad pending transaction: ") + e.what(),
           {{"path", p.string()}, {"line", line}});
    }
  }
  return txs;
}

void save_pending(const fs::path& file, const std::vector<Transaction>& txs) {
  std::string data;
  for (const auto& tx : txs) data += Json(tx).dump() + "\n";
  write_file(pending_path(file), data);
}

LocalNode make_node(const fs::path& file, const std::string& miner, std::uint64_t seed) {
  LocalNode node(load_chain(file), account_key(miner), seed);
  for (auto& tx : load_pending(file)) node.submit(std::move(tx));
  return node;
}

// Mines until `done` holds or `max_blocks` were added; appends the new blocks.
std::uint64_t mine_until(LocalNode& node, const fs::path& file, std::uint64_t max_blocks,
                         const std::function<bool()>& done, bool verbose, std::ostream& log) {
  std::string lines;
  std::uint64_t mined = 0;
  while (mined < max_blocks && !done()) {
    auto m = node.mine_block();
    lines += block_line(m.block) + "\n";
    ++mined;
    if (verbose)
      log << "height " << m.block.header.height << " after " << m.attempts << " passes\n";
  }
  append_file(file, lines);
  save_pending(file, node.pending());
  return mined;
}

Json problem_summary(const Problem& p, std::uint64_t escrow) {
  return Json{{"id", p.id}, {"reps", p.reps}, {"window", p.window}, {"prize", p.prize},
              {"escrow", escrow}, {"uploader", p.uploader}};
}

struct ChainArgs {
  std::string action;
  std::uint64_t count = 1;
  fs::path file;
  fs::path config;
  fs::path problem_file;
  std::string problem_id;
  std::string miner = "miner";
  std::uint64_t seed = 0;
  std::uint64_t max_blocks = 10000;
  bool force = false;
  bool verbose = false;
};

int cmd_chain(const ChainArgs& a, std::ostream& out, std::ostream& err) {
  if (a.action == "init") {
    if (fs::exists(a.file) && !a.force)
      fail(kExitIo, "IoFailure", "chain file exists; pass --force to overwrite",
           {{"path", a.file.string()}});
    ChainParams params;
    if (!a.config.empty()) params = config_from(a.config, std::nullopt).chain;
    Chain chain(params);
    std::ostringstream s;
    write_chain(chain, s);
    write_file(a.file, s.str());
    write_file(pending_path(a.file), "");
    out << Json{{"genesis", chain.genesis_hash()}, {"file", a.file.string()}}.dump() << "\n";
    return kExitOk;
  }
  if (a.action == "validate") {
    Chain chain = load_chain(a.file);
    bool conserves = true;
    for (const auto& h : chain.arrival_order()) conserves = conserves && chain.state(h).conserves();
    out << Json{{"status", "ok"},
                {"height", chain.height()},
                {"blocks", chain.arrival_order().size()},
                {"tip", chain.tip()},
                {"state_hash", chain.tip_state().state_hash()},
                {"conserves", conserves}}
               .dump()
        << "\n";
    return kExitOk;
  }
  if (a.action == "show") {
    Chain chain = load_chain(a.file);
    const ChainState& s = chain.tip_state();
    out << "height      " << chain.height() << "\n";
    out << "tip         " << chain.tip().hex() << "\n";
    out << "blocks      " << chain.arrival_order().size() << " (forks "
        << chain.arrival_order().size() - chain.main_chain().size() << ")\n";
    out << "supply      " << s.circulating() << " (genesis " << s.genesis_supply << ", minted "
        << s.minted << ")\n";
    out << "balances\n";
    for (const auto& [k, v] : s.balances) out << "  " << k.hex() << "  " << v << "\n";
    out << "active problems\n";
    for (const auto& [id, p] : active_set_at(s))
      out << "  " << id.hex() << "  reps " << p.reps << "  window [" << p.window.from << ", "
          << p.window.to << ")  prize " << p.prize << "\n";
    out << "solved      " << s.solved.size() << "\n";
    out << "pending     " << load_pending(a.file).size() << "\n";
    return kExitOk;
  }
  if (a.action == "upload") {
    Chain chain = load_chain(a.file);
    Json j;
    try {
      j = Json::parse(read_file(a.problem_file));
    } catch (const Json::parse_error& e) {
      fail(kExitConfigInvalid, "ConfigInvalid", e.what(), {{"path", a.problem_file.string()}});
    }
    Problem p;
    try {
      BitWindow w = j.at("window").get<BitWindow>();
      BitString target;
      if (j.contains("target")) {
        target = j["target"].get<BitString>();
      } else {
        Bytes material;
        append_u64(material, a.seed);
        auto enc = j.dump();
        material.insert(material.end(), enc.begin(), enc.end());
        target = trim_bits(sha256(material), w);
      }
      p = Problem::make(j.value("reps", std::uint64_t{1}), w, target,
                        j.at("prize").get<std::uint64_t>(),
                        account_key(j.at("uploader").get<std::string>()));
    } catch (const std::exception& e) {
      fail(kExitConfigInvalid, "ConfigInvalid", e.what(), {{"path", a.problem_file.string()}});
    }
    if (auto e = validate_problem(p, chain.params().min_problem_prize))
      fail(kExitConfigInvalid, "ConfigInvalid", std::string(to_string(*e)),
           {{"path", a.problem_file.string()}});
    if (chain.tip_state().balance(p.uploader) < p.prize)
      fail(kExitConfigInvalid, "ConfigInvalid", "uploader balance below prize",
           {{"path", a.problem_file.string()}});
    if (chain.tip_state().uploaded.contains(p.id))
      fail(kExitConfigInvalid, "ConfigInvalid", "problem already uploaded",
           {{"path", a.problem_file.string()}});
    auto pending = load_pending(a.file);
    pending.push_back(ProblemUpload{p});
    save_pending(a.file, pending);
    out << Json{{"problem", p.id}, {"pending", pending.size()}}.dump() << "\n";
    return kExitOk;
  }
  if (a.action == "mine") {
    LocalNode node = make_node(a.file, a.miner, a.seed);
    std::uint64_t before = node.total_attempts();
    mine_until(node, a.file, a.count, [] { return false; }, a.verbose, err);
    out << Json{{"height", node.chain().height()},
                {"tip", node.chain().tip()},
                {"passes", node.total_attempts() - before},
                {"pending", node.pending().size()}}
               .dump()
        << "\n";
    return kExitOk;
  }
  if (a.action == "claim") {
    ProblemId id;
    try {
      id = ProblemId::from_hex(a.problem_id);
    } catch (const std::exception&) {
      fail(kExitUsage, "UsageError", "--id must be a 64-digit hex id");
    }
    LocalNode node = make_node(a.file, a.miner, a.seed);
    const auto& state = node.chain().tip_state();
    bool queued = false;
    for (const auto& tx : node.pending())
      if (const auto* u = std::get_if<ProblemUpload>(&tx)) queued = queued || u->problem.id == id;
    if (!state.uploaded.contains(id) && !queued)
      fail(kExitChainInvalid, "ChainInvalid", "unknown problem", {{"problem", a.problem_id}});
    if (state.solved.contains(id))
      fail(kExitChainInvalid, "ChainInvalid", "problem already solved", {{"problem", a.problem_id}});
    auto claimed = [&] { return node.chain().tip_state().solved.contains(id); };
    const std::uint64_t before = node.total_attempts();
    std::uint64_t blocks = mine_until(node, a.file, a.max_blocks, claimed, a.verbose, err);
    if (!claimed())
      fail(kExitNotClaimed, "NotClaimed", "problem not claimed within --max-blocks",
           {{"problem", a.problem_id}, {"blocks", blocks}});
    const auto& s = node.chain().tip_state();
    out << Json{{"problem", id},
                {"claimed_at", node.chain().height()},
                {"blocks", blocks},
                {"passes", node.total_attempts() - before},
                {"miner_balance", s.balance(node.miner())}}
               .dump()
        << "\n";
    return kExitOk;
  }
  fail(kExitUsage, "UnknownAction", "unknown chain action '" + a.action + "'");
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Repeated-eval mining: simulator and local chain tool", "rems"};
  app.require_subcommand(1);

  auto* sim = app.add_subcommand("sim", "Run an experiment from a config file");
  std::string experiment;
  fs::path config_path, out_dir;
  std::optional<std::uint64_t> seed;
  bool force = false;
  sim->add_option("experiment", experiment, "fairness | doublespend | naive-attack | fee-market")
      ->required();
  sim->add_option("--config", config_path, "Experiment config (JSON)")->required();
  sim->add_option("--out", out_dir, "Output directory")->required();
  sim->add_option("--seed", seed, "Override the config seed");
  sim->add_flag("--force", force, "Overwrite existing outputs");

  auto* chain = app.add_subcommand("chain", "Build, extend and check a local chain file");
  ChainArgs ca;
  chain->add_option("action", ca.action, "init | mine | upload | claim | validate | show")->required();
  chain->add_option("count", ca.count, "Blocks to mine");
  chain->add_option("--file", ca.file, "Chain file (JSONL)")->required();
  chain->add_option("--config", ca.config, "Chain parameters and accounts for init");
  chain->add_option("--problem", ca.problem_file, "Problem file for upload");
  chain->add_option("--id", ca.problem_id, "Problem id for claim");
  chain->add_option("--miner", ca.miner, "Miner account name");
  chain->add_option("--seed", ca.seed, "Seed for mining and derived targets");
  chain->add_option("--max-blocks", ca.max_blocks, "Block limit for claim");
  chain->add_flag("--force", ca.force, "Overwrite on init");
  chain->add_flag("-v,--verbose", ca.verbose, "Progress on stderr");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << Json{{"error", "UsageError"}, {"cause", e.what()}}.dump() << "\n";
    return kExitUsage;
  }

  try {
    if (sim->parsed()) {
      if (experiment != "fairness" && experiment != "doublespend" &&
          experiment != "naive-attack" && experiment != "fee-market")
        fail(kExitUsage, "UnknownExperiment", "unknown experiment '" + experiment + "'");
      return cmd_sim(experiment, config_path, out_dir, seed, force, out);
    }
    return cmd_chain(ca, out, err);
  } catch (const CliError& e) {
    err << e.body.dump() << "\n";
    return e.code;
  } catch (const std::exception& e) {
    err << Json{{"error", "Internal"}, {"cause", e.what()}}.dump() << "\n";
    return kExitUsage;
  }
}

}  // namespace rems
