#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>

#include "json.hpp"
#include "rems/ledger.hpp"

namespace rems {

using Json = nlohmann::json;

template <typename Tag>
void to_json(Json& j, const Bytes32<Tag>& v) {
  j = v.hex();
}
template <typename Tag>
void from_json(const Json& j, Bytes32<Tag>& v) {
  v = Bytes32<Tag>::from_hex(j.get<std::string>());
}

void to_json(Json& j, const BitWindow& w);
void from_json(const Json& j, BitWindow& w);
void to_json(Json& j, const BitString& b);
void from_json(const Json& j, BitString& b);
void to_json(Json& j, const Problem& p);
void from_json(const Json& j, Problem& p);
void to_json(Json& j, const HeaderDraft& h);
void from_json(const Json& j, HeaderDraft& h);
void to_json(Json& j, const EvalResult& r);
void from_json(const Json& j, EvalResult& r);
void to_json(Json& j, const Transaction& tx);
void from_json(const Json& j, Transaction& tx);
void to_json(Json& j, const Block& b);
void from_json(const Json& j, Block& b);
void to_json(Json& j, const ChainParams& p);
void from_json(const Json& j, ChainParams& p);

/// Hex threshold string, or an integer e meaning threshold 2^e.
Difficulty difficulty_from_json(const Json& j);

// Chain files: JSON lines, genesis parameters first, then every stored block
// in receive order.
std::string genesis_line(const ChainParams& params);
std::string block_line(const Block& block);
void write_chain(const Chain& chain, std::ostream& out);
void save_chain_file(const Chain& chain, const std::filesystem::path& path);

struct ReplayError {
  /// 1-based line number.
  std::size_t line = 0;
  std::optional<std::uint64_t> height;
  std::string cause;

  std::string describe() const;
};

struct Replay {
  /// Every block before the first bad line; empty if the genesis line is bad.
  std::optional<Chain> chain;
  std::optional<ReplayError> error;

  bool ok() const { return chain.has_value() && !error; }
};

Replay replay_chain(std::istream& in);
/// Throws std::runtime_error if the file cannot be opened.
Replay load_chain_file(const std::filesystem::path& path);

}  // namespace rems
