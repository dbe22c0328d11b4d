#include "rems/node.hpp"

#include <gtest/gtest.h>

namespace rems {
namespace {

PublicKey key(std::uint8_t tag) {
  PublicKey k;
  k.bytes.fill(tag);
  return k;
}

ChainParams params() {
  ChainParams p;
  p.difficulty = Difficulty::power_of_two(250);
  p.score_budget = 4;
  p.allocations = {{key(1), 100}};
  return p;
}

TEST(NodeTest, MinesOnTipWithReward) {
  LocalNode node(Chain(params()), key(9), 3);
  for (int i = 0; i < 4; ++i) {
    auto m = node.mine_block();
    EXPECT_GE(m.attempts, 1u);
    EXPECT_EQ(node.chain().tip(), m.block.hash());
  }
  EXPECT_EQ(node.chain().height(), 4u);
  EXPECT_EQ(node.chain().tip_state().balance(key(9)), 200u);
}

TEST(NodeTest, DeterministicForSeed) {
  LocalNode a(Chain(params()), key(9), 11), b(Chain(params()), key(9), 11),
      c(Chain(params()), key(9), 12);
  for (int i = 0; i < 3; ++i) {
    a.mine_block();
    b.mine_block();
    c.mine_block();
  }
  EXPECT_EQ(a.chain().tip(), b.chain().tip());
  EXPECT_EQ(a.chain().tip_state().state_hash(), b.chain().tip_state().state_hash());
  const Block& x = a.chain().block(a.chain().tip());
  EXPECT_EQ(x, b.chain().block(b.chain().tip()));
  EXPECT_NE(x.seed, c.chain().block(c.chain().tip()).seed);
}

TEST(NodeTest, UploadIsSolvedAndPaid) {
  LocalNode node(Chain(params()), key(9), 5);
  Digest d = sha256("node");
  Problem p = Problem::make(1, {0, 6}, trim_bits(d, {0, 6}), 10, key(1));
  node.submit(ProblemUpload{p});
  int blocks = 0;
  while (!node.chain().tip_state().solved.contains(p.id) && blocks < 200) {
    node.mine_block();
    ++blocks;
    EXPECT_TRUE(node.chain().tip_state().conserves());
  }
  const auto& s = node.chain().tip_state();
  ASSERT_TRUE(s.solved.contains(p.id));
  EXPECT_TRUE(node.has_solved(p.id));
  EXPECT_GE(node.exposure(p.id), 1u);
  EXPECT_EQ(s.balance(key(1)), 90u);
  EXPECT_EQ(s.balance(key(9)), 50u * node.chain().height() + 10u);
  EXPECT_FALSE(s.escrow.contains(p.id));
  EXPECT_TRUE(node.pending().empty());
}

TEST(NodeTest, AttemptLimit) {
  ChainParams hard = params();
  hard.difficulty = Difficulty::power_of_two(0);
  LocalNode node(Chain(hard), key(9), 1);
  EXPECT_THROW(node.mine_block(10), std::runtime_error);
  EXPECT_EQ(node.total_attempts(), 10u);
}

}  // namespace
}  // namespace rems
