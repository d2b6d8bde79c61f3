// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <fstream>

#include <gtest/gtest.h>

#include <badgnn/checkpoint.hpp>
#include <badgnn/error.hpp>
#include <badgnn/random.hpp>

#include "scratch.hpp"

using namespace badgnn;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path &p) {
  std::ifstream f(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(f), {}};
}

void spit(const fs::path &p, const std::string &s) {
  std::ofstream f(p, std::ios::binary | std::ios::trunc);
  f << s;
}

Archive sample() {
  Archive a;
  a.matrices["w"] = Matrix{{1.5, -2.0, 3.25}, {0.0, 1e-300, -0.0}};
  a.matrices["empty"] = Matrix(0, 4);
  a.texts["config"] = "seed = 3\nname = x # y\n";
  a.texts["blank"] = "";
  return a;
}

} // namespace

TEST(Archive, RoundTripIsExact) {
  const auto dir = scratch::fresh_dir("ck_roundtrip");
  const Archive a = sample();
  write_archive(a, dir / "a.bin");
  const Archive b = read_archive(dir / "a.bin");
  EXPECT_EQ(b.texts, a.texts);
  ASSERT_EQ(b.matrices.size(), a.matrices.size());
  for (const auto &[name, m] : a.matrices) {
    ASSERT_TRUE(b.matrices.count(name)) << name;
    EXPECT_EQ(b.matrices.at(name), m) << name;
    EXPECT_EQ(b.matrices.at(name).rows(), m.rows());
    EXPECT_EQ(b.matrices.at(name).cols(), m.cols());
  }
  // Writing the same archive twice gives the same bytes.
  write_archive(b, dir / "b.bin");
  EXPECT_EQ(slurp(dir / "a.bin"), slurp(dir / "b.bin"));
}

TEST(Archive, HeaderLayout) {
  const auto dir = scratch::fresh_dir("ck_header");
  write_archive(sample(), dir / "a.bin");
  const std::string s = slurp(dir / "a.bin");
  ASSERT_GE(s.size(), 16u);
  EXPECT_EQ(s.substr(0, 8), "BADGNNCK");
  EXPECT_EQ(static_cast<unsigned char>(s[8]), kCheckpointVersion);
  EXPECT_EQ(static_cast<unsigned char>(s[12]), 4u);
}

TEST(Archive, RejectsCorruptFiles) {
  const auto dir = scratch::fresh_dir("ck_corrupt");
  EXPECT_THROW(read_archive(dir / "missing.bin"), IoError);
  write_archive(sample(), dir / "a.bin");
  const std::string good = slurp(dir / "a.bin");

  std::string bad = good;
  bad[0] = 'X';
  spit(dir / "magic.bin", bad);
  EXPECT_THROW(read_archive(dir / "magic.bin"), SchemaError);

  bad = good;
  bad[8] = 9;
  spit(dir / "version.bin", bad);
  EXPECT_THROW(read_archive(dir / "version.bin"), SchemaError);

  for (std::size_t cut : {std::size_t{0}, std::size_t{5}, std::size_t{14}, good.size() / 2,
                          good.size() - 1}) {
    spit(dir / "cut.bin", good.substr(0, cut));
    EXPECT_THROW(read_archive(dir / "cut.bin"), SchemaError) << cut;
  }
  spit(dir / "trail.bin", good + "z");
  EXPECT_THROW(read_archive(dir / "trail.bin"), SchemaError);
}

TEST(Archive, ParamsAndMemoryRoundTrip) {
  const auto dir = scratch::fresh_dir("ck_params");
  TrainConfig cfg;
  cfg.d_mem = 5;
  cfg.d_time = 3;
  cfg.d_k = 4;
  cfg.heads = 2;
  const ModelParams p = init_params(cfg, 6);
  Rng rng(3);
  NodeMemory mem(7, 5);
  mem.restore(normal_matrix(7, 5, 1.0, rng), {0, 1, 2, 3, 4, 5, 6.5});

  Archive a;
  store_params(a, p);
  store_memory(a, mem);
  write_archive(a, dir / "m.bin");
  const Archive b = read_archive(dir / "m.bin");

  TrainConfig zero = cfg;
  zero.zero_init = true;
  ModelParams q = init_params(zero, 6);
  load_params(b, q);
  std::vector<Matrix> lhs, rhs;
  ModelParams::visit(p, [&](const std::string &, const Matrix &m) { lhs.push_back(m); });
  ModelParams::visit(q, [&](const std::string &, const Matrix &m) { rhs.push_back(m); });
  EXPECT_EQ(lhs, rhs);

  NodeMemory back(7, 5);
  load_memory(b, back);
  EXPECT_EQ(back.states(), mem.states());
  EXPECT_TRUE(std::ranges::equal(back.last_updates(), mem.last_updates()));
}

TEST(Archive, LoadRejectsMissingOrMisshapenRecords) {
  TrainConfig cfg;
  cfg.d_mem = 4;
  cfg.d_time = 2;
  cfg.d_k = 2;
  cfg.heads = 1;
  ModelParams p = init_params(cfg, 3);
  Archive a;
  store_params(a, p);
  ModelParams wider = init_params(cfg, 4);
  EXPECT_THROW(load_params(a, wider), SchemaError);
  a.matrices.erase(a.matrices.begin());
  EXPECT_THROW(load_params(a, p), SchemaError);
  NodeMemory m(2, 4);
  EXPECT_THROW(load_memory(a, m), SchemaError);
}
