#include <catch2/catch_amalgamated.hpp>

#include "focus/sec.hpp"
#include "oracles.hpp"

using namespace focus;
using namespace focus::sec;

namespace {

// (S+T) x (S+T) attention for one head, text rows given explicitly.
Matrix head_with_text(std::size_t S, const std::vector<std::vector<float>>& text_rows) {
  const std::size_t T = text_rows.size();
  Matrix m(S + T, S + T);
  for (std::size_t t = 0; t < T; ++t)
    for (std::size_t j = 0; j < S; ++j) m(S + t, j) = text_rows[t][j];
  return m;
}

}  // namespace

TEST_CASE("importance is the column max over heads and text rows") {
  {
    AttentionScores a({head_with_text(3, {{0.2f, 0.5f, 0.3f}})}, 3, 1);
    CHECK(importance_scores(a) == ImportanceVector{0.2f, 0.5f, 0.3f});
  }
  {
    AttentionScores a({head_with_text(2, {{.1f, .4f}, {.3f, .2f}}), head_with_text(2, {{.05f, .6f}, {.2f, .1f}})}, 2,
                      2);
    CHECK(importance_scores(a) == ImportanceVector{0.3f, 0.6f});
  }
  {
    AttentionScores a({head_with_text(3, {{0.f, .4f, .6f}, {0.f, .9f, .1f}})}, 3, 2);
    CHECK(importance_scores(a)[0] == 0.0f);
  }
}

TEST_CASE("importance without text tokens is undefined") {
  AttentionScores a({Matrix(3, 3)}, 3, 0);
  CHECK_THROWS_WITH(importance_scores(a), "no text tokens; importance undefined");
}

TEST_CASE("importance is invariant to head order") {
  oracle::Rng rng(4);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t S = rng.uniform(1, 20), T = rng.uniform(1, 5), H = rng.uniform(1, 6);
    std::vector<Matrix> heads;
    for (std::size_t h = 0; h < H; ++h) heads.push_back(rng.matrix(S + T, S + T));
    std::vector<Matrix> shuffled = heads;
    std::shuffle(shuffled.begin(), shuffled.end(), rng.eng);
    REQUIRE(importance_scores(AttentionScores(heads, S, T)) == importance_scores(AttentionScores(shuffled, S, T)));
  }
}

TEST_CASE("top-k examples") {
  const std::vector<float> s{0.1f, 0.9f, 0.5f, 0.7f};
  CHECK(top_k_select(s, 2) == std::vector<std::size_t>{1, 3});
  const std::vector<float> tie{0.5f, 0.5f, 0.2f};
  CHECK(top_k_select(tie, 1) == std::vector<std::size_t>{0});
  CHECK(top_k_select(s, 4) == std::vector<std::size_t>{0, 1, 2, 3});
  CHECK(top_k_select(s, 0).empty());
  CHECK_THROWS_AS(top_k_select(s, 5), std::invalid_argument);
  const std::vector<float> nan{0.1f, std::nanf("")};
  CHECK_THROWS_AS(top_k_select(nan, 1), std::invalid_argument);
}

TEST_CASE("top-k matches the sort oracle, including heavy ties") {
  oracle::Rng rng(77);
  for (int trial = 0; trial < 500; ++trial) {
    const std::size_t M = rng.uniform(1, 600);
    std::vector<float> s(M);
    const bool ties = rng.coin(0.5);
    for (auto& v : s) v = ties ? static_cast<float>(rng.uniform(0, 5)) : rng.normal();
    const std::size_t k = rng.uniform(0, M);
    REQUIRE(top_k_select(s, k) == oracle::top_k(s, k));
  }
}

TEST_CASE("sorter cycle model") {
  CHECK(sorter_cycles(6272, 2509, 32) == 491764);
  CHECK(sorter_cycles(6272, 0, 32) == 0);
  CHECK(sorter_cycles(32, 1, 32) == 1);
  CHECK(sorter_cycles(33, 1, 32) == 2);
}

TEST_CASE("overlap ratio") {
  CHECK(attention_overlap_ratio(6272, 109, 128, 28, 2509, 32) == Catch::Approx(284.8).epsilon(1e-3));
  CHECK(sorter_hidden(6272, 109, 128, 28, 2509, 32));
  // (M+T)*h*n == k*b exactly: ratio 1, not hidden.
  CHECK(attention_overlap_ratio(64, 0, 4, 8, 64, 32) == 1.0);
  CHECK_FALSE(sorter_hidden(64, 0, 4, 8, 64, 32));
  // Every scheduled k at the default point hides behind attention.
  const FocusConfig cfg = reference_config();
  for (const auto& e : cfg.retention_schedule) {
    const auto k = retained_count(e.retain_fraction, cfg.dims.M());
    CHECK(sorter_hidden(cfg.dims.M(), cfg.dims.T, cfg.dims.head_dim, cfg.dims.heads, k, cfg.tile.b));
  }
}

TEST_CASE("semantic pruning keeps coordinates") {
  Dims d{2, 2, 2, 1, 3, 1, 3};
  oracle::Rng rng(8);
  const TokenGrid g(d, rng.matrix(8, 3), rng.matrix(1, 3));
  CHECK(semantic_prune(g, RetainedSet{{0, 1, 2, 3, 4, 5, 6, 7}}) == g);
  const TokenGrid one = semantic_prune(g, RetainedSet{{0}});
  REQUIRE(one.image_rows() == 1);
  CHECK(one.coords()[0] == Coord{0, 0, 0});
  for (int trial = 0; trial < 30; ++trial) {
    const auto keep = rng.subset(8, rng.uniform(1, 8));
    const TokenGrid p = semantic_prune(g, RetainedSet{keep});
    for (std::size_t i = 0; i < keep.size(); ++i) {
      REQUIRE(std::ranges::equal(p.image().row(i), g.image().row(keep[i])));
      REQUIRE(p.token_index(i) == keep[i]);
    }
    REQUIRE(p.text() == g.text());
  }
  // Pruning a pruned grid selects by token index, not row position.
  const TokenGrid p = semantic_prune(g, RetainedSet{{1, 4, 6}});
  const TokenGrid q = semantic_prune(p, RetainedSet{{4, 6}});
  CHECK(q.token_indices() == std::vector<std::size_t>{4, 6});
  CHECK_THROWS(semantic_prune(p, RetainedSet{{2}}));
}

TEST_CASE("offset codec examples") {
  CHECK(encode_offsets(RetainedSet{{3, 5, 9, 10}}).deltas == std::vector<std::size_t>{3, 2, 4, 1});
  CHECK(encode_offsets(RetainedSet{{0}}).deltas == std::vector<std::size_t>{0});
  CHECK(decode_offsets(OffsetEncoding{{3, 2, 4, 1}}).indices == std::vector<std::size_t>{3, 5, 9, 10});
  CHECK(decode_offsets(OffsetEncoding{{0}}).indices == std::vector<std::size_t>{0});
  RetainedSet all;
  for (std::size_t i = 0; i < 50; ++i) all.indices.push_back(i);
  const auto enc = encode_offsets(all);
  CHECK(enc.deltas[0] == 0);
  CHECK(std::all_of(enc.deltas.begin() + 1, enc.deltas.end(), [](std::size_t d) { return d == 1; }));
  CHECK_THROWS_AS(decode_offsets(OffsetEncoding{{3, 0}}), ValidationError);
}

TEST_CASE("offset codec round trip on random sets") {
  oracle::Rng rng(99);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t M = rng.uniform(1, 2000);
    RetainedSet s{rng.subset(M, rng.uniform(1, M))};
    const auto enc = encode_offsets(s);
    REQUIRE(enc.deltas.size() == s.size());
    REQUIRE(decode_offsets(enc) == s);
  }
}

TEST_CASE("retention schedule lookup") {
  const auto sched = reference_config().retention_schedule;
  CHECK(retention_for_layer(sched, 5) == 0.40);
  CHECK(retention_for_layer(sched, 2) == 1.0);
  CHECK(retention_for_layer(sched, 26) == 0.10);
  CHECK(retention_for_layer(sched, 27) == 0.10);
  CHECK(retention_for_layer({}, 7) == 1.0);
  CHECK(retained_count(0.4, 6272) == 2509);
  CHECK(retained_count(0.5, 7) == 4);
  CHECK(retained_count(1e-9, 10) == 1);
}
