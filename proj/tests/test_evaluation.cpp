#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "fixtures.hpp"
#include "reltab/csv.hpp"
#include "reltab/error.hpp"
#include "reltab/evaluation.hpp"
#include "reltab/training.hpp"

using namespace reltab;
namespace fs = std::filesystem;

namespace {

// independent full-sort oracle with the same smallest-id tie-break
size_t oracle_rank(const std::vector<double>& scores, size_t true_idx) {
  std::vector<size_t> order(scores.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](size_t a, size_t b) {
    if (scores[a] != scores[b]) return scores[a] > scores[b];
    return a < b;
  });
  for (size_t r = 0; r < order.size(); ++r)
    if (order[r] == true_idx) return r + 1;
  return 0;
}

Dataset tiny_join_dataset(size_t n, uint64_t seed) {
  DatabaseSchema schema = parse_schema(fixtures::toy_join_schema_json());
  Rng rng(seed);
  TableRows rows;
  for (size_t i = 0; i < n; ++i) {
    rows["people"].push_back(fixtures::row(
        "people",
        {"p" + std::to_string(i), "city" + std::to_string(rng.uniform_index(4))}, i));
    rows["visits"].push_back(fixtures::row(
        "visits",
        {"p" + std::to_string(i), "place" + std::to_string(rng.uniform_index(4))}, i));
  }
  return Dataset::from_rows(std::move(schema), std::move(rows));
}

}  // namespace

TEST_CASE("rank_candidates") {
  SUBCASE("unique maximum ranks first") {
    CHECK(rank_candidates({0.1, 0.9, 0.3}, 1).rank == 1);
    CHECK(rank_candidates({0.1, 0.9, 0.3}, 0).rank == 3);
  }
  SUBCASE("all-equal scores break ties by smaller id") {
    std::vector<double> flat(10, 0.5);
    CHECK(rank_candidates(flat, 0).rank == 1);
    CHECK(rank_candidates(flat, 9).rank == 10);
    CHECK(rank_candidates(flat, 4).rank == 5);
  }
  SUBCASE("optimistic/pessimistic flags bracket the default") {
    std::vector<double> flat(6, 1.0);
    CHECK(rank_candidates(flat, 3, 0, TieBreak::Optimistic).rank == 1);
    CHECK(rank_candidates(flat, 3, 0, TieBreak::Pessimistic).rank == 6);
  }
  SUBCASE("matches the full-sort oracle on random scores") {
    Rng rng(1);
    for (int trial = 0; trial < 300; ++trial) {
      size_t n = 2 + rng.uniform_index(40);
      std::vector<double> scores(n);
      for (double& s : scores)
        s = rng.uniform_index(8) * 0.125;  // deliberate ties
      size_t true_idx = rng.uniform_index(n);
      CHECK(rank_candidates(scores, true_idx).rank == oracle_rank(scores, true_idx));
    }
  }
  SUBCASE("invariant under strictly monotone transforms") {
    Rng rng(2);
    for (int trial = 0; trial < 50; ++trial) {
      size_t n = 3 + rng.uniform_index(20);
      std::vector<double> scores(n), mapped(n);
      for (size_t i = 0; i < n; ++i) {
        scores[i] = rng.uniform_real() * 4.0 - 2.0;
        mapped[i] = std::exp(scores[i]) * 3.0 + 1.0;
      }
      size_t t = rng.uniform_index(n);
      CHECK(rank_candidates(scores, t).rank == rank_candidates(mapped, t).rank);
    }
  }
  SUBCASE("true index outside the pool") {
    CHECK_THROWS_AS(rank_candidates({1.0, 2.0}, 2), IndexError);
  }
}

TEST_CASE("compute_metrics closed forms") {
  auto mk = [](std::vector<size_t> ranks, size_t pool) {
    std::vector<RankingResult> rs;
    for (size_t i = 0; i < ranks.size(); ++i)
      rs.push_back({i, 0, ranks[i], pool});
    return rs;
  };
  SUBCASE("ranks 1,2,4") {
    MetricsReport r = compute_metrics(mk({1, 2, 4}, 10), 10);
    CHECK(r.hits_at_k == 1.0);
    CHECK(r.mean_rank == doctest::Approx(7.0 / 3.0).epsilon(1e-15));
    CHECK(r.mrr == doctest::Approx((1.0 + 0.5 + 0.25) / 3.0).epsilon(1e-15));
    CHECK(r.mrr == doctest::Approx(0.5833333333).epsilon(1e-9));
    CHECK(r.consistent());
  }
  SUBCASE("all rank one") {
    MetricsReport r = compute_metrics(mk({1, 1, 1, 1}, 5), 10);
    CHECK(r.hits_at_k == 1.0);
    CHECK(r.mean_rank == 1.0);
    CHECK(r.mrr == 1.0);
  }
  SUBCASE("empty results raise") {
    CHECK_THROWS_AS(compute_metrics({}, 10), EmptyResultsError);
  }
  SUBCASE("the published join-prediction row is internally consistent") {
    MetricsReport paper;
    paper.k = 10;
    paper.hits_at_k = 0.801;
    paper.mean_rank = 284.25;
    paper.mrr = 0.656;
    paper.n_instances = 1;
    CHECK(paper.consistent());
    CHECK(paper.mrr >= 1.0 / paper.mean_rank);
  }
  SUBCASE("inconsistent reports are rejected") {
    MetricsReport bad;
    bad.k = 10;
    bad.hits_at_k = 0.0;
    bad.mean_rank = 100.0;
    bad.mrr = 0.9;  // impossible with no top-10 hits
    bad.n_instances = 1;
    CHECK_FALSE(bad.consistent());
  }
}

TEST_CASE("metrics match a brute-force oracle on random instances") {
  Rng rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    size_t n_inst = 1 + rng.uniform_index(20);
    size_t k = 1 + rng.uniform_index(10);
    std::vector<RankingResult> results;
    std::vector<size_t> ranks;
    for (size_t i = 0; i < n_inst; ++i) {
      size_t pool = 2 + rng.uniform_index(30);
      std::vector<double> scores(pool);
      for (double& s : scores) s = rng.uniform_index(6) * 0.25;
      size_t t = rng.uniform_index(pool);
      results.push_back(rank_candidates(scores, t, i));
      ranks.push_back(oracle_rank(scores, t));
    }
    MetricsReport r = compute_metrics(results, k);
    double hits = 0, mr = 0, mrr = 0;
    for (size_t rank : ranks) {
      if (rank <= k) hits += 1;
      mr += static_cast<double>(rank);
      mrr += 1.0 / static_cast<double>(rank);
    }
    CHECK(r.hits_at_k == hits / n_inst);
    CHECK(r.mean_rank == mr / n_inst);
    CHECK(r.mrr == mrr / n_inst);
    CHECK(r.mrr >= 1.0 / r.mean_rank - 1e-12);
  }
}

TEST_CASE("autocompletion evaluation machinery") {
  Dataset db = tiny_join_dataset(12, 4);
  ModelConfig mc{8, 1, 2, 16, Activation::Gelu, 0.02};
  TableEncoderModel model(db.catalog, db.vocabs, mc, 5);

  TaskSpec task{"visits", "place", db.schema.foreign_keys[0]};
  std::vector<size_t> ids;
  for (size_t i = 0; i < 12; ++i) ids.push_back(i);
  auto instances = build_autocompletion_instances(db, task, ids);
  REQUIRE(!instances.empty());

  SUBCASE("instances are pair sequences with the target masked") {
    for (const auto& inst : instances) {
      const auto& tokens = inst.masked.base.tokens;
      CHECK(tokens.front().column == db.catalog.special_column());
      CHECK(tokens[inst.masked.mask_pos].token == Vocabulary::kMask);
      CHECK(inst.masked.target_column == db.catalog.id_of("visits", "place"));
      CHECK(inst.masked.target_token >= Vocabulary::kNumSpecials);
    }
  }
  SUBCASE("pool equals the target column's entity count and eval never mutates") {
    uint64_t before = model.parameter_hash();
    size_t entities =
        db.vocabs.for_column(db.catalog, db.catalog.id_of("visits", "place"))
            .entity_count();
    MetricsReport r =
        evaluate_autocompletion(model_scorer(model), instances, entities, 2);
    CHECK(r.pool_size == entities);
    CHECK(r.n_instances == instances.size());
    CHECK(r.consistent());
    CHECK(model.parameter_hash() == before);
  }
  SUBCASE("single-table task masks within the row sentence") {
    TaskSpec single{"visits", "place", std::nullopt};
    auto insts = build_autocompletion_instances(db, single, ids);
    REQUIRE(insts.size() == 12);
    for (const auto& inst : insts) CHECK(inst.masked.base.size() == 2);
  }
}

TEST_CASE("join prediction evaluation") {
  Dataset db = tiny_join_dataset(10, 6);
  ModelConfig mc{8, 1, 2, 16, Activation::Gelu, 0.02};
  TableEncoderModel model(db.catalog, db.vocabs, mc, 7);
  std::vector<size_t> pk_ids;
  for (size_t i = 0; i < 10; ++i) pk_ids.push_back(i);

  SUBCASE("zeroed NSP head ranks purely by tie-break") {
    auto& w = model.parameter("nsp_w").value.raw();
    std::fill(w.begin(), w.end(), 0.0);
    MetricsReport r = evaluate_join_prediction(
        model, db, db.schema.foreign_keys[0], pk_ids, 0, 10, 8);
    CHECK(r.n_instances == 10);
    CHECK(r.pool_size == 10);
    // every score ties, so rank = candidate position + 1; mean over a
    // uniform permutation of row order = (n+1)/2
    CHECK(r.mean_rank == doctest::Approx(5.5));
    CHECK(r.consistent());
  }
  SUBCASE("random model produces a valid report with a sampled pool") {
    MetricsReport r = evaluate_join_prediction(
        model, db, db.schema.foreign_keys[0], pk_ids, 5, 3, 9);
    CHECK(r.pool_size == 5);
    CHECK(r.consistent());
  }
  SUBCASE("metrics json carries the pinned keys") {
    MetricsReport r = evaluate_join_prediction(
        model, db, db.schema.foreign_keys[0], pk_ids, 0, 10, 10);
    r.task_id = "join";
    r.model_id = "relbert-j";
    auto j = nlohmann::json::parse(r.to_json(42));
    for (const char* key :
         {"task", "model", "k", "hits_at_k", "mean_rank", "mrr", "n", "seed",
          "pool_size"})
      CHECK(j.contains(key));
    CHECK(j["seed"] == 42);
  }
}

TEST_CASE("attention and embedding exports") {
  Dataset db = tiny_join_dataset(6, 11);
  fs::path dir = fs::temp_directory_path() / "reltab_export_test";
  fs::remove_all(dir);

  SUBCASE("one csv per (layer, head) with unit row sums") {
    ModelConfig mc{8, 2, 4, 16, Activation::Gelu, 0.02};
    TableEncoderModel model(db.catalog, db.vocabs, mc, 12);
    auto pairs = materialize_join_sentences(db.catalog, db.schema.foreign_keys[0],
                                            db.table_sentences("people"),
                                            db.table_sentences("visits"));
    Sentence seq = build_pair_sequence(pairs[0].first, pairs[0].second,
                                       db.catalog.special_column());
    export_attention(model, seq, dir.string());
    size_t files = 0;
    for (const auto& e : fs::directory_iterator(dir)) {
      ++files;
      auto rows = read_csv(e.path().string());
      REQUIRE(rows.size() == seq.size() + 1);  // header + one row per query
      CHECK(rows[0][1] == "[CLS]");
      for (size_t i = 1; i < rows.size(); ++i) {
        double sum = 0;
        for (size_t j = 1; j < rows[i].size(); ++j) sum += std::stod(rows[i][j]);
        CHECK(std::fabs(sum - 1.0) < 1e-6);
      }
    }
    CHECK(files == 2 * 4);
  }
  SUBCASE("embedding rows carry the model dimension") {
    ModelConfig mc{300, 0, 4, 16, Activation::Gelu, 0.02};
    TableEncoderModel model(db.catalog, db.vocabs, mc, 13);
    fs::create_directories(dir);
    fs::path file = dir / "embeddings.csv";
    export_embeddings(model, db.vocabs, file.string());
    auto rows = read_csv(file.string());
    REQUIRE(!rows.empty());
    size_t expect = 3;  // [CLS]/[SEP]/[PAD]
    for (uint32_t g = 0; g < db.catalog.num_groups(); ++g)
      expect += db.vocabs.group(g).size();
    CHECK(rows.size() == expect);
    for (const auto& row : rows) CHECK(row.size() == 301);
  }
  fs::remove_all(dir);
}

TEST_CASE("one-to-many joins score the best-ranked true match") {
  // parent p0 joins two child rows; force one to score high, one low
  DatabaseSchema schema = parse_schema(fixtures::toy_join_schema_json());
  TableRows rows;
  rows["people"].push_back(fixtures::row("people", {"p0", "c0"}, 0));
  rows["people"].push_back(fixtures::row("people", {"p1", "c1"}, 1));
  rows["visits"].push_back(fixtures::row("visits", {"p0", "v0"}, 0));
  rows["visits"].push_back(fixtures::row("visits", {"p0", "v1"}, 1));
  rows["visits"].push_back(fixtures::row("visits", {"p1", "v2"}, 2));
  Dataset db = Dataset::from_rows(std::move(schema), std::move(rows));
  ModelConfig mc{8, 1, 2, 16, Activation::Gelu, 0.02};
  TableEncoderModel model(db.catalog, db.vocabs, mc, 31);

  MetricsReport r = evaluate_join_prediction(model, db, db.schema.foreign_keys[0],
                                             {0, 1}, 0, 1, 32);
  CHECK(r.n_instances == 2);
  CHECK(r.pool_size == 3);
  // p0 has two true matches in a pool of 3: its best rank is at worst 2,
  // so the mean rank over both instances stays below the pool size
  CHECK(r.mean_rank <= 2.5);
  CHECK(r.consistent());
}
