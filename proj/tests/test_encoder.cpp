#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

#include "doctest.h"
#include "fixtures.hpp"
#include "reltab/checkpoint.hpp"
#include "reltab/corpus.hpp"
#include "reltab/encoder.hpp"
#include "reltab/error.hpp"

using namespace reltab;
namespace fs = std::filesystem;

namespace {

struct ToyModelFixture {
  DatabaseSchema schema;
  ColumnCatalog catalog;
  TableRows rows;
  VocabSet vocabs;
  std::vector<Sentence> people, visits;

  explicit ToyModelFixture(size_t n_people = 6, uint64_t seed = 1) {
    schema = parse_schema(fixtures::toy_join_schema_json());
    catalog = ColumnCatalog(schema);
    Rng rng(seed);
    for (size_t i = 0; i < n_people; ++i)
      rows["people"].push_back(fixtures::row(
          "people", {"p" + std::to_string(i), "city" + std::to_string(i % 3)}, i));
    for (size_t i = 0; i < n_people; ++i)
      rows["visits"].push_back(fixtures::row(
          "visits",
          {"p" + std::to_string(i), "place" + std::to_string(rng.uniform_index(4))},
          i));
    vocabs = build_vocabularies(catalog, rows);
    people = row_sentences(catalog, vocabs, rows["people"]);
    visits = row_sentences(catalog, vocabs, rows["visits"]);
  }

  TableEncoderModel model(size_t dim = 8, size_t layers = 2, size_t heads = 2,
                          size_t ff = 16, uint64_t seed = 5) const {
    ModelConfig cfg;
    cfg.dim = dim;
    cfg.layers = layers;
    cfg.heads = heads;
    cfg.ff_hidden = ff;
    return TableEncoderModel(catalog, vocabs, cfg, seed);
  }
};

Sentence permuted(const Sentence& s, const std::vector<size_t>& perm) {
  Sentence out = s;
  for (size_t i = 0; i < perm.size(); ++i) out.tokens[i] = s.tokens[perm[i]];
  return out;
}

}  // namespace

TEST_CASE("embed_sequence shapes and per-column spaces") {
  ToyModelFixture fx;
  auto model = fx.model(16, 1, 2);

  SUBCASE("a 5-token pair sequence embeds to [5, d]") {
    Sentence seq = build_pair_sequence(fx.people[0], fx.visits[0],
                                       fx.catalog.special_column());
    REQUIRE(seq.size() == 7);
    Tensor p = model.embed_sequence(seq);
    CHECK(p.rows() == 7);
    CHECK(p.cols() == 16);
  }
  SUBCASE("d=300 default sizes the rows accordingly") {
    ModelConfig cfg;
    cfg.dim = 300;
    cfg.layers = 0;
    cfg.heads = 4;
    TableEncoderModel big(fx.catalog, fx.vocabs, cfg, 2);
    Tensor p = big.embed_sequence(fx.people[0]);
    CHECK(p.rows() == 2);
    CHECK(p.cols() == 300);
  }
  SUBCASE("same token id in unrelated columns embeds differently") {
    uint32_t city = fx.catalog.id_of("people", "city");
    uint32_t place = fx.catalog.id_of("visits", "place");
    REQUIRE(fx.catalog.group_of(city) != fx.catalog.group_of(place));
    Sentence a{{{3, city}}, "people", 0};
    Sentence b{{{3, place}}, "visits", 0};
    Tensor ea = model.embed_sequence(a);
    Tensor eb = model.embed_sequence(b);
    bool differ = false;
    for (size_t j = 0; j < ea.cols(); ++j)
      if (ea.at(0, j) != eb.at(0, j)) differ = true;
    CHECK(differ);
  }
  SUBCASE("permuting sentence positions permutes the rows of P") {
    Sentence seq = build_pair_sequence(fx.people[1], fx.visits[1],
                                       fx.catalog.special_column());
    std::vector<size_t> perm = {3, 0, 6, 2, 5, 1, 4};
    Tensor p = model.embed_sequence(seq);
    Tensor pp = model.embed_sequence(permuted(seq, perm));
    for (size_t i = 0; i < perm.size(); ++i)
      for (size_t j = 0; j < p.cols(); ++j)
        CHECK(pp.at(i, j) == p.at(perm[i], j));
  }
}

TEST_CASE("encode with zero layers is the identity") {
  ToyModelFixture fx;
  auto model = fx.model(8, 0, 2);
  Tensor p = model.embed_sequence(fx.people[0]);
  Tensor o = model.encode(p);
  CHECK(o.values() == p.values());
}

TEST_CASE("attention rows sum to one across layers and heads") {
  ToyModelFixture fx;
  auto model = fx.model(8, 3, 4, 12);
  Sentence seq = build_pair_sequence(fx.people[2], fx.visits[2],
                                     fx.catalog.special_column());
  AttentionRecord rec;
  model.encode(model.embed_sequence(seq), &rec);
  REQUIRE(rec.weights.size() == 3);
  for (const auto& layer : rec.weights) {
    REQUIRE(layer.size() == 4);
    for (const auto& head : layer) {
      REQUIRE(head.size() == rec.seq_len * rec.seq_len);
      for (size_t i = 0; i < rec.seq_len; ++i) {
        double s = 0;
        for (size_t j = 0; j < rec.seq_len; ++j) s += head[i * rec.seq_len + j];
        CHECK(std::fabs(s - 1.0) < 1e-6);
      }
    }
  }
}

TEST_CASE("permutation equivariance without positional embeddings") {
  ToyModelFixture fx(8);
  auto model = fx.model(8, 2, 2, 16);
  Rng rng(77);
  for (int trial = 0; trial < 25; ++trial) {
    Sentence seq = build_pair_sequence(
        fx.people[rng.uniform_index(fx.people.size())],
        fx.visits[rng.uniform_index(fx.visits.size())],
        fx.catalog.special_column());
    std::vector<size_t> perm(seq.size());
    for (size_t i = 0; i < perm.size(); ++i) perm[i] = i;
    rng.shuffle(perm);

    NoGradGuard ng;
    Tensor o = model.encode(model.embed_sequence(seq));
    Tensor op = model.encode(model.embed_sequence(permuted(seq, perm)));
    double max_abs = 0;
    for (size_t i = 0; i < perm.size(); ++i)
      for (size_t j = 0; j < o.cols(); ++j)
        max_abs = std::max(max_abs, std::fabs(op.at(i, j) - o.at(perm[i], j)));
    CHECK(max_abs < 1e-5);
  }
}

TEST_CASE("masked-cell logits are invariant to context reordering") {
  ToyModelFixture fx;
  auto model = fx.model(8, 2, 2, 16);
  Rng rng(78);
  Sentence seq = build_pair_sequence(fx.people[0], fx.visits[3],
                                     fx.catalog.special_column());
  uint32_t place = fx.catalog.id_of("visits", "place");
  MaskedSentence m = apply_mask(seq, {place}, rng);

  NoGradGuard ng;
  Tensor logits = model.mlm_instance_logits(m);
  for (int trial = 0; trial < 10; ++trial) {
    std::vector<size_t> perm(seq.size());
    for (size_t i = 0; i < perm.size(); ++i) perm[i] = i;
    rng.shuffle(perm);
    MaskedSentence mp;
    mp.base = permuted(m.base, perm);
    mp.target_column = m.target_column;
    mp.target_token = m.target_token;
    for (size_t i = 0; i < perm.size(); ++i)
      if (perm[i] == m.mask_pos) mp.mask_pos = i;
    Tensor lp = model.mlm_instance_logits(mp);
    for (size_t j = 0; j < logits.cols(); ++j)
      CHECK(std::fabs(lp.at(0, j) - logits.at(0, j)) < 1e-5);
  }
}

TEST_CASE("mlm_logits candidate space is the target column's vocabulary") {
  // columns sized like the paper's director_id / movie_rank spaces
  DatabaseSchema s = parse_schema(R"({"tables":[{"name":"t","columns":[
     {"name":"director_id","role":"attribute"},
     {"name":"movie_rank","role":"attribute"}]}]})");
  ColumnCatalog cat(s);
  TableRows rows;
  for (int i = 0; i < 3236; ++i)
    rows["t"].push_back(fixtures::row(
        "t", {"d" + std::to_string(i), "r" + std::to_string(i % 9)}, i));
  auto vocabs = build_vocabularies(cat, rows);
  REQUIRE(vocabs.for_column(cat, 0).entity_count() == 3236);
  REQUIRE(vocabs.for_column(cat, 1).entity_count() == 9);

  ModelConfig cfg;
  cfg.dim = 8;
  cfg.layers = 1;
  cfg.heads = 2;
  cfg.ff_hidden = 8;
  TableEncoderModel model(cat, vocabs, cfg, 3);
  auto sentences = row_sentences(cat, vocabs, {rows["t"][0]});
  Rng rng(4);

  MaskedSentence m0 = apply_mask(sentences[0], {0}, rng);
  Tensor logits = model.mlm_instance_logits(m0);
  CHECK(logits.cols() == 3236);

  MaskedSentence m1 = apply_mask(sentences[0], {1}, rng);
  Tensor rank_logits = model.mlm_instance_logits(m1);
  CHECK(rank_logits.cols() == 9);

  Tensor probs = row_softmax(rank_logits);
  double total = 0;
  for (size_t j = 0; j < probs.cols(); ++j) total += probs.at(0, j);
  CHECK(std::fabs(total - 1.0) < 1e-9);

  CHECK_THROWS_AS(model.mlm_logits(Tensor::zeros({2, 8}), 0, cat.special_column()),
                  NoHeadForColumnError);
}

TEST_CASE("nsp head") {
  ToyModelFixture fx;
  auto model = fx.model(8, 1, 2, 16);
  auto pairs = materialize_join_sentences(
      fx.catalog, fx.schema.foreign_keys[0], fx.people, fx.visits);
  REQUIRE(!pairs.empty());

  SUBCASE("zero-initialized head scores 0 with probability 0.5") {
    auto& w = model.parameter("nsp_w").value;
    std::fill(w.raw().begin(), w.raw().end(), 0.0);
    Tensor v = model.nsp_pair_score(pairs[0]);
    CHECK(v.item() == 0.0);
    CHECK(sigmoid(v).item() == 0.5);
  }
  SUBCASE("probability strictly inside (0,1) for finite scores") {
    for (double raw : {-30.0, -4.0, 0.0, 1.5, 30.0}) {
      Tensor v = Tensor::from_values({1, 1}, {raw});
      double p = sigmoid(v).item();
      CHECK(p > 0.0);
      CHECK(p < 1.0);
    }
  }
  SUBCASE("different second sentences give different scores") {
    Tensor v1 = model.nsp_pair_score(pairs[0]);
    SentencePair swapped = pairs[0];
    swapped.second = pairs[1].second;
    Tensor v2 = model.nsp_pair_score(swapped);
    CHECK(v1.item() != v2.item());
  }
}

TEST_CASE("padding positions masked out of attention do not affect outputs") {
  ToyModelFixture fx;
  auto model = fx.model(8, 2, 2, 16);
  Sentence seq = build_pair_sequence(fx.people[0], fx.visits[0],
                                     fx.catalog.special_column());
  NoGradGuard ng;
  Tensor base = model.encode(model.embed_sequence(seq));

  Sentence padded = seq;
  padded.tokens.push_back({SpecialToken::kPad, fx.catalog.special_column()});
  padded.tokens.push_back({SpecialToken::kPad, fx.catalog.special_column()});
  std::vector<uint8_t> valid(padded.size(), 1);
  valid[padded.size() - 1] = 0;
  valid[padded.size() - 2] = 0;
  Tensor masked = model.encode(model.embed_sequence(padded), nullptr, &valid);
  for (size_t i = 0; i < seq.size(); ++i)
    for (size_t j = 0; j < base.cols(); ++j)
      CHECK(std::fabs(masked.at(i, j) - base.at(i, j)) < 1e-9);
}

TEST_CASE("no positional embedding table exists in the model") {
  ToyModelFixture fx;
  auto model = fx.model(8, 2, 2, 16);
  size_t groups = fx.catalog.num_groups();
  // embeddings + special + 16 params per layer + heads + nsp_w/nsp_b
  CHECK(model.parameters().size() == groups + 1 + 2 * 16 + groups + 2);
  for (const auto& p : model.parameters())
    CHECK(p.name.find("pos") == std::string::npos);
}

TEST_CASE("init_from_word2vec") {
  ToyModelFixture fx;
  auto model = fx.model(8, 1, 2, 16);
  uint32_t g = fx.catalog.group_of(fx.catalog.id_of("people", "city"));

  W2vVectors w2v;
  w2v.dim = 8;
  std::vector<double> vec(8);
  for (size_t j = 0; j < 8; ++j) vec[j] = 0.25 * static_cast<double>(j + 1);
  w2v.by_token[{g, 3}] = vec;

  SUBCASE("present entity copies its vector exactly") {
    init_from_word2vec(model, w2v, 9);
    const Tensor& table = model.embedding_table(g);
    for (size_t j = 0; j < 8; ++j) CHECK(table.at(3, j) == vec[j]);
  }
  SUBCASE("missing entities draw a reproducible seeded gaussian") {
    auto m1 = fx.model(8, 1, 2, 16, 5);
    auto m2 = fx.model(8, 1, 2, 16, 6);
    init_from_word2vec(m1, w2v, 9);
    init_from_word2vec(m2, w2v, 9);
    const Tensor& t1 = m1.embedding_table(g);
    const Tensor& t2 = m2.embedding_table(g);
    CHECK(t1.values() == t2.values());
  }
  SUBCASE("dimension mismatch raises") {
    W2vVectors bad;
    bad.dim = 300;
    CHECK_THROWS_AS(init_from_word2vec(model, bad, 9), DimensionMismatchError);
  }
}

TEST_CASE("checkpoint round-trip") {
  ToyModelFixture fx;
  auto model = fx.model(8, 2, 2, 16, 11);
  fs::path dir = fs::temp_directory_path() / "reltab_ckpt_test";
  fs::remove_all(dir);
  save_checkpoint(model, fx.schema, fx.vocabs, dir.string(), 11);

  SUBCASE("forward after reload is bitwise identical") {
    TableEncoderModel back = load_checkpoint(dir.string(), fx.schema, fx.vocabs);
    NoGradGuard ng;
    Sentence seq = build_pair_sequence(fx.people[0], fx.visits[0],
                                       fx.catalog.special_column());
    Tensor a = model.encode(model.embed_sequence(seq));
    Tensor b = back.encode(back.embed_sequence(seq));
    CHECK(a.values() == b.values());
    CHECK(model.parameter_hash() == back.parameter_hash());
  }
  SUBCASE("different schema hash is rejected") {
    DatabaseSchema other = parse_schema(fixtures::imdb_schema_json());
    ColumnCatalog other_cat(other);
    auto other_vocabs = build_vocabularies(other_cat, {});
    CHECK_THROWS_AS(load_checkpoint(dir.string(), other, other_vocabs),
                    SchemaHashMismatchError);
  }
  SUBCASE("unsupported version is rejected") {
    std::ifstream in(dir / "meta.json");
    nlohmann::json meta = nlohmann::json::parse(in);
    in.close();
    meta["format_version"] = 99;
    std::ofstream out(dir / "meta.json");
    out << meta.dump();
    out.close();
    CHECK_THROWS_AS(load_checkpoint(dir.string(), fx.schema, fx.vocabs),
                    VersionMismatchError);
    // restore for other subcases
    save_checkpoint(model, fx.schema, fx.vocabs, dir.string(), 11);
  }
  SUBCASE("truncated params file is rejected") {
    auto size = fs::file_size(dir / "params.bin");
    fs::resize_file(dir / "params.bin", size - 16);
    CHECK_THROWS_AS(load_checkpoint(dir.string(), fx.schema, fx.vocabs), IOError);
    save_checkpoint(model, fx.schema, fx.vocabs, dir.string(), 11);
  }
  fs::remove_all(dir);
}
