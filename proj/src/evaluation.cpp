#include "reltab/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "json.hpp"
#include "reltab/csv.hpp"
#include "reltab/error.hpp"
#include "reltab/parallel.hpp"

namespace reltab {

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

Dataset Dataset::from_rows(DatabaseSchema schema, TableRows rows) {
  schema.validate();
  Dataset db;
  db.schema = std::move(schema);
  db.catalog = ColumnCatalog(db.schema);
  db.rows = std::move(rows);
  db.vocabs = build_vocabularies(db.catalog, db.rows);
  for (const auto& [table, table_rows] : db.rows)
    db.sentences[table] = row_sentences(db.catalog, db.vocabs, table_rows);
  return db;
}

const std::vector<Sentence>& Dataset::table_sentences(const std::string& name) const {
  auto it = sentences.find(name);
  if (it == sentences.end()) throw SchemaError("no sentences for table " + name);
  return it->second;
}

const std::vector<RowRecord>& Dataset::table_rows(const std::string& name) const {
  auto it = rows.find(name);
  if (it == rows.end()) throw SchemaError("no rows for table " + name);
  return it->second;
}

// ---------------------------------------------------------------------------

RankingResult rank_candidates(const std::vector<double>& scores,
                              size_t true_index, size_t instance_id,
                              TieBreak tie_break) {
  if (true_index >= scores.size())
    throw IndexError("true candidate outside the score vector");
  double s = scores[true_index];
  size_t better = 0, tied_before = 0, tied_total = 0;
  for (size_t j = 0; j < scores.size(); ++j) {
    if (j == true_index) continue;
    if (scores[j] > s) ++better;
    else if (scores[j] == s) {
      ++tied_total;
      if (j < true_index) ++tied_before;
    }
  }
  size_t rank;
  switch (tie_break) {
    case TieBreak::Optimistic: rank = 1 + better; break;
    case TieBreak::Pessimistic: rank = 1 + better + tied_total; break;
    case TieBreak::SmallestId:
    default: rank = 1 + better + tied_before; break;
  }
  return RankingResult{instance_id, static_cast<uint32_t>(true_index), rank,
                       scores.size()};
}

MetricsReport compute_metrics(const std::vector<RankingResult>& results, size_t k) {
  if (results.empty())
    throw EmptyResultsError("metrics need at least one ranking result");
  MetricsReport report;
  report.k = k;
  report.n_instances = results.size();
  size_t hits = 0;
  double rank_sum = 0.0, inv_sum = 0.0;
  size_t max_pool = 0;
  for (const auto& r : results) {
    if (r.rank < 1 || r.rank > r.pool_size)
      throw IndexError("rank outside [1, pool]");
    if (r.rank <= k) ++hits;
    rank_sum += static_cast<double>(r.rank);
    inv_sum += 1.0 / static_cast<double>(r.rank);
    max_pool = std::max(max_pool, r.pool_size);
  }
  report.hits_at_k = static_cast<double>(hits) / static_cast<double>(results.size());
  report.mean_rank = rank_sum / static_cast<double>(results.size());
  report.mrr = inv_sum / static_cast<double>(results.size());
  report.pool_size = max_pool;
  return report;
}

bool MetricsReport::consistent() const {
  if (hits_at_k < 0.0 || hits_at_k > 1.0) return false;
  if (mean_rank < 1.0) return false;
  if (mrr <= 0.0 || mrr > 1.0) return false;
  if (mrr < 1.0 / mean_rank - 1e-12) return false;  // Jensen
  double kk = static_cast<double>(k);
  // ranks <= k for the hits fraction, >= k+1 for the rest
  if (mrr > hits_at_k + (1.0 - hits_at_k) / (kk + 1.0) + 1e-12) return false;
  if (mean_rank < hits_at_k + (1.0 - hits_at_k) * (kk + 1.0) - 1e-12) return false;
  if (hits_at_k > 0.0 && mrr < hits_at_k / kk - 1e-12) return false;
  return true;
}

std::string MetricsReport::to_json(uint64_t seed) const {
  ojson j;
  j["task"] = task_id;
  j["model"] = model_id;
  j["k"] = k;
  j["hits_at_k"] = hits_at_k;
  j["mean_rank"] = mean_rank;
  j["mrr"] = mrr;
  j["n"] = n_instances;
  j["seed"] = seed;
  j["pool_size"] = pool_size;
  return j.dump(2);
}

// ---------------------------------------------------------------------------

std::vector<AutocompleteInstance> build_autocompletion_instances(
    const Dataset& db, const TaskSpec& task, const std::vector<size_t>& row_ids) {
  uint32_t target_col = db.catalog.id_of(task.target_table, task.target_column);
  const auto& target_sents = db.table_sentences(task.target_table);

  std::vector<AutocompleteInstance> out;
  out.reserve(row_ids.size());

  auto masked_at_target = [&](const Sentence& s) -> std::optional<MaskedSentence> {
    for (size_t pos = 0; pos < s.size(); ++pos) {
      if (s.tokens[pos].column != target_col) continue;
      if (s.tokens[pos].token < Vocabulary::kNumSpecials)
        return std::nullopt;  // null target: nothing to predict
      MaskedSentence m;
      m.base = s;
      m.mask_pos = pos;
      m.target_column = target_col;
      m.target_token = s.tokens[pos].token;
      m.base.tokens[pos].token = Vocabulary::kMask;
      return m;
    }
    return std::nullopt;
  };

  if (!task.pair_fk) {
    for (size_t id : row_ids) {
      auto m = masked_at_target(target_sents.at(id));
      if (!m) continue;
      out.push_back(AutocompleteInstance{std::move(*m), out.size()});
    }
    return out;
  }

  // two-sequence protocol: [CLS] pk-side context [SEP] target row [SEP]
  const ForeignKeyDef& fk = *task.pair_fk;
  if (fk.from_table != task.target_table)
    throw ConfigError("pair fk must originate in the target table");
  auto pairs = materialize_join_sentences(db.catalog, fk,
                                          db.table_sentences(fk.to_table),
                                          target_sents);
  std::map<size_t, const SentencePair*> by_row;
  for (const auto& p : pairs) by_row.emplace(p.second.row_index, &p);

  for (size_t id : row_ids) {
    auto it = by_row.find(id);
    if (it == by_row.end()) continue;  // dangling fk row: no context pair
    Sentence seq = build_pair_sequence(it->second->first, it->second->second,
                                       db.catalog.special_column());
    auto m = masked_at_target(seq);
    if (!m) continue;
    out.push_back(AutocompleteInstance{std::move(*m), out.size()});
  }
  return out;
}

MetricsReport evaluate_autocompletion(const CandidateScorer& scorer,
                                      const std::vector<AutocompleteInstance>& instances,
                                      size_t candidate_count, size_t k,
                                      size_t threads) {
  if (instances.empty())
    throw EmptyResultsError("no autocompletion instances to evaluate");
  std::vector<RankingResult> results(instances.size());
  parallel_for(instances.size(), threads, [&](size_t i) {
    const auto& inst = instances[i];
    std::vector<double> scores = scorer(inst);
    if (scores.size() != candidate_count)
      throw ShapeError("scorer returned a wrong-sized candidate vector");
    if (inst.masked.target_token < Vocabulary::kNumSpecials)
      throw IndexError("target token is a special token");
    size_t true_idx = inst.masked.target_token - Vocabulary::kNumSpecials;
    results[i] = rank_candidates(scores, true_idx, inst.instance_id);
  });
  return compute_metrics(results, k);
}

CandidateScorer model_scorer(const TableEncoderModel& model) {
  return [&model](const AutocompleteInstance& inst) {
    NoGradGuard ng;
    // logits already range over the column's entities only
    return model.mlm_instance_logits(inst.masked).values();
  };
}

namespace {

std::vector<double> cosine_scores_for(const SkipGramModel& model,
                                      const std::vector<size_t>& context_ids,
                                      const std::vector<size_t>& candidate_ids,
                                      const std::vector<uint32_t>& candidate_tokens) {
  RankedCandidates ranked =
      baseline_rank(model, context_ids, candidate_ids, candidate_tokens);
  return ranked.scores;
}

}  // namespace

CandidateScorer table2vec_scorer(const SkipGramModel& model, const UnifiedSpace& space,
                                 const Dataset& db, uint32_t target_column) {
  size_t vocab = db.vocabs.for_column(db.catalog, target_column).size();
  std::vector<size_t> candidate_ids;
  std::vector<uint32_t> candidate_tokens;
  for (uint32_t t = Vocabulary::kNumSpecials; t < vocab; ++t) {
    candidate_ids.push_back(space.id_of(target_column, t));
    candidate_tokens.push_back(t);
  }
  uint32_t special = db.catalog.special_column();
  return [&model, &space, special, candidate_ids, candidate_tokens](
             const AutocompleteInstance& inst) {
    std::vector<size_t> context;
    for (size_t pos = 0; pos < inst.masked.base.size(); ++pos) {
      if (pos == inst.masked.mask_pos) continue;
      const TokenRef& t = inst.masked.base.tokens[pos];
      if (t.column == special) continue;
      context.push_back(space.id_of(t.column, t.token));
    }
    return cosine_scores_for(model, context, candidate_ids, candidate_tokens);
  };
}

CandidateScorer embdi_scorer(const SkipGramModel& model, const TripartiteGraph& graph,
                             const Dataset& db, uint32_t target_column) {
  size_t vocab = db.vocabs.for_column(db.catalog, target_column).size();
  std::vector<size_t> candidate_ids;
  std::vector<uint32_t> candidate_tokens;
  for (uint32_t t = Vocabulary::kNumSpecials; t < vocab; ++t) {
    auto node = graph.token_node(target_column, t);
    if (!node) continue;  // never observed in the data
    candidate_ids.push_back(*node);
    candidate_tokens.push_back(t);
  }
  if (candidate_ids.empty())
    throw NoCandidatesError("target column has no token nodes in the graph");
  uint32_t special = db.catalog.special_column();
  return [&model, &graph, special, candidate_ids, candidate_tokens, vocab](
             const AutocompleteInstance& inst) {
    std::vector<size_t> context;
    for (size_t pos = 0; pos < inst.masked.base.size(); ++pos) {
      if (pos == inst.masked.mask_pos) continue;
      const TokenRef& t = inst.masked.base.tokens[pos];
      if (t.column == special) continue;
      auto node = graph.token_node(t.column, t.token);
      if (node) context.push_back(*node);
    }
    std::vector<double> partial =
        cosine_scores_for(model, context, candidate_ids, candidate_tokens);
    // tokens absent from the graph score below every observed candidate
    std::vector<double> scores(vocab - Vocabulary::kNumSpecials, -2.0);
    for (size_t c = 0; c < candidate_tokens.size(); ++c)
      scores[candidate_tokens[c] - Vocabulary::kNumSpecials] = partial[c];
    return scores;
  };
}

// ---------------------------------------------------------------------------

MetricsReport evaluate_join_prediction(const TableEncoderModel& model,
                                       const Dataset& db, const ForeignKeyDef& fk,
                                       const std::vector<size_t>& pk_row_ids,
                                       size_t pool_limit, size_t k, uint64_t seed,
                                       size_t threads) {
  const auto& pk_sents = db.table_sentences(fk.to_table);
  const auto& fk_sents = db.table_sentences(fk.from_table);
  if (fk_sents.empty()) throw NoCandidatesError("fk-side table has no rows");
  uint32_t pk_col = db.catalog.id_of(fk.to_table, fk.to_column);
  uint32_t fk_col = db.catalog.id_of(fk.from_table, fk.from_column);
  auto key_at = [](const Sentence& s, uint32_t col) -> uint32_t {
    for (const auto& t : s.tokens)
      if (t.column == col) return t.token;
    throw SchemaError("key column missing from sentence");
  };

  struct Instance {
    const Sentence* pk_row;
    std::vector<const Sentence*> pool;
    std::vector<size_t> true_positions;
  };
  std::vector<Instance> instances;
  Rng pool_rng = Rng(seed).child(0x700b);
  for (size_t id : pk_row_ids) {
    const Sentence& pk_row = pk_sents.at(id);
    uint32_t key = key_at(pk_row, pk_col);
    if (key == Vocabulary::kUnk) continue;
    Instance inst;
    inst.pk_row = &pk_row;
    std::vector<const Sentence*> trues, others;
    for (const Sentence& cand : fk_sents) {
      if (key_at(cand, fk_col) == key) trues.push_back(&cand);
      else others.push_back(&cand);
    }
    if (trues.empty()) continue;  // nothing joins; no rank defined
    if (pool_limit > 0 && trues.size() + others.size() > pool_limit) {
      size_t keep = pool_limit > trues.size() ? pool_limit - trues.size() : 0;
      pool_rng.shuffle(others);
      others.resize(std::min(others.size(), keep));
    }
    inst.pool = trues;
    inst.pool.insert(inst.pool.end(), others.begin(), others.end());
    // candidates ordered by row index for a deterministic tie-break
    std::stable_sort(inst.pool.begin(), inst.pool.end(),
                     [](const Sentence* a, const Sentence* b) {
                       return a->row_index < b->row_index;
                     });
    for (size_t c = 0; c < inst.pool.size(); ++c)
      if (key_at(*inst.pool[c], fk_col) == key) inst.true_positions.push_back(c);
    instances.push_back(std::move(inst));
  }
  if (instances.empty())
    throw EmptyResultsError("no join-prediction instances to evaluate");

  std::vector<RankingResult> results(instances.size());
  parallel_for(instances.size(), threads, [&](size_t i) {
    const Instance& inst = instances[i];
    NoGradGuard ng;
    std::vector<double> scores(inst.pool.size());
    for (size_t c = 0; c < inst.pool.size(); ++c) {
      SentencePair pair{*inst.pk_row, *inst.pool[c], true, 0, 0};
      scores[c] = model.nsp_pair_score(pair).item();
    }
    // best-ranked true match is scored for one-to-many joins
    size_t best = SIZE_MAX;
    uint32_t best_idx = 0;
    for (size_t t : inst.true_positions) {
      RankingResult r = rank_candidates(scores, t, i);
      if (r.rank < best) {
        best = r.rank;
        best_idx = static_cast<uint32_t>(t);
      }
    }
    results[i] = RankingResult{i, best_idx, best, inst.pool.size()};
  });
  return compute_metrics(results, k);
}

// ---------------------------------------------------------------------------

void export_attention(const TableEncoderModel& model, const Sentence& sentence,
                      const std::string& dir) {
  fs::create_directories(dir);
  AttentionRecord rec;
  NoGradGuard ng;
  model.encode(model.embed_sequence(sentence), &rec);

  std::vector<std::string> labels;
  const ColumnCatalog& catalog = model.catalog();
  size_t sep_count = 0;
  for (const auto& t : sentence.tokens) {
    if (t.column == catalog.special_column()) {
      if (t.token == SpecialToken::kCls) labels.push_back("[CLS]");
      else if (t.token == SpecialToken::kSep)
        labels.push_back("[SEP" + std::to_string(++sep_count) + "]");
      else labels.push_back("[PAD]");
    } else {
      labels.push_back(catalog.qualified_name(t.column));
    }
  }

  for (size_t l = 0; l < rec.weights.size(); ++l) {
    for (size_t h = 0; h < rec.weights[l].size(); ++h) {
      std::vector<std::vector<std::string>> csv;
      std::vector<std::string> header{"query"};
      header.insert(header.end(), labels.begin(), labels.end());
      csv.push_back(header);
      for (size_t i = 0; i < rec.seq_len; ++i) {
        std::vector<std::string> row{labels[i]};
        for (size_t j = 0; j < rec.seq_len; ++j) {
          char buf[32];
          std::snprintf(buf, sizeof(buf), "%.10g",
                        rec.weights[l][h][i * rec.seq_len + j]);
          row.push_back(buf);
        }
        csv.push_back(std::move(row));
      }
      fs::path file = fs::path(dir) / ("attention_layer" + std::to_string(l) +
                                       "_head" + std::to_string(h) + ".csv");
      write_csv(file.string(), csv);
    }
  }
}

void export_embeddings(const TableEncoderModel& model, const VocabSet& vocabs,
                       const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IOError("cannot write embeddings: " + path);
  const ColumnCatalog& catalog = model.catalog();
  const size_t d = model.config().dim;
  auto write_row = [&](const std::string& label, const double* v) {
    out << csv_quote(label);
    for (size_t j = 0; j < d; ++j) {
      char buf[32];
      std::snprintf(buf, sizeof(buf), "%.10g", v[j]);
      out << ',' << buf;
    }
    out << '\n';
  };
  // one canonical row per vocabulary group entry, labeled by its first column
  for (uint32_t g = 0; g < catalog.num_groups(); ++g) {
    std::string col_label;
    for (uint32_t c = 0; c < catalog.num_columns(); ++c)
      if (catalog.group_of(c) == g) {
        col_label = catalog.qualified_name(c);
        break;
      }
    const Tensor& table = model.embedding_table(g);
    const Vocabulary& vocab = vocabs.group(g);
    for (uint32_t t = 0; t < vocab.size(); ++t)
      write_row(col_label + ":" + vocab.decode(t),
                table.values().data() + t * d);
  }
  const char* names[3] = {"[CLS]", "[SEP]", "[PAD]"};
  for (uint32_t t = 0; t < 3; ++t)
    write_row(names[t], model.special_table().values().data() + t * d);
}

}  // namespace reltab
