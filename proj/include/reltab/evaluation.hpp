#pragma once
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "reltab/baselines.hpp"
#include "reltab/corpus.hpp"
#include "reltab/encoder.hpp"
#include "reltab/ingest.hpp"

namespace reltab {

/// A database ready for training/evaluation: validated schema, cleaned rows,
/// vocabularies and encoded sentences.
struct Dataset {
  DatabaseSchema schema;
  ColumnCatalog catalog;
  TableRows rows;
  VocabSet vocabs;
  std::map<std::string, std::vector<Sentence>> sentences;

  static Dataset from_rows(DatabaseSchema schema, TableRows rows);
  const std::vector<Sentence>& table_sentences(const std::string& name) const;
  const std::vector<RowRecord>& table_rows(const std::string& name) const;
};

/// Names the autocompletion target and, when the context lives in another
/// table, the FK joining the target table to it (two-sequence protocol).
struct TaskSpec {
  std::string target_table;
  std::string target_column;
  std::optional<ForeignKeyDef> pair_fk;  // from_table must equal target_table
};

// ---------------------------------------------------------------------------

struct RankingResult {
  size_t instance_id = 0;
  uint32_t true_id = 0;
  size_t rank = 1;
  size_t pool_size = 0;
};

enum class TieBreak { SmallestId, Optimistic, Pessimistic };

/// rank = 1 + |strictly better| + |equal with smaller id| (default tie-break).
RankingResult rank_candidates(const std::vector<double>& scores,
                              size_t true_index, size_t instance_id = 0,
                              TieBreak tie_break = TieBreak::SmallestId);

struct MetricsReport {
  std::string task_id;
  std::string model_id;
  size_t k = 10;
  double hits_at_k = 0.0;
  double mean_rank = 0.0;
  double mrr = 0.0;
  size_t n_instances = 0;
  size_t pool_size = 0;  // representative candidate-pool size

  /// range checks plus the Jensen bound mrr >= 1/mean_rank and the
  /// hits@k-implied bounds on mrr and mean rank
  bool consistent() const;
  std::string to_json(uint64_t seed) const;
};

MetricsReport compute_metrics(const std::vector<RankingResult>& results, size_t k);

// ---------------------------------------------------------------------------

/// A test row prepared for autocompletion: the target cell is masked inside
/// either the bare row sentence or the [CLS] ctx [SEP] row [SEP] pair.
struct AutocompleteInstance {
  MaskedSentence masked;
  size_t instance_id = 0;
};

std::vector<AutocompleteInstance> build_autocompletion_instances(
    const Dataset& db, const TaskSpec& task, const std::vector<size_t>& row_ids);

/// Scores over the target column's non-special candidates, ascending token id.
using CandidateScorer =
    std::function<std::vector<double>(const AutocompleteInstance&)>;

MetricsReport evaluate_autocompletion(const CandidateScorer& scorer,
                                      const std::vector<AutocompleteInstance>& instances,
                                      size_t candidate_count, size_t k,
                                      size_t threads = 1);

CandidateScorer model_scorer(const TableEncoderModel& model);
CandidateScorer table2vec_scorer(const SkipGramModel& model, const UnifiedSpace& space,
                                 const Dataset& db, uint32_t target_column);
CandidateScorer embdi_scorer(const SkipGramModel& model, const TripartiteGraph& graph,
                             const Dataset& db, uint32_t target_column);

/// For each PK-side row: rank every FK-side candidate row by NSP score.
/// pool_limit 0 keeps all candidates; otherwise the true rows plus a sampled
/// complement of that size.
MetricsReport evaluate_join_prediction(const TableEncoderModel& model,
                                       const Dataset& db, const ForeignKeyDef& fk,
                                       const std::vector<size_t>& pk_row_ids,
                                       size_t pool_limit, size_t k, uint64_t seed,
                                       size_t threads = 1);

// ---------------------------------------------------------------------------

/// One CSV per (layer, head) with column-name row/column labels.
void export_attention(const TableEncoderModel& model, const Sentence& sentence,
                      const std::string& dir);

/// token label followed by the embedding floats, one row per token.
void export_embeddings(const TableEncoderModel& model, const VocabSet& vocabs,
                       const std::string& path);

}  // namespace reltab
