#pragma once
#include <array>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "reltab/ingest.hpp"
#include "reltab/rng.hpp"

namespace reltab {

/// A sentence with exactly one position replaced by its column's [MASK].
struct MaskedSentence {
  Sentence base;
  size_t mask_pos = 0;
  uint32_t target_column = 0;
  uint32_t target_token = 0;
};

/// A FK-PK sentence pair: first is the primary-key side row, second the
/// foreign-key side row (the paper's "next sentence").
struct SentencePair {
  Sentence first;
  Sentence second;
  bool positive = true;
  uint32_t key_first = 0;   // key token on the PK side
  uint32_t key_second = 0;  // key token on the FK side
};

/// One NSP training instance: a positive pair plus its sampled negatives.
struct NspInstance {
  SentencePair positive;
  std::vector<SentencePair> negatives;
};

struct SplitAssignment {
  struct Group {
    std::string key;
    std::vector<size_t> train, valid, test;
  };
  std::vector<Group> groups;
  std::vector<size_t> train, valid, test;  // flattened row indices
};

// ---------------------------------------------------------------------------

std::vector<Sentence> row_sentences(const ColumnCatalog& catalog,
                                    const VocabSet& vocabs,
                                    const std::vector<RowRecord>& rows);

/// All matching (pk_row, fk_row) pairs under the constraint; one pair per
/// match, none for dangling or null keys.
std::vector<SentencePair> materialize_join_sentences(
    const ColumnCatalog& catalog, const ForeignKeyDef& fk,
    const std::vector<Sentence>& pk_rows, const std::vector<Sentence>& fk_rows);

/// k uniform negatives per positive over fk-side rows whose key differs.
/// Throws InsufficientRows if the fk side has < 2 distinct key values.
std::vector<NspInstance> sample_negatives(const ColumnCatalog& catalog,
                                          const ForeignKeyDef& fk,
                                          const std::vector<SentencePair>& positives,
                                          const std::vector<Sentence>& fk_rows,
                                          size_t k, Rng& rng);

/// Masks one position uniformly among tokens of the given columns.
MaskedSentence apply_mask(const Sentence& sentence,
                          const std::set<uint32_t>& maskable_columns, Rng& rng);

struct MaskPolicy {
  bool exclude_keys = true;                 // FK/PK cells carry no semantics
  std::optional<uint32_t> only_column;      // fine-tuning target
};

std::set<uint32_t> maskable_columns(const ColumnCatalog& catalog,
                                    const MaskPolicy& policy);

/// Per-group shuffled split with largest-remainder rounding; groups with
/// fewer than 3 rows go entirely to train.
SplitAssignment split_grouped(const std::vector<RowRecord>& rows,
                              size_t group_cell_index,
                              std::array<double, 3> ratios, Rng& rng);

/// [CLS] first [SEP] second [SEP], specials in the shared special space.
Sentence build_pair_sequence(const Sentence& first, const Sentence& second,
                             uint32_t special_column);

// ---------------------------------------------------------------------------

/// Serialized training instance; mlm rows carry mask_pos/target, nsp rows
/// carry a 0/1 label.
struct CorpusInstance {
  enum class Kind { Mlm, Nsp };
  Kind kind = Kind::Mlm;
  std::vector<TokenRef> tokens;
  std::optional<size_t> mask_pos;
  std::optional<std::pair<uint32_t, uint32_t>> target;  // (column, token)
  std::optional<int> label;
};

CorpusInstance to_corpus_instance(const MaskedSentence& m);
CorpusInstance to_corpus_instance(const SentencePair& p, uint32_t special_column);

void write_corpus_jsonl(const std::string& path,
                        const std::vector<CorpusInstance>& instances);
std::vector<CorpusInstance> read_corpus_jsonl(const std::string& path);

}  // namespace reltab
