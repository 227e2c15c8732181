#pragma once
#include <cstdint>
#include <string>
#include <vector>

#include "reltab/encoder.hpp"
#include "reltab/ingest.hpp"

namespace reltab {

struct SkipGramConfig {
  size_t dim = 300;
  size_t epochs = 5;
  double learning_rate = 0.025;
  size_t negatives = 5;
  size_t window = 0;  // 0 = whole sentence is the context window
  double sample_power = 0.75;
  uint64_t seed = 0;
};

/// Input/output embedding matrices over a dense token-id space, trained with
/// skip-gram negative sampling.
class SkipGramModel {
 public:
  SkipGramModel(size_t vocab_size, size_t dim, uint64_t seed);

  size_t vocab_size() const { return vocab_; }
  size_t dim() const { return dim_; }

  const double* input_vector(size_t id) const { return input_.data() + id * dim_; }
  std::vector<double>& raw_input() { return input_; }
  std::vector<double>& raw_output() { return output_; }
  const std::vector<double>& input() const { return input_; }

  double cosine(size_t a, size_t b) const;

  /// corpus occurrence counts, filled by the trainer
  std::vector<uint64_t> counts;

 private:
  size_t vocab_, dim_;
  std::vector<double> input_, output_;
};

/// Deterministic single-threaded SGNS over integer-id sentences.
SkipGramModel train_skipgram(const std::vector<std::vector<uint32_t>>& corpus,
                             size_t vocab_size, const SkipGramConfig& config);

// ---------------------------------------------------------------------------

/// Dense unified ids over all (column, token) pairs — tokens namespaced by
/// column identity. A column's id range covers its group vocabulary.
class UnifiedSpace {
 public:
  UnifiedSpace(const ColumnCatalog& catalog, const VocabSet& vocabs);

  size_t size() const { return total_; }
  size_t id_of(uint32_t column, uint32_t token) const;
  std::pair<uint32_t, uint32_t> decode(size_t id) const;  // (column, token)
  std::string label(size_t id, const ColumnCatalog& catalog,
                    const VocabSet& vocabs) const;

 private:
  std::vector<size_t> offsets_;
  size_t total_ = 0;
};

/// One unified-id sentence per row across all tables, in schema order.
std::vector<std::vector<uint32_t>> table2vec_corpus(
    const ColumnCatalog& catalog, const UnifiedSpace& space,
    const std::map<std::string, std::vector<Sentence>>& sentences);

/// Adapter feeding skip-gram vectors into encoder initialization; for key
/// groups the primary-key column's vector wins, then catalog order.
W2vVectors w2v_from_skipgram(const SkipGramModel& model, const UnifiedSpace& space,
                             const ColumnCatalog& catalog, const VocabSet& vocabs);

}  // namespace reltab
