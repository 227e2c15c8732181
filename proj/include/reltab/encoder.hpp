#pragma once
#include <map>
#include <string>
#include <vector>

#include "reltab/corpus.hpp"
#include "reltab/ingest.hpp"
#include "reltab/tensor.hpp"

namespace reltab {

enum class Activation { Gelu, Relu };

struct ModelConfig {
  size_t dim = 300;
  size_t layers = 4;       // 6 for imdb-scale runs
  size_t heads = 4;
  size_t ff_hidden = 1200;
  Activation activation = Activation::Gelu;
  double init_std = 0.02;
};

/// Attention weights captured during a forward pass; weights[layer][head]
/// is a row-major seq_len x seq_len matrix whose rows sum to 1.
struct AttentionRecord {
  size_t seq_len = 0;
  std::vector<std::vector<std::vector<double>>> weights;
};

/// word2vec vectors keyed by (vocabulary group, token id); entities missing
/// here fall back to a seeded Gaussian at init time.
struct W2vVectors {
  size_t dim = 0;
  std::map<std::pair<uint32_t, uint32_t>, std::vector<double>> by_token;
};

/// The table encoder: one embedding table per vocabulary group plus a shared
/// special-token table, a stack of self-attention layers with no positional
/// embeddings, per-group output heads, and a linear NSP head over [CLS].
class TableEncoderModel {
 public:
  TableEncoderModel(const ColumnCatalog& catalog, const VocabSet& vocabs,
                    ModelConfig config, uint64_t seed);

  const ModelConfig& config() const { return config_; }
  const ColumnCatalog& catalog() const { return catalog_; }
  const std::vector<size_t>& vocab_sizes() const { return vocab_sizes_; }

  /// Rows of the input matrix come straight from the embedding tables;
  /// position contributes nothing.
  Tensor embed_sequence(const Sentence& sentence) const;

  /// key_valid, when given, masks invalid key positions out of every
  /// attention row (-1e30 pre-softmax).
  Tensor encode(const Tensor& input, AttentionRecord* record = nullptr,
                const std::vector<uint8_t>* key_valid = nullptr) const;

  /// O[position] * head of the target column's group.
  Tensor mlm_logits(const Tensor& output, size_t position,
                    uint32_t target_column) const;

  /// Linear map of the [CLS] output embedding; sigmoid gives the
  /// next-sentence probability.
  Tensor nsp_score(const Tensor& output) const;

  // whole-instance forwards
  Tensor mlm_instance_logits(const MaskedSentence& m,
                             AttentionRecord* record = nullptr) const;
  Tensor nsp_pair_score(const SentencePair& p,
                        AttentionRecord* record = nullptr) const;

  std::vector<Parameter>& parameters() { return params_; }
  const std::vector<Parameter>& parameters() const { return params_; }
  Parameter& parameter(const std::string& name);
  const Tensor& embedding_table(uint32_t group) const;
  const Tensor& output_head(uint32_t group) const;
  const Tensor& special_table() const { return special_; }

  void zero_grad();
  uint64_t parameter_hash() const;

 private:
  ModelConfig config_;
  ColumnCatalog catalog_;
  std::vector<size_t> vocab_sizes_;  // per group, incl. specials

  struct LayerParams {
    Tensor wq, bq, wk, bk, wv, bv, wo, bo;
    Tensor ln1_g, ln1_b;
    Tensor ff_w1, ff_b1, ff_w2, ff_b2;
    Tensor ln2_g, ln2_b;
  };
  std::vector<Tensor> group_tables_;  // [V_g, d]
  Tensor special_;                    // [3, d]
  std::vector<LayerParams> layers_;
  std::vector<Tensor> heads_;         // [d, V_g]
  Tensor nsp_w_, nsp_b_;

  std::vector<Parameter> params_;
  Tensor& track(const std::string& name, Tensor t);
};

void init_from_word2vec(TableEncoderModel& model, const W2vVectors& vectors,
                        uint64_t seed);

/// Central finite differences over every model parameter coordinate against
/// the reverse-mode gradients of loss_fn. loss_fn must be deterministic.
GradCheckReport model_grad_check(TableEncoderModel& model,
                                 const std::function<Tensor()>& loss_fn,
                                 double h = 1e-5, double tol = 1e-4);

}  // namespace reltab
