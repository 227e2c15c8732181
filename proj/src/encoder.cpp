#include "reltab/encoder.hpp"

#include <algorithm>
#include <cmath>

#include "reltab/error.hpp"

namespace reltab {

Tensor& TableEncoderModel::track(const std::string& name, Tensor t) {
  t.node()->requires_grad = true;
  params_.push_back(Parameter{name, t});
  return params_.back().value;
}

TableEncoderModel::TableEncoderModel(const ColumnCatalog& catalog,
                                     const VocabSet& vocabs, ModelConfig config,
                                     uint64_t seed)
    : config_(config), catalog_(catalog) {
  if (config_.dim == 0 || config_.heads == 0)
    throw ConfigError("model dim and heads must be positive");
  if (config_.dim % config_.heads != 0)
    throw ConfigError("embedding dim must be divisible by the head count");
  if (vocabs.groups.size() != catalog.num_groups())
    throw ConfigError("vocabulary set does not match the catalog");

  const size_t d = config_.dim;
  Rng rng = Rng(seed).child(0x9a0de1);
  auto randn = [&](std::vector<size_t> shape) {
    return Tensor::randn(std::move(shape), rng, config_.init_std);
  };
  auto zeros = [](std::vector<size_t> shape) { return Tensor::zeros(std::move(shape)); };
  auto ones = [](std::vector<size_t> shape) {
    size_t n = 1;
    for (size_t x : shape) n *= x;
    return Tensor::from_values(std::move(shape), std::vector<double>(n, 1.0));
  };

  for (uint32_t g = 0; g < catalog.num_groups(); ++g) {
    vocab_sizes_.push_back(vocabs.group(g).size());
    group_tables_.push_back(
        track("emb/g" + std::to_string(g), randn({vocab_sizes_[g], d})));
  }
  special_ = track("emb/special", randn({3, d}));

  for (size_t l = 0; l < config_.layers; ++l) {
    std::string p = "layer" + std::to_string(l) + "/";
    LayerParams lp;
    lp.wq = track(p + "attn_wq", randn({d, d}));
    lp.bq = track(p + "attn_bq", zeros({1, d}));
    lp.wk = track(p + "attn_wk", randn({d, d}));
    lp.bk = track(p + "attn_bk", zeros({1, d}));
    lp.wv = track(p + "attn_wv", randn({d, d}));
    lp.bv = track(p + "attn_bv", zeros({1, d}));
    lp.wo = track(p + "attn_wo", randn({d, d}));
    lp.bo = track(p + "attn_bo", zeros({1, d}));
    lp.ln1_g = track(p + "ln1_g", ones({1, d}));
    lp.ln1_b = track(p + "ln1_b", zeros({1, d}));
    lp.ff_w1 = track(p + "ff_w1", randn({d, config_.ff_hidden}));
    lp.ff_b1 = track(p + "ff_b1", zeros({1, config_.ff_hidden}));
    lp.ff_w2 = track(p + "ff_w2", randn({config_.ff_hidden, d}));
    lp.ff_b2 = track(p + "ff_b2", zeros({1, d}));
    lp.ln2_g = track(p + "ln2_g", ones({1, d}));
    lp.ln2_b = track(p + "ln2_b", zeros({1, d}));
    layers_.push_back(std::move(lp));
  }

  // candidate spaces cover real entities only, never the special tokens
  for (uint32_t g = 0; g < catalog.num_groups(); ++g)
    heads_.push_back(track(
        "head/g" + std::to_string(g),
        randn({d, vocab_sizes_[g] - Vocabulary::kNumSpecials})));

  nsp_w_ = track("nsp_w", randn({d, 1}));
  nsp_b_ = track("nsp_b", zeros({1, 1}));
}

Parameter& TableEncoderModel::parameter(const std::string& name) {
  for (auto& p : params_)
    if (p.name == name) return p;
  throw ConfigError("no parameter named " + name);
}

const Tensor& TableEncoderModel::embedding_table(uint32_t group) const {
  if (group >= group_tables_.size()) throw IndexError("group out of range");
  return group_tables_[group];
}

const Tensor& TableEncoderModel::output_head(uint32_t group) const {
  if (group >= heads_.size()) throw IndexError("group out of range");
  return heads_[group];
}

Tensor TableEncoderModel::embed_sequence(const Sentence& sentence) const {
  if (sentence.tokens.empty())
    throw ShapeError("cannot embed an empty sentence");
  std::vector<Tensor> parts;
  parts.reserve(sentence.tokens.size());
  for (const auto& t : sentence.tokens) {
    if (t.column == catalog_.special_column()) {
      parts.push_back(embedding_lookup(special_, {t.token}));
    } else {
      uint32_t g = catalog_.group_of(t.column);
      parts.push_back(embedding_lookup(group_tables_.at(g), {t.token}));
    }
  }
  return parts.size() == 1 ? parts[0] : concat(parts, 0);
}

Tensor TableEncoderModel::encode(const Tensor& input, AttentionRecord* record,
                                 const std::vector<uint8_t>* key_valid) const {
  const size_t d = config_.dim;
  const size_t heads = config_.heads;
  const size_t dh = d / heads;
  const size_t seq = input.rows();
  if (input.cols() != d) throw ShapeError("encode: input width != model dim");

  Tensor mask_row;
  if (key_valid) {
    if (key_valid->size() != seq)
      throw ShapeError("encode: key mask length != sequence length");
    std::vector<double> m(seq, 0.0);
    for (size_t i = 0; i < seq; ++i)
      if (!(*key_valid)[i]) m[i] = -1e30;
    mask_row = Tensor::from_values({1, seq}, std::move(m));
  }
  if (record) {
    record->seq_len = seq;
    record->weights.assign(config_.layers,
                           std::vector<std::vector<double>>(heads));
  }

  Tensor x = input;
  for (size_t l = 0; l < config_.layers; ++l) {
    const LayerParams& lp = layers_[l];
    Tensor q = add(matmul(x, lp.wq), lp.bq);
    Tensor k = add(matmul(x, lp.wk), lp.bk);
    Tensor v = add(matmul(x, lp.wv), lp.bv);
    std::vector<Tensor> ctx;
    ctx.reserve(heads);
    for (size_t h = 0; h < heads; ++h) {
      Tensor qh = slice(q, 1, h * dh, dh);
      Tensor kh = slice(k, 1, h * dh, dh);
      Tensor vh = slice(v, 1, h * dh, dh);
      Tensor scores = scale(matmul(qh, transpose(kh)), 1.0 / std::sqrt((double)dh));
      if (mask_row.defined()) scores = add(scores, mask_row);
      Tensor attn = row_softmax(scores);
      if (record) record->weights[l][h] = attn.values();
      ctx.push_back(matmul(attn, vh));
    }
    Tensor merged = heads == 1 ? ctx[0] : concat(ctx, 1);
    Tensor attn_out = add(matmul(merged, lp.wo), lp.bo);
    x = layer_norm(add(x, attn_out), lp.ln1_g, lp.ln1_b);
    Tensor hidden = add(matmul(x, lp.ff_w1), lp.ff_b1);
    hidden = config_.activation == Activation::Gelu ? gelu(hidden) : relu(hidden);
    Tensor ff_out = add(matmul(hidden, lp.ff_w2), lp.ff_b2);
    x = layer_norm(add(x, ff_out), lp.ln2_g, lp.ln2_b);
  }
  return x;
}

Tensor TableEncoderModel::mlm_logits(const Tensor& output, size_t position,
                                     uint32_t target_column) const {
  if (position >= output.rows())
    throw IndexError("mlm_logits: position out of range");
  if (target_column >= catalog_.num_columns())
    throw NoHeadForColumnError("no output head for column id " +
                               std::to_string(target_column));
  uint32_t g = catalog_.group_of(target_column);
  Tensor o = slice(output, 0, position, 1);  // [1, d]
  return matmul(o, heads_.at(g));            // [1, |V_g|]
}

Tensor TableEncoderModel::nsp_score(const Tensor& output) const {
  Tensor cls = slice(output, 0, 0, 1);
  return add(matmul(cls, nsp_w_), nsp_b_);  // [1, 1]
}

Tensor TableEncoderModel::mlm_instance_logits(const MaskedSentence& m,
                                              AttentionRecord* record) const {
  Tensor out = encode(embed_sequence(m.base), record);
  return mlm_logits(out, m.mask_pos, m.target_column);
}

Tensor TableEncoderModel::nsp_pair_score(const SentencePair& p,
                                         AttentionRecord* record) const {
  Sentence seq =
      build_pair_sequence(p.first, p.second, catalog_.special_column());
  return nsp_score(encode(embed_sequence(seq), record));
}

void TableEncoderModel::zero_grad() {
  for (auto& p : params_) p.value.zero_grad();
}

uint64_t TableEncoderModel::parameter_hash() const {
  uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto& p : params_) {
    h = fnv1a(p.name.data(), p.name.size(), h);
    h = fnv1a(p.value.values().data(), p.value.values().size() * sizeof(double), h);
  }
  return h;
}

GradCheckReport model_grad_check(TableEncoderModel& model,
                                 const std::function<Tensor()>& loss_fn,
                                 double h, double tol) {
  model.zero_grad();
  Tensor loss = loss_fn();
  backward(loss);
  std::vector<std::vector<double>> analytic;
  for (auto& p : model.parameters()) {
    p.value.node()->ensure_grad();
    analytic.push_back(p.value.node()->grad);
  }
  GradCheckReport rep;
  rep.tolerance = tol;
  NoGradGuard no_grad;
  auto& params = model.parameters();
  for (size_t pi = 0; pi < params.size(); ++pi) {
    auto& vals = params[pi].value.raw();
    for (size_t c = 0; c < vals.size(); ++c) {
      double orig = vals[c];
      vals[c] = orig + h;
      double up = loss_fn().item();
      vals[c] = orig - h;
      double down = loss_fn().item();
      vals[c] = orig;
      double numeric = (up - down) / (2.0 * h);
      double a = analytic[pi][c];
      double denom = std::max({std::fabs(a), std::fabs(numeric), 1e-4});
      double rel = std::fabs(a - numeric) / denom;
      if (rel > rep.max_rel_err) {
        rep.max_rel_err = rel;
        rep.worst_input = pi;
        rep.worst_coord = c;
        rep.analytic = a;
        rep.numeric = numeric;
      }
    }
  }
  rep.pass = rep.max_rel_err < tol;
  return rep;
}

void init_from_word2vec(TableEncoderModel& model, const W2vVectors& vectors,
                        uint64_t seed) {
  const size_t d = model.config().dim;
  if (vectors.dim != d)
    throw DimensionMismatchError(
        "word2vec dimension " + std::to_string(vectors.dim) +
        " does not match model dim " + std::to_string(d));
  Rng rng = Rng(seed).child(0x77e2);
  for (uint32_t g = 0; g < model.catalog().num_groups(); ++g) {
    Parameter& table = model.parameter("emb/g" + std::to_string(g));
    auto& vals = table.value.raw();
    size_t rows = table.value.rows();
    for (uint32_t t = 0; t < rows; ++t) {
      auto it = t < Vocabulary::kNumSpecials
                    ? vectors.by_token.end()
                    : vectors.by_token.find({g, t});
      if (it != vectors.by_token.end()) {
        if (it->second.size() != d)
          throw DimensionMismatchError("word2vec vector has wrong length");
        std::copy(it->second.begin(), it->second.end(), vals.begin() + t * d);
      } else {
        for (size_t j = 0; j < d; ++j)
          vals[t * d + j] = rng.normal(0.0, model.config().init_std);
      }
    }
  }
}

}  // namespace reltab
