#include "reltab/skipgram.hpp"

#include <algorithm>
#include <cmath>

#include "reltab/error.hpp"
#include "reltab/rng.hpp"

namespace reltab {

SkipGramModel::SkipGramModel(size_t vocab_size, size_t dim, uint64_t seed)
    : vocab_(vocab_size), dim_(dim) {
  Rng rng = Rng(seed).child(0x5916);
  input_.resize(vocab_ * dim_);
  output_.assign(vocab_ * dim_, 0.0);
  double half = 0.5 / static_cast<double>(dim_);
  for (double& v : input_) v = (rng.uniform_real() * 2.0 - 1.0) * half;
  counts.assign(vocab_, 0);
}

double SkipGramModel::cosine(size_t a, size_t b) const {
  const double* va = input_vector(a);
  const double* vb = input_vector(b);
  double dot = 0, na = 0, nb = 0;
  for (size_t j = 0; j < dim_; ++j) {
    dot += va[j] * vb[j];
    na += va[j] * va[j];
    nb += vb[j] * vb[j];
  }
  if (na == 0.0 || nb == 0.0) return 0.0;
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

namespace {

double stable_sigmoid(double x) {
  return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
}

// cumulative unigram^power table; sampling is a binary search over it
struct NegativeTable {
  std::vector<double> cdf;
  std::vector<uint32_t> ids;

  NegativeTable(const std::vector<uint64_t>& counts, double power) {
    double total = 0;
    for (size_t i = 0; i < counts.size(); ++i) {
      if (counts[i] == 0) continue;
      total += std::pow(static_cast<double>(counts[i]), power);
      ids.push_back(static_cast<uint32_t>(i));
      cdf.push_back(total);
    }
    for (double& c : cdf) c /= total;
  }

  uint32_t draw(Rng& rng) const {
    double u = rng.uniform_real();
    size_t lo = std::lower_bound(cdf.begin(), cdf.end(), u) - cdf.begin();
    if (lo >= ids.size()) lo = ids.size() - 1;
    return ids[lo];
  }
};

}  // namespace

SkipGramModel train_skipgram(const std::vector<std::vector<uint32_t>>& corpus,
                             size_t vocab_size, const SkipGramConfig& config) {
  if (corpus.empty()) throw ConfigError("skip-gram corpus is empty");
  SkipGramModel model(vocab_size, config.dim, config.seed);
  for (const auto& sent : corpus)
    for (uint32_t t : sent) {
      if (t >= vocab_size) throw IndexError("corpus token exceeds vocab size");
      ++model.counts[t];
    }
  if (config.epochs == 0) return model;

  NegativeTable table(model.counts, config.sample_power);
  if (table.ids.size() < 2)
    throw InsufficientRowsError("skip-gram needs at least two distinct tokens");

  // total (center, context) pairs per epoch, for the linear lr decay
  uint64_t pairs_per_epoch = 0;
  for (const auto& sent : corpus) {
    size_t n = sent.size();
    if (n < 2) continue;
    if (config.window == 0) {
      pairs_per_epoch += static_cast<uint64_t>(n) * (n - 1);
    } else {
      for (size_t i = 0; i < n; ++i) {
        size_t lo = i > config.window ? i - config.window : 0;
        size_t hi = std::min(n - 1, i + config.window);
        pairs_per_epoch += hi - lo;  // window minus the center itself
      }
    }
  }
  if (pairs_per_epoch == 0)
    throw InsufficientRowsError("skip-gram corpus has no co-occurring pairs");
  const double total_pairs =
      static_cast<double>(pairs_per_epoch) * static_cast<double>(config.epochs);

  Rng order_rng = Rng(config.seed).child(0xc0de);
  Rng neg_rng = Rng(config.seed).child(0x9e9);
  // with only two distinct tokens the true context must stay eligible,
  // otherwise rejection sampling cannot terminate
  const bool reject_context = table.ids.size() >= 3;
  std::vector<size_t> order(corpus.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;

  const size_t dim = config.dim;
  std::vector<double> accum(dim);
  double* input = model.raw_input().data();
  double* output = model.raw_output().data();
  uint64_t processed = 0;

  for (size_t epoch = 0; epoch < config.epochs; ++epoch) {
    order_rng.shuffle(order);
    for (size_t si : order) {
      const auto& sent = corpus[si];
      size_t n = sent.size();
      if (n < 2) continue;
      for (size_t i = 0; i < n; ++i) {
        uint32_t center = sent[i];
        size_t lo = 0, hi = n - 1;
        if (config.window > 0) {
          lo = i > config.window ? i - config.window : 0;
          hi = std::min(n - 1, i + config.window);
        }
        for (size_t j = lo; j <= hi; ++j) {
          if (j == i) continue;
          uint32_t context = sent[j];
          double lr = config.learning_rate *
                      std::max(1.0 - static_cast<double>(processed) / total_pairs,
                               1e-4);
          ++processed;

          double* vc = input + static_cast<size_t>(center) * dim;
          std::fill(accum.begin(), accum.end(), 0.0);
          for (size_t s = 0; s <= config.negatives; ++s) {
            uint32_t target;
            double label;
            if (s == 0) {
              target = context;
              label = 1.0;
            } else {
              // never the center itself, never the true context
              do {
                target = table.draw(neg_rng);
              } while (target == center || (reject_context && target == context));
              label = 0.0;
            }
            double* vt = output + static_cast<size_t>(target) * dim;
            double dot = 0;
            for (size_t dcoord = 0; dcoord < dim; ++dcoord)
              dot += vc[dcoord] * vt[dcoord];
            double g = (label - stable_sigmoid(dot)) * lr;
            for (size_t dcoord = 0; dcoord < dim; ++dcoord) {
              accum[dcoord] += g * vt[dcoord];
              vt[dcoord] += g * vc[dcoord];
            }
          }
          for (size_t dcoord = 0; dcoord < dim; ++dcoord)
            vc[dcoord] += accum[dcoord];
        }
      }
    }
  }
  return model;
}

// ---------------------------------------------------------------------------

UnifiedSpace::UnifiedSpace(const ColumnCatalog& catalog, const VocabSet& vocabs) {
  offsets_.reserve(catalog.num_columns());
  for (uint32_t c = 0; c < catalog.num_columns(); ++c) {
    offsets_.push_back(total_);
    total_ += vocabs.for_column(catalog, c).size();
  }
  offsets_.push_back(total_);
}

size_t UnifiedSpace::id_of(uint32_t column, uint32_t token) const {
  if (column + 1 >= offsets_.size()) throw IndexError("column out of range");
  size_t id = offsets_[column] + token;
  if (id >= offsets_[column + 1]) throw IndexError("token out of column range");
  return id;
}

std::pair<uint32_t, uint32_t> UnifiedSpace::decode(size_t id) const {
  if (id >= total_) throw IndexError("unified id out of range");
  auto it = std::upper_bound(offsets_.begin(), offsets_.end(), id);
  uint32_t column = static_cast<uint32_t>(it - offsets_.begin()) - 1;
  return {column, static_cast<uint32_t>(id - offsets_[column])};
}

std::string UnifiedSpace::label(size_t id, const ColumnCatalog& catalog,
                                const VocabSet& vocabs) const {
  auto [column, token] = decode(id);
  return catalog.table_of(column) + "." + catalog.column_of(column) + ":" +
         vocabs.for_column(catalog, column).decode(token);
}

std::vector<std::vector<uint32_t>> table2vec_corpus(
    const ColumnCatalog& catalog, const UnifiedSpace& space,
    const std::map<std::string, std::vector<Sentence>>& sentences) {
  std::vector<std::vector<uint32_t>> corpus;
  for (const auto& t : catalog.schema().tables) {
    auto it = sentences.find(t.name);
    if (it == sentences.end()) continue;
    for (const Sentence& s : it->second) {
      std::vector<uint32_t> ids;
      ids.reserve(s.size());
      for (const auto& tok : s.tokens)
        ids.push_back(static_cast<uint32_t>(space.id_of(tok.column, tok.token)));
      corpus.push_back(std::move(ids));
    }
  }
  return corpus;
}

W2vVectors w2v_from_skipgram(const SkipGramModel& model, const UnifiedSpace& space,
                             const ColumnCatalog& catalog, const VocabSet& vocabs) {
  W2vVectors out;
  out.dim = model.dim();
  for (uint32_t g = 0; g < catalog.num_groups(); ++g) {
    // precedence: primary-key member first, then catalog order
    std::vector<uint32_t> members;
    for (uint32_t c = 0; c < catalog.num_columns(); ++c)
      if (catalog.group_of(c) == g) members.push_back(c);
    std::stable_sort(members.begin(), members.end(), [&](uint32_t a, uint32_t b) {
      return (catalog.role_of(a) == ColumnRole::PrimaryKey) >
             (catalog.role_of(b) == ColumnRole::PrimaryKey);
    });
    size_t vocab_size = vocabs.group(g).size();
    for (uint32_t t = Vocabulary::kNumSpecials; t < vocab_size; ++t) {
      for (uint32_t c : members) {
        size_t uid = space.id_of(c, t);
        if (model.counts[uid] == 0) continue;
        out.by_token[{g, t}] = std::vector<double>(
            model.input_vector(uid), model.input_vector(uid) + model.dim());
        break;
      }
    }
  }
  return out;
}

}  // namespace reltab
