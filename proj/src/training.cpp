#include "reltab/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <set>

#include "json.hpp"
#include "reltab/error.hpp"
#include "reltab/skipgram.hpp"

namespace reltab {

using ojson = nlohmann::ordered_json;

void write_loss_log(const std::string& path, const std::vector<LossReport>& reports) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IOError("cannot write loss log: " + path);
  for (const auto& r : reports) {
    ojson j;
    j["stage"] = r.stage;
    j["epoch"] = r.epoch;
    j["l_mlm"] = r.l_mlm;
    j["l_nsp"] = r.l_nsp;
    j["l_total"] = r.l_total;
    j["wall_ms"] = r.wall_ms;
    out << j.dump() << '\n';
  }
}

void Adam::step(std::vector<Parameter>& params) {
  ++t_;
  const double bc1 = 1.0 - std::pow(config_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(config_.beta2, static_cast<double>(t_));
  for (auto& p : params) {
    auto& vals = p.value.raw();
    p.value.node()->ensure_grad();
    const auto& grad = p.value.node()->grad;
    if (grad.size() != vals.size())
      throw ShapeError("gradient shape mismatch for " + p.name);
    Slot& slot = slots_[p.name];
    if (slot.m.empty()) {
      slot.m.assign(vals.size(), 0.0);
      slot.v.assign(vals.size(), 0.0);
    } else if (slot.m.size() != vals.size()) {
      throw ShapeError("optimizer state shape mismatch for " + p.name);
    }
    for (size_t i = 0; i < vals.size(); ++i) {
      double g = grad[i];
      if (!std::isfinite(g))
        throw NonFiniteError("non-finite gradient in " + p.name);
      slot.m[i] = config_.beta1 * slot.m[i] + (1.0 - config_.beta1) * g;
      slot.v[i] = config_.beta2 * slot.v[i] + (1.0 - config_.beta2) * g * g;
      double m_hat = slot.m[i] / bc1;
      double v_hat = slot.v[i] / bc2;
      vals[i] -= config_.learning_rate * m_hat / (std::sqrt(v_hat) + config_.epsilon);
    }
  }
}

void Adam::zero_grad(std::vector<Parameter>& params) {
  for (auto& p : params) p.value.zero_grad();
}

// ---------------------------------------------------------------------------

Tensor mlm_loss(const TableEncoderModel& model,
                const std::vector<MaskedSentence>& batch) {
  if (batch.empty()) throw ConfigError("mlm_loss: empty batch");
  Tensor total;
  for (const auto& m : batch) {
    if (m.target_token < Vocabulary::kNumSpecials)
      throw IndexError("masked target is a special token");
    Tensor ce = cross_entropy(model.mlm_instance_logits(m),
                              m.target_token - Vocabulary::kNumSpecials);
    total = total.defined() ? add(total, ce) : ce;
  }
  return scale(total, 1.0 / static_cast<double>(batch.size()));
}

Tensor nsp_loss(const TableEncoderModel& model,
                const std::vector<NspInstance>& batch) {
  if (batch.empty()) throw ConfigError("nsp_loss: empty batch");
  Tensor total;
  for (const auto& inst : batch) {
    if (inst.negatives.empty())
      throw ConfigError("nsp_loss: positive without negatives");
    // -log s(v_pos) = softplus(-v_pos); -log(1 - s(v_neg)) = softplus(v_neg)
    Tensor loss = softplus(scale(model.nsp_pair_score(inst.positive), -1.0));
    for (const auto& neg : inst.negatives)
      loss = add(loss, softplus(model.nsp_pair_score(neg)));
    total = total.defined() ? add(total, loss) : loss;
  }
  return scale(total, 1.0 / static_cast<double>(batch.size()));
}

// ---------------------------------------------------------------------------

namespace {

using Clock = std::chrono::steady_clock;

uint64_t ms_since(Clock::time_point start) {
  return static_cast<uint64_t>(
      std::chrono::duration_cast<std::chrono::milliseconds>(Clock::now() - start)
          .count());
}

std::vector<Sentence> filter_by_row(const std::vector<Sentence>& sentences,
                                    const std::set<size_t>* keep) {
  if (!keep) return sentences;
  std::vector<Sentence> out;
  out.reserve(keep->size());
  for (const auto& s : sentences)
    if (keep->count(s.row_index)) out.push_back(s);
  return out;
}

struct TaskContext {
  std::optional<SplitAssignment> split;
  std::optional<std::set<size_t>> train_rows;  // rows of the task table
  std::optional<uint32_t> target_column;
};

TaskContext resolve_task(const Dataset& db, const TrainConfig& cfg) {
  TaskContext ctx;
  if (!cfg.task) return ctx;
  const TaskSpec& task = *cfg.task;
  ctx.target_column = db.catalog.id_of(task.target_table, task.target_column);
  ctx.split = task_split(db, task, cfg.split_ratios, cfg.seed);
  ctx.train_rows.emplace(ctx.split->train.begin(), ctx.split->train.end());
  if (task.pair_fk && task.pair_fk->from_table != task.target_table)
    throw ConfigError("task pair fk must originate in the target table");
  return ctx;
}

// sentences available for training, with task-table rows restricted to the
// train split
std::map<std::string, std::vector<Sentence>> training_sentences(
    const Dataset& db, const TrainConfig& cfg, const TaskContext& ctx) {
  std::map<std::string, std::vector<Sentence>> out;
  for (const auto& [table, sents] : db.sentences) {
    const std::set<size_t>* keep = nullptr;
    if (cfg.task && table == cfg.task->target_table && ctx.train_rows)
      keep = &*ctx.train_rows;
    out[table] = filter_by_row(sents, keep);
  }
  return out;
}

struct EpochStats {
  double mlm_sum = 0.0, nsp_sum = 0.0;
  size_t mlm_count = 0, nsp_count = 0;
  double mlm() const { return mlm_count ? mlm_sum / mlm_count : 0.0; }
  double nsp() const { return nsp_count ? nsp_sum / nsp_count : 0.0; }
};

template <class Fn>
void run_batches(size_t n, size_t batch_size, const Fn& fn) {
  for (size_t start = 0; start < n; start += batch_size)
    fn(start, std::min(n, start + batch_size));
}

// one MLM epoch over pre-built sentences, remasked per epoch
EpochStats mlm_epoch(TableEncoderModel& model, Adam& adam,
                     const std::vector<const Sentence*>& pool,
                     const std::set<uint32_t>& maskable, size_t batch_size,
                     Rng& rng, size_t stage, size_t epoch) {
  std::vector<MaskedSentence> instances;
  instances.reserve(pool.size());
  for (const Sentence* s : pool) {
    bool has_maskable = false;
    for (const auto& t : s->tokens)
      if (maskable.count(t.column)) { has_maskable = true; break; }
    if (!has_maskable) continue;
    instances.push_back(apply_mask(*s, maskable, rng));
  }
  rng.shuffle(instances);

  EpochStats stats;
  size_t batch_id = 0;
  run_batches(instances.size(), batch_size, [&](size_t lo, size_t hi) {
    std::vector<MaskedSentence> batch(instances.begin() + lo,
                                      instances.begin() + hi);
    try {
      Tensor loss = mlm_loss(model, batch);
      stats.mlm_sum += loss.item() * static_cast<double>(batch.size());
      stats.mlm_count += batch.size();
      adam.zero_grad(model.parameters());
      backward(loss);
      adam.step(model.parameters());
    } catch (const NonFiniteError& e) {
      throw NonFiniteError("stage " + std::to_string(stage) + " epoch " +
                           std::to_string(epoch) + " batch " +
                           std::to_string(batch_id) + ": " + e.what());
    }
    ++batch_id;
  });
  return stats;
}

std::vector<const Sentence*> as_pointers(const std::vector<Sentence>& sents) {
  std::vector<const Sentence*> out;
  out.reserve(sents.size());
  for (const auto& s : sents) out.push_back(&s);
  return out;
}

}  // namespace

SplitAssignment task_split(const Dataset& db, const TaskSpec& task,
                           std::array<double, 3> ratios, uint64_t seed) {
  const TableDef& tdef = db.schema.table(task.target_table);
  auto cell = tdef.column_index(task.target_column);
  if (!cell)
    throw ConfigError("task target column " + task.target_table + "." +
                      task.target_column + " does not exist");
  Rng split_rng = Rng(seed).child(0x59171);
  return split_grouped(db.table_rows(task.target_table), *cell, ratios, split_rng);
}

TrainResult train_relbert_a(const Dataset& db, const TrainConfig& cfg) {
  if (cfg.variant != 'a' && cfg.variant != 'A')
    throw ConfigError("train_relbert_a called with variant " +
                      std::string(1, cfg.variant));
  TaskContext ctx = resolve_task(db, cfg);
  auto train_sents = training_sentences(db, cfg, ctx);
  auto fks = join_compatible_pairs(db.schema);
  const bool have_fks = !fks.empty();
  const bool use_nsp = cfg.use_nsp && have_fks;

  TableEncoderModel model(db.catalog, db.vocabs, cfg.model_config(), cfg.seed);
  if (cfg.init_word2vec) {
    UnifiedSpace space(db.catalog, db.vocabs);
    SkipGramConfig sg;
    sg.dim = cfg.dim;
    sg.epochs = cfg.word2vec_epochs;
    sg.seed = cfg.seed;
    SkipGramModel w2v =
        train_skipgram(table2vec_corpus(db.catalog, space, train_sents),
                       space.size(), sg);
    init_from_word2vec(model, w2v_from_skipgram(w2v, space, db.catalog, db.vocabs),
                       cfg.seed);
  }
  Adam adam(AdamConfig{cfg.learning_rate, 0.9, 0.999, 1e-8});
  std::vector<LossReport> reports;
  Rng root(cfg.seed);

  // stage 1: MLM over pairwise join sentences (row sentences without FKs)
  std::vector<Sentence> stage1_pool;
  if (have_fks) {
    for (const auto& fk : fks) {
      auto pairs = materialize_join_sentences(db.catalog, fk,
                                              train_sents.at(fk.to_table),
                                              train_sents.at(fk.from_table));
      for (const auto& p : pairs)
        stage1_pool.push_back(
            build_pair_sequence(p.first, p.second, db.catalog.special_column()));
    }
  } else {
    for (const auto& [table, sents] : train_sents)
      stage1_pool.insert(stage1_pool.end(), sents.begin(), sents.end());
  }
  std::set<uint32_t> pretrain_maskable = maskable_columns(db.catalog, cfg.mask_policy);

  for (size_t epoch = 0; epoch < cfg.pretrain_epochs; ++epoch) {
    auto start = Clock::now();
    Rng erng = root.child(Rng::mix(1, epoch));
    EpochStats stats = mlm_epoch(model, adam, as_pointers(stage1_pool),
                                 pretrain_maskable, cfg.batch_size, erng, 1, epoch);
    double l_mlm = stats.mlm();
    reports.push_back({1, epoch, l_mlm, 0.0, l_mlm, ms_since(start)});
  }

  // stage 2: joint MLM + NSP on the task pairs
  MaskPolicy ft_policy = cfg.mask_policy;
  if (ctx.target_column) ft_policy.only_column = *ctx.target_column;
  std::set<uint32_t> ft_maskable = maskable_columns(db.catalog, ft_policy);

  std::vector<std::pair<ForeignKeyDef, std::vector<SentencePair>>> task_pairs;
  if (use_nsp) {
    if (cfg.task && cfg.task->pair_fk) {
      const ForeignKeyDef& fk = *cfg.task->pair_fk;
      task_pairs.emplace_back(fk, materialize_join_sentences(
                                      db.catalog, fk, train_sents.at(fk.to_table),
                                      train_sents.at(fk.from_table)));
    } else {
      for (const auto& fk : fks)
        task_pairs.emplace_back(fk, materialize_join_sentences(
                                        db.catalog, fk, train_sents.at(fk.to_table),
                                        train_sents.at(fk.from_table)));
    }
  }
  bool have_pairs = false;
  for (const auto& [fk, ps] : task_pairs)
    if (!ps.empty()) have_pairs = true;

  for (size_t epoch = 0; epoch < cfg.finetune_epochs; ++epoch) {
    auto start = Clock::now();
    Rng erng = root.child(Rng::mix(2, epoch));

    if (!use_nsp || !have_pairs) {
      // MLM-only fine-tuning (single-table autocompletion)
      std::vector<const Sentence*> pool;
      if (cfg.task) {
        for (const auto& s : train_sents.at(cfg.task->target_table))
          pool.push_back(&s);
      } else {
        pool = as_pointers(stage1_pool);
      }
      EpochStats stats = mlm_epoch(model, adam, pool, ft_maskable,
                                   cfg.batch_size, erng, 2, epoch);
      double l_mlm = stats.mlm();
      reports.push_back({2, epoch, l_mlm, 0.0, l_mlm, ms_since(start)});
      continue;
    }

    // negatives are resampled every epoch, per constraint
    std::vector<NspInstance> instances;
    for (const auto& [fk, positives] : task_pairs) {
      if (positives.empty()) continue;
      auto with_negs = sample_negatives(db.catalog, fk, positives,
                                        train_sents.at(fk.from_table),
                                        cfg.negative_samples, erng);
      instances.insert(instances.end(),
                       std::make_move_iterator(with_negs.begin()),
                       std::make_move_iterator(with_negs.end()));
    }
    std::vector<size_t> order(instances.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;
    erng.shuffle(order);

    EpochStats stats;
    size_t batch_id = 0;
    run_batches(order.size(), cfg.batch_size, [&](size_t lo, size_t hi) {
      std::vector<MaskedSentence> mlm_batch;
      std::vector<NspInstance> nsp_batch;
      for (size_t i = lo; i < hi; ++i) {
        const NspInstance& inst = instances[order[i]];
        Sentence seq = build_pair_sequence(inst.positive.first,
                                           inst.positive.second,
                                           db.catalog.special_column());
        bool has_maskable = false;
        for (const auto& t : seq.tokens)
          if (ft_maskable.count(t.column)) { has_maskable = true; break; }
        if (has_maskable) mlm_batch.push_back(apply_mask(seq, ft_maskable, erng));
        nsp_batch.push_back(inst);
      }
      try {
        Tensor l_nsp_t = nsp_loss(model, nsp_batch);
        Tensor loss = l_nsp_t;
        if (!mlm_batch.empty()) {
          Tensor l_mlm_t = mlm_loss(model, mlm_batch);
          stats.mlm_sum += l_mlm_t.item() * static_cast<double>(mlm_batch.size());
          stats.mlm_count += mlm_batch.size();
          loss = add(l_mlm_t, l_nsp_t);  // L_A = L_mlm + L_nsp
        }
        stats.nsp_sum += l_nsp_t.item() * static_cast<double>(nsp_batch.size());
        stats.nsp_count += nsp_batch.size();
        adam.zero_grad(model.parameters());
        backward(loss);
        adam.step(model.parameters());
      } catch (const NonFiniteError& e) {
        throw NonFiniteError("stage 2 epoch " + std::to_string(epoch) +
                             " batch " + std::to_string(batch_id) + ": " +
                             e.what());
      }
      ++batch_id;
    });
    double l_mlm = stats.mlm(), l_nsp = stats.nsp();
    reports.push_back({2, epoch, l_mlm, l_nsp, l_mlm + l_nsp, ms_since(start)});
  }

  return TrainResult{std::move(model), std::move(reports), std::move(ctx.split)};
}

TrainResult train_relbert_j(const Dataset& db, const TrainConfig& cfg) {
  if (cfg.variant != 'j' && cfg.variant != 'J')
    throw ConfigError("train_relbert_j called with variant " +
                      std::string(1, cfg.variant));
  auto fks = join_compatible_pairs(db.schema);
  if (db.schema.tables.size() < 2 || fks.empty())
    throw ConfigError("relbert-j needs at least two tables sharing a foreign key");

  TaskContext ctx = resolve_task(db, cfg);
  auto train_sents = training_sentences(db, cfg, ctx);

  TableEncoderModel model(db.catalog, db.vocabs, cfg.model_config(), cfg.seed);
  if (cfg.init_word2vec) {
    UnifiedSpace space(db.catalog, db.vocabs);
    SkipGramConfig sg;
    sg.dim = cfg.dim;
    sg.epochs = cfg.word2vec_epochs;
    sg.seed = cfg.seed;
    SkipGramModel w2v =
        train_skipgram(table2vec_corpus(db.catalog, space, train_sents),
                       space.size(), sg);
    init_from_word2vec(model, w2v_from_skipgram(w2v, space, db.catalog, db.vocabs),
                       cfg.seed);
  }
  Adam adam(AdamConfig{cfg.learning_rate, 0.9, 0.999, 1e-8});
  std::vector<LossReport> reports;
  Rng root(cfg.seed);
  std::set<uint32_t> maskable = maskable_columns(db.catalog, cfg.mask_policy);

  // stage 1: independent masked-language models per table (disjoint batches)
  for (size_t epoch = 0; epoch < cfg.pretrain_epochs; ++epoch) {
    auto start = Clock::now();
    EpochStats stats;
    size_t table_idx = 0;
    for (const auto& t : db.schema.tables) {
      Rng erng = root.child(Rng::mix(0x100 + table_idx, epoch));
      auto it = train_sents.find(t.name);
      ++table_idx;
      if (it == train_sents.end() || it->second.empty()) continue;
      EpochStats st = mlm_epoch(model, adam, as_pointers(it->second), maskable,
                                cfg.batch_size, erng, 1, epoch);
      stats.mlm_sum += st.mlm_sum;
      stats.mlm_count += st.mlm_count;
    }
    double l_mlm = stats.mlm();
    reports.push_back({1, epoch, l_mlm, 0.0, l_mlm, ms_since(start)});
  }

  // stage 2: NSP fine-tuning over the join pairs
  std::vector<std::pair<ForeignKeyDef, std::vector<SentencePair>>> by_fk;
  if (cfg.task && cfg.task->pair_fk) {
    const ForeignKeyDef& fk = *cfg.task->pair_fk;
    by_fk.emplace_back(fk, materialize_join_sentences(
                               db.catalog, fk, train_sents.at(fk.to_table),
                               train_sents.at(fk.from_table)));
  } else {
    for (const auto& fk : fks)
      by_fk.emplace_back(fk, materialize_join_sentences(
                                 db.catalog, fk, train_sents.at(fk.to_table),
                                 train_sents.at(fk.from_table)));
  }

  for (size_t epoch = 0; epoch < cfg.finetune_epochs; ++epoch) {
    auto start = Clock::now();
    Rng erng = root.child(Rng::mix(0x200, epoch));
    std::vector<NspInstance> instances;
    for (const auto& [fk, positives] : by_fk) {
      if (positives.empty()) continue;
      auto with_negs = sample_negatives(db.catalog, fk, positives,
                                        train_sents.at(fk.from_table),
                                        cfg.negative_samples, erng);
      instances.insert(instances.end(),
                       std::make_move_iterator(with_negs.begin()),
                       std::make_move_iterator(with_negs.end()));
    }
    if (instances.empty())
      throw ConfigError("relbert-j stage 2 has no join pairs to train on");
    std::vector<size_t> order(instances.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;
    erng.shuffle(order);

    EpochStats stats;
    size_t batch_id = 0;
    run_batches(order.size(), cfg.batch_size, [&](size_t lo, size_t hi) {
      std::vector<NspInstance> batch;
      for (size_t i = lo; i < hi; ++i) batch.push_back(instances[order[i]]);
      try {
        Tensor loss = nsp_loss(model, batch);
        stats.nsp_sum += loss.item() * static_cast<double>(batch.size());
        stats.nsp_count += batch.size();
        adam.zero_grad(model.parameters());
        backward(loss);
        adam.step(model.parameters());
      } catch (const NonFiniteError& e) {
        throw NonFiniteError("stage 2 epoch " + std::to_string(epoch) +
                             " batch " + std::to_string(batch_id) + ": " +
                             e.what());
      }
      ++batch_id;
    });
    double l_nsp = stats.nsp();
    reports.push_back({2, epoch, 0.0, l_nsp, l_nsp, ms_since(start)});
  }

  return TrainResult{std::move(model), std::move(reports), std::move(ctx.split)};
}

}  // namespace reltab
