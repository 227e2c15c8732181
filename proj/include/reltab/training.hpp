#pragma once
#include <array>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "reltab/corpus.hpp"
#include "reltab/encoder.hpp"
#include "reltab/evaluation.hpp"

namespace reltab {

struct TrainConfig {
  char variant = 'a';  // 'a' or 'j'
  size_t dim = 300;
  size_t layers = 4;  // 6 for imdb-scale
  size_t heads = 4;
  size_t ff_hidden = 1200;
  Activation activation = Activation::Gelu;
  size_t batch_size = 32;
  size_t pretrain_epochs = 20;
  size_t finetune_epochs = 50;
  double learning_rate = 1e-4;
  size_t negative_samples = 10;
  uint64_t seed = 0;
  MaskPolicy mask_policy;  // keys excluded by default
  bool use_nsp = true;     // forced off when the schema has no FKs
  bool init_word2vec = false;
  size_t word2vec_epochs = 5;
  std::optional<TaskSpec> task;
  std::array<double, 3> split_ratios = {0.70, 0.15, 0.15};

  ModelConfig model_config() const {
    return ModelConfig{dim, layers, heads, ff_hidden, activation, 0.02};
  }
};

struct LossReport {
  size_t stage = 1;
  size_t epoch = 0;
  double l_mlm = 0.0;
  double l_nsp = 0.0;
  double l_total = 0.0;
  uint64_t wall_ms = 0;
};

void write_loss_log(const std::string& path, const std::vector<LossReport>& reports);

// ---------------------------------------------------------------------------

struct AdamConfig {
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Adam with bias correction; state is keyed by parameter name.
class Adam {
 public:
  explicit Adam(AdamConfig config = {}) : config_(config) {}

  void step(std::vector<Parameter>& params);
  void zero_grad(std::vector<Parameter>& params);
  uint64_t step_count() const { return t_; }
  const AdamConfig& config() const { return config_; }

 private:
  struct Slot {
    std::vector<double> m, v;
  };
  AdamConfig config_;
  std::map<std::string, Slot> slots_;
  uint64_t t_ = 0;
};

inline void optimizer_step(Adam& optimizer, std::vector<Parameter>& params) {
  optimizer.step(params);
}

// ---------------------------------------------------------------------------

/// Mean masked cross-entropy over the batch (Problem: predict the masked
/// cell within its column's candidate space).
Tensor mlm_loss(const TableEncoderModel& model,
                const std::vector<MaskedSentence>& batch);

/// Mean over positives of -[log s(v_pos) + sum_neg log(1 - s(v_neg))].
Tensor nsp_loss(const TableEncoderModel& model,
                const std::vector<NspInstance>& batch);

struct TrainResult {
  TableEncoderModel model;
  std::vector<LossReport> reports;
  std::optional<SplitAssignment> split;
};

/// The grouped split a training run with this seed would use for the task;
/// evaluation reproduces it from the same inputs.
SplitAssignment task_split(const Dataset& db, const TaskSpec& task,
                           std::array<double, 3> ratios, uint64_t seed);

/// Pairwise-join MLM pretraining, then joint MLM+NSP fine-tuning on the
/// task pairs. Degrades to MLM-only when the schema has no foreign keys.
TrainResult train_relbert_a(const Dataset& db, const TrainConfig& config);

/// Independent per-table MLM pretraining, then NSP-only fine-tuning over
/// the join pairs.
TrainResult train_relbert_j(const Dataset& db, const TrainConfig& config);

}  // namespace reltab
