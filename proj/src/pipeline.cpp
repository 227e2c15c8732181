#include "reltab/pipeline.hpp"

#include <filesystem>
#include <fstream>

#include "reltab/error.hpp"

namespace reltab {

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

Dataset load_dataset(const std::string& schema_path, const std::string& data_dir,
                     const std::vector<CleaningRule>& rules, bool bin_numeric,
                     size_t max_bins) {
  DatabaseSchema schema = load_schema(schema_path);
  TableRows rows;
  for (const auto& t : schema.tables) {
    fs::path csv = fs::path(data_dir) / (t.name + ".csv");
    if (!fs::exists(csv))
      throw IOError("missing table file: " + csv.string());
    auto loaded = load_table_csv(schema, t.name, csv.string());
    rows[t.name] = apply_cleaning_rules(schema, std::move(loaded), rules);
  }
  if (bin_numeric) bin_numeric_columns(schema, rows, max_bins);
  return Dataset::from_rows(std::move(schema), std::move(rows));
}

std::vector<CleaningRule> parse_cleaning_rules(const nlohmann::json& j) {
  std::vector<CleaningRule> rules;
  if (j.is_null()) return rules;
  if (!j.is_array()) throw ConfigError("cleaning_rules must be an array");
  for (const auto& r : j) {
    CleaningRule rule;
    std::string kind = r.at("kind").get<std::string>();
    if (kind == "min_entity_frequency")
      rule.kind = CleaningRule::Kind::MinEntityFrequency;
    else if (kind == "drop_value")
      rule.kind = CleaningRule::Kind::DropValue;
    else if (kind == "max_group_size")
      rule.kind = CleaningRule::Kind::MaxGroupSize;
    else
      throw ConfigError("unknown cleaning rule kind: " + kind);
    rule.table = r.at("table").get<std::string>();
    rule.column = r.at("column").get<std::string>();
    if (r.contains("threshold")) rule.threshold = r["threshold"].get<size_t>();
    if (r.contains("value")) rule.value = r["value"].get<std::string>();
    rules.push_back(std::move(rule));
  }
  return rules;
}

ForeignKeyDef resolve_fk(const DatabaseSchema& schema, const std::string& spec) {
  auto dot = spec.find('.');
  if (dot == std::string::npos)
    throw ConfigError("fk spec must look like table.column: " + spec);
  std::string table = spec.substr(0, dot);
  std::string column = spec.substr(dot + 1);
  for (const auto& fk : schema.foreign_keys)
    if (fk.from_table == table && fk.from_column == column) return fk;
  throw ConfigError("no declared foreign key at " + spec);
}

TaskSpec parse_task(const nlohmann::json& j, const DatabaseSchema& schema) {
  TaskSpec task;
  std::string target = j.at("target").get<std::string>();
  auto dot = target.find('.');
  if (dot == std::string::npos)
    throw ConfigError("task target must look like table.column: " + target);
  task.target_table = target.substr(0, dot);
  task.target_column = target.substr(dot + 1);
  if (j.contains("pair_fk") && !j["pair_fk"].is_null())
    task.pair_fk = resolve_fk(schema, j["pair_fk"].get<std::string>());
  return task;
}

void apply_config_json(const nlohmann::json& j, const DatabaseSchema* schema,
                       TrainConfig& cfg) {
  if (j.is_null()) return;
  if (!j.is_object()) throw ConfigError("config file must hold a JSON object");
  if (j.contains("variant")) {
    std::string v = j["variant"].get<std::string>();
    if (v != "a" && v != "j") throw ConfigError("variant must be \"a\" or \"j\"");
    cfg.variant = v[0];
  }
  if (j.contains("dim")) cfg.dim = j["dim"].get<size_t>();
  if (j.contains("layers")) cfg.layers = j["layers"].get<size_t>();
  if (j.contains("heads")) cfg.heads = j["heads"].get<size_t>();
  if (j.contains("ff_hidden")) cfg.ff_hidden = j["ff_hidden"].get<size_t>();
  if (j.contains("activation")) {
    std::string a = j["activation"].get<std::string>();
    if (a == "gelu") cfg.activation = Activation::Gelu;
    else if (a == "relu") cfg.activation = Activation::Relu;
    else throw ConfigError("activation must be gelu or relu");
  }
  if (j.contains("batch_size")) cfg.batch_size = j["batch_size"].get<size_t>();
  if (j.contains("pretrain_epochs"))
    cfg.pretrain_epochs = j["pretrain_epochs"].get<size_t>();
  if (j.contains("finetune_epochs"))
    cfg.finetune_epochs = j["finetune_epochs"].get<size_t>();
  if (j.contains("learning_rate"))
    cfg.learning_rate = j["learning_rate"].get<double>();
  if (j.contains("negative_samples"))
    cfg.negative_samples = j["negative_samples"].get<size_t>();
  if (j.contains("seed")) cfg.seed = j["seed"].get<uint64_t>();
  if (j.contains("mask_keys"))
    cfg.mask_policy.exclude_keys = !j["mask_keys"].get<bool>();
  if (j.contains("use_nsp")) cfg.use_nsp = j["use_nsp"].get<bool>();
  if (j.contains("init_word2vec"))
    cfg.init_word2vec = j["init_word2vec"].get<bool>();
  if (j.contains("word2vec_epochs"))
    cfg.word2vec_epochs = j["word2vec_epochs"].get<size_t>();
  if (j.contains("split_ratios")) {
    auto r = j["split_ratios"];
    if (!r.is_array() || r.size() != 3)
      throw ConfigError("split_ratios must have three entries");
    for (int i = 0; i < 3; ++i) cfg.split_ratios[i] = r[i].get<double>();
  }
  if (j.contains("task") && !j["task"].is_null()) {
    if (!schema)
      throw ConfigError("task configuration requires a schema");
    cfg.task = parse_task(j["task"], *schema);
  }
}

ojson train_config_json(const TrainConfig& cfg) {
  ojson j;
  j["variant"] = std::string(1, cfg.variant);
  j["dim"] = cfg.dim;
  j["layers"] = cfg.layers;
  j["heads"] = cfg.heads;
  j["ff_hidden"] = cfg.ff_hidden;
  j["activation"] = cfg.activation == Activation::Gelu ? "gelu" : "relu";
  j["batch_size"] = cfg.batch_size;
  j["pretrain_epochs"] = cfg.pretrain_epochs;
  j["finetune_epochs"] = cfg.finetune_epochs;
  j["learning_rate"] = cfg.learning_rate;
  j["negative_samples"] = cfg.negative_samples;
  j["seed"] = cfg.seed;
  j["mask_keys"] = !cfg.mask_policy.exclude_keys;
  j["use_nsp"] = cfg.use_nsp;
  j["init_word2vec"] = cfg.init_word2vec;
  j["word2vec_epochs"] = cfg.word2vec_epochs;
  j["split_ratios"] = cfg.split_ratios;
  if (cfg.task) {
    ojson t;
    t["target"] = cfg.task->target_table + "." + cfg.task->target_column;
    if (cfg.task->pair_fk)
      t["pair_fk"] = cfg.task->pair_fk->from_table + "." +
                     cfg.task->pair_fk->from_column;
    j["task"] = t;
  } else {
    j["task"] = nullptr;
  }
  return j;
}

Manifest::Manifest(std::string out_dir) : out_dir_(std::move(out_dir)) {
  fs::create_directories(out_dir_);
}

void Manifest::record(const std::string& name, const std::string& relative_path) {
  artifacts_.emplace_back(name, relative_path);
}

void Manifest::write(const std::string& command, const ojson& config,
                     uint64_t seed) {
  fs::path path = fs::path(out_dir_) / "manifest.json";
  ojson manifest;
  if (fs::exists(path)) {
    std::ifstream in(path);
    try {
      manifest = ojson::parse(in);
    } catch (...) {
      manifest = ojson::object();
    }
  }
  if (!manifest.contains("commands")) manifest["commands"] = ojson::object();
  ojson entry;
  entry["seed"] = seed;
  entry["config"] = config;
  ojson arts = ojson::object();
  for (const auto& [name, rel] : artifacts_) arts[name] = rel;
  entry["artifacts"] = arts;
  manifest["commands"][command] = entry;
  if (!manifest.contains("artifacts")) manifest["artifacts"] = ojson::object();
  for (const auto& [name, rel] : artifacts_) manifest["artifacts"][name] = rel;

  std::ofstream out(path, std::ios::binary);
  if (!out) throw IOError("cannot write manifest: " + path.string());
  out << manifest.dump(2) << '\n';
}

}  // namespace reltab
