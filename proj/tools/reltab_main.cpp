#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

#include "CLI11.hpp"
#include "json.hpp"
#include "reltab/checkpoint.hpp"
#include "reltab/error.hpp"
#include "reltab/pipeline.hpp"
#include "reltab/skipgram.hpp"
#include "reltab/synthetic.hpp"

namespace fs = std::filesystem;
using namespace reltab;
using ojson = nlohmann::ordered_json;

namespace {

// command-line misuse that CLI11 cannot see (e.g. a missing seed)
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct CommonOpts {
  std::string schema_path;
  std::string data_dir;
  std::string out_dir = "out";
  std::string config_path;
  std::optional<uint64_t> seed;
  size_t threads = 1;
  std::string precision = "f64";
};

void add_common(CLI::App* cmd, CommonOpts& opts, bool needs_data = true) {
  if (needs_data) {
    cmd->add_option("--schema", opts.schema_path, "schema JSON file")->required();
    cmd->add_option("--data", opts.data_dir, "directory of <table>.csv files")
        ->required();
  }
  cmd->add_option("--out", opts.out_dir, "output directory");
  cmd->add_option("--config", opts.config_path, "JSON config file");
  cmd->add_option("--seed", opts.seed, "random seed (fallback: RELTAB_SEED)");
  cmd->add_option("--threads", opts.threads, "worker cap for parallel stages");
  cmd->add_option("--precision", opts.precision, "f32 or f64")
      ->check(CLI::IsMember({"f32", "f64"}));
}

uint64_t resolve_seed(const CommonOpts& opts, bool required) {
  if (opts.seed) return *opts.seed;
  if (const char* env = std::getenv("RELTAB_SEED")) {
    try {
      return std::stoull(env);
    } catch (...) {
      throw ConfigError("RELTAB_SEED is not a valid integer");
    }
  }
  if (required)
    throw UsageError("this command needs --seed (or the RELTAB_SEED variable)");
  return 0;
}

void apply_precision(const CommonOpts& opts) {
  set_default_precision(opts.precision == "f32" ? Precision::F32
                                                : Precision::F64);
}

nlohmann::json load_config_file(const std::string& path) {
  if (path.empty()) return nlohmann::json::object();
  std::ifstream in(path);
  if (!in) throw IOError("cannot open config file: " + path);
  try {
    return nlohmann::json::parse(in);
  } catch (const std::exception& e) {
    throw ParseError("config file " + path + ": " + e.what());
  }
}

Dataset load_from(const CommonOpts& opts, const nlohmann::json& config) {
  std::vector<CleaningRule> rules;
  if (config.contains("cleaning_rules"))
    rules = parse_cleaning_rules(config["cleaning_rules"]);
  bool bin_numeric = config.value("bin_numeric", false);
  size_t max_bins = config.value("max_bins", 128);
  return load_dataset(opts.schema_path, opts.data_dir, rules, bin_numeric,
                      max_bins);
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IOError("cannot write " + path.string());
  out << text;
  if (text.empty() || text.back() != '\n') out << '\n';
}

ojson split_json(const SplitAssignment& split) {
  ojson j;
  j["train"] = split.train;
  j["valid"] = split.valid;
  j["test"] = split.test;
  ojson groups = ojson::array();
  for (const auto& g : split.groups) {
    ojson jg;
    jg["key"] = g.key;
    jg["train"] = g.train;
    jg["valid"] = g.valid;
    jg["test"] = g.test;
    groups.push_back(jg);
  }
  j["groups"] = groups;
  return j;
}

// --- subcommand handlers ----------------------------------------------------

int run_ingest(const CommonOpts& opts) {
  auto config = load_config_file(opts.config_path);
  Dataset db = load_from(opts, config);
  Manifest manifest(opts.out_dir);

  write_vocab_dump(db.catalog, db.vocabs,
                   (fs::path(opts.out_dir) / "vocab.jsonl").string());
  manifest.record("vocab", "vocab.jsonl");

  ValidationReport report = validate_data_against_schema(db.schema, db.rows);
  write_text(fs::path(opts.out_dir) / "validation.json", report.to_json());
  manifest.record("validation", "validation.json");

  ojson counts;
  for (const auto& [table, rows] : db.rows) counts[table] = rows.size();
  write_text(fs::path(opts.out_dir) / "row_counts.json", counts.dump(2));
  manifest.record("row_counts", "row_counts.json");

  manifest.write("ingest", config.is_null() ? ojson::object() : ojson(config),
                 resolve_seed(opts, false));
  std::cout << "ingested " << db.rows.size() << " tables; validation "
            << (report.empty() ? "clean" : "found issues") << "\n";
  return 0;
}

int run_corpus(const CommonOpts& opts, size_t negatives) {
  auto config = load_config_file(opts.config_path);
  uint64_t seed = resolve_seed(opts, true);
  Dataset db = load_from(opts, config);
  Manifest manifest(opts.out_dir);
  Rng rng(seed);

  TrainConfig cfg;
  apply_config_json(config, &db.schema, cfg);
  std::set<uint32_t> maskable = maskable_columns(db.catalog, cfg.mask_policy);

  std::vector<CorpusInstance> mlm;
  Rng mask_rng = rng.child(1);
  for (const auto& t : db.schema.tables) {
    for (const auto& s : db.table_sentences(t.name)) {
      bool ok = false;
      for (const auto& tok : s.tokens)
        if (tok.token >= Vocabulary::kNumSpecials && maskable.count(tok.column))
          ok = true;
      if (!ok) continue;
      mlm.push_back(to_corpus_instance(apply_mask(s, maskable, mask_rng)));
    }
  }
  write_corpus_jsonl((fs::path(opts.out_dir) / "corpus_mlm.jsonl").string(), mlm);
  manifest.record("corpus_mlm", "corpus_mlm.jsonl");

  std::vector<CorpusInstance> nsp;
  Rng neg_rng = rng.child(2);
  for (const auto& fk : join_compatible_pairs(db.schema)) {
    auto pairs = materialize_join_sentences(db.catalog, fk,
                                            db.table_sentences(fk.to_table),
                                            db.table_sentences(fk.from_table));
    if (pairs.empty()) continue;
    auto instances = sample_negatives(db.catalog, fk, pairs,
                                      db.table_sentences(fk.from_table),
                                      negatives, neg_rng);
    for (const auto& inst : instances) {
      nsp.push_back(to_corpus_instance(inst.positive, db.catalog.special_column()));
      for (const auto& n : inst.negatives)
        nsp.push_back(to_corpus_instance(n, db.catalog.special_column()));
    }
  }
  write_corpus_jsonl((fs::path(opts.out_dir) / "corpus_nsp.jsonl").string(), nsp);
  manifest.record("corpus_nsp", "corpus_nsp.jsonl");

  ojson cfg_json = train_config_json(cfg);
  cfg_json["corpus_negatives"] = negatives;
  manifest.write("corpus", cfg_json, seed);
  std::cout << "wrote " << mlm.size() << " mlm and " << nsp.size()
            << " nsp instances\n";
  return 0;
}

TrainConfig resolve_train_config(const CommonOpts& opts,
                                 const nlohmann::json& config,
                                 const DatabaseSchema& schema,
                                 const nlohmann::json& flag_overrides) {
  TrainConfig cfg;
  apply_config_json(config, &schema, cfg);
  apply_config_json(flag_overrides, &schema, cfg);
  cfg.seed = resolve_seed(opts, true);
  return cfg;
}

int run_train(const CommonOpts& opts, const nlohmann::json& flag_overrides) {
  auto config = load_config_file(opts.config_path);
  Dataset db = load_from(opts, config);
  TrainConfig cfg = resolve_train_config(opts, config, db.schema, flag_overrides);
  Manifest manifest(opts.out_dir);

  TrainResult result = cfg.variant == 'j' ? train_relbert_j(db, cfg)
                                          : train_relbert_a(db, cfg);

  std::string ckpt_dir = (fs::path(opts.out_dir) / "checkpoint").string();
  save_checkpoint(result.model, db.schema, db.vocabs, ckpt_dir, cfg.seed);
  manifest.record("checkpoint", "checkpoint");

  write_loss_log((fs::path(opts.out_dir) / "train_log.jsonl").string(),
                 result.reports);
  manifest.record("train_log", "train_log.jsonl");

  if (result.split) {
    write_text(fs::path(opts.out_dir) / "splits.json",
               split_json(*result.split).dump(2));
    manifest.record("splits", "splits.json");
  }
  manifest.write("train", train_config_json(cfg), cfg.seed);
  if (!result.reports.empty()) {
    const auto& last = result.reports.back();
    std::cout << "trained variant " << cfg.variant << "; final stage "
              << last.stage << " epoch " << last.epoch << " loss "
              << last.l_total << "\n";
  } else {
    std::cout << "trained variant " << cfg.variant << " (zero epochs)\n";
  }
  return 0;
}

int run_eval(const CommonOpts& opts, const std::string& model_dir,
             const nlohmann::json& flag_overrides, size_t k) {
  auto config = load_config_file(opts.config_path);
  Dataset db = load_from(opts, config);
  TrainConfig cfg = resolve_train_config(opts, config, db.schema, flag_overrides);
  if (!cfg.task) throw ConfigError("eval needs a task (--target or config)");
  apply_precision(opts);

  TableEncoderModel model = load_checkpoint(model_dir, db.schema, db.vocabs);
  SplitAssignment split = task_split(db, *cfg.task, cfg.split_ratios, cfg.seed);
  auto instances = build_autocompletion_instances(db, *cfg.task, split.test);
  uint32_t target = db.catalog.id_of(cfg.task->target_table, cfg.task->target_column);
  size_t entities = db.vocabs.for_column(db.catalog, target).entity_count();

  MetricsReport report = evaluate_autocompletion(model_scorer(model), instances,
                                                 entities, k, opts.threads);
  report.task_id = "autocomplete:" + cfg.task->target_table + "." +
                   cfg.task->target_column;
  report.model_id = "relbert-" + std::string(1, cfg.variant);

  Manifest manifest(opts.out_dir);
  write_text(fs::path(opts.out_dir) / "metrics.json", report.to_json(cfg.seed));
  manifest.record("metrics", "metrics.json");
  manifest.write("eval", train_config_json(cfg), cfg.seed);
  std::cout << report.to_json(cfg.seed) << "\n";
  return 0;
}

int run_join_predict(const CommonOpts& opts, const std::string& model_dir,
                     const std::string& fk_spec, size_t pool, size_t k) {
  auto config = load_config_file(opts.config_path);
  uint64_t seed = resolve_seed(opts, false);
  Dataset db = load_from(opts, config);
  apply_precision(opts);
  TableEncoderModel model = load_checkpoint(model_dir, db.schema, db.vocabs);
  ForeignKeyDef fk = resolve_fk(db.schema, fk_spec);

  std::vector<size_t> pk_ids;
  for (size_t i = 0; i < db.table_sentences(fk.to_table).size(); ++i)
    pk_ids.push_back(i);
  MetricsReport report = evaluate_join_prediction(model, db, fk, pk_ids, pool, k,
                                                  seed, opts.threads);
  report.task_id = "join:" + fk.from_table + "." + fk.from_column;
  report.model_id = "relbert";

  Manifest manifest(opts.out_dir);
  write_text(fs::path(opts.out_dir) / "metrics_join.json", report.to_json(seed));
  manifest.record("metrics_join", "metrics_join.json");
  manifest.write("join-predict", ojson{{"fk", fk_spec}, {"pool", pool}, {"k", k}},
                 seed);
  std::cout << report.to_json(seed) << "\n";
  return 0;
}

int run_impute(const CommonOpts& opts, const std::string& model_dir,
               const std::string& table, const std::string& column,
               const std::string& row_file, size_t topk) {
  auto config = load_config_file(opts.config_path);
  Dataset db = load_from(opts, config);
  apply_precision(opts);
  TableEncoderModel model = load_checkpoint(model_dir, db.schema, db.vocabs);

  std::ifstream in(row_file);
  if (!in) throw IOError("cannot open row file: " + row_file);
  nlohmann::json jrow;
  try {
    jrow = nlohmann::json::parse(in);
  } catch (const std::exception& e) {
    throw ParseError("row file: " + std::string(e.what()));
  }
  const TableDef& tdef = db.schema.table(table);
  RowRecord row{table, std::vector<std::string>(tdef.column_count(), ""), 0};
  if (jrow.contains("cells")) {
    for (const auto& [name, value] : jrow["cells"].items()) {
      auto idx = tdef.column_index(name);
      if (!idx) throw ConfigError("row file names unknown column " + name);
      if (!value.is_null()) row.cells[*idx] = value.get<std::string>();
    }
  }
  uint32_t target = db.catalog.id_of(table, column);
  Sentence sentence = encode_row(db.catalog, db.vocabs, row);
  MaskedSentence masked;
  masked.base = sentence;
  for (size_t pos = 0; pos < sentence.size(); ++pos)
    if (sentence.tokens[pos].column == target) {
      masked.mask_pos = pos;
      masked.target_column = target;
      masked.target_token = sentence.tokens[pos].token;
      masked.base.tokens[pos].token = Vocabulary::kMask;
    }

  NoGradGuard ng;
  Tensor probs = row_softmax(model.mlm_instance_logits(masked));
  const Vocabulary& vocab = db.vocabs.for_column(db.catalog, target);
  std::vector<size_t> order(probs.cols());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](size_t a, size_t b) {
    return probs.values()[a] > probs.values()[b];
  });
  ojson out = ojson::array();
  for (size_t i = 0; i < std::min(topk, order.size()); ++i) {
    ojson entry;
    entry["token"] =
        vocab.decode(static_cast<uint32_t>(order[i]) + Vocabulary::kNumSpecials);
    entry["prob"] = probs.values()[order[i]];
    out.push_back(entry);
  }
  std::cout << out.dump(2) << "\n";
  Manifest manifest(opts.out_dir);
  write_text(fs::path(opts.out_dir) / "impute.json", out.dump(2));
  manifest.record("impute", "impute.json");
  manifest.write("impute",
                 ojson{{"table", table}, {"column", column}, {"topk", topk}},
                 resolve_seed(opts, false));
  return 0;
}

int run_baseline(const CommonOpts& opts, const std::string& kind,
                 const nlohmann::json& flag_overrides, size_t walks,
                 size_t walk_length, size_t epochs, size_t k, size_t dim) {
  auto config = load_config_file(opts.config_path);
  uint64_t seed = resolve_seed(opts, true);
  Dataset db = load_from(opts, config);
  TrainConfig cfg;
  apply_config_json(config, &db.schema, cfg);
  apply_config_json(flag_overrides, &db.schema, cfg);
  cfg.seed = seed;
  if (!cfg.task) throw ConfigError("baseline needs a task (--target or config)");

  SplitAssignment split = task_split(db, *cfg.task, cfg.split_ratios, seed);
  auto instances = build_autocompletion_instances(db, *cfg.task, split.test);
  uint32_t target = db.catalog.id_of(cfg.task->target_table, cfg.task->target_column);
  size_t entities = db.vocabs.for_column(db.catalog, target).entity_count();

  Manifest manifest(opts.out_dir);
  MetricsReport report;
  if (kind == "table2vec") {
    UnifiedSpace space(db.catalog, db.vocabs);
    SkipGramConfig sg;
    sg.dim = dim;
    sg.epochs = epochs;
    sg.seed = seed;
    sg.window = 0;  // whole-row context
    SkipGramModel sgm = train_skipgram(
        table2vec_corpus(db.catalog, space, db.sentences), space.size(), sg);
    report = evaluate_autocompletion(table2vec_scorer(sgm, space, db, target),
                                     instances, entities, k, opts.threads);
    report.model_id = "table2vec";
  } else if (kind == "embdi") {
    TripartiteGraph graph = build_tripartite_graph(db.catalog, db.sentences);
    WalkConfig wc{walks, walk_length, seed, opts.threads};
    auto walk_corpus = random_walk_corpus(graph, wc);
    write_walk_corpus((fs::path(opts.out_dir) / "walks.txt").string(), graph,
                      walk_corpus, db.catalog);
    manifest.record("walks", "walks.txt");
    SkipGramConfig sg;
    sg.dim = dim;
    sg.epochs = epochs;
    sg.seed = seed;
    sg.window = 5;  // sliding window over walk sentences
    std::vector<std::vector<uint32_t>> corpus = walk_corpus;
    SkipGramModel sgm = train_skipgram(corpus, graph.size(), sg);
    report = evaluate_autocompletion(embdi_scorer(sgm, graph, db, target),
                                     instances, entities, k, opts.threads);
    report.model_id = "embdi";
  } else {
    throw ConfigError("baseline kind must be table2vec or embdi");
  }
  report.task_id = "autocomplete:" + cfg.task->target_table + "." +
                   cfg.task->target_column;
  std::string metrics_name = "metrics_" + kind + ".json";
  write_text(fs::path(opts.out_dir) / metrics_name, report.to_json(seed));
  manifest.record("metrics_" + kind, metrics_name);
  ojson cj = train_config_json(cfg);
  cj["baseline"] = kind;
  cj["walks"] = walks;
  cj["walk_length"] = walk_length;
  cj["skipgram_epochs"] = epochs;
  cj["skipgram_dim"] = dim;
  manifest.write("baseline-" + kind, cj, seed);
  std::cout << report.to_json(seed) << "\n";
  return 0;
}

int run_export(const CommonOpts& opts, const std::string& model_dir,
               const std::string& what, const std::string& table, size_t row,
               const std::string& fk_spec) {
  auto config = load_config_file(opts.config_path);
  Dataset db = load_from(opts, config);
  apply_precision(opts);
  TableEncoderModel model = load_checkpoint(model_dir, db.schema, db.vocabs);
  Manifest manifest(opts.out_dir);

  if (what == "embeddings") {
    fs::path path = fs::path(opts.out_dir) / "embeddings.csv";
    export_embeddings(model, db.vocabs, path.string());
    manifest.record("embeddings", "embeddings.csv");
  } else if (what == "attention") {
    if (table.empty()) throw ConfigError("attention export needs --table");
    const auto& sents = db.table_sentences(table);
    if (row >= sents.size())
      throw ConfigError("--row exceeds the table's row count");
    Sentence instance = sents[row];
    if (!fk_spec.empty()) {
      ForeignKeyDef fk = resolve_fk(db.schema, fk_spec);
      if (fk.from_table != table)
        throw ConfigError("--fk must originate in --table");
      auto pairs = materialize_join_sentences(db.catalog, fk,
                                              db.table_sentences(fk.to_table),
                                              {instance});
      if (pairs.empty())
        throw ConfigError("row has no join partner under " + fk_spec);
      instance = build_pair_sequence(pairs[0].first, pairs[0].second,
                                     db.catalog.special_column());
    }
    fs::path dir = fs::path(opts.out_dir) / "attention";
    export_attention(model, instance, dir.string());
    manifest.record("attention", "attention");
  } else {
    throw ConfigError("--what must be attention or embeddings");
  }
  manifest.write("export", ojson{{"what", what}, {"table", table}, {"row", row}},
                 resolve_seed(opts, false));
  std::cout << "exported " << what << " to " << opts.out_dir << "\n";
  return 0;
}

int run_selftest();

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"reltab: contextual entity embeddings for relational tables"};
  app.require_subcommand(1);

  CommonOpts ingest_opts, corpus_opts, train_opts, eval_opts, join_opts,
      impute_opts, baseline_opts, export_opts;

  auto* c_ingest = app.add_subcommand("ingest", "load, clean and validate data");
  add_common(c_ingest, ingest_opts);

  auto* c_corpus =
      app.add_subcommand("corpus", "materialize MLM/NSP training instances");
  add_common(c_corpus, corpus_opts);
  size_t corpus_negatives = 1;
  c_corpus->add_option("--neg", corpus_negatives, "negatives per positive pair");

  // train/eval/baseline flag overrides mirror the config file keys
  nlohmann::json train_flags, eval_flags, baseline_flags;

  auto* c_train = app.add_subcommand("train", "train relbert-a or relbert-j");
  add_common(c_train, train_opts);
  {
    auto num = [&](const char* flag, const char* key, const char* help) {
      c_train->add_option_function<size_t>(
          flag, [&train_flags, key](size_t v) { train_flags[key] = v; }, help);
    };
    c_train->add_option_function<std::string>(
        "--variant",
        [&train_flags](const std::string& v) { train_flags["variant"] = v; },
        "a or j")
        ->check(CLI::IsMember({"a", "j"}));
    num("--dim", "dim", "embedding dimension");
    num("--layers", "layers", "encoder layers");
    num("--heads", "heads", "attention heads");
    num("--ff-hidden", "ff_hidden", "feed-forward hidden width");
    num("--batch", "batch_size", "batch size");
    num("--pretrain-epochs", "pretrain_epochs", "stage-1 epochs");
    num("--finetune-epochs", "finetune_epochs", "stage-2 epochs");
    num("--neg", "negative_samples", "negatives per positive");
    num("--w2v-epochs", "word2vec_epochs", "word2vec init epochs");
    c_train->add_option_function<double>(
        "--lr", [&train_flags](double v) { train_flags["learning_rate"] = v; },
        "learning rate");
    c_train->add_flag_function(
        "--init-w2v",
        [&train_flags](int64_t) { train_flags["init_word2vec"] = true; },
        "initialize embeddings from word2vec");
    c_train->add_flag_function(
        "--no-nsp", [&train_flags](int64_t) { train_flags["use_nsp"] = false; },
        "disable the NSP objective");
    c_train->add_option_function<std::string>(
        "--target",
        [&train_flags](const std::string& v) {
          if (!train_flags.contains("task")) train_flags["task"] = nlohmann::json::object();
          train_flags["task"]["target"] = v;
        },
        "task target as table.column");
    c_train->add_option_function<std::string>(
        "--pair-fk",
        [&train_flags](const std::string& v) {
          if (!train_flags.contains("task")) train_flags["task"] = nlohmann::json::object();
          train_flags["task"]["pair_fk"] = v;
        },
        "task context join as table.column (fk side)");
  }

  auto* c_eval = app.add_subcommand("eval", "autocompletion metrics on the test split");
  add_common(c_eval, eval_opts);
  std::string eval_model;
  size_t eval_k = 10;
  c_eval->add_option("--model", eval_model, "checkpoint directory")->required();
  c_eval->add_option("--k", eval_k, "hits@k cutoff");
  c_eval->add_option_function<std::string>(
      "--target",
      [&eval_flags](const std::string& v) {
        if (!eval_flags.contains("task")) eval_flags["task"] = nlohmann::json::object();
        eval_flags["task"]["target"] = v;
      },
      "task target as table.column");
  c_eval->add_option_function<std::string>(
      "--pair-fk",
      [&eval_flags](const std::string& v) {
        if (!eval_flags.contains("task")) eval_flags["task"] = nlohmann::json::object();
        eval_flags["task"]["pair_fk"] = v;
      },
      "task context join as table.column");

  auto* c_join = app.add_subcommand("join-predict", "rank join partners by NSP score");
  add_common(c_join, join_opts);
  std::string join_model, join_fk;
  size_t join_pool = 0, join_k = 10;
  c_join->add_option("--model", join_model, "checkpoint directory")->required();
  c_join->add_option("--fk", join_fk, "foreign key as table.column")->required();
  c_join->add_option("--pool", join_pool, "candidate pool cap (0 = all rows)");
  c_join->add_option("--k", join_k, "hits@k cutoff");

  auto* c_impute = app.add_subcommand("impute", "rank candidates for one missing cell");
  add_common(c_impute, impute_opts);
  std::string impute_model, impute_table, impute_column, impute_row_file;
  size_t impute_topk = 10;
  c_impute->add_option("--model", impute_model, "checkpoint directory")->required();
  c_impute->add_option("--table", impute_table, "target table")->required();
  c_impute->add_option("--column", impute_column, "target column")->required();
  c_impute->add_option("--row-file", impute_row_file, "JSON row file")->required();
  c_impute->add_option("--topk", impute_topk, "candidates to report");

  auto* c_baseline = app.add_subcommand("baseline", "table2vec / embdi reference models");
  add_common(c_baseline, baseline_opts);
  std::string baseline_kind;
  size_t b_walks = 50, b_walk_len = 20, b_epochs = 5, b_k = 10, b_dim = 300;
  c_baseline->add_option("--kind", baseline_kind, "table2vec or embdi")
      ->required()
      ->check(CLI::IsMember({"table2vec", "embdi"}));
  c_baseline->add_option("--walks", b_walks, "walks per entity (embdi)");
  c_baseline->add_option("--walk-len", b_walk_len, "walk length (embdi)");
  c_baseline->add_option("--epochs", b_epochs, "skip-gram epochs");
  c_baseline->add_option("--k", b_k, "hits@k cutoff");
  c_baseline->add_option("--dim", b_dim, "embedding dimension");
  c_baseline->add_option_function<std::string>(
      "--target",
      [&baseline_flags](const std::string& v) {
        if (!baseline_flags.contains("task"))
          baseline_flags["task"] = nlohmann::json::object();
        baseline_flags["task"]["target"] = v;
      },
      "task target as table.column");
  c_baseline->add_option_function<std::string>(
      "--pair-fk",
      [&baseline_flags](const std::string& v) {
        if (!baseline_flags.contains("task"))
          baseline_flags["task"] = nlohmann::json::object();
        baseline_flags["task"]["pair_fk"] = v;
      },
      "task context join as table.column");

  auto* c_export = app.add_subcommand("export", "attention matrices / embeddings");
  add_common(c_export, export_opts);
  std::string export_model, export_what, export_table, export_fk;
  size_t export_row = 0;
  c_export->add_option("--model", export_model, "checkpoint directory")->required();
  c_export->add_option("--what", export_what, "attention or embeddings")
      ->required()
      ->check(CLI::IsMember({"attention", "embeddings"}));
  c_export->add_option("--table", export_table, "table for the attention instance");
  c_export->add_option("--row", export_row, "row index for the attention instance");
  c_export->add_option("--fk", export_fk, "build a pair sequence over this fk");

  auto* c_selftest =
      app.add_subcommand("selftest", "gradient-check and metric-oracle suites");
  (void)c_selftest;

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);  // prints help or the error message
    return code == 0 ? 0 : 2;
  }

  try {
    if (c_ingest->parsed()) return run_ingest(ingest_opts);
    if (c_corpus->parsed()) return run_corpus(corpus_opts, corpus_negatives);
    if (c_train->parsed()) {
      apply_precision(train_opts);
      return run_train(train_opts, train_flags);
    }
    if (c_eval->parsed()) return run_eval(eval_opts, eval_model, eval_flags, eval_k);
    if (c_join->parsed())
      return run_join_predict(join_opts, join_model, join_fk, join_pool, join_k);
    if (c_impute->parsed())
      return run_impute(impute_opts, impute_model, impute_table, impute_column,
                        impute_row_file, impute_topk);
    if (c_baseline->parsed())
      return run_baseline(baseline_opts, baseline_kind, baseline_flags, b_walks,
                          b_walk_len, b_epochs, b_k, b_dim);
    if (c_export->parsed())
      return run_export(export_opts, export_model, export_what, export_table,
                        export_row, export_fk);
    if (c_selftest->parsed()) return run_selftest();
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    std::cerr << app.help() << "\n";
    return 2;
  } catch (const reltab::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "unexpected error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}

// --- selftest ----------------------------------------------------------------

namespace {

int run_selftest() {
  using namespace reltab;
  int failures = 0;
  auto check = [&](const std::string& name, bool ok, const std::string& detail = "") {
    std::cout << (ok ? "[PASS] " : "[FAIL] ") << name;
    if (!detail.empty()) std::cout << " (" << detail << ")";
    std::cout << "\n";
    if (!ok) ++failures;
  };
  Rng rng(20240601);
  auto random_tensor = [&](std::vector<size_t> shape, double spread) {
    size_t n = 1;
    for (size_t d : shape) n *= d;
    std::vector<double> v(n);
    for (double& x : v) x = spread * (rng.uniform_real() * 2.0 - 1.0);
    return Tensor::from_values(shape, std::move(v));
  };
  auto weighted = [&](const Tensor& t, uint64_t s) {
    Rng wr(s);
    std::vector<double> lv(t.rows()), rv(t.cols());
    for (double& x : lv) x = wr.uniform_real() + 0.5;
    for (double& x : rv) x = wr.uniform_real() + 0.5;
    return sum(matmul(Tensor::from_values({1, t.rows()}, lv),
                      matmul(t, Tensor::from_values({t.cols(), 1}, rv))));
  };

  struct Case {
    const char* name;
    std::function<Tensor(const std::vector<Tensor>&)> f;
    std::vector<Tensor> point;
  };
  std::vector<Case> cases;
  cases.push_back({"gradcheck matmul",
                   [&](const std::vector<Tensor>& in) {
                     return weighted(matmul(in[0], in[1]), 1);
                   },
                   {random_tensor({3, 4}, 1.0), random_tensor({4, 2}, 1.0)}});
  cases.push_back({"gradcheck layer_norm",
                   [&](const std::vector<Tensor>& in) {
                     return weighted(layer_norm(in[0], in[1], in[2]), 2);
                   },
                   {random_tensor({3, 6}, 1.0), random_tensor({1, 6}, 1.0),
                    random_tensor({1, 6}, 1.0)}});
  cases.push_back({"gradcheck row_softmax",
                   [&](const std::vector<Tensor>& in) {
                     return weighted(row_softmax(in[0]), 3);
                   },
                   {random_tensor({3, 5}, 2.0)}});
  cases.push_back({"gradcheck gelu+sigmoid+softplus",
                   [&](const std::vector<Tensor>& in) {
                     return weighted(softplus(sigmoid(gelu(in[0]))), 4);
                   },
                   {random_tensor({3, 4}, 2.0)}});
  cases.push_back({"gradcheck cross_entropy",
                   [&](const std::vector<Tensor>& in) {
                     return cross_entropy(in[0], 2);
                   },
                   {random_tensor({1, 7}, 3.0)}});
  for (auto& c : cases) {
    auto rep = grad_check(c.f, c.point, 1e-5, 1e-4);
    check(c.name, rep.pass, "max rel err " + std::to_string(rep.max_rel_err));
  }

  // toy encoder under both losses
  {
    Dataset db = synth::join_toy_dataset({8, 4, 11});
    ModelConfig mc{8, 2, 2, 16, Activation::Gelu, 0.02};
    TableEncoderModel model(db.catalog, db.vocabs, mc, 12);
    auto pairs = materialize_join_sentences(
        db.catalog, db.schema.foreign_keys[0], db.table_sentences("parents"),
        db.table_sentences("children"));
    Rng mask_rng(13);
    uint32_t shape_col = db.catalog.id_of("children", "shape");
    std::vector<MaskedSentence> mlm_batch;
    for (size_t i = 0; i < 3; ++i) {
      Sentence seq = build_pair_sequence(pairs[i].first, pairs[i].second,
                                         db.catalog.special_column());
      mlm_batch.push_back(apply_mask(seq, {shape_col}, mask_rng));
    }
    Rng neg_rng(14);
    auto nsp_batch = sample_negatives(
        db.catalog, db.schema.foreign_keys[0],
        {pairs.begin(), pairs.begin() + 3}, db.table_sentences("children"), 2,
        neg_rng);
    auto rep = model_grad_check(
        model,
        [&] { return add(mlm_loss(model, mlm_batch), nsp_loss(model, nsp_batch)); },
        1e-5, 1e-4);
    check("gradcheck encoder mlm+nsp", rep.pass,
          "max rel err " + std::to_string(rep.max_rel_err));
  }

  // metric oracle
  {
    bool ok = true;
    Rng mrng(15);
    for (int trial = 0; trial < 200 && ok; ++trial) {
      size_t n = 2 + mrng.uniform_index(30);
      std::vector<double> scores(n);
      for (double& s : scores) s = mrng.uniform_index(7) * 0.2;
      size_t t = mrng.uniform_index(n);
      std::vector<size_t> order(n);
      for (size_t i = 0; i < n; ++i) order[i] = i;
      std::stable_sort(order.begin(), order.end(), [&](size_t a, size_t b) {
        if (scores[a] != scores[b]) return scores[a] > scores[b];
        return a < b;
      });
      size_t oracle = 1 + size_t(std::find(order.begin(), order.end(), t) -
                                 order.begin());
      ok = rank_candidates(scores, t).rank == oracle;
    }
    check("metric oracle (full sort)", ok);
    MetricsReport paper;
    paper.k = 10;
    paper.hits_at_k = 0.801;
    paper.mean_rank = 284.25;
    paper.mrr = 0.656;
    paper.n_instances = 1;
    check("published join row consistency", paper.consistent());
  }

  // softmax / layer norm invariants
  {
    Tensor x = random_tensor({4, 9}, 3.0);
    Tensor y = row_softmax(x);
    bool ok = true;
    for (size_t i = 0; i < 4; ++i) {
      double s = 0;
      for (size_t j = 0; j < 9; ++j) s += y.at(i, j);
      if (std::fabs(s - 1.0) > 1e-9) ok = false;
    }
    check("row_softmax row sums", ok);
  }

  std::cout << (failures == 0 ? "selftest passed" : "selftest FAILED") << "\n";
  return failures == 0 ? 0 : 1;
}

}  // namespace
