#pragma once
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "reltab/checkpoint.hpp"
#include "reltab/evaluation.hpp"
#include "reltab/training.hpp"

namespace reltab {

/// Loads schema + per-table CSVs (<data_dir>/<table>.csv), applies cleaning
/// rules and optional numeric binning, and builds vocabularies/sentences.
Dataset load_dataset(const std::string& schema_path, const std::string& data_dir,
                     const std::vector<CleaningRule>& rules = {},
                     bool bin_numeric = false, size_t max_bins = 128);

/// JSON forms used by the CLI config file.
std::vector<CleaningRule> parse_cleaning_rules(const nlohmann::json& j);
TaskSpec parse_task(const nlohmann::json& j, const DatabaseSchema& schema);
void apply_config_json(const nlohmann::json& j, const DatabaseSchema* schema,
                       TrainConfig& cfg);
nlohmann::ordered_json train_config_json(const TrainConfig& cfg);

/// Accumulates artifact paths and writes/merges <out>/manifest.json.
class Manifest {
 public:
  explicit Manifest(std::string out_dir);
  void record(const std::string& name, const std::string& relative_path);
  void write(const std::string& command, const nlohmann::ordered_json& config,
             uint64_t seed);

 private:
  std::string out_dir_;
  std::vector<std::pair<std::string, std::string>> artifacts_;
};

/// Resolves "table.column" into a declared FK (from side).
ForeignKeyDef resolve_fk(const DatabaseSchema& schema, const std::string& spec);

}  // namespace reltab
