#pragma once
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "reltab/schema.hpp"

namespace reltab {

/// One loaded data row; cells are raw strings aligned with schema column
/// order. Empty cells hold the null sentinel "".
struct RowRecord {
  std::string table;
  std::vector<std::string> cells;
  size_t row_index = 0;
};

using TableRows = std::map<std::string, std::vector<RowRecord>>;

/// Loads one table's CSV. The header must contain exactly the schema's
/// column names (any order); rows are re-ordered to schema column order.
std::vector<RowRecord> load_table_csv(const DatabaseSchema& schema,
                                      const std::string& table,
                                      const std::string& path);

struct CleaningRule {
  enum class Kind { MinEntityFrequency, DropValue, MaxGroupSize };
  Kind kind;
  std::string table;
  std::string column;
  size_t threshold = 0;  // MinEntityFrequency / MaxGroupSize
  std::string value;     // DropValue
};

/// Applies rules in order to one table's rows. Frequency counts are taken
/// on the rows as they stand before each rule (single pass, no fixpoint).
std::vector<RowRecord> apply_cleaning_rules(const DatabaseSchema& schema,
                                            std::vector<RowRecord> rows,
                                            const std::vector<CleaningRule>& rules);

/// Replaces parseable cells of numeric-hinted columns with equal-width bin
/// labels ("bin:<i>", at most max_bins buckets per column).
void bin_numeric_columns(const DatabaseSchema& schema, TableRows& rows,
                         size_t max_bins = 128);

// ---------------------------------------------------------------------------

/// Dense ids for every (table, column) in schema order, plus one extra
/// "special" pseudo-column for [CLS]/[SEP]/[PAD]. Columns joined by an
/// FK-PK constraint are placed in one vocabulary group so that key values
/// share an entity space across the join.
class ColumnCatalog {
 public:
  ColumnCatalog() = default;
  explicit ColumnCatalog(const DatabaseSchema& schema);

  size_t num_columns() const { return cols_.size(); }
  uint32_t special_column() const { return static_cast<uint32_t>(cols_.size()); }

  uint32_t id_of(const std::string& table, const std::string& column) const;
  const std::string& table_of(uint32_t col) const { return cols_.at(col).table; }
  const std::string& column_of(uint32_t col) const { return cols_.at(col).column; }
  std::string qualified_name(uint32_t col) const;
  ColumnRole role_of(uint32_t col) const { return cols_.at(col).role; }
  DtypeHint dtype_of(uint32_t col) const { return cols_.at(col).dtype; }

  uint32_t group_of(uint32_t col) const { return cols_.at(col).group; }
  size_t num_groups() const { return num_groups_; }

  const std::vector<uint32_t>& columns_of_table(const std::string& table) const;
  const DatabaseSchema& schema() const { return schema_; }

 private:
  struct Entry {
    std::string table, column;
    ColumnRole role;
    DtypeHint dtype;
    uint32_t group = 0;
  };
  DatabaseSchema schema_;
  std::vector<Entry> cols_;
  std::map<std::pair<std::string, std::string>, uint32_t> index_;
  std::map<std::string, std::vector<uint32_t>> by_table_;
  size_t num_groups_ = 0;
};

// ---------------------------------------------------------------------------

/// Bijection between cell strings and dense token ids for one vocabulary
/// group. Ids 0..2 are reserved for [PAD], [MASK], [UNK].
class Vocabulary {
 public:
  static constexpr uint32_t kPad = 0;
  static constexpr uint32_t kMask = 1;
  static constexpr uint32_t kUnk = 2;
  static constexpr uint32_t kNumSpecials = 3;

  Vocabulary() = default;
  /// entries must already be ordered; ids are assigned 3, 4, ...
  explicit Vocabulary(std::vector<std::string> entries);

  uint32_t encode(const std::string& s) const;  // [UNK] on miss or null
  std::optional<uint32_t> lookup(const std::string& s) const;
  const std::string& decode(uint32_t id) const;

  size_t size() const { return id_to_str_.size(); }        // incl. specials
  size_t entity_count() const { return size() - kNumSpecials; }

  const std::vector<std::string>& labels() const { return id_to_str_; }

 private:
  std::vector<std::string> id_to_str_;
  std::unordered_map<std::string, uint32_t> str_to_id_;
};

struct VocabSet {
  std::vector<Vocabulary> groups;  // indexed by catalog group id

  const Vocabulary& group(uint32_t g) const { return groups.at(g); }
  const Vocabulary& for_column(const ColumnCatalog& cat, uint32_t col) const {
    return groups.at(cat.group_of(col));
  }
  uint64_t hash() const;
};

/// One vocabulary per group; entries ordered by (frequency desc, string asc)
/// over the cleaned rows. Null cells are not entered (they encode to [UNK]).
VocabSet build_vocabularies(const ColumnCatalog& catalog, const TableRows& rows);

/// Writes JSON lines {"table":...,"column":...,"token":...,"id":...}.
void write_vocab_dump(const ColumnCatalog& catalog, const VocabSet& vocabs,
                      const std::string& path);

// ---------------------------------------------------------------------------

/// A tokenized row (or special-token sequence). column of a special token
/// is catalog.special_column().
struct TokenRef {
  uint32_t token = 0;
  uint32_t column = 0;
  bool operator==(const TokenRef&) const = default;
};

struct Sentence {
  std::vector<TokenRef> tokens;
  std::string table;
  size_t row_index = 0;

  size_t size() const { return tokens.size(); }
};

// special-token ids within the shared special vocabulary
struct SpecialToken {
  static constexpr uint32_t kCls = 0;
  static constexpr uint32_t kSep = 1;
  static constexpr uint32_t kPad = 2;
};

Sentence encode_row(const ColumnCatalog& catalog, const VocabSet& vocabs,
                    const RowRecord& record);

/// Inverse of encode_row for in-vocabulary tokens.
std::vector<std::string> decode_sentence(const ColumnCatalog& catalog,
                                         const VocabSet& vocabs,
                                         const Sentence& sentence);

// ---------------------------------------------------------------------------

struct ValidationIssue {
  std::string table, column, value;
  std::vector<size_t> row_indices;
};

struct ValidationReport {
  std::vector<ValidationIssue> dangling_fks;
  std::vector<ValidationIssue> duplicate_pks;
  bool fk_graph_connected = true;

  bool empty() const { return dangling_fks.empty() && duplicate_pks.empty(); }
  std::string to_json() const;
};

/// Report-only referential check: FK values without a matching PK and
/// duplicated PK values. Null cells are ignored.
ValidationReport validate_data_against_schema(const DatabaseSchema& schema,
                                              const TableRows& rows);

}  // namespace reltab
