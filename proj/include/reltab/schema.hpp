#pragma once
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace reltab {

enum class ColumnRole { PrimaryKey, ForeignKey, Attribute };
enum class DtypeHint { Categorical, Numeric, Text };

const char* to_string(ColumnRole role);
const char* to_string(DtypeHint hint);

struct ColumnDef {
  std::string name;
  ColumnRole role = ColumnRole::Attribute;
  DtypeHint dtype_hint = DtypeHint::Categorical;
};

struct TableDef {
  std::string name;
  std::vector<ColumnDef> columns;

  size_t column_count() const { return columns.size(); }
  std::optional<size_t> column_index(const std::string& col) const;
  std::optional<size_t> primary_key_index() const;
};

struct ForeignKeyDef {
  std::string from_table;   // table holding the foreign key
  std::string from_column;
  std::string to_table;     // table holding the referenced primary key
  std::string to_column;

  bool operator==(const ForeignKeyDef&) const = default;
};

struct DatabaseSchema {
  std::vector<TableDef> tables;
  std::vector<ForeignKeyDef> foreign_keys;

  const TableDef* find_table(const std::string& name) const;
  const TableDef& table(const std::string& name) const;  // throws SchemaError
  void validate() const;                                 // throws SchemaError
};

/// Parse and validate a schema from its JSON text.
DatabaseSchema parse_schema(const std::string& json_text);

/// Load a schema file. Throws ParseError / SchemaError.
DatabaseSchema load_schema(const std::string& path);

/// Canonical JSON serialization; parse_schema(serialize_schema(s)) == s.
std::string serialize_schema(const DatabaseSchema& schema);

/// All declared FK-PK join pairs, ordered by (from_table, from_column).
std::vector<ForeignKeyDef> join_compatible_pairs(const DatabaseSchema& schema);

/// FNV-1a over the canonical serialization.
uint64_t schema_hash(const DatabaseSchema& schema);

/// True if the FK graph connects all tables (singleton schema counts).
bool fk_graph_connected(const DatabaseSchema& schema);

uint64_t fnv1a(const void* data, size_t len, uint64_t seed = 0xcbf29ce484222325ULL);

}  // namespace reltab
