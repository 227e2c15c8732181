#include "reltab/schema.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"
#include "reltab/error.hpp"

namespace reltab {

using ojson = nlohmann::ordered_json;

const char* to_string(ColumnRole role) {
  switch (role) {
    case ColumnRole::PrimaryKey: return "primary_key";
    case ColumnRole::ForeignKey: return "foreign_key";
    case ColumnRole::Attribute: return "attribute";
  }
  return "attribute";
}

const char* to_string(DtypeHint hint) {
  switch (hint) {
    case DtypeHint::Categorical: return "categorical";
    case DtypeHint::Numeric: return "numeric";
    case DtypeHint::Text: return "text";
  }
  return "categorical";
}

static ColumnRole parse_role(const std::string& s) {
  if (s == "primary_key") return ColumnRole::PrimaryKey;
  if (s == "foreign_key") return ColumnRole::ForeignKey;
  if (s == "attribute") return ColumnRole::Attribute;
  throw ParseError("unknown column role: " + s);
}

static DtypeHint parse_dtype(const std::string& s) {
  if (s == "categorical") return DtypeHint::Categorical;
  if (s == "numeric") return DtypeHint::Numeric;
  if (s == "text") return DtypeHint::Text;
  throw ParseError("unknown dtype_hint: " + s);
}

std::optional<size_t> TableDef::column_index(const std::string& col) const {
  for (size_t i = 0; i < columns.size(); ++i)
    if (columns[i].name == col) return i;
  return std::nullopt;
}

std::optional<size_t> TableDef::primary_key_index() const {
  for (size_t i = 0; i < columns.size(); ++i)
    if (columns[i].role == ColumnRole::PrimaryKey) return i;
  return std::nullopt;
}

const TableDef* DatabaseSchema::find_table(const std::string& name) const {
  for (const auto& t : tables)
    if (t.name == name) return &t;
  return nullptr;
}

const TableDef& DatabaseSchema::table(const std::string& name) const {
  const TableDef* t = find_table(name);
  if (!t) throw SchemaError("no such table: " + name);
  return *t;
}

void DatabaseSchema::validate() const {
  std::set<std::string> table_names;
  for (const auto& t : tables) {
    if (!table_names.insert(t.name).second)
      throw SchemaError("duplicate table name: " + t.name);
    if (t.columns.empty())
      throw SchemaError("table has no columns: " + t.name);
    std::set<std::string> col_names;
    size_t pk_count = 0;
    for (const auto& c : t.columns) {
      if (!col_names.insert(c.name).second)
        throw SchemaError("duplicate column " + c.name + " in table " + t.name);
      if (c.role == ColumnRole::PrimaryKey) ++pk_count;
    }
    if (pk_count > 1)
      throw SchemaError("composite primary keys are not supported (table " +
                        t.name + " declares " + std::to_string(pk_count) + ")");
  }
  for (const auto& fk : foreign_keys) {
    const TableDef* from = find_table(fk.from_table);
    const TableDef* to = find_table(fk.to_table);
    if (!from)
      throw SchemaError("foreign key references unknown table: " + fk.from_table);
    if (!to)
      throw SchemaError("foreign key references unknown table: " + fk.to_table);
    auto from_idx = from->column_index(fk.from_column);
    if (!from_idx)
      throw SchemaError("foreign key references unknown column " +
                        fk.from_table + "." + fk.from_column);
    auto to_idx = to->column_index(fk.to_column);
    if (!to_idx)
      throw SchemaError("foreign key references unknown column " +
                        fk.to_table + "." + fk.to_column);
    if (to->columns[*to_idx].role != ColumnRole::PrimaryKey)
      throw SchemaError("foreign key target " + fk.to_table + "." +
                        fk.to_column + " is not a primary key");
    if (from->columns[*from_idx].role != ColumnRole::ForeignKey)
      throw SchemaError("column " + fk.from_table + "." + fk.from_column +
                        " participates in a foreign key but is not declared foreign_key");
  }
}

DatabaseSchema parse_schema(const std::string& json_text) {
  ojson j;
  try {
    j = ojson::parse(json_text);
  } catch (const std::exception& e) {
    throw ParseError(std::string("schema is not valid JSON: ") + e.what());
  }
  if (!j.is_object() || !j.contains("tables") || !j["tables"].is_array())
    throw ParseError("schema JSON must be an object with a \"tables\" array");

  DatabaseSchema schema;
  for (const auto& jt : j["tables"]) {
    TableDef t;
    if (!jt.contains("name") || !jt["name"].is_string())
      throw ParseError("table entry missing \"name\"");
    t.name = jt["name"].get<std::string>();
    if (!jt.contains("columns") || !jt["columns"].is_array())
      throw ParseError("table " + t.name + " missing \"columns\" array");
    for (const auto& jc : jt["columns"]) {
      ColumnDef c;
      if (!jc.contains("name") || !jc["name"].is_string())
        throw ParseError("column entry missing \"name\" in table " + t.name);
      c.name = jc["name"].get<std::string>();
      if (!jc.contains("role") || !jc["role"].is_string())
        throw ParseError("column " + t.name + "." + c.name + " missing \"role\"");
      c.role = parse_role(jc["role"].get<std::string>());
      if (jc.contains("dtype_hint"))
        c.dtype_hint = parse_dtype(jc["dtype_hint"].get<std::string>());
      t.columns.push_back(std::move(c));
    }
    schema.tables.push_back(std::move(t));
  }
  if (j.contains("foreign_keys")) {
    if (!j["foreign_keys"].is_array())
      throw ParseError("\"foreign_keys\" must be an array");
    for (const auto& jf : j["foreign_keys"]) {
      ForeignKeyDef fk;
      for (const char* key : {"from_table", "from_column", "to_table", "to_column"})
        if (!jf.contains(key) || !jf[key].is_string())
          throw ParseError(std::string("foreign key entry missing \"") + key + "\"");
      fk.from_table = jf["from_table"].get<std::string>();
      fk.from_column = jf["from_column"].get<std::string>();
      fk.to_table = jf["to_table"].get<std::string>();
      fk.to_column = jf["to_column"].get<std::string>();
      schema.foreign_keys.push_back(std::move(fk));
    }
  }
  schema.validate();
  return schema;
}

DatabaseSchema load_schema(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open schema file: " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_schema(buf.str());
}

std::string serialize_schema(const DatabaseSchema& schema) {
  ojson j;
  j["tables"] = ojson::array();
  for (const auto& t : schema.tables) {
    ojson jt;
    jt["name"] = t.name;
    jt["columns"] = ojson::array();
    for (const auto& c : t.columns) {
      ojson jc;
      jc["name"] = c.name;
      jc["role"] = to_string(c.role);
      jc["dtype_hint"] = to_string(c.dtype_hint);
      jt["columns"].push_back(jc);
    }
    j["tables"].push_back(jt);
  }
  j["foreign_keys"] = ojson::array();
  for (const auto& fk : schema.foreign_keys) {
    ojson jf;
    jf["from_table"] = fk.from_table;
    jf["from_column"] = fk.from_column;
    jf["to_table"] = fk.to_table;
    jf["to_column"] = fk.to_column;
    j["foreign_keys"].push_back(jf);
  }
  return j.dump(2);
}

std::vector<ForeignKeyDef> join_compatible_pairs(const DatabaseSchema& schema) {
  std::vector<ForeignKeyDef> pairs = schema.foreign_keys;
  std::stable_sort(pairs.begin(), pairs.end(),
                   [](const ForeignKeyDef& a, const ForeignKeyDef& b) {
                     if (a.from_table != b.from_table) return a.from_table < b.from_table;
                     return a.from_column < b.from_column;
                   });
  return pairs;
}

uint64_t fnv1a(const void* data, size_t len, uint64_t seed) {
  const auto* p = static_cast<const unsigned char*>(data);
  uint64_t h = seed;
  for (size_t i = 0; i < len; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

uint64_t schema_hash(const DatabaseSchema& schema) {
  std::string s = serialize_schema(schema);
  return fnv1a(s.data(), s.size());
}

bool fk_graph_connected(const DatabaseSchema& schema) {
  if (schema.tables.size() <= 1) return true;
  std::vector<size_t> parent(schema.tables.size());
  for (size_t i = 0; i < parent.size(); ++i) parent[i] = i;
  auto find = [&](size_t x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  };
  auto index_of = [&](const std::string& name) {
    for (size_t i = 0; i < schema.tables.size(); ++i)
      if (schema.tables[i].name == name) return i;
    return schema.tables.size();
  };
  for (const auto& fk : schema.foreign_keys) {
    size_t a = find(index_of(fk.from_table));
    size_t b = find(index_of(fk.to_table));
    if (a != b) parent[a] = b;
  }
  size_t root = find(0);
  for (size_t i = 1; i < schema.tables.size(); ++i)
    if (find(i) != root) return false;
  return true;
}

}  // namespace reltab
