#include "reltab/ingest.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <set>

#include "json.hpp"
#include "reltab/csv.hpp"
#include "reltab/error.hpp"

namespace reltab {

using ojson = nlohmann::ordered_json;

std::vector<RowRecord> load_table_csv(const DatabaseSchema& schema,
                                      const std::string& table,
                                      const std::string& path) {
  const TableDef& tdef = schema.table(table);
  auto cells = read_csv(path);
  if (cells.empty())
    throw ParseError(path + ": missing header row");

  const auto& header = cells.front();
  if (header.size() != tdef.column_count())
    throw ParseError(path + ": header has " + std::to_string(header.size()) +
                     " columns, schema table " + table + " has " +
                     std::to_string(tdef.column_count()));
  // map header position -> schema column position (order-insensitive)
  std::vector<size_t> to_schema(header.size());
  std::set<std::string> seen;
  for (size_t i = 0; i < header.size(); ++i) {
    auto idx = tdef.column_index(header[i]);
    if (!idx)
      throw ParseError(path + ": header column \"" + header[i] +
                       "\" not in schema table " + table);
    if (!seen.insert(header[i]).second)
      throw ParseError(path + ": duplicate header column \"" + header[i] + "\"");
    to_schema[i] = *idx;
  }

  std::vector<RowRecord> rows;
  rows.reserve(cells.size() - 1);
  for (size_t r = 1; r < cells.size(); ++r) {
    const auto& raw = cells[r];
    if (raw.size() != header.size())
      throw ParseError(path + ": row " + std::to_string(r) + " has " +
                       std::to_string(raw.size()) + " cells, expected " +
                       std::to_string(header.size()));
    RowRecord rec;
    rec.table = table;
    rec.row_index = rows.size();
    rec.cells.resize(tdef.column_count());
    for (size_t i = 0; i < raw.size(); ++i) rec.cells[to_schema[i]] = raw[i];
    rows.push_back(std::move(rec));
  }
  return rows;
}

std::vector<RowRecord> apply_cleaning_rules(const DatabaseSchema& schema,
                                            std::vector<RowRecord> rows,
                                            const std::vector<CleaningRule>& rules) {
  for (const auto& rule : rules) {
    if (rows.empty()) break;
    if (rule.table != rows.front().table) continue;
    const TableDef& tdef = schema.table(rule.table);
    auto idx = tdef.column_index(rule.column);
    if (!idx)
      throw SchemaError("cleaning rule references unknown column " +
                        rule.table + "." + rule.column);
    size_t col = *idx;

    std::vector<RowRecord> kept;
    kept.reserve(rows.size());
    switch (rule.kind) {
      case CleaningRule::Kind::DropValue: {
        for (auto& r : rows)
          if (r.cells[col] != rule.value) kept.push_back(std::move(r));
        break;
      }
      case CleaningRule::Kind::MinEntityFrequency: {
        std::map<std::string, size_t> freq;
        for (const auto& r : rows)
          if (!r.cells[col].empty()) ++freq[r.cells[col]];
        for (auto& r : rows) {
          const auto& v = r.cells[col];
          if (v.empty() || freq[v] >= rule.threshold) kept.push_back(std::move(r));
        }
        break;
      }
      case CleaningRule::Kind::MaxGroupSize: {
        std::map<std::string, size_t> size_by_group;
        for (const auto& r : rows) ++size_by_group[r.cells[col]];
        for (auto& r : rows)
          if (size_by_group[r.cells[col]] <= rule.threshold)
            kept.push_back(std::move(r));
        break;
      }
    }
    rows = std::move(kept);
  }
  // reindex so row_index stays dense after filtering
  for (size_t i = 0; i < rows.size(); ++i) rows[i].row_index = i;
  return rows;
}

void bin_numeric_columns(const DatabaseSchema& schema, TableRows& rows,
                         size_t max_bins) {
  if (max_bins == 0) return;
  for (auto& [table, table_rows] : rows) {
    const TableDef& tdef = schema.table(table);
    for (size_t c = 0; c < tdef.columns.size(); ++c) {
      if (tdef.columns[c].dtype_hint != DtypeHint::Numeric) continue;
      double lo = 0, hi = 0;
      bool any = false;
      std::vector<std::pair<size_t, double>> parsed;
      for (size_t r = 0; r < table_rows.size(); ++r) {
        const std::string& cell = table_rows[r].cells[c];
        if (cell.empty()) continue;
        try {
          size_t pos = 0;
          double v = std::stod(cell, &pos);
          if (pos != cell.size()) continue;
          parsed.emplace_back(r, v);
          if (!any || v < lo) lo = any ? std::min(lo, v) : v;
          if (!any || v > hi) hi = any ? std::max(hi, v) : v;
          any = true;
        } catch (...) {
          continue;  // non-numeric cell stays a raw token
        }
      }
      if (!any) continue;
      double width = (hi - lo) / static_cast<double>(max_bins);
      for (auto& [r, v] : parsed) {
        size_t bin = 0;
        if (width > 0)
          bin = std::min(max_bins - 1,
                         static_cast<size_t>(std::floor((v - lo) / width)));
        table_rows[r].cells[c] = "bin:" + std::to_string(bin);
      }
    }
  }
}

// ---------------------------------------------------------------------------

ColumnCatalog::ColumnCatalog(const DatabaseSchema& schema) : schema_(schema) {
  for (const auto& t : schema.tables) {
    for (const auto& c : t.columns) {
      uint32_t id = static_cast<uint32_t>(cols_.size());
      cols_.push_back({t.name, c.name, c.role, c.dtype_hint, 0});
      index_[{t.name, c.name}] = id;
      by_table_[t.name].push_back(id);
    }
  }
  // union-find over FK edges: key columns joined by a constraint share
  // one entity space
  std::vector<uint32_t> parent(cols_.size());
  for (uint32_t i = 0; i < parent.size(); ++i) parent[i] = i;
  std::function<uint32_t(uint32_t)> find = [&](uint32_t x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  };
  for (const auto& fk : schema.foreign_keys) {
    uint32_t a = find(id_of(fk.from_table, fk.from_column));
    uint32_t b = find(id_of(fk.to_table, fk.to_column));
    if (a != b) parent[std::max(a, b)] = std::min(a, b);
  }
  std::map<uint32_t, uint32_t> dense;
  for (uint32_t i = 0; i < cols_.size(); ++i) {
    uint32_t root = find(i);
    auto it = dense.emplace(root, static_cast<uint32_t>(dense.size())).first;
    cols_[i].group = it->second;
  }
  num_groups_ = dense.size();
}

uint32_t ColumnCatalog::id_of(const std::string& table,
                              const std::string& column) const {
  auto it = index_.find({table, column});
  if (it == index_.end())
    throw SchemaError("unknown column " + table + "." + column);
  return it->second;
}

std::string ColumnCatalog::qualified_name(uint32_t col) const {
  if (col == special_column()) return "[special]";
  return cols_.at(col).table + "." + cols_.at(col).column;
}

const std::vector<uint32_t>& ColumnCatalog::columns_of_table(
    const std::string& table) const {
  auto it = by_table_.find(table);
  if (it == by_table_.end()) throw SchemaError("unknown table: " + table);
  return it->second;
}

// ---------------------------------------------------------------------------

Vocabulary::Vocabulary(std::vector<std::string> entries) {
  id_to_str_ = {"[PAD]", "[MASK]", "[UNK]"};
  id_to_str_.reserve(entries.size() + kNumSpecials);
  for (auto& e : entries) {
    str_to_id_.emplace(e, static_cast<uint32_t>(id_to_str_.size()));
    id_to_str_.push_back(std::move(e));
  }
}

uint32_t Vocabulary::encode(const std::string& s) const {
  if (s.empty()) return kUnk;
  auto it = str_to_id_.find(s);
  return it == str_to_id_.end() ? kUnk : it->second;
}

std::optional<uint32_t> Vocabulary::lookup(const std::string& s) const {
  auto it = str_to_id_.find(s);
  if (it == str_to_id_.end()) return std::nullopt;
  return it->second;
}

const std::string& Vocabulary::decode(uint32_t id) const {
  if (id >= id_to_str_.size())
    throw IndexError("token id " + std::to_string(id) + " out of range");
  return id_to_str_[id];
}

VocabSet build_vocabularies(const ColumnCatalog& catalog, const TableRows& rows) {
  // frequency per group, accumulated over all member columns
  std::vector<std::map<std::string, uint64_t>> freq(catalog.num_groups());
  for (const auto& [table, table_rows] : rows) {
    const auto& col_ids = catalog.columns_of_table(table);
    for (const auto& rec : table_rows) {
      for (size_t c = 0; c < col_ids.size() && c < rec.cells.size(); ++c) {
        const std::string& cell = rec.cells[c];
        if (cell.empty()) continue;  // nulls encode to [UNK]
        ++freq[catalog.group_of(col_ids[c])][cell];
      }
    }
  }
  VocabSet out;
  out.groups.reserve(catalog.num_groups());
  for (auto& f : freq) {
    std::vector<std::pair<std::string, uint64_t>> items(f.begin(), f.end());
    std::stable_sort(items.begin(), items.end(),
                     [](const auto& a, const auto& b) {
                       if (a.second != b.second) return a.second > b.second;
                       return a.first < b.first;
                     });
    std::vector<std::string> entries;
    entries.reserve(items.size());
    for (auto& [s, _] : items) entries.push_back(s);
    out.groups.emplace_back(std::move(entries));
  }
  return out;
}

uint64_t VocabSet::hash() const {
  uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto& v : groups) {
    for (const auto& s : v.labels()) {
      h = fnv1a(s.data(), s.size(), h);
      h = fnv1a("\x1f", 1, h);
    }
    h = fnv1a("\x1e", 1, h);
  }
  return h;
}

void write_vocab_dump(const ColumnCatalog& catalog, const VocabSet& vocabs,
                      const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IOError("cannot write vocab dump: " + path);
  for (uint32_t col = 0; col < catalog.num_columns(); ++col) {
    const Vocabulary& v = vocabs.for_column(catalog, col);
    for (uint32_t id = 0; id < v.size(); ++id) {
      ojson j;
      j["table"] = catalog.table_of(col);
      j["column"] = catalog.column_of(col);
      j["token"] = v.decode(id);
      j["id"] = id;
      out << j.dump() << '\n';
    }
  }
}

// ---------------------------------------------------------------------------

Sentence encode_row(const ColumnCatalog& catalog, const VocabSet& vocabs,
                    const RowRecord& record) {
  const auto& col_ids = catalog.columns_of_table(record.table);
  if (record.cells.size() != col_ids.size())
    throw ShapeError("row arity mismatch for table " + record.table);
  Sentence s;
  s.table = record.table;
  s.row_index = record.row_index;
  s.tokens.reserve(col_ids.size());
  for (size_t c = 0; c < col_ids.size(); ++c) {
    uint32_t col = col_ids[c];
    uint32_t tok = vocabs.for_column(catalog, col).encode(record.cells[c]);
    s.tokens.push_back({tok, col});
  }
  return s;
}

std::vector<std::string> decode_sentence(const ColumnCatalog& catalog,
                                         const VocabSet& vocabs,
                                         const Sentence& sentence) {
  std::vector<std::string> out;
  out.reserve(sentence.tokens.size());
  for (const auto& t : sentence.tokens) {
    if (t.column == catalog.special_column()) {
      static const std::vector<std::string> specials = {"[CLS]", "[SEP]", "[PAD]"};
      out.push_back(specials.at(t.token));
    } else {
      out.push_back(vocabs.for_column(catalog, t.column).decode(t.token));
    }
  }
  return out;
}

// ---------------------------------------------------------------------------

std::string ValidationReport::to_json() const {
  ojson j;
  j["fk_graph_connected"] = fk_graph_connected;
  auto dump = [](const std::vector<ValidationIssue>& issues) {
    ojson arr = ojson::array();
    for (const auto& i : issues) {
      ojson e;
      e["table"] = i.table;
      e["column"] = i.column;
      e["value"] = i.value;
      e["row_indices"] = i.row_indices;
      arr.push_back(e);
    }
    return arr;
  };
  j["dangling_fks"] = dump(dangling_fks);
  j["duplicate_pks"] = dump(duplicate_pks);
  return j.dump(2);
}

ValidationReport validate_data_against_schema(const DatabaseSchema& schema,
                                              const TableRows& rows) {
  ValidationReport report;
  report.fk_graph_connected = fk_graph_connected(schema);

  // duplicate primary keys
  for (const auto& t : schema.tables) {
    auto pk = t.primary_key_index();
    if (!pk) continue;
    auto it = rows.find(t.name);
    if (it == rows.end()) continue;
    std::map<std::string, std::vector<size_t>> seen;
    for (const auto& r : it->second) {
      const std::string& v = r.cells[*pk];
      if (v.empty()) continue;
      seen[v].push_back(r.row_index);
    }
    for (auto& [v, idxs] : seen)
      if (idxs.size() > 1)
        report.duplicate_pks.push_back({t.name, t.columns[*pk].name, v, idxs});
  }

  // dangling foreign keys
  for (const auto& fk : join_compatible_pairs(schema)) {
    auto from_rows = rows.find(fk.from_table);
    auto to_rows = rows.find(fk.to_table);
    if (from_rows == rows.end()) continue;
    size_t from_col = *schema.table(fk.from_table).column_index(fk.from_column);
    size_t to_col = *schema.table(fk.to_table).column_index(fk.to_column);
    std::set<std::string> pk_values;
    if (to_rows != rows.end())
      for (const auto& r : to_rows->second)
        if (!r.cells[to_col].empty()) pk_values.insert(r.cells[to_col]);
    std::map<std::string, std::vector<size_t>> dangling;
    for (const auto& r : from_rows->second) {
      const std::string& v = r.cells[from_col];
      if (v.empty()) continue;
      if (!pk_values.count(v)) dangling[v].push_back(r.row_index);
    }
    for (auto& [v, idxs] : dangling)
      report.dangling_fks.push_back({fk.from_table, fk.from_column, v, idxs});
  }
  return report;
}

}  // namespace reltab
