#include "reltab/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>

#include "json.hpp"
#include "reltab/error.hpp"

namespace reltab {

using ojson = nlohmann::ordered_json;

std::vector<Sentence> row_sentences(const ColumnCatalog& catalog,
                                    const VocabSet& vocabs,
                                    const std::vector<RowRecord>& rows) {
  std::vector<Sentence> out;
  out.reserve(rows.size());
  for (const auto& r : rows) out.push_back(encode_row(catalog, vocabs, r));
  return out;
}

std::vector<SentencePair> materialize_join_sentences(
    const ColumnCatalog& catalog, const ForeignKeyDef& fk,
    const std::vector<Sentence>& pk_rows, const std::vector<Sentence>& fk_rows) {
  uint32_t pk_col = catalog.id_of(fk.to_table, fk.to_column);
  uint32_t fk_col = catalog.id_of(fk.from_table, fk.from_column);
  auto key_at = [&](const Sentence& s, uint32_t col) -> uint32_t {
    for (const auto& t : s.tokens)
      if (t.column == col) return t.token;
    throw SchemaError("sentence lacks key column " + catalog.qualified_name(col));
  };
  // key token -> pk rows (shared key vocabulary makes ids comparable)
  std::map<uint32_t, std::vector<const Sentence*>> by_key;
  for (const auto& s : pk_rows) {
    uint32_t key = key_at(s, pk_col);
    if (key == Vocabulary::kUnk) continue;  // null keys never join
    by_key[key].push_back(&s);
  }
  std::vector<SentencePair> pairs;
  for (const auto& s : fk_rows) {
    uint32_t key = key_at(s, fk_col);
    if (key == Vocabulary::kUnk) continue;
    auto it = by_key.find(key);
    if (it == by_key.end()) continue;  // dangling FK: no pair
    for (const Sentence* pk : it->second)
      pairs.push_back(SentencePair{*pk, s, true, key, key});
  }
  return pairs;
}

std::vector<NspInstance> sample_negatives(const ColumnCatalog& catalog,
                                          const ForeignKeyDef& fk,
                                          const std::vector<SentencePair>& positives,
                                          const std::vector<Sentence>& fk_rows,
                                          size_t k, Rng& rng) {
  if (k < 1) throw ConfigError("sample_negatives: k must be >= 1");
  uint32_t fk_col = catalog.id_of(fk.from_table, fk.from_column);
  auto key_at = [&](const Sentence& s) -> uint32_t {
    for (const auto& t : s.tokens)
      if (t.column == fk_col) return t.token;
    throw SchemaError("sentence lacks key column");
  };
  std::set<uint32_t> distinct;
  for (const auto& s : fk_rows) distinct.insert(key_at(s));
  if (fk_rows.size() < 2 || distinct.size() < 2)
    throw InsufficientRowsError(
        "negative sampling needs >= 2 distinct key values in " + fk.from_table);

  std::vector<NspInstance> out;
  out.reserve(positives.size());
  for (const auto& pos : positives) {
    NspInstance inst;
    inst.positive = pos;
    inst.negatives.reserve(k);
    for (size_t i = 0; i < k; ++i) {
      // uniform over rows whose key differs from the true key
      for (;;) {
        const Sentence& cand = fk_rows[rng.uniform_index(fk_rows.size())];
        uint32_t cand_key = key_at(cand);
        if (cand_key == pos.key_second) continue;
        inst.negatives.push_back(
            SentencePair{pos.first, cand, false, pos.key_first, cand_key});
        break;
      }
    }
    out.push_back(std::move(inst));
  }
  return out;
}

MaskedSentence apply_mask(const Sentence& sentence,
                          const std::set<uint32_t>& maskable, Rng& rng) {
  std::vector<size_t> positions;
  for (size_t i = 0; i < sentence.tokens.size(); ++i) {
    // cells holding [UNK]/[PAD] are not predictable entities
    if (sentence.tokens[i].token < Vocabulary::kNumSpecials) continue;
    if (maskable.count(sentence.tokens[i].column)) positions.push_back(i);
  }
  if (positions.empty())
    throw NoMaskablePositionError("sentence has no maskable position");
  size_t pos = positions[rng.uniform_index(positions.size())];
  MaskedSentence m;
  m.base = sentence;
  m.mask_pos = pos;
  m.target_column = sentence.tokens[pos].column;
  m.target_token = sentence.tokens[pos].token;
  m.base.tokens[pos].token = Vocabulary::kMask;
  return m;
}

std::set<uint32_t> maskable_columns(const ColumnCatalog& catalog,
                                    const MaskPolicy& policy) {
  std::set<uint32_t> out;
  if (policy.only_column) {
    out.insert(*policy.only_column);
    return out;
  }
  for (uint32_t c = 0; c < catalog.num_columns(); ++c) {
    if (policy.exclude_keys && catalog.role_of(c) != ColumnRole::Attribute)
      continue;
    out.insert(c);
  }
  return out;
}

SplitAssignment split_grouped(const std::vector<RowRecord>& rows,
                              size_t group_cell_index,
                              std::array<double, 3> ratios, Rng& rng) {
  double total = ratios[0] + ratios[1] + ratios[2];
  if (std::fabs(total - 1.0) > 1e-9)
    throw ConfigError("split ratios must sum to 1");

  std::map<std::string, std::vector<size_t>> groups;
  for (size_t i = 0; i < rows.size(); ++i) {
    if (group_cell_index >= rows[i].cells.size())
      throw IndexError("group column out of range");
    groups[rows[i].cells[group_cell_index]].push_back(i);
  }

  SplitAssignment out;
  for (auto& [key, members] : groups) {
    SplitAssignment::Group g;
    g.key = key;
    rng.shuffle(members);
    size_t n = members.size();
    if (n < 3) {
      g.train = members;
    } else {
      // largest-remainder apportionment of n seats over the three parts
      std::array<size_t, 3> want{};
      std::array<double, 3> rem{};
      size_t used = 0;
      for (int p = 0; p < 3; ++p) {
        double q = ratios[p] * static_cast<double>(n);
        want[p] = static_cast<size_t>(std::floor(q));
        rem[p] = q - std::floor(q);
        used += want[p];
      }
      std::array<int, 3> order{0, 1, 2};
      std::stable_sort(order.begin(), order.end(),
                       [&](int a, int b) { return rem[a] > rem[b]; });
      for (size_t s = 0; used < n; ++s, ++used) ++want[order[s % 3]];
      size_t at = 0;
      for (size_t i = 0; i < want[0]; ++i) g.train.push_back(members[at++]);
      for (size_t i = 0; i < want[1]; ++i) g.valid.push_back(members[at++]);
      for (size_t i = 0; i < want[2]; ++i) g.test.push_back(members[at++]);
    }
    out.train.insert(out.train.end(), g.train.begin(), g.train.end());
    out.valid.insert(out.valid.end(), g.valid.begin(), g.valid.end());
    out.test.insert(out.test.end(), g.test.begin(), g.test.end());
    out.groups.push_back(std::move(g));
  }
  std::sort(out.train.begin(), out.train.end());
  std::sort(out.valid.begin(), out.valid.end());
  std::sort(out.test.begin(), out.test.end());
  return out;
}

Sentence build_pair_sequence(const Sentence& first, const Sentence& second,
                             uint32_t special_column) {
  Sentence seq;
  seq.table = first.table + "+" + second.table;
  seq.row_index = first.row_index;
  seq.tokens.reserve(first.tokens.size() + second.tokens.size() + 3);
  seq.tokens.push_back({SpecialToken::kCls, special_column});
  for (const auto& t : first.tokens) seq.tokens.push_back(t);
  seq.tokens.push_back({SpecialToken::kSep, special_column});
  for (const auto& t : second.tokens) seq.tokens.push_back(t);
  seq.tokens.push_back({SpecialToken::kSep, special_column});
  return seq;
}

// ---------------------------------------------------------------------------

CorpusInstance to_corpus_instance(const MaskedSentence& m) {
  CorpusInstance c;
  c.kind = CorpusInstance::Kind::Mlm;
  c.tokens = m.base.tokens;
  c.mask_pos = m.mask_pos;
  c.target = std::make_pair(m.target_column, m.target_token);
  return c;
}

CorpusInstance to_corpus_instance(const SentencePair& p, uint32_t special_column) {
  CorpusInstance c;
  c.kind = CorpusInstance::Kind::Nsp;
  c.tokens = build_pair_sequence(p.first, p.second, special_column).tokens;
  c.label = p.positive ? 1 : 0;
  return c;
}

void write_corpus_jsonl(const std::string& path,
                        const std::vector<CorpusInstance>& instances) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IOError("cannot write corpus file: " + path);
  for (const auto& inst : instances) {
    ojson j;
    j["kind"] = inst.kind == CorpusInstance::Kind::Mlm ? "mlm" : "nsp";
    ojson toks = ojson::array();
    for (const auto& t : inst.tokens) toks.push_back({t.token, t.column});
    j["tokens"] = toks;
    if (inst.mask_pos) j["mask_pos"] = *inst.mask_pos;
    if (inst.target) j["target"] = {inst.target->first, inst.target->second};
    if (inst.label) j["label"] = *inst.label;
    out << j.dump() << '\n';
  }
}

std::vector<CorpusInstance> read_corpus_jsonl(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IOError("cannot read corpus file: " + path);
  std::vector<CorpusInstance> out;
  std::string line;
  size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    ojson j;
    try {
      j = ojson::parse(line);
    } catch (const std::exception& e) {
      throw ParseError(path + ":" + std::to_string(lineno) + ": " + e.what());
    }
    CorpusInstance inst;
    std::string kind = j.at("kind").get<std::string>();
    if (kind == "mlm") inst.kind = CorpusInstance::Kind::Mlm;
    else if (kind == "nsp") inst.kind = CorpusInstance::Kind::Nsp;
    else throw ParseError(path + ": unknown instance kind " + kind);
    for (const auto& t : j.at("tokens"))
      inst.tokens.push_back({t.at(0).get<uint32_t>(), t.at(1).get<uint32_t>()});
    if (j.contains("mask_pos")) inst.mask_pos = j["mask_pos"].get<size_t>();
    if (j.contains("target"))
      inst.target = std::make_pair(j["target"].at(0).get<uint32_t>(),
                                   j["target"].at(1).get<uint32_t>());
    if (j.contains("label")) inst.label = j["label"].get<int>();
    out.push_back(std::move(inst));
  }
  return out;
}

}  // namespace reltab
