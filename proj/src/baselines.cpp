#include "reltab/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>

#include "reltab/error.hpp"
#include "reltab/parallel.hpp"

namespace reltab {

std::string TripartiteGraph::label(uint32_t id, const ColumnCatalog& catalog) const {
  const Node& n = node(id);
  switch (n.type) {
    case NodeType::Token:
      return "tok:" + catalog.table_of(n.a) + "." + catalog.column_of(n.a) + "." +
             std::to_string(n.b);
    case NodeType::Rid: {
      const auto& tables = catalog.schema().tables;
      return "rid:" + tables.at(n.a).name + "." + std::to_string(n.b);
    }
    case NodeType::Cid:
      return "cid:" + catalog.table_of(n.a) + "." + catalog.column_of(n.a);
  }
  return "?";
}

std::optional<uint32_t> TripartiteGraph::token_node(uint32_t column,
                                                    uint32_t token) const {
  auto it = token_index.find({column, token});
  if (it == token_index.end()) return std::nullopt;
  return it->second;
}

TripartiteGraph build_tripartite_graph(
    const ColumnCatalog& catalog,
    const std::map<std::string, std::vector<Sentence>>& sentences) {
  TripartiteGraph g;
  const auto& tables = catalog.schema().tables;
  auto table_index = [&](const std::string& name) -> uint32_t {
    for (uint32_t i = 0; i < tables.size(); ++i)
      if (tables[i].name == name) return i;
    throw SchemaError("unknown table in sentences: " + name);
  };

  // token nodes first (ordered by column, token), then RIDs, then CIDs
  std::set<std::pair<uint32_t, uint32_t>> token_set;
  std::set<std::pair<uint32_t, uint32_t>> rid_set;
  std::set<uint32_t> cid_set;
  for (const auto& [table, sents] : sentences) {
    uint32_t ti = table_index(table);
    for (const Sentence& s : sents) {
      rid_set.insert({ti, static_cast<uint32_t>(s.row_index)});
      for (const auto& tok : s.tokens) {
        token_set.insert({tok.column, tok.token});
        cid_set.insert(tok.column);
      }
    }
  }
  for (const auto& [col, tok] : token_set) {
    g.token_index[{col, tok}] = static_cast<uint32_t>(g.nodes.size());
    g.nodes.push_back({TripartiteGraph::NodeType::Token, col, tok});
  }
  g.token_count = g.nodes.size();
  std::map<std::pair<uint32_t, uint32_t>, uint32_t> rid_index;
  for (const auto& [ti, row] : rid_set) {
    rid_index[{ti, row}] = static_cast<uint32_t>(g.nodes.size());
    g.nodes.push_back({TripartiteGraph::NodeType::Rid, ti, row});
  }
  g.rid_count = rid_set.size();
  std::map<uint32_t, uint32_t> cid_index;
  for (uint32_t col : cid_set) {
    cid_index[col] = static_cast<uint32_t>(g.nodes.size());
    g.nodes.push_back({TripartiteGraph::NodeType::Cid, col, 0});
  }
  g.cid_count = cid_set.size();

  g.adj.assign(g.nodes.size(), {});
  auto link = [&](uint32_t x, uint32_t y) {
    g.adj[x].push_back(y);
    g.adj[y].push_back(x);
  };
  for (const auto& [table, sents] : sentences) {
    uint32_t ti = table_index(table);
    for (const Sentence& s : sents) {
      uint32_t rid = rid_index.at({ti, static_cast<uint32_t>(s.row_index)});
      for (const auto& tok : s.tokens) {
        uint32_t tn = g.token_index.at({tok.column, tok.token});
        link(tn, rid);
        link(tn, cid_index.at(tok.column));
      }
    }
  }
  for (auto& neighbors : g.adj) {
    std::sort(neighbors.begin(), neighbors.end());
    neighbors.erase(std::unique(neighbors.begin(), neighbors.end()),
                    neighbors.end());
  }
  return g;
}

std::vector<std::vector<uint32_t>> random_walk_corpus(const TripartiteGraph& graph,
                                                      const WalkConfig& config) {
  if (config.walks_per_entity < 1 || config.walk_length < 1)
    throw ConfigError("walk config values must be >= 1");
  for (uint32_t n = 0; n < graph.token_count; ++n)
    if (graph.adj[n].empty())
      throw ConfigError("token node " + std::to_string(n) + " has no edges");

  size_t total = graph.token_count * config.walks_per_entity;
  std::vector<std::vector<uint32_t>> walks(total);
  Rng base(config.seed);
  parallel_for(total, config.threads, [&](size_t w) {
    // one independent stream per (start node, walk index)
    Rng rng = base.child(w);
    uint32_t node = static_cast<uint32_t>(w / config.walks_per_entity);
    std::vector<uint32_t>& walk = walks[w];
    walk.reserve(config.walk_length);
    walk.push_back(node);
    uint32_t cur = node;
    for (size_t step = 1; step < config.walk_length; ++step) {
      const auto& nb = graph.adj[cur];
      cur = nb[rng.uniform_index(nb.size())];
      walk.push_back(cur);
    }
  });
  return walks;
}

void write_walk_corpus(const std::string& path, const TripartiteGraph& graph,
                       const std::vector<std::vector<uint32_t>>& walks,
                       const ColumnCatalog& catalog) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IOError("cannot write walk corpus: " + path);
  for (const auto& walk : walks) {
    for (size_t i = 0; i < walk.size(); ++i) {
      if (i) out << ' ';
      out << graph.label(walk[i], catalog);
    }
    out << '\n';
  }
}

RankedCandidates baseline_rank(const SkipGramModel& model,
                               const std::vector<size_t>& context_ids,
                               const std::vector<size_t>& candidate_ids,
                               const std::vector<uint32_t>& candidate_tokens) {
  if (context_ids.empty())
    throw EmptyContextError("baseline ranking needs a non-empty context");
  if (candidate_ids.empty())
    throw NoCandidatesError("baseline ranking needs candidates");
  if (candidate_ids.size() != candidate_tokens.size())
    throw ShapeError("candidate ids and tokens differ in length");

  const size_t dim = model.dim();
  std::vector<double> mean(dim, 0.0);
  for (size_t id : context_ids) {
    const double* v = model.input_vector(id);
    for (size_t j = 0; j < dim; ++j) mean[j] += v[j];
  }
  for (double& v : mean) v /= static_cast<double>(context_ids.size());
  double mean_norm = 0;
  for (double v : mean) mean_norm += v * v;
  mean_norm = std::sqrt(mean_norm);

  RankedCandidates out;
  out.scores.resize(candidate_ids.size());
  for (size_t c = 0; c < candidate_ids.size(); ++c) {
    const double* v = model.input_vector(candidate_ids[c]);
    double dot = 0, norm = 0;
    for (size_t j = 0; j < dim; ++j) {
      dot += mean[j] * v[j];
      norm += v[j] * v[j];
    }
    norm = std::sqrt(norm);
    out.scores[c] =
        (mean_norm == 0.0 || norm == 0.0) ? 0.0 : dot / (mean_norm * norm);
  }
  std::vector<size_t> order(candidate_ids.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](size_t a, size_t b) {
    if (out.scores[a] != out.scores[b]) return out.scores[a] > out.scores[b];
    return candidate_tokens[a] < candidate_tokens[b];
  });
  out.ranked_tokens.reserve(order.size());
  for (size_t i : order) out.ranked_tokens.push_back(candidate_tokens[i]);
  return out;
}

}  // namespace reltab
