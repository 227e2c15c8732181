#pragma once
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "reltab/ingest.hpp"
#include "reltab/rng.hpp"
#include "reltab/skipgram.hpp"

namespace reltab {

/// Token / row-id / column-id graph: every cell links its token node to the
/// cell's RID and CID; no other edge kinds exist.
class TripartiteGraph {
 public:
  enum class NodeType : uint8_t { Token, Rid, Cid };
  struct Node {
    NodeType type;
    uint32_t a = 0;  // Token: column id, Rid: table index, Cid: column id
    uint32_t b = 0;  // Token: token id,  Rid: row index
  };

  std::vector<Node> nodes;
  std::vector<std::vector<uint32_t>> adj;  // sorted, deduplicated
  size_t token_count = 0, rid_count = 0, cid_count = 0;

  const Node& node(uint32_t id) const { return nodes.at(id); }
  size_t size() const { return nodes.size(); }
  std::string label(uint32_t id, const ColumnCatalog& catalog) const;
  std::optional<uint32_t> token_node(uint32_t column, uint32_t token) const;

  std::map<std::pair<uint32_t, uint32_t>, uint32_t> token_index;
};

TripartiteGraph build_tripartite_graph(
    const ColumnCatalog& catalog,
    const std::map<std::string, std::vector<Sentence>>& sentences);

struct WalkConfig {
  size_t walks_per_entity = 1000;
  size_t walk_length = 60;
  uint64_t seed = 0;
  size_t threads = 1;
};

/// walks_per_entity uniform walks from every token node, each exactly
/// walk_length nodes. Deterministic for any thread count.
std::vector<std::vector<uint32_t>> random_walk_corpus(const TripartiteGraph& graph,
                                                      const WalkConfig& config);

/// One walk per line, space-separated node labels.
void write_walk_corpus(const std::string& path, const TripartiteGraph& graph,
                       const std::vector<std::vector<uint32_t>>& walks,
                       const ColumnCatalog& catalog);

// ---------------------------------------------------------------------------

struct RankedCandidates {
  std::vector<uint32_t> ranked_tokens;  // candidate tokens, best first
  std::vector<double> scores;           // aligned with the input candidates
};

/// Scores each candidate by cosine similarity between the mean context
/// embedding and the candidate embedding; ties break on smaller token id.
/// ids live in the given model's id space.
RankedCandidates baseline_rank(const SkipGramModel& model,
                               const std::vector<size_t>& context_ids,
                               const std::vector<size_t>& candidate_ids,
                               const std::vector<uint32_t>& candidate_tokens);

}  // namespace reltab
