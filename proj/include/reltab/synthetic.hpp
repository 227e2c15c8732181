#pragma once
#include <string>

#include "reltab/evaluation.hpp"

namespace reltab {
namespace synth {

/// 3-column table where the third column is a deterministic function of the
/// first two (alphabet x alphabet -> alphabet^2 distinct targets).
struct FdSpec {
  size_t alphabet = 10;
  size_t rows_per_combo = 5;
  uint64_t seed = 1;
};
DatabaseSchema fd_schema();
TableRows fd_rows(const FdSpec& spec);
Dataset fd_dataset(const FdSpec& spec);

/// Two tables joined by a unique (1:1) foreign key over `keys` key values.
struct JoinToySpec {
  size_t keys = 100;
  size_t attribute_values = 6;
  uint64_t seed = 2;
};
DatabaseSchema join_toy_schema();
TableRows join_toy_rows(const JoinToySpec& spec);
Dataset join_toy_dataset(const JoinToySpec& spec);

/// Five-table movie database (movies, directors, actors, movies_directors,
/// roles) with correlated attributes; a few thousand rows.
struct MiniImdbSpec {
  size_t movies = 1200;
  size_t directors = 150;
  size_t actors = 800;
  size_t roles = 3000;
  uint64_t seed = 7;
};
DatabaseSchema mini_imdb_schema();
TableRows mini_imdb_rows(const MiniImdbSpec& spec);

/// Writes schema.json plus one <table>.csv per table.
void write_dataset(const DatabaseSchema& schema, const TableRows& rows,
                   const std::string& dir);

}  // namespace synth
}  // namespace reltab
