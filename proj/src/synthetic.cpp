#include "reltab/synthetic.hpp"

#include <filesystem>
#include <fstream>

#include "reltab/csv.hpp"
#include "reltab/rng.hpp"
#include "reltab/schema.hpp"

namespace reltab {
namespace synth {

namespace fs = std::filesystem;

DatabaseSchema fd_schema() {
  return parse_schema(R"({"tables":[{"name":"obs","columns":[
      {"name":"a","role":"attribute","dtype_hint":"categorical"},
      {"name":"b","role":"attribute","dtype_hint":"categorical"},
      {"name":"c","role":"attribute","dtype_hint":"categorical"}]}],
      "foreign_keys":[]})");
}

TableRows fd_rows(const FdSpec& spec) {
  Rng rng(spec.seed);
  const size_t n = spec.alphabet;
  std::vector<uint32_t> fd(n * n);
  for (size_t i = 0; i < fd.size(); ++i) fd[i] = static_cast<uint32_t>(i);
  rng.shuffle(fd);  // random bijection (a, b) -> c
  TableRows rows;
  size_t idx = 0;
  for (size_t i = 0; i < n; ++i)
    for (size_t j = 0; j < n; ++j)
      for (size_t r = 0; r < spec.rows_per_combo; ++r) {
        rows["obs"].push_back(RowRecord{
            "obs",
            {"a" + std::to_string(i), "b" + std::to_string(j),
             "c" + std::to_string(fd[i * n + j])},
            idx++});
      }
  return rows;
}

Dataset fd_dataset(const FdSpec& spec) {
  return Dataset::from_rows(fd_schema(), fd_rows(spec));
}

DatabaseSchema join_toy_schema() {
  return parse_schema(R"({"tables":[
      {"name":"parents","columns":[
        {"name":"key_id","role":"primary_key"},
        {"name":"color","role":"attribute"}]},
      {"name":"children","columns":[
        {"name":"key_id","role":"foreign_key"},
        {"name":"shape","role":"attribute"}]}],
      "foreign_keys":[{"from_table":"children","from_column":"key_id",
                       "to_table":"parents","to_column":"key_id"}]})");
}

TableRows join_toy_rows(const JoinToySpec& spec) {
  Rng rng(spec.seed);
  TableRows rows;
  for (size_t i = 0; i < spec.keys; ++i) {
    rows["parents"].push_back(RowRecord{
        "parents",
        {"k" + std::to_string(i),
         "color" + std::to_string(rng.uniform_index(spec.attribute_values))},
        i});
    rows["children"].push_back(RowRecord{
        "children",
        {"k" + std::to_string(i),
         "shape" + std::to_string(rng.uniform_index(spec.attribute_values))},
        i});
  }
  return rows;
}

Dataset join_toy_dataset(const JoinToySpec& spec) {
  return Dataset::from_rows(join_toy_schema(), join_toy_rows(spec));
}

DatabaseSchema mini_imdb_schema() {
  return parse_schema(R"({"tables":[
      {"name":"movies","columns":[
        {"name":"movie_id","role":"primary_key"},
        {"name":"name","role":"attribute"},
        {"name":"year","role":"attribute","dtype_hint":"numeric"},
        {"name":"rank","role":"attribute","dtype_hint":"numeric"},
        {"name":"genre","role":"attribute"}]},
      {"name":"directors","columns":[
        {"name":"director_id","role":"primary_key"},
        {"name":"genre","role":"attribute"},
        {"name":"era","role":"attribute"}]},
      {"name":"actors","columns":[
        {"name":"actor_id","role":"primary_key"},
        {"name":"first_name","role":"attribute"},
        {"name":"last_name","role":"attribute"},
        {"name":"gender","role":"attribute"}]},
      {"name":"movies_directors","columns":[
        {"name":"movie_id","role":"foreign_key"},
        {"name":"director_id","role":"foreign_key"}]},
      {"name":"roles","columns":[
        {"name":"movie_id","role":"foreign_key"},
        {"name":"actor_id","role":"foreign_key"},
        {"name":"role","role":"attribute"}]}],
      "foreign_keys":[
        {"from_table":"movies_directors","from_column":"movie_id",
         "to_table":"movies","to_column":"movie_id"},
        {"from_table":"movies_directors","from_column":"director_id",
         "to_table":"directors","to_column":"director_id"},
        {"from_table":"roles","from_column":"movie_id",
         "to_table":"movies","to_column":"movie_id"},
        {"from_table":"roles","from_column":"actor_id",
         "to_table":"actors","to_column":"actor_id"}]})");
}

TableRows mini_imdbrows_impl(const MiniImdbSpec& spec) {
  Rng rng(spec.seed);
  const std::vector<std::string> genres = {
      "drama",  "comedy",   "thriller", "action", "romance",  "horror",
      "scifi",  "western",  "noir",     "war",    "musical",  "crime",
      "family", "biopic",   "mystery",  "sport",  "fantasy",  "documentary"};
  const std::vector<std::string> eras = {"silent", "golden", "new-wave",
                                         "blockbuster", "digital"};
  const std::vector<std::string> role_pool = {
      "lead", "villain", "sidekick", "mentor", "cameo", "narrator", "extra",
      "detective", "doctor", "teacher", "pilot", "soldier", "queen", "king",
      "reporter", "drifter", "sheriff", "scientist", "singer", "thief"};
  Rng name_rng = rng.child(1);
  auto syllable = [&](Rng& r) {
    static const char* s[] = {"an", "bel", "cor", "dan", "el",  "fen", "gar",
                              "hol", "iv",  "jor", "kait", "lum", "mor", "nel",
                              "ol",  "pra", "quin", "ros", "sam", "tor", "ul",
                              "vin", "wes", "xen", "yor", "zan"};
    return std::string(s[r.uniform_index(26)]);
  };
  auto make_name = [&](Rng& r) {
    std::string n = syllable(r) + syllable(r);
    n[0] = static_cast<char>(n[0] - 'a' + 'A');
    return n;
  };

  TableRows rows;
  // directors: home genre and era drive their movies
  std::vector<size_t> director_genre(spec.directors), director_era(spec.directors);
  for (size_t d = 0; d < spec.directors; ++d) {
    director_genre[d] = rng.uniform_index(genres.size());
    director_era[d] = rng.uniform_index(eras.size());
    rows["directors"].push_back(RowRecord{
        "directors",
        {"d" + std::to_string(d), genres[director_genre[d]],
         eras[director_era[d]]},
        d});
  }
  // movies and their single director
  for (size_t m = 0; m < spec.movies; ++m) {
    size_t d = rng.uniform_index(spec.directors);
    size_t genre = rng.uniform_real() < 0.8 ? director_genre[d]
                                            : rng.uniform_index(genres.size());
    size_t year = 1950 + director_era[d] * 12 + rng.uniform_index(12);
    size_t rank = 1 + rng.uniform_index(9);
    rows["movies"].push_back(RowRecord{
        "movies",
        {"m" + std::to_string(m), "The " + make_name(name_rng),
         std::to_string(year), std::to_string(rank), genres[genre]},
        m});
    rows["movies_directors"].push_back(RowRecord{
        "movies_directors", {"m" + std::to_string(m), "d" + std::to_string(d)},
        m});
  }
  for (size_t a = 0; a < spec.actors; ++a) {
    rows["actors"].push_back(RowRecord{
        "actors",
        {"a" + std::to_string(a), make_name(name_rng), make_name(name_rng),
         rng.uniform_real() < 0.5 ? "F" : "M"},
        a});
  }
  for (size_t r = 0; r < spec.roles; ++r) {
    rows["roles"].push_back(RowRecord{
        "roles",
        {"m" + std::to_string(rng.uniform_index(spec.movies)),
         "a" + std::to_string(rng.uniform_index(spec.actors)),
         role_pool[rng.uniform_index(role_pool.size())]},
        r});
  }
  return rows;
}

TableRows mini_imdb_rows(const MiniImdbSpec& spec) {
  return mini_imdbrows_impl(spec);
}

void write_dataset(const DatabaseSchema& schema, const TableRows& rows,
                   const std::string& dir) {
  fs::create_directories(dir);
  {
    std::string text = serialize_schema(schema);
    std::ofstream out(fs::path(dir) / "schema.json", std::ios::binary);
    out << text << '\n';
  }
  for (const auto& t : schema.tables) {
    std::vector<std::vector<std::string>> csv;
    std::vector<std::string> header;
    for (const auto& c : t.columns) header.push_back(c.name);
    csv.push_back(header);
    auto it = rows.find(t.name);
    if (it != rows.end())
      for (const auto& r : it->second) csv.push_back(r.cells);
    write_csv((fs::path(dir) / (t.name + ".csv")).string(), csv);
  }
}

}  // namespace synth
}  // namespace reltab
