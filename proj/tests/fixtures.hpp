#pragma once
#include <string>
#include <vector>

#include "json.hpp"
#include "reltab/ingest.hpp"
#include "reltab/schema.hpp"

namespace fixtures {

using nlohmann::json;

inline json column(const std::string& name, const std::string& role = "attribute",
                   const std::string& dtype = "categorical") {
  return json{{"name", name}, {"role", role}, {"dtype_hint", dtype}};
}

inline json table(const std::string& name, std::vector<json> cols) {
  return json{{"name", name}, {"columns", cols}};
}

inline json fk(const std::string& ft, const std::string& fc,
               const std::string& tt, const std::string& tc) {
  return json{{"from_table", ft}, {"from_column", fc},
              {"to_table", tt}, {"to_column", tc}};
}

// 7 tables, 21 columns, 6 FK-PK pairs
inline std::string imdb_schema_json() {
  json j;
  j["tables"] = {
      table("movies", {column("id", "primary_key"), column("name"),
                       column("year", "attribute", "numeric"),
                       column("rank", "attribute", "numeric")}),
      table("actors", {column("id", "primary_key"), column("first_name"),
                       column("last_name"), column("gender")}),
      table("directors",
            {column("id", "primary_key"), column("first_name"),
             column("last_name")}),
      table("movies_directors", {column("director_id", "foreign_key"),
                                 column("movie_id", "foreign_key")}),
      table("movies_genres",
            {column("movie_id", "foreign_key"), column("genre")}),
      table("directors_genres", {column("director_id", "foreign_key"),
                                 column("genre"), column("prob")}),
      table("roles", {column("actor_id", "foreign_key"),
                      column("movie_id", "foreign_key"), column("role")}),
  };
  j["foreign_keys"] = {
      fk("movies_directors", "director_id", "directors", "id"),
      fk("movies_directors", "movie_id", "movies", "id"),
      fk("movies_genres", "movie_id", "movies", "id"),
      fk("directors_genres", "director_id", "directors", "id"),
      fk("roles", "actor_id", "actors", "id"),
      fk("roles", "movie_id", "movies", "id"),
  };
  return j.dump();
}

// 6 tables, 12 densely connected FK-PK pairs
inline std::string mimic_schema_json() {
  auto attrs = [](std::vector<std::string> names) {
    std::vector<json> cols;
    for (auto& n : names) cols.push_back(column(n));
    return cols;
  };
  auto concat = [](std::vector<json> a, std::vector<json> b) {
    a.insert(a.end(), b.begin(), b.end());
    return a;
  };
  json j;
  j["tables"] = {
      table("patients",
            concat({column("subject_id", "primary_key")},
                   attrs({"gender", "dob", "dod", "expire_flag", "language",
                          "marital_status"}))),
      table("admissions",
            concat({column("hadm_id", "primary_key"),
                    column("subject_id", "foreign_key")},
                   attrs({"admittime", "dischtime", "admission_type",
                          "admission_location", "discharge_location",
                          "insurance", "religion", "ethnicity", "edregtime",
                          "edouttime", "diagnosis", "hospital_expire_flag",
                          "has_chartevents_data", "deathtime", "language_x",
                          "marital_status_x"}))),
      table("drgcodes",
            concat({column("drg_id", "primary_key"),
                    column("subject_id", "foreign_key"),
                    column("hadm_id", "foreign_key")},
                   attrs({"drg_type", "drg_code", "description",
                          "drg_severity"}))),
      table("cptevents",
            concat({column("subject_id", "foreign_key"),
                    column("hadm_id", "foreign_key"),
                    column("drg_id", "foreign_key")},
                   attrs({"costcenter", "chartdate", "cpt_cd", "cpt_number",
                          "cpt_suffix", "sectionheader", "subsectionheader",
                          "description"}))),
      table("diagnoses_icd",
            {column("subject_id", "foreign_key"),
             column("hadm_id", "foreign_key"), column("drg_id", "foreign_key"),
             column("icd9_code")}),
      table("procedures_icd",
            {column("subject_id", "foreign_key"),
             column("hadm_id", "foreign_key"), column("drg_id", "foreign_key"),
             column("proc_code")}),
  };
  j["foreign_keys"] = {
      fk("admissions", "subject_id", "patients", "subject_id"),
      fk("drgcodes", "subject_id", "patients", "subject_id"),
      fk("drgcodes", "hadm_id", "admissions", "hadm_id"),
      fk("cptevents", "subject_id", "patients", "subject_id"),
      fk("cptevents", "hadm_id", "admissions", "hadm_id"),
      fk("cptevents", "drg_id", "drgcodes", "drg_id"),
      fk("diagnoses_icd", "subject_id", "patients", "subject_id"),
      fk("diagnoses_icd", "hadm_id", "admissions", "hadm_id"),
      fk("diagnoses_icd", "drg_id", "drgcodes", "drg_id"),
      fk("procedures_icd", "subject_id", "patients", "subject_id"),
      fk("procedures_icd", "hadm_id", "admissions", "hadm_id"),
      fk("procedures_icd", "drg_id", "drgcodes", "drg_id"),
  };
  return j.dump();
}

// two-table toy: people(person_id PK, city) <- visits(person_id FK, place)
inline std::string toy_join_schema_json() {
  json j;
  j["tables"] = {
      table("people", {column("person_id", "primary_key"), column("city")}),
      table("visits",
            {column("person_id", "foreign_key"), column("place")}),
  };
  j["foreign_keys"] = {fk("visits", "person_id", "people", "person_id")};
  return j.dump();
}

inline reltab::RowRecord row(const std::string& table,
                             std::vector<std::string> cells, size_t idx) {
  return reltab::RowRecord{table, std::move(cells), idx};
}

}  // namespace fixtures
