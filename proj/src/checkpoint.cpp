#include "reltab/checkpoint.hpp"

#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "reltab/error.hpp"

namespace reltab {

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

namespace {

std::string hex64(uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return std::string(buf);
}

template <class T>
void write_pod(std::ofstream& out, T v) {
  static_assert(std::is_trivially_copyable_v<T>);
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T read_pod(std::ifstream& in, const std::string& ctx) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw IOError("truncated checkpoint while reading " + ctx);
  return v;
}

const char* activation_name(Activation a) {
  return a == Activation::Gelu ? "gelu" : "relu";
}

Activation activation_from(const std::string& s) {
  if (s == "gelu") return Activation::Gelu;
  if (s == "relu") return Activation::Relu;
  throw ParseError("unknown activation: " + s);
}

}  // namespace

void save_checkpoint(const TableEncoderModel& model, const DatabaseSchema& schema,
                     const VocabSet& vocabs, const std::string& dir,
                     uint64_t seed) {
  fs::create_directories(dir);
  const ModelConfig& cfg = model.config();

  ojson meta;
  meta["format_version"] = kCheckpointFormatVersion;
  meta["config"] = {{"dim", cfg.dim},
                    {"layers", cfg.layers},
                    {"heads", cfg.heads},
                    {"ff_hidden", cfg.ff_hidden},
                    {"activation", activation_name(cfg.activation)}};
  meta["schema_hash"] = hex64(schema_hash(schema));
  meta["vocab_hash"] = hex64(vocabs.hash());
  meta["seed"] = seed;
  {
    std::ofstream out(fs::path(dir) / "meta.json", std::ios::binary);
    if (!out) throw IOError("cannot write checkpoint meta: " + dir);
    out << meta.dump(2) << '\n';
  }

  std::ofstream out(fs::path(dir) / "params.bin", std::ios::binary);
  if (!out) throw IOError("cannot write checkpoint params: " + dir);
  for (const auto& p : model.parameters()) {
    write_pod<uint32_t>(out, static_cast<uint32_t>(p.name.size()));
    out.write(p.name.data(), static_cast<std::streamsize>(p.name.size()));
    const auto& shape = p.value.shape();
    write_pod<uint32_t>(out, static_cast<uint32_t>(shape.size()));
    for (size_t d : shape) write_pod<uint64_t>(out, static_cast<uint64_t>(d));
    const auto& vals = p.value.values();
    out.write(reinterpret_cast<const char*>(vals.data()),
              static_cast<std::streamsize>(vals.size() * sizeof(double)));
  }
  if (!out) throw IOError("failed writing checkpoint params: " + dir);
}

TableEncoderModel load_checkpoint(const std::string& dir,
                                  const DatabaseSchema& schema,
                                  const VocabSet& vocabs) {
  fs::path meta_path = fs::path(dir) / "meta.json";
  std::ifstream meta_in(meta_path, std::ios::binary);
  if (!meta_in) throw IOError("cannot open checkpoint meta: " + meta_path.string());
  ojson meta;
  try {
    meta = ojson::parse(meta_in);
  } catch (const std::exception& e) {
    throw IOError("malformed checkpoint meta: " + std::string(e.what()));
  }

  int version = meta.at("format_version").get<int>();
  if (version != kCheckpointFormatVersion)
    throw VersionMismatchError("checkpoint format version " +
                               std::to_string(version) + " is not supported");
  if (meta.at("schema_hash").get<std::string>() != hex64(schema_hash(schema)))
    throw SchemaHashMismatchError(
        "checkpoint was written against a different schema");
  if (meta.at("vocab_hash").get<std::string>() != hex64(vocabs.hash()))
    throw SchemaHashMismatchError(
        "checkpoint was written against different vocabularies");

  ModelConfig cfg;
  const auto& jc = meta.at("config");
  cfg.dim = jc.at("dim").get<size_t>();
  cfg.layers = jc.at("layers").get<size_t>();
  cfg.heads = jc.at("heads").get<size_t>();
  cfg.ff_hidden = jc.at("ff_hidden").get<size_t>();
  cfg.activation = activation_from(jc.at("activation").get<std::string>());

  ColumnCatalog catalog(schema);
  TableEncoderModel model(catalog, vocabs, cfg, /*seed=*/0);

  std::ifstream in(fs::path(dir) / "params.bin", std::ios::binary);
  if (!in) throw IOError("cannot open checkpoint params in " + dir);
  for (auto& p : model.parameters()) {
    uint32_t name_len = read_pod<uint32_t>(in, "name length");
    std::string name(name_len, '\0');
    in.read(name.data(), name_len);
    if (!in) throw IOError("truncated checkpoint while reading name");
    if (name != p.name)
      throw IOError("checkpoint parameter order mismatch: expected " + p.name +
                    ", found " + name);
    uint32_t ndim = read_pod<uint32_t>(in, "rank of " + name);
    std::vector<size_t> shape(ndim);
    for (auto& d : shape)
      d = static_cast<size_t>(read_pod<uint64_t>(in, "dims of " + name));
    if (shape != p.value.shape())
      throw IOError("checkpoint shape mismatch for " + name);
    auto& vals = p.value.raw();
    in.read(reinterpret_cast<char*>(vals.data()),
            static_cast<std::streamsize>(vals.size() * sizeof(double)));
    if (!in) throw IOError("truncated checkpoint while reading " + name);
  }
  char extra;
  if (in.read(&extra, 1))
    throw IOError("checkpoint has trailing bytes after the last parameter");
  return model;
}

}  // namespace reltab
