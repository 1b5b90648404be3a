#include <cstring>
#include <fstream>
#include <map>

#include "json.hpp"
#include "promptattrib/error.hpp"
#include "promptattrib/text.hpp"
#include "promptattrib/train.hpp"

namespace promptattrib {
namespace {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

constexpr char kBlobMagic[8] = {'P', 'A', 'B', 'L', 'O', 'B', '1', '\n'};
constexpr int kManifestVersion = 1;

// Blob layout: magic, u64 count, then per tensor u64 name length, name bytes,
// u64 rows, u64 cols, rows*cols little-endian doubles.
void write_u64(std::ostream& out, std::uint64_t v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

std::uint64_t read_u64(std::istream& in, const fs::path& path) {
  std::uint64_t v = 0;
  if (!in.read(reinterpret_cast<char*>(&v), sizeof v)) {
    throw Error("checkpoint blob " + path.string() + " is truncated");
  }
  return v;
}

void write_blob(const fs::path& path, const std::vector<Parameter*>& params) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out.write(kBlobMagic, sizeof kBlobMagic);
  write_u64(out, params.size());
  for (const Parameter* p : params) {
    write_u64(out, p->name.size());
    out.write(p->name.data(), static_cast<std::streamsize>(p->name.size()));
    write_u64(out, p->value.rows());
    write_u64(out, p->value.cols());
    const auto& v = p->value.values();
    out.write(reinterpret_cast<const char*>(v.data()),
              static_cast<std::streamsize>(v.size() * sizeof(double)));
  }
  if (!out) throw Error("failed writing " + path.string());
}

void read_blob(const fs::path& path, const std::vector<Parameter*>& params) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open checkpoint blob " + path.string());
  char magic[sizeof kBlobMagic];
  if (!in.read(magic, sizeof magic) || std::memcmp(magic, kBlobMagic, sizeof magic) != 0) {
    throw Error(path.string() + " is not a parameter blob");
  }
  std::map<std::string, Parameter*> by_name;
  for (Parameter* p : params) by_name[p->name] = p;
  const std::uint64_t count = read_u64(in, path);
  if (count != params.size()) {
    throw Error(path.string() + " holds " + std::to_string(count) + " tensors, model expects " +
                std::to_string(params.size()));
  }
  for (std::uint64_t i = 0; i < count; ++i) {
    const std::uint64_t len = read_u64(in, path);
    if (len > 4096) throw Error(path.string() + ": corrupt tensor name length");
    std::string name(len, '\0');
    if (!in.read(name.data(), static_cast<std::streamsize>(len))) {
      throw Error("checkpoint blob " + path.string() + " is truncated");
    }
    const std::uint64_t rows = read_u64(in, path);
    const std::uint64_t cols = read_u64(in, path);
    const auto it = by_name.find(name);
    if (it == by_name.end()) throw Error(path.string() + ": unexpected tensor " + name);
    Parameter& p = *it->second;
    if (rows != p.value.rows() || cols != p.value.cols()) {
      throw Error(path.string() + ": tensor " + name + " has shape " + std::to_string(rows) + "x" +
                  std::to_string(cols) + ", model expects " + shape_string(p.value));
    }
    const auto v = p.value.values();
    if (!in.read(reinterpret_cast<char*>(v.data()),
                 static_cast<std::streamsize>(v.size() * sizeof(double)))) {
      throw Error("checkpoint blob " + path.string() + " is truncated");
    }
    by_name.erase(it);
  }
}

ordered_json verbalizer_json(const Verbalizer& v) {
  ordered_json j = ordered_json::object();
  for (std::size_t i = 0; i < v.size(); ++i) {
    ordered_json entry;
    entry["words"] = v.resolved_words()[i];
    entry["ids"] = v.resolved_ids()[i];
    j[v.labels()[i]] = entry;
  }
  return j;
}

}  // namespace

void save_checkpoint(PromptAttribModel& model, const fs::path& dir) {
  const auto* toy = dynamic_cast<const ToyMaskedLm*>(&model.backend());
  if (toy == nullptr) {
    throw Error("checkpointing supports the toy backend only, got " + model.backend().kind());
  }
  fs::create_directories(dir);
  const ToyBackendOptions& o = toy->options();
  ordered_json m;
  m["version"] = kManifestVersion;
  m["backend"] = {{"kind", toy->kind()},
                  {"seed", o.seed},
                  {"embedding_dim", o.embedding_dim},
                  {"max_length", o.max_length},
                  {"layers", o.layers},
                  {"ffn_dim", o.ffn_dim},
                  {"extra_words", o.extra_words}};
  m["vocab"] = toy->spec().vocab;
  m["verbalizers"] = {{"binary", verbalizer_json(model.binary_verbalizer())},
                      {"ternary", verbalizer_json(model.ternary_verbalizer())}};
  {
    std::ofstream out(dir / "manifest.json");
    if (!out) throw Error("cannot write " + (dir / "manifest.json").string());
    out << m.dump(2) << "\n";
  }
  {
    std::ofstream out(dir / "run.cfg");
    if (!out) throw Error("cannot write " + (dir / "run.cfg").string());
    out << model.config().to_config().dump();
  }
  write_blob(dir / "backend.bin", model.backend().parameters());
  write_blob(dir / "banks.bin", model.bank_parameters());
}

PromptAttribModel load_checkpoint(const fs::path& dir) {
  const fs::path manifest_path = dir / "manifest.json";
  if (!fs::exists(manifest_path)) throw Error("no checkpoint manifest at " + manifest_path.string());
  ordered_json m;
  try {
    m = ordered_json::parse(read_file(manifest_path.string()));
  } catch (const nlohmann::json::exception& e) {
    throw Error("malformed checkpoint manifest " + manifest_path.string() + ": " + e.what());
  }
  try {
    if (m.at("version").get<int>() != kManifestVersion) {
      throw Error("unsupported checkpoint version in " + manifest_path.string());
    }
    const auto& b = m.at("backend");
    const std::string kind = b.at("kind").get<std::string>();
    if (kind != "toy") throw Error("checkpoint backend \"" + kind + "\" is not available");
    ToyBackendOptions o;
    o.seed = b.at("seed").get<std::uint64_t>();
    o.embedding_dim = b.at("embedding_dim").get<std::size_t>();
    o.max_length = b.at("max_length").get<std::size_t>();
    o.layers = b.at("layers").get<std::size_t>();
    o.ffn_dim = b.at("ffn_dim").get<std::size_t>();
    o.extra_words = b.at("extra_words").get<std::vector<std::string>>();
    auto backend = make_toy_backend(std::move(o));
    if (backend->spec().vocab != m.at("vocab").get<std::vector<std::string>>()) {
      throw Error("checkpoint vocabulary does not match the rebuilt backend");
    }

    const TrainConfig cfg = TrainConfig::from_config(Config::load(dir / "run.cfg"));
    PromptAttribModel model(std::move(backend), cfg);
    const auto& verb = m.at("verbalizers");
    if (verb.at("binary") != verbalizer_json(model.binary_verbalizer()) ||
        verb.at("ternary") != verbalizer_json(model.ternary_verbalizer())) {
      throw Error("checkpoint verbalizer tables do not match the backend tokenizer");
    }
    read_blob(dir / "backend.bin", model.backend().parameters());
    read_blob(dir / "banks.bin", model.bank_parameters());
    return model;
  } catch (const nlohmann::json::exception& e) {
    throw Error("malformed checkpoint manifest " + manifest_path.string() + ": " + e.what());
  }
}

}  // namespace promptattrib
