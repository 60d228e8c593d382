#include "waverora/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <map>

#include "waverora/error.hpp"

namespace waverora::checkpoint {
namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

}  // namespace

const std::vector<std::string>& architecture_fields() {
  static const std::vector<std::string> fields = {"variables", "lookback", "horizon", "levels", "embed_dim",
                                                  "encoder_layers", "heads", "routes", "basis", "attention",
                                                  "rotary", "gate", "skip", "outer_residual"};
  return fields;
}

void save(const std::filesystem::path& path, const model::WaveRoRAModel& model, const nlohmann::json& meta) {
  nlohmann::json header;
  header["config"] = model.config().to_json();
  header["meta"] = meta.is_null() ? nlohmann::json::object() : meta;
  header["tensors"] = nlohmann::json::array();
  const auto params = model.parameters();
  for (const Parameter* p : params) header["tensors"].push_back({{"name", p->name}, {"shape", p->value.shape()}});
  const std::string text = header.dump();

  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write checkpoint " + path.string());
  const std::uint64_t length = text.size();
  out.write(kMagic, 4);
  out.write(reinterpret_cast<const char*>(&length), sizeof length);
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const Parameter* p : params) {
    out.write(reinterpret_cast<const char*>(p->value.data()),
              static_cast<std::streamsize>(p->value.size() * sizeof(double)));
  }
  if (!out) throw Error("failed while writing checkpoint " + path.string());
}

Loaded load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LoadError("cannot open checkpoint " + path.string());
  char magic[4] = {};
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kMagic, 4) != 0) throw LoadError(path.string() + " is not a WRR1 checkpoint");
  std::uint64_t length = 0;
  in.read(reinterpret_cast<char*>(&length), sizeof length);
  if (!in || length > (1ull << 30)) throw LoadError(path.string() + ": corrupt header length");
  std::string text(length, '\0');
  in.read(text.data(), static_cast<std::streamsize>(length));
  if (!in) throw LoadError(path.string() + ": truncated header");

  nlohmann::json header;
  try {
    header = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw LoadError(path.string() + ": unreadable header: " + e.what());
  }
  if (!header.is_object() || !header.contains("config") || !header.contains("tensors") ||
      !header.at("tensors").is_array()) {
    throw LoadError(path.string() + ": header lacks config or tensors");
  }
  Loaded loaded{model::WaveRoRAModel(model::ModelConfig::from_json(header.at("config")), 0),
                header.value("meta", nlohmann::json::object())};

  std::map<std::string, Parameter*> by_name;
  for (Parameter* p : loaded.model.parameters()) by_name[p->name] = p;
  std::size_t filled = 0;
  for (const auto& entry : header.at("tensors")) {
    std::string name;
    Shape shape;
    try {
      name = entry.at("name").get<std::string>();
      shape = entry.at("shape").get<Shape>();
    } catch (const nlohmann::json::exception& e) {
      throw LoadError(path.string() + ": malformed tensor entry: " + e.what());
    }
    auto it = by_name.find(name);
    if (it == by_name.end()) throw LoadError(path.string() + ": unexpected tensor '" + name + "'");
    Parameter& p = *it->second;
    if (shape != p.value.shape()) {
      throw LoadError(path.string() + ": tensor '" + name + "' has shape " + shape_string(shape) + ", model expects " +
                      shape_string(p.value.shape()));
    }
    in.read(reinterpret_cast<char*>(p.value.data()), static_cast<std::streamsize>(p.value.size() * sizeof(double)));
    if (!in) throw LoadError(path.string() + ": truncated data for '" + name + "'");
    ++filled;
  }
  if (filled != by_name.size()) {
    throw LoadError(path.string() + ": holds " + std::to_string(filled) + " tensors, model has " +
                    std::to_string(by_name.size()));
  }
  return loaded;
}

void check_compatible(const model::ModelConfig& expected, const model::ModelConfig& found,
                      std::span<const std::string> fields) {
  if (fields.empty()) fields = architecture_fields();
  const nlohmann::json a = expected.to_json();
  const nlohmann::json b = found.to_json();
  for (const std::string& field : fields) {
    if (!a.contains(field)) throw ConfigError("unknown model config key '" + field + "'");
    if (a.at(field) != b.at(field)) {
      throw CompatibilityError(field, "checkpoint field '" + field + "' is " + b.at(field).dump() +
                                          " but the run config has " + a.at(field).dump());
    }
  }
}

void copy_parameters(const model::WaveRoRAModel& from, model::WaveRoRAModel& to) {
  const auto src = from.parameters();
  auto dst = to.parameters();
  if (src.size() != dst.size()) throw ShapeError("copy_parameters: models differ in parameter count");
  for (std::size_t i = 0; i < src.size(); ++i) {
    if (src[i]->name != dst[i]->name || src[i]->value.shape() != dst[i]->value.shape()) {
      throw ShapeError("copy_parameters: parameter '" + src[i]->name + "' does not match '" + dst[i]->name + "'");
    }
    dst[i]->value = src[i]->value;
  }
}

}  // namespace waverora::checkpoint
