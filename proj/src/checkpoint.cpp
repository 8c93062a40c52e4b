#include "bmpnet/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>

#include "bmpnet/error.hpp"
#include "config_json.hpp"

namespace bmp {

namespace {

using detail::ojson;
constexpr char kMagic[4] = {'B', 'M', 'P', 'C'};
constexpr std::size_t kPrefixBytes = 16;

template <typename T>
constexpr Precision precision_of() {
  return std::is_same_v<T, double> ? Precision::Float64 : Precision::Float32;
}

// Sinks take (pointer, byte count); both std::string and std::ostream
// serialization go through write_checkpoint.
template <typename Sink, typename V>
void put(Sink& out, V v) {
  char buf[sizeof(V)];
  std::memcpy(buf, &v, sizeof(V));
  out(buf, sizeof(V));
}

template <typename Sink, typename T>
void put_tensor(Sink& out, const Tensor<T>& t) {
  out(reinterpret_cast<const char*>(t.data().data()), t.size() * sizeof(T));
}

struct Parsed {
  std::uint32_t version = 0;
  ojson header;
  std::size_t payload = 0;  // offset of the tensor data
};

Parsed parse_prefix(const std::string& bytes) {
  if (bytes.size() < kPrefixBytes || std::memcmp(bytes.data(), kMagic, 4) != 0) {
    throw CheckpointError("checkpoint: not a checkpoint file (bad magic)");
  }
  Parsed p;
  std::memcpy(&p.version, bytes.data() + 4, 4);
  if (p.version != kCheckpointVersion) {
    throw CheckpointError("checkpoint: version " + std::to_string(p.version) + " is not supported (expected " +
                          std::to_string(kCheckpointVersion) + ")");
  }
  std::uint64_t len = 0;
  std::memcpy(&len, bytes.data() + 8, 8);
  if (len > bytes.size() - kPrefixBytes) throw CheckpointError("checkpoint: truncated header");
  try {
    p.header = ojson::parse(bytes.begin() + kPrefixBytes, bytes.begin() + static_cast<std::ptrdiff_t>(kPrefixBytes + len));
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(std::string("checkpoint: malformed header: ") + e.what());
  }
  p.payload = kPrefixBytes + len;
  return p;
}

void check_vocabulary(const ojson& header, const PairUniverse& universe) {
  const auto attrs = header.at("attributes").get<std::vector<std::string>>();
  const auto objs = header.at("objects").get<std::vector<std::string>>();
  if (attrs != universe.attributes() || objs != universe.objects()) {
    throw CheckpointError("checkpoint: vocabulary mismatch (checkpoint has " + std::to_string(attrs.size()) +
                          " attributes and " + std::to_string(objs.size()) + " objects, dataset has " +
                          std::to_string(universe.num_attributes()) + " and " +
                          std::to_string(universe.num_objects()) + ", or the names differ)");
  }
}

std::string read_all(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("checkpoint: cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

template <typename T, typename Sink>
void write_checkpoint(Sink& out, const ModelState<T>& state, const PairUniverse& universe) {
  ojson h;
  h["format"] = "bmpnet-checkpoint";
  h["precision"] = detail::precision_name(precision_of<T>());
  h["attributes"] = universe.attributes();
  h["objects"] = universe.objects();
  h["model_config"] = detail::to_json(state.model_config);
  h["train_config"] = detail::to_json(state.train_config);
  h["step"] = state.step;
  h["epoch"] = state.epoch;
  h["adam_steps"] = state.optimizer.steps;
  h["rng_state"] = state.rng_state;
  ojson tensors = ojson::array();
  state.model.for_each([&](const std::string& name, const Tensor<T>& t) {
    tensors.push_back({{"name", name}, {"shape", t.shape()}});
  });
  h["tensors"] = std::move(tensors);
  const std::string header = h.dump();

  out(kMagic, 4);
  put(out, kCheckpointVersion);
  put(out, static_cast<std::uint64_t>(header.size()));
  out(header.data(), header.size());
  state.model.for_each([&](const std::string&, const Tensor<T>& t) { put_tensor(out, t); });
  for (const auto& t : state.optimizer.first) put_tensor(out, t);
  for (const auto& t : state.optimizer.second) put_tensor(out, t);
}

template <typename T>
std::string serialize_checkpoint(const ModelState<T>& state, const PairUniverse& universe) {
  std::size_t values = 0;
  state.model.for_each([&](const std::string&, const Tensor<T>& t) { values += t.size(); });
  std::string bytes;
  bytes.reserve(kPrefixBytes + 4096 + 3 * values * sizeof(T));
  auto sink = [&](const char* p, std::size_t n) { bytes.append(p, n); };
  write_checkpoint(sink, state, universe);
  return bytes;
}

template <typename T>
ModelState<T> deserialize_checkpoint(const std::string& bytes, const PairUniverse& universe) {
  const Parsed p = parse_prefix(bytes);
  const ojson& h = p.header;
  ModelState<T> s;
  try {
    if (h.at("format") != "bmpnet-checkpoint") throw CheckpointError("checkpoint: unknown format");
    const Precision prec = detail::parse_precision(h.at("precision").get<std::string>());
    if (prec != precision_of<T>()) {
      throw CheckpointError(std::string("checkpoint: stored as ") + std::string(detail::precision_name(prec)) +
                            ", requested " + std::string(detail::precision_name(precision_of<T>())));
    }
    check_vocabulary(h, universe);
    s.model_config = detail::model_config_from_json(h.at("model_config"), "checkpoint.model_config");
    s.train_config = detail::train_config_from_json(h.at("train_config"), "checkpoint.train_config");
    s.step = h.at("step").get<std::uint64_t>();
    s.epoch = h.at("epoch").get<std::uint64_t>();
    s.rng_state = h.at("rng_state").get<std::string>();

    // Rebuild the structure, then overwrite every tensor from the payload.
    Rng scratch(0);
    s.model = Model<T>::init(s.model_config, universe.num_attributes(), universe.num_objects(), scratch);
    s.optimizer = AdamState<T>::zeros_like(s.model);
    s.optimizer.steps = h.at("adam_steps").get<std::uint64_t>();

    const auto& listed = h.at("tensors");
    std::size_t index = 0;
    std::size_t offset = p.payload;
    auto take = [&](Tensor<T>& t) {
      const std::size_t n = t.size() * sizeof(T);
      if (offset + n > bytes.size()) throw CheckpointError("checkpoint: truncated tensor data");
      std::memcpy(t.values().data(), bytes.data() + offset, n);
      offset += n;
    };
    s.model.for_each([&](const std::string& name, Tensor<T>& t) {
      if (index >= listed.size() || listed[index].at("name") != name ||
          listed[index].at("shape").get<Shape>() != t.shape()) {
        throw CheckpointError("checkpoint: tensor layout does not match the model at '" + name + "'");
      }
      ++index;
      take(t);
    });
    if (index != listed.size()) throw CheckpointError("checkpoint: extra tensors in header");
    for (auto& t : s.optimizer.first) take(t);
    for (auto& t : s.optimizer.second) take(t);
    if (offset != bytes.size()) throw CheckpointError("checkpoint: trailing bytes after tensor data");
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(std::string("checkpoint: malformed header: ") + e.what());
  } catch (const ConfigError& e) {
    throw CheckpointError(std::string("checkpoint: ") + e.what());
  }
  return s;
}

template <typename T>
void save_checkpoint(const std::filesystem::path& path, const ModelState<T>& state, const PairUniverse& universe) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  // Written beside the target and renamed, so a crash never leaves a torn file.
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw CheckpointError("checkpoint: cannot write " + tmp.string());
    auto sink = [&](const char* p, std::size_t n) { out.write(p, static_cast<std::streamsize>(n)); };
    write_checkpoint(sink, state, universe);
    out.flush();
    if (!out) throw CheckpointError("checkpoint: write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

template <typename T>
ModelState<T> load_checkpoint(const std::filesystem::path& path, const PairUniverse& universe) {
  return deserialize_checkpoint<T>(read_all(path), universe);
}

CheckpointInfo read_checkpoint_info(const std::filesystem::path& path) {
  const Parsed p = parse_prefix(read_all(path));
  CheckpointInfo info;
  info.version = p.version;
  try {
    info.precision = detail::parse_precision(p.header.at("precision").get<std::string>());
    info.attributes = p.header.at("attributes").get<std::vector<std::string>>();
    info.objects = p.header.at("objects").get<std::vector<std::string>>();
    info.step = p.header.at("step").get<std::uint64_t>();
    info.epoch = p.header.at("epoch").get<std::uint64_t>();
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(std::string("checkpoint: malformed header: ") + e.what());
  } catch (const ConfigError& e) {
    throw CheckpointError(std::string("checkpoint: ") + e.what());
  }
  return info;
}

#define BMP_INSTANTIATE(T)                                                                            \
  template std::string serialize_checkpoint(const ModelState<T>&, const PairUniverse&);              \
  template ModelState<T> deserialize_checkpoint(const std::string&, const PairUniverse&);            \
  template void save_checkpoint(const std::filesystem::path&, const ModelState<T>&, const PairUniverse&); \
  template ModelState<T> load_checkpoint(const std::filesystem::path&, const PairUniverse&);
BMP_INSTANTIATE(float)
BMP_INSTANTIATE(double)
#undef BMP_INSTANTIATE

}  // namespace bmp
