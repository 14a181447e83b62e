#include "mivit/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include "mivit/fsutil.hpp"
#include "mivit/jsonio.hpp"

namespace mivit {

namespace {

constexpr char kMagic[4] = {'M', 'V', 'C', 'K'};
constexpr uint32_t kVersion = 1;

template <typename T>
void put(std::string& out, T v) {
  out.append(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(const std::string& buf, size_t& off, const char* what) {
  if (off + sizeof(T) > buf.size())
    throw FormatError(std::string("checkpoint: truncated reading ") + what + " at offset " +
                      std::to_string(off));
  T v;
  std::memcpy(&v, buf.data() + off, sizeof(T));
  off += sizeof(T);
  return v;
}

}  // namespace

const Tensor* CheckpointData::find(const std::string& name) const {
  for (auto& [n, t] : entries)
    if (n == name) return &t;
  return nullptr;
}

void save_checkpoint(const std::string& path, MivitModel<float>& model) {
  std::string out;
  out.append(kMagic, 4);
  put<uint32_t>(out, kVersion);
  nlohmann::json meta = {{"model", model_config_to_json(model.cfg)},
                         {"init_seed", model.init_seed}};
  const std::string js = meta.dump();
  put<uint32_t>(out, static_cast<uint32_t>(js.size()));
  out += js;
  Registry<float> reg = model.params();
  put<uint32_t>(out, static_cast<uint32_t>(reg.entries.size()));
  for (auto& [name, tensor] : reg.entries) {
    put<uint32_t>(out, static_cast<uint32_t>(name.size()));
    out += name;
    put<uint32_t>(out, static_cast<uint32_t>(tensor->shape.size()));
    for (int d : tensor->shape) put<uint32_t>(out, static_cast<uint32_t>(d));
    out.append(reinterpret_cast<const char*>(tensor->ptr()), tensor->numel() * sizeof(float));
  }
  atomic_write_file(path, out);
}

CheckpointData load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open checkpoint '" + path + "'");
  std::string buf((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  if (buf.size() < 4 || std::memcmp(buf.data(), kMagic, 4) != 0)
    throw FormatError("checkpoint: bad magic in '" + path + "'");
  size_t off = 4;
  const uint32_t version = get<uint32_t>(buf, off, "version");
  if (version != kVersion)
    throw FormatError("checkpoint: unsupported version " + std::to_string(version));
  const uint32_t jlen = get<uint32_t>(buf, off, "config length");
  if (off + jlen > buf.size()) throw FormatError("checkpoint: truncated config block");
  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(buf.substr(off, jlen));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("checkpoint: bad config JSON: ") + e.what());
  }
  off += jlen;

  CheckpointData out;
  out.config = model_config_from_json(meta.at("model"));
  out.init_seed = meta.value("init_seed", 0ull);
  const uint32_t count = get<uint32_t>(buf, off, "entry count");
  for (uint32_t i = 0; i < count; ++i) {
    const uint32_t nlen = get<uint32_t>(buf, off, "name length");
    if (off + nlen > buf.size()) throw FormatError("checkpoint: truncated name");
    std::string name = buf.substr(off, nlen);
    off += nlen;
    const uint32_t ndims = get<uint32_t>(buf, off, "rank");
    Shape shape;
    for (uint32_t d = 0; d < ndims; ++d)
      shape.push_back(static_cast<int>(get<uint32_t>(buf, off, "dim")));
    Tensor t(shape);
    const size_t bytes = static_cast<size_t>(t.numel()) * sizeof(float);
    if (off + bytes > buf.size())
      throw FormatError("checkpoint: truncated tensor '" + name + "' at offset " +
                        std::to_string(off));
    std::memcpy(t.ptr(), buf.data() + off, bytes);
    off += bytes;
    out.entries.push_back({std::move(name), std::move(t)});
  }
  return out;
}

void load_into_model(MivitModel<float>& model, const CheckpointData& ckpt,
                     const std::vector<std::string>& prefixes) {
  Registry<float> reg = model.params();
  for (auto& [name, tensor] : reg.entries) {
    if (!prefixes.empty()) {
      bool wanted = false;
      for (auto& p : prefixes) wanted = wanted || name.rfind(p, 0) == 0;
      if (!wanted) continue;
    }
    const Tensor* src = ckpt.find(name);
    if (!src) throw DataError("checkpoint: parameter '" + name + "' missing");
    if (src->shape != tensor->shape)
      throw DimensionError("checkpoint: parameter '" + name + "' has shape " +
                           shape_str(src->shape) + ", model expects " + shape_str(tensor->shape));
    *tensor->data = *src->data;
  }
}

MivitModel<float> model_from_checkpoint(const CheckpointData& ckpt) {
  MivitModel<float> model(ckpt.config, ckpt.init_seed);
  load_into_model(model, ckpt);
  return model;
}

}  // namespace mivit
