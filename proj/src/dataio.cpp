#include "mivit/dataio.hpp"

#include <unistd.h>

#include <algorithm>
#include <cstring>
#include <filesystem>
#include <fstream>

#include "mivit/error.hpp"
#include "mivit/fsutil.hpp"
#include "mivit/rng.hpp"

namespace mivit {

namespace {

constexpr char kMagic[4] = {'M', 'M', 'R', 'S'};
constexpr uint16_t kVersion = 1;

void put_bytes(std::string& out, const void* p, size_t n) {
  out.append(static_cast<const char*>(p), n);
}

template <typename T>
void put_le(std::string& out, T v) {
  // this project targets little-endian hosts; memcpy keeps it alias-safe
  put_bytes(out, &v, sizeof(T));
}

template <typename T>
T read_le(const std::string& buf, size_t& off, const char* what) {
  if (off + sizeof(T) > buf.size())
    throw FormatError(std::string("mmrs: truncated while reading ") + what + " at offset " +
                      std::to_string(off));
  T v;
  std::memcpy(&v, buf.data() + off, sizeof(T));
  off += sizeof(T);
  return v;
}

// edge-inclusive mirror, valid for -n <= x <= 2n-1
int mirror_index(int x, int n) {
  if (x < 0) return -x - 1;
  if (x >= n) return 2 * n - 1 - x;
  return x;
}

}  // namespace

int Dataset::num_classes() const {
  int32_t mx = -1;
  for (int32_t v : labels.data) mx = std::max(mx, v);
  return static_cast<int>(mx + 1);
}

void atomic_write_file(const std::string& path, const std::string& bytes) {
  const std::string tmp = path + ".tmp." + std::to_string(::getpid());
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot open '" + tmp + "' for writing");
    f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw IoError("write failed for '" + tmp + "'");
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("rename '" + tmp + "' -> '" + path + "' failed: " + ec.message());
}

void save_mmrs(const std::string& path, const Dataset& ds) {
  if (ds.modalities.empty()) throw DataError("mmrs: dataset has no modalities");
  std::string out;
  put_bytes(out, kMagic, 4);
  put_le<uint16_t>(out, kVersion);
  put_le<uint16_t>(out, static_cast<uint16_t>(ds.modalities.size()));
  for (const auto& m : ds.modalities) {
    put_le<uint32_t>(out, static_cast<uint32_t>(m.h));
    put_le<uint32_t>(out, static_cast<uint32_t>(m.w));
    put_le<uint32_t>(out, static_cast<uint32_t>(m.bands));
  }
  for (const auto& m : ds.modalities)
    put_bytes(out, m.data.data(), m.data.size() * sizeof(float));
  put_bytes(out, ds.labels.data.data(), ds.labels.data.size() * sizeof(int32_t));
  atomic_write_file(path, out);
}

Dataset load_mmrs(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open '" + path + "'");
  std::string buf((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());

  size_t off = 0;
  if (buf.size() < 4 || std::memcmp(buf.data(), kMagic, 4) != 0)
    throw FormatError("mmrs: bad magic at offset 0 in '" + path + "'");
  off = 4;
  const uint16_t version = read_le<uint16_t>(buf, off, "version");
  if (version != kVersion)
    throw FormatError("mmrs: unsupported version " + std::to_string(version) + " (expected " +
                      std::to_string(kVersion) + ")");
  const uint16_t nmod = read_le<uint16_t>(buf, off, "modality count");
  if (nmod == 0) throw FormatError("mmrs: zero modalities");

  Dataset ds;
  for (int m = 0; m < nmod; ++m) {
    ModalRaster r;
    r.h = static_cast<int>(read_le<uint32_t>(buf, off, "height"));
    r.w = static_cast<int>(read_le<uint32_t>(buf, off, "width"));
    r.bands = static_cast<int>(read_le<uint32_t>(buf, off, "bands"));
    if (r.h < 1 || r.w < 1 || r.bands < 1)
      throw FormatError("mmrs: modality " + std::to_string(m) + " has degenerate shape");
    ds.modalities.push_back(std::move(r));
  }
  for (auto& m : ds.modalities) {
    const size_t count = static_cast<size_t>(m.h) * m.w * m.bands;
    if (off + count * sizeof(float) > buf.size())
      throw FormatError("mmrs: truncated payload, need " + std::to_string(count * sizeof(float)) +
                        " bytes at offset " + std::to_string(off) + ", file has " +
                        std::to_string(buf.size() - off));
    m.data.resize(count);
    std::memcpy(m.data.data(), buf.data() + off, count * sizeof(float));
    off += count * sizeof(float);
  }
  ds.labels.h = ds.modalities[0].h;
  ds.labels.w = ds.modalities[0].w;
  const size_t lcount = static_cast<size_t>(ds.labels.h) * ds.labels.w;
  if (off + lcount * sizeof(int32_t) > buf.size())
    throw FormatError("mmrs: truncated label plane, need " +
                      std::to_string(lcount * sizeof(int32_t)) + " bytes at offset " +
                      std::to_string(off) + ", file has " + std::to_string(buf.size() - off));
  ds.labels.data.resize(lcount);
  std::memcpy(ds.labels.data.data(), buf.data() + off, lcount * sizeof(int32_t));
  off += lcount * sizeof(int32_t);
  if (off != buf.size())
    throw FormatError("mmrs: " + std::to_string(buf.size() - off) +
                      " trailing bytes after offset " + std::to_string(off));
  return ds;
}

std::vector<Tensor> extract_cubes(const ModalRaster& raster, std::pair<int, int> center,
                                  const std::vector<int>& sizes) {
  const auto [cr, cc] = center;
  if (cr < 0 || cr >= raster.h || cc < 0 || cc >= raster.w)
    throw DataError("extract_cubes: center (" + std::to_string(cr) + "," + std::to_string(cc) +
                    ") outside raster " + std::to_string(raster.h) + "x" +
                    std::to_string(raster.w));
  std::vector<Tensor> cubes;
  cubes.reserve(sizes.size());
  for (int s : sizes) {
    if (s < 1 || s > 2 * std::min(raster.h, raster.w))
      throw DataError("extract_cubes: unsupported cube size " + std::to_string(s) +
                      " for raster " + std::to_string(raster.h) + "x" + std::to_string(raster.w));
    Tensor cube({raster.bands, s, s});
    const int r0 = cr - s / 2;
    const int c0 = cc - s / 2;
    float* p = cube.ptr();
    for (int b = 0; b < raster.bands; ++b)
      for (int i = 0; i < s; ++i) {
        const int rr = mirror_index(r0 + i, raster.h);
        for (int j = 0; j < s; ++j) {
          const int jj = mirror_index(c0 + j, raster.w);
          p[(static_cast<int64_t>(b) * s + i) * s + j] = raster.at(rr, jj, b);
        }
      }
    cubes.push_back(std::move(cube));
  }
  return cubes;
}

Tensor assemble_cubes(const ModalRaster& raster, const SampleSet& samples,
                      const std::vector<int>& index, int size) {
  const int bsz = static_cast<int>(index.size());
  Tensor out({bsz, raster.bands, size, size});
  const int64_t stride = static_cast<int64_t>(raster.bands) * size * size;
  for (int b = 0; b < bsz; ++b) {
    auto cubes = extract_cubes(raster, samples.centers[static_cast<size_t>(index[static_cast<size_t>(b)])], {size});
    std::copy(cubes[0].ptr(), cubes[0].ptr() + stride, out.ptr() + b * stride);
  }
  return out;
}

Dataset synth_generate(const SynthConfig& cfg) {
  if (cfg.classes < 2) throw ConfigError("synth: need at least 2 classes");
  if (cfg.h < 2 || cfg.w < 2 || cfg.bands1 < 1 || cfg.bands2 < 1)
    throw ConfigError("synth: degenerate raster shape");
  Rng rng(cfg.seed * 0x51ed2701u + 17u);

  // Voronoi sites, a few blobs per class.
  struct Site {
    double r, c;
    int cls;
  };
  std::vector<Site> sites;
  for (int cls = 0; cls < cfg.classes; ++cls)
    for (int k = 0; k < cfg.blobs_per_class; ++k)
      sites.push_back({rng.uniform(0, cfg.h), rng.uniform(0, cfg.w), cls});

  // Signature groups: modality 1 distinguishes only class%g1, modality 2
  // only class/g1, so the union is needed to separate everything.
  const int g1 = (cfg.classes + 1) / 2;
  const int g2 = (cfg.classes + g1 - 1) / g1;
  std::vector<std::vector<float>> sig1(static_cast<size_t>(g1), std::vector<float>(static_cast<size_t>(cfg.bands1)));
  std::vector<std::vector<float>> sig2(static_cast<size_t>(g2), std::vector<float>(static_cast<size_t>(cfg.bands2)));
  for (auto& s : sig1)
    for (auto& v : s) v = static_cast<float>(rng.uniform());
  for (auto& s : sig2)
    for (auto& v : s) v = static_cast<float>(rng.uniform());

  Dataset ds;
  ds.labels.h = cfg.h;
  ds.labels.w = cfg.w;
  ds.labels.data.resize(static_cast<size_t>(cfg.h) * cfg.w);
  for (int r = 0; r < cfg.h; ++r)
    for (int c = 0; c < cfg.w; ++c) {
      double best = 1e300;
      int cls = 0;
      for (const auto& s : sites) {
        const double dr = s.r - r, dc = s.c - c;
        const double d2 = dr * dr + dc * dc;
        if (d2 < best) {
          best = d2;
          cls = s.cls;
        }
      }
      ds.labels.data[static_cast<size_t>(r) * cfg.w + c] = cls;
    }

  // Noise values are always drawn (then scaled) so that noiseless copies of
  // the same seed share layout and signatures exactly.
  auto fill = [&](int bands, const std::vector<std::vector<float>>& sig, int group_of_div,
                  int group_of_mod) {
    ModalRaster m;
    m.h = cfg.h;
    m.w = cfg.w;
    m.bands = bands;
    m.data.resize(static_cast<size_t>(cfg.h) * cfg.w * bands);
    for (int r = 0; r < cfg.h; ++r)
      for (int c = 0; c < cfg.w; ++c) {
        const int cls = ds.labels.at(r, c);
        const int g = group_of_div ? cls / group_of_div : cls % group_of_mod;
        for (int b = 0; b < bands; ++b)
          m.at(r, c, b) = sig[static_cast<size_t>(g)][static_cast<size_t>(b)] +
                          cfg.noise * static_cast<float>(rng.normal());
      }
    return m;
  };
  ds.modalities.push_back(fill(cfg.bands1, sig1, 0, g1));
  ds.modalities.push_back(fill(cfg.bands2, sig2, g1, 0));
  return ds;
}

std::pair<SampleSet, SampleSet> split_samples(const LabelRaster& labels, int per_class_train,
                                              uint64_t seed) {
  if (per_class_train < 0) throw ConfigError("split: negative per-class count");
  int32_t mx = -1;
  for (int32_t v : labels.data) mx = std::max(mx, v);
  const int classes = static_cast<int>(mx + 1);
  if (classes < 1) throw DataError("split: no labeled pixels");

  std::vector<std::vector<std::pair<int, int>>> per_class(static_cast<size_t>(classes));
  for (int r = 0; r < labels.h; ++r)
    for (int c = 0; c < labels.w; ++c) {
      const int32_t v = labels.at(r, c);
      if (v >= 0) per_class[static_cast<size_t>(v)].push_back({r, c});
    }

  Rng rng(seed ^ 0xa02fbd1ull);
  SampleSet train, test;
  train.split = "train";
  test.split = "test";
  for (int cls = 0; cls < classes; ++cls) {
    auto& pixels = per_class[static_cast<size_t>(cls)];
    if (static_cast<int>(pixels.size()) < per_class_train)
      throw DataError("split: class " + std::to_string(cls) + " has only " +
                      std::to_string(pixels.size()) + " labeled pixels, need " +
                      std::to_string(per_class_train));
    shuffle(pixels, rng);
    for (size_t i = 0; i < pixels.size(); ++i) {
      auto& set = (static_cast<int>(i) < per_class_train) ? train : test;
      set.centers.push_back(pixels[i]);
      set.labels.push_back(cls);
    }
  }
  return {train, test};
}

void normalize_minmax(ModalRaster& raster) {
  for (int b = 0; b < raster.bands; ++b) {
    float lo = raster.at(0, 0, b), hi = lo;
    for (int r = 0; r < raster.h; ++r)
      for (int c = 0; c < raster.w; ++c) {
        const float v = raster.at(r, c, b);
        lo = std::min(lo, v);
        hi = std::max(hi, v);
      }
    const float range = hi - lo;
    for (int r = 0; r < raster.h; ++r)
      for (int c = 0; c < raster.w; ++c) {
        float& v = raster.at(r, c, b);
        v = range > 0 ? (v - lo) / range : 0.0f;
      }
  }
}

uint64_t fnv1a64(const void* data, size_t len) {
  const auto* p = static_cast<const unsigned char*>(data);
  uint64_t h = 0xcbf29ce484222325ull;
  for (size_t i = 0; i < len; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ull;
  }
  return h;
}

uint64_t hash_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open '" + path + "' for hashing");
  std::string buf((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return fnv1a64(buf.data(), buf.size());
}

}  // namespace mivit
