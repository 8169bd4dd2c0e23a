#pragma once

// Binary file formats. All integers and IEEE-754 binary32 payloads are little-endian.
//
//   embeddings  "SBKAEMB1" u32 dim, u64 count, f32[count*dim], u32[count] labels, u8[count] modality
//   checkpoint  "SBKAMDL1" u32 d_in, hidden, d_emb, k_train, k_src, then W1 b1 W2 b2 W_task b_task
//               W_src b_src as f32 (matrices row-major)
//   codebook    "SBKACBK1" u32 M, u32 K, u32 subdim, u64 gallery_count, then per subspace
//               f32 weights[K], means[K*subdim], variances[K*subdim]; then u32 assignments
//               [gallery_count][M]

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "sbka/codebook.hpp"
#include "sbka/dataset.hpp"
#include "sbka/encoder.hpp"

namespace sbka {

inline constexpr std::string_view kEmbeddingMagic = "SBKAEMB1";
inline constexpr std::string_view kCheckpointMagic = "SBKAMDL1";
inline constexpr std::string_view kCodebookMagic = "SBKACBK1";

class ByteWriter {
 public:
  void raw(std::string_view s) { buf_.append(s); }
  void u8(std::uint8_t v) { buf_.push_back(static_cast<char>(v)); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
  }
  void f32(double v) { u32(std::bit_cast<std::uint32_t>(static_cast<float>(v))); }
  void f32s(std::span<const double> v) {
    for (double x : v) f32(x);
  }

  const std::string& bytes() const { return buf_; }

 private:
  std::string buf_;
};

class ByteReader {
 public:
  ByteReader(std::string_view bytes, std::string name) : bytes_(bytes), name_(std::move(name)) {}

  void magic(std::string_view expected) {
    const std::string_view got = bytes_.substr(0, std::min(bytes_.size(), expected.size()));
    if (got != expected) {
      throw DataError(name_ + ": bad magic at offset 0, expected \"" + std::string(expected) + "\"");
    }
    off_ = expected.size();
  }
  std::uint8_t u8(const char* field) { return static_cast<std::uint8_t>(take(1, field)[0]); }
  std::uint32_t u32(const char* field) { return static_cast<std::uint32_t>(le(take(4, field), 4)); }
  std::uint64_t u64(const char* field) { return le(take(8, field), 8); }
  double f32(const char* field) { return static_cast<double>(std::bit_cast<float>(u32(field))); }
  void f32s(std::span<double> out, const char* field) {
    need(out.size() * 4, field);
    for (double& x : out) x = f32(field);
  }

  /// Fails unless `n` more bytes are available.
  void need(std::uint64_t n, const char* field) const {
    if (bytes_.size() - off_ < n) {
      throw DataError(name_ + ": truncated at offset " + std::to_string(off_) + " reading " + field + " (needs " +
                      std::to_string(n) + " bytes, " + std::to_string(bytes_.size() - off_) + " left)");
    }
  }
  void finish() const {
    if (off_ != bytes_.size()) {
      throw DataError(name_ + ": " + std::to_string(bytes_.size() - off_) + " trailing bytes at offset " +
                      std::to_string(off_));
    }
  }
  std::size_t offset() const { return off_; }

 private:
  std::string_view take(std::size_t n, const char* field) {
    need(n, field);
    const auto s = bytes_.substr(off_, n);
    off_ += n;
    return s;
  }
  static std::uint64_t le(std::string_view s, int n) {
    std::uint64_t v = 0;
    for (int i = 0; i < n; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(s[i])) << (8 * i);
    return v;
  }

  std::string_view bytes_;
  std::string name_;
  std::size_t off_ = 0;
};

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_file(const std::filesystem::path& path, std::string_view bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("write failed for " + path.string());
}

// ---------------------------------------------------------------------------------------------
// Embedding files

struct EmbeddingFile {
  std::uint32_t dim = 0;
  std::vector<LabeledSample> samples;

  friend bool operator==(const EmbeddingFile&, const EmbeddingFile&) = default;
};

inline std::string encode_embeddings(const EmbeddingFile& f) {
  ByteWriter w;
  w.raw(kEmbeddingMagic);
  w.u32(f.dim);
  w.u64(f.samples.size());
  for (const auto& s : f.samples) {
    detail::require_same_dim(s.x.size(), f.dim, "embedding file row");
    w.f32s(s.x);
  }
  for (const auto& s : f.samples) w.u32(s.label);
  for (const auto& s : f.samples) w.u8(static_cast<std::uint8_t>(s.modality));
  return w.bytes();
}

/// Labels must be below `class_count` when it is given.
inline EmbeddingFile decode_embeddings(std::string_view bytes, const std::string& name = "embedding file",
                                       std::optional<std::uint32_t> class_count = std::nullopt) {
  ByteReader r(bytes, name);
  r.magic(kEmbeddingMagic);
  EmbeddingFile f;
  f.dim = r.u32("dim");
  const std::uint64_t count = r.u64("count");
  // Exact payload length: 4*dim + 4 + 1 bytes per row.
  const std::uint64_t per_row = 4ULL * f.dim + 5ULL;
  if (count > bytes.size() / per_row) r.need(bytes.size() + 1, "payload");
  r.need(count * per_row, "payload");
  f.samples.resize(count);
  for (auto& s : f.samples) {
    s.x.resize(f.dim);
    r.f32s(s.x, "values");
  }
  for (auto& s : f.samples) {
    s.label = r.u32("labels");
    if (class_count && s.label >= *class_count) {
      throw DataError(name + ": label " + std::to_string(s.label) + " >= class count " + std::to_string(*class_count));
    }
  }
  for (auto& s : f.samples) {
    const std::uint8_t m = r.u8("modality");
    if (m > 1) throw DataError(name + ": modality tag " + std::to_string(m) + " at offset " + std::to_string(r.offset() - 1));
    s.modality = static_cast<Modality>(m);
  }
  r.finish();
  return f;
}

inline EmbeddingFile read_embeddings(const std::filesystem::path& p, std::optional<std::uint32_t> class_count = std::nullopt) {
  return decode_embeddings(read_file(p), p.string(), class_count);
}

inline void write_embeddings(const std::filesystem::path& p, const EmbeddingFile& f) {
  write_file(p, encode_embeddings(f));
}

/// Samples rounded through binary32, matching what a file round trip yields.
inline std::vector<LabeledSample> round_to_f32(std::vector<LabeledSample> samples) {
  for (auto& s : samples) {
    for (double& x : s.x) x = static_cast<double>(static_cast<float>(x));
  }
  return samples;
}

// ---------------------------------------------------------------------------------------------
// Model checkpoints

inline std::string encode_checkpoint(const ModelParams& p) {
  ByteWriter w;
  w.raw(kCheckpointMagic);
  const ModelDims d = p.dims();
  for (std::size_t v : {d.d_in, d.hidden, d.d_emb, d.k_train, d.k_src}) w.u32(static_cast<std::uint32_t>(v));
  for (auto t : p.tensors()) w.f32s(t);
  return w.bytes();
}

inline ModelParams decode_checkpoint(std::string_view bytes, const std::string& name = "checkpoint") {
  ByteReader r(bytes, name);
  r.magic(kCheckpointMagic);
  ModelDims d;
  d.d_in = r.u32("d_in");
  d.hidden = r.u32("hidden");
  d.d_emb = r.u32("d_emb");
  d.k_train = r.u32("k_train");
  d.k_src = r.u32("k_src");
  validate_dims(d);
  const std::uint64_t n = static_cast<std::uint64_t>(d.d_in) * d.hidden + d.hidden + static_cast<std::uint64_t>(d.hidden) * d.d_emb +
                          d.d_emb + static_cast<std::uint64_t>(d.d_emb) * d.k_train + d.k_train +
                          static_cast<std::uint64_t>(d.d_emb) * d.k_src + d.k_src;
  r.need(4 * n, "parameters");
  ModelParams p(d);
  for (std::size_t t = 0; t < 8; ++t) r.f32s(p.tensors()[t], ModelParams::kTensorNames[t]);
  r.finish();
  return p;
}

inline ModelParams read_checkpoint(const std::filesystem::path& p) { return decode_checkpoint(read_file(p), p.string()); }
inline void write_checkpoint(const std::filesystem::path& p, const ModelParams& m) { write_file(p, encode_checkpoint(m)); }

// ---------------------------------------------------------------------------------------------
// Codebooks

inline std::string encode_codebook(const SubspaceCodebook& cb) {
  ByteWriter w;
  w.raw(kCodebookMagic);
  w.u32(static_cast<std::uint32_t>(cb.subspaces));
  w.u32(static_cast<std::uint32_t>(cb.clusters));
  w.u32(static_cast<std::uint32_t>(cb.subdim));
  w.u64(cb.gallery_size());
  for (const auto& g : cb.models) {
    w.f32s(g.weights);
    for (const auto& mu : g.means) w.f32s(mu);
    for (const auto& v : g.variances) w.f32s(v);
  }
  for (const auto& a : cb.assignments) {
    for (std::uint32_t c : a) w.u32(c);
  }
  return w.bytes();
}

inline SubspaceCodebook decode_codebook(std::string_view bytes, const std::string& name = "codebook") {
  ByteReader r(bytes, name);
  r.magic(kCodebookMagic);
  SubspaceCodebook cb;
  cb.subspaces = r.u32("M");
  cb.clusters = r.u32("K");
  cb.subdim = r.u32("subdim");
  const std::uint64_t count = r.u64("gallery_count");
  if (cb.subspaces == 0 || cb.clusters == 0 || cb.subdim == 0) throw DataError(name + ": zero M, K or subdim in header");
  const std::uint64_t model_floats = static_cast<std::uint64_t>(cb.subspaces) * cb.clusters * (1 + 2 * cb.subdim);
  r.need(4 * model_floats + 4 * count * cb.subspaces, "payload");
  for (std::size_t m = 0; m < cb.subspaces; ++m) {
    GmmModel g;
    g.weights.resize(cb.clusters);
    r.f32s(g.weights, "weights");
    g.means.assign(cb.clusters, Vector(cb.subdim));
    g.variances.assign(cb.clusters, Vector(cb.subdim));
    for (auto& mu : g.means) r.f32s(mu, "means");
    for (auto& v : g.variances) r.f32s(v, "variances");
    cb.models.push_back(std::move(g));
  }
  cb.assignments.assign(count, std::vector<std::uint32_t>(cb.subspaces));
  for (auto& a : cb.assignments) {
    for (auto& c : a) {
      c = r.u32("assignments");
      if (c >= cb.clusters) throw DataError(name + ": assignment " + std::to_string(c) + " >= K at offset " + std::to_string(r.offset() - 4));
    }
  }
  r.finish();
  return cb;
}

inline SubspaceCodebook read_codebook(const std::filesystem::path& p) { return decode_codebook(read_file(p), p.string()); }
inline void write_codebook(const std::filesystem::path& p, const SubspaceCodebook& cb) { write_file(p, encode_codebook(cb)); }

}  // namespace sbka
