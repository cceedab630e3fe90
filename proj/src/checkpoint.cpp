#include <bit>
#include <cstring>
#include <fstream>

#include "qc4qa/error.hpp"
#include "qc4qa/model.hpp"

// Binary layout (little-endian):
//   "QC4QACKP"  u32 version  u32 vocab_size  u32 dim  u32 hidden
//   7 x { u32 name_len, name, u32 rows, u32 cols, f64[rows*cols] row-major }
//   u8 has_optimizer  [i64 step, 7 x f64[] first moments, 7 x f64[] second moments]
//   u32 rng_len, rng state text
//   "END."

namespace qc4qa {
namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes little-endian");

constexpr char kMagic[8] = {'Q', 'C', '4', 'Q', 'A', 'C', 'K', 'P'};
constexpr char kTrailer[4] = {'E', 'N', 'D', '.'};

class Writer {
 public:
  explicit Writer(std::ofstream& out) : out_(out) {}
  template <typename T>
  void pod(const T& x) { out_.write(reinterpret_cast<const char*>(&x), sizeof(T)); }
  void bytes(const void* data, std::size_t n) { out_.write(static_cast<const char*>(data), static_cast<std::streamsize>(n)); }

 private:
  std::ofstream& out_;
};

class Reader {
 public:
  Reader(std::ifstream& in, std::string path) : in_(in), path_(std::move(path)) {}
  template <typename T>
  T pod() {
    T x{};
    bytes(&x, sizeof(T));
    return x;
  }
  void bytes(void* data, std::size_t n) {
    in_.read(static_cast<char*>(data), static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(in_.gcount()) != n) throw IoError("truncated checkpoint '" + path_ + "'");
  }
  std::string string(std::uint32_t max_len) {
    const auto n = pod<std::uint32_t>();
    if (n > max_len) throw IoError("corrupt checkpoint '" + path_ + "': string length out of range");
    std::string s(n, '\0');
    bytes(s.data(), n);
    return s;
  }

 private:
  std::ifstream& in_;
  std::string path_;
};

void write_values(Writer& w, const SpanParams& p) {
  for (const auto& t : p.tensors()) w.bytes(t.values.data(), t.values.size_bytes());
}

void read_values(Reader& r, SpanParams& p) {
  for (auto& t : p.tensors()) r.bytes(t.values.data(), t.values.size_bytes());
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const SpanModel& model,
                     const OptimizerState* optimizer, const std::string& rng_state) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  Writer w(out);
  const auto& s = model.shape();
  w.bytes(kMagic, sizeof kMagic);
  w.pod(SpanModel::kCheckpointVersion);
  w.pod(static_cast<std::uint32_t>(s.vocab_size));
  w.pod(static_cast<std::uint32_t>(s.dim));
  w.pod(static_cast<std::uint32_t>(s.hidden));
  for (const auto& t : model.params().tensors()) {
    w.pod(static_cast<std::uint32_t>(t.name.size()));
    w.bytes(t.name.data(), t.name.size());
    w.pod(static_cast<std::uint32_t>(t.rows));
    w.pod(static_cast<std::uint32_t>(t.cols));
    w.bytes(t.values.data(), t.values.size_bytes());
  }
  w.pod(static_cast<std::uint8_t>(optimizer != nullptr));
  if (optimizer) {
    w.pod(static_cast<std::int64_t>(optimizer->step));
    write_values(w, optimizer->m);
    write_values(w, optimizer->v);
  }
  w.pod(static_cast<std::uint32_t>(rng_state.size()));
  w.bytes(rng_state.data(), rng_state.size());
  w.bytes(kTrailer, sizeof kTrailer);
  out.flush();
  if (!out) throw IoError("write failed for '" + path.string() + "'");
}

Checkpoint load_checkpoint(const std::filesystem::path& path, std::optional<ModelShape> expected) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
  Reader r(in, path.string());

  char magic[8];
  r.bytes(magic, sizeof magic);
  if (std::memcmp(magic, kMagic, sizeof magic) != 0) {
    throw IoError("'" + path.string() + "' is not a span-model checkpoint (bad header)");
  }
  const auto version = r.pod<std::uint32_t>();
  if (version != SpanModel::kCheckpointVersion) {
    throw IoError("checkpoint '" + path.string() + "' has version " + std::to_string(version) +
                  ", expected " + std::to_string(SpanModel::kCheckpointVersion));
  }
  ModelShape shape;
  shape.vocab_size = static_cast<int>(r.pod<std::uint32_t>());
  shape.dim = static_cast<int>(r.pod<std::uint32_t>());
  shape.hidden = static_cast<int>(r.pod<std::uint32_t>());
  if (expected && !(*expected == shape)) {
    throw ShapeError("checkpoint shape (vocab " + std::to_string(shape.vocab_size) + ", dim " +
                     std::to_string(shape.dim) + ", hidden " + std::to_string(shape.hidden) +
                     ") does not match the expected model");
  }
  if (shape.vocab_size <= 0 || shape.dim <= 0 || shape.hidden <= 0 || shape.vocab_size > (1 << 24) ||
      shape.dim > 4096 || shape.hidden > 4096) {
    throw IoError("corrupt checkpoint '" + path.string() + "': implausible shape");
  }

  Checkpoint ck{SpanModel(shape), std::nullopt, {}};
  for (auto& t : ck.model.params().tensors()) {
    const std::string name = r.string(64);
    const auto rows = static_cast<int>(r.pod<std::uint32_t>());
    const auto cols = static_cast<int>(r.pod<std::uint32_t>());
    if (name != t.name || rows != t.rows || cols != t.cols) {
      throw ShapeError("checkpoint tensor '" + name + "' does not match '" + std::string(t.name) + "'");
    }
    r.bytes(t.values.data(), t.values.size_bytes());
  }
  if (r.pod<std::uint8_t>() != 0) {
    OptimizerState st = OptimizerState::for_shape(shape);
    st.step = r.pod<std::int64_t>();
    read_values(r, st.m);
    read_values(r, st.v);
    ck.optimizer = std::move(st);
  }
  ck.rng_state = r.string(1u << 20);
  char trailer[4];
  r.bytes(trailer, sizeof trailer);
  if (std::memcmp(trailer, kTrailer, sizeof trailer) != 0) {
    throw IoError("corrupt checkpoint '" + path.string() + "': bad trailer");
  }
  return ck;
}

}  // namespace qc4qa
