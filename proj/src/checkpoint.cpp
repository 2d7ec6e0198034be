#include "amd/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <vector>

namespace amd {

namespace {

static_assert(std::endian::native == std::endian::little,
              "checkpoint writer assumes a little-endian host");

constexpr std::uint64_t kFnvOffset = 0xcbf29ce484222325ull;
constexpr std::uint64_t kFnvPrime = 0x100000001b3ull;

struct Writer {
  std::vector<char> bytes;

  void raw(const void* p, std::size_t n) {
    const char* c = static_cast<const char*>(p);
    bytes.insert(bytes.end(), c, c + n);
  }
  void u32(std::uint32_t v) { raw(&v, sizeof v); }
  void u64(std::uint64_t v) { raw(&v, sizeof v); }
  void f32(float v) { raw(&v, sizeof v); }
  void f64(double v) { raw(&v, sizeof v); }
};

std::uint64_t fnv1a(const char* data, std::size_t n) {
  std::uint64_t h = kFnvOffset;
  for (std::size_t i = 0; i < n; ++i) {
    h ^= static_cast<unsigned char>(data[i]);
    h *= kFnvPrime;
  }
  return h;
}

struct Reader {
  const char* p;
  const char* end;

  void need(std::size_t n) const {
    if (static_cast<std::size_t>(end - p) < n) throw std::runtime_error("checkpoint truncated");
  }
  void raw(void* out, std::size_t n) {
    need(n);
    std::memcpy(out, p, n);
    p += n;
  }
  std::uint32_t u32() { std::uint32_t v; raw(&v, sizeof v); return v; }
  std::uint64_t u64() { std::uint64_t v; raw(&v, sizeof v); return v; }
  float f32() { float v; raw(&v, sizeof v); return v; }
  double f64() { double v; raw(&v, sizeof v); return v; }
};

}  // namespace

void save_checkpoint(const std::string& path, const ModelParams& params) {
  Writer w;
  w.raw("AMD1", 4);
  w.u32(kCheckpointVersion);
  const ModelConfig& c = params.cfg;
  w.u32(static_cast<std::uint32_t>(c.dim));
  w.u32(static_cast<std::uint32_t>(c.layers));
  w.u32(static_cast<std::uint32_t>(c.heads));
  w.u32(static_cast<std::uint32_t>(c.head_dim()));
  w.u32(static_cast<std::uint32_t>(c.head_dim()));
  w.u32(static_cast<std::uint32_t>(c.ff_dim()));
  w.f64(c.clip);
  w.u32(kFeatureDemandOverCapacity | kFeatureRemainingOverCapacity);

  std::uint32_t count = 0;
  visit_tensors(params, [&](const std::string&, const double*, Eigen::Index, Eigen::Index, int) {
    ++count;
  });
  w.u32(count);

  visit_tensors(params, [&](const std::string& tensor_path, const double* data, Eigen::Index rows,
                            Eigen::Index cols, int rank) {
    w.u32(static_cast<std::uint32_t>(tensor_path.size()));
    w.raw(tensor_path.data(), tensor_path.size());
    w.u32(static_cast<std::uint32_t>(rank));
    w.u64(static_cast<std::uint64_t>(rows));
    if (rank == 2) w.u64(static_cast<std::uint64_t>(cols));
    // row-major on disk; in-memory storage is column-major
    for (Eigen::Index r = 0; r < rows; ++r)
      for (Eigen::Index col = 0; col < cols; ++col)
        w.f32(static_cast<float>(data[col * rows + r]));
  });

  w.u64(fnv1a(w.bytes.data(), w.bytes.size()));

  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open checkpoint for writing: " + path);
  out.write(w.bytes.data(), static_cast<std::streamsize>(w.bytes.size()));
  if (!out) throw std::runtime_error("checkpoint write failed: " + path);
}

ModelParams load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint: " + path);
  std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (bytes.size() < 8 + 4) throw std::runtime_error("checkpoint too small: " + path);

  const std::size_t body = bytes.size() - 8;
  std::uint64_t stored = 0;
  std::memcpy(&stored, bytes.data() + body, 8);
  if (stored != fnv1a(bytes.data(), body))
    throw std::runtime_error("checkpoint checksum mismatch: " + path);

  Reader r{bytes.data(), bytes.data() + body};
  char magic[4];
  r.raw(magic, 4);
  if (std::memcmp(magic, "AMD1", 4) != 0) throw std::runtime_error("bad checkpoint magic: " + path);
  if (r.u32() != kCheckpointVersion) throw std::runtime_error("unsupported checkpoint version");

  ModelConfig cfg;
  cfg.dim = static_cast<int>(r.u32());
  cfg.layers = static_cast<int>(r.u32());
  cfg.heads = static_cast<int>(r.u32());
  const auto dk = r.u32();
  const auto dv = r.u32();
  const auto dff = r.u32();
  cfg.clip = r.f64();
  cfg.validate();
  if (dk != static_cast<std::uint32_t>(cfg.head_dim()) || dv != dk ||
      dff != static_cast<std::uint32_t>(cfg.ff_dim()))
    throw std::runtime_error("checkpoint header dimensions inconsistent");
  const std::uint32_t flags = r.u32();
  if (flags != (kFeatureDemandOverCapacity | kFeatureRemainingOverCapacity))
    throw std::runtime_error("checkpoint uses unknown feature conventions");

  ModelParams params = ModelParams::zeros(cfg);
  const std::uint32_t count = r.u32();
  std::uint32_t seen = 0;
  visit_tensors(params, [&](const TensorView& v) {
    if (seen++ >= count) throw std::runtime_error("checkpoint is missing tensors");
    const std::uint32_t path_len = r.u32();
    std::string tensor_path(path_len, '\0');
    r.raw(tensor_path.data(), path_len);
    if (tensor_path != v.path)
      throw std::runtime_error("checkpoint tensor order mismatch: expected " + v.path + ", got " +
                               tensor_path);
    const std::uint32_t rank = r.u32();
    if (rank != static_cast<std::uint32_t>(v.rank))
      throw std::runtime_error("checkpoint rank mismatch at " + v.path);
    const std::uint64_t rows = r.u64();
    const std::uint64_t cols = (rank == 2) ? r.u64() : 1;
    if (rows != static_cast<std::uint64_t>(v.rows) || cols != static_cast<std::uint64_t>(v.cols))
      throw std::runtime_error("checkpoint shape mismatch at " + v.path);
    for (Eigen::Index row = 0; row < v.rows; ++row)
      for (Eigen::Index col = 0; col < v.cols; ++col)
        v.data[col * v.rows + row] = static_cast<double>(r.f32());
  });
  if (seen != count) throw std::runtime_error("checkpoint tensor count mismatch");
  if (r.p != r.end) throw std::runtime_error("trailing bytes in checkpoint");
  return params;
}

}  // namespace amd
