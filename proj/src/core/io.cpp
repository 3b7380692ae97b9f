#include "danlab/io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <limits>
#include <string>

#include "danlab/error.hpp"

namespace danlab::io {

namespace {

class Writer {
 public:
  void magic(const char (&m)[8]) { bytes_.insert(bytes_.end(), m, m + 8); }
  void u64(std::uint64_t v) {
    for (int k = 0; k < 8; ++k) bytes_.push_back(static_cast<std::uint8_t>(v >> (8 * k)));
  }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void f64s(std::span<const double> vs) {
    bytes_.reserve(bytes_.size() + vs.size() * 8);
    for (double v : vs) f64(v);
  }
  std::vector<std::uint8_t> take() { return std::move(bytes_); }

 private:
  std::vector<std::uint8_t> bytes_;
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  void magic(const char (&m)[8], const char* what) {
    need(8, what);
    if (std::memcmp(bytes_.data(), m, 8) != 0) throw FormatError(std::string("bad magic for ") + what, 0);
    pos_ = 8;
  }
  std::uint64_t u64(const char* what) {
    need(8, what);
    std::uint64_t v = 0;
    for (int k = 0; k < 8; ++k) v |= static_cast<std::uint64_t>(bytes_[pos_ + k]) << (8 * k);
    pos_ += 8;
    return v;
  }
  double f64(const char* what) { return std::bit_cast<double>(u64(what)); }
  void f64s(std::span<double> out, const char* what) {
    if (out.size() > (bytes_.size() - pos_) / 8) {
      throw FormatError(std::string("truncated file while reading ") + what, bytes_.size());
    }
    for (auto& v : out) v = f64(what);
  }
  void finish() const {
    if (pos_ != bytes_.size()) throw FormatError("unexpected trailing bytes", pos_);
  }
  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  void need(std::size_t count, const char* what) const {
    if (bytes_.size() - pos_ < count) {
      throw FormatError(std::string("truncated file while reading ") + what, bytes_.size());
    }
  }

  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

std::int64_t checked_dim(std::uint64_t v, const char* what) {
  if (v == 0 || v > (1ULL << 40)) throw FormatError(std::string("implausible ") + what + " " + std::to_string(v), 0);
  return static_cast<std::int64_t>(v);
}

}  // namespace

std::vector<std::uint8_t> encode_batch(const ods::TrajectoryBatch& batch) {
  Writer w;
  w.magic(kTrajectoryMagic);
  w.u64(static_cast<std::uint64_t>(batch.count()));
  w.u64(static_cast<std::uint64_t>(batch.steps()));
  w.u64(static_cast<std::uint64_t>(batch.n()));
  w.u64(static_cast<std::uint64_t>(batch.d()));
  w.f64s(batch.states());
  w.f64s(batch.observations());
  return w.take();
}

ods::TrajectoryBatch decode_batch(std::span<const std::uint8_t> bytes) {
  Reader r(bytes);
  r.magic(kTrajectoryMagic, "trajectory file");
  const auto count = checked_dim(r.u64("batch size"), "batch size");
  const auto steps = checked_dim(r.u64("time steps"), "time step count");
  const auto n = checked_dim(r.u64("state dimension"), "state dimension");
  const auto d = checked_dim(r.u64("observation dimension"), "observation dimension");
  const auto expected = static_cast<unsigned __int128>(count) * static_cast<unsigned __int128>(steps) *
                        static_cast<unsigned __int128>(n + d) * 8;
  if (expected > r.remaining()) {
    throw FormatError("truncated trajectory file: payload needs more bytes than present", bytes.size());
  }
  ods::TrajectoryBatch batch(count, steps, n, d);
  r.f64s(batch.states(), "states");
  r.f64s(batch.observations(), "observations");
  r.finish();
  return batch;
}

std::vector<std::uint8_t> encode_params(const dan::DanParams& params) {
  const auto& c = params.config();
  Writer w;
  w.magic(kParamsMagic);
  w.u64(static_cast<std::uint64_t>(c.m));
  w.u64(static_cast<std::uint64_t>(c.n));
  w.u64(static_cast<std::uint64_t>(c.d));
  w.u64(static_cast<std::uint64_t>(c.depth));
  w.f64(c.slope);
  w.f64s(std::span<const double>(params.theta().data(), static_cast<std::size_t>(params.size())));
  return w.take();
}

dan::DanParams decode_params(std::span<const std::uint8_t> bytes) {
  Reader r(bytes);
  r.magic(kParamsMagic, "parameter file");
  dan::DanConfig c;
  c.m = checked_dim(r.u64("m"), "memory dimension");
  c.n = checked_dim(r.u64("n"), "state dimension");
  c.d = checked_dim(r.u64("d"), "observation dimension");
  c.depth = checked_dim(r.u64("depth"), "depth");
  c.slope = r.f64("slope");
  if (c.m > (1 << 20) || c.n > (1 << 16) || c.d > (1 << 20) || c.depth > (1 << 16)) {
    throw FormatError("implausible DAN configuration in parameter header", 8);
  }
  dan::DanParams params(c);
  if (static_cast<std::uint64_t>(params.size()) > r.remaining() / 8) {
    throw FormatError("truncated parameter file", bytes.size());
  }
  r.f64s(std::span<double>(params.theta().data(), static_cast<std::size_t>(params.size())), "theta");
  r.finish();
  return params;
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return bytes;
}

void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed for " + path.string());
}

void write_batch(const ods::TrajectoryBatch& batch, const std::filesystem::path& path) {
  write_file(path, encode_batch(batch));
}
ods::TrajectoryBatch read_batch(const std::filesystem::path& path) { return decode_batch(read_file(path)); }

void write_params(const dan::DanParams& params, const std::filesystem::path& path) {
  write_file(path, encode_params(params));
}
dan::DanParams read_params(const std::filesystem::path& path) { return decode_params(read_file(path)); }

}  // namespace danlab::io
