// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "molgen/gen/sampling.hpp"
#include "molgen/model/cvae.hpp"

namespace molgen {

inline constexpr char kCheckpointMagic[4] = {'G', 'C', 'T', 'C'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

// Everything needed to resume training or to generate: parameters, the
// vocabulary, condition / length statistics, the condition histogram, a
// config echo, and the epoch counter.
struct TrainedModel {
  CvaeModel model;
  ConditionStats cond_stats;
  LengthStats length_stats;
  PropertyHistogram histogram;
  std::string config_echo;
  std::uint32_t epoch = 0;
};

namespace detail {

class Writer {
 public:
  explicit Writer(const std::string& path) : out_(path, std::ios::binary) {
    if (!out_) throw Error(ErrorCode::IOFailure, "cannot open " + path + " for writing");
  }
  void bytes(const void* p, std::size_t n) { out_.write(static_cast<const char*>(p), n); }
  void u32(std::uint32_t v) { bytes(&v, sizeof v); }
  void u64(std::uint64_t v) { bytes(&v, sizeof v); }
  void f64(double v) { bytes(&v, sizeof v); }
  void str(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    bytes(s.data(), s.size());
  }
  void close(const std::string& path) {
    out_.flush();
    if (!out_) throw Error(ErrorCode::IOFailure, "write failed for " + path);
  }

 private:
  std::ofstream out_;
};

class Reader {
 public:
  explicit Reader(const std::string& path) : in_(path, std::ios::binary) {
    if (!in_) throw Error(ErrorCode::IOFailure, "cannot open " + path);
  }
  void bytes(void* p, std::size_t n) {
    in_.read(static_cast<char*>(p), n);
    if (in_.gcount() != static_cast<std::streamsize>(n)) {
      throw Error(ErrorCode::CorruptFile, "truncated at offset " + std::to_string(offset_));
    }
    offset_ += n;
  }
  std::uint32_t u32() {
    std::uint32_t v;
    bytes(&v, sizeof v);
    return v;
  }
  std::uint64_t u64() {
    std::uint64_t v;
    bytes(&v, sizeof v);
    return v;
  }
  double f64() {
    double v;
    bytes(&v, sizeof v);
    return v;
  }
  std::string str() {
    const std::uint32_t n = u32();
    if (n > (1u << 20)) throw Error(ErrorCode::CorruptFile, "oversized string at offset " + std::to_string(offset_));
    std::string s(n, '\0');
    bytes(s.data(), n);
    return s;
  }
  std::size_t offset() const { return offset_; }

 private:
  std::ifstream in_;
  std::size_t offset_ = 0;
};

}  // namespace detail

inline void save_checkpoint(const TrainedModel& tm, const std::string& path) {
  detail::Writer w(path);
  w.bytes(kCheckpointMagic, 4);
  w.u32(kCheckpointVersion);

  const ModelConfig& cfg = tm.model.config();
  w.u32(static_cast<std::uint32_t>(cfg.d_model));
  w.u32(static_cast<std::uint32_t>(cfg.heads));
  w.u32(static_cast<std::uint32_t>(cfg.blocks));
  w.u32(static_cast<std::uint32_t>(cfg.d_ff));
  w.u32(static_cast<std::uint32_t>(cfg.latent_dim));
  w.u32(static_cast<std::uint32_t>(cfg.max_len));
  w.f64(cfg.dropout);

  const auto& params = tm.model.parameters();
  w.u32(static_cast<std::uint32_t>(params.size()));
  for (const auto& [name, tensor] : params) {
    w.str(name);
    w.u32(static_cast<std::uint32_t>(tensor.rank()));
    for (int d : tensor.shape()) w.u64(static_cast<std::uint64_t>(d));
    w.bytes(tensor.values().data(), tensor.values().size() * sizeof(double));
  }

  const auto& vocab = Vocabulary::decoder();
  w.u32(static_cast<std::uint32_t>(vocab.size()));
  for (const auto& token : vocab.tokens()) w.str(token);

  for (int p = 0; p < 3; ++p) w.f64(tm.cond_stats.mean[p]);
  for (int p = 0; p < 3; ++p) w.f64(tm.cond_stats.stddev[p]);
  w.f64(tm.length_stats.mean);
  w.f64(tm.length_stats.stddev);

  for (int axis = 0; axis < 3; ++axis) {
    w.f64(tm.histogram.axis_min(axis));
    w.f64(tm.histogram.axis_max(axis));
  }
  w.u64(tm.histogram.total());
  w.u64(tm.histogram.cells().size());
  for (const auto& [key, count] : tm.histogram.cells()) {
    w.u64(key);
    w.u64(count);
  }

  w.str(tm.config_echo);
  w.u32(tm.epoch);
  w.close(path);
}

inline TrainedModel load_checkpoint(const std::string& path) {
  detail::Reader r(path);
  char magic[4];
  r.bytes(magic, 4);
  if (std::memcmp(magic, kCheckpointMagic, 4) != 0) {
    throw Error(ErrorCode::CorruptFile, "bad magic");
  }
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion) {
    throw Error(ErrorCode::VersionMismatch,
                "file version " + std::to_string(version) + ", reader version " +
                    std::to_string(kCheckpointVersion));
  }

  ModelConfig cfg;
  cfg.d_model = static_cast<int>(r.u32());
  cfg.heads = static_cast<int>(r.u32());
  cfg.blocks = static_cast<int>(r.u32());
  cfg.d_ff = static_cast<int>(r.u32());
  cfg.latent_dim = static_cast<int>(r.u32());
  cfg.max_len = static_cast<int>(r.u32());
  cfg.dropout = r.f64();

  TrainedModel tm;
  Rng init_rng(0);
  tm.model = CvaeModel(cfg, init_rng);

  const std::uint32_t tensor_count = r.u32();
  for (std::uint32_t i = 0; i < tensor_count; ++i) {
    const std::string name = r.str();
    const std::uint32_t rank = r.u32();
    std::int64_t numel = 1;
    Shape shape;
    for (std::uint32_t d = 0; d < rank; ++d) {
      shape.push_back(static_cast<int>(r.u64()));
      numel *= shape.back();
    }
    Tensor target = tm.model.find_parameter(name);
    if (target.shape() != shape) {
      throw Error(ErrorCode::CorruptFile, "shape mismatch for " + name + " at offset " +
                                              std::to_string(r.offset()));
    }
    r.bytes(target.values_mut().data(), static_cast<std::size_t>(numel) * sizeof(double));
  }

  const std::uint32_t vocab_count = r.u32();
  if (vocab_count != static_cast<std::uint32_t>(Vocabulary::decoder().size())) {
    throw Error(ErrorCode::CorruptFile, "vocabulary size mismatch");
  }
  for (std::uint32_t i = 0; i < vocab_count; ++i) {
    if (r.str() != Vocabulary::decoder().token(static_cast<int>(i))) {
      throw Error(ErrorCode::CorruptFile, "vocabulary token mismatch");
    }
  }

  for (int p = 0; p < 3; ++p) tm.cond_stats.mean[p] = r.f64();
  for (int p = 0; p < 3; ++p) tm.cond_stats.stddev[p] = r.f64();
  tm.length_stats.mean = r.f64();
  tm.length_stats.stddev = r.f64();

  std::array<double, 3> hist_min{}, hist_max{};
  for (int axis = 0; axis < 3; ++axis) {
    hist_min[axis] = r.f64();
    hist_max[axis] = r.f64();
  }
  const std::uint64_t total = r.u64();
  const std::uint64_t cell_count = r.u64();
  std::map<std::uint64_t, std::uint64_t> cells;
  for (std::uint64_t i = 0; i < cell_count; ++i) {
    const std::uint64_t key = r.u64();
    cells[key] = r.u64();
  }
  tm.histogram = PropertyHistogram::restore(hist_min, hist_max, std::move(cells), total);

  tm.config_echo = r.str();
  tm.epoch = r.u32();
  return tm;
}

}  // namespace molgen
