#pragma once

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iterator>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include "cqt.hpp"
#include "error.hpp"
#include "model.hpp"
#include "parallel.hpp"
#include "score.hpp"
#include "sym_tensor.hpp"

namespace moe {

struct MomentOptions {
  /// Samples with |P3(y)| above the cap (or non-finite) are rejected.
  double p3_cap = std::numeric_limits<double>::infinity();
  /// Partial sums are formed over a fixed global grid of this many samples.
  Eigen::Index chunk = 1024;
};

struct MomentTensors {
  Sym2 t2;
  Sym3 t3;
  Eigen::Index used = 0;
  Eigen::Index rejected = 0;
};

namespace detail {

/// Canonical pairwise reduction of partial sums in the given order.
template <typename T>
T pairwise_sum(std::vector<T> parts) {
  if (parts.empty()) throw DataError("pairwise_sum: nothing to reduce");
  while (parts.size() > 1) {
    std::vector<T> next;
    next.reserve((parts.size() + 1) / 2);
    for (std::size_t i = 0; i + 1 < parts.size(); i += 2) {
      parts[i] += parts[i + 1];
      next.push_back(std::move(parts[i]));
    }
    if (parts.size() % 2 == 1) next.push_back(std::move(parts.back()));
    parts = std::move(next);
  }
  return std::move(parts.front());
}

}  // namespace detail

/// Running sums of P2(y) S2(x) and P3(y) S3(x).
///
/// Sums are kept per segment, a segment being the intersection of an
/// accumulated range with the fixed global chunk grid. Finalization reduces the
/// segments pairwise in global index order, so any merge order, and any split
/// of the data on chunk boundaries, gives bitwise identical tensors. A split
/// inside a chunk changes the rounding of that chunk's sum.
class MomentAccumulator {
 public:
  MomentAccumulator(CqtCoefficients cqt, InputDistribution dist, MomentOptions opts = {})
      : cqt_(std::move(cqt)), dist_(std::move(dist)), opts_(opts) {
    dist_.validate();
    if (opts_.chunk < 1) throw ConfigError("moment chunk size must be >= 1");
  }

  /// Accumulates all rows of `batch`, placed after everything seen so far.
  void accumulate(const Dataset& batch) { accumulate(batch, 0, batch.n(), next_index_); }

  /// Accumulates rows [begin, end) of `data`; row r has global index r.
  void accumulate_range(const Dataset& data, Eigen::Index begin, Eigen::Index end) {
    accumulate(data, begin, end, begin);
  }

  /// Accumulates rows [begin, end) of `data`; row r has global index r - begin + global_begin.
  void accumulate(const Dataset& data, Eigen::Index begin, Eigen::Index end, Eigen::Index global_begin) {
    if (begin >= end) return;
    if (data.d() != dist_.d) throw DataError("moment accumulation: batch dimension does not match the input law");
    const std::size_t d = static_cast<std::size_t>(dist_.d);
    std::vector<double> scratch;
    Eigen::Index row = begin;
    while (row < end) {
      const Eigen::Index g = row - begin + global_begin;
      const Eigen::Index chunk_end = (g / opts_.chunk + 1) * opts_.chunk;
      const Eigen::Index stop = std::min(end, row + (chunk_end - g));
      Segment seg{g, 0, 0, Sym2(d), Sym3(d)};
      for (; row < stop; ++row) {
        const double y = data.y[row];
        const double p3 = apply_p3(cqt_, y);
        const double p2 = apply_p2(cqt_, y);
        if (!std::isfinite(p3) || !std::isfinite(p2) || std::abs(p3) > opts_.p3_cap) {
          ++seg.rejected;
          continue;
        }
        const std::span<const double> x(data.x.row(row).data(), d);
        add_score(x, dist_, 2, p2, seg.t2.data(), scratch);
        add_score(x, dist_, 3, p3, seg.t3.data(), scratch);
        ++seg.used;
      }
      insert(std::move(seg));
    }
    next_index_ = std::max(next_index_, end - begin + global_begin);
  }

  /// Absorbs another accumulator's segments; the index ranges must be disjoint.
  void merge(const MomentAccumulator& other) {
    for (const auto& [first, seg] : other.segments_) insert(seg);
    next_index_ = std::max(next_index_, other.next_index_);
  }

  Eigen::Index n_seen() const {
    Eigen::Index n = 0;
    for (const auto& [first, seg] : segments_) n += seg.used;
    return n;
  }

  Eigen::Index rejected() const {
    Eigen::Index n = 0;
    for (const auto& [first, seg] : segments_) n += seg.rejected;
    return n;
  }

  MomentTensors finalize() const {
    const Eigen::Index n = n_seen();
    if (n == 0) throw DataError("moment accumulator is empty");
    std::vector<Sym2> s2;
    std::vector<Sym3> s3;
    for (const auto& [first, seg] : segments_) {
      s2.push_back(seg.t2);
      s3.push_back(seg.t3);
    }
    MomentTensors out{detail::pairwise_sum(std::move(s2)), detail::pairwise_sum(std::move(s3)), n, rejected()};
    out.t2 *= 1.0 / static_cast<double>(n);
    out.t3 *= 1.0 / static_cast<double>(n);
    return out;
  }

  const CqtCoefficients& cqt() const { return cqt_; }

 private:
  struct Segment {
    Eigen::Index first = 0;
    Eigen::Index used = 0;
    Eigen::Index rejected = 0;
    Sym2 t2;
    Sym3 t3;
  };

  static Eigen::Index end_of(const Segment& s) { return s.first + s.used + s.rejected; }

  void insert(Segment seg) {
    if (seg.used == 0 && seg.rejected == 0) return;
    const auto next = segments_.lower_bound(seg.first);
    const bool clash = (next != segments_.end() && next->first < end_of(seg)) ||
                       (next != segments_.begin() && end_of(std::prev(next)->second) > seg.first);
    if (clash) throw DataError("moment accumulator: overlapping sample ranges");
    segments_.emplace(seg.first, std::move(seg));
  }

  CqtCoefficients cqt_;
  InputDistribution dist_;
  MomentOptions opts_;
  std::map<Eigen::Index, Segment> segments_;
  Eigen::Index next_index_ = 0;
};

/// Default P3 rejection cap: factor times a robust scale of |P3(y)|
/// (median absolute value / 0.6745).
inline double robust_p3_cap(const Dataset& data, const CqtCoefficients& cqt, double factor = 50.0) {
  std::vector<double> v(static_cast<std::size_t>(data.n()));
  for (Eigen::Index i = 0; i < data.n(); ++i) v[static_cast<std::size_t>(i)] = std::abs(apply_p3(cqt, data.y[i]));
  if (v.empty()) return std::numeric_limits<double>::infinity();
  auto mid = v.begin() + static_cast<std::ptrdiff_t>(v.size() / 2);
  std::nth_element(v.begin(), mid, v.end());
  const double scale = *mid / 0.6745;
  return scale > 0 && std::isfinite(scale) ? factor * scale : std::numeric_limits<double>::infinity();
}

/// Empirical T2, T3 over the whole dataset, split across workers on chunk
/// boundaries and merged deterministically.
inline MomentTensors compute_moments(const Dataset& data, const CqtCoefficients& cqt, const InputDistribution& dist,
                                     const MomentOptions& opts = {}, unsigned threads = 1) {
  data.validate();
  const Eigen::Index n = data.n();
  const Eigen::Index chunks = (n + opts.chunk - 1) / opts.chunk;
  const auto workers = static_cast<std::size_t>(std::clamp<Eigen::Index>(threads, 1, chunks));
  std::vector<MomentAccumulator> parts(workers, MomentAccumulator(cqt, dist, opts));
  const Eigen::Index per = (chunks + static_cast<Eigen::Index>(workers) - 1) / static_cast<Eigen::Index>(workers);
  parallel_for(workers, threads, [&](std::size_t w) {
    const Eigen::Index begin = std::min(n, static_cast<Eigen::Index>(w) * per * opts.chunk);
    const Eigen::Index end = std::min(n, begin + per * opts.chunk);
    parts[w].accumulate_range(data, begin, end);
  });
  for (std::size_t w = 1; w < workers; ++w) parts[0].merge(parts[w]);
  return parts[0].finalize();
}

/// (1/n) sum y_i S3(x_i) with no label transform: the tensor that still carries
/// the gating cross terms.
inline Sym3 raw_third_moment(const Dataset& data, const InputDistribution& dist, Eigen::Index chunk = 1024) {
  data.validate();
  if (data.d() != dist.d) throw DataError("raw_third_moment: dimension mismatch");
  const std::size_t d = static_cast<std::size_t>(data.d());
  std::vector<Sym3> parts;
  std::vector<double> scratch;
  for (Eigen::Index begin = 0; begin < data.n(); begin += chunk) {
    Sym3 part(d);
    const Eigen::Index end = std::min(data.n(), begin + chunk);
    for (Eigen::Index r = begin; r < end; ++r)
      add_score({data.x.row(r).data(), d}, dist, 3, data.y[r], part.data(), scratch);
    parts.push_back(std::move(part));
  }
  Sym3 t = detail::pairwise_sum(std::move(parts));
  t *= 1.0 / static_cast<double>(data.n());
  return t;
}

// Tensor dump: "MOET", u32 version, u32 d, packed Sym2 then packed Sym3, all
// little-endian; values as IEEE-754 binary64.

inline constexpr std::uint32_t kTensorDumpVersion = 1;

namespace detail {

template <typename T>
void write_le(std::ostream& os, T value) {
  std::array<unsigned char, sizeof(T)> bytes{};
  std::uint64_t bits = 0;
  if constexpr (std::is_floating_point_v<T>) bits = std::bit_cast<std::uint64_t>(value);
  else bits = static_cast<std::uint64_t>(value);
  for (std::size_t i = 0; i < sizeof(T); ++i) bytes[i] = static_cast<unsigned char>((bits >> (8 * i)) & 0xff);
  os.write(reinterpret_cast<const char*>(bytes.data()), sizeof(T));
}

template <typename T>
T read_le(std::istream& is) {
  std::array<unsigned char, sizeof(T)> bytes{};
  if (!is.read(reinterpret_cast<char*>(bytes.data()), sizeof(T))) throw DataError("tensor dump truncated");
  std::uint64_t bits = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) bits |= static_cast<std::uint64_t>(bytes[i]) << (8 * i);
  if constexpr (std::is_floating_point_v<T>) return std::bit_cast<T>(bits);
  else return static_cast<T>(bits);
}

}  // namespace detail

inline void write_tensor_dump(const std::string& path, const Sym2& t2, const Sym3& t3) {
  if (t2.dim() != t3.dim()) throw DataError("tensor dump: T2 and T3 dimensions differ");
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("cannot open '" + path + "' for writing");
  os.write("MOET", 4);
  detail::write_le<std::uint32_t>(os, kTensorDumpVersion);
  detail::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(t2.dim()));
  for (double v : t2.data()) detail::write_le<double>(os, v);
  for (double v : t3.data()) detail::write_le<double>(os, v);
}

inline std::pair<Sym2, Sym3> read_tensor_dump(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open '" + path + "'");
  char magic[4];
  if (!is.read(magic, 4) || std::string(magic, 4) != "MOET") throw DataError("'" + path + "' is not a tensor dump");
  const auto version = detail::read_le<std::uint32_t>(is);
  if (version != kTensorDumpVersion) throw DataError("unsupported tensor dump version");
  const auto d = detail::read_le<std::uint32_t>(is);
  const auto here = is.tellg();
  is.seekg(0, std::ios::end);
  const auto remaining = static_cast<std::uint64_t>(is.tellg() - here);
  is.seekg(here);
  if (remaining != 8 * (Sym2::packed_size(d) + static_cast<std::uint64_t>(Sym3::packed_size(d))))
    throw DataError("tensor dump '" + path + "' has the wrong size for d = " + std::to_string(d));
  Sym2 t2(d);
  Sym3 t3(d);
  for (double& v : t2.data()) v = detail::read_le<double>(is);
  for (double& v : t3.data()) v = detail::read_le<double>(is);
  return {std::move(t2), std::move(t3)};
}

}  // namespace moe
