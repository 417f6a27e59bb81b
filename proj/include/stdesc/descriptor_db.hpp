#pragma once

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <istream>
#include <mutex>
#include <optional>
#include <ostream>
#include <shared_mutex>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "stdesc/descriptor.hpp"
#include "stdesc/error.hpp"

namespace stdesc {

/// Values sitting on a cell edge up to this fraction of a cell below it are
/// quantized into the upper cell, so exact multiples survive rounding.
inline constexpr double kQuantizationSlack = 1e-6;

struct HashKey {
  using Cells = std::array<std::int32_t, 6>;
  Cells cells{};
  std::uint64_t bucket = 0;

  bool operator==(const HashKey& o) const { return cells == o.cells; }
};

inline std::uint64_t mix_cells(const HashKey::Cells& c) {
  static constexpr std::uint64_t kMul[6] = {0x9E3779B97F4A7C15ULL, 0xC2B2AE3D27D4EB4FULL, 0x165667B19E3779F9ULL,
                                            0xD6E8FEB86659FD93ULL, 0xFF51AFD7ED558CCDULL, 0xC4CEB9FE1A85EC53ULL};
  std::uint64_t h = 0x243F6A8885A308D3ULL;
  for (int i = 0; i < 6; ++i) {
    h ^= static_cast<std::uint64_t>(static_cast<std::uint32_t>(c[i])) * kMul[i];
    h ^= h >> 29;
    h *= 0xBF58476D1CE4E5B9ULL;
  }
  h ^= h >> 32;
  return h;
}

inline std::int32_t quantize(double value, double step) {
  return static_cast<std::int32_t>(std::floor(value / step + kQuantizationSlack));
}

inline HashKey make_key(const Signature& sig, double delta_l, double delta_n) {
  if (!(delta_l > 0.0) || !(delta_n > 0.0)) throw Error(ErrorCode::InvalidArgument, "quantization steps must be positive");
  HashKey k;
  for (int i = 0; i < 3; ++i) k.cells[i] = quantize(sig[i], delta_l);
  for (int i = 3; i < 6; ++i) k.cells[i] = quantize(sig[i], delta_n);
  k.bucket = mix_cells(k.cells);
  return k;
}

struct MatchedPair {
  TriangleDescriptor query;
  TriangleDescriptor stored;
};

struct Candidate {
  std::int64_t frame_id = 0;
  std::size_t votes = 0;
  std::vector<MatchedPair> pairs;
};

/// Frames ordered by votes (descending), then frame id.
using CandidateSet = std::vector<Candidate>;

namespace detail {

/// Open-addressing map from 64-bit bucket hash to a list of values. One probe
/// array of (key, list index) pairs, so a lookup touches one cache line in
/// the common case; prefetch() lets a batch of lookups overlap their misses.
template <typename V>
class BucketTable {
 public:
  const std::vector<V>* find(std::uint64_t key) const {
    if (lists_.empty()) return nullptr;
    for (std::size_t i = home(key);; i = (i + 1) & mask_) {
      const Slot& s = slots_[i];
      if (s.list == kEmpty) return nullptr;
      if (s.key == key) return &lists_[s.list];
    }
  }

  std::vector<V>& operator[](std::uint64_t key) {
    if ((lists_.size() + 1) * 2 > slots_.size()) grow();
    for (std::size_t i = home(key);; i = (i + 1) & mask_) {
      Slot& s = slots_[i];
      if (s.list == kEmpty) {
        s = {key, static_cast<std::uint32_t>(lists_.size())};
        return lists_.emplace_back();
      }
      if (s.key == key) return lists_[s.list];
    }
  }

  void prefetch(std::uint64_t key) const {
#if defined(__GNUC__) || defined(__clang__)
    if (!slots_.empty()) __builtin_prefetch(&slots_[home(key)]);
#else
    (void)key;
#endif
  }

  std::size_t size() const { return lists_.size(); }

 private:
  static constexpr std::uint32_t kEmpty = 0xffffffffu;
  struct Slot {
    std::uint64_t key = 0;
    std::uint32_t list = kEmpty;
  };

  std::size_t home(std::uint64_t key) const { return (key * 0x9e3779b97f4a7c15ull) >> shift_; }

  void grow() {
    const std::size_t cap = slots_.empty() ? 64 : slots_.size() * 2;
    std::vector<Slot> old(cap);
    old.swap(slots_);
    mask_ = cap - 1;
    shift_ = 64 - std::countr_zero(cap);
    for (const Slot& s : old) {
      if (s.list == kEmpty) continue;
      std::size_t i = home(s.key);
      while (slots_[i].list != kEmpty) i = (i + 1) & mask_;
      slots_[i] = s;
    }
  }

  std::vector<Slot> slots_;
  std::vector<std::vector<V>> lists_;
  std::size_t mask_ = 0;
  int shift_ = 64;
};

}  // namespace detail

/// Hash table from quantized descriptor signature to stored descriptors.
///
/// One writer, many readers: insert_frame takes an exclusive lock after all
/// keys are computed, so a query sees either none or all of a frame.
class DescriptorDatabase {
 public:
  static constexpr char kMagic[8] = {'S', 'T', 'D', 'E', 'S', 'C', 'D', 'B'};
  static constexpr std::uint32_t kVersion = 1;
  static constexpr std::size_t kMaxCandidates = 10;

  explicit DescriptorDatabase(double delta_l = 0.2, double delta_n = 0.1) : delta_l_(delta_l), delta_n_(delta_n) {
    if (!(delta_l > 0.0) || !(delta_n > 0.0))
      throw Error(ErrorCode::InvalidArgument, "quantization steps must be positive");
  }

  DescriptorDatabase(DescriptorDatabase&& o) noexcept {
    std::unique_lock lock(o.mu_);
    delta_l_ = o.delta_l_;
    delta_n_ = o.delta_n_;
    frames_ = std::move(o.frames_);
    slot_of_ = std::move(o.slot_of_);
    buckets_ = std::move(o.buckets_);
    descriptors_indexed_ = o.descriptors_indexed_;
  }
  DescriptorDatabase(const DescriptorDatabase&) = delete;
  DescriptorDatabase& operator=(const DescriptorDatabase&) = delete;

  double delta_l() const { return delta_l_; }
  double delta_n() const { return delta_n_; }

  std::size_t frames_indexed() const {
    std::shared_lock lock(mu_);
    return frames_.size();
  }
  std::size_t descriptors_indexed() const {
    std::shared_lock lock(mu_);
    return descriptors_indexed_;
  }

  HashKey key_of(const TriangleDescriptor& d) const { return make_key(descriptor_signature(d), delta_l_, delta_n_); }

  /// Adds one frame. Every descriptor must carry `frame_id`.
  void insert_frame(std::int64_t frame_id, std::vector<TriangleDescriptor> descriptors) {
    for (const auto& d : descriptors)
      if (d.frame_id != frame_id)
        throw Error(ErrorCode::InvalidArgument, "descriptor frame id " + std::to_string(d.frame_id) +
                                                    " differs from " + std::to_string(frame_id));
    std::vector<HashKey> keys;
    keys.reserve(descriptors.size());
    for (const auto& d : descriptors) keys.push_back(key_of(d));

    std::unique_lock lock(mu_);
    if (slot_of_.count(frame_id)) throw Error(ErrorCode::DuplicateFrame, "frame " + std::to_string(frame_id));
    const auto slot = static_cast<std::uint32_t>(frames_.size());
    for (std::size_t i = 0; i < keys.size(); ++i)
      buckets_[keys[i].bucket].push_back({keys[i].cells, slot, static_cast<std::uint32_t>(i)});
    descriptors_indexed_ += descriptors.size();
    slot_of_.emplace(frame_id, slot);
    frames_.push_back({frame_id, std::move(descriptors)});
  }

  /// Votes for stored frames sharing a hash cell with each query descriptor;
  /// at most one vote per (query descriptor, frame). The `skip_recent` most
  /// recently inserted frames are ignored.
  CandidateSet query_candidates(std::span<const TriangleDescriptor> query, std::size_t skip_recent,
                                std::size_t max_candidates = kMaxCandidates) const {
    std::vector<HashKey> keys;
    keys.reserve(query.size());
    for (const auto& d : query) keys.push_back(key_of(d));

    std::shared_lock lock(mu_);
    const std::size_t first_excluded = frames_.size() > skip_recent ? frames_.size() - skip_recent : 0;
    std::unordered_map<std::uint32_t, Candidate> acc;
    std::vector<std::uint32_t> voted;
    for (const auto& k : keys) buckets_.prefetch(k.bucket);
    for (std::size_t qi = 0; qi < query.size(); ++qi) {
      const auto* list = buckets_.find(keys[qi].bucket);
      if (!list) continue;
      voted.clear();
      for (const auto& e : *list) {
        if (e.cells != keys[qi].cells || e.slot >= first_excluded) continue;
        if (std::find(voted.begin(), voted.end(), e.slot) != voted.end()) continue;
        voted.push_back(e.slot);
        const auto& frame = frames_[e.slot];
        Candidate& c = acc[e.slot];
        c.frame_id = frame.id;
        ++c.votes;
        c.pairs.push_back({query[qi], frame.descriptors[e.index]});
      }
    }
    lock.unlock();

    CandidateSet out;
    out.reserve(acc.size());
    for (auto& [slot, c] : acc) out.push_back(std::move(c));
    auto order = [](const Candidate& a, const Candidate& b) {
      return a.votes > b.votes || (a.votes == b.votes && a.frame_id < b.frame_id);
    };
    if (out.size() > max_candidates) {
      std::partial_sort(out.begin(), out.begin() + static_cast<std::ptrdiff_t>(max_candidates), out.end(), order);
      out.resize(max_candidates);
    } else {
      std::sort(out.begin(), out.end(), order);
    }
    return out;
  }

  /// Stored descriptors whose key equals `key` exactly.
  std::vector<TriangleDescriptor> bucket(const HashKey& key) const {
    std::shared_lock lock(mu_);
    std::vector<TriangleDescriptor> out;
    const auto* list = buckets_.find(key.bucket);
    if (!list) return out;
    for (const auto& e : *list)
      if (e.cells == key.cells) out.push_back(frames_[e.slot].descriptors[e.index]);
    return out;
  }

  /// Descriptors of a stored frame, in insertion order.
  std::optional<std::vector<TriangleDescriptor>> frame(std::int64_t frame_id) const {
    std::shared_lock lock(mu_);
    auto it = slot_of_.find(frame_id);
    if (it == slot_of_.end()) return std::nullopt;
    return frames_[it->second].descriptors;
  }

  // Snapshot layout (little-endian): magic[8], u32 version, f64 delta_l,
  // f64 delta_n, u64 frame count; per frame: i64 id, u64 count, then per
  // descriptor 24 f64 (p1 p2 p3 n1 n2 n3 l12 l23 l13 centroid) and i64 frame id.
  void save(std::ostream& out) const {
    static_assert(std::endian::native == std::endian::little, "snapshot writer assumes a little-endian host");
    std::shared_lock lock(mu_);
    out.write(kMagic, sizeof(kMagic));
    put(out, kVersion);
    put(out, delta_l_);
    put(out, delta_n_);
    put(out, static_cast<std::uint64_t>(frames_.size()));
    for (const auto& f : frames_) {
      put(out, f.id);
      put(out, static_cast<std::uint64_t>(f.descriptors.size()));
      for (const auto& d : f.descriptors) {
        for (const Vec3* v : {&d.p1, &d.p2, &d.p3, &d.n1, &d.n2, &d.n3})
          for (int i = 0; i < 3; ++i) put(out, (*v)[i]);
        put(out, d.l12);
        put(out, d.l23);
        put(out, d.l13);
        for (int i = 0; i < 3; ++i) put(out, d.centroid[i]);
        put(out, d.frame_id);
      }
    }
    if (!out) throw Error(ErrorCode::IoError, "snapshot write failed");
  }

  static DescriptorDatabase load(std::istream& in) {
    char magic[8];
    in.read(magic, sizeof(magic));
    if (!in || std::memcmp(magic, kMagic, sizeof(magic)) != 0)
      throw Error(ErrorCode::UnsupportedFormat, "not a descriptor database snapshot");
    auto version = get<std::uint32_t>(in);
    if (version != kVersion)
      throw Error(ErrorCode::UnsupportedFormat, "snapshot version " + std::to_string(version));
    double dl = get<double>(in);
    double dn = get<double>(in);
    DescriptorDatabase db(dl, dn);
    auto nframes = get<std::uint64_t>(in);
    for (std::uint64_t f = 0; f < nframes; ++f) {
      auto id = get<std::int64_t>(in);
      auto count = get<std::uint64_t>(in);
      std::vector<TriangleDescriptor> descs;
      descs.reserve(static_cast<std::size_t>(std::min<std::uint64_t>(count, 1u << 20)));
      for (std::uint64_t i = 0; i < count; ++i) {
        TriangleDescriptor d;
        for (Vec3* v : {&d.p1, &d.p2, &d.p3, &d.n1, &d.n2, &d.n3})
          for (int k = 0; k < 3; ++k) (*v)[k] = get<double>(in);
        d.l12 = get<double>(in);
        d.l23 = get<double>(in);
        d.l13 = get<double>(in);
        for (int k = 0; k < 3; ++k) d.centroid[k] = get<double>(in);
        d.frame_id = get<std::int64_t>(in);
        descs.push_back(d);
      }
      db.insert_frame(id, std::move(descs));
    }
    return db;
  }

 private:
  struct FrameRecord {
    std::int64_t id;
    std::vector<TriangleDescriptor> descriptors;
  };
  struct Entry {
    HashKey::Cells cells;
    std::uint32_t slot;
    std::uint32_t index;
  };

  template <typename T>
  static void put(std::ostream& out, T v) {
    char buf[sizeof(T)];
    std::memcpy(buf, &v, sizeof(T));
    out.write(buf, sizeof(T));
  }

  template <typename T>
  static T get(std::istream& in) {
    char buf[sizeof(T)];
    in.read(buf, sizeof(T));
    if (!in) throw Error(ErrorCode::MalformedRecord, "truncated snapshot");
    T v;
    std::memcpy(&v, buf, sizeof(T));
    return v;
  }

  mutable std::shared_mutex mu_;
  double delta_l_ = 0.2;
  double delta_n_ = 0.1;
  std::vector<FrameRecord> frames_;
  std::unordered_map<std::int64_t, std::uint32_t> slot_of_;
  detail::BucketTable<Entry> buckets_;
  std::size_t descriptors_indexed_ = 0;
};

}  // namespace stdesc
