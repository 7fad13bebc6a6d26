#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "gestnet/dataset.hpp"
#include "gestnet/rng.hpp"

namespace gestnet {

enum class AugKind { jitter, scale, timewarp, combined };

inline const char* aug_kind_name(AugKind k) {
  switch (k) {
    case AugKind::jitter: return "jitter";
    case AugKind::scale: return "scale";
    case AugKind::timewarp: return "timewarp";
    case AugKind::combined: return "combined";
  }
  return "?";
}

inline constexpr double kScaleLo = 0.75;
inline constexpr double kScaleHi = 1.25;
inline constexpr double kWarpLo = 0.5;
inline constexpr double kWarpHi = 2.0;

namespace detail {

/// Per-axis variance (biased) over every joint and frame of the sequence.
inline std::array<double, 3> axis_variances(const std::vector<double>& values) {
  std::array<double, 3> mean{0, 0, 0}, var{0, 0, 0};
  const double n = static_cast<double>(values.size() / 3);
  for (std::size_t i = 0; i < values.size(); ++i) mean[i % 3] += values[i];
  for (double& m : mean) m /= n;
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double d = values[i] - mean[i % 3];
    var[i % 3] += d * d;
  }
  for (double& v : var) v /= n;
  return var;
}

}  // namespace detail

/// Sensor-noise simulation: add N(0, Var(X)) per coordinate axis, variance
/// estimated from the sequence itself. Zero-variance axes stay untouched.
inline SkeletonSequence jitter(const SkeletonSequence& seq, std::uint64_t seed) {
  SkeletonSequence out = seq;
  const auto var = detail::axis_variances(seq.values);
  const std::array<double, 3> sd{std::sqrt(var[0]), std::sqrt(var[1]), std::sqrt(var[2])};
  Rng rng(seed);
  for (std::size_t i = 0; i < out.values.size(); ++i) {
    out.values[i] += rng.normal(0.0, sd[i % 3]);
  }
  return out;
}

/// Magnitude change by a fixed factor (the deterministic core of `scale`).
inline SkeletonSequence scale_by(const SkeletonSequence& seq, double factor) {
  SkeletonSequence out = seq;
  for (double& v : out.values) v *= factor;
  return out;
}

/// One scalar drawn uniformly in [0.75, 1.25) multiplies every coordinate.
inline SkeletonSequence scale(const SkeletonSequence& seq, std::uint64_t seed) {
  Rng rng(seed);
  return scale_by(seq, rng.uniform(kScaleLo, kScaleHi));
}

/// Linear re-interpolation onto an explicit frame count (>= 2), endpoints
/// preserved (the deterministic core of `time_warp`).
inline SkeletonSequence warp_to_length(const SkeletonSequence& seq, std::size_t new_frames) {
  SkeletonSequence out = seq;
  out.values = resample_frames(seq.values, new_frames);
  return out;
}

/// Duration change: V uniform in [0.5, 2.0), new length round(T*V), floor 2
/// so the endpoints stay well defined.
inline SkeletonSequence time_warp(const SkeletonSequence& seq, std::uint64_t seed) {
  if (seq.frames() < 2) throw ConfigError("time_warp: sequence must have at least 2 frames");
  Rng rng(seed);
  const double v = rng.uniform(kWarpLo, kWarpHi);
  const auto target = static_cast<std::size_t>(
      std::max<long long>(2, std::llround(static_cast<double>(seq.frames()) * v)));
  return warp_to_length(seq, target);
}

/// jitter, then scale, then time-warp, with sub-seeds derived from `seed`.
inline SkeletonSequence combined(const SkeletonSequence& seq, std::uint64_t seed) {
  SkeletonSequence out = jitter(seq, Rng::derive(seed, 1));
  out = scale(out, Rng::derive(seed, 2));
  return time_warp(out, Rng::derive(seed, 3));
}

inline SkeletonSequence apply_augmentation(const SkeletonSequence& seq, AugKind kind,
                                           std::uint64_t seed) {
  switch (kind) {
    case AugKind::jitter: return jitter(seq, seed);
    case AugKind::scale: return scale(seq, seed);
    case AugKind::timewarp: return time_warp(seq, seed);
    case AugKind::combined: return combined(seq, seed);
  }
  throw ConfigError("unknown augmentation kind");
}

/// One training record with provenance back to its origin sequence.
struct AugRecord {
  SkeletonSequence seq;
  std::size_t origin = 0;  // index into the source dataset
  bool original = false;
  AugKind kind = AugKind::jitter;  // meaningful when !original
  std::uint64_t seed = 0;          // 0 for originals
};

/// Expand each sequence to `factor` records: the original plus factor-1
/// synthetic variants, techniques assigned round-robin
/// (jitter, scale, timewarp, combined), so factor 40 yields 10/10/10/9.
/// Labels and subject ids are copied; seeds derive from (seed, origin, k).
inline std::vector<AugRecord> augment_dataset(const std::vector<SkeletonSequence>& sequences,
                                              std::size_t factor, std::uint64_t seed) {
  if (factor < 1) throw ConfigError("augment: factor must be >= 1");
  static constexpr AugKind kOrder[4] = {AugKind::jitter, AugKind::scale, AugKind::timewarp,
                                        AugKind::combined};
  std::vector<AugRecord> out;
  out.reserve(sequences.size() * factor);
  for (std::size_t i = 0; i < sequences.size(); ++i) {
    AugRecord orig;
    orig.seq = sequences[i];
    orig.origin = i;
    orig.original = true;
    out.push_back(std::move(orig));
    for (std::size_t k = 1; k < factor; ++k) {
      AugRecord rec;
      rec.origin = i;
      rec.original = false;
      rec.kind = kOrder[(k - 1) % 4];
      rec.seed = Rng::derive(seed, i + 1, k, static_cast<std::uint64_t>(rec.kind) + 1);
      rec.seq = apply_augmentation(sequences[i], rec.kind, rec.seed);
      out.push_back(std::move(rec));
    }
  }
  return out;
}

inline std::vector<int> subjects_of(const std::vector<AugRecord>& records) {
  std::vector<int> s;
  s.reserve(records.size());
  for (const auto& r : records) s.push_back(r.seq.subject);
  return s;
}

}  // namespace gestnet
