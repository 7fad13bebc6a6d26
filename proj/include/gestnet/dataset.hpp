#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "gestnet/errors.hpp"
#include "gestnet/rng.hpp"

namespace gestnet {

inline constexpr std::size_t kJointCount = 22;
inline constexpr std::size_t kFrameDim = kJointCount * 3;  // world xyz per joint

/// One recorded gesture: a variable-length sequence of 66-value frames plus
/// the DHG labels (all 1-based, as in the directory layout).
struct SkeletonSequence {
  std::vector<double> values;  // frames * 66, row-major
  int subject = 1;
  int gesture = 1;  // 1..14
  int finger = 1;   // 1..2
  int trial = 1;    // 1..5

  std::size_t frames() const { return values.size() / kFrameDim; }
  double at(std::size_t frame, std::size_t dim) const { return values[frame * kFrameDim + dim]; }

  int label14() const { return gesture - 1; }
  int label28() const { return (gesture - 1) * 2 + (finger - 1); }
};

enum class Grain { fine, coarse };

struct GestureInfo {
  const char* name;
  const char* tag;
  Grain grain;
};

/// The 14 DHG gestures in dataset order (gesture id = index + 1).
inline constexpr std::array<GestureInfo, 14> kGestureTaxonomy{{
    {"Grab", "G", Grain::fine},
    {"Tap", "T", Grain::coarse},
    {"Expand", "E", Grain::fine},
    {"Pinch", "P", Grain::fine},
    {"Rotation Clockwise", "R-CW", Grain::fine},
    {"Rotation Counter-clockwise", "R-CCW", Grain::fine},
    {"Swipe Right", "S-R", Grain::coarse},
    {"Swipe Left", "S-L", Grain::coarse},
    {"Swipe Up", "S-U", Grain::coarse},
    {"Swipe Down", "S-D", Grain::coarse},
    {"Swipe X", "S-X", Grain::coarse},
    {"Swipe V", "S-V", Grain::coarse},
    {"Swipe +", "S-+", Grain::coarse},
    {"Shake", "Sh", Grain::coarse},
}};

inline bool is_fine_label(int label14) {
  return kGestureTaxonomy.at(static_cast<std::size_t>(label14)).grain == Grain::fine;
}

// ---------------------------------------------------------------------------
// Skeleton text format: whitespace-separated, 66 values per line, one line
// per frame.
// ---------------------------------------------------------------------------

inline std::vector<double> parse_skeleton_frames(std::istream& in, const std::string& origin) {
  std::vector<double> values;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::istringstream ls(line);
    std::size_t count = 0;
    double v;
    while (ls >> v) {
      values.push_back(v);
      ++count;
    }
    if (!ls.eof()) {
      throw ParseError(origin + ":" + std::to_string(line_no) + ": non-numeric token");
    }
    if (count != kFrameDim) {
      throw ParseError(origin + ":" + std::to_string(line_no) + ": expected " +
                       std::to_string(kFrameDim) + " values, got " + std::to_string(count));
    }
  }
  if (values.empty()) throw ParseError(origin + ": empty skeleton file");
  return values;
}

inline std::vector<double> parse_skeleton_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open skeleton file: " + path.string());
  return parse_skeleton_frames(in, path.string());
}

inline void write_skeleton_file(const std::filesystem::path& path,
                                const std::vector<double>& values) {
  std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw IoError("cannot write skeleton file: " + path.string());
  out.precision(17);
  const std::size_t frames = values.size() / kFrameDim;
  for (std::size_t f = 0; f < frames; ++f) {
    for (std::size_t d = 0; d < kFrameDim; ++d) {
      if (d) out << ' ';
      out << values[f * kFrameDim + d];
    }
    out << '\n';
  }
}

// ---------------------------------------------------------------------------
// DHG directory layout
// ---------------------------------------------------------------------------

/// Shape of a dataset tree. Defaults describe the full DHG-14/28 corpus.
struct DatasetSpec {
  std::size_t gestures = 14;
  std::size_t fingers = 2;
  std::size_t subjects = 20;
  std::size_t trials = 5;

  std::size_t expected_count() const { return gestures * fingers * subjects * trials; }
};

inline constexpr const char* kDhgPathTemplate =
    "gesture_{g}/finger_{f}/subject_{s}/essai_{t}/skeleton_world.txt";

inline std::string dhg_relative_path(const std::string& tmpl, std::size_t g, std::size_t f,
                                     std::size_t s, std::size_t t) {
  std::string out = tmpl;
  const auto sub = [&out](const std::string& key, std::size_t v) {
    const auto pos = out.find(key);
    if (pos != std::string::npos) out.replace(pos, key.size(), std::to_string(v));
  };
  sub("{g}", g);
  sub("{f}", f);
  sub("{s}", s);
  sub("{t}", t);
  return out;
}

struct LoadReport {
  std::vector<std::string> missing;  // expected but absent relative paths
  std::size_t loaded = 0;
};

/// Scan a DHG-layout tree. Missing files are reported, an entirely empty
/// tree is an error; a count short of spec.expected_count() is left to the
/// caller as a warning condition (report.missing carries the diff).
inline std::vector<SkeletonSequence> load_dhg(const std::filesystem::path& root,
                                              const DatasetSpec& spec = {},
                                              LoadReport* report = nullptr,
                                              const std::string& tmpl = kDhgPathTemplate) {
  std::vector<SkeletonSequence> out;
  LoadReport local;
  for (std::size_t g = 1; g <= spec.gestures; ++g) {
    for (std::size_t f = 1; f <= spec.fingers; ++f) {
      for (std::size_t s = 1; s <= spec.subjects; ++s) {
        for (std::size_t t = 1; t <= spec.trials; ++t) {
          const std::string rel = dhg_relative_path(tmpl, g, f, s, t);
          const std::filesystem::path path = root / rel;
          if (!std::filesystem::exists(path)) {
            local.missing.push_back(rel);
            continue;
          }
          SkeletonSequence seq;
          seq.values = parse_skeleton_file(path);
          seq.gesture = static_cast<int>(g);
          seq.finger = static_cast<int>(f);
          seq.subject = static_cast<int>(s);
          seq.trial = static_cast<int>(t);
          out.push_back(std::move(seq));
        }
      }
    }
  }
  local.loaded = out.size();
  if (report) *report = local;
  if (out.empty()) {
    throw IoError("no skeleton files found under " + root.string() + " (expected " +
                  std::to_string(spec.expected_count()) + ")");
  }
  return out;
}

inline void write_dhg_layout(const std::filesystem::path& root,
                             const std::vector<SkeletonSequence>& sequences,
                             const std::string& tmpl = kDhgPathTemplate) {
  for (const auto& s : sequences) {
    const std::string rel =
        dhg_relative_path(tmpl, static_cast<std::size_t>(s.gesture),
                          static_cast<std::size_t>(s.finger), static_cast<std::size_t>(s.subject),
                          static_cast<std::size_t>(s.trial));
    write_skeleton_file(root / rel, s.values);
  }
}

// ---------------------------------------------------------------------------
// Windowing
// ---------------------------------------------------------------------------

/// Uniform linear resampling of every coordinate channel onto `target`
/// equally spaced positions spanning [first, last] frame. Identity on
/// sequences already at the target length.
inline std::vector<double> resample_frames(const std::vector<double>& values, std::size_t target) {
  const std::size_t frames = values.size() / kFrameDim;
  if (frames < 2) throw ConfigError("resample: sequence must have at least 2 frames");
  if (target < 2) throw ConfigError("resample: target must be at least 2 frames");
  std::vector<double> out(target * kFrameDim);
  const double step = static_cast<double>(frames - 1) / static_cast<double>(target - 1);
  for (std::size_t i = 0; i < target; ++i) {
    const double pos = static_cast<double>(i) * step;
    const std::size_t lo = std::min(static_cast<std::size_t>(pos), frames - 1);
    const std::size_t hi = std::min(lo + 1, frames - 1);
    const double frac = pos - static_cast<double>(lo);
    for (std::size_t d = 0; d < kFrameDim; ++d) {
      out[i * kFrameDim + d] =
          (1.0 - frac) * values[lo * kFrameDim + d] + frac * values[hi * kFrameDim + d];
    }
  }
  return out;
}

inline std::vector<double> resample_to_window(const SkeletonSequence& seq,
                                              std::size_t target = 64) {
  return resample_frames(seq.values, target);
}

/// Optional preprocessing: subtract the per-axis mean over the whole
/// sequence (off by default in the pipeline).
inline SkeletonSequence center_sequence(SkeletonSequence seq) {
  double mean[3] = {0.0, 0.0, 0.0};
  for (std::size_t i = 0; i < seq.values.size(); ++i) mean[i % 3] += seq.values[i];
  for (double& m : mean) m /= static_cast<double>(seq.values.size() / 3);
  for (std::size_t i = 0; i < seq.values.size(); ++i) seq.values[i] -= mean[i % 3];
  return seq;
}

// ---------------------------------------------------------------------------
// Leave-one-subject-out folds
// ---------------------------------------------------------------------------

/// One LOOCV fold. Train/validation index into the augmented record list,
/// test indexes into the original sequences.
struct FoldSplit {
  int held_out_subject = 0;
  std::vector<std::size_t> train;       // augmented, subject != held out
  std::vector<std::size_t> validation;  // augmented, subject == held out
  std::vector<std::size_t> test;        // originals only, subject == held out
};

/// Build one fold per subject. `augmented_subjects` carries the subject of
/// every augmented record (provenance-copied, so leakage is structural).
inline std::vector<FoldSplit> loocv_folds(const std::vector<SkeletonSequence>& originals,
                                          const std::vector<int>& augmented_subjects,
                                          const std::vector<int>& subjects) {
  std::vector<FoldSplit> folds;
  for (int held : subjects) {
    bool present = false;
    for (const auto& s : originals) {
      if (s.subject == held) {
        present = true;
        break;
      }
    }
    if (!present) {
      throw ConfigError("loocv: subject " + std::to_string(held) + " absent from the dataset");
    }
    FoldSplit fold;
    fold.held_out_subject = held;
    for (std::size_t i = 0; i < augmented_subjects.size(); ++i) {
      (augmented_subjects[i] == held ? fold.validation : fold.train).push_back(i);
    }
    for (std::size_t i = 0; i < originals.size(); ++i) {
      if (originals[i].subject == held) fold.test.push_back(i);
    }
    folds.push_back(std::move(fold));
  }
  return folds;
}

inline std::vector<int> all_subjects(const DatasetSpec& spec) {
  std::vector<int> s(spec.subjects);
  for (std::size_t i = 0; i < s.size(); ++i) s[i] = static_cast<int>(i + 1);
  return s;
}

// ---------------------------------------------------------------------------
// Synthetic desk-scale generator
// ---------------------------------------------------------------------------

namespace detail {

/// Fixed 22-joint hand template: wrist, palm, then 5 fingers x 4 joints.
inline std::array<std::array<double, 3>, kJointCount> hand_template() {
  std::array<std::array<double, 3>, kJointCount> joints{};
  joints[0] = {0.0, -0.05, 0.0};  // wrist
  joints[1] = {0.0, 0.0, 0.0};    // palm
  const double angles[5] = {-0.55, -0.22, 0.05, 0.32, 0.58};
  const double radii[4] = {0.08, 0.11, 0.14, 0.17};
  for (std::size_t f = 0; f < 5; ++f) {
    for (std::size_t j = 0; j < 4; ++j) {
      const std::size_t idx = 2 + f * 4 + j;
      joints[idx] = {radii[j] * std::sin(angles[f]), radii[j] * std::cos(angles[f]),
                     0.01 * static_cast<double>(j)};
    }
  }
  return joints;
}

inline double smoothstep(double t) { return t * t * (3.0 - 2.0 * t); }

}  // namespace detail

/// Parametric gesture trajectories in the DHG label space: contraction for
/// grab/pinch-like classes, expansion, z-dip taps, planar rotations, straight
/// and compound swipes, oscillation for shake. Deterministic under the seed;
/// lengths vary per trial so resampling is exercised.
inline std::vector<SkeletonSequence> synth_dataset(std::size_t num_classes, std::size_t subjects,
                                                   std::size_t trials, std::uint64_t seed) {
  if (num_classes < 1 || num_classes > 14) {
    throw ConfigError("synth: num_classes must lie in 1..14");
  }
  if (subjects < 1 || trials < 1) throw ConfigError("synth: subjects and trials must be >= 1");
  const auto base = detail::hand_template();
  std::vector<SkeletonSequence> out;
  out.reserve(num_classes * subjects * trials);

  for (std::size_t g = 1; g <= num_classes; ++g) {
    for (std::size_t s = 1; s <= subjects; ++s) {
      Rng subject_rng(Rng::derive(seed, 0x73756263ULL, s));
      const double off_x = subject_rng.uniform(-0.15, 0.15);
      const double off_y = subject_rng.uniform(-0.15, 0.15);
      const double off_z = subject_rng.uniform(-0.08, 0.08);
      const double size = subject_rng.uniform(0.85, 1.15);
      for (std::size_t t = 1; t <= trials; ++t) {
        Rng rng(Rng::derive(seed, g, s, t));
        const std::size_t frames = 40 + rng.below(41);  // 40..80
        const double speed = rng.uniform(0.9, 1.1);
        const double noise = 0.004;
        SkeletonSequence seq;
        seq.gesture = static_cast<int>(g);
        seq.subject = static_cast<int>(s);
        seq.finger = 1;
        seq.trial = static_cast<int>(t);
        seq.values.resize(frames * kFrameDim);
        for (std::size_t fr = 0; fr < frames; ++fr) {
          const double u = static_cast<double>(fr) / static_cast<double>(frames - 1);
          const double p = detail::smoothstep(std::min(1.0, u * speed));
          for (std::size_t j = 0; j < kJointCount; ++j) {
            double x = base[j][0] * size, y = base[j][1] * size, z = base[j][2] * size;
            const bool fingertip = j >= 2 && ((j - 2) % 4) >= 2;  // outer two joints
            switch (g) {
              case 1:  // Grab: all fingers close toward the palm
                if (j >= 2) {
                  x *= 1.0 - 0.55 * p;
                  y *= 1.0 - 0.55 * p;
                }
                break;
              case 2:  // Tap: whole hand dips along z and returns
                z -= 0.18 * std::sin(3.14159265358979 * u);
                break;
              case 3:  // Expand: fingers spread outward
                if (j >= 2) {
                  x *= 1.0 + 0.5 * p;
                  y *= 1.0 + 0.5 * p;
                }
                break;
              case 4:  // Pinch: thumb and index tips converge, small amplitude
                if (j >= 2 && j <= 9 && fingertip) {
                  x *= 1.0 - 0.4 * p;
                  y *= 1.0 - 0.4 * p;
                }
                break;
              case 5: {  // Rotation clockwise about the palm normal
                const double a = -1.3 * p;
                const double rx = x * std::cos(a) - y * std::sin(a);
                const double ry = x * std::sin(a) + y * std::cos(a);
                x = rx;
                y = ry;
                break;
              }
              case 6: {  // Rotation counter-clockwise
                const double a = 1.3 * p;
                const double rx = x * std::cos(a) - y * std::sin(a);
                const double ry = x * std::sin(a) + y * std::cos(a);
                x = rx;
                y = ry;
                break;
              }
              case 7:
                x += 0.4 * p;  // Swipe right
                break;
              case 8:
                x -= 0.4 * p;  // Swipe left
                break;
              case 9:
                y += 0.4 * p;  // Swipe up
                break;
              case 10:
                y -= 0.4 * p;  // Swipe down
                break;
              case 11:  // Swipe X: diagonal with a crossing zigzag
                x += 0.35 * p;
                y += 0.35 * (u < 0.5 ? -2.0 * u : 2.0 * u - 2.0);
                break;
              case 12:  // Swipe V: down then up while drifting right
                x += 0.3 * p;
                y -= 0.35 * (u < 0.5 ? 2.0 * u : 2.0 * (1.0 - u));
                break;
              case 13:  // Swipe +: horizontal stroke then vertical stroke
                if (u < 0.5) {
                  x += 0.4 * detail::smoothstep(u * 2.0);
                } else {
                  x += 0.4;
                  y += 0.4 * detail::smoothstep((u - 0.5) * 2.0);
                }
                break;
              case 14:
                x += 0.13 * std::sin(12.566370614359172 * u);  // Shake: two full wobbles
                break;
              default:
                break;
            }
            seq.values[fr * kFrameDim + j * 3 + 0] = x + off_x + rng.normal(0.0, noise);
            seq.values[fr * kFrameDim + j * 3 + 1] = y + off_y + rng.normal(0.0, noise);
            seq.values[fr * kFrameDim + j * 3 + 2] = z + off_z + rng.normal(0.0, noise);
          }
        }
        out.push_back(std::move(seq));
      }
    }
  }
  return out;
}

/// Sanity metric for generated data: classify held-out trials by nearest
/// class centroid over resampled flattened windows. Trains on even trials,
/// tests on odd trials.
inline double nearest_centroid_accuracy(const std::vector<SkeletonSequence>& data,
                                        std::size_t window = 32) {
  if (data.empty()) return 0.0;
  int max_label = 0;
  for (const auto& s : data) max_label = std::max(max_label, s.label14());
  const std::size_t classes = static_cast<std::size_t>(max_label) + 1;
  const std::size_t dim = window * kFrameDim;
  std::vector<std::vector<double>> centroid(classes, std::vector<double>(dim, 0.0));
  std::vector<std::size_t> counts(classes, 0);
  for (const auto& s : data) {
    if (s.trial % 2 != 0) continue;
    const auto w = resample_to_window(s, window);
    auto& c = centroid[static_cast<std::size_t>(s.label14())];
    for (std::size_t i = 0; i < dim; ++i) c[i] += w[i];
    ++counts[static_cast<std::size_t>(s.label14())];
  }
  for (std::size_t k = 0; k < classes; ++k) {
    if (counts[k]) {
      for (double& v : centroid[k]) v /= static_cast<double>(counts[k]);
    }
  }
  std::size_t correct = 0, total = 0;
  for (const auto& s : data) {
    if (s.trial % 2 == 0) continue;
    const auto w = resample_to_window(s, window);
    double best = 1e300;
    std::size_t best_k = 0;
    for (std::size_t k = 0; k < classes; ++k) {
      if (!counts[k]) continue;
      double d = 0.0;
      for (std::size_t i = 0; i < dim; ++i) {
        const double diff = w[i] - centroid[k][i];
        d += diff * diff;
      }
      if (d < best) {
        best = d;
        best_k = k;
      }
    }
    correct += (best_k == static_cast<std::size_t>(s.label14()));
    ++total;
  }
  return total ? static_cast<double>(correct) / static_cast<double>(total) : 0.0;
}

}  // namespace gestnet
