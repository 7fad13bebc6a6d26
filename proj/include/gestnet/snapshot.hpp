#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "gestnet/nn.hpp"

namespace gestnet {

/// Cycle metadata carried by every snapshot.
struct SnapshotMeta {
  std::size_t cycle = 0;         // 1-based cycle index
  std::size_t epochs_done = 0;   // global epochs completed when saved
  std::uint64_t seed = 0;        // run seed
  std::uint64_t rng_state = 0;   // model generator state at save time
};

/// On-disk store of per-cycle parameter snapshots:
///
///   <root>/cycle_<k>/manifest.txt   one record per tensor: name, shape,
///                                   byte offset, element count
///   <root>/cycle_<k>/params.bin     little-endian float64 blob
///
/// Writes are atomic (temp file + rename); load(save(m)) reproduces every
/// parameter bit for bit. Snapshots are never overwritten by evaluation.
class SnapshotStore {
 public:
  explicit SnapshotStore(std::filesystem::path root) : root_(std::move(root)) {}

  const std::filesystem::path& root() const { return root_; }

  std::filesystem::path cycle_dir(std::size_t cycle) const {
    return root_ / ("cycle_" + std::to_string(cycle));
  }

  std::size_t count() const {
    std::size_t n = 0;
    while (std::filesystem::exists(cycle_dir(n + 1) / "manifest.txt")) ++n;
    return n;
  }

  void save(const ParamRegistry& reg, const SnapshotMeta& meta) const {
    namespace fs = std::filesystem;
    const fs::path dir = cycle_dir(meta.cycle);
    fs::create_directories(dir);

    // blob first, then the manifest that references it
    std::vector<double> blob;
    std::ostringstream manifest;
    manifest << "gestnet-snapshot v1\n";
    manifest << "cycle " << meta.cycle << "\n";
    manifest << "epochs_done " << meta.epochs_done << "\n";
    manifest << "seed " << meta.seed << "\n";
    manifest << "rng_state " << meta.rng_state << "\n";
    manifest << "dtype f64\n";
    const auto append = [&](const std::string& name, const Shape& shape,
                            const std::vector<double>& values) {
      manifest << "tensor " << name << " " << dims_str(shape) << " "
               << blob.size() * sizeof(double) << " " << values.size() << "\n";
      blob.insert(blob.end(), values.begin(), values.end());
    };
    for (const auto& p : reg.params()) append(p.name, p.tensor.shape(), p.tensor.values());
    for (const auto& s : reg.states()) append(s.name, Shape{s.data->size()}, *s.data);

    write_atomic(dir / "params.bin",
                 std::string_view(reinterpret_cast<const char*>(blob.data()),
                                  blob.size() * sizeof(double)));
    write_atomic(dir / "manifest.txt", manifest.str());
  }

  /// Restore a snapshot into a model registry. Every manifest record must
  /// match the registry entry by name and shape.
  SnapshotMeta load(std::size_t cycle, ParamRegistry& reg) const {
    namespace fs = std::filesystem;
    const fs::path dir = cycle_dir(cycle);
    if (!fs::exists(dir / "manifest.txt")) {
      throw IoError("snapshot manifest missing: " + (dir / "manifest.txt").string());
    }
    std::ifstream mf(dir / "manifest.txt");
    std::string header;
    std::getline(mf, header);
    if (header != "gestnet-snapshot v1") {
      throw ParseError("unrecognized snapshot header: '" + header + "'");
    }
    SnapshotMeta meta;
    struct Record {
      std::string name;
      Shape shape;
      std::size_t offset = 0, count = 0;
    };
    std::vector<Record> records;
    std::string line;
    while (std::getline(mf, line)) {
      if (line.empty()) continue;
      std::istringstream ls(line);
      std::string key;
      ls >> key;
      if (key == "cycle") {
        ls >> meta.cycle;
      } else if (key == "epochs_done") {
        ls >> meta.epochs_done;
      } else if (key == "seed") {
        ls >> meta.seed;
      } else if (key == "rng_state") {
        ls >> meta.rng_state;
      } else if (key == "dtype") {
        std::string dtype;
        ls >> dtype;
        if (dtype != "f64") throw ParseError("snapshot dtype must be f64, got " + dtype);
      } else if (key == "tensor") {
        Record r;
        std::string dims;
        ls >> r.name >> dims >> r.offset >> r.count;
        if (ls.fail()) throw ParseError("malformed tensor record: '" + line + "'");
        r.shape = parse_dims(dims);
        records.push_back(std::move(r));
      } else {
        throw ParseError("unknown manifest key: '" + key + "'");
      }
    }

    std::ifstream bf(dir / "params.bin", std::ios::binary);
    if (!bf) throw IoError("snapshot blob missing: " + (dir / "params.bin").string());

    std::size_t consumed = 0;
    auto& params = reg.params();
    const auto& states = reg.states();
    if (records.size() != params.size() + states.size()) {
      throw ShapeError("snapshot holds " + std::to_string(records.size()) +
                       " tensors, model expects " +
                       std::to_string(params.size() + states.size()));
    }
    for (std::size_t i = 0; i < records.size(); ++i) {
      const Record& r = records[i];
      std::vector<double> buf(r.count);
      bf.seekg(static_cast<std::streamoff>(r.offset));
      bf.read(reinterpret_cast<char*>(buf.data()),
              static_cast<std::streamsize>(r.count * sizeof(double)));
      if (!bf) throw IoError("snapshot blob truncated at tensor " + r.name);
      if (i < params.size()) {
        ParamEntry& p = params[i];
        if (p.name != r.name) {
          throw ShapeError("snapshot tensor '" + r.name + "' does not match model entry '" +
                           p.name + "'");
        }
        if (p.tensor.shape() != r.shape || p.tensor.numel() != r.count) {
          throw ShapeError("shape mismatch for " + r.name + ": snapshot " + dims_str(r.shape) +
                           ", model " + dims_str(p.tensor.shape()));
        }
        p.tensor.mutable_values() = std::move(buf);
      } else {
        const StateEntry& s = states[i - params.size()];
        if (s.name != r.name) {
          throw ShapeError("snapshot state '" + r.name + "' does not match model entry '" +
                           s.name + "'");
        }
        if (s.data->size() != r.count) {
          throw ShapeError("size mismatch for state " + r.name);
        }
        *s.data = std::move(buf);
      }
      consumed += r.count;
    }
    (void)consumed;
    return meta;
  }

 private:
  static std::string dims_str(const Shape& s) {
    if (s.empty()) return "scalar";
    std::string out;
    for (std::size_t i = 0; i < s.size(); ++i) {
      if (i) out += 'x';
      out += std::to_string(s[i]);
    }
    return out;
  }

  static Shape parse_dims(const std::string& dims) {
    if (dims == "scalar") return {};
    Shape s;
    std::size_t pos = 0;
    while (pos < dims.size()) {
      std::size_t next = dims.find('x', pos);
      if (next == std::string::npos) next = dims.size();
      s.push_back(static_cast<std::size_t>(std::stoull(dims.substr(pos, next - pos))));
      pos = next + 1;
    }
    return s;
  }

  static void write_atomic(const std::filesystem::path& path, std::string_view contents) {
    namespace fs = std::filesystem;
    const fs::path tmp = path.string() + ".tmp";
    {
      std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
      if (!out) throw IoError("cannot write " + tmp.string());
      out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
      if (!out) throw IoError("short write to " + tmp.string());
    }
    fs::rename(tmp, path);
  }

  std::filesystem::path root_;
};

}  // namespace gestnet
