#include "physprior/cli/checkpoint.hpp"

#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <sstream>

#include "physprior/error.hpp"

namespace physprior::cli {

FamilyTag family_tag(const std::string& family) {
  if (family == "taylor-net") return FamilyTag::TaylorNet;
  if (family == "ode-rk4") return FamilyTag::OdeNet;
  if (family == "nssnn") return FamilyTag::Nssnn;
  if (family == "hrk") return FamilyTag::Hrk;
  if (family == "roenet") return FamilyTag::RoeNet;
  if (family == "vortex-dynamics") return FamilyTag::VortexDynamics;
  throw ConfigError("no checkpoint tag for family '" + family + "'");
}

std::string family_from_tag(FamilyTag tag) {
  switch (tag) {
    case FamilyTag::TaylorNet: return "taylor-net";
    case FamilyTag::OdeNet: return "ode-rk4";
    case FamilyTag::Nssnn: return "nssnn";
    case FamilyTag::Hrk: return "hrk";
    case FamilyTag::RoeNet: return "roenet";
    case FamilyTag::VortexDynamics: return "vortex-dynamics";
  }
  throw IoError("checkpoint: unknown family tag " + std::to_string(static_cast<int>(tag)));
}

Checkpoint make_checkpoint(FamilyTag family, KeyValues hyper, const numkit::ParameterSet& ps, std::uint64_t seed,
                           KeyValues metadata) {
  Checkpoint ck;
  ck.family = family;
  ck.hyperparameters = std::move(hyper);
  ck.names = ps.names();
  ck.values = ps.values();
  ck.seed = seed;
  ck.metadata = std::move(metadata);
  return ck;
}

namespace {

void put_u(std::string& out, std::uint64_t v, int bytes) {
  for (int i = 0; i < bytes; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
}

void put_str(std::string& out, const std::string& s) {
  put_u(out, s.size(), 4);
  out += s;
}

void put_kv(std::string& out, const KeyValues& kv) {
  put_u(out, kv.size(), 4);
  for (const auto& [k, v] : kv) {
    put_str(out, k);
    put_str(out, v);
  }
}

struct Reader {
  const std::string& b;
  std::size_t pos = 0;

  void need(std::size_t n) {
    if (b.size() - pos < n) throw IoError("checkpoint: truncated at byte " + std::to_string(pos));
  }
  std::uint64_t u(int bytes) {
    need(static_cast<std::size_t>(bytes));
    std::uint64_t v = 0;
    for (int i = 0; i < bytes; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(b[pos + i])) << (8 * i);
    pos += static_cast<std::size_t>(bytes);
    return v;
  }
  std::string str() {
    std::size_t n = u(4);
    need(n);
    std::string s = b.substr(pos, n);
    pos += n;
    return s;
  }
  KeyValues kv() {
    std::size_t n = u(4);
    KeyValues out;
    for (std::size_t i = 0; i < n; ++i) {
      std::string k = str();
      out.emplace_back(k, str());
    }
    return out;
  }
};

}  // namespace

std::string serialize_checkpoint(const Checkpoint& ck) {
  if (ck.names.size() != ck.values.size()) throw IoError("checkpoint: names and values differ in count");
  std::string out(kCheckpointMagic, 8);
  out.push_back(static_cast<char>(kCheckpointVersion));
  out.push_back(static_cast<char>(ck.family));
  put_kv(out, ck.hyperparameters);
  put_u(out, ck.values.size(), 4);
  for (std::size_t i = 0; i < ck.values.size(); ++i) {
    const auto& t = ck.values[i];
    put_str(out, ck.names[i]);
    put_u(out, t.rank(), 4);
    for (auto d : t.shape()) put_u(out, d, 8);
    for (double x : t.values()) {
      std::uint64_t bits = 0;
      std::memcpy(&bits, &x, sizeof bits);
      put_u(out, bits, 8);
    }
  }
  put_u(out, ck.seed, 8);
  put_kv(out, ck.metadata);
  return out;
}

Checkpoint deserialize_checkpoint(const std::string& bytes) {
  Reader r{bytes};
  r.need(10);
  if (bytes.compare(0, 8, kCheckpointMagic, 8) != 0) throw IoError("checkpoint: bad magic");
  r.pos = 8;
  auto version = static_cast<std::uint8_t>(r.u(1));
  if (version != kCheckpointVersion)
    throw IoError("checkpoint: unsupported format version " + std::to_string(static_cast<int>(version)));
  Checkpoint ck;
  ck.family = static_cast<FamilyTag>(r.u(1));
  family_from_tag(ck.family);
  ck.hyperparameters = r.kv();
  std::size_t n = r.u(4);
  for (std::size_t i = 0; i < n; ++i) {
    ck.names.push_back(r.str());
    std::size_t rank = r.u(4);
    numkit::Shape shape;
    std::size_t count = 1;
    for (std::size_t k = 0; k < rank; ++k) {
      shape.push_back(r.u(8));
      count *= shape.back();
    }
    r.need(count * 8);
    std::vector<double> data(count);
    for (auto& x : data) {
      std::uint64_t bits = r.u(8);
      std::memcpy(&x, &bits, sizeof x);
    }
    ck.values.emplace_back(shape, std::move(data));
  }
  ck.seed = r.u(8);
  ck.metadata = r.kv();
  if (r.pos != bytes.size()) throw IoError("checkpoint: trailing bytes after metadata");
  return ck;
}

void save_checkpoint(const std::string& path, const Checkpoint& ck) {
  std::string bytes = serialize_checkpoint(ck);
  std::string tmp = path + ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw IoError("cannot write " + tmp);
    os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!os) throw IoError("short write to " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot read checkpoint " + path);
  std::string bytes((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  return deserialize_checkpoint(bytes);
}

void restore_parameters(const Checkpoint& ck, numkit::ParameterSet& ps) {
  if (ck.values.size() != ps.size())
    throw IoError("checkpoint holds " + std::to_string(ck.values.size()) + " arrays, model declares " +
                  std::to_string(ps.size()));
  for (std::size_t i = 0; i < ps.size(); ++i) {
    if (ck.names[i] != ps.name(i))
      throw IoError("checkpoint array " + std::to_string(i) + " is '" + ck.names[i] + "', model expects '" +
                    ps.name(i) + "'");
    if (ck.values[i].shape() != ps[i].shape())
      throw IoError("checkpoint array '" + ck.names[i] + "' has shape " + numkit::shape_str(ck.values[i].shape()) +
                    ", model expects " + numkit::shape_str(ps[i].shape()));
    ps[i] = ck.values[i];
  }
}

std::string lookup(const KeyValues& kv, const std::string& key) {
  for (const auto& [k, v] : kv)
    if (k == key) return v;
  throw IoError("checkpoint: missing key '" + key + "'");
}

}  // namespace physprior::cli
