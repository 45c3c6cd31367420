#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "physprior/numkit/nn.hpp"

namespace physprior::cli {

// Layout, all integers little-endian:
//   8-byte magic "PHYSPRCK", u8 version, u8 family tag,
//   hyperparameters: u32 count, then (string key, string value) pairs,
//   parameters: u32 count, then (string name, u32 rank, u64 dims..., f64 values...),
//   u64 master seed,
//   metadata: u32 count, then (string key, string value) pairs.
// Strings are a u32 byte length followed by the bytes.
inline constexpr char kCheckpointMagic[9] = "PHYSPRCK";
inline constexpr std::uint8_t kCheckpointVersion = 1;

enum class FamilyTag : std::uint8_t {
  TaylorNet = 1,
  OdeNet = 2,
  Nssnn = 3,
  Hrk = 4,
  RoeNet = 5,
  VortexDynamics = 6,
};

FamilyTag family_tag(const std::string& family);
std::string family_from_tag(FamilyTag tag);

using KeyValues = std::vector<std::pair<std::string, std::string>>;

struct Checkpoint {
  FamilyTag family = FamilyTag::TaylorNet;
  KeyValues hyperparameters;
  std::vector<std::string> names;
  std::vector<numkit::Tensor> values;
  std::uint64_t seed = 0;
  KeyValues metadata;
};

Checkpoint make_checkpoint(FamilyTag family, KeyValues hyper, const numkit::ParameterSet& ps, std::uint64_t seed,
                           KeyValues metadata);

std::string serialize_checkpoint(const Checkpoint& ck);
// Throws IoError on a bad magic, unknown version or tag, or truncation.
Checkpoint deserialize_checkpoint(const std::string& bytes);

void save_checkpoint(const std::string& path, const Checkpoint& ck);
Checkpoint load_checkpoint(const std::string& path);

// Copies the stored arrays into ps, checking names and shapes in declared order.
void restore_parameters(const Checkpoint& ck, numkit::ParameterSet& ps);

std::string lookup(const KeyValues& kv, const std::string& key);

}  // namespace physprior::cli
