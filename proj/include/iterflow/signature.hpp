#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <set>
#include <span>
#include <string>
#include <string_view>

#include "iterflow/workflow.hpp"

namespace iterflow {

// Recorded in the cache manifest; a different value invalidates every entry.
inline constexpr std::string_view kHashAlgorithm = "sha256";

// Incremental SHA-256 over arbitrary byte streams.
class Sha256 {
 public:
  Sha256();
  ~Sha256();
  Sha256(const Sha256&) = delete;
  Sha256& operator=(const Sha256&) = delete;

  Sha256& update(std::span<const std::byte> bytes);
  Sha256& update(std::string_view text);
  std::array<std::uint8_t, 32> finish();
  std::string finish_hex();

  static std::string hex(std::string_view text);

 private:
  void* ctx_;
};

// Cross-iteration identity of an intermediate: 64 lowercase hex characters.
struct NodeSignature {
  std::string value;

  auto operator<=>(const NodeSignature&) const = default;
};

using SignatureMap = std::map<std::string, NodeSignature>;

// Canonical text of an operator's definition (everything that affects what it
// computes). Independent of node declaration order and of the `kind` label.
std::string canonical_definition(const OperatorNode& node);

// Streams a file through SHA-256. Throws MissingSource if it cannot be read.
std::string hash_file(const std::filesystem::path& path);

// One signature per node. Source paths resolve against `workspace`.
SignatureMap compute_signatures(const WorkflowSpec& spec, const std::filesystem::path& workspace);

struct ChangeSet {
  std::set<std::string> changed;    // must be recomputed
  std::set<std::string> unchanged;
  std::set<std::string> added;      // not present last iteration
  std::set<std::string> deleted;    // present last iteration only

  bool empty() const noexcept { return changed.empty() && deleted.empty(); }
  bool operator==(const ChangeSet&) const = default;
};

ChangeSet diff_iterations(const SignatureMap& previous, const SignatureMap& current);

}  // namespace iterflow
