#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "iterflow/cost.hpp"
#include "iterflow/signature.hpp"

namespace iterflow {

inline constexpr int kManifestFormatVersion = 1;

struct CacheEntry {
  NodeSignature signature;
  std::string node_name;
  std::string payload_path;  // relative to the cache root
  std::int64_t output_bytes = 0;
  double measured_compute_seconds = 0.0;
  std::optional<double> measured_load_seconds;
  std::string created_at;  // informational, ISO-8601 UTC

  bool operator==(const CacheEntry&) const = default;
};

struct CacheManifest {
  int format_version = kManifestFormatVersion;
  std::string hash_algorithm{kHashAlgorithm};
  std::map<std::string, CacheEntry> entries;  // keyed by signature value
  SignatureMap previous_signatures;           // last successful iteration
  CostMap cost_history;

  const CacheEntry* find(const NodeSignature& sig) const;
  std::int64_t total_bytes() const;
  bool operator==(const CacheManifest&) const = default;
};

std::string manifest_to_json(const CacheManifest& manifest);
CacheManifest manifest_from_json(std::string_view text);  // VersionMismatch, SyntaxError

// Every durability boundary inside put(); a fault hook may throw at any of them
// to emulate a crash at that point.
enum class WriteStep {
  ObjectsDirReady,
  PayloadTempOpened,
  PayloadHalfWritten,
  PayloadWritten,
  PayloadSynced,
  PayloadRenamed,
  PayloadDirSynced,
  ManifestTempOpened,
  ManifestHalfWritten,
  ManifestWritten,
  ManifestSynced,
  ManifestRenamed,
  RootDirSynced,
};
inline constexpr std::size_t kWriteStepCount = 13;
std::string_view to_string(WriteStep step) noexcept;

using FaultHook = std::function<void(WriteStep)>;

// Missing manifest reads as an empty one.
CacheManifest load_manifest(const std::filesystem::path& cache_root);
// Atomic replace of <cache_root>/manifest.json.
void save_manifest(const std::filesystem::path& cache_root, const CacheManifest& manifest,
                   const FaultHook& hook = {});

// Where a payload comes from.
struct FilePayload {
  std::filesystem::path path;
};
// `bytes` zero bytes, stored sparsely; stands in for the output of a simulated operator.
struct SyntheticPayload {
  std::int64_t bytes = 0;
};
using PayloadSource = std::variant<std::span<const std::byte>, FilePayload, SyntheticPayload>;

struct PayloadHandle {
  std::filesystem::path path;
  std::int64_t bytes = 0;
  double load_seconds = 0.0;
};

struct LoadOptions {
  // Copy the payload here (the load itself).
  std::optional<std::filesystem::path> copy_to;
  // Record this instead of the measured wall time (virtual clock).
  std::optional<double> charged_seconds;
};

struct RecoveryReport {
  std::vector<std::string> removed_temp_files;
  std::vector<std::string> removed_orphans;
  std::vector<std::string> dropped_entries;
};

// Content-addressed store rooted at one directory:
//   <root>/manifest.json
//   <root>/objects/<first 2 hex>/<signature>.bin
//   <root>/.lock
// A Writer holds an exclusive advisory lock for its lifetime; ReadOnly opens
// never create or modify anything.
class CacheStore {
 public:
  enum class Mode { ReadOnly, Writer };

  static CacheStore open(const std::filesystem::path& root, Mode mode);

  CacheStore(CacheStore&& other) noexcept;
  CacheStore& operator=(CacheStore&& other) noexcept;
  CacheStore(const CacheStore&) = delete;
  CacheStore& operator=(const CacheStore&) = delete;
  ~CacheStore();

  const std::filesystem::path& root() const noexcept { return root_; }
  Mode mode() const noexcept { return mode_; }
  const CacheManifest& manifest() const noexcept { return manifest_; }
  const CacheEntry* find(const NodeSignature& sig) const { return manifest_.find(sig); }
  const RecoveryReport& recovery() const noexcept { return recovery_; }

  // Durably stores the payload, then the manifest. Storing an existing
  // signature again with the same size is a no-op.
  CacheEntry put(const NodeSignature& sig, const std::string& node_name, const PayloadSource& payload,
                 double measured_compute_seconds);

  // Verifies the entry against its payload (NotFound, CorruptEntry), optionally
  // copies it out, and folds the load time into the entry (EMA, alpha = 0.5).
  PayloadHandle get(const NodeSignature& sig, const LoadOptions& options = {});

  // Replace previous_signatures / cost_history and persist.
  void record_iteration(const SignatureMap* signatures, const CostMap& cost_updates);

  // Drops entries whose signature is not among previous_signatures.
  std::vector<std::string> gc_keep_latest();

  void set_fault_hook(FaultHook hook) { hook_ = std::move(hook); }

  // Holder text from the lock file ("pid 1234"), if any.
  static std::string lock_holder(const std::filesystem::path& root);

 private:
  CacheStore(std::filesystem::path root, Mode mode);
  void require_writer(const char* op) const;
  void recover();
  void commit();
  void step(WriteStep s) const;
  void release() noexcept;

  std::filesystem::path root_;
  Mode mode_ = Mode::ReadOnly;
  int lock_fd_ = -1;
  CacheManifest manifest_;
  RecoveryReport recovery_;
  FaultHook hook_;
};

std::string payload_relative_path(const NodeSignature& sig);

}  // namespace iterflow
