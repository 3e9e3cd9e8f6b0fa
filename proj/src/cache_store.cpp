#include "iterflow/cache_store.hpp"

#include <fcntl.h>
#include <sys/file.h>
#include <sys/stat.h>
#include <unistd.h>

#include <cerrno>
#include <chrono>
#include <cstring>
#include <ctime>
#include <fstream>
#include <set>
#include <sstream>

#include "iterflow/error.hpp"
#include "json.hpp"

namespace iterflow {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kManifestName = "manifest.json";
constexpr const char* kLockName = ".lock";
constexpr const char* kObjectsDir = "objects";
constexpr std::string_view kTempMarker = ".tmp";

[[noreturn]] void io_fail(const std::string& what, const fs::path& path) {
  throw IoError(what + " '" + path.string() + "': " + std::strerror(errno));
}

// Owns a POSIX file descriptor.
class Fd {
 public:
  Fd() = default;
  explicit Fd(int fd) : fd_(fd) {}
  Fd(Fd&& o) noexcept : fd_(std::exchange(o.fd_, -1)) {}
  Fd& operator=(Fd&& o) noexcept {
    if (this != &o) {
      reset();
      fd_ = std::exchange(o.fd_, -1);
    }
    return *this;
  }
  ~Fd() { reset(); }
  int get() const noexcept { return fd_; }
  explicit operator bool() const noexcept { return fd_ >= 0; }
  void reset() noexcept {
    if (fd_ >= 0) ::close(fd_);
    fd_ = -1;
  }

 private:
  int fd_ = -1;
};

Fd open_or_throw(const fs::path& path, int flags, mode_t mode = 0644) {
  int fd = ::open(path.c_str(), flags | O_CLOEXEC, mode);
  if (fd < 0) io_fail("cannot open", path);
  return Fd(fd);
}

void write_all(int fd, const char* data, std::size_t size, const fs::path& path) {
  while (size > 0) {
    ssize_t n = ::write(fd, data, size);
    if (n < 0) {
      if (errno == EINTR) continue;
      io_fail("write failed on", path);
    }
    data += n;
    size -= static_cast<std::size_t>(n);
  }
}

void sync_fd(int fd, const fs::path& path) {
  if (::fsync(fd) != 0) io_fail("fsync failed on", path);
}

void sync_dir(const fs::path& dir) {
  Fd fd = open_or_throw(dir, O_RDONLY | O_DIRECTORY);
  sync_fd(fd.get(), dir);
}

std::string utc_now() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::string temp_suffix() { return std::string(kTempMarker) + "." + std::to_string(::getpid()); }

bool is_temp_file(const fs::path& p) { return p.filename().string().find(kTempMarker) != std::string::npos; }

json optional_seconds(double s) { return std::isfinite(s) ? json(s) : json(nullptr); }

double seconds_or_inf(const json& j) { return j.is_null() ? kInfinity : j.get<double>(); }

}  // namespace

std::string_view to_string(WriteStep step) noexcept {
  switch (step) {
    case WriteStep::ObjectsDirReady: return "objects-dir-ready";
    case WriteStep::PayloadTempOpened: return "payload-temp-opened";
    case WriteStep::PayloadHalfWritten: return "payload-half-written";
    case WriteStep::PayloadWritten: return "payload-written";
    case WriteStep::PayloadSynced: return "payload-synced";
    case WriteStep::PayloadRenamed: return "payload-renamed";
    case WriteStep::PayloadDirSynced: return "payload-dir-synced";
    case WriteStep::ManifestTempOpened: return "manifest-temp-opened";
    case WriteStep::ManifestHalfWritten: return "manifest-half-written";
    case WriteStep::ManifestWritten: return "manifest-written";
    case WriteStep::ManifestSynced: return "manifest-synced";
    case WriteStep::ManifestRenamed: return "manifest-renamed";
    case WriteStep::RootDirSynced: return "root-dir-synced";
  }
  return "?";
}

std::string payload_relative_path(const NodeSignature& sig) {
  if (sig.value.size() < 3) throw CorruptEntry("malformed signature '" + sig.value + "'");
  return std::string(kObjectsDir) + "/" + sig.value.substr(0, 2) + "/" + sig.value + ".bin";
}

// ---- manifest ---------------------------------------------------------------

const CacheEntry* CacheManifest::find(const NodeSignature& sig) const {
  auto it = entries.find(sig.value);
  return it == entries.end() ? nullptr : &it->second;
}

std::int64_t CacheManifest::total_bytes() const {
  std::int64_t total = 0;
  for (const auto& [_, e] : entries) total += e.output_bytes;
  return total;
}

std::string manifest_to_json(const CacheManifest& m) {
  json doc;
  doc["format_version"] = m.format_version;
  doc["hash_algorithm"] = m.hash_algorithm;
  json entries = json::object();
  for (const auto& [key, e] : m.entries) {
    json j;
    j["signature"] = e.signature.value;
    j["node_name"] = e.node_name;
    j["payload_path"] = e.payload_path;
    j["output_bytes"] = e.output_bytes;
    j["measured_compute_seconds"] = e.measured_compute_seconds;
    j["measured_load_seconds"] = e.measured_load_seconds ? json(*e.measured_load_seconds) : json(nullptr);
    j["created_at"] = e.created_at;
    entries[key] = std::move(j);
  }
  doc["entries"] = std::move(entries);
  json prev = json::object();
  for (const auto& [name, sig] : m.previous_signatures) prev[name] = sig.value;
  doc["previous_signatures"] = std::move(prev);
  json history = json::object();
  for (const auto& [name, c] : m.cost_history) {
    history[name] = {{"compute_seconds", optional_seconds(c.compute_seconds)},
                     {"load_seconds", optional_seconds(c.load_seconds)},
                     {"output_bytes", c.output_bytes}};
  }
  doc["cost_history"] = std::move(history);
  return doc.dump(2) + "\n";
}

CacheManifest manifest_from_json(std::string_view text) {
  CacheManifest m;
  try {
    const json doc = json::parse(text.begin(), text.end());
    m.format_version = doc.at("format_version").get<int>();
    if (m.format_version > kManifestFormatVersion)
      throw VersionMismatch("manifest format_version " + std::to_string(m.format_version) +
                            " is newer than supported version " + std::to_string(kManifestFormatVersion));
    m.hash_algorithm = doc.at("hash_algorithm").get<std::string>();
    for (const auto& [key, j] : doc.at("entries").items()) {
      CacheEntry e;
      e.signature.value = j.at("signature").get<std::string>();
      e.node_name = j.at("node_name").get<std::string>();
      e.payload_path = j.at("payload_path").get<std::string>();
      e.output_bytes = j.at("output_bytes").get<std::int64_t>();
      e.measured_compute_seconds = j.at("measured_compute_seconds").get<double>();
      if (const auto& l = j.at("measured_load_seconds"); !l.is_null()) e.measured_load_seconds = l.get<double>();
      e.created_at = j.value("created_at", "");
      if (key != e.signature.value) throw SyntaxError("manifest entry key does not match its signature");
      m.entries.emplace(key, std::move(e));
    }
    for (const auto& [name, sig] : doc.at("previous_signatures").items())
      m.previous_signatures[name] = NodeSignature{sig.get<std::string>()};
    for (const auto& [name, c] : doc.at("cost_history").items()) {
      m.cost_history[name] = CostRecord{seconds_or_inf(c.at("compute_seconds")),
                                        seconds_or_inf(c.at("load_seconds")),
                                        c.at("output_bytes").get<std::int64_t>()};
    }
  } catch (const json::exception& e) {
    throw SyntaxError(std::string("malformed cache manifest: ") + e.what());
  }
  return m;
}

CacheManifest load_manifest(const fs::path& root) {
  const fs::path path = root / kManifestName;
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    if (!fs::exists(path)) return CacheManifest{};
    throw IoError("cannot read manifest '" + path.string() + "'");
  }
  std::ostringstream buf;
  buf << in.rdbuf();
  CacheManifest m = manifest_from_json(buf.str());
  if (m.hash_algorithm != kHashAlgorithm) {
    // Signatures from another hash function can never match again.
    m.entries.clear();
    m.previous_signatures.clear();
    m.hash_algorithm = std::string(kHashAlgorithm);
  }
  m.format_version = kManifestFormatVersion;
  return m;
}

void save_manifest(const fs::path& root, const CacheManifest& manifest, const FaultHook& hook) {
  auto step = [&](WriteStep s) {
    if (hook) hook(s);
  };
  const std::string text = manifest_to_json(manifest);
  const fs::path final_path = root / kManifestName;
  const fs::path temp_path = root / (std::string(kManifestName) + temp_suffix());
  {
    Fd fd = open_or_throw(temp_path, O_WRONLY | O_CREAT | O_TRUNC);
    step(WriteStep::ManifestTempOpened);
    const std::size_t half = text.size() / 2;
    write_all(fd.get(), text.data(), half, temp_path);
    step(WriteStep::ManifestHalfWritten);
    write_all(fd.get(), text.data() + half, text.size() - half, temp_path);
    step(WriteStep::ManifestWritten);
    sync_fd(fd.get(), temp_path);
    step(WriteStep::ManifestSynced);
  }
  if (::rename(temp_path.c_str(), final_path.c_str()) != 0) io_fail("cannot rename", temp_path);
  step(WriteStep::ManifestRenamed);
  sync_dir(root);
  step(WriteStep::RootDirSynced);
}

// ---- store --------------------------------------------------------------------

CacheStore::CacheStore(fs::path root, Mode mode) : root_(std::move(root)), mode_(mode) {}

CacheStore::CacheStore(CacheStore&& o) noexcept
    : root_(std::move(o.root_)),
      mode_(o.mode_),
      lock_fd_(std::exchange(o.lock_fd_, -1)),
      manifest_(std::move(o.manifest_)),
      recovery_(std::move(o.recovery_)),
      hook_(std::move(o.hook_)) {}

CacheStore& CacheStore::operator=(CacheStore&& o) noexcept {
  if (this != &o) {
    release();
    root_ = std::move(o.root_);
    mode_ = o.mode_;
    lock_fd_ = std::exchange(o.lock_fd_, -1);
    manifest_ = std::move(o.manifest_);
    recovery_ = std::move(o.recovery_);
    hook_ = std::move(o.hook_);
  }
  return *this;
}

CacheStore::~CacheStore() { release(); }

void CacheStore::release() noexcept {
  if (lock_fd_ >= 0) {
    ::flock(lock_fd_, LOCK_UN);
    ::close(lock_fd_);
    lock_fd_ = -1;
  }
}

std::string CacheStore::lock_holder(const fs::path& root) {
  std::ifstream in(root / kLockName);
  std::string line;
  std::getline(in, line);
  return line;
}

CacheStore CacheStore::open(const fs::path& root, Mode mode) {
  CacheStore store(root, mode);
  if (mode == Mode::ReadOnly) {
    store.manifest_ = load_manifest(root);
    return store;
  }

  std::error_code ec;
  fs::create_directories(root / kObjectsDir, ec);
  if (ec) throw IoError("cannot create cache root '" + root.string() + "': " + ec.message());

  const fs::path lock_path = root / kLockName;
  int fd = ::open(lock_path.c_str(), O_RDWR | O_CREAT | O_CLOEXEC, 0644);
  if (fd < 0) io_fail("cannot open lock file", lock_path);
  if (::flock(fd, LOCK_EX | LOCK_NB) != 0) {
    const int err = errno;
    ::close(fd);
    if (err == EWOULDBLOCK) throw LockContention(lock_path.string(), lock_holder(root));
    errno = err;
    io_fail("cannot lock", lock_path);
  }
  store.lock_fd_ = fd;
  const std::string holder = "pid " + std::to_string(::getpid()) + "\n";
  if (::ftruncate(fd, 0) == 0) write_all(fd, holder.data(), holder.size(), lock_path);

  store.manifest_ = load_manifest(root);
  store.recover();
  return store;
}

void CacheStore::require_writer(const char* op) const {
  if (mode_ != Mode::Writer) throw IoError(std::string(op) + " requires a writable cache");
}

void CacheStore::step(WriteStep s) const {
  if (hook_) hook_(s);
}

void CacheStore::commit() { save_manifest(root_, manifest_, hook_); }

// Brings the directory back to "payload file exists iff manifest entry exists":
// temp files and unreferenced payloads are deleted, entries whose payload is
// gone or the wrong size are dropped.
void CacheStore::recover() {
  bool dirty = false;
  for (auto it = manifest_.entries.begin(); it != manifest_.entries.end();) {
    const fs::path p = root_ / it->second.payload_path;
    std::error_code ec;
    const auto size = fs::file_size(p, ec);
    if (ec || static_cast<std::int64_t>(size) != it->second.output_bytes) {
      recovery_.dropped_entries.push_back(it->first);
      it = manifest_.entries.erase(it);
      dirty = true;
    } else {
      ++it;
    }
  }

  std::set<fs::path> referenced;
  for (const auto& [_, e] : manifest_.entries) referenced.insert(fs::path(e.payload_path).lexically_normal());

  for (const auto& top : fs::directory_iterator(root_)) {
    if (top.is_regular_file() && is_temp_file(top.path())) {
      recovery_.removed_temp_files.push_back(top.path().filename().string());
      fs::remove(top.path());
    }
  }
  std::vector<fs::path> doomed;
  for (const auto& f : fs::recursive_directory_iterator(root_ / kObjectsDir)) {
    if (!f.is_regular_file()) continue;
    const fs::path rel = fs::relative(f.path(), root_).lexically_normal();
    if (is_temp_file(f.path())) {
      recovery_.removed_temp_files.push_back(rel.string());
      doomed.push_back(f.path());
    } else if (!referenced.contains(rel)) {
      recovery_.removed_orphans.push_back(rel.string());
      doomed.push_back(f.path());
    }
  }
  for (const auto& p : doomed) fs::remove(p);
  if (dirty) commit();
}

CacheEntry CacheStore::put(const NodeSignature& sig, const std::string& node_name,
                           const PayloadSource& payload, double measured_compute_seconds) {
  require_writer("put");
  const std::string rel = payload_relative_path(sig);
  const fs::path final_path = root_ / rel;
  const fs::path dir = final_path.parent_path();

  if (const CacheEntry* existing = manifest_.find(sig)) {
    std::error_code ec;
    if (static_cast<std::int64_t>(fs::file_size(final_path, ec)) == existing->output_bytes && !ec)
      return *existing;
  }

  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create '" + dir.string() + "': " + ec.message());
  step(WriteStep::ObjectsDirReady);

  const fs::path temp_path = dir / (sig.value + ".bin" + temp_suffix());
  std::int64_t written = 0;
  {
    Fd fd = open_or_throw(temp_path, O_WRONLY | O_CREAT | O_TRUNC);
    step(WriteStep::PayloadTempOpened);
    std::visit(
        [&](const auto& src) {
          using T = std::decay_t<decltype(src)>;
          if constexpr (std::is_same_v<T, std::span<const std::byte>>) {
            const auto* data = reinterpret_cast<const char*>(src.data());
            const std::size_t half = src.size() / 2;
            write_all(fd.get(), data, half, temp_path);
            step(WriteStep::PayloadHalfWritten);
            write_all(fd.get(), data + half, src.size() - half, temp_path);
            written = static_cast<std::int64_t>(src.size());
          } else if constexpr (std::is_same_v<T, FilePayload>) {
            std::ifstream in(src.path, std::ios::binary);
            if (!in) throw IoError("cannot read payload source '" + src.path.string() + "'");
            const auto total = static_cast<std::int64_t>(fs::file_size(src.path));
            std::vector<char> buf(1 << 16);
            bool half_reported = false;
            while (in) {
              in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
              const auto got = static_cast<std::size_t>(in.gcount());
              if (got == 0) break;
              write_all(fd.get(), buf.data(), got, temp_path);
              written += static_cast<std::int64_t>(got);
              if (!half_reported && written * 2 >= total) {
                half_reported = true;
                step(WriteStep::PayloadHalfWritten);
              }
            }
            if (!half_reported) step(WriteStep::PayloadHalfWritten);
          } else {
            if (::ftruncate(fd.get(), src.bytes / 2) != 0) io_fail("cannot size", temp_path);
            step(WriteStep::PayloadHalfWritten);
            if (::ftruncate(fd.get(), src.bytes) != 0) io_fail("cannot size", temp_path);
            written = src.bytes;
          }
        },
        payload);
    step(WriteStep::PayloadWritten);
    sync_fd(fd.get(), temp_path);
    step(WriteStep::PayloadSynced);
  }
  if (::rename(temp_path.c_str(), final_path.c_str()) != 0) io_fail("cannot rename", temp_path);
  step(WriteStep::PayloadRenamed);
  sync_dir(dir);
  step(WriteStep::PayloadDirSynced);

  CacheEntry entry;
  entry.signature = sig;
  entry.node_name = node_name;
  entry.payload_path = rel;
  entry.output_bytes = written;
  entry.measured_compute_seconds = measured_compute_seconds;
  entry.created_at = utc_now();
  manifest_.entries[sig.value] = entry;
  commit();
  return entry;
}

PayloadHandle CacheStore::get(const NodeSignature& sig, const LoadOptions& options) {
  const CacheEntry* entry = manifest_.find(sig);
  if (!entry) throw NotFound("no cached payload for signature " + sig.value);

  PayloadHandle handle;
  handle.path = root_ / entry->payload_path;
  std::error_code ec;
  const auto size = fs::file_size(handle.path, ec);
  if (ec) throw CorruptEntry("payload missing for " + entry->node_name + " (" + handle.path.string() + ")");
  handle.bytes = static_cast<std::int64_t>(size);
  if (handle.bytes != entry->output_bytes)
    throw CorruptEntry("payload for " + entry->node_name + " has " + std::to_string(handle.bytes) +
                       " bytes, manifest says " + std::to_string(entry->output_bytes));

  const auto start = std::chrono::steady_clock::now();
  if (options.copy_to) {
    if (options.copy_to->has_parent_path()) fs::create_directories(options.copy_to->parent_path());
    fs::copy_file(handle.path, *options.copy_to, fs::copy_options::overwrite_existing, ec);
    if (ec) throw IoError("cannot copy payload to '" + options.copy_to->string() + "': " + ec.message());
  }
  const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  handle.load_seconds = options.charged_seconds.value_or(wall);

  if (mode_ == Mode::Writer) {
    CacheEntry& e = manifest_.entries.at(sig.value);
    e.measured_load_seconds = e.measured_load_seconds ? 0.5 * *e.measured_load_seconds + 0.5 * handle.load_seconds
                                                      : handle.load_seconds;
    manifest_.cost_history[e.node_name].load_seconds = *e.measured_load_seconds;
  }
  return handle;
}

void CacheStore::record_iteration(const SignatureMap* signatures, const CostMap& cost_updates) {
  require_writer("record_iteration");
  if (signatures) manifest_.previous_signatures = *signatures;
  for (const auto& [name, c] : cost_updates) {
    CostRecord& h = manifest_.cost_history[name];
    h.compute_seconds = c.compute_seconds;
    h.output_bytes = c.output_bytes;
    if (c.cached()) h.load_seconds = c.load_seconds;
  }
  commit();
}

std::vector<std::string> CacheStore::gc_keep_latest() {
  require_writer("gc");
  std::set<std::string> keep;
  for (const auto& [_, sig] : manifest_.previous_signatures) keep.insert(sig.value);
  std::vector<std::string> removed;
  std::vector<fs::path> files;
  for (auto it = manifest_.entries.begin(); it != manifest_.entries.end();) {
    if (keep.contains(it->first)) {
      ++it;
      continue;
    }
    removed.push_back(it->first);
    files.push_back(root_ / it->second.payload_path);
    it = manifest_.entries.erase(it);
  }
  // Manifest first: a crash in between leaves orphans, which recovery deletes.
  if (!removed.empty()) commit();
  for (const auto& f : files) fs::remove(f);
  return removed;
}

}  // namespace iterflow
