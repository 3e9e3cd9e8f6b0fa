#include "iterflow/signature.hpp"

#include <openssl/evp.h>

#include <fstream>
#include <vector>

#include "iterflow/error.hpp"
#include "json.hpp"

namespace iterflow {

namespace {

constexpr std::string_view kSignatureDomain = "iterflow/node-signature/v1";

EVP_MD_CTX* ctx_of(void* p) { return static_cast<EVP_MD_CTX*>(p); }

std::string to_hex(const std::array<std::uint8_t, 32>& digest) {
  static constexpr char kDigits[] = "0123456789abcdef";
  std::string out(64, '0');
  for (std::size_t i = 0; i < digest.size(); ++i) {
    out[2 * i] = kDigits[digest[i] >> 4];
    out[2 * i + 1] = kDigits[digest[i] & 0xF];
  }
  return out;
}

// Length-prefixed field so adjacent fields cannot alias each other.
void frame(Sha256& h, std::string_view field) {
  h.update(std::to_string(field.size()));
  h.update(":");
  h.update(field);
}

}  // namespace

Sha256::Sha256() : ctx_(EVP_MD_CTX_new()) {
  if (!ctx_ || EVP_DigestInit_ex(ctx_of(ctx_), EVP_sha256(), nullptr) != 1)
    throw Error("failed to initialise SHA-256");
}

Sha256::~Sha256() { EVP_MD_CTX_free(ctx_of(ctx_)); }

Sha256& Sha256::update(std::span<const std::byte> bytes) {
  EVP_DigestUpdate(ctx_of(ctx_), bytes.data(), bytes.size());
  return *this;
}

Sha256& Sha256::update(std::string_view text) {
  EVP_DigestUpdate(ctx_of(ctx_), text.data(), text.size());
  return *this;
}

std::array<std::uint8_t, 32> Sha256::finish() {
  std::array<std::uint8_t, 32> out{};
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx_of(ctx_), out.data(), &len);
  return out;
}

std::string Sha256::finish_hex() { return to_hex(finish()); }

std::string Sha256::hex(std::string_view text) {
  Sha256 h;
  h.update(text);
  return h.finish_hex();
}

std::string canonical_definition(const OperatorNode& node) {
  // nlohmann::json keeps object keys sorted, which makes the dump canonical.
  nlohmann::json j;
  j["name"] = node.name;
  std::visit(
      [&](const auto& a) {
        using T = std::decay_t<decltype(a)>;
        if constexpr (std::is_same_v<T, CommandAction>) {
          j["action"] = {{"type", "command"}, {"argv", a.argv}, {"inputs", a.inputs}, {"output", a.output}};
        } else {
          j["action"] = {{"type", "simulated"},
                         {"compute_seconds", a.compute_seconds},
                         {"output_bytes", a.output_bytes}};
        }
      },
      node.action);
  j["parents"] = node.parents;
  j["sources"] = node.sources;
  if (node.env_fingerprint) j["env_fingerprint"] = *node.env_fingerprint;
  return j.dump();
}

std::string hash_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in || std::filesystem::is_directory(path)) throw MissingSource(path.string());
  Sha256 h;
  std::vector<char> buf(1 << 16);
  while (in) {
    in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
    auto got = in.gcount();
    if (got > 0) h.update(std::string_view(buf.data(), static_cast<std::size_t>(got)));
  }
  if (in.bad()) throw MissingSource(path.string());
  return h.finish_hex();
}

SignatureMap compute_signatures(const WorkflowSpec& spec, const std::filesystem::path& workspace) {
  const Dag dag = Dag::from_spec(spec);
  std::map<std::string_view, const OperatorNode*> by_name;
  for (const auto& n : spec.nodes) by_name[n.name] = &n;

  SignatureMap out;
  for (auto i : dag.topological_order()) {
    const OperatorNode& node = *by_name.at(dag.name(i));
    Sha256 h;
    frame(h, kSignatureDomain);
    frame(h, canonical_definition(node));
    // Parent order is part of the definition (it fixes argument order).
    for (const auto& p : node.parents) frame(h, out.at(p).value);
    for (const auto& src : node.sources) {
      frame(h, src);
      frame(h, hash_file(workspace / src));
    }
    out[node.name] = NodeSignature{h.finish_hex()};
  }
  return out;
}

ChangeSet diff_iterations(const SignatureMap& previous, const SignatureMap& current) {
  ChangeSet cs;
  for (const auto& [name, sig] : current) {
    auto it = previous.find(name);
    if (it == previous.end()) {
      cs.added.insert(name);
      cs.changed.insert(name);
    } else if (it->second != sig) {
      cs.changed.insert(name);
    } else {
      cs.unchanged.insert(name);
    }
  }
  for (const auto& [name, _] : previous)
    if (!current.contains(name)) cs.deleted.insert(name);
  return cs;
}

}  // namespace iterflow
