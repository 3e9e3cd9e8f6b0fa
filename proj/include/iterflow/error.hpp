#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace iterflow {

// Base of every error the engine raises. Callers that only need a message
// catch this; the CLI maps subclasses onto exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// ---- workflow parsing / validation -------------------------------------

class SpecError : public Error {
 public:
  using Error::Error;
};

class SyntaxError : public SpecError {
 public:
  using SpecError::SpecError;
};

class DuplicateName : public SpecError {
 public:
  explicit DuplicateName(std::string name)
      : SpecError("duplicate operator name: " + name), name_(std::move(name)) {}
  const std::string& name() const noexcept { return name_; }

 private:
  std::string name_;
};

class UnknownParent : public SpecError {
 public:
  UnknownParent(std::string child, std::string parent)
      : SpecError("operator '" + child + "' names undefined parent '" + parent + "'"),
        parent_(std::move(parent)) {}
  const std::string& parent() const noexcept { return parent_; }

 private:
  std::string parent_;
};

class CycleDetected : public SpecError {
 public:
  explicit CycleDetected(std::vector<std::string> cycle);
  const std::vector<std::string>& cycle() const noexcept { return cycle_; }

 private:
  std::vector<std::string> cycle_;
};

class NoOutputs : public SpecError {
 public:
  using SpecError::SpecError;
};

// ---- signatures -----------------------------------------------------------

class MissingSource : public Error {
 public:
  explicit MissingSource(std::string path)
      : Error("declared source file is missing or unreadable: " + path), path_(std::move(path)) {}
  const std::string& path() const noexcept { return path_; }

 private:
  std::string path_;
};

// ---- planning -------------------------------------------------------------

class InfiniteCost : public Error {
 public:
  using Error::Error;
};

class TooLarge : public Error {
 public:
  using Error::Error;
};

class UnknownCost : public Error {
 public:
  explicit UnknownCost(std::string name)
      : Error("no cost information for operator '" + name + "'"), name_(std::move(name)) {}
  const std::string& name() const noexcept { return name_; }

 private:
  std::string name_;
};

// ---- cache ------------------------------------------------------------------

class IoError : public Error {
 public:
  using Error::Error;
};

class NotFound : public Error {
 public:
  using Error::Error;
};

class CorruptEntry : public Error {
 public:
  using Error::Error;
};

class VersionMismatch : public Error {
 public:
  using Error::Error;
};

class LockContention : public Error {
 public:
  LockContention(std::string lock_path, std::string holder)
      : Error("cache is locked by " + (holder.empty() ? std::string("an unknown process") : holder) +
              " (" + lock_path + ")"),
        holder_(std::move(holder)) {}
  const std::string& holder() const noexcept { return holder_; }

 private:
  std::string holder_;
};

// ---- simulation / configuration -------------------------------------------

class KindAbsent : public Error {
 public:
  explicit KindAbsent(std::string kind)
      : Error("trace samples kind '" + kind + "' but the workflow has no such operator"),
        kind_(std::move(kind)) {}
  const std::string& kind() const noexcept { return kind_; }

 private:
  std::string kind_;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace iterflow
