#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace sceneforge {

// Base for every stage error raised by the library. Invalid arguments use
// std::invalid_argument directly.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class IngestError : public Error {
 public:
  IngestError(std::string asset, const std::string& message)
      : Error(asset + ": " + message), asset_(std::move(asset)) {}

  const std::string& asset() const { return asset_; }

 private:
  std::string asset_;
};

class TemplateError : public Error {
 public:
  explicit TemplateError(std::string key, const std::string& message)
      : Error(message), key_(std::move(key)) {}

  // Name of the missing placeholder, or empty for load failures.
  const std::string& key() const { return key_; }

 private:
  std::string key_;
};

class ProviderError : public Error {
 public:
  enum class Category { transport, validation };

  ProviderError(Category category, const std::string& message,
                std::string raw_text = {}, int attempts = 0)
      : Error(message),
        category_(category),
        raw_text_(std::move(raw_text)),
        attempts_(attempts) {}

  Category category() const { return category_; }
  bool is_transport() const { return category_ == Category::transport; }
  // Last raw reply received, kept for diagnostics.
  const std::string& raw_text() const { return raw_text_; }
  int attempts() const { return attempts_; }

 private:
  Category category_;
  std::string raw_text_;
  int attempts_;
};

class EstimationError : public Error {
 public:
  using Error::Error;
};

class FormatVersionError : public Error {
 public:
  using Error::Error;
};

class FormatError : public Error {
 public:
  using Error::Error;
};

class ExportError : public Error {
 public:
  ExportError(const std::string& message, std::vector<std::string> offenders)
      : Error(message), offenders_(std::move(offenders)) {}

  const std::vector<std::string>& offenders() const { return offenders_; }

 private:
  std::vector<std::string> offenders_;
};

}  // namespace sceneforge
