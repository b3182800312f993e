#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace kgdialog {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed JSON or CSV input.
class ParseError : public Error {
 public:
  using Error::Error;
};

/// A document parsed fine but breaks a structural rule. `subject()` names the
/// offending record (a concept id, a template, a participant...).
class ValidationError : public Error {
 public:
  ValidationError(std::string subject, const std::string& what)
      : Error(what), subject_(std::move(subject)) {}
  const std::string& subject() const { return subject_; }

 private:
  std::string subject_;
};

class ExpansionError : public Error {
 public:
  using Error::Error;
};

class PaddingError : public Error {
 public:
  using Error::Error;
};

/// Remote classifier could not be reached or answered garbage.
class TransportError : public Error {
 public:
  using Error::Error;
};

class IndexBuildError : public Error {
 public:
  IndexBuildError(std::string topic, const std::string& what)
      : Error(what), topic_(std::move(topic)) {}
  const std::string& topic() const { return topic_; }

 private:
  std::string topic_;
};

class CompositionError : public Error {
 public:
  using Error::Error;
};

/// Statistic undefined for the given input (empty sample, zero variance...).
class StatsError : public Error {
 public:
  using Error::Error;
};

}  // namespace kgdialog
