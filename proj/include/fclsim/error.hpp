#pragma once

#include <stdexcept>
#include <string>

namespace fclsim {

// Base of every error the library raises. `where` names the offending
// input (a column, a config key, a client/round) when one is known.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string &what, std::string where = {})
      : std::runtime_error(where.empty() ? what : where + ": " + what),
        where_(std::move(where)) {}

  const std::string &where() const noexcept { return where_; }

 private:
  std::string where_;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

class DataError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class NumericError : public Error {
 public:
  using Error::Error;
};

class TrainingError : public Error {
 public:
  TrainingError(const std::string &what, int client, int round)
      : Error(what, "client " + std::to_string(client) + ", round " +
                        std::to_string(round)),
        client_(client),
        round_(round) {}

  int client() const noexcept { return client_; }
  int round() const noexcept { return round_; }

 private:
  int client_;
  int round_;
};

}  // namespace fclsim
