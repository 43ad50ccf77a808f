#pragma once

#include <stdexcept>
#include <string>

namespace ordrd {

// Stage codes double as CLI exit codes: 2 manifest, 3 data, 4 fit,
// 5 balance, 6 estimation/variance.
enum class Stage : int {
  Manifest = 2,
  Data = 3,
  Fit = 4,
  Balance = 5,
  Estimation = 6,
};

class Error : public std::runtime_error {
 public:
  Error(Stage stage, const std::string& what)
      : std::runtime_error(what), stage_(stage) {}

  Stage stage() const { return stage_; }
  int exit_code() const { return static_cast<int>(stage_); }

 private:
  Stage stage_;
};

struct ManifestError : Error {
  explicit ManifestError(const std::string& what) : Error(Stage::Manifest, what) {}
};

struct DataError : Error {
  explicit DataError(const std::string& what) : Error(Stage::Data, what) {}
};

struct FitError : Error {
  explicit FitError(const std::string& what) : Error(Stage::Fit, what) {}
};

struct BalanceError : Error {
  explicit BalanceError(const std::string& what) : Error(Stage::Balance, what) {}
};

struct EstimationError : Error {
  explicit EstimationError(const std::string& what) : Error(Stage::Estimation, what) {}
};

}  // namespace ordrd
