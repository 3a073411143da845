#pragma once

#include <cstdint>
#include <string>
#include <variant>
#include <vector>

namespace rflow::workflow {

enum class DimKind { continuous, integer, categorical };

std::string to_string(DimKind k);

struct Dim {
  std::string name;
  DimKind kind = DimKind::continuous;
  double lo = 0.0;
  double hi = 1.0;
  int step = 1;                     // integer dims: admissible values lo, lo+step, ...
  std::vector<std::string> values;  // categorical dims

  static Dim continuous(std::string name, double lo, double hi);
  static Dim integer(std::string name, int lo, int hi, int step = 1);
  static Dim categorical(std::string name, std::vector<std::string> values);

  /// Number of admissible values (0 for continuous dims).
  std::size_t cardinality() const;
  bool operator==(const Dim&) const = default;
};

using ParamValue = std::variant<double, std::int64_t, std::string>;

/// Named parameter values. Names are either local to an operation ("T") or
/// prefixed in a pipeline's joint space ("blobs.T").
struct ParamVector {
  std::vector<std::string> names;
  std::vector<ParamValue> values;

  std::size_t size() const noexcept { return values.size(); }
  bool has(const std::string& name) const;
  const ParamValue& at(const std::string& name) const;
  double get_double(const std::string& name) const;  // integers convert
  std::int64_t get_int(const std::string& name) const;
  const std::string& get_string(const std::string& name) const;

  void set(const std::string& name, ParamValue v);

  /// Entries whose name starts with "<prefix>.", returned with the prefix stripped.
  ParamVector slice(const std::string& prefix) const;

  bool operator==(const ParamVector&) const = default;
};

/// "name=value,name=value". Doubles are written with 17 significant digits.
std::string format_params(const ParamVector& v);

struct ParamSpace {
  std::vector<Dim> dims;

  std::size_t size() const noexcept { return dims.size(); }
  int index_of(const std::string& name) const;  // -1 if absent
  const Dim& dim(const std::string& name) const;

  /// Throws DomainError for duplicate names, lo >= hi, empty categories.
  void validate() const;

  /// Throws DomainError if v does not hold exactly these dims (in order),
  /// a value is out of its domain, or a sigma_min >= sigma_max pair exists.
  void check(const ParamVector& v) const;

  /// Parses "name=value,..." against this space; every dim must appear.
  ParamVector parse(const std::string& text) const;

  /// Unit-cube coordinate per dim (categoricals: (index + 0.5) / n).
  std::vector<double> to_unit(const ParamVector& v) const;
  /// Inverse of to_unit with snapping (no cross-dim repair).
  ParamVector from_unit(const std::vector<double>& u) const;

  /// Names of a (sigma_min, sigma_max) pair, if the space has one.
  bool sigma_pair(int& i_min, int& i_max) const;

  bool operator==(const ParamSpace&) const = default;
};

/// Snaps an integer dim value to the nearest admissible value.
std::int64_t snap_integer(const Dim& d, double x);

}  // namespace rflow::workflow
