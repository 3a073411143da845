#include "rflow/workflow/params.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <set>
#include <sstream>

#include "rflow/core/errors.hpp"

namespace rflow::workflow {

std::string to_string(DimKind k) {
  switch (k) {
    case DimKind::continuous: return "continuous";
    case DimKind::integer: return "integer";
    case DimKind::categorical: return "categorical";
  }
  return "continuous";
}

Dim Dim::continuous(std::string name, double lo, double hi) {
  Dim d;
  d.name = std::move(name);
  d.kind = DimKind::continuous;
  d.lo = lo;
  d.hi = hi;
  return d;
}

Dim Dim::integer(std::string name, int lo, int hi, int step) {
  Dim d;
  d.name = std::move(name);
  d.kind = DimKind::integer;
  d.lo = lo;
  d.hi = hi;
  d.step = step;
  return d;
}

Dim Dim::categorical(std::string name, std::vector<std::string> values) {
  Dim d;
  d.name = std::move(name);
  d.kind = DimKind::categorical;
  d.values = std::move(values);
  d.lo = 0.0;
  d.hi = static_cast<double>(d.values.size());
  return d;
}

std::size_t Dim::cardinality() const {
  switch (kind) {
    case DimKind::continuous: return 0;
    case DimKind::integer: return static_cast<std::size_t>((hi - lo) / step) + 1;
    case DimKind::categorical: return values.size();
  }
  return 0;
}

std::int64_t snap_integer(const Dim& d, double x) {
  const double k = std::round((std::clamp(x, d.lo, d.hi) - d.lo) / d.step);
  const auto n = static_cast<double>(d.cardinality() - 1);
  return static_cast<std::int64_t>(d.lo + std::clamp(k, 0.0, n) * d.step);
}

bool ParamVector::has(const std::string& name) const {
  return std::find(names.begin(), names.end(), name) != names.end();
}

const ParamValue& ParamVector::at(const std::string& name) const {
  const auto it = std::find(names.begin(), names.end(), name);
  if (it == names.end()) throw DomainError("missing parameter '" + name + "'");
  return values[static_cast<std::size_t>(it - names.begin())];
}

double ParamVector::get_double(const std::string& name) const {
  const ParamValue& v = at(name);
  if (const auto* d = std::get_if<double>(&v)) return *d;
  if (const auto* i = std::get_if<std::int64_t>(&v)) return static_cast<double>(*i);
  throw DomainError("parameter '" + name + "' is not numeric");
}

std::int64_t ParamVector::get_int(const std::string& name) const {
  const ParamValue& v = at(name);
  if (const auto* i = std::get_if<std::int64_t>(&v)) return *i;
  if (const auto* d = std::get_if<double>(&v)) return static_cast<std::int64_t>(std::llround(*d));
  throw DomainError("parameter '" + name + "' is not numeric");
}

const std::string& ParamVector::get_string(const std::string& name) const {
  const ParamValue& v = at(name);
  if (const auto* s = std::get_if<std::string>(&v)) return *s;
  throw DomainError("parameter '" + name + "' is not categorical");
}

void ParamVector::set(const std::string& name, ParamValue v) {
  const auto it = std::find(names.begin(), names.end(), name);
  if (it == names.end()) {
    names.push_back(name);
    values.push_back(std::move(v));
  } else {
    values[static_cast<std::size_t>(it - names.begin())] = std::move(v);
  }
}

ParamVector ParamVector::slice(const std::string& prefix) const {
  ParamVector out;
  const std::string p = prefix + ".";
  for (std::size_t i = 0; i < names.size(); ++i)
    if (names[i].rfind(p, 0) == 0) {
      out.names.push_back(names[i].substr(p.size()));
      out.values.push_back(values[i]);
    }
  return out;
}

std::string format_params(const ParamVector& v) {
  std::string out;
  char buf[64];
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ',';
    out += v.names[i];
    out += '=';
    if (const auto* d = std::get_if<double>(&v.values[i])) {
      std::snprintf(buf, sizeof buf, "%.17g", *d);
      out += buf;
    } else if (const auto* n = std::get_if<std::int64_t>(&v.values[i])) {
      out += std::to_string(*n);
    } else {
      out += std::get<std::string>(v.values[i]);
    }
  }
  return out;
}

int ParamSpace::index_of(const std::string& name) const {
  for (std::size_t i = 0; i < dims.size(); ++i)
    if (dims[i].name == name) return static_cast<int>(i);
  return -1;
}

const Dim& ParamSpace::dim(const std::string& name) const {
  const int i = index_of(name);
  if (i < 0) throw DomainError("no dimension named '" + name + "'");
  return dims[static_cast<std::size_t>(i)];
}

void ParamSpace::validate() const {
  std::set<std::string> seen;
  for (const Dim& d : dims) {
    if (!seen.insert(d.name).second) throw DomainError("duplicate dimension '" + d.name + "'");
    if (d.kind == DimKind::categorical) {
      if (d.values.empty()) throw DomainError("categorical dimension '" + d.name + "' has no values");
    } else if (!(d.lo < d.hi)) {
      throw DomainError("dimension '" + d.name + "' needs lo < hi");
    }
    if (d.kind == DimKind::integer && d.step < 1) throw DomainError("integer step must be >= 1");
  }
}

namespace {

bool ends_with(const std::string& s, const std::string& suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

}  // namespace

bool ParamSpace::sigma_pair(int& i_min, int& i_max) const {
  i_min = i_max = -1;
  for (std::size_t i = 0; i < dims.size(); ++i) {
    if (ends_with(dims[i].name, "sigma_min")) i_min = static_cast<int>(i);
    if (ends_with(dims[i].name, "sigma_max")) i_max = static_cast<int>(i);
  }
  return i_min >= 0 && i_max >= 0;
}

void ParamSpace::check(const ParamVector& v) const {
  if (v.size() != dims.size()) throw DomainError("parameter vector does not match the space");
  for (std::size_t i = 0; i < dims.size(); ++i) {
    const Dim& d = dims[i];
    if (v.names[i] != d.name) throw DomainError("expected parameter '" + d.name + "', got '" + v.names[i] + "'");
    const ParamValue& x = v.values[i];
    switch (d.kind) {
      case DimKind::continuous: {
        const auto* p = std::get_if<double>(&x);
        if (!p || !std::isfinite(*p) || *p < d.lo || *p > d.hi)
          throw DomainError("parameter '" + d.name + "' out of range");
        break;
      }
      case DimKind::integer: {
        const auto* p = std::get_if<std::int64_t>(&x);
        if (!p || *p < d.lo || *p > d.hi || (*p - static_cast<std::int64_t>(d.lo)) % d.step != 0)
          throw DomainError("parameter '" + d.name + "' is not an admissible integer");
        break;
      }
      case DimKind::categorical: {
        const auto* p = std::get_if<std::string>(&x);
        if (!p || std::find(d.values.begin(), d.values.end(), *p) == d.values.end())
          throw DomainError("parameter '" + d.name + "' has an unknown category");
        break;
      }
    }
  }
  int a, b;
  if (sigma_pair(a, b) && !(std::get<double>(v.values[a]) < std::get<double>(v.values[b])))
    throw DomainError("sigma_min must be below sigma_max");
}

ParamVector ParamSpace::parse(const std::string& text) const {
  ParamVector given;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    const auto eq = item.find('=');
    if (eq == std::string::npos) throw ConfigError("expected name=value, got '" + item + "'");
    given.names.push_back(item.substr(0, eq));
    given.values.emplace_back(item.substr(eq + 1));
  }
  ParamVector out;
  for (const Dim& d : dims) {
    if (!given.has(d.name)) throw ConfigError("missing parameter '" + d.name + "'");
    const std::string& raw = std::get<std::string>(given.at(d.name));
    out.names.push_back(d.name);
    try {
      switch (d.kind) {
        case DimKind::continuous: out.values.emplace_back(std::stod(raw)); break;
        case DimKind::integer: out.values.emplace_back(static_cast<std::int64_t>(std::stoll(raw))); break;
        case DimKind::categorical: out.values.emplace_back(raw); break;
      }
    } catch (const std::logic_error&) {
      throw ConfigError("cannot parse value '" + raw + "' for '" + d.name + "'");
    }
  }
  for (const std::string& n : given.names)
    if (index_of(n) < 0) throw ConfigError("unknown parameter '" + n + "'");
  return out;
}

std::vector<double> ParamSpace::to_unit(const ParamVector& v) const {
  std::vector<double> u(dims.size());
  for (std::size_t i = 0; i < dims.size(); ++i) {
    const Dim& d = dims[i];
    if (d.kind == DimKind::categorical) {
      const auto& s = std::get<std::string>(v.values[i]);
      const auto idx = std::find(d.values.begin(), d.values.end(), s) - d.values.begin();
      u[i] = (static_cast<double>(idx) + 0.5) / static_cast<double>(d.values.size());
    } else {
      u[i] = (v.get_double(d.name) - d.lo) / (d.hi - d.lo);
    }
  }
  return u;
}

ParamVector ParamSpace::from_unit(const std::vector<double>& u) const {
  ParamVector out;
  for (std::size_t i = 0; i < dims.size(); ++i) {
    const Dim& d = dims[i];
    const double x = std::clamp(u[i], 0.0, 1.0);
    out.names.push_back(d.name);
    switch (d.kind) {
      case DimKind::continuous: out.values.emplace_back(d.lo + x * (d.hi - d.lo)); break;
      case DimKind::integer: out.values.emplace_back(snap_integer(d, d.lo + x * (d.hi - d.lo))); break;
      case DimKind::categorical: {
        const std::size_t n = d.values.size();
        out.values.emplace_back(d.values[std::min(n - 1, static_cast<std::size_t>(x * static_cast<double>(n)))]);
        break;
      }
    }
  }
  return out;
}

}  // namespace rflow::workflow
