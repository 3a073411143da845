#include "rflow/optimize/pareto.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>

#include "rflow/core/errors.hpp"

namespace rflow::optimize {

bool dominates(const Objectives& a, const Objectives& b) {
  bool strict = false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i] > b[i]) return false;
    if (a[i] < b[i]) strict = true;
  }
  return strict;
}

std::vector<std::size_t> pareto_front(const std::vector<Objectives>& points) {
  for (const auto& p : points)
    if (p.size() != points.front().size()) throw DomainError("pareto_front: mixed objective counts");
  std::vector<std::size_t> front;
  for (std::size_t i = 0; i < points.size(); ++i) {
    bool keep = true;
    for (std::size_t j = 0; j < points.size() && keep; ++j) {
      if (j == i) continue;
      if (dominates(points[j], points[i]) || (j < i && points[j] == points[i])) keep = false;
    }
    if (keep) front.push_back(i);
  }
  return front;
}

double hypervolume_2d(const std::vector<Objectives>& front, const Objectives& ref) {
  if (ref.size() != 2) throw DomainError("hypervolume_2d needs 2 objectives");
  std::vector<std::pair<double, double>> pts;
  for (const auto& p : front) {
    if (p.size() != 2) throw DomainError("hypervolume_2d needs 2 objectives");
    if (!(p[0] < ref[0] && p[1] < ref[1])) throw DomainError("front point not strictly below the reference");
    pts.emplace_back(p[0], p[1]);
  }
  std::sort(pts.begin(), pts.end());
  double hv = 0.0, prev_y = ref[1];
  for (const auto& [x, y] : pts) {
    if (y >= prev_y) continue;
    hv += (ref[0] - x) * (prev_y - y);
    prev_y = y;
  }
  return hv;
}

double chebyshev(const Objectives& x, const std::vector<double>& w, double rho) {
  double mx = -std::numeric_limits<double>::infinity(), sum = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx = std::max(mx, w[i] * x[i]);
    sum += w[i] * x[i];
  }
  return mx + rho * sum;
}

// ---------------------------------------------------------------------------

ParetoArchive::ParetoArchive(std::vector<std::string> objective_names) : names_(std::move(objective_names)) {}

const ArchiveEntry& ParetoArchive::add(workflow::ParamVector params, rewards::RewardVector r) {
  r.validate();
  if (names_.empty()) names_ = r.names;
  if (r.names != names_) throw DomainError("reward names do not match the archive");
  ArchiveEntry e;
  e.index = entries_.size();
  e.params = std::move(params);
  e.rewards = std::move(r);
  entries_.push_back(std::move(e));
  ++feasible_;
  insert_front(entries_.size() - 1);
  return entries_.back();
}

const ArchiveEntry& ParetoArchive::add_infeasible(workflow::ParamVector params, std::string error) {
  ArchiveEntry e;
  e.index = entries_.size();
  e.params = std::move(params);
  e.error = std::move(error);
  entries_.push_back(std::move(e));
  return entries_.back();
}

void ParetoArchive::insert_front(std::size_t pos) {
  const auto& x = entries_[pos].rewards->values;
  for (std::size_t f : front_) {
    const auto& y = entries_[f].rewards->values;
    if (dominates(y, x) || y == x) return;
  }
  std::erase_if(front_, [&](std::size_t f) { return dominates(x, entries_[f].rewards->values); });
  front_.push_back(pos);
  std::sort(front_.begin(), front_.end());
}

std::vector<Objectives> ParetoArchive::feasible_objectives(std::vector<std::size_t>* positions) const {
  std::vector<Objectives> out;
  if (positions) positions->clear();
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    if (!entries_[i].feasible()) continue;
    out.push_back(entries_[i].rewards->values);
    if (positions) positions->push_back(i);
  }
  return out;
}

void ParetoArchive::objective_bounds(Objectives& lo, Objectives& hi) const {
  const std::size_t m = names_.size();
  lo.assign(m, std::numeric_limits<double>::infinity());
  hi.assign(m, -std::numeric_limits<double>::infinity());
  for (const auto& e : entries_) {
    if (!e.feasible()) continue;
    for (std::size_t i = 0; i < m; ++i) {
      lo[i] = std::min(lo[i], e.rewards->values[i]);
      hi[i] = std::max(hi[i], e.rewards->values[i]);
    }
  }
}

Objectives ParetoArchive::normalize(const Objectives& x) const {
  Objectives lo, hi;
  objective_bounds(lo, hi);
  Objectives out(x.size(), 0.0);
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double range = hi[i] - lo[i];
    out[i] = range > 0.0 && std::isfinite(range) ? (x[i] - lo[i]) / range : 0.0;
  }
  return out;
}

ParetoArchive ParetoArchive::prefix(std::size_t n) const {
  ParetoArchive out(names_);
  for (std::size_t i = 0; i < std::min(n, entries_.size()); ++i) {
    const auto& e = entries_[i];
    if (e.feasible())
      out.add(e.params, *e.rewards);
    else
      out.add_infeasible(e.params, e.error);
  }
  return out;
}

std::size_t select_front_point(const ParetoArchive& a, const std::vector<double>& weights) {
  if (a.front().empty()) throw DomainError("select_front_point: empty front");
  if (weights.size() != a.objective_names().size()) throw DomainError("weights do not match the objectives");
  double sum = 0.0;
  for (double w : weights) {
    if (w < -1e-9) throw DomainError("weights must be non-negative");
    sum += w;
  }
  if (std::abs(sum - 1.0) > 1e-9) throw DomainError("weights must sum to 1");
  std::size_t best = a.front().front();
  double best_value = std::numeric_limits<double>::infinity();
  for (std::size_t pos : a.front()) {
    const double v = chebyshev(a.normalize(a.entries()[pos].rewards->values), weights);
    if (v < best_value) {  // front() is ascending, so ties keep the lower index
      best_value = v;
      best = pos;
    }
  }
  return best;
}

double archive_hypervolume(const ParetoArchive& a, const Objectives& ref) {
  std::vector<Objectives> pts;
  for (std::size_t pos : a.front()) {
    const auto& v = a.entries()[pos].rewards->values;
    if (v[0] < ref[0] && v[1] < ref[1]) pts.push_back(v);
  }
  return hypervolume_2d(pts, ref);
}

std::string archive_to_tsv(const ParetoArchive& a, bool front_only) {
  std::string out = "index";
  const workflow::ParamVector* first = a.entries().empty() ? nullptr : &a.entries().front().params;
  if (first)
    for (const auto& n : first->names) out += "\t" + n;
  for (const auto& n : a.objective_names()) out += "\t" + n;
  out += "\tfeasible\n";
  char buf[64];
  auto emit = [&](const ArchiveEntry& e) {
    out += std::to_string(e.index);
    for (const auto& v : e.params.values) {
      out += '\t';
      if (const auto* d = std::get_if<double>(&v)) {
        std::snprintf(buf, sizeof buf, "%.17g", *d);
        out += buf;
      } else if (const auto* i = std::get_if<std::int64_t>(&v)) {
        out += std::to_string(*i);
      } else {
        out += std::get<std::string>(v);
      }
    }
    for (std::size_t i = 0; i < a.objective_names().size(); ++i) {
      out += '\t';
      if (e.feasible()) {
        std::snprintf(buf, sizeof buf, "%.17g", e.rewards->values[i]);
        out += buf;
      } else {
        out += "NA";
      }
    }
    out += e.feasible() ? "\t1\n" : "\t0\n";
  };
  if (front_only) {
    for (std::size_t pos : a.front()) emit(a.entries()[pos]);
  } else {
    for (const auto& e : a.entries()) emit(e);
  }
  return out;
}

}  // namespace rflow::optimize
