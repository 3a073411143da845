#include "rflow/optimize/optimizers.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>

#include "rflow/core/errors.hpp"
#include "rflow/core/parallel.hpp"
#include "rflow/optimize/mcts.hpp"

namespace rflow::optimize {

using workflow::Dim;
using workflow::DimKind;
using workflow::ParamValue;

namespace {

// Stream ids under the run seed.
constexpr std::uint64_t kEvalStream = 0x6576616c;
constexpr std::uint64_t kDesignStream = 1;
constexpr std::uint64_t kLoopStream = 2;

std::string local_name(const std::string& name) {
  const auto dot = name.rfind('.');
  return dot == std::string::npos ? name : name.substr(dot + 1);
}

// Evaluates candidates in order, appending to the archive.
class Runner {
 public:
  Runner(const Problem& p, std::uint64_t seed, const RunControl& ctl, ParetoArchive& archive, std::size_t budget)
      : p_(p), seed_(seed), ctl_(ctl), archive_(archive), budget_(budget) {}

  bool done() const { return stopped_ || archive_.size() >= budget_; }
  std::size_t remaining() const { return done() ? 0 : budget_ - archive_.size(); }

  // Returns one slot per candidate that was evaluated (may be fewer than
  // requested when the budget runs out or the run is stopped).
  std::vector<std::optional<rewards::RewardVector>> run(const std::vector<ParamVector>& batch) {
    std::vector<std::optional<rewards::RewardVector>> out;
    const unsigned threads = std::max(1u, ctl_.threads);
    std::size_t pos = 0;
    while (pos < batch.size() && !done()) {
      if (ctl_.stop && ctl_.stop()) {
        stopped_ = true;
        break;
      }
      if (ctl_.before_eval) ctl_.before_eval();
      if (ctl_.stop && ctl_.stop()) {
        stopped_ = true;
        break;
      }
      const std::size_t n = std::min({static_cast<std::size_t>(threads), batch.size() - pos, remaining()});
      const std::size_t base = archive_.size();
      std::vector<std::optional<rewards::RewardVector>> res(n);
      std::vector<std::string> errors(n);
      std::vector<std::string> fatal(n);
      parallel_for(n, threads, [&](std::size_t i) {
        try {
          res[i] = p_.evaluate(batch[pos + i], evaluation_seed(seed_, base + i));
        } catch (const DomainError& e) {
          errors[i] = e.what();
        } catch (const std::exception& e) {
          fatal[i] = e.what();
        }
      });
      for (std::size_t i = 0; i < n; ++i) {
        if (!fatal[i].empty()) throw EvaluationError(batch[pos + i], fatal[i]);
        if (res[i]) {
          try {
            archive_.add(batch[pos + i], *res[i]);
          } catch (const DomainError& e) {  // non-finite reward
            res[i].reset();
            archive_.add_infeasible(batch[pos + i], e.what());
          }
        } else {
          archive_.add_infeasible(batch[pos + i], errors[i]);
        }
        out.push_back(std::move(res[i]));
      }
      pos += n;
      if (ctl_.on_update) ctl_.on_update(archive_);
    }
    return out;
  }

 private:
  const Problem& p_;
  std::uint64_t seed_;
  const RunControl& ctl_;
  ParetoArchive& archive_;
  std::size_t budget_;
  bool stopped_ = false;
};

std::vector<double> random_unit(Rng& rng, std::size_t d) {
  std::vector<double> u(d);
  for (auto& x : u) x = uniform01(rng);
  return u;
}

std::vector<double> equal_weights(std::size_t m) { return std::vector<double>(m, 1.0 / static_cast<double>(m)); }

}  // namespace

std::uint64_t evaluation_seed(std::uint64_t seed, std::size_t index) {
  return derive_seed(derive_seed(seed, kEvalStream), index);
}

Problem pipeline_problem(workflow::Pipeline p, std::shared_ptr<const workflow::ImageContext> ctx) {
  p.validate();
  Problem out;
  out.space = p.joint_space();
  out.objectives = p.rewards;
  out.evaluate = [p = std::move(p), ctx = std::move(ctx)](const ParamVector& v, std::uint64_t seed) {
    return workflow::execute(p, *ctx, v, seed).rewards;
  };
  return out;
}

// ---------------------------------------------------------------------------
// Codec

UnitCodec::UnitCodec(ParamSpace space) : space_(std::move(space)) {
  space_.validate();
  space_.sigma_pair(sigma_min_, sigma_max_);
  for (const Dim& d : space_.dims) feature_size_ += d.kind == DimKind::categorical ? d.values.size() : 1;
}

ParamVector UnitCodec::decode(const std::vector<double>& u) const {
  if (u.size() != space_.size()) throw DomainError("unit vector does not match the space");
  ParamVector out;
  for (std::size_t i = 0; i < space_.size(); ++i) {
    const Dim& d = space_.dims[i];
    const double x = std::clamp(u[i], 0.0, 1.0);
    out.names.push_back(d.name);
    switch (d.kind) {
      case DimKind::continuous: out.values.emplace_back(d.lo + x * (d.hi - d.lo)); break;
      case DimKind::integer: {
        const std::size_t n = d.cardinality();
        const auto k = std::min(n - 1, static_cast<std::size_t>(x * static_cast<double>(n)));
        out.values.emplace_back(static_cast<std::int64_t>(d.lo) + static_cast<std::int64_t>(k) * d.step);
        break;
      }
      case DimKind::categorical: {
        const std::size_t n = d.values.size();
        out.values.emplace_back(d.values[std::min(n - 1, static_cast<std::size_t>(x * static_cast<double>(n)))]);
        break;
      }
    }
  }
  if (sigma_min_ >= 0 && sigma_max_ >= 0) {
    const Dim& a = space_.dims[sigma_min_];
    const Dim& b = space_.dims[sigma_max_];
    const double delta = 1e-3 * (b.hi - b.lo);
    const double top = std::min(a.hi, b.hi - delta);
    const double smin = a.lo + std::clamp(u[sigma_min_], 0.0, 1.0) * (top - a.lo);
    const double lo2 = std::max(b.lo, smin + delta);
    const double smax = lo2 + std::clamp(u[sigma_max_], 0.0, 1.0) * (b.hi - lo2);
    out.values[sigma_min_] = smin;
    out.values[sigma_max_] = smax;
  }
  return out;
}

Eigen::RowVectorXd UnitCodec::features(const std::vector<double>& u) const {
  Eigen::RowVectorXd f = Eigen::RowVectorXd::Zero(static_cast<Eigen::Index>(feature_size_));
  Eigen::Index k = 0;
  for (std::size_t i = 0; i < space_.size(); ++i) {
    const Dim& d = space_.dims[i];
    const double x = std::clamp(u[i], 0.0, 1.0);
    if (d.kind == DimKind::categorical) {
      const std::size_t n = d.values.size();
      f[k + static_cast<Eigen::Index>(std::min(n - 1, static_cast<std::size_t>(x * static_cast<double>(n))))] = 1.0;
      k += static_cast<Eigen::Index>(n);
    } else {
      f[k++] = x;
    }
  }
  return f;
}

std::vector<std::vector<double>> latin_hypercube(std::size_t n, std::size_t d, Rng& rng,
                                                 const std::vector<bool>& uniform_dims) {
  std::vector<std::vector<double>> out(n, std::vector<double>(d));
  std::vector<std::size_t> perm(n);
  for (std::size_t j = 0; j < d; ++j) {
    const bool uniform = j < uniform_dims.size() && uniform_dims[j];
    std::iota(perm.begin(), perm.end(), 0);
    for (std::size_t i = n; i > 1; --i) std::swap(perm[i - 1], perm[uniform_index(rng, i)]);
    for (std::size_t i = 0; i < n; ++i)
      out[i][j] = uniform ? uniform01(rng)
                          : (static_cast<double>(perm[i]) + uniform01(rng)) / static_cast<double>(n);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Grid and random search

std::vector<ParamVector> grid_points(const ParamSpace& space, int levels) {
  if (levels < 1) throw DomainError("grid needs at least one level per dim");
  std::vector<std::vector<ParamValue>> axes;
  for (const Dim& d : space.dims) {
    std::vector<ParamValue> axis;
    switch (d.kind) {
      case DimKind::continuous:
        if (levels == 1) {
          axis.emplace_back(0.5 * (d.lo + d.hi));
        } else {
          for (int i = 0; i < levels; ++i) axis.emplace_back(d.lo + (d.hi - d.lo) * i / (levels - 1));
        }
        break;
      case DimKind::integer:
        if (d.cardinality() <= static_cast<std::size_t>(levels)) {
          for (std::size_t i = 0; i < d.cardinality(); ++i)
            axis.emplace_back(static_cast<std::int64_t>(d.lo) + static_cast<std::int64_t>(i) * d.step);
        } else {
          for (int i = 0; i < levels; ++i) {
            const double x = levels == 1 ? 0.5 * (d.lo + d.hi) : d.lo + (d.hi - d.lo) * i / (levels - 1);
            const ParamValue v = workflow::snap_integer(d, x);
            if (axis.empty() || axis.back() != v) axis.push_back(v);
          }
        }
        break;
      case DimKind::categorical:
        for (const auto& s : d.values) axis.emplace_back(s);
        break;
    }
    axes.push_back(std::move(axis));
  }
  int a = -1, b = -1;
  const bool has_pair = space.sigma_pair(a, b);
  std::vector<ParamVector> out;
  std::vector<std::size_t> idx(axes.size(), 0);
  if (axes.empty()) return out;
  for (;;) {
    ParamVector v;
    for (std::size_t i = 0; i < axes.size(); ++i) {
      v.names.push_back(space.dims[i].name);
      v.values.push_back(axes[i][idx[i]]);
    }
    if (!has_pair || std::get<double>(v.values[a]) < std::get<double>(v.values[b])) out.push_back(std::move(v));
    std::size_t k = axes.size();
    while (k > 0) {
      --k;
      if (++idx[k] < axes[k].size()) break;
      idx[k] = 0;
      if (k == 0) return out;
    }
  }
}

ParetoArchive grid_search(const Problem& p, int levels, std::size_t budget, std::uint64_t seed,
                          const RunControl& ctl) {
  ParetoArchive archive(p.objectives);
  Runner runner(p, seed, ctl, archive, budget);
  runner.run(grid_points(p.space, levels));
  return archive;
}

ParetoArchive random_search(const Problem& p, std::size_t budget, std::uint64_t seed, const RunControl& ctl) {
  const UnitCodec codec(p.space);
  ParetoArchive archive(p.objectives);
  Runner runner(p, seed, ctl, archive, budget);
  Rng rng = make_rng(seed, kDesignStream);
  while (!runner.done()) {
    // batches of the thread count; the draw sequence does not depend on it
    std::vector<ParamVector> batch;
    for (std::size_t i = 0; i < std::min<std::size_t>(std::max(1u, ctl.threads), runner.remaining()); ++i)
      batch.push_back(codec.decode(random_unit(rng, codec.size())));
    runner.run(batch);
  }
  return archive;
}

// ---------------------------------------------------------------------------
// MOBO

namespace {

struct Acquisition {
  const UnitCodec& codec;
  const GaussianProcess& gp;
  const GaussianProcess* feasibility;  // null when every point was feasible
  double best;

  double operator()(const std::vector<double>& u) const {
    const Eigen::RowVectorXd f = codec.features(u);
    double m = 0.0, v = 0.0;
    gp.predict(f, m, v);
    double a = expected_improvement(m, std::sqrt(v), best);
    if (feasibility) {
      double fm = 0.0, fv = 0.0;
      feasibility->predict(f, fm, fv);
      a *= normal_cdf(fm / std::sqrt(fv + 1e-6));
    }
    return a;
  }
};

std::vector<double> dirichlet_weights(Rng& rng, std::size_t m) {
  std::vector<double> w(m);
  double s = 0.0;
  for (auto& x : w) {
    double u = uniform01(rng);
    while (u <= 0.0) u = uniform01(rng);
    x = -std::log(u);
    s += x;
  }
  for (auto& x : w) x /= s;
  return w;
}

}  // namespace

ParetoArchive mobo(const Problem& p, const MoboOptions& opts, std::uint64_t seed, const RunControl& ctl) {
  if (opts.n_init < 4) throw DomainError("mobo needs n_init >= 4");
  if (opts.budget < opts.n_init) throw DomainError("mobo needs budget >= n_init");
  const UnitCodec codec(p.space);
  const std::size_t d = codec.size();
  ParetoArchive archive(p.objectives);
  Runner runner(p, seed, ctl, archive, opts.budget);
  std::vector<std::vector<double>> us;  // unit coordinates per archive entry

  // initial design
  Rng design = make_rng(seed, kDesignStream);
  std::vector<bool> categorical(d);
  for (std::size_t j = 0; j < d; ++j) categorical[j] = p.space.dims[j].kind == DimKind::categorical;
  std::vector<std::vector<double>> batch_u = latin_hypercube(opts.n_init, d, design, categorical);
  std::size_t resampled = 0;
  while (!batch_u.empty() && !runner.done()) {
    std::vector<ParamVector> batch;
    for (const auto& u : batch_u) batch.push_back(codec.decode(u));
    const auto res = runner.run(batch);
    for (std::size_t i = 0; i < res.size(); ++i) us.push_back(batch_u[i]);
    const std::size_t needed = opts.n_init - std::min(opts.n_init, archive.feasible_count());
    if (res.size() < batch_u.size() || needed == 0) break;
    if (archive.feasible_count() == 0 && resampled >= 100)
      throw ConfigError("no feasible initial point after 100 resampled draws");
    batch_u.clear();
    for (std::size_t i = 0; i < needed; ++i) batch_u.push_back(random_unit(design, d));
    resampled += needed;
  }

  Rng loop = make_rng(seed, kLoopStream);
  std::size_t iteration = 0;
  while (!runner.done()) {
    const std::uint64_t iter_seed = derive_seed(seed, 1000 + iteration++);
    const std::vector<double> w = dirichlet_weights(loop, p.objectives.size());

    std::vector<std::size_t> pos;
    const auto objs = archive.feasible_objectives(&pos);
    std::vector<double> next;
    if (objs.size() < 2) {
      next = random_unit(loop, d);
    } else {
      Eigen::MatrixXd x(static_cast<Eigen::Index>(pos.size()), static_cast<Eigen::Index>(codec.feature_size()));
      Eigen::VectorXd y(static_cast<Eigen::Index>(pos.size()));
      for (std::size_t i = 0; i < pos.size(); ++i) {
        x.row(static_cast<Eigen::Index>(i)) = codec.features(us[pos[i]]);
        y[static_cast<Eigen::Index>(i)] = chebyshev(archive.normalize(objs[i]), w, opts.rho);
      }
      GaussianProcess gp;
      gp.fit(x, y, derive_seed(iter_seed, 0), opts.gp);

      std::optional<GaussianProcess> feas;
      if (archive.feasible_count() < archive.size()) {
        Eigen::MatrixXd fx(static_cast<Eigen::Index>(archive.size()), x.cols());
        Eigen::VectorXd fy(static_cast<Eigen::Index>(archive.size()));
        for (std::size_t i = 0; i < archive.size(); ++i) {
          fx.row(static_cast<Eigen::Index>(i)) = codec.features(us[i]);
          fy[static_cast<Eigen::Index>(i)] = archive.entries()[i].feasible() ? 1.0 : -1.0;
        }
        feas.emplace();
        GpOptions fo = opts.gp;
        fo.restarts = 2;
        feas->fit(fx, fy, derive_seed(iter_seed, 1), fo);
      }
      const Acquisition acq{codec, gp, feas ? &*feas : nullptr, y.minCoeff()};

      std::vector<std::vector<double>> cands(opts.candidates);
      std::vector<double> score(opts.candidates);
      for (auto& c : cands) c = random_unit(loop, d);
      parallel_for(cands.size(), std::max(1u, ctl.threads), [&](std::size_t i) { score[i] = acq(cands[i]); });
      std::vector<std::size_t> order(cands.size());
      std::iota(order.begin(), order.end(), 0);
      const std::size_t starts = std::min(opts.refine_starts, order.size());
      std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(starts), order.end(),
                        [&](std::size_t a, std::size_t b) { return score[a] > score[b] || (score[a] == score[b] && a < b); });

      // pattern search from the best candidates
      std::vector<std::vector<double>> refined(starts);
      std::vector<double> refined_score(starts);
      parallel_for(starts, std::max(1u, ctl.threads), [&](std::size_t s) {
        std::vector<double> u = cands[order[s]];
        double best = score[order[s]];
        for (double step = 0.1; step > 0.01; step *= 0.5) {
          bool improved = true;
          while (improved) {
            improved = false;
            for (std::size_t j = 0; j < d; ++j)
              for (double dir : {1.0, -1.0}) {
                std::vector<double> t = u;
                t[j] = std::clamp(t[j] + dir * step, 0.0, 1.0);
                if (t[j] == u[j]) continue;
                const double v = acq(t);
                if (v > best) {
                  best = v;
                  u = std::move(t);
                  improved = true;
                }
              }
          }
        }
        refined[s] = std::move(u);
        refined_score[s] = best;
      });
      std::size_t pick = 0;
      for (std::size_t s = 1; s < starts; ++s)
        if (refined_score[s] > refined_score[pick]) pick = s;
      next = refined[pick];
    }
    const auto res = runner.run({codec.decode(next)});
    if (!res.empty()) us.push_back(next);
  }
  return archive;
}

// ---------------------------------------------------------------------------
// GA

std::vector<std::size_t> chromosome_order(const ParamSpace& space) {
  static const std::vector<std::string> genes = {"sigma_min", "sigma_max", "T", "w_h", "w_w", "PC", "K", "cov_type"};
  std::vector<std::size_t> out;
  std::vector<bool> used(space.size(), false);
  for (const auto& g : genes)
    for (std::size_t i = 0; i < space.size(); ++i)
      if (!used[i] && local_name(space.dims[i].name) == g) {
        out.push_back(i);
        used[i] = true;
        break;
      }
  for (std::size_t i = 0; i < space.size(); ++i)
    if (!used[i]) out.push_back(i);
  return out;
}

std::size_t ga_generations_for_budget(std::size_t budget, const GaOptions& opts) {
  if (budget <= opts.pop) return 1;
  const std::size_t per = opts.pop - std::min(opts.elites, opts.pop);
  if (per == 0) return 1;
  return 1 + (budget - opts.pop + per - 1) / per;
}

namespace {

void mutate_gene(const Dim& d, ParamValue& v, Rng& rng) {
  switch (d.kind) {
    case DimKind::continuous: {
      const double x = std::get<double>(v) + 0.1 * (d.hi - d.lo) * normal01(rng);
      v = std::clamp(x, d.lo, d.hi);
      break;
    }
    case DimKind::integer: {
      const auto x = std::get<std::int64_t>(v);
      const bool up = uniform01(rng) < 0.5;
      std::int64_t y = x + (up ? d.step : -d.step);
      if (y > static_cast<std::int64_t>(d.hi) || y < static_cast<std::int64_t>(d.lo)) y = x + (up ? -d.step : d.step);
      if (y <= static_cast<std::int64_t>(d.hi) && y >= static_cast<std::int64_t>(d.lo)) v = y;
      break;
    }
    case DimKind::categorical: v = d.values[uniform_index(rng, d.values.size())]; break;
  }
}

}  // namespace

GaResult ga_optimize(const Problem& p, const GaOptions& opts, std::uint64_t seed, const RunControl& ctl) {
  if (opts.pop < 4 || opts.pop % 2 != 0) throw DomainError("ga population must be even and at least 4");
  if (opts.elites > opts.pop || opts.tournament < 1) throw DomainError("bad ga options");
  const UnitCodec codec(p.space);
  const std::vector<std::size_t> order = chromosome_order(p.space);
  const double mut_rate = opts.mutation_rate.value_or(1.0 / static_cast<double>(std::max<std::size_t>(1, order.size())));
  int smin = -1, smax = -1;
  p.space.sigma_pair(smin, smax);

  GaResult out;
  out.archive = ParetoArchive(p.objectives);
  Runner runner(p, seed, ctl, out.archive, opts.budget);
  Rng rng = make_rng(seed, kLoopStream);

  std::vector<ParamVector> pop;
  for (std::size_t i = 0; i < opts.pop; ++i) pop.push_back(codec.decode(random_unit(rng, codec.size())));
  auto res = runner.run(pop);
  if (res.size() < pop.size()) return out;

  // objective scale from generation 0
  const std::size_t m = p.objectives.size();
  std::vector<double> scale(m, 1.0);
  {
    std::vector<double> lo(m, std::numeric_limits<double>::infinity()), hi(m, -std::numeric_limits<double>::infinity());
    for (const auto& r : res)
      if (r)
        for (std::size_t j = 0; j < m; ++j) {
          lo[j] = std::min(lo[j], r->values[j]);
          hi[j] = std::max(hi[j], r->values[j]);
        }
    for (std::size_t j = 0; j < m; ++j)
      if (hi[j] - lo[j] > 0.0 && std::isfinite(hi[j] - lo[j])) scale[j] = hi[j] - lo[j];
  }
  const std::vector<double> w = equal_weights(m);
  auto fitness_of = [&](const std::optional<rewards::RewardVector>& r) {
    if (!r) return std::numeric_limits<double>::infinity();
    Objectives x(m);
    for (std::size_t j = 0; j < m; ++j) x[j] = r->values[j] / scale[j];
    return chebyshev(x, w);
  };
  std::vector<double> fit(pop.size());
  for (std::size_t i = 0; i < pop.size(); ++i) fit[i] = fitness_of(res[i]);
  auto record = [&] {
    out.best_fitness.push_back(*std::min_element(fit.begin(), fit.end()));
    out.populations.push_back(pop);
  };
  record();

  auto tournament = [&]() {
    std::size_t best = uniform_index(rng, pop.size());
    for (std::size_t t = 1; t < opts.tournament; ++t) {
      const std::size_t c = uniform_index(rng, pop.size());
      if (fit[c] < fit[best] || (fit[c] == fit[best] && c < best)) best = c;
    }
    return best;
  };

  for (std::size_t g = 1; g < opts.generations && !runner.done(); ++g) {
    std::vector<std::size_t> rank(pop.size());
    std::iota(rank.begin(), rank.end(), 0);
    std::stable_sort(rank.begin(), rank.end(), [&](std::size_t a, std::size_t b) { return fit[a] < fit[b]; });
    std::vector<ParamVector> next;
    std::vector<double> next_fit;
    for (std::size_t e = 0; e < opts.elites; ++e) {
      next.push_back(pop[rank[e]]);
      next_fit.push_back(fit[rank[e]]);
    }
    std::vector<ParamVector> children;
    while (next.size() + children.size() < opts.pop) {
      ParamVector a = pop[tournament()];
      ParamVector b = pop[tournament()];
      for (std::size_t gi : order)
        if (uniform01(rng) < opts.crossover_rate) std::swap(a.values[gi], b.values[gi]);
      for (ParamVector* c : {&a, &b}) {
        for (std::size_t gi : order)
          if (uniform01(rng) < mut_rate) mutate_gene(p.space.dims[gi], c->values[gi], rng);
        if (smin >= 0 && smax >= 0 && std::get<double>(c->values[smin]) >= std::get<double>(c->values[smax]))
          std::swap(c->values[smin], c->values[smax]);
      }
      children.push_back(std::move(a));
      if (next.size() + children.size() < opts.pop) children.push_back(std::move(b));
    }
    res = runner.run(children);
    if (res.size() < children.size()) break;
    for (std::size_t i = 0; i < children.size(); ++i) {
      next.push_back(std::move(children[i]));
      next_fit.push_back(fitness_of(res[i]));
    }
    pop = std::move(next);
    fit = std::move(next_fit);
    record();
  }
  return out;
}

// ---------------------------------------------------------------------------
// MCTS over parameter bins

ParetoArchive mcts_optimize(const Problem& p, const MctsOptions& opts, std::uint64_t seed, const RunControl& ctl) {
  if (opts.budget < 1) throw DomainError("mcts needs a budget of at least 1");
  ParetoArchive archive(p.objectives);
  Runner runner(p, seed, ctl, archive, opts.budget);
  const std::size_t d = p.space.size();
  std::vector<std::vector<ParamValue>> bins;
  for (const Dim& dim : p.space.dims) bins.push_back(dim_bins(dim, opts.bins));
  int smin = -1, smax = -1;
  const bool pair = p.space.sigma_pair(smin, smax) && smin < smax;

  auto options_at = [&](const std::vector<int>& path) {
    const std::size_t j = path.size();
    std::vector<std::size_t> out;
    for (std::size_t k = 0; k < bins[j].size(); ++k) {
      if (pair && static_cast<int>(j) == smax &&
          !(std::get<double>(bins[j][k]) > std::get<double>(bins[smin][path[smin]])))
        continue;
      out.push_back(k);
    }
    return out;
  };
  // path entries index the filtered option list; map back to bin indices
  auto to_bins = [&](const std::vector<int>& path) {
    std::vector<int> b;
    for (std::size_t j = 0; j < path.size(); ++j) b.push_back(static_cast<int>(options_at(b)[path[j]]));
    return b;
  };

  std::map<std::vector<int>, std::optional<rewards::RewardVector>> cache;
  MctsCallbacks cb;
  cb.num_actions = [&](const std::vector<int>& path) -> std::size_t {
    if (path.size() == d) return 0;
    const auto b = to_bins(path);
    return options_at(b).size();
  };
  cb.stop = [&] { return runner.done(); };
  cb.value = [&](const std::vector<int>& path, bool, Rng& rng) -> double {
    std::vector<int> b = to_bins(path);
    while (b.size() < d) {
      const auto opts_here = options_at(b);
      if (opts_here.empty()) return -1.1;
      b.push_back(static_cast<int>(opts_here[uniform_index(rng, opts_here.size())]));
    }
    auto it = cache.find(b);
    if (it == cache.end()) {
      ParamVector v;
      for (std::size_t j = 0; j < d; ++j) {
        v.names.push_back(p.space.dims[j].name);
        v.values.push_back(bins[j][b[j]]);
      }
      const auto res = runner.run({v});
      if (res.empty()) return -1.1;  // stopped
      it = cache.emplace(b, res[0]).first;
    }
    if (!it->second) return -1.1;
    return -chebyshev(archive.normalize(it->second->values), equal_weights(p.objectives.size()));
  };
  mcts_run(cb, 50 * opts.budget, opts.c_ucb, seed);
  return archive;
}

}  // namespace rflow::optimize
