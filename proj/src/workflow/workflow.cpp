#include "rflow/workflow/workflow.hpp"

#include <algorithm>
#include <cstdio>
#include <set>
#include <sstream>

#include "rflow/core/errors.hpp"
#include "rflow/core/rng.hpp"

namespace rflow::workflow {

std::string to_string(Kind k) {
  switch (k) {
    case Kind::image: return "image";
    case Kind::keypoints: return "keypoints";
    case Kind::descriptors: return "descriptors";
    case Kind::labels: return "labels";
  }
  return "image";
}

Kind parse_kind(const std::string& s) {
  if (s == "image") return Kind::image;
  if (s == "keypoints") return Kind::keypoints;
  if (s == "descriptors") return Kind::descriptors;
  if (s == "labels") return Kind::labels;
  throw ConfigError("unknown kind '" + s + "'");
}

Kind WorkflowState::kind() const {
  if (labels) return Kind::labels;
  if (descriptors) return Kind::descriptors;
  if (keypoints) return Kind::keypoints;
  return Kind::image;
}

std::vector<imaging::Point> WorkflowState::labeled_points() const {
  if (!keypoints) return {};
  if (!descriptors) return keypoints->coords;
  std::vector<imaging::Point> out;
  out.reserve(descriptors->kept.size());
  for (std::size_t i : descriptors->kept) out.push_back(keypoints->coords[i]);
  return out;
}

bool WorkflowState::operator==(const WorkflowState& o) const {
  return keypoints == o.keypoints && descriptor_spec == o.descriptor_spec && descriptors == o.descriptors &&
         labels == o.labels && region == o.region && label_map == o.label_map && walls == o.walls &&
         provenance == o.provenance;
}

// ---------------------------------------------------------------------------

ImageContext::ImageContext(imaging::Image img) : image_(std::move(img)) {}

const rewards::CountOracle& ImageContext::oracle() const {
  std::lock_guard lock(mutex_);
  if (!oracle_ && !oracle_error_) {
    try {
      if (spacing_override_) {
        rewards::CountOracle o;
        o.spacing = *spacing_override_;
        o.area = rewards::lattice_region(image_, o.spacing).area;
        o.count = o.area / (o.spacing * o.spacing);
        oracle_ = o;
      } else {
        oracle_ = rewards::physics_count_oracle(image_);
      }
    } catch (const DomainError& e) {
      oracle_error_ = e.what();
    }
  }
  if (oracle_error_) {
    if (*oracle_error_ == NoLatticeError().what()) throw NoLatticeError();
    throw DomainError(*oracle_error_);
  }
  return *oracle_;
}

void ImageContext::set_spacing(double spacing) {
  if (!(spacing > 0.0)) throw ConfigError("spacing must be positive");
  std::lock_guard lock(mutex_);
  spacing_override_ = spacing;
  oracle_.reset();
  oracle_error_.reset();
}

// ---------------------------------------------------------------------------
// Steps

namespace {

const imaging::Keypoints& need_keypoints(const WorkflowState& s) {
  if (!s.keypoints) throw DomainError("no keypoints in state");
  return *s.keypoints;
}

const features::DescriptorMatrix& need_descriptors(const WorkflowState& s) {
  if (!s.descriptors) throw DomainError("no descriptors in state");
  return *s.descriptors;
}

const learn::ClusterLabels& need_labels(const WorkflowState& s) {
  if (!s.labels) throw DomainError("no cluster labels in state");
  return *s.labels;
}

void step_detect_blobs(WorkflowState& s, const ParamVector& v, std::uint64_t, const ImageContext& ctx) {
  imaging::LoGParams p;
  p.sigma_min = v.get_double("sigma_min");
  p.sigma_max = v.get_double("sigma_max");
  p.threshold = v.get_double("T");
  p.overlap = v.get_double("theta");
  p.n_scales = static_cast<int>(v.get_int("n_scales"));
  s.keypoints = imaging::detect_blobs(ctx.image(), p);
}

// Downstream clustering is meaningless when detection missed the lattice.
void step_lattice_gate(WorkflowState& s, const ParamVector& v, std::uint64_t, const ImageContext& ctx) {
  const double n = static_cast<double>(need_keypoints(s).size());
  const double d = rewards::count_discrepancy(n, ctx.oracle().count);
  if (d > v.get_double("max_discrepancy"))
    throw DomainError("detected " + std::to_string(static_cast<long>(n)) + " keypoints, too far from the expected " +
                      std::to_string(static_cast<long>(std::lround(ctx.oracle().count))));
}

void step_extract_patches(WorkflowState& s, const ParamVector& v, std::uint64_t, const ImageContext& ctx) {
  const auto spec = features::DescriptorSpec::rectangle(static_cast<int>(v.get_int("w_h")),
                                                        static_cast<int>(v.get_int("w_w")));
  auto d = features::extract_patches(ctx.image(), need_keypoints(s), spec);
  if (d.size() == 0) throw DomainError("no keypoint window fits inside the image");
  s.descriptor_spec = spec;
  s.descriptors = std::move(d);
}

void step_fft_magnitude(WorkflowState& s, const ParamVector&, std::uint64_t, const ImageContext&) {
  if (!s.descriptor_spec) throw DomainError("no descriptor spec in state");
  s.descriptors = features::fft_magnitude(need_descriptors(s), *s.descriptor_spec);
  s.descriptor_spec->transform = features::Transform::fft_magnitude;
}

void step_pca(WorkflowState& s, const ParamVector& v, std::uint64_t, const ImageContext&) {
  const auto pc = v.get_int("PC");
  if (pc == 0) return;
  auto d = need_descriptors(s);
  const auto model = learn::pca_fit(d.rows, pc);
  d.rows = learn::pca_transform(model, d.rows);
  s.descriptors = std::move(d);
}

void step_gmm(WorkflowState& s, const ParamVector& v, std::uint64_t seed, const ImageContext&) {
  const auto& d = need_descriptors(s);
  const int k = static_cast<int>(v.get_int("K"));
  const auto type = learn::parse_covariance_type(v.get_string("cov_type"));
  learn::GmmOptions opts;
  opts.max_iter = 100;
  opts.min_component_mass = 2.0;
  const auto model = learn::gmm_fit(d.rows, k, type, seed, opts);
  s.labels = learn::gmm_predict(model, d.rows);
}

void step_kmeans(WorkflowState& s, const ParamVector& v, std::uint64_t seed, const ImageContext&) {
  const auto& d = need_descriptors(s);
  s.labels = learn::kmeans(d.rows, static_cast<int>(v.get_int("K")), seed).labels;
}

void step_mask(WorkflowState& s, const ParamVector&, std::uint64_t, const ImageContext& ctx) {
  const auto& c = need_labels(s);
  const int target = c.num_clusters() - 1;  // smallest canonical cluster
  const auto& img = ctx.image();
  s.region = rewards::mask_from_clusters(s.labeled_points(), c, target, img.width(), img.height(), ctx.spacing());
}

void step_walls(WorkflowState& s, const ParamVector&, std::uint64_t, const ImageContext& ctx) {
  const auto& c = need_labels(s);
  const auto& img = ctx.image();
  s.label_map = rewards::rasterize_labels(s.labeled_points(), c, img.width(), img.height(), ctx.spacing());
  std::set<int> distinct;
  for (int l : c.labels)
    if (l >= 0) distinct.insert(l);
  s.walls = distinct.size() < 2 ? rewards::WallSet{} : rewards::walls_from_label_map(*s.label_map);
}

const std::map<std::string, StepFn>& step_table() {
  static const std::map<std::string, StepFn> table{
      {"detect_blobs", step_detect_blobs},   {"extract_patches", step_extract_patches},
      {"fft_magnitude", step_fft_magnitude}, {"pca", step_pca},
      {"gmm", step_gmm},                     {"kmeans", step_kmeans},
      {"mask_from_clusters", step_mask},     {"extract_walls", step_walls},
      {"lattice_gate", step_lattice_gate},
  };
  return table;
}

const rewards::WallSet& need_walls(const WorkflowState& s) {
  if (!s.walls) throw DomainError("no wall set in state");
  return *s.walls;
}

const imaging::Mask& need_region(const WorkflowState& s) {
  if (!s.region) throw DomainError("no region mask in state");
  return *s.region;
}

const std::map<std::string, RewardSpec>& reward_table() {
  using S = WorkflowState;
  using C = ImageContext;
  static const std::map<std::string, RewardSpec> table{
      {"count_discrepancy",
       {"count_discrepancy", Kind::keypoints,
        [](const S& s, const C& c) {
          return rewards::count_discrepancy(static_cast<double>(need_keypoints(s).size()), c.oracle().count);
        }}},
      {"lattice_error",
       {"lattice_error", Kind::keypoints,
        [](const S& s, const C& c) { return rewards::lattice_error(need_keypoints(s).coords, c.spacing()); }}},
      {"compactness",
       {"compactness", Kind::labels, [](const S& s, const C&) { return rewards::compactness(need_region(s)); }}},
      {"perimeter",
       {"perimeter", Kind::labels, [](const S& s, const C&) { return rewards::perimeter(need_region(s)); }}},
      {"straightness",
       {"straightness", Kind::labels, [](const S& s, const C&) { return rewards::straightness(need_walls(s)); }}},
      {"wall_length",
       {"wall_length", Kind::labels,
        [](const S& s, const C& c) {
          return rewards::wall_length(need_walls(s), c.image().width(), c.image().height());
        }}},
  };
  return table;
}

ParamVector merge(const ParamVector& local, const ParamVector& fixed) {
  ParamVector out = local;
  for (std::size_t i = 0; i < fixed.size(); ++i)
    if (!out.has(fixed.names[i])) out.set(fixed.names[i], fixed.values[i]);
  return out;
}

void run_one(WorkflowState& s, const std::string& op_id, const std::string& prefix, const ParamVector& local,
             std::uint64_t seed, const ImageContext& ctx) {
  try {
    step_function(op_id)(s, local, seed, ctx);
  } catch (const StepError&) {
    throw;
  } catch (const DomainError& e) {
    throw StepError(op_id, e.what());
  }
  s.provenance.push_back({op_id, prefix, local});
}

}  // namespace

const StepFn& step_function(const std::string& op_id) {
  const auto& t = step_table();
  const auto it = t.find(op_id);
  if (it == t.end()) throw ConfigError("unknown operation '" + op_id + "'");
  return it->second;
}

std::vector<std::string> registered_operations() {
  std::vector<std::string> out;
  for (const auto& [k, v] : step_table()) out.push_back(k);
  return out;
}

const RewardSpec& reward_spec(const std::string& name) {
  const auto& t = reward_table();
  const auto it = t.find(name);
  if (it == t.end()) throw ConfigError("unknown reward '" + name + "'");
  return it->second;
}

std::vector<std::string> registered_rewards() {
  std::vector<std::string> out;
  for (const auto& [k, v] : reward_table()) out.push_back(k);
  return out;
}

// ---------------------------------------------------------------------------

ParamSpace Pipeline::joint_space() const {
  ParamSpace out;
  for (const auto& op : steps)
    for (Dim d : op.params.dims) {
      d.name = op.prefix + "." + d.name;
      out.dims.push_back(std::move(d));
    }
  return out;
}

void Pipeline::validate() const {
  if (steps.empty()) throw DomainError("pipeline has no steps");
  if (steps.front().input != Kind::image) throw DomainError("pipeline must start from an image");
  std::set<std::string> prefixes;
  for (std::size_t i = 0; i < steps.size(); ++i) {
    if (!prefixes.insert(steps[i].prefix).second) throw DomainError("duplicate step prefix '" + steps[i].prefix + "'");
    if (i > 0 && steps[i - 1].output != steps[i].input)
      throw DomainError("step '" + steps[i].id + "' cannot follow '" + steps[i - 1].id + "'");
    steps[i].params.validate();
  }
  for (const auto& r : rewards) reward_spec(r);
  joint_space().validate();
}

WorkflowState run_steps(const Pipeline& p, const ImageContext& ctx, const ParamVector& v, std::uint64_t seed) {
  p.joint_space().check(v);
  WorkflowState s;
  for (std::size_t i = 0; i < p.steps.size(); ++i) {
    const auto& op = p.steps[i];
    run_one(s, op.id, op.prefix, merge(v.slice(op.prefix), op.fixed), derive_seed(seed, i), ctx);
  }
  return s;
}

rewards::RewardVector score(const std::vector<std::string>& reward_names, const WorkflowState& s,
                            const ImageContext& ctx) {
  rewards::RewardVector r;
  for (const auto& name : reward_names) {
    double value;
    try {
      value = reward_spec(name).fn(s, ctx);
    } catch (const DomainError& e) {
      throw StepError("reward:" + name, e.what());
    }
    r.names.push_back(name);
    r.values.push_back(value);
  }
  try {
    r.validate();
  } catch (const DomainError& e) {
    throw StepError("rewards", e.what());
  }
  return r;
}

Evaluation execute(const Pipeline& p, const ImageContext& ctx, const ParamVector& v, std::uint64_t seed) {
  Evaluation e;
  e.state = run_steps(p, ctx, v, seed);
  e.rewards = score(p.rewards, e.state, ctx);
  return e;
}

WorkflowState replay(const std::vector<ProvenanceEntry>& log, const ImageContext& ctx, std::uint64_t seed) {
  WorkflowState s;
  for (std::size_t i = 0; i < log.size(); ++i)
    run_one(s, log[i].op_id, log[i].prefix, log[i].params, derive_seed(seed, i), ctx);
  return s;
}

// ---------------------------------------------------------------------------
// Text forms

namespace {

std::string typed_value(const ParamValue& v) {
  char buf[64];
  if (const auto* d = std::get_if<double>(&v)) {
    std::snprintf(buf, sizeof buf, "d:%.17g", *d);
    return buf;
  }
  if (const auto* i = std::get_if<std::int64_t>(&v)) return "i:" + std::to_string(*i);
  return "s:" + std::get<std::string>(v);
}

ParamValue parse_typed(const std::string& t) {
  if (t.size() < 2 || t[1] != ':') throw ConfigError("bad typed value '" + t + "'");
  const std::string body = t.substr(2);
  try {
    switch (t[0]) {
      case 'd': return std::stod(body);
      case 'i': return static_cast<std::int64_t>(std::stoll(body));
      case 's': return body;
    }
  } catch (const std::logic_error&) {
  }
  throw ConfigError("bad typed value '" + t + "'");
}

std::string typed_params(const ParamVector& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += " " + v.names[i] + "=" + typed_value(v.values[i]);
  return out;
}

ParamVector parse_typed_params(std::istringstream& in) {
  ParamVector v;
  std::string tok;
  while (in >> tok) {
    const auto eq = tok.find('=');
    if (eq == std::string::npos) throw ConfigError("bad parameter token '" + tok + "'");
    v.names.push_back(tok.substr(0, eq));
    v.values.push_back(parse_typed(tok.substr(eq + 1)));
  }
  return v;
}

}  // namespace

std::string provenance_to_text(const std::vector<ProvenanceEntry>& log, std::uint64_t seed) {
  std::ostringstream os;
  os << "seed " << seed << "\n";
  for (const auto& e : log) os << "step " << e.op_id << ' ' << e.prefix << typed_params(e.params) << "\n";
  return os.str();
}

std::vector<ProvenanceEntry> provenance_from_text(const std::string& text, std::uint64_t& seed) {
  std::vector<ProvenanceEntry> log;
  std::istringstream in(text);
  std::string line;
  seed = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string tag;
    ls >> tag;
    if (tag == "seed") {
      ls >> seed;
    } else if (tag == "step") {
      ProvenanceEntry e;
      ls >> e.op_id >> e.prefix;
      e.params = parse_typed_params(ls);
      log.push_back(std::move(e));
    } else {
      throw ConfigError("unexpected provenance line '" + line + "'");
    }
  }
  return log;
}

std::string pipeline_to_text(const Pipeline& p) {
  std::ostringstream os;
  os.precision(17);
  os << "pipeline " << p.name << "\n";
  for (const auto& op : p.steps) {
    os << "step " << op.id << ' ' << op.prefix << ' ' << to_string(op.input) << ' ' << to_string(op.output) << "\n";
    for (const Dim& d : op.params.dims) {
      os << "param " << d.name << ' ' << to_string(d.kind);
      if (d.kind == DimKind::categorical) {
        for (const auto& v : d.values) os << ' ' << v;
      } else {
        os << ' ' << d.lo << ' ' << d.hi;
        if (d.kind == DimKind::integer) os << ' ' << d.step;
      }
      os << "\n";
    }
    if (op.fixed.size() > 0) os << "fixed" << typed_params(op.fixed) << "\n";
  }
  for (const auto& r : p.rewards) os << "reward " << r << "\n";
  return os.str();
}

Pipeline pipeline_from_text(const std::string& text) {
  Pipeline p;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    std::string tag;
    ls >> tag;
    if (tag == "pipeline") {
      ls >> p.name;
    } else if (tag == "step") {
      OperationSpec op;
      std::string in_kind, out_kind;
      ls >> op.id >> op.prefix >> in_kind >> out_kind;
      op.input = parse_kind(in_kind);
      op.output = parse_kind(out_kind);
      step_function(op.id);
      p.steps.push_back(std::move(op));
    } else if (tag == "param" || tag == "fixed") {
      if (p.steps.empty()) throw ConfigError("'" + tag + "' before any step");
      auto& op = p.steps.back();
      if (tag == "fixed") {
        op.fixed = parse_typed_params(ls);
        continue;
      }
      std::string name, kind;
      ls >> name >> kind;
      if (kind == "categorical") {
        std::vector<std::string> values;
        std::string v;
        while (ls >> v) values.push_back(v);
        op.params.dims.push_back(Dim::categorical(name, values));
      } else if (kind == "integer") {
        int lo, hi, step = 1;
        ls >> lo >> hi;
        if (!(ls >> step)) step = 1;
        op.params.dims.push_back(Dim::integer(name, lo, hi, step));
      } else if (kind == "continuous") {
        double lo, hi;
        if (!(ls >> lo >> hi)) throw ConfigError("bad continuous range for '" + name + "'");
        op.params.dims.push_back(Dim::continuous(name, lo, hi));
      } else {
        throw ConfigError("unknown dimension kind '" + kind + "'");
      }
    } else if (tag == "reward") {
      std::string r;
      ls >> r;
      p.rewards.push_back(r);
    } else {
      throw ConfigError("unexpected pipeline line '" + line + "'");
    }
  }
  try {
    p.validate();
  } catch (const DomainError& e) {
    throw ConfigError(e.what());
  }
  return p;
}

// ---------------------------------------------------------------------------
// Built-ins

namespace {

ParamVector fixed_params(std::initializer_list<std::pair<std::string, ParamValue>> kv) {
  ParamVector v;
  for (const auto& [k, x] : kv) v.set(k, x);
  return v;
}

}  // namespace

OperationSpec op_detect_blobs() {
  OperationSpec op{"detect_blobs", "blobs", Kind::image, Kind::keypoints, {}, {}};
  op.params.dims = {Dim::continuous("sigma_min", 0.5, 4.0), Dim::continuous("sigma_max", 1.0, 8.0),
                    Dim::continuous("T", 0.0, 0.5), Dim::continuous("theta", 0.0, 1.0)};
  op.fixed = fixed_params({{"n_scales", std::int64_t{10}}});
  return op;
}

OperationSpec op_lattice_gate(double max_discrepancy) {
  OperationSpec op{"lattice_gate", "gate", Kind::keypoints, Kind::keypoints, {}, {}};
  op.fixed = fixed_params({{"max_discrepancy", max_discrepancy}});
  return op;
}

OperationSpec op_extract_patches() {
  OperationSpec op{"extract_patches", "patches", Kind::keypoints, Kind::descriptors, {}, {}};
  op.params.dims = {Dim::integer("w_h", 17, 31, 2), Dim::integer("w_w", 17, 31, 2)};
  return op;
}

OperationSpec op_fft_magnitude() { return {"fft_magnitude", "fft", Kind::descriptors, Kind::descriptors, {}, {}}; }

OperationSpec op_pca() {
  OperationSpec op{"pca", "pca", Kind::descriptors, Kind::descriptors, {}, {}};
  op.params.dims = {Dim::integer("PC", 0, 8)};
  return op;
}

OperationSpec op_gmm(bool search_k) {
  OperationSpec op{"gmm", "gmm", Kind::descriptors, Kind::labels, {}, {}};
  if (search_k) op.params.dims.push_back(Dim::integer("K", 2, 6));
  op.params.dims.push_back(Dim::categorical("cov_type", learn::covariance_type_names()));
  if (!search_k) op.fixed = fixed_params({{"K", std::int64_t{2}}});
  return op;
}

OperationSpec op_kmeans() {
  OperationSpec op{"kmeans", "kmeans", Kind::descriptors, Kind::labels, {}, {}};
  op.params.dims = {Dim::integer("K", 2, 6)};
  return op;
}

OperationSpec op_mask_from_clusters() { return {"mask_from_clusters", "mask", Kind::labels, Kind::labels, {}, {}}; }

OperationSpec op_extract_walls() { return {"extract_walls", "walls", Kind::labels, Kind::labels, {}, {}}; }

Pipeline log_star_pipeline() { return {"log_star", {op_detect_blobs()}, {"count_discrepancy", "lattice_error"}}; }

Pipeline amorphous_pipeline() {
  return {"amorphous",
          {op_detect_blobs(), op_lattice_gate(), op_extract_patches(), op_gmm(false), op_mask_from_clusters()},
          {"compactness", "perimeter"}};
}

Pipeline walls_pipeline() {
  return {"walls",
          {op_detect_blobs(), op_lattice_gate(), op_extract_patches(), op_pca(), op_gmm(true), op_extract_walls()},
          {"straightness", "wall_length"}};
}

std::vector<Pipeline> builtin_pipelines() { return {log_star_pipeline(), amorphous_pipeline(), walls_pipeline()}; }

Pipeline builtin_pipeline(const std::string& name) {
  for (auto& p : builtin_pipelines())
    if (p.name == name) return p;
  throw ConfigError("unknown pipeline '" + name + "' (expected log_star, amorphous, walls)");
}

std::vector<OperationSpec> default_catalog() {
  return {op_detect_blobs(), op_extract_patches(), op_fft_magnitude(), op_pca(),
          op_gmm(true),      op_kmeans(),          op_mask_from_clusters(), op_extract_walls()};
}

RewardRegistry default_reward_registry() {
  return {{Kind::keypoints, {"count_discrepancy", "lattice_error"}},
          {Kind::labels, {"compactness", "perimeter", "straightness", "wall_length"}}};
}

std::vector<Pipeline> enumerate_workflows(const std::vector<OperationSpec>& catalog, int max_len,
                                          const RewardRegistry& registry) {
  if (max_len < 1) throw DomainError("max_len must be >= 1");
  std::vector<const OperationSpec*> ops;
  for (const auto& op : catalog) ops.push_back(&op);
  std::sort(ops.begin(), ops.end(), [](auto* a, auto* b) { return a->id < b->id; });

  std::vector<Pipeline> out;
  std::vector<const OperationSpec*> path;
  auto has_reward = [&](Kind k) {
    const auto it = registry.find(k);
    return it != registry.end() && !it->second.empty();
  };
  // Depth-first over sorted ids yields lexicographic order of id sequences.
  std::function<void(Kind)> dfs = [&](Kind current) {
    if (!path.empty() && has_reward(current)) {
      Pipeline p;
      for (std::size_t i = 0; i < path.size(); ++i) {
        p.name += (i ? "+" : "") + path[i]->id;
        OperationSpec op = *path[i];
        op.prefix = std::to_string(i) + "_" + op.prefix;
        p.steps.push_back(std::move(op));
      }
      p.rewards = registry.at(current);
      out.push_back(std::move(p));
    }
    if (static_cast<int>(path.size()) == max_len) return;
    for (const auto* op : ops) {
      if (op->input != current) continue;
      path.push_back(op);
      dfs(op->output);
      path.pop_back();
    }
  };
  dfs(Kind::image);
  return out;
}

}  // namespace rflow::workflow
