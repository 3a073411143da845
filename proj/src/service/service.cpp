#include "rflow/service/service.hpp"

#include <algorithm>
#include <atomic>
#include <condition_variable>
#include <map>
#include <mutex>
#include <random>
#include <thread>

#include "rflow/app/app.hpp"
#include "rflow/core/errors.hpp"

// After Eigen: httplib pulls in resolv.h, whose _res macro breaks Eigen.
#include <httplib.h>
#include <json.hpp>

namespace rflow::service {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

struct HttpError : std::runtime_error {
  HttpError(int status, const std::string& what) : std::runtime_error(what), status(status) {}
  int status;
};

struct StoredEvaluation {
  imaging::Bytes overlay_png;
  imaging::Bytes label_map_png;
};

struct Session {
  std::string id;
  app::RunConfig cfg;
  workflow::Pipeline pipeline;
  std::shared_ptr<const workflow::ImageContext> ctx;
  fs::path dir;

  std::mutex mu;
  std::condition_variable cv;
  std::shared_ptr<const optimize::ParetoArchive> snapshot;
  bool paused = false;
  bool stop = false;
  bool finished = false;
  std::string final_status;
  std::string error;
  std::vector<double> weights;
  std::map<std::uint64_t, StoredEvaluation> evaluations;
  std::uint64_t next_eid = 0;

  std::thread worker;

  std::string status_locked() const {
    if (finished) return final_status;
    return paused ? "paused" : "running";
  }
};

constexpr std::size_t kKeptEvaluations = 32;

json params_json(const workflow::ParamVector& v) {
  json o = json::object();
  for (std::size_t i = 0; i < v.size(); ++i)
    std::visit([&](const auto& x) { o[v.names[i]] = x; }, v.values[i]);
  return o;
}

json rewards_json(const rewards::RewardVector& r) {
  json o = json::object();
  for (std::size_t i = 0; i < r.size(); ++i) o[r.names[i]] = r.values[i];
  return o;
}

json entry_json(const optimize::ParetoArchive& a, std::size_t pos, std::uint64_t seed) {
  const auto& e = a.entries()[pos];
  return json{{"index", e.index},
              {"seed", optimize::evaluation_seed(seed, e.index)},
              {"params", params_json(e.params)},
              {"param_text", workflow::format_params(e.params)},
              {"objectives", e.rewards->values}};
}

// Front positions sorted by the weighted scalarization, ties by index.
std::vector<std::pair<std::size_t, double>> rank_front(const optimize::ParetoArchive& a,
                                                       const std::vector<double>& w) {
  std::vector<std::pair<std::size_t, double>> ranked;
  for (std::size_t pos : a.front())
    ranked.emplace_back(pos, optimize::chebyshev(a.normalize(a.entries()[pos].rewards->values), w));
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const auto& x, const auto& y) { return x.second < y.second; });
  return ranked;
}

void check_weights(const std::vector<double>& w, std::size_t m) {
  if (w.size() != m) throw HttpError(400, "expected " + std::to_string(m) + " weights");
  double sum = 0.0;
  for (double x : w) {
    if (!std::isfinite(x) || x < -1e-9) throw HttpError(400, "weights must be non-negative");
    sum += x;
  }
  if (std::abs(sum - 1.0) > 1e-9) throw HttpError(400, "weights must sum to 1");
}

json parse_body(const httplib::Request& req) {
  if (req.body.empty()) return json::object();
  try {
    json j = json::parse(req.body);
    if (!j.is_object()) throw HttpError(400, "request body must be a JSON object");
    return j;
  } catch (const json::exception& e) {
    throw HttpError(400, std::string("malformed JSON: ") + e.what());
  }
}

template <class T>
T field(const json& j, const char* key, T fallback) {
  if (!j.contains(key) || j[key].is_null()) return fallback;
  try {
    return j[key].get<T>();
  } catch (const json::exception&) {
    throw HttpError(400, std::string("bad value for '") + key + "'");
  }
}

app::SceneOptions scene_from_json(const json& j) {
  app::SceneOptions o;
  auto& s = o.spec;
  s.rows = field(j, "rows", 20);
  s.cols = field(j, "cols", 20);
  s.spacing = field(j, "spacing", s.spacing);
  s.atom_sigma = field(j, "atom_sigma", s.atom_sigma);
  s.amplitude = field(j, "amplitude", s.amplitude);
  s.orientation = field(j, "orientation", s.orientation);
  s.width = field(j, "width", 0);
  s.height = field(j, "height", 0);
  s.amorphous_radius = field(j, "amorphous_radius", 0.0);
  s.amorphous_jitter = field(j, "amorphous_jitter", s.amorphous_jitter);
  s.domain_split = imaging::parse_domain_split(field<std::string>(j, "domain", "none"));
  s.wall_amplitude = field(j, "wall_amplitude", s.wall_amplitude);
  s.wall_period = field(j, "wall_period", s.wall_period);
  s.polarization = field(j, "polarization", s.polarization);
  o.noise = field(j, "noise", 0.0);
  o.seed = field<std::uint64_t>(j, "seed", 0);
  return o;
}

std::string random_token() {
  std::random_device rd;
  char buf[17];
  std::snprintf(buf, sizeof buf, "%08x%08x", rd(), rd());
  return buf;
}

}  // namespace

struct Service::Impl {
  ServiceConfig cfg;
  httplib::Server svr;
  bool bound = false;

  std::mutex mu;  // sessions, counters
  std::map<std::string, std::shared_ptr<Session>> sessions;
  std::uint64_t next_session = 1;
  const std::string token = random_token();

  std::mutex slot_mu;
  std::condition_variable slot_cv;
  unsigned busy = 0;
  bool shutting = false;

  std::mutex lane_mu;
  std::condition_variable lane_cv;
  int in_flight = 0;

  std::once_flag shutdown_once;

  explicit Impl(ServiceConfig c) : cfg(std::move(c)) { routes(); }

  std::shared_ptr<Session> find(const std::string& id) {
    std::lock_guard lk(mu);
    auto it = sessions.find(id);
    if (it == sessions.end()) throw HttpError(404, "unknown session '" + id + "'");
    return it->second;
  }

  template <class F>
  httplib::Server::Handler handler(F f) {
    return [f](const httplib::Request& req, httplib::Response& res) {
      try {
        f(req, res);
      } catch (const HttpError& e) {
        reply(res, e.status, json{{"error", e.what()}});
      } catch (const ConfigError& e) {
        reply(res, 400, json{{"error", e.what()}});
      } catch (const DomainError& e) {
        reply(res, 400, json{{"error", e.what()}, {"infeasible", true}});
      } catch (const std::exception& e) {
        reply(res, 500, json{{"error", e.what()}});
      }
    };
  }

  static void reply(httplib::Response& res, int status, const json& body) {
    res.status = status;
    res.set_content(body.dump() + "\n", "application/json");
  }

  void routes() {
    svr.set_default_headers({{"Access-Control-Allow-Origin", "*"},
                             {"Access-Control-Allow-Headers", "Content-Type"},
                             {"Access-Control-Allow-Methods", "GET, POST, OPTIONS"}});
    svr.set_payload_max_length(64u << 20);
    svr.Options(".*", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });

    svr.Get("/healthz", handler([](const httplib::Request&, httplib::Response& res) {
              reply(res, 200, json{{"status", "ok"}, {"version", app::git_describe()}});
            }));
    svr.Post("/sessions", handler([this](const httplib::Request& req, httplib::Response& res) {
               reply(res, 201, create_session(parse_body(req)));
             }));
    svr.Get("/sessions/:id/front", handler([this](const httplib::Request& req, httplib::Response& res) {
              reply(res, 200, front(*find(req.path_params.at("id"))));
            }));
    svr.Post("/sessions/:id/evaluate", handler([this](const httplib::Request& req, httplib::Response& res) {
               auto s = find(req.path_params.at("id"));
               reply(res, 200, evaluate(s, parse_body(req)));
             }));
    svr.Get("/sessions/:id/evaluations/:eid/:file",
            handler([this](const httplib::Request& req, httplib::Response& res) {
              auto s = find(req.path_params.at("id"));
              const std::string& file = req.path_params.at("file");
              std::uint64_t eid = 0;
              try {
                eid = std::stoull(req.path_params.at("eid"));
              } catch (const std::logic_error&) {
                throw HttpError(404, "unknown evaluation");
              }
              std::lock_guard lk(s->mu);
              auto it = s->evaluations.find(eid);
              if (it == s->evaluations.end()) throw HttpError(404, "unknown evaluation");
              if (file != "overlay.png" && file != "label_map.png") throw HttpError(404, "unknown artifact");
              const auto& bytes = file == "overlay.png" ? it->second.overlay_png : it->second.label_map_png;
              res.set_content(std::string(bytes.begin(), bytes.end()), "image/png");
            }));
    svr.Post("/sessions/:id/weights", handler([this](const httplib::Request& req, httplib::Response& res) {
               auto s = find(req.path_params.at("id"));
               reply(res, 200, set_weights(*s, parse_body(req)));
             }));
    svr.Post("/sessions/:id/pause", handler([this](const httplib::Request& req, httplib::Response& res) {
               reply(res, 200, pause_resume(*find(req.path_params.at("id")), true));
             }));
    svr.Post("/sessions/:id/resume", handler([this](const httplib::Request& req, httplib::Response& res) {
               reply(res, 200, pause_resume(*find(req.path_params.at("id")), false));
             }));
    svr.Get("/runs", handler([this](const httplib::Request&, httplib::Response& res) {
              reply(res, 200, list_runs());
            }));
    svr.Get("/runs/:name/front", handler([this](const httplib::Request& req, httplib::Response& res) {
              reply(res, 200, run_front(req.path_params.at("name")));
            }));
  }

  json create_session(const json& body) {
    auto s = std::make_shared<Session>();
    const std::string pipeline = field<std::string>(body, "pipeline", "");
    try {
      s->pipeline = workflow::builtin_pipeline(pipeline);
    } catch (const ConfigError&) {
      std::string names;
      for (const auto& p : workflow::builtin_pipelines()) names += (names.empty() ? "" : ", ") + p.name;
      throw HttpError(400, "unknown pipeline '" + pipeline + "' (valid pipelines: " + names + ")");
    }

    const json opt = body.contains("optimizer") ? body["optimizer"] : json::object();
    if (!opt.is_object()) throw HttpError(400, "'optimizer' must be an object");
    auto& rc = s->cfg;
    rc.pipeline = pipeline;
    rc.optimizer = field<std::string>(opt, "name", rc.optimizer);
    rc.budget = field(opt, "budget", rc.budget);
    rc.seed = field(opt, "seed", rc.seed);
    rc.n_init = field(opt, "n_init", rc.n_init);
    rc.pop = field(opt, "pop", rc.pop);
    rc.levels = field(opt, "levels", rc.levels);
    rc.c_ucb = field(opt, "c_ucb", rc.c_ucb);
    rc.threads = std::max(1u, cfg.optimizer_threads);
    rc.image = "image.png";
    rc.validate();

    imaging::Bytes png;
    if (body.contains("image_png_base64")) {
      png = app::base64_decode(field<std::string>(body, "image_png_base64", ""));
    } else if (body.contains("scene")) {
      if (!body["scene"].is_object()) throw HttpError(400, "'scene' must be an object");
      png = imaging::encode_png16(app::make_scene(scene_from_json(body["scene"])).image);
    } else {
      throw HttpError(400, "request needs 'image_png_base64' or 'scene'");
    }
    imaging::Image img;
    try {
      img = imaging::decode_png(png);
    } catch (const std::exception& e) {
      throw HttpError(400, std::string("cannot decode image: ") + e.what());
    }
    s->ctx = app::make_context(std::move(img));
    s->weights.assign(s->pipeline.rewards.size(), 1.0 / static_cast<double>(s->pipeline.rewards.size()));
    s->snapshot = std::make_shared<const optimize::ParetoArchive>(s->pipeline.rewards);

    {
      std::lock_guard lk(mu);
      {
        std::lock_guard slk(slot_mu);
        if (shutting) throw HttpError(503, "service is shutting down");
      }
      s->id = "s" + std::to_string(next_session++) + "-" + token;
      s->dir = cfg.data_dir / s->id;
      sessions[s->id] = s;
    }
    std::error_code ec;
    fs::create_directories(s->dir, ec);
    imaging::write_file(s->dir / "image.png", png);
    s->worker = std::thread([this, s] { work(s); });
    return json{{"id", s->id}, {"status", "running"}};
  }

  void work(const std::shared_ptr<Session>& s) {
    {
      std::unique_lock lk(slot_mu);
      slot_cv.wait(lk, [&] { return shutting || busy < std::max(1u, cfg.workers); });
      if (!shutting) ++busy;
    }
    const auto start = std::chrono::steady_clock::now();
    optimize::RunControl ctl;
    ctl.threads = s->cfg.threads;
    ctl.before_eval = [s] {
      std::unique_lock lk(s->mu);
      s->cv.wait(lk, [&] { return !s->paused || s->stop; });
    };
    ctl.on_update = [s](const optimize::ParetoArchive& a) {
      auto snap = std::make_shared<const optimize::ParetoArchive>(a);
      std::lock_guard lk(s->mu);
      s->snapshot = std::move(snap);
    };
    ctl.stop = [s] {
      std::lock_guard lk(s->mu);
      return s->stop;
    };

    bool ran = false;
    std::optional<optimize::ParetoArchive> archive;
    std::string status = "done";
    std::string error;
    {
      std::lock_guard lk(slot_mu);
      ran = !shutting;
    }
    if (ran) {
      try {
        archive = app::run_optimizer(s->cfg, optimize::pipeline_problem(s->pipeline, s->ctx), ctl);
        if (ctl.stop()) status = "interrupted";
      } catch (const optimize::EvaluationError& e) {
        status = "failed";
        error = std::string(e.what()) + " at " + workflow::format_params(e.params());
      } catch (const std::exception& e) {
        status = "failed";
        error = e.what();
      }
    } else {
      status = "interrupted";
    }
    std::shared_ptr<const optimize::ParetoArchive> snap;
    if (archive) {
      snap = std::make_shared<const optimize::ParetoArchive>(std::move(*archive));
    } else {
      std::lock_guard lk(s->mu);
      snap = s->snapshot;
    }
    const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    try {
      app::write_run(s->dir, s->cfg, *snap, wall, status);
    } catch (const std::exception& e) {
      if (error.empty()) error = std::string("checkpoint failed: ") + e.what();
    }
    {
      std::lock_guard lk(s->mu);
      s->snapshot = snap;
      s->final_status = status;
      s->error = error;
      s->finished = true;
    }
    if (ran) {
      std::lock_guard lk(slot_mu);
      --busy;
    }
    slot_cv.notify_all();
  }

  json front(Session& s) {
    std::shared_ptr<const optimize::ParetoArchive> a;
    std::vector<double> w;
    std::string status, error;
    {
      std::lock_guard lk(s.mu);
      a = s.snapshot;
      w = s.weights;
      status = s.status_locked();
      error = s.error;
    }
    json out{{"id", s.id},
             {"status", status},
             {"pipeline", s.cfg.pipeline},
             {"optimizer", s.cfg.optimizer},
             {"budget", s.cfg.budget},
             {"seed", s.cfg.seed},
             {"objectives", a->objective_names()},
             {"evaluations", a->size()},
             {"feasible", a->feasible_count()}};
    optimize::Objectives lo, hi;
    if (a->feasible_count() > 0) a->objective_bounds(lo, hi);
    out["normalization"] = json{{"lo", lo}, {"hi", hi}};
    out["weights"] = w;
    out["recommended"] = a->front().empty() ? json(nullptr) : json(a->entries()[optimize::select_front_point(*a, w)].index);
    json entries = json::array();
    for (std::size_t pos : a->front()) entries.push_back(entry_json(*a, pos, s.cfg.seed));
    out["front"] = std::move(entries);
    if (!error.empty()) out["error"] = error;
    return out;
  }

  json set_weights(Session& s, const json& body) {
    if (!body.contains("weights") || !body["weights"].is_array()) throw HttpError(400, "expected 'weights' array");
    std::vector<double> w;
    for (const auto& x : body["weights"]) {
      if (!x.is_number()) throw HttpError(400, "weights must be numbers");
      w.push_back(x.get<double>());
    }
    check_weights(w, s.pipeline.rewards.size());
    std::shared_ptr<const optimize::ParetoArchive> a;
    std::string status;
    {
      std::lock_guard lk(s.mu);
      s.weights = w;
      a = s.snapshot;
      status = s.status_locked();
    }
    json ranked = json::array();
    for (const auto& [pos, score] : rank_front(*a, w)) {
      json e = entry_json(*a, pos, s.cfg.seed);
      e["score"] = score;
      ranked.push_back(std::move(e));
    }
    json out{{"id", s.id}, {"status", status}, {"weights", w}, {"evaluations", a->size()}};
    out["recommended"] = ranked.empty() ? json(nullptr) : ranked[0]["index"];
    out["ranked"] = std::move(ranked);
    return out;
  }

  json pause_resume(Session& s, bool pause) {
    std::lock_guard lk(s.mu);
    if (!s.finished) s.paused = pause;
    s.cv.notify_all();
    return json{{"id", s.id}, {"status", s.status_locked()}};
  }

  json evaluate(const std::shared_ptr<Session>& s, const json& body) {
    const workflow::ParamSpace space = s->pipeline.joint_space();
    workflow::ParamVector v;
    std::uint64_t seed = 0;
    json index = nullptr;
    if (body.contains("index")) {
      const auto idx = field<std::size_t>(body, "index", 0);
      std::shared_ptr<const optimize::ParetoArchive> a;
      {
        std::lock_guard lk(s->mu);
        a = s->snapshot;
      }
      if (idx >= a->size()) throw HttpError(400, "no evaluation with index " + std::to_string(idx));
      v = a->entries()[idx].params;
      seed = optimize::evaluation_seed(s->cfg.seed, idx);
      index = idx;
    } else if (body.contains("params")) {
      const json& p = body["params"];
      std::string text;
      if (p.is_string()) {
        text = p.get<std::string>();
      } else if (p.is_object()) {
        for (const auto& [k, x] : p.items()) {
          if (!text.empty()) text += ",";
          text += k + "=" + (x.is_string() ? x.get<std::string>() : x.dump());
        }
      } else {
        throw HttpError(400, "'params' must be text or an object");
      }
      v = space.parse(text);
      seed = field<std::uint64_t>(body, "seed", 0);
    } else {
      throw HttpError(400, "request needs 'index' or 'params'");
    }
    space.check(v);

    struct Job {
      std::mutex m;
      std::condition_variable cv;
      bool done = false;
      std::optional<app::EvaluationArtifacts> result;
      std::exception_ptr error;
    };
    auto job = std::make_shared<Job>();
    {
      std::lock_guard lk(lane_mu);
      ++in_flight;
    }
    std::thread([this, job, s, v, seed] {
      try {
        auto r = app::evaluate_with_artifacts(s->pipeline, *s->ctx, v, seed);
        std::lock_guard lk(job->m);
        job->result = std::move(r);
      } catch (...) {
        std::lock_guard lk(job->m);
        job->error = std::current_exception();
      }
      {
        std::lock_guard lk(job->m);
        job->done = true;
      }
      job->cv.notify_all();
      std::lock_guard lk(lane_mu);
      --in_flight;
      lane_cv.notify_all();
    }).detach();

    std::unique_lock lk(job->m);
    if (!job->cv.wait_for(lk, cfg.eval_timeout, [&] { return job->done; }))
      throw HttpError(503, "evaluation timed out; retry later");
    if (job->error) std::rethrow_exception(job->error);
    const auto& r = *job->result;

    std::uint64_t eid = 0;
    {
      std::lock_guard slk(s->mu);
      eid = s->next_eid++;
      s->evaluations[eid] = StoredEvaluation{r.overlay_png, r.label_map_png};
      while (s->evaluations.size() > kKeptEvaluations) s->evaluations.erase(s->evaluations.begin());
    }
    const std::string base = "/sessions/" + s->id + "/evaluations/" + std::to_string(eid);
    return json{{"eid", eid},
                {"index", index},
                {"seed", seed},
                {"params", params_json(v)},
                {"param_text", workflow::format_params(v)},
                {"rewards", rewards_json(r.rewards)},
                {"overlay_png_base64", app::base64_encode(r.overlay_png)},
                {"label_map_png_base64", app::base64_encode(r.label_map_png)},
                {"urls", {{"overlay", base + "/overlay.png"}, {"label_map", base + "/label_map.png"}}}};
  }

  json list_runs() {
    json runs = json::array();
    std::error_code ec;
    std::vector<fs::path> dirs;
    for (const auto& d : fs::directory_iterator(cfg.data_dir, ec))
      if (d.is_directory() && fs::exists(d.path() / "manifest.json")) dirs.push_back(d.path());
    std::sort(dirs.begin(), dirs.end());
    for (const auto& d : dirs) {
      json m;
      try {
        const auto bytes = imaging::read_file(d / "manifest.json");
        m = json::parse(bytes.begin(), bytes.end());
      } catch (const std::exception&) {
        continue;
      }
      runs.push_back(json{{"name", d.filename().string()}, {"manifest", m}});
    }
    return json{{"runs", runs}};
  }

  json run_front(const std::string& name) {
    if (name.empty() || name == "." || name == ".." || name.find_first_of("/\\") != std::string::npos)
      throw HttpError(404, "unknown run");
    const fs::path dir = cfg.data_dir / name;
    if (!fs::exists(dir / "front.tsv")) throw HttpError(404, "unknown run '" + name + "'");
    const auto bytes = imaging::read_file(dir / "front.tsv");
    std::vector<std::vector<std::string>> rows;
    std::string line;
    for (char ch : bytes) {
      if (ch == '\n') {
        std::vector<std::string> cells;
        std::size_t start = 0;
        while (true) {
          const auto tab = line.find('\t', start);
          cells.push_back(line.substr(start, tab - start));
          if (tab == std::string::npos) break;
          start = tab + 1;
        }
        rows.push_back(std::move(cells));
        line.clear();
      } else {
        line += ch;
      }
    }
    json out{{"name", name}};
    out["columns"] = rows.empty() ? json::array() : json(rows.front());
    json entries = json::array();
    for (std::size_t i = 1; i < rows.size(); ++i) entries.push_back(rows[i]);
    out["rows"] = std::move(entries);
    try {
      const auto m = imaging::read_file(dir / "manifest.json");
      out["manifest"] = json::parse(m.begin(), m.end());
    } catch (const std::exception&) {
    }
    return out;
  }

  void stop_all() {
    {
      std::lock_guard lk(slot_mu);
      shutting = true;
    }
    slot_cv.notify_all();
    std::vector<std::shared_ptr<Session>> all;
    {
      std::lock_guard lk(mu);
      for (auto& [id, s] : sessions) all.push_back(s);
    }
    for (auto& s : all) {
      {
        std::lock_guard lk(s->mu);
        s->stop = true;
      }
      s->cv.notify_all();
    }
    for (auto& s : all)
      if (s->worker.joinable()) s->worker.join();
    svr.stop();
    std::unique_lock lk(lane_mu);
    lane_cv.wait(lk, [&] { return in_flight == 0; });
  }
};

Service::Service(ServiceConfig cfg) : impl_(std::make_unique<Impl>(std::move(cfg))) {}

Service::~Service() { shutdown(); }

int Service::bind(const std::string& host, int port) {
  // SO_REUSEPORT (the library default) would let a second server share the port.
  impl_->svr.set_socket_options([](socket_t sock) {
    int yes = 1;
    setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, reinterpret_cast<const void*>(&yes), sizeof(yes));
  });
  int bound = port;
  if (port == 0) {
    bound = impl_->svr.bind_to_any_port(host);
    if (bound < 0) throw ConfigError("cannot bind " + host);
  } else if (!impl_->svr.bind_to_port(host, port)) {
    throw ConfigError("cannot bind " + host + ":" + std::to_string(port) + " (port in use?)");
  }
  impl_->bound = true;
  return bound;
}

void Service::run() {
  if (!impl_->bound) throw ConfigError("Service::run before bind");
  impl_->svr.listen_after_bind();
}

void Service::shutdown() {
  std::call_once(impl_->shutdown_once, [this] { impl_->stop_all(); });
}

}  // namespace rflow::service
