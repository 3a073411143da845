// rflow: generate scenes, optimize analysis pipelines, evaluate points, serve sessions.

#include <csignal>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <pthread.h>
#include <thread>

#include <CLI11.hpp>

#include "rflow/app/app.hpp"
#include "rflow/core/errors.hpp"
#include "rflow/core/parallel.hpp"
#include "rflow/optimize/mcts.hpp"
#include "rflow/service/service.hpp"

namespace fs = std::filesystem;
using namespace rflow;

namespace {

constexpr int kOk = 0;
constexpr int kUsage = 2;
constexpr int kRuntime = 3;

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

// Applies "key = value" lines to options the command line left unset.
void apply_config_file(CLI::App& cmd, const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file '" + path.string() + "'");
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    line = trim(line);
    if (line.empty() || line[0] == '#' || line[0] == ';' || line[0] == '[') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError(path.string() + ":" + std::to_string(lineno) + ": expected key = value");
    std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    if (value.size() >= 2 && value.front() == '"' && value.back() == '"') value = value.substr(1, value.size() - 2);
    std::replace(key.begin(), key.end(), '_', '-');
    CLI::Option* opt = cmd.get_option_no_throw("--" + key);
    if (opt == nullptr || key == "config")
      throw ConfigError(path.string() + ":" + std::to_string(lineno) + ": unknown key '" + key + "'");
    if (opt->count() > 0) continue;
    opt->add_result(value);
    opt->run_callback();
  }
}

int fail(int code, const std::string& msg) {
  std::cerr << "error: " << msg << "\n";
  return code;
}

// --- generate ---------------------------------------------------------------

struct GenerateArgs {
  app::SceneOptions scene;
  std::string domain = "none";
  fs::path out = ".";
  std::string name = "scene";
};

void add_generate(CLI::App& root, GenerateArgs& a) {
  auto* cmd = root.add_subcommand("generate", "Write a synthetic lattice scene and its ground truth");
  auto& s = a.scene.spec;
  s.rows = 20;
  s.cols = 20;
  cmd->add_option("--rows", s.rows, "Lattice rows")->capture_default_str();
  cmd->add_option("--cols", s.cols, "Lattice columns")->capture_default_str();
  cmd->add_option("--spacing", s.spacing, "Lattice spacing (px)")->capture_default_str();
  cmd->add_option("--atom-sigma", s.atom_sigma, "Atom Gaussian width (px)")->capture_default_str();
  cmd->add_option("--amplitude", s.amplitude, "Atom peak height")->capture_default_str();
  cmd->add_option("--orientation", s.orientation, "Lattice rotation (rad)")->capture_default_str();
  cmd->add_option("--noise", a.scene.noise, "Noise std relative to the image range")->capture_default_str();
  cmd->add_option("--seed", a.scene.seed, "Random seed")->capture_default_str();
  cmd->add_option("--amorphous-radius", s.amorphous_radius, "Amorphous disk radius (px), 0 for none")
      ->capture_default_str();
  cmd->add_option("--amorphous-jitter", s.amorphous_jitter, "Amorphous jitter, fraction of spacing")
      ->capture_default_str();
  cmd->add_option("--domain", a.domain, "Domain split")
      ->check(CLI::IsMember({"none", "straight", "sinusoidal"}))
      ->capture_default_str();
  cmd->add_option("--wall-amplitude", s.wall_amplitude, "Sinusoidal wall amplitude (px)")->capture_default_str();
  cmd->add_option("--wall-period", s.wall_period, "Sinusoidal wall period (px)")->capture_default_str();
  cmd->add_option("--polarization", s.polarization, "Secondary atom offset, fraction of spacing")
      ->capture_default_str();
  cmd->add_option("--width", s.width, "Image width (0: cols * spacing)")->capture_default_str();
  cmd->add_option("--height", s.height, "Image height (0: rows * spacing)")->capture_default_str();
  cmd->add_option("--out", a.out, "Output directory")->capture_default_str();
  cmd->add_option("--name", a.name, "File name stem")->capture_default_str();
}

int run_generate(GenerateArgs& a) {
  try {
    a.scene.spec.domain_split = imaging::parse_domain_split(a.domain);
    const auto scene = app::make_scene(a.scene);
    std::error_code ec;
    fs::create_directories(a.out, ec);
    if (ec || !fs::is_directory(a.out)) return fail(kUsage, "cannot create directory '" + a.out.string() + "'");
    const auto files = imaging::write_scene(a.out, a.name, scene);
    std::cout << files.image_png.string() << "\n"
              << files.image_raw.string() << "\n"
              << files.raw_header.string() << "\n"
              << files.truth.string() << "\n";
    for (const auto& f : files.extras) std::cout << f.string() << "\n";
    return kOk;
  } catch (const DomainError& e) {
    return fail(kUsage, std::string("invalid scene: ") + e.what());
  } catch (const std::exception& e) {
    return fail(kUsage, e.what());
  }
}

// --- optimize ---------------------------------------------------------------

struct OptimizeArgs {
  app::RunConfig cfg;
  fs::path config;
  CLI::Option* threads = nullptr;
  CLI::App* cmd = nullptr;
};

unsigned threads_default() {
  if (const char* env = std::getenv("PS_THREADS")) {
    try {
      const int n = std::stoi(env);
      if (n >= 1) return static_cast<unsigned>(n);
    } catch (const std::logic_error&) {
    }
    throw ConfigError(std::string("PS_THREADS must be a positive integer, got '") + env + "'");
  }
  return default_thread_count();
}

void add_optimize(CLI::App& root, OptimizeArgs& a) {
  auto* cmd = root.add_subcommand("optimize", "Optimize a pipeline's parameters on an image");
  a.cmd = cmd;
  auto& c = a.cfg;
  std::vector<std::string> pipelines;
  for (const auto& p : workflow::builtin_pipelines()) pipelines.push_back(p.name);
  cmd->add_option("--pipeline", c.pipeline, "Pipeline id")->check(CLI::IsMember(pipelines))->capture_default_str();
  cmd->add_option("--image", c.image, "Input image (.png or .raw)")->check(CLI::ExistingFile);
  cmd->add_option("--optimizer", c.optimizer, "Optimizer")
      ->check(CLI::IsMember(app::optimizer_names()))
      ->capture_default_str();
  cmd->add_option("--budget", c.budget, "Evaluation budget")->check(CLI::PositiveNumber)->capture_default_str();
  cmd->add_option("--seed", c.seed, "Random seed")->capture_default_str();
  cmd->add_option("--out", c.out_dir, "Run output directory");
  a.threads = cmd->add_option("--threads", c.threads, "Evaluation threads (default: $PS_THREADS or all cores)")
                  ->check(CLI::PositiveNumber);
  cmd->add_option("--n-init", c.n_init, "mobo: initial design size")->capture_default_str();
  cmd->add_option("--pop", c.pop, "ga: population size")->capture_default_str();
  cmd->add_option("--levels", c.levels, "grid: levels per continuous dim")->capture_default_str();
  cmd->add_option("--c-ucb", c.c_ucb, "mcts: exploration constant")->capture_default_str();
  cmd->add_option("--config", a.config, "Config file of key = value lines; flags take precedence");
}

int run_optimize(OptimizeArgs& a) {
  auto& c = a.cfg;
  try {
    if (!a.config.empty()) apply_config_file(*a.cmd, a.config);
    if (a.threads->count() == 0) c.threads = threads_default();
    if (c.image.empty()) throw ConfigError("--image is required");
    if (c.out_dir.empty()) throw ConfigError("--out is required");
    if (!fs::exists(c.image)) throw ConfigError("image '" + c.image.string() + "' does not exist");
    c.validate();
  } catch (const CLI::ParseError& e) {
    std::cerr << a.cmd->help();
    return fail(kUsage, e.what());
  } catch (const ConfigError& e) {
    std::cerr << a.cmd->help();
    return fail(kUsage, e.what());
  }

  try {
    const auto ctx = app::load_context(c.image);
    const auto problem = optimize::pipeline_problem(workflow::builtin_pipeline(c.pipeline), ctx);
    const auto start = std::chrono::steady_clock::now();
    optimize::RunControl ctl;
    ctl.threads = c.threads;
    const auto archive = app::run_optimizer(c, problem, ctl);
    const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    const auto files = app::write_run(c.out_dir, c, archive, wall);
    std::cout << files.archive.string() << "\n" << files.front.string() << "\n" << files.manifest.string() << "\n";
    std::cerr << archive.size() << " evaluations, " << archive.feasible_count() << " feasible, front size "
              << archive.front().size() << ", " << wall << " s\n";
    return kOk;
  } catch (const ConfigError& e) {
    return fail(kUsage, e.what());
  } catch (const optimize::EvaluationError& e) {
    return fail(kRuntime, std::string("evaluation failed at ") + workflow::format_params(e.params()) + ": " + e.what());
  } catch (const DomainError& e) {
    return fail(kUsage, e.what());
  } catch (const std::exception& e) {
    return fail(kRuntime, e.what());
  }
}

// --- evaluate ---------------------------------------------------------------

struct EvaluateArgs {
  std::string pipeline = "log_star";
  fs::path image;
  std::string params;
  std::uint64_t seed = 0;
  fs::path out = ".";
};

void add_evaluate(CLI::App& root, EvaluateArgs& a) {
  auto* cmd = root.add_subcommand("evaluate", "Run a pipeline once and render its overlay");
  std::vector<std::string> pipelines;
  for (const auto& p : workflow::builtin_pipelines()) pipelines.push_back(p.name);
  cmd->add_option("--pipeline", a.pipeline, "Pipeline id")->check(CLI::IsMember(pipelines))->capture_default_str();
  cmd->add_option("--image", a.image, "Input image (.png or .raw)")->required()->check(CLI::ExistingFile);
  cmd->add_option("--params", a.params, "name=value,... for every dim of the pipeline")->required();
  cmd->add_option("--seed", a.seed, "Evaluation seed")->capture_default_str();
  cmd->add_option("--out", a.out, "Directory for overlay.png and label_map.png")->capture_default_str();
}

int run_evaluate(const EvaluateArgs& a) {
  try {
    const auto pipeline = workflow::builtin_pipeline(a.pipeline);
    const auto space = pipeline.joint_space();
    const auto v = space.parse(a.params);
    space.check(v);
    const auto ctx = app::load_context(a.image);
    const auto r = app::evaluate_with_artifacts(pipeline, *ctx, v, a.seed);
    std::error_code ec;
    fs::create_directories(a.out, ec);
    imaging::write_file(a.out / "overlay.png", r.overlay_png);
    imaging::write_file(a.out / "label_map.png", r.label_map_png);
    std::cout << app::rewards_to_text(r.rewards);
    return kOk;
  } catch (const ConfigError& e) {
    return fail(kUsage, e.what());
  } catch (const DomainError& e) {
    return fail(kUsage, std::string("infeasible: ") + e.what());
  } catch (const std::exception& e) {
    return fail(kRuntime, e.what());
  }
}

// --- search -----------------------------------------------------------------

struct SearchArgs {
  fs::path image;
  std::size_t simulations = 200;
  int max_len = 5;
  int bins = 5;
  double c_ucb = 1.4142135623730951;
  std::uint64_t seed = 0;
};

void add_search(CLI::App& root, SearchArgs& a) {
  auto* cmd = root.add_subcommand("search", "Tree search over workflow structures");
  cmd->add_option("--image", a.image, "Input image (.png or .raw)")->required()->check(CLI::ExistingFile);
  cmd->add_option("--simulations", a.simulations, "Simulations")->check(CLI::PositiveNumber)->capture_default_str();
  cmd->add_option("--max-len", a.max_len, "Maximum operations per workflow")->capture_default_str();
  cmd->add_option("--bins", a.bins, "Bins per continuous parameter")->capture_default_str();
  cmd->add_option("--c-ucb", a.c_ucb, "Exploration constant")->capture_default_str();
  cmd->add_option("--seed", a.seed, "Random seed")->capture_default_str();
}

int run_search(const SearchArgs& a) {
  try {
    const auto ctx = app::load_context(a.image);
    optimize::MctsSearchOptions o;
    o.simulations = a.simulations;
    o.max_len = a.max_len;
    o.bins = a.bins;
    o.c_ucb = a.c_ucb;
    const auto r = optimize::mcts_search(workflow::default_catalog(), ctx, optimize::pca_rollout, o, a.seed);
    std::cerr << r.terminal_evaluations << " terminal workflows evaluated\n";
    if (!r.best_pipeline) return fail(kRuntime, "no workflow completed");
    std::cout << workflow::pipeline_to_text(*r.best_pipeline);
    std::cout << "params\t" << workflow::format_params(r.best_params) << "\n";
    std::cout << "value\t" << r.best_value << "\n";
    if (r.best_rewards) std::cout << app::rewards_to_text(*r.best_rewards);
    return kOk;
  } catch (const ConfigError& e) {
    return fail(kUsage, e.what());
  } catch (const DomainError& e) {
    return fail(kUsage, e.what());
  } catch (const std::exception& e) {
    return fail(kRuntime, e.what());
  }
}

// --- serve ------------------------------------------------------------------

struct ServeArgs {
  std::string host = "127.0.0.1";
  int port = 8080;
  fs::path data_dir = "runs";
  unsigned workers = 2;
  unsigned threads = 1;
  double eval_timeout = 30.0;
};

void add_serve(CLI::App& root, ServeArgs& a) {
  auto* cmd = root.add_subcommand("serve", "Serve the session API");
  cmd->add_option("--host", a.host, "Listen address")->capture_default_str();
  cmd->add_option("--port", a.port, "Port (0: any free port)")->check(CLI::Range(0, 65535))->capture_default_str();
  cmd->add_option("--data-dir", a.data_dir, "Run directory")->capture_default_str();
  cmd->add_option("--workers", a.workers, "Concurrent optimization sessions")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  cmd->add_option("--threads", a.threads, "Evaluation threads per session")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  cmd->add_option("--eval-timeout", a.eval_timeout, "Evaluate request timeout (s)")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
}

int run_serve(const ServeArgs& a) {
  // Signals go to a dedicated thread; block them before any other thread starts.
  sigset_t set;
  sigemptyset(&set);
  sigaddset(&set, SIGINT);
  sigaddset(&set, SIGTERM);
  sigaddset(&set, SIGUSR1);
  pthread_sigmask(SIG_BLOCK, &set, nullptr);

  service::ServiceConfig cfg;
  cfg.data_dir = a.data_dir;
  cfg.workers = a.workers;
  cfg.optimizer_threads = a.threads;
  cfg.eval_timeout = std::chrono::milliseconds(static_cast<long long>(a.eval_timeout * 1000.0));
  std::error_code ec;
  fs::create_directories(cfg.data_dir, ec);
  if (!fs::is_directory(cfg.data_dir)) return fail(kUsage, "cannot create '" + cfg.data_dir.string() + "'");

  service::Service svc(cfg);
  int port = 0;
  try {
    port = svc.bind(a.host, a.port);
  } catch (const ConfigError& e) {
    return fail(kUsage, e.what());
  }
  std::thread waiter([&] {
    int sig = 0;
    sigwait(&set, &sig);
    if (sig != SIGUSR1) std::cerr << "shutting down\n";
    svc.shutdown();
  });
  std::cout << "listening on http://" << a.host << ":" << port << std::endl;
  svc.run();
  pthread_kill(waiter.native_handle(), SIGUSR1);
  waiter.join();
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App root{"Reward-driven image-analysis workflow optimizer"};
  root.set_version_flag("--version", app::git_describe());
  root.require_subcommand(1);
  root.failure_message(CLI::FailureMessage::help);

  GenerateArgs gen;
  OptimizeArgs opt;
  EvaluateArgs ev;
  SearchArgs search;
  ServeArgs serve;
  add_generate(root, gen);
  add_optimize(root, opt);
  add_evaluate(root, ev);
  add_search(root, search);
  add_serve(root, serve);

  try {
    root.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return root.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return root.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return root.exit(e);
  } catch (const CLI::ParseError& e) {
    root.exit(e);
    return kUsage;
  }

  if (root.got_subcommand("generate")) return run_generate(gen);
  if (root.got_subcommand("optimize")) return run_optimize(opt);
  if (root.got_subcommand("evaluate")) return run_evaluate(ev);
  if (root.got_subcommand("search")) return run_search(search);
  return run_serve(serve);
}
