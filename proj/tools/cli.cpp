#include "cli.hpp"

#include <csignal>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <thread>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "powerlab/montecarlo.hpp"
#include "powerlab/scenarios.hpp"
#include "powerlab/service.hpp"
#include "powerlab/session.hpp"
#include "powerlab/store.hpp"

namespace powerlab::cli {

namespace {

using api::Json;

enum class Format { human, machine, json };

const std::map<std::string, Format> kFormats = {{"human", Format::human}, {"machine", Format::machine}, {"json", Format::json}};

std::optional<TestId> parse_test(const std::string& name) {
  if (auto t = test_from_string(name)) return t;
  if (const auto* e = api::find_endpoint(name)) return e->test;
  return std::nullopt;
}

std::string scalar(const Json& v) { return v.is_string() ? v.get<std::string>() : v.dump(); }

void flatten_into(const Json& j, const std::string& prefix, std::string& out) {
  for (const auto& [k, v] : j.items()) {
    const std::string key = prefix.empty() ? k : prefix + "." + k;
    if (v.is_object()) {
      flatten_into(v, key, out);
    } else if (v.is_array()) {
      std::string joined;
      for (const auto& x : v) joined += (joined.empty() ? "" : ",") + scalar(x);
      out += key + "=" + joined + "\n";
    } else {
      out += key + "=" + scalar(v) + "\n";
    }
  }
}

// Parameter flags named after the catalog fields.
struct ParamFlags {
  std::map<std::string, std::string> raw;

  void attach(CLI::App& app) {
    for (const auto& f : inputs::catalog()) {
      const std::string name(f.name);
      app.add_option("--" + name, raw[name], std::string(f.description));
    }
  }

  [[nodiscard]] inputs::ParamMap params(const CLI::App& app, std::vector<FieldError>& errors) const {
    inputs::ParamMap out;
    for (const auto& [name, text] : raw) {
      if (app.count("--" + name) == 0) continue;
      const auto* def = inputs::find_field(name);
      if (def->type == inputs::FieldType::choice) {
        out[name] = text;
      } else if (def->type == inputs::FieldType::number_list) {
        std::vector<double> values;
        std::size_t start = 0;
        bool ok = true;
        while (start <= text.size()) {
          const auto comma = text.find(',', start);
          const auto piece = text.substr(start, comma == std::string::npos ? std::string::npos : comma - start);
          const auto v = number(piece);
          if (!v) ok = false;
          values.push_back(v.value_or(0.0));
          if (comma == std::string::npos) break;
          start = comma + 1;
        }
        if (ok) {
          out[name] = values;
        } else {
          errors.push_back({name, "must be a comma-separated list of numbers"});
        }
      } else if (auto v = number(text)) {
        out[name] = *v;
      } else {
        errors.push_back({name, "must be a finite number"});
      }
    }
    return out;
  }

  static std::optional<double> number(const std::string& text) {
    double v = 0.0;
    const char* end = text.data() + text.size();
    const auto [ptr, ec] = std::from_chars(text.data(), end, v);
    if (ec != std::errc() || ptr != end || !std::isfinite(v)) return std::nullopt;
    return v;
  }
};

void print_field_errors(const Json& body, std::ostream& err) {
  if (body.contains("errors")) {
    for (const auto& e : body["errors"]) {
      err << fmt::format("error: --{}: {}\n", e["field"].get<std::string>(), e["message"].get<std::string>());
    }
  } else {
    err << "error: " << body.value("message", std::string("invalid request")) << "\n";
  }
}

int exit_for(int status) {
  if (status == 200) return kExitOk;
  if (status == 422) return kExitUnreachable;
  return kExitInvalid;
}

std::string human_solve(const Json& b) {
  std::string out = fmt::format("Test: {}\n", b["test"].get<std::string>());
  std::string arms;
  for (std::size_t i = 0; i < b["n_per_arm"].size(); ++i) {
    arms += fmt::format("{}{} {}", i ? ", " : "", b["arms"][i].get<std::string>(), b["n_per_arm"][i].get<long>());
  }
  if (b.contains("sample_size")) out += fmt::format("Sample size: {}\n", b["sample_size"].get<long>());
  out += fmt::format("Allocation: {} ({} in total)\n", arms, b["n_total"].get<long>());
  out += fmt::format("Achieved power: {:.4f}\n", b["achieved_power"].get<double>());
  if (b.contains("events_required")) out += fmt::format("Events required: {}\n", b["events_required"].get<long>());
  if (b.contains("effect")) {
    out += fmt::format("Minimal detectable {}: {:.6g}\n", b["effect"]["field"].get<std::string>(),
                       b["effect"]["value"].get<double>());
  }
  out += fmt::format("Formula: {}\n", b["formula_id"].get<std::string>());
  std::string inputs;
  for (const auto& [k, v] : b["inputs"].items()) inputs += fmt::format("{}{}={}", inputs.empty() ? "" : ", ", k, scalar(v));
  out += fmt::format("Inputs: {}\n", inputs);
  std::string defaults;
  for (const auto& d : b["defaults_applied"]) defaults += (defaults.empty() ? "" : ", ") + d.get<std::string>();
  out += fmt::format("Defaults applied: {}\n", defaults.empty() ? "none" : defaults);
  return out;
}

// ---- solve ----------------------------------------------------------------

struct SolveArgs {
  std::string test;
  std::string format = "human";
  ParamFlags flags;
};

int do_solve(CLI::App& app, const SolveArgs& a, std::ostream& out, std::ostream& err) {
  const auto test = parse_test(a.test);
  if (!test) {
    err << fmt::format("error: unknown test '{}'\n", a.test);
    return kExitInvalid;
  }
  std::vector<FieldError> conversion;
  const auto params = a.flags.params(app, conversion);
  if (!conversion.empty()) {
    print_field_errors(api::field_errors(conversion), err);
    return kExitInvalid;
  }
  const auto outcome = api::compute(*test, params);
  if (outcome.status != 200) {
    print_field_errors(outcome.body, err);
    return exit_for(outcome.status);
  }
  switch (kFormats.at(a.format)) {
    case Format::json: out << api::dump(outcome.body) << "\n"; break;
    case Format::machine: out << flatten(outcome.body); break;
    case Format::human: out << human_solve(outcome.body); break;
  }
  return kExitOk;
}

// ---- curve ----------------------------------------------------------------

struct CurveArgs {
  std::string test;
  std::string sweep;
  double from = 0.0;
  double to = 0.0;
  int steps = 10;
  std::string format = "human";
  ParamFlags flags;
};

int do_curve(CLI::App& app, const CurveArgs& a, std::ostream& out, std::ostream& err) {
  const auto test = parse_test(a.test);
  if (!test) {
    err << fmt::format("error: unknown test '{}'\n", a.test);
    return kExitInvalid;
  }
  const auto names = inputs::accepted_names(*test);
  if (std::find(names.begin(), names.end(), a.sweep) == names.end() || a.sweep == "target" || a.sweep == "tails" ||
      a.sweep == "means") {
    err << fmt::format("error: --sweep: '{}' is not a numeric input of {}\n", a.sweep, to_string(*test));
    return kExitInvalid;
  }
  if (a.steps < 2 || !(a.from < a.to)) {
    err << "error: --sweep: need --from < --to and --steps >= 2\n";
    return kExitInvalid;
  }
  for (double end : {a.from, a.to}) {
    if (auto why = inputs::check_value(a.sweep, end)) {
      err << fmt::format("error: --sweep: {}={} {}\n", a.sweep, end, *why);
      return kExitInvalid;
    }
  }
  std::vector<FieldError> conversion;
  auto base = a.flags.params(app, conversion);
  if (!conversion.empty()) {
    print_field_errors(api::field_errors(conversion), err);
    return kExitInvalid;
  }
  base.erase(a.sweep);
  base.erase("target");
  // Sweeping n, or fixing n, gives a power curve; otherwise a sample-size curve.
  const bool power_curve = a.sweep == "n" || base.count("n") > 0;
  if (power_curve) base.erase("power");
  base["target"] = std::string(power_curve ? "power" : "sample_size");

  std::vector<double> values;
  const auto* def = inputs::find_field(a.sweep);
  for (int i = 0; i < a.steps; ++i) {
    double v = a.from + (a.to - a.from) * static_cast<double>(i) / static_cast<double>(a.steps - 1);
    if (i == a.steps - 1) v = a.to;
    if (def->type == inputs::FieldType::integer) v = std::round(v);
    if (values.empty() || values.back() != v) values.push_back(v);
  }

  const Format format = kFormats.at(a.format);
  if (format == Format::human) {
    out << fmt::format("# {} {} curve over {}\n", to_string(*test), power_curve ? "power" : "sample-size", a.sweep);
    out << fmt::format("{:>12} {:>10} {:>10} {:>14}\n", a.sweep, "n", "n_total", "achieved_power");
  }
  Json rows = Json::array();
  for (double v : values) {
    auto params = base;
    params[a.sweep] = v;
    const auto outcome = api::compute(*test, params);
    Json row;
    row[a.sweep] = v;
    if (outcome.status == 200) {
      const auto& b = outcome.body;
      row["n"] = b["n_per_arm"][0];
      row["n_total"] = b["n_total"];
      row["achieved_power"] = b["achieved_power"];
    } else if (outcome.status == 422) {
      row["n"] = nullptr;
      row["n_total"] = nullptr;
      row["achieved_power"] = nullptr;
      row["note"] = "unreachable";
    } else {
      print_field_errors(outcome.body, err);
      return kExitInvalid;
    }
    switch (format) {
      case Format::human:
        if (row.contains("note")) {
          out << fmt::format("{:>12} {:>10} {:>10} {:>14}\n", fmt::format("{:.6g}", v), "-", "-", "unreachable");
        } else {
          out << fmt::format("{:>12} {:>10} {:>10} {:>14.6f}\n", fmt::format("{:.6g}", v), row["n"].get<long>(),
                             row["n_total"].get<long>(), row["achieved_power"].get<double>());
        }
        break;
      case Format::machine: {
        std::string line;
        for (const auto& [k, x] : row.items()) line += fmt::format("{}{}={}", line.empty() ? "" : " ", k, x.is_null() ? "NA" : scalar(x));
        out << line << "\n";
        break;
      }
      case Format::json: rows.push_back(row); break;
    }
  }
  if (format == Format::json) out << api::dump(rows) << "\n";
  return kExitOk;
}

// ---- scenarios --------------------------------------------------------------

int do_scenarios(const std::string& corpus, const std::string& format_name, std::ostream& out, std::ostream& err) {
  std::vector<scenarios::ScenarioRecord> records;
  try {
    records = scenarios::load_corpus(corpus);
  } catch (const scenarios::CorpusError& e) {
    err << "error: " << e.what() << "\n";
    return kExitCorpus;
  }
  const Format format = kFormats.at(format_name);
  int selected = 0;
  int sized = 0;
  Json rows = Json::array();
  if (format == Format::human) {
    out << fmt::format("{:<24} {:<18} {:<18} {:>9} {:>9} {:>9}\n", "scenario", "expected test", "selected", "expected n",
                       "n", "ms");
  }
  for (const auto& r : records) {
    const auto o = scenarios::run(r);
    selected += o.selection_ok ? 1 : 0;
    sized += o.n_ok ? 1 : 0;
    const std::string n_text = o.n ? std::to_string(*o.n) : "NA";
    switch (format) {
      case Format::human:
        out << fmt::format("{:<24} {:<18} {:<18} {:>9} {:>9} {:>9.3f}{}\n", o.id, to_string(o.expected_test),
                           to_string(o.selected_test), o.expected_n, n_text, o.millis,
                           o.selection_ok && o.n_ok ? "" : "  MISMATCH");
        break;
      case Format::machine:
        out << fmt::format("scenario={} expected_test={} selected_test={} selection={} expected_n={} n={} sample_size={} ms={:.3f}\n",
                           o.id, to_string(o.expected_test), to_string(o.selected_test),
                           o.selection_ok ? "ok" : "mismatch", o.expected_n, n_text, o.n_ok ? "ok" : "mismatch", o.millis);
        break;
      case Format::json:
        rows.push_back({{"scenario", o.id},
                        {"expected_test", std::string(to_string(o.expected_test))},
                        {"selected_test", std::string(to_string(o.selected_test))},
                        {"selection_ok", o.selection_ok},
                        {"expected_n", o.expected_n},
                        {"n", o.n ? Json(*o.n) : Json(nullptr)},
                        {"sample_size_ok", o.n_ok},
                        {"ms", o.millis}});
        break;
    }
    if (!o.error.empty()) err << fmt::format("{}: {}\n", o.id, o.error);
  }
  const auto total = records.size();
  switch (format) {
    case Format::human:
      out << fmt::format("Test selection: {}/{}. Sample size: {}/{}.\n", selected, total, sized, total);
      break;
    case Format::machine:
      out << fmt::format("summary selection={}/{} sample_size={}/{}\n", selected, total, sized, total);
      break;
    case Format::json:
      out << api::dump(Json{{"scenarios", rows}, {"selection", selected}, {"sample_size", sized}, {"total", total}}) << "\n";
      break;
  }
  return selected == static_cast<int>(total) && sized == static_cast<int>(total) ? kExitOk : kExitMismatch;
}

// ---- ratify ---------------------------------------------------------------

struct RatifyArgs {
  long replications = mc::kDefaultReplications;
  std::uint64_t seed = mc::RatifyOptions{}.seed;
  int threads = 0;
  std::string suite = "ratify";
  std::vector<std::string> tests;
  std::string format = "human";
};

int do_ratify(const RatifyArgs& a, std::ostream& out, std::ostream& err) {
  auto grid = mc::default_grid();
  if (!a.tests.empty()) {
    std::vector<TestId> wanted;
    for (const auto& name : a.tests) {
      auto t = parse_test(name);
      if (!t) {
        err << fmt::format("error: unknown test '{}'\n", name);
        return kExitInvalid;
      }
      wanted.push_back(*t);
    }
    std::erase_if(grid, [&](const mc::GridPoint& p) {
      return std::find(wanted.begin(), wanted.end(), p.spec.test) == wanted.end();
    });
  }
  const mc::RatifyOptions opt{a.replications, a.seed, a.threads};
  const bool machine = a.format != "human";
  bool ok = true;
  if (a.suite == "ratify" || a.suite == "both") {
    const auto rows = mc::ratify(grid, opt);
    out << mc::format_ratify(rows, machine);
    ok = ok && std::all_of(rows.begin(), rows.end(), [](const auto& r) { return r.verdict != mc::Verdict::fail; });
  }
  if (a.suite == "size" || a.suite == "both") {
    const auto rows = mc::size_suite(grid, opt);
    out << mc::format_size(rows, machine);
    ok = ok && std::all_of(rows.begin(), rows.end(), [](const auto& r) { return r.pass; });
  }
  return ok ? kExitOk : kExitMismatch;
}

// ---- wizard ---------------------------------------------------------------

void show_reply(const session::Reply& r, std::ostream& out) {
  out << r.explanation << "\n";
  for (const auto& e : r.errors) out << fmt::format("  {}: {}\n", e.field, e.message);
  if (r.result) {
    const auto& arms = r.result->allocation.arms;
    std::string list;
    for (long n : arms) list += (list.empty() ? "" : ", ") + std::to_string(n);
    out << fmt::format("  n per arm: {}; total: {}; achieved power: {:.4f}\n", list, r.result->allocation.total(),
                       r.result->achieved_power);
  }
  if (r.prompt) out << r.prompt.value() << "\n";
}

int do_wizard(const std::string& transcript_path, const std::string& model_endpoint, std::istream& in, std::ostream& out,
              std::ostream& err) {
  auto client = session::make_client(model_endpoint);
  auto state = session::fresh("wizard", store::system_now_ms());
  out << "Power analysis wizard. Describe the study (for example: describe outcome=binary groups=2),\n"
         "or pick a test directly (choose two_sample_t). Then set parameters, solve, and try what-if\n"
         "changes (whatif power 0.9). Type 'explain' for the current status and 'quit' to finish.\n";
  std::string line;
  while (true) {
    out << "> " << std::flush;
    if (!std::getline(in, line)) break;
    const auto start = line.find_first_not_of(" \t\r");
    if (start == std::string::npos) continue;
    const std::string text = line.substr(start);
    if (text == "quit" || text == "exit") break;
    session::Interpretation meaning;
    try {
      meaning = client->interpret(text);
    } catch (const session::ParseError& e) {
      out << fmt::format("Could not read that: {}\n  {}\n  {}^\n", e.what(), text, std::string(e.position(), ' '));
      if (!state.pending.empty()) out << fmt::format("Still needed: {}\n", fmt::join(state.pending, ", "));
      continue;
    }
    for (const auto& d : meaning.diagnostics) err << "note: " << d << "\n";
    auto t = session::apply(state, meaning.command, store::system_now_ms());
    state = std::move(t.state);
    show_reply(t.reply, out);
    if (meaning.command.verb == session::Verb::export_transcript && !t.reply.transcript.empty()) out << t.reply.transcript;
  }
  out << "\n";
  std::ofstream file(transcript_path);
  if (!file) {
    err << fmt::format("error: cannot write transcript to {}\n", transcript_path);
    return kExitInvalid;
  }
  file << session::transcript(state);
  out << fmt::format("Transcript saved to {}\n", transcript_path);
  return kExitOk;
}

// ---- serve ----------------------------------------------------------------

int do_serve(service::Config overrides, bool port_set, bool data_set, bool corpus_set, std::ostream& err) {
  service::Config config;
  try {
    config = service::config_from_env();
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitInvalid;
  }
  if (port_set) config.port = overrides.port;
  if (data_set) config.data_dir = overrides.data_dir;
  if (corpus_set) config.corpus = overrides.corpus;

  // Signals are handled on a dedicated thread; block them everywhere else.
  sigset_t signals;
  sigemptyset(&signals);
  sigaddset(&signals, SIGINT);
  sigaddset(&signals, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &signals, nullptr);

  std::unique_ptr<service::Service> svc;
  try {
    svc = std::make_unique<service::Service>(config);
  } catch (const std::exception& e) {
    err << "error: initialization failed: " << e.what() << "\n";
    return kExitMismatch;
  }
  if (!svc->bind()) {
    err << fmt::format("error: cannot bind {}:{}\n", config.host, config.port);
    return kExitMismatch;
  }
  err << fmt::format("powerlab {} listening on {}:{} ({} endpoints, {} scenarios, data in {})\n", api::kVersion,
                     config.host, config.port, api::endpoints().size(), svc->corpus_size(), config.data_dir.string());
  std::thread waiter([&] {
    int sig = 0;
    sigwait(&signals, &sig);
    svc->stop();
  });
  const bool served = svc->serve();
  // serve() returned on its own: wake the waiter.
  pthread_kill(waiter.native_handle(), SIGTERM);
  waiter.join();
  return served ? kExitOk : kExitMismatch;
}

}  // namespace

std::string flatten(const Json& j) {
  std::string out;
  flatten_into(j, "", out);
  return out;
}

int run(const std::vector<std::string>& args, std::istream& in, std::ostream& out, std::ostream& err) {
  CLI::App app{"Statistical power and sample-size calculations"};
  app.require_subcommand(1);
  const auto format_check = CLI::IsMember({"human", "machine", "json"});

  SolveArgs solve;
  auto* solve_cmd = app.add_subcommand("solve", "Solve one design (sample size by default)");
  solve_cmd->add_option("test", solve.test, "Test id, e.g. two_sample_t or two_sample_t_test")->required();
  solve_cmd->add_option("--format", solve.format, "Output format")->check(format_check);
  solve.flags.attach(*solve_cmd);

  CurveArgs curve;
  auto* curve_cmd = app.add_subcommand("curve", "Table of sample size or power over a swept input");
  curve_cmd->add_option("test", curve.test, "Test id")->required();
  curve_cmd->add_option("--sweep", curve.sweep, "Input to vary")->required();
  curve_cmd->add_option("--from", curve.from, "First value")->required();
  curve_cmd->add_option("--to", curve.to, "Last value")->required();
  curve_cmd->add_option("--steps", curve.steps, "Number of rows")->capture_default_str();
  curve_cmd->add_option("--format", curve.format, "Output format")->check(format_check);
  curve.flags.attach(*curve_cmd);

  std::string corpus = scenarios::default_corpus_path().string();
  std::string scenarios_format = "human";
  auto* scen_cmd = app.add_subcommand("scenarios", "Run the scenario corpus through selection and solving");
  scen_cmd->add_option("--corpus", corpus, "Corpus file");
  scen_cmd->add_option("--format", scenarios_format, "Output format")->check(format_check);

  RatifyArgs ratify;
  auto* ratify_cmd = app.add_subcommand("ratify", "Check the power formulas against simulation");
  ratify_cmd->add_option("--replications", ratify.replications, "Replications per grid point");
  ratify_cmd->add_option("--seed", ratify.seed, "Run seed");
  ratify_cmd->add_option("--threads", ratify.threads, "Worker threads (0: all cores)");
  ratify_cmd->add_option("--suite", ratify.suite, "ratify, size or both")->check(CLI::IsMember({"ratify", "size", "both"}));
  ratify_cmd->add_option("--test", ratify.tests, "Restrict to these tests");
  ratify_cmd->add_option("--format", ratify.format, "Output format")->check(CLI::IsMember({"human", "machine"}));

  std::string transcript = "powerlab-transcript.txt";
  const char* env_model = std::getenv("POWERLAB_MODEL_ENDPOINT");
  std::string model_endpoint = env_model ? env_model : "";
  auto* wizard_cmd = app.add_subcommand("wizard", "Interactive design session");
  wizard_cmd->add_option("--transcript", transcript, "Where to save the transcript on exit");
  wizard_cmd->add_option("--model-endpoint", model_endpoint, "External command-interpretation endpoint");

  service::Config serve_cfg;
  std::string data_dir;
  std::string serve_corpus;
  auto* serve_cmd = app.add_subcommand("serve", "Run the HTTP service");
  serve_cmd->add_option("--port", serve_cfg.port, "Listen port (overrides POWERLAB_PORT)");
  serve_cmd->add_option("--data-dir", data_dir, "Result log directory (overrides POWERLAB_DATA_DIR)");
  serve_cmd->add_option("--corpus", serve_corpus, "Scenario corpus (overrides POWERLAB_CORPUS)");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitInvalid;
  }

  if (*solve_cmd) return do_solve(*solve_cmd, solve, out, err);
  if (*curve_cmd) return do_curve(*curve_cmd, curve, out, err);
  if (*scen_cmd) return do_scenarios(corpus, scenarios_format, out, err);
  if (*ratify_cmd) return do_ratify(ratify, out, err);
  if (*wizard_cmd) return do_wizard(transcript, model_endpoint, in, out, err);
  serve_cfg.data_dir = data_dir;
  serve_cfg.corpus = serve_corpus;
  return do_serve(serve_cfg, serve_cmd->count("--port") > 0, serve_cmd->count("--data-dir") > 0,
                  serve_cmd->count("--corpus") > 0, err);
}

}  // namespace powerlab::cli
