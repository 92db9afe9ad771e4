#include "powerlab/scenarios.hpp"

#include <algorithm>
#include <chrono>
#include <fstream>

#include <fmt/format.h>
#include <json.hpp>

#include "powerlab/api.hpp"
#include "powerlab/session.hpp"

namespace powerlab::scenarios {

namespace {

std::string scalar_text(const nlohmann::ordered_json& v) {
  if (v.is_string()) return v.get<std::string>();
  if (v.is_boolean()) return v.get<bool>() ? "yes" : "no";
  if (v.is_number_integer()) return std::to_string(v.get<long long>());
  throw std::invalid_argument("descriptor values must be strings, integers or booleans");
}

ScenarioRecord parse_record(const std::string& text) {
  const auto j = nlohmann::ordered_json::parse(text);
  if (!j.is_object()) throw std::invalid_argument("record must be a JSON object");
  static const std::vector<std::string> keys = {"id", "prose", "descriptor", "expected_test", "expected_n", "params"};
  for (const auto& [k, v] : j.items()) {
    if (std::find(keys.begin(), keys.end(), k) == keys.end()) throw std::invalid_argument(fmt::format("unknown key '{}'", k));
  }
  if (!j.at("params").is_object() || !j.at("descriptor").is_object()) {
    throw std::invalid_argument("descriptor and params must be objects");
  }
  ScenarioRecord r;
  r.id = j.at("id").get<std::string>();
  r.prose = j.at("prose").get<std::string>();
  for (const auto& [k, v] : j.at("descriptor").items()) r.descriptor[k] = scalar_text(v);
  auto study = session::complete_descriptor(r.descriptor);
  if (!study) throw std::invalid_argument("descriptor needs a valid outcome");
  if (auto why = selector::incoherence(*study)) throw std::invalid_argument("incoherent descriptor: " + *why);
  r.study = *study;
  const auto test = test_from_string(j.at("expected_test").get<std::string>());
  if (!test) throw std::invalid_argument("unknown expected_test");
  r.expected_test = *test;
  r.expected_n = j.at("expected_n").get<long>();
  if (r.expected_n < 1) throw std::invalid_argument("expected_n must be positive");
  std::vector<FieldError> errors;
  r.params = api::params_from_json(j.at("params"), errors);
  if (!errors.empty()) throw std::invalid_argument(fmt::format("params.{}: {}", errors[0].field, errors[0].message));
  return r;
}

}  // namespace

CorpusError::CorpusError(std::string source, std::size_t line, const std::string& message)
    : std::runtime_error(fmt::format("{}:{}: {}", source, line, message)), line_(line) {}

std::vector<ScenarioRecord> parse_corpus(std::istream& in, const std::string& source) {
  std::vector<ScenarioRecord> out;
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    const auto start = line.find_first_not_of(" \t\r");
    if (start == std::string::npos || line[start] == '#') continue;
    try {
      ScenarioRecord r = parse_record(line);
      r.line = number;
      for (const auto& prior : out) {
        if (prior.id == r.id) throw std::invalid_argument(fmt::format("duplicate id '{}'", r.id));
      }
      out.push_back(std::move(r));
    } catch (const std::exception& e) {
      throw CorpusError(source, number, e.what());
    }
  }
  if (out.empty()) throw CorpusError(source, number, "corpus has no records");
  return out;
}

std::vector<ScenarioRecord> load_corpus(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw CorpusError(path.string(), 0, "cannot open corpus");
  return parse_corpus(in, path.string());
}

std::filesystem::path default_corpus_path() { return POWERLAB_DEFAULT_CORPUS; }

ScenarioOutcome run(const ScenarioRecord& record) {
  const auto start = std::chrono::steady_clock::now();
  ScenarioOutcome o;
  o.id = record.id;
  o.expected_test = record.expected_test;
  o.expected_n = record.expected_n;
  const auto rec = selector::select(record.study);
  o.selected_test = rec.test;
  o.selection_ok = rec.test == record.expected_test;
  const auto outcome = api::compute(rec.test, record.params);
  if (outcome.status == 200) {
    o.n = outcome.body.at("sample_size").get<long>();
    o.n_ok = o.selection_ok && *o.n == record.expected_n;
  } else {
    o.error = api::dump(outcome.body);
  }
  o.millis = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
  return o;
}

}  // namespace powerlab::scenarios
