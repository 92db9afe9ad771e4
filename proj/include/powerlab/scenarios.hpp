#pragma once

// Evaluation scenario corpus: one JSON object per line, with blank lines
// and lines starting with '#' ignored. Each record holds
//   id, prose, descriptor (outcome, groups, pairing, comparison,
//   assumption, covariates), expected_test, expected_n, params
// where expected_n is the endpoint's sample_size field and params is an
// endpoint request body.

#include <filesystem>
#include <istream>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "powerlab/design.hpp"
#include "powerlab/inputs.hpp"
#include "powerlab/selector.hpp"

namespace powerlab::scenarios {

struct ScenarioRecord {
  std::string id;
  std::string prose;
  std::map<std::string, std::string> descriptor;
  selector::StudyDescriptor study;
  TestId expected_test = TestId::two_sample_t;
  long expected_n = 0;
  inputs::ParamMap params;
  std::size_t line = 0;
};

class CorpusError : public std::runtime_error {
 public:
  CorpusError(std::string source, std::size_t line, const std::string& message);
  [[nodiscard]] std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

std::vector<ScenarioRecord> parse_corpus(std::istream& in, const std::string& source);
std::vector<ScenarioRecord> load_corpus(const std::filesystem::path& path);

/// Corpus shipped with the repository.
std::filesystem::path default_corpus_path();

struct ScenarioOutcome {
  std::string id;
  TestId expected_test = TestId::two_sample_t;
  TestId selected_test = TestId::two_sample_t;
  bool selection_ok = false;
  long expected_n = 0;
  std::optional<long> n;
  bool n_ok = false;  // false whenever selection is wrong
  double millis = 0.0;
  std::string error;
};

/// Runs the selector on the descriptor, then solves the selected test with
/// the record's parameters.
ScenarioOutcome run(const ScenarioRecord& record);

}  // namespace powerlab::scenarios
