#include "powerlab/command.hpp"

#include <algorithm>
#include <cctype>
#include <cstdlib>

#include <fmt/format.h>

#include "powerlab/selector.hpp"

namespace powerlab::session {

namespace {

enum class Tok { word, number, equals, comma, lbracket, rbracket, end };

struct Token {
  Tok kind = Tok::end;
  std::string text;
  bool percent = false;
  std::size_t pos = 0;
};

std::string lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) { return std::tolower(c); });
  return out;
}

std::vector<Token> tokenize(std::string_view in) {
  std::vector<Token> out;
  std::size_t i = 0;
  auto digit = [&](std::size_t j) { return j < in.size() && std::isdigit(static_cast<unsigned char>(in[j])); };
  while (i < in.size()) {
    const char c = in[i];
    if (std::isspace(static_cast<unsigned char>(c))) {
      ++i;
      continue;
    }
    Token t;
    t.pos = i;
    if (c == '=' || c == ',' || c == '[' || c == ']') {
      t.kind = c == '=' ? Tok::equals : c == ',' ? Tok::comma : c == '[' ? Tok::lbracket : Tok::rbracket;
      t.text = std::string(1, c);
      ++i;
    } else if (digit(i) || ((c == '-' || c == '+' || c == '.') && (digit(i + 1) || (in[i + 1] == '.' && digit(i + 2))))) {
      std::size_t j = i;
      if (in[j] == '-' || in[j] == '+') ++j;
      while (digit(j)) ++j;
      if (j < in.size() && in[j] == '.') {
        ++j;
        while (digit(j)) ++j;
      }
      if (j < in.size() && (in[j] == 'e' || in[j] == 'E')) {
        std::size_t k = j + 1;
        if (k < in.size() && (in[k] == '-' || in[k] == '+')) ++k;
        if (digit(k)) {
          j = k;
          while (digit(j)) ++j;
        }
      }
      t.kind = Tok::number;
      t.text = std::string(in.substr(i, j - i));
      if (j < in.size() && in[j] == '%') {
        t.percent = true;
        ++j;
      }
      i = j;
    } else if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
      std::size_t j = i;
      while (j < in.size() &&
             (std::isalnum(static_cast<unsigned char>(in[j])) || in[j] == '_' || in[j] == '-' || in[j] == '.')) {
        ++j;
      }
      t.kind = Tok::word;
      t.text = std::string(in.substr(i, j - i));
      i = j;
    } else {
      throw ParseError(fmt::format("unexpected character '{}' at {}", c, i), i,
                       {"word", "number", "'='", "','", "'['", "']'"});
    }
    out.push_back(std::move(t));
  }
  Token end;
  end.pos = in.size();
  out.push_back(end);
  return out;
}

const std::vector<std::pair<std::string_view, std::string_view>>& aliases() {
  static const std::vector<std::pair<std::string_view, std::string_view>> a = {
      {"baseline", "p0"},
      {"null-proportion", "p0"},
      {"hazard-ratio", "hr"},
      {"significance", "alpha"},
      {"alpha-level", "alpha"},
      {"sides", "tails"},
      {"standard-deviation", "sd"},
      {"difference", "delta"},
      {"mean-difference", "delta"},
      {"groups", "k"},
      {"correlation", "r"},
      {"allocation", "ratio"},
      {"allocation-ratio", "ratio"},
      {"sample-size", "n"},
      {"eta-squared", "eta2"},
      {"arr", kRiskReduction},
      {"absolute-risk-reduction", kRiskReduction},
      {"risk-reduction", kRiskReduction},
  };
  return a;
}

std::vector<std::string> known_param_names() {
  std::vector<std::string> out;
  for (const auto& f : inputs::catalog()) {
    if (f.name != "target") out.emplace_back(f.name);
  }
  for (const auto& [a, _] : aliases()) out.emplace_back(a);
  return out;
}

std::string nearest_param(std::string_view name) {
  std::string best;
  std::size_t best_d = std::string::npos;
  const std::string low = lower(name);
  for (const auto& cand : known_param_names()) {
    const std::size_t d = inputs::edit_distance(low, lower(cand));
    if (d < best_d) {
      best_d = d;
      best = cand;
    }
  }
  return best;
}

std::string format_number(double v) { return fmt::format("{}", v); }

class Parser {
 public:
  explicit Parser(std::string_view text) : toks_(tokenize(text)) {}

  Command parse() {
    const Token& head = peek();
    if (head.kind != Tok::word) fail(head, "expected a command verb", verbs());
    const std::string verb = lower(head.text);
    advance();
    Command cmd;
    if (verb == "describe") {
      cmd.verb = Verb::describe;
      parse_descriptor(cmd);
    } else if (verb == "choose") {
      cmd.verb = Verb::choose;
      const Token& t = peek();
      std::vector<std::string> tests;
      for (TestId id : kAllTests) tests.emplace_back(to_string(id));
      if (t.kind != Tok::word) fail(t, "expected a test name", tests);
      auto id = test_from_string(lower(t.text));
      if (!id) fail(t, fmt::format("unknown test '{}'", t.text), tests);
      cmd.test = id;
      advance();
    } else if (verb == "set" || verb == "whatif") {
      cmd.verb = verb == "set" ? Verb::set : Verb::whatif;
      parse_assignments(cmd);
    } else if (verb == "unset") {
      cmd.verb = Verb::unset;
      if (peek().kind != Tok::word) fail(peek(), "expected a parameter name", {"parameter name"});
      while (peek().kind == Tok::word) {
        cmd.names.push_back(param_name(peek()));
        advance();
        if (peek().kind == Tok::comma) advance();
      }
    } else if (verb == "solve") {
      cmd.verb = Verb::solve;
      if (peek().kind == Tok::word) {
        auto target = target_from_string(lower(peek().text));
        if (!target) fail(peek(), fmt::format("unknown target '{}'", peek().text), {"n", "sample_size", "power", "effect"});
        cmd.target = target;
        advance();
      }
    } else if (verb == "explain") {
      cmd.verb = Verb::explain;
      if (peek().kind == Tok::word) {
        cmd.topic = lower(peek().text);
        if (auto p = canonical_param(peek().text)) cmd.topic = *p;
        advance();
      }
    } else if (verb == "export") {
      cmd.verb = Verb::export_transcript;
    } else {
      fail(head, fmt::format("unknown command '{}'", head.text), verbs());
    }
    if (peek().kind != Tok::end) fail(peek(), fmt::format("unexpected '{}'", peek().text), {"end of input"});
    return cmd;
  }

 private:
  static std::vector<std::string> verbs() {
    return {"describe", "choose", "set", "unset", "solve", "whatif", "explain", "export"};
  }

  const Token& peek() const { return toks_[at_]; }
  void advance() {
    if (at_ + 1 < toks_.size()) ++at_;
  }

  [[noreturn]] static void fail(const Token& t, std::string msg, std::vector<std::string> expected) {
    throw ParseError(fmt::format("{} at position {}", msg, t.pos), t.pos, std::move(expected));
  }

  std::string param_name(const Token& t) {
    if (auto p = canonical_param(t.text)) return *p;
    fail(t, fmt::format("unknown parameter '{}'; did you mean '{}'?", t.text, nearest_param(t.text)),
         {"parameter name"});
  }

  double number_value(const Token& t) {
    std::string text = t.text;
    if (t.percent) {
      if (text.find_first_of("eE") != std::string::npos) fail(t, "percent values cannot use exponents", {"number"});
      text = shift_percent(text);
    }
    return std::strtod(text.c_str(), nullptr);
  }

  inputs::ParamValue value_for(const std::string& name) {
    const Token& t = peek();
    if (name == kRiskReduction) {
      if (t.kind != Tok::number) fail(t, fmt::format("expected a number for {}", name), {"number"});
      advance();
      return number_value(t);
    }
    const auto* def = inputs::find_field(name);
    switch (def->type) {
      case inputs::FieldType::choice: {
        std::vector<std::string> opts(def->choices.begin(), def->choices.end());
        if (t.kind != Tok::word) fail(t, fmt::format("expected one of the {} options", name), opts);
        const std::string v = lower(t.text);
        if (std::find(opts.begin(), opts.end(), v) == opts.end()) fail(t, fmt::format("invalid {} '{}'", name, t.text), opts);
        advance();
        return v;
      }
      case inputs::FieldType::number_list: {
        if (t.kind != Tok::lbracket) fail(t, fmt::format("expected a bracketed list for {}", name), {"'['"});
        advance();
        std::vector<double> values;
        while (true) {
          const Token& n = peek();
          if (n.kind != Tok::number) fail(n, "expected a number", {"number"});
          values.push_back(number_value(n));
          advance();
          if (peek().kind == Tok::comma) {
            advance();
            continue;
          }
          if (peek().kind == Tok::rbracket) {
            advance();
            break;
          }
          fail(peek(), "expected ',' or ']'", {"','", "']'"});
        }
        return values;
      }
      default:
        if (t.kind != Tok::number) fail(t, fmt::format("expected a number for {}", name), {"number"});
        advance();
        return number_value(t);
    }
  }

  void parse_assignments(Command& cmd) {
    if (peek().kind != Tok::word) fail(peek(), "expected a parameter name", {"parameter name"});
    while (true) {
      const std::string name = param_name(peek());
      advance();
      if (peek().kind == Tok::equals) advance();
      cmd.assignments.emplace_back(name, value_for(name));
      if (peek().kind == Tok::comma || (peek().kind == Tok::word && lower(peek().text) == "and")) advance();
      if (peek().kind == Tok::end) break;
      if (peek().kind != Tok::word) fail(peek(), "expected a parameter name", {"parameter name", "end of input"});
    }
  }

  void parse_descriptor(Command& cmd) {
    using namespace selector;
    auto word_value = [&](const std::string& key, const std::string& v, const Token& at) {
      if (key == "outcome") {
        const std::string o = v == "survival" ? "time_to_event" : v;
        if (!outcome_from_string(o)) fail(at, fmt::format("invalid outcome '{}'", v), {"continuous", "binary", "time_to_event", "correlation"});
        cmd.descriptor["outcome"] = o;
      } else if (key == "pairing") {
        if (!pairing_from_string(v)) fail(at, fmt::format("invalid pairing '{}'", v), {"independent", "paired"});
        cmd.descriptor["pairing"] = v;
      } else if (key == "comparison") {
        if (!comparison_from_string(v)) fail(at, fmt::format("invalid comparison '{}'", v), {"vs_constant", "between_groups"});
        cmd.descriptor["comparison"] = v;
      } else if (key == "assumption") {
        if (!assumption_from_string(v)) {
          fail(at, fmt::format("invalid assumption '{}'", v), {"parametric", "nonparametric", "unspecified"});
        }
        cmd.descriptor["assumption"] = v;
      } else if (key == "covariates") {
        if (v == "yes" || v == "true" || v == "adjusted") {
          cmd.descriptor["covariates"] = "yes";
        } else if (v == "no" || v == "false" || v == "unadjusted") {
          cmd.descriptor["covariates"] = "no";
        } else {
          fail(at, fmt::format("invalid covariates '{}'", v), {"yes", "no"});
        }
      } else if (key == "groups") {
        char* end = nullptr;
        const long g = std::strtol(v.c_str(), &end, 10);
        if (*end != '\0' || g < 1) fail(at, "groups must be a positive integer", {"integer"});
        cmd.descriptor["groups"] = std::to_string(g);
      } else {
        fail(at, fmt::format("unknown descriptor key '{}'", key),
             {"outcome", "groups", "pairing", "comparison", "assumption", "covariates"});
      }
    };
    if (peek().kind == Tok::end) fail(peek(), "expected a study description", {"outcome=...", "groups=..."});
    while (peek().kind != Tok::end) {
      const Token t = peek();
      if (t.kind == Tok::number) {
        advance();
        const Token g = peek();
        if (g.kind != Tok::word || (lower(g.text) != "groups" && lower(g.text) != "group")) {
          fail(g, "expected 'groups' after a number", {"groups"});
        }
        advance();
        word_value("groups", t.text, t);
        continue;
      }
      if (t.kind != Tok::word) fail(t, "expected a descriptor word", {"outcome=...", "groups=...", "paired", "binary"});
      advance();
      const std::string w = lower(t.text);
      if (peek().kind == Tok::equals) {
        advance();
        const Token v = peek();
        if (v.kind != Tok::word && v.kind != Tok::number) fail(v, "expected a value", {"word", "number"});
        advance();
        word_value(w == "n_groups" ? "groups" : w, lower(v.text), v);
        continue;
      }
      if (outcome_from_string(w) || w == "survival") {
        word_value("outcome", w, t);
      } else if (pairing_from_string(w)) {
        word_value("pairing", w, t);
      } else if (comparison_from_string(w)) {
        word_value("comparison", w, t);
      } else if (assumption_from_string(w)) {
        word_value("assumption", w, t);
      } else if (w == "adjusted" || w == "unadjusted") {
        word_value("covariates", w, t);
      } else {
        fail(t, fmt::format("unknown descriptor word '{}'", t.text),
             {"outcome=...", "groups=...", "pairing=...", "comparison=...", "assumption=...", "covariates=..."});
      }
    }
  }

  std::vector<Token> toks_;
  std::size_t at_ = 0;
};

std::string value_text(const inputs::ParamValue& v) {
  if (const auto* d = std::get_if<double>(&v)) return format_number(*d);
  if (const auto* s = std::get_if<std::string>(&v)) return *s;
  const auto& list = std::get<std::vector<double>>(v);
  std::string out = "[";
  for (std::size_t i = 0; i < list.size(); ++i) out += (i ? ", " : "") + format_number(list[i]);
  return out + "]";
}

}  // namespace

ParseError::ParseError(std::string message, std::size_t position, std::vector<std::string> expected)
    : std::runtime_error(std::move(message)), position_(position), expected_(std::move(expected)) {}

std::string_view to_string(Verb v) {
  switch (v) {
    case Verb::describe: return "describe";
    case Verb::choose: return "choose";
    case Verb::set: return "set";
    case Verb::unset: return "unset";
    case Verb::solve: return "solve";
    case Verb::whatif: return "whatif";
    case Verb::explain: return "explain";
    case Verb::export_transcript: return "export";
  }
  return "?";
}

std::optional<std::string> canonical_param(std::string_view name) {
  const std::string low = lower(name);
  for (const auto& f : inputs::catalog()) {
    if (f.name != "target" && lower(f.name) == low) return std::string(f.name);
  }
  for (const auto& [alias, target] : aliases()) {
    if (alias == low) return std::string(target);
  }
  return std::nullopt;
}

std::string shift_percent(std::string_view digits) {
  std::string sign;
  if (!digits.empty() && (digits[0] == '-' || digits[0] == '+')) {
    sign = std::string(1, digits[0]);
    digits.remove_prefix(1);
  }
  const auto dot = digits.find('.');
  std::string whole(digits.substr(0, dot));
  const std::string frac = dot == std::string_view::npos ? "" : std::string(digits.substr(dot + 1));
  if (whole.size() < 3) whole.insert(0, 3 - whole.size(), '0');
  return sign + whole.substr(0, whole.size() - 2) + "." + whole.substr(whole.size() - 2) + frac;
}

Command parse_command(std::string_view text) { return Parser(text).parse(); }

std::string to_text(const Command& cmd) {
  std::string out(to_string(cmd.verb));
  switch (cmd.verb) {
    case Verb::describe:
      for (const auto& [k, v] : cmd.descriptor) out += fmt::format(" {}={}", k, v);
      break;
    case Verb::choose:
      if (cmd.test) out += fmt::format(" {}", to_string(*cmd.test));
      break;
    case Verb::set:
    case Verb::whatif:
      for (std::size_t i = 0; i < cmd.assignments.size(); ++i) {
        out += fmt::format("{} {} {}", i ? "," : "", cmd.assignments[i].first, value_text(cmd.assignments[i].second));
      }
      break;
    case Verb::unset:
      for (const auto& n : cmd.names) out += " " + n;
      break;
    case Verb::solve:
      if (cmd.target) out += fmt::format(" {}", to_string(*cmd.target));
      break;
    case Verb::explain:
      if (!cmd.topic.empty()) out += " " + cmd.topic;
      break;
    case Verb::export_transcript: break;
  }
  return out;
}

}  // namespace powerlab::session
