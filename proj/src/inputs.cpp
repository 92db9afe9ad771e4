#include "powerlab/inputs.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <fmt/format.h>

#include "powerlab/power.hpp"

namespace powerlab::inputs {

namespace {

FieldDef number(std::string_view name, Role role, std::string_view desc, std::optional<double> lo = {},
                std::optional<double> hi = {}, bool excl_lo = false, bool excl_hi = false, bool prob = false) {
  FieldDef f;
  f.name = name;
  f.role = role;
  f.description = desc;
  f.minimum = lo;
  f.maximum = hi;
  f.exclusive_minimum = excl_lo;
  f.exclusive_maximum = excl_hi;
  f.probability = prob;
  return f;
}

FieldDef integer(std::string_view name, Role role, std::string_view desc, double lo, double hi) {
  FieldDef f = number(name, role, desc, lo, hi);
  f.type = FieldType::integer;
  return f;
}

FieldDef choice(std::string_view name, Role role, std::string_view desc, std::vector<std::string_view> options) {
  FieldDef f;
  f.name = name;
  f.type = FieldType::choice;
  f.role = role;
  f.description = desc;
  f.choices = std::move(options);
  return f;
}

std::vector<FieldDef> build_catalog() {
  std::vector<FieldDef> c;
  c.push_back(number("delta", Role::effect, "Mean difference to detect (mean of within-pair differences for paired designs)"));
  c.push_back(number("sd", Role::variability, "Standard deviation of the outcome (of within-pair differences for paired designs)",
                     0.0, std::nullopt, true));
  c.push_back(number("ratio", Role::design, "Allocation ratio n2/n1", 1e-3, 1e3));
  c.push_back(number("f", Role::effect, "Cohen's f: SD of group means over the common SD", 0.0));
  c.push_back(number("eta2", Role::effect, "Proportion of variance explained by group; converted to f", 0.0, 1.0, false, true, true));
  FieldDef means;
  means.name = "means";
  means.type = FieldType::number_list;
  means.role = Role::effect;
  means.description = "Hypothesized group means; with sd, converted to f";
  c.push_back(means);
  c.push_back(integer("k", Role::design, "Number of groups", 2, 1000));
  c.push_back(number("p0", Role::effect, "Baseline (null or control) proportion", 0.0, 1.0, true, true, true));
  c.push_back(number("p1", Role::effect, "Proportion under the alternative (treatment arm)", 0.0, 1.0, true, true, true));
  c.push_back(number("w", Role::effect, "Cohen's w", 0.0));
  c.push_back(integer("df", Role::design, "Degrees of freedom of the chi-square test", 1, 10000));
  c.push_back(number("r", Role::effect, "Correlation under the alternative", -1.0, 1.0, true, true));
  c.push_back(number("hr", Role::effect, "Hazard ratio, experimental over control", 0.0, std::nullopt, true));
  c.push_back(number("pE", Role::variability, "Probability of an event in the experimental arm over the study", 0.0, 1.0, true,
                     false, true));
  c.push_back(number("pC", Role::variability, "Probability of an event in the control arm over the study", 0.0, 1.0, true,
                     false, true));
  c.push_back(number("ratio_k", Role::design, "Allocation ratio nE/nC", 1e-3, 1e3));
  c.push_back(number("exposure_prev", Role::variability, "Prevalence of a binary covariate of interest", 0.0, 1.0, true, true,
                     true));
  c.push_back(number("sigma", Role::variability, "SD of a continuous covariate of interest", 0.0, std::nullopt, true));
  c.push_back(number("psi", Role::design, "Overall probability of an event", 0.0, 1.0, false, false, true));
  c.push_back(number("rho2", Role::design, "R-squared of the covariate on the other covariates", 0.0, 1.0, false, false, true));
  c.push_back(number("are", Role::design, "Asymptotic relative efficiency of the rank test to its parametric parent", 0.0,
                     3.0, true));
  c.push_back(number("alpha", Role::error_rate, "Type I error rate", 0.0, 1.0, true, true, true));
  c.push_back(choice("tails", Role::error_rate, "Sidedness of the alternative", {"one", "two"}));
  c.push_back(number("power", Role::error_rate, "Target power", 0.0, 1.0, true, false, true));
  c.push_back(integer("n", Role::design, "Sample size of the reference arm (per group for multi-arm designs)", 1, 1e9));
  c.push_back(choice("target", Role::target, "Quantity to solve for", {"sample_size", "power", "effect"}));
  return c;
}

SchemaEntry entry(std::string name, std::optional<std::string> def = {}, std::vector<std::string> alts = {}) {
  SchemaEntry e;
  e.name = std::move(name);
  e.default_text = std::move(def);
  e.alternatives = std::move(alts);
  return e;
}

SchemaEntry effect_entry(std::string name, std::vector<std::string> alts = {}) {
  SchemaEntry e = entry(std::move(name), std::nullopt, std::move(alts));
  e.required_for_effect = false;
  return e;
}

bool has(const ParamMap& m, std::string_view name) { return m.find(name) != m.end(); }

bool satisfied(const SchemaEntry& e, const ParamMap& m) {
  if (has(m, e.name)) return true;
  return std::any_of(e.alternatives.begin(), e.alternatives.end(), [&](const auto& a) { return has(m, a); });
}

bool required_for(const SchemaEntry& e, Target t) {
  switch (t) {
    case Target::sample_size: return e.required_for_sample_size;
    case Target::power: return e.required_for_power;
    case Target::effect: return e.required_for_effect;
  }
  return true;
}

std::string fmt_double(double v) { return fmt::format("{}", v); }

}  // namespace

const std::vector<FieldDef>& catalog() {
  static const std::vector<FieldDef> c = build_catalog();
  return c;
}

const FieldDef* find_field(std::string_view name) {
  for (const auto& f : catalog()) {
    if (f.name == name) return &f;
  }
  return nullptr;
}

std::size_t edit_distance(std::string_view a, std::string_view b) {
  std::vector<std::size_t> prev(b.size() + 1), cur(b.size() + 1);
  std::iota(prev.begin(), prev.end(), 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j) {
      const std::size_t sub = prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, sub});
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

std::string nearest_field(std::string_view name) {
  std::string best;
  std::size_t best_d = std::string::npos;
  for (const auto& f : catalog()) {
    const std::size_t d = edit_distance(name, f.name);
    if (d < best_d) {
      best_d = d;
      best = std::string(f.name);
    }
  }
  return best;
}

std::vector<SchemaEntry> schema(TestId test) {
  std::vector<SchemaEntry> s;
  const TestId parent = parametric_parent(test);
  switch (parent) {
    case TestId::one_sample_t:
    case TestId::paired_t:
    case TestId::two_sample_t:
      s.push_back(effect_entry("delta"));
      s.push_back(entry("sd"));
      if (parent == TestId::two_sample_t) s.push_back(entry("ratio", "1"));
      break;
    case TestId::one_way_anova:
      s.push_back(effect_entry("f", {"eta2", "means"}));
      s.push_back(entry("k"));
      break;
    case TestId::one_proportion_z:
    case TestId::two_proportions_z:
      s.push_back(entry("p0"));
      s.push_back(effect_entry("p1"));
      if (parent == TestId::two_proportions_z) s.push_back(entry("ratio", "1"));
      break;
    case TestId::chi_square:
      s.push_back(effect_entry("w"));
      s.push_back(entry("df"));
      break;
    case TestId::correlation: s.push_back(effect_entry("r")); break;
    case TestId::log_rank:
      s.push_back(effect_entry("hr"));
      s.push_back(entry("pE"));
      s.push_back(entry("pC"));
      s.push_back(entry("ratio_k", "1"));
      break;
    case TestId::cox_ph:
      s.push_back(effect_entry("hr"));
      s.push_back(entry("exposure_prev", std::nullopt, {"sigma"}));
      s.push_back(entry("psi", "1"));
      s.push_back(entry("rho2", "0"));
      break;
    default: break;
  }
  if (is_nonparametric(test)) s.push_back(entry("are", fmt_double(kDefaultAre)));
  s.push_back(entry("alpha", "0.05"));
  if (test != TestId::log_rank && test != TestId::cox_ph && !is_omnibus(test)) s.push_back(entry("tails", "two"));
  SchemaEntry power = entry("power");
  power.required_for_power = false;
  s.push_back(power);
  SchemaEntry n = entry("n");
  n.required_for_sample_size = false;
  s.push_back(n);
  return s;
}

std::vector<std::string> accepted_names(TestId test) {
  std::vector<std::string> out;
  for (const auto& e : schema(test)) {
    out.push_back(e.name);
    for (const auto& a : e.alternatives) out.push_back(a);
  }
  // Group means need a common SD to become Cohen's f.
  if (parametric_parent(test) == TestId::one_way_anova) out.push_back("sd");
  out.push_back("target");
  return out;
}

std::vector<SchemaEntry> checklist(TestId test, Target target) {
  std::vector<SchemaEntry> out;
  for (auto& e : schema(test)) {
    if (required_for(e, target) || e.default_text) out.push_back(std::move(e));
  }
  return out;
}

std::vector<std::string> missing(TestId test, Target target, const ParamMap& known) {
  std::vector<std::string> out;
  for (const auto& e : schema(test)) {
    if (!required_for(e, target) || e.default_text || satisfied(e, known)) continue;
    if (e.name == "k" && has(known, "means")) continue;
    out.push_back(e.name);
  }
  if (has(known, "means") && !has(known, "sd") && parametric_parent(test) == TestId::one_way_anova) {
    out.push_back("sd");
  }
  return out;
}

std::string format_value(const ParamValue& v) {
  if (const auto* d = std::get_if<double>(&v)) return fmt_double(*d);
  if (const auto* s = std::get_if<std::string>(&v)) return *s;
  const auto& list = std::get<std::vector<double>>(v);
  std::string out;
  for (std::size_t i = 0; i < list.size(); ++i) {
    if (i) out += ",";
    out += fmt_double(list[i]);
  }
  return out;
}

std::optional<std::string> check_value(std::string_view name, const ParamValue& value) {
  const FieldDef* found = find_field(name);
  if (!found) return fmt::format("unknown field; did you mean '{}'?", nearest_field(name));
  const FieldDef& def = *found;
  switch (def.type) {
    case FieldType::choice: {
      const auto* s = std::get_if<std::string>(&value);
      if (!s || std::find(def.choices.begin(), def.choices.end(), *s) == def.choices.end()) {
        std::string opts;
        for (auto c : def.choices) opts += (opts.empty() ? "" : ", ") + std::string(c);
        return fmt::format("must be one of: {}", opts);
      }
      return std::nullopt;
    }
    case FieldType::number_list: {
      const auto* l = std::get_if<std::vector<double>>(&value);
      if (!l || l->size() < 2 || !std::all_of(l->begin(), l->end(), [](double x) { return std::isfinite(x); })) {
        return "must be a list of at least two finite numbers";
      }
      return std::nullopt;
    }
    case FieldType::number:
    case FieldType::integer: {
      const auto* d = std::get_if<double>(&value);
      if (!d || !std::isfinite(*d)) return "must be a finite number";
      if (def.type == FieldType::integer && *d != std::floor(*d)) return "must be an integer";
      const bool low = def.minimum && (def.exclusive_minimum ? *d <= *def.minimum : *d < *def.minimum);
      const bool high = def.maximum && (def.exclusive_maximum ? *d >= *def.maximum : *d > *def.maximum);
      if (low || high) {
        const std::string lo = def.minimum ? fmt::format("{}{}", def.exclusive_minimum ? "(" : "[", *def.minimum) : "(-inf";
        const std::string hi = def.maximum ? fmt::format("{}{}", *def.maximum, def.exclusive_maximum ? ")" : "]") : "inf)";
        return fmt::format("must lie in {}, {}", lo, hi);
      }
      return std::nullopt;
    }
  }
  return std::nullopt;
}

Prepared prepare(TestId test, const ParamMap& params) {
  std::vector<FieldError> errs;
  auto add = [&](std::string_view field, std::string msg) { errs.push_back({std::string(field), std::move(msg)}); };
  const auto accepted = accepted_names(test);

  // Names and value types.
  for (const auto& [name, value] : params) {
    if (std::find(accepted.begin(), accepted.end(), name) == accepted.end()) {
      if (find_field(name)) {
        add(name, fmt::format("not accepted by {}", to_string(test)));
      } else {
        add(name, fmt::format("unknown field; did you mean '{}'?", nearest_field(name)));
      }
      continue;
    }
    if (auto why = check_value(name, value)) add(name, *why);
  }
  if (!errs.empty()) throw InvalidSpec(std::move(errs));

  auto num = [&](std::string_view name) -> std::optional<double> {
    auto it = params.find(name);
    if (it == params.end()) return std::nullopt;
    return std::get<double>(it->second);
  };
  auto str = [&](std::string_view name) -> std::optional<std::string> {
    auto it = params.find(name);
    if (it == params.end()) return std::nullopt;
    return std::get<std::string>(it->second);
  };

  Prepared out;
  out.inputs = params;
  const Target target = target_from_string(str("target").value_or("sample_size")).value();
  out.inputs["target"] = std::string(to_string(target));

  for (const auto& m : missing(test, target, params)) add(m, fmt::format("required when target is {}", to_string(target)));
  if (target == Target::sample_size && has(params, "n")) add("n", "not used when target is sample_size");
  if (target == Target::power && has(params, "power")) add("power", "not used when target is power");

  for (const auto& e : schema(test)) {
    if (e.default_text && !has(params, e.name)) {
      const FieldDef& def = *find_field(e.name);
      out.inputs[e.name] = def.type == FieldType::choice ? ParamValue{*e.default_text} : ParamValue{std::stod(*e.default_text)};
      out.defaults_applied.push_back(e.name);
    }
  }
  auto val = [&](std::string_view name) { return std::get<double>(out.inputs.at(std::string(name))); };

  TestSpec spec;
  spec.test = test;
  switch (parametric_parent(test)) {
    case TestId::one_sample_t:
    case TestId::paired_t:
    case TestId::two_sample_t: {
      MeanDesign d;
      d.delta = num("delta").value_or(0.0);
      d.sd = num("sd").value_or(1.0);
      if (has(out.inputs, "ratio")) d.ratio = val("ratio");
      spec.params = d;
      break;
    }
    case TestId::one_way_anova: {
      AnovaDesign d;
      const int given = static_cast<int>(has(params, "f")) + static_cast<int>(has(params, "eta2")) +
                        static_cast<int>(has(params, "means"));
      if (given > 1) add("f", "give only one of f, eta2 or means");
      d.k = static_cast<int>(num("k").value_or(2));
      if (auto f = num("f")) d.f = *f;
      if (auto e = num("eta2")) d.f = std::sqrt(*e / (1.0 - *e));
      if (auto it = params.find("means"); it != params.end()) {
        const auto& m = std::get<std::vector<double>>(it->second);
        if (has(params, "k") && static_cast<std::size_t>(d.k) != m.size()) {
          add("k", fmt::format("does not match the {} group means", m.size()));
        }
        d.k = static_cast<int>(m.size());
        const double mean = std::accumulate(m.begin(), m.end(), 0.0) / static_cast<double>(m.size());
        double ss = 0.0;
        for (double x : m) ss += (x - mean) * (x - mean);
        if (auto sd = num("sd")) d.f = std::sqrt(ss / static_cast<double>(m.size())) / *sd;
      } else if (has(params, "sd")) {
        add("sd", "only used together with means");
      }
      spec.params = d;
      break;
    }
    case TestId::one_proportion_z:
    case TestId::two_proportions_z: {
      ProportionDesign d;
      d.p0 = num("p0").value_or(0.5);
      d.p1 = num("p1").value_or(d.p0);
      if (has(out.inputs, "ratio")) d.ratio = val("ratio");
      spec.params = d;
      break;
    }
    case TestId::chi_square:
      spec.params = ChiSquareDesign{num("w").value_or(0.0), static_cast<int>(num("df").value_or(1))};
      break;
    case TestId::correlation: spec.params = CorrelationDesign{num("r").value_or(0.0)}; break;
    case TestId::log_rank:
    case TestId::cox_ph: {
      SurvivalDesign d;
      d.hr = num("hr").value_or(1.0);
      if (test == TestId::log_rank) {
        d.pE = num("pE").value_or(1.0);
        d.pC = num("pC").value_or(1.0);
        d.ratio_k = val("ratio_k");
      } else {
        d.exposure_prev = num("exposure_prev");
        d.sigma = num("sigma");
        d.psi = val("psi");
        d.rho2 = val("rho2");
      }
      spec.params = d;
      break;
    }
    default: break;
  }
  spec.alpha = Probability{val("alpha")};
  if (has(out.inputs, "tails")) spec.tails = std::get<std::string>(out.inputs.at("tails")) == "one" ? Tails::one : Tails::two;
  if (has(out.inputs, "are")) spec.are = val("are");

  if (errs.empty()) {
    for (auto& e : power::validate(spec)) {
      if (e.field == "params") continue;
      const bool dup = std::any_of(errs.begin(), errs.end(), [&](const FieldError& x) { return x.field == e.field; });
      if (!dup) errs.push_back(std::move(e));
    }
  }
  if (auto p = num("power"); p && target != Target::power && *p <= spec.alpha.value()) {
    add("power", "must exceed alpha");
  }
  if (!errs.empty()) throw InvalidSpec(std::move(errs));

  out.request.spec = spec;
  out.request.target = target;
  if (auto p = num("power"); p && target != Target::power) out.request.power_goal = Probability{*p};
  if (auto n = num("n"); n && target != Target::sample_size) out.request.n_fixed = static_cast<long>(*n);
  return out;
}

}  // namespace powerlab::inputs
