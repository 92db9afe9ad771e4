#include "powerlab/session.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "powerlab/power.hpp"

namespace powerlab::session {

namespace {

bool has(const inputs::ParamMap& m, std::string_view name) { return m.find(name) != m.end(); }

std::string join(const std::vector<std::string>& items, std::string_view sep) {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) out += (i ? std::string(sep) : "") + items[i];
  return out;
}

std::optional<inputs::SchemaEntry> schema_entry(TestId test, std::string_view name) {
  for (auto& e : inputs::schema(test)) {
    if (e.name == name) return e;
  }
  return std::nullopt;
}

std::string prompt_for(TestId test, const std::string& name) {
  const auto* def = inputs::find_field(name);
  std::string text = fmt::format("What is {}", name);
  if (def) text += fmt::format(" ({})", def->description);
  text += "?";
  if (auto e = schema_entry(test, name)) {
    if (e->default_text) text += fmt::format(" Default: {}.", *e->default_text);
    if (!e->alternatives.empty()) text += fmt::format(" You may give {} instead.", join(e->alternatives, " or "));
  }
  return text;
}

std::string known_text(const inputs::ParamMap& known) {
  std::vector<std::string> parts;
  for (const auto& [k, v] : known) parts.push_back(fmt::format("{}={}", k, inputs::format_value(v)));
  return parts.empty() ? "none" : join(parts, ", ");
}

void refresh_pending(SessionState& s) {
  s.pending = s.chosen_test ? pending_for(*s.chosen_test, s.target, s.known) : std::vector<std::string>{};
}

// Drops values the chosen test does not accept; returns their names.
std::vector<std::string> prune_known(SessionState& s) {
  std::vector<std::string> dropped;
  const auto accepted = inputs::accepted_names(*s.chosen_test);
  for (auto it = s.known.begin(); it != s.known.end();) {
    if (std::find(accepted.begin(), accepted.end(), it->first) == accepted.end()) {
      dropped.push_back(it->first);
      it = s.known.erase(it);
    } else {
      ++it;
    }
  }
  return dropped;
}

void finish_with_prompt(const SessionState& s, Reply& r) {
  r.pending = s.pending;
  if (s.chosen_test && !s.pending.empty()) r.prompt = prompt_for(*s.chosen_test, s.pending.front());
}

std::string arms_text(const TestSpec& spec, const Allocation& a) {
  if (a.arms.size() == 1) return fmt::format("{} subjects", a.arms.front());
  const bool equal = std::all_of(a.arms.begin(), a.arms.end(), [&](long x) { return x == a.arms.front(); });
  if (equal) return fmt::format("{} per group ({} in total)", a.arms.front(), a.total());
  const auto labels = power::arm_labels(spec);
  std::vector<std::string> parts;
  for (std::size_t i = 0; i < a.arms.size(); ++i) {
    parts.push_back(fmt::format("{} {}", i < labels.size() ? labels[i] : fmt::format("arm{}", i + 1), a.arms[i]));
  }
  return fmt::format("{} ({} in total)", join(parts, ", "), a.total());
}

std::string result_text(const SolveRequest& req, const SolveResult& res) {
  const TestSpec& spec = req.spec;
  const bool omnibus = is_omnibus(spec.test) || spec.test == TestId::log_rank || spec.test == TestId::cox_ph;
  const std::string level =
      omnibus ? fmt::format("alpha {}", spec.alpha.value())
              : fmt::format("alpha {} ({}-sided)", spec.alpha.value(), spec.tails == Tails::one ? "one" : "two");
  std::string text;
  switch (res.target) {
    case Target::sample_size:
      text = fmt::format("The {} needs {} to reach power {} at {}; achieved power is {:.4f}.", to_string(spec.test),
                         arms_text(spec, res.allocation), req.power_goal->value(), level, res.achieved_power);
      break;
    case Target::power:
      text = fmt::format("With {}, the {} has power {:.4f} at {}.", arms_text(spec, res.allocation),
                         to_string(spec.test), res.achieved_power, level);
      break;
    case Target::effect:
      text = fmt::format("With {}, the smallest {} the {} detects with power {} at {} is {:.6g}.",
                         arms_text(spec, res.allocation), res.effect_field, to_string(spec.test),
                         req.power_goal->value(), level, res.effect_solved.value_or(0.0));
      break;
  }
  if (res.events_required) text += fmt::format(" It requires {} events.", *res.events_required);
  return text + fmt::format(" Formula: {}.", res.formula_id);
}

// Applies assignments atomically; false with errors in `r` on failure.
bool assign(SessionState& s, const std::vector<Assignment>& assignments, Reply& r) {
  SessionState next = s;
  std::vector<std::string> notes;
  for (const auto& [raw_name, value] : assignments) {
    std::string name = raw_name;
    inputs::ParamValue v = value;
    if (name == kRiskReduction) {
      auto it = next.known.find("p0");
      const auto* arr = std::get_if<double>(&v);
      if (it == next.known.end()) {
        r.errors.push_back({std::string(kRiskReduction), "needs p0 (the baseline) to be set first"});
        continue;
      }
      if (!arr) {
        r.errors.push_back({std::string(kRiskReduction), "must be a number"});
        continue;
      }
      const double p0 = std::get<double>(it->second);
      // Rounded to twelve decimals so 18% - 4% lands on 0.14 exactly.
      v = std::round((p0 - *arr) * 1e12) / 1e12;
      name = "p1";
      notes.push_back(fmt::format("p1 = p0 - {} = {}", inputs::format_value(value), inputs::format_value(v)));
    }
    if (auto why = inputs::check_value(name, v)) {
      r.errors.push_back({name, *why});
      continue;
    }
    if (next.chosen_test) {
      const auto accepted = inputs::accepted_names(*next.chosen_test);
      if (std::find(accepted.begin(), accepted.end(), name) == accepted.end()) {
        r.errors.push_back({name, fmt::format("not accepted by {}", to_string(*next.chosen_test))});
        continue;
      }
      // Alternatives of one checklist entry replace each other.
      for (const auto& e : inputs::schema(*next.chosen_test)) {
        std::vector<std::string> group = e.alternatives;
        group.push_back(e.name);
        if (std::find(group.begin(), group.end(), name) == group.end()) continue;
        for (const auto& other : group) {
          if (other != name) next.known.erase(other);
        }
      }
    }
    next.known[name] = v;
    notes.push_back(fmt::format("{}={}", name, inputs::format_value(v)));
  }
  if (!r.errors.empty()) {
    r.ok = false;
    std::vector<std::string> msgs;
    for (const auto& e : r.errors) msgs.push_back(fmt::format("{}: {}", e.field, e.message));
    r.explanation = fmt::format("Nothing was changed. {}.", join(msgs, "; "));
    return false;
  }
  refresh_pending(next);
  s = std::move(next);
  r.explanation = fmt::format("Recorded {}.", join(notes, ", "));
  return true;
}

void do_solve(SessionState& s, std::optional<Target> target, Reply& r) {
  if (!s.chosen_test) {
    r.ok = false;
    r.explanation = "No test is chosen yet. Describe the study or choose a test first.";
    return;
  }
  const TestId test = *s.chosen_test;
  s.target = target.value_or(s.target);
  for (const auto& e : inputs::checklist(test, s.target)) {
    if (!e.default_text || has(s.known, e.name)) continue;
    const auto* def = inputs::find_field(e.name);
    s.known[e.name] = def->type == inputs::FieldType::choice ? inputs::ParamValue{*e.default_text}
                                                              : inputs::ParamValue{std::stod(*e.default_text)};
    r.assumed.push_back(e.name);
  }
  refresh_pending(s);
  std::string assumed_text;
  if (!r.assumed.empty()) {
    std::vector<std::string> parts;
    for (const auto& a : r.assumed) parts.push_back(fmt::format("{}={}", a, inputs::format_value(s.known.at(a))));
    assumed_text = fmt::format("Assumed {}. ", join(parts, ", "));
  }
  if (!s.pending.empty()) {
    r.explanation = fmt::format("{}Still needed before solving for {}: {}.", assumed_text, to_string(s.target),
                                join(s.pending, ", "));
    return;
  }

  const inputs::ParamMap request = request_params(s);
  try {
    const auto prepared = inputs::prepare(test, request);
    r.result = power::solve(prepared.request);
    r.explanation = assumed_text + result_text(prepared.request, *r.result);
  } catch (const InvalidSpec& e) {
    r.ok = false;
    r.errors = e.errors();
    r.explanation = fmt::format("{}The design is not valid: {}", assumed_text, e.what());
  } catch (const Unreachable& e) {
    r.ok = false;
    r.explanation = fmt::format("{}The goal cannot be reached: {}", assumed_text, e.what());
  }
}

std::optional<SolveResult> last_result(const SessionState& s) {
  for (auto it = s.history.rbegin(); it != s.history.rend(); ++it) {
    if (it->reply.result) return it->reply.result;
  }
  return std::nullopt;
}

std::optional<std::string> last_result_explanation(const SessionState& s) {
  for (auto it = s.history.rbegin(); it != s.history.rend(); ++it) {
    if (it->reply.result) return it->reply.explanation;
  }
  return std::nullopt;
}

void do_explain(const SessionState& s, const std::string& topic, Reply& r) {
  if (topic.empty()) {
    std::string text = s.chosen_test ? fmt::format("Test: {}. ", to_string(*s.chosen_test)) : "No test chosen yet. ";
    text += fmt::format("Known: {}. ", known_text(s.known));
    text += s.pending.empty() ? "Nothing is pending." : fmt::format("Pending: {}.", join(s.pending, ", "));
    if (auto last = last_result_explanation(s)) text += " Last result: " + *last;
    r.explanation = text;
    return;
  }
  if (topic == "test") {
    if (auto d = complete_descriptor(s.descriptor); d && !selector::incoherence(*d)) {
      r.explanation = selector::select(*d).rationale;
    } else if (s.chosen_test) {
      r.explanation = fmt::format("The {} was chosen directly.", to_string(*s.chosen_test));
    } else {
      r.explanation = "No test chosen yet.";
    }
    return;
  }
  if (topic == "result" || topic == "formula") {
    auto last = last_result_explanation(s);
    r.explanation = last ? *last : "Nothing has been solved yet.";
    return;
  }
  if (const auto* def = inputs::find_field(topic)) {
    std::string text = fmt::format("{}: {}.", def->name, def->description);
    if (auto it = s.known.find(topic); it != s.known.end()) {
      text += fmt::format(" Current value: {}.", inputs::format_value(it->second));
    } else {
      text += " Not set.";
    }
    if (s.chosen_test) {
      if (auto e = schema_entry(*s.chosen_test, topic); e && e->default_text) {
        text += fmt::format(" Default: {}.", *e->default_text);
      }
    }
    r.explanation = text;
    return;
  }
  r.ok = false;
  r.explanation = fmt::format("Unknown topic '{}'. Try a parameter name, test, result or formula.", topic);
}

}  // namespace

inputs::ParamMap request_params(const SessionState& s) {
  inputs::ParamMap request;
  for (const auto& [k, v] : s.known) {
    if (k == "power" && s.target == Target::power) continue;
    if (k == "n" && s.target == Target::sample_size) continue;
    request[k] = v;
  }
  request["target"] = std::string(to_string(s.target));
  return request;
}

SessionState fresh(std::string id, std::int64_t now_ms) {
  SessionState s;
  s.id = std::move(id);
  s.created_ms = now_ms;
  s.updated_ms = now_ms;
  return s;
}

std::vector<std::string> pending_for(TestId test, Target target, const inputs::ParamMap& known) {
  std::vector<std::string> out;
  const bool anova = parametric_parent(test) == TestId::one_way_anova;
  for (const auto& e : inputs::checklist(test, target)) {
    if (has(known, e.name)) continue;
    if (std::any_of(e.alternatives.begin(), e.alternatives.end(), [&](const auto& a) { return has(known, a); })) continue;
    if (anova && e.name == "k" && has(known, "means")) continue;
    out.push_back(e.name);
  }
  if (anova && has(known, "means") && !has(known, "sd")) out.push_back("sd");
  return out;
}

std::optional<selector::StudyDescriptor> complete_descriptor(const std::map<std::string, std::string>& partial) {
  using namespace selector;
  auto get = [&](const char* key) -> std::optional<std::string> {
    auto it = partial.find(key);
    if (it == partial.end()) return std::nullopt;
    return it->second;
  };
  auto outcome = get("outcome");
  if (!outcome || !outcome_from_string(*outcome)) return std::nullopt;
  StudyDescriptor d;
  d.outcome = *outcome_from_string(*outcome);
  d.n_groups = get("groups") ? std::stoi(*get("groups")) : (d.outcome == Outcome::correlation ? 1 : 2);
  d.pairing = get("pairing") ? pairing_from_string(*get("pairing")).value_or(Pairing::independent) : Pairing::independent;
  if (auto c = get("comparison")) {
    d.comparison = comparison_from_string(*c).value_or(Comparison::between_groups);
  } else {
    d.comparison = (d.outcome == Outcome::correlation || d.n_groups == 1) ? Comparison::vs_constant
                                                                          : Comparison::between_groups;
  }
  d.assumption = get("assumption") ? assumption_from_string(*get("assumption")).value_or(Assumption::unspecified)
                                   : Assumption::unspecified;
  d.covariate_adjusted = get("covariates") == std::optional<std::string>("yes");
  return d;
}

Transition apply(const SessionState& state, const Command& cmd, std::int64_t now_ms) {
  SessionState s = state;
  Reply r;
  switch (cmd.verb) {
    case Verb::describe: {
      auto merged = s.descriptor;
      for (const auto& [k, v] : cmd.descriptor) merged[k] = v;
      auto d = complete_descriptor(merged);
      if (!d) {
        s.descriptor = merged;
        r.explanation = "What kind of outcome is measured: continuous, binary, time_to_event or correlation?";
        r.prompt = r.explanation;
        break;
      }
      if (auto why = selector::incoherence(*d)) {
        r.ok = false;
        r.explanation = fmt::format("That description does not fit a supported design: {}. Nothing was changed.", *why);
        break;
      }
      s.descriptor = merged;
      auto rec = selector::select(*d);
      s.chosen_test = rec.test;
      const auto dropped = prune_known(s);
      refresh_pending(s);
      r.explanation = rec.rationale;
      if (!dropped.empty()) r.explanation += fmt::format(" Dropped values the test does not use: {}.", join(dropped, ", "));
      r.recommendation = std::move(rec);
      finish_with_prompt(s, r);
      break;
    }
    case Verb::choose: {
      s.chosen_test = *cmd.test;
      const auto dropped = prune_known(s);
      refresh_pending(s);
      r.explanation = fmt::format("Using the {}. It needs: {}.", to_string(*cmd.test),
                                  join(pending_for(*cmd.test, s.target, {}), ", "));
      if (!dropped.empty()) r.explanation += fmt::format(" Dropped values the test does not use: {}.", join(dropped, ", "));
      finish_with_prompt(s, r);
      break;
    }
    case Verb::set:
      assign(s, cmd.assignments, r);
      finish_with_prompt(s, r);
      break;
    case Verb::unset: {
      std::vector<std::string> removed;
      for (const auto& n : cmd.names) {
        if (s.known.erase(n)) removed.push_back(n);
      }
      refresh_pending(s);
      r.explanation = removed.empty() ? "Nothing to remove." : fmt::format("Removed {}.", join(removed, ", "));
      finish_with_prompt(s, r);
      break;
    }
    case Verb::solve:
      do_solve(s, cmd.target, r);
      finish_with_prompt(s, r);
      break;
    case Verb::whatif: {
      const std::optional<SolveResult> before = last_result(s);
      if (assign(s, cmd.assignments, r)) {
        const std::string recorded = r.explanation;
        do_solve(s, std::nullopt, r);
        r.explanation = recorded + " " + r.explanation;
        if (before && r.result && before->target == r.result->target && r.result->target != Target::effect) {
          r.explanation += fmt::format(" Previously: {} in total, power {:.4f}.", before->allocation.total(),
                                       before->achieved_power);
        }
      }
      finish_with_prompt(s, r);
      break;
    }
    case Verb::explain:
      do_explain(s, cmd.topic, r);
      finish_with_prompt(s, r);
      break;
    case Verb::export_transcript:
      r.transcript = transcript(s);
      r.explanation = fmt::format("Transcript of {} commands.", s.history.size());
      finish_with_prompt(s, r);
      break;
  }
  s.updated_ms = now_ms;
  s.history.push_back({cmd, r, now_ms});
  return {std::move(s), std::move(r)};
}

SessionState replay(const SessionState& state) {
  SessionState s = fresh(state.id, state.created_ms);
  for (const auto& h : state.history) s = apply(s, h.command, h.at_ms).state;
  return s;
}

std::string transcript(const SessionState& state) {
  std::string out = fmt::format("session {}\n", state.id);
  out += fmt::format("test: {}\n", state.chosen_test ? std::string(to_string(*state.chosen_test)) : "none");
  out += fmt::format("target: {}\n", to_string(state.target));
  out += fmt::format("known: {}\n", known_text(state.known));
  out += fmt::format("pending: {}\n", state.pending.empty() ? "none" : join(state.pending, ", "));
  for (std::size_t i = 0; i < state.history.size(); ++i) {
    const auto& h = state.history[i];
    if (h.command.verb == Verb::export_transcript) continue;
    out += fmt::format("\n[{}] {}\n", i + 1, to_text(h.command));
    out += fmt::format("    {}\n", h.reply.explanation);
    if (const auto& res = h.reply.result) {
      std::vector<std::string> arms;
      for (long a : res->allocation.arms) arms.push_back(std::to_string(a));
      out += fmt::format("    allocation: {} (total {})\n", join(arms, " "), res->allocation.total());
      out += fmt::format("    achieved_power: {:.6f}\n", res->achieved_power);
      if (res->events_required) out += fmt::format("    events_required: {}\n", *res->events_required);
      if (res->effect_solved) out += fmt::format("    {}: {:.6g}\n", res->effect_field, *res->effect_solved);
      out += fmt::format("    formula_id: {}\n", res->formula_id);
    }
  }
  return out;
}

}  // namespace powerlab::session
