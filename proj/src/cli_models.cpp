#include <cmath>
#include <limits>

#include "json.hpp"
#include "morphorisk/cli.hpp"
#include "morphorisk/error.hpp"

namespace morphorisk::cli {

using nlohmann::json;
using namespace pipeline;

namespace {

// JSON has no NaN; null stands in for it.
json number(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }
double number(const json& j) { return j.is_null() ? std::numeric_limits<double>::quiet_NaN() : j.get<double>(); }

json vec(const Eigen::VectorXd& v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(number(v(i)));
  return a;
}
Eigen::VectorXd vec(const json& a) {
  Eigen::VectorXd v(static_cast<Eigen::Index>(a.size()));
  for (std::size_t i = 0; i < a.size(); ++i) v(static_cast<Eigen::Index>(i)) = number(a[i]);
  return v;
}

std::string_view kind_name(TermKind k) {
  switch (k) {
    case TermKind::kScore: return "score";
    case TermKind::kConfounder: return "confounder";
    case TermKind::kNsqip: return "nsqip";
  }
  return "?";
}
TermKind parse_kind(const std::string& s) {
  if (s == "score") return TermKind::kScore;
  if (s == "confounder") return TermKind::kConfounder;
  if (s == "nsqip") return TermKind::kNsqip;
  throw Error(ErrorCode::kSchemaMismatch, "models: unknown term kind '" + s + "'");
}

Variant parse_variant(const std::string& s) {
  for (auto v : variants_for(kOneYearMortality))
    if (variant_name(v) == s) return v;
  throw Error(ErrorCode::kSchemaMismatch, "models: unknown variant '" + s + "'");
}

json term_json(const Term& t) {
  json j = {{"name", t.name}, {"kind", kind_name(t.kind)}};
  if (t.kind == TermKind::kScore) j["key"] = bodycomp::column_name(t.key);
  return j;
}
Term term_from(const json& j) {
  Term t{j.at("name").get<std::string>(), parse_kind(j.at("kind").get<std::string>()), {}};
  if (t.kind == TermKind::kScore) {
    const auto key = bodycomp::parse_column_name(j.at("key").get<std::string>());
    if (!key) throw Error(ErrorCode::kSchemaMismatch, "models: bad score key for term " + t.name);
    t.key = *key;
  }
  return t;
}

json model_json(const FittedModel& m) {
  json j;
  json spec = {{"outcome", m.spec.outcome},
               {"family", family_name(m.spec.family)},
               {"variant", variant_name(m.spec.variant)},
               {"horizon", m.spec.horizon}};
  spec["candidates"] = json::array();
  for (const auto& t : m.spec.candidates) spec["candidates"].push_back(term_json(t));
  j["spec"] = spec;
  j["buildable"] = m.buildable;
  j["status"] = m.status;
  j["n"] = m.n;
  j["events"] = m.events;
  j["excluded"] = m.excluded;
  j["low_events_per_variable"] = m.low_events_per_variable;
  j["terms"] = json::array();
  for (const auto& t : m.terms) j["terms"].push_back(term_json(t));
  j["encodings"] = json::array();
  for (const auto& e : m.encodings) {
    j["encodings"].push_back({{"term", e.term}, {"reference", e.reference}, {"levels", e.levels}});
  }
  j["trace"] = json::array();
  for (const auto& s : m.trace) {
    j["trace"].push_back({{"term", s.term}, {"p", number(s.p)}, {"test", s.test}, {"remaining", s.remaining}});
  }
  j["term_p"] = json::array();
  for (double p : m.term_p) j["term_p"].push_back(number(p));
  j["estimates"] = json::array();
  for (const auto& e : m.estimates) {
    j["estimates"].push_back({{"column", e.column},
                              {"beta", number(e.beta)},
                              {"se", number(e.se)},
                              {"ratio", number(e.ratio)},
                              {"lower", number(e.lower)},
                              {"upper", number(e.upper)},
                              {"p", number(e.p)}});
  }
  if (m.logistic) {
    const auto& f = *m.logistic;
    j["fit"] = {{"columns", f.columns}, {"intercept", number(f.intercept)}, {"intercept_se", number(f.intercept_se)},
                {"beta", vec(f.beta)},   {"se", vec(f.se)},                 {"z", vec(f.z)},
                {"p", vec(f.p)},         {"log_likelihood", number(f.log_likelihood)}};
  }
  if (m.cox) {
    const auto& f = *m.cox;
    json bt = json::array(), bh = json::array();
    for (double t : f.baseline_times) bt.push_back(number(t));
    for (double h : f.baseline_cumhaz) bh.push_back(number(h));
    j["fit"] = {{"columns", f.columns},
                {"beta", vec(f.beta)},
                {"se", vec(f.se)},
                {"z", vec(f.z)},
                {"p", vec(f.p)},
                {"log_partial_likelihood", number(f.log_partial_likelihood)},
                {"null_log_partial_likelihood", number(f.null_log_partial_likelihood)},
                {"baseline_times", bt},
                {"baseline_cumhaz", bh}};
  }
  return j;
}

FittedModel model_from(const json& j) {
  FittedModel m;
  const auto& spec = j.at("spec");
  m.spec.outcome = spec.at("outcome").get<std::string>();
  m.spec.family = spec.at("family").get<std::string>() == "cox" ? Family::kCox : Family::kLogistic;
  m.spec.variant = parse_variant(spec.at("variant").get<std::string>());
  m.spec.horizon = spec.at("horizon").get<double>();
  for (const auto& t : spec.at("candidates")) m.spec.candidates.push_back(term_from(t));
  m.buildable = j.at("buildable").get<bool>();
  m.status = j.at("status").get<std::string>();
  m.n = j.at("n").get<std::size_t>();
  m.events = j.at("events").get<std::size_t>();
  m.excluded = j.at("excluded").get<std::size_t>();
  m.low_events_per_variable = j.at("low_events_per_variable").get<bool>();
  for (const auto& t : j.at("terms")) m.terms.push_back(term_from(t));
  for (const auto& e : j.at("encodings")) {
    m.encodings.push_back({e.at("term").get<std::string>(), e.at("reference").get<std::string>(),
                           e.at("levels").get<std::vector<std::string>>()});
  }
  for (const auto& s : j.at("trace")) {
    m.trace.push_back({s.at("term").get<std::string>(), number(s.at("p")), s.at("test").get<std::string>(),
                       s.at("remaining").get<std::size_t>()});
  }
  for (const auto& p : j.at("term_p")) m.term_p.push_back(number(p));
  for (const auto& e : j.at("estimates")) {
    m.estimates.push_back({e.at("column").get<std::string>(), number(e.at("beta")), number(e.at("se")),
                           number(e.at("ratio")), number(e.at("lower")), number(e.at("upper")), number(e.at("p"))});
  }
  if (j.contains("fit")) {
    const auto& f = j.at("fit");
    if (m.spec.family == Family::kLogistic) {
      stats::LogisticFit fit;
      fit.columns = f.at("columns").get<std::vector<std::string>>();
      fit.intercept = number(f.at("intercept"));
      fit.intercept_se = number(f.at("intercept_se"));
      fit.beta = vec(f.at("beta"));
      fit.se = vec(f.at("se"));
      fit.z = vec(f.at("z"));
      fit.p = vec(f.at("p"));
      fit.log_likelihood = number(f.at("log_likelihood"));
      fit.status = stats::FitStatus::kConverged;
      m.logistic = std::move(fit);
    } else {
      stats::CoxFit fit;
      fit.columns = f.at("columns").get<std::vector<std::string>>();
      fit.beta = vec(f.at("beta"));
      fit.se = vec(f.at("se"));
      fit.z = vec(f.at("z"));
      fit.p = vec(f.at("p"));
      fit.log_partial_likelihood = number(f.at("log_partial_likelihood"));
      fit.null_log_partial_likelihood = number(f.at("null_log_partial_likelihood"));
      for (const auto& t : f.at("baseline_times")) fit.baseline_times.push_back(number(t));
      for (const auto& h : f.at("baseline_cumhaz")) fit.baseline_cumhaz.push_back(number(h));
      fit.status = stats::FitStatus::kConverged;
      m.cox = std::move(fit);
    }
  }
  return m;
}

}  // namespace

std::string format_models(const ModelStore& models) {
  json root = json::object();
  for (const auto& [outcome, suite] : models) {
    json s = json::array();
    for (const auto& [variant, model] : suite) s.push_back(model_json(model));
    root[outcome] = s;
  }
  return root.dump(1) + "\n";
}

ModelStore parse_models(std::string_view text) {
  ModelStore out;
  try {
    const json root = json::parse(text);
    for (const auto& [outcome, suite] : root.items()) {
      for (const auto& m : suite) {
        auto model = model_from(m);
        out[outcome].emplace(model.spec.variant, std::move(model));
      }
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kSchemaMismatch, std::string("models: ") + e.what());
  }
  return out;
}

}  // namespace morphorisk::cli
