#include "seqmco/json_io.hpp"

#include <fstream>

#include "seqmco/conjugate_model.hpp"
#include "seqmco/nonlinear_ssm.hpp"

namespace seqmco {

const nlohmann::json& require_field(const nlohmann::json& j,
                                    const std::string& key) {
  if (!j.is_object() || !j.contains(key)) {
    throw config_error("missing required field: " + key);
  }
  return j.at(key);
}

double require_number(const nlohmann::json& j, const std::string& key) {
  const nlohmann::json& v = require_field(j, key);
  if (!v.is_number()) throw config_error("field must be a number: " + key);
  return v.get<double>();
}

nlohmann::json model_to_json(const SequentialModel& model) {
  const std::string kind = model.name();
  if (kind == "lgssm" || kind == "nonlinear") {
    const LgssmParams& p =
        kind == "lgssm" ? dynamic_cast<const Lgssm&>(model).config()
                        : dynamic_cast<const NonlinearSsm&>(model).config();
    return {{"type", kind},   {"a", p.a},         {"c", p.c},
            {"var_z", p.var_z}, {"var_x", p.var_x}, {"var_0", p.var_0}};
  }
  if (kind == "conjugate") {
    const ConjugateParams& p =
        dynamic_cast<const ConjugateModel&>(model).config();
    return {{"type", kind},
            {"m0", p.m0},
            {"m1", p.m1},
            {"var_z", p.var_z},
            {"var_obs", p.var_obs}};
  }
  throw config_error("unknown model type: " + kind);
}

std::unique_ptr<SequentialModel> model_from_json(const nlohmann::json& j) {
  const std::string kind = require_field(j, "type").get<std::string>();
  try {
    if (kind == "lgssm" || kind == "nonlinear") {
      LgssmParams p;
      p.a = require_number(j, "a");
      p.c = require_number(j, "c");
      p.var_z = require_number(j, "var_z");
      p.var_x = require_number(j, "var_x");
      p.var_0 = require_number(j, "var_0");
      if (kind == "lgssm") return std::make_unique<Lgssm>(p);
      return std::make_unique<NonlinearSsm>(p);
    }
    if (kind == "conjugate") {
      ConjugateParams p;
      p.m0 = require_number(j, "m0");
      p.m1 = require_number(j, "m1");
      p.var_z = require_number(j, "var_z");
      p.var_obs = require_number(j, "var_obs");
      return std::make_unique<ConjugateModel>(p);
    }
  } catch (const std::domain_error& e) {
    throw config_error(std::string("model: ") + e.what());
  }
  throw config_error("unknown model type: " + kind);
}

nlohmann::json proposal_to_json(const Proposal& proposal) {
  nlohmann::json j{{"type", proposal.name()}};
  if (proposal.param_count() > 0) j["params"] = proposal.params();
  return j;
}

std::unique_ptr<Proposal> proposal_from_json(const nlohmann::json& j,
                                             const SequentialModel& model) {
  const std::string kind = require_field(j, "type").get<std::string>();
  if (kind == "bootstrap") return std::make_unique<BootstrapProposal>(model);
  if (kind == "learned") {
    auto q = std::make_unique<LearnedGaussianProposal>(model);
    if (j.contains("params")) {
      const auto params = j.at("params").get<std::vector<double>>();
      if (params.size() != q->param_count()) {
        throw config_error("proposal.params: wrong length");
      }
      q->set_params(params);
    }
    return q;
  }
  if (kind == "optimal_filter" || kind == "smoothing" || kind == "posterior") {
    if (const auto* lg = dynamic_cast<const Lgssm*>(&model)) {
      if (kind == "optimal_filter") {
        return std::make_unique<OptimalFilterProposal>(lg->config());
      }
      if (kind == "smoothing") {
        return std::make_unique<SmoothingProposalWrapper>(
            std::make_unique<OptimalFilterProposal>(lg->config()),
            lg->config());
      }
      return std::make_unique<LgssmPosteriorProposal>(lg->config());
    }
    if (const auto* cj = dynamic_cast<const ConjugateModel*>(&model)) {
      if (kind == "posterior") {
        return std::make_unique<ConjugatePosteriorProposal>(cj->config());
      }
      throw config_error("proposal type '" + kind +
                         "' requires an lgssm model");
    }
    throw config_error("proposal type '" + kind +
                       "' has no exact form for model '" + model.name() + "'");
  }
  throw config_error("unknown proposal type: " + kind);
}

nlohmann::json policy_to_json(const ResamplingPolicy& policy) {
  switch (policy.kind) {
    case ResamplingPolicy::Kind::never:
      return {{"kind", "never"}};
    case ResamplingPolicy::Kind::always:
      return {{"kind", "always"}};
    case ResamplingPolicy::Kind::ess_threshold:
      return {{"kind", "ess_threshold"}, {"tau", policy.tau}};
    case ResamplingPolicy::Kind::fixed_schedule:
      return {{"kind", "fixed_schedule"}, {"steps", policy.schedule}};
  }
  throw config_error("policy: bad kind");
}

ResamplingPolicy policy_from_json(const nlohmann::json& j) {
  const std::string kind = require_field(j, "kind").get<std::string>();
  if (kind == "never") return ResamplingPolicy::never();
  if (kind == "always") return ResamplingPolicy::always();
  if (kind == "ess_threshold") {
    const double tau = j.value("tau", 0.5);
    if (!(tau > 0.0) || tau > 1.0) {
      throw config_error("policy.tau: must be in (0, 1]");
    }
    return ResamplingPolicy::ess(tau);
  }
  if (kind == "fixed_schedule") {
    auto steps =
        require_field(j, "steps").get<std::vector<std::size_t>>();
    return ResamplingPolicy::fixed(std::move(steps));
  }
  throw config_error("unknown policy kind: " + kind);
}

namespace {
constexpr int kRecordFormat = 1;
}

nlohmann::json record_to_json(const FilterRecord& record) {
  nlohmann::json steps = nlohmann::json::array();
  for (const auto& s : record.steps) {
    steps.push_back({{"log_phat_step", s.log_phat_step},
                     {"log_phat_cum", s.log_phat_cum},
                     {"resampled", s.resampled},
                     {"noise", s.noise},
                     {"z", s.z},
                     {"log_alpha", s.log_alpha},
                     {"log_weight", s.log_weight},
                     {"ancestors", s.ancestors}});
  }
  return {{"format", kRecordFormat},
          {"n_particles", record.n_particles},
          {"T", record.T},
          {"policy", policy_to_json(record.policy)},
          {"level", record.level == RecordLevel::full ? "full" : "summary"},
          {"log_phat", record.log_phat},
          {"steps", steps}};
}

FilterRecord record_from_json(const nlohmann::json& j) {
  if (j.value("format", 0) != kRecordFormat) {
    throw config_error("record: unsupported format version");
  }
  FilterRecord r;
  r.n_particles = require_field(j, "n_particles").get<std::size_t>();
  r.T = require_field(j, "T").get<std::size_t>();
  r.policy = policy_from_json(require_field(j, "policy"));
  r.level = require_field(j, "level").get<std::string>() == "full"
                ? RecordLevel::full
                : RecordLevel::summary;
  r.log_phat = require_number(j, "log_phat");
  for (const auto& js : require_field(j, "steps")) {
    FilterStepRecord s;
    s.log_phat_step = require_number(js, "log_phat_step");
    s.log_phat_cum = require_number(js, "log_phat_cum");
    s.resampled = require_field(js, "resampled").get<bool>();
    s.noise = js.value("noise", std::vector<double>());
    s.z = js.value("z", std::vector<double>());
    s.log_alpha = js.value("log_alpha", std::vector<double>());
    s.log_weight = js.value("log_weight", std::vector<double>());
    s.ancestors = js.value("ancestors", std::vector<std::uint32_t>());
    r.steps.push_back(std::move(s));
  }
  return r;
}

std::vector<std::vector<double>> dataset_from_json(
    const nlohmann::json& j, const SequentialModel& model) {
  if (j.contains("generate")) {
    const nlohmann::json& g = j.at("generate");
    const auto T = static_cast<std::size_t>(require_number(g, "T"));
    const auto count = static_cast<std::size_t>(g.value("count", 1));
    const auto seed = static_cast<std::uint64_t>(g.value("seed", 0));
    if (T == 0 || count == 0) throw config_error("data.generate: T/count");
    return simulate_dataset(model, T, count, RngStream(seed, 0));
  }
  if (j.contains("values")) {
    auto data = j.at("values").get<std::vector<std::vector<double>>>();
    if (data.empty()) throw config_error("data.values: empty");
    for (const auto& seq : data) {
      if (seq.empty()) throw config_error("data.values: empty sequence");
    }
    return data;
  }
  if (j.contains("path")) {
    const std::string path = j.at("path").get<std::string>();
    std::ifstream f(path);
    if (!f) throw config_error("data.path: cannot open " + path);
    nlohmann::json doc;
    f >> doc;
    return doc.get<std::vector<std::vector<double>>>();
  }
  throw config_error("data: need one of generate/values/path");
}

ObjectiveConfig objective_config_from_json(const nlohmann::json& j,
                                           const SequentialModel& model) {
  ObjectiveConfig cfg;
  const std::string name = require_field(j, "objective").get<std::string>();
  try {
    cfg.spec.kind = objective_from_string(name);
  } catch (const std::invalid_argument& e) {
    throw config_error(e.what());
  }
  cfg.spec.n_particles =
      static_cast<std::size_t>(j.value("n_particles", 4));
  if (cfg.spec.n_particles == 0) throw config_error("n_particles: must be >= 1");
  if (j.contains("policy")) {
    cfg.spec.filter.policy = policy_from_json(j.at("policy"));
  }
  if (j.contains("resampler")) {
    const std::string m = j.at("resampler").get<std::string>();
    if (m == "alias") {
      cfg.spec.filter.method = ResampleMethod::alias;
    } else if (m == "multinomial") {
      cfg.spec.filter.method = ResampleMethod::multinomial;
    } else {
      throw config_error("resampler: unknown method " + m);
    }
  }
  if (cfg.spec.kind == ObjectiveKind::ais) {
    const auto temps = static_cast<std::size_t>(
        j.value("temperatures", cfg.spec.n_particles));
    cfg.spec.ais = AisSchedule::linear(
        temps, j.value("rw_std", 0.5),
        static_cast<std::size_t>(j.value("mh_sweeps", 1)));
  }
  if (cfg.spec.kind == ObjectiveKind::mis) {
    if (j.contains("components")) {
      for (const auto& c : j.at("components")) {
        cfg.spec.mis_components.emplace_back(proposal_from_json(c, model));
      }
    }
    if (j.contains("weights")) {
      cfg.spec.mis_weights = j.at("weights").get<std::vector<double>>();
    }
  }
  cfg.replicates = static_cast<std::size_t>(j.value("replicates", 100));
  if (cfg.replicates < 2) throw config_error("replicates: must be >= 2");
  return cfg;
}

}  // namespace seqmco
