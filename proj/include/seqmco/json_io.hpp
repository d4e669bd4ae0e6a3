#pragma once

#include <memory>

#include <json.hpp>

#include "seqmco/objectives.hpp"
#include "seqmco/particle_filter.hpp"
#include "seqmco/proposals.hpp"

namespace seqmco {

// Raised on malformed configs; message names the offending field.
struct config_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Model configs use explicit parameter names:
//   {"type":"lgssm","a":0.9,"c":1.0,"var_z":1.0,"var_x":1.0,"var_0":1.0}
//   {"type":"nonlinear", ... same fields ...}
//   {"type":"conjugate","m0":0.0,"m1":0.5,"var_z":1.0,"var_obs":1.0}
nlohmann::json model_to_json(const SequentialModel& model);
std::unique_ptr<SequentialModel> model_from_json(const nlohmann::json& j);

// Proposal configs; families derived from a model snapshot name it only by
// role:
//   {"type":"bootstrap"} {"type":"optimal_filter"} {"type":"smoothing"}
//   {"type":"posterior"} {"type":"learned","params":[r0,r1,r2,c0,c1,c2]}
nlohmann::json proposal_to_json(const Proposal& proposal);
std::unique_ptr<Proposal> proposal_from_json(const nlohmann::json& j,
                                             const SequentialModel& model);

// {"kind":"never"|"always"} | {"kind":"ess_threshold","tau":0.5}
// | {"kind":"fixed_schedule","steps":[2,4]}
nlohmann::json policy_to_json(const ResamplingPolicy& policy);
ResamplingPolicy policy_from_json(const nlohmann::json& j);

// Versioned record document for golden tests and conditional-SMC replay.
nlohmann::json record_to_json(const FilterRecord& record);
FilterRecord record_from_json(const nlohmann::json& j);

// Dataset block: {"generate":{"T":10,"count":4,"seed":7}} draws from the
// model; {"values":[[...],[...]]} inlines sequences; {"path":"file.json"}
// loads a JSON array of arrays.
std::vector<std::vector<double>> dataset_from_json(
    const nlohmann::json& j, const SequentialModel& model);

// Objective fragment inside estimate configs:
//   {"objective":"fivo","n_particles":16,"policy":{...},"replicates":1000}
// AIS adds "temperatures","rw_std","mh_sweeps"; MIS adds "components"
// (proposal configs) and "weights".
struct ObjectiveConfig {
  EstimatorSpec spec;
  std::size_t replicates = 100;
};
ObjectiveConfig objective_config_from_json(const nlohmann::json& j,
                                           const SequentialModel& model);

// Checked field access helpers (throw config_error naming the field).
const nlohmann::json& require_field(const nlohmann::json& j,
                                    const std::string& key);
double require_number(const nlohmann::json& j, const std::string& key);

}  // namespace seqmco
