#include "seqmco/model.hpp"

namespace seqmco {

double log_alpha(const SequentialModel& model, const Proposal& proposal,
                 std::size_t t, std::span<const double> x,
                 std::span<const double> z) {
  if (t < 1 || t > x.size() || z.size() != t) {
    throw std::invalid_argument("log_alpha: malformed step/history lengths");
  }
  return model.log_joint_step(t, x, z) -
         proposal.log_density(t, x, z.subspan(0, t - 1), z[t - 1]);
}

std::vector<std::vector<double>> simulate_dataset(const SequentialModel& model,
                                                  std::size_t T,
                                                  std::size_t count,
                                                  RngStream rng) {
  std::vector<std::vector<double>> data(count);
  for (std::size_t s = 0; s < count; ++s) {
    RngStream seq_rng = rng.substream(s);
    std::vector<double> x, z;
    x.reserve(T);
    z.reserve(T);
    for (std::size_t t = 1; t <= T; ++t) {
      auto [z_t, x_t] = model.simulate_step(t, x, z, seq_rng);
      z.push_back(z_t);
      x.push_back(x_t);
    }
    data[s] = std::move(x);
  }
  return data;
}

}  // namespace seqmco
