#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "seqmco/rng.hpp"

namespace seqmco {

// 1 / sum_i w_i^2 of normalized weights; range [1, N]. Unnormalized input is
// a usage error.
double effective_sample_size(std::span<const double> probs);

// n i.i.d. categorical draws by inverse-CDF walk. Zero-mass entries are
// never selected.
void resample_multinomial(std::span<const double> probs,
                          std::span<std::uint32_t> ancestors, RngStream& rng);

// Walker alias table: O(N) setup, O(1) per draw, same distribution as the
// multinomial path.
class AliasTable {
 public:
  explicit AliasTable(std::span<const double> probs);

  std::uint32_t sample(RngStream& rng) const;
  std::size_t size() const { return cut_.size(); }

 private:
  std::vector<double> cut_;
  std::vector<std::uint32_t> alias_;
};

void resample_alias(std::span<const double> probs,
                    std::span<std::uint32_t> ancestors, RngStream& rng);

}  // namespace seqmco
