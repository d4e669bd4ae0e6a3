#include "seqmco/resample.hpp"

#include <cmath>
#include <stdexcept>

namespace seqmco {
namespace {

void check_normalized(std::span<const double> probs) {
  if (probs.empty()) {
    throw std::invalid_argument("weights: empty");
  }
  double sum = 0.0;
  for (double p : probs) {
    if (!(p >= 0.0)) throw std::invalid_argument("weights: negative or NaN");
    sum += p;
  }
  if (std::abs(sum - 1.0) > 1e-8) {
    throw std::invalid_argument("weights: not normalized");
  }
}

}  // namespace

double effective_sample_size(std::span<const double> probs) {
  check_normalized(probs);
  double sum_sq = 0.0;
  for (double p : probs) sum_sq += p * p;
  return 1.0 / sum_sq;
}

void resample_multinomial(std::span<const double> probs,
                          std::span<std::uint32_t> ancestors, RngStream& rng) {
  check_normalized(probs);
  const std::size_t n = probs.size();
  for (auto& a : ancestors) {
    const double u = rng.uniform();
    double cdf = 0.0;
    std::uint32_t pick = static_cast<std::uint32_t>(n - 1);
    for (std::size_t i = 0; i < n; ++i) {
      cdf += probs[i];
      if (u < cdf) {
        pick = static_cast<std::uint32_t>(i);
        break;
      }
    }
    a = pick;
  }
}

AliasTable::AliasTable(std::span<const double> probs) {
  check_normalized(probs);
  const std::size_t n = probs.size();
  cut_.resize(n);
  alias_.resize(n);
  std::vector<std::uint32_t> small, large;
  small.reserve(n);
  large.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    cut_[i] = probs[i] * static_cast<double>(n);
    alias_[i] = static_cast<std::uint32_t>(i);
    (cut_[i] < 1.0 ? small : large).push_back(static_cast<std::uint32_t>(i));
  }
  while (!small.empty() && !large.empty()) {
    const std::uint32_t s = small.back();
    const std::uint32_t l = large.back();
    small.pop_back();
    large.pop_back();
    alias_[s] = l;
    cut_[l] -= 1.0 - cut_[s];
    (cut_[l] < 1.0 ? small : large).push_back(l);
  }
  // Leftovers from rounding sit at probability one.
  for (std::uint32_t i : small) cut_[i] = 1.0;
  for (std::uint32_t i : large) cut_[i] = 1.0;
}

std::uint32_t AliasTable::sample(RngStream& rng) const {
  const std::uint32_t k =
      static_cast<std::uint32_t>(rng.uniform_index(cut_.size()));
  return rng.uniform() < cut_[k] ? k : alias_[k];
}

void resample_alias(std::span<const double> probs,
                    std::span<std::uint32_t> ancestors, RngStream& rng) {
  const AliasTable table(probs);
  for (auto& a : ancestors) a = table.sample(rng);
}

}  // namespace seqmco
