#include "simdex/common.hpp"

#include <string>

namespace simdex {

void validate_dataset(const Dataset& data, Eigen::Index min_rows) {
  if (data.x.rows() != data.y.size()) {
    throw std::domain_error("dataset: x has " + std::to_string(data.x.rows()) +
                            " rows but y has " + std::to_string(data.y.size()));
  }
  if (data.n() < min_rows) {
    throw std::domain_error("dataset: need at least " +
                            std::to_string(min_rows) + " rows, got " +
                            std::to_string(data.n()));
  }
  if (data.d() < 1) throw std::domain_error("dataset: no covariates");
  if (!data.x.allFinite() || !data.y.allFinite()) {
    throw std::domain_error("dataset: non-finite entries");
  }
}

}  // namespace simdex
