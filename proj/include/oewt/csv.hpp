#pragma once

#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "oewt/types.hpp"

namespace oewt {

/// Column-name map for dataset files. Covariate columns default to every
/// column not claimed by one of the named roles, taken in header order;
/// the intercept column is synthesized, never read.
struct CsvSchema {
  std::string id = "id";
  std::string weight = "design_weight";
  std::string overlap = "in_big";
  std::string outcome = "y";
  std::string ref_weight = "d_ref";  // optional on big-sample files
  std::vector<std::string> covariates;  // empty -> automatic
};

ReferenceSample load_reference_sample(const std::filesystem::path& path,
                                      const CsvSchema& schema = {},
                                      std::optional<Eigen::Index> expected_p = std::nullopt);

BigSample load_big_sample(const std::filesystem::path& path,
                          const CsvSchema& schema = {},
                          std::optional<Eigen::Index> expected_p = std::nullopt);

void write_reference_csv(const std::filesystem::path& path, const ReferenceSample& a,
                         const CsvSchema& schema = {});
void write_big_csv(const std::filesystem::path& path, const BigSample& b,
                   const CsvSchema& schema = {});

/// `id,x1,...,y[,pi_b_true]`; the propensity column appears when the
/// population carries true propensities.
void write_population_csv(const std::filesystem::path& path, const Population& pop);

/// `id,pi_hat,weight` with weight = 1/pi_hat.
void write_weights_csv(const std::filesystem::path& path,
                       const std::vector<std::int64_t>& ids,
                       const Eigen::VectorXd& pi_hat);

struct WeightsFile {
  std::vector<std::int64_t> ids;
  Eigen::VectorXd pi_hat;
};

/// Read a weights file back; propensities must be strictly positive.
WeightsFile load_weights_csv(const std::filesystem::path& path);

/// Shortest decimal form that parses back to the exact same double.
std::string format_double(double v);

}  // namespace oewt
