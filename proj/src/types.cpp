#include "oewt/types.hpp"

#include <cmath>
#include <unordered_set>

namespace oewt {

std::string method_name(Method m) {
  switch (m) {
    case Method::OE: return "oe";
    case Method::CLW: return "clw";
    case Method::KW: return "kw";
    case Method::VD: return "vd";
    case Method::WVL: return "wvl";
  }
  return "?";
}

Method parse_method(const std::string& name) {
  if (name == "oe" || name == "OE") return Method::OE;
  if (name == "clw" || name == "CLW") return Method::CLW;
  if (name == "kw" || name == "KW") return Method::KW;
  if (name == "vd" || name == "VD") return Method::VD;
  if (name == "wvl" || name == "WVL") return Method::WVL;
  throw ConfigError("unknown method '" + name + "' (expected oe|clw|kw|vd|wvl)");
}

namespace {

void require_unique(const std::vector<std::int64_t>& ids, const char* what) {
  std::unordered_set<std::int64_t> seen;
  seen.reserve(ids.size());
  for (auto id : ids) {
    if (!seen.insert(id).second) {
      throw ValidationError(std::string(what) + ": duplicate id " + std::to_string(id));
    }
  }
}

void require_finite(const Eigen::MatrixXd& m, const char* what) {
  if (!m.allFinite()) {
    throw ValidationError(std::string(what) + ": non-finite value");
  }
}

}  // namespace

void Population::validate() const {
  if (n() < 1) throw ValidationError("population: N >= 1 required");
  if (p() < 1) throw ValidationError("population: p >= 1 required");
  if (y.size() != n()) throw DimensionError("population: y length != N");
  require_finite(X, "population X");
  require_finite(y, "population y");
  if ((X.col(0).array() != 1.0).any()) {
    throw ValidationError("population: first design column must be identically 1");
  }
  if (pi_b_true) {
    if (pi_b_true->size() != n()) throw DimensionError("population: pi_b_true length != N");
    if ((pi_b_true->array() <= 0.0).any() || (pi_b_true->array() >= 1.0).any()) {
      throw ValidationError("population: pi_b_true must lie strictly in (0,1)");
    }
  }
}

void ReferenceSample::validate() const {
  const auto n_a = n();
  if (n_a < 1) throw ValidationError("reference sample: n_A >= 1 required");
  if (static_cast<Eigen::Index>(ids.size()) != n_a || dA.size() != n_a) {
    throw DimensionError("reference sample: field lengths differ");
  }
  require_unique(ids, "reference sample");
  require_finite(XA, "reference sample X");
  if (!dA.allFinite()) throw ValidationError("reference sample: non-finite weight");
  if ((dA.array() < 1.0).any()) {
    throw ValidationError("reference sample: design weights must be >= 1");
  }
  if (delta && static_cast<Eigen::Index>(delta->size()) != n_a) {
    throw DimensionError("reference sample: delta length != n_A");
  }
}

void BigSample::validate() const {
  const auto n_b = n();
  if (n_b < 1) throw ValidationError("big sample: N_B >= 1 required");
  if (static_cast<Eigen::Index>(ids.size()) != n_b || yB.size() != n_b) {
    throw DimensionError("big sample: field lengths differ");
  }
  require_unique(ids, "big sample");
  require_finite(XB, "big sample X");
  if (!yB.allFinite()) throw ValidationError("big sample: non-finite outcome");
  if (d_ref) {
    if (d_ref->size() != n_b) throw DimensionError("big sample: d_ref length != N_B");
    if (!d_ref->allFinite() || (d_ref->array() < 1.0).any()) {
      throw ValidationError("big sample: d_ref weights must be finite and >= 1");
    }
  }
}

void MeanEstimate::validate() const {
  if (!std::isfinite(mu_hat)) throw ValidationError("estimate: non-finite mu_hat");
  if (variance && (!std::isfinite(*variance) || *variance < 0.0)) {
    throw ValidationError("estimate: variance must be finite and >= 0");
  }
  if (ci_lower && ci_upper && !(*ci_lower <= mu_hat && mu_hat <= *ci_upper)) {
    throw ValidationError("estimate: interval does not bracket mu_hat");
  }
}

std::vector<std::uint8_t> tag_overlap(std::span<const std::int64_t> a_ids,
                                      std::span<const std::int64_t> b_ids) {
  std::unordered_set<std::int64_t> in_b(b_ids.begin(), b_ids.end());
  std::vector<std::uint8_t> flags(a_ids.size());
  for (std::size_t i = 0; i < a_ids.size(); ++i) {
    flags[i] = in_b.count(a_ids[i]) ? 1 : 0;
  }
  return flags;
}

void tag_overlap(ReferenceSample& a, const BigSample& b) {
  a.delta = tag_overlap(a.ids, b.ids);
}

}  // namespace oewt
