#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <string>

#include "oewt/csv.hpp"
#include "oewt/errors.hpp"
#include "oewt/types.hpp"
#include "testdata.hpp"

using namespace oewt;

namespace {

const std::filesystem::path kData = TEST_DATA_DIR;

std::filesystem::path temp_file(const std::string& name) {
  return std::filesystem::temp_directory_path() / name;
}

}  // namespace

TEST_CASE("population validation") {
  Population pop;
  pop.X = Eigen::MatrixXd::Ones(3, 2);
  pop.X.col(1) << 1.0, 2.0, 3.0;
  pop.y = Eigen::VectorXd::LinSpaced(3, 0.0, 1.0);
  CHECK_NOTHROW(pop.validate());

  SUBCASE("first column must be the intercept") {
    pop.X(1, 0) = 0.5;
    CHECK_THROWS_AS(pop.validate(), ValidationError);
  }
  SUBCASE("outcome length must match") {
    pop.y.resize(2);
    CHECK_THROWS_AS(pop.validate(), DimensionError);
  }
  SUBCASE("true propensities must lie strictly inside (0,1)") {
    pop.pi_b_true = Eigen::VectorXd::Constant(3, 0.5);
    CHECK_NOTHROW(pop.validate());
    (*pop.pi_b_true)[0] = 1.0;
    CHECK_THROWS_AS(pop.validate(), ValidationError);
    (*pop.pi_b_true)[0] = 0.0;
    CHECK_THROWS_AS(pop.validate(), ValidationError);
  }
  SUBCASE("empty population rejected") {
    pop.X.resize(0, 2);
    pop.y.resize(0);
    CHECK_THROWS_AS(pop.validate(), ValidationError);
  }
}

TEST_CASE("reference and big sample validation") {
  auto s = testdata::make_pair(1);
  CHECK_NOTHROW(s.a.validate());
  CHECK_NOTHROW(s.b.validate());

  SUBCASE("weights below 1 rejected") {
    s.a.dA[3] = 0.5;
    CHECK_THROWS_AS(s.a.validate(), ValidationError);
  }
  SUBCASE("duplicate reference ids rejected") {
    s.a.ids[2] = s.a.ids[5];
    CHECK_THROWS_AS(s.a.validate(), ValidationError);
  }
  SUBCASE("overlap flag length must match") {
    s.a.delta->pop_back();
    CHECK_THROWS_AS(s.a.validate(), DimensionError);
  }
  SUBCASE("duplicate big ids rejected") {
    s.b.ids[1] = s.b.ids[0];
    CHECK_THROWS_AS(s.b.validate(), ValidationError);
  }
  SUBCASE("non-finite outcome rejected") {
    s.b.yB[0] = std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS_AS(s.b.validate(), ValidationError);
  }
  SUBCASE("reference design weight of exactly 1 is allowed") {
    s.a.dA[0] = 1.0;
    CHECK_NOTHROW(s.a.validate());
  }
}

TEST_CASE("mean estimate interval invariants") {
  MeanEstimate est;
  est.mu_hat = 1.0;
  est.n_b_hat = 10.0;
  CHECK_NOTHROW(est.validate());
  est.variance = 0.5;
  est.ci_lower = 0.2;
  est.ci_upper = 1.8;
  CHECK_NOTHROW(est.validate());
  est.ci_lower = 1.2;
  CHECK_THROWS_AS(est.validate(), ValidationError);
  est.ci_lower = 0.2;
  est.variance = -0.1;
  CHECK_THROWS_AS(est.validate(), ValidationError);
}

TEST_CASE("overlap tagging") {
  const std::vector<std::int64_t> a{1, 2, 3};

  CHECK(tag_overlap(a, std::vector<std::int64_t>{3, 4}) ==
        std::vector<std::uint8_t>{0, 0, 1});
  CHECK(tag_overlap(a, std::vector<std::int64_t>{7, 8}) ==
        std::vector<std::uint8_t>{0, 0, 0});
  CHECK(tag_overlap(a, std::vector<std::int64_t>{3, 2, 1, 9}) ==
        std::vector<std::uint8_t>{1, 1, 1});

  SUBCASE("order independent and idempotent") {
    const auto once = tag_overlap(a, std::vector<std::int64_t>{4, 3});
    const auto again = tag_overlap(a, std::vector<std::int64_t>{3, 4});
    CHECK(once == again);
  }
}

TEST_CASE("reference sample loading") {
  const auto a = load_reference_sample(kData / "ref_ok.csv");
  CHECK(a.n() == 3);
  CHECK(a.p() == 3);  // intercept + x1 + x2
  CHECK(a.XA.col(0).isOnes());
  CHECK(a.ids == std::vector<std::int64_t>{101, 102, 103});
  CHECK(a.dA.isApproxToConstant(2.0));
  REQUIRE(a.delta.has_value());
  CHECK(*a.delta == std::vector<std::uint8_t>{1, 0, 0});
  CHECK(a.XA(2, 2) == 2.5);

  CHECK_THROWS_AS(load_reference_sample(kData / "ref_no_weight.csv"), SchemaError);
  CHECK_THROWS_AS(load_reference_sample(kData / "ref_bad_weight.csv"), ValidationError);
  CHECK_THROWS_AS(load_reference_sample(kData / "ref_bad_cell.csv"), ValidationError);
  CHECK_THROWS_AS(load_reference_sample(kData / "ref_dup_id.csv"), ValidationError);
  CHECK_THROWS_AS(load_reference_sample(kData / "ref_bad_flag.csv"), ValidationError);
  CHECK_THROWS_AS(load_reference_sample(kData / "does_not_exist.csv"), ValidationError);
}

TEST_CASE("big sample loading") {
  const auto b = load_big_sample(kData / "big_ok.csv");
  CHECK(b.n() == 2);
  CHECK(b.p() == 3);
  CHECK(b.yB[0] == 1.0);
  CHECK(b.yB[1] == 2.0);
  CHECK_FALSE(b.d_ref.has_value());

  CHECK_THROWS_AS(load_big_sample(kData / "big_empty.csv"), ValidationError);
  CHECK_THROWS_AS(load_big_sample(kData / "big_ragged.csv"), ValidationError);

  SUBCASE("dimension pinning against the reference schema") {
    CHECK_THROWS_AS(load_big_sample(kData / "big_ok.csv", {}, 4), DimensionError);
    CHECK_NOTHROW(load_big_sample(kData / "big_ok.csv", {}, 3));
  }
}

TEST_CASE("csv round trips") {
  auto s = testdata::make_pair(7);

  SUBCASE("reference sample") {
    const auto path = temp_file("oewt_ref_roundtrip.csv");
    write_reference_csv(path, s.a);
    const auto back = load_reference_sample(path);
    CHECK(back.ids == s.a.ids);
    CHECK(*back.delta == *s.a.delta);
    CHECK(back.dA.isApprox(s.a.dA, 1e-12));
    CHECK(back.XA.isApprox(s.a.XA, 1e-12));
    std::filesystem::remove(path);
  }

  SUBCASE("big sample with reference weights") {
    s.b.d_ref = Eigen::VectorXd::Constant(s.b.n(), 3.25);
    const auto path = temp_file("oewt_big_roundtrip.csv");
    write_big_csv(path, s.b);
    const auto back = load_big_sample(path);
    CHECK(back.ids == s.b.ids);
    CHECK(back.yB.isApprox(s.b.yB, 1e-12));
    CHECK(back.XB.isApprox(s.b.XB, 1e-12));
    REQUIRE(back.d_ref.has_value());
    CHECK(back.d_ref->isApprox(*s.b.d_ref, 1e-12));
    std::filesystem::remove(path);
  }

  SUBCASE("weights file") {
    const auto path = temp_file("oewt_weights_roundtrip.csv");
    Eigen::VectorXd pi(3);
    pi << 0.25, 0.5, 0.125;
    write_weights_csv(path, {4, 5, 6}, pi);
    const auto back = load_weights_csv(path);
    CHECK(back.ids == std::vector<std::int64_t>{4, 5, 6});
    CHECK(back.pi_hat.isApprox(pi, 1e-15));
    std::filesystem::remove(path);
  }
}

TEST_CASE("double formatting survives a round trip") {
  for (double v : {1.0 / 3.0, 0.1, 123456.789, 1e-300, -2.5e17, 0.0}) {
    const std::string s = format_double(v);
    CHECK(std::stod(s) == v);
  }
}
