#include <doctest.h>

#include "dispersion/error.hpp"
#include "dispersion/evaluation.hpp"
#include "support.hpp"

using namespace dispersion;
using testing::error_kind;

TEST_CASE("confusion counts and derived metrics") {
  const std::vector<int> truth = {1, 1, 1, 1, 0, 0, 0, 0, 0, 0};
  const std::vector<int> pred = {1, 1, 1, 0, 0, 0, 0, 0, 1, 1};
  const auto cm = confusion(truth, pred);
  CHECK(cm.tp == 3);
  CHECK(cm.fn == 1);
  CHECK(cm.tn == 4);
  CHECK(cm.fp == 2);
  CHECK(*cm.accuracy() == doctest::Approx(0.7));
  CHECK(*cm.recall_dispersed() == doctest::Approx(0.75));
  CHECK(*cm.recall_non_dispersed() == doctest::Approx(4.0 / 6.0));
  CHECK(*cm.precision_dispersed() == doctest::Approx(0.6));
  CHECK(*cm.precision_non_dispersed() == doctest::Approx(0.8));
  CHECK(*cm.balanced_accuracy() == doctest::Approx(0.5 * (0.75 + 4.0 / 6.0)));
}

TEST_CASE("empty denominators are undefined, not zero") {
  const auto cm = confusion(std::vector<int>{0, 0, 0}, std::vector<int>{0, 0, 0});
  CHECK(*cm.accuracy() == 1.0);
  CHECK_FALSE(cm.recall_dispersed());
  CHECK_FALSE(cm.precision_dispersed());
  CHECK_FALSE(cm.balanced_accuracy());
  CHECK(*cm.recall_non_dispersed() == 1.0);
  const ConfusionMatrix empty;
  CHECK_FALSE(empty.accuracy());
  const auto j = to_json(cm);
  CHECK(j["recall_dispersed"].is_null());
  CHECK(j["accuracy"] == 1.0);
}

TEST_CASE("recognition rates are row percentages") {
  ConfusionMatrix cm;
  cm.tn = 2;
  cm.fp = 1;
  cm.fn = 0;
  cm.tp = 7;
  const auto r = recognition_rates(cm);
  CHECK(*r.rate[0][0] == 66.67);
  CHECK(*r.rate[0][1] == 33.33);
  CHECK(*r.rate[0][0] + *r.rate[0][1] == doctest::Approx(100.0));
  CHECK(*r.rate[1][0] == 0.0);
  CHECK(*r.rate[1][1] == 100.0);
  cm.fn = cm.tp = 0;
  CHECK_FALSE(recognition_rates(cm).rate[1][1]);
}

TEST_CASE("pooling adds counts") {
  ConfusionMatrix a{1, 2, 3, 4}, b{10, 20, 30, 40};
  a += b;
  CHECK(a == ConfusionMatrix{11, 22, 33, 44});
  CHECK(a.total() == 110);
}

TEST_CASE("malformed label vectors") {
  CHECK(error_kind([] { confusion(std::vector<int>{0, 1}, std::vector<int>{0}); }) == ErrorKind::LengthMismatch);
  CHECK(error_kind([] { confusion(std::vector<int>{0, 2}, std::vector<int>{0, 1}); }) == ErrorKind::NonBinaryLabel);
  CHECK(error_kind([] { confusion(std::vector<int>{0, 1}, std::vector<int>{-1, 1}); }) == ErrorKind::NonBinaryLabel);
}
