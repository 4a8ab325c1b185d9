#include "doctest.h"

#include <cmath>

#include "fadacs/eval.hpp"
#include "fadacs/prng.hpp"

using namespace fadacs;
using namespace fadacs::eval;

TEST_SUITE("eval") {

TEST_CASE("exact predictions score zero; uniform offsets score the offset") {
  std::vector<double> truth{0.1, 0.2, 0.3, 0.4, 0.5, 0.6};
  auto same = make_batch(2, 3, truth, truth, 5);
  CHECK(mae(same) == 0.0);
  CHECK(rmse(same) == 0.0);
  std::vector<double> shifted;
  for (double v : truth) shifted.push_back(v + 0.1);
  auto off = make_batch(2, 3, shifted, truth, 5);
  CHECK(mae(off) == doctest::Approx(0.1).epsilon(1e-12));
  CHECK(rmse(off) == doctest::Approx(0.1).epsilon(1e-12));
}

TEST_CASE("error pair {0, 0.2} gives mae 0.1 and rmse ~0.1414") {
  auto b = make_batch(1, 2, {0.5, 0.7}, {0.5, 0.5}, 15);
  CHECK(mae(b) == doctest::Approx(0.1).epsilon(1e-12));
  CHECK(rmse(b) == doctest::Approx(std::sqrt(0.02)).epsilon(1e-12));
  CHECK(rmse(b) >= mae(b));
}

TEST_CASE("metrics match brute-force double loops on random batches") {
  prng rng(55);
  for (int trial = 0; trial < 200; ++trial) {
    std::size_t T = 1 + rng.below(6);
    std::size_t L = 1 + rng.below(6);
    std::vector<double> p, y;
    for (std::size_t i = 0; i < T * L; ++i) {
      p.push_back(rng.uniform());
      y.push_back(rng.uniform());
    }
    auto b = make_batch(T, L, p, y, 5);
    double abs_acc = 0, sq_acc = 0;
    for (std::size_t t = 0; t < T; ++t)
      for (std::size_t l = 0; l < L; ++l) {
        double d = p[t * L + l] - y[t * L + l];
        abs_acc += std::abs(d);
        sq_acc += d * d;
      }
    double n = static_cast<double>(T * L);
    CHECK(std::abs(mae(b) - abs_acc / n) < 1e-15);
    CHECK(std::abs(rmse(b) - std::sqrt(sq_acc / n)) < 1e-15);
    CHECK(rmse(b) >= mae(b) - 1e-15);
  }
}

TEST_CASE("metrics are permutation invariant over cells") {
  prng rng(56);
  std::vector<double> p, y;
  for (int i = 0; i < 24; ++i) {
    p.push_back(rng.uniform());
    y.push_back(rng.uniform());
  }
  auto b1 = make_batch(4, 6, p, y, 5);
  // reshape the same cells to a different T x L split
  auto b2 = make_batch(6, 4, p, y, 5);
  CHECK(mae(b1) == doctest::Approx(mae(b2)).epsilon(1e-15));
  CHECK(rmse(b1) == doctest::Approx(rmse(b2)).epsilon(1e-15));
  // and under a cell shuffle
  std::vector<std::size_t> perm(24);
  for (std::size_t i = 0; i < 24; ++i) perm[i] = i;
  for (std::size_t i = 24; i > 1; --i) std::swap(perm[i - 1], perm[rng.below(i)]);
  std::vector<double> ps, ys;
  for (auto i : perm) {
    ps.push_back(p[i]);
    ys.push_back(y[i]);
  }
  auto b3 = make_batch(4, 6, ps, ys, 5);
  CHECK(mae(b3) == doctest::Approx(mae(b1)).epsilon(1e-15));
  CHECK(rmse(b3) == doctest::Approx(rmse(b1)).epsilon(1e-15));
}

TEST_CASE("empty and mismatched batches are errors") {
  CHECK_THROWS_WITH_AS(mae(evaluation_batch{}), doctest::Contains("EmptyBatch"), error);
  CHECK_THROWS_AS(make_batch(2, 2, {0.1}, {0.1}, 5), error);
}

TEST_CASE("per-lot breakdown isolates a bad lot") {
  auto b = make_batch(2, 2, {0.5, 0.9, 0.5, 0.9}, {0.5, 0.5, 0.5, 0.5}, 5);
  auto rows = per_lot_errors(b, {10, 11});
  REQUIRE(rows.size() == 2);
  CHECK(rows[0].lot_id == 10);
  CHECK(rows[0].mae == 0.0);
  CHECK(rows[1].mae == doctest::Approx(0.4).epsilon(1e-12));
  CHECK(rows[1].rmse == doctest::Approx(0.4).epsilon(1e-12));
}

TEST_CASE("report json round-trips identically") {
  report r;
  report_row a;
  a.model = "convlstm";
  a.by_horizon[5] = {0.0374, 0.0894};
  a.by_horizon[15] = {0.0677, 0.1402};
  a.by_horizon[30] = {0.1005, 0.1714};
  report_row b;
  b.model = "ha";
  b.by_horizon[5] = {0.06, 0.1219};
  report_row c;
  c.model = "broken";
  c.error = "UpstreamStageMissing";
  r.rows = {a, b, c};
  auto text = report_to_json(r);
  auto back = report_from_json(text);
  CHECK(report_to_json(back) == text);
  REQUIRE(back.rows.size() == 3);
  CHECK(back.rows[0].by_horizon.at(15).rmse == 0.1402);
  CHECK(back.rows[2].error == "UpstreamStageMissing");
}

TEST_CASE("row failures leave other rows intact through a merge") {
  report part1;
  part1.rows.push_back({"convlstm", {{5, {0.1, 0.2}}}, ""});
  part1.rows.push_back({"lstm", {}, "Divergence"});
  report part2;
  part2.rows.push_back({"convlstm", {{15, {0.3, 0.4}}}, ""});
  auto merged = merge_reports({part1, part2});
  REQUIRE(merged.rows.size() == 2);
  CHECK(merged.rows[0].by_horizon.size() == 2);
  CHECK(merged.rows[0].by_horizon.at(5).mae == 0.1);
  CHECK(merged.rows[0].by_horizon.at(15).rmse == 0.4);
  CHECK(merged.rows[1].error == "Divergence");
}

}  // TEST_SUITE
