#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "expected.hpp"
#include "oracles.hpp"
#include "veb/inference.hpp"

using namespace veb;

namespace {

MeanFieldSolution toy_solution() {
  MeanFieldSolution sol;
  sol.u = Vec(4);
  sol.u << 0.2, -0.1, 0.4, 0.3;
  sol.tau2 = Vec(4);
  sol.tau2 << 0.10, 0.20, 0.05, 0.25;
  sol.s = Vec::Zero(4);
  return sol;
}

}  // namespace

TEST_CASE("projection constructors produce the two canonical vectors") {
  ProjectionSpec avg = make_q(QLabel::Avg, 4);
  CHECK(avg.label == QLabel::Avg);
  CHECK(avg.gamma == 1.0);
  for (int i = 0; i < 4; ++i)
    CHECK(avg.q(i) == doctest::Approx(0.5).epsilon(1e-15));

  ProjectionSpec con = make_q(QLabel::Contrast, 4);
  CHECK(con.label == QLabel::Contrast);
  CHECK(con.gamma == 0.0);
  CHECK(con.q(0) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(con.q(1) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(con.q(2) == doctest::Approx(-0.5).epsilon(1e-15));
  CHECK(con.q(3) == doctest::Approx(-0.5).epsilon(1e-15));

  CHECK(avg.q.dot(con.q) == doctest::Approx(0.0).epsilon(1e-15));
  CHECK(avg.q.norm() == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(con.q.norm() == doctest::Approx(1.0).epsilon(1e-14));

  CHECK_THROWS_AS(make_q(QLabel::Contrast, 5), config_error);
  CHECK_THROWS_AS(make_q(QLabel::Avg, 0), config_error);
  CHECK_THROWS_AS(make_q(QLabel::Custom, 4), config_error);

  CHECK(q_label_name(QLabel::Avg) == "avg");
  CHECK(q_label_name(QLabel::Contrast) == "con");
  CHECK(q_label_name(QLabel::Custom) == "custom");
}

TEST_CASE("custom projections enforce norm and gamma ranges") {
  Vec q = Vec::Zero(4);
  q(0) = 0.6;
  q(1) = 0.8;
  ProjectionSpec spec = make_custom_q(q, 0.5);
  CHECK(spec.label == QLabel::Custom);
  CHECK(spec.gamma == 0.5);

  // Default gamma is the finite-p sum scaled by 1/sqrt(p).
  ProjectionSpec def = make_custom_q(q);
  CHECK(def.gamma == doctest::Approx(1.4 / 2.0).epsilon(1e-14));

  CHECK_THROWS_AS(make_custom_q(Vec::Ones(4)), contract_error);
  CHECK_THROWS_AS(make_custom_q(q, 1.5), config_error);
  CHECK_NOTHROW(make_custom_q(q, -1.0));
}

TEST_CASE("normal quantiles match reference values") {
  CHECK(normal_upper_quantile(0.95) ==
        doctest::Approx(expected::kZ95).epsilon(1e-10));
  CHECK(normal_upper_quantile(0.975) ==
        doctest::Approx(expected::kZ975).epsilon(1e-10));
  CHECK(normal_upper_quantile(0.5) == doctest::Approx(0.0).scale(1.0));
}

TEST_CASE("plug-in interval implements its formula exactly") {
  MeanFieldSolution sol = toy_solution();
  ProjectionSpec avg = make_q(QLabel::Avg, 4);
  CredibleInterval ci = ci_eb(sol, avg, 0.1);
  CHECK(ci.kind == CiKind::EB);
  CHECK(ci.alpha == 0.1);
  double center = 0.5 * (0.2 - 0.1 + 0.4 + 0.3);
  double sd = std::sqrt(0.25 * (0.10 + 0.20 + 0.05 + 0.25));
  CHECK(ci.center == doctest::Approx(center).epsilon(1e-14));
  CHECK(ci.half_width ==
        doctest::Approx(expected::kZ95 * sd).epsilon(1e-12));
  CHECK(ci.width() == doctest::Approx(2.0 * ci.half_width).epsilon(1e-15));
  CHECK(ci.lo() == doctest::Approx(center - ci.half_width).epsilon(1e-14));
  CHECK(ci.hi() == doctest::Approx(center + ci.half_width).epsilon(1e-14));
  CHECK(ci.contains(center));
  CHECK(ci.contains(ci.lo()));  // closed endpoints
  CHECK_FALSE(ci.contains(ci.hi() + 1e-9));

  // Degenerate plug-in variance collapses to a point interval.
  MeanFieldSolution flat = sol;
  flat.tau2.setZero();
  CredibleInterval pt = ci_eb(flat, avg, 0.1);
  CHECK(pt.half_width == 0.0);
  CHECK(pt.contains(pt.center));

  CHECK_THROWS_AS(ci_eb(sol, avg, 0.0), config_error);
  CHECK_THROWS_AS(ci_eb(sol, avg, 1.0), config_error);

  CredibleInterval oc = ci_oracle(sol, avg, 0.1);
  CHECK(oc.kind == CiKind::Oracle);
  CHECK(oc.center == ci.center);
  CHECK(oc.half_width == ci.half_width);
  CHECK(ci_kind_name(CiKind::Oracle) == "Oracle");
  CHECK(ci_kind_name(CiKind::EB) == "EB");
  CHECK(ci_kind_name(CiKind::AdjustedEB) == "AdjustedEB");
}

TEST_CASE("adjusted interval adds the hyperparameter-uncertainty term") {
  MeanFieldSolution sol = toy_solution();
  ProjectionSpec avg = make_q(QLabel::Avg, 4);

  AsymptoticBundle asy;
  asy.V = Mat(2, 2);
  asy.V << 0.5, 0.1, 0.1, 0.4;
  asy.J = Vec(2);
  asy.J << 0.3, -0.2;
  asy.kappa = Vec::Zero(2);
  asy.I = Mat::Identity(2, 2);

  CredibleInterval adj = ci_adjusted(sol, avg, 0.1, asy);
  CHECK(adj.kind == CiKind::AdjustedEB);
  CHECK(adj.center == doctest::Approx(avg.q.dot(sol.u)).epsilon(1e-14));
  double extra = asy.J.dot(asy.V.inverse() * asy.J);  // gamma = 1
  double v = 0.25 * (0.10 + 0.20 + 0.05 + 0.25) + extra;
  CHECK(adj.half_width ==
        doctest::Approx(expected::kZ95 * std::sqrt(v)).epsilon(1e-10));

  // Zero gamma reduces to the plug-in interval exactly.
  ProjectionSpec con = make_q(QLabel::Contrast, 4);
  CredibleInterval a0 = ci_adjusted(sol, con, 0.1, asy);
  CredibleInterval e0 = ci_eb(sol, con, 0.1);
  CHECK(a0.center == e0.center);
  CHECK(a0.half_width == e0.half_width);

  // Widening is monotone: the adjusted interval is never narrower.
  oracle::TestRng pts(17);
  for (int trial = 0; trial < 50; ++trial) {
    Vec q(4);
    for (int i = 0; i < 4; ++i) q(i) = pts.normal();
    q /= q.norm();
    ProjectionSpec spec = make_custom_q(q, pts.uniform(-1.0, 1.0));
    CredibleInterval a = ci_adjusted(sol, spec, 0.1, asy);
    CredibleInterval e = ci_eb(sol, spec, 0.1);
    CHECK(a.half_width >= e.half_width);
    if (spec.gamma != 0.0)
      CHECK(a.half_width > e.half_width);
  }

  AsymptoticBundle bad = asy;
  bad.V = Mat::Zero(2, 2);
  CHECK_THROWS_AS(ci_adjusted(sol, avg, 0.1, bad), numerical_error);
  CHECK_NOTHROW(ci_adjusted(sol, con, 0.1, bad));  // gamma 0 skips the solve
}

TEST_CASE("coverage is the fraction of draws inside the interval") {
  CredibleInterval wide;
  wide.center = 0.0;
  wide.half_width = 1e12;
  CredibleInterval point;
  point.center = 100.0;
  point.half_width = 0.0;

  Vec draws(5);
  draws << -3.0, -1.0, 0.0, 1.0, 3.0;
  CHECK(coverage_eval(wide, draws) == 1.0);
  CHECK(coverage_eval(point, draws) == 0.0);

  CredibleInterval half;
  half.center = 2.0;
  half.half_width = 2.5;  // covers [-0.5, 4.5]: three of five draws
  CHECK(coverage_eval(half, draws) == doctest::Approx(0.6).epsilon(1e-15));

  CHECK_THROWS_AS(coverage_eval(wide, Vec()), contract_error);
}
