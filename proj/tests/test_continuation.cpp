#include <doctest.h>

#include <cmath>
#include <iostream>

#include "tippingrd/continuation.hpp"
#include "tippingrd/lin.hpp"

using namespace tipping;
namespace co = tipping::continuation;
namespace li = tipping::lin;

namespace {

constexpr double kPi = 3.14159265358979323846;

// Circle problem: g(x, mu) = x^2 + mu^2 - 1. Folds at mu = +-1.
class CircleProblem : public co::Problem {
 public:
  int dim() const override { return 1; }
  Eigen::VectorXd eval(const Eigen::VectorXd& x, double mu) override {
    Eigen::VectorXd g(1);
    g[0] = x[0] * x[0] + mu * mu - 1.0;
    return g;
  }
  void jacobian(const Eigen::VectorXd& x, double mu, Eigen::MatrixXd* gx,
                Eigen::VectorXd* gmu) override {
    gx->resize(1, 1);
    (*gx)(0, 0) = 2.0 * x[0];
    gmu->resize(1);
    (*gmu)[0] = 2.0 * mu;
  }
  std::map<std::string, double> monitors(const Eigen::VectorXd& x, double mu) override {
    return {{"x", x[0]}, {"signed", x[0] - 0.5}};
  }
};

}  // namespace

TEST_SUITE("continuation") {

TEST_CASE("pseudo-arclength rounds a fold and localizes it") {
  CircleProblem prob;
  co::EngineOptions opts;
  opts.step.h0 = 0.05;
  opts.step.h_max = 0.1;
  opts.stop.point_budget = 200;
  opts.watches.push_back({"signed", co::EventKind::User});

  Eigen::VectorXd x0(1);
  x0 << 1.0;
  const co::Branch branch = co::continue_branch(prob, x0, 0.0, +1, opts, "mu");

  REQUIRE(branch.points.size() > 10);
  // Traverses the fold at mu = 1 and continues down the other side.
  double mu_max = -10.0, x_min = 10.0;
  for (const auto& p : branch.points) {
    mu_max = std::max(mu_max, p.mu);
    x_min = std::min(x_min, p.x[0]);
  }
  CHECK(mu_max > 0.999);
  CHECK(x_min < -0.2);

  const auto folds = co::detect_fold(branch);
  REQUIRE(folds.size() >= 1);
  CHECK(std::abs(folds[0].mu - 1.0) <= 1e-8);

  // Monitor event: x crosses 0.5 at |mu| = sqrt(3)/2.
  bool found_user = false;
  for (const auto& ev : branch.events) {
    if (ev.kind == co::EventKind::User) {
      found_user = true;
      CHECK(std::abs(std::abs(ev.mu) - std::sqrt(3.0) / 2.0) <= 1e-7);
    }
  }
  CHECK(found_user);
}

TEST_CASE("stop conditions and errors") {
  CircleProblem prob;
  co::EngineOptions opts;
  opts.step.h0 = 0.05;
  opts.stop.max_points = 40;  // hard limit, no stop condition can trigger
  Eigen::VectorXd x0(1);
  x0 << 1.0;
  CHECK_THROWS_AS(co::continue_branch(prob, x0, 0.0, +1, opts, "mu"), NumericalError);

  co::EngineOptions loop_opts;
  loop_opts.step.h0 = 0.05;
  loop_opts.stop.stop_on_closed_loop = true;
  loop_opts.stop.loop_tol = 0.05;
  loop_opts.stop.max_points = 2000;
  const co::Branch branch = co::continue_branch(prob, x0, 0.0, +1, loop_opts, "mu");
  CHECK(branch.points.back().tags.back() == "closed_loop");
}

TEST_CASE("branch export formats") {
  CircleProblem prob;
  co::EngineOptions opts;
  opts.step.h0 = 0.05;
  opts.stop.point_budget = 30;
  Eigen::VectorXd x0(1);
  x0 << 1.0;
  const co::Branch branch = co::continue_branch(prob, x0, 0.0, +1, opts, "mu");
  const std::string csv = branch.to_csv();
  CHECK(csv.find("mu,") == 0);
  CHECK(csv.find("signed") != std::string::npos);
  const std::string events = branch.events_to_json();
  CHECK(events.front() == '[');
}

TEST_CASE("trivial heteroclinic continues flat in L with no events") {
  ModelSpec spec = ModelSpec::allee();
  spec.c = 0.0;
  spec.D = 0.8;
  spec.L = 5.0;
  li::HeteroclinicProblem prob(spec, "L");
  co::EngineOptions opts;
  opts.step = prob.default_step_control();
  opts.step.h0 = 0.05;
  opts.stop.mu_min = 0.4;
  opts.stop.mu_max = 10.0;
  opts.stop.max_points = 3000;
  opts.watches.push_back({"U_sigma", co::EventKind::Transcritical});

  Eigen::VectorXd x0(2);
  x0 << kPi / 2, kPi / 2;
  const co::Branch branch = co::continue_branch(prob, x0, 5.0, -1, opts, "L");

  REQUIRE(branch.points.size() > 5);
  CHECK(branch.points.back().mu < 0.45);
  for (const auto& p : branch.points) {
    CHECK(std::abs(p.monitors.at("max_U")) <= 1e-8);
    CHECK(std::abs(p.x[0] - kPi / 2) <= 1e-9);
  }
  CHECK(co::detect_fold(branch).empty());
  CHECK(co::detect_transcritical(branch).empty());
}

}  // TEST_SUITE
