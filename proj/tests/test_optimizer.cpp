#include "doctest.h"
#include "hgt/optimizer.hpp"

using namespace hgt;

namespace {

std::pair<std::vector<Mat<double>*>, std::vector<Mat<double>>> single(
    Mat<double>& p, double gval) {
  return {{&p}, {Mat<double>::Constant(p.rows(), p.cols(), gval)}};
}

}  // namespace

TEST_CASE("first AdamW step with unit gradient moves p=1 to about 0.9") {
  AdamWConfig cfg;
  cfg.lr = 0.1;
  AdamW<double> opt(cfg);
  Mat<double> p = Mat<double>::Constant(1, 1, 1.0);
  auto [params, grads] = single(p, 1.0);
  opt.step(params, grads);
  // bias correction makes m_hat/(sqrt(v_hat)+eps) ~ 1 on the first step
  CHECK(p(0, 0) == doctest::Approx(0.9).epsilon(1e-6));
}

TEST_CASE("zero gradient with zero weight decay leaves parameters unchanged") {
  AdamW<double> opt;
  Mat<double> p = Mat<double>::Constant(2, 2, 3.0);
  auto [params, grads] = single(p, 0.0);
  opt.step(params, grads);
  CHECK((p.array() == 3.0).all());
}

TEST_CASE("weight decay alone shrinks parameters by (1 - lr*wd)") {
  AdamWConfig cfg;
  cfg.lr = 0.1;
  cfg.weight_decay = 0.5;
  AdamW<double> opt(cfg);
  Mat<double> p = Mat<double>::Constant(1, 1, 2.0);
  auto [params, grads] = single(p, 0.0);
  opt.step(params, grads);
  CHECK(p(0, 0) == doctest::Approx(2.0 * (1.0 - 0.1 * 0.5)));
}

TEST_CASE("non-finite gradients are rejected") {
  AdamW<double> opt;
  Mat<double> p = Mat<double>::Constant(1, 1, 1.0);
  std::vector<Mat<double>*> params{&p};
  std::vector<Mat<double>> grads{
      Mat<double>::Constant(1, 1, std::numeric_limits<double>::quiet_NaN())};
  CHECK_THROWS_AS(opt.step(params, grads), NonFiniteError);
}

TEST_CASE("AdamW converges on a quadratic bowl") {
  AdamWConfig cfg;
  cfg.lr = 0.05;
  AdamW<double> opt(cfg);
  Mat<double> p = Mat<double>::Constant(1, 3, 4.0);
  std::vector<Mat<double>*> params{&p};
  for (int i = 0; i < 500; ++i) {
    std::vector<Mat<double>> grads{2.0 * p};
    opt.step(params, grads);
  }
  CHECK(p.cwiseAbs().maxCoeff() < 1e-2);
}

TEST_CASE("lr schedule: warmup peak, cosine midpoint, zero at the end") {
  const double peak = 3e-4;
  CHECK(lr_schedule(0, 100, 1000, peak) == 0.0);
  CHECK(lr_schedule(50, 100, 1000, peak) == doctest::Approx(peak / 2));
  CHECK(lr_schedule(100, 100, 1000, peak) == doctest::Approx(peak));
  CHECK(lr_schedule(550, 100, 1000, peak) == doctest::Approx(peak / 2));
  CHECK(lr_schedule(1000, 100, 1000, peak) == doctest::Approx(0.0));
  CHECK_THROWS_AS(lr_schedule(0, 1000, 1000, peak), InvalidScheduleError);
  CHECK_THROWS_AS(lr_schedule(-1, 10, 100, peak), InvalidScheduleError);
}

TEST_CASE("gradient clipping rescales to the max norm and reports the raw norm") {
  std::vector<Mat<double>> grads{Mat<double>::Constant(1, 1, 3.0),
                                 Mat<double>::Constant(1, 1, 4.0)};
  const double norm = clip_global_norm(grads, 1.0);
  CHECK(norm == doctest::Approx(5.0));
  CHECK(grads[0](0, 0) == doctest::Approx(0.6));
  CHECK(grads[1](0, 0) == doctest::Approx(0.8));

  std::vector<Mat<double>> small{Mat<double>::Constant(1, 1, 0.3)};
  clip_global_norm(small, 1.0);
  CHECK(small[0](0, 0) == doctest::Approx(0.3));
}
