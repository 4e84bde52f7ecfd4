#include "doctest.h"
#include "gradcheck.hpp"
#include "hgt/autodiff.hpp"

#include <random>

using namespace hgt;
using hgt::testing::gradcheck;
using hgt::testing::random_mat;

TEST_CASE("softmax of a zero row of width 4 is uniform") {
  Graph<double> g;
  auto x = leaf(g, Mat<double>(Mat<double>::Zero(1, 4)));
  auto y = softmax_rows(x);
  for (int j = 0; j < 4; ++j) CHECK(y.val()(0, j) == doctest::Approx(0.25));
}

TEST_CASE("softmax rows sum to one") {
  std::mt19937_64 rng(3);
  Graph<double> g;
  auto x = leaf(g, random_mat(5, 7, rng, 2.0));
  auto y = softmax_rows(x);
  for (int i = 0; i < 5; ++i)
    CHECK(y.val().row(i).sum() == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("mean pool over [1..8] with k=4 gives [2.5, 6.5]") {
  Graph<double> g;
  Mat<double> m(8, 1);
  for (int i = 0; i < 8; ++i) m(i, 0) = i + 1;
  auto y = mean_pool_rows(leaf(g, m), 4);
  REQUIRE(y.rows() == 2);
  CHECK(y.val()(0, 0) == doctest::Approx(2.5));
  CHECK(y.val()(1, 0) == doctest::Approx(6.5));
}

TEST_CASE("repeat_rows duplicates each row k times") {
  Graph<double> g;
  Mat<double> m(2, 2);
  m << 1, 2, 3, 4;
  auto y = repeat_rows(leaf(g, m), 3);
  REQUIRE(y.rows() == 6);
  CHECK(y.val().row(0) == y.val().row(2));
  CHECK(y.val().row(3) == y.val().row(5));
  CHECK(y.val()(3, 1) == 4.0);
}

TEST_CASE("pooling then repeating an already group-constant matrix is identity") {
  Graph<double> g;
  std::mt19937_64 rng(4);
  Mat<double> base = random_mat(3, 5, rng);
  Mat<double> grouped(12, 5);
  for (int i = 0; i < 12; ++i) grouped.row(i) = base.row(i / 4);
  auto y = repeat_rows(mean_pool_rows(leaf(g, grouped), 4), 4);
  CHECK((y.val() - grouped).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("d(sum(w*w))/dw = 2w") {
  Graph<double> g;
  Mat<double> m(1, 2);
  m << 1, 2;
  auto w = leaf(g, m, true);
  auto loss = sum(mul(w, w));
  backward(loss);
  CHECK(w.grad()(0, 0) == doctest::Approx(2.0));
  CHECK(w.grad()(0, 1) == doctest::Approx(4.0));
}

TEST_CASE("loss independent of a leaf leaves its gradient zero") {
  Graph<double> g;
  auto a = leaf(g, Mat<double>(Mat<double>::Ones(2, 2)), true);
  auto b = leaf(g, Mat<double>(Mat<double>::Ones(2, 2)), true);
  backward(sum(mul(a, a)));
  CHECK(b.grad().size() == 0);
}

TEST_CASE("matmul gradient matches finite differences") {
  std::mt19937_64 rng(7);
  auto err = gradcheck(
      {random_mat(5, 4, rng), random_mat(4, 3, rng)},
      [](Graph<double>&, std::vector<Var<double>>& l) {
        return sum(matmul(l[0], l[1]));
      });
  CHECK(err < 1e-6);
}

TEST_CASE("layernorm+gelu+matmul chain matches finite differences") {
  std::mt19937_64 rng(11);
  auto err = gradcheck(
      {random_mat(4, 6, rng), random_mat(1, 6, rng, 0.3),
       random_mat(1, 6, rng, 0.3), random_mat(6, 2, rng)},
      [](Graph<double>&, std::vector<Var<double>>& l) {
        auto g1 = add(l[1], l[1]);  // keep gain away from zero-ish symmetry
        return sum(matmul(gelu(layernorm(l[0], g1, l[2])), l[3]));
      },
      1e-6);
  CHECK(err < 1e-4);
}

TEST_CASE("causal attention masks out future rows exactly") {
  std::mt19937_64 rng(13);
  Mat<double> q = random_mat(6, 4, rng), k = random_mat(6, 4, rng),
              v = random_mat(6, 4, rng);
  Graph<double> g;
  auto out = causal_attention(leaf(g, q), leaf(g, k), leaf(g, v), 2);
  // Perturbing rows > i must leave output row i unchanged.
  for (int i = 0; i < 5; ++i) {
    Mat<double> k2 = k, v2 = v;
    for (int j = i + 1; j < 6; ++j) {
      k2.row(j).setConstant(50.0);
      v2.row(j).setConstant(-50.0);
    }
    Graph<double> g2;
    auto out2 = causal_attention(leaf(g2, q), leaf(g2, k2), leaf(g2, v2), 2);
    CHECK((out.val().row(i) - out2.val().row(i)).cwiseAbs().maxCoeff() == 0.0);
  }
}

TEST_CASE("causal attention over a single row returns its value row") {
  std::mt19937_64 rng(17);
  Mat<double> q = random_mat(1, 4, rng), k = random_mat(1, 4, rng),
              v = random_mat(1, 4, rng);
  Graph<double> g;
  auto out = causal_attention(leaf(g, q), leaf(g, k), leaf(g, v), 2);
  CHECK((out.val() - v).cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("shift_rows_down prepends fill rows and drops the tail") {
  Graph<double> g;
  Mat<double> m(4, 2);
  m << 1, 1, 2, 2, 3, 3, 4, 4;
  Mat<double> f(1, 2);
  f << 9, 9;
  auto y = shift_rows_down(leaf(g, m), 2, leaf(g, f));
  CHECK(y.val()(0, 0) == 9.0);
  CHECK(y.val()(1, 0) == 9.0);
  CHECK(y.val()(2, 0) == 1.0);
  CHECK(y.val()(3, 0) == 2.0);
}

TEST_CASE("finite-difference sweep over every op, 20+ random instances") {
  std::mt19937_64 rng(101);
  using Builder =
      std::function<Var<double>(Graph<double>&, std::vector<Var<double>>&)>;
  struct Case {
    std::vector<Mat<double>> inputs;
    Builder build;
  };
  std::vector<Case> cases;
  auto R = [&](long r, long c, double s = 1.0) {
    return random_mat(r, c, rng, s);
  };

  cases.push_back({{R(3, 4), R(3, 4)},
                   [](Graph<double>&, std::vector<Var<double>>& l) {
                     return sum(add(l[0], l[1]));
                   }});
  cases.push_back({{R(3, 4), R(3, 4)},
                   [](Graph<double>&, std::vector<Var<double>>& l) {
                     return sum(mul(sub(l[0], l[1]), l[0]));
                   }});
  cases.push_back({{R(4, 3)},
                   [](Graph<double>&, std::vector<Var<double>>& l) {
                     return sum(scale(l[0], 2.5));
                   }});
  cases.push_back({{R(4, 3), R(1, 3)},
                   [](Graph<double>&, std::vector<Var<double>>& l) {
                     return sum(add_rowvec(l[0], l[1]));
                   }});
  cases.push_back({{R(4, 3), R(1, 3)},
                   [](Graph<double>&, std::vector<Var<double>>& l) {
                     return sum(mul_rowvec(l[0], l[1]));
                   }});
  cases.push_back({{R(3, 5), R(5, 2)},
                   [](Graph<double>&, std::vector<Var<double>>& l) {
                     return sum(matmul(l[0], l[1]));
                   }});
  cases.push_back({{R(3, 5), R(4, 5)},
                   [](Graph<double>&, std::vector<Var<double>>& l) {
                     return sum(matmul_nt(l[0], l[1]));
                   }});
  cases.push_back({{R(4, 4)},
                   [](Graph<double>&, std::vector<Var<double>>& l) {
                     return sum(gelu(l[0]));
                   }});
  cases.push_back({{R(3, 5)},
                   [](Graph<double>&, std::vector<Var<double>>& l) {
                     return sum(mul(softmax_rows(l[0]), l[0]));
                   }});
  cases.push_back({{R(3, 5)},
                   [](Graph<double>&, std::vector<Var<double>>& l) {
                     return sum(mul(log_softmax_rows(l[0]), l[0]));
                   }});
  cases.push_back({{R(4, 6), R(1, 6, 0.3), R(1, 6, 0.3)},
                   [](Graph<double>&, std::vector<Var<double>>& l) {
                     return sum(layernorm(l[0], l[1], l[2]));
                   }});
  cases.push_back({{R(5, 3)},
                   [](Graph<double>&, std::vector<Var<double>>& l) {
                     std::vector<int> ids{0, 2, 4, 2};
                     return sum(mul(embedding(l[0], ids), embedding(l[0], ids)));
                   }});
  cases.push_back({{R(8, 3)},
                   [](Graph<double>&, std::vector<Var<double>>& l) {
                     return sum(mul(mean_pool_rows(l[0], 4), mean_pool_rows(l[0], 4)));
                   }});
  cases.push_back({{R(3, 4)},
                   [](Graph<double>&, std::vector<Var<double>>& l) {
                     return sum(mul(repeat_rows(l[0], 2), repeat_rows(l[0], 2)));
                   }});
  cases.push_back({{R(3, 4), R(2, 4)},
                   [](Graph<double>&, std::vector<Var<double>>& l) {
                     auto c = concat_rows(l[0], l[1]);
                     return sum(mul(c, c));
                   }});
  cases.push_back({{R(6, 4)},
                   [](Graph<double>&, std::vector<Var<double>>& l) {
                     auto s = slice_rows(l[0], 1, 3);
                     return sum(mul(s, s));
                   }});
  cases.push_back({{R(4, 6)},
                   [](Graph<double>&, std::vector<Var<double>>& l) {
                     auto s = slice_cols(l[0], 2, 3);
                     return sum(mul(s, s));
                   }});
  cases.push_back({{R(5, 3), R(1, 3)},
                   [](Graph<double>&, std::vector<Var<double>>& l) {
                     auto s = shift_rows_down(l[0], 2, l[1]);
                     return sum(mul(s, l[0]));
                   }});
  cases.push_back({{R(4, 3)},
                   [](Graph<double>&, std::vector<Var<double>>& l) {
                     return mean_all(mul(l[0], l[0]));
                   }});
  cases.push_back({{R(4, 5)},
                   [](Graph<double>&, std::vector<Var<double>>& l) {
                     std::vector<int> t{1, 3, 0, 4};
                     std::vector<char> m{1, 0, 1, 1};
                     return masked_nll(log_softmax_rows(l[0]), t, m);
                   }});
  cases.push_back({{R(6, 4), R(6, 4), R(6, 4)},
                   [](Graph<double>&, std::vector<Var<double>>& l) {
                     auto o = causal_attention(l[0], l[1], l[2], 2);
                     return sum(mul(o, o));
                   }});
  cases.push_back({{R(3, 4), R(7, 4), R(7, 4)},
                   [](Graph<double>&, std::vector<Var<double>>& l) {
                     auto o = cross_attention(l[0], l[1], l[2], 2);
                     return sum(mul(o, o));
                   }});

  REQUIRE(cases.size() >= 20);
  for (std::size_t i = 0; i < cases.size(); ++i) {
    CAPTURE(i);
    CHECK(gradcheck(cases[i].inputs, cases[i].build, 1e-6) < 1e-4);
  }
}

TEST_CASE("shape mismatch raises an error naming the operation") {
  Graph<double> g;
  auto a = leaf(g, Mat<double>(Mat<double>::Zero(2, 3)));
  auto b = leaf(g, Mat<double>(Mat<double>::Zero(3, 2)));
  CHECK_THROWS_AS(add(a, b), ShapeError);
  CHECK_THROWS_AS(matmul(a, a), ShapeError);
}
