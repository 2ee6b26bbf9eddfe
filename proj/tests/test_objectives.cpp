#include <catch2/catch_amalgamated.hpp>

#include "helpers.hpp"
#include "ptec/data.hpp"
#include "ptec/masked_model.hpp"
#include "ptec/masking.hpp"
#include "ptec/optim.hpp"
#include "ptec/quadratic.hpp"

using namespace ptec;
using namespace ptec::testing;

TEST_CASE("quadratic loss and gradient closed forms") {
  Eigen::MatrixXd I = Eigen::MatrixXd::Identity(2, 2);
  QuadraticSource q(I, Eigen::VectorXd::Zero(2), 0);
  auto [loss, grad] = quadratic_loss_grad(q, ParamVector({3.0, 4.0}));
  CHECK(loss == Catch::Approx(12.5).epsilon(1e-14));
  CHECK(grad[0] == Catch::Approx(3.0));
  CHECK(grad[1] == Catch::Approx(4.0));

  auto [l0, g0] = quadratic_loss_grad(q, ParamVector({0.0, 0.0}));
  CHECK(l0 == 0.0);
  CHECK(g0[0] == 0.0);

  Eigen::MatrixXd A(2, 2);
  A << 2.0, 0.0, 0.0, 8.0;
  Eigen::VectorXd c(2);
  c << 1.0, -1.0;
  QuadraticSource qd(A, c, 0);
  auto [l, g] = quadratic_loss_grad(qd, ParamVector({2.0, 0.0}));
  CHECK(l == Catch::Approx(5.0).epsilon(1e-14));
  CHECK(g[0] == Catch::Approx(2.0));
  CHECK(g[1] == Catch::Approx(8.0));

  CHECK_THROWS_AS(quadratic_loss_grad(qd, ParamVector(3)), ContractViolation);
}

TEST_CASE("quadratic source construction validates A") {
  Eigen::MatrixXd asym(2, 2);
  asym << 1.0, 0.5, 0.0, 1.0;
  CHECK_THROWS_AS(QuadraticSource(asym, Eigen::VectorXd::Zero(2), 0),
                  ContractViolation);
  Eigen::MatrixXd negdef = -Eigen::MatrixXd::Identity(2, 2);
  CHECK_THROWS_AS(QuadraticSource(negdef, Eigen::VectorXd::Zero(2), 0),
                  ContractViolation);
}

TEST_CASE("quadratic trajectory closed form") {
  auto q1 = scalar_quadratic(1.0, 0.0, 0);
  ParamVector theta({2.0});
  CHECK(quadratic_trajectory(*q1, theta, 0.5, 0).values == theta.values);

  Eigen::MatrixXd I = Eigen::MatrixXd::Identity(2, 2);
  QuadraticSource qi(I, Eigen::VectorXd::Zero(2), 0);
  ParamVector t2({2.0, 0.0});
  ParamVector one = quadratic_trajectory(qi, t2, 0.5, 1);
  CHECK(one[0] == Catch::Approx(1.0));
  CHECK(one[1] == 0.0);

  auto q2 = scalar_quadratic(2.0, 0.0, 0);
  ParamVector r = quadratic_trajectory(*q2, ParamVector({1.0}), 0.25, 3);
  CHECK(r[0] == Catch::Approx(0.125).epsilon(1e-14));
}

TEST_CASE("trajectory equals iterated gradient-descent steps") {
  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 20; ++trial) {
    const int dim = 1 + static_cast<int>(rng() % 4);
    Eigen::MatrixXd A = random_spd(dim, rng);
    QuadraticSource q(A, Eigen::VectorXd::Random(dim), 0);
    std::normal_distribution<double> dist(0.0, 1.0);
    ParamVector theta(static_cast<std::size_t>(dim));
    for (double& x : theta.values) x = dist(rng);
    const double lmax = A.eigenvalues().real().maxCoeff();
    const double alpha = 0.5 / lmax;
    const int K = 1 + static_cast<int>(rng() % 5);
    ParamVector closed = quadratic_trajectory(q, theta, alpha, K);
    ParamVector iter = theta;
    for (int k = 0; k < K; ++k)
      iter = sgd_step(iter, q.grad(iter, empty_batch()), alpha);
    for (int i = 0; i < dim; ++i)
      CHECK(std::abs(closed[static_cast<std::size_t>(i)] -
                     iter[static_cast<std::size_t>(i)]) <=
            1e-12 * std::max(1.0, std::abs(iter[static_cast<std::size_t>(i)])));
  }
}

TEST_CASE("hypergradient closed forms on the scalar fixture") {
  auto q = scalar_quadratic(2.0, 0.0, 0);
  ParamVector theta({1.0});

  // alpha=0: both routes collapse to A(theta - c)
  GradVector ex0 = exact_hypergradient_quadratic(*q, theta, 0.0, 3);
  GradVector fo0 = first_order_hypergradient_quadratic(*q, theta, 0.0, 3);
  CHECK(ex0[0] == Catch::Approx(2.0));
  CHECK(fo0[0] == Catch::Approx(2.0));

  GradVector ex = exact_hypergradient_quadratic(*q, theta, 0.25, 1);
  GradVector fo = first_order_hypergradient_quadratic(*q, theta, 0.25, 1);
  CHECK(ex[0] == Catch::Approx(0.5).epsilon(1e-14));
  CHECK(fo[0] == Catch::Approx(1.0).epsilon(1e-14));
}

TEST_CASE("exact hypergradient matches finite differences of the unrolled map") {
  // fd oracle over theta -> g(phi_K(theta))
  std::mt19937_64 rng(23);
  Eigen::MatrixXd A = random_spd(3, rng);
  Eigen::VectorXd c = Eigen::VectorXd::Random(3);
  QuadraticSource q(A, c, 0);
  std::normal_distribution<double> dist(0.0, 1.0);
  ParamVector theta(3);
  for (double& x : theta.values) x = dist(rng);
  const double alpha = 0.3 / A.eigenvalues().real().maxCoeff();
  const int K = 2;

  GradVector analytic = exact_hypergradient_quadratic(q, theta, alpha, K);
  const double h = 1e-6;
  for (std::size_t j = 0; j < 3; ++j) {
    ParamVector tp = theta, tm = theta;
    tp[j] += h;
    tm[j] -= h;
    const double lp = q.loss(quadratic_trajectory(q, tp, alpha, K), empty_batch());
    const double lm = q.loss(quadratic_trajectory(q, tm, alpha, K), empty_batch());
    const double fd = (lp - lm) / (2 * h);
    CHECK(std::abs(analytic[j] - fd) <= 1e-7 * std::max(1.0, std::abs(fd)));
  }
}

TEST_CASE("exact equals (I - alpha A)^K times first-order") {
  std::mt19937_64 rng(31);
  std::normal_distribution<double> dist(0.0, 1.0);
  for (int trial = 0; trial < 50; ++trial) {
    const int dim = 1 + static_cast<int>(rng() % 3);
    Eigen::MatrixXd A = random_spd(dim, rng);
    QuadraticSource q(A, Eigen::VectorXd::Random(dim), 0);
    ParamVector theta(static_cast<std::size_t>(dim));
    for (double& x : theta.values) x = dist(rng);
    const double lmax = A.eigenvalues().real().maxCoeff();
    std::uniform_real_distribution<double> ua(1e-3 / lmax, 0.99 / lmax);
    const double alpha = ua(rng);
    const int K = 1 + static_cast<int>(rng() % 3);

    GradVector fo = first_order_hypergradient_quadratic(q, theta, alpha, K);
    Eigen::VectorXd v = Eigen::Map<Eigen::VectorXd>(fo.values.data(), dim);
    for (int k = 0; k < K; ++k) v -= alpha * (A * v);
    GradVector ex = exact_hypergradient_quadratic(q, theta, alpha, K);
    for (int i = 0; i < dim; ++i)
      CHECK(std::abs(ex[static_cast<std::size_t>(i)] - v(i)) <=
            1e-10 * std::max(1.0, std::abs(v(i))));
  }
}

TEST_CASE("approximation gap obeys the spectral bound and vanishes with alpha") {
  // exact = (I - alpha A)^K * first_order, so the relative gap is bounded by
  // ||(I - alpha A)^K - I|| <= 1 - (1 - alpha lmax)^K for SPD A with
  // alpha lmax < 1. (The raw gap need not be monotone in alpha: the
  // first-order gradient's direction moves too.)
  std::mt19937_64 rng(41);
  Eigen::MatrixXd A = random_spd(3, rng);
  QuadraticSource q(A, Eigen::VectorXd::Random(3), 0);
  ParamVector theta({0.7, -0.4, 1.3});
  const double lmax = A.eigenvalues().real().maxCoeff();
  const int K = 2;
  double last = 0.0;
  for (double frac : {0.8, 0.4, 0.2, 0.1, 0.05, 0.01}) {
    const double alpha = frac / lmax;
    GradVector ex = exact_hypergradient_quadratic(q, theta, alpha, K);
    GradVector fo = first_order_hypergradient_quadratic(q, theta, alpha, K);
    GradVector diff = ex;
    for (std::size_t j = 0; j < diff.dim(); ++j) diff[j] -= fo[j];
    const double rel = norm2(diff) / norm2(fo);
    const double bound = 1.0 - std::pow(1.0 - frac, K);
    CHECK(rel <= bound + 1e-12);
    last = rel;
  }
  CHECK(last <= 0.05);  // gap vanishes as alpha -> 0
}

TEST_CASE("masking edge probabilities") {
  Sample s(50, 2);
  for (double& x : s.data) x = 1.0;

  std::mt19937_64 rng(1);
  MaskSpec none{0.0, 20, 0.0, 0.1};
  auto [unchanged, empty_idx] = apply_masking(s, none, rng);
  CHECK(unchanged == s);
  CHECK(empty_idx.empty());

  MaskSpec all{1.0, 20, 0.0, 0.1};
  auto [_, full_idx] = apply_masking(s, all, rng);
  CHECK(full_idx.size() == 50);
}

TEST_CASE("masked fraction matches the span-coverage closed form") {
  // interior-frame coverage is 1 - (1-p)^span = 0.3324 for p=0.02, span=20
  MaskSpec spec{0.02, 20, 0.0, 0.1};
  Sample s(1000, 1);
  std::mt19937_64 rng(77);
  double total = 0.0;
  const int draws = 100000;
  for (int d = 0; d < draws; ++d) {
    auto [_, idx] = apply_masking(s, spec, rng);
    total += static_cast<double>(idx.size()) / 1000.0;
  }
  CHECK(total / draws == Catch::Approx(0.332).margin(0.01));
}

TEST_CASE("quantizer picks the exact row and breaks ties low") {
  // feature_dim 2, code_dim 2, identity projection
  std::vector<double> proj{1, 0, 0, 1};
  std::vector<double> codebook{5, 5, 1, 2, -1, 2};
  RandomQuantizer quant(2, 2, proj, codebook);
  Sample s(2, 2);
  s.at(0, 0) = 1;
  s.at(0, 1) = 2;       // exactly row 1
  s.at(1, 0) = 0;
  s.at(1, 1) = 2;       // equidistant between rows 1 and 2
  auto labels = quantize_targets(quant, s);
  CHECK(labels[0] == 1);
  CHECK(labels[1] == 1);  // lower index wins
}

TEST_CASE("quantizer matches a brute-force scan on random frames") {
  const int F = 8, CD = 4, ROWS = 256;
  std::mt19937_64 rng(123);
  std::normal_distribution<double> dist(0.0, 1.0);
  std::vector<double> proj(F * CD), codebook(ROWS * CD);
  for (double& x : proj) x = dist(rng);
  for (double& x : codebook) x = dist(rng);
  RandomQuantizer quant(F, CD, proj, codebook);

  Batch b = gaussian_batch(0, 1, 64, F, 55);
  const Sample& s = b.samples[0];
  auto labels = quantize_targets(quant, s);
  for (int t = 0; t < s.frames; ++t) {
    // independent projection + exhaustive scan over the known matrices
    std::vector<double> p(CD, 0.0);
    for (int k = 0; k < CD; ++k)
      for (int d = 0; d < F; ++d)
        p[static_cast<std::size_t>(k)] +=
            s.at(t, d) * proj[static_cast<std::size_t>(d) * CD + k];
    int best_row = 0;
    double best = std::numeric_limits<double>::infinity();
    for (int r = 0; r < ROWS; ++r) {
      double d2 = 0.0;
      for (int k = 0; k < CD; ++k) {
        const double diff = p[static_cast<std::size_t>(k)] -
                            codebook[static_cast<std::size_t>(r) * CD + k];
        d2 += diff * diff;
      }
      if (d2 < best) {
        best = d2;
        best_row = r;
      }
    }
    CHECK(labels[static_cast<std::size_t>(t)] == best_row);
  }
}

TEST_CASE("quantize_targets is frame-permutation equivariant") {
  RandomQuantizer quant(4, 3, 32, 9);
  Batch b = gaussian_batch(0, 1, 20, 4, 13);
  Sample s = b.samples[0];
  auto labels = quantize_targets(quant, s);
  Sample rev(s.frames, s.feature_dim);
  for (int t = 0; t < s.frames; ++t)
    for (int d = 0; d < s.feature_dim; ++d)
      rev.at(t, d) = s.at(s.frames - 1 - t, d);
  auto rlabels = quantize_targets(quant, rev);
  for (int t = 0; t < s.frames; ++t)
    CHECK(labels[static_cast<std::size_t>(t)] ==
          rlabels[static_cast<std::size_t>(s.frames - 1 - t)]);
}

TEST_CASE("zero parameters give the uniform cross-entropy") {
  MaskSpec spec{0.3, 3, 0.0, 0.1};
  MaskedPredictionModel model(4, 8, 256, 6, spec, 3, 0);
  Batch b = gaussian_batch(0, 3, 20, 4, 19);
  ParamVector zero(model.dim(), 0.0);
  CHECK(model.loss(zero, b) == Catch::Approx(std::log(256.0)).margin(1e-9));
}

TEST_CASE("duplicating every sample leaves the masked loss unchanged") {
  auto model = small_masked_model();
  Batch b = gaussian_batch(0, 3, 15, 4, 29);
  Batch doubled = b;
  for (const Sample& s : b.samples) doubled.samples.push_back(s);
  std::mt19937_64 rng(4);
  std::normal_distribution<double> dist(0.0, 0.3);
  ParamVector p(model.dim());
  for (double& x : p.values) x = dist(rng);
  CHECK(std::abs(model.loss(p, b) - model.loss(p, doubled)) <= 1e-12);
}

TEST_CASE("masked evaluation is deterministic") {
  auto model = small_masked_model();
  Batch b = gaussian_batch(0, 4, 15, 4, 37);
  ParamVector p = random_init(model.dim(), 5);
  auto e1 = model.evaluate(p, b);
  auto e2 = model.evaluate(p, b);
  CHECK(e1.loss == e2.loss);
  CHECK(e1.grad.values == e2.grad.values);
}

TEST_CASE("an all-unmasked batch degrades to a flagged zero gradient") {
  MaskSpec spec{0.0, 3, 0.0, 0.1};  // never masks, even after the resample
  MaskedPredictionModel model(4, 8, 16, 6, spec, 3, 0);
  Batch b = gaussian_batch(0, 2, 10, 4, 41);
  ParamVector p = random_init(model.dim(), 6);
  auto ev = model.evaluate(p, b);
  CHECK(ev.degenerate);
  CHECK(ev.loss == 0.0);
  CHECK(norm2(ev.grad) == 0.0);
}

TEST_CASE("synthetic sources honor configured weights and shifts") {
  SyntheticSpec spec;
  spec.num_sources = 5;
  spec.feature_dim = 4;
  spec.frames_per_sample = 6;
  spec.samples_per_source = {420, 450, 80, 183, 860};
  spec.heldout_fraction = 0.0;
  spec.seed = 2024;
  for (int i = 0; i < 5; ++i)
    spec.shifts.push_back({static_cast<double>(i) - 2.0, 1.0});
  auto sources = generate_synthetic_sources(spec);
  REQUIRE(sources.size() == 5);
  // size_weight ratios mirror the configured sample counts
  CHECK(sources[4].size_weight / sources[0].size_weight ==
        Catch::Approx(860.0 / 420.0));
  for (int i = 0; i < 5; ++i) {
    double mean = 0.0;
    std::size_t n = 0;
    for (const Sample& s : sources[static_cast<std::size_t>(i)].samples) {
      for (double x : s.data) mean += x;
      n += s.data.size();
    }
    mean /= static_cast<double>(n);
    const double expected = static_cast<double>(i) - 2.0;
    CHECK(std::abs(mean - expected) <= 3.0 / std::sqrt(static_cast<double>(n)));
  }
}

TEST_CASE("identical shift parameters give statistically identical sources") {
  SyntheticSpec spec;
  spec.num_sources = 3;
  spec.feature_dim = 4;
  spec.frames_per_sample = 8;
  spec.samples_per_source = {300, 300, 300};
  spec.shifts = {{0.5, 1.0}, {0.5, 1.0}, {0.5, 1.0}};
  spec.heldout_fraction = 0.2;
  spec.seed = 5;
  auto sources = generate_synthetic_sources(spec);
  std::vector<double> means;
  for (const auto& src : sources) {
    double m = 0.0;
    std::size_t n = 0;
    for (const Sample& s : src.samples) {
      for (double x : s.data) m += x;
      n += s.data.size();
    }
    means.push_back(m / static_cast<double>(n));
    CHECK(src.heldout.size() == 60);
    CHECK(src.samples.size() == 240);
  }
  for (double m : means) CHECK(m == Catch::Approx(0.5).margin(0.05));
}
