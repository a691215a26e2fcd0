#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <string>

#include "lesita/rng.hpp"
#include "lesita/solvers.hpp"
#include "lesita/unfolded.hpp"

using namespace lesita;

TEST_CASE("network kind names round-trip", "[unfolded]") {
  CHECK(std::string(net_kind_name(NetKind::kLista)) == "lista");
  CHECK(std::string(net_kind_name(NetKind::kLesita)) == "lesita");
  CHECK(net_kind_from_name("lista") == NetKind::kLista);
  CHECK(net_kind_from_name("lesita") == NetKind::kLesita);
  CHECK_THROWS_AS(net_kind_from_name("unknown"), InvalidParameterError);
}

TEST_CASE("parameter slot names differ per kind", "[unfolded]") {
  SlotNames a = slot_names(NetKind::kLista);
  CHECK(std::string(a.s) == "S");
  CHECK(std::string(a.w) == "W");
  CHECK(std::string(a.theta) == "theta");
  SlotNames b = slot_names(NetKind::kLesita);
  CHECK(std::string(b.s) == "Q");
  CHECK(std::string(b.w) == "R");
  CHECK(std::string(b.theta) == "mu");
}

TEST_CASE("freshly constructed networks are zero", "[unfolded]") {
  UnfoldedNetwork net(NetKind::kLista, 3, 8, 4);
  CHECK(net.depth() == 3);
  CHECK(net.code_dim() == 8);
  CHECK(net.input_dim() == 4);
  CHECK_FALSE(net.tied());
  CHECK(net.blocks().size() == 3);
  for (int t = 0; t < 3; ++t) {
    CHECK(net.layer(t).S.cwiseAbs().maxCoeff() == 0.0);
    CHECK(net.layer(t).W.cwiseAbs().maxCoeff() == 0.0);
    CHECK(net.layer(t).theta == 0.0);
  }
}

TEST_CASE("tied networks share one parameter block", "[unfolded]") {
  UnfoldedNetwork net(NetKind::kLesita, 5, 8, 4, /*tied=*/true);
  CHECK(net.tied());
  CHECK(net.blocks().size() == 1);
  CHECK(&net.layer(0) == &net.layer(4));
}

TEST_CASE("network construction validates arguments", "[unfolded]") {
  CHECK_THROWS_AS(UnfoldedNetwork(NetKind::kLista, 0, 8, 4), InvalidParameterError);
  CHECK_THROWS_AS(UnfoldedNetwork(NetKind::kLista, 3, 0, 4), InvalidParameterError);
  CHECK_THROWS_AS(UnfoldedNetwork(NetKind::kLista, 3, 8, 0), InvalidParameterError);
  CHECK_THROWS_AS(UnfoldedNetwork::from_operator(NetKind::kLista, 3, Matrix(0, 0), 0.1),
                  DimensionError);
  Matrix F = Matrix::Identity(4, 4);
  CHECK_THROWS_AS(UnfoldedNetwork::from_operator(NetKind::kLista, 3, F, 0.0),
                  InvalidParameterError);
}

TEST_CASE("operator initialization reproduces the solver matrices", "[unfolded]") {
  Rng rng(17);
  Matrix F = rng.normal_matrix(6, 10) / std::sqrt(6.0);
  const double lambda = 0.2;
  UnfoldedNetwork net = UnfoldedNetwork::from_operator(NetKind::kLista, 4, F, lambda);
  const double L = lipschitz_upper_bound(F);
  Matrix S_expect = Matrix::Identity(10, 10) - (F.transpose() * F) / L;
  Matrix W_expect = F.transpose() / L;
  for (int t = 0; t < 4; ++t) {
    CHECK((net.layer(t).S - S_expect).cwiseAbs().maxCoeff() == 0.0);
    CHECK((net.layer(t).W - W_expect).cwiseAbs().maxCoeff() == 0.0);
    CHECK(net.layer(t).theta == lambda / L);
  }
}

TEST_CASE("untrained plain network matches the truncated solver exactly", "[unfolded]") {
  Rng rng(29);
  Matrix F = rng.normal_matrix(16, 32) / 4.0;
  const double lambda = 0.15;
  SparseProblem p;
  p.F = F;
  p.lambda = lambda;
  for (int depth : {3, 5, 7}) {
    UnfoldedNetwork net = UnfoldedNetwork::from_operator(NetKind::kLista, depth, F, lambda);
    for (int trial = 0; trial < 20; ++trial) {
      p.y = rng.normal_vector(16);
      SolverConfig cfg;
      cfg.t_max = depth;
      cfg.rel_tol = 0.0;
      SolverResult ref = ista_solve(p, cfg);
      Matrix out = net.forward(Matrix(p.y));
      REQUIRE(out.rows() == 32);
      REQUIRE(out.cols() == 1);
      REQUIRE((out.col(0) - ref.alpha).cwiseAbs().maxCoeff() == 0.0);
    }
  }
}

TEST_CASE("untrained side-information network matches the truncated solver exactly",
          "[unfolded]") {
  Rng rng(31);
  Matrix F = rng.normal_matrix(16, 32) / 4.0;
  const double lambda = 0.15;
  SparseProblem p;
  p.F = F;
  p.lambda = lambda;
  for (int depth : {3, 5, 7}) {
    UnfoldedNetwork net = UnfoldedNetwork::from_operator(NetKind::kLesita, depth, F, lambda);
    for (int trial = 0; trial < 20; ++trial) {
      p.y = rng.normal_vector(16);
      Vector w = rng.normal_vector(32);
      p.w = w;
      SolverConfig cfg;
      cfg.t_max = depth;
      cfg.rel_tol = 0.0;
      SolverResult ref = sita_solve(p, cfg);
      Matrix out = net.forward(Matrix(p.y), Matrix(w));
      REQUIRE((out.col(0) - ref.alpha).cwiseAbs().maxCoeff() == 0.0);
    }
  }
}

TEST_CASE("tied initialization behaves like untied at the start", "[unfolded]") {
  Rng rng(37);
  Matrix F = rng.normal_matrix(8, 16) / 3.0;
  UnfoldedNetwork tied = UnfoldedNetwork::from_operator(NetKind::kLista, 4, F, 0.1, true);
  UnfoldedNetwork untied = UnfoldedNetwork::from_operator(NetKind::kLista, 4, F, 0.1, false);
  Matrix y = rng.normal_matrix(8, 5);
  CHECK((tied.forward(y) - untied.forward(y)).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("batched forward agrees with per-sample forward", "[unfolded]") {
  Rng rng(41);
  Matrix F = rng.normal_matrix(8, 16) / 3.0;
  UnfoldedNetwork net = UnfoldedNetwork::from_operator(NetKind::kLesita, 5, F, 0.1);
  Matrix y = rng.normal_matrix(8, 7);
  Matrix w = rng.normal_matrix(16, 7);
  Matrix batched = net.forward(y, w);
  for (Index j = 0; j < 7; ++j) {
    Matrix single = net.forward(Matrix(y.col(j)), Matrix(w.col(j)));
    REQUIRE((batched.col(j) - single.col(0)).cwiseAbs().maxCoeff() <= 1e-12);
  }
}

TEST_CASE("forward pass is deterministic", "[unfolded]") {
  Rng rng(43);
  Matrix F = rng.normal_matrix(8, 16) / 3.0;
  UnfoldedNetwork net = UnfoldedNetwork::from_operator(NetKind::kLista, 4, F, 0.1);
  Matrix y = rng.normal_matrix(8, 3);
  CHECK((net.forward(y) - net.forward(y)).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("forward records a complete tape", "[unfolded]") {
  Rng rng(47);
  Matrix F = rng.normal_matrix(8, 16) / 3.0;
  UnfoldedNetwork net = UnfoldedNetwork::from_operator(NetKind::kLesita, 4, F, 0.1);
  Matrix y = rng.normal_matrix(8, 3);
  Matrix w = rng.normal_matrix(16, 3);
  ForwardTape tape;
  Matrix out = net.forward(y, w, &tape);
  REQUIRE(tape.pre.size() == 4);
  REQUIRE(tape.act.size() == 4);
  CHECK((tape.input - y).cwiseAbs().maxCoeff() == 0.0);
  CHECK((tape.si - w).cwiseAbs().maxCoeff() == 0.0);
  CHECK((tape.act.back() - out).cwiseAbs().maxCoeff() == 0.0);
  for (int t = 0; t < 4; ++t) {
    CHECK(tape.pre[static_cast<std::size_t>(t)].rows() == 16);
    CHECK(tape.pre[static_cast<std::size_t>(t)].cols() == 3);
    CHECK(tape.act[static_cast<std::size_t>(t)].rows() == 16);
    CHECK(tape.act[static_cast<std::size_t>(t)].cols() == 3);
  }
  // The first pre-activation is W y since the initial code is zero.
  CHECK((tape.pre[0] - net.layer(0).W * y).cwiseAbs().maxCoeff() <= 1e-14);
}

TEST_CASE("forward validates kinds and shapes", "[unfolded]") {
  Matrix F = Matrix::Identity(4, 4);
  UnfoldedNetwork lista = UnfoldedNetwork::from_operator(NetKind::kLista, 2, F, 0.1);
  UnfoldedNetwork lesita = UnfoldedNetwork::from_operator(NetKind::kLesita, 2, F, 0.1);
  Matrix y = Matrix::Ones(4, 2);
  Matrix w = Matrix::Ones(4, 2);
  CHECK_THROWS_AS(lista.forward(y, w), InvalidParameterError);
  CHECK_THROWS_AS(lesita.forward(y), InvalidParameterError);
  CHECK_THROWS_AS(lista.forward(Matrix(Matrix::Ones(3, 2))), DimensionError);
  CHECK_THROWS_AS(lesita.forward(y, Matrix(Matrix::Ones(5, 2))), DimensionError);
  CHECK_THROWS_AS(lesita.forward(y, Matrix(Matrix::Ones(4, 3))), DimensionError);
}

TEST_CASE("thresholds are clamped to a positive floor when applied", "[unfolded]") {
  // A network with theta = 0 still shrinks by the tiny floor rather than
  // passing values through untouched; outputs stay finite and well-defined.
  UnfoldedNetwork net(NetKind::kLista, 1, 4, 4);
  net.layer(0).W = Matrix::Identity(4, 4);
  net.layer(0).theta = -5.0;  // pathological raw value
  Matrix y(4, 1);
  y << 1.0, -1.0, 0.5, 0.0;
  Matrix out = net.forward(y);
  for (Index i = 0; i < 4; ++i) {
    CHECK(std::abs(out(i, 0)) <= std::abs(y(i, 0)));
  }
}
