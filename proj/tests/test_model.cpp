#include "doctest.h"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <stdexcept>

#include "care/gradcheck.hpp"
#include "care/model.hpp"

using namespace care;

TEST_CASE("learning rate schedule") {
  Schedule s;
  CHECK(lr_at(1, s) == doctest::Approx(0.01).epsilon(1e-15));
  CHECK(lr_at(20, s) == doctest::Approx(0.01).epsilon(1e-15));
  CHECK(lr_at(21, s) == doctest::Approx(0.001).epsilon(1e-12));
  CHECK(lr_at(60, s) == doctest::Approx(0.001).epsilon(1e-12));
  CHECK_THROWS_AS(lr_at(0, s), std::out_of_range);
  CHECK_THROWS_AS(lr_at(61, s), std::out_of_range);
}

TEST_CASE("forward structure") {
  PeerModel m = PeerModel::init(3, 3, 3, 1);
  m.embed_w.setZero();
  m.embed_b.setZero();
  MatX x(3, 2);
  x << 1.0, -1.0, 0.5, 2.0, -0.25, 0.0;
  CHECK(forward(m, x).logits.cwiseAbs().maxCoeff() == 0.0);

  // Identity embedding with basis prototypes copies the rectified input.
  m.embed_w.setIdentity();
  m.prototypes.setIdentity();
  const ForwardResult f = forward(m, x);
  for (int i = 0; i < 2; ++i) {
    for (int j = 0; j < 3; ++j) {
      CHECK(f.logits(j, i) == std::max(x(j, i), 0.0));
    }
  }
  MatX bad(4, 1);
  bad.setZero();
  CHECK_THROWS_AS(forward(m, bad), std::invalid_argument);
}

TEST_CASE("forward against a naive loop oracle") {
  Rng rng(77);
  PeerModel m = PeerModel::init(6, 4, 5, 99);
  MatX x(6, 3);
  for (Eigen::Index j = 0; j < x.size(); ++j) {
    x.data()[j] = rng.uniform(-2.0, 2.0);
  }
  const ForwardResult f = forward(m, x);
  for (int i = 0; i < 3; ++i) {
    for (int r = 0; r < 4; ++r) {
      Scalar pre = m.embed_b[r];
      for (int c = 0; c < 6; ++c) pre += m.embed_w(r, c) * x(c, i);
      const Scalar emb = pre > 0.0 ? pre : 0.0;
      CHECK(std::abs(f.pre_act(r, i) - pre) <= 1e-12);
      CHECK(std::abs(f.embeddings(r, i) - emb) <= 1e-12);
    }
    for (int q = 0; q < 5; ++q) {
      Scalar logit = 0.0;
      for (int r = 0; r < 4; ++r) {
        logit += m.prototypes(q, r) * f.embeddings(r, i);
      }
      CHECK(std::abs(f.logits(q, i) - logit) <= 1e-12);
    }
  }
}

TEST_CASE("init is deterministic and keeps prototypes non-zero") {
  const PeerModel a = PeerModel::init(8, 4, 6, 12345);
  const PeerModel b = PeerModel::init(8, 4, 6, 12345);
  CHECK(a.embed_w == b.embed_w);
  CHECK(a.prototypes == b.prototypes);
  const PeerModel c = PeerModel::init(8, 4, 6, 54321);
  CHECK(a.embed_w != c.embed_w);
  for (int q = 0; q < 6; ++q) {
    CHECK(a.prototypes.row(q).norm() > 0.0);
  }
}

TEST_CASE("sgd update rules") {
  PeerModel m = PeerModel::init(4, 3, 3, 7);
  const PeerModel before = m;
  ParamGrads g;
  g.embed_w = MatX::Constant(3, 4, 0.5);
  g.embed_b = VecX::Constant(3, -0.25);
  g.prototypes = MatX::Constant(3, 3, 1.5);

  sgd_update(m, g, 0.0, 0.9);
  CHECK(m.embed_w == before.embed_w);
  CHECK(m.embed_b == before.embed_b);
  CHECK(m.prototypes == before.prototypes);

  PeerModel plain = before;
  sgd_update(plain, g, 0.1, 0.0);
  CHECK((plain.embed_w - (before.embed_w - 0.1 * g.embed_w))
            .cwiseAbs()
            .maxCoeff() == 0.0);
  CHECK((plain.prototypes - (before.prototypes - 0.1 * g.prototypes))
            .cwiseAbs()
            .maxCoeff() == 0.0);

  ParamGrads nan_grads = g;
  nan_grads.embed_w(0, 0) = std::nan("");
  CHECK_THROWS_AS(sgd_update(plain, nan_grads, 0.1, 0.9), std::runtime_error);
}

TEST_CASE("checkpoint round trip") {
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / "care_test_ckpt";
  fs::create_directories(dir);
  const std::string path = (dir / "model.ckpt").string();

  const PeerModel m = PeerModel::init(8, 4, 5, 31);
  save_checkpoint(m, path);
  const PeerModel loaded = load_checkpoint(path);
  CHECK(loaded.embed_w == m.embed_w);
  CHECK(loaded.embed_b == m.embed_b);
  CHECK(loaded.prototypes == m.prototypes);

  // Corrupt the magic number.
  {
    std::FILE* f = std::fopen(path.c_str(), "r+b");
    REQUIRE(f != nullptr);
    const std::int64_t bogus = 0x1234;
    std::fwrite(&bogus, sizeof(bogus), 1, f);
    std::fclose(f);
  }
  CHECK_THROWS_AS(load_checkpoint(path), std::runtime_error);
  CHECK_THROWS_AS(load_checkpoint((dir / "missing.ckpt").string()),
                  std::runtime_error);
  fs::remove_all(dir);
}

TEST_CASE("analytic gradients match central differences everywhere") {
  const auto reports = run_gradcheck(20240601);
  REQUIRE(!reports.empty());
  for (const auto& r : reports) {
    INFO(r.name, " max rel err ", r.max_rel_err);
    CHECK(r.pass);
    CHECK(r.max_rel_err <= r.tolerance);
  }
}
