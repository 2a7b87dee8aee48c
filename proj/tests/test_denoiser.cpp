#include <doctest.h>

#include <cmath>
#include <random>
#include <set>

#include "mmdm/denoiser.hpp"
#include "mmdm/diffusion.hpp"
#include "mmdm/losses.hpp"

using namespace mmdm;

namespace {

Mat random_mat(Eigen::Index r, Eigen::Index c, std::uint64_t seed, double sd = 1.0) {
  std::mt19937_64 rng(seed);
  return sd * gaussian(r, c, rng);
}

ModelConfig small(MaskKind strategy, int enc = 2, int dec = 1) {
  ModelConfig c;
  c.strategy = strategy;
  c.encoder_layers = enc;
  c.decoder_layers = dec;
  c.hidden_dim = 16;
  c.heads = 2;
  c.max_length = 12;
  return c;
}

Skeleton four_joints() {
  using P = BodyPart;
  return Skeleton({-1, 0, 0, 0}, {{0, 0, 0}, {0, 0.5, 0}, {0.2, -0.8, 0}, {-0.2, -0.8, 0}},
                  {P::Torso, P::Torso, P::LeftLeg, P::RightLeg}, {2, 3});
}

}  // namespace

TEST_CASE("model config validation and labels") {
  ModelConfig c;
  CHECK(c.arch_label() == "06 Encoder+2 Decoder");
  c.encoder_layers = 12;
  c.decoder_layers = 4;
  CHECK(c.arch_label() == "12 Encoder+4 Decoder");
  c.heads = 3;
  CHECK_THROWS_AS(c.validate(), Error);
  c.heads = 4;
  c.encoder_layers = -1;
  CHECK_THROWS_AS(c.validate(), Error);
}

TEST_CASE("output shape matches input for both strategies") {
  const Skeleton sk = Skeleton::toy();
  const TextCondition text{{1, 2}, false};
  for (auto strategy : {MaskKind::TimeFrames, MaskKind::BodyParts}) {
    Denoiser model(small(strategy), sk, 1);
    for (int n : {1, 5, 12}) {
      const Mat x = random_mat(n, sk.feature_width(), n);
      const Mat y = model.predict(x, 7, text);
      CHECK(y.rows() == n);
      CHECK(y.cols() == sk.feature_width());
      CHECK(y.allFinite());
      const MaskSpec m = sample_mask(strategy, model.mask_slots(n), 0.4, 3);
      CHECK(model.predict(x, 7, text, &m).rows() == n);
    }
    CHECK_THROWS_AS(model.predict(random_mat(13, sk.feature_width(), 1), 0, text), Error);
    CHECK_THROWS_AS(model.predict(random_mat(4, 5, 1), 0, text), Error);
  }
}

TEST_CASE("rotation skeletons add the root channel") {
  const Skeleton sk = Skeleton::toy(Representation::Rotations);
  for (auto strategy : {MaskKind::TimeFrames, MaskKind::BodyParts}) {
    Denoiser model(small(strategy), sk, 2);
    CHECK(model.predict(random_mat(4, sk.feature_width(), 3), 2, {}).cols() == 30);
  }
}

TEST_CASE("same seed builds identical weights") {
  const Denoiser a(small(MaskKind::TimeFrames), Skeleton::toy(), 5), b(small(MaskKind::TimeFrames), Skeleton::toy(), 5);
  const Denoiser c(small(MaskKind::TimeFrames), Skeleton::toy(), 6);
  bool any_diff = false;
  for (const auto& [name, p] : a.params()) {
    CHECK(p.value == b.params().at(name).value);
    any_diff = any_diff || p.value != c.params().at(name).value;
  }
  CHECK(any_diff);
  const Mat x = random_mat(6, 27, 1);
  CHECK(a.predict(x, 3, {{4}, false}) == a.predict(x, 3, {{4}, false}));
}

TEST_CASE("zero-layer encoder passes tokens through") {
  Denoiser model(small(MaskKind::TimeFrames, 0, 1), Skeleton::toy(), 1);
  ad::Graph g;
  const Mat tokens = random_mat(5, 16, 2);
  ad::Var out = model.time_frames_encoder(g, g.constant(tokens), g.constant(random_mat(1, 16, 3)));
  CHECK(out.value() == tokens);
}

TEST_CASE("only masked frames change between encoder and decoder input") {
  Denoiser model(small(MaskKind::TimeFrames), Skeleton::toy(), 3);
  const Mat x = random_mat(10, 27, 4);
  const MaskSpec m = sample_mask(MaskKind::TimeFrames, 10, 0.2, 11);
  REQUIRE(m.popcount() == 2);
  ad::Graph g(false);
  ForwardTrace trace;
  model.forward(g, x, 5, {{1}, false}, &m, &trace);
  const Mat& q = model.params().at("mask_token").value;
  const Mat& pos = model.params().at("enc.pos").value;
  for (int i = 0; i < 10; ++i) {
    if (m.mask[i]) {
      CHECK(trace.encoder_input.row(i) == RowVec(q + pos.row(i)));
      CHECK(trace.decoder_input.row(i) != trace.encoder_input.row(i));
    } else {
      CHECK(trace.decoder_input.row(i) == trace.encoder_input.row(i));
    }
  }
  // Masked rows carry no information about the motion.
  ForwardTrace other;
  Mat x2 = x;
  for (int i = 0; i < 10; ++i)
    if (m.mask[i]) x2.row(i).setConstant(3.0);
  ad::Graph g2(false);
  model.forward(g2, x2, 5, {{1}, false}, &m, &other);
  CHECK(other.encoder_input == trace.encoder_input);
}

TEST_CASE("conditional and null predictions differ") {
  for (auto strategy : {MaskKind::TimeFrames, MaskKind::BodyParts}) {
    Denoiser model(small(strategy), Skeleton::toy(), 8);
    const Mat x = random_mat(4, 27, 1);
    const TextCondition text = model.text().tokenize("a person walks forward");
    CHECK_FALSE(text.is_null);
    CHECK(model.predict(x, 3, text) != model.predict(x, 3, TextCondition::null()));
  }
}

TEST_CASE("text encoder conditions") {
  Denoiser model(small(MaskKind::TimeFrames), Skeleton::toy(), 8);
  const ConditionEmbedding a = model.text().encode("a person walks forward");
  const ConditionEmbedding b = model.text().encode("a person walks forward");
  CHECK(a.vector == b.vector);
  CHECK_FALSE(a.is_null);
  const ConditionEmbedding empty = model.text().encode("");
  CHECK(empty.is_null);
  CHECK(empty.vector == RowVec(model.params().at("text.null").value));
  CHECK(model.text().tokenize("A Person WALKS!").tokens == model.text().tokenize("a person walks").tokens);
}

TEST_CASE("without position signals the time-frames model is permutation equivariant") {
  Denoiser model(small(MaskKind::TimeFrames), Skeleton::toy(), 12);
  for (auto& [name, p] : model.params())
    if (name == "enc.pos" || name == "dec.pos" || name.ends_with(".rel")) p.value.setZero();
  const Mat x = random_mat(6, 27, 2);
  const std::vector<int> perm{3, 0, 5, 1, 4, 2};
  Mat xp(6, 27);
  for (int i = 0; i < 6; ++i) xp.row(i) = x.row(perm[i]);
  const Mat y = model.predict(x, 4, {{2}, false});
  const Mat yp = model.predict(xp, 4, {{2}, false});
  for (int i = 0; i < 6; ++i) CHECK((yp.row(i) - y.row(perm[i])).norm() < 1e-10);

  Denoiser positioned(small(MaskKind::TimeFrames), Skeleton::toy(), 12);
  const Mat z = positioned.predict(x, 4, {{2}, false});
  const Mat zp = positioned.predict(xp, 4, {{2}, false});
  double worst = 0;
  for (int i = 0; i < 6; ++i) worst = std::max(worst, (zp.row(i) - z.row(perm[i])).norm());
  CHECK(worst > 1e-6);
}

TEST_CASE("bpst gives five tokens per frame and keeps parts apart") {
  Denoiser model(small(MaskKind::BodyParts, 2, 1), Skeleton::toy(), 4);
  const Mat x = random_mat(3, 27, 5);
  ad::Graph g(false);
  const Mat tokens = model.bpst_encode(g, x).value();
  CHECK(tokens.rows() == 15);
  CHECK(tokens.cols() == 16);

  // Zeroing the left-arm joint only moves the left-arm part tokens.
  Mat silenced = x;
  silenced.middleCols(3 * 3, 3).setZero();
  ad::Graph g2(false);
  const Mat moved = model.bpst_encode(g2, silenced).value();
  for (int f = 0; f < 3; ++f)
    for (int p = 0; p < kPartCount; ++p) {
      const bool same = moved.row(f * 5 + p) == tokens.row(f * 5 + p);
      CHECK(same == (p != static_cast<int>(BodyPart::LeftArm)));
    }
}

TEST_CASE("a masked body part becomes the mask token") {
  Denoiser model(small(MaskKind::BodyParts), Skeleton::toy(), 4);
  const Mat x = random_mat(3, 27, 5);
  const MaskSpec m{MaskKind::BodyParts, 0.2, {false, false, true, false, false}};
  ad::Graph g(false);
  ForwardTrace trace;
  model.forward(g, x, 2, {{3}, false}, &m, &trace);
  ad::Graph g2(false);
  const Mat pos = model.part_positional(g2, 3).value();
  const Mat& q = model.params().at("mask_token").value;
  for (int f = 0; f < 3; ++f)
    for (int p = 0; p < kPartCount; ++p) {
      const int row = f * 5 + p;
      if (p == 2)
        CHECK(trace.encoder_input.row(row) == RowVec(q + pos.row(row)));
      else
        CHECK(trace.encoder_input.row(row) == RowVec(trace.part_tokens.row(row) + pos.row(row)));
    }
}

TEST_CASE("end-to-end weight gradients match central differences") {
  struct Case {
    MaskKind strategy;
    Skeleton skeleton;
  };
  const std::vector<Case> cases{{MaskKind::TimeFrames, four_joints()}, {MaskKind::BodyParts, Skeleton::toy()}};
  for (const auto& c : cases) {
    ModelConfig cfg = small(c.strategy, 1, 1);
    cfg.hidden_dim = 8;
    cfg.max_length = 4;
    Denoiser model(cfg, c.skeleton, 21);
    const int width = c.skeleton.feature_width();
    const Mat x0 = random_mat(2, width, 1, 0.5), xt = random_mat(2, width, 2);
    const FootContactLabels contacts{Mat::Ones(1, static_cast<Eigen::Index>(c.skeleton.foot_joints().size()))};
    const MaskSpec mask = c.strategy == MaskKind::TimeFrames
                              ? MaskSpec{MaskKind::TimeFrames, 0.5, {false, true}}
                              : MaskSpec{MaskKind::BodyParts, 0.2, {false, true, false, false, false}};
    const TextCondition text{{1, 5}, false};
    auto loss = [&]() {
      ad::Graph g(false);
      const Mat pred = model.forward(g, xt, 3, text, &mask).value();
      return compute_losses(x0, pred, contacts, c.skeleton, {}).breakdown.total;
    };
    model.params().zero_grad();
    {
      ad::Graph g;
      ad::Var pred = model.forward(g, xt, 3, text, &mask);
      const LossResult r = compute_losses(x0, pred.value(), contacts, c.skeleton, {});
      g.backward(pred, r.grad);
    }
    std::mt19937_64 pick(3);
    int checked = 0;
    double worst = 0;
    for (auto& [name, p] : model.params()) {
      if (name == "text.null" || name == "text.embed") continue;  // untouched by this caption's unused rows
      for (int trial = 0; trial < 3; ++trial) {
        const Eigen::Index i = std::uniform_int_distribution<Eigen::Index>(0, p.value.size() - 1)(pick);
        const double keep = p.value.data()[i];
        const double h = 1e-5;
        p.value.data()[i] = keep + h;
        const double up = loss();
        p.value.data()[i] = keep - h;
        const double down = loss();
        p.value.data()[i] = keep;
        const double fd = (up - down) / (2 * h);
        const double err = std::abs(fd - p.grad.data()[i]) / std::max(std::abs(fd), 1e-6);
        if (std::abs(fd) > 1e-7 || std::abs(p.grad.data()[i]) > 1e-7) {
          worst = std::max(worst, err);
          CHECK_MESSAGE(err < 1e-3, name, "[", i, "] fd=", fd, " grad=", p.grad.data()[i]);
        }
        ++checked;
      }
    }
    CHECK(checked > 30);
    MESSAGE("worst relative gradient error ", worst);
    // The caption's own word rows do receive gradient.
    CHECK(model.params().at("text.embed").grad.row(1).norm() > 0.0);
    CHECK(model.params().at("text.embed").grad.row(2).norm() == 0.0);
  }
}
