#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstdio>
#include <string>
#include <vector>

#include "erc/model.hpp"

namespace {

erc::EncoderConfig tiny_text_config(bool mwce, bool ccfte) {
  erc::EncoderConfig cfg;
  cfg.modality = erc::Modality::text;
  cfg.d_model = 8;
  cfg.n_layers = 1;
  cfg.n_heads = 2;
  cfg.d_ff = 16;
  cfg.max_positions = 12;
  cfg.vocab_size = 13;
  cfg.dropout_rate = 0.0;
  cfg.d_ctx = 4;
  cfg.mwce = mwce;
  cfg.ccfte = ccfte;
  return cfg;
}

erc::EncoderConfig tiny_acoustic_config(bool mwce, bool ccfte) {
  erc::EncoderConfig cfg = tiny_text_config(mwce, ccfte);
  cfg.modality = erc::Modality::acoustic;
  cfg.vocab_size = 0;
  cfg.d_feat = 3;
  return cfg;
}

erc::ModelSample text_sample(const std::vector<int>& ids,
                             const std::vector<std::uint8_t>& mask, int label,
                             const std::string& id = "seg") {
  erc::ModelSample s;
  s.segment_id = id;
  s.speaker_id = "spk";
  s.token_ids = ids;
  s.role_mask = mask;
  s.label = label;
  return s;
}

erc::ModelSample acoustic_sample(const erc::Matrix& frames,
                                 const std::vector<std::uint8_t>& mask,
                                 int label) {
  erc::ModelSample s;
  s.segment_id = "aseg";
  s.speaker_id = "spk";
  s.frames = frames;
  s.role_mask = mask;
  s.label = label;
  return s;
}

// Mixed batch: one sample with two-sided context, one with no context at all,
// one with previous-only context. Together these exercise the context
// pooling, the learned default context vector, and both mask roles.
std::vector<erc::ModelSample> text_batch() {
  return {
      text_sample({1, 5, 7, 2, 9, 3, 12}, {0, 0, 1, 1, 1, 0, 0}, 1),
      text_sample({4, 4, 8, 11}, {1, 1, 1, 1}, 3),
      text_sample({6, 0, 10, 2, 5}, {0, 0, 0, 1, 1}, 0),
  };
}

std::vector<erc::ModelSample> acoustic_batch(erc::Rng& rng) {
  auto frames = [&](Eigen::Index n) {
    erc::Matrix f(n, 3);
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = 0; j < 3; ++j) f(i, j) = rng.normal();
    return f;
  };
  return {
      acoustic_sample(frames(7), {0, 0, 1, 1, 1, 0, 0}, 2),
      acoustic_sample(frames(4), {1, 1, 1, 1}, 0),
      acoustic_sample(frames(5), {0, 0, 0, 1, 1}, 3),
  };
}

bool bits_equal(const erc::Matrix& a, const erc::Matrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) return false;
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    for (Eigen::Index j = 0; j < a.cols(); ++j)
      if (a(i, j) != b(i, j)) return false;
  return true;
}

bool bits_equal(const Eigen::Vector4d& a, const Eigen::Vector4d& b) {
  for (int i = 0; i < 4; ++i)
    if (a(i) != b(i)) return false;
  return true;
}

// Central-difference check of every element of every tensor.
void check_gradients(const erc::EncoderConfig& cfg,
                     const std::vector<erc::ModelSample>& batch,
                     std::uint64_t seed) {
  erc::Rng rng = erc::Rng::derive(seed, {erc::rng_tag::kInit});
  erc::EncoderParams params = erc::init_params(cfg, rng);
  auto [loss0, grads] = erc::loss_and_grad(params, batch);
  REQUIRE(std::isfinite(loss0));

  std::vector<erc::Matrix*> grad_ptrs;
  grads.for_each_named(
      [&](const std::string&, erc::Matrix& m) { grad_ptrs.push_back(&m); });

  const double h = 1e-5;
  double worst = 0.0;
  std::string worst_name;
  std::size_t ti = 0;
  params.for_each_named([&](const std::string& name, erc::Matrix& m) {
    const erc::Matrix& g = *grad_ptrs[ti++];
    for (Eigen::Index i = 0; i < m.rows(); ++i)
      for (Eigen::Index j = 0; j < m.cols(); ++j) {
        const double orig = m(i, j);
        m(i, j) = orig + h;
        const double lp = erc::loss_and_grad(params, batch).first;
        m(i, j) = orig - h;
        const double lm = erc::loss_and_grad(params, batch).first;
        m(i, j) = orig;
        const double numeric = (lp - lm) / (2.0 * h);
        const double analytic = g(i, j);
        const double rel = std::abs(numeric - analytic) /
                           std::max(1e-6, std::abs(numeric) + std::abs(analytic));
        if (rel > worst) {
          worst = rel;
          worst_name = name + "(" + std::to_string(i) + "," +
                       std::to_string(j) + ")";
        }
      }
  });
  INFO("worst tensor element: " << worst_name);
  CHECK(worst <= 1e-4);
}

}  // namespace

TEST_CASE("analytic gradients match central differences for all strategy combos",
          "[model][gradcheck]") {
  SECTION("text, target-masked pooling only") {
    check_gradients(tiny_text_config(true, false), text_batch(), 11);
  }
  SECTION("text, unmasked pooling, no context vector") {
    check_gradients(tiny_text_config(false, false), text_batch(), 12);
  }
  SECTION("text, target-masked pooling with context vector") {
    check_gradients(tiny_text_config(true, true), text_batch(), 13);
  }
  SECTION("text, unmasked pooling with context vector") {
    check_gradients(tiny_text_config(false, true), text_batch(), 14);
  }
  SECTION("acoustic, target-masked pooling with context vector") {
    erc::Rng frame_rng = erc::Rng::derive(99, {erc::rng_tag::kOracle});
    check_gradients(tiny_acoustic_config(true, true), acoustic_batch(frame_rng),
                    15);
  }
}

TEST_CASE("masked pooling ignores context embeddings bitwise", "[model]") {
  const auto cfg = tiny_text_config(true, false);
  erc::Rng rng = erc::Rng::derive(7, {erc::rng_tag::kInit});
  const erc::EncoderParams params = erc::init_params(cfg, rng);
  const auto s = text_sample({1, 5, 7, 2, 9, 3, 12}, {0, 0, 1, 1, 1, 0, 0}, 1);
  const erc::Matrix h = erc::encode(params, s);

  const Eigen::Vector4d base =
      erc::logits_from_embeddings(params, h, s.role_mask);
  erc::Matrix perturbed = h;
  perturbed.row(0).setConstant(1e6);
  perturbed.row(1) *= -3.0;
  perturbed.row(5).setZero();
  perturbed.row(6).setConstant(-42.0);
  const Eigen::Vector4d after =
      erc::logits_from_embeddings(params, perturbed, s.role_mask);
  CHECK(bits_equal(base, after));

  // Sanity: perturbing a *target* row must change the logits.
  erc::Matrix target_perturbed = h;
  target_perturbed.row(3).setConstant(0.5);
  const Eigen::Vector4d changed =
      erc::logits_from_embeddings(params, target_perturbed, s.role_mask);
  CHECK_FALSE(bits_equal(base, changed));
}

TEST_CASE("unmasked pooling is sensitive to context embeddings", "[model]") {
  const auto cfg = tiny_text_config(false, false);
  erc::Rng rng = erc::Rng::derive(7, {erc::rng_tag::kInit});
  const erc::EncoderParams params = erc::init_params(cfg, rng);
  const auto s = text_sample({1, 5, 7, 2, 9, 3, 12}, {0, 0, 1, 1, 1, 0, 0}, 1);
  const erc::Matrix h = erc::encode(params, s);
  const Eigen::Vector4d base =
      erc::logits_from_embeddings(params, h, s.role_mask);
  erc::Matrix perturbed = h;
  perturbed.row(0).setConstant(0.25);
  const Eigen::Vector4d after =
      erc::logits_from_embeddings(params, perturbed, s.role_mask);
  CHECK_FALSE(bits_equal(base, after));
}

TEST_CASE("context vector depends only on context embeddings", "[model]") {
  const auto cfg = tiny_text_config(true, true);
  erc::Rng rng = erc::Rng::derive(21, {erc::rng_tag::kInit});
  const erc::EncoderParams params = erc::init_params(cfg, rng);
  const auto s = text_sample({1, 5, 7, 2, 9, 3, 12}, {0, 0, 1, 1, 1, 0, 0}, 1);
  const erc::Matrix h = erc::encode(params, s);

  const Eigen::VectorXd base = erc::context_vector(h, s.role_mask, params);
  erc::Matrix perturbed = h;
  perturbed.row(2).setConstant(9.0);
  perturbed.row(3) *= 2.0;
  perturbed.row(4).setZero();
  const Eigen::VectorXd after =
      erc::context_vector(perturbed, s.role_mask, params);
  REQUIRE(base.size() == after.size());
  for (Eigen::Index i = 0; i < base.size(); ++i) CHECK(base(i) == after(i));

  // Values are bounded by the tanh nonlinearity.
  for (Eigen::Index i = 0; i < base.size(); ++i)
    CHECK(std::abs(base(i)) < 1.0);

  // No context positions -> error for the raw operation.
  const auto all_target = text_sample({4, 4, 8}, {1, 1, 1}, 0);
  const erc::Matrix h2 = erc::encode(params, all_target);
  CHECK_THROWS_AS(erc::context_vector(h2, all_target.role_mask, params),
                  erc::DataError);
}

TEST_CASE("empty context falls back to the learned default vector", "[model]") {
  const auto cfg = tiny_text_config(true, true);
  erc::Rng rng = erc::Rng::derive(31, {erc::rng_tag::kInit});
  erc::EncoderParams params = erc::init_params(cfg, rng);
  const auto no_ctx = text_sample({4, 4, 8, 11}, {1, 1, 1, 1}, 3);
  const auto with_ctx = text_sample({0, 4, 4, 8, 11}, {0, 1, 1, 1, 1}, 3);

  const Eigen::Vector4d base = erc::forward(params, no_ctx);

  // Context-path weights are irrelevant when there is no context...
  erc::EncoderParams ctx_tweaked = params;
  ctx_tweaked.ctx_fc_w.setConstant(2.5);
  ctx_tweaked.ctx_pool_q.setConstant(-1.0);
  CHECK(bits_equal(base, erc::forward(ctx_tweaked, no_ctx)));

  // ...but the learned default vector is not.
  erc::EncoderParams default_tweaked = params;
  default_tweaked.ctx_default.setConstant(0.9);
  CHECK_FALSE(bits_equal(base, erc::forward(default_tweaked, no_ctx)));

  // With real context present, the default vector is unused.
  const Eigen::Vector4d ctx_base = erc::forward(params, with_ctx);
  CHECK(bits_equal(ctx_base, erc::forward(default_tweaked, with_ctx)));
}

TEST_CASE("context-vector head matches a manual recomputation", "[model]") {
  const auto cfg = tiny_text_config(true, true);
  erc::Rng rng = erc::Rng::derive(41, {erc::rng_tag::kInit});
  const erc::EncoderParams params = erc::init_params(cfg, rng);
  const auto s = text_sample({1, 5, 7, 2, 9, 3}, {0, 0, 1, 1, 1, 0}, 2);
  const erc::Matrix h = erc::encode(params, s);

  // Manual path through the public operations.
  const Eigen::VectorXd c = erc::context_vector(h, s.role_mask, params);
  erc::Matrix widened(3, cfg.d_model + cfg.d_ctx);
  int row = 0;
  for (std::size_t i = 0; i < s.role_mask.size(); ++i)
    if (s.role_mask[i] == erc::kRoleTarget) {
      widened.row(row) << h.row(static_cast<Eigen::Index>(i)), c.transpose();
      ++row;
    }
  const Eigen::VectorXd pooled = erc::attention_pool(
      widened, std::vector<std::uint8_t>{1, 1, 1}, params.pool_q);
  const Eigen::Vector4d manual =
      (pooled.transpose() * params.cls_w + params.cls_b.row(0)).transpose();

  const Eigen::Vector4d logits = erc::forward(params, s);
  for (int i = 0; i < 4; ++i)
    CHECK(logits(i) == Catch::Approx(manual(i)).margin(1e-12));
}

TEST_CASE("attention pooling weights form a distribution over unmasked rows",
          "[model]") {
  erc::Rng rng = erc::Rng::derive(55, {erc::rng_tag::kInit});
  erc::Matrix m(6, 8);
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = rng.normal();
  erc::Matrix q(1, 8);
  for (Eigen::Index j = 0; j < 8; ++j) q(0, j) = rng.normal();

  const std::vector<std::uint8_t> mask{1, 0, 1, 1, 0, 1};
  const Eigen::VectorXd w = erc::attention_pool_weights(m, mask, q);
  REQUIRE(w.size() == 4);  // only unmasked rows participate
  CHECK(w.sum() == Catch::Approx(1.0).margin(1e-12));
  for (Eigen::Index i = 0; i < w.size(); ++i) CHECK(w(i) > 0.0);

  // The pooled vector is the weight-blend of the unmasked rows.
  const Eigen::VectorXd pooled = erc::attention_pool(m, mask, q);
  Eigen::VectorXd manual = Eigen::VectorXd::Zero(8);
  manual += w(0) * m.row(0).transpose();
  manual += w(1) * m.row(2).transpose();
  manual += w(2) * m.row(3).transpose();
  manual += w(3) * m.row(5).transpose();
  for (Eigen::Index j = 0; j < 8; ++j)
    CHECK(pooled(j) == Catch::Approx(manual(j)).margin(1e-12));

  CHECK_THROWS_AS(
      erc::attention_pool(m, std::vector<std::uint8_t>(6, 0), q),
      erc::DataError);
  CHECK_THROWS_AS(erc::attention_pool(m, std::vector<std::uint8_t>{1, 0}, q),
                  erc::DataError);
}

TEST_CASE("zero layers leaves input plus positional embeddings unchanged",
          "[model]") {
  auto cfg = tiny_text_config(true, false);
  cfg.n_layers = 0;
  erc::Rng rng = erc::Rng::derive(61, {erc::rng_tag::kInit});
  const erc::EncoderParams params = erc::init_params(cfg, rng);
  const auto s = text_sample({3, 0, 12, 7}, {0, 1, 1, 1}, 2);
  const erc::Matrix h = erc::encode(params, s);
  REQUIRE(h.rows() == 4);
  for (Eigen::Index i = 0; i < 4; ++i) {
    const erc::Matrix expected =
        params.tok_embed.row(s.token_ids[static_cast<std::size_t>(i)]) +
        params.pos_embed.row(i);
    CHECK(bits_equal(erc::Matrix(h.row(i)), expected));
  }
}

TEST_CASE("acoustic input projection feeds the encoder", "[model]") {
  auto cfg = tiny_acoustic_config(true, false);
  cfg.n_layers = 0;
  erc::Rng rng = erc::Rng::derive(62, {erc::rng_tag::kInit});
  const erc::EncoderParams params = erc::init_params(cfg, rng);
  erc::Matrix frames(3, 3);
  frames << 1.0, 0.0, -1.0, 0.5, 2.0, 0.25, 0.0, 0.0, 0.0;
  const auto s = acoustic_sample(frames, {0, 1, 1}, 1);
  const erc::Matrix h = erc::encode(params, s);
  const erc::Matrix expected = ((frames * params.frame_w).rowwise() +
                                params.frame_b.row(0)) +
                               params.pos_embed.topRows(3);
  REQUIRE(h.rows() == 3);
  for (Eigen::Index i = 0; i < h.rows(); ++i)
    for (Eigen::Index j = 0; j < h.cols(); ++j)
      CHECK(h(i, j) == Catch::Approx(expected(i, j)).margin(1e-15));
}

TEST_CASE("uniform logits give log(4) loss and class-0 tie-break", "[model]") {
  const auto cfg = tiny_text_config(true, false);
  erc::Rng rng = erc::Rng::derive(63, {erc::rng_tag::kInit});
  const erc::EncoderParams zeros = erc::zeros_like(erc::init_params(cfg, rng));
  const auto batch = text_batch();
  const auto [loss, grads] = erc::loss_and_grad(zeros, batch);
  CHECK(loss == Catch::Approx(std::log(4.0)).margin(1e-12));
  CHECK(erc::predict(zeros, batch[0]) == 0);
}

TEST_CASE("forward probabilities agree with the training loss", "[model]") {
  const auto cfg = tiny_text_config(true, true);
  erc::Rng rng = erc::Rng::derive(64, {erc::rng_tag::kInit});
  const erc::EncoderParams params = erc::init_params(cfg, rng);
  const auto s = text_sample({1, 5, 7, 2, 9}, {0, 0, 1, 1, 1}, 2);
  const Eigen::Vector4d p = erc::softmax4(erc::forward(params, s));
  CHECK(p.sum() == Catch::Approx(1.0).margin(1e-12));
  const double loss = erc::loss_and_grad(params, {s}).first;
  CHECK(loss == Catch::Approx(-std::log(p(2))).margin(1e-12));
}

TEST_CASE("sequences longer than max_positions are rejected", "[model]") {
  auto cfg = tiny_text_config(true, false);
  cfg.max_positions = 4;
  erc::Rng rng = erc::Rng::derive(65, {erc::rng_tag::kInit});
  const erc::EncoderParams params = erc::init_params(cfg, rng);
  const auto ok = text_sample({1, 2, 3, 4}, {0, 1, 1, 1}, 0);
  CHECK_NOTHROW(erc::forward(params, ok));
  const auto too_long = text_sample({1, 2, 3, 4, 5}, {0, 0, 1, 1, 1}, 0);
  CHECK_THROWS_AS(erc::forward(params, too_long), erc::DataError);
  const auto empty = text_sample({}, {}, 0);
  CHECK_THROWS_AS(erc::forward(params, empty), erc::DataError);
}

TEST_CASE("dropout is reproducible from its stream and off at inference",
          "[model]") {
  auto cfg = tiny_text_config(true, false);
  cfg.dropout_rate = 0.3;
  erc::Rng init_rng = erc::Rng::derive(66, {erc::rng_tag::kInit});
  const erc::EncoderParams params = erc::init_params(cfg, init_rng);
  const auto batch = text_batch();

  erc::Rng d1 = erc::Rng::derive(5, {erc::rng_tag::kDropout, 0});
  erc::Rng d2 = erc::Rng::derive(5, {erc::rng_tag::kDropout, 0});
  const auto [loss_a, grads_a] = erc::loss_and_grad(params, batch, &d1);
  const auto [loss_b, grads_b] = erc::loss_and_grad(params, batch, &d2);
  CHECK(loss_a == loss_b);
  CHECK(bits_equal(grads_a.cls_w, grads_b.cls_w));
  CHECK(bits_equal(grads_a.layers[0].wq, grads_b.layers[0].wq));

  erc::Rng d3 = erc::Rng::derive(5, {erc::rng_tag::kDropout, 1});
  const double loss_c = erc::loss_and_grad(params, batch, &d3).first;
  CHECK(loss_a != loss_c);

  // Without a stream the pass is deterministic even at nonzero rate.
  const double inf_a = erc::loss_and_grad(params, batch, nullptr).first;
  const double inf_b = erc::loss_and_grad(params, batch, nullptr).first;
  CHECK(inf_a == inf_b);
  const Eigen::Vector4d f1 = erc::forward(params, batch[0]);
  const Eigen::Vector4d f2 = erc::forward(params, batch[0]);
  CHECK(bits_equal(f1, f2));
}

TEST_CASE("non-finite losses raise divergence errors", "[model]") {
  const auto cfg = tiny_text_config(true, false);
  erc::Rng rng = erc::Rng::derive(67, {erc::rng_tag::kInit});
  erc::EncoderParams params = erc::init_params(cfg, rng);
  params.tok_embed(1, 0) = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(erc::loss_and_grad(params, text_batch()),
                  erc::DivergenceError);
}

TEST_CASE("model config JSON round trip and validation", "[model]") {
  auto cfg = tiny_text_config(true, true);
  cfg.dropout_rate = 0.15;
  const auto j = erc::config_to_json(cfg);
  CHECK(erc::config_from_json(j) == cfg);

  auto bad = j;
  bad["d_model"] = 7;  // not divisible by n_heads=2... 7 % 2 != 0
  CHECK_THROWS_AS(erc::config_from_json(bad), erc::DataError);
  bad = j;
  bad["dropout_rate"] = 1.0;
  CHECK_THROWS_AS(erc::config_from_json(bad), erc::DataError);
  bad = j;
  bad["vocab_size"] = 0;
  CHECK_THROWS_AS(erc::config_from_json(bad), erc::DataError);
  bad = j;
  bad["n_classes"] = 5;
  CHECK_THROWS_AS(erc::config_from_json(bad), erc::DataError);
}

TEST_CASE("checkpoints round-trip bit-exactly", "[model][checkpoint]") {
  erc::Rng rng = erc::Rng::derive(71, {erc::rng_tag::kInit});

  SECTION("text model with context vector") {
    const auto params = erc::init_params(tiny_text_config(true, true), rng);
    const std::string bytes = erc::serialize_params(params);
    const erc::EncoderParams loaded = erc::deserialize_params(bytes);
    REQUIRE(loaded.config == params.config);
    bool all_equal = true;
    std::size_t count_a = 0, count_b = 0;
    params.for_each_named(
        [&](const std::string&, const erc::Matrix&) { ++count_a; });
    loaded.for_each_named(
        [&](const std::string&, const erc::Matrix&) { ++count_b; });
    REQUIRE(count_a == count_b);
    std::vector<const erc::Matrix*> lhs;
    params.for_each_named(
        [&](const std::string&, const erc::Matrix& m) { lhs.push_back(&m); });
    std::size_t i = 0;
    loaded.for_each_named([&](const std::string&, const erc::Matrix& m) {
      if (!bits_equal(*lhs[i++], m)) all_equal = false;
    });
    CHECK(all_equal);
    CHECK(erc::serialize_params(loaded) == bytes);
    CHECK(erc::checkpoint_digest(loaded) == erc::checkpoint_digest(params));
  }

  SECTION("acoustic model through a file") {
    const auto params = erc::init_params(tiny_acoustic_config(false, true), rng);
    const std::string path = "checkpoint_roundtrip_test.bin";
    erc::save_checkpoint(params, path);
    const erc::EncoderParams loaded = erc::load_checkpoint(path);
    std::remove(path.c_str());
    CHECK(erc::serialize_params(loaded) == erc::serialize_params(params));
  }

  SECTION("digest is content-sensitive") {
    auto params = erc::init_params(tiny_text_config(true, false), rng);
    const std::string before = erc::checkpoint_digest(params);
    params.cls_b(0, 2) += 1e-12;
    CHECK(erc::checkpoint_digest(params) != before);
  }

  SECTION("corrupted inputs are rejected") {
    const auto params = erc::init_params(tiny_text_config(true, false), rng);
    const std::string bytes = erc::serialize_params(params);
    CHECK_THROWS_AS(erc::deserialize_params(bytes.substr(0, bytes.size() / 2)),
                    erc::DataError);
    CHECK_THROWS_AS(erc::deserialize_params("GARBAGE\n{}\n"), erc::DataError);
    CHECK_THROWS_AS(erc::load_checkpoint("does_not_exist.bin"), erc::DataError);
  }
}

TEST_CASE("warm start copies tensors matching by name and shape", "[model]") {
  erc::Rng rng1 = erc::Rng::derive(81, {erc::rng_tag::kInit});
  erc::Rng rng2 = erc::Rng::derive(82, {erc::rng_tag::kFinetuneInit});
  const auto narrow = erc::init_params(tiny_text_config(true, false), rng1);
  erc::EncoderParams widened = erc::init_params(tiny_text_config(true, true), rng2);
  const erc::EncoderParams fresh_copy = widened;

  const auto copied = erc::warm_start(widened, narrow);
  auto was_copied = [&](const std::string& name) {
    return std::find(copied.begin(), copied.end(), name) != copied.end();
  };
  CHECK(was_copied("embed.tokens"));
  CHECK(was_copied("embed.positions"));
  CHECK(was_copied("layers.0.attn.wq"));
  CHECK(was_copied("layers.0.ff.w2"));
  // Widened pooling/classifier weights change shape, so they stay fresh; the
  // context tensors have no source counterpart at all.
  CHECK_FALSE(was_copied("pool.q"));
  CHECK_FALSE(was_copied("cls.w"));
  CHECK_FALSE(was_copied("ctx.fc.w"));
  CHECK_FALSE(was_copied("ctx.default"));

  CHECK(bits_equal(widened.tok_embed, narrow.tok_embed));
  CHECK(bits_equal(widened.layers[0].ff_w2, narrow.layers[0].ff_w2));
  CHECK(bits_equal(widened.pool_q, fresh_copy.pool_q));
  CHECK(bits_equal(widened.cls_w, fresh_copy.cls_w));
  CHECK(bits_equal(widened.ctx_fc_w, fresh_copy.ctx_fc_w));
}

TEST_CASE("vocabulary maps unknown tokens to id zero", "[model]") {
  erc::Corpus c;
  c.d_feat = 0;
  c.frame_rate = 0.0;
  erc::Dialogue d;
  d.dialogue_id = "d0";
  erc::Segment s;
  s.segment_id = "s0";
  s.speaker_id = "a";
  s.role = erc::Role::caller;
  s.start_s = 0.0;
  s.end_s = 1.0;
  s.tokens = {"beta", "alpha", "beta"};
  s.label = erc::EmotionLabel::NEU;
  d.segments.push_back(s);
  c.dialogues.push_back(d);

  const auto vocab = erc::Vocabulary::from_corpus(c);
  REQUIRE(vocab.size() == 3);  // alpha, beta, plus the unknown id
  CHECK(vocab.id("alpha") == 1);
  CHECK(vocab.id("beta") == 2);
  CHECK(vocab.id("gamma") == 0);

  erc::ContextualSample cs;
  cs.segment_id = "s0";
  cs.speaker_id = "a";
  cs.prev_tokens = {"alpha"};
  cs.target_tokens = {"beta", "gamma"};
  cs.label = erc::EmotionLabel::POS;
  const erc::ModelSample ms = erc::make_model_sample(vocab, cs);
  CHECK(ms.token_ids == std::vector<int>{1, 2, 0});
  CHECK(ms.role_mask == std::vector<std::uint8_t>{0, 1, 1});
  CHECK(ms.label == 3);
}
