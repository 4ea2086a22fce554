#include <catch2/catch_amalgamated.hpp>

#include <random>
#include <sstream>

#include "curvyilt/objective.hpp"
#include "support/oracles.hpp"
#include "support/smoke.hpp"

using namespace curvyilt;

namespace {

double dot(const GrayImage& a, const GrayImage& b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.data.size(); ++i) acc += a.data[i] * b.data[i];
  return acc;
}

}  // namespace

TEST_CASE("highfreq_penalty: constants and the full-window case are free") {
  const GrayImage flat(GridSpec{16, 16, 1.0}, 0.8);
  const auto [pen, grad] = highfreq_penalty(flat, 3);
  CHECK_THAT(pen, Catch::Matchers::WithinAbs(0.0, 1e-9));

  std::mt19937 rng(7);
  const GrayImage rnd = oracle::random_gray(16, 16, rng);
  const auto [pen_full, grad_full] = highfreq_penalty(rnd, 16);
  CHECK(pen_full == 0.0);
  for (double g : grad_full.data) CHECK(g == 0.0);

  CHECK_THROWS_AS(highfreq_penalty(rnd, 17), DomainError);
  CHECK_THROWS_AS(highfreq_penalty(rnd, 0), DomainError);
}

TEST_CASE("highfreq_penalty: Parseval identity and finite-difference gradient") {
  std::mt19937 rng(11);
  const int n = 32;
  GrayImage img = oracle::random_gray(n, n, rng);
  const int k_freq = 9;

  const auto [pen, grad] = highfreq_penalty(img, k_freq);

  // total spectral energy via Parseval minus the in-window energy
  Fft2D& fft = fft_plan(n, n);
  std::vector<std::complex<double>> buf(img.data.size()), spec(img.data.size());
  for (std::size_t i = 0; i < img.data.size(); ++i) buf[i] = img.data[i];
  fft.forward(buf.data(), spec.data());
  double total = 0.0;
  for (double v : img.data) total += v * v;
  total *= n * n;
  double in_window = 0.0;
  for (int du = -(k_freq / 2); du <= k_freq / 2; ++du)
    for (int dv = -(k_freq / 2); dv <= k_freq / 2; ++dv) {
      const int y = (du + n) % n, x = (dv + n) % n;
      in_window += std::norm(spec[static_cast<std::size_t>(y) * n + x]);
    }
  CHECK_THAT(pen, Catch::Matchers::WithinRel(total - in_window, 1e-10));

  // quadratic in the image, so the wide step carries no truncation error
  const double eps = 1e-3;
  std::uniform_int_distribution<int> pick(0, n * n - 1);
  for (int probe = 0; probe < 15; ++probe) {
    const int i = pick(rng);
    const double keep = img.data[i];
    img.data[i] = keep + eps;
    const double up = highfreq_penalty(img, k_freq).first;
    img.data[i] = keep - eps;
    const double dn = highfreq_penalty(img, k_freq).first;
    img.data[i] = keep;
    const double fd = (up - dn) / (2.0 * eps);
    CHECK_THAT(grad.data[i],
               Catch::Matchers::WithinRel(fd, 1e-6) || Catch::Matchers::WithinAbs(fd, 1e-7));
  }
}

TEST_CASE("ilt_loss: closed-form cases") {
  const GridSpec spec{8, 8, 1.0};
  const GrayImage z(spec, 0.5), target(spec, 0.5), mask(spec, 0.3);
  const IltLoss perfect = ilt_loss(z, z, z, target, mask, 0.0, 4);
  CHECK(perfect.total == 0.0);

  GrayImage z_off = z;
  z_off(3, 3) = 1.0;  // one pixel off by 0.5
  const IltLoss one = ilt_loss(z_off, z, z, target, mask, 0.0, 4);
  CHECK_THAT(one.term_l2, Catch::Matchers::WithinRel(0.25, 1e-12));
  CHECK_THAT(one.total, Catch::Matchers::WithinRel(0.25, 1e-12));
  CHECK(one.d_z_nom(3, 3) == 1.0);
}

TEST_CASE("ilt_loss: analytic partials match finite differences") {
  std::mt19937 rng(13);
  const int n = 12;
  GrayImage z_nom = oracle::random_gray(n, n, rng);
  GrayImage z_max = oracle::random_gray(n, n, rng);
  GrayImage z_min = oracle::random_gray(n, n, rng);
  GrayImage mask = oracle::random_gray(n, n, rng);
  const GrayImage target = oracle::random_gray(n, n, rng);
  const double beta3 = 1e-3;
  const int k_freq = 5;

  const IltLoss loss = ilt_loss(z_nom, z_max, z_min, target, mask, beta3, k_freq);
  const double eps = 1e-4;  // every term is quadratic in its variable
  std::uniform_int_distribution<int> pick(0, n * n - 1);

  auto fd_check = [&](GrayImage& var, const GrayImage& grad) {
    for (int probe = 0; probe < 8; ++probe) {
      const int i = pick(rng);
      const double keep = var.data[i];
      var.data[i] = keep + eps;
      const double up = ilt_loss(z_nom, z_max, z_min, target, mask, beta3, k_freq).total;
      var.data[i] = keep - eps;
      const double dn = ilt_loss(z_nom, z_max, z_min, target, mask, beta3, k_freq).total;
      var.data[i] = keep;
      const double fd = (up - dn) / (2.0 * eps);
      CHECK_THAT(grad.data[i],
                 Catch::Matchers::WithinRel(fd, 1e-6) || Catch::Matchers::WithinAbs(fd, 1e-7));
    }
  };
  fd_check(z_nom, loss.d_z_nom);
  fd_check(z_max, loss.d_z_max);
  fd_check(z_min, loss.d_z_min);
  fd_check(mask, loss.d_mask_c);
}

TEST_CASE("adam_step: zero gradient, first-step magnitude, constant gradient") {
  const GridSpec spec{4, 4, 1.0};
  AdamState st;
  const GrayImage zero(spec);
  const GrayImage u0 = adam_step(st, zero, 1.0);
  for (double v : u0.data) CHECK(v == 0.0);

  AdamState st2;
  GrayImage g(spec);
  for (int i = 0; i < 16; ++i) g.data[i] = (i % 2 ? 1.0 : -1.0) * (0.5 + 0.1 * i);
  const double lr = 0.7;
  const GrayImage u1 = adam_step(st2, g, lr);
  for (int i = 0; i < 16; ++i) {
    // first step: update = lr * g / (|g| + eps') so |update| ~ lr
    CHECK_THAT(std::fabs(u1.data[i]), Catch::Matchers::WithinRel(lr, 1e-4));
    CHECK(u1.data[i] * g.data[i] > 0.0);  // same sign as the gradient
  }
  const GrayImage u2 = adam_step(st2, g, lr);
  for (int i = 0; i < 16; ++i)
    CHECK_THAT(std::fabs(u2.data[i]), Catch::Matchers::WithinRel(lr, 1e-4));
}

TEST_CASE("corner_gradient_share: degenerate and single-corner cases") {
  const GridSpec spec{16, 16, 1.0};
  BinaryImage target(spec);
  for (int y = 4; y < 12; ++y)
    for (int x = 4; x < 12; ++x) target(y, x) = 1;

  const GrayImage zero(spec);
  CHECK(corner_gradient_share(zero, target, 2) == 0.0);

  GrayImage corner_only(spec);
  corner_only(4, 4) = 3.0;  // on the top-left corner pixel
  CHECK_THAT(corner_gradient_share(corner_only, target, 2),
             Catch::Matchers::WithinRel(1.0, 1e-12));

  // share is the restricted-norm ratio by definition
  std::mt19937 rng(17);
  const GrayImage g = oracle::random_gray(16, 16, rng, -1.0, 1.0);
  const BinaryImage mask = corner_mask_from_target(target, 2);
  double num = 0, den = 0;
  for (std::size_t i = 0; i < g.data.size(); ++i) {
    den += g.data[i] * g.data[i];
    if (mask.data[i]) num += g.data[i] * g.data[i];
  }
  CHECK_THAT(corner_gradient_share(g, target, 2),
             Catch::Matchers::WithinRel(std::sqrt(num / den), 1e-12));
}

TEST_CASE("corner_mask_from_target: marks corner neighborhoods only") {
  const GridSpec spec{16, 16, 1.0};
  BinaryImage target(spec);
  for (int y = 4; y < 12; ++y)
    for (int x = 4; x < 12; ++x) target(y, x) = 1;
  const BinaryImage mask = corner_mask_from_target(target, 1);
  // radius 1 marks exactly the 2x2 blocks at the four corners
  int marked = 0;
  for (auto v : mask.data) marked += v;
  CHECK(marked == 16);
  CHECK(mask(3, 3) == 1);
  CHECK(mask(4, 4) == 1);
  CHECK(mask(8, 8) == 0);  // interior
  CHECK(mask(3, 8) == 0);  // mid-edge
}

TEST_CASE("end-to-end gradient check with morphology disabled") {
  const smoke::Problem prob = smoke::make_problem();
  OptConfig cfg = prob.opt;
  cfg.enable_inloop_morph = false;

  const GrayImage target_s = downsample(cdr(prob.target, cfg.k_cvx, cfg.k_ccv).to_gray(),
                                        cfg.scale);
  std::mt19937 rng(19);
  GrayImage mask = target_s;
  for (auto& v : mask.data) v += std::uniform_real_distribution<double>(-0.2, 0.2)(rng);

  LithoConfig litho = prob.litho;
  litho.beta2 = cfg.beta2;

  auto forward = [&](const GrayImage& m) {
    const GrayImage mc = mask_sigmoid(m, cfg.beta1, cfg.mask_threshold);
    const CornerImages z = simulate_corners(mc, litho);
    return ilt_loss(z.z_nom, z.z_max, z.z_min, target_s, mc, cfg.beta3, cfg.k_freq).total;
  };

  // assembled analytic gradient
  const GrayImage sig = mask_sigmoid(mask, cfg.beta1, cfg.mask_threshold);
  CornerTapes tapes;
  const CornerImages z = simulate_corners(sig, litho, &tapes);
  const IltLoss loss = ilt_loss(z.z_nom, z.z_max, z.z_min, target_s, sig, cfg.beta3,
                                cfg.k_freq);
  auto through = [&](const GrayImage& dz, const GrayImage& zi, const AdjointTape& tape) {
    GrayImage di(dz.spec);
    for (std::size_t i = 0; i < dz.data.size(); ++i)
      di.data[i] = dz.data[i] * cfg.beta2 * zi.data[i] * (1.0 - zi.data[i]);
    return litho_vjp(tape, di);
  };
  GrayImage g_mc = through(loss.d_z_nom, z.z_nom, tapes.nominal);
  const GrayImage g_out = through(loss.d_z_max, z.z_max, tapes.outer);
  const GrayImage g_in = through(loss.d_z_min, z.z_min, tapes.inner);
  GrayImage grad(mask.spec);
  for (std::size_t i = 0; i < grad.data.size(); ++i) {
    const double gm = g_mc.data[i] + g_out.data[i] + g_in.data[i] + loss.d_mask_c.data[i];
    grad.data[i] = gm * cfg.beta1 * sig.data[i] * (1.0 - sig.data[i]);
  }

  const double eps = 1e-4;
  std::uniform_int_distribution<int> pick(0, static_cast<int>(mask.data.size()) - 1);
  int checked = 0;
  while (checked < 20) {
    const int i = pick(rng);
    const double keep = mask.data[i];
    mask.data[i] = keep + eps;
    const double up = forward(mask);
    mask.data[i] = keep - eps;
    const double dn = forward(mask);
    mask.data[i] = keep;
    const double fd = (up - dn) / (2.0 * eps);
    if (std::fabs(fd) < 1e-8) continue;  // saturated sigmoid pixel, no signal
    ++checked;
    CHECK_THAT(grad.data[i], Catch::Matchers::WithinRel(fd, 1e-3));
  }
}

TEST_CASE("curvy_ilt: a zero learning rate reproduces the processed target") {
  const smoke::Problem prob = smoke::make_problem();
  OptConfig cfg = prob.opt;
  cfg.max_steps = 1;
  cfg.learning_rate = 0.0;

  const OptResult result = curvy_ilt(prob.target, cfg, prob.litho);

  // expected: cdr -> downsample -> upsample -> binarize -> post-process
  const BinaryImage retargeted = cdr(prob.target, cfg.k_cvx, cfg.k_ccv);
  const GrayImage m0 = downsample(retargeted.to_gray(), cfg.scale);
  BinaryImage expect = binarize(upsample_bicubic(m0, cfg.scale), cfg.mask_threshold);
  const StructElem se = disc_element(cfg.scale * cfg.k_morph % 2 ? cfg.scale * cfg.k_morph
                                                                 : cfg.scale * cfg.k_morph + 1);
  const BinaryImage opened = binary_open(expect, se);
  const BinaryImage closed = binary_close(expect, se);
  BinaryImage merged(expect.spec);
  for (std::size_t i = 0; i < merged.data.size(); ++i)
    merged.data[i] = expect.data[i] ? opened.data[i] : closed.data[i];
  expect = binary_close(binary_open(merged, se), se);

  CHECK(result.final_mask.data == expect.data);
  CHECK(result.trace.size() == 1);
}

TEST_CASE("curvy_ilt: deterministic across runs") {
  const smoke::Problem prob = smoke::make_problem();
  OptConfig cfg = prob.opt;
  cfg.max_steps = 25;

  const OptResult a = curvy_ilt(prob.target, cfg, prob.litho);
  const OptResult b = curvy_ilt(prob.target, cfg, prob.litho);
  REQUIRE(a.trace.size() == b.trace.size());
  for (std::size_t i = 0; i < a.trace.size(); ++i) {
    CHECK(a.trace[i].loss_total == b.trace[i].loss_total);
    CHECK(a.trace[i].grad_norm == b.trace[i].grad_norm);
  }
  CHECK(a.final_mask.data == b.final_mask.data);
  CHECK(a.metrics.mse == b.metrics.mse);
}

TEST_CASE("curvy_ilt: smoke run improves the print and converges calmly") {
  const smoke::Problem prob = smoke::make_problem();
  const OptConfig cfg = prob.opt;  // learning rate 0.05, within the <= 0.1 regime

  // the in-loop merge must keep the simulated mask inside [0,1]
  double mask_lo = 1e9, mask_hi = -1e9;
  const SnapshotFn snap = [&](int, const GrayImage& mask_c, const GrayImage&,
                              const GrayImage&, const GrayImage&) {
    for (double v : mask_c.data) {
      mask_lo = std::min(mask_lo, v);
      mask_hi = std::max(mask_hi, v);
    }
  };

  const OptResult result = curvy_ilt(prob.target, cfg, prob.litho, nullptr, nullptr, snap);
  REQUIRE(result.trace.size() == static_cast<std::size_t>(cfg.max_steps));
  CHECK(mask_lo >= 0.0);
  CHECK(mask_hi <= 1.0);

  CHECK(result.metrics.mse < result.baseline_mse);

  // epoch-over-epoch increases stay rare at a small learning rate
  int increases = 0;
  for (std::size_t i = 1; i < result.trace.size(); ++i)
    if (result.trace[i].loss_total > result.trace[i - 1].loss_total) ++increases;
  CHECK(increases < static_cast<int>(result.trace.size()) / 10);

  // range invariant of the in-loop cleanup epochs
  for (const auto& rec : result.trace) {
    CHECK(std::isfinite(rec.loss_total));
    CHECK(rec.grad_corner_share >= 0.0);
    CHECK(rec.grad_corner_share <= 1.0);
  }
}

TEST_CASE("curvy_ilt: loss trace windows descend on the smoke problem") {
  const smoke::Problem prob = smoke::make_problem();
  const OptResult result = curvy_ilt(prob.target, prob.opt, prob.litho);
  const auto& tr = result.trace;
  for (std::size_t a = 10; a + 20 < tr.size(); ++a)
    CHECK(tr[a + 20].loss_total <= tr[a].loss_total);
}

TEST_CASE("curvy_ilt: phase-3 cleanup output is binary and idempotent") {
  const smoke::Problem prob = smoke::make_problem();
  OptConfig cfg = prob.opt;
  cfg.max_steps = 30;
  const OptResult result = curvy_ilt(prob.target, cfg, prob.litho);

  for (auto v : result.final_mask.data) CHECK((v == 0 || v == 1));

  const StructElem se = disc_element(cfg.scale * cfg.k_morph % 2 ? cfg.scale * cfg.k_morph
                                                                 : cfg.scale * cfg.k_morph + 1);
  const BinaryImage again =
      binary_close(binary_open(result.final_mask, se), se);
  CHECK(again.data == result.final_mask.data);
}

TEST_CASE("curvy_ilt: a non-finite loss aborts with the trace preserved") {
  const smoke::Problem prob = smoke::make_problem();
  OptConfig cfg = prob.opt;
  cfg.beta3 = 1e308;  // overflows the weighted penalty on the first epoch
  cfg.max_steps = 6;

  try {
    curvy_ilt(prob.target, cfg, prob.litho);
    FAIL("expected DivergenceError");
  } catch (const DivergenceError& e) {
    REQUIRE(!e.trace.empty());
    CHECK(e.trace.size() <= 6);
    CHECK(!std::isfinite(e.trace.back().loss_total));  // offending epoch recorded
    CHECK(!std::isfinite(e.trace.back().loss_hf));     // and the culprit term visible
    for (std::size_t i = 0; i + 1 < e.trace.size(); ++i)
      CHECK(std::isfinite(e.trace[i].loss_total));
  }
}

TEST_CASE("curvy_ilt: configuration violations are rejected up front") {
  const smoke::Problem prob = smoke::make_problem();
  OptConfig bad = prob.opt;
  bad.scale = 3;  // 64 not divisible
  CHECK_THROWS_AS(curvy_ilt(prob.target, bad, prob.litho), DimensionError);

  OptConfig even_disc = prob.opt;
  even_disc.k_morph = 4;
  CHECK_THROWS_AS(curvy_ilt(prob.target, even_disc, prob.litho), ValidationError);
}

TEST_CASE("write_trace_csv: stable column layout") {
  std::vector<EpochRecord> trace(2);
  trace[0] = {1, 10.0, 6.0, 3.0, 1.0, 0.5, 0.25};
  trace[1] = {2, 9.0, 5.0, 3.0, 1.0, 0.4, 0.2};
  std::ostringstream out;
  write_trace_csv(trace, out);
  const std::string s = out.str();
  CHECK(s.rfind("epoch,loss_total,loss_l2,loss_pvb,loss_hf,grad_norm,grad_corner_share\n",
                0) == 0);
  CHECK(s.find("\n1,10,6,3,1,0.5,0.25\n") != std::string::npos);
}
