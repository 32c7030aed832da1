// Acceptance gate: one PASS/FAIL line per criterion, nonzero exit on any failure.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "leakscope/leakscope.hpp"
#include "oracles.hpp"

using namespace leakscope;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Round trip and clear-bit preservation on random planes.
Outcome p1() {
  const auto t0 = Clock::now();
  std::size_t mismatches = 0, clear_violations = 0;
  for (std::uint64_t i = 0; i < 100; ++i) {
    const auto img = oracle::random_plane(64, 64, 1000 + i);
    for (int s = 0; s <= 8; ++s) {
      const EncryptionParams p{s, 77 + i, ShiftMode::MaskedLow};
      const auto enc = encrypt(img, p);
      if (!(decrypt(enc, p) == img)) ++mismatches;
      const auto low = static_cast<std::uint8_t>(0xFFu >> s);
      for (std::size_t k = 0; k < img.area(); ++k) {
        if ((enc.pixels()[k] & low) != (img.pixels()[k] & low)) ++clear_violations;
      }
    }
  }
  const double t = seconds_since(t0);
  return {mismatches == 0 && clear_violations == 0 && t < 1.0,
          fmt("900 round trips, %zu mismatches, %zu clear-bit violations, %.3f s", mismatches, clear_violations, t)};
}

// Histogram MI on a uniform plane tracks 8 - s.
Outcome p2() {
  const auto img = oracle::random_plane(512, 512, 2);
  const auto curve = pixel_mi_curve(img, 12345);
  std::vector<double> s, mi;
  double worst = 0.0;
  for (const auto& pt : curve) {
    s.push_back(pt.bits);
    mi.push_back(pt.mi.value);
    worst = std::max(worst, std::abs(pt.mi.value - (8.0 - pt.bits)));
  }
  const double slope = oracle::linear_slope(s, mi);
  return {worst <= 0.05 && slope >= -1.02 && slope <= -0.98,
          fmt("max |MI - (8-s)| = %.4f bits, slope = %.4f bits/bit", worst, slope)};
}

// Plug-in MI against a direct double loop over every alphabet up to 16x16.
Outcome p3() {
  Rng rng(3);
  double worst_kl = 0.0, worst_self = 0.0;
  std::size_t alphabets = 0;
  for (std::size_t na = 1; na <= 16; ++na) {
    for (std::size_t nb = 1; nb <= 16; ++nb) {
      JointHistogram hist(na, nb);
      std::vector<std::vector<double>> c(na, std::vector<double>(nb, 0.0));
      for (std::size_t u = 0; u < na; ++u) {
        for (std::size_t v = 0; v < nb; ++v) {
          // About a quarter of the cells stay empty.
          const auto n = uniform_index(rng, 4) == 0 ? 0 : 1 + uniform_index(rng, 1000);
          if (n) hist.add(u, v, n);
          c[u][v] = static_cast<double>(n);
        }
      }
      if (hist.total() == 0) hist.add(0, 0), c[0][0] = 1.0;
      double total = 0.0;
      std::vector<double> px(na, 0.0), py(nb, 0.0);
      for (std::size_t u = 0; u < na; ++u)
        for (std::size_t v = 0; v < nb; ++v) total += c[u][v], px[u] += c[u][v], py[v] += c[u][v];
      double kl = 0.0;
      for (std::size_t u = 0; u < na; ++u) {
        for (std::size_t v = 0; v < nb; ++v) {
          if (c[u][v] == 0.0) continue;
          const double p = c[u][v] / total;
          kl += p * std::log2(p / ((px[u] / total) * (py[v] / total)));
        }
      }
      worst_kl = std::max(worst_kl, std::abs(mutual_information_plugin(hist).value - kl));
      ++alphabets;
    }
    // I(X;X) = H(X): diagonal joint table.
    JointHistogram diag(na, na);
    std::vector<std::uint64_t> counts(na);
    for (std::size_t u = 0; u < na; ++u) {
      counts[u] = 1 + uniform_index(rng, 1000);
      diag.add(u, u, counts[u]);
    }
    worst_self = std::max(worst_self, std::abs(mutual_information_plugin(diag).value - entropy(counts)));
  }
  return {worst_kl <= 1e-9 && worst_self <= 1e-9,
          fmt("%zu alphabets: max |plugin - D_KL| = %.2e, max |I(X;X) - H(X)| = %.2e bits", alphabets, worst_kl,
              worst_self)};
}

// MINE on bivariate Gaussians with the default configuration.
Outcome p4() {
  const auto t0 = Clock::now();
  MineConfig cfg;
  cfg.seed = 4;
  const double truth = -0.5 * std::log(1.0 - 0.81);
  const double corr = estimate_mi(oracle::correlated_gaussians(10000, 0.9, 40), cfg).final_mi;
  const double t_corr = seconds_since(t0);
  const auto t1 = Clock::now();
  const double indep = estimate_mi(oracle::correlated_gaussians(10000, 0.0, 41), cfg).final_mi;
  const double t_indep = seconds_since(t1);
  return {std::abs(corr - truth) <= 0.10 && std::abs(indep) <= 0.05 && t_corr < 60.0 && t_indep < 60.0,
          fmt("rho=0.9: %.4f nats (target %.4f), independent: %.4f nats, %.1f s + %.1f s", corr, truth, indep, t_corr,
              t_indep)};
}

// Analytic DV gradients against central differences on random networks.
Outcome p5() {
  Rng rng(5);
  std::size_t probes = 0, failures = 0, networks = 0;
  double worst = 0.0;
  while (probes < 250) {
    std::vector<std::size_t> dims{1 + uniform_index(rng, 6)};
    const auto hidden = uniform_index(rng, 4);  // 0..3 hidden layers
    for (std::uint64_t h = 0; h < hidden; ++h) dims.push_back(2 + uniform_index(rng, 7));
    dims.push_back(1);
    TStatNetwork<double> net(dims, rng());
    oracle::jitter_biases(net, rng());
    const auto batch = static_cast<Eigen::Index>(4 + uniform_index(rng, 29));
    const auto d = static_cast<Eigen::Index>(dims.front());
    MatrixX<double> joint(d, batch), marg(d, batch);
    for (Eigen::Index c = 0; c < batch; ++c) {
      for (Eigen::Index r = 0; r < d; ++r) {
        joint(r, c) = standard_normal(rng);
        marg(r, c) = standard_normal(rng);
      }
    }
    const auto check = oracle::check_dv_gradient(net, joint, marg, 25, rng());
    probes += check.probes;
    failures += check.failures;
    worst = std::max(worst, check.worst_error);
    ++networks;
  }
  return {failures == 0 && probes >= 200,
          fmt("%zu probes on %zu networks, %zu above 1e-4, worst relative error %.2e", probes, networks, failures,
              worst)};
}

// Histogram vs MINE curve shapes on the natural-image fixtures.
Outcome p6() {
  const auto t0 = Clock::now();
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(fs::path(LEAKSCOPE_TEST_DATA) / "natural")) {
    if (is_image_path(e.path())) files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  if (files.size() != 10) return {false, fmt("expected 10 fixture images, found %zu", files.size())};

  MineConfig cfg;
  cfg.epochs = 20;
  cfg.hidden_dims = {64, 64};
  cfg.batch_size = 256;
  cfg.seed = 3;
  std::vector<double> s(9), hist(9, 0.0), mine(9, 0.0);
  for (const auto& f : files) {
    const auto img = read_gray(f);
    if (img.width() != 512 || img.height() != 512) return {false, f.filename().string() + " is not 512x512"};
    for (int b = 0; b <= 8; ++b) {
      const EncryptionParams p{b, 11, ShiftMode::ShiftedHigh};
      const auto clear = extract_clear(encrypt(img, p), p);
      hist[b] += mutual_information_plugin(pixel_histogram(img, clear)).value / 10.0;
      mine[b] += estimate_mi(sample_pixel_pairs(img, clear, 4, 4096, 5), cfg).final_mi / 10.0;
      s[b] = b;
    }
  }
  const double r2_hist = oracle::linear_r2(s, hist);
  const double r2_mine = oracle::linear_r2(s, mine);
  const double rho = oracle::spearman(s, mine);
  return {r2_hist >= 0.98 && rho <= -0.9 && r2_mine < r2_hist,
          fmt("histogram R2 = %.4f, MINE R2 = %.4f, MINE Spearman = %.3f, %.1f s", r2_hist, r2_mine, rho,
              seconds_since(t0))};
}

// Relative distance to the global maximum.
Outcome p7() {
  bool ok = true;
  const std::vector<LabeledSeries> fixture{{0, {2, 5, 3}}};
  ok &= relative_distance_to_max(fixture)[0].values == std::vector<double>{3, 0, 2};
  const std::vector<LabeledSeries> pair{{1, {1, 2}}, {4, {0, 4}}};
  const auto two = relative_distance_to_max(pair);
  ok &= two[0].values == std::vector<double>{3, 2} && two[1].values == std::vector<double>{4, 0};

  Rng rng(7);
  std::size_t collections = 0, violations = 0;
  for (; collections < 500; ++collections) {
    std::vector<LabeledSeries> traces(1 + uniform_index(rng, 9));
    const auto epochs = 1 + uniform_index(rng, 50);
    for (std::size_t i = 0; i < traces.size(); ++i) {
      traces[i].bits = static_cast<int>(i);
      for (std::uint64_t e = 0; e < epochs; ++e) traces[i].values.push_back(uniform_real(rng, -3.0, 5.0));
    }
    double lo = INFINITY;
    for (const auto& t : relative_distance_to_max(traces)) {
      for (double v : t.values) {
        lo = std::min(lo, v);
        if (v < 0.0) ++violations;
      }
    }
    if (lo != 0.0) ++violations;
  }
  return {ok && violations == 0,
          fmt("fixtures %s, %zu random collections, %zu violations", ok ? "match" : "differ", collections, violations)};
}

// LKE1 round trip and designated corruption categories.
Outcome p8() {
  EmbeddingSet set;
  set.dim = 512;
  set.encoder_id = "acceptance";
  set.source_image = "x.png";
  set.s_level = 5;
  set.patch_size = 224;
  set.seed = 8;
  set.extra["normalized"] = true;
  Rng rng(8);
  for (int i = 0; i < 50; ++i) {
    std::vector<float> v(512);
    for (auto& c : v) c = static_cast<float>(standard_normal(rng));
    set.vectors.push_back(std::move(v));
  }
  const auto path = fs::temp_directory_path() / "leakscope_acceptance.lke";
  write_embeddings(set, path);
  const auto back = read_embeddings(path);
  const auto bytes = encode_embeddings(set);
  const bool round_trip = back == set && encode_embeddings(back) == bytes && slurp(path).size() == bytes.size();
  fs::remove(path);

  using Kind = EmbeddingFileErrorKind;
  std::vector<std::pair<std::vector<std::uint8_t>, Kind>> cases;
  auto bad = bytes;
  bad[1] = 'Z';
  cases.emplace_back(bad, Kind::BadMagic);
  bad = bytes;
  bad[4] = 9;
  cases.emplace_back(bad, Kind::UnsupportedVersion);
  bad = bytes;
  bad[6] = 2;
  cases.emplace_back(bad, Kind::UnsupportedDtype);
  cases.emplace_back(std::vector<std::uint8_t>(bytes.begin(), bytes.begin() + 12), Kind::TruncatedHeader);
  bad = bytes;
  bad[16] = 0xFF, bad[17] = 0xFF, bad[18] = 0xFF;
  cases.emplace_back(bad, Kind::TruncatedHeader);
  bad = bytes;
  bad[kLkeHeaderSize] = '#';
  cases.emplace_back(bad, Kind::BadMetadata);
  cases.emplace_back(std::vector<std::uint8_t>(bytes.begin(), bytes.end() - 4), Kind::TruncatedPayload);
  bad = bytes;
  bad.push_back(0);
  cases.emplace_back(bad, Kind::DimensionMismatch);

  std::size_t correct = 0;
  for (const auto& [data, kind] : cases) {
    try {
      decode_embeddings(data);
    } catch (const EmbeddingFileError& e) {
      correct += e.kind() == kind;
    }
  }
  return {round_trip && correct == cases.size(),
          fmt("round trip %s, %zu/%zu corruptions classified", round_trip ? "exact" : "differs", correct,
              cases.size())};
}

// Built-in embedding sweep on synthetic images.
Outcome p9() {
  const auto root = fs::temp_directory_path() / "leakscope_acceptance_p9";
  fs::remove_all(root);
  generate_synthetic_corpus(root / "data", 5, 64, 64, 9);
  ExperimentConfig cfg;
  cfg.dataset_dir = root / "data";
  cfg.n_images = 5;
  cfg.s_levels = {0, 4, 8};
  cfg.estimators = {EstimatorId::MineEmbedBuiltin, EstimatorId::CosineEmbed};
  cfg.mine.epochs = 50;
  cfg.mine.batch_size = 25;
  cfg.mine.hidden_dims = {64, 64};
  cfg.patches.patch_size = 32;
  cfg.patches.n_patches = 50;

  std::string outputs[2];
  ExperimentResult result;
  for (int run = 0; run < 2; ++run) {
    cfg.output_dir = root / ("run" + std::to_string(run));
    result = run_sweep(cfg);
    emit_reports(result, cfg.output_dir);
    for (const char* f : {"curve.csv", "traces.csv", "reldist.csv"}) outputs[run] += slurp(cfg.output_dir / f);
  }
  const bool deterministic = outputs[0] == outputs[1];

  std::size_t mine_cells = 0, mine_ok = 0;
  bool cosine_exact = true;
  std::size_t cosine_s0 = 0;
  for (const auto& c : result.cells) {
    if (c.estimator == EstimatorId::MineEmbedBuiltin) ++mine_cells, mine_ok += c.ok;
    if (c.estimator == EstimatorId::CosineEmbed && c.s == 0) {
      ++cosine_s0;
      cosine_exact &= c.ok && c.value == 1.0;
    }
  }
  double mi0 = NAN, mi8 = NAN, cos0 = NAN;
  for (const auto& row : result.curve) {
    if (row.estimator == EstimatorId::MineEmbedBuiltin && row.s == 0) mi0 = row.mean;
    if (row.estimator == EstimatorId::MineEmbedBuiltin && row.s == 8) mi8 = row.mean;
    if (row.estimator == EstimatorId::CosineEmbed && row.s == 0) cos0 = row.mean;
  }
  fs::remove_all(root);
  const bool complete = mine_cells == 15 && mine_ok == 15 && cosine_s0 == 5;
  return {deterministic && complete && cosine_exact && cos0 == 1.0 && mi8 <= mi0,
          fmt("%s, %zu/15 MINE cells ok, cosine(s=0) = %.17g, MI s=0: %.4f nats, s=8: %.4f nats",
              deterministic ? "deterministic" : "NOT deterministic", mine_ok, cos0, mi0, mi8)};
}

}  // namespace

int main() {
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria{
      {"P1 encryption round trip", p1}, {"P2 linear law on uniform plane", p2},
      {"P3 plug-in oracle", p3},        {"P4 MINE Gaussian oracle", p4},
      {"P5 gradient correctness", p5},  {"P6 curve shapes on natural images", p6},
      {"P7 relative distance", p7},     {"P8 LKE1 round trip", p8},
      {"P9 builtin embedding sweep", p9},
  };
  int failed = 0;
  for (const auto& [name, run] : criteria) {
    Outcome out;
    try {
      out = run();
    } catch (const std::exception& e) {
      out = {false, std::string("exception: ") + e.what()};
    }
    std::printf("%s %s: %s\n", out.pass ? "PASS" : "FAIL", name, out.detail.c_str());
    std::fflush(stdout);
    failed += !out.pass;
  }
  std::printf("%d/%zu criteria passed\n", static_cast<int>(criteria.size()) - failed, criteria.size());
  return failed == 0 ? 0 : 1;
}
