// leakscope: selective bit-plane encryption and leakage estimation CLI.

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "leakscope/leakscope.hpp"

namespace ls = leakscope;

namespace {

struct CryptoArgs {
  std::string input;
  std::string output;
  std::string clear_output;
  int bits = 0;
  std::uint64_t seed = 0;
  std::string mode = "masked";
};

void add_crypto_flags(CLI::App* cmd, CryptoArgs& a) {
  cmd->add_option("--input", a.input, "Input image (PNG, PGM or PPM)")->required();
  cmd->add_option("--bits", a.bits, "Number of encrypted leading bits s")->required()->check(CLI::Range(0, 8));
  cmd->add_option("--seed", a.seed, "Keystream seed")->required();
  cmd->add_option("--mode", a.mode, "Clear-part convention")->check(CLI::IsMember({"masked", "shifted"}));
  cmd->add_option("--output", a.output, "Output image (PNG, PGM or PPM)")->required();
  cmd->add_option("--clear-output", a.clear_output, "Also write the clear part of the ciphertext");
}

void run_crypto(const CryptoArgs& a) {
  const ls::EncryptionParams params{a.bits, a.seed, ls::parse_shift_mode(a.mode)};
  const auto img = ls::read_image(a.input);
  const auto out = ls::encrypt_image(img, params);
  ls::write_image(a.output, out);
  if (!a.clear_output.empty()) {
    std::vector<ls::ImagePlane> clear;
    for (const auto& plane : ls::split_channels(out)) clear.push_back(ls::extract_clear(plane, params));
    ls::write_image(a.clear_output, ls::merge_channels(clear));
  }
}

struct TrainingArgs {
  std::size_t epochs = 100;
  std::size_t batch = 256;
  std::string hidden = "256,256";
  double lr = 1e-3;
  double ema = 0.01;
  std::uint64_t seed = 0;
  std::string units = "nats";
  std::string trace;
};

void add_training_flags(CLI::App* cmd, TrainingArgs& t) {
  cmd->add_option("--epochs", t.epochs, "Training epochs")->capture_default_str();
  cmd->add_option("--batch", t.batch, "Batch size")->capture_default_str();
  cmd->add_option("--hidden", t.hidden, "Hidden layer widths, comma separated")->capture_default_str();
  cmd->add_option("--lr", t.lr, "Adam learning rate")->capture_default_str();
  cmd->add_option("--ema", t.ema, "Moving-average rate of the bias correction")->capture_default_str();
  cmd->add_option("--seed", t.seed, "Sampling and training seed");
  cmd->add_option("--units", t.units, "Output units")->check(CLI::IsMember({"nats", "bits"}));
  cmd->add_option("--trace", t.trace, "Write the per-epoch trace CSV here");
}

std::vector<std::size_t> parse_widths(const std::string& text) {
  std::vector<std::size_t> out;
  std::stringstream in(text);
  std::string field;
  while (std::getline(in, field, ',')) {
    if (field.empty()) continue;
    try {
      out.push_back(static_cast<std::size_t>(std::stoul(field)));
    } catch (const std::exception&) {
      throw ls::InvalidArgument("bad hidden width '" + field + "'");
    }
  }
  return out;
}

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream in(text);
  std::string field;
  while (std::getline(in, field, ',')) {
    if (!field.empty()) out.push_back(field);
  }
  return out;
}

ls::MineConfig mine_config(const TrainingArgs& t) {
  ls::MineConfig cfg;
  cfg.epochs = t.epochs;
  cfg.batch_size = t.batch;
  cfg.hidden_dims = parse_widths(t.hidden);
  cfg.learning_rate = t.lr;
  cfg.ema_rate = t.ema;
  cfg.seed = t.seed;
  cfg.units = ls::parse_units(t.units);
  return cfg;
}

void report_trace(const ls::MineTrace& trace, const TrainingArgs& t) {
  if (!t.trace.empty()) ls::write_trace_csv(t.trace, trace.per_epoch_mi);
  std::printf("%.10g\n", trace.final_mi);
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Selective bit-plane encryption and information-leakage estimation"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(ls::kVersion));

  CryptoArgs enc_args, dec_args;
  auto* encrypt = app.add_subcommand("encrypt", "XOR the s most significant bit-planes with a keystream");
  add_crypto_flags(encrypt, enc_args);
  auto* decrypt = app.add_subcommand("decrypt", "Invert encrypt (same flags)");
  add_crypto_flags(decrypt, dec_args);

  auto* mi = app.add_subcommand("mi", "Mutual-information estimators");
  mi->require_subcommand(1);

  std::string hist_a, hist_b, hist_units = "bits";
  std::size_t hist_bins = 256;
  auto* hist = mi->add_subcommand("hist", "Plug-in MI between two co-located images");
  hist->add_option("--a", hist_a, "First image")->required();
  hist->add_option("--b", hist_b, "Second image")->required();
  hist->add_option("--bins", hist_bins, "Bins per axis (8-bit values are scaled onto them)")
      ->check(CLI::Range(1, 256))
      ->capture_default_str();
  hist->add_option("--units", hist_units, "Output units")->check(CLI::IsMember({"bits", "nats"}));

  std::string curve_input, curve_mode = "masked", curve_out;
  std::uint64_t curve_seed = 0;
  auto* curve = mi->add_subcommand("curve", "Histogram MI between an image and its clear part for s = 0..8");
  curve->add_option("--input", curve_input, "Input image")->required();
  curve->add_option("--seed", curve_seed, "Keystream seed")->required();
  curve->add_option("--mode", curve_mode, "Clear-part convention")->check(CLI::IsMember({"masked", "shifted"}));
  curve->add_option("--out", curve_out, "Output CSV")->required();

  std::string mine_a, mine_b;
  std::size_t mine_block = 8, mine_samples = 5000;
  TrainingArgs mine_train;
  auto* mine = mi->add_subcommand("mine", "MINE on co-located flattened pixel blocks");
  mine->add_option("--a", mine_a, "Original image")->required();
  mine->add_option("--b", mine_b, "Clear-part image")->required();
  mine->add_option("--block", mine_block, "Block side")->capture_default_str();
  mine->add_option("--samples", mine_samples, "Number of sampled block pairs")->capture_default_str();
  add_training_flags(mine, mine_train);

  std::string embed_a, embed_b;
  TrainingArgs embed_train;
  auto* mine_embed = mi->add_subcommand("mine-embed", "MINE on two patch-aligned embedding files");
  mine_embed->add_option("--a", embed_a, "Plain embeddings (.lke)")->required();
  mine_embed->add_option("--b", embed_b, "Encrypted embeddings (.lke)")->required();
  add_training_flags(mine_embed, embed_train);

  std::string reldist_traces, reldist_out;
  auto* reldist = mi->add_subcommand("reldist", "Relative distance to the maximum over trace CSVs");
  reldist->add_option("--traces", reldist_traces, "Comma separated trace CSVs")->required();
  reldist->add_option("--out", reldist_out, "Output CSV")->required();

  auto* embed = app.add_subcommand("embed", "Patch embeddings");
  embed->require_subcommand(1);
  std::string builtin_input, builtin_out, builtin_manifest;
  ls::PatchSpec builtin_spec;
  int builtin_s = 0;
  auto* builtin = embed->add_subcommand("builtin", "Embed random patches with the frozen built-in encoder");
  builtin->add_option("--input", builtin_input, "Input image")->required();
  builtin->add_option("--patches", builtin_spec.n_patches, "Number of patches")->capture_default_str();
  builtin->add_option("--patch-size", builtin_spec.patch_size, "Patch side")->capture_default_str();
  builtin->add_option("--seed", builtin_spec.seed, "Patch sampling and encoder seed");
  builtin->add_option("--s-level", builtin_s, "s level recorded in the metadata")->check(CLI::Range(0, 8));
  builtin->add_option("--out", builtin_out, "Output .lke file")->required();
  builtin->add_option("--manifest", builtin_manifest, "Also write the patch coordinate manifest (JSON)");

  std::string sim_a, sim_b;
  auto* sim = app.add_subcommand("sim", "Embedding similarity");
  sim->require_subcommand(1);
  auto* cosine = sim->add_subcommand("cosine", "Mean patch-wise cosine similarity of two embedding files");
  cosine->add_option("--a", sim_a, "First .lke file")->required();
  cosine->add_option("--b", sim_b, "Second .lke file")->required();

  std::string exp_config, exp_dataset, exp_output, exp_levels, exp_estimators;
  std::size_t exp_images = 0;
  std::uint64_t exp_seed_ks = 0, exp_seed_sampling = 0, exp_seed_training = 0;
  auto* experiment = app.add_subcommand("experiment", "Run an estimator sweep over a corpus");
  experiment->add_option("--config", exp_config, "TOML config (keys mirror the experiment config fields)");
  experiment->add_option("--dataset-dir", exp_dataset, "Image directory");
  experiment->add_option("--n-images", exp_images, "Number of images (largest first)");
  experiment->add_option("--s-levels", exp_levels, "Comma separated s levels");
  experiment->add_option("--estimators", exp_estimators, "Comma separated estimator names");
  auto* opt_ks = experiment->add_option("--seed-keystream", exp_seed_ks, "Keystream seed");
  auto* opt_sampling = experiment->add_option("--seed-sampling", exp_seed_sampling, "Sampling seed");
  auto* opt_training = experiment->add_option("--seed-training", exp_seed_training, "Training seed");
  experiment->add_option("--output-dir", exp_output, "Output directory");

  std::string synth_out;
  std::size_t synth_count = 5, synth_width = 256, synth_height = 256;
  std::uint64_t synth_seed = 0;
  auto* synth = app.add_subcommand("synth", "Write a synthetic test corpus (noise, gradients, checkerboards)");
  synth->add_option("--out", synth_out, "Output directory")->required();
  synth->add_option("--count", synth_count, "Number of images")->capture_default_str();
  synth->add_option("--width", synth_width, "Image width")->capture_default_str();
  synth->add_option("--height", synth_height, "Image height")->capture_default_str();
  synth->add_option("--seed", synth_seed, "Generator seed");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*encrypt) {
      run_crypto(enc_args);
    } else if (*decrypt) {
      run_crypto(dec_args);
    } else if (*hist) {
      const auto a = ls::read_gray(hist_a);
      const auto b = ls::read_gray(hist_b);
      if (a.width() != b.width() || a.height() != b.height()) throw ls::InvalidArgument("images differ in size");
      std::vector<std::size_t> ua(a.area()), ub(b.area());
      for (std::size_t i = 0; i < a.area(); ++i) {
        ua[i] = a.pixels()[i] * hist_bins / 256;
        ub[i] = b.pixels()[i] * hist_bins / 256;
      }
      const auto h = ls::build_joint_histogram(std::span<const std::size_t>(ua), std::span<const std::size_t>(ub),
                                               hist_bins, hist_bins);
      const auto est = ls::mutual_information_plugin(h, ls::parse_units(hist_units));
      const nlohmann::json out{{"value", est.value},
                               {"units", ls::to_string(est.units)},
                               {"estimator", ls::to_string(est.estimator)},
                               {"sample_count", est.sample_count}};
      std::cout << out.dump() << '\n';
    } else if (*curve) {
      const auto img = ls::read_gray(curve_input);
      const auto points = ls::pixel_mi_curve(img, curve_seed, ls::parse_shift_mode(curve_mode));
      std::ofstream out(curve_out, std::ios::binary);
      if (!out) throw ls::Error("cannot write " + curve_out);
      out << "s,mi_bits,upper_bound_bits,sample_count\n";
      for (const auto& p : points) {
        out << p.bits << ',' << fmt(p.mi.value) << ',' << fmt(p.upper_bound) << ',' << p.mi.sample_count << '\n';
      }
    } else if (*mine) {
      const auto a = ls::read_gray(mine_a);
      const auto b = ls::read_gray(mine_b);
      const auto samples = ls::sample_pixel_pairs(a, b, mine_block, mine_samples, mine_train.seed);
      report_trace(ls::estimate_mi<float>(samples, mine_config(mine_train)), mine_train);
    } else if (*mine_embed) {
      const auto a = ls::read_embeddings(embed_a);
      const auto b = ls::read_embeddings(embed_b);
      if (a.size() != b.size()) throw ls::InvalidArgument("embedding files hold different patch counts");
      const auto samples = ls::SamplePairSet::from_vectors(a.vectors, b.vectors);
      report_trace(ls::estimate_mi<float>(samples, mine_config(embed_train)), embed_train);
    } else if (*reldist) {
      std::vector<ls::LabeledSeries> series;
      std::vector<std::string> labels;
      for (const auto& path : split_list(reldist_traces)) {
        series.push_back({static_cast<int>(series.size()), ls::read_trace_csv(path)});
        labels.push_back(std::filesystem::path(path).stem().string());
      }
      const auto rel = ls::relative_distance_to_max(series);
      std::ofstream out(reldist_out, std::ios::binary);
      if (!out) throw ls::Error("cannot write " + reldist_out);
      out << "trace,epoch,reldist\n";
      for (std::size_t i = 0; i < rel.size(); ++i) {
        for (std::size_t e = 0; e < rel[i].values.size(); ++e) {
          out << labels[i] << ',' << (e + 1) << ',' << fmt(rel[i].values[e]) << '\n';
        }
      }
    } else if (*builtin) {
      const auto raw = ls::read_image(builtin_input);
      const auto channels = ls::split_channels(raw);
      const auto coords = ls::sample_patch_coords(raw.width, raw.height, builtin_spec);
      const ls::BuiltinEncoder encoder(builtin_spec.seed);
      const auto set = ls::embed_patches(ls::extract_patches(channels, coords), encoder, builtin_input, builtin_s,
                                         builtin_spec.patch_size);
      ls::write_embeddings(set, builtin_out);
      if (!builtin_manifest.empty()) {
        const std::vector<ls::ManifestEntry> entries{{builtin_input, coords}};
        std::ofstream out(builtin_manifest, std::ios::binary);
        out << ls::coordinate_manifest(builtin_spec, entries).dump(2) << '\n';
        if (!out) throw ls::Error("cannot write " + builtin_manifest);
      }
    } else if (*cosine) {
      const auto a = ls::read_embeddings(sim_a);
      const auto b = ls::read_embeddings(sim_b);
      const nlohmann::json out{{"mean_cosine", ls::mean_patch_similarity(a, b)}, {"n", a.size()}};
      std::cout << out.dump() << '\n';
    } else if (*experiment) {
      ls::ExperimentConfig cfg;
      if (!exp_config.empty()) {
        std::ifstream in(exp_config);
        if (!in) throw ls::Error("cannot open " + exp_config);
        std::stringstream ss;
        ss << in.rdbuf();
        cfg = ls::experiment_config_from_json(ls::parse_toml_subset(ss.str()));
      }
      if (!exp_dataset.empty()) cfg.dataset_dir = exp_dataset;
      if (!exp_output.empty()) cfg.output_dir = exp_output;
      if (exp_images > 0) cfg.n_images = exp_images;
      if (!exp_levels.empty()) {
        cfg.s_levels.clear();
        for (const auto& s : split_list(exp_levels)) cfg.s_levels.push_back(std::stoi(s));
      }
      if (!exp_estimators.empty()) {
        cfg.estimators.clear();
        for (const auto& e : split_list(exp_estimators)) cfg.estimators.push_back(ls::parse_estimator(e));
      }
      if (*opt_ks) cfg.seeds.keystream = exp_seed_ks;
      if (*opt_sampling) cfg.seeds.sampling = exp_seed_sampling;
      if (*opt_training) cfg.seeds.training = exp_seed_training;
      if (cfg.dataset_dir.empty()) throw ls::InvalidArgument("dataset_dir is required");
      const auto result = ls::run_sweep(cfg, [](const ls::CellResult& c) {
        std::fprintf(stderr, "%s %s s=%d %s\n", c.image.c_str(), ls::to_string(c.estimator).c_str(), c.s,
                     c.ok ? fmt(c.value).c_str() : ("failed: " + c.reason).c_str());
      });
      ls::emit_reports(result, cfg.output_dir);
      std::fprintf(stderr, "%zu cells, %zu failures, reports in %s\n", result.cells.size(), result.failures().size(),
                   cfg.output_dir.string().c_str());
    } else if (*synth) {
      for (const auto& p : ls::generate_synthetic_corpus(synth_out, synth_count, synth_width, synth_height, synth_seed)) {
        std::cout << p.string() << '\n';
      }
    }
  } catch (const ls::Error& e) {
    std::fprintf(stderr, "leakscope: %s\n", e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "leakscope: %s\n", e.what());
    return 1;
  }
  return 0;
}
