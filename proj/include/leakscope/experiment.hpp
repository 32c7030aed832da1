#pragma once

// End-to-end sweep: pick the largest images of a corpus, encrypt each at every
// s level, run the selected estimators on the same ciphertext and write
// plot-ready CSV/JSON.

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include "leakscope/bitplane.hpp"
#include "leakscope/embedding.hpp"
#include "leakscope/error.hpp"
#include "leakscope/histogram.hpp"
#include "leakscope/image.hpp"
#include "leakscope/image_io.hpp"
#include "leakscope/mine.hpp"
#include "leakscope/random.hpp"
#include "leakscope/version.hpp"

namespace leakscope {

enum class EstimatorId {
  HistPixel,
  MinePixel,
  MineEmbedBuiltin,
  MineEmbedIngested,
  CosineEmbed,
  HistEmbedRounded,
};

inline const std::vector<std::pair<EstimatorId, const char*>>& estimator_names() {
  static const std::vector<std::pair<EstimatorId, const char*>> names{
      {EstimatorId::HistPixel, "HistPixel"},
      {EstimatorId::MinePixel, "MinePixel"},
      {EstimatorId::MineEmbedBuiltin, "MineEmbedBuiltin"},
      {EstimatorId::MineEmbedIngested, "MineEmbedIngested"},
      {EstimatorId::CosineEmbed, "CosineEmbed"},
      {EstimatorId::HistEmbedRounded, "HistEmbedRounded"},
  };
  return names;
}

inline std::string to_string(EstimatorId id) {
  for (const auto& [e, name] : estimator_names()) {
    if (e == id) return name;
  }
  return "?";
}

inline EstimatorId parse_estimator(const std::string& text) {
  for (const auto& [e, name] : estimator_names()) {
    if (text == name) return e;
  }
  throw InvalidArgument("unknown estimator '" + text + "'");
}

// Histogram curves are in bits, MINE curves in nats.
inline std::string estimator_units(EstimatorId id) {
  switch (id) {
    case EstimatorId::HistPixel:
    case EstimatorId::HistEmbedRounded: return "bits";
    case EstimatorId::CosineEmbed: return "cosine";
    default: return "nats";
  }
}

inline bool is_mine(EstimatorId id) {
  return id == EstimatorId::MinePixel || id == EstimatorId::MineEmbedBuiltin ||
         id == EstimatorId::MineEmbedIngested;
}

struct SeedSet {
  std::uint64_t keystream = 1;
  std::uint64_t sampling = 2;
  std::uint64_t training = 3;
};

struct ExperimentConfig {
  std::filesystem::path dataset_dir;
  std::size_t n_images = 100;
  std::string selection = "LargestByResolution";
  std::vector<int> s_levels{0, 1, 2, 3, 4, 5, 6, 7, 8};
  std::vector<EstimatorId> estimators{EstimatorId::HistPixel};
  SeedSet seeds;
  std::filesystem::path output_dir = "results";

  // MINE on pixels: flattened block x block windows.
  MineConfig mine;  // seed is replaced by seeds.training
  std::size_t block = 8;
  std::size_t samples = 5000;
  ShiftMode pixel_mode = ShiftMode::ShiftedHigh;

  // Embedding estimators.
  PatchSpec patches;  // seed is replaced by a per-image draw from seeds.sampling
  ShiftMode embed_mode = ShiftMode::ShiftedHigh;
  double round_scale = 10.0;
  // When set, CosineEmbed and HistEmbedRounded read ingested embeddings
  // (<stem>_plain.lke, <stem>_s<S>.lke) instead of running the built-in encoder.
  std::filesystem::path embeddings_dir;

  void validate() const {
    if (n_images < 1) throw InvalidArgument("n_images must be at least 1");
    if (selection != "LargestByResolution") throw InvalidArgument("unknown selection rule '" + selection + "'");
    if (s_levels.empty()) throw InvalidArgument("s_levels is empty");
    for (std::size_t i = 0; i < s_levels.size(); ++i) {
      if (s_levels[i] < 0 || s_levels[i] > 8) throw InvalidArgument("s levels must lie in [0, 8]");
      if (i > 0 && s_levels[i] <= s_levels[i - 1]) throw InvalidArgument("s levels must be sorted and unique");
    }
    if (estimators.empty()) throw InvalidArgument("no estimators selected");
    const std::set<EstimatorId> unique(estimators.begin(), estimators.end());
    if (unique.size() != estimators.size()) throw InvalidArgument("estimator listed twice");
    if (unique.count(EstimatorId::MineEmbedIngested) && embeddings_dir.empty()) {
      throw InvalidArgument("MineEmbedIngested needs embeddings_dir");
    }
    mine.validate();
    patches.validate();
    if (block < 1) throw InvalidArgument("block must be at least 1");
    if (samples < mine.batch_size) throw InvalidArgument("samples must be at least the batch size");
    if (!(round_scale > 0.0)) throw InvalidArgument("round_scale must be positive");
  }
};

// --- config <-> JSON ---------------------------------------------------------

inline nlohmann::json to_json(const ExperimentConfig& cfg) {
  nlohmann::json est = nlohmann::json::array();
  for (auto e : cfg.estimators) est.push_back(to_string(e));
  return {
      {"dataset_dir", cfg.dataset_dir.string()},
      {"n_images", cfg.n_images},
      {"selection", cfg.selection},
      {"s_levels", cfg.s_levels},
      {"estimators", est},
      {"seeds", {{"keystream", cfg.seeds.keystream}, {"sampling", cfg.seeds.sampling}, {"training", cfg.seeds.training}}},
      {"output_dir", cfg.output_dir.string()},
      {"mine",
       {{"epochs", cfg.mine.epochs},
        {"batch_size", cfg.mine.batch_size},
        {"learning_rate", cfg.mine.learning_rate},
        {"hidden_dims", cfg.mine.hidden_dims},
        {"ema_rate", cfg.mine.ema_rate},
        {"block", cfg.block},
        {"samples", cfg.samples},
        {"mode", to_string(cfg.pixel_mode)}}},
      {"patches",
       {{"patch_size", cfg.patches.patch_size},
        {"n_patches", cfg.patches.n_patches},
        {"mode", to_string(cfg.embed_mode)},
        {"round_scale", cfg.round_scale},
        {"embeddings_dir", cfg.embeddings_dir.string()}}},
  };
}

namespace detail {

template <typename T>
void read_key(const nlohmann::json& obj, const char* key, T& out) {
  if (!obj.contains(key)) return;
  try {
    out = obj.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw InvalidArgument(std::string("config key '") + key + "' has the wrong type");
  }
}

inline void reject_unknown(const nlohmann::json& obj, std::initializer_list<const char*> known,
                           const std::string& where) {
  if (!obj.is_object()) throw InvalidArgument(where + " must be a table");
  for (const auto& [key, value] : obj.items()) {
    if (std::none_of(known.begin(), known.end(), [&](const char* k) { return key == k; })) {
      throw InvalidArgument("unknown config key '" + key + "' in " + where);
    }
  }
}

}  // namespace detail

// Missing keys keep their defaults; unknown keys are rejected. Value ranges
// are checked by ExperimentConfig::validate once overrides are applied.
inline ExperimentConfig experiment_config_from_json(const nlohmann::json& j) {
  detail::reject_unknown(j, {"dataset_dir", "n_images", "selection", "s_levels", "estimators", "seeds", "output_dir",
                             "mine", "patches"},
                         "config");
  ExperimentConfig cfg;
  std::string path;
  if (j.contains("dataset_dir")) {
    detail::read_key(j, "dataset_dir", path);
    cfg.dataset_dir = path;
  }
  if (j.contains("output_dir")) {
    detail::read_key(j, "output_dir", path);
    cfg.output_dir = path;
  }
  detail::read_key(j, "n_images", cfg.n_images);
  detail::read_key(j, "selection", cfg.selection);
  detail::read_key(j, "s_levels", cfg.s_levels);
  if (j.contains("estimators")) {
    std::vector<std::string> names;
    detail::read_key(j, "estimators", names);
    cfg.estimators.clear();
    for (const auto& n : names) cfg.estimators.push_back(parse_estimator(n));
  }
  if (j.contains("seeds")) {
    const auto& s = j.at("seeds");
    detail::reject_unknown(s, {"keystream", "sampling", "training"}, "[seeds]");
    detail::read_key(s, "keystream", cfg.seeds.keystream);
    detail::read_key(s, "sampling", cfg.seeds.sampling);
    detail::read_key(s, "training", cfg.seeds.training);
  }
  if (j.contains("mine")) {
    const auto& m = j.at("mine");
    detail::reject_unknown(m, {"epochs", "batch_size", "learning_rate", "hidden_dims", "ema_rate", "block", "samples", "mode"},
                           "[mine]");
    detail::read_key(m, "epochs", cfg.mine.epochs);
    detail::read_key(m, "batch_size", cfg.mine.batch_size);
    detail::read_key(m, "learning_rate", cfg.mine.learning_rate);
    detail::read_key(m, "hidden_dims", cfg.mine.hidden_dims);
    detail::read_key(m, "ema_rate", cfg.mine.ema_rate);
    detail::read_key(m, "block", cfg.block);
    detail::read_key(m, "samples", cfg.samples);
    if (m.contains("mode")) {
      std::string mode;
      detail::read_key(m, "mode", mode);
      cfg.pixel_mode = parse_shift_mode(mode);
    }
  }
  if (j.contains("patches")) {
    const auto& p = j.at("patches");
    detail::reject_unknown(p, {"patch_size", "n_patches", "mode", "round_scale", "embeddings_dir"}, "[patches]");
    detail::read_key(p, "patch_size", cfg.patches.patch_size);
    detail::read_key(p, "n_patches", cfg.patches.n_patches);
    detail::read_key(p, "round_scale", cfg.round_scale);
    if (p.contains("mode")) {
      std::string mode;
      detail::read_key(p, "mode", mode);
      cfg.embed_mode = parse_shift_mode(mode);
    }
    if (p.contains("embeddings_dir")) {
      detail::read_key(p, "embeddings_dir", path);
      cfg.embeddings_dir = path;
    }
  }
  return cfg;
}

// --- dataset ----------------------------------------------------------------

struct DatasetImage {
  std::filesystem::path path;
  std::size_t width = 0;
  std::size_t height = 0;
  std::size_t area() const noexcept { return width * height; }
};

// Largest n decodable images by area; equal areas fall back to filename order.
inline std::vector<DatasetImage> select_dataset(const std::filesystem::path& dir, std::size_t n,
                                                const std::string& selection = "LargestByResolution") {
  if (selection != "LargestByResolution") throw InvalidArgument("unknown selection rule '" + selection + "'");
  if (!std::filesystem::is_directory(dir)) throw InvalidArgument("dataset directory not found: " + dir.string());
  std::vector<DatasetImage> found;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (!entry.is_regular_file() || !is_image_path(entry.path())) continue;
    try {
      const auto img = read_image(entry.path());
      require_8bit(img);
      found.push_back({entry.path(), img.width, img.height});
    } catch (const Error&) {
      // Undecodable files are not candidates.
    }
  }
  std::sort(found.begin(), found.end(), [](const DatasetImage& a, const DatasetImage& b) {
    if (a.area() != b.area()) return a.area() > b.area();
    return a.path.filename().string() < b.path.filename().string();
  });
  if (found.size() < n) {
    throw InvalidArgument("found " + std::to_string(found.size()) + " decodable images in " + dir.string() +
                          ", need " + std::to_string(n));
  }
  found.resize(n);
  return found;
}

enum class SyntheticKind { Uniform, Gradient, Checkerboard, Waves, NoisyGradient };

inline ImagePlane synthetic_plane(SyntheticKind kind, std::size_t width, std::size_t height, std::uint64_t seed) {
  Rng rng(seed);
  ImagePlane img(width, height);
  for (std::size_t r = 0; r < height; ++r) {
    for (std::size_t c = 0; c < width; ++c) {
      double v = 0.0;
      switch (kind) {
        case SyntheticKind::Uniform: v = static_cast<double>(uniform_index(rng, 256)); break;
        case SyntheticKind::Gradient: v = 255.0 * static_cast<double>(c + r) / static_cast<double>(width + height - 2 + 1); break;
        case SyntheticKind::Checkerboard: v = ((r / 8 + c / 8) % 2) ? 220.0 : 35.0; break;
        case SyntheticKind::Waves:
          v = 127.5 + 100.0 * std::sin(static_cast<double>(c) * 0.11) * std::cos(static_cast<double>(r) * 0.07) +
              20.0 * (uniform_unit(rng) - 0.5);
          break;
        case SyntheticKind::NoisyGradient:
          v = 200.0 * static_cast<double>(r) / static_cast<double>(height) + 55.0 * uniform_unit(rng);
          break;
      }
      img(r, c) = static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
    }
  }
  return img;
}

// Writes `count` grayscale PNGs cycling through the synthetic kinds (or
// only `only` when given). Returns the written paths.
inline std::vector<std::filesystem::path> generate_synthetic_corpus(const std::filesystem::path& dir, std::size_t count,
                                                                    std::size_t width, std::size_t height,
                                                                    std::uint64_t seed,
                                                                    std::optional<SyntheticKind> only = std::nullopt) {
  static constexpr SyntheticKind kKinds[] = {SyntheticKind::Uniform, SyntheticKind::Gradient, SyntheticKind::Checkerboard,
                                             SyntheticKind::Waves, SyntheticKind::NoisyGradient};
  std::filesystem::create_directories(dir);
  std::vector<std::filesystem::path> paths;
  std::uint64_t state = seed;
  for (std::size_t i = 0; i < count; ++i) {
    const auto kind = only.value_or(kKinds[i % std::size(kKinds)]);
    char name[32];
    std::snprintf(name, sizeof name, "synthetic_%03zu.png", i);
    const auto path = dir / name;
    write_gray(path, synthetic_plane(kind, width, height, splitmix64(state)));
    paths.push_back(path);
  }
  return paths;
}

// --- sweep ------------------------------------------------------------------

struct CellResult {
  std::string image;
  EstimatorId estimator = EstimatorId::HistPixel;
  int s = 0;
  bool ok = false;
  double value = 0.0;
  std::string reason;
  std::vector<double> trace;
};

struct CurveRow {
  EstimatorId estimator;
  int s = 0;
  double mean = 0.0;
  double std = 0.0;
  std::size_t n = 0;
};

struct TraceRow {
  EstimatorId estimator;
  int s = 0;
  std::vector<double> mean_mi;  // per epoch
};

struct ExperimentResult {
  ExperimentConfig config;
  std::vector<std::string> images;
  std::vector<CellResult> cells;
  std::vector<CurveRow> curve;
  std::vector<TraceRow> traces;

  std::vector<const CellResult*> failures() const {
    std::vector<const CellResult*> out;
    for (const auto& c : cells) {
      if (!c.ok) out.push_back(&c);
    }
    return out;
  }
};

namespace detail {

inline std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::string csv_safe(std::string text) {
  for (auto& ch : text) {
    if (ch == ',' || ch == '\n' || ch == '\r' || ch == '"') ch = ';';
  }
  return text;
}

inline std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream in(line);
  while (std::getline(in, field, sep)) out.push_back(field);
  if (!line.empty() && line.back() == sep) out.emplace_back();
  return out;
}

inline std::uint64_t derive_seed(std::uint64_t base, std::size_t index) {
  std::uint64_t state = base ^ (0xD1B54A32D192ED03ull * (static_cast<std::uint64_t>(index) + 1));
  return splitmix64(state);
}

using CellKey = std::tuple<std::string, std::string, int>;

// Incremental per-cell log so an interrupted sweep can resume.
class CellLog {
 public:
  CellLog(const std::filesystem::path& dir, const std::string& fingerprint) : dir_(dir) {
    std::filesystem::create_directories(dir);
    const auto state_path = dir / "sweep_state.json";
    bool resume = false;
    if (std::filesystem::exists(state_path)) {
      std::ifstream in(state_path);
      std::stringstream ss;
      ss << in.rdbuf();
      resume = ss.str() == fingerprint;
    }
    if (resume) {
      load();
    } else {
      std::ofstream(state_path, std::ios::binary) << fingerprint;
      std::ofstream(dir / "cells.csv", std::ios::binary) << "image,estimator,s,status,value,reason\n";
      std::ofstream(dir / "cell_traces.csv", std::ios::binary) << "image,estimator,s,epoch,mi\n";
    }
  }

  const CellResult* find(const std::string& image, EstimatorId e, int s) const {
    const auto it = done_.find({image, to_string(e), s});
    return it == done_.end() ? nullptr : &it->second;
  }

  void append(const CellResult& c) {
    std::ofstream cells(dir_ / "cells.csv", std::ios::binary | std::ios::app);
    cells << csv_safe(c.image) << ',' << to_string(c.estimator) << ',' << c.s << ',' << (c.ok ? "ok" : "failed") << ','
          << (c.ok ? fmt_double(c.value) : "") << ',' << csv_safe(c.reason) << '\n';
    if (!c.trace.empty()) {
      std::ofstream traces(dir_ / "cell_traces.csv", std::ios::binary | std::ios::app);
      for (std::size_t e = 0; e < c.trace.size(); ++e) {
        traces << csv_safe(c.image) << ',' << to_string(c.estimator) << ',' << c.s << ',' << (e + 1) << ','
               << fmt_double(c.trace[e]) << '\n';
      }
    }
    done_[{c.image, to_string(c.estimator), c.s}] = c;
  }

 private:
  void load() {
    std::ifstream cells(dir_ / "cells.csv");
    std::string line;
    std::getline(cells, line);
    while (std::getline(cells, line)) {
      const auto f = split(line, ',');
      if (f.size() != 6) continue;
      CellResult c;
      c.image = f[0];
      c.estimator = parse_estimator(f[1]);
      c.s = std::stoi(f[2]);
      c.ok = f[3] == "ok";
      if (c.ok) c.value = std::stod(f[4]);
      c.reason = f[5];
      done_[{c.image, f[1], c.s}] = std::move(c);
    }
    std::ifstream traces(dir_ / "cell_traces.csv");
    std::getline(traces, line);
    while (std::getline(traces, line)) {
      const auto f = split(line, ',');
      if (f.size() != 5) continue;
      const auto it = done_.find({f[0], f[1], std::stoi(f[2])});
      if (it != done_.end()) it->second.trace.push_back(std::stod(f[4]));
    }
  }

  std::filesystem::path dir_;
  std::map<CellKey, CellResult> done_;
};

inline std::optional<EmbeddingSet> try_read_embeddings(const std::filesystem::path& path, std::string& reason) {
  try {
    return read_embeddings(path);
  } catch (const Error& e) {
    reason = path.filename().string() + ": " + e.what();
    return std::nullopt;
  }
}

}  // namespace detail

inline double mean_of(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

// Sample standard deviation (n - 1); zero for fewer than two values.
inline double std_of(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double m = mean_of(v);
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

// Means over images that succeeded, per (estimator, s) and per epoch.
inline void aggregate(ExperimentResult& result) {
  result.curve.clear();
  result.traces.clear();
  for (auto e : result.config.estimators) {
    for (int s : result.config.s_levels) {
      std::vector<double> values;
      std::vector<const std::vector<double>*> traces;
      for (const auto& c : result.cells) {
        if (c.estimator != e || c.s != s || !c.ok) continue;
        values.push_back(c.value);
        if (!c.trace.empty()) traces.push_back(&c.trace);
      }
      result.curve.push_back({e, s, mean_of(values), std_of(values), values.size()});
      if (!traces.empty()) {
        TraceRow row{e, s, std::vector<double>(traces.front()->size(), 0.0)};
        for (const auto* t : traces) {
          for (std::size_t k = 0; k < row.mean_mi.size() && k < t->size(); ++k) row.mean_mi[k] += (*t)[k];
        }
        for (auto& v : row.mean_mi) v /= static_cast<double>(traces.size());
        result.traces.push_back(std::move(row));
      }
    }
  }
}

using ProgressFn = std::function<void(const CellResult&)>;

inline ExperimentResult run_sweep(const ExperimentConfig& cfg, const ProgressFn& progress = {}) {
  cfg.validate();
  const auto dataset = select_dataset(cfg.dataset_dir, cfg.n_images, cfg.selection);
  const std::set<EstimatorId> wanted(cfg.estimators.begin(), cfg.estimators.end());
  const auto uses = [&](EstimatorId e) { return wanted.count(e) > 0; };
  const bool ingested_metrics = !cfg.embeddings_dir.empty();
  const bool needs_builtin = uses(EstimatorId::MineEmbedBuiltin) ||
                             (!ingested_metrics && (uses(EstimatorId::CosineEmbed) || uses(EstimatorId::HistEmbedRounded)));

  ExperimentResult result;
  result.config = cfg;
  detail::CellLog log(cfg.output_dir, to_json(cfg).dump(2));
  const BuiltinEncoder encoder(cfg.seeds.sampling);

  for (std::size_t index = 0; index < dataset.size(); ++index) {
    const auto& item = dataset[index];
    const std::string name = item.path.filename().string();
    const std::string stem = item.path.stem().string();
    result.images.push_back(name);

    const auto record = [&](CellResult cell) {
      log.append(cell);
      if (progress) progress(cell);
      result.cells.push_back(std::move(cell));
    };

    bool all_done = true;
    for (int s : cfg.s_levels)
      for (auto e : cfg.estimators)
        if (const auto* done = log.find(name, e, s)) {
          result.cells.push_back(*done);
        } else {
          all_done = false;
        }
    if (all_done) continue;
    // Partially finished images are recomputed cell by cell below.
    std::erase_if(result.cells, [&](const CellResult& c) { return c.image == name; });

    std::optional<RawImage> raw;
    std::string load_error;
    try {
      raw = read_image(item.path);
      require_8bit(*raw);
    } catch (const Error& e) {
      load_error = e.what();
    }

    std::optional<ImagePlane> gray;
    std::vector<ImagePlane> channels;
    std::vector<PatchCoord> coords;
    std::optional<EmbeddingSet> plain_builtin;
    std::string prep_error = load_error;
    const std::uint64_t keystream_seed = detail::derive_seed(cfg.seeds.keystream, index);
    const std::uint64_t sampling_seed = detail::derive_seed(cfg.seeds.sampling, index);
    if (raw) {
      gray = to_grayscale(*raw);
      channels = split_channels(*raw);
      if (needs_builtin) {
        try {
          PatchSpec spec = cfg.patches;
          spec.seed = sampling_seed;
          coords = sample_patch_coords(raw->width, raw->height, spec);
          plain_builtin = embed_patches(extract_patches(channels, coords), encoder, name, 0, spec.patch_size);
        } catch (const Error& e) {
          prep_error = e.what();
        }
      }
    }

    std::optional<EmbeddingSet> plain_ingested;
    std::string ingest_error;
    if (ingested_metrics) {
      plain_ingested = detail::try_read_embeddings(cfg.embeddings_dir / (stem + "_plain.lke"), ingest_error);
    }

    for (int s : cfg.s_levels) {
      const EncryptionParams base{s, keystream_seed, ShiftMode::MaskedLow};
      // One keystream draw per (image, s) and representation: every pixel
      // estimator sees the same gray ciphertext, every embedding estimator
      // the same multi-channel ciphertext.
      std::optional<ImagePlane> gray_cipher;
      std::optional<EmbeddingSet> clear_builtin;
      std::optional<EmbeddingSet> clear_ingested;
      std::string clear_ingest_error = ingest_error;
      if (gray) gray_cipher = encrypt(*gray, base);
      if (plain_builtin) {
        EncryptionParams p = base;
        p.mode = cfg.embed_mode;
        std::vector<ImagePlane> clear_channels;
        for (const auto& c : encrypt_planes(channels, p)) clear_channels.push_back(extract_clear(c, p));
        clear_builtin = embed_patches(extract_patches(clear_channels, coords), encoder, name, s, cfg.patches.patch_size);
      }
      if (ingested_metrics && plain_ingested) {
        clear_ingested = detail::try_read_embeddings(cfg.embeddings_dir / (stem + "_s" + std::to_string(s) + ".lke"),
                                                     clear_ingest_error);
      }

      for (auto e : cfg.estimators) {
        if (log.find(name, e, s)) {
          result.cells.push_back(*log.find(name, e, s));
          continue;
        }
        CellResult cell{name, e, s, false, 0.0, {}, {}};
        try {
          const auto need_builtin = [&]() -> std::pair<const EmbeddingSet&, const EmbeddingSet&> {
            if (!plain_builtin || !clear_builtin) throw Error(prep_error.empty() ? "no builtin embeddings" : prep_error);
            return {*plain_builtin, *clear_builtin};
          };
          const auto need_ingested = [&]() -> std::pair<const EmbeddingSet&, const EmbeddingSet&> {
            if (!plain_ingested || !clear_ingested) throw Error(clear_ingest_error);
            if (plain_ingested->size() != clear_ingested->size() || plain_ingested->dim != clear_ingested->dim) {
              throw Error("ingested plain and encrypted sets are not aligned");
            }
            return {*plain_ingested, *clear_ingested};
          };
          const auto run_mine = [&](const SamplePairSet& samples) {
            MineConfig mc = cfg.mine;
            mc.seed = cfg.seeds.training;
            mc.units = Units::Nats;
            mc.batch_size = std::min(mc.batch_size, samples.size());
            const auto trace = estimate_mi<float>(samples, mc);
            cell.value = trace.final_mi;
            cell.trace = trace.per_epoch_mi;
          };
          const auto embedding_pair = [&]() {
            return ingested_metrics ? need_ingested() : need_builtin();
          };

          if (!gray_cipher) throw Error(load_error);
          switch (e) {
            case EstimatorId::HistPixel: {
              EncryptionParams p = base;
              p.mode = ShiftMode::MaskedLow;
              if (gray->area() < kMinCurveArea) {
                throw InvalidArgument("image area " + std::to_string(gray->area()) + " is below the minimum of " +
                                      std::to_string(kMinCurveArea) + " pixels");
              }
              cell.value = mutual_information_plugin(pixel_histogram(*gray, extract_clear(*gray_cipher, p))).value;
              break;
            }
            case EstimatorId::MinePixel: {
              EncryptionParams p = base;
              p.mode = cfg.pixel_mode;
              run_mine(sample_pixel_pairs(*gray, extract_clear(*gray_cipher, p), cfg.block, cfg.samples,
                                          sampling_seed));
              break;
            }
            case EstimatorId::MineEmbedBuiltin: {
              const auto [plain, clear] = need_builtin();
              run_mine(SamplePairSet::from_vectors(plain.vectors, clear.vectors));
              break;
            }
            case EstimatorId::MineEmbedIngested: {
              const auto [plain, clear] = need_ingested();
              run_mine(SamplePairSet::from_vectors(plain.vectors, clear.vectors));
              break;
            }
            case EstimatorId::CosineEmbed: {
              const auto [plain, clear] = embedding_pair();
              cell.value = mean_patch_similarity(plain, clear);
              break;
            }
            case EstimatorId::HistEmbedRounded: {
              const auto [plain, clear] = embedding_pair();
              cell.value = pooled_rounded_mi(discretize_round(plain.vectors, cfg.round_scale),
                                             discretize_round(clear.vectors, cfg.round_scale))
                               .value;
              break;
            }
          }
          cell.ok = true;
        } catch (const Error& err) {
          cell.ok = false;
          cell.reason = err.what();
          cell.trace.clear();
        }
        record(std::move(cell));
      }
    }
  }
  aggregate(result);
  return result;
}

// --- reports ----------------------------------------------------------------

inline void emit_reports(const ExperimentResult& result, const std::filesystem::path& dir) {
  if (result.cells.empty()) throw InvalidArgument("nothing to report");
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  const auto open = [&](const char* name) {
    std::ofstream out(dir / name, std::ios::binary);
    if (!out) throw Error("cannot write " + (dir / name).string());
    return out;
  };

  {
    auto out = open("curve.csv");
    out << "estimator,units,s,mean,std,n\n";
    for (const auto& r : result.curve) {
      // No successful images: mean and std are left empty.
      out << to_string(r.estimator) << ',' << estimator_units(r.estimator) << ',' << r.s << ','
          << (r.n ? detail::fmt_double(r.mean) : "") << ',' << (r.n ? detail::fmt_double(r.std) : "") << ',' << r.n
          << '\n';
    }
  }
  {
    auto out = open("traces.csv");
    out << "estimator,units,s,epoch,mean_mi\n";
    for (const auto& t : result.traces) {
      for (std::size_t e = 0; e < t.mean_mi.size(); ++e) {
        out << to_string(t.estimator) << ',' << estimator_units(t.estimator) << ',' << t.s << ',' << (e + 1) << ','
            << detail::fmt_double(t.mean_mi[e]) << '\n';
      }
    }
  }
  {
    auto out = open("reldist.csv");
    out << "estimator,units,s,epoch,reldist\n";
    for (auto e : result.config.estimators) {
      std::vector<LabeledSeries> series;
      for (const auto& t : result.traces) {
        if (t.estimator == e) series.push_back({t.s, t.mean_mi});
      }
      if (series.empty()) continue;
      for (const auto& r : relative_distance_to_max(series)) {
        for (std::size_t k = 0; k < r.values.size(); ++k) {
          out << to_string(e) << ',' << estimator_units(e) << ',' << r.bits << ',' << (k + 1) << ','
              << detail::fmt_double(r.values[k]) << '\n';
        }
      }
    }
  }
  {
    nlohmann::json failures = nlohmann::json::array();
    for (const auto* f : result.failures()) {
      failures.push_back({{"image", f->image}, {"estimator", to_string(f->estimator)}, {"s", f->s}, {"reason", f->reason}});
    }
    const nlohmann::json run{
        {"artifact", "leakscope"},
        {"version", kVersion},
        {"config", to_json(result.config)},
        {"images", result.images},
        {"cell_count", result.cells.size()},
        {"failures", failures},
    };
    auto out = open("run.json");
    out << run.dump(2) << '\n';
  }
}

}  // namespace leakscope
