#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "trifuse/data/nifti.hpp"
#include "trifuse/experiments.hpp"

namespace fs = std::filesystem;
using namespace trifuse;

namespace {

std::vector<std::uint64_t> parse_seeds(const std::string& s) {
  std::vector<std::uint64_t> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      out.push_back(std::stoull(item));
    } catch (const std::exception&) {
      throw Error(ErrorKind::config, "--seeds: '" + item + "' is not a seed");
    }
  }
  if (out.empty()) throw Error(ErrorKind::config, "--seeds is empty");
  return out;
}

ExperimentConfig config_from(const std::string& path) {
  auto cfg = path.empty() ? ExperimentConfig{} : load_config(path);
  cfg.validate();
  return cfg;
}

// NIfTI file, or `sample.mmv:N` for modality N (1-based) of an MMV sample.
Volume load_volume(const std::string& spec) {
  const auto colon = spec.rfind(".mmv:");
  if (colon != std::string::npos) {
    const auto sample = data::read_mmv(spec.substr(0, colon + 4));
    return sample.modality(std::stoi(spec.substr(colon + 5)));
  }
  if (fs::path(spec).extension() == ".mmv")
    throw Error(ErrorKind::invalid_argument, spec + ": pick a modality with " + spec + ":N");
  return data::read_nifti(spec);
}

void progress(const std::string& arm, std::uint64_t seed) {
  std::cerr << "training " << arm << " seed " << seed << '\n';
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream f(path);
  f << text;
  if (!f) throw Error(ErrorKind::io, "cannot write " + path.string());
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-modal brain tumour segmentation with tri-attention fusion"};
  app.require_subcommand(1);

  std::uint64_t seed = 1000;
  int count = 10;
  std::string shape_text = "32", out, config_path, seeds_text, ckpt, data_dir, a_path, b_path, mask_path;
  double noise = 0.05;
  int bins = 64;

  auto* gen = app.add_subcommand("gen-data", "write synthetic samples as .mmv files");
  gen->add_option("--seed", seed, "seed of the first sample; sample k uses seed + k");
  gen->add_option("--count", count)->check(CLI::PositiveNumber);
  gen->add_option("--shape", shape_text, "D or D,H,W");
  gen->add_option("--noise", noise);
  gen->add_option("--out", out)->required();

  auto* tr = app.add_subcommand("train", "train one configuration; writes checkpoint.pt and reports");
  tr->add_option("--config", config_path)->check(CLI::ExistingFile);
  tr->add_option("--out", out)->required();

  auto* ev = app.add_subcommand("eval", "score a checkpoint on a directory of .mmv samples");
  ev->add_option("--ckpt", ckpt)->required()->check(CLI::ExistingFile);
  ev->add_option("--data", data_dir)->required()->check(CLI::ExistingDirectory);
  ev->add_option("--out", out)->required();

  std::vector<CLI::App*> runners;
  for (auto [name, help] : {std::pair{"ablate", "baseline / dual / tri comparison"},
                            std::pair{"grid-lambda", "tri-mode sweep over lambda_grid"},
                            std::pair{"placement", "tri-mode sweep over correlation placements"},
                            std::pair{"expr-compare", "linear vs nonlinear correlation expression"}}) {
    auto* r = app.add_subcommand(name, help);
    r->add_option("--config", config_path)->check(CLI::ExistingFile);
    r->add_option("--seeds", seeds_text, "comma-separated; overrides the config");
    r->add_option("--out", out)->required();
    runners.push_back(r);
  }

  auto* hist = app.add_subcommand("hist", "joint intensity histogram of two volumes (.nii or sample.mmv:N)");
  hist->add_option("--a", a_path)->required();
  hist->add_option("--b", b_path)->required();
  hist->add_option("--bins", bins);
  hist->add_option("--mask", mask_path, "NIfTI mask; default is where either volume is nonzero");
  hist->add_option("--out", out, "output prefix for .csv and .pgm; default prints CSV");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*gen) {
      fs::create_directories(out);
      auto spec = data::CorrelationSpec::defaults();
      spec.noise = noise;
      const auto shape = parse_shape("--shape", shape_text);
      for (int k = 0; k < count; ++k) {
        auto s = data::generate_synthetic_sample(seed + static_cast<std::uint64_t>(k), shape, spec);
        data::write_mmv(s, fs::path(out) / (s.id + ".mmv"));
      }
      std::cout << "wrote " << count << " samples to " << out << '\n';
    } else if (*tr) {
      const auto cfg = config_from(config_path);
      const auto data = load_dataset(cfg);
      TrainHooks hooks;
      hooks.on_epoch = [](const EpochRecord& e) {
        std::cerr << "epoch " << e.epoch << " train " << e.train.total << " val " << e.val_total << '\n';
      };
      auto r = train(cfg, data, hooks);
      r.report.write(out);
      save_checkpoint(r.model, cfg, fs::path(out) / "checkpoint.pt");
      std::cout << r.report.to_text();
    } else if (*ev) {
      auto ck = load_checkpoint(ckpt);
      const auto raw = data::read_mmv_directory(data_dir);
      for (const auto& s : raw) {
        const auto& sh = s.label.shape();
        if (!(sh == ck.config.net.input) && !(sh == ck.config.sample_shape))
          throw Error(ErrorKind::shape_mismatch, "sample '" + s.id + "' has shape " + to_string(sh) +
                                                     ", checkpoint expects " + to_string(ck.config.net.input));
      }
      const auto report = evaluate_checkpoint(ck, prepare_dataset(raw, ck.config.net.input));
      report.write(out);
      std::cout << report.to_text();
    } else if (*hist) {
      const auto a = load_volume(a_path), b = load_volume(b_path);
      Mask mask;
      if (!mask_path.empty()) {
        const auto m = data::read_nifti(mask_path);
        std::vector<std::uint8_t> v(m.size());
        for (std::size_t i = 0; i < v.size(); ++i) v[i] = m[i] != 0.0f;
        mask = Mask(m.shape(), m.spacing(), std::move(v));
      } else {
        if (!(a.shape() == b.shape())) throw Error(ErrorKind::shape_mismatch, "--a and --b differ in shape");
        std::vector<std::uint8_t> v(a.size());
        for (std::size_t i = 0; i < v.size(); ++i) v[i] = a[i] != 0.0f || b[i] != 0.0f;
        mask = Mask(a.shape(), a.spacing(), std::move(v));
      }
      const auto h = metrics::joint_intensity_histogram(a, b, bins, mask);
      if (out.empty()) {
        metrics::write_histogram_csv(std::cout, h);
      } else {
        std::ofstream csv(out + ".csv");
        metrics::write_histogram_csv(csv, h);
        if (!csv) throw Error(ErrorKind::io, "cannot write " + out + ".csv");
        metrics::write_histogram_pgm(out + ".pgm", h);
        std::cout << "wrote " << out << ".csv and " << out << ".pgm (" << h.total() << " voxels)\n";
      }
    } else {
      auto cfg = config_from(config_path);
      if (!seeds_text.empty()) cfg.seeds = parse_seeds(seeds_text);
      const auto data = load_dataset(cfg);
      if (*runners[1]) {
        const auto curve = lambda_grid_search(cfg, cfg.lambda_grid, cfg.seeds, data, progress);
        curve.write(out);
        std::cout << curve.result.table.to_text();
      } else {
        ExperimentResult res;
        if (*runners[0]) res = run_ablation(cfg, cfg.seeds, data, progress);
        else if (*runners[2]) res = placement_experiment(cfg, cfg.effective_placements(), cfg.seeds, data, progress);
        else res = expression_comparison(cfg, cfg.seeds, data, progress);
        res.write(out);
        std::cout << res.table.to_text();
      }
      write_text(fs::path(out) / "config.txt", cfg.to_text());
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';  // what() starts with the kind
    return exit_code(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
