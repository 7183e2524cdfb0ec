#include <CLI11.hpp>

#include <chrono>
#include <filesystem>
#include <iomanip>
#include <iostream>

#include "gradcheck_command.hpp"
#include "softmesh/eval.hpp"
#include "softmesh/image_io.hpp"
#include "softmesh/synthetic.hpp"
#include "softmesh/training.hpp"

namespace fs = std::filesystem;
using namespace softmesh;

namespace {

enum ExitCode { kOk = 0, kUsage = 1, kCheckFailed = 2, kIoError = 3 };

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void print_banner(const std::string& command, const TrainConfig& cfg) {
  std::cout << "softmesh " << command << "  seed=" << cfg.seed
            << "  config_hash=" << config_hash(cfg) << '\n'
            << print_config(cfg) << std::flush;
}

TrainConfig resolve_config(const std::string& path,
                           const std::vector<std::string>& overrides) {
  TrainConfig cfg = path.empty() ? TrainConfig{} : load_config(path);
  for (const auto& kv : overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) {
      throw UsageError("--set expects key=value, got '" + kv + "'");
    }
    set_config_value(cfg, kv.substr(0, eq), kv.substr(eq + 1));
  }
  cfg.validate();
  return cfg;
}

int gen_data(const std::string& out, int count, std::uint64_t seed,
             std::int64_t first_index) {
  if (count < 1) throw UsageError("--count must be >= 1");
  std::cout << "softmesh gen-data  seed=" << seed << "  count=" << count
            << "  first_index=" << first_index << '\n';
  for (int k = 0; k < count; ++k) {
    save_sample(out, synthetic_sample(seed, first_index + k));
  }
  std::cout << "wrote " << count << " samples to " << out << '\n';
  return kOk;
}

int train(const std::string& data, const std::string& config_path,
          const std::string& out, const std::string& resume,
          const std::vector<std::string>& overrides) {
  TrainConfig cfg = resolve_config(config_path, overrides);
  print_banner("train", cfg);
  const auto samples = load_dataset(data);
  fs::create_directories(out);
  FitOptions options;
  options.checkpoint_dir = out;
  options.metrics_path = fs::path(cfg.metrics_path).is_absolute()
                             ? cfg.metrics_path
                             : (fs::path(out) / cfg.metrics_path).string();
  options.resume_from = resume;
  const auto start = std::chrono::steady_clock::now();
  options.on_step = [&](std::int64_t t, const StepLosses& l) {
    if (t % cfg.metrics_interval != 0 && t + 1 != cfg.iterations) return;
    const double secs = std::chrono::duration<double>(
                            std::chrono::steady_clock::now() - start)
                            .count();
    std::cout << "iter " << std::setw(5) << t << "  loss " << std::setw(10)
              << l.total << "  iou " << std::setw(6) << l.train_iou << "  "
              << std::fixed << std::setprecision(1) << secs << " s\n"
              << std::defaultfloat << std::setprecision(6) << std::flush;
  };
  const TrainState state = fit(samples, cfg, options);
  std::cout << "finished at iteration " << state.iteration << "; checkpoint "
            << (fs::path(out) / "final.bin").string() << '\n';
  return kOk;
}

int render_cmd(const std::string& checkpoint, const std::string& input,
               const std::string& out, std::optional<double> azimuth) {
  const TrainState state = load_checkpoint(checkpoint);
  print_banner("render", state.config);
  const Sample sample = load_sample(input);
  const RenderConfig rc = state.config.render_config();
  Reconstruction r = reconstruct(state.model[0], sample, state.template_mesh, rc);
  if (azimuth) {
    NoGradGuard no_grad;
    r.realized = realize_attributes(
        with_azimuth(r.attributes, static_cast<Real>(*azimuth)), sample.image,
        state.template_mesh, state.config.d_min);
    r.frame = render(r.realized, state.template_mesh, rc);
  }
  fs::create_directories(out);
  const std::string base = (fs::path(out) / sample_prefix(sample.index)).string();
  write_png(base + "_render_img.png", r.frame.image);
  write_png(base + "_render_mask.png", r.frame.mask);
  Mesh mesh = state.template_mesh;
  mesh.vertices.assign(r.realized.vertices.data().begin(),
                       r.realized.vertices.data().end());
  write_obj(base + "_mesh.obj", mesh);
  write_png(base + "_texture.png", r.realized.texture);
  std::cout << "wrote " << base << "_render_{img,mask}.png, _mesh.obj, "
            << "_texture.png\n";
  return kOk;
}

int eval_cmd(const std::string& checkpoint, const std::string& data,
             const std::string& reference_dir, const std::string& report_path,
             const std::string& sweep_dir) {
  const TrainState state = load_checkpoint(checkpoint);
  print_banner("eval", state.config);
  const auto samples = load_dataset(data);
  const auto reference =
      reference_dir.empty() ? samples : load_dataset(reference_dir);
  std::vector<Tensor> reference_images;
  for (const auto& s : reference) reference_images.push_back(s.image);
  const EvalReport report = evaluate(state, samples, reference_images, sweep_dir);
  write_report(report_path, report);
  std::cout << "mean iou " << report.mean_iou << "  rf_frechet_recon "
            << report.frechet_recon << "  rf_frechet_rotation "
            << report.mean_frechet_rotation << "\nreport " << report_path
            << '\n';
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"softmesh: differentiable mesh rendering and self-supervised "
               "single-image reconstruction"};
  app.require_subcommand(1);

  std::string out, data, config_path, checkpoint, input, report, resume,
      reference, sweep_dir;
  int count = 16;
  std::uint64_t seed = 7;
  std::int64_t first_index = 0;
  std::optional<double> azimuth;
  std::string module = "all";
  std::vector<std::string> overrides;

  auto* gen = app.add_subcommand("gen-data", "Generate the synthetic dataset");
  gen->add_option("--out", out, "Output directory")->required();
  gen->add_option("--count", count, "Number of samples")->required();
  gen->add_option("--seed", seed, "Generator seed")->required();
  gen->add_option("--first-index", first_index,
                  "Index of the first sample (held-out sets start past the "
                  "training range)");

  auto* tr = app.add_subcommand("train", "Train both reconstruction models");
  tr->add_option("--data", data, "Dataset directory")->required();
  tr->add_option("--config", config_path, "Config file (key = value)")
      ->required();
  tr->add_option("--out", out, "Output directory")->required();
  tr->add_option("--resume", resume, "Checkpoint to resume from");
  tr->add_option("--set", overrides, "Config override key=value");

  auto* rd = app.add_subcommand("render", "Reconstruct and render one sample");
  rd->add_option("--checkpoint", checkpoint, "Checkpoint file")->required();
  rd->add_option("--input", input, "NNNN prefix or either file of a pair")
      ->required();
  rd->add_option("--out", out, "Output directory")->required();
  rd->add_option("--azimuth", azimuth, "Override the azimuth (degrees)");

  auto* ev = app.add_subcommand("eval", "Mask IoU, Fréchet proxy and sweep");
  ev->add_option("--checkpoint", checkpoint, "Checkpoint file")->required();
  ev->add_option("--data", data, "Dataset directory")->required();
  ev->add_option("--report", report, "CSV report path")->required();
  ev->add_option("--reference", reference,
                 "Reference set for the Fréchet proxy (default: --data)");
  ev->add_option("--sweep-dir", sweep_dir, "Write the rotation sweep PNGs");

  auto* gc = app.add_subcommand("gradcheck", "Finite-difference gradient suites");
  gc->add_option("--module", module, "renderer, losses or all")
      ->check(CLI::IsMember({"renderer", "losses", "all"}));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (*gen) return gen_data(out, count, seed, first_index);
    if (*tr) return train(data, config_path, out, resume, overrides);
    if (*rd) return render_cmd(checkpoint, input, out, azimuth);
    if (*ev) return eval_cmd(checkpoint, data, reference, report, sweep_dir);
    if (*gc) return run_gradcheck(module, std::cout) ? kOk : kCheckFailed;
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kUsage;
  } catch (const DatasetTooSmall& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const CheckpointError& e) {
    std::cerr << "checkpoint error: " << e.what() << '\n';
    return kIoError;
  } catch (const std::ios_base::failure& e) {
    std::cerr << "i/o error: " << e.what() << '\n';
    return kIoError;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "i/o error: " << e.what() << '\n';
    return kIoError;
  } catch (const NonFiniteLoss& e) {
    std::cerr << "training aborted: " << e.what() << '\n';
    return kCheckFailed;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kIoError;
  }
  return kUsage;
}
