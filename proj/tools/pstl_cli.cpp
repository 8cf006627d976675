// Command-line surface for the skeleton representation lab: data generation,
// pretraining, the evaluation protocols, stream fusion, the gradient audit,
// and ablation sweeps. Every command writes its artifacts plus an echo of the
// effective config into a run directory named by config hash and seed.

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "pstl/config.hpp"
#include "pstl/dataset_io.hpp"
#include "pstl/diagnostics.hpp"
#include "pstl/eval.hpp"
#include "pstl/train.hpp"

namespace fs = std::filesystem;
using namespace pstl;

namespace {

struct CommonOpts {
  std::string config_path;
  std::vector<std::string> overrides;
  std::string out_dir = "runs";
  std::optional<uint64_t> seed;
};

void add_common(CLI::App* cmd, CommonOpts& opts) {
  cmd->add_option("--config", opts.config_path, "config file (key = value lines)");
  cmd->add_option("--set", opts.overrides, "override a config key, e.g. --set mask.n_mask=5")
      ->take_all();
  cmd->add_option("--out-dir", opts.out_dir, "root directory for run outputs");
  cmd->add_option("--seed", opts.seed, "override the global seed");
}

RunConfig resolve_config(const CommonOpts& opts) {
  RunConfig cfg = RunConfig::desk_default();
  if (!opts.config_path.empty()) cfg = load_run_config(opts.config_path, cfg);
  for (const auto& kv : opts.overrides) {
    const auto eq = kv.find('=');
    require(eq != std::string::npos, errc::config, "--set expects key=value, got '" + kv + "'");
    cfg.apply(kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (opts.seed) cfg.seed = *opts.seed;
  cfg.validate();
  return cfg;
}

// Run directories are named by a hash of the effective config plus the
// command's input artifacts, so distinct invocations never share a cell.
std::string hash8(const RunConfig& cfg, const std::string& salt = {}) {
  const std::string text = cfg.canonical_text() + "\n" + salt;
  uint64_t h = 0xCBF29CE484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001B3ULL;
  }
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << h;
  return os.str().substr(0, 8);
}

fs::path make_run_dir(const RunConfig& cfg, const CommonOpts& opts, const std::string& command,
                      const std::string& salt = {}) {
  fs::path dir = fs::path(opts.out_dir) /
                 (command + "-" + hash8(cfg, salt) + "-s" + std::to_string(cfg.seed));
  fs::create_directories(dir);
  std::ofstream echo(dir / "config.txt");
  echo << cfg.canonical_text();
  return dir;
}

void write_report_files(const fs::path& dir, const EvalReport& report, const std::string& stem) {
  std::ofstream kv(dir / (stem + ".txt"));
  write_report_kv(kv, report);
  std::ofstream csv(dir / (stem + ".csv"));
  write_report_csv_header(csv);
  write_report_csv_row(csv, report);
  std::ofstream logits(dir / (stem + "_logits.csv"));
  logits << "label";
  if (!report.test_logits.empty())
    for (size_t j = 0; j < report.test_logits.front().size(); ++j) logits << ",logit" << j;
  logits << "\n" << std::setprecision(17);
  for (size_t i = 0; i < report.test_labels.size(); ++i) {
    logits << report.test_labels[i];
    for (double x : report.test_logits[i]) logits << ',' << x;
    logits << "\n";
  }
}

EvalReport read_logits_csv(const std::string& path) {
  std::ifstream in(path);
  require(in.good(), errc::missing_input, "cannot open logits file '" + path + "'");
  EvalReport r;
  r.protocol = "loaded";
  std::string line;
  require(static_cast<bool>(std::getline(in, line)), errc::format,
          "logits file '" + path + "' is empty");
  require(line.rfind("label", 0) == 0, errc::format,
          "logits file '" + path + "' lacks the label header");
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream is(line);
    std::string tok;
    require(static_cast<bool>(std::getline(is, tok, ',')), errc::format, "malformed logits row");
    r.test_labels.push_back(std::stoi(tok));
    std::vector<double> row;
    while (std::getline(is, tok, ',')) row.push_back(std::stod(tok));
    require(!row.empty(), errc::format, "logits row without logits in '" + path + "'");
    r.test_logits.push_back(std::move(row));
  }
  for (const auto& row : r.test_logits)
    r.predictions.push_back(static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin()));
  detail::finalize_report(r, static_cast<int>(r.test_logits.front().size()));
  return r;
}

std::vector<int> parse_count_list(const std::string& s) {
  std::vector<int> out;
  std::istringstream is(s);
  std::string tok;
  while (std::getline(is, tok, ',')) out.push_back(std::stoi(tok));
  require(!out.empty(), errc::config, "expected a comma-separated list of counts");
  return out;
}

int cmd_gen_data(const CommonOpts& opts) {
  RunConfig cfg = resolve_config(opts);
  auto dir = make_run_dir(cfg, opts, "gen-data");
  Dataset data = generate_synthetic(cfg.data, cfg.seed);
  const auto manifest = dir / "dataset.manifest";
  save_dataset(data, manifest.string());
  std::cout << "dataset: " << manifest.string() << "\n"
            << "sequences: " << data.sequences.size() << " (train "
            << data.indices_of(Split::train).size() << ", test "
            << data.indices_of(Split::test).size() << ")\n";
  return 0;
}

int cmd_pretrain(const CommonOpts& opts, const std::string& data_path) {
  RunConfig cfg = resolve_config(opts);
  auto dir = make_run_dir(cfg, opts, "pretrain", data_path);
  Dataset data = load_dataset(data_path);
  auto setup = make_pretrain_setup(cfg);
  std::ofstream telemetry(dir / "telemetry.csv");
  telemetry << std::setprecision(17);
  auto result = pretrain(data, setup, &telemetry);
  const auto ckpt = dir / "checkpoint.manifest";
  save_checkpoint(result.state, ckpt.string());
  const auto& last = result.log.back();
  std::cout << "checkpoint: " << ckpt.string() << "\n"
            << "steps: " << result.log.size() << "\n"
            << "final L_p: " << last.lp << " (L_1 " << last.l1 << ", L_2 " << last.l2 << ")\n";
  return 0;
}

int cmd_linear_eval(const CommonOpts& opts, const std::string& ckpt, const std::string& data_path) {
  RunConfig cfg = resolve_config(opts);
  auto dir = make_run_dir(cfg, opts, "linear-eval", ckpt + "|" + data_path);
  auto st = load_checkpoint(ckpt);
  Dataset data = load_dataset(data_path);
  auto report = linear_eval(st, data, make_eval_config(cfg));
  write_report_files(dir, report, "report");
  std::cout << "protocol: linear\n" << "top1: " << report.top1 << "\n"
            << "report: " << (dir / "report.txt").string() << "\n";
  return 0;
}

int cmd_partial_eval(const CommonOpts& opts, const std::string& ckpt, const std::string& data_path,
                     const std::string& joints_list, const std::string& parts_list) {
  require(joints_list.empty() != parts_list.empty(), errc::config,
          "partial-eval: pass exactly one of --joints or --parts");
  RunConfig cfg = resolve_config(opts);
  auto dir = make_run_dir(cfg, opts, "partial-eval",
                          ckpt + "|" + data_path + "|j:" + joints_list + "|p:" + parts_list);
  auto st = load_checkpoint(ckpt);
  Dataset data = load_dataset(data_path);
  const auto mode = joints_list.empty() ? PartialMode::parts : PartialMode::joints;
  const auto counts = parse_count_list(joints_list.empty() ? parts_list : joints_list);

  std::ofstream sweep(dir / "sweep.csv");
  write_report_csv_header(sweep);
  for (int n : counts) {
    auto report = partial_body_eval(st, data, mode, n, make_eval_config(cfg));
    write_report_files(dir, report, "report_n" + std::to_string(n));
    write_report_csv_row(sweep, report);
    std::cout << (mode == PartialMode::joints ? "masked joints " : "masked parts ") << n
              << ": top1 " << report.top1 << "\n";
  }
  std::cout << "sweep: " << (dir / "sweep.csv").string() << "\n";
  return 0;
}

int cmd_finetune(const CommonOpts& opts, const std::string& ckpt, const std::string& data_path) {
  RunConfig cfg = resolve_config(opts);
  auto dir = make_run_dir(cfg, opts, "finetune", ckpt + "|" + data_path);
  auto st = load_checkpoint(ckpt);
  Dataset data = load_dataset(data_path);
  auto report = finetune_eval(st, data, make_eval_config(cfg));
  write_report_files(dir, report, "report");
  std::cout << "protocol: finetune\n" << "top1: " << report.top1 << "\n"
            << "report: " << (dir / "report.txt").string() << "\n";
  return 0;
}

int cmd_semi_eval(const CommonOpts& opts, const std::string& ckpt, const std::string& data_path,
                  double fraction) {
  RunConfig cfg = resolve_config(opts);
  auto dir = make_run_dir(cfg, opts, "semi-eval",
                          ckpt + "|" + data_path + "|f:" + std::to_string(fraction));
  auto st = load_checkpoint(ckpt);
  Dataset data = load_dataset(data_path);
  auto report = semi_supervised_eval(st, data, fraction, make_eval_config(cfg));
  write_report_files(dir, report, "report");
  std::cout << "protocol: semi-supervised (fraction " << fraction << ")\n"
            << "top1: " << report.top1 << "\n"
            << "report: " << (dir / "report.txt").string() << "\n";
  return 0;
}

int cmd_fuse(const CommonOpts& opts, const std::vector<std::string>& logit_files) {
  RunConfig cfg = resolve_config(opts);
  std::string salt;
  for (const auto& p : logit_files) salt += p + "|";
  auto dir = make_run_dir(cfg, opts, "fuse", salt);
  std::vector<EvalReport> streams;
  for (const auto& p : logit_files) streams.push_back(read_logits_csv(p));
  auto fused = fuse_streams(streams);
  write_report_files(dir, fused, "report");
  std::cout << "protocol: fused (" << streams.size() << " streams)\n"
            << "top1: " << fused.top1 << "\n"
            << "report: " << (dir / "report.txt").string() << "\n";
  return 0;
}

int cmd_grad_check(const CommonOpts& opts, double epsilon, double tolerance) {
  RunConfig cfg = resolve_config(opts);
  auto dir = make_run_dir(cfg, opts, "grad-check");
  auto report = run_pstl_grad_check(epsilon, tolerance);
  std::ofstream out(dir / "grad_check.txt");
  for (const auto& e : report.per_param)
    out << e.name << " max_rel_err " << e.max_rel_err << "\n";
  out << "overall max_rel_err " << report.max_rel_err << "\n";
  std::cout << "parameters checked: " << report.per_param.size() << "\n"
            << "max relative error: " << report.max_rel_err << " (tolerance " << tolerance << ")\n"
            << (report.passed() ? "PASS" : "FAIL") << "\n";
  return report.passed() ? 0 : 1;
}

struct GridAxis {
  std::string key;
  std::vector<std::string> values;
};

int cmd_sweep(const CommonOpts& opts, const std::vector<std::string>& grid_specs) {
  require(!grid_specs.empty(), errc::config, "sweep: pass at least one --grid key=v1,v2,...");
  RunConfig base = resolve_config(opts);
  std::string salt;
  for (const auto& g : grid_specs) salt += g + "|";
  auto dir = make_run_dir(base, opts, "sweep", salt);

  std::vector<GridAxis> axes;
  for (const auto& spec : grid_specs) {
    const auto eq = spec.find('=');
    require(eq != std::string::npos, errc::config, "sweep: --grid expects key=v1,v2,...");
    GridAxis axis;
    axis.key = spec.substr(0, eq);
    std::istringstream is(spec.substr(eq + 1));
    std::string tok;
    while (std::getline(is, tok, ',')) axis.values.push_back(tok);
    require(!axis.values.empty(), errc::config, "sweep: empty value list for '" + axis.key + "'");
    axes.push_back(std::move(axis));
  }

  std::ofstream csv(dir / "sweep.csv");
  csv << "config_hash";
  for (const auto& a : axes) csv << ',' << a.key;
  csv << ",final_L_p,linear_top1\n" << std::setprecision(10);

  std::vector<size_t> idx(axes.size(), 0);
  bool done = false;
  int point = 0;
  while (!done) {
    RunConfig cfg = base;
    std::vector<std::string> cell;
    for (size_t a = 0; a < axes.size(); ++a) {
      cfg.apply(axes[a].key, axes[a].values[idx[a]]);
      cell.push_back(axes[a].values[idx[a]]);
    }
    cfg.validate();

    Dataset data = generate_synthetic(cfg.data, cfg.seed);
    auto result = pretrain(data, make_pretrain_setup(cfg));
    auto report = linear_eval(result.state, data, make_eval_config(cfg));

    const auto point_dir = dir / ("point-" + hash8(cfg));
    fs::create_directories(point_dir);
    std::ofstream echo(point_dir / "config.txt");
    echo << cfg.canonical_text();
    save_checkpoint(result.state, (point_dir / "checkpoint.manifest").string());
    write_report_files(point_dir, report, "report");

    csv << hash8(cfg);
    for (const auto& v : cell) csv << ',' << v;
    csv << ',' << result.log.back().lp << ',' << report.top1 << "\n";
    csv.flush();
    std::cout << "point " << ++point << ":";
    for (size_t a = 0; a < axes.size(); ++a) std::cout << ' ' << axes[a].key << '=' << cell[a];
    std::cout << " -> top1 " << report.top1 << "\n";

    for (size_t a = 0; a < axes.size(); ++a) {
      if (++idx[a] < axes[a].values.size()) break;
      idx[a] = 0;
      if (a + 1 == axes.size()) done = true;
    }
  }
  std::cout << "sweep: " << (dir / "sweep.csv").string() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Self-supervised skeleton action representation lab"};
  app.require_subcommand(1);

  CommonOpts gen_opts;
  auto* gen = app.add_subcommand("gen-data", "generate a synthetic skeleton dataset");
  add_common(gen, gen_opts);

  CommonOpts pre_opts;
  std::string pre_data;
  auto* pre = app.add_subcommand("pretrain", "self-supervised pretraining (pstl or skeletonbt)");
  add_common(pre, pre_opts);
  pre->add_option("--data", pre_data, "dataset manifest")->required();

  CommonOpts lin_opts;
  std::string lin_ckpt, lin_data;
  auto* lin = app.add_subcommand("linear-eval", "linear probe on frozen features");
  add_common(lin, lin_opts);
  lin->add_option("--checkpoint", lin_ckpt, "checkpoint manifest")->required();
  lin->add_option("--data", lin_data, "dataset manifest")->required();

  CommonOpts part_opts;
  std::string part_ckpt, part_data, part_joints, part_parts;
  auto* part = app.add_subcommand("partial-eval", "linear probe with test-time joint/part removal");
  add_common(part, part_opts);
  part->add_option("--checkpoint", part_ckpt, "checkpoint manifest")->required();
  part->add_option("--data", part_data, "dataset manifest")->required();
  part->add_option("--joints", part_joints, "masked joint counts, e.g. 0,2,4");
  part->add_option("--parts", part_parts, "masked part counts, e.g. 1,2");

  CommonOpts ft_opts;
  std::string ft_ckpt, ft_data;
  auto* ft = app.add_subcommand("finetune", "finetune the whole network with a classifier");
  add_common(ft, ft_opts);
  ft->add_option("--checkpoint", ft_ckpt, "checkpoint manifest")->required();
  ft->add_option("--data", ft_data, "dataset manifest")->required();

  CommonOpts semi_opts;
  std::string semi_ckpt, semi_data;
  double semi_fraction = 0.1;
  auto* semi = app.add_subcommand("semi-eval", "finetune on a stratified labeled fraction");
  add_common(semi, semi_opts);
  semi->add_option("--checkpoint", semi_ckpt, "checkpoint manifest")->required();
  semi->add_option("--data", semi_data, "dataset manifest")->required();
  semi->add_option("--fraction", semi_fraction, "labeled fraction (e.g. 0.01 or 0.1)");

  CommonOpts fuse_opts;
  std::vector<std::string> fuse_files;
  auto* fuse = app.add_subcommand("fuse", "fuse per-stream logits by summed softmax");
  add_common(fuse, fuse_opts);
  fuse->add_option("--logits", fuse_files, "logits CSV files (one per stream)")
      ->required()
      ->expected(2, 8);

  CommonOpts gc_opts;
  double gc_eps = 1e-5, gc_tol = 1e-4;
  auto* gc = app.add_subcommand("grad-check", "finite-difference audit of the full loss");
  add_common(gc, gc_opts);
  gc->add_option("--epsilon", gc_eps, "finite-difference step");
  gc->add_option("--tolerance", gc_tol, "max allowed relative error");

  CommonOpts sweep_opts;
  std::vector<std::string> sweep_grids;
  auto* sweep = app.add_subcommand("sweep", "grid sweep: pretrain + linear eval per point");
  add_common(sweep, sweep_opts);
  sweep->add_option("--grid", sweep_grids, "axis spec key=v1,v2,... (repeatable)")
      ->required()
      ->take_all();

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) return cmd_gen_data(gen_opts);
    if (pre->parsed()) return cmd_pretrain(pre_opts, pre_data);
    if (lin->parsed()) return cmd_linear_eval(lin_opts, lin_ckpt, lin_data);
    if (part->parsed()) return cmd_partial_eval(part_opts, part_ckpt, part_data, part_joints, part_parts);
    if (ft->parsed()) return cmd_finetune(ft_opts, ft_ckpt, ft_data);
    if (semi->parsed()) return cmd_semi_eval(semi_opts, semi_ckpt, semi_data, semi_fraction);
    if (fuse->parsed()) return cmd_fuse(fuse_opts, fuse_files);
    if (gc->parsed()) return cmd_grad_check(gc_opts, gc_eps, gc_tol);
    if (sweep->parsed()) return cmd_sweep(sweep_opts, sweep_grids);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return e.exit_code();
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
