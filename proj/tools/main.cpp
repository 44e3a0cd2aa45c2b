#include "svg.hpp"

#include "ptedit/blend.hpp"
#include "ptedit/classifier.hpp"
#include "ptedit/error.hpp"
#include "ptedit/evaluation.hpp"
#include "ptedit/pcb.hpp"
#include "ptedit/prompts.hpp"
#include "ptedit/synthgen.hpp"
#include "ptedit/training.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

namespace fs = std::filesystem;
using namespace ptedit;

namespace {

enum Exit { kOk = 0, kUsage = 1, kIo = 2, kDiverged = 3, kExtraction = 4 };

// failure that maps straight to an exit code
struct Fail {
  int code;
  std::string message;
};

struct ModelFlags {
  std::size_t embed = 64;
  std::size_t blocks = 4;
  std::size_t heads = 4;

  void add(CLI::App* cmd)
  {
    cmd->add_option("--embed", embed, "Model width")->capture_default_str();
    cmd->add_option("--blocks", blocks, "Transformer blocks")->capture_default_str();
    cmd->add_option("--heads", heads, "Attention heads")->capture_default_str();
  }
};

struct TrainFlags {
  std::size_t steps = 20000;
  std::size_t batch = 6;
  double lr = 3e-4;
  int T = 64;
  double p_text = 0.5;
  double p_recon = 0.1;
  std::size_t log_every = 100;
  ModelFlags model;

  void add(CLI::App* cmd, const std::string& steps_flag)
  {
    cmd->add_option(steps_flag, steps, "Optimizer steps")->capture_default_str();
    cmd->add_option("--batch", batch, "Batch size")->capture_default_str();
    cmd->add_option("--lr", lr, "Adam learning rate")->capture_default_str();
    cmd->add_option("--p-text", p_text, "Prompt dropout probability")->capture_default_str();
    cmd->add_option("--log-every", log_every, "Loss logging interval")->capture_default_str();
    model.add(cmd);
  }

  TrainConfig config(std::uint64_t seed) const
  {
    TrainConfig c;
    c.model = DenoiserConfig{ Vocabulary::builtin().size(), model.embed, model.blocks, model.heads };
    c.steps = steps;
    c.batch = batch;
    c.lr = lr;
    c.T = T;
    c.p_text = p_text;
    c.p_recon = p_recon;
    c.log_every = log_every;
    c.seed = seed;
    return c;
  }
};

struct EvalFlags {
  fs::path model;
  fs::path data;
  fs::path classifier;
  int T = 64;
  std::string sampler = "deterministic";
  std::size_t limit = 0;

  void add(CLI::App* cmd, bool needs_model)
  {
    auto* m = cmd->add_option("--model", model, "BPM1 checkpoint");
    if (needs_model)
      m->required();
    cmd->add_option("--data", data, "Dataset directory")->required();
    cmd->add_option("--classifier", classifier,
                    "Classifier checkpoint; trained on the data and written here when missing");
    cmd->add_option("--t", T, "Diffusion steps")->capture_default_str();
    cmd->add_option("--sampler", sampler, "deterministic or ancestral")->capture_default_str();
    cmd->add_option("--limit", limit, "Evaluate the first N test triplets (0 = all)")->capture_default_str();
  }
};

std::string
number(double v)
{
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

Sampler
sampler_flag(const std::string& name)
{
  const auto s = parse_sampler(name);
  if (!s)
    throw Fail{ kUsage, "unknown sampler '" + name + "'" };
  return *s;
}

Denoiser
load_model(const fs::path& path)
{
  auto ck = read_checkpoint(path);
  return std::move(ck.model);
}

PointClassifier
obtain_classifier(const fs::path& path, const std::vector<EditTriplet>& data, std::uint64_t seed)
{
  if (!path.empty() && fs::exists(path))
    return PointClassifier::load(path);
  ClassifierTrainConfig cc;
  cc.seed = seed;
  auto r = train_classifier(data, cc);
  std::cout << "classifier: train accuracy " << number(r.train_accuracy) << ", held-out accuracy "
            << number(r.test_accuracy) << '\n';
  if (!path.empty())
    r.model.save(path);
  return std::move(r.model);
}

void
write_text(const fs::path& path, const std::string& text)
{
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << text;
  if (!out)
    throw Fail{ kIo, "cannot write " + path.string() };
}

void
ensure_dir(const fs::path& dir)
{
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir))
    throw Fail{ kIo, "cannot create directory " + dir.string() };
}

void
print_row(const std::string& value, const MetricReport& r)
{
  std::printf("%-10s %-22s %10s %10s %10s %10s %10s %10s\n", value.c_str(), r.method.label().c_str(),
              number(r.gd).c_str(), number(r.lgd).c_str(), number(r.cd).c_str(), number(r.fpd).c_str(),
              r.dir_sim ? number(*r.dir_sim).c_str() : "-", number(r.adherence_rate).c_str());
}

void
print_header()
{
  std::printf("%-10s %-22s %10s %10s %10s %10s %10s %10s\n", "value", "method", "gd", "lgd", "cd", "fpd", "dir_sim",
              "adherence");
}

// one MetricReport per value plus a combined table
void
write_sweep(const fs::path& out_dir, const std::string& param, const std::vector<std::string>& values,
            const std::vector<MetricReport>& reports)
{
  nlohmann::ordered_json table;
  table["param"] = param;
  table["rows"] = nlohmann::ordered_json::array();
  print_header();
  for (std::size_t i = 0; i < reports.size(); ++i) {
    const auto& r = reports[i];
    std::string stem = "report_" + param + "_" + values[i];
    std::replace(stem.begin(), stem.end(), ':', 'x');
    write_report(out_dir / (stem + ".json"), r);
    nlohmann::ordered_json row;
    row["value"] = values[i];
    row["method"] = r.method.label();
    row["n"] = r.n;
    row["gd"] = r.gd;
    row["lgd"] = r.lgd;
    row["cd"] = r.cd;
    row["fpd"] = r.fpd;
    row["dir_sim"] = r.dir_sim ? nlohmann::ordered_json(*r.dir_sim) : nlohmann::ordered_json(nullptr);
    row["adherence_rate"] = r.adherence_rate;
    row["flags"] = r.flags;
    table["rows"].push_back(std::move(row));
    print_row(values[i], r);
  }
  write_text(out_dir / "sweep.json", table.dump(2) + "\n");
}

int
to_int(const std::string& s, const std::string& what)
{
  try {
    std::size_t used = 0;
    const int v = std::stoi(s, &used);
    if (used == s.size())
      return v;
  } catch (const std::exception&) {
  }
  throw Fail{ kUsage, "bad " + what + " value '" + s + "'" };
}

EditMask
read_mask(const fs::path& path, std::size_t k)
{
  std::ifstream in(path, std::ios::binary);
  if (!in)
    throw Fail{ kIo, "cannot open " + path.string() };
  char magic[4] = {};
  in.read(magic, 4);
  in.clear();
  in.seekg(0);
  EditMask mask;
  if (std::string_view(magic, 4) == "PCB1") {
    auto rec = read_pcb(in);
    if (!rec.mask)
      throw Fail{ kIo, path.string() + " carries no mask" };
    mask = *rec.mask;
  } else {
    // whitespace separated 0/1 per point
    std::vector<std::uint8_t> bits;
    std::string tok;
    while (in >> tok) {
      if (tok != "0" && tok != "1")
        throw Fail{ kIo, path.string() + ": mask entries must be 0 or 1" };
      bits.push_back(tok == "1");
    }
    mask = EditMask(std::move(bits));
  }
  if (mask.size() != k)
    throw Fail{ kIo, "mask has " + std::to_string(mask.size()) + " entries for " + std::to_string(k) + " points" };
  return mask;
}

// ---- subcommands ----

struct GenData {
  fs::path out;
  std::vector<std::string> categories;
  std::size_t n = 100;
  std::size_t points = 256;
  double split = 0.9;
  std::size_t edits_per_shape = 1;

  int run(std::uint64_t seed) const
  {
    DatasetConfig c;
    c.out_dir = out;
    if (!categories.empty()) {
      c.categories.clear();
      for (const auto& name : categories) {
        const auto cat = parse_category(name);
        if (!cat)
          throw Fail{ kUsage, "unknown category '" + name + "'" };
        c.categories.push_back(*cat);
      }
    }
    c.n = n;
    c.points = points;
    c.train_fraction = split;
    c.edits_per_shape = edits_per_shape;
    c.seed = seed;
    ensure_dir(out);
    const auto summary = build_dataset(c);
    for (const auto& [key, count] : summary.per_category_split)
      std::cout << key << ' ' << count << '\n';
    std::cout << "train " << summary.train << ", test " << summary.test << '\n';
    return kOk;
  }
};

struct Train {
  fs::path data;
  fs::path out;
  TrainFlags flags;

  int run(std::uint64_t seed) const
  {
    const auto dataset = load_dataset(data);
    const auto examples = training_examples(dataset);
    const auto config = flags.config(seed);
    std::cout << "training on " << examples.size() << " examples, "
              << config.model.parameter_count() << " parameters\n";
    const auto result = train(config, examples, [](const LossPoint& p) {
      std::cout << "step " << p.step << " loss " << number(p.loss) << '\n' << std::flush;
    });
    write_checkpoint(out, result.model, result.steps);
    std::cout << "wrote " << out.string() << '\n';
    return kOk;
  }
};

struct Edit {
  fs::path model;
  fs::path input;
  fs::path mask_file;
  fs::path out;
  std::string prompt;
  std::string category = "chair";
  int tr = 20;
  int T = 64;
  std::string sampler = "deterministic";

  int run(std::uint64_t seed) const
  {
    const auto cat = parse_category(category);
    if (!cat)
      throw Fail{ kUsage, "unknown category '" + category + "'" };
    const auto sampler_kind = sampler_flag(sampler);
    const auto record = read_pcb_file(input);
    const PointCloud& cloud = record.cloud;

    const auto part = extract_part(prompt, *cat);
    std::cout << "part: " << (part ? *part : std::string("unknown")) << '\n';
    EditMask mask;
    if (!mask_file.empty()) {
      mask = read_mask(mask_file, cloud.size());
    } else {
      if (!part)
        throw Fail{ kExtraction, "no part named in the prompt; pass --mask" };
      if (!cloud.has_labels())
        throw Fail{ kExtraction, "input has no part labels; pass --mask" };
      mask = EditMask::from_labels(cloud.labels, *schema(*cat).part_label(*part));
      if (mask.count() == 0)
        throw Fail{ kExtraction, "no points labeled '" + *part + "'" };
    }
    std::cout << "mask: " << mask.count() << " of " << cloud.size() << " points\n";

    std::vector<std::string> dropped;
    for (const auto& w : split_words(prompt))
      if (!Vocabulary::builtin().id(w))
        dropped.push_back(w);
    for (const auto& w : dropped)
      std::cerr << "warning: '" << w << "' is not in the vocabulary and was dropped\n";
    const TokenIds tokens = tokenize(prompt, TokenizeMode::Lenient);

    const Denoiser den = load_model(model);
    const BlendConfig config{ T, tr, sampler_kind, seed };
    const auto result = blended_edit(cloud, mask, tokens, model_oracle(den), config);
    write_pcb_file(out, PcbRecord{ PointCloud(result.output, cloud.labels), mask });
    std::cout << "wrote " << out.string() << '\n';
    return kOk;
  }
};

struct Ablate {
  EvalFlags eval;
  std::string param = "tr";
  std::vector<std::string> values;
  fs::path out;
  int tr = 20;
  TrainFlags train_flags;

  std::vector<std::string> default_values() const
  {
    if (param == "tr")
      return { "0", "10", "20", "40", "64" };
    if (param == "recon-pct")
      return { "0", "5", "10", "25", "50" };
    return { "1:1", "10:1", "1:10", "10:10" };
  }

  int run(std::uint64_t seed) const
  {
    if (param != "tr" && param != "recon-pct" && param != "repaint")
      throw Fail{ kUsage, "--param must be tr, recon-pct or repaint" };
    if (param != "recon-pct" && eval.model.empty())
      throw Fail{ kUsage, "--model is required for --param " + param };
    const auto vals = values.empty() ? default_values() : values;
    EvalConfig config;
    config.T = eval.T;
    config.sampler = sampler_flag(eval.sampler);
    config.seed = seed;
    config.limit = eval.limit;

    std::vector<MethodSpec> methods;
    for (const auto& v : vals) {
      MethodSpec m;
      if (param == "tr") {
        m.t_r = to_int(v, "t_r");
      } else if (param == "repaint") {
        const auto colon = v.find(':');
        if (colon == std::string::npos)
          throw Fail{ kUsage, "repaint values are r:j pairs, got '" + v + "'" };
        m.method = EditMethod::Repaint;
        m.repaint_r = to_int(v.substr(0, colon), "r");
        m.repaint_j = to_int(v.substr(colon + 1), "j");
      } else {
        m.t_r = tr;
      }
      if (m.t_r < 0 || m.t_r > eval.T)
        throw Fail{ kUsage, "t_r must lie in [0, " + std::to_string(eval.T) + "]" };
      methods.push_back(m);
    }

    const auto data = load_dataset(eval.data);
    ensure_dir(out);
    const auto clf = obtain_classifier(eval.classifier, data, seed);

    std::vector<MetricReport> reports;
    if (param == "recon-pct") {
      const auto examples = training_examples(data);
      for (std::size_t i = 0; i < vals.size(); ++i) {
        const int pct = to_int(vals[i], "recon-pct");
        if (pct < 0 || pct > 100)
          throw Fail{ kUsage, "recon-pct values lie in [0, 100]" };
        auto tf = train_flags;
        tf.T = eval.T;
        tf.p_recon = pct / 100.0;
        std::cout << "training p_recon=" << number(tf.p_recon) << " for " << tf.steps << " steps\n" << std::flush;
        const auto trained = ptedit::train(tf.config(seed), examples);
        write_checkpoint(out / ("model_recon_" + vals[i] + ".bpm"), trained.model, trained.steps);
        reports.push_back(evaluate(&trained.model, clf, data, { methods[i] }, config)[0]);
      }
    } else {
      const Denoiser den = load_model(eval.model);
      reports = evaluate(&den, clf, data, methods, config);
    }
    write_sweep(out, param, vals, reports);
    return kOk;
  }
};

struct Eval {
  EvalFlags eval;
  fs::path out;
  int tr = 20;

  int run(std::uint64_t seed) const
  {
    // same path as `ablate --param tr --values <tr>`, writing the single report to --out
    EvalConfig config;
    config.T = eval.T;
    config.sampler = sampler_flag(eval.sampler);
    config.seed = seed;
    config.limit = eval.limit;
    const auto data = load_dataset(eval.data);
    const auto clf = obtain_classifier(eval.classifier, data, seed);
    const Denoiser den = load_model(eval.model);
    MethodSpec m;
    m.t_r = tr;
    const auto report = evaluate(&den, clf, data, { m }, config)[0];
    write_report(out, report);
    print_header();
    print_row(std::to_string(tr), report);
    return kOk;
  }
};

struct Render {
  fs::path input;
  fs::path out;
  std::string view = "iso";
  std::string color_by = "part";
  std::vector<std::string> metrics{ "gd", "lgd" };

  int run(std::uint64_t) const
  {
    if (input.extension() == ".json")
      return run_sweep();
    const auto v = tools::parse_view(view);
    if (!v)
      throw Fail{ kUsage, "--view must be front, side, top or iso" };
    const auto c = tools::parse_color_by(color_by);
    if (!c)
      throw Fail{ kUsage, "--color-by must be part, mask or none" };
    const auto rec = read_pcb_file(input);
    write_text(out, tools::render_cloud(rec.cloud, rec.mask ? &*rec.mask : nullptr, *v, *c));
    return kOk;
  }

  int run_sweep() const
  {
    std::ifstream in(input, std::ios::binary);
    if (!in)
      throw Fail{ kIo, "cannot open " + input.string() };
    nlohmann::json table;
    try {
      in >> table;
    } catch (const nlohmann::json::exception& e) {
      throw Fail{ kIo, input.string() + ": " + e.what() };
    }
    if (!table.contains("rows") || !table.contains("param"))
      throw Fail{ kIo, input.string() + " is not a sweep table" };
    std::vector<std::string> labels;
    std::vector<tools::Series> series;
    for (const auto& name : metrics)
      series.push_back({ name, {} });
    for (const auto& row : table["rows"]) {
      labels.push_back(row.at("value").get<std::string>());
      for (auto& s : series) {
        if (!row.contains(s.name))
          throw Fail{ kUsage, "sweep rows have no metric '" + s.name + "'" };
        const auto& v = row[s.name];
        s.y.push_back(v.is_number() ? v.get<double>() : NAN);
      }
    }
    write_text(out, tools::render_lines(table["param"].get<std::string>() + " sweep", labels, series));
    return kOk;
  }
};

int
exit_code(ErrorKind kind)
{
  switch (kind) {
    case ErrorKind::IoError:
    case ErrorKind::BadFormat:
    case ErrorKind::CheckpointMismatch: return kIo;
    case ErrorKind::Diverged: return kDiverged;
    default: return kUsage;
  }
}

} // namespace

int
main(int argc, char** argv)
{
  CLI::App app{ "Text-guided part editing of point clouds with a small inpainting diffusion model" };
  app.require_subcommand(1);
  app.fallthrough();
  std::uint64_t seed = 1;
  app.add_option("--seed", seed, "Master seed")->capture_default_str();

  GenData gen;
  auto* gen_cmd = app.add_subcommand("gen-data", "Generate a synthetic edit-triplet dataset");
  gen_cmd->add_option("--out", gen.out, "Output directory")->required();
  gen_cmd->add_option("--categories", gen.categories, "Comma separated subset of chair,table,lamp")->delimiter(',');
  gen_cmd->add_option("--n", gen.n, "Number of triplets")->capture_default_str();
  gen_cmd->add_option("--points", gen.points, "Points per cloud")->capture_default_str();
  gen_cmd->add_option("--split", gen.split, "Train fraction of the shapes")->capture_default_str();
  gen_cmd->add_option("--edits-per-shape", gen.edits_per_shape, "Triplets drawn per shape")->capture_default_str();

  Train tr;
  auto* train_cmd = app.add_subcommand("train", "Train the inpainting denoiser");
  train_cmd->add_option("--data", tr.data, "Dataset directory")->required();
  train_cmd->add_option("--out", tr.out, "Checkpoint path")->required();
  tr.flags.add(train_cmd, "--steps");
  train_cmd->add_option("--t", tr.flags.T, "Diffusion steps")->capture_default_str();
  train_cmd->add_option("--p-recon", tr.flags.p_recon, "Reconstruction sample probability")->capture_default_str();

  Edit ed;
  auto* edit_cmd = app.add_subcommand("edit", "Edit one point cloud with a text prompt");
  edit_cmd->add_option("--model", ed.model, "BPM1 checkpoint")->required();
  edit_cmd->add_option("--input", ed.input, "PCB1 input cloud")->required();
  edit_cmd->add_option("--prompt", ed.prompt, "Edit prompt")->required();
  edit_cmd->add_option("--out", ed.out, "PCB1 output path")->required();
  edit_cmd->add_option("--mask", ed.mask_file, "Edit mask: PCB1 with mask bits or one 0/1 per point");
  edit_cmd->add_option("--category", ed.category, "Category of the input (for part labels)")->capture_default_str();
  edit_cmd->add_option("--tr", ed.tr, "Blending start step t_r")->capture_default_str();
  edit_cmd->add_option("--t", ed.T, "Diffusion steps")->capture_default_str();
  edit_cmd->add_option("--sampler", ed.sampler, "deterministic or ancestral")->capture_default_str();

  Eval ev;
  auto* eval_cmd = app.add_subcommand("eval", "Evaluate blended editing on the test split");
  ev.eval.add(eval_cmd, true);
  eval_cmd->add_option("--out", ev.out, "Report path (JSON)")->required();
  eval_cmd->add_option("--tr", ev.tr, "Blending start step t_r")->capture_default_str();

  Ablate ab;
  auto* ablate_cmd = app.add_subcommand("ablate", "Sweep t_r, the reconstruction share or RePaint settings");
  ab.eval.add(ablate_cmd, false);
  ablate_cmd->add_option("--param", ab.param, "tr, recon-pct or repaint")->capture_default_str();
  ablate_cmd->add_option("--values", ab.values, "Comma separated values; repaint takes r:j pairs")->delimiter(',');
  ablate_cmd->add_option("--out", ab.out, "Output directory")->required();
  ablate_cmd->add_option("--tr", ab.tr, "t_r used by recon-pct models")->capture_default_str();
  ab.train_flags.steps = 2000;
  ab.train_flags.add(ablate_cmd, "--train-steps");

  Render rd;
  auto* render_cmd = app.add_subcommand("render", "Render a cloud, or a sweep table, to SVG");
  render_cmd->add_option("--input", rd.input, "PCB1 cloud or sweep.json")->required();
  render_cmd->add_option("--out", rd.out, "SVG path")->required();
  render_cmd->add_option("--view", rd.view, "front, side, top or iso")->capture_default_str();
  render_cmd->add_option("--color-by", rd.color_by, "part, mask or none")->capture_default_str();
  render_cmd->add_option("--metrics", rd.metrics, "Sweep metrics to plot")->delimiter(',');

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsage;
  }

  try {
    if (*gen_cmd)
      return gen.run(seed);
    if (*train_cmd)
      return tr.run(seed);
    if (*edit_cmd)
      return ed.run(seed);
    if (*eval_cmd)
      return ev.run(seed);
    if (*ablate_cmd)
      return ab.run(seed);
    return rd.run(seed);
  } catch (const Fail& f) {
    std::cerr << "error: " << f.message << '\n';
    return f.code;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_code(e.kind());
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kIo;
  }
}
