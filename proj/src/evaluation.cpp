#include "ptedit/evaluation.hpp"

#include "ptedit/error.hpp"
#include "ptedit/metrics.hpp"
#include "ptedit/prompts.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <fstream>
#include <numeric>
#include <random>

namespace ptedit {

std::string_view
to_string(EditMethod method)
{
  switch (method) {
    case EditMethod::Blended: return "blended";
    case EditMethod::InpaintOnly: return "inpaint-only";
    case EditMethod::Repaint: return "repaint";
    case EditMethod::Identity: return "identity";
    case EditMethod::Target: return "target";
  }
  return "?";
}

std::string
MethodSpec::label() const
{
  std::string out(to_string(method));
  if (method == EditMethod::Blended)
    out += "(t_r=" + std::to_string(t_r) + ")";
  else if (method == EditMethod::Repaint)
    out += "(r=" + std::to_string(repaint_r) + ",j=" + std::to_string(repaint_j) + ")";
  return out;
}

namespace {

std::string
edit_key(const EditDescriptor& d)
{
  return std::string(to_string(d.category)) + "/" + d.part + "/" + d.attribute + "/" + std::string(to_string(d.direction));
}

bool
needs_model(EditMethod m)
{
  return m == EditMethod::Blended || m == EditMethod::InpaintOnly || m == EditMethod::Repaint;
}

bool
needs_reconstruction(EditMethod m)
{
  return m == EditMethod::Blended || m == EditMethod::Repaint;
}

Eigen::VectorXd
as_vector(const PointClassifier::Feature& f)
{
  return f.transpose();
}

bool
safe_adherence(const EditTriplet& t, const Points& output)
{
  try {
    return adherence(t.source_params, t.source_scale, t.source.points, output, t.mask, t.descriptor);
  } catch (const Error& e) {
    // an output that cannot be measured does not count as following the prompt
    if (e.kind() == ErrorKind::TooFewPoints || e.kind() == ErrorKind::EmptyRegion)
      return false;
    throw;
  }
}

} // namespace

FeatureCentroids::FeatureCentroids(const PointClassifier& clf, const std::vector<EditTriplet>& data)
{
  std::map<Category, std::size_t> n_general;
  std::map<std::string, std::size_t> n_edit;
  for (const auto& t : data) {
    if (t.split != Split::Train)
      continue;
    const auto cat = t.descriptor.category;
    const auto src = clf.features(t.source.points);
    auto [g, fresh_g] = general_.try_emplace(cat, PointClassifier::Feature::Zero(src.size()));
    g->second += src;
    ++n_general[cat];
    const auto key = edit_key(t.descriptor);
    const auto tgt = clf.features(t.target.points);
    auto [e, fresh_e] = edit_.try_emplace(key, PointClassifier::Feature::Zero(tgt.size()));
    e->second += tgt;
    ++n_edit[key];
  }
  for (auto& [cat, f] : general_)
    f /= static_cast<double>(n_general[cat]);
  for (auto& [key, f] : edit_)
    f /= static_cast<double>(n_edit[key]);
}

const PointClassifier::Feature*
FeatureCentroids::general(Category category) const
{
  const auto it = general_.find(category);
  return it == general_.end() ? nullptr : &it->second;
}

const PointClassifier::Feature*
FeatureCentroids::edit(const EditDescriptor& descriptor) const
{
  const auto it = edit_.find(edit_key(descriptor));
  return it == edit_.end() ? nullptr : &it->second;
}

std::vector<MetricReport>
evaluate(const Denoiser* den, const PointClassifier& clf, const std::vector<EditTriplet>& data,
         const std::vector<MethodSpec>& methods, const EvalConfig& config)
{
  bool any_model = false, any_recon = false;
  for (const auto& m : methods) {
    any_model |= needs_model(m.method);
    any_recon |= needs_reconstruction(m.method);
    if (m.method == EditMethod::Blended && (m.t_r < 0 || m.t_r > config.T))
      throw Error(ErrorKind::InvalidParams, "t_r must lie in [0, T]");
    if (m.method == EditMethod::Repaint && (m.repaint_r < 1 || m.repaint_j < 1))
      throw Error(ErrorKind::InvalidParams, "RePaint needs r >= 1 and j >= 1");
  }
  if (any_model && den == nullptr)
    throw Error(ErrorKind::InvalidParams, "model-based methods need a denoiser");

  std::vector<const EditTriplet*> test;
  for (const auto& t : data)
    if (t.split == Split::Test && (config.limit == 0 || test.size() < config.limit))
      test.push_back(&t);
  if (test.empty())
    throw Error(ErrorKind::InvalidParams, "dataset has no test triplets");

  const FeatureCentroids centroids(clf, data);
  std::vector<MetricReport> reports(methods.size());
  std::vector<std::vector<Points>> outputs(methods.size());
  for (std::size_t m = 0; m < methods.size(); ++m) {
    reports[m].method = methods[m];
    reports[m].config = config;
    if (methods[m].method == EditMethod::Blended && methods[m].t_r == config.T)
      reports[m].flags.push_back("inpaint-at-every-step");
  }

  std::vector<Points> inputs;
  for (std::size_t i = 0; i < test.size(); ++i) {
    const auto& t = *test[i];
    inputs.push_back(t.source.points);
    const TokenIds prompt = tokenize(t.prompt, TokenizeMode::Lenient);
    const BlendConfig blend{ config.T, 0, config.sampler, mix_seed(config.seed, i) };
    const auto oracle = any_model ? model_oracle(*den) : DenoiserOracle{};
    std::vector<Points> recon;
    if (any_recon)
      recon = reconstruct(t.source, oracle, blend);

    const auto e_in = clf.features(t.source.points);
    const auto* e_general = centroids.general(t.descriptor.category);
    const auto* e_edit = centroids.edit(t.descriptor);

    for (std::size_t m = 0; m < methods.size(); ++m) {
      const auto& spec = methods[m];
      Points out;
      switch (spec.method) {
        case EditMethod::Blended: {
          auto c = blend;
          c.t_r = spec.t_r;
          out = blended_edit(t.source, t.mask, prompt, oracle, c, recon).output;
          break;
        }
        case EditMethod::InpaintOnly: out = inpaint_only(t.source, t.mask, prompt, oracle, blend); break;
        case EditMethod::Repaint:
          out = repaint_baseline(t.source, t.mask, prompt, oracle, blend, spec.repaint_r, spec.repaint_j, recon).output;
          break;
        case EditMethod::Identity: out = t.source.points; break;
        case EditMethod::Target: out = t.target.points; break;
      }

      TripletRow row;
      row.id = t.id;
      row.category = t.descriptor.category;
      row.descriptor = t.descriptor;
      const PointCloud out_cloud(out);
      row.gd = chamfer(t.source.points, out);
      row.lgd = masked_chamfer(t.source, out_cloud, t.mask, t.mask);
      row.cd = class_distortion(clf, t.source.points, out, t.descriptor.category);
      if (e_general != nullptr && e_edit != nullptr) {
        try {
          row.dir_sim = directional_similarity(as_vector(e_in), as_vector(clf.features(out)), as_vector(*e_general),
                                               as_vector(*e_edit));
        } catch (const Error& e) {
          if (e.kind() != ErrorKind::ZeroDelta)
            throw;
        }
      }
      row.adherent = safe_adherence(t, out);
      if (needs_reconstruction(spec.method)) {
        row.recon_gd = chamfer(t.source.points, recon[0]);
        row.recon_lgd = masked_chamfer(t.source, PointCloud(recon[0]), t.mask, t.mask);
      }
      reports[m].rows.push_back(std::move(row));
      outputs[m].push_back(std::move(out));
    }
  }

  for (std::size_t m = 0; m < methods.size(); ++m) {
    auto& r = reports[m];
    r.n = r.rows.size();
    const double n = static_cast<double>(r.n);
    double dir_sum = 0.0;
    std::size_t dir_n = 0;
    std::size_t adherent = 0;
    for (const auto& row : r.rows) {
      r.gd += row.gd;
      r.lgd += row.lgd;
      r.cd += row.cd;
      adherent += row.adherent;
      if (row.dir_sim) {
        dir_sum += *row.dir_sim;
        ++dir_n;
      }
    }
    r.gd /= n;
    r.lgd /= n;
    r.cd /= n;
    r.adherence_rate = static_cast<double>(adherent) / n;
    if (dir_n > 0)
      r.dir_sim = dir_sum / static_cast<double>(dir_n);
    r.fpd = fpd(clf, inputs, outputs[m]);
  }
  return reports;
}

namespace {

nlohmann::ordered_json
optional_number(const std::optional<double>& v)
{
  return v ? nlohmann::ordered_json(*v) : nlohmann::ordered_json(nullptr);
}

} // namespace

void
write_report(std::ostream& out, const MetricReport& r)
{
  using nlohmann::ordered_json;
  ordered_json j;
  j["method"] = to_string(r.method.method);
  ordered_json params;
  params["label"] = r.method.label();
  if (r.method.method == EditMethod::Blended)
    params["t_r"] = r.method.t_r;
  if (r.method.method == EditMethod::Repaint) {
    params["r"] = r.method.repaint_r;
    params["j"] = r.method.repaint_j;
  }
  params["T"] = r.config.T;
  params["sampler"] = to_string(r.config.sampler);
  params["seed"] = r.config.seed;
  j["params"] = params;
  j["flags"] = r.flags;
  ordered_json agg;
  agg["n"] = r.n;
  agg["gd"] = r.gd;
  agg["lgd"] = r.lgd;
  agg["cd"] = r.cd;
  agg["fpd"] = r.fpd;
  agg["dir_sim"] = optional_number(r.dir_sim);
  agg["adherence_rate"] = r.adherence_rate;
  j["aggregate"] = agg;
  ordered_json rows = ordered_json::array();
  for (const auto& row : r.rows) {
    ordered_json o;
    o["id"] = row.id;
    o["category"] = to_string(row.category);
    o["part"] = row.descriptor.part;
    o["attribute"] = row.descriptor.attribute;
    o["direction"] = to_string(row.descriptor.direction);
    o["gd"] = row.gd;
    o["lgd"] = row.lgd;
    o["cd"] = row.cd;
    o["dir_sim"] = optional_number(row.dir_sim);
    o["adherent"] = row.adherent;
    o["recon_gd"] = optional_number(row.recon_gd);
    o["recon_lgd"] = optional_number(row.recon_lgd);
    rows.push_back(std::move(o));
  }
  j["rows"] = std::move(rows);
  out << j.dump(2) << '\n';
}

void
write_report(const std::filesystem::path& path, const MetricReport& report)
{
  std::ofstream out(path, std::ios::binary);
  if (!out)
    throw Error(ErrorKind::IoError, "cannot write " + path.string());
  write_report(out, report);
  if (!out)
    throw Error(ErrorKind::IoError, "failed writing " + path.string());
}

IndexConsistency
index_consistency(const Points& input, const Points& recon, std::uint64_t seed)
{
  if (input.rows() != recon.rows() || input.rows() == 0)
    throw Error(ErrorKind::LengthMismatch, "index consistency needs equally sized, non-empty clouds");
  std::vector<Eigen::Index> perm(static_cast<std::size_t>(input.rows()));
  std::iota(perm.begin(), perm.end(), Eigen::Index{ 0 });
  std::mt19937_64 rng(seed);
  std::shuffle(perm.begin(), perm.end(), rng);
  IndexConsistency out;
  for (Eigen::Index i = 0; i < input.rows(); ++i) {
    out.aligned += (input.row(i) - recon.row(i)).norm();
    out.permuted += (input.row(i) - recon.row(perm[static_cast<std::size_t>(i)])).norm();
  }
  out.aligned /= static_cast<double>(input.rows());
  out.permuted /= static_cast<double>(input.rows());
  return out;
}

} // namespace ptedit
