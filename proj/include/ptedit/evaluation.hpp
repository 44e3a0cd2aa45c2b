#pragma once

#include "ptedit/blend.hpp"
#include "ptedit/classifier.hpp"
#include "ptedit/denoiser.hpp"
#include "ptedit/synthgen.hpp"

#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace ptedit {

enum class EditMethod { Blended, InpaintOnly, Repaint, Identity, Target };

std::string_view to_string(EditMethod method);

/// One pipeline under evaluation. Identity and Target ignore the model and
/// output the source or the ground-truth target.
struct MethodSpec {
  EditMethod method = EditMethod::Blended;
  int t_r = 20;       // Blended only
  int repaint_r = 1;  // Repaint only
  int repaint_j = 1;

  std::string label() const; // e.g. "blended(t_r=20)"
};

struct EvalConfig {
  int T = 64;
  Sampler sampler = Sampler::Deterministic;
  std::uint64_t seed = 1;
  std::size_t limit = 0; // first `limit` test triplets; 0 = all
};

struct TripletRow {
  std::string id;
  Category category = Category::Chair;
  EditDescriptor descriptor;
  double gd = 0.0;
  double lgd = 0.0;
  double cd = 0.0;
  std::optional<double> dir_sim; // empty when a direction is undefined
  bool adherent = false;
  std::optional<double> recon_gd;  // methods with a reconstruction track
  std::optional<double> recon_lgd;
};

struct MetricReport {
  MethodSpec method;
  EvalConfig config;
  double gd = 0.0;
  double lgd = 0.0;
  double cd = 0.0;
  double fpd = 0.0;
  std::optional<double> dir_sim; // mean over rows where it is defined
  double adherence_rate = 0.0;
  std::size_t n = 0;
  std::vector<std::string> flags;
  std::vector<TripletRow> rows;
};

/// Classifier-feature centroids of the train split. e_general of a category is
/// the mean feature of its source clouds; e_edit of an edit kind (category,
/// part, attribute, direction) is the mean feature of its target clouds.
class FeatureCentroids {
public:
  FeatureCentroids(const PointClassifier& clf, const std::vector<EditTriplet>& data);
  const PointClassifier::Feature* general(Category category) const;
  const PointClassifier::Feature* edit(const EditDescriptor& descriptor) const;

private:
  std::map<Category, PointClassifier::Feature> general_;
  std::map<std::string, PointClassifier::Feature> edit_;
};

/// Runs every method on the test split of `data`. Methods that need one share a
/// single reconstruction trajectory per triplet; the sampling seed of triplet i
/// is mix_seed(config.seed, i). `den` may be null when only Identity and Target
/// are requested. Reports come back in the order of `methods`.
std::vector<MetricReport> evaluate(const Denoiser* den, const PointClassifier& clf,
                                   const std::vector<EditTriplet>& data, const std::vector<MethodSpec>& methods,
                                   const EvalConfig& config);

/// JSON: {"method", "params", "flags", "aggregate": {...}, "rows": [...]}.
void write_report(std::ostream& out, const MetricReport& report);
void write_report(const std::filesystem::path& path, const MetricReport& report);

/// Mean distance between point i of `input` and point i of `recon`, next to the
/// same statistic after shuffling the indices of `recon` with `seed`.
struct IndexConsistency {
  double aligned = 0.0;
  double permuted = 0.0;
};
IndexConsistency index_consistency(const Points& input, const Points& recon, std::uint64_t seed);

} // namespace ptedit
