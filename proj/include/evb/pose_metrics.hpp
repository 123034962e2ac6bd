#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "evb/pair_curation.hpp"
#include "evb/so3.hpp"

namespace evb {

/// Predicted absolute world-to-camera poses of both images, in the model's
/// own world frame. Image references are names, or decimal ids when
/// `by_id` is set.
struct PairPrediction {
  std::string scene_id;
  std::string image_a;
  std::string image_b;
  bool by_id = false;
  UnitQuaternion q_a, q_b;
  Translation3 t_a = Translation3::Zero();
  Translation3 t_b = Translation3::Zero();
};

enum class ExclusionReason { kDegeneratePredTranslation, kDegenerateGtTranslation };
std::string_view to_string(ExclusionReason r);

struct PoseErrorRecord {
  std::string scene_id;
  std::string image_a;
  std::string image_b;
  OverlapCategory category = OverlapCategory::kLarge;
  double rot_err = 0.0;                 // degrees, [0, 180]
  std::optional<double> trans_err;      // degrees, [0, 90]
  std::optional<ExclusionReason> excluded_reason;
};

struct MetricSummary {
  double mre = 0.0;
  std::map<double, double> ra;  // threshold -> fraction with rot_err < threshold
  std::optional<double> mte;
  std::optional<std::map<double, double>> ta;
  std::optional<double> auc;
  double auc_max = 30.0;
  std::size_t n_pairs = 0;
  std::size_t n_excluded = 0;
};

/// Relative quantities are formed from each side's absolute poses, so the
/// prediction's world frame never matters.
PoseErrorRecord pair_errors(const PairPrediction& pred, const ImagePair& gt);

/// Median; an even count averages the two middle values. Throws on empty.
double median(std::vector<double> values);

/// MRE / RA_t (strict err < t), MTE / TA_t over records that carry a
/// translation error, and AUC when every record has one.
MetricSummary summarize(std::span<const PoseErrorRecord> records,
                        std::span<const double> thresholds, double auc_max = 30.0);

/// (1/tau_max) * sum_{t=1..tau_max} fraction(max(rot, trans) < t).
/// Every record must carry trans_err.
double auc_at(std::span<const PoseErrorRecord> records, double tau_max);

struct RowError {
  std::uint64_t line = 0;
  std::string message;
};

struct PredictionFile {
  std::vector<PairPrediction> rows;
  std::vector<RowError> errors;
};

/// JSON Lines: {scene, image_a, image_b, qa:[w,x,y,z], ta:[x,y,z], qb, tb}.
PredictionFile parse_predictions(std::string_view text);
std::string prediction_to_json(const PairPrediction& p);

struct EvaluationOptions {
  std::vector<double> thresholds{15.0, 30.0};
  double auc_max = 30.0;
  bool strict = true;       // unmatched pairs are an error
  bool permissive = false;  // malformed rows are skipped instead of fatal
  unsigned threads = 1;
};

struct EvaluationReport {
  std::map<std::string, MetricSummary> buckets;  // large/small/none/all
  std::vector<PoseErrorRecord> records;          // in input pair order
  std::vector<std::string> unmatched;            // pairs with no prediction
  std::vector<std::string> unexpected;           // predictions with no pair
  std::vector<RowError> row_errors;
};

class EvaluationError : public std::runtime_error {
 public:
  EvaluationError(const std::string& msg, std::vector<std::string> unmatched,
                  std::vector<RowError> row_errors)
      : std::runtime_error(msg),
        unmatched(std::move(unmatched)),
        row_errors(std::move(row_errors)) {}
  std::vector<std::string> unmatched;
  std::vector<RowError> row_errors;
};

EvaluationReport evaluate_pairs(std::span<const ImagePair> pairs, const PredictionFile& preds,
                                const EvaluationOptions& opts = {});

std::string pair_key(const std::string& scene, const std::string& a, const std::string& b);

}  // namespace evb
