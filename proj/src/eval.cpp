#include "layerkit/eval.hpp"

#include <cmath>

#include <fmt/format.h>
#include <json.hpp>

#include "layerkit/error.hpp"
#include "layerkit/parallel.hpp"

namespace layerkit {

using ordered_json = nlohmann::ordered_json;

std::uint64_t ConfusionMatrix::row_sum(int truth) const {
  std::uint64_t s = 0;
  for (std::uint64_t v : counts_[GraspClass(truth).index()]) s += v;
  return s;
}

std::uint64_t ConfusionMatrix::total() const {
  std::uint64_t s = 0;
  for (int c = 0; c < kNumClasses; ++c) s += row_sum(c);
  return s;
}

ConfusionMatrix evaluate(const ReadingClassifier& classifier, const Dataset& val) {
  if (val.empty() || val.total_readings() == 0) {
    throw Error(ErrorKind::kEmptyDataset, "validation set is empty");
  }
  ConfusionMatrix cm;
  for (const Episode& ep : val.episodes()) {
    for (const SensorReading& r : ep.readings) {
      cm.add(ep.label, classifier.predict(r));
    }
  }
  return cm;
}

NormalizedConfusion row_normalize(const ConfusionMatrix& cm) {
  NormalizedConfusion out;
  for (int r = 0; r < kNumClasses; ++r) {
    const std::uint64_t sum = cm.row_sum(r);
    out.supported[r] = sum > 0;
    if (sum == 0) continue;
    for (int c = 0; c < kNumClasses; ++c) {
      out.rates[r][c] = static_cast<double>(cm.at(r, c)) / static_cast<double>(sum);
    }
  }
  return out;
}

double balanced_accuracy(const ConfusionMatrix& cm) {
  const NormalizedConfusion norm = row_normalize(cm);
  double sum = 0.0;
  int supported = 0;
  for (int c = 0; c < kNumClasses; ++c) {
    if (!norm.supported[c]) continue;
    sum += norm.rates[c][c];
    ++supported;
  }
  if (supported == 0) throw Error(ErrorKind::kNoSupport, "confusion matrix is empty");
  return sum / supported;
}

CvReport cross_validate(const Dataset& ds, const CvSettings& settings) {
  const std::vector<Split> folds =
      make_cv_folds(ds, settings.folds, settings.train_fraction, settings.seed);
  for (std::size_t f = 0; f < folds.size(); ++f) {
    if (folds[f].train.total_readings() < static_cast<std::size_t>(settings.k)) {
      throw Error(ErrorKind::kInsufficientData,
                  fmt::format("InsufficientData: fold {} has {} training readings, k = {}",
                              f, folds[f].train.total_readings(), settings.k));
    }
  }

  std::vector<NormalizedConfusion> per_fold(folds.size());
  std::vector<double> fold_ba(folds.size());
  parallel_for(folds.size(), [&](std::size_t f) {
    const KnnModel model = KnnModel::fit(folds[f].train, settings.k);
    const ConfusionMatrix cm = evaluate(model, folds[f].val);
    per_fold[f] = row_normalize(cm);
    fold_ba[f] = balanced_accuracy(cm);
  });

  CvReport report;
  report.folds = folds.size();
  report.k = settings.k;
  report.train_fraction = settings.train_fraction;
  report.seed = settings.seed;
  for (const NormalizedConfusion& nc : per_fold) {
    for (int r = 0; r < kNumClasses; ++r) {
      if (!nc.supported[r]) continue;
      ++report.class_support[r];
      for (int c = 0; c < kNumClasses; ++c) report.mean_confusion[r][c] += nc.rates[r][c];
    }
  }
  for (int r = 0; r < kNumClasses; ++r) {
    if (report.class_support[r] == 0) continue;
    for (int c = 0; c < kNumClasses; ++c) {
      report.mean_confusion[r][c] /= static_cast<double>(report.class_support[r]);
    }
    report.per_class_accuracy[r] = report.mean_confusion[r][r];
  }

  double mean = 0.0;
  for (double v : fold_ba) mean += v;
  mean /= static_cast<double>(fold_ba.size());
  double ss = 0.0;
  for (double v : fold_ba) ss += (v - mean) * (v - mean);
  report.balanced_accuracy_mean = mean;
  report.balanced_accuracy_std =
      fold_ba.size() > 1 ? std::sqrt(ss / static_cast<double>(fold_ba.size() - 1)) : 0.0;
  report.fold_balanced_accuracy = std::move(fold_ba);
  return report;
}

std::string cv_report_to_json(const CvReport& r) {
  ordered_json obj;
  obj["folds"] = r.folds;
  obj["k"] = r.k;
  obj["train_fraction"] = r.train_fraction;
  obj["seed"] = r.seed;
  obj["mean_confusion"] = r.mean_confusion;
  obj["per_class_accuracy"] = r.per_class_accuracy;
  obj["class_support"] = r.class_support;
  obj["balanced_accuracy_mean"] = r.balanced_accuracy_mean;
  obj["balanced_accuracy_std"] = r.balanced_accuracy_std;
  obj["fold_balanced_accuracy"] = r.fold_balanced_accuracy;
  return obj.dump(2) + "\n";
}

CvReport cv_report_from_json(const std::string& text) {
  try {
    const auto obj = ordered_json::parse(text);
    CvReport r;
    r.folds = obj.at("folds").get<std::size_t>();
    r.k = obj.at("k").get<int>();
    r.train_fraction = obj.at("train_fraction").get<double>();
    r.seed = obj.at("seed").get<std::uint64_t>();
    r.mean_confusion = obj.at("mean_confusion").get<Matrix4>();
    r.per_class_accuracy = obj.at("per_class_accuracy").get<std::array<double, kNumClasses>>();
    r.class_support = obj.at("class_support").get<std::array<std::size_t, kNumClasses>>();
    r.balanced_accuracy_mean = obj.at("balanced_accuracy_mean").get<double>();
    r.balanced_accuracy_std = obj.at("balanced_accuracy_std").get<double>();
    r.fold_balanced_accuracy = obj.at("fold_balanced_accuracy").get<std::vector<double>>();
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::kInvalidArgument, fmt::format("cv report: {}", e.what()));
  }
}

std::string format_cv_report(const CvReport& r) {
  std::string out = fmt::format("{}-fold cross-validation, k = {}, train fraction {:.2f}\n",
                                r.folds, r.k, r.train_fraction);
  out += fmt::format("{:<14}{:>8}{:>8}{:>8}{:>8}{:>10}\n", "class \\ pred", "0", "1",
                     "2", "3", "folds");
  for (int row = 0; row < kNumClasses; ++row) {
    out += fmt::format("{:<14}", row);
    for (int c = 0; c < kNumClasses; ++c) {
      out += fmt::format("{:>8.3f}", r.mean_confusion[row][c]);
    }
    out += fmt::format("{:>10}\n", r.class_support[row]);
  }
  out += fmt::format("balanced accuracy {:.2f}±{:.2f}\n", r.balanced_accuracy_mean,
                     r.balanced_accuracy_std);
  return out;
}

}  // namespace layerkit
