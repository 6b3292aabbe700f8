#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "aimclr/encoder.hpp"
#include "aimclr/skeleton.hpp"
#include "aimclr/training.hpp"

namespace aimclr {

struct EvalReport {
  std::string protocol;
  double top1 = 0.0;
  std::vector<double> per_class;         // accuracy per class (0 when a class has no test samples)
  std::vector<std::size_t> class_counts;  // test samples per class
  std::size_t num_train = 0;
  std::size_t num_test = 0;
  std::vector<std::string> streams;
  std::vector<double> weights;  // fusion weights, empty otherwise
  std::vector<int> labels;      // test labels
  std::vector<int> predictions;
  std::vector<std::vector<double>> scores;  // per test sample, one score per class
  std::vector<double> loss_history;         // classifier training loss per epoch, when trained

  std::string to_json() const;
  std::string table() const;
};

// Fills top1, per_class and class_counts. When `predictions` is empty it is
// filled with the score argmax, ties going to the lower class.
void finalize_report(EvalReport& r, std::size_t num_classes);

/// Pooled encoder features h for each sequence, [N, h], in input order.
/// Sequences must already be in the model's stream.
Tensor extract_features(const Encoder& encoder, const ParamSet& params,
                        const std::vector<SkeletonSequence>& seqs);

/// Cosine-similarity k-NN on precomputed features. Scores are vote fractions;
/// a tied vote goes to the tied class holding the nearest neighbor.
EvalReport knn_classify(const Tensor& train_features, const std::vector<int>& train_labels,
                        const Tensor& test_features, const std::vector<int>& test_labels,
                        std::size_t num_classes, std::size_t k_eval = 1);

struct LinearEvalConfig {
  std::size_t epochs = 200;
  double lr = 0.1;
  double momentum = 0.9;
  double weight_decay = 0.0;
  std::size_t batch_size = 0;  // 0 = full batch
  std::uint64_t seed = 7;
};

/// Affine layer + softmax cross-entropy on fixed features, standardized with
/// the train statistics. Scores are softmax probabilities.
EvalReport linear_classify(const Tensor& train_features, const std::vector<int>& train_labels,
                           const Tensor& test_features, const std::vector<int>& test_labels,
                           std::size_t num_classes, const LinearEvalConfig& cfg = {});

struct FinetuneConfig {
  std::size_t epochs = 30;
  double lr = 0.01;
  double momentum = 0.9;
  double weight_decay = 1e-4;
  std::size_t batch_size = 16;
  double label_fraction = 1.0;
  std::uint64_t seed = 7;
};

/// Per-class seeded subsample: floor(fraction * n_c) per class, leftover
/// slots to the largest remainders (lower class first), at least one per
/// class. Returns sorted indices.
std::vector<std::size_t> subsample_per_class(const std::vector<int>& labels, std::size_t num_classes,
                                             double fraction, std::uint64_t seed);

struct LabeledSet {
  std::vector<SkeletonSequence> sequences;
  std::vector<std::string> ids;
  std::size_t num_classes = 0;
};

LabeledSet load_labeled(const std::filesystem::path& manifest);
std::vector<int> labels_of(const std::vector<SkeletonSequence>& seqs, std::size_t num_classes);

// Model-level protocols. Sequences are raw (joint) data; each is converted to
// the model's stream first.
EvalReport knn_eval(const LoadedModel& model, const LabeledSet& train, const LabeledSet& test,
                    std::size_t k_eval = 1);
EvalReport linear_eval(const LoadedModel& model, const LabeledSet& train, const LabeledSet& test,
                       const LinearEvalConfig& cfg = {});
/// Trains every encoder parameter plus an affine classifier on h.
EvalReport finetune_eval(const LoadedModel& model, const LabeledSet& train, const LabeledSet& test,
                         const FinetuneConfig& cfg = {});

/// Weighted sum of per-stream class scores, then argmax. Reports must share
/// the same test labels.
EvalReport fuse_streams(const std::vector<EvalReport>& reports, const std::vector<double>& weights);
std::vector<double> default_fusion_weights(const std::vector<std::string>& streams);

/// One JSON object per line: {"id", "label", "h"}, in manifest order.
std::vector<std::string> embedding_records(const LoadedModel& model, const LabeledSet& set);
void export_embeddings(const std::filesystem::path& ckpt_dir, const std::filesystem::path& manifest,
                       const std::filesystem::path& out_path);

EvalReport load_report(const std::filesystem::path& path);

}  // namespace aimclr
