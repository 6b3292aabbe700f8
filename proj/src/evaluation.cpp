#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <thread>

#include <json.hpp>

#include "aimclr/evaluation.hpp"

namespace aimclr {

using nlohmann::json;

namespace {

void check_labels(const std::vector<int>& labels, std::size_t num_classes, const char* what) {
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= num_classes) {
      throw std::invalid_argument(std::string(what) + ": label " + std::to_string(labels[i]) + " of sample " +
                                  std::to_string(i) + " is outside [0, " + std::to_string(num_classes) + ")");
    }
  }
}

void check_features(const Tensor& f, const std::vector<int>& labels, const char* what) {
  if (f.rank() != 2 || f.dim(0) != labels.size()) {
    throw ShapeError(std::string(what) + ": features " + shape_str(f.shape()) + " do not match " +
                     std::to_string(labels.size()) + " labels");
  }
}

std::string fixed(double v, int digits) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

Tensor one_hot(const std::vector<int>& labels, std::size_t num_classes) {
  std::vector<double> v(labels.size() * num_classes, 0.0);
  for (std::size_t i = 0; i < labels.size(); ++i) v[i * num_classes + static_cast<std::size_t>(labels[i])] = 1.0;
  return Tensor::from({labels.size(), num_classes}, std::move(v));
}

Tensor rows(const Tensor& x, const std::vector<std::size_t>& idx) {
  const std::size_t d = x.dim(1);
  std::vector<double> v(idx.size() * d);
  const auto src = x.data();
  for (std::size_t i = 0; i < idx.size(); ++i) {
    std::copy_n(src.begin() + static_cast<std::ptrdiff_t>(idx[i] * d), d, v.begin() + static_cast<std::ptrdiff_t>(i * d));
  }
  return Tensor::from({idx.size(), d}, std::move(v));
}

template <typename T>
std::vector<T> pick(const std::vector<T>& v, const std::vector<std::size_t>& idx) {
  std::vector<T> out;
  out.reserve(idx.size());
  for (std::size_t i : idx) out.push_back(v[i]);
  return out;
}

// Per-column mean and standard deviation (floored at 1e-8).
std::pair<Tensor, Tensor> column_stats(const Tensor& x) {
  const std::size_t n = x.dim(0), d = x.dim(1);
  std::vector<double> mu(d, 0.0), sd(d, 0.0);
  const auto v = x.data();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < d; ++j) mu[j] += v[i * d + j];
  }
  for (double& m : mu) m /= static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < d; ++j) sd[j] += (v[i * d + j] - mu[j]) * (v[i * d + j] - mu[j]);
  }
  for (double& s : sd) s = std::max(std::sqrt(s / static_cast<double>(n)), 1e-8);
  return {Tensor::from({d}, std::move(mu)), Tensor::from({d}, std::move(sd))};
}

Tensor cross_entropy(const Tensor& logits, const Tensor& targets) {
  return neg(mean(sum(mul(targets, log_softmax(logits, 1)), 1)));
}

std::vector<std::vector<double>> to_rows(const Tensor& t) {
  const std::size_t n = t.dim(0), d = t.dim(1);
  std::vector<std::vector<double>> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i].assign(t.data().begin() + i * d, t.data().begin() + (i + 1) * d);
  return out;
}

ParamSet classifier_params(std::size_t in, std::size_t classes) {
  ParamSet p;
  p.add("classifier.weight", Tensor::zeros({in, classes}, true));
  p.add("classifier.bias", Tensor::zeros({classes}, true));
  return p;
}

ParamSet zeros_like(const ParamSet& p) {
  ParamSet v = p.clone(false);
  for (auto& e : v.entries()) {
    auto d = e.value.mutable_data();
    std::fill(d.begin(), d.end(), 0.0);
  }
  return v;
}

Tensor classify(const ParamSet& clf, const Tensor& features, const Tensor& mu, const Tensor& sd) {
  const Tensor x = div(sub(features, mu), sd);
  return add(matmul(x, clf.get("classifier.weight")), clf.get("classifier.bias"));
}

}  // namespace

// ---------------------------------------------------------------------------
// Reports

void finalize_report(EvalReport& r, std::size_t num_classes) {
  if (r.scores.size() != r.labels.size()) throw std::invalid_argument("report: scores and labels differ in count");
  check_labels(r.labels, num_classes, "report");
  r.num_test = r.labels.size();
  const bool given = !r.predictions.empty();
  if (given && r.predictions.size() != r.num_test) throw std::invalid_argument("report: prediction count differs");
  if (!given) r.predictions.assign(r.num_test, 0);
  r.per_class.assign(num_classes, 0.0);
  r.class_counts.assign(num_classes, 0);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < r.num_test; ++i) {
    const auto& s = r.scores[i];
    if (s.size() != num_classes) throw std::invalid_argument("report: score vector has the wrong class count");
    const int pred = given ? r.predictions[i] : static_cast<int>(std::max_element(s.begin(), s.end()) - s.begin());
    r.predictions[i] = pred;
    const auto c = static_cast<std::size_t>(r.labels[i]);
    ++r.class_counts[c];
    if (pred == r.labels[i]) {
      ++correct;
      r.per_class[c] += 1.0;
    }
  }
  for (std::size_t c = 0; c < num_classes; ++c) {
    if (r.class_counts[c] > 0) r.per_class[c] /= static_cast<double>(r.class_counts[c]);
  }
  r.top1 = r.num_test == 0 ? 0.0 : static_cast<double>(correct) / static_cast<double>(r.num_test);
}

std::string EvalReport::to_json() const {
  json j{{"protocol", protocol},
         {"top1", top1},
         {"per_class", per_class},
         {"class_counts", class_counts},
         {"num_train", num_train},
         {"num_test", num_test},
         {"streams", streams},
         {"weights", weights},
         {"labels", labels},
         {"predictions", predictions},
         {"scores", scores}};
  if (!loss_history.empty()) j["loss_history"] = loss_history;
  return j.dump();
}

std::string EvalReport::table() const {
  std::ostringstream os;
  std::string stream_list;
  for (std::size_t i = 0; i < streams.size(); ++i) {
    stream_list += (i ? "+" : "") + streams[i];
    if (i < weights.size()) stream_list += "(" + fixed(weights[i], 2) + ")";
  }
  os << "protocol  " << protocol << "\n"
     << "streams   " << stream_list << "\n"
     << "train/test " << num_train << "/" << num_test << "\n"
     << "top-1     " << fixed(100.0 * top1, 2) << "%\n"
     << "class  count  accuracy\n";
  for (std::size_t c = 0; c < per_class.size(); ++c) {
    char line[64];
    std::snprintf(line, sizeof line, "%5zu  %5zu  %7.2f%%\n", c, class_counts[c], 100.0 * per_class[c]);
    os << line;
  }
  return os.str();
}

EvalReport load_report(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open report " + path.string());
  try {
    const json j = json::parse(in);
    EvalReport r;
    r.protocol = j.at("protocol").get<std::string>();
    r.num_train = j.at("num_train").get<std::size_t>();
    r.streams = j.at("streams").get<std::vector<std::string>>();
    r.weights = j.at("weights").get<std::vector<double>>();
    r.labels = j.at("labels").get<std::vector<int>>();
    r.scores = j.at("scores").get<std::vector<std::vector<double>>>();
    r.predictions = j.at("predictions").get<std::vector<int>>();
    finalize_report(r, j.at("per_class").size());
    return r;
  } catch (const json::exception& e) {
    throw std::runtime_error(path.string() + ": not an evaluation report: " + e.what());
  }
}

// ---------------------------------------------------------------------------
// Features and classifiers

Tensor extract_features(const Encoder& encoder, const ParamSet& params, const std::vector<SkeletonSequence>& seqs) {
  const std::size_t n = seqs.size();
  const std::size_t d = encoder.config().feature_dim();
  std::vector<double> out(n * d);
  constexpr std::size_t kChunk = 32;
  const std::size_t chunks = (n + kChunk - 1) / kChunk;
  const std::size_t workers = std::max<std::size_t>(1, std::min(worker_count(), chunks));
  auto work = [&](std::size_t w) {
    NoGradGuard no_grad;
    for (std::size_t c = w; c < chunks; c += workers) {
      std::vector<const SkeletonSequence*> batch;
      for (std::size_t i = c * kChunk; i < std::min(n, (c + 1) * kChunk); ++i) batch.push_back(&seqs[i]);
      const Tensor h = encoder.encode(params, batch).h;
      std::copy(h.data().begin(), h.data().end(), out.begin() + static_cast<std::ptrdiff_t>(c * kChunk * d));
    }
  };
  if (workers == 1) {
    work(0);
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work, w);
    for (auto& t : pool) t.join();
  }
  return Tensor::from({n, d}, std::move(out));
}

EvalReport knn_classify(const Tensor& train_f, const std::vector<int>& train_labels, const Tensor& test_f,
                        const std::vector<int>& test_labels, std::size_t num_classes, std::size_t k_eval) {
  check_features(train_f, train_labels, "knn");
  check_features(test_f, test_labels, "knn");
  check_labels(train_labels, num_classes, "knn train");
  check_labels(test_labels, num_classes, "knn test");
  if (k_eval == 0) throw std::invalid_argument("knn: k must be at least 1");
  if (train_labels.empty()) throw std::invalid_argument("knn: empty train set");
  if (train_f.dim(1) != test_f.dim(1)) throw ShapeError("knn: train and test feature dims differ");
  const std::size_t d = train_f.dim(1), n_train = train_labels.size();

  auto unit_rows = [d](const Tensor& f) {
    std::vector<double> v(f.data().begin(), f.data().end());
    for (std::size_t i = 0; i < v.size() / d; ++i) {
      double norm = 0.0;
      for (std::size_t j = 0; j < d; ++j) norm += v[i * d + j] * v[i * d + j];
      norm = std::max(std::sqrt(norm), 1e-12);
      for (std::size_t j = 0; j < d; ++j) v[i * d + j] /= norm;
    }
    return v;
  };
  const std::vector<double> tr = unit_rows(train_f), te = unit_rows(test_f);

  EvalReport r;
  r.protocol = "knn";
  r.num_train = n_train;
  r.labels = test_labels;
  const std::size_t k = std::min(k_eval, n_train);
  std::vector<double> sims(n_train);
  std::vector<std::size_t> idx(n_train);
  for (std::size_t i = 0; i < test_labels.size(); ++i) {
    for (std::size_t j = 0; j < n_train; ++j) {
      double s = 0.0;
      for (std::size_t c = 0; c < d; ++c) s += te[i * d + c] * tr[j * d + c];
      sims[j] = s;
    }
    std::iota(idx.begin(), idx.end(), 0);
    std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k), idx.end(),
                      [&](std::size_t a, std::size_t b) { return sims[a] > sims[b] || (sims[a] == sims[b] && a < b); });
    std::vector<double> votes(num_classes, 0.0);
    for (std::size_t j = 0; j < k; ++j) votes[static_cast<std::size_t>(train_labels[idx[j]])] += 1.0;
    const double best = *std::max_element(votes.begin(), votes.end());
    // Walk neighbors nearest first; the first one in a top-voted class wins.
    std::size_t winner = 0;
    for (std::size_t j = 0; j < k; ++j) {
      const auto c = static_cast<std::size_t>(train_labels[idx[j]]);
      if (votes[c] == best) {
        winner = c;
        break;
      }
    }
    std::vector<double> score(num_classes);
    for (std::size_t c = 0; c < num_classes; ++c) score[c] = votes[c] / static_cast<double>(k);
    r.scores.push_back(std::move(score));
    r.predictions.push_back(static_cast<int>(winner));
  }
  finalize_report(r, num_classes);
  return r;
}

EvalReport linear_classify(const Tensor& train_f, const std::vector<int>& train_labels, const Tensor& test_f,
                           const std::vector<int>& test_labels, std::size_t num_classes, const LinearEvalConfig& cfg) {
  check_features(train_f, train_labels, "linear");
  check_features(test_f, test_labels, "linear");
  check_labels(train_labels, num_classes, "linear train");
  check_labels(test_labels, num_classes, "linear test");
  if (train_labels.empty()) throw std::invalid_argument("linear: empty train set");
  const auto [mu, sd] = column_stats(train_f);
  ParamSet clf = classifier_params(train_f.dim(1), num_classes);
  ParamSet velocity = zeros_like(clf);
  const Tensor targets = one_hot(train_labels, num_classes);
  const std::size_t n = train_labels.size();
  const std::size_t bs = cfg.batch_size == 0 ? n : std::min(cfg.batch_size, n);

  EvalReport r;
  r.protocol = "linear";
  r.num_train = n;
  r.labels = test_labels;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    if (bs < n) order = epoch_order(cfg.seed, epoch, n);
    double total = 0.0;
    for (std::size_t start = 0; start < n; start += bs) {
      const std::vector<std::size_t> idx(order.begin() + static_cast<std::ptrdiff_t>(start),
                                         order.begin() + static_cast<std::ptrdiff_t>(std::min(n, start + bs)));
      Tape tape;
      const Tensor loss = bs == n ? cross_entropy(classify(clf, train_f, mu, sd), targets)
                                  : cross_entropy(classify(clf, rows(train_f, idx), mu, sd), rows(targets, idx));
      total += loss.item() * static_cast<double>(idx.size());
      tape.backward(loss);
      sgd_update(clf, velocity, cfg.lr, cfg.momentum, cfg.weight_decay);
      clf.zero_grad();
    }
    r.loss_history.push_back(total / static_cast<double>(n));
  }
  {
    NoGradGuard no_grad;
    r.scores = to_rows(softmax(classify(clf, test_f, mu, sd), 1));
  }
  finalize_report(r, num_classes);
  return r;
}

std::vector<std::size_t> subsample_per_class(const std::vector<int>& labels, std::size_t num_classes, double fraction,
                                             std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction <= 1.0)) throw std::invalid_argument("label fraction must be in (0, 1]");
  check_labels(labels, num_classes, "subsample");
  std::vector<std::vector<std::size_t>> by_class(num_classes);
  for (std::size_t i = 0; i < labels.size(); ++i) by_class[static_cast<std::size_t>(labels[i])].push_back(i);

  std::vector<std::size_t> take(num_classes);
  std::vector<double> remainder(num_classes);
  std::size_t assigned = 0;
  for (std::size_t c = 0; c < num_classes; ++c) {
    const double exact = fraction * static_cast<double>(by_class[c].size());
    take[c] = static_cast<std::size_t>(std::floor(exact));
    remainder[c] = exact - static_cast<double>(take[c]);
    assigned += take[c];
  }
  const auto target = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(labels.size())));
  std::vector<std::size_t> order(num_classes);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return remainder[a] > remainder[b]; });
  for (std::size_t i = 0; assigned < target && i < num_classes; ++i) {
    if (take[order[i]] < by_class[order[i]].size()) {
      ++take[order[i]];
      ++assigned;
    }
  }
  std::vector<std::size_t> out;
  for (std::size_t c = 0; c < num_classes; ++c) {
    if (by_class[c].empty()) continue;
    take[c] = std::clamp<std::size_t>(take[c], 1, by_class[c].size());
    Rng rng = make_rng(seed, {0xF2AC, c});
    auto& members = by_class[c];
    for (std::size_t i = 0; i < take[c]; ++i) {
      const std::size_t j = i + static_cast<std::size_t>(rng() % (members.size() - i));
      std::swap(members[i], members[j]);
    }
    out.insert(out.end(), members.begin(), members.begin() + static_cast<std::ptrdiff_t>(take[c]));
  }
  std::sort(out.begin(), out.end());
  return out;
}

// ---------------------------------------------------------------------------
// Model-level protocols

LabeledSet load_labeled(const std::filesystem::path& manifest) {
  const DatasetManifest m = load_manifest(manifest);
  LabeledSet s;
  s.num_classes = m.num_classes;
  s.sequences = load_dataset(m);
  for (const auto& e : m.entries) s.ids.push_back(e.path);
  return s;
}

std::vector<int> labels_of(const std::vector<SkeletonSequence>& seqs, std::size_t num_classes) {
  std::vector<int> labels;
  labels.reserve(seqs.size());
  for (std::size_t i = 0; i < seqs.size(); ++i) {
    if (!seqs[i].label) throw std::invalid_argument("sample " + std::to_string(i) + " has no label");
    labels.push_back(*seqs[i].label);
  }
  check_labels(labels, num_classes, "dataset");
  return labels;
}

namespace {

std::size_t shared_classes(const LabeledSet& train, const LabeledSet& test) {
  if (train.num_classes != test.num_classes) {
    throw std::invalid_argument("train and test manifests disagree on num_classes (" +
                                std::to_string(train.num_classes) + " vs " + std::to_string(test.num_classes) + ")");
  }
  return train.num_classes;
}

Tensor model_features(const LoadedModel& model, const Encoder& encoder, const LabeledSet& set) {
  return extract_features(encoder, model.params, prepare_stream(set.sequences, model.graph, model.stream));
}

void tag(EvalReport& r, const LoadedModel& model) { r.streams = {stream_name(model.stream)}; }

}  // namespace

EvalReport knn_eval(const LoadedModel& model, const LabeledSet& train, const LabeledSet& test, std::size_t k_eval) {
  const std::size_t classes = shared_classes(train, test);
  const Encoder encoder(model.encoder_config, model.graph);
  EvalReport r = knn_classify(model_features(model, encoder, train), labels_of(train.sequences, classes),
                              model_features(model, encoder, test), labels_of(test.sequences, classes), classes, k_eval);
  tag(r, model);
  return r;
}

EvalReport linear_eval(const LoadedModel& model, const LabeledSet& train, const LabeledSet& test,
                       const LinearEvalConfig& cfg) {
  const std::size_t classes = shared_classes(train, test);
  const Encoder encoder(model.encoder_config, model.graph);
  EvalReport r = linear_classify(model_features(model, encoder, train), labels_of(train.sequences, classes),
                                 model_features(model, encoder, test), labels_of(test.sequences, classes), classes, cfg);
  tag(r, model);
  return r;
}

EvalReport finetune_eval(const LoadedModel& model, const LabeledSet& train, const LabeledSet& test,
                         const FinetuneConfig& cfg) {
  const std::size_t classes = shared_classes(train, test);
  const Encoder encoder(model.encoder_config, model.graph);
  const std::vector<int> all_labels = labels_of(train.sequences, classes);
  const std::vector<std::size_t> chosen =
      cfg.label_fraction >= 1.0 ? [&] {
        std::vector<std::size_t> all(all_labels.size());
        std::iota(all.begin(), all.end(), 0);
        return all;
      }()
                                : subsample_per_class(all_labels, classes, cfg.label_fraction, cfg.seed);
  const std::vector<SkeletonSequence> seqs =
      prepare_stream(pick(train.sequences, chosen), model.graph, model.stream);
  const std::vector<int> labels = pick(all_labels, chosen);
  const std::size_t n = seqs.size();

  ParamSet enc = model.params.clone(true);
  ParamSet clf = classifier_params(encoder.config().feature_dim(), classes);
  ParamSet enc_v = zeros_like(enc), clf_v = zeros_like(clf);
  const auto [mu, sd] = column_stats(extract_features(encoder, enc, seqs));
  const Tensor targets = one_hot(labels, classes);

  EvalReport r;
  r.protocol = cfg.label_fraction >= 1.0 ? "finetune" : "semi-supervised";
  r.num_train = n;
  r.labels = labels_of(test.sequences, classes);
  const std::size_t bs = std::min(std::max<std::size_t>(cfg.batch_size, 1), n);
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    const std::vector<std::size_t> order = epoch_order(cfg.seed, epoch, n);
    double total = 0.0;
    for (std::size_t start = 0; start < n; start += bs) {
      const std::vector<std::size_t> idx(order.begin() + static_cast<std::ptrdiff_t>(start),
                                         order.begin() + static_cast<std::ptrdiff_t>(std::min(n, start + bs)));
      std::vector<const SkeletonSequence*> batch;
      for (std::size_t i : idx) batch.push_back(&seqs[i]);
      Tape tape;
      const Tensor h = encoder.encode(enc, batch).h;
      const Tensor loss = cross_entropy(classify(clf, h, mu, sd), rows(targets, idx));
      total += loss.item() * static_cast<double>(idx.size());
      tape.backward(loss);
      sgd_update(enc, enc_v, cfg.lr, cfg.momentum, cfg.weight_decay);
      sgd_update(clf, clf_v, cfg.lr, cfg.momentum, cfg.weight_decay);
      enc.zero_grad();
      clf.zero_grad();
    }
    r.loss_history.push_back(total / static_cast<double>(n));
  }
  const Tensor test_f = extract_features(encoder, enc, prepare_stream(test.sequences, model.graph, model.stream));
  {
    NoGradGuard no_grad;
    r.scores = to_rows(softmax(classify(clf, test_f, mu, sd), 1));
  }
  finalize_report(r, classes);
  tag(r, model);
  return r;
}

std::vector<double> default_fusion_weights(const std::vector<std::string>& streams) {
  std::vector<double> w;
  for (const auto& s : streams) w.push_back(parse_stream(s) == Stream::Motion ? 0.4 : 0.6);
  return w;
}

EvalReport fuse_streams(const std::vector<EvalReport>& reports, const std::vector<double>& weights) {
  if (reports.empty()) throw std::invalid_argument("fuse: no reports given");
  if (weights.size() != reports.size()) {
    throw std::invalid_argument("fuse: " + std::to_string(weights.size()) + " weights for " +
                                std::to_string(reports.size()) + " streams");
  }
  const EvalReport& first = reports.front();
  const std::size_t classes = first.per_class.size();
  EvalReport r;
  r.protocol = "fusion:" + first.protocol;
  r.num_train = first.num_train;
  r.labels = first.labels;
  r.weights = weights;
  r.scores.assign(first.labels.size(), std::vector<double>(classes, 0.0));
  for (std::size_t s = 0; s < reports.size(); ++s) {
    const EvalReport& rep = reports[s];
    if (rep.labels != first.labels || rep.per_class.size() != classes || rep.scores.size() != first.labels.size()) {
      throw std::invalid_argument("fuse: report " + std::to_string(s) + " covers a different test set");
    }
    for (const auto& name : rep.streams) r.streams.push_back(name);
    for (std::size_t i = 0; i < rep.scores.size(); ++i) {
      for (std::size_t c = 0; c < classes; ++c) r.scores[i][c] += weights[s] * rep.scores[i][c];
    }
  }
  finalize_report(r, classes);
  return r;
}

std::vector<std::string> embedding_records(const LoadedModel& model, const LabeledSet& set) {
  const Encoder encoder(model.encoder_config, model.graph);
  const Tensor h = model_features(model, encoder, set);
  const auto vecs = to_rows(h);
  std::vector<std::string> lines;
  lines.reserve(vecs.size());
  for (std::size_t i = 0; i < vecs.size(); ++i) {
    json j{{"id", i < set.ids.size() ? set.ids[i] : std::to_string(i)},
           {"label", set.sequences[i].label ? json(*set.sequences[i].label) : json(nullptr)},
           {"h", vecs[i]}};
    lines.push_back(j.dump());
  }
  return lines;
}

void export_embeddings(const std::filesystem::path& ckpt_dir, const std::filesystem::path& manifest,
                       const std::filesystem::path& out_path) {
  const LoadedModel model = load_model(ckpt_dir);
  const LabeledSet set = load_labeled(manifest);
  const auto lines = embedding_records(model, set);
  if (out_path.has_parent_path()) std::filesystem::create_directories(out_path.parent_path());
  std::ofstream out(out_path);
  if (!out) throw std::runtime_error("cannot write " + out_path.string());
  for (const auto& l : lines) out << l << '\n';
}

}  // namespace aimclr
