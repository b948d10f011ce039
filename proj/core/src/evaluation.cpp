#include "sigver/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <set>

#include <nlohmann/json.hpp>

#include "sigver/errors.hpp"
#include "sigver/threading.hpp"

using nlohmann::json;

namespace sigver {

namespace {

nn::Tensor<float> tensor_from(const RowMatrixXf& m) {
  nn::Tensor<float> t = nn::Tensor<float>::zeros({m.rows(), m.cols()});
  std::copy(m.data(), m.data() + m.size(), t.data.begin());
  return t;
}

std::string format_g17(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

std::vector<double> ScoreSet::impostor_pooled() const {
  std::vector<double> pooled = impostor_random;
  pooled.insert(pooled.end(), impostor_skilled.begin(), impostor_skilled.end());
  return pooled;
}

EerResult compute_eer(const std::vector<double>& genuine,
                      const std::vector<double>& impostor) {
  if (genuine.empty() || impostor.empty()) {
    throw ValidationError("compute_eer: needs at least one score per list");
  }
  std::vector<double> gen = genuine;
  std::vector<double> imp = impostor;
  std::sort(gen.begin(), gen.end());
  std::sort(imp.begin(), imp.end());

  std::vector<double> thresholds;
  thresholds.reserve(gen.size() + imp.size() + 2);
  thresholds.push_back(-std::numeric_limits<double>::infinity());
  std::merge(gen.begin(), gen.end(), imp.begin(), imp.end(),
             std::back_inserter(thresholds));
  thresholds.push_back(std::numeric_limits<double>::infinity());
  thresholds.erase(std::unique(thresholds.begin(), thresholds.end()),
                   thresholds.end());

  const double ng = static_cast<double>(gen.size());
  const double ni = static_cast<double>(imp.size());
  EerResult best;
  double best_diff = std::numeric_limits<double>::infinity();
  for (const double t : thresholds) {
    const auto imp_below =
        std::lower_bound(imp.begin(), imp.end(), t) - imp.begin();
    const auto gen_below =
        std::lower_bound(gen.begin(), gen.end(), t) - gen.begin();
    const double far = (ni - static_cast<double>(imp_below)) / ni;
    const double frr = static_cast<double>(gen_below) / ng;
    const double diff = std::abs(far - frr);
    if (diff < best_diff) {
      best_diff = diff;
      best.eer = 0.5 * (far + frr);
      best.threshold = t;
    }
  }
  return best;
}

DetCurve det_curve(const std::vector<double>& genuine,
                   const std::vector<double>& impostor) {
  if (genuine.empty() || impostor.empty()) {
    throw ValidationError("det_curve: needs at least one score per list");
  }
  std::vector<double> gen = genuine;
  std::vector<double> imp = impostor;
  std::sort(gen.begin(), gen.end());
  std::sort(imp.begin(), imp.end());
  std::vector<double> thresholds;
  std::merge(gen.begin(), gen.end(), imp.begin(), imp.end(),
             std::back_inserter(thresholds));
  thresholds.erase(std::unique(thresholds.begin(), thresholds.end()),
                   thresholds.end());

  DetCurve curve;
  const double ng = static_cast<double>(gen.size());
  const double ni = static_cast<double>(imp.size());
  for (const double t : thresholds) {
    const auto imp_below =
        std::lower_bound(imp.begin(), imp.end(), t) - imp.begin();
    const auto gen_below =
        std::lower_bound(gen.begin(), gen.end(), t) - gen.begin();
    DetPoint point;
    point.far = (ni - static_cast<double>(imp_below)) / ni;
    point.frr = static_cast<double>(gen_below) / ng;
    point.threshold = t;
    curve.points.push_back(point);
  }
  return curve;
}

void write_det_csv(const DetCurve& curve, const std::filesystem::path& path) {
  std::string out = "far,frr,threshold\n";
  for (const auto& p : curve.points) {
    out += format_g17(p.far);
    out += ',';
    out += format_g17(p.frr);
    out += ',';
    out += format_g17(p.threshold);
    out += '\n';
  }
  atomic_write_file(path, out);
}

void write_det_svg(const DetCurve& random_curve, const DetCurve& skilled_curve,
                   const DetCurve& overall_curve,
                   const std::filesystem::path& path) {
  const int size = 520;
  const int margin = 40;
  const double span = size - 2 * margin;
  auto polyline = [&](const DetCurve& curve, const char* color) {
    std::string pts;
    for (const auto& p : curve.points) {
      const double px = margin + p.far * span;
      const double py = size - margin - p.frr * span;
      char buf[64];
      std::snprintf(buf, sizeof(buf), "%.1f,%.1f ", px, py);
      pts += buf;
    }
    return "<polyline fill=\"none\" stroke=\"" + std::string(color) +
           "\" stroke-width=\"1.5\" points=\"" + pts + "\"/>\n";
  };
  std::string svg =
      "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" +
      std::to_string(size) + "\" height=\"" + std::to_string(size) + "\">\n" +
      "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n" +
      "<rect x=\"40\" y=\"40\" width=\"440\" height=\"440\" fill=\"none\" "
      "stroke=\"black\"/>\n" +
      "<text x=\"230\" y=\"512\" font-size=\"12\">false acceptance rate</text>\n" +
      "<text x=\"12\" y=\"260\" font-size=\"12\" transform=\"rotate(-90 12 "
      "260)\">false rejection rate</text>\n" +
      polyline(random_curve, "#1f77b4") + polyline(skilled_curve, "#d62728") +
      polyline(overall_curve, "#2ca02c") +
      "<text x=\"60\" y=\"60\" font-size=\"12\" fill=\"#1f77b4\">random</text>\n"
      "<text x=\"60\" y=\"76\" font-size=\"12\" fill=\"#d62728\">skilled</text>\n"
      "<text x=\"60\" y=\"92\" font-size=\"12\" fill=\"#2ca02c\">overall</text>\n"
      "</svg>\n";
  atomic_write_file(path, svg);
}

ScoreSet compute_scores(const nn::SiameseModel<float>& model,
                        const Dataset& dataset,
                        const std::vector<PairSpec>& comparisons,
                        PairAligner& aligner) {
  (void)dataset;
  std::vector<double> scores(comparisons.size());
  parallel_for(comparisons.size(), [&](std::size_t i) {
    const AlignedPair pair = aligner.aligned(comparisons[i]);
    scores[i] = static_cast<double>(
        model.symmetric_score(tensor_from(pair.a), tensor_from(pair.b)));
  });
  ScoreSet out;
  for (std::size_t i = 0; i < comparisons.size(); ++i) {
    switch (comparisons[i].label) {
      case PairLabel::match:
        out.genuine.push_back(scores[i]);
        break;
      case PairLabel::nonmatch_random:
        out.impostor_random.push_back(scores[i]);
        break;
      case PairLabel::nonmatch_skilled:
        out.impostor_skilled.push_back(scores[i]);
        break;
      case PairLabel::unlabeled:
        throw ValidationError("compute_scores: unlabeled comparison");
    }
  }
  return out;
}

ProtocolReport report_from_scores(const ScoreSet& scores) {
  ProtocolReport report;
  report.random = compute_eer(scores.genuine, scores.impostor_random);
  report.skilled = compute_eer(scores.genuine, scores.impostor_skilled);
  const auto pooled = scores.impostor_pooled();
  report.overall = compute_eer(scores.genuine, pooled);
  report.det_random = det_curve(scores.genuine, scores.impostor_random);
  report.det_skilled = det_curve(scores.genuine, scores.impostor_skilled);
  report.det_overall = det_curve(scores.genuine, pooled);
  report.genuine_count = scores.genuine.size();
  report.impostor_random_count = scores.impostor_random.size();
  report.impostor_skilled_count = scores.impostor_skilled.size();
  return report;
}

namespace {

json curve_to_json(const DetCurve& curve) {
  json arr = json::array();
  for (const auto& p : curve.points) {
    arr.push_back({p.far, p.frr, p.threshold});
  }
  return arr;
}

DetCurve curve_from_json(const json& arr) {
  DetCurve curve;
  for (const auto& p : arr) {
    curve.points.push_back({p.at(0).get<double>(), p.at(1).get<double>(),
                            p.at(2).get<double>()});
  }
  return curve;
}

}  // namespace

std::string protocol_report_to_json(const ProtocolReport& r) {
  json j{{"eer_random", r.random.eer},
         {"eer_skilled", r.skilled.eer},
         {"eer_overall", r.overall.eer},
         {"threshold_random", r.random.threshold},
         {"threshold_skilled", r.skilled.threshold},
         {"threshold_overall", r.overall.threshold},
         {"genuine_count", r.genuine_count},
         {"impostor_random_count", r.impostor_random_count},
         {"impostor_skilled_count", r.impostor_skilled_count},
         {"impostor_pooling", r.impostor_pooling},
         {"det_random", curve_to_json(r.det_random)},
         {"det_skilled", curve_to_json(r.det_skilled)},
         {"det_overall", curve_to_json(r.det_overall)}};
  return j.dump(2);
}

ProtocolReport protocol_report_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ValidationError(std::string("invalid report JSON: ") + e.what());
  }
  ProtocolReport r;
  r.random.eer = j.at("eer_random").get<double>();
  r.skilled.eer = j.at("eer_skilled").get<double>();
  r.overall.eer = j.at("eer_overall").get<double>();
  r.random.threshold = j.at("threshold_random").get<double>();
  r.skilled.threshold = j.at("threshold_skilled").get<double>();
  r.overall.threshold = j.at("threshold_overall").get<double>();
  r.genuine_count = j.at("genuine_count").get<std::size_t>();
  r.impostor_random_count = j.at("impostor_random_count").get<std::size_t>();
  r.impostor_skilled_count = j.at("impostor_skilled_count").get<std::size_t>();
  r.impostor_pooling = j.at("impostor_pooling").get<std::string>();
  r.det_random = curve_from_json(j.at("det_random"));
  r.det_skilled = curve_from_json(j.at("det_skilled"));
  r.det_overall = curve_from_json(j.at("det_overall"));
  return r;
}

std::vector<Comparison> load_comparisons(const std::filesystem::path& manifest,
                                         std::uint64_t seed,
                                         std::size_t max_comparisons) {
  std::ifstream in(manifest);
  if (!in) throw IoError("cannot open manifest: " + manifest.string());
  json doc;
  try {
    in >> doc;
  } catch (const json::exception& e) {
    throw ValidationError("invalid manifest JSON in " + manifest.string() +
                          ": " + e.what());
  }
  if (!doc.is_array() || doc.empty()) {
    throw ValidationError("manifest must be a non-empty JSON array: " +
                          manifest.string());
  }

  const std::filesystem::path base = manifest.parent_path();
  auto resolve = [&](std::string p) {
    std::filesystem::path fp = p;
    if (fp.is_relative()) fp = base / fp;
    return fp.string();
  };

  std::vector<Comparison> out;
  if (doc.front().contains("enrolled_path")) {
    for (const auto& item : doc) {
      Comparison c;
      c.enrolled_path = resolve(item.at("enrolled_path").get<std::string>());
      c.questioned_path = resolve(item.at("questioned_path").get<std::string>());
      c.label = pair_label_from_string(item.at("label").get<std::string>());
      if (item.contains("enrolled_subject")) {
        c.enrolled_subject = item.at("enrolled_subject").get<std::string>();
      }
      if (item.contains("questioned_subject")) {
        c.questioned_subject = item.at("questioned_subject").get<std::string>();
      }
      out.push_back(std::move(c));
    }
    return out;
  }

  // Dataset manifest: derive labeled comparisons.
  const auto entries = read_dataset_manifest(manifest);
  std::map<std::string, std::vector<const ManifestEntry*>> genuine, forgery;
  for (const auto& e : entries) {
    (e.label == SampleLabel::genuine ? genuine : forgery)[e.subject_id]
        .push_back(&e);
  }
  auto add = [&](const ManifestEntry& a, const ManifestEntry& b,
                 PairLabel label) {
    Comparison c;
    c.enrolled_path = resolve(a.path);
    c.questioned_path = resolve(b.path);
    c.enrolled_subject = a.subject_id;
    c.questioned_subject = b.subject_id;
    c.label = label;
    out.push_back(std::move(c));
  };

  std::vector<Comparison> matches, skilled, randoms;
  auto collect = [&out, &matches, &skilled, &randoms]() {};
  (void)collect;
  for (const auto& [subject, list] : genuine) {
    for (std::size_t i = 0; i < list.size(); ++i) {
      for (std::size_t j = i + 1; j < list.size(); ++j) {
        add(*list[i], *list[j], PairLabel::match);
      }
    }
    const auto fit = forgery.find(subject);
    if (fit != forgery.end()) {
      for (const auto* g : list) {
        for (const auto* f : fit->second) {
          add(*g, *f, PairLabel::nonmatch_skilled);
        }
      }
    }
  }
  // Random impostors: deterministic draws of cross-subject genuine pairs,
  // about as many as the genuine-genuine matches.
  std::vector<std::string> subjects;
  for (const auto& [subject, list] : genuine) {
    (void)list;
    subjects.push_back(subject);
  }
  if (subjects.size() >= 2) {
    std::size_t match_count = 0;
    for (const auto& c : out) {
      if (c.label == PairLabel::match) ++match_count;
    }
    Rng rng(derive_seed(seed, 0x72616e64ull));
    std::set<std::pair<const ManifestEntry*, const ManifestEntry*>> used;
    const std::size_t want = std::max<std::size_t>(match_count, 1);
    for (std::size_t n = 0; n < want; ++n) {
      for (int attempt = 0; attempt < 64; ++attempt) {
        const auto& s1 = subjects[rng.uniform_int(subjects.size())];
        auto s2 = subjects[rng.uniform_int(subjects.size())];
        if (s2 == s1) continue;
        const auto* g1 = genuine[s1][rng.uniform_int(genuine[s1].size())];
        const auto* g2 = genuine[s2][rng.uniform_int(genuine[s2].size())];
        if (used.count({g1, g2})) continue;
        used.insert({g1, g2});
        add(*g1, *g2, PairLabel::nonmatch_random);
        break;
      }
    }
  }

  if (max_comparisons > 0 && out.size() > max_comparisons) {
    // Keep a deterministic subsample preserving label mix.
    Rng rng(derive_seed(seed, 0x73756273ull));
    for (std::size_t i = out.size(); i > 1; --i) {
      std::swap(out[i - 1], out[rng.uniform_int(i)]);
    }
    out.resize(max_comparisons);
  }
  return out;
}

ProtocolReport run_protocol(const nn::SiameseModel<float>& model,
                            const std::vector<std::string>& training_subjects,
                            const std::vector<Comparison>& comparisons,
                            double rate_hz) {
  if (comparisons.empty()) {
    throw ValidationError("run_protocol: no comparisons");
  }
  const std::set<std::string> train_set(training_subjects.begin(),
                                        training_subjects.end());
  for (const auto& c : comparisons) {
    for (const auto& subject : {c.enrolled_subject, c.questioned_subject}) {
      if (!subject.empty() && train_set.count(subject)) {
        throw ProtocolError("protocol error: overlapping subjects ('" +
                            subject + "' was used in training)");
      }
    }
  }

  // Load every distinct file once and build an ad-hoc dataset.
  std::map<std::string, int> path_index;
  Dataset dataset;
  auto index_of = [&](const std::string& path, const std::string& subject) {
    const auto it = path_index.find(path);
    if (it != path_index.end()) return it->second;
    RawSignature sig =
        parse_signature(path, SignatureFormat::canonical_tsv);
    if (!subject.empty()) sig.subject_id = subject;
    dataset.signatures.push_back(std::move(sig));
    const int idx = static_cast<int>(dataset.signatures.size() - 1);
    path_index[path] = idx;
    return idx;
  };

  std::vector<PairSpec> specs;
  specs.reserve(comparisons.size());
  for (const auto& c : comparisons) {
    PairSpec spec;
    spec.enrolled_index = index_of(c.enrolled_path, c.enrolled_subject);
    spec.questioned_index = index_of(c.questioned_path, c.questioned_subject);
    spec.label = c.label;
    specs.push_back(spec);
  }

  PairAligner aligner(dataset, rate_hz, model.config().input_length);
  const ScoreSet scores = compute_scores(model, dataset, specs, aligner);
  return report_from_scores(scores);
}

}  // namespace sigver
