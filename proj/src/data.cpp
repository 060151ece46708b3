#include "lmf/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numeric>
#include <random>
#include <sstream>
#include <unordered_map>

#include "lmf/error.hpp"

namespace lmf {

namespace {

std::vector<std::string> default_names(std::size_t k) {
  std::vector<std::string> names;
  names.reserve(k);
  for (std::size_t j = 0; j < k; ++j) names.push_back(std::to_string(j));
  return names;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) {
    s.remove_suffix(1);
  }
  return s;
}

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    if (comma == std::string_view::npos) {
      out.push_back(trim(line.substr(start)));
      break;
    }
    out.push_back(trim(line.substr(start, comma - start)));
    start = comma + 1;
  }
  return out;
}

bool parse_double(std::string_view s, double& out) {
  if (s.empty()) return false;
  if (s.front() == '+') s.remove_prefix(1);
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && ptr == s.data() + s.size() && std::isfinite(out);
}

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

Dataset::Dataset(std::size_t num_classes, std::size_t feature_dim,
                 std::vector<double> features, std::vector<int> labels,
                 std::vector<std::string> class_names)
    : num_classes_(num_classes),
      feature_dim_(feature_dim),
      features_(std::move(features)),
      labels_(std::move(labels)),
      class_names_(std::move(class_names)) {
  if (class_names_.empty()) class_names_ = default_names(num_classes_);
  if (class_names_.size() != num_classes_) {
    fail(ErrorKind::Shape, "class name list does not match class count");
  }
  if (features_.size() != labels_.size() * feature_dim_) {
    fail(ErrorKind::Shape, "feature matrix has " +
                               std::to_string(features_.size()) +
                               " entries for " + std::to_string(labels_.size()) +
                               " samples of dimension " +
                               std::to_string(feature_dim_));
  }
  for (int y : labels_) {
    if (y < 0 || static_cast<std::size_t>(y) >= num_classes_) {
      fail(ErrorKind::InvalidInput, "label " + std::to_string(y) +
                                        " outside [0, " +
                                        std::to_string(num_classes_) + ")");
    }
  }
  for (double x : features_) {
    if (!std::isfinite(x)) fail(ErrorKind::InvalidInput, "non-finite feature");
  }
}

Dataset Dataset::subset(std::span<const std::size_t> indices) const {
  std::vector<double> feats;
  std::vector<int> labels;
  feats.reserve(indices.size() * feature_dim_);
  labels.reserve(indices.size());
  for (std::size_t i : indices) {
    if (i >= size()) fail(ErrorKind::Index, "subset index out of range");
    const auto row = features(i);
    feats.insert(feats.end(), row.begin(), row.end());
    labels.push_back(labels_[i]);
  }
  return Dataset(num_classes_, feature_dim_, std::move(feats),
                 std::move(labels), class_names_);
}

Dataset Dataset::remap_to(const std::vector<std::string>& names) const {
  std::unordered_map<std::string, int> index;
  for (std::size_t j = 0; j < names.size(); ++j) {
    index.emplace(names[j], static_cast<int>(j));
  }
  std::vector<int> mapping(num_classes_);
  for (std::size_t j = 0; j < num_classes_; ++j) {
    const auto it = index.find(class_names_[j]);
    if (it == index.end()) {
      fail(ErrorKind::InvalidInput,
           "class '" + class_names_[j] + "' is not among the target classes");
    }
    mapping[j] = it->second;
  }
  std::vector<int> labels(labels_.size());
  for (std::size_t i = 0; i < labels_.size(); ++i) labels[i] = mapping[labels_[i]];
  return Dataset(names.size(), feature_dim_, features_, std::move(labels), names);
}

ClassDistribution class_counts(const Dataset& ds) {
  ClassDistribution out;
  out.counts.assign(ds.num_classes(), 0);
  for (int y : ds.labels()) ++out.counts[y];
  return out;
}

Dataset parse_csv(std::string_view text) {
  std::size_t pos = 0;
  std::size_t line_no = 0;
  auto next_line = [&](std::string_view& line) {
    while (pos < text.size()) {
      const std::size_t nl = text.find('\n', pos);
      const std::size_t end = nl == std::string_view::npos ? text.size() : nl;
      line = text.substr(pos, end - pos);
      pos = end + 1;
      ++line_no;
      if (!trim(line).empty()) return true;
    }
    return false;
  };

  std::string_view line;
  if (!next_line(line)) fail(ErrorKind::Parse, "missing header row");
  if (line_no == 1 && line.starts_with("\xEF\xBB\xBF")) line.remove_prefix(3);
  const auto header = split_fields(line);
  const auto label_it = std::find(header.begin(), header.end(), "label");
  if (label_it == header.end()) {
    fail(ErrorKind::Parse, "row " + std::to_string(line_no) +
                               ": header has no 'label' column");
  }
  const std::size_t label_col = static_cast<std::size_t>(label_it - header.begin());
  const std::size_t dim = header.size() - 1;

  std::vector<double> features;
  std::vector<int> labels;
  std::vector<std::string> names;
  std::map<std::string, int, std::less<>> name_index;

  while (next_line(line)) {
    const auto fields = split_fields(line);
    if (fields.size() != header.size()) {
      fail(ErrorKind::Parse, "row " + std::to_string(line_no) + ": expected " +
                                 std::to_string(header.size()) + " fields, got " +
                                 std::to_string(fields.size()));
    }
    for (std::size_t c = 0; c < fields.size(); ++c) {
      if (c == label_col) {
        const auto label = fields[c];
        if (label.empty()) {
          fail(ErrorKind::Parse, "row " + std::to_string(line_no) + ": empty label");
        }
        auto it = name_index.find(label);
        if (it == name_index.end()) {
          it = name_index.emplace(std::string(label),
                                  static_cast<int>(names.size())).first;
          names.emplace_back(label);
        }
        labels.push_back(it->second);
        continue;
      }
      double v = 0.0;
      if (!parse_double(fields[c], v)) {
        fail(ErrorKind::Parse, "row " + std::to_string(line_no) + ", column '" +
                                   std::string(header[c]) + "': non-numeric value '" +
                                   std::string(fields[c]) + "'");
      }
      features.push_back(v);
    }
  }
  if (labels.empty()) fail(ErrorKind::InvalidInput, "empty dataset: no data rows");
  const std::size_t k = names.size();
  return Dataset(k, dim, std::move(features), std::move(labels), std::move(names));
}

Dataset load_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::Io, "cannot open '" + path.string() + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_csv(buf.str());
}

std::string to_csv(const Dataset& ds) {
  std::string out = "label";
  for (std::size_t c = 0; c < ds.feature_dim(); ++c) out += ",f" + std::to_string(c);
  out += '\n';
  for (std::size_t i = 0; i < ds.size(); ++i) {
    out += ds.class_names()[ds.label(i)];
    for (double v : ds.features(i)) {
      out += ',';
      out += format_double(v);
    }
    out += '\n';
  }
  return out;
}

void save_csv(const Dataset& ds, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::Io, "cannot write '" + path.string() + "'");
  out << to_csv(ds);
  if (!out) fail(ErrorKind::Io, "write failed for '" + path.string() + "'");
}

std::vector<long long> longtail_counts(const LongTailSpec& spec) {
  if (spec.num_classes < 2) fail(ErrorKind::InvalidSpec, "need at least 2 classes");
  if (spec.max_count < 1) fail(ErrorKind::InvalidSpec, "max count must be >= 1");
  if (!(spec.imbalance_ratio >= 1.0) || !std::isfinite(spec.imbalance_ratio)) {
    fail(ErrorKind::InvalidSpec, "imbalance ratio must be >= 1");
  }
  const double k1 = static_cast<double>(spec.num_classes - 1);
  std::vector<long long> counts(spec.num_classes);
  for (std::size_t j = 0; j < spec.num_classes; ++j) {
    const double n = static_cast<double>(spec.max_count) *
                     std::pow(spec.imbalance_ratio, -static_cast<double>(j) / k1);
    counts[j] = std::llround(n);
    if (counts[j] < 1) {
      fail(ErrorKind::InvalidSpec, "class " + std::to_string(j) +
                                       " would have no samples");
    }
  }
  return counts;
}

std::vector<double> class_mean(std::size_t j, std::size_t feature_dim,
                               double separation) {
  // Axis-aligned placement: with radius r = sep/sqrt(2) neighbouring axes are
  // exactly sep apart; further classes reuse axes with flipped sign, then on
  // shells whose radius grows by sep.
  std::vector<double> mean(feature_dim, 0.0);
  const std::size_t axis = j % feature_dim;
  const std::size_t turn = j / feature_dim;
  const double sign = turn % 2 == 0 ? 1.0 : -1.0;
  const double radius =
      separation / std::sqrt(2.0) + static_cast<double>(turn / 2) * separation;
  mean[axis] = sign * radius;
  return mean;
}

Dataset synth_from_counts(const ClassDistribution& counts,
                          const LongTailSpec& spec,
                          std::vector<std::string> class_names) {
  if (counts.counts.size() < 2) fail(ErrorKind::InvalidSpec, "need at least 2 classes");
  if (spec.feature_dim < 1) fail(ErrorKind::InvalidSpec, "feature dim must be >= 1");
  if (!(spec.class_separation > 0.0)) {
    fail(ErrorKind::InvalidSpec, "class separation must be > 0");
  }
  if (!(spec.noise_scale > 0.0)) fail(ErrorKind::InvalidSpec, "noise scale must be > 0");
  for (long long n : counts.counts) {
    if (n < 1) fail(ErrorKind::InvalidSpec, "every class needs >= 1 sample");
  }

  const std::size_t d = spec.feature_dim;
  const auto total = static_cast<std::size_t>(counts.total());
  std::vector<double> features;
  std::vector<int> labels;
  features.reserve(total * d);
  labels.reserve(total);

  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> noise(0.0, spec.noise_scale);
  for (std::size_t j = 0; j < counts.counts.size(); ++j) {
    const auto mean = class_mean(j, d, spec.class_separation);
    for (long long i = 0; i < counts.counts[j]; ++i) {
      for (std::size_t c = 0; c < d; ++c) features.push_back(mean[c] + noise(rng));
      labels.push_back(static_cast<int>(j));
    }
  }
  return Dataset(counts.counts.size(), d, std::move(features), std::move(labels),
                 std::move(class_names));
}

Dataset synth_longtail(const LongTailSpec& spec) {
  return synth_from_counts(ClassDistribution{longtail_counts(spec)}, spec);
}

PaperProfile parse_profile(std::string_view name) {
  std::string lower(name);
  std::transform(lower.begin(), lower.end(), lower.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  if (lower == "odir") return PaperProfile::ODIR;
  if (lower == "ham") return PaperProfile::HAM;
  if (lower == "isic") return PaperProfile::ISIC;
  fail(ErrorKind::InvalidInput, "unknown profile '" + std::string(name) +
                                    "' (expected odir, ham or isic)");
}

std::string_view to_string(PaperProfile p) {
  switch (p) {
    case PaperProfile::ODIR: return "odir";
    case PaperProfile::HAM: return "ham";
    case PaperProfile::ISIC: return "isic";
  }
  return "?";
}

ClassDistribution paper_profile(PaperProfile p) {
  switch (p) {
    case PaperProfile::ODIR: return {{186, 205, 1126, 198, 90, 162, 2011, 496}};
    case PaperProfile::HAM: return {{229, 360, 769, 81, 779, 4693, 100}};
    case PaperProfile::ISIC: return {{607, 2327, 1836, 167, 3166, 9013, 440, 177}};
  }
  return {};
}

std::vector<std::string> paper_profile_class_names(PaperProfile p) {
  switch (p) {
    case PaperProfile::ODIR: return {"A", "C", "D", "G", "H", "M", "N", "O"};
    case PaperProfile::HAM: return {"AKIEC", "BCC", "BKL", "DF", "MEL", "NV", "VASC"};
    case PaperProfile::ISIC:
      return {"AK", "BCC", "BKL", "DF", "MEL", "NV", "SCC", "VASC"};
  }
  return {};
}

void validate(const SplitRatios& r) {
  for (double v : {r.train, r.val, r.test}) {
    if (!(v >= 0.0 && v <= 1.0)) {
      fail(ErrorKind::InvalidSpec, "split ratios must lie in [0, 1]");
    }
  }
  if (std::abs(r.train + r.val + r.test - 1.0) > 1e-9) {
    fail(ErrorKind::InvalidSpec, "split ratios must sum to 1");
  }
}

std::array<long long, 3> apportion(long long n, const SplitRatios& ratios) {
  validate(ratios);
  constexpr double kTol = 1e-9;
  const std::array<double, 3> r{ratios.train, ratios.val, ratios.test};
  std::array<long long, 3> out{};
  std::array<double, 3> remainder{};
  long long assigned = 0;
  for (std::size_t i = 0; i < 3; ++i) {
    const double quota = static_cast<double>(n) * r[i];
    out[i] = static_cast<long long>(std::floor(quota + kTol));
    remainder[i] = std::max(0.0, quota - static_cast<double>(out[i]));
    assigned += out[i];
  }
  std::array<std::size_t, 3> order{0, 1, 2};
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return remainder[a] > remainder[b] + kTol;
  });
  for (long long left = n - assigned, i = 0; left > 0; --left, ++i) {
    ++out[order[static_cast<std::size_t>(i % 3)]];
  }
  return out;
}

Split stratified_split(const Dataset& ds, const SplitRatios& ratios,
                       std::uint64_t seed) {
  validate(ratios);
  std::vector<std::vector<std::size_t>> by_class(ds.num_classes());
  for (std::size_t i = 0; i < ds.size(); ++i) by_class[ds.label(i)].push_back(i);

  Split out;
  std::array<std::vector<std::size_t>, 3> parts;
  std::mt19937_64 rng(seed);
  for (std::size_t j = 0; j < by_class.size(); ++j) {
    auto& members = by_class[j];
    if (members.empty()) {
      out.empty_classes.push_back(static_cast<int>(j));
      continue;
    }
    std::shuffle(members.begin(), members.end(), rng);
    const auto quota = apportion(static_cast<long long>(members.size()), ratios);
    std::size_t cursor = 0;
    for (std::size_t p = 0; p < 3; ++p) {
      for (long long c = 0; c < quota[p]; ++c) parts[p].push_back(members[cursor++]);
    }
  }
  for (auto& p : parts) std::sort(p.begin(), p.end());
  out.train = ds.subset(parts[0]);
  out.val = ds.subset(parts[1]);
  out.test = ds.subset(parts[2]);
  return out;
}

}  // namespace lmf
