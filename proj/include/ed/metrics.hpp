#pragma once

#include <algorithm>
#include <cctype>
#include <cstddef>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "ed/error.hpp"

namespace ed::metrics {

// ---------------------------------------------------------------------------
// POPE

enum class Answer { Yes, No, Unparseable };

inline std::string_view to_string(Answer a) {
  switch (a) {
    case Answer::Yes: return "yes";
    case Answer::No: return "no";
    case Answer::Unparseable: return "unparseable";
  }
  return "?";
}

/// Case-insensitive match of the first word against yes/no, ignoring
/// leading whitespace and punctuation.
inline Answer parse_yes_no(std::string_view text) {
  std::size_t i = 0;
  while (i < text.size() && !std::isalnum(static_cast<unsigned char>(text[i]))) ++i;
  std::string word;
  while (i < text.size() && std::isalnum(static_cast<unsigned char>(text[i]))) {
    word.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(text[i]))));
    ++i;
  }
  if (word == "yes") return Answer::Yes;
  if (word == "no") return Answer::No;
  return Answer::Unparseable;
}

struct PopeRecord {
  std::string id;
  std::string image;
  std::string question;
  bool gold_yes = false;
  std::string answer;
};

struct Confusion {
  long tp = 0;
  long fp = 0;
  long tn = 0;
  long fn = 0;
  long unparseable = 0;

  long total() const { return tp + fp + tn + fn; }
  bool operator==(const Confusion&) const = default;
};

/// Rates are percentages; std::nullopt marks a zero denominator.
struct PopeReport {
  Confusion counts;
  std::optional<double> precision;
  std::optional<double> recall;
  std::optional<double> f1;
  std::optional<double> accuracy;
};

inline std::optional<double> ratio(double num, double den) {
  if (den == 0.0) return std::nullopt;
  return 100.0 * num / den;
}

/// "yes" is the positive class. An unparseable answer is scored as the wrong
/// answer: a false negative on a yes question, a false positive on a no
/// question. It is also tallied on its own.
inline PopeReport pope_eval(std::span<const PopeRecord> records) {
  if (records.empty()) throw InputError("POPE evaluation needs at least one record");
  PopeReport r;
  auto& c = r.counts;
  for (const auto& rec : records) {
    const Answer a = parse_yes_no(rec.answer);
    if (a == Answer::Unparseable) ++c.unparseable;
    const bool predicted_yes = a == Answer::Unparseable ? !rec.gold_yes : a == Answer::Yes;
    if (predicted_yes && rec.gold_yes) ++c.tp;
    else if (predicted_yes && !rec.gold_yes) ++c.fp;
    else if (!predicted_yes && rec.gold_yes) ++c.fn;
    else ++c.tn;
  }
  r.precision = ratio(static_cast<double>(c.tp), static_cast<double>(c.tp + c.fp));
  r.recall = ratio(static_cast<double>(c.tp), static_cast<double>(c.tp + c.fn));
  r.accuracy = ratio(static_cast<double>(c.tp + c.tn), static_cast<double>(c.total()));
  if (r.precision && r.recall && (*r.precision + *r.recall) > 0.0) {
    r.f1 = 2.0 * *r.precision * *r.recall / (*r.precision + *r.recall);
  }
  return r;
}

inline nlohmann::json to_json(const PopeReport& r) {
  auto opt = [](const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); };
  return {{"benchmark", "pope"},
          {"precision", opt(r.precision)},
          {"recall", opt(r.recall)},
          {"f1", opt(r.f1)},
          {"accuracy", opt(r.accuracy)},
          {"counts",
           {{"tp", r.counts.tp}, {"fp", r.counts.fp}, {"tn", r.counts.tn}, {"fn", r.counts.fn},
            {"unparseable", r.counts.unparseable}, {"total", r.counts.total()}}}};
}

// ---------------------------------------------------------------------------
// CHAIR

/// Lowercases and splits on anything that is not a letter or digit.
inline std::vector<std::string> words_of(std::string_view text) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : text) {
    const auto c = static_cast<unsigned char>(ch);
    if (std::isalnum(c)) {
      cur.push_back(static_cast<char>(std::tolower(c)));
    } else if (!cur.empty()) {
      out.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

inline std::string join_words(std::span<const std::string> words) {
  std::string out;
  for (const auto& w : words) {
    if (!out.empty()) out.push_back(' ');
    out += w;
  }
  return out;
}

/// Regular English plural of the last word of a phrase.
inline std::string pluralize(const std::string& phrase) {
  auto ends_with = [&](std::string_view s) {
    return phrase.size() >= s.size() && phrase.compare(phrase.size() - s.size(), s.size(), s) == 0;
  };
  if (ends_with("s") || ends_with("x") || ends_with("z") || ends_with("ch") || ends_with("sh")) {
    return phrase + "es";
  }
  if (phrase.size() >= 2 && phrase.back() == 'y' &&
      std::string_view("aeiou").find(phrase[phrase.size() - 2]) == std::string_view::npos) {
    return phrase.substr(0, phrase.size() - 1) + "ies";
  }
  return phrase + "s";
}

/// Surface form -> canonical object name, matched word-by-word.
class SynonymDictionary {
 public:
  /// Registers `surface` for `canonical`. Earlier entries win on conflict.
  void add(const std::string& surface, const std::string& canonical) {
    const auto key = join_words(words_of(surface));
    const auto value = join_words(words_of(canonical));
    if (key.empty() || value.empty()) return;
    forms_.emplace(key, value);
    max_words_ = std::max(max_words_, words_of(key).size());
  }

  /// Adds the canonical name itself plus regular plurals of every form that
  /// has no explicit entry yet.
  void finalize() {
    std::vector<std::pair<std::string, std::string>> extra;
    std::set<std::string> canon;
    for (const auto& [surface, canonical] : forms_) {
      canon.insert(canonical);
      extra.emplace_back(pluralize(surface), canonical);
    }
    for (const auto& c : canon) add(c, c);
    for (const auto& [surface, canonical] : extra) add(surface, canonical);
  }

  /// Text format, one object per line:  canonical: form, form, ...
  /// '#' starts a comment. JSON input is an object {surface: canonical}.
  static SynonymDictionary load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open synonym file " + path);
    std::stringstream buf;
    buf << in.rdbuf();
    const std::string text = buf.str();

    SynonymDictionary dict;
    const auto first = text.find_first_not_of(" \t\r\n");
    if (first != std::string::npos && text[first] == '{') {
      try {
        const auto parsed = nlohmann::json::parse(text);
        for (const auto& [surface, canonical] : parsed.items()) {
          dict.add(surface, canonical.get<std::string>());
        }
      } catch (const nlohmann::json::exception& e) {
        throw ConfigError("malformed synonym JSON " + path + ": " + e.what());
      }
    } else {
      std::istringstream lines(text);
      std::string line;
      int lineno = 0;
      while (std::getline(lines, line)) {
        ++lineno;
        if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        const auto colon = line.find(':');
        if (colon == std::string::npos) {
          throw ConfigError(path + ":" + std::to_string(lineno) + ": expected 'canonical: forms'");
        }
        const std::string canonical = line.substr(0, colon);
        dict.add(canonical, canonical);
        std::istringstream forms(line.substr(colon + 1));
        std::string form;
        while (std::getline(forms, form, ',')) dict.add(form, canonical);
      }
    }
    if (dict.empty()) throw ConfigError("synonym file " + path + " defines no objects");
    dict.finalize();
    return dict;
  }

  std::optional<std::string> lookup(const std::string& normalized) const {
    auto it = forms_.find(normalized);
    if (it == forms_.end()) return std::nullopt;
    return it->second;
  }

  /// Canonical name for a ground-truth label; unknown labels pass through
  /// normalized.
  std::string canonicalize(const std::string& label) const {
    const auto key = join_words(words_of(label));
    return lookup(key).value_or(key);
  }

  std::size_t max_words() const { return max_words_; }
  bool empty() const { return forms_.empty(); }

 private:
  std::map<std::string, std::string> forms_;
  std::size_t max_words_ = 0;
};

struct ObjectMentions {
  std::vector<std::string> mentions;  // canonical name per mention, in order
  std::set<std::string> objects;      // distinct canonical names
};

/// Left-to-right scan taking the longest dictionary phrase at each word.
inline ObjectMentions extract_objects(std::string_view caption, const SynonymDictionary& dict) {
  ObjectMentions out;
  const auto words = words_of(caption);
  std::size_t i = 0;
  while (i < words.size()) {
    bool matched = false;
    const std::size_t longest = std::min(dict.max_words(), words.size() - i);
    for (std::size_t len = longest; len >= 1; --len) {
      const auto phrase = join_words(std::span(words).subspan(i, len));
      if (auto canonical = dict.lookup(phrase)) {
        out.mentions.push_back(*canonical);
        out.objects.insert(*canonical);
        i += len;
        matched = true;
        break;
      }
    }
    if (!matched) ++i;
  }
  return out;
}

struct CaptionRecord {
  std::string image;
  std::string caption;
  std::vector<std::string> gt_objects;
};

enum class RecallMode { Macro, Micro };

struct ChairReport {
  long captions = 0;
  long hallucinated_captions = 0;
  long mentions = 0;
  long hallucinated_mentions = 0;
  long gt_objects = 0;
  long covered_objects = 0;
  std::optional<double> chair_s;
  std::optional<double> chair_i;
  std::optional<double> recall;
  double avg_length = 0.0;
  RecallMode recall_mode = RecallMode::Macro;
};

/// CHAIR_S: share of captions mentioning an object outside their ground truth.
/// CHAIR_I: hallucinated mentions over all object mentions.
/// Recall: covered ground-truth objects over ground-truth objects, averaged
/// per image (macro) or pooled (micro). All as percentages.
inline ChairReport chair_eval(std::span<const CaptionRecord> records, const SynonymDictionary& dict,
                              RecallMode mode = RecallMode::Macro) {
  if (records.empty()) throw InputError("CHAIR evaluation needs at least one caption");
  ChairReport r;
  r.recall_mode = mode;
  double recall_sum = 0.0;
  long recall_images = 0;
  long total_words = 0;

  for (const auto& rec : records) {
    ++r.captions;
    std::set<std::string> gt;
    for (const auto& g : rec.gt_objects) gt.insert(dict.canonicalize(g));
    const auto found = extract_objects(rec.caption, dict);

    bool hallucinated = false;
    for (const auto& m : found.mentions) {
      ++r.mentions;
      if (!gt.contains(m)) {
        ++r.hallucinated_mentions;
        hallucinated = true;
      }
    }
    if (hallucinated) ++r.hallucinated_captions;

    long covered = 0;
    for (const auto& g : gt) covered += found.objects.contains(g) ? 1 : 0;
    r.gt_objects += static_cast<long>(gt.size());
    r.covered_objects += covered;
    if (!gt.empty()) {
      recall_sum += static_cast<double>(covered) / static_cast<double>(gt.size());
      ++recall_images;
    }

    std::istringstream ws(rec.caption);
    std::string tok;
    while (ws >> tok) ++total_words;
  }

  r.chair_s = ratio(static_cast<double>(r.hallucinated_captions), static_cast<double>(r.captions));
  r.chair_i = ratio(static_cast<double>(r.hallucinated_mentions), static_cast<double>(r.mentions));
  if (mode == RecallMode::Macro) {
    if (recall_images > 0) r.recall = 100.0 * recall_sum / static_cast<double>(recall_images);
  } else {
    r.recall = ratio(static_cast<double>(r.covered_objects), static_cast<double>(r.gt_objects));
  }
  r.avg_length = static_cast<double>(total_words) / static_cast<double>(r.captions);
  return r;
}

inline nlohmann::json to_json(const ChairReport& r) {
  auto opt = [](const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); };
  return {{"benchmark", "chair"},
          {"chair_s", opt(r.chair_s)},
          {"chair_i", opt(r.chair_i)},
          {"recall", opt(r.recall)},
          {"recall_mode", r.recall_mode == RecallMode::Macro ? "macro" : "micro"},
          {"avg_length", r.avg_length},
          {"counts",
           {{"captions", r.captions}, {"hallucinated_captions", r.hallucinated_captions},
            {"mentions", r.mentions}, {"hallucinated_mentions", r.hallucinated_mentions},
            {"gt_objects", r.gt_objects}, {"covered_objects", r.covered_objects}}}};
}

}  // namespace ed::metrics
