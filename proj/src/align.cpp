#include "restorekit/align.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <set>
#include <sstream>

#include "restorekit/error.hpp"
#include "restorekit/io.hpp"

namespace restorekit {

namespace {

constexpr double kFrameEps = 1e-9;

std::string fmt(double v, int digits = 3) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", digits, v);
  return buf;
}

struct Score {
  int accepted = -1;
  double accepted_error = 0.0;
  double total_error = 0.0;

  bool better_than(const Score& o) const {
    if (accepted != o.accepted) return accepted > o.accepted;
    if (accepted_error != o.accepted_error) return accepted_error < o.accepted_error;
    return total_error < o.total_error;
  }
};

// Depth-first search over injective maps from `a` into `b`.
class Assigner {
 public:
  Assigner(const std::vector<double>& a, const std::vector<double>& b, double tol) : a_(a), b_(b), tol_(tol) {
    used_.assign(b.size(), false);
    cur_.assign(a.size(), -1);
  }

  std::vector<int> solve() {
    visit(0, {0, 0.0, 0.0});
    return best_;
  }

 private:
  void visit(std::size_t i, Score s) {
    if (i == a_.size()) {
      if (s.better_than(best_score_)) {
        best_score_ = s;
        best_ = cur_;
      }
      return;
    }
    for (std::size_t j = 0; j < b_.size(); ++j) {
      if (used_[j]) continue;
      const double err = std::abs(a_[i] - b_[j]);
      Score next = s;
      next.total_error += err;
      if (err <= tol_) {
        ++next.accepted;
        next.accepted_error += err;
      }
      used_[j] = true;
      cur_[i] = static_cast<int>(j);
      visit(i + 1, next);
      used_[j] = false;
    }
  }

  const std::vector<double>& a_;
  const std::vector<double>& b_;
  double tol_;
  std::vector<bool> used_;
  std::vector<int> cur_, best_;
  Score best_score_;
};

std::vector<SequenceRecord> sorted_checked(const std::vector<SequenceRecord>& recs, SequenceRole role) {
  std::vector<SequenceRecord> out = recs;
  std::set<std::string> ids;
  for (const auto& r : out) {
    r.validate();
    if (r.role != role) {
      throw ValidationError("sequence " + r.id + " has role " + to_string(r.role) + ", expected " + to_string(role));
    }
    if (!ids.insert(r.id).second) throw ValidationError("duplicate sequence id " + r.id);
  }
  std::sort(out.begin(), out.end(), [](const auto& x, const auto& y) { return x.id < y.id; });
  return out;
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream is(line);
  while (std::getline(is, cell, ',')) {
    const auto b = cell.find_first_not_of(" \t\r");
    const auto e = cell.find_last_not_of(" \t\r");
    out.push_back(b == std::string::npos ? "" : cell.substr(b, e - b + 1));
  }
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

}  // namespace

const char* to_string(SequenceRole r) { return r == SequenceRole::kGT ? "GT" : "LQ"; }

SequenceRole sequence_role_from_string(const std::string& s) {
  if (s == "GT" || s == "gt") return SequenceRole::kGT;
  if (s == "LQ" || s == "lq") return SequenceRole::kLQ;
  throw ValidationError("unknown sequence role '" + s + "' (expected GT or LQ)");
}

void SequenceRecord::validate() const {
  if (!(start_marker_appear_s < start_marker_disappear_s)) {
    throw ValidationError("sequence " + id + ": start marker must disappear after it appears");
  }
  if (!(start_marker_disappear_s < end_marker_appear_s)) {
    throw ValidationError("sequence " + id + ": end marker must appear after the start marker disappears");
  }
  if (!(fps > 0.0) || !std::isfinite(fps)) throw ValidationError("sequence " + id + ": fps must be positive");
  if (frame_count < 1) throw ValidationError("sequence " + id + ": frame_count must be >= 1");
}

double interval(const SequenceRecord& rec) {
  rec.validate();
  return rec.start_marker_disappear_s - rec.start_marker_appear_s;
}

MatchResult match_sequences(const std::vector<SequenceRecord>& gts, const std::vector<SequenceRecord>& lqs,
                            double tolerance_s) {
  if (gts.empty() || lqs.empty()) throw ValidationError("matching needs at least one GT and one LQ sequence");
  if (!(tolerance_s >= 0.0)) throw ValidationError("tolerance must be >= 0");
  const int limit = kMaxExhaustiveSequences;
  if (static_cast<int>(gts.size()) > limit || static_cast<int>(lqs.size()) > limit) {
    throw SizeError("exhaustive matching supports at most " + std::to_string(limit) +
                    " sequences per side, got " + std::to_string(gts.size()) + " GT and " +
                    std::to_string(lqs.size()) + " LQ");
  }
  const auto g = sorted_checked(gts, SequenceRole::kGT);
  const auto l = sorted_checked(lqs, SequenceRole::kLQ);
  std::vector<double> gi, li;
  for (const auto& r : g) gi.push_back(interval(r));
  for (const auto& r : l) li.push_back(interval(r));

  const bool gt_outer = g.size() <= l.size();
  const auto assignment = gt_outer ? Assigner(gi, li, tolerance_s).solve() : Assigner(li, gi, tolerance_s).solve();

  MatchResult result;
  std::vector<bool> g_used(g.size(), false), l_used(l.size(), false);
  for (std::size_t i = 0; i < assignment.size(); ++i) {
    const std::size_t gk = gt_outer ? i : static_cast<std::size_t>(assignment[i]);
    const std::size_t lk = gt_outer ? static_cast<std::size_t>(assignment[i]) : i;
    g_used[gk] = l_used[lk] = true;
    const double err = std::abs(gi[gk] - li[lk]);
    if (err <= tolerance_s) {
      result.pairs.push_back({g[gk].id, l[lk].id, err});
    } else {
      const std::string why = "interval error " + fmt(err) + " s exceeds tolerance " + fmt(tolerance_s) + " s";
      result.rejected.push_back({g[gk].id, SequenceRole::kGT, why + " (best counterpart " + l[lk].id + ")"});
      result.rejected.push_back({l[lk].id, SequenceRole::kLQ, why + " (best counterpart " + g[gk].id + ")"});
    }
  }
  for (std::size_t k = 0; k < g.size(); ++k)
    if (!g_used[k]) result.rejected.push_back({g[k].id, SequenceRole::kGT, "no LQ sequence left to pair"});
  for (std::size_t k = 0; k < l.size(); ++k)
    if (!l_used[k]) result.rejected.push_back({l[k].id, SequenceRole::kLQ, "no GT sequence left to pair"});
  std::sort(result.pairs.begin(), result.pairs.end(), [](const auto& a, const auto& b) { return a.gt_id < b.gt_id; });
  return result;
}

MatchResult match_scenes(const std::vector<SequenceRecord>& records, double tolerance_s) {
  std::map<std::string, std::pair<std::vector<SequenceRecord>, std::vector<SequenceRecord>>> scenes;
  for (const auto& r : records) {
    auto& s = scenes[r.scene];
    (r.role == SequenceRole::kGT ? s.first : s.second).push_back(r);
  }
  MatchResult all;
  for (const auto& [scene, lists] : scenes) {
    const std::string label = scene.empty() ? "" : " in scene " + scene;
    if (lists.first.empty() || lists.second.empty()) {
      for (const auto& r : lists.first) all.rejected.push_back({r.id, r.role, "no LQ sequences" + label});
      for (const auto& r : lists.second) all.rejected.push_back({r.id, r.role, "no GT sequences" + label});
      continue;
    }
    MatchResult m = match_sequences(lists.first, lists.second, tolerance_s);
    all.pairs.insert(all.pairs.end(), m.pairs.begin(), m.pairs.end());
    all.rejected.insert(all.rejected.end(), m.rejected.begin(), m.rejected.end());
  }
  return all;
}

FramePairing pair_frames(const SequenceRecord& gt, const SequenceRecord& lq) {
  auto span = [](const SequenceRecord& r) {
    if (!(r.end_marker_appear_s > r.start_marker_disappear_s)) {
      throw PairingError("sequence " + r.id + ": end marker appears before the start marker disappears");
    }
    if (!(r.fps > 0.0)) throw PairingError("sequence " + r.id + ": fps must be positive");
    const int first = static_cast<int>(std::ceil(r.start_marker_disappear_s * r.fps - kFrameEps));
    const int last = std::min(static_cast<int>(std::floor(r.end_marker_appear_s * r.fps + kFrameEps)),
                              r.frame_count - 1);
    if (last < first) throw PairingError("sequence " + r.id + " has no usable frames between the markers");
    return std::pair<int, int>{first, last};
  };
  const auto [g0, g1] = span(gt);
  const auto [l0, l1] = span(lq);
  FramePairing out;
  out.gt_span = g1 - g0 + 1;
  out.lq_span = l1 - l0 + 1;
  out.warnings = out.gt_span != out.lq_span ? 1 : 0;
  const int n = std::min(out.gt_span, out.lq_span);
  out.pairs.reserve(n);
  for (int i = 0; i < n; ++i) out.pairs.emplace_back(g0 + i, l0 + i);
  return out;
}

std::string MatchResult::summary() const {
  std::ostringstream os;
  char line[256];
  std::snprintf(line, sizeof(line), "%-20s %-20s %10s\n", "GT", "LQ", "error (s)");
  os << line;
  for (const auto& p : pairs) {
    std::snprintf(line, sizeof(line), "%-20s %-20s %10.3f\n", p.gt_id.c_str(), p.lq_id.c_str(), p.error_s);
    os << line;
  }
  os << pairs.size() << " accepted, " << rejected.size() << " rejected\n";
  for (const auto& r : rejected) os << "  rejected " << to_string(r.role) << " " << r.id << ": " << r.reason << "\n";
  return os.str();
}

void to_json(nlohmann::json& j, const SequenceRecord& r) {
  j = {{"id", r.id},
       {"role", to_string(r.role)},
       {"start_marker_appear_s", r.start_marker_appear_s},
       {"start_marker_disappear_s", r.start_marker_disappear_s},
       {"end_marker_appear_s", r.end_marker_appear_s},
       {"fps", r.fps},
       {"frame_count", r.frame_count},
       {"scene", r.scene}};
}

void from_json(const nlohmann::json& j, SequenceRecord& r) {
  r.id = j.at("id").get<std::string>();
  r.role = sequence_role_from_string(j.at("role").get<std::string>());
  r.start_marker_appear_s = j.at("start_marker_appear_s").get<double>();
  r.start_marker_disappear_s = j.at("start_marker_disappear_s").get<double>();
  r.end_marker_appear_s = j.at("end_marker_appear_s").get<double>();
  r.fps = j.at("fps").get<double>();
  r.frame_count = j.at("frame_count").get<int>();
  r.scene = j.value("scene", "");
}

nlohmann::json to_json(const MatchResult& m) {
  nlohmann::json pairs = nlohmann::json::array();
  for (const auto& p : m.pairs) pairs.push_back({{"gt", p.gt_id}, {"lq", p.lq_id}, {"error_s", p.error_s}});
  nlohmann::json rejected = nlohmann::json::array();
  for (const auto& r : m.rejected) rejected.push_back({{"id", r.id}, {"role", to_string(r.role)}, {"reason", r.reason}});
  return {{"pairs", pairs}, {"rejected", rejected}};
}

std::vector<SequenceRecord> parse_sequences_csv(const std::string& text) {
  std::istringstream is(text);
  std::string line;
  std::vector<std::string> header;
  std::vector<SequenceRecord> out;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    auto cells = split_csv_line(line);
    if (header.empty()) {
      header = cells;
      continue;
    }
    if (cells.size() != header.size()) {
      throw ValidationError("csv line " + std::to_string(lineno) + ": expected " + std::to_string(header.size()) +
                            " fields, got " + std::to_string(cells.size()));
    }
    nlohmann::json j;
    for (std::size_t k = 0; k < header.size(); ++k) {
      const std::string& key = header[k];
      if (key == "id" || key == "role" || key == "scene") {
        j[key] = cells[k];
        continue;
      }
      try {
        std::size_t used = 0;
        const double v = std::stod(cells[k], &used);
        if (used != cells[k].size()) throw std::invalid_argument(cells[k]);
        if (key == "frame_count") {
          j[key] = static_cast<int>(v);
        } else {
          j[key] = v;
        }
      } catch (const std::logic_error&) {
        throw ValidationError("csv line " + std::to_string(lineno) + ": field " + key + " is not a number: '" +
                              cells[k] + "'");
      }
    }
    try {
      out.push_back(j.get<SequenceRecord>());
    } catch (const nlohmann::json::exception& e) {
      throw ValidationError("csv line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

std::vector<SequenceRecord> read_sequences(const std::filesystem::path& path) {
  const std::string text = read_file(path);
  if (path.extension() == ".csv") return parse_sequences_csv(text);
  std::vector<SequenceRecord> out;
  std::istringstream is(text);
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(nlohmann::json::parse(line).get<SequenceRecord>());
    } catch (const nlohmann::json::exception& e) {
      throw ValidationError(path.string() + " line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace restorekit
