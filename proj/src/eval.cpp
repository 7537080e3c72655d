#include "depmt/eval.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include <json.hpp>

#include "depmt/error.hpp"

namespace depmt {

namespace fs = std::filesystem;

// ---- BLEU ----

namespace {

// n-gram keyed by joined tokens; '\x1f' cannot appear inside a token
std::string ngram_key(const std::vector<std::string>& toks, size_t start, int n) {
  std::string key;
  for (int i = 0; i < n; ++i) {
    if (i) key += '\x1f';
    key += toks[start + i];
  }
  return key;
}

}  // namespace

double corpus_bleu(const std::vector<std::vector<std::string>>& hypotheses,
                   const std::vector<std::vector<std::string>>& references) {
  if (hypotheses.empty()) throw Error("data_error", "BLEU over an empty corpus");
  if (hypotheses.size() != references.size())
    throw Error("data_error", "BLEU needs one reference per hypothesis: " + std::to_string(hypotheses.size()) +
                                  " vs " + std::to_string(references.size()));

  long long match[5] = {0, 0, 0, 0, 0};
  long long total[5] = {0, 0, 0, 0, 0};
  long long hyp_len = 0, ref_len = 0;

  std::map<std::string, long long> ref_counts;
  for (size_t s = 0; s < hypotheses.size(); ++s) {
    const auto& hyp = hypotheses[s];
    const auto& ref = references[s];
    hyp_len += static_cast<long long>(hyp.size());
    ref_len += static_cast<long long>(ref.size());
    for (int n = 1; n <= 4; ++n) {
      if (static_cast<int>(hyp.size()) < n) continue;
      ref_counts.clear();
      if (static_cast<int>(ref.size()) >= n)
        for (size_t i = 0; i + n <= ref.size(); ++i) ++ref_counts[ngram_key(ref, i, n)];
      std::map<std::string, long long> hyp_counts;
      for (size_t i = 0; i + n <= hyp.size(); ++i) ++hyp_counts[ngram_key(hyp, i, n)];
      for (const auto& [key, cnt] : hyp_counts) {
        total[n] += cnt;
        const auto it = ref_counts.find(key);
        if (it != ref_counts.end()) match[n] += std::min(cnt, it->second);
      }
    }
  }

  for (int n = 1; n <= 4; ++n)
    if (total[n] == 0 || match[n] == 0) return 0.0;

  double log_prec = 0.0;
  for (int n = 1; n <= 4; ++n)
    log_prec += std::log(static_cast<double>(match[n]) / static_cast<double>(total[n]));
  log_prec /= 4.0;

  const double bp = hyp_len > ref_len
                        ? 1.0
                        : std::exp(1.0 - static_cast<double>(ref_len) / static_cast<double>(hyp_len));
  return 100.0 * bp * std::exp(log_prec);
}

double corpus_bleu_lines(const std::vector<std::string>& hypotheses, const std::vector<std::string>& references) {
  auto split = [](const std::vector<std::string>& lines) {
    std::vector<std::vector<std::string>> out(lines.size());
    for (size_t i = 0; i < lines.size(); ++i) {
      std::istringstream ss(lines[i]);
      std::string tok;
      while (ss >> tok) out[i].push_back(tok);
    }
    return out;
  };
  return corpus_bleu(split(hypotheses), split(references));
}

// ---- attention histograms ----

std::array<long long, 9> HistogramReport::display_bins() const {
  std::array<long long, 9> out{};
  for (int i = 1; i < 10; ++i) out[i - 1] = counts[i];
  return out;
}

HistogramReport attention_histogram(const std::vector<AttentionRecord>& records, int layer) {
  if (records.empty()) throw Error("data_error", "attention histogram over no records");
  HistogramReport rep;
  rep.layer = layer;
  for (const auto& rec : records) {
    if (layer < 0 || layer >= static_cast<int>(rec.alpha.size()))
      throw Error("data_error", "layer " + std::to_string(layer) + " not present in attention record");
    for (const auto& head : rec.alpha[layer]) {
      for (double w : head.data) {
        int bin = static_cast<int>(w * 10.0);
        if (bin < 0) bin = 0;
        if (bin > 9) bin = 9;  // weight 1.0 falls into the top bin
        ++rep.counts[bin];
        ++rep.total_cells;
      }
    }
  }
  return rep;
}

double sharpness(const std::vector<AttentionRecord>& records, int layer, int head) {
  double sum = 0.0;
  long rows = 0;
  for (const auto& rec : records) {
    if (layer < 0 || layer >= static_cast<int>(rec.alpha.size()) || head < 0 ||
        head >= static_cast<int>(rec.alpha[layer].size()))
      throw Error("data_error", "layer/head outside attention record");
    const Matrix& a = rec.alpha[layer][head];
    for (int i = 0; i < a.rows; ++i) {
      double mx = 0.0;
      for (int j = 0; j < a.cols; ++j) mx = a[i][j] > mx ? a[i][j] : mx;
      sum += mx;
      ++rows;
    }
  }
  if (rows == 0) throw Error("data_error", "sharpness over no attention rows");
  return sum / rows;
}

std::string histogram_to_json(const HistogramReport& report) {
  nlohmann::json j;
  j["layer"] = report.layer;
  j["counts"] = report.counts;
  j["total_cells"] = report.total_cells;
  j["display_bins"] = report.display_bins();
  j["display_excludes"] = "[0.0,0.1)";
  return j.dump();
}

// ---- run report ----

MetricsReport report(const std::string& run_dir) {
  const fs::path log_path = fs::path(run_dir) / "metrics.jsonl";
  std::ifstream in(log_path, std::ios::binary);
  if (!in) throw Error("missing_input", "no metrics log at " + log_path.string());

  MetricsReport rep;
  std::vector<nlohmann::json> records;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      nlohmann::json j = nlohmann::json::parse(line);
      if (!j.contains("step")) throw std::runtime_error("no step field");
      records.push_back(std::move(j));
    } catch (const std::exception& e) {
      std::cerr << "warning: " << log_path.string() << ":" << lineno << ": skipping corrupt record ("
                << e.what() << ")\n";
      ++rep.skipped_lines;
    }
  }
  if (records.empty()) throw Error("data_error", "metrics log holds no usable records: " + log_path.string());
  rep.points = static_cast<int>(records.size());

  const fs::path out_dir = fs::path(run_dir) / "report";
  fs::create_directories(out_dir);

  const std::vector<std::string> scalar_keys = {"mt_loss",          "parse_loss",         "dev_bleu",
                                                "dev_uas",          "dev_diag_precision", "dev_secondary_exact",
                                                "dev_label_acc"};
  for (const auto& key : scalar_keys) {
    bool any = false;
    for (const auto& r : records) any = any || r.contains(key);
    if (!any) continue;
    std::ofstream csv(out_dir / (key + "_by_step.csv"), std::ios::binary);
    csv << "step," << key << "\n";
    for (const auto& r : records)
      if (r.contains(key)) csv << r["step"].get<long>() << "," << r[key].get<double>() << "\n";
  }

  // learning curves against per-task training data throughput
  std::vector<std::string> tasks;
  for (const auto& r : records)
    if (r.contains("examples"))
      for (const auto& [task, v] : r["examples"].items())
        if (std::find(tasks.begin(), tasks.end(), task) == tasks.end()) tasks.push_back(task);
  for (const auto& task : tasks) {
    std::ofstream csv(out_dir / ("dev_bleu_by_" + task + "_examples.csv"), std::ios::binary);
    csv << task << "_examples,dev_bleu\n";
    for (const auto& r : records)
      if (r.contains("examples") && r["examples"].contains(task) && r.contains("dev_bleu"))
        csv << r["examples"][task].get<long>() << "," << r["dev_bleu"].get<double>() << "\n";
  }

  for (const auto& r : records) {
    const long step = r["step"].get<long>();
    if (r.contains("mt_loss")) rep.mt_loss_curve.emplace_back(step, r["mt_loss"].get<double>());
    if (r.contains("parse_loss")) rep.parse_loss_curve.emplace_back(step, r["parse_loss"].get<double>());
  }
  const auto& last = records.back();
  if (last.contains("dev_bleu")) rep.bleu = last["dev_bleu"].get<double>();
  if (last.contains("dev_uas")) rep.uas = last["dev_uas"].get<double>();
  if (last.contains("dev_diag_precision")) rep.diag_precision = last["dev_diag_precision"].get<double>();
  if (last.contains("dev_label_acc")) rep.label_acc = last["dev_label_acc"].get<double>();
  if (last.contains("dev_secondary_exact")) rep.secondary_exact = last["dev_secondary_exact"].get<double>();

  nlohmann::json summary;
  summary["points"] = rep.points;
  summary["skipped_lines"] = rep.skipped_lines;
  summary["final"] = last;
  std::ofstream out(out_dir / "report.json", std::ios::binary);
  out << summary.dump(2) << "\n";

  return rep;
}

}  // namespace depmt
