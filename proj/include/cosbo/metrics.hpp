#pragma once

// The per-iteration metrics CSV. Column set is fixed; reals use the same
// full-precision decimal encoding as the dataset format, so a written file
// reloads into exactly the in-memory series.

#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "cosbo/common.hpp"
#include "cosbo/train.hpp"

namespace cosbo::harness {

inline constexpr const char* kMetricsHeader =
    "iter,eval_return_mean,eval_return_std,q_loss,pi_loss,q_real_mean,q_synth_mean,"
    "conservatism_gap,buffer_size,wall_ms";

inline void write_metrics_csv(const std::vector<core::IterRow>& rows, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  out << kMetricsHeader << '\n';
  for (const auto& r : rows) {
    out << r.iter << ',' << format_real(r.eval_return_mean) << ','
        << format_real(r.eval_return_std) << ',' << format_real(r.q_loss) << ','
        << format_real(r.pi_loss) << ',' << format_real(r.q_real_mean) << ','
        << format_real(r.q_synth_mean) << ',' << format_real(r.conservatism_gap) << ','
        << r.buffer_size << ',' << format_real(r.wall_ms) << '\n';
  }
  if (!out) throw std::runtime_error("write failed: " + path);
}

inline std::vector<core::IterRow> read_metrics_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open: " + path);
  std::string header;
  if (!std::getline(in, header) || header != kMetricsHeader)
    throw std::runtime_error(path + ": unexpected metrics header");
  std::vector<core::IterRow> rows;
  std::string line;
  long line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<std::string> toks;
    std::stringstream ss(line);
    std::string tok;
    while (std::getline(ss, tok, ',')) toks.push_back(tok);
    if (toks.size() != 10)
      throw std::runtime_error(path + ": line " + std::to_string(line_no) +
                               ": expected 10 columns");
    auto real_at = [&](int k) {
      bool ok = false;
      const double v = parse_real(toks[static_cast<std::size_t>(k)], &ok);
      if (!ok)
        throw std::runtime_error(path + ": line " + std::to_string(line_no) + ": bad value '" +
                                 toks[static_cast<std::size_t>(k)] + "'");
      return v;
    };
    core::IterRow r;
    r.iter = static_cast<long>(real_at(0));
    r.eval_return_mean = real_at(1);
    r.eval_return_std = real_at(2);
    r.q_loss = real_at(3);
    r.pi_loss = real_at(4);
    r.q_real_mean = real_at(5);
    r.q_synth_mean = real_at(6);
    r.conservatism_gap = real_at(7);
    r.buffer_size = static_cast<long>(real_at(8));
    r.wall_ms = real_at(9);
    rows.push_back(r);
  }
  return rows;
}

}  // namespace cosbo::harness
