#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include "adapmen/analysis.hpp"
#include "adapmen/format.hpp"
#include "adapmen/training.hpp"

namespace adapmen {

/// Flat JSON object with keys in insertion order. Doubles go through
/// format_double; non-finite doubles are written as strings.
class FlatRecord {
 public:
  FlatRecord& add(const std::string& key, double v) {
    fields_.emplace_back(key, std::isfinite(v) ? format_double(v) : quote(format_double(v)));
    return *this;
  }
  FlatRecord& add(const std::string& key, std::size_t v) {
    fields_.emplace_back(key, std::to_string(v));
    return *this;
  }
  FlatRecord& add(const std::string& key, bool v) {
    fields_.emplace_back(key, v ? "true" : "false");
    return *this;
  }
  FlatRecord& add(const std::string& key, const std::string& v) {
    fields_.emplace_back(key, quote(v));
    return *this;
  }
  FlatRecord& add(const std::string& key, const char* v) { return add(key, std::string(v)); }

  std::string str() const {
    std::string out = "{";
    for (std::size_t i = 0; i < fields_.size(); ++i) {
      if (i) out += ',';
      out += quote(fields_[i].first);
      out += ':';
      out += fields_[i].second;
    }
    out += '}';
    return out;
  }

  static std::string quote(const std::string& s) {
    std::string out = "\"";
    for (char c : s) {
      switch (c) {
        case '"': out += "\\\""; break;
        case '\\': out += "\\\\"; break;
        case '\n': out += "\\n"; break;
        case '\t': out += "\\t"; break;
        default:
          if (static_cast<unsigned char>(c) < 0x20) {
            char buf[8];
            std::snprintf(buf, sizeof buf, "\\u%04x", c);
            out += buf;
          } else {
            out += c;
          }
      }
    }
    return out + "\"";
  }

 private:
  std::vector<std::pair<std::string, std::string>> fields_;
};

inline FlatRecord to_record(const IterationMetrics& m) {
  FlatRecord r;
  r.add("iteration", m.iteration)
      .add("env_steps", m.env_steps)
      .add("window_steps", m.window_steps)
      .add("window_interventions", m.window_interventions)
      .add("delta_estimate", m.delta_estimate)
      .add("epsb_estimate", m.epsb_estimate)
      .add("p", m.p)
      .add("J_learner", m.J_learner)
      .add("J_teacher", m.J_teacher)
      .add("J_expert", m.J_expert)
      .add("suboptimality_gap", m.suboptimality_gap)
      .add("expert_action_usage", m.expert_action_usage)
      .add("buffer_size", m.buffer_size)
      .add("episodes", m.episodes);
  return r;
}

inline void write_metrics_jsonl(const std::vector<IterationMetrics>& metrics, std::ostream& out) {
  for (const auto& m : metrics) out << to_record(m).str() << '\n';
}

inline constexpr const char* kMetricsCsvHeader =
    "iteration,env_steps,delta_estimate,epsb_estimate,p,J_learner,J_teacher,suboptimality_gap,expert_action_usage,"
    "buffer_size";

inline void write_metrics_csv(const std::vector<IterationMetrics>& metrics, std::ostream& out) {
  out << kMetricsCsvHeader << '\n';
  for (const auto& m : metrics) {
    out << m.iteration << ',' << m.env_steps << ',' << format_double(m.delta_estimate) << ','
        << format_double(m.epsb_estimate) << ',' << format_double(m.p) << ',' << format_double(m.J_learner) << ','
        << format_double(m.J_teacher) << ',' << format_double(m.suboptimality_gap) << ',' << m.expert_action_usage
        << ',' << m.buffer_size << '\n';
  }
}

inline FlatRecord to_record(const BoundReport& b) {
  FlatRecord r;
  r.add("record", "bound").add("name", b.name).add("lhs", b.lhs).add("rhs", b.rhs).add("slack", b.slack).add("holds", b.holds);
  for (const auto& [k, v] : b.inputs) r.add(k, v);
  return r;
}

/// Tail report as JSONL: one summary line, then one line per grid point.
inline void write_tail_report(const TailReport& t, std::ostream& out) {
  out << FlatRecord()
             .add("record", "tail_summary")
             .add("sample_count", t.sample_count)
             .add("mean", t.mean)
             .add("scale", t.scale)
             .str()
      << '\n';
  for (const auto& g : t.grid)
    out << FlatRecord()
               .add("record", "tail_point")
               .add("p", g.p)
               .add("survival", g.survival)
               .add("envelope", g.envelope)
               .add("satisfied", g.satisfied)
               .str()
        << '\n';
}

/// One value per line.
inline void write_samples(const std::vector<double>& samples, std::ostream& out) {
  for (double v : samples) out << format_double(v) << '\n';
}

inline void write_scaling_report(const ScalingReport& rep, std::ostream& out) {
  for (const auto& pt : rep.points)
    out << FlatRecord()
               .add("record", "scaling_point")
               .add("algorithm", rep.algorithm)
               .add("H", pt.horizon)
               .add("mean_gap", pt.mean_gap)
               .add("std_gap", pt.std_gap)
               .add("mean_epsb", pt.mean_epsb)
               .add("mu", pt.mu)
               .add("envelope_holds", pt.envelope_holds)
               .add("max_envelope_ratio", pt.max_envelope_ratio)
               .str()
        << '\n';
  out << FlatRecord()
             .add("record", "scaling_fit")
             .add("algorithm", rep.algorithm)
             .add("slope", rep.slope)
             .add("intercept", rep.intercept)
             .add("degenerate", rep.degenerate)
             .str()
      << '\n';
}

}  // namespace adapmen
