#ifndef HFNN_TRANSCRIPT_HPP
#define HFNN_TRANSCRIPT_HPP

#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "hfnn/common.hpp"
#include "hfnn/json_util.hpp"

namespace hfnn {

enum class MessageKind { LocalCenters, GlobalBroadcast, DualAck };

inline std::string to_string(MessageKind kind) {
  switch (kind) {
    case MessageKind::LocalCenters: return "LocalCenters";
    case MessageKind::GlobalBroadcast: return "GlobalBroadcast";
    case MessageKind::DualAck: return "DualAck";
  }
  return "?";
}

inline MessageKind message_kind_from_string(const std::string& s) {
  if (s == "LocalCenters") return MessageKind::LocalCenters;
  if (s == "GlobalBroadcast") return MessageKind::GlobalBroadcast;
  if (s == "DualAck") return MessageKind::DualAck;
  throw TranscriptError("unknown message kind: " + s);
}



// One protocol message. Uploads carry either consensus contributions
// (beta + rho * m, with cluster counts) or, in the terminal width round,
// local widths with cluster counts. Never raw sample rows.
struct RoundMessage {
  MessageKind kind = MessageKind::LocalCenters;
  int t = 0;
  int b = 0;
  int agent_id = -1;  // -1 for coordinator broadcasts

  // LocalCenters payload
  Matrix contrib;    // K x F (consensus rounds)
  Matrix sigma;      // K x F (width round)
  IntVector counts;  // K

  // GlobalBroadcast payload
  Matrix r;  // K x F
  bool final_round = false;

  // DualAck payload
  Vector primal_sq;  // K
  Vector dual_sq;    // K
  bool stable = false;

  // Payload fields seen on disk that are not part of the schema.
  std::vector<std::string> extra_fields;
};

struct TranscriptHeader {
  int format_version = 1;
  int agents = 0;
  int branches = 0;
  std::vector<int> rules;     // K per branch
  std::vector<int> features;  // |F_b| per branch
  double rho = 1.0;
  double eps_primal = 1e-4;
  double eps_dual = 1e-4;
  int max_rounds = 0;
  std::string m_update = "exact";
  std::string pool_denominator = "cluster";
  std::uint64_t seed = 0;
};

struct Transcript {
  TranscriptHeader header;
  std::vector<RoundMessage> messages;
};

inline Json message_to_json(const RoundMessage& msg) {
  Json j;
  j["kind"] = to_string(msg.kind);
  j["t"] = msg.t;
  j["b"] = msg.b;
  if (msg.agent_id >= 0) j["agent_id"] = msg.agent_id;
  Json payload;
  switch (msg.kind) {
    case MessageKind::LocalCenters:
      if (msg.sigma.size() > 0) {
        payload["sigma"] = jsonutil::matrix_to_json(msg.sigma);
      } else {
        payload["contrib"] = jsonutil::matrix_to_json(msg.contrib);
      }
      payload["counts"] = jsonutil::ints_to_json(msg.counts);
      break;
    case MessageKind::GlobalBroadcast:
      payload["r"] = jsonutil::matrix_to_json(msg.r);
      if (msg.final_round) payload["final"] = true;
      break;
    case MessageKind::DualAck:
      payload["primal_sq"] = jsonutil::vector_to_json(msg.primal_sq);
      payload["dual_sq"] = jsonutil::vector_to_json(msg.dual_sq);
      payload["stable"] = msg.stable;
      break;
  }
  j["payload"] = std::move(payload);
  return j;
}

inline RoundMessage message_from_json(const Json& j) {
  RoundMessage msg;
  msg.kind = message_kind_from_string(j.at("kind").get<std::string>());
  msg.t = j.at("t").get<int>();
  msg.b = j.at("b").get<int>();
  msg.agent_id = j.contains("agent_id") ? j.at("agent_id").get<int>() : -1;
  const Json& payload = j.at("payload");

  static const std::map<MessageKind, std::set<std::string>> kSchema = {
      {MessageKind::LocalCenters, {"contrib", "sigma", "counts"}},
      {MessageKind::GlobalBroadcast, {"r", "final"}},
      {MessageKind::DualAck, {"primal_sq", "dual_sq", "stable"}},
  };
  for (auto it = payload.begin(); it != payload.end(); ++it) {
    if (!kSchema.at(msg.kind).count(it.key())) {
      msg.extra_fields.push_back(it.key());
    }
  }

  switch (msg.kind) {
    case MessageKind::LocalCenters:
      if (payload.contains("contrib")) {
        msg.contrib = jsonutil::matrix_from_json(payload.at("contrib"));
      }
      if (payload.contains("sigma")) {
        msg.sigma = jsonutil::matrix_from_json(payload.at("sigma"));
      }
      msg.counts = jsonutil::ints_from_json(payload.at("counts"));
      break;
    case MessageKind::GlobalBroadcast:
      msg.r = jsonutil::matrix_from_json(payload.at("r"));
      msg.final_round = payload.value("final", false);
      break;
    case MessageKind::DualAck:
      msg.primal_sq = jsonutil::vector_from_json(payload.at("primal_sq"));
      msg.dual_sq = jsonutil::vector_from_json(payload.at("dual_sq"));
      msg.stable = payload.value("stable", false);
      break;
  }
  return msg;
}

inline Json header_to_json(const TranscriptHeader& h) {
  Json j;
  j["kind"] = "Header";
  j["format_version"] = h.format_version;
  j["agents"] = h.agents;
  j["branches"] = h.branches;
  j["rules"] = h.rules;
  j["features"] = h.features;
  j["rho"] = h.rho;
  j["eps_primal"] = h.eps_primal;
  j["eps_dual"] = h.eps_dual;
  j["max_rounds"] = h.max_rounds;
  j["m_update"] = h.m_update;
  j["pool_denominator"] = h.pool_denominator;
  j["seed"] = h.seed;
  return j;
}

inline TranscriptHeader header_from_json(const Json& j) {
  TranscriptHeader h;
  h.format_version = j.at("format_version").get<int>();
  h.agents = j.at("agents").get<int>();
  h.branches = j.at("branches").get<int>();
  h.rules = j.at("rules").get<std::vector<int>>();
  h.features = j.at("features").get<std::vector<int>>();
  h.rho = j.at("rho").get<double>();
  h.eps_primal = j.at("eps_primal").get<double>();
  h.eps_dual = j.at("eps_dual").get<double>();
  h.max_rounds = j.at("max_rounds").get<int>();
  h.m_update = j.at("m_update").get<std::string>();
  h.pool_denominator = j.at("pool_denominator").get<std::string>();
  h.seed = j.at("seed").get<std::uint64_t>();
  return h;
}

inline void write_transcript(const Transcript& transcript, std::ostream& out) {
  out << header_to_json(transcript.header).dump() << "\n";
  for (const auto& msg : transcript.messages) {
    out << message_to_json(msg).dump() << "\n";
  }
}

inline void write_transcript(const Transcript& transcript,
                             const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open transcript for writing: " + path);
  write_transcript(transcript, out);
}

inline Transcript read_transcript(std::istream& in) {
  Transcript transcript;
  std::string line;
  bool have_header = false;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    Json j;
    try {
      j = Json::parse(line);
    } catch (const std::exception& e) {
      throw TranscriptError("line " + std::to_string(line_no) +
                            ": invalid record: " + e.what());
    }
    const std::string kind = j.value("kind", "");
    if (kind == "Header") {
      if (have_header) throw TranscriptError("duplicate header record");
      transcript.header = header_from_json(j);
      have_header = true;
      continue;
    }
    if (!have_header) throw TranscriptError("missing header record");
    transcript.messages.push_back(message_from_json(j));
  }
  if (!have_header) throw TranscriptError("empty transcript");
  return transcript;
}

inline Transcript read_transcript(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open transcript: " + path);
  return read_transcript(in);
}

struct PrivacyAuditRow {
  int b = 0;
  int t = 0;
  long upload_reals = 0;     // LocalCenters payload numbers (contrib/sigma + counts)
  long broadcast_reals = 0;  // GlobalBroadcast payload numbers
  long ack_reals = 0;        // DualAck payload numbers
};

struct PrivacyAuditReport {
  std::vector<PrivacyAuditRow> rows;  // ordered by (b, t)
  long raw_sample_fields = 0;         // payload fields outside the schema
  std::vector<std::string> flagged_fields;

  bool clean() const { return raw_sample_fields == 0; }
};

// Structural audit: every payload field must belong to the fixed message
// schema (centers, widths, duals, counts, residual scalars). Anything else
// is flagged as potential raw-sample leakage. Also tallies per-round payload
// sizes; the upload cost per branch-round is L * K * (F_b + 1) reals.
inline PrivacyAuditReport privacy_audit(const Transcript& transcript) {
  PrivacyAuditReport report;
  std::map<std::pair<int, int>, PrivacyAuditRow> rows;
  for (const auto& msg : transcript.messages) {
    for (const auto& field : msg.extra_fields) {
      ++report.raw_sample_fields;
      report.flagged_fields.push_back(to_string(msg.kind) + "." + field);
    }
    auto& row = rows[{msg.b, msg.t}];
    row.b = msg.b;
    row.t = msg.t;
    switch (msg.kind) {
      case MessageKind::LocalCenters:
        row.upload_reals += msg.contrib.size() + msg.sigma.size() +
                            msg.counts.size();
        break;
      case MessageKind::GlobalBroadcast:
        row.broadcast_reals += msg.r.size() + (msg.final_round ? 1 : 0);
        break;
      case MessageKind::DualAck:
        row.ack_reals += msg.primal_sq.size() + msg.dual_sq.size() + 1;
        break;
    }
  }
  report.rows.reserve(rows.size());
  for (const auto& [key, row] : rows) report.rows.push_back(row);
  return report;
}

}  // namespace hfnn

#endif
