#ifndef HFNN_AGENT_SIM_HPP
#define HFNN_AGENT_SIM_HPP

#include <string>
#include <utility>
#include <vector>

#include "hfnn/clustering.hpp"
#include "hfnn/common.hpp"
#include "hfnn/parallel.hpp"
#include "hfnn/rng.hpp"
#include "hfnn/transcript.hpp"

namespace hfnn {

// One agent's private shard: its rows restricted to each branch's features.
// Raw rows never leave this struct; the protocol ships only centers, duals,
// counts and residual scalars.
struct AgentShard {
  int agent_id = 0;
  std::vector<Matrix> branch_data;  // per branch, rows x |F_b|
};

inline std::vector<AgentShard> make_shards(
    const Matrix& X, const std::vector<std::vector<int>>& feature_groups,
    const std::vector<int>& agent_assignment, int n_agents) {
  require(n_agents >= 1, "make_shards: need at least one agent");
  require_shape(agent_assignment.size() ==
                    static_cast<std::size_t>(X.rows()),
                "make_shards: assignment length mismatch");
  std::vector<std::vector<Eigen::Index>> rows_per_agent(
      static_cast<std::size_t>(n_agents));
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    const int a = agent_assignment[static_cast<std::size_t>(i)];
    require(a >= 0 && a < n_agents, "make_shards: agent id out of range");
    rows_per_agent[static_cast<std::size_t>(a)].push_back(i);
  }
  std::vector<AgentShard> shards(static_cast<std::size_t>(n_agents));
  for (int a = 0; a < n_agents; ++a) {
    auto& shard = shards[static_cast<std::size_t>(a)];
    shard.agent_id = a;
    const auto& rows = rows_per_agent[static_cast<std::size_t>(a)];
    if (rows.empty()) {
      throw ConfigError("make_shards: agent " + std::to_string(a) +
                        " received no samples");
    }
    shard.branch_data.reserve(feature_groups.size());
    for (const auto& group : feature_groups) {
      Matrix sub(static_cast<Eigen::Index>(rows.size()),
                 static_cast<Eigen::Index>(group.size()));
      for (std::size_t ri = 0; ri < rows.size(); ++ri) {
        for (std::size_t ci = 0; ci < group.size(); ++ci) {
          sub(static_cast<Eigen::Index>(ri), static_cast<Eigen::Index>(ci)) =
              X(rows[ri], group[ci]);
        }
      }
      shard.branch_data.push_back(std::move(sub));
    }
  }
  return shards;
}

struct Stage1Options {
  std::vector<int> rules;  // K per branch
  double rho = 1.0;
  double eps_primal = 1e-4;
  double eps_dual = 1e-4;
  int max_rounds = 50;
  MUpdateMode m_update = MUpdateMode::Exact;
  PooledDenominator pool_denominator = PooledDenominator::Cluster;
  std::uint64_t seed = 0;
  int threads = 1;
};

struct Stage1Result {
  std::vector<Matrix> centers;  // per branch, K x F
  std::vector<Matrix> widths;   // per branch, K x F (pooled, unfloored)
  std::vector<std::vector<int>> empty_clusters;
  std::vector<int> rounds;
  std::vector<char> converged;
  Transcript transcript;
};

namespace detail {

inline Matrix coordinator_global_update(const std::vector<Matrix>& contribs,
                                        double rho) {
  Matrix acc = Matrix::Zero(contribs[0].rows(), contribs[0].cols());
  for (const auto& c : contribs) acc += c;
  return acc / (static_cast<double>(contribs.size()) * rho);
}

}  // namespace detail

// Barrier-synchronous execution of the distributed clustering stage. Each
// round: agents assign and update local centers in parallel, upload
// (beta + rho m) contributions, the coordinator forms the consensus centers
// and broadcasts them, agents run dual ascent and acknowledge with residual
// scalars. A terminal broadcast triggers the width round. Reductions are in
// fixed agent order, so the outcome is independent of the thread count and
// matches the single-loop driver exactly.
inline Stage1Result run_stage1(const std::vector<AgentShard>& shards,
                               const Stage1Options& opts) {
  require(!shards.empty(), "run_stage1: need at least one agent");
  require(opts.rho > 0.0, "run_stage1: rho must be positive");
  require(opts.eps_primal > 0.0 && opts.eps_dual > 0.0,
          "run_stage1: tolerances must be positive");
  require(opts.max_rounds >= 1, "run_stage1: max_rounds must be >= 1");
  const std::size_t n_agents = shards.size();
  const std::size_t n_branches = shards[0].branch_data.size();
  require(opts.rules.size() == n_branches,
          "run_stage1: rule count per branch mismatch");
  for (const auto& shard : shards) {
    require_shape(shard.branch_data.size() == n_branches,
                  "run_stage1: inconsistent branch count across shards");
    for (const auto& data : shard.branch_data) {
      if (data.rows() < 1) {
        throw ConfigError("run_stage1: agent " +
                          std::to_string(shard.agent_id) +
                          " has no samples for some branch");
      }
    }
  }

  Stage1Result result;
  result.centers.resize(n_branches);
  result.widths.resize(n_branches);
  result.empty_clusters.resize(n_branches);
  result.rounds.assign(n_branches, 0);
  result.converged.assign(n_branches, 0);

  auto& header = result.transcript.header;
  header.agents = static_cast<int>(n_agents);
  header.branches = static_cast<int>(n_branches);
  header.rules = opts.rules;
  for (std::size_t b = 0; b < n_branches; ++b) {
    header.features.push_back(
        static_cast<int>(shards[0].branch_data[b].cols()));
  }
  header.rho = opts.rho;
  header.eps_primal = opts.eps_primal;
  header.eps_dual = opts.eps_dual;
  header.max_rounds = opts.max_rounds;
  header.m_update = opts.m_update == MUpdateMode::Exact ? "exact" : "mean";
  header.pool_denominator =
      opts.pool_denominator == PooledDenominator::Cluster ? "cluster" : "all";
  header.seed = opts.seed;

  for (std::size_t b = 0; b < n_branches; ++b) {
    const int k_rules = opts.rules[b];
    Rng init_rng(derive_seed(opts.seed, b));
    Matrix r = init_centers_from_data(shards[0].branch_data[b], k_rules,
                                      init_rng);

    std::vector<Matrix> m(n_agents, r);
    std::vector<Matrix> beta(n_agents, Matrix::Zero(k_rules, r.cols()));
    std::vector<std::vector<int>> assignments(n_agents);

    bool converged = false;
    int round = 0;
    while (round < opts.max_rounds && !converged) {
      ++round;
      // Local half-round, one slot per agent.
      std::vector<LocalUpdate> updates(n_agents);
      parallel_for(n_agents, opts.threads, [&](std::size_t l) {
        updates[l] = agent_local_update(shards[l].branch_data[b], m[l],
                                        beta[l], r, opts.rho, opts.m_update,
                                        assignments[l]);
      });
      std::vector<Matrix> contribs(n_agents);
      for (std::size_t l = 0; l < n_agents; ++l) {
        m[l] = updates[l].m;
        contribs[l] = updates[l].contrib;
        RoundMessage msg;
        msg.kind = MessageKind::LocalCenters;
        msg.t = round;
        msg.b = static_cast<int>(b);
        msg.agent_id = static_cast<int>(l);
        msg.contrib = updates[l].contrib;
        msg.counts = updates[l].counts;
        result.transcript.messages.push_back(std::move(msg));
      }

      r = detail::coordinator_global_update(contribs, opts.rho);
      {
        RoundMessage msg;
        msg.kind = MessageKind::GlobalBroadcast;
        msg.t = round;
        msg.b = static_cast<int>(b);
        msg.r = r;
        result.transcript.messages.push_back(std::move(msg));
      }

      std::vector<DualResidual> residuals(n_agents);
      parallel_for(n_agents, opts.threads, [&](std::size_t l) {
        residuals[l] = agent_dual_update(beta[l], m[l], r, opts.rho);
      });
      bool all_stable = true;
      double max_primal = 0.0, max_dual = 0.0;
      for (std::size_t l = 0; l < n_agents; ++l) {
        const bool stable = !updates[l].assignments_changed;
        if (!stable) all_stable = false;
        max_primal = std::max(max_primal, residuals[l].primal_sq.maxCoeff());
        max_dual = std::max(max_dual, residuals[l].dual_sq.maxCoeff());
        RoundMessage msg;
        msg.kind = MessageKind::DualAck;
        msg.t = round;
        msg.b = static_cast<int>(b);
        msg.agent_id = static_cast<int>(l);
        msg.primal_sq = residuals[l].primal_sq;
        msg.dual_sq = residuals[l].dual_sq;
        msg.stable = stable;
        result.transcript.messages.push_back(std::move(msg));
      }
      converged = all_stable && max_primal <= opts.eps_primal &&
                  max_dual <= opts.eps_dual;
    }

    // Width round: terminal broadcast, then width uploads against final r.
    {
      RoundMessage msg;
      msg.kind = MessageKind::GlobalBroadcast;
      msg.t = round + 1;
      msg.b = static_cast<int>(b);
      msg.r = r;
      msg.final_round = true;
      result.transcript.messages.push_back(std::move(msg));
    }
    std::vector<WidthStats> width_stats(n_agents);
    parallel_for(n_agents, opts.threads, [&](std::size_t l) {
      width_stats[l] = agent_width_stats(shards[l].branch_data[b], r);
    });
    std::vector<Matrix> sigmas(n_agents);
    std::vector<IntVector> counts(n_agents);
    for (std::size_t l = 0; l < n_agents; ++l) {
      sigmas[l] = width_stats[l].sigma;
      counts[l] = width_stats[l].counts;
      RoundMessage msg;
      msg.kind = MessageKind::LocalCenters;
      msg.t = round + 1;
      msg.b = static_cast<int>(b);
      msg.agent_id = static_cast<int>(l);
      msg.sigma = width_stats[l].sigma;
      msg.counts = width_stats[l].counts;
      result.transcript.messages.push_back(std::move(msg));
    }
    const PooledWidths pooled =
        pooled_std(sigmas, counts, opts.pool_denominator);

    result.centers[b] = r;
    result.widths[b] = pooled.widths;
    result.empty_clusters[b] = pooled.empty_clusters;
    result.rounds[b] = round;
    result.converged[b] = converged ? 1 : 0;
  }
  return result;
}

struct ReplayResult {
  std::vector<Matrix> centers;
  std::vector<Matrix> widths;
  std::vector<int> rounds;
  std::vector<char> converged;
};

// Recomputes the coordinator-side state purely from logged messages. The
// reduction is re-run in agent order and checked against the logged
// broadcasts, so a valid replay reproduces the live run exactly.
inline ReplayResult replay(const Transcript& transcript) {
  const auto& header = transcript.header;
  if (transcript.messages.empty()) {
    throw TranscriptError("transcript contains no messages");
  }
  const int n_agents = header.agents;
  require(n_agents >= 1, "replay: invalid agent count in header");
  const PooledDenominator denom = header.pool_denominator == "all"
                                      ? PooledDenominator::All
                                      : PooledDenominator::Cluster;

  ReplayResult result;
  result.centers.resize(header.branches);
  result.widths.resize(header.branches);
  result.rounds.assign(header.branches, 0);
  result.converged.assign(header.branches, 0);

  enum class Phase { Uploads, Broadcast, Acks, WidthUploads, Done };

  int branch = -1;
  Phase phase = Phase::Done;
  int round = 0;
  bool width_phase = false;
  std::vector<Matrix> contribs;
  std::vector<Matrix> sigmas;
  std::vector<IntVector> counts;
  int received = 0;
  bool all_stable = true;
  double max_primal = 0.0, max_dual = 0.0;
  Matrix r;

  auto malformed = [](const std::string& what) {
    throw TranscriptError("malformed transcript: " + what);
  };

  auto finish_branch = [&]() {
    if (branch < 0) return;
    if (phase != Phase::Done) malformed("branch truncated mid-round");
    const PooledWidths pooled = pooled_std(sigmas, counts, denom);
    result.centers[branch] = r;
    result.widths[branch] = pooled.widths;
  };

  for (const auto& msg : transcript.messages) {
    if (msg.b != branch) {
      finish_branch();
      if (msg.b != branch + 1) malformed("branch order gap");
      branch = msg.b;
      if (branch >= header.branches) malformed("branch out of range");
      phase = Phase::Uploads;
      round = 1;
      width_phase = false;
      contribs.assign(static_cast<std::size_t>(n_agents), Matrix());
      sigmas.assign(static_cast<std::size_t>(n_agents), Matrix());
      counts.assign(static_cast<std::size_t>(n_agents), IntVector());
      received = 0;
      r.resize(0, 0);
    }

    switch (msg.kind) {
      case MessageKind::LocalCenters: {
        if (phase != Phase::Uploads && phase != Phase::WidthUploads) {
          malformed("unexpected upload");
        }
        if (msg.t != round) malformed("round gap or duplicate round");
        if (msg.agent_id < 0 || msg.agent_id >= n_agents) {
          malformed("agent id out of range");
        }
        const auto slot = static_cast<std::size_t>(msg.agent_id);
        if (phase == Phase::Uploads) {
          if (msg.contrib.size() == 0) malformed("upload missing contrib");
          if (contribs[slot].size() != 0) malformed("duplicate upload");
          contribs[slot] = msg.contrib;
        } else {
          if (msg.sigma.size() == 0) malformed("width upload missing sigma");
          if (sigmas[slot].size() != 0) malformed("duplicate width upload");
          sigmas[slot] = msg.sigma;
          counts[slot] = msg.counts;
        }
        ++received;
        if (received == n_agents) {
          if (phase == Phase::Uploads) {
            phase = Phase::Broadcast;
          } else {
            result.rounds[branch] = round - 1;
            phase = Phase::Done;
          }
          received = 0;
        }
        break;
      }
      case MessageKind::GlobalBroadcast: {
        if (msg.t != round) malformed("round gap or duplicate round");
        if (msg.final_round) {
          // Terminal broadcast opens the width round.
          if (phase != Phase::Uploads || width_phase) {
            malformed("unexpected terminal broadcast");
          }
          if (r.size() == 0) malformed("terminal broadcast before any round");
          if (msg.r.rows() != r.rows() || msg.r.cols() != r.cols() ||
              msg.r != r) {
            malformed("terminal broadcast centers mismatch");
          }
          width_phase = true;
          phase = Phase::WidthUploads;
          received = 0;
          break;
        }
        if (phase != Phase::Broadcast) malformed("unexpected broadcast");
        {
          const Matrix recomputed =
              detail::coordinator_global_update(contribs, header.rho);
          if (recomputed.rows() != msg.r.rows() ||
              recomputed.cols() != msg.r.cols() || recomputed != msg.r) {
            malformed("broadcast centers mismatch");
          }
          r = recomputed;
        }
        phase = Phase::Acks;
        received = 0;
        all_stable = true;
        max_primal = 0.0;
        max_dual = 0.0;
        break;
      }
      case MessageKind::DualAck: {
        if (phase != Phase::Acks) malformed("unexpected ack");
        if (msg.t != round) malformed("round gap or duplicate round");
        if (!msg.stable) all_stable = false;
        max_primal = std::max(max_primal, msg.primal_sq.maxCoeff());
        max_dual = std::max(max_dual, msg.dual_sq.maxCoeff());
        ++received;
        if (received == n_agents) {
          result.converged[branch] =
              (all_stable && max_primal <= header.eps_primal &&
               max_dual <= header.eps_dual)
                  ? 1
                  : 0;
          ++round;
          contribs.assign(static_cast<std::size_t>(n_agents), Matrix());
          phase = Phase::Uploads;
          received = 0;
        }
        break;
      }
    }
  }
  finish_branch();
  if (branch + 1 != header.branches) malformed("missing branches");
  return result;
}

}  // namespace hfnn

#endif
