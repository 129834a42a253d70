#include "adp/exact.hpp"

#include <bit>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>

#include <Eigen/Sparse>
#include <Eigen/SparseLU>

#include "adp/errors.hpp"

namespace adp::exact {

namespace fs = std::filesystem;

std::span<const TransitionEntry> DiscreteMdp::endogenous_row(int s, int a) const {
  const auto id = static_cast<std::size_t>(action_id(s, a));
  const auto b = static_cast<std::size_t>(endo_row_offset_[id]);
  const auto e = static_cast<std::size_t>(endo_row_offset_[id + 1]);
  return {endo_entries_.data() + b, e - b};
}

std::span<const TransitionEntry> DiscreteMdp::exogenous_row(int e) const {
  const auto b = static_cast<std::size_t>(exo_row_offset_[static_cast<std::size_t>(e)]);
  const auto f = static_cast<std::size_t>(exo_row_offset_[static_cast<std::size_t>(e) + 1]);
  return {exo_entries_.data() + b, f - b};
}

std::vector<TransitionEntry> DiscreteMdp::transition_row(int s, int a) const {
  std::vector<TransitionEntry> row;
  const auto exo_row = exogenous_row(exogenous_of(s));
  for (const auto& r : endogenous_row(s, a)) {
    for (const auto& e : exo_row) row.push_back({state_of(r.target, e.target), r.probability * e.probability});
  }
  return row;
}

void DiscreteMdp::validate(double tol) const {
  if (endo_ < 1 || exo_ < 1) throw ValidationError("MDP needs at least one state");
  if (!(discount_ >= 0.0 && discount_ < 1.0)) throw ValidationError("discount must lie in [0, 1)");
  auto check_row = [&](std::span<const TransitionEntry> row, int bound, const char* what) {
    double sum = 0.0;
    for (const auto& t : row) {
      if (t.target < 0 || t.target >= bound) throw ValidationError(std::string(what) + " row targets a missing state");
      if (!(t.probability >= 0.0)) throw ValidationError(std::string(what) + " row has a negative probability");
      sum += t.probability;
    }
    if (std::abs(sum - 1.0) > tol) throw ValidationError(std::string(what) + " row does not sum to one");
  };
  for (int e = 0; e < exo_; ++e) check_row(exogenous_row(e), exo_, "exogenous");
  for (int s = 0; s < state_count(); ++s) {
    if (action_count(s) < 1) throw ValidationError("state " + std::to_string(s) + " has no actions");
    for (int a = 0; a < action_count(s); ++a) {
      if (!std::isfinite(contribution(s, a))) throw ValidationError("non-finite contribution");
      check_row(endogenous_row(s, a), endo_, "endogenous");
    }
  }
}

DiscreteMdp::Builder::Builder(int endogenous_count, int exogenous_count, double discount) {
  if (endogenous_count < 1 || exogenous_count < 1) throw ValidationError("MDP needs at least one state");
  mdp_.endo_ = endogenous_count;
  mdp_.exo_ = exogenous_count;
  mdp_.discount_ = discount;
  exo_rows_.resize(static_cast<std::size_t>(exogenous_count));
  actions_per_state_.assign(static_cast<std::size_t>(endogenous_count) * static_cast<std::size_t>(exogenous_count), 0);
  mdp_.endo_row_offset_.push_back(0);
}

DiscreteMdp::Builder DiscreteMdp::Builder::flat(int state_count, double discount) {
  Builder b(state_count, 1, discount);
  const TransitionEntry stay{0, 1.0};
  b.set_exogenous_row(0, std::span<const TransitionEntry>(&stay, 1));
  return b;
}

void DiscreteMdp::Builder::set_exogenous_row(int e, std::span<const TransitionEntry> row) {
  if (e < 0 || e >= mdp_.exo_) throw ValidationError("exogenous index out of range");
  exo_rows_[static_cast<std::size_t>(e)].assign(row.begin(), row.end());
}

int DiscreteMdp::Builder::add_action(int state, double contribution, std::span<const TransitionEntry> endogenous_row) {
  if (state < current_state_ || state >= mdp_.state_count()) {
    throw ValidationError("actions must be added in non-decreasing state order");
  }
  current_state_ = state;
  mdp_.contributions_.push_back(contribution);
  mdp_.endo_entries_.insert(mdp_.endo_entries_.end(), endogenous_row.begin(), endogenous_row.end());
  mdp_.endo_row_offset_.push_back(static_cast<std::int64_t>(mdp_.endo_entries_.size()));
  return actions_per_state_[static_cast<std::size_t>(state)]++;
}

DiscreteMdp DiscreteMdp::Builder::build() {
  mdp_.state_action_offset_.assign(actions_per_state_.size() + 1, 0);
  for (std::size_t s = 0; s < actions_per_state_.size(); ++s) {
    mdp_.state_action_offset_[s + 1] = mdp_.state_action_offset_[s] + actions_per_state_[s];
  }
  mdp_.exo_row_offset_.assign(1, 0);
  mdp_.exo_entries_.clear();
  for (const auto& row : exo_rows_) {
    mdp_.exo_entries_.insert(mdp_.exo_entries_.end(), row.begin(), row.end());
    mdp_.exo_row_offset_.push_back(static_cast<std::int64_t>(mdp_.exo_entries_.size()));
  }
  mdp_.validate();
  return std::move(mdp_);
}

namespace {

// expected(r', e) = sum_e' P_exo(e' | e) V(r', e'), stored row-major like the state index.
void exogenous_expectation(const DiscreteMdp& mdp, const Eigen::VectorXd& v, Eigen::VectorXd& out) {
  const int endo = mdp.endogenous_count();
  const int exo = mdp.exogenous_count();
  out.resize(mdp.state_count());
  for (int e = 0; e < exo; ++e) {
    const auto row = mdp.exogenous_row(e);
    for (int r = 0; r < endo; ++r) {
      double acc = 0.0;
      const Eigen::Index base = static_cast<Eigen::Index>(r) * exo;
      for (const auto& t : row) acc += t.probability * v(base + t.target);
      out(base + e) = acc;
    }
  }
}

double action_value(const DiscreteMdp& mdp, const Eigen::VectorXd& expected, int s, int a) {
  const int e = mdp.exogenous_of(s);
  double future = 0.0;
  for (const auto& t : mdp.endogenous_row(s, a)) future += t.probability * expected(mdp.state_of(t.target, e));
  return mdp.contribution(s, a) + mdp.discount() * future;
}

}  // namespace

ValueFunction value_iteration(const DiscreteMdp& mdp, const ValueIterationOptions& opts) {
  if (!(opts.epsilon > 0.0)) throw ValidationError("epsilon must be positive");
  if (opts.max_iterations < 1) throw ValidationError("iteration cap must be positive");
  const int n = mdp.state_count();
  const double gamma = mdp.discount();
  ValueFunction out;
  out.values = opts.initial ? *opts.initial : Eigen::VectorXd::Zero(n);
  if (out.values.size() != n) throw DimensionMismatch("initial values need one entry per state");
  const double stop = gamma > 0.0 ? opts.epsilon * (1.0 - gamma) / (2.0 * gamma)
                                  : std::numeric_limits<double>::infinity();
  Eigen::VectorXd expected;
  Eigen::VectorXd next(n);
  for (int it = 1; it <= opts.max_iterations; ++it) {
    exogenous_expectation(mdp, out.values, expected);
    for (int s = 0; s < n; ++s) {
      double best = -std::numeric_limits<double>::infinity();
      for (int a = 0; a < mdp.action_count(s); ++a) best = std::max(best, action_value(mdp, expected, s, a));
      next(s) = best;
    }
    out.residual = (next - out.values).lpNorm<Eigen::Infinity>();
    out.residual_history.push_back(out.residual);
    out.values.swap(next);
    out.iterations = it;
    if (out.residual < stop) return out;
  }
  throw NotConverged(out.iterations, out.residual);
}

PolicyTable extract_greedy_policy(const DiscreteMdp& mdp, const Eigen::VectorXd& values) {
  if (values.size() != mdp.state_count()) throw DimensionMismatch("one value per state is required");
  Eigen::VectorXd expected;
  exogenous_expectation(mdp, values, expected);
  PolicyTable policy(static_cast<std::size_t>(mdp.state_count()), 0);
  for (int s = 0; s < mdp.state_count(); ++s) {
    double best = -std::numeric_limits<double>::infinity();
    for (int a = 0; a < mdp.action_count(s); ++a) {
      const double q = action_value(mdp, expected, s, a);
      if (q > best) {
        best = q;
        policy[static_cast<std::size_t>(s)] = a;
      }
    }
  }
  return policy;
}

Eigen::VectorXd exact_policy_value(const DiscreteMdp& mdp, const PolicyTable& policy) {
  const int n = mdp.state_count();
  if (policy.size() != static_cast<std::size_t>(n)) throw DimensionMismatch("one action per state is required");
  std::vector<Eigen::Triplet<double>> triplets;
  Eigen::VectorXd rhs(n);
  for (int s = 0; s < n; ++s) {
    const int a = policy[static_cast<std::size_t>(s)];
    if (a < 0 || a >= mdp.action_count(s)) throw ValidationError("policy picks a missing action");
    rhs(s) = mdp.contribution(s, a);
    triplets.emplace_back(s, s, 1.0);
    for (const auto& t : mdp.transition_row(s, a)) triplets.emplace_back(s, t.target, -mdp.discount() * t.probability);
  }
  Eigen::SparseMatrix<double> system(n, n);
  system.setFromTriplets(triplets.begin(), triplets.end());
  system.makeCompressed();
  Eigen::SparseLU<Eigen::SparseMatrix<double>> lu;
  lu.compute(system);
  if (lu.info() != Eigen::Success) throw SolveFailed("policy evaluation system could not be factored");
  Eigen::VectorXd v = lu.solve(rhs);
  if (lu.info() != Eigen::Success || !v.allFinite()) throw SolveFailed("policy evaluation solve failed");
  return v;
}

namespace {

static_assert(std::endian::native == std::endian::little, "solution files are written little-endian");

constexpr char kMagic[8] = {'A', 'D', 'P', 'X', 'S', 'O', 'L', '\0'};

template <typename T>
void put(std::ostream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

void put_string(std::ostream& out, const std::string& s) {
  put(out, static_cast<std::uint32_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

template <typename T>
T get(std::istream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof v);
  if (!in) throw ValidationError("solution file is truncated");
  return v;
}

std::string get_string(std::istream& in) {
  const auto n = get<std::uint32_t>(in);
  if (n > (1u << 20)) throw ValidationError("solution file has an implausible string length");
  std::string s(n, '\0');
  in.read(s.data(), n);
  if (!in) throw ValidationError("solution file is truncated");
  return s;
}

}  // namespace

void write_solution_binary(const fs::path& path, const ExactSolution& solution) {
  const auto n = static_cast<std::uint64_t>(solution.value.values.size());
  if (solution.policy.size() != n || static_cast<std::uint64_t>(solution.coordinates.rows()) != n ||
      static_cast<std::size_t>(solution.coordinates.cols()) != solution.coordinate_names.size()) {
    throw DimensionMismatch("solution arrays disagree in size");
  }
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError("cannot write " + path.string());
  out.write(kMagic, sizeof kMagic);
  put(out, kSolutionFormatVersion);
  put_string(out, solution.problem_key);
  put(out, solution.discount);
  put(out, static_cast<std::int32_t>(solution.value.iterations));
  put(out, solution.value.residual);
  put(out, n);
  put(out, static_cast<std::uint32_t>(solution.coordinate_names.size()));
  for (const auto& name : solution.coordinate_names) put_string(out, name);
  for (std::uint64_t i = 0; i < n; ++i) put(out, solution.value.values(static_cast<Eigen::Index>(i)));
  for (int a : solution.policy) put(out, static_cast<std::int32_t>(a));
  for (std::uint64_t i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < solution.coordinates.cols(); ++j) {
      put(out, solution.coordinates(static_cast<Eigen::Index>(i), j));
    }
  }
  put(out, static_cast<std::uint64_t>(solution.value.residual_history.size()));
  for (double r : solution.value.residual_history) put(out, r);
  if (!out) throw ValidationError("failed writing " + path.string());
}

ExactSolution read_solution_binary(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open " + path.string());
  char magic[8];
  in.read(magic, sizeof magic);
  if (!in || !std::equal(magic, magic + 8, kMagic)) throw ValidationError(path.string() + " is not a solution file");
  const auto version = get<std::uint32_t>(in);
  if (version != kSolutionFormatVersion) {
    throw ValidationError("unsupported solution format version " + std::to_string(version));
  }
  ExactSolution sol;
  sol.problem_key = get_string(in);
  sol.discount = get<double>(in);
  sol.value.iterations = get<std::int32_t>(in);
  sol.value.residual = get<double>(in);
  const auto n = get<std::uint64_t>(in);
  const auto d = get<std::uint32_t>(in);
  if (n > (1ULL << 32) || d > 64) throw ValidationError("solution file header is implausible");
  for (std::uint32_t j = 0; j < d; ++j) sol.coordinate_names.push_back(get_string(in));
  sol.value.values.resize(static_cast<Eigen::Index>(n));
  for (std::uint64_t i = 0; i < n; ++i) sol.value.values(static_cast<Eigen::Index>(i)) = get<double>(in);
  sol.policy.resize(n);
  for (std::uint64_t i = 0; i < n; ++i) sol.policy[i] = get<std::int32_t>(in);
  sol.coordinates.resize(static_cast<Eigen::Index>(n), d);
  for (std::uint64_t i = 0; i < n; ++i) {
    for (std::uint32_t j = 0; j < d; ++j) sol.coordinates(static_cast<Eigen::Index>(i), j) = get<double>(in);
  }
  const auto h = get<std::uint64_t>(in);
  if (h > (1ULL << 32)) throw ValidationError("solution file header is implausible");
  sol.value.residual_history.resize(h);
  for (auto& r : sol.value.residual_history) r = get<double>(in);
  return sol;
}

void write_solution_csv(const fs::path& path, const ExactSolution& solution) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write " + path.string());
  out << "state";
  for (const auto& name : solution.coordinate_names) out << ',' << name;
  out << ",value,action\n";
  out << std::setprecision(17);
  for (Eigen::Index i = 0; i < solution.value.values.size(); ++i) {
    out << i;
    for (Eigen::Index j = 0; j < solution.coordinates.cols(); ++j) out << ',' << solution.coordinates(i, j);
    out << ',' << solution.value.values(i) << ',' << solution.policy[static_cast<std::size_t>(i)] << '\n';
  }
}

}  // namespace adp::exact
