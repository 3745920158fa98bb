#include "survbench/boost.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include <json.hpp>

namespace survbench {

namespace {

constexpr double kMinHessian = 1e-12;

using RowMajorMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct Box {
  double lo;
  double hi;
};
constexpr Box kEta{1e-6, 0.1};
constexpr Box kDepth{1, 5};
constexpr Box kSubsample{0.5, 0.9};
constexpr Box kColsample{0.1, 0.9};
constexpr Box kGamma{1e-4, 0.1};
constexpr Box kMinChild{1e-8, 1e-4};
constexpr Box kAlpha{0.0, 1.0};
constexpr Box kLambda{0.0, 20.0};

bool inside(double v, Box b) { return v >= b.lo && v <= b.hi; }
double clamp(double v, Box b) { return std::clamp(v, b.lo, b.hi); }

double soft_threshold(double g, double alpha) {
  if (g > alpha) return g - alpha;
  if (g < -alpha) return g + alpha;
  return 0.0;
}

// Groups of equal time in ascending order, as (begin, end) into `order`.
struct TimeGroups {
  std::vector<std::size_t> order;
  std::vector<std::pair<std::size_t, std::size_t>> groups;
};

TimeGroups group_by_time(const VectorXd& time) {
  TimeGroups tg;
  tg.order.resize(static_cast<std::size_t>(time.size()));
  std::iota(tg.order.begin(), tg.order.end(), std::size_t{0});
  std::stable_sort(tg.order.begin(), tg.order.end(),
                   [&](auto a, auto b) { return time[static_cast<Eigen::Index>(a)] < time[static_cast<Eigen::Index>(b)]; });
  std::size_t g = 0;
  while (g < tg.order.size()) {
    std::size_t end = g;
    const double t = time[static_cast<Eigen::Index>(tg.order[g])];
    while (end < tg.order.size() && time[static_cast<Eigen::Index>(tg.order[end])] == t) ++end;
    tg.groups.emplace_back(g, end);
    g = end;
  }
  return tg;
}

void check_inputs(const VectorXd& scores, const VectorXd& time, std::span<const int> event) {
  if (scores.size() != time.size() || static_cast<std::size_t>(time.size()) != event.size()) {
    throw Error("dimension_mismatch", "scores, time and event must have equal length");
  }
  if (!scores.allFinite()) throw Error("non_finite", "scores contain non-finite values");
  if (std::find(event.begin(), event.end(), 1) == event.end()) {
    throw Error("no_events", "no events in dataset");
  }
}

CoxGradHess grad_hess_grouped(const VectorXd& scores, const TimeGroups& tg,
                              std::span<const int> event) {
  const auto n = scores.size();
  const double shift = scores.maxCoeff();
  VectorXd w = (scores.array() - shift).exp();

  // Risk-set sums per group (suffix sums over ascending time).
  const std::size_t n_groups = tg.groups.size();
  std::vector<double> risk_sum(n_groups);
  double acc = 0.0;
  for (std::size_t gi = n_groups; gi-- > 0;) {
    for (std::size_t i = tg.groups[gi].first; i < tg.groups[gi].second; ++i) {
      acc += w[static_cast<Eigen::Index>(tg.order[i])];
    }
    risk_sum[gi] = acc;
  }

  CoxGradHess out;
  out.gradient.resize(n);
  out.hessian.resize(n);
  double a = 0.0;  // sum over event groups up to here of d / S0
  double b = 0.0;  // ... of d / S0^2
  for (std::size_t gi = 0; gi < n_groups; ++gi) {
    int d = 0;
    for (std::size_t i = tg.groups[gi].first; i < tg.groups[gi].second; ++i) {
      d += event[tg.order[i]] == 1 ? 1 : 0;
    }
    if (d > 0) {
      a += d / risk_sum[gi];
      b += d / (risk_sum[gi] * risk_sum[gi]);
    }
    for (std::size_t i = tg.groups[gi].first; i < tg.groups[gi].second; ++i) {
      const auto r = static_cast<Eigen::Index>(tg.order[i]);
      const double wr = w[r];
      out.gradient[r] = wr * a - (event[tg.order[i]] == 1 ? 1.0 : 0.0);
      out.hessian[r] = std::max(wr * a - wr * wr * b, kMinHessian);
    }
  }
  return out;
}

double nll_grouped(const VectorXd& scores, const TimeGroups& tg, std::span<const int> event) {
  const double shift = scores.maxCoeff();
  double acc = 0.0;
  double loss = 0.0;
  for (std::size_t gi = tg.groups.size(); gi-- > 0;) {
    for (std::size_t i = tg.groups[gi].first; i < tg.groups[gi].second; ++i) {
      acc += std::exp(scores[static_cast<Eigen::Index>(tg.order[i])] - shift);
    }
    const double log_risk = std::log(acc) + shift;
    for (std::size_t i = tg.groups[gi].first; i < tg.groups[gi].second; ++i) {
      if (event[tg.order[i]] == 1) loss -= scores[static_cast<Eigen::Index>(tg.order[i])] - log_risk;
    }
  }
  return loss;
}

// Level-wise exact greedy growth over presorted feature orders.
class TreeBuilder {
 public:
  TreeBuilder(const MatrixXd& x, const std::vector<std::vector<std::size_t>>& sorted,
              const BoostHyperparams& hp)
      : x_(x), sorted_(sorted), hp_(hp) {}

  RegressionTree build(const VectorXd& grad, const VectorXd& hess,
                       const std::vector<std::size_t>& rows, const std::vector<int>& features) {
    const std::size_t n = static_cast<std::size_t>(x_.rows());
    node_of_row_.assign(n, -1);
    RegressionTree tree;
    TreeNode root;
    double g = 0.0;
    double h = 0.0;
    for (auto r : rows) {
      node_of_row_[r] = 0;
      g += grad[static_cast<Eigen::Index>(r)];
      h += hess[static_cast<Eigen::Index>(r)];
    }
    root.weight = leaf_weight(g, h, hp_.alpha, hp_.lambda);
    tree.nodes.push_back(root);
    stats_.assign(1, {g, h});

    std::vector<int> frontier{0};
    for (int depth = 0; depth < hp_.max_depth && !frontier.empty(); ++depth) {
      const auto best = find_splits(tree, frontier, grad, hess, features);
      std::vector<int> next;
      for (std::size_t fi = 0; fi < frontier.size(); ++fi) {
        const int node = frontier[fi];
        const auto& s = best[fi];
        if (s.feature < 0) continue;
        const int left = static_cast<int>(tree.nodes.size());
        const int right = left + 1;
        TreeNode l;
        l.weight = leaf_weight(s.g_left, s.h_left, hp_.alpha, hp_.lambda);
        TreeNode r;
        const double gr = stats_[static_cast<std::size_t>(node)].first - s.g_left;
        const double hr = stats_[static_cast<std::size_t>(node)].second - s.h_left;
        r.weight = leaf_weight(gr, hr, hp_.alpha, hp_.lambda);
        tree.nodes.push_back(l);
        tree.nodes.push_back(r);
        stats_.push_back({s.g_left, s.h_left});
        stats_.push_back({gr, hr});
        auto& parent = tree.nodes[static_cast<std::size_t>(node)];
        parent.feature = s.feature;
        parent.threshold = s.threshold;
        parent.left = left;
        parent.right = right;
        parent.weight = 0.0;
        next.push_back(left);
        next.push_back(right);
      }
      if (next.empty()) break;
      for (std::size_t r = 0; r < n; ++r) {
        const int node = node_of_row_[r];
        if (node < 0) continue;
        const auto& nd = tree.nodes[static_cast<std::size_t>(node)];
        if (nd.is_leaf()) continue;
        node_of_row_[r] = x_(static_cast<Eigen::Index>(r), nd.feature) < nd.threshold ? nd.left : nd.right;
      }
      frontier = std::move(next);
    }
    return tree;
  }

 private:
  struct Candidate {
    int feature = -1;
    double threshold = 0.0;
    double gain = 0.0;
    double g_left = 0.0;
    double h_left = 0.0;
  };

  std::vector<Candidate> find_splits(const RegressionTree& tree, const std::vector<int>& frontier,
                                     const VectorXd& grad, const VectorXd& hess,
                                     const std::vector<int>& features) {
    const std::size_t n_nodes = tree.nodes.size();
    std::vector<int> slot(n_nodes, -1);
    for (std::size_t i = 0; i < frontier.size(); ++i) slot[static_cast<std::size_t>(frontier[i])] = static_cast<int>(i);
    std::vector<Candidate> best(frontier.size());

    struct Scan {
      double g = 0.0;
      double h = 0.0;
      double last = 0.0;
      bool started = false;
    };
    std::vector<Scan> scan(frontier.size());
    for (int f : features) {
      std::fill(scan.begin(), scan.end(), Scan{});
      for (auto r : sorted_[static_cast<std::size_t>(f)]) {
        const int node = node_of_row_[r];
        if (node < 0) continue;
        const int s = slot[static_cast<std::size_t>(node)];
        if (s < 0) continue;
        auto& sc = scan[static_cast<std::size_t>(s)];
        const double v = x_(static_cast<Eigen::Index>(r), f);
        if (sc.started && v > sc.last) {
          const auto& total = stats_[static_cast<std::size_t>(node)];
          const double hl = sc.h;
          const double hr = total.second - sc.h;
          if (hl >= hp_.min_child_weight && hr >= hp_.min_child_weight) {
            const double gain =
                split_gain(sc.g, hl, total.first - sc.g, hr, hp_.alpha, hp_.lambda);
            auto& b = best[static_cast<std::size_t>(s)];
            if (gain > hp_.gamma && gain > b.gain) {
              double thr = sc.last + (v - sc.last) / 2.0;
              if (!(thr > sc.last)) thr = v;
              b = Candidate{f, thr, gain, sc.g, sc.h};
            }
          }
        }
        sc.g += grad[static_cast<Eigen::Index>(r)];
        sc.h += hess[static_cast<Eigen::Index>(r)];
        sc.last = v;
        sc.started = true;
      }
    }
    return best;
  }

  const MatrixXd& x_;
  const std::vector<std::vector<std::size_t>>& sorted_;
  const BoostHyperparams& hp_;
  std::vector<int> node_of_row_;
  std::vector<std::pair<double, double>> stats_;
};

}  // namespace

std::vector<std::string> BoostHyperparams::out_of_box() const {
  std::vector<std::string> bad;
  if (!inside(eta, kEta)) bad.emplace_back("eta");
  if (!inside(max_depth, kDepth)) bad.emplace_back("max_depth");
  if (!inside(subsample, kSubsample)) bad.emplace_back("subsample");
  if (!inside(colsample_bytree, kColsample)) bad.emplace_back("colsample_bytree");
  if (!inside(gamma, kGamma)) bad.emplace_back("gamma");
  if (!inside(min_child_weight, kMinChild)) bad.emplace_back("min_child_weight");
  if (!inside(alpha, kAlpha)) bad.emplace_back("alpha");
  if (!inside(lambda, kLambda)) bad.emplace_back("lambda");
  return bad;
}

BoostHyperparams BoostHyperparams::clamped() const {
  BoostHyperparams out = *this;
  out.eta = clamp(eta, kEta);
  out.max_depth = static_cast<int>(clamp(max_depth, kDepth));
  out.subsample = clamp(subsample, kSubsample);
  out.colsample_bytree = clamp(colsample_bytree, kColsample);
  out.gamma = clamp(gamma, kGamma);
  out.min_child_weight = clamp(min_child_weight, kMinChild);
  out.alpha = clamp(alpha, kAlpha);
  out.lambda = clamp(lambda, kLambda);
  return out;
}

double RegressionTree::predict(const double* x) const {
  if (nodes.empty()) return 0.0;
  int i = 0;
  while (!nodes[static_cast<std::size_t>(i)].is_leaf()) {
    const auto& nd = nodes[static_cast<std::size_t>(i)];
    i = x[nd.feature] < nd.threshold ? nd.left : nd.right;
  }
  return nodes[static_cast<std::size_t>(i)].weight;
}

int RegressionTree::depth() const {
  if (nodes.empty()) return 0;
  std::vector<int> d(nodes.size(), 0);
  int deepest = 0;
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    const auto& nd = nodes[i];
    deepest = std::max(deepest, d[i]);
    if (!nd.is_leaf()) {
      d[static_cast<std::size_t>(nd.left)] = d[i] + 1;
      d[static_cast<std::size_t>(nd.right)] = d[i] + 1;
    }
  }
  return deepest;
}

double TreeEnsemble::predict_risk(const VectorXd& x) const {
  if (x.size() != n_features) {
    throw Error("dimension_mismatch", "feature vector length does not match ensemble");
  }
  double sum = 0.0;
  for (const auto& t : trees) sum += t.predict(x.data());
  return base_score + hyperparams.eta * sum;
}

VectorXd TreeEnsemble::predict_risk(const MatrixXd& x) const {
  if (x.cols() != n_features) {
    throw Error("dimension_mismatch", "feature matrix width does not match ensemble");
  }
  const RowMajorMatrix rows = x;
  VectorXd out(x.rows());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    double sum = 0.0;
    for (const auto& t : trees) sum += t.predict(rows.data() + i * x.cols());
    out[i] = base_score + hyperparams.eta * sum;
  }
  return out;
}

CoxGradHess cox_grad_hess(const VectorXd& scores, const VectorXd& time, std::span<const int> event) {
  check_inputs(scores, time, event);
  return grad_hess_grouped(scores, group_by_time(time), event);
}

double cox_negative_log_likelihood(const VectorXd& scores, const VectorXd& time,
                                   std::span<const int> event) {
  check_inputs(scores, time, event);
  return nll_grouped(scores, group_by_time(time), event);
}

double split_gain(double g_left, double h_left, double g_right, double h_right, double alpha,
                  double lambda) {
  auto score = [&](double g, double h) {
    const double t = soft_threshold(g, alpha);
    return t * t / (h + lambda);
  };
  return 0.5 * (score(g_left, h_left) + score(g_right, h_right) -
                score(g_left + g_right, h_left + h_right));
}

double leaf_weight(double g, double h, double alpha, double lambda) {
  return -soft_threshold(g, alpha) / (h + lambda);
}

TreeEnsemble fit_sxgb(const SurvivalDataset& ds, const BoostHyperparams& hp_in, std::uint64_t seed,
                      const BoostFitOptions& options) {
  if (ds.n_rows() == 0) throw Error("empty_dataset", "cannot fit on an empty dataset");
  ds.validate();

  TreeEnsemble ens;
  ens.seed = seed;
  ens.n_features = ds.n_features();
  ens.feature_names = ds.feature_names;
  BoostHyperparams hp = hp_in;
  if (const auto bad = hp.out_of_box(); !bad.empty()) {
    std::string names;
    for (const auto& b : bad) names += (names.empty() ? "" : ", ") + b;
    if (options.out_of_box == OutOfBoxPolicy::kClamp) {
      hp = hp.clamped();
      ens.warnings.push_back("hyperparameters clamped to tuning box: " + names);
    } else {
      ens.warnings.push_back("hyperparameters outside tuning box: " + names);
    }
  }
  if (hp.n_rounds < 0) throw Error("invalid_argument", "n_rounds must be non-negative");
  if (hp.max_depth < 1 || !(hp.subsample > 0.0) || !(hp.colsample_bytree > 0.0) ||
      !(hp.lambda >= 0.0) || !(hp.alpha >= 0.0)) {
    throw Error("invalid_argument", "invalid boosting hyperparameters");
  }
  ens.hyperparams = hp;

  const auto n = static_cast<std::size_t>(ds.n_rows());
  const auto p = static_cast<std::size_t>(ds.n_features());
  const auto tg = group_by_time(ds.time);
  VectorXd scores = VectorXd::Constant(ds.n_rows(), ens.base_score);
  check_inputs(scores, ds.time, ds.event);

  std::vector<std::vector<std::size_t>> sorted(p);
  for (std::size_t f = 0; f < p; ++f) {
    auto& order = sorted[f];
    order.resize(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    const auto col = ds.features.col(static_cast<Eigen::Index>(f));
    std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) {
      return col[static_cast<Eigen::Index>(a)] < col[static_cast<Eigen::Index>(b)];
    });
  }

  const std::size_t n_rows_sample =
      std::clamp<std::size_t>(static_cast<std::size_t>(std::llround(hp.subsample * static_cast<double>(n))), 1, n);
  const std::size_t n_cols_sample =
      std::clamp<std::size_t>(static_cast<std::size_t>(std::llround(hp.colsample_bytree * static_cast<double>(p))), 1, std::max<std::size_t>(p, 1));

  if (options.record_loss) ens.training_loss.push_back(nll_grouped(scores, tg, ds.event));

  const RowMajorMatrix row_major = ds.features;
  TreeBuilder builder(ds.features, sorted, hp);
  std::vector<std::size_t> all_rows(n);
  std::iota(all_rows.begin(), all_rows.end(), std::size_t{0});
  std::vector<int> all_cols(p);
  std::iota(all_cols.begin(), all_cols.end(), 0);

  for (int round = 0; round < hp.n_rounds; ++round) {
    std::mt19937_64 rng(derive_seed(seed, static_cast<std::uint64_t>(round)));
    const auto gh = grad_hess_grouped(scores, tg, ds.event);

    // Partial Fisher-Yates for both samples, then restore ascending order.
    std::vector<std::size_t> rows = all_rows;
    for (std::size_t i = 0; i < n_rows_sample && n_rows_sample < n; ++i) {
      std::uniform_int_distribution<std::size_t> pick(i, n - 1);
      std::swap(rows[i], rows[pick(rng)]);
    }
    rows.resize(n_rows_sample);
    std::sort(rows.begin(), rows.end());
    std::vector<int> cols = all_cols;
    for (std::size_t i = 0; i < n_cols_sample && n_cols_sample < p; ++i) {
      std::uniform_int_distribution<std::size_t> pick(i, p - 1);
      std::swap(cols[i], cols[pick(rng)]);
    }
    cols.resize(std::min(n_cols_sample, p));
    std::sort(cols.begin(), cols.end());

    auto tree = builder.build(gh.gradient, gh.hessian, rows, cols);
    for (std::size_t r = 0; r < n; ++r) {
      scores[static_cast<Eigen::Index>(r)] += hp.eta * tree.predict(row_major.data() + r * p);
    }
    ens.trees.push_back(std::move(tree));
    if (options.record_loss) ens.training_loss.push_back(nll_grouped(scores, tg, ds.event));
  }
  return ens;
}

// ---------------------------------------------------------------------------
// JSON

namespace {

nlohmann::json node_to_json(const RegressionTree& tree, int i) {
  const auto& nd = tree.nodes[static_cast<std::size_t>(i)];
  if (nd.is_leaf()) return {{"leaf", nd.weight}};
  return {{"split", nd.feature},
          {"threshold", nd.threshold},
          {"left", node_to_json(tree, nd.left)},
          {"right", node_to_json(tree, nd.right)}};
}

int node_from_json(const nlohmann::json& j, RegressionTree& tree) {
  const int idx = static_cast<int>(tree.nodes.size());
  tree.nodes.emplace_back();
  if (j.contains("leaf")) {
    tree.nodes[static_cast<std::size_t>(idx)].weight = j.at("leaf").get<double>();
    return idx;
  }
  const int feature = j.at("split").get<int>();
  const double threshold = j.at("threshold").get<double>();
  const int left = node_from_json(j.at("left"), tree);
  const int right = node_from_json(j.at("right"), tree);
  auto& nd = tree.nodes[static_cast<std::size_t>(idx)];
  nd.feature = feature;
  nd.threshold = threshold;
  nd.left = left;
  nd.right = right;
  return idx;
}

}  // namespace

std::string ensemble_to_json(const TreeEnsemble& ens) {
  const auto& hp = ens.hyperparams;
  nlohmann::json doc;
  doc["model"] = "sxgb";
  doc["seed"] = ens.seed;
  doc["base_score"] = ens.base_score;
  doc["n_features"] = ens.n_features;
  doc["feature_names"] = ens.feature_names;
  doc["hyperparams"] = {{"eta", hp.eta},
                        {"max_depth", hp.max_depth},
                        {"subsample", hp.subsample},
                        {"colsample_bytree", hp.colsample_bytree},
                        {"gamma", hp.gamma},
                        {"min_child_weight", hp.min_child_weight},
                        {"alpha", hp.alpha},
                        {"lambda", hp.lambda},
                        {"n_rounds", hp.n_rounds}};
  auto trees = nlohmann::json::array();
  for (const auto& t : ens.trees) trees.push_back(t.nodes.empty() ? nlohmann::json{{"leaf", 0.0}} : node_to_json(t, 0));
  doc["trees"] = std::move(trees);
  return doc.dump(2);
}

TreeEnsemble ensemble_from_json(const std::string& text) {
  const auto doc = nlohmann::json::parse(text);
  TreeEnsemble ens;
  ens.seed = doc.at("seed").get<std::uint64_t>();
  ens.base_score = doc.at("base_score").get<double>();
  ens.n_features = doc.at("n_features").get<Eigen::Index>();
  ens.feature_names = doc.at("feature_names").get<std::vector<std::string>>();
  const auto& h = doc.at("hyperparams");
  auto& hp = ens.hyperparams;
  hp.eta = h.at("eta");
  hp.max_depth = h.at("max_depth");
  hp.subsample = h.at("subsample");
  hp.colsample_bytree = h.at("colsample_bytree");
  hp.gamma = h.at("gamma");
  hp.min_child_weight = h.at("min_child_weight");
  hp.alpha = h.at("alpha");
  hp.lambda = h.at("lambda");
  hp.n_rounds = h.at("n_rounds");
  for (const auto& t : doc.at("trees")) {
    RegressionTree tree;
    node_from_json(t, tree);
    ens.trees.push_back(std::move(tree));
  }
  return ens;
}

}  // namespace survbench
