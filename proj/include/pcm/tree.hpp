// CART regression trees with exact split search over presorted columns.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "pcm/core.hpp"

namespace pcm::learners {

struct TreeNode {
  std::int32_t feature = -1;  // -1 marks a leaf
  double threshold = 0.0;     // x[feature] <= threshold goes left
  std::int32_t left = -1;
  std::int32_t right = -1;
  double value = 0.0;
  double count = 0.0;  // training samples reaching the node, bootstrap copies included
  std::int32_t depth = 0;

  bool is_leaf() const { return feature < 0; }
  bool operator==(const TreeNode&) const = default;
};

class RegressionTree {
 public:
  RegressionTree() = default;
  explicit RegressionTree(std::vector<TreeNode> nodes) : nodes_(std::move(nodes)) {}

  double predict(std::span<const double> x) const {
    std::int32_t k = 0;
    while (!nodes_[k].is_leaf()) {
      const TreeNode& n = nodes_[k];
      k = x[n.feature] <= n.threshold ? n.left : n.right;
    }
    return nodes_[k].value;
  }

  const std::vector<TreeNode>& nodes() const { return nodes_; }

  int depth() const {
    int d = 0;
    for (const auto& n : nodes_) d = std::max(d, static_cast<int>(n.depth));
    return d;
  }

  std::size_t leaf_count() const {
    return static_cast<std::size_t>(
        std::count_if(nodes_.begin(), nodes_.end(), [](const TreeNode& n) { return n.is_leaf(); }));
  }

  double min_leaf_count() const {
    double c = INFINITY;
    for (const auto& n : nodes_)
      if (n.is_leaf()) c = std::min(c, n.count);
    return c;
  }

  bool operator==(const RegressionTree&) const = default;

 private:
  std::vector<TreeNode> nodes_;
};

struct TreeParams {
  int max_depth = 7;
  double min_leaf = 1.0;
  /// Fraction of the allowed features drawn at each split (at least one).
  double feature_subset_ratio = 1.0;
};

/// Per-feature row orderings, ascending by value with ties by row index, plus a
/// column-major copy of the values. Built once and shared by every tree of an
/// ensemble.
class SortedColumns {
 public:
  explicit SortedColumns(const FeatureMatrix& X) : rows_(X.rows()) {
    if (rows_ > UINT32_MAX) throw ContractError("too many rows for tree fitting");
    values_.resize(kNumFeatures * rows_);
    order_.resize(kNumFeatures * rows_);
    for (std::size_t f = 0; f < kNumFeatures; ++f) {
      double* col = values_.data() + f * rows_;
      for (std::size_t i = 0; i < rows_; ++i) col[i] = X(i, f);
      std::uint32_t* ord = order_.data() + f * rows_;
      for (std::size_t i = 0; i < rows_; ++i) ord[i] = static_cast<std::uint32_t>(i);
      std::sort(ord, ord + rows_, [col](std::uint32_t a, std::uint32_t b) {
        return col[a] < col[b] || (col[a] == col[b] && a < b);
      });
    }
  }

  std::size_t rows() const { return rows_; }
  std::span<const double> column(std::size_t f) const { return {values_.data() + f * rows_, rows_}; }
  std::span<const std::uint32_t> order(std::size_t f) const { return {order_.data() + f * rows_, rows_}; }

 private:
  std::size_t rows_;
  std::vector<double> values_;
  std::vector<std::uint32_t> order_;
};

namespace detail {

class TreeBuilder {
 public:
  TreeBuilder(const SortedColumns& sorted, std::span<const double> y, std::span<const std::uint32_t> counts,
              std::span<const std::size_t> features, const TreeParams& params, Rng& rng)
      : sorted_(sorted), y_(y), features_(features.begin(), features.end()), params_(params), rng_(rng) {
    const std::size_t m = sorted.rows();
    weight_.assign(m, 1.0);
    if (!counts.empty())
      for (std::size_t i = 0; i < m; ++i) weight_[i] = counts[i];
    for (std::size_t i = 0; i < m; ++i)
      if (weight_[i] > 0.0) ++active_;
    cols_.resize(features_.size() * active_);
    for (std::size_t k = 0; k < features_.size(); ++k) {
      std::uint32_t* dst = cols_.data() + k * active_;
      for (std::uint32_t row : sorted.order(features_[k]))
        if (weight_[row] > 0.0) *dst++ = row;
    }
    goes_left_.assign(m, 0);
    scratch_.resize(active_);
  }

  RegressionTree build() {
    if (active_ == 0) throw ContractError("tree fit needs at least one sample");
    struct Pending {
      std::int32_t node;
      std::size_t begin, end;
    };
    nodes_.clear();
    nodes_.push_back(TreeNode{});
    std::vector<Pending> stack{{0, 0, active_}};
    while (!stack.empty()) {
      const Pending p = stack.back();
      stack.pop_back();
      auto [left_range, right_range] = process(p.node, p.begin, p.end);
      if (right_range.first != right_range.second)
        stack.push_back({nodes_[p.node].right, right_range.first, right_range.second});
      if (left_range.first != left_range.second)
        stack.push_back({nodes_[p.node].left, left_range.first, left_range.second});
    }
    return RegressionTree(std::move(nodes_));
  }

 private:
  using Range = std::pair<std::size_t, std::size_t>;

  struct Split {
    std::size_t feature_slot = 0;
    std::size_t position = 0;  // rows [begin, begin+position] go left
    double threshold = 0.0;
    double score = -INFINITY;
    double w_left = 0, s_left = 0;
  };

  // Fills the node and, when it splits into non-terminal children, returns
  // their ranges; empty ranges mean the child was finalized as a leaf.
  std::pair<Range, Range> process(std::int32_t id, std::size_t begin, std::size_t end) {
    const std::uint32_t* first = cols_.data();
    double w = 0.0, s = 0.0, s2 = 0.0;
    for (std::size_t i = begin; i < end; ++i) {
      const std::uint32_t r = first[i];
      const double wy = weight_[r] * y_[r];
      w += weight_[r];
      s += wy;
      s2 += wy * y_[r];
    }
    TreeNode& node = nodes_[id];
    node.value = s / w;
    node.count = w;
    const int depth = node.depth;
    const double sse = s2 - s * s / w;
    const double tol = 1e-12 * std::max(s2, 1e-300);
    if (depth >= params_.max_depth || w < 2.0 * params_.min_leaf || sse <= tol) return {};

    Split best = find_split(begin, end, w, s);
    if (!(best.score - s * s / w > tol)) return {};

    const std::int32_t left_id = static_cast<std::int32_t>(nodes_.size());
    TreeNode left, right;
    left.depth = right.depth = depth + 1;
    left.value = best.s_left / best.w_left;
    left.count = best.w_left;
    right.value = (s - best.s_left) / (w - best.w_left);
    right.count = w - best.w_left;
    nodes_.push_back(left);
    nodes_.push_back(right);
    TreeNode& parent = nodes_[id];
    parent.feature = static_cast<std::int32_t>(features_[best.feature_slot]);
    parent.threshold = best.threshold;
    parent.left = left_id;
    parent.right = left_id + 1;

    if (depth + 1 >= params_.max_depth) return {};
    const std::size_t mid = begin + best.position + 1;
    partition(best.feature_slot, begin, mid, end);
    return {{begin, mid}, {mid, end}};
  }

  Split find_split(std::size_t begin, std::size_t end, double w_total, double s_total) {
    candidates_.clear();
    const std::size_t nf = features_.size();
    if (params_.feature_subset_ratio >= 1.0) {
      for (std::size_t k = 0; k < nf; ++k) candidates_.push_back(k);
    } else {
      const auto take = std::clamp<std::size_t>(
          static_cast<std::size_t>(std::llround(params_.feature_subset_ratio * static_cast<double>(nf))), 1, nf);
      candidates_ = sample_without_replacement(nf, take, rng_);
      std::sort(candidates_.begin(), candidates_.end());
    }
    Split best;
    const double min_leaf = params_.min_leaf;
    const double tie_tol = 1e-12 * std::abs(s_total * s_total / w_total) + 1e-300;
    for (std::size_t slot : candidates_) {
      const std::uint32_t* col = cols_.data() + slot * active_;
      const double* x = sorted_.column(features_[slot]).data();
      double wl = 0.0, sl = 0.0;
      for (std::size_t i = begin; i + 1 < end; ++i) {
        const std::uint32_t r = col[i];
        wl += weight_[r];
        sl += weight_[r] * y_[r];
        const double xa = x[r], xb = x[col[i + 1]];
        if (!(xb > xa)) continue;
        const double wr = w_total - wl;
        if (wl < min_leaf || wr < min_leaf) continue;
        const double sr = s_total - sl;
        const double score = sl * sl / wl + sr * sr / wr;
        if (score > best.score + tie_tol) {
          double thr = 0.5 * (xa + xb);
          if (!(thr < xb)) thr = xa;
          best = {slot, i - begin, thr, score, wl, sl};
        }
      }
    }
    return best;
  }

  void partition(std::size_t split_slot, std::size_t begin, std::size_t mid, std::size_t end) {
    const std::uint32_t* split_col = cols_.data() + split_slot * active_;
    for (std::size_t i = begin; i < mid; ++i) goes_left_[split_col[i]] = 1;
    for (std::size_t k = 0; k < features_.size(); ++k) {
      if (k == split_slot) continue;
      std::uint32_t* col = cols_.data() + k * active_;
      std::size_t l = begin, r = 0;
      for (std::size_t i = begin; i < end; ++i) {
        const std::uint32_t row = col[i];
        if (goes_left_[row]) col[l++] = row;
        else scratch_[r++] = row;
      }
      std::copy(scratch_.begin(), scratch_.begin() + static_cast<std::ptrdiff_t>(r), col + l);
    }
    for (std::size_t i = begin; i < mid; ++i) goes_left_[split_col[i]] = 0;
  }

  const SortedColumns& sorted_;
  std::span<const double> y_;
  std::vector<std::size_t> features_;
  TreeParams params_;
  Rng& rng_;
  std::vector<double> weight_;
  std::size_t active_ = 0;
  std::vector<std::uint32_t> cols_;
  std::vector<std::uint8_t> goes_left_;
  std::vector<std::uint32_t> scratch_;
  std::vector<std::size_t> candidates_;
  std::vector<TreeNode> nodes_;
};

}  // namespace detail

/// Grows one tree on the rows with non-zero count (empty counts = every row
/// once), splitting only on `features` (ascending indices). Equal-gain splits
/// resolve to the lowest feature index, then the lowest threshold.
inline RegressionTree grow_tree(const SortedColumns& sorted, std::span<const double> y,
                                std::span<const std::uint32_t> counts, std::span<const std::size_t> features,
                                const TreeParams& params, Rng& rng) {
  if (y.size() != sorted.rows()) throw ContractError("target length differs from feature rows");
  if (!counts.empty() && counts.size() != y.size()) throw ContractError("count vector length mismatch");
  if (params.max_depth < 0) throw ContractError("max_depth must be non-negative");
  if (params.min_leaf < 1.0) throw ContractError("min_leaf must be at least 1");
  if (features.empty()) throw ContractError("tree needs at least one feature");
  return detail::TreeBuilder(sorted, y, counts, features, params, rng).build();
}

inline std::vector<std::size_t> all_features() {
  std::vector<std::size_t> f(kNumFeatures);
  std::iota(f.begin(), f.end(), std::size_t{0});
  return f;
}

inline RegressionTree fit_tree(const FeatureMatrix& X, std::span<const double> y, int max_depth, double min_leaf,
                               double feature_subset_ratio, std::uint64_t seed) {
  SortedColumns sorted(X);
  Rng rng(seed);
  const auto features = all_features();
  return grow_tree(sorted, y, {}, features, TreeParams{max_depth, min_leaf, feature_subset_ratio}, rng);
}

}  // namespace pcm::learners
