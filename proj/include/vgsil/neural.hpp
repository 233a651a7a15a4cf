#pragma once

#include <Eigen/Core>
#include <array>
#include <cstdint>
#include <span>
#include <string_view>
#include <utility>
#include <vector>

#include "vgsil/geometry.hpp"

namespace vgsil {

/// Edges inside one geometric entity (e.g. the two endpoints of a segment)
/// and edges between entities carry different message inputs, which is what
/// lets gk(f1, [f2, f3]) differ from gk([f1, f2], f3).
enum class EdgeKind { intra, inter };

struct Edge {
  int from = 0;
  int to = 0;
  EdgeKind kind = EdgeKind::inter;
};

struct KernelGraph {
  KernelKind kind = KernelKind::p2p;
  /// One column per node: descriptor followed by two normalized pixel coords.
  Eigen::MatrixXd nodes;
  std::vector<Edge> edges;
  std::vector<std::vector<int>> grouping;

  int node_count() const { return static_cast<int>(nodes.cols()); }
};

/// Fully connected directed graph over `nodes`; edge kind follows `grouping`.
KernelGraph make_kernel_graph(KernelKind kind, Eigen::MatrixXd nodes,
                              std::vector<std::vector<int>> grouping);

/// descriptor ⊕ (2u/width - 1, 2v/height - 1).
Eigen::VectorXd encode_node(const Eigen::VectorXd& descriptor, const ImagePoint& pixel,
                            double width, double height);

/// Trainable weights. Biases are stored as single-column matrices so every
/// block can be visited uniformly.
struct NetParams {
  static constexpr std::size_t kBlockCount = 16;
  static constexpr int kEdgeKinds = 2;

  int input_dim = 0;
  int hidden = 0;

  Eigen::MatrixXd in_w, in_b;           // H x In, H x 1
  Eigen::MatrixXd msg_w1, msg_b1;       // H x (2H + 2), H x 1
  Eigen::MatrixXd msg_w2, msg_b2;       // H x H, H x 1
  Eigen::MatrixXd gru_wz, gru_bz;       // H x 2H, H x 1
  Eigen::MatrixXd gru_wr, gru_br;
  Eigen::MatrixXd gru_wh, gru_bh;
  Eigen::MatrixXd read_w1, read_b1;     // H x H, H x 1
  Eigen::MatrixXd read_w2, read_b2;     // 1 x H, 1 x 1

  static NetParams zeros(int input_dim, int hidden);
  /// Glorot-uniform weights, zero biases.
  static NetParams random(int input_dim, int hidden, std::uint64_t seed);

  std::array<std::pair<std::string_view, Eigen::MatrixXd*>, kBlockCount> blocks();
  std::array<std::pair<std::string_view, const Eigen::MatrixXd*>, kBlockCount> blocks() const;

  std::size_t size() const;
  bool all_finite() const;
  /// Euclidean norm over every block.
  double norm() const;
  void set_zero();
  /// this += scale * other
  void axpy(double scale, const NetParams& other);
  bool operator==(const NetParams& other) const;
};

Eigen::VectorXd embed(const Eigen::VectorXd& encoding, const NetParams& params);

/// Message sent from node i to node j.
Eigen::VectorXd message(const Eigen::VectorXd& h_i, const Eigen::VectorXd& h_j,
                        const NetParams& params, EdgeKind kind = EdgeKind::intra);

Eigen::VectorXd aggregate(std::span<const Eigen::VectorXd> messages, int hidden);

Eigen::VectorXd gru_update(const Eigen::VectorXd& h, const Eigen::VectorXd& m,
                           const NetParams& params);

/// Disjoint union of kernel graphs, evaluated in one pass.
class GraphBatch {
 public:
  GraphBatch() = default;
  explicit GraphBatch(std::span<const KernelGraph> graphs);

  int graph_count() const { return graph_count_; }
  int node_count() const { return static_cast<int>(nodes_.cols()); }
  int edge_count() const { return static_cast<int>(src_.size()); }

  const Eigen::MatrixXd& nodes() const { return nodes_; }
  const std::vector<int>& src() const { return src_; }
  const std::vector<int>& dst() const { return dst_; }
  const std::vector<EdgeKind>& kinds() const { return kinds_; }
  const std::vector<int>& node_graph() const { return node_graph_; }

 private:
  int graph_count_ = 0;
  Eigen::MatrixXd nodes_;
  std::vector<int> src_, dst_;
  std::vector<EdgeKind> kinds_;
  std::vector<int> node_graph_;
};

/// Activations kept by `forward_batch` for the reverse pass.
struct ForwardCache {
  struct Round {
    Eigen::MatrixXd h, u, a, x, z, r, xt, c, next;
  };
  Eigen::MatrixXd h0;
  std::vector<Round> rounds;
  Eigen::MatrixXd pooled, read_pre;
};

/// Readout score of every graph in the batch.
Eigen::VectorXd forward_batch(const GraphBatch& batch, const NetParams& params, int layers,
                              ForwardCache* cache = nullptr);

/// Accumulates d(upstream · b)/dθ into `grad`.
void backward_batch(const GraphBatch& batch, const NetParams& params, const ForwardCache& cache,
                    const Eigen::VectorXd& upstream, NetParams& grad);

double forward(const KernelGraph& graph, const NetParams& params, int layers);

NetParams backward(const KernelGraph& graph, const NetParams& params, int layers,
                   double upstream_grad);

}  // namespace vgsil
