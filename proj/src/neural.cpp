#include "vgsil/neural.hpp"

#include <cmath>
#include <random>

#include "vgsil/error.hpp"

namespace vgsil {

namespace {

Eigen::MatrixXd sigmoid(const Eigen::MatrixXd& x) {
  return x.unaryExpr([](double v) { return 1.0 / (1.0 + std::exp(-v)); });
}

Eigen::MatrixXd tanh_m(const Eigen::MatrixXd& x) {
  return x.unaryExpr([](double v) { return std::tanh(v); });
}

void check_layers(int layers) {
  if (layers < 1) throw Error(Errc::invalid_config, "message-passing layers must be >= 1");
}

}  // namespace

KernelGraph make_kernel_graph(KernelKind kind, Eigen::MatrixXd nodes,
                              std::vector<std::vector<int>> grouping) {
  const int n = static_cast<int>(nodes.cols());
  std::vector<int> group_of(static_cast<std::size_t>(n), -1);
  for (std::size_t g = 0; g < grouping.size(); ++g) {
    for (int i : grouping[g]) {
      if (i < 0 || i >= n || group_of[static_cast<std::size_t>(i)] != -1) {
        throw Error(Errc::dimension_mismatch, "grouping must partition the nodes");
      }
      group_of[static_cast<std::size_t>(i)] = static_cast<int>(g);
    }
  }
  for (int g : group_of) {
    if (g < 0) throw Error(Errc::dimension_mismatch, "grouping must cover every node");
  }
  KernelGraph graph{kind, std::move(nodes), {}, std::move(grouping)};
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      if (i == j) continue;
      const bool same = group_of[static_cast<std::size_t>(i)] == group_of[static_cast<std::size_t>(j)];
      graph.edges.push_back({i, j, same ? EdgeKind::intra : EdgeKind::inter});
    }
  }
  return graph;
}

Eigen::VectorXd encode_node(const Eigen::VectorXd& descriptor, const ImagePoint& pixel,
                            double width, double height) {
  Eigen::VectorXd x(descriptor.size() + 2);
  x << descriptor, 2.0 * pixel.u / width - 1.0, 2.0 * pixel.v / height - 1.0;
  return x;
}

NetParams NetParams::zeros(int input_dim, int hidden) {
  if (input_dim < 1 || hidden < 1) {
    throw Error(Errc::invalid_config, "input_dim and hidden must be positive");
  }
  const int h = hidden;
  NetParams p;
  p.input_dim = input_dim;
  p.hidden = hidden;
  p.in_w = Eigen::MatrixXd::Zero(h, input_dim);
  p.in_b = Eigen::MatrixXd::Zero(h, 1);
  p.msg_w1 = Eigen::MatrixXd::Zero(h, 2 * h + kEdgeKinds);
  p.msg_b1 = Eigen::MatrixXd::Zero(h, 1);
  p.msg_w2 = Eigen::MatrixXd::Zero(h, h);
  p.msg_b2 = Eigen::MatrixXd::Zero(h, 1);
  p.gru_wz = Eigen::MatrixXd::Zero(h, 2 * h);
  p.gru_bz = Eigen::MatrixXd::Zero(h, 1);
  p.gru_wr = Eigen::MatrixXd::Zero(h, 2 * h);
  p.gru_br = Eigen::MatrixXd::Zero(h, 1);
  p.gru_wh = Eigen::MatrixXd::Zero(h, 2 * h);
  p.gru_bh = Eigen::MatrixXd::Zero(h, 1);
  p.read_w1 = Eigen::MatrixXd::Zero(h, h);
  p.read_b1 = Eigen::MatrixXd::Zero(h, 1);
  p.read_w2 = Eigen::MatrixXd::Zero(1, h);
  p.read_b2 = Eigen::MatrixXd::Zero(1, 1);
  return p;
}

NetParams NetParams::random(int input_dim, int hidden, std::uint64_t seed) {
  NetParams p = zeros(input_dim, hidden);
  std::mt19937_64 rng(seed);
  for (auto& [name, m] : p.blocks()) {
    if (name.find("_b") != std::string_view::npos) continue;
    const double limit = std::sqrt(6.0 / static_cast<double>(m->rows() + m->cols()));
    std::uniform_real_distribution<double> dist(-limit, limit);
    for (Eigen::Index j = 0; j < m->cols(); ++j)
      for (Eigen::Index i = 0; i < m->rows(); ++i) (*m)(i, j) = dist(rng);
  }
  return p;
}

std::array<std::pair<std::string_view, Eigen::MatrixXd*>, NetParams::kBlockCount> NetParams::blocks() {
  return {{{"in_w", &in_w},       {"in_b", &in_b},       {"msg_w1", &msg_w1}, {"msg_b1", &msg_b1},
           {"msg_w2", &msg_w2},   {"msg_b2", &msg_b2},   {"gru_wz", &gru_wz}, {"gru_bz", &gru_bz},
           {"gru_wr", &gru_wr},   {"gru_br", &gru_br},   {"gru_wh", &gru_wh}, {"gru_bh", &gru_bh},
           {"read_w1", &read_w1}, {"read_b1", &read_b1}, {"read_w2", &read_w2}, {"read_b2", &read_b2}}};
}

std::array<std::pair<std::string_view, const Eigen::MatrixXd*>, NetParams::kBlockCount>
NetParams::blocks() const {
  auto mut = const_cast<NetParams*>(this)->blocks();
  std::array<std::pair<std::string_view, const Eigen::MatrixXd*>, kBlockCount> out;
  for (std::size_t i = 0; i < kBlockCount; ++i) out[i] = {mut[i].first, mut[i].second};
  return out;
}

std::size_t NetParams::size() const {
  std::size_t n = 0;
  for (const auto& [name, m] : blocks()) n += static_cast<std::size_t>(m->size());
  return n;
}

bool NetParams::all_finite() const {
  for (const auto& [name, m] : blocks())
    if (!m->allFinite()) return false;
  return true;
}

double NetParams::norm() const {
  double sq = 0.0;
  for (const auto& [name, m] : blocks()) sq += m->squaredNorm();
  return std::sqrt(sq);
}

void NetParams::set_zero() {
  for (auto& [name, m] : blocks()) m->setZero();
}

void NetParams::axpy(double scale, const NetParams& other) {
  auto mine = blocks();
  const auto theirs = other.blocks();
  for (std::size_t i = 0; i < kBlockCount; ++i) *mine[i].second += scale * *theirs[i].second;
}

bool NetParams::operator==(const NetParams& other) const {
  if (input_dim != other.input_dim || hidden != other.hidden) return false;
  const auto a = blocks();
  const auto b = other.blocks();
  for (std::size_t i = 0; i < kBlockCount; ++i)
    if (*a[i].second != *b[i].second) return false;
  return true;
}

Eigen::VectorXd embed(const Eigen::VectorXd& encoding, const NetParams& params) {
  if (encoding.size() != params.input_dim) {
    throw Error(Errc::dimension_mismatch, "node encoding has " + std::to_string(encoding.size()) +
                                              " entries, expected " + std::to_string(params.input_dim));
  }
  return tanh_m(params.in_w * encoding + params.in_b);
}

Eigen::VectorXd message(const Eigen::VectorXd& h_i, const Eigen::VectorXd& h_j,
                        const NetParams& params, EdgeKind kind) {
  const int h = params.hidden;
  Eigen::VectorXd u = Eigen::VectorXd::Zero(2 * h + NetParams::kEdgeKinds);
  u << h_i, h_j, Eigen::Vector2d::Zero();
  u(2 * h + (kind == EdgeKind::intra ? 0 : 1)) = 1.0;
  const Eigen::VectorXd hidden = (params.msg_w1 * u + params.msg_b1).cwiseMax(0.0);
  return params.msg_w2 * hidden + params.msg_b2;
}

Eigen::VectorXd aggregate(std::span<const Eigen::VectorXd> messages, int hidden) {
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(hidden);
  for (const auto& m : messages) sum += m;
  return sum;
}

Eigen::VectorXd gru_update(const Eigen::VectorXd& h, const Eigen::VectorXd& m,
                           const NetParams& params) {
  Eigen::VectorXd x(h.size() + m.size());
  x << h, m;
  const Eigen::VectorXd z = sigmoid(params.gru_wz * x + params.gru_bz);
  const Eigen::VectorXd r = sigmoid(params.gru_wr * x + params.gru_br);
  Eigen::VectorXd xt(x.size());
  xt << r.cwiseProduct(h), m;
  const Eigen::VectorXd c = tanh_m(params.gru_wh * xt + params.gru_bh);
  return (Eigen::VectorXd::Ones(h.size()) - z).cwiseProduct(h) + z.cwiseProduct(c);
}

GraphBatch::GraphBatch(std::span<const KernelGraph> graphs) {
  graph_count_ = static_cast<int>(graphs.size());
  Eigen::Index total = 0;
  Eigen::Index rows = graphs.empty() ? 0 : graphs.front().nodes.rows();
  for (const auto& g : graphs) {
    if (g.nodes.rows() != rows) throw Error(Errc::dimension_mismatch, "mixed node encodings in batch");
    total += g.nodes.cols();
  }
  nodes_.resize(rows, total);
  int offset = 0;
  for (int gi = 0; gi < graph_count_; ++gi) {
    const auto& g = graphs[static_cast<std::size_t>(gi)];
    nodes_.middleCols(offset, g.nodes.cols()) = g.nodes;
    for (const auto& e : g.edges) {
      src_.push_back(offset + e.from);
      dst_.push_back(offset + e.to);
      kinds_.push_back(e.kind);
    }
    for (int i = 0; i < g.node_count(); ++i) node_graph_.push_back(gi);
    offset += g.node_count();
  }
}

Eigen::VectorXd forward_batch(const GraphBatch& batch, const NetParams& params, int layers,
                              ForwardCache* cache) {
  check_layers(layers);
  if (batch.nodes().rows() != params.input_dim && batch.node_count() > 0) {
    throw Error(Errc::dimension_mismatch, "node encoding size does not match params");
  }
  ForwardCache local;
  ForwardCache& c = cache ? *cache : local;
  const int hd = params.hidden;
  const int n = batch.node_count();
  const int ne = batch.edge_count();

  c.h0.noalias() = params.in_w * batch.nodes();
  c.h0.colwise() += params.in_b.col(0);
  c.h0 = tanh_m(c.h0);
  c.rounds.resize(static_cast<std::size_t>(layers));
  Eigen::MatrixXd msgs(hd, ne);
  for (int t = 0; t < layers; ++t) {
    auto& rd = c.rounds[static_cast<std::size_t>(t)];
    const Eigen::MatrixXd& h = t == 0 ? c.h0 : c.rounds[static_cast<std::size_t>(t - 1)].next;
    rd.h = h;
    rd.u.setZero(2 * hd + NetParams::kEdgeKinds, ne);
    for (int e = 0; e < ne; ++e) {
      rd.u.col(e).head(hd) = h.col(batch.src()[static_cast<std::size_t>(e)]);
      rd.u.col(e).segment(hd, hd) = h.col(batch.dst()[static_cast<std::size_t>(e)]);
      rd.u(2 * hd + (batch.kinds()[static_cast<std::size_t>(e)] == EdgeKind::intra ? 0 : 1), e) = 1.0;
    }
    rd.a.noalias() = params.msg_w1 * rd.u;
    rd.a.colwise() += params.msg_b1.col(0);
    msgs.noalias() = params.msg_w2 * rd.a.cwiseMax(0.0);
    msgs.colwise() += params.msg_b2.col(0);

    rd.x.resize(2 * hd, n);
    rd.x.topRows(hd) = h;
    rd.x.bottomRows(hd).setZero();
    for (int e = 0; e < ne; ++e) rd.x.col(batch.dst()[static_cast<std::size_t>(e)]).tail(hd) += msgs.col(e);

    rd.z.noalias() = params.gru_wz * rd.x;
    rd.z.colwise() += params.gru_bz.col(0);
    rd.z = sigmoid(rd.z);
    rd.r.noalias() = params.gru_wr * rd.x;
    rd.r.colwise() += params.gru_br.col(0);
    rd.r = sigmoid(rd.r);
    rd.xt.resize(2 * hd, n);
    rd.xt.topRows(hd) = rd.r.cwiseProduct(h);
    rd.xt.bottomRows(hd) = rd.x.bottomRows(hd);
    rd.c.noalias() = params.gru_wh * rd.xt;
    rd.c.colwise() += params.gru_bh.col(0);
    rd.c = tanh_m(rd.c);
    rd.next = h + rd.z.cwiseProduct(rd.c - h);
  }

  const Eigen::MatrixXd& h_final = c.rounds.back().next;
  c.pooled.setZero(hd, batch.graph_count());
  for (int i = 0; i < n; ++i) c.pooled.col(batch.node_graph()[static_cast<std::size_t>(i)]) += h_final.col(i);
  c.read_pre.noalias() = params.read_w1 * c.pooled;
  c.read_pre.colwise() += params.read_b1.col(0);
  const Eigen::MatrixXd out = (params.read_w2 * c.read_pre.cwiseMax(0.0)).array() + params.read_b2(0, 0);
  return out.row(0).transpose();
}

void backward_batch(const GraphBatch& batch, const NetParams& params, const ForwardCache& cache,
                    const Eigen::VectorXd& upstream, NetParams& grad) {
  const int hd = params.hidden;
  const int n = batch.node_count();
  const int ne = batch.edge_count();
  if (upstream.size() != batch.graph_count()) {
    throw Error(Errc::dimension_mismatch, "upstream gradient must have one entry per graph");
  }

  // Readout.
  const Eigen::MatrixXd y = cache.read_pre.cwiseMax(0.0);
  const Eigen::RowVectorXd db = upstream.transpose();
  grad.read_w2 += db * y.transpose();
  grad.read_b2(0, 0) += db.sum();
  Eigen::MatrixXd dpre = (params.read_w2.transpose() * db).cwiseProduct(
      (cache.read_pre.array() > 0.0).cast<double>().matrix());
  grad.read_w1 += dpre * cache.pooled.transpose();
  grad.read_b1 += dpre.rowwise().sum();
  const Eigen::MatrixXd dpooled = params.read_w1.transpose() * dpre;

  Eigen::MatrixXd dh(hd, n);
  for (int i = 0; i < n; ++i) dh.col(i) = dpooled.col(batch.node_graph()[static_cast<std::size_t>(i)]);

  for (auto it = cache.rounds.rbegin(); it != cache.rounds.rend(); ++it) {
    const auto& rd = *it;
    // h' = h + z (c - h)
    const Eigen::MatrixXd dz = dh.cwiseProduct(rd.c - rd.h);
    const Eigen::MatrixXd dc = dh.cwiseProduct(rd.z);
    Eigen::MatrixXd dh_prev = dh - dc;  // (1 - z) * dh

    const Eigen::MatrixXd dpc =
        dc.array() * (1.0 - rd.c.array().square());
    grad.gru_wh += dpc * rd.xt.transpose();
    grad.gru_bh += dpc.rowwise().sum();
    const Eigen::MatrixXd dxt = params.gru_wh.transpose() * dpc;
    Eigen::MatrixXd dagg = dxt.bottomRows(hd);
    const Eigen::MatrixXd drh = dxt.topRows(hd);
    dh_prev += drh.cwiseProduct(rd.r);
    const Eigen::MatrixXd dr = drh.cwiseProduct(rd.h);

    const Eigen::MatrixXd dpr = dr.array() * rd.r.array() * (1.0 - rd.r.array());
    grad.gru_wr += dpr * rd.x.transpose();
    grad.gru_br += dpr.rowwise().sum();
    Eigen::MatrixXd dx = params.gru_wr.transpose() * dpr;

    const Eigen::MatrixXd dpz = dz.array() * rd.z.array() * (1.0 - rd.z.array());
    grad.gru_wz += dpz * rd.x.transpose();
    grad.gru_bz += dpz.rowwise().sum();
    dx += params.gru_wz.transpose() * dpz;

    dh_prev += dx.topRows(hd);
    dagg += dx.bottomRows(hd);

    // Messages: m_e = W2 relu(W1 u_e + b1) + b2, summed into dst.
    Eigen::MatrixXd dmsg(hd, ne);
    for (int e = 0; e < ne; ++e) dmsg.col(e) = dagg.col(batch.dst()[static_cast<std::size_t>(e)]);
    const Eigen::MatrixXd relu = rd.a.cwiseMax(0.0);
    grad.msg_w2 += dmsg * relu.transpose();
    grad.msg_b2 += dmsg.rowwise().sum();
    const Eigen::MatrixXd da = (params.msg_w2.transpose() * dmsg)
                                   .cwiseProduct((rd.a.array() > 0.0).cast<double>().matrix());
    grad.msg_w1 += da * rd.u.transpose();
    grad.msg_b1 += da.rowwise().sum();
    const Eigen::MatrixXd du = params.msg_w1.transpose() * da;
    for (int e = 0; e < ne; ++e) {
      dh_prev.col(batch.src()[static_cast<std::size_t>(e)]) += du.col(e).head(hd);
      dh_prev.col(batch.dst()[static_cast<std::size_t>(e)]) += du.col(e).segment(hd, hd);
    }
    dh = std::move(dh_prev);
  }

  const Eigen::MatrixXd dpre0 = dh.array() * (1.0 - cache.h0.array().square());
  grad.in_w += dpre0 * batch.nodes().transpose();
  grad.in_b += dpre0.rowwise().sum();
}

double forward(const KernelGraph& graph, const NetParams& params, int layers) {
  const GraphBatch batch(std::span<const KernelGraph>(&graph, 1));
  return forward_batch(batch, params, layers)(0);
}

NetParams backward(const KernelGraph& graph, const NetParams& params, int layers,
                   double upstream_grad) {
  const GraphBatch batch(std::span<const KernelGraph>(&graph, 1));
  ForwardCache cache;
  forward_batch(batch, params, layers, &cache);
  NetParams grad = NetParams::zeros(params.input_dim, params.hidden);
  backward_batch(batch, params, cache, Eigen::VectorXd::Constant(1, upstream_grad), grad);
  return grad;
}

}  // namespace vgsil
