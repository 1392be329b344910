#include "cldtrack/train.hpp"

#include "cldtrack/core.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <string>

namespace cldt {

namespace {

double stable_sigmoid(double z) {
  if (z >= 0.0) {
    return 1.0 / (1.0 + std::exp(-z));
  }
  const double e = std::exp(z);
  return e / (1.0 + e);
}

/// softmax gradient: given y = softmax(x) and dL/dy, returns dL/dx.
Vector softmax_backward(const Vector& y, const Vector& dy) {
  const double dot = y.dot(dy);
  return (y.array() * (dy.array() - dot)).matrix();
}

}  // namespace

void TrainSample::validate(Index channels, Index grid) const {
  features.validate();
  if (features.height != grid || features.width != grid) {
    throw DataError("TrainSample: feature grid does not match the head grid");
  }
  if (features.channels() != channels) {
    throw DataError("TrainSample: feature channels do not match the trainable parameters");
  }
  if (exemplar_raw.size() != channels) {
    throw DataError("TrainSample: exemplar token dimension mismatch");
  }
  if (history_raw.empty()) throw DataError("TrainSample: empty token history");
  for (const auto& h : history_raw) {
    if (h.size() != channels) throw DataError("TrainSample: history token dimension mismatch");
  }
  if (gt_row < 0 || gt_row >= grid || gt_col < 0 || gt_col >= grid) {
    throw DataError("TrainSample: positive cell outside the grid");
  }
  if (!gt_box.positive_extent() || gt_box.x1 < 0.0 || gt_box.y1 < 0.0 || gt_box.x2 > 1.0 ||
      gt_box.y2 > 1.0) {
    throw DataError("TrainSample: normalized box must lie inside [0, 1] with positive extent");
  }
}

std::vector<TrainSample> build_training_samples(
    const EncoderBackend& backend, const BagOfDescriptions& bag, const AdapterState& adapter,
    const std::vector<ImagePatch>& frames, const std::vector<BBox>& gt_boxes,
    const SearchGeometry& geometry, std::uint64_t feature_seed, Index window_size) {
  geometry.validate();
  if (window_size < 1) throw ConfigError("build_training_samples: window_size must be positive");
  if (frames.size() != gt_boxes.size()) {
    throw DataError("build_training_samples: " + std::to_string(frames.size()) + " frames vs " +
                    std::to_string(gt_boxes.size()) + " boxes");
  }
  if (frames.size() < 2) {
    throw DataError("build_training_samples: need at least two frames (exemplar plus one)");
  }

  const ImagePatch exemplar =
      square_context_crop(frames[0], gt_boxes[0], geometry.exemplar_area_factor,
                          geometry.exemplar_size);
  const Vector exemplar_feat = encode_image(backend, exemplar);
  const Vector exemplar_raw = select_description(exemplar_feat, bag, adapter).raw;

  std::vector<TrainSample> samples;
  std::deque<Vector> history;
  for (std::size_t t = 1; t < frames.size(); ++t) {
    double scale = 1.0, x0 = 0.0, y0 = 0.0;
    const ImagePatch search =
        square_context_crop(frames[t], gt_boxes[t - 1], geometry.search_area_factor,
                            geometry.search_size, &scale, &x0, &y0);

    const Vector search_feat = encode_image(backend, search);
    history.push_back(select_description(search_feat, bag, adapter).raw);
    while (static_cast<Index>(history.size()) > window_size) history.pop_front();

    TrainSample s;
    s.features = extract_features(backend, exemplar, search, geometry, feature_seed);
    s.exemplar_raw = exemplar_raw;
    s.history_raw.assign(history.begin(), history.end());

    // Ground truth mapped into normalized crop coordinates.
    const BBox& gt = gt_boxes[t];
    const double size = static_cast<double>(geometry.search_size);
    BoxCorners box;
    box.x1 = std::clamp((gt.x - x0) / scale / size, 0.0, 1.0);
    box.y1 = std::clamp((gt.y - y0) / scale / size, 0.0, 1.0);
    box.x2 = std::clamp((gt.x2() - x0) / scale / size, 0.0, 1.0);
    box.y2 = std::clamp((gt.y2() - y0) / scale / size, 0.0, 1.0);
    if (!box.positive_extent()) {
      throw DataError("build_training_samples: frame " + std::to_string(t) +
                      ": target left the search crop");
    }
    s.gt_box = box;

    const double g = static_cast<double>(geometry.grid);
    const double ccx = 0.5 * (box.x1 + box.x2) * g;
    const double ccy = 0.5 * (box.y1 + box.y2) * g;
    s.gt_col = std::clamp(static_cast<Index>(std::floor(ccx)), Index(0), geometry.grid - 1);
    s.gt_row = std::clamp(static_cast<Index>(std::floor(ccy)), Index(0), geometry.grid - 1);

    s.validate(backend.dim(), geometry.grid);
    samples.push_back(std::move(s));
  }
  return samples;
}

Gradients Gradients::zero(Index channels, Index dim) {
  Gradients g;
  for (auto& st : g.head.stages) {
    st.weight = Matrix::Zero(channels, channels);
    st.scale = Vector::Zero(channels);
    st.shift = Vector::Zero(channels);
  }
  g.head.cls_weight = Matrix::Zero(1, channels);
  g.head.cls_bias = Vector::Zero(1);
  g.head.offset_weight = Matrix::Zero(2, channels);
  g.head.offset_bias = Vector::Zero(2);
  g.head.size_weight = Matrix::Zero(2, channels);
  g.head.size_bias = Vector::Zero(2);
  g.proj = Matrix::Zero(dim, dim);
  return g;
}

LossBreakdown sample_loss(const TrainSample& sample, const HeadParams& head, const Matrix& proj,
                          const LossWeights& weights, Gradients* grads,
                          SmoothnessProbe* probe) {
  head.validate();
  const Index q = head.channels();
  if (proj.rows() != q || proj.cols() != q) {
    throw DataError("sample_loss: projection must be square in the channel dimension");
  }
  sample.validate(q, sample.features.height);
  const Index grid = sample.features.height;
  const Index n = sample.features.cells();
  const std::size_t m = sample.history_raw.size();

  // ---- forward: text path ----
  const Vector exem_token = softmax(proj * sample.exemplar_raw);
  std::vector<Vector> hist_tokens(m);
  Vector agg = Vector::Zero(q);
  for (std::size_t i = 0; i < m; ++i) {
    hist_tokens[i] = softmax(proj * sample.history_raw[i]);
    agg += hist_tokens[i];
  }
  agg /= static_cast<double>(m);
  const Vector delta = exem_token - agg;
  const Vector att = softmax((-delta.cwiseAbs()).eval());
  const Vector kernel = att.cwiseProduct(exem_token);
  if (probe && delta.cwiseAbs().maxCoeff() > 0.0) {
    // A delta that vanishes identically is the self-history warmup case: the
    // aggregate equals the exemplar token for every parameter value, so abs()
    // sits on a plateau there, not at a kink. Only near-zero components of a
    // non-degenerate delta mark a boundary.
    probe->min_attention_delta =
        std::min(probe->min_attention_delta, delta.cwiseAbs().minCoeff());
  }

  // ---- forward: visual path, caching stage pre-activations ----
  const Matrix x0 =
      (sample.features.data.array().colwise() * (1.0 + kernel.array())).matrix();
  std::array<Matrix, 4> pre_affine;   // U_k = W_k X_{k-1}
  std::array<Matrix, 4> pre_relu;     // V_k = scale .* U_k + shift
  std::array<Matrix, 5> activations;  // X_0 .. X_4
  activations[0] = x0;
  for (std::size_t k = 0; k < 4; ++k) {
    const auto& st = head.stages[k];
    pre_affine[k] = st.weight * activations[k];
    Matrix v = pre_affine[k];
    v.array().colwise() *= st.scale.array();
    v.array().colwise() += st.shift.array();
    pre_relu[k] = v;
    activations[k + 1] = v.cwiseMax(0.0);
    if (probe) {
      probe->min_pre_relu = std::min(probe->min_pre_relu, v.cwiseAbs().minCoeff());
    }
  }
  const Matrix& feat_out = activations[4];

  const Index best = sample.gt_row * grid + sample.gt_col;
  Vector cls(n);
  Vector z_cls(n);
  for (Index i = 0; i < n; ++i) {
    z_cls(i) = (head.cls_weight * feat_out.col(i))(0) + head.cls_bias(0);
    cls(i) = stable_sigmoid(z_cls(i));
  }
  const Vector z_off = head.offset_weight * feat_out.col(best) + head.offset_bias;
  const Vector z_size = head.size_weight * feat_out.col(best) + head.size_bias;
  const double off_x = stable_sigmoid(z_off(0));
  const double off_y = stable_sigmoid(z_off(1));
  const double size_w = stable_sigmoid(z_size(0));
  const double size_h = stable_sigmoid(z_size(1));

  const double g = static_cast<double>(grid);
  const double cx = (static_cast<double>(sample.gt_col) + off_x) / g;
  const double cy = (static_cast<double>(sample.gt_row) + off_y) / g;
  BoxCorners pred;
  pred.x1 = cx - size_w / 2.0;
  pred.y1 = cy - size_h / 2.0;
  pred.x2 = cx + size_w / 2.0;
  pred.y2 = cy + size_h / 2.0;
  if (probe) {
    probe->min_corner_gap = std::min(
        {probe->min_corner_gap, std::abs(pred.x1 - sample.gt_box.x1),
         std::abs(pred.y1 - sample.gt_box.y1), std::abs(pred.x2 - sample.gt_box.x2),
         std::abs(pred.y2 - sample.gt_box.y2)});
  }

  const Vector target = gaussian_target_map(grid, grid, sample.gt_row, sample.gt_col);

  Vector cls_grad;
  BoxCorners giou_grad, l1_grad;
  LossBreakdown out;
  out.cls = focal_loss(cls, target, grads ? &cls_grad : nullptr);
  out.iou = giou_loss(pred, sample.gt_box, grads ? &giou_grad : nullptr);
  out.l1 = l1_loss(pred, sample.gt_box, grads ? &l1_grad : nullptr);
  out.total = weights.cls * out.cls + weights.iou * out.iou + weights.l1 * out.l1;
  if (!grads) return out;

  // ---- backward ----
  // Box corners -> center/size -> head pre-activations at the positive cell.
  const double dx1 = weights.iou * giou_grad.x1 + weights.l1 * l1_grad.x1;
  const double dy1 = weights.iou * giou_grad.y1 + weights.l1 * l1_grad.y1;
  const double dx2 = weights.iou * giou_grad.x2 + weights.l1 * l1_grad.x2;
  const double dy2 = weights.iou * giou_grad.y2 + weights.l1 * l1_grad.y2;
  const double dcx = dx1 + dx2;
  const double dcy = dy1 + dy2;
  const double dsw = (dx2 - dx1) / 2.0;
  const double dsh = (dy2 - dy1) / 2.0;
  Vector dz_off(2), dz_size(2);
  dz_off(0) = (dcx / g) * off_x * (1.0 - off_x);
  dz_off(1) = (dcy / g) * off_y * (1.0 - off_y);
  dz_size(0) = dsw * size_w * (1.0 - size_w);
  dz_size(1) = dsh * size_h * (1.0 - size_h);

  Vector dz_cls(n);
  for (Index i = 0; i < n; ++i) {
    dz_cls(i) = weights.cls * cls_grad(i) * cls(i) * (1.0 - cls(i));
  }

  // Output heads.
  grads->head.cls_weight += (dz_cls.transpose() * feat_out.transpose());
  grads->head.cls_bias(0) += dz_cls.sum();
  grads->head.offset_weight += dz_off * feat_out.col(best).transpose();
  grads->head.offset_bias += dz_off;
  grads->head.size_weight += dz_size * feat_out.col(best).transpose();
  grads->head.size_bias += dz_size;

  Matrix dx = head.cls_weight.transpose() * dz_cls.transpose();  // q x n
  dx.col(best) += head.offset_weight.transpose() * dz_off;
  dx.col(best) += head.size_weight.transpose() * dz_size;

  // Stages, last to first.
  for (int k = 3; k >= 0; --k) {
    const auto& st = head.stages[static_cast<std::size_t>(k)];
    auto& gst = grads->head.stages[static_cast<std::size_t>(k)];
    const Matrix dv =
        (dx.array() * (pre_relu[static_cast<std::size_t>(k)].array() > 0.0).cast<double>())
            .matrix();
    gst.scale += (dv.array() * pre_affine[static_cast<std::size_t>(k)].array()).rowwise().sum().matrix();
    gst.shift += dv.rowwise().sum();
    const Matrix du = (dv.array().colwise() * st.scale.array()).matrix();
    gst.weight += du * activations[static_cast<std::size_t>(k)].transpose();
    dx = st.weight.transpose() * du;
  }

  // Correlation: x0 = (1 + kernel) .* F rowwise.
  const Vector dkernel =
      (dx.array() * sample.features.data.array()).rowwise().sum().matrix();

  // kernel = att .* exem_token
  const Vector datt = exem_token.cwiseProduct(dkernel);
  Vector dexem = att.cwiseProduct(dkernel);

  // att = softmax(-|delta|)
  const Vector dm = softmax_backward(att, datt);
  Vector ddelta(q);
  for (Index i = 0; i < q; ++i) {
    const double s = delta(i) > 0.0 ? -1.0 : (delta(i) < 0.0 ? 1.0 : 0.0);
    ddelta(i) = s * dm(i);
  }
  dexem += ddelta;
  const Vector dagg = -ddelta;

  // Token projections.
  const Vector dy_e = softmax_backward(exem_token, dexem);
  grads->proj += dy_e * sample.exemplar_raw.transpose();
  const Vector dhist = dagg / static_cast<double>(m);
  for (std::size_t i = 0; i < m; ++i) {
    const Vector dy_i = softmax_backward(hist_tokens[i], dhist);
    grads->proj += dy_i * sample.history_raw[i].transpose();
  }
  return out;
}

LossBreakdown batch_loss(const std::vector<TrainSample>& samples, const HeadParams& head,
                         const Matrix& proj, const LossWeights& weights, Gradients* grads,
                         SmoothnessProbe* probe) {
  if (samples.empty()) throw DataError("batch_loss: no samples");
  LossBreakdown sum;
  for (const auto& s : samples) {
    const LossBreakdown one = sample_loss(s, head, proj, weights, grads, probe);
    sum.total += one.total;
    sum.cls += one.cls;
    sum.iou += one.iou;
    sum.l1 += one.l1;
  }
  const double inv = 1.0 / static_cast<double>(samples.size());
  sum.total *= inv;
  sum.cls *= inv;
  sum.iou *= inv;
  sum.l1 *= inv;
  if (grads) {
    for (auto& st : grads->head.stages) {
      st.weight *= inv;
      st.scale *= inv;
      st.shift *= inv;
    }
    grads->head.cls_weight *= inv;
    grads->head.cls_bias *= inv;
    grads->head.offset_weight *= inv;
    grads->head.offset_bias *= inv;
    grads->head.size_weight *= inv;
    grads->head.size_bias *= inv;
    grads->proj *= inv;
  }
  return sum;
}

Index param_count(Index channels, Index dim) {
  return 4 * (channels * channels + 2 * channels) + (channels + 1) + 2 * (2 * channels + 2) +
         dim * dim;
}

namespace {

void write_row_major(Vector& flat, Index& at, const Matrix& m) {
  for (Index r = 0; r < m.rows(); ++r) {
    for (Index c = 0; c < m.cols(); ++c) flat(at++) = m(r, c);
  }
}

void read_row_major(const Vector& flat, Index& at, Matrix& m) {
  for (Index r = 0; r < m.rows(); ++r) {
    for (Index c = 0; c < m.cols(); ++c) m(r, c) = flat(at++);
  }
}

}  // namespace

Vector pack_params(const HeadParams& head, const Matrix& proj) {
  head.validate();
  Vector flat(param_count(head.channels(), proj.rows()));
  Index at = 0;
  for (const auto& st : head.stages) {
    write_row_major(flat, at, st.weight);
    flat.segment(at, st.scale.size()) = st.scale;
    at += st.scale.size();
    flat.segment(at, st.shift.size()) = st.shift;
    at += st.shift.size();
  }
  write_row_major(flat, at, head.cls_weight);
  flat(at++) = head.cls_bias(0);
  write_row_major(flat, at, head.offset_weight);
  flat.segment(at, 2) = head.offset_bias;
  at += 2;
  write_row_major(flat, at, head.size_weight);
  flat.segment(at, 2) = head.size_bias;
  at += 2;
  write_row_major(flat, at, proj);
  if (at != flat.size()) throw DataError("pack_params: parameter count mismatch");
  return flat;
}

void unpack_params(const Vector& flat, HeadParams& head, Matrix& proj) {
  head.validate();
  if (proj.rows() != proj.cols() || proj.rows() < 1) {
    throw DataError("unpack_params: projection must be square and sized");
  }
  if (flat.size() != param_count(head.channels(), proj.rows())) {
    throw DataError("unpack_params: expected " +
                    std::to_string(param_count(head.channels(), proj.rows())) +
                    " parameters, got " + std::to_string(flat.size()));
  }
  Index at = 0;
  for (auto& st : head.stages) {
    read_row_major(flat, at, st.weight);
    st.scale = flat.segment(at, st.scale.size());
    at += st.scale.size();
    st.shift = flat.segment(at, st.shift.size());
    at += st.shift.size();
  }
  read_row_major(flat, at, head.cls_weight);
  head.cls_bias(0) = flat(at++);
  read_row_major(flat, at, head.offset_weight);
  head.offset_bias = flat.segment(at, 2);
  at += 2;
  read_row_major(flat, at, head.size_weight);
  head.size_bias = flat.segment(at, 2);
  at += 2;
  read_row_major(flat, at, proj);
}

Vector finite_diff_grad(const std::function<double(const Vector&)>& f, const Vector& at,
                        double epsilon) {
  if (!(epsilon > 0.0)) throw ConfigError("finite_diff_grad: epsilon must be positive");
  Vector grad(at.size());
  Vector x = at;
  for (Index i = 0; i < at.size(); ++i) {
    const double keep = x(i);
    x(i) = keep + epsilon;
    const double hi = f(x);
    x(i) = keep - epsilon;
    const double lo = f(x);
    x(i) = keep;
    grad(i) = (hi - lo) / (2.0 * epsilon);
  }
  return grad;
}

double max_rel_error(const Vector& analytic, const Vector& numeric) {
  if (analytic.size() != numeric.size()) {
    throw DataError("max_rel_error: gradient sizes differ");
  }
  double worst = 0.0;
  for (Index i = 0; i < analytic.size(); ++i) {
    const double denom = std::max({std::abs(analytic(i)), std::abs(numeric(i)), 1e-6});
    worst = std::max(worst, std::abs(analytic(i) - numeric(i)) / denom);
  }
  return worst;
}

void TrainConfig::validate() const {
  if (steps < 0) throw ConfigError("TrainConfig: steps must be non-negative");
  if (!(learning_rate > 0.0)) throw ConfigError("TrainConfig: learning rate must be positive");
  if (max_grad_norm < 0.0) throw ConfigError("TrainConfig: max_grad_norm must be non-negative");
  if (weights.cls < 0.0 || weights.iou < 0.0 || weights.l1 < 0.0) {
    throw ConfigError("TrainConfig: loss weights must be non-negative");
  }
}

TrainResult train_toy(const std::vector<TrainSample>& samples, HeadParams head, Matrix proj,
                      const TrainConfig& cfg) {
  cfg.validate();
  if (samples.empty()) throw DataError("train_toy: no samples");
  const Index q = head.channels();

  TrainResult result;
  result.trace.reserve(static_cast<std::size_t>(cfg.steps) + 1);
  Vector flat = pack_params(head, proj);
  for (Index step = 0; step < cfg.steps; ++step) {
    Gradients grads = Gradients::zero(q, proj.rows());
    const LossBreakdown loss = batch_loss(samples, head, proj, cfg.weights, &grads);
    if (!std::isfinite(loss.total)) {
      throw DataError("train_toy: loss diverged at step " + std::to_string(step));
    }
    result.trace.push_back(loss);

    Vector gflat = pack_params(grads.head, grads.proj);
    if (cfg.max_grad_norm > 0.0) {
      const double norm = gflat.norm();
      if (norm > cfg.max_grad_norm) gflat *= cfg.max_grad_norm / norm;
    }
    flat -= cfg.learning_rate * gflat;
    unpack_params(flat, head, proj);
  }

  const LossBreakdown final_loss = batch_loss(samples, head, proj, cfg.weights);
  if (!std::isfinite(final_loss.total)) {
    throw DataError("train_toy: loss diverged at step " + std::to_string(cfg.steps));
  }
  result.trace.push_back(final_loss);
  result.head = std::move(head);
  result.proj = std::move(proj);
  return result;
}

}  // namespace cldt
