#include "macroptim/model.hpp"

#include <cmath>

#include "macroptim/diag.hpp"
#include "macroptim/rng.hpp"

namespace macroptim {

namespace {

double sigmoid(double z) {
    if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
    const double e = std::exp(z);
    return e / (1.0 + e);
}

// d/dz [z sigmoid(z)] = sigmoid(z) + z sigmoid(z)(1 - sigmoid(z))
double swish_derivative(double z, double sig) { return sig + z * sig * (1.0 - sig); }

Matrix gaussian_matrix(int rows, int cols, double stddev, Xoshiro256StarStar &rng) {
    Matrix m(rows, cols);
    for (int i = 0; i < rows; ++i) {
        for (int j = 0; j < cols; ++j) m(i, j) = stddev * rng.gaussian();
    }
    return m;
}

} // namespace

Activation activation_from_string(const std::string &name) {
    if (name == "identity") return Activation::identity;
    if (name == "relu") return Activation::relu;
    if (name == "swiglu") return Activation::swiglu;
    if (name == "norm_gated_swiglu") return Activation::norm_gated_swiglu;
    throw std::invalid_argument("unknown activation '" + name + "'");
}

PreNorm pre_norm_from_string(const std::string &name) {
    if (name == "none") return PreNorm::none;
    if (name == "parameter_free_rms") return PreNorm::parameter_free_rms;
    if (name == "learnable_rms") return PreNorm::learnable_rms;
    throw std::invalid_argument("unknown pre_norm '" + name + "'");
}

std::string to_string(Activation a) {
    switch (a) {
    case Activation::identity: return "identity";
    case Activation::relu: return "relu";
    case Activation::swiglu: return "swiglu";
    case Activation::norm_gated_swiglu: return "norm_gated_swiglu";
    }
    return "?";
}

std::string to_string(PreNorm p) {
    switch (p) {
    case PreNorm::none: return "none";
    case PreNorm::parameter_free_rms: return "parameter_free_rms";
    case PreNorm::learnable_rms: return "learnable_rms";
    }
    return "?";
}

TaskKind task_kind_from_string(const std::string &name) {
    if (name == "frobenius_nearest_point") return TaskKind::frobenius_nearest_point;
    if (name == "linear_regression") return TaskKind::linear_regression;
    if (name == "synthetic_classification") return TaskKind::synthetic_classification;
    throw std::invalid_argument("unknown task kind '" + name + "'");
}

std::string to_string(TaskKind k) {
    switch (k) {
    case TaskKind::frobenius_nearest_point: return "frobenius_nearest_point";
    case TaskKind::linear_regression: return "linear_regression";
    case TaskKind::synthetic_classification: return "synthetic_classification";
    }
    return "?";
}

Matrix layer_forward(const Layer &layer, const Matrix &x, LayerCache *cache) {
    if (x.cols() != layer.spec.d_in) {
        throw std::invalid_argument("layer_forward: input width " + std::to_string(x.cols()) +
                                    " != d_in " + std::to_string(layer.spec.d_in));
    }
    LayerCache local;
    LayerCache &c = cache ? *cache : local;
    c.x_raw = x;

    if (layer.spec.pre_norm == PreNorm::none) {
        c.x = x;
    } else {
        const double sqrt_d = std::sqrt(static_cast<double>(x.cols()));
        c.x_hat = Matrix(x.rows(), x.cols());
        c.row_rms.assign(static_cast<std::size_t>(x.rows()), 0.0);
        for (int i = 0; i < x.rows(); ++i) {
            double s = 0.0;
            for (int j = 0; j < x.cols(); ++j) s += x(i, j) * x(i, j);
            const double rms = std::sqrt(s) / sqrt_d;
            if (rms == 0.0) throw NumericalError("pre-norm RMS of a zero row is undefined");
            c.row_rms[static_cast<std::size_t>(i)] = rms;
            for (int j = 0; j < x.cols(); ++j) c.x_hat(i, j) = x(i, j) / rms;
        }
        if (layer.spec.pre_norm == PreNorm::learnable_rms) {
            c.x = c.x_hat;
            for (int i = 0; i < x.rows(); ++i) {
                for (int j = 0; j < x.cols(); ++j) {
                    c.x(i, j) *= layer.gamma[static_cast<std::size_t>(j)];
                }
            }
        } else {
            c.x = c.x_hat;
        }
    }

    c.z1 = matmul(c.x, transpose(layer.w1));
    switch (layer.spec.activation) {
    case Activation::identity:
        return c.z1;
    case Activation::relu: {
        Matrix y = c.z1;
        for (double &v : y.data()) v = v > 0.0 ? v : 0.0;
        return y;
    }
    case Activation::swiglu:
    case Activation::norm_gated_swiglu: {
        c.z2 = matmul(c.x, transpose(layer.w2));
        c.sig = Matrix(c.z1.rows(), c.z1.cols());
        c.swish = Matrix(c.z1.rows(), c.z1.cols());
        for (int i = 0; i < c.z1.rows(); ++i) {
            for (int j = 0; j < c.z1.cols(); ++j) {
                const double s = sigmoid(c.z1(i, j));
                c.sig(i, j) = s;
                c.swish(i, j) = c.z1(i, j) * s;
            }
        }
        if (layer.spec.activation == Activation::swiglu) {
            return hadamard(c.swish, c.z2);
        }
        c.s_hat = c.swish;
        if (layer.spec.gate_rms_per_row) {
            c.gate_rms_rows.assign(static_cast<std::size_t>(c.swish.rows()), 0.0);
            const double sqrt_d = std::sqrt(static_cast<double>(c.swish.cols()));
            for (int i = 0; i < c.swish.rows(); ++i) {
                double s = 0.0;
                for (int j = 0; j < c.swish.cols(); ++j) s += c.swish(i, j) * c.swish(i, j);
                const double rms = std::sqrt(s) / sqrt_d;
                if (rms == 0.0) throw NumericalError("norm-gated swiglu: zero gate RMS");
                c.gate_rms_rows[static_cast<std::size_t>(i)] = rms;
                for (int j = 0; j < c.swish.cols(); ++j) c.s_hat(i, j) /= rms;
            }
        } else {
            c.gate_rms = activation_rms(c.swish);
            if (c.gate_rms == 0.0) throw NumericalError("norm-gated swiglu: zero gate RMS");
            c.s_hat *= 1.0 / c.gate_rms;
        }
        return hadamard(c.s_hat, c.z2);
    }
    }
    throw std::invalid_argument("unknown activation");
}

LayerGrads layer_backward(const Layer &layer, const LayerCache &cache, const Matrix &dy,
                          Matrix *dx) {
    LayerGrads grads;
    Matrix dz1;
    Matrix dz2;

    switch (layer.spec.activation) {
    case Activation::identity:
        dz1 = dy;
        break;
    case Activation::relu: {
        dz1 = dy;
        for (int i = 0; i < dz1.rows(); ++i) {
            for (int j = 0; j < dz1.cols(); ++j) {
                if (cache.z1(i, j) <= 0.0) dz1(i, j) = 0.0;
            }
        }
        break;
    }
    case Activation::swiglu: {
        Matrix ds = hadamard(dy, cache.z2);
        dz2 = hadamard(dy, cache.swish);
        dz1 = ds;
        for (int i = 0; i < dz1.rows(); ++i) {
            for (int j = 0; j < dz1.cols(); ++j) {
                dz1(i, j) *= swish_derivative(cache.z1(i, j), cache.sig(i, j));
            }
        }
        break;
    }
    case Activation::norm_gated_swiglu: {
        Matrix ds_hat = hadamard(dy, cache.z2);
        dz2 = hadamard(dy, cache.s_hat);
        // Differentiate s_hat = s / rms(s): with N the normalization count,
        // ds = (ds_hat - s_hat <ds_hat, s_hat>/N) / rms.
        Matrix ds(ds_hat.rows(), ds_hat.cols());
        if (layer.spec.gate_rms_per_row) {
            const double n = static_cast<double>(ds_hat.cols());
            for (int i = 0; i < ds_hat.rows(); ++i) {
                double inner = 0.0;
                for (int j = 0; j < ds_hat.cols(); ++j) inner += ds_hat(i, j) * cache.s_hat(i, j);
                const double coeff = inner / n;
                const double rms = cache.gate_rms_rows[static_cast<std::size_t>(i)];
                for (int j = 0; j < ds_hat.cols(); ++j) {
                    ds(i, j) = (ds_hat(i, j) - cache.s_hat(i, j) * coeff) / rms;
                }
            }
        } else {
            const double n = static_cast<double>(ds_hat.size());
            const double coeff = dot(ds_hat, cache.s_hat) / n;
            for (int i = 0; i < ds_hat.rows(); ++i) {
                for (int j = 0; j < ds_hat.cols(); ++j) {
                    ds(i, j) = (ds_hat(i, j) - cache.s_hat(i, j) * coeff) / cache.gate_rms;
                }
            }
        }
        dz1 = ds;
        for (int i = 0; i < dz1.rows(); ++i) {
            for (int j = 0; j < dz1.cols(); ++j) {
                dz1(i, j) *= swish_derivative(cache.z1(i, j), cache.sig(i, j));
            }
        }
        break;
    }
    }

    grads.w1 = matmul(transpose(dz1), cache.x);
    Matrix dxn = matmul(dz1, layer.w1);
    if (layer.has_w2()) {
        grads.w2 = matmul(transpose(dz2), cache.x);
        dxn += matmul(dz2, layer.w2);
    }

    if (layer.spec.pre_norm == PreNorm::none) {
        if (dx) *dx = std::move(dxn);
        return grads;
    }

    Matrix dx_hat;
    if (layer.spec.pre_norm == PreNorm::learnable_rms) {
        grads.gamma.assign(static_cast<std::size_t>(cache.x_raw.cols()), 0.0);
        for (int i = 0; i < dxn.rows(); ++i) {
            for (int j = 0; j < dxn.cols(); ++j) {
                grads.gamma[static_cast<std::size_t>(j)] += dxn(i, j) * cache.x_hat(i, j);
            }
        }
        dx_hat = dxn;
        for (int i = 0; i < dx_hat.rows(); ++i) {
            for (int j = 0; j < dx_hat.cols(); ++j) {
                dx_hat(i, j) *= layer.gamma[static_cast<std::size_t>(j)];
            }
        }
    } else {
        dx_hat = std::move(dxn);
    }

    if (dx) {
        const double d = static_cast<double>(cache.x_raw.cols());
        *dx = Matrix(cache.x_raw.rows(), cache.x_raw.cols());
        for (int i = 0; i < dx_hat.rows(); ++i) {
            double inner = 0.0;
            for (int j = 0; j < dx_hat.cols(); ++j) inner += dx_hat(i, j) * cache.x_hat(i, j);
            const double coeff = inner / d;
            const double rms = cache.row_rms[static_cast<std::size_t>(i)];
            for (int j = 0; j < dx_hat.cols(); ++j) {
                (*dx)(i, j) = (dx_hat(i, j) - cache.x_hat(i, j) * coeff) / rms;
            }
        }
    }
    return grads;
}

Matrix mlp_forward(const Mlp &model, const Matrix &x, std::vector<LayerCache> *caches) {
    if (caches) {
        caches->clear();
        caches->resize(model.layers.size());
    }
    Matrix a = x;
    for (std::size_t i = 0; i < model.layers.size(); ++i) {
        a = layer_forward(model.layers[i], a, caches ? &(*caches)[i] : nullptr);
    }
    return a;
}

std::vector<LayerGrads> mlp_backward(const Mlp &model, const std::vector<LayerCache> &caches,
                                     const Matrix &dy) {
    if (caches.size() != model.layers.size()) {
        throw std::invalid_argument("mlp_backward: cache/layer count mismatch");
    }
    std::vector<LayerGrads> grads(model.layers.size());
    Matrix upstream = dy;
    for (std::size_t idx = model.layers.size(); idx-- > 0;) {
        Matrix dx;
        grads[idx] = layer_backward(model.layers[idx], caches[idx], upstream,
                                    idx > 0 ? &dx : nullptr);
        if (idx > 0) upstream = std::move(dx);
    }
    return grads;
}

Matrix nearest_point_target(const TaskSpec &task) {
    Xoshiro256StarStar rng(derive_seed(task.data_seed, 0));
    Matrix a = gaussian_matrix(task.d_out, task.d_in, 1.0, rng);
    const double n = frobenius_norm(a);
    if (n == 0.0) throw NumericalError("degenerate nearest-point target");
    return (task.target_scale / n) * a;
}

Batch make_batch(const TaskSpec &task, long step) {
    Batch batch;
    switch (task.kind) {
    case TaskKind::frobenius_nearest_point:
        // Deterministic full-batch task; there is no minibatch to draw.
        return batch;
    case TaskKind::linear_regression: {
        Matrix w_gen = regression_generator(task);
        Xoshiro256StarStar rng(derive_seed(task.data_seed, 1000 + static_cast<std::uint64_t>(step)));
        batch.x = gaussian_matrix(task.batch, task.d_in, 1.0, rng);
        batch.targets = matmul(batch.x, transpose(w_gen));
        if (task.noise > 0.0) {
            for (double &v : batch.targets.data()) v += task.noise * rng.gaussian();
        }
        return batch;
    }
    case TaskKind::synthetic_classification: {
        Xoshiro256StarStar center_rng(derive_seed(task.data_seed, 2));
        // Per-entry variances 0.36 + 0.64 = 1 keep the input RMS at 1.
        Matrix centers = gaussian_matrix(task.clusters, task.d_in, 0.6, center_rng);
        Xoshiro256StarStar rng(derive_seed(task.data_seed, 2000 + static_cast<std::uint64_t>(step)));
        batch.x = Matrix(task.batch, task.d_in);
        batch.labels.resize(static_cast<std::size_t>(task.batch));
        for (int b = 0; b < task.batch; ++b) {
            const int k = static_cast<int>(rng.below(static_cast<std::uint64_t>(task.clusters)));
            batch.labels[static_cast<std::size_t>(b)] = k;
            for (int j = 0; j < task.d_in; ++j) {
                batch.x(b, j) = centers(k, j) + 0.8 * rng.gaussian();
            }
        }
        return batch;
    }
    }
    throw std::invalid_argument("unknown task kind");
}

Matrix regression_generator(const TaskSpec &task) {
    Xoshiro256StarStar rng(derive_seed(task.data_seed, 1));
    const double sigma = std::min(std::sqrt(static_cast<double>(task.d_out) / task.d_in), 1.0) /
                         std::sqrt(static_cast<double>(task.d_in));
    return gaussian_matrix(task.d_out, task.d_in, sigma, rng);
}

double nearest_point_loss(const Matrix &w, const Matrix &a, Matrix *grad) {
    Matrix diff = w - a;
    if (grad) {
        *grad = diff;
        *grad *= 2.0;
    }
    return dot(diff, diff);
}

LossGrad mse_loss(const Matrix &y, const Matrix &target) {
    if (!y.same_shape(target)) throw std::invalid_argument("mse_loss shape mismatch");
    LossGrad out;
    Matrix diff = y - target;
    const double n = static_cast<double>(diff.size());
    out.loss = dot(diff, diff) / n;
    out.dy = diff;
    out.dy *= 2.0 / n;
    return out;
}

LossGrad softmax_cross_entropy(const Matrix &logits, const std::vector<int> &labels) {
    if (static_cast<int>(labels.size()) != logits.rows()) {
        throw std::invalid_argument("softmax_cross_entropy: label count mismatch");
    }
    LossGrad out;
    out.dy = Matrix(logits.rows(), logits.cols());
    const double inv_b = 1.0 / logits.rows();
    double loss = 0.0;
    for (int i = 0; i < logits.rows(); ++i) {
        double mx = logits(i, 0);
        for (int j = 1; j < logits.cols(); ++j) mx = std::max(mx, logits(i, j));
        double z = 0.0;
        for (int j = 0; j < logits.cols(); ++j) z += std::exp(logits(i, j) - mx);
        const double log_z = std::log(z) + mx;
        const int label = labels[static_cast<std::size_t>(i)];
        loss += log_z - logits(i, label);
        for (int j = 0; j < logits.cols(); ++j) {
            const double p = std::exp(logits(i, j) - log_z);
            out.dy(i, j) = (p - (j == label ? 1.0 : 0.0)) * inv_b;
        }
    }
    out.loss = loss * inv_b;
    return out;
}

} // namespace macroptim
