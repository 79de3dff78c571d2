#include "kefs/autodiff.hpp"

#include <cmath>
#include <string>
#include <utility>

namespace kefs::ad {

namespace {

void check_same_shape(const char* op, const Matrix& a, const Matrix& b) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) {
        throw InputError(std::string(op) + ": shape mismatch " + std::to_string(a.rows()) + "x" +
                         std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                         std::to_string(b.cols()));
    }
}

double stable_sigmoid(double x) {
    if (x >= 0.0) {
        return 1.0 / (1.0 + std::exp(-x));
    }
    const double e = std::exp(x);
    return e / (1.0 + e);
}

double stable_log_sigmoid(double x) {
    // log(1/(1+e^-x)) = min(x,0) - log1p(e^-|x|)
    return std::min(x, 0.0) - std::log1p(std::exp(-std::abs(x)));
}

}  // namespace

Id Tape::leaf(Matrix value, bool requires_grad) {
    Node node;
    node.value = std::move(value);
    node.requires_grad = requires_grad;
    nodes_.push_back(std::move(node));
    return static_cast<Id>(nodes_.size() - 1);
}

Id Tape::emit(Matrix value, bool requires_grad,
              std::function<void(Tape&, const Matrix&)> backprop) {
    Node node;
    node.value = std::move(value);
    node.requires_grad = requires_grad;
    if (requires_grad) {
        node.backprop = std::move(backprop);
    }
    nodes_.push_back(std::move(node));
    return static_cast<Id>(nodes_.size() - 1);
}

const Matrix& Tape::grad(Id id) const {
    const Node& node = nodes_[static_cast<std::size_t>(id)];
    if (node.grad.size() == 0) {
        // Untouched by backward: expose a zero gradient of matching shape.
        Node& writable = const_cast<Node&>(node);
        writable.grad = Matrix::Zero(node.value.rows(), node.value.cols());
    }
    return node.grad;
}

void Tape::accumulate(Id id, const Matrix& delta) {
    Node& node = nodes_[static_cast<std::size_t>(id)];
    if (!node.requires_grad) {
        return;
    }
    if (node.grad.size() == 0) {
        node.grad = delta;
    } else {
        node.grad += delta;
    }
}

void Tape::backward(Id loss) {
    const Node& top = nodes_[static_cast<std::size_t>(loss)];
    if (top.value.rows() != 1 || top.value.cols() != 1) {
        throw InputError("backward: expected 1x1 loss, got " + std::to_string(top.value.rows()) +
                         "x" + std::to_string(top.value.cols()));
    }
    accumulate(loss, Matrix::Ones(1, 1));
    for (Id i = loss; i >= 0; --i) {
        Node& node = nodes_[static_cast<std::size_t>(i)];
        if (node.grad.size() == 0 || !node.backprop) {
            continue;
        }
        node.backprop(*this, node.grad);
    }
}

// ---- arithmetic -----------------------------------------------------------

Id add(Tape& t, Id a, Id b) {
    check_same_shape("add", t.value(a), t.value(b));
    const bool rg = t.requires_grad(a) || t.requires_grad(b);
    return t.emit(t.value(a) + t.value(b), rg, [a, b](Tape& tp, const Matrix& g) {
        tp.accumulate(a, g);
        tp.accumulate(b, g);
    });
}

Id sub(Tape& t, Id a, Id b) {
    check_same_shape("sub", t.value(a), t.value(b));
    const bool rg = t.requires_grad(a) || t.requires_grad(b);
    return t.emit(t.value(a) - t.value(b), rg, [a, b](Tape& tp, const Matrix& g) {
        tp.accumulate(a, g);
        tp.accumulate(b, -g);
    });
}

Id neg(Tape& t, Id a) {
    return t.emit(-t.value(a), t.requires_grad(a),
                  [a](Tape& tp, const Matrix& g) { tp.accumulate(a, -g); });
}

Id scale(Tape& t, Id a, double c) {
    return t.emit(t.value(a) * c, t.requires_grad(a),
                  [a, c](Tape& tp, const Matrix& g) { tp.accumulate(a, g * c); });
}

Id add_const(Tape& t, Id a, double c) {
    return t.emit(t.value(a).array() + c, t.requires_grad(a),
                  [a](Tape& tp, const Matrix& g) { tp.accumulate(a, g); });
}

Id matmul(Tape& t, Id a, Id b) {
    const Matrix& va = t.value(a);
    const Matrix& vb = t.value(b);
    if (va.cols() != vb.rows()) {
        throw InputError("matmul: inner dimensions " + std::to_string(va.cols()) + " vs " +
                         std::to_string(vb.rows()));
    }
    const bool rg = t.requires_grad(a) || t.requires_grad(b);
    return t.emit(va * vb, rg, [a, b](Tape& tp, const Matrix& g) {
        tp.accumulate(a, g * tp.value(b).transpose());
        tp.accumulate(b, tp.value(a).transpose() * g);
    });
}

Id transpose(Tape& t, Id a) {
    return t.emit(t.value(a).transpose(), t.requires_grad(a),
                  [a](Tape& tp, const Matrix& g) { tp.accumulate(a, g.transpose()); });
}

Id hadamard(Tape& t, Id a, Id b) {
    check_same_shape("hadamard", t.value(a), t.value(b));
    const bool rg = t.requires_grad(a) || t.requires_grad(b);
    return t.emit(t.value(a).cwiseProduct(t.value(b)), rg, [a, b](Tape& tp, const Matrix& g) {
        tp.accumulate(a, g.cwiseProduct(tp.value(b)));
        tp.accumulate(b, g.cwiseProduct(tp.value(a)));
    });
}

Id square(Tape& t, Id a) {
    return t.emit(t.value(a).array().square(), t.requires_grad(a),
                  [a](Tape& tp, const Matrix& g) {
                      tp.accumulate(a, 2.0 * g.cwiseProduct(tp.value(a)));
                  });
}

Id sqrt_guard(Tape& t, Id a) {
    Matrix y = t.value(a).array().max(0.0).sqrt();
    return t.emit(std::move(y), t.requires_grad(a), [a](Tape& tp, const Matrix& g) {
        const Matrix& x = tp.value(a);
        Matrix dx(x.rows(), x.cols());
        for (Eigen::Index i = 0; i < x.size(); ++i) {
            const double v = x(i);
            dx(i) = v > 0.0 ? g(i) * 0.5 / std::sqrt(v) : 0.0;
        }
        tp.accumulate(a, dx);
    });
}

Id add_row_broadcast(Tape& t, Id a, Id bias) {
    const Matrix& va = t.value(a);
    const Matrix& vb = t.value(bias);
    if (vb.rows() != 1 || vb.cols() != va.cols()) {
        throw InputError("add_row_broadcast: bias " + std::to_string(vb.rows()) + "x" +
                         std::to_string(vb.cols()) + " against " + std::to_string(va.rows()) +
                         "x" + std::to_string(va.cols()));
    }
    const bool rg = t.requires_grad(a) || t.requires_grad(bias);
    Matrix out = va.rowwise() + vb.row(0);
    return t.emit(std::move(out), rg, [a, bias](Tape& tp, const Matrix& g) {
        tp.accumulate(a, g);
        tp.accumulate(bias, g.colwise().sum());
    });
}

Id repeat_row(Tape& t, Id a, Eigen::Index times) {
    const Matrix& va = t.value(a);
    if (va.rows() != 1) {
        throw InputError("repeat_row: expected 1 row, got " + std::to_string(va.rows()));
    }
    Matrix out = va.replicate(times, 1);
    return t.emit(std::move(out), t.requires_grad(a), [a](Tape& tp, const Matrix& g) {
        tp.accumulate(a, g.colwise().sum());
    });
}

// ---- nonlinearities -------------------------------------------------------

Id leaky_relu(Tape& t, Id a, double slope) {
    const Matrix& x = t.value(a);
    Matrix y = x.array().max(x.array() * slope);
    return t.emit(std::move(y), t.requires_grad(a), [a, slope](Tape& tp, const Matrix& g) {
        const Matrix& x = tp.value(a);
        Matrix dx = (x.array() > 0.0).select(g, g * slope);
        tp.accumulate(a, dx);
    });
}

Id leaky_relu_mask(Tape& t, Id a, double slope) {
    const Matrix& x = t.value(a);
    Matrix mask = (x.array() > 0.0).select(Matrix::Ones(x.rows(), x.cols()),
                                           Matrix::Constant(x.rows(), x.cols(), slope));
    // The derivative is a step function, flat almost everywhere, so this node
    // deliberately propagates nothing.
    return t.constant(std::move(mask));
}

Id sigmoid(Tape& t, Id a) {
    Matrix y = t.value(a).unaryExpr([](double v) { return stable_sigmoid(v); });
    return t.emit(std::move(y), t.requires_grad(a), [a](Tape& tp, const Matrix& g) {
        Matrix y = tp.value(a).unaryExpr([](double v) { return stable_sigmoid(v); });
        tp.accumulate(a, g.cwiseProduct(y.cwiseProduct(Matrix::Ones(y.rows(), y.cols()) - y)));
    });
}

Id log_sigmoid(Tape& t, Id a) {
    Matrix y = t.value(a).unaryExpr([](double v) { return stable_log_sigmoid(v); });
    return t.emit(std::move(y), t.requires_grad(a), [a](Tape& tp, const Matrix& g) {
        // d/dx log sigmoid(x) = sigmoid(-x)
        Matrix d = tp.value(a).unaryExpr([](double v) { return stable_sigmoid(-v); });
        tp.accumulate(a, g.cwiseProduct(d));
    });
}

Id softmax_rows(Tape& t, Id a) {
    const Matrix& x = t.value(a);
    Matrix y(x.rows(), x.cols());
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
        const double m = x.row(i).maxCoeff();
        Eigen::ArrayXd e = (x.row(i).array() - m).exp();
        y.row(i) = e / e.sum();
    }
    return t.emit(std::move(y), t.requires_grad(a), [a](Tape& tp, const Matrix& g) {
        const Matrix& x = tp.value(a);
        Matrix dx(x.rows(), x.cols());
        for (Eigen::Index i = 0; i < x.rows(); ++i) {
            const double m = x.row(i).maxCoeff();
            Eigen::ArrayXd e = (x.row(i).array() - m).exp();
            Eigen::ArrayXd yi = e / e.sum();
            const double dot = (g.row(i).array() * yi.transpose()).sum();
            dx.row(i) = (yi.transpose() * (g.row(i).array() - dot)).matrix();
        }
        tp.accumulate(a, dx);
    });
}

Id layer_norm_rows(Tape& t, Id a, double eps) {
    const Matrix& x = t.value(a);
    const double e = static_cast<double>(x.cols());
    Matrix y(x.rows(), x.cols());
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
        const double mu = x.row(i).mean();
        const double var = (x.row(i).array() - mu).square().sum() / e;
        y.row(i) = (x.row(i).array() - mu) / std::sqrt(var + eps);
    }
    return t.emit(std::move(y), t.requires_grad(a), [a, eps](Tape& tp, const Matrix& g) {
        const Matrix& x = tp.value(a);
        const double e = static_cast<double>(x.cols());
        Matrix dx(x.rows(), x.cols());
        for (Eigen::Index i = 0; i < x.rows(); ++i) {
            const double mu = x.row(i).mean();
            const double var = (x.row(i).array() - mu).square().sum() / e;
            const double r = 1.0 / std::sqrt(var + eps);
            Eigen::ArrayXd xhat = (x.row(i).array() - mu) * r;
            const double gsum = g.row(i).sum();
            const double gdot = (g.row(i).array() * xhat.transpose()).sum();
            dx.row(i) =
                (r * (g.row(i).array() - gsum / e - xhat.transpose() * gdot / e)).matrix();
        }
        tp.accumulate(a, dx);
    });
}

Id adain(Tape& t, Id content, Id style, double eps) {
    const Matrix& n = t.value(content);
    const Matrix& s = t.value(style);
    if (n.rows() != s.rows()) {
        throw InputError("adain: row counts " + std::to_string(n.rows()) + " vs " +
                         std::to_string(s.rows()));
    }
    const double en = static_cast<double>(n.cols());
    const double es = static_cast<double>(s.cols());
    Matrix y(n.rows(), n.cols());
    for (Eigen::Index i = 0; i < n.rows(); ++i) {
        const double mu_n = n.row(i).mean();
        const double sd_n = std::sqrt((n.row(i).array() - mu_n).square().sum() / en);
        const double mu_s = s.row(i).mean();
        const double sd_s = std::sqrt((s.row(i).array() - mu_s).square().sum() / es);
        const double denom = std::max(sd_n, eps);
        y.row(i) = sd_s * (n.row(i).array() - mu_n) / denom + mu_s;
    }
    const bool rg = t.requires_grad(content) || t.requires_grad(style);
    return t.emit(std::move(y), rg, [content, style, eps](Tape& tp, const Matrix& g) {
        const Matrix& n = tp.value(content);
        const Matrix& s = tp.value(style);
        const double en = static_cast<double>(n.cols());
        const double es = static_cast<double>(s.cols());
        Matrix dn(n.rows(), n.cols());
        Matrix ds(s.rows(), s.cols());
        for (Eigen::Index i = 0; i < n.rows(); ++i) {
            const double mu_n = n.row(i).mean();
            Eigen::ArrayXd cn = n.row(i).array() - mu_n;
            const double sd_n = std::sqrt(cn.square().sum() / en);
            const double mu_s = s.row(i).mean();
            Eigen::ArrayXd cs = s.row(i).array() - mu_s;
            const double sd_s = std::sqrt(cs.square().sum() / es);
            const double denom = std::max(sd_n, eps);
            const double gsum = g.row(i).sum();
            const double gdot = (g.row(i).transpose().array() * cn).sum();
            // Content: scale-shift of the whitened row plus the std's own term.
            Eigen::ArrayXd d = (sd_s / denom) * (g.row(i).transpose().array() - gsum / en);
            if (sd_n >= eps) {
                d -= (sd_s / (denom * denom)) * gdot * cn / (en * sd_n);
            }
            dn.row(i) = d.matrix().transpose();
            // Style: mean enters additively, std rescales the whitened content.
            Eigen::ArrayXd dsr = Eigen::ArrayXd::Constant(s.cols(), gsum / es);
            if (sd_s > 0.0) {
                dsr += cs * (gdot / (es * sd_s * denom));
            }
            ds.row(i) = dsr.matrix().transpose();
        }
        tp.accumulate(content, dn);
        tp.accumulate(style, ds);
    });
}

// ---- shape ----------------------------------------------------------------

Id concat_cols(Tape& t, Id a, Id b) {
    const Matrix& va = t.value(a);
    const Matrix& vb = t.value(b);
    if (va.rows() != vb.rows()) {
        throw InputError("concat_cols: row counts " + std::to_string(va.rows()) + " vs " +
                         std::to_string(vb.rows()));
    }
    Matrix out(va.rows(), va.cols() + vb.cols());
    out << va, vb;
    const bool rg = t.requires_grad(a) || t.requires_grad(b);
    return t.emit(std::move(out), rg, [a, b](Tape& tp, const Matrix& g) {
        const Eigen::Index ca = tp.value(a).cols();
        const Eigen::Index cb = tp.value(b).cols();
        tp.accumulate(a, g.leftCols(ca));
        tp.accumulate(b, g.rightCols(cb));
    });
}

Id slice_cols(Tape& t, Id a, Eigen::Index start, Eigen::Index len) {
    const Matrix& va = t.value(a);
    if (start < 0 || len < 0 || start + len > va.cols()) {
        throw InputError("slice_cols: range [" + std::to_string(start) + ", " +
                         std::to_string(start + len) + ") outside " + std::to_string(va.cols()) +
                         " columns");
    }
    return t.emit(va.middleCols(start, len), t.requires_grad(a),
                  [a, start, len](Tape& tp, const Matrix& g) {
                      const Matrix& va = tp.value(a);
                      Matrix dx = Matrix::Zero(va.rows(), va.cols());
                      dx.middleCols(start, len) = g;
                      tp.accumulate(a, dx);
                  });
}

Id gather_rows(Tape& t, Id a, const std::vector<Eigen::Index>& rows) {
    const Matrix& va = t.value(a);
    Matrix out(static_cast<Eigen::Index>(rows.size()), va.cols());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (rows[i] < 0 || rows[i] >= va.rows()) {
            throw InputError("gather_rows: index " + std::to_string(rows[i]) + " outside " +
                             std::to_string(va.rows()) + " rows");
        }
        out.row(static_cast<Eigen::Index>(i)) = va.row(rows[i]);
    }
    return t.emit(std::move(out), t.requires_grad(a), [a, rows](Tape& tp, const Matrix& g) {
        const Matrix& va = tp.value(a);
        Matrix dx = Matrix::Zero(va.rows(), va.cols());
        for (std::size_t i = 0; i < rows.size(); ++i) {
            dx.row(rows[i]) += g.row(static_cast<Eigen::Index>(i));
        }
        tp.accumulate(a, dx);
    });
}

// ---- reductions -----------------------------------------------------------

Id row_sum(Tape& t, Id a) {
    Matrix out = t.value(a).rowwise().sum();
    return t.emit(std::move(out), t.requires_grad(a), [a](Tape& tp, const Matrix& g) {
        const Matrix& va = tp.value(a);
        tp.accumulate(a, g * Matrix::Ones(1, va.cols()));
    });
}

Id sum_all(Tape& t, Id a) {
    Matrix out(1, 1);
    out(0, 0) = t.value(a).sum();
    return t.emit(std::move(out), t.requires_grad(a), [a](Tape& tp, const Matrix& g) {
        const Matrix& va = tp.value(a);
        tp.accumulate(a, Matrix::Constant(va.rows(), va.cols(), g(0, 0)));
    });
}

Id mean_all(Tape& t, Id a) {
    const Matrix& va = t.value(a);
    Matrix out(1, 1);
    out(0, 0) = va.mean();
    return t.emit(std::move(out), t.requires_grad(a), [a](Tape& tp, const Matrix& g) {
        const Matrix& va = tp.value(a);
        const double c = g(0, 0) / static_cast<double>(va.size());
        tp.accumulate(a, Matrix::Constant(va.rows(), va.cols(), c));
    });
}

}  // namespace kefs::ad
