#include "archsearch/surrogate.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "archsearch/kernels.hpp"
#include "archsearch/util.hpp"

namespace archsearch {

// ---------------------------------------------------------------------------
// DenseNet

DenseNet::DenseNet(std::vector<int> dims, OutputAct out, HiddenAct hidden)
    : dims_(std::move(dims)), out_(out), hidden_(hidden) {
    if (dims_.size() < 2) throw ConfigError("DenseNet needs >= 2 layer dims");
    for (int d : dims_) {
        if (d < 1) throw ConfigError("DenseNet layer dims must be positive");
    }
    const std::size_t layers = dims_.size() - 1;
    W_.resize(layers);
    B_.resize(layers);
    mW_.resize(layers);
    vW_.resize(layers);
    mB_.resize(layers);
    vB_.resize(layers);
    for (std::size_t l = 0; l < layers; ++l) {
        const std::size_t wn =
            static_cast<std::size_t>(dims_[l]) * dims_[l + 1];
        W_[l].assign(wn, 0.0);
        mW_[l].assign(wn, 0.0);
        vW_[l].assign(wn, 0.0);
        B_[l].assign(dims_[l + 1], 0.0);
        mB_[l].assign(dims_[l + 1], 0.0);
        vB_[l].assign(dims_[l + 1], 0.0);
    }
}

void DenseNet::init(Rng& rng) {
    for (auto& w : W_) {
        for (auto& v : w) v = rng.next_in(-0.1, 0.1);
    }
    for (auto& b : B_) std::fill(b.begin(), b.end(), 0.0);
    for (auto& m : mW_) std::fill(m.begin(), m.end(), 0.0);
    for (auto& m : vW_) std::fill(m.begin(), m.end(), 0.0);
    for (auto& m : mB_) std::fill(m.begin(), m.end(), 0.0);
    for (auto& m : vB_) std::fill(m.begin(), m.end(), 0.0);
    adam_t_ = 0;
}

std::size_t DenseNet::num_params() const {
    std::size_t n = 0;
    for (std::size_t l = 0; l + 1 < dims_.size(); ++l) {
        n += static_cast<std::size_t>(dims_[l]) * dims_[l + 1] + dims_[l + 1];
    }
    return n;
}

struct DenseNet::ForwardTrace {
    // a[0] is the input; z[l] / a[l+1] belong to layer l.
    std::vector<std::vector<double>> z;
    std::vector<std::vector<double>> a;
    int batch = 0;
};

void DenseNet::forward_trace(const std::vector<double>& X, int batch,
                             ForwardTrace& tr) const {
    if (static_cast<int>(X.size()) != batch * dims_.front())
        throw DimensionMismatch("input size does not match batch x input_dim");
    const std::size_t layers = dims_.size() - 1;
    tr.batch = batch;
    tr.z.assign(layers, {});
    tr.a.assign(layers + 1, {});
    tr.a[0] = X;
    for (std::size_t l = 0; l < layers; ++l) {
        tr.z[l].assign(static_cast<std::size_t>(batch) * dims_[l + 1], 0.0);
        kernels::matmul_bias(batch, dims_[l], dims_[l + 1], tr.a[l].data(),
                             W_[l].data(), B_[l].data(), tr.z[l].data());
        tr.a[l + 1] = tr.z[l];
        const bool last = l + 1 == layers;
        if (!last) {
            if (hidden_ == HiddenAct::relu)
                kernels::relu(tr.a[l + 1].size(), tr.a[l + 1].data());
        } else {
            switch (out_) {
                case OutputAct::sigmoid:
                    kernels::sigmoid(tr.a[l + 1].size(), tr.a[l + 1].data());
                    break;
                case OutputAct::softmax:
                    kernels::softmax_rows(batch, dims_.back(),
                                          tr.a[l + 1].data());
                    break;
                case OutputAct::identity:
                    break;
            }
        }
    }
}

std::vector<double> DenseNet::forward(const std::vector<double>& X,
                                      int batch) const {
    ForwardTrace tr;
    forward_trace(X, batch, tr);
    return tr.a.back();
}

double DenseNet::predict_scalar(const std::vector<double>& x) const {
    if (output_dim() != 1)
        throw DimensionMismatch("predict_scalar needs a scalar output");
    return forward(x, 1)[0];
}

double DenseNet::loss(const std::vector<double>& X,
                      const std::vector<double>& Y, int batch) const {
    const auto out = forward(X, batch);
    if (Y.size() != out.size())
        throw DimensionMismatch("target size does not match output size");
    double total = 0.0;
    if (out_ == OutputAct::softmax) {
        for (std::size_t i = 0; i < out.size(); ++i) {
            if (Y[i] != 0.0) total -= Y[i] * std::log(std::max(out[i], 1e-300));
        }
    } else {
        for (std::size_t i = 0; i < out.size(); ++i) {
            const double d = out[i] - Y[i];
            total += d * d;
        }
    }
    return total / batch;
}

void DenseNet::backward(const ForwardTrace& tr, const std::vector<double>& Y,
                        int batch, std::vector<std::vector<double>>& dW,
                        std::vector<std::vector<double>>& dB) const {
    const std::size_t layers = dims_.size() - 1;
    const auto& out = tr.a.back();
    if (Y.size() != out.size())
        throw DimensionMismatch("target size does not match output size");

    // Gradient w.r.t. the last pre-activation z.
    std::vector<double> dz(out.size());
    const double inv_batch = 1.0 / batch;
    switch (out_) {
        case OutputAct::sigmoid:
            for (std::size_t i = 0; i < out.size(); ++i) {
                dz[i] = 2.0 * (out[i] - Y[i]) * out[i] * (1.0 - out[i]) *
                        inv_batch;
            }
            break;
        case OutputAct::identity:
            for (std::size_t i = 0; i < out.size(); ++i) {
                dz[i] = 2.0 * (out[i] - Y[i]) * inv_batch;
            }
            break;
        case OutputAct::softmax:
            for (std::size_t i = 0; i < out.size(); ++i) {
                dz[i] = (out[i] - Y[i]) * inv_batch;
            }
            break;
    }

    dW.assign(layers, {});
    dB.assign(layers, {});
    for (std::size_t l = layers; l-- > 0;) {
        dW[l].assign(W_[l].size(), 0.0);
        dB[l].assign(B_[l].size(), 0.0);
        kernels::grad_weights(batch, dims_[l], dims_[l + 1], tr.a[l].data(),
                              dz.data(), dW[l].data());
        kernels::grad_bias(batch, dims_[l + 1], dz.data(), dB[l].data());
        if (l == 0) break;
        std::vector<double> dx(static_cast<std::size_t>(batch) * dims_[l]);
        kernels::grad_input(batch, dims_[l], dims_[l + 1], dz.data(),
                            W_[l].data(), dx.data());
        if (hidden_ == HiddenAct::relu) {
            kernels::relu_backward(dx.size(), tr.z[l - 1].data(), dx.data());
        }
        dz = std::move(dx);
    }
}

void DenseNet::loss_gradients(const std::vector<double>& X,
                              const std::vector<double>& Y, int batch,
                              std::vector<std::vector<double>>& dW,
                              std::vector<std::vector<double>>& dB) const {
    ForwardTrace tr;
    forward_trace(X, batch, tr);
    backward(tr, Y, batch, dW, dB);
}

double DenseNet::train_batch(const std::vector<double>& X,
                             const std::vector<double>& Y, int batch,
                             const TrainConfig& cfg) {
    ForwardTrace tr;
    forward_trace(X, batch, tr);
    const auto& out = tr.a.back();
    double batch_loss = 0.0;
    if (out_ == OutputAct::softmax) {
        for (std::size_t i = 0; i < out.size(); ++i) {
            if (Y[i] != 0.0)
                batch_loss -= Y[i] * std::log(std::max(out[i], 1e-300));
        }
    } else {
        for (std::size_t i = 0; i < out.size(); ++i) {
            const double d = out[i] - Y[i];
            batch_loss += d * d;
        }
    }
    batch_loss /= batch;

    std::vector<std::vector<double>> dW, dB;
    backward(tr, Y, batch, dW, dB);
    ++adam_t_;
    for (std::size_t l = 0; l < W_.size(); ++l) {
        kernels::adam_step(W_[l].size(), W_[l].data(), dW[l].data(),
                           mW_[l].data(), vW_[l].data(), adam_t_,
                           cfg.learning_rate, cfg.beta1, cfg.beta2,
                           cfg.adam_epsilon);
        kernels::adam_step(B_[l].size(), B_[l].data(), dB[l].data(),
                           mB_[l].data(), vB_[l].data(), adam_t_,
                           cfg.learning_rate, cfg.beta1, cfg.beta2,
                           cfg.adam_epsilon);
    }
    return batch_loss;
}

std::vector<double> DenseNet::train(const std::vector<double>& X,
                                    const std::vector<double>& Y, int n,
                                    const TrainConfig& cfg, Rng& rng) {
    if (n <= 0) throw EmptyDataset("training set is empty");
    if (cfg.epochs < 1 || cfg.batch_size < 1 || cfg.learning_rate < 0.0)
        throw ConfigError("bad training hyperparameters");
    const int in = dims_.front();
    const int out = dims_.back();
    if (static_cast<int>(X.size()) != n * in ||
        static_cast<int>(Y.size()) != n * out)
        throw DimensionMismatch("dataset arrays do not match n x dims");

    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::vector<double> history;
    history.reserve(cfg.epochs);
    std::vector<double> xb, yb;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        for (int i = n - 1; i > 0; --i) {
            const auto j = static_cast<int>(rng.next_below(i + 1));
            std::swap(order[i], order[j]);
        }
        double epoch_loss = 0.0;
        for (int start = 0; start < n; start += cfg.batch_size) {
            const int bn = std::min(cfg.batch_size, n - start);
            xb.assign(static_cast<std::size_t>(bn) * in, 0.0);
            yb.assign(static_cast<std::size_t>(bn) * out, 0.0);
            for (int r = 0; r < bn; ++r) {
                const int src = order[start + r];
                std::copy_n(X.begin() + static_cast<std::size_t>(src) * in, in,
                            xb.begin() + static_cast<std::size_t>(r) * in);
                std::copy_n(Y.begin() + static_cast<std::size_t>(src) * out,
                            out,
                            yb.begin() + static_cast<std::size_t>(r) * out);
            }
            epoch_loss += train_batch(xb, yb, bn, cfg) * bn;
        }
        history.push_back(epoch_loss / n);
    }
    return history;
}

namespace {

const char* act_name(OutputAct a) {
    switch (a) {
        case OutputAct::sigmoid: return "sigmoid";
        case OutputAct::softmax: return "softmax";
        case OutputAct::identity: return "identity";
    }
    return "?";
}

const char* act_name(HiddenAct a) {
    return a == HiddenAct::relu ? "relu" : "identity";
}

void write_array(std::ostringstream& os, const char* tag, std::size_t layer,
                 const std::vector<double>& v) {
    os << tag << layer << ' ' << v.size();
    for (double x : v) os << ' ' << format_double(x);
    os << '\n';
}

std::vector<double> read_array(std::istringstream& is, const std::string& want,
                               std::size_t expect) {
    std::string tag;
    std::size_t n = 0;
    if (!(is >> tag >> n) || tag != want || n != expect)
        throw ConfigError("checkpoint: bad array header, wanted " + want);
    std::vector<double> v(n);
    for (auto& x : v) {
        if (!(is >> x)) throw ConfigError("checkpoint: truncated array " + want);
    }
    return v;
}

}  // namespace

void DenseNet::save_checkpoint(const std::string& path) const {
    std::ostringstream os;
    os << "archsearch-densenet 1\n";
    os << "dims " << dims_.size();
    for (int d : dims_) os << ' ' << d;
    os << '\n';
    os << "hidden " << act_name(hidden_) << '\n';
    os << "output " << act_name(out_) << '\n';
    os << "adam_t " << adam_t_ << '\n';
    for (std::size_t l = 0; l < W_.size(); ++l) {
        write_array(os, "W", l, W_[l]);
        write_array(os, "B", l, B_[l]);
        write_array(os, "mW", l, mW_[l]);
        write_array(os, "vW", l, vW_[l]);
        write_array(os, "mB", l, mB_[l]);
        write_array(os, "vB", l, vB_[l]);
    }
    write_file_atomic(path, os.str());
}

DenseNet DenseNet::load_checkpoint(const std::string& path) {
    std::istringstream is(read_file(path));
    std::string magic;
    int version = 0;
    if (!(is >> magic >> version) || magic != "archsearch-densenet")
        throw ConfigError("checkpoint: not a densenet checkpoint");
    if (version != 1) throw ConfigError("checkpoint: unsupported version");
    std::string tag;
    std::size_t ndims = 0;
    if (!(is >> tag >> ndims) || tag != "dims" || ndims < 2)
        throw ConfigError("checkpoint: bad dims header");
    std::vector<int> dims(ndims);
    for (auto& d : dims) {
        if (!(is >> d)) throw ConfigError("checkpoint: truncated dims");
    }
    std::string hname, oname;
    if (!(is >> tag >> hname) || tag != "hidden")
        throw ConfigError("checkpoint: bad hidden line");
    if (!(is >> tag >> oname) || tag != "output")
        throw ConfigError("checkpoint: bad output line");
    long t = 0;
    if (!(is >> tag >> t) || tag != "adam_t")
        throw ConfigError("checkpoint: bad adam_t line");

    const HiddenAct h =
        hname == "relu" ? HiddenAct::relu : HiddenAct::identity;
    OutputAct o = OutputAct::sigmoid;
    if (oname == "softmax") o = OutputAct::softmax;
    else if (oname == "identity") o = OutputAct::identity;
    else if (oname != "sigmoid")
        throw ConfigError("checkpoint: unknown output activation");

    DenseNet net(dims, o, h);
    net.adam_t_ = t;
    for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
        const auto wn = static_cast<std::size_t>(dims[l]) * dims[l + 1];
        const auto bn = static_cast<std::size_t>(dims[l + 1]);
        net.W_[l] = read_array(is, "W" + std::to_string(l), wn);
        net.B_[l] = read_array(is, "B" + std::to_string(l), bn);
        net.mW_[l] = read_array(is, "mW" + std::to_string(l), wn);
        net.vW_[l] = read_array(is, "vW" + std::to_string(l), wn);
        net.mB_[l] = read_array(is, "mB" + std::to_string(l), bn);
        net.vB_[l] = read_array(is, "vB" + std::to_string(l), bn);
    }
    return net;
}

// ---------------------------------------------------------------------------
// gradient_check / correlations

double gradient_check(DenseNet& net, const std::vector<double>& X,
                      const std::vector<double>& Y, int batch,
                      double epsilon) {
    std::vector<std::vector<double>> dW, dB;
    net.loss_gradients(X, Y, batch, dW, dB);
    double worst = 0.0;
    auto probe = [&](std::vector<double>& params,
                     const std::vector<double>& grads) {
        for (std::size_t i = 0; i < params.size(); ++i) {
            const double orig = params[i];
            params[i] = orig + epsilon;
            const double lp = net.loss(X, Y, batch);
            params[i] = orig - epsilon;
            const double lm = net.loss(X, Y, batch);
            params[i] = orig;
            const double fd = (lp - lm) / (2.0 * epsilon);
            const double denom = std::max(1e-8, std::abs(fd) + std::abs(grads[i]));
            worst = std::max(worst, std::abs(fd - grads[i]) / denom);
        }
    };
    for (std::size_t l = 0; l < net.weights().size(); ++l) {
        probe(net.weights()[l], dW[l]);
        probe(net.biases()[l], dB[l]);
    }
    return worst;
}

double pearson(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size())
        throw LengthMismatch("correlation inputs differ in length");
    const std::size_t n = a.size();
    if (n < 2) throw DegenerateVariance("correlation needs >= 2 points");
    double ma = 0.0, mb = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        ma += a[i];
        mb += b[i];
    }
    ma /= static_cast<double>(n);
    mb /= static_cast<double>(n);
    double sab = 0.0, saa = 0.0, sbb = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double da = a[i] - ma;
        const double db = b[i] - mb;
        sab += da * db;
        saa += da * da;
        sbb += db * db;
    }
    if (saa == 0.0 || sbb == 0.0)
        throw DegenerateVariance("zero variance in correlation input");
    return sab / std::sqrt(saa * sbb);
}

namespace {
std::vector<double> ranks_of(const std::vector<double>& v) {
    const std::size_t n = v.size();
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::sort(idx.begin(), idx.end(),
              [&](std::size_t x, std::size_t y) { return v[x] < v[y]; });
    std::vector<double> rank(n, 0.0);
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j + 1 < n && v[idx[j + 1]] == v[idx[i]]) ++j;
        const double avg = (static_cast<double>(i) + static_cast<double>(j)) /
                               2.0 + 1.0;  // 1-based average rank of the tie run
        for (std::size_t k = i; k <= j; ++k) rank[idx[k]] = avg;
        i = j + 1;
    }
    return rank;
}
}  // namespace

double spearman(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size())
        throw LengthMismatch("correlation inputs differ in length");
    return pearson(ranks_of(a), ranks_of(b));
}

// ---------------------------------------------------------------------------
// MultiStageModel

namespace {
std::vector<int> chain_dims(int input_dim, const std::vector<int>& hidden,
                            int out) {
    std::vector<int> dims;
    dims.push_back(input_dim);
    dims.insert(dims.end(), hidden.begin(), hidden.end());
    dims.push_back(out);
    return dims;
}
}  // namespace

MultiStageModel::MultiStageModel(int input_dim,
                                 const std::vector<int>& hidden_dims,
                                 int bins)
    : router_(chain_dims(input_dim, hidden_dims, bins), OutputAct::softmax) {
    if (bins < 2) throw ConfigError("multi-stage model needs >= 2 bins");
    experts_.reserve(bins);
    for (int b = 0; b < bins; ++b) {
        experts_.emplace_back(chain_dims(input_dim, hidden_dims, 1),
                              OutputAct::sigmoid);
    }
}

void MultiStageModel::init(Rng& rng) {
    for (auto& e : experts_) e.init(rng);
    router_.init(rng);
}

int MultiStageModel::bin_of(double y) const {
    const int b = static_cast<int>(std::floor(y * bins()));
    return std::clamp(b, 0, bins() - 1);
}

int MultiStageModel::route(const std::vector<double>& x) const {
    const auto scores = router_.forward(x, 1);
    int best = 0;
    for (int b = 1; b < bins(); ++b) {
        if (scores[b] > scores[best]) best = b;
    }
    return best;
}

double MultiStageModel::predict(const std::vector<double>& x) const {
    return experts_[route(x)].predict_scalar(x);
}

void MultiStageModel::train(const std::vector<double>& X,
                            const std::vector<double>& y, int n,
                            const TrainConfig& cfg, Rng& rng) {
    if (n <= 0) throw EmptyDataset("training set is empty");
    const int in = router_.input_dim();
    for (int b = 0; b < bins(); ++b) {
        std::vector<double> xb, yb;
        int nb = 0;
        for (int i = 0; i < n; ++i) {
            if (bin_of(y[i]) != b) continue;
            xb.insert(xb.end(), X.begin() + static_cast<std::size_t>(i) * in,
                      X.begin() + static_cast<std::size_t>(i + 1) * in);
            yb.push_back(y[i]);
            ++nb;
        }
        if (nb > 0) experts_[b].train(xb, yb, nb, cfg, rng);
    }
    std::vector<double> onehot(static_cast<std::size_t>(n) * bins(), 0.0);
    for (int i = 0; i < n; ++i) {
        onehot[static_cast<std::size_t>(i) * bins() + bin_of(y[i])] = 1.0;
    }
    router_.train(X, onehot, n, cfg, rng);
}

// ---------------------------------------------------------------------------
// Surrogate facade

Surrogate::Surrogate(const SpaceLimits& limits, const SurrogateConfig& cfg,
                     Rng& rng)
    : limits_(limits),
      cfg_(cfg),
      scale_div_(max_digit_value(limits)),
      net_(chain_dims(static_cast<int>(encoded_length(limits)),
                      cfg.hidden_dims, 1),
           OutputAct::sigmoid),
      multi_(static_cast<int>(encoded_length(limits)), cfg.hidden_dims,
             cfg.bins) {
    if (cfg_.multi_stage)
        multi_.init(rng);
    else
        net_.init(rng);
}

std::vector<double> Surrogate::scale(const EncodedArch& e) const {
    if (e.digits.size() != encoded_length(limits_))
        throw DimensionMismatch("encoding length does not match the domain");
    std::vector<double> x(e.digits.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        x[i] = e.digits[i] / scale_div_;
    }
    return x;
}

double Surrogate::predict(const EncodedArch& e) const {
    const auto x = scale(e);
    return cfg_.multi_stage ? multi_.predict(x) : net_.predict_scalar(x);
}

void Surrogate::add_sample(const EncodedArch& e, double accuracy) {
    xs_.push_back(e);
    ys_.push_back(accuracy);
}

void Surrogate::fit(Rng& rng) {
    const int n = static_cast<int>(xs_.size());
    if (n == 0) return;
    const int in = static_cast<int>(encoded_length(limits_));
    std::vector<double> X(static_cast<std::size_t>(n) * in);
    for (int i = 0; i < n; ++i) {
        const auto x = scale(xs_[i]);
        std::copy(x.begin(), x.end(),
                  X.begin() + static_cast<std::size_t>(i) * in);
    }
    if (cfg_.multi_stage) {
        if (cfg_.retrain_from_scratch) multi_.init(rng);
        multi_.train(X, ys_, n, cfg_.train, rng);
    } else {
        if (cfg_.retrain_from_scratch) net_.init(rng);
        net_.train(X, ys_, n, cfg_.train, rng);
    }
}

void Surrogate::restore_buffer(std::vector<EncodedArch> xs,
                               std::vector<double> ys) {
    if (xs.size() != ys.size())
        throw SnapshotError("surrogate buffer arrays differ in length");
    xs_ = std::move(xs);
    ys_ = std::move(ys);
}

}  // namespace archsearch
