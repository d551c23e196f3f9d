#pragma once

#include <string>
#include <vector>

#include "archsearch/errors.hpp"
#include "archsearch/rng.hpp"
#include "archsearch/space.hpp"

namespace archsearch {

// Mini-batch Adam hyperparameters. Defaults follow the published training
// recipe for the accuracy regressor.
struct TrainConfig {
    int epochs = 20;
    int batch_size = 128;
    double learning_rate = 2e-5;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_epsilon = 1e-8;

    bool operator==(const TrainConfig&) const = default;
};

enum class HiddenAct { relu, identity };
enum class OutputAct { sigmoid, softmax, identity };

// Fully-connected network with explicit parameter storage. Regressor form:
// relu hidden layers, sigmoid scalar output, mean-squared-error loss.
// Classifier form (the multi-stage router): softmax output, cross-entropy.
// The identity activations exist for tests that need closed-form gradients.
//
// All forward/backward arithmetic goes through the kernels module, so the
// serial/parallel choice never changes results.
class DenseNet {
public:
    DenseNet(std::vector<int> dims, OutputAct out = OutputAct::sigmoid,
             HiddenAct hidden = HiddenAct::relu);

    // Weights uniform in [-0.1, 0.1], biases zero, Adam state cleared.
    void init(Rng& rng);

    int input_dim() const { return dims_.front(); }
    int output_dim() const { return dims_.back(); }
    const std::vector<int>& dims() const { return dims_; }
    OutputAct output_act() const { return out_; }
    HiddenAct hidden_act() const { return hidden_; }
    std::size_t num_params() const;

    // X: batch x input_dim row-major; returns batch x output_dim.
    std::vector<double> forward(const std::vector<double>& X, int batch) const;
    // Scalar convenience for output_dim == 1.
    double predict_scalar(const std::vector<double>& x) const;

    // Mean loss of the batch under the net's loss (MSE for sigmoid/identity
    // outputs, cross-entropy for softmax; Y is always batch x output_dim,
    // one-hot rows for softmax).
    double loss(const std::vector<double>& X, const std::vector<double>& Y,
                int batch) const;

    // Analytic gradients of `loss` w.r.t. every parameter.
    void loss_gradients(const std::vector<double>& X,
                        const std::vector<double>& Y, int batch,
                        std::vector<std::vector<double>>& dW,
                        std::vector<std::vector<double>>& dB) const;

    // One Adam step on the batch; returns the batch's pre-step mean loss.
    double train_batch(const std::vector<double>& X,
                       const std::vector<double>& Y, int batch,
                       const TrainConfig& cfg);

    // Full training loop: per-epoch Fisher-Yates shuffle driven by `rng`,
    // then consecutive mini-batches (last one may be short). Returns the
    // per-epoch mean loss history.
    std::vector<double> train(const std::vector<double>& X,
                              const std::vector<double>& Y, int n,
                              const TrainConfig& cfg, Rng& rng);

    // Parameter access for snapshots, checkpoints and finite differences.
    std::vector<std::vector<double>>& weights() { return W_; }
    std::vector<std::vector<double>>& biases() { return B_; }
    const std::vector<std::vector<double>>& weights() const { return W_; }
    const std::vector<std::vector<double>>& biases() const { return B_; }
    std::vector<std::vector<double>>& adam_m_w() { return mW_; }
    std::vector<std::vector<double>>& adam_v_w() { return vW_; }
    std::vector<std::vector<double>>& adam_m_b() { return mB_; }
    std::vector<std::vector<double>>& adam_v_b() { return vB_; }
    const std::vector<std::vector<double>>& adam_m_w() const { return mW_; }
    const std::vector<std::vector<double>>& adam_v_w() const { return vW_; }
    const std::vector<std::vector<double>>& adam_m_b() const { return mB_; }
    const std::vector<std::vector<double>>& adam_v_b() const { return vB_; }
    long adam_t() const { return adam_t_; }
    void set_adam_t(long t) { adam_t_ = t; }

    // Text checkpoint: layer dims plus flat parameter arrays (and Adam
    // state), every value in shortest round-trip decimal form.
    void save_checkpoint(const std::string& path) const;
    static DenseNet load_checkpoint(const std::string& path);

    bool operator==(const DenseNet& o) const {
        return dims_ == o.dims_ && out_ == o.out_ && hidden_ == o.hidden_ &&
               W_ == o.W_ && B_ == o.B_ && adam_t_ == o.adam_t_ &&
               mW_ == o.mW_ && vW_ == o.vW_ && mB_ == o.mB_ && vB_ == o.vB_;
    }

private:
    struct ForwardTrace;
    void forward_trace(const std::vector<double>& X, int batch,
                       ForwardTrace& tr) const;
    void backward(const ForwardTrace& tr, const std::vector<double>& Y,
                  int batch, std::vector<std::vector<double>>& dW,
                  std::vector<std::vector<double>>& dB) const;

    std::vector<int> dims_;
    OutputAct out_;
    HiddenAct hidden_;
    std::vector<std::vector<double>> W_, B_;
    std::vector<std::vector<double>> mW_, vW_, mB_, vB_;
    long adam_t_ = 0;
};

// Central-difference check of the analytic gradients; returns the maximum
// relative error over all parameters. Intended for small nets.
double gradient_check(DenseNet& net, const std::vector<double>& X,
                      const std::vector<double>& Y, int batch, double epsilon);

// Pearson product-moment correlation. Throws LengthMismatch and
// DegenerateVariance (zero variance on either side).
double pearson(const std::vector<double>& a, const std::vector<double>& b);

// Spearman rank correlation (average ranks on ties).
double spearman(const std::vector<double>& a, const std::vector<double>& b);

// Hard-routed mixture: `bins` equal-width accuracy ranges over [0,1], one
// expert regressor per bin, plus a softmax router trained on the true bin
// labels. Prediction runs the router, takes the argmax bin (lowest index on
// ties) and returns that expert's output.
class MultiStageModel {
public:
    MultiStageModel(int input_dim, const std::vector<int>& hidden_dims,
                    int bins = 4);

    void init(Rng& rng);

    int bins() const { return static_cast<int>(experts_.size()); }
    int bin_of(double y) const;
    int route(const std::vector<double>& x) const;
    double predict(const std::vector<double>& x) const;

    // Experts train on their own bin's samples (skipping empty bins, in bin
    // order), then the router trains on all samples; all shuffles come from
    // `rng` in that fixed order.
    void train(const std::vector<double>& X, const std::vector<double>& y,
               int n, const TrainConfig& cfg, Rng& rng);

    DenseNet& router() { return router_; }
    DenseNet& expert(int b) { return experts_[b]; }

private:
    DenseNet router_;
    std::vector<DenseNet> experts_;
};

// Engine-facing facade: keeps the training buffer of evaluated
// (encoding, accuracy) pairs and either a single regressor or the
// multi-stage model; inputs are digit vectors scaled by the domain's
// maximum digit value.
struct SurrogateConfig {
    std::vector<int> hidden_dims = {64, 128, 64};
    bool multi_stage = false;
    int bins = 4;
    TrainConfig train;
    bool retrain_from_scratch = false;

    bool operator==(const SurrogateConfig&) const = default;
};

class Surrogate {
public:
    Surrogate(const SpaceLimits& limits, const SurrogateConfig& cfg, Rng& rng);

    double predict(const EncodedArch& e) const;
    void add_sample(const EncodedArch& e, double accuracy);
    // Fine-tunes on the whole buffer (or retrains from fresh init when
    // configured); no-op on an empty buffer.
    void fit(Rng& rng);

    std::size_t buffer_size() const { return xs_.size(); }
    const std::vector<EncodedArch>& buffer_encodings() const { return xs_; }
    const std::vector<double>& buffer_accuracies() const { return ys_; }
    const SurrogateConfig& config() const { return cfg_; }

    DenseNet& net() { return net_; }
    const DenseNet& net() const { return net_; }
    MultiStageModel* multi_stage() { return cfg_.multi_stage ? &multi_ : nullptr; }

    // Snapshot support: replace the buffer wholesale (parameters are
    // restored through the net accessors).
    void restore_buffer(std::vector<EncodedArch> xs, std::vector<double> ys);

private:
    std::vector<double> scale(const EncodedArch& e) const;

    SpaceLimits limits_;
    SurrogateConfig cfg_;
    double scale_div_;
    DenseNet net_;
    MultiStageModel multi_;
    std::vector<EncodedArch> xs_;
    std::vector<double> ys_;
};

}  // namespace archsearch
