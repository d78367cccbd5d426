#pragma once

#include <limits>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "lnmdet/checkpoint.hpp"
#include "lnmdet/continual.hpp"
#include "lnmdet/netbuild.hpp"
#include "lnmdet/sampler.hpp"

namespace lnmdet {

struct TrainConfig {
    NetConfig net;
    PatchSpec patches;
    std::int64_t val_epoch_size = 0;  // 0 = same as the training epoch
    double learning_rate = 1e-4;
    double l2_lambda = 1e-4;
    int lr_patience = 4;      // non-improving epochs before lr /= 10
    int stop_patience = 20;   // non-improving epochs before stopping
    int max_epochs = 0;       // 0 = run on the schedule alone
    double phi = 0.01;        // EWC weight for plans that use it
    std::int64_t fisher_patches = 0;  // 0 = one training epoch
    bool augment = true;
    std::uint64_t seed = 0;
};

// Validation-accuracy driven schedule: the learning-rate and stop counters
// share one non-improvement streak; the LR counter resets on improvement or
// after a drop, the stop counter only on improvement.
class EarlyStopSchedule {
public:
    EarlyStopSchedule(int lr_patience, int stop_patience)
        : lr_patience_(lr_patience), stop_patience_(stop_patience) {}

    struct Decision {
        bool improved = false;
        bool drop_lr = false;
        bool stop = false;
    };

    Decision observe(double val_accuracy) {
        Decision d;
        if (val_accuracy > best_) {
            best_ = val_accuracy;
            lr_streak_ = 0;
            stop_streak_ = 0;
            d.improved = true;
            return d;
        }
        ++lr_streak_;
        ++stop_streak_;
        if (stop_streak_ >= stop_patience_) {
            d.stop = true;
            return d;
        }
        if (lr_streak_ >= lr_patience_) {
            d.drop_lr = true;
            lr_streak_ = 0;
        }
        return d;
    }

    double best() const { return best_; }

private:
    int lr_patience_;
    int stop_patience_;
    double best_ = -std::numeric_limits<double>::infinity();
    int lr_streak_ = 0;
    int stop_streak_ = 0;
};

struct EpochLog {
    int epoch = 0;
    double train_loss = 0;
    double val_accuracy = 0;
    double learning_rate = 0;
    bool improved = false;
};

struct StepResult {
    std::vector<EpochLog> epochs;
    int best_epoch = 0;
    double best_val_accuracy = 0;
    std::string checkpoint_path;
};

// One row of the training-plan table.
struct StrategyStep {
    std::vector<std::string> tasks;  // datasets trained on, e.g. {"B", "C"}
    bool init_from_previous = false;
};

struct StrategyPlan {
    std::string name;
    std::vector<StrategyStep> steps;
    bool ewc = false;
};

// The ten named plans; names are lowercase (specialized1 .. adapted2).
StrategyPlan strategy_plan(const std::string& name);
std::vector<std::string> strategy_plan_names();

// Manifest paths per task.
struct DatasetPaths {
    std::map<std::string, std::string> train;
    std::map<std::string, std::string> val;
};

struct StrategyResult {
    std::vector<StepResult> steps;
    std::vector<FisherAnchor<float>> anchors;  // accumulated over EWC steps
};

// Executes a plan: per step, initialize per the plan, train with the
// early-stop schedule, keep the best-validation weights, and for EWC plans
// estimate a Fisher anchor on the finished task before moving on. Checkpoints
// land under out_dir as step<k>.lnmc.
StrategyResult run_strategy(const StrategyPlan& plan, const DatasetPaths& data,
                            const TrainConfig& cfg, const std::string& out_dir);

// Single training step over already-loaded datasets; exposed for tests and
// the acceptance suite.
struct TrainOutcome {
    StepResult log;
    NetGraph<float> best_graph;
};

TrainOutcome train_step(NetGraph<float> graph, const std::vector<const LoadedDataset*>& train,
                        const std::vector<const LoadedDataset*>& val, const TrainConfig& cfg,
                        const EwcConfig<float>& ewc, std::uint64_t step_index);

// Classification accuracy of the graph over one deterministic epoch.
double evaluate_accuracy(NetGraph<float>& graph, const EpochStream& stream);

}  // namespace lnmdet
