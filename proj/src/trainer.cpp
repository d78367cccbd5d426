#include "lnmdet/trainer.hpp"

#include <algorithm>
#include <filesystem>

#include "lnmdet/loss.hpp"
#include "lnmdet/optim.hpp"

namespace lnmdet {

StrategyPlan strategy_plan(const std::string& name) {
    auto step = [](std::vector<std::string> tasks, bool from_prev) {
        return StrategyStep{std::move(tasks), from_prev};
    };
    if (name == "specialized1") return {name, {step({"B"}, false)}, false};
    if (name == "specialized2") return {name, {step({"C"}, false)}, false};
    if (name == "specialized3") return {name, {step({"HN"}, false)}, false};
    if (name == "generic1") return {name, {step({"B", "C"}, false)}, false};
    if (name == "generic2") return {name, {step({"B", "C", "HN"}, false)}, false};
    if (name == "extended1") return {name, {step({"B"}, false), step({"B", "C"}, true)}, false};
    if (name == "extended2")
        return {name,
                {step({"B"}, false), step({"B", "C"}, true), step({"B", "C", "HN"}, true)},
                false};
    if (name == "transferred1") return {name, {step({"B"}, false), step({"C"}, true)}, false};
    if (name == "adapted1") return {name, {step({"B"}, false), step({"C"}, true)}, true};
    if (name == "adapted2")
        return {name, {step({"B"}, false), step({"C"}, true), step({"HN"}, true)}, true};
    raise(ErrorCategory::usage, "unknown strategy plan: " + name);
}

std::vector<std::string> strategy_plan_names() {
    return {"specialized1", "specialized2", "specialized3", "generic1", "generic2",
            "extended1",    "extended2",    "transferred1", "adapted1", "adapted2"};
}

double evaluate_accuracy(NetGraph<float>& graph, const EpochStream& stream) {
    const bool was_training = graph.training;
    graph.training = false;
    const std::int64_t batches = stream.batch_count();
    Tensor<float> input;
    std::vector<int> labels;
    std::int64_t correct = 0, total = 0;
    Tape<float> tape;
    for (std::int64_t b = 0; b < batches; ++b) {
        stream.fill_batch(b, input, labels);
        const Tensor<float>& probs = forward(graph, input, tape);
        const std::int64_t n = probs.dim(0), c = probs.dim(1);
        for (std::int64_t s = 0; s < n; ++s) {
            std::int64_t arg = 0;
            for (std::int64_t k = 1; k < c; ++k) {
                if (probs.data[static_cast<std::size_t>(s * c + k)] >
                    probs.data[static_cast<std::size_t>(s * c + arg)]) {
                    arg = k;
                }
            }
            correct += arg == labels[static_cast<std::size_t>(s)] ? 1 : 0;
            ++total;
        }
    }
    graph.training = was_training;
    return static_cast<double>(correct) / static_cast<double>(total);
}

TrainOutcome train_step(NetGraph<float> graph, const std::vector<const LoadedDataset*>& train,
                        const std::vector<const LoadedDataset*>& val, const TrainConfig& cfg,
                        const EwcConfig<float>& ewc, std::uint64_t step_index) {
    cfg.patches.validate();
    AdamState<float> adam;
    adam.learning_rate = cfg.learning_rate;

    PatchSpec val_spec = cfg.patches;
    val_spec.epoch_size = cfg.val_epoch_size > 0 ? cfg.val_epoch_size : cfg.patches.epoch_size;
    val_spec.epoch_size -= val_spec.epoch_size % val_spec.batch_size;
    require(val_spec.epoch_size > 0, ErrorCategory::data, "validation epoch too small");
    // the validation sample is re-drawn from a fixed per-step stream, so
    // accuracies are comparable across epochs
    EpochStream val_stream(val, val_spec, derive_seed(cfg.seed, "val", step_index));

    AugConfig aug;
    EarlyStopSchedule schedule(cfg.lr_patience, cfg.stop_patience);
    TrainOutcome outcome;
    outcome.best_graph = graph;

    Tensor<float> input;
    std::vector<int> labels;
    for (int epoch = 1;; ++epoch) {
        EpochStream train_stream(
            train, cfg.patches,
            derive_seed(cfg.seed, "train-epoch", step_index * 1000003ull + static_cast<std::uint64_t>(epoch)),
            cfg.augment ? &aug : nullptr);
        graph.training = true;
        double loss_acc = 0.0;
        Tape<float> tape;
        for (std::int64_t b = 0; b < train_stream.batch_count(); ++b) {
            train_stream.fill_batch(b, input, labels);
            const Tensor<float>& probs = forward(graph, input, tape);
            const double loss = cross_entropy(probs, labels) +
                                l2_penalty(graph.params, cfg.l2_lambda) +
                                ewc_loss(graph.params, ewc);
            require(std::isfinite(loss), ErrorCategory::state, "training loss diverged");
            loss_acc += loss;
            Tensor<float> dprobs = cross_entropy_backward(probs, labels);
            GradMap<float> grads = backward(graph, tape, dprobs);
            add_l2_grad(graph.params, cfg.l2_lambda, grads);
            add_ewc_grad(graph.params, ewc, grads);
            adam_step(graph.params, grads, adam);
        }

        const double val_acc = evaluate_accuracy(graph, val_stream);
        auto decision = schedule.observe(val_acc);
        EpochLog log;
        log.epoch = epoch;
        log.train_loss = loss_acc / static_cast<double>(train_stream.batch_count());
        log.val_accuracy = val_acc;
        log.learning_rate = adam.learning_rate;
        log.improved = decision.improved;
        outcome.log.epochs.push_back(log);

        if (decision.improved) {
            outcome.best_graph = graph;
            outcome.log.best_epoch = epoch;
            outcome.log.best_val_accuracy = val_acc;
        }
        if (decision.stop) break;
        if (decision.drop_lr) adam.learning_rate /= 10.0;
        if (cfg.max_epochs > 0 && epoch >= cfg.max_epochs) break;
    }
    outcome.best_graph.training = false;
    return outcome;
}

namespace {

LoadedDataset load_task(const std::map<std::string, std::string>& paths, const std::string& task,
                        const char* split) {
    auto it = paths.find(task);
    require(it != paths.end(), ErrorCategory::usage,
            std::string("no ") + split + " manifest configured for task " + task);
    LoadedDataset d = load_dataset(it->second);
    require(d.manifest.task == task, ErrorCategory::data,
            "manifest task mismatch: wanted " + task + ", got " + d.manifest.task);
    return d;
}

}  // namespace

StrategyResult run_strategy(const StrategyPlan& plan, const DatasetPaths& data,
                            const TrainConfig& cfg, const std::string& out_dir) {
    require(!plan.steps.empty(), ErrorCategory::usage, "strategy plan has no steps");
    namespace fs = std::filesystem;
    fs::create_directories(out_dir);

    StrategyResult result;
    NetGraph<float> graph;
    for (std::size_t si = 0; si < plan.steps.size(); ++si) {
        const StrategyStep& step = plan.steps[si];
        require(!step.tasks.empty(), ErrorCategory::usage, "strategy step without datasets");
        if (plan.ewc) {
            require(step.tasks.size() == 1, ErrorCategory::usage,
                    "EWC steps train on a single dataset");
        }

        if (step.init_from_previous) {
            require(si > 0, ErrorCategory::usage, "first step cannot initialize from previous");
            // graph already holds the best weights of the previous step
        } else {
            Rng init_rng(derive_seed(cfg.seed, "init"));
            graph = build_network<float>(cfg.net, init_rng);
        }

        std::vector<LoadedDataset> train_sets, val_sets;
        for (const auto& task : step.tasks) {
            train_sets.push_back(load_task(data.train, task, "train"));
            val_sets.push_back(load_task(data.val, task, "val"));
        }
        std::vector<const LoadedDataset*> train_ptrs, val_ptrs;
        for (const auto& d : train_sets) train_ptrs.push_back(&d);
        for (const auto& d : val_sets) val_ptrs.push_back(&d);

        EwcConfig<float> ewc;
        ewc.phi = plan.ewc ? cfg.phi : 0.0;
        ewc.anchors = result.anchors;

        TrainOutcome outcome =
            train_step(std::move(graph), train_ptrs, val_ptrs, cfg, ewc, static_cast<std::uint64_t>(si));
        graph = std::move(outcome.best_graph);

        // anchor the finished task before leaving it
        if (plan.ewc && si + 1 < plan.steps.size()) {
            const std::string& task = step.tasks.front();
            const LoadedDataset& anchor_data = train_sets.front();
            PatchSpec spec = cfg.patches;
            EpochStream fisher_stream({&anchor_data}, spec,
                                      derive_seed(cfg.seed, "fisher-stream", si));
            PatchProvider<float> provider = [&](std::int64_t index, Rng& rng) {
                auto draw_plan = fisher_stream.plan_draw(index, rng);
                PatchDraw d = sample_patch(
                    anchor_data.slides[static_cast<std::size_t>(draw_plan.slide)], draw_plan.cancer,
                    spec.patch_size, rng);
                Tensor<float> input({1, 3, spec.patch_size, spec.patch_size});
                std::copy(d.patch.data.begin(), d.patch.data.end(), input.data.begin());
                return input;
            };
            const std::int64_t n_fisher =
                cfg.fisher_patches > 0 ? cfg.fisher_patches : cfg.patches.epoch_size;
            graph.training = false;
            result.anchors.push_back(estimate_fisher(graph, provider, n_fisher, task,
                                                     derive_seed(cfg.seed, "fisher-seed", si)));
        }

        StepResult log = outcome.log;
        log.checkpoint_path = (fs::path(out_dir) / ("step" + std::to_string(si + 1) + ".lnmc")).string();
        save_checkpoint<float>(log.checkpoint_path, graph, nullptr,
                               plan.ewc ? &result.anchors : nullptr);
        result.steps.push_back(std::move(log));
    }
    return result;
}

}  // namespace lnmdet
