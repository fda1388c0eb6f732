/**
 * Reference experiment: pretrain a base model on the positional-
 * heuristic distribution, fine-tune a copy on the true recall task with
 * each variant, and measure exact-match accuracy across sharing ratios.
 *
 * The experiment-scale model is smaller than the reference architecture
 * so a multi-seed sweep finishes in minutes on CPU; the mechanism under
 * test (a decode model consuming a foreign prompt cache) is unchanged.
 */

import { ModelConfig } from "./model.js";
import { DEFAULT_TASK, SynthTask, TaskConfig, vocabSize } from "./task.js";
import { TrainOptions, TrainResult, Variant, pretrainBase, train } from "./train.js";
import { evaluateSharing } from "./evaluate.js";
import { mixSeed } from "./rng.js";

export interface ExperimentConfig {
  model: Omit<ModelConfig, "vocab">;
  task: TaskConfig;
  pretrain: TrainOptions;
  finetune: TrainOptions;
  evalSize: number;
}

export const EXPERIMENT: ExperimentConfig = {
  model: { layers: 2, width: 64, heads: 4, context: 64 },
  task: DEFAULT_TASK,
  pretrain: { steps: 150, batchSize: 32, lr: 1e-3 },
  finetune: { steps: 250, batchSize: 32, lr: 1e-3 },
  evalSize: 256,
};

export interface RunResult {
  variant: Variant;
  seed: number;
  /** ratio -> exact-match accuracy on the held-out eval set */
  accuracy: Map<number, number>;
  pretrainCurve: number[];
  finetuneCurve: number[];
}

/** Pretrain the frozen base for one seed. */
export function makeBase(cfg: ExperimentConfig, seed: number): TrainResult {
  const task = new SynthTask(cfg.task);
  return pretrainBase(task, vocabSize(cfg.task), cfg.model, seed, cfg.pretrain);
}

/**
 * Full pipeline for one (variant, seed): pretrain, fine-tune, evaluate
 * at each requested sharing ratio. A caller sweeping both variants can
 * pass a shared pretrained base to avoid repeating the pretraining.
 */
export function runExperiment(
  cfg: ExperimentConfig,
  variant: Variant,
  seed: number,
  ratios: number[],
  pretrained?: TrainResult,
): RunResult {
  const task = new SynthTask(cfg.task);
  const basePipeline = pretrained ?? makeBase(cfg, seed);
  const base = basePipeline.model;
  const tuned = train(variant, task, base, seed, cfg.finetune);
  const evalSet = task.evalSet(mixSeed(seed, "experiment-eval"), cfg.evalSize);
  const accuracy = new Map<number, number>();
  for (const r of ratios) {
    accuracy.set(r, evaluateSharing(tuned.model, base, r, evalSet));
  }
  tuned.model.dispose();
  if (!pretrained) base.dispose();
  return {
    variant,
    seed,
    accuracy,
    pretrainCurve: basePipeline.curve,
    finetuneCurve: tuned.curve,
  };
}

/** CSV rows (`variant,seed,ratio,accuracy`) for plotting. */
export function toCsv(results: RunResult[]): string {
  const lines = ["variant,seed,ratio,accuracy"];
  for (const r of results) {
    const ratios = [...r.accuracy.keys()].sort((a, b) => a - b);
    for (const ratio of ratios) {
      lines.push(`${r.variant},${r.seed},${ratio},${r.accuracy.get(ratio)!.toFixed(4)}`);
    }
  }
  return lines.join("\n") + "\n";
}
