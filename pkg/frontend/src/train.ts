/**
 * Training: next-token losses, an AdamW-style optimizer with linear
 * warmup, base-model pretraining, and the two fine-tuning variants
 * under comparison:
 *
 *  - full_ft: every parameter of the decode model is trained on the
 *    standard loss (the model encodes its own prompts);
 *  - cache_conditioned: the decode model is trained on a loss whose
 *    prompt attention is served entirely by a frozen base model's
 *    key/value cache, so it learns to answer while reading foreign
 *    caches — and the base parameters receive no gradient at all.
 */

import * as tf from "@tensorflow/tfjs";
import { Rng, mixSeed } from "./rng.js";
import { PromptCache, TinyLM, buildBaseCache } from "./model.js";
import { Sample, SynthTask, TaskMode } from "./task.js";

export class DivergenceError extends Error {}

export type Variant = "full_ft" | "cache_conditioned";

export interface TrainOptions {
  steps: number;
  batchSize: number;
  lr: number;
  beta1?: number;
  beta2?: number;
  eps?: number;
  weightDecay?: number;
  warmupFrac?: number;
}

export interface TrainResult {
  model: TinyLM;
  /** Per-step training loss. */
  curve: number[];
}

/**
 * Mean next-token negative log-likelihood of each sample's target,
 * with the model encoding the prompts itself.
 */
export function nllLoss(model: TinyLM, prompts: number[][], targets: number[]): tf.Scalar {
  const { logits } = model.forward(prompts);
  const n = prompts[0].length;
  const last = tf.slice(logits, [0, n - 1, 0], [prompts.length, 1, model.cfg.vocab]).reshape([prompts.length, model.cfg.vocab]);
  const oneHot = tf.oneHot(tf.tensor1d(targets, "int32"), model.cfg.vocab);
  return tf.losses.softmaxCrossEntropy(oneHot, last) as tf.Scalar;
}

/**
 * Teacher-forced NLL of `targets` with prompt attention served by an
 * injected cache instead of the decode model's own prompt encoding.
 *
 * The cache must cover exactly the sample prompts. The final prompt
 * token is always processed by the decode model itself (its forward
 * pass is what emits the first answer token), attending to the cached
 * key/values of every earlier position; only the decode model's
 * parameters are differentiated through.
 */
export function cacheConditionedLoss(
  dec: TinyLM,
  cache: PromptCache,
  prompts: number[][],
  targets: number[],
): tf.Scalar {
  const n = prompts[0].length;
  if (cache.length !== n) {
    throw new RangeError(`cache covers ${cache.length} positions but prompts have ${n}`);
  }
  if (cache.batch !== prompts.length) {
    throw new RangeError(`cache batch ${cache.batch} != prompt batch ${prompts.length}`);
  }
  const past = cache.slice(n - 1);
  const lastTokens = prompts.map((p) => [p[n - 1]]);
  const { logits } = dec.forward(lastTokens, past);
  const lastLogits = logits.reshape([prompts.length, dec.cfg.vocab]);
  const oneHot = tf.oneHot(tf.tensor1d(targets, "int32"), dec.cfg.vocab);
  return tf.losses.softmaxCrossEntropy(oneHot, lastLogits) as tf.Scalar;
}

/**
 * AdamW: Adam moments plus decoupled weight decay, with linear warmup
 * to the peak learning rate. Decay is skipped for 1-D parameters
 * (biases and LayerNorm gains), as is conventional.
 */
export class AdamW {
  private readonly m: tf.Tensor[];
  private readonly v: tf.Tensor[];
  private t = 0;

  constructor(
    private readonly vars: tf.Variable[],
    private readonly opts: Required<Pick<TrainOptions, "lr" | "beta1" | "beta2" | "eps" | "weightDecay" | "warmupFrac" | "steps">>,
  ) {
    this.m = vars.map((w) => tf.keep(tf.zerosLike(w)));
    this.v = vars.map((w) => tf.keep(tf.zerosLike(w)));
  }

  lrAt(step: number): number {
    const warmup = Math.max(1, Math.round(this.opts.warmupFrac * this.opts.steps));
    return step < warmup ? (this.opts.lr * (step + 1)) / warmup : this.opts.lr;
  }

  /** Apply one update from gradients aligned with the variable list. */
  step(grads: tf.Tensor[]): void {
    const { beta1, beta2, eps, weightDecay } = this.opts;
    const lr = this.lrAt(this.t);
    this.t += 1;
    const bc1 = 1 - beta1 ** this.t;
    const bc2 = 1 - beta2 ** this.t;
    for (let i = 0; i < this.vars.length; i++) {
      const w = this.vars[i];
      const g = grads[i];
      tf.tidy(() => {
        const m = tf.add(tf.mul(this.m[i], beta1), tf.mul(g, 1 - beta1));
        const v = tf.add(tf.mul(this.v[i], beta2), tf.mul(tf.square(g), 1 - beta2));
        this.m[i].dispose();
        this.v[i].dispose();
        this.m[i] = tf.keep(m);
        this.v[i] = tf.keep(v);
        const update = tf.div(tf.div(m, bc1), tf.add(tf.sqrt(tf.div(v, bc2)), eps));
        let next = tf.sub(w, tf.mul(update, lr));
        if (weightDecay > 0 && w.shape.length > 1) {
          next = tf.sub(next, tf.mul(w, lr * weightDecay));
        }
        w.assign(next as tf.Tensor);
      });
    }
  }

  dispose(): void {
    for (const t of this.m) t.dispose();
    for (const t of this.v) t.dispose();
  }
}

const DEFAULTS = { beta1: 0.9, beta2: 0.999, eps: 1e-8, weightDecay: 0.1, warmupFrac: 0.03 };

interface Step {
  /** Differentiable loss; runs inside the gradient scope. */
  loss: () => tf.Scalar;
  /** Frees per-step constants (e.g. injected caches); runs after the update. */
  cleanup?: () => void;
}

function runLoop(trainVars: tf.Variable[], makeStep: () => Step, opts: TrainOptions): number[] {
  if (new Set(trainVars.map((w) => w.name)).size !== trainVars.length) {
    throw new Error("duplicate variable names in training set");
  }
  const full = { ...DEFAULTS, ...opts };
  const optimizer = new AdamW(trainVars, full);
  const curve: number[] = [];
  let initial: number | null = null;
  try {
    for (let step = 0; step < opts.steps; step++) {
      const { loss, cleanup } = makeStep();
      let lossValue: number;
      try {
        lossValue = tf.tidy(() => {
          const { value, grads } = tf.variableGrads(loss, trainVars);
          const aligned = trainVars.map((w) => {
            const g = grads[w.name];
            if (!g) throw new Error(`missing gradient for ${w.name}`);
            return g;
          });
          optimizer.step(aligned);
          return (value.dataSync() as Float32Array)[0];
        });
      } finally {
        cleanup?.();
      }
      curve.push(lossValue);
      if (!Number.isFinite(lossValue)) {
        throw new DivergenceError(`non-finite loss ${lossValue} at step ${step}`);
      }
      if (initial === null) initial = Math.max(lossValue, 1e-8);
      if (lossValue > 10 * initial) {
        throw new DivergenceError(
          `loss ${lossValue.toFixed(4)} at step ${step} exceeds 10x initial loss ${initial.toFixed(4)}; lower the learning rate`,
        );
      }
    }
  } finally {
    optimizer.dispose();
  }
  return curve;
}

/**
 * Pretrain a fresh base model for a fixed budget on the task's token
 * distribution (the positional variant, where the queried key is
 * always the final pair's).
 */
export function pretrainBase(task: SynthTask, vocab: number, cfg: Omit<TinyLM["cfg"], "vocab">, seed: number | bigint, opts: TrainOptions): TrainResult {
  const model = TinyLM.init({ ...cfg, vocab }, mixSeed(seed, "base-init"));
  const rng = new Rng(mixSeed(seed, "pretrain-data"));
  const curve = runLoop(
    model.variables(),
    () => {
      const batch = task.batch(rng, "pretrain", "train", opts.batchSize);
      return {
        loss: () =>
          nllLoss(
            model,
            batch.map((s) => s.prompt),
            batch.map((s) => s.target),
          ),
      };
    },
    opts,
  );
  return { model, curve };
}

/**
 * Fine-tune a copy of `base` on the true recall task.
 *
 * full_ft minimizes the standard loss over all parameters of the copy.
 * cache_conditioned minimizes the cache-conditioned loss: each batch's
 * prompts are prefilled through the frozen `base` (outside the gradient
 * scope), and the copy trains while attending to those caches. The base
 * model's parameters are never passed to the gradient computation, so
 * they cannot change.
 */
export function train(
  variant: Variant,
  task: SynthTask,
  base: TinyLM,
  seed: number | bigint,
  opts: TrainOptions,
): TrainResult {
  const dec = base.clone();
  const rng = new Rng(mixSeed(seed, "finetune-data", variant));
  const sampleBatch = () => task.batch(rng, "task" satisfies TaskMode, "train", opts.batchSize);

  let curve: number[];
  if (variant === "full_ft") {
    curve = runLoop(
      dec.variables(),
      () => {
        const batch = sampleBatch();
        return {
          loss: () =>
            nllLoss(
              dec,
              batch.map((s) => s.prompt),
              batch.map((s) => s.target),
            ),
        };
      },
      opts,
    );
  } else {
    curve = runLoop(
      dec.variables(),
      () => {
        const batch = sampleBatch();
        const prompts = batch.map((s) => s.prompt);
        // Prefill through the frozen base outside the gradient scope:
        // the cache enters the loss as a constant.
        const cache = buildBaseCache(base, prompts);
        return {
          loss: () =>
            cacheConditionedLoss(
              dec,
              cache,
              prompts,
              batch.map((s) => s.target),
            ),
          cleanup: () => cache.dispose(),
        };
      },
      opts,
    );
  }
  return { model: dec, curve };
}

/** Simple trailing-window smoothing for curve-shape assertions. */
export function smoothedEnds(curve: number[], window = 20): { start: number; end: number } {
  const w = Math.min(window, curve.length);
  const mean = (xs: number[]) => xs.reduce((a, b) => a + b, 0) / xs.length;
  return { start: mean(curve.slice(0, w)), end: mean(curve.slice(-w)) };
}

/** Convenience wrapper: sample a fresh evaluation batch. */
export function sampleEval(task: SynthTask, seed: number | bigint, size: number): Sample[] {
  return task.evalSet(seed, size);
}
