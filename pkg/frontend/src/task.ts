/**
 * Synthetic key-value recall task.
 *
 * A prompt lists key=value pairs and then queries one key:
 *
 *     k0 = v7 ; k1 = v2 ; ... ? k0          ->   v7
 *
 * Keys are slot labels listed in a fixed order; values and the queried
 * slot are random.
 *
 * The answer is a single value token, scored by exact match. Two
 * distributions share the same token statistics but differ in which key
 * is queried:
 *
 *  - "pretrain": the queried key is always the LAST pair's key, so a
 *    model can score perfectly with a trivial positional heuristic and
 *    never needs content-based retrieval;
 *  - "task": the queried key is uniform over all pairs, so the model
 *    must retrieve the value associated with the queried key.
 *
 * Fine-tuning from the pretrained heuristic to the real task therefore
 * requires a genuine change to how the prompt is encoded, which is what
 * exposes the difference between full fine-tuning and cache-conditioned
 * fine-tuning under cache sharing.
 *
 * Train and eval splits are disjoint by construction: every sample is
 * hashed and samples whose hash falls in the eval partition are never
 * yielded for training (and vice versa).
 */

import { Rng, mixSeed } from "./rng.js";

export const TOK_EQ = 0;
export const TOK_SEP = 1;
export const TOK_QUERY = 2;
export const N_SPECIAL = 3;

export type TaskMode = "pretrain" | "task";

export interface TaskConfig {
  nKeys: number;
  nValues: number;
  nPairs: number;
}

export const DEFAULT_TASK: TaskConfig = { nKeys: 8, nValues: 8, nPairs: 3 };

export interface Sample {
  prompt: number[];
  target: number; // a single value token
}

export function vocabSize(cfg: TaskConfig): number {
  return N_SPECIAL + cfg.nKeys + cfg.nValues;
}

export function promptLength(cfg: TaskConfig): number {
  // key = value ; per pair, then "? key"
  return 4 * cfg.nPairs + 2;
}

export function keyToken(cfg: TaskConfig, k: number): number {
  if (k < 0 || k >= cfg.nKeys) throw new RangeError(`key index ${k} out of range`);
  return N_SPECIAL + k;
}

export function valueToken(cfg: TaskConfig, v: number): number {
  if (v < 0 || v >= cfg.nValues) throw new RangeError(`value index ${v} out of range`);
  return N_SPECIAL + cfg.nKeys + v;
}

/** Deterministic partition id in [0, 8) for a raw sample description. */
function partitionOf(keys: number[], values: number[], queryIdx: number): number {
  let h = 0x811c9dc5n;
  for (const x of [...keys, 0xffff, ...values, 0xfffe, queryIdx]) {
    h = ((h ^ BigInt(x)) * 0x01000193n) & 0xffffffffn;
  }
  return Number(h & 7n);
}

const EVAL_PARTITION = 0;

export class SynthTask {
  readonly cfg: TaskConfig;

  constructor(cfg: TaskConfig = DEFAULT_TASK) {
    if (cfg.nPairs > cfg.nKeys) {
      throw new RangeError(`nPairs (${cfg.nPairs}) cannot exceed nKeys (${cfg.nKeys}); keys within a prompt are distinct`);
    }
    this.cfg = cfg;
  }

  /** Rejection-sample one example from the requested split and mode. */
  sample(rng: Rng, mode: TaskMode, split: "train" | "eval"): Sample {
    for (;;) {
      // Keys are slot labels and always appear in order (k0, k1, ...);
      // the randomness lives in the values and in which slot is queried.
      const keys = Array.from({ length: this.cfg.nPairs }, (_, i) => i);
      const values = keys.map(() => rng.int(this.cfg.nValues));
      const queryIdx = mode === "pretrain" ? this.cfg.nPairs - 1 : rng.int(this.cfg.nPairs);
      const inEval = partitionOf(keys, values, queryIdx) === EVAL_PARTITION;
      if ((split === "eval") !== inEval) continue;

      const prompt: number[] = [];
      for (let i = 0; i < this.cfg.nPairs; i++) {
        prompt.push(keyToken(this.cfg, keys[i]), TOK_EQ, valueToken(this.cfg, values[i]), TOK_SEP);
      }
      prompt.push(TOK_QUERY, keyToken(this.cfg, keys[queryIdx]));
      return { prompt, target: valueToken(this.cfg, values[queryIdx]) };
    }
  }

  batch(rng: Rng, mode: TaskMode, split: "train" | "eval", size: number): Sample[] {
    return Array.from({ length: size }, () => this.sample(rng, mode, split));
  }

  /** A fixed, seed-determined evaluation set for the true task. */
  evalSet(seed: number | bigint, size: number): Sample[] {
    const rng = new Rng(mixSeed(seed, "eval-set"));
    return this.batch(rng, "task", "eval", size);
  }
}

export { partitionOf as _partitionOf };
