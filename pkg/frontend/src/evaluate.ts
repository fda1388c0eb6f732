/**
 * Accuracy evaluation under partial KV-cache sharing.
 *
 * At sharing ratio r, the first ceil(r * n) prompt positions' key/value
 * entries come from the frozen base model's cache and the remainder are
 * recomputed by the evaluated model. The final prompt position is
 * always processed by the evaluated model — its forward pass emits the
 * first answer token, mirroring how a decode worker consumes a handed-
 * off prefill cache. Decoding is greedy; scoring is exact match.
 */

import * as tf from "@tensorflow/tfjs";
import { PromptCache, TinyLM, buildBaseCache } from "./model.js";
import { Sample } from "./task.js";

export function sharedPrefixLength(ratio: number, promptLen: number): number {
  if (!(ratio >= 0 && ratio <= 1)) throw new RangeError(`sharing ratio ${ratio} outside [0, 1]`);
  return Math.min(Math.ceil(ratio * promptLen), promptLen - 1);
}

export function evaluateSharing(dec: TinyLM, base: TinyLM, ratio: number, evalSet: Sample[]): number {
  if (evalSet.length === 0) throw new RangeError("empty evaluation set");
  const n = evalSet[0].prompt.length;
  for (const s of evalSet) {
    if (s.prompt.length !== n) throw new RangeError("evaluation prompts must share a length");
  }
  const m = sharedPrefixLength(ratio, n);
  const prompts = evalSet.map((s) => s.prompt);

  const predictions = tf.tidy(() => {
    let past: PromptCache | null = null;
    if (m > 0) {
      const full = buildBaseCache(base, prompts);
      past = full.slice(m);
    }
    const tails = prompts.map((p) => p.slice(m));
    const { logits } = dec.forward(tails, past);
    const tailLen = n - m;
    const last = tf
      .slice(logits, [0, tailLen - 1, 0], [prompts.length, 1, dec.cfg.vocab])
      .reshape([prompts.length, dec.cfg.vocab]);
    return tf.argMax(last, -1).dataSync() as Int32Array;
  });

  let correct = 0;
  for (let i = 0; i < evalSet.length; i++) {
    if (predictions[i] === evalSet[i].target) correct += 1;
  }
  return correct / evalSet.length;
}
