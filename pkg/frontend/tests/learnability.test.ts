/**
 * The task is constructed to be learnable by the reference
 * architecture: for each variant, some learning rate in the standard
 * grid must reach >= 95% exact-match accuracy with the model encoding
 * prompts itself (sharing ratio 0).
 *
 * The grid runs use a longer training budget than the default
 * experiment config: the cache-conditioned variant only exercises its
 * own prompt encoder at the final prompt position, so converging its
 * self-encoded (r=0) accuracy needs a low learning rate and more
 * steps. The budget is fixed across the grid; the result is
 * deterministic per (seed, lr).
 */
import { describe, expect, it } from "vitest";
import { EXPERIMENT, makeBase, runExperiment } from "../src/experiment.js";

describe("learning-rate grid", () => {
  it("at least one lr in {1e-3, 3e-4, 1e-4} reaches 95% at r=0 for each variant", { timeout: 600_000 }, () => {
    const pretrained = makeBase(EXPERIMENT, 0);
    const best: Record<string, number> = {};
    for (const variant of ["full_ft", "cache_conditioned"] as const) {
      best[variant] = 0;
      for (const lr of [1e-3, 3e-4, 1e-4]) {
        const cfg = { ...EXPERIMENT, finetune: { ...EXPERIMENT.finetune, lr, steps: 1600 } };
        const res = runExperiment(cfg, variant, 0, [0], pretrained);
        best[variant] = Math.max(best[variant], res.accuracy.get(0)!);
        if (best[variant] >= 0.95) break;
      }
      expect(best[variant], `${variant} best r=0 accuracy across lr grid`).toBeGreaterThanOrEqual(0.95);
    }
    pretrained.model.dispose();
  });
});
