/**
 * trainer — command-line front-end for the cache-conditioned training
 * experiment.
 *
 *   trainer run --variant {full_ft,cache_conditioned} --seed S
 *       Pretrain, fine-tune with the chosen variant, and report
 *       accuracy at each sharing ratio.
 *
 *   trainer sweep-ratio --ratios 0,0.25,0.5,0.75,1.0 [--seeds 0,1,2]
 *       Run both variants over the seed list (sharing each seed's
 *       pretrained base) and emit one CSV table.
 *
 * Output is CSV with header `variant,seed,ratio,accuracy`, written to
 * stdout or to --out. `--steps` / `--pretrain-steps` override the
 * reference training budget (mainly for smoke tests).
 */

import { parseArgs } from "node:util";
import { writeFileSync } from "node:fs";
import { initBackend } from "./backend.js";
import { EXPERIMENT, ExperimentConfig, RunResult, makeBase, runExperiment, toCsv } from "./experiment.js";
import { Variant } from "./train.js";

const USAGE = `usage:
  trainer run --variant {full_ft,cache_conditioned} --seed S [--ratios R,R,...] [--out FILE]
  trainer sweep-ratio --ratios R,R,... [--seeds S,S,...] [--out FILE]
common options:
  --steps N           fine-tuning steps (default ${EXPERIMENT.finetune.steps})
  --pretrain-steps N  base pretraining steps (default ${EXPERIMENT.pretrain.steps})`;

const BUDGET_OPTIONS = {
  steps: { type: "string" },
  "pretrain-steps": { type: "string" },
} as const;

function parseList(raw: string, what: string): number[] {
  const vals = raw.split(",").map((s) => Number(s.trim()));
  if (vals.length === 0 || vals.some((v) => !Number.isFinite(v))) {
    throw new Error(`invalid ${what} list: ${JSON.stringify(raw)}`);
  }
  return vals;
}

function parsePositiveInt(raw: string, flag: string): number {
  const n = Number(raw);
  if (!Number.isInteger(n) || n <= 0) throw new Error(`${flag} must be a positive integer, got ${JSON.stringify(raw)}`);
  return n;
}

function applyBudget(values: { steps?: string; "pretrain-steps"?: string }): ExperimentConfig {
  let cfg = EXPERIMENT;
  if (values.steps !== undefined) {
    cfg = { ...cfg, finetune: { ...cfg.finetune, steps: parsePositiveInt(values.steps, "--steps") } };
  }
  if (values["pretrain-steps"] !== undefined) {
    cfg = { ...cfg, pretrain: { ...cfg.pretrain, steps: parsePositiveInt(values["pretrain-steps"], "--pretrain-steps") } };
  }
  return cfg;
}

function emit(csv: string, out: string | undefined): void {
  if (out) {
    writeFileSync(out, csv);
    process.stderr.write(`wrote ${out}\n`);
  } else {
    process.stdout.write(csv);
  }
}

export async function main(argv: string[]): Promise<number> {
  const command = argv[0];
  const rest = argv.slice(1);
  try {
    if (command === "run") {
      const { values } = parseArgs({
        args: rest,
        options: {
          variant: { type: "string" },
          seed: { type: "string" },
          ratios: { type: "string", default: "0,0.25,0.5,0.75,1" },
          out: { type: "string" },
          ...BUDGET_OPTIONS,
        },
      });
      const variant = values.variant as Variant | undefined;
      if (variant !== "full_ft" && variant !== "cache_conditioned") {
        throw new Error(`--variant must be full_ft or cache_conditioned, got ${JSON.stringify(values.variant)}`);
      }
      if (values.seed === undefined) throw new Error("--seed is required");
      const seed = Number(values.seed);
      if (!Number.isInteger(seed)) throw new Error(`--seed must be an integer, got ${JSON.stringify(values.seed)}`);
      const ratios = parseList(values.ratios!, "ratio");
      await initBackend();
      const result = runExperiment(applyBudget(values), variant, seed, ratios);
      emit(toCsv([result]), values.out);
      return 0;
    }
    if (command === "sweep-ratio") {
      const { values } = parseArgs({
        args: rest,
        options: {
          ratios: { type: "string" },
          seeds: { type: "string", default: "0" },
          out: { type: "string" },
          ...BUDGET_OPTIONS,
        },
      });
      if (!values.ratios) throw new Error("--ratios is required");
      const ratios = parseList(values.ratios, "ratio");
      const seeds = parseList(values.seeds!, "seed");
      const cfg = applyBudget(values);
      await initBackend();
      const results: RunResult[] = [];
      for (const seed of seeds) {
        const pretrained = makeBase(cfg, seed);
        for (const variant of ["full_ft", "cache_conditioned"] as const) {
          process.stderr.write(`seed ${seed} ${variant}...\n`);
          results.push(runExperiment(cfg, variant, seed, ratios, pretrained));
        }
        pretrained.model.dispose();
      }
      emit(toCsv(results), values.out);
      return 0;
    }
    if (command === undefined || command === "--help" || command === "help") {
      process.stderr.write(`${USAGE}\n`);
      return command === undefined ? 2 : 0;
    }
    process.stderr.write(`unknown command: ${command}\n${USAGE}\n`);
    return 2;
  } catch (err) {
    process.stderr.write(`error: ${err instanceof Error ? err.message : String(err)}\n${USAGE}\n`);
    return 2;
  }
}
