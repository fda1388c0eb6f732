import { mkdtempSync, readFileSync, rmSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";
import { afterAll, describe, expect, it } from "vitest";
import { main } from "../src/cli.js";

const dir = mkdtempSync(join(tmpdir(), "trainer-cli-"));
afterAll(() => rmSync(dir, { recursive: true, force: true }));

const FAST = ["--steps", "10", "--pretrain-steps", "10"];

describe("trainer run", () => {
  it("writes a CSV with the documented schema", async () => {
    const out = join(dir, "run.csv");
    const code = await main(["run", "--variant", "full_ft", "--seed", "0", "--ratios", "0,1", "--out", out, ...FAST]);
    expect(code).toBe(0);
    const lines = readFileSync(out, "utf8").trim().split("\n");
    expect(lines[0]).toBe("variant,seed,ratio,accuracy");
    expect(lines).toHaveLength(3);
    for (const [i, ratio] of [0, 1].entries()) {
      const [variant, seed, r, acc] = lines[i + 1].split(",");
      expect(variant).toBe("full_ft");
      expect(seed).toBe("0");
      expect(Number(r)).toBe(ratio);
      expect(Number(acc)).toBeGreaterThanOrEqual(0);
      expect(Number(acc)).toBeLessThanOrEqual(1);
    }
  });

  it("is deterministic in the seed", async () => {
    const outA = join(dir, "a.csv");
    const outB = join(dir, "b.csv");
    expect(await main(["run", "--variant", "cache_conditioned", "--seed", "7", "--ratios", "0.5", "--out", outA, ...FAST])).toBe(0);
    expect(await main(["run", "--variant", "cache_conditioned", "--seed", "7", "--ratios", "0.5", "--out", outB, ...FAST])).toBe(0);
    expect(readFileSync(outA, "utf8")).toBe(readFileSync(outB, "utf8"));
  });

  it("rejects bad arguments with exit code 2", async () => {
    expect(await main(["run", "--seed", "0", ...FAST])).toBe(2); // missing variant
    expect(await main(["run", "--variant", "nope", "--seed", "0", ...FAST])).toBe(2);
    expect(await main(["run", "--variant", "full_ft", ...FAST])).toBe(2); // missing seed
    expect(await main(["run", "--variant", "full_ft", "--seed", "x", ...FAST])).toBe(2);
    expect(await main(["run", "--variant", "full_ft", "--seed", "0", "--ratios", "0,nope", ...FAST])).toBe(2);
    expect(await main(["run", "--variant", "full_ft", "--seed", "0", "--steps", "-5"])).toBe(2);
    expect(await main(["run", "--variant", "full_ft", "--seed", "0", "--bogus"])).toBe(2);
  });
});

describe("trainer sweep-ratio", () => {
  it("covers both variants and all requested seeds and ratios", async () => {
    const out = join(dir, "sweep.csv");
    const code = await main(["sweep-ratio", "--ratios", "0,1", "--seeds", "0,1", "--out", out, ...FAST]);
    expect(code).toBe(0);
    const lines = readFileSync(out, "utf8").trim().split("\n");
    expect(lines[0]).toBe("variant,seed,ratio,accuracy");
    expect(lines).toHaveLength(1 + 2 * 2 * 2);
    const rows = lines.slice(1).map((l) => l.split(","));
    const combos = new Set(rows.map(([v, s, r]) => `${v}|${s}|${r}`));
    for (const v of ["full_ft", "cache_conditioned"]) {
      for (const s of ["0", "1"]) {
        for (const r of ["0", "1"]) expect(combos.has(`${v}|${s}|${r}`)).toBe(true);
      }
    }
  });

  it("requires --ratios", async () => {
    expect(await main(["sweep-ratio", ...FAST])).toBe(2);
  });
});

describe("trainer (top level)", () => {
  it("unknown or missing commands exit 2; help exits 0", async () => {
    expect(await main([])).toBe(2);
    expect(await main(["bogus"])).toBe(2);
    expect(await main(["help"])).toBe(0);
    expect(await main(["--help"])).toBe(0);
  });
});
