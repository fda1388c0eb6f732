/**
 * Deterministic seeded PRNG (splitmix64) so every experiment is
 * byte-reproducible from its seed, independent of Math.random.
 */

const MASK64 = (1n << 64n) - 1n;

/** One splitmix64 step: returns [nextState, output]. */
export function splitmix64(state: bigint): [bigint, bigint] {
  let s = (state + 0x9e3779b97f4a7c15n) & MASK64;
  let z = s;
  z = ((z ^ (z >> 30n)) * 0xbf58476d1ce4e5b9n) & MASK64;
  z = ((z ^ (z >> 27n)) * 0x94d049bb133111ebn) & MASK64;
  z = z ^ (z >> 31n);
  return [s, z & MASK64];
}

/** Derive an independent stream seed from a master seed and a label. */
export function mixSeed(master: number | bigint, ...labels: (number | string)[]): bigint {
  let state = BigInt(master) & MASK64;
  for (const label of labels) {
    const parts: bigint[] = [];
    if (typeof label === "number") {
      parts.push(BigInt(Math.trunc(label)) & MASK64);
    } else {
      for (let i = 0; i < label.length; i++) parts.push(BigInt(label.charCodeAt(i)));
      parts.push(0x100000000n + BigInt(label.length));
    }
    for (const p of parts) {
      let out: bigint;
      [state, out] = splitmix64((state ^ p) & MASK64);
      state = out;
    }
  }
  return state;
}

/** Stateful convenience wrapper around splitmix64. */
export class Rng {
  private state: bigint;

  constructor(seed: number | bigint) {
    this.state = BigInt(seed) & MASK64;
  }

  nextU64(): bigint {
    const [s, z] = splitmix64(this.state);
    this.state = s;
    return z;
  }

  /** Uniform float in [0, 1) with 53 bits of entropy. */
  float(): number {
    return Number(this.nextU64() >> 11n) / 2 ** 53;
  }

  /** Uniform integer in [0, n). */
  int(n: number): number {
    if (n <= 0) throw new RangeError(`int() requires n > 0, got ${n}`);
    return Math.floor(this.float() * n);
  }

  /** Standard normal via Box-Muller. */
  gauss(): number {
    const u1 = 1 - this.float(); // avoid log(0)
    const u2 = this.float();
    return Math.sqrt(-2 * Math.log(u1)) * Math.cos(2 * Math.PI * u2);
  }

  /** In-place Fisher-Yates shuffle. */
  shuffle<T>(arr: T[]): void {
    for (let i = arr.length - 1; i > 0; i--) {
      const j = this.int(i + 1);
      [arr[i], arr[j]] = [arr[j], arr[i]];
    }
  }

  /** Fork an independent child stream. */
  fork(...labels: (number | string)[]): Rng {
    return new Rng(mixSeed(this.nextU64(), ...labels));
  }
}
