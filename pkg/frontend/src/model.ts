/**
 * TinyLM: a small decoder-only transformer with an injectable per-layer
 * key/value cache, so the prompt's attention state can be produced by
 * one model (the frozen "base") and consumed by another (the trainable
 * "decode" model).
 *
 * Architecture: token + learned positional embeddings, pre-LayerNorm
 * blocks (causal multi-head self-attention, then a 4x ReLU MLP), final
 * LayerNorm, and a linear head. All weights are initialized from a
 * seeded PRNG so runs are reproducible.
 */

import * as tf from "@tensorflow/tfjs";
import { createHash } from "node:crypto";
import { Rng } from "./rng.js";

export interface ModelConfig {
  layers: number;
  width: number;
  heads: number;
  context: number;
  vocab: number;
}

/** Reference architecture size. */
export const DEFAULT_MODEL: Omit<ModelConfig, "vocab"> = {
  layers: 4,
  width: 128,
  heads: 4,
  context: 256,
};

/**
 * Per-layer key/value tensors for a prompt, each of shape
 * [batch, heads, seqLen, headDim], plus the raw token ids the cache
 * covers (prefix caches track token ids — that is what prefix matching
 * and incremental extension key on). The tensors are plain constants
 * with no connection to the parameters of the producing model, so no
 * gradient can flow through a cache into its producer.
 */
export class PromptCache {
  readonly length: number;
  readonly batch: number;

  constructor(
    readonly layers: { k: tf.Tensor4D; v: tf.Tensor4D }[],
    readonly tokens: number[][],
  ) {
    this.batch = tokens.length;
    this.length = tokens[0]?.length ?? 0;
  }

  /** Cache restricted to the first n positions (a causal-prefix slice). */
  slice(n: number): PromptCache {
    if (n < 0 || n > this.length) {
      throw new RangeError(`slice length ${n} outside [0, ${this.length}]`);
    }
    const layers = this.layers.map(({ k, v }) => ({
      k: tf.slice(k, [0, 0, 0, 0], [this.batch, k.shape[1], n, k.shape[3]]) as tf.Tensor4D,
      v: tf.slice(v, [0, 0, 0, 0], [this.batch, v.shape[1], n, v.shape[3]]) as tf.Tensor4D,
    }));
    return new PromptCache(layers, this.tokens.map((row) => row.slice(0, n)));
  }

  /** Select a single batch row (keeping a batch dimension of 1). */
  row(b: number): PromptCache {
    if (b < 0 || b >= this.batch) throw new RangeError(`row ${b} outside [0, ${this.batch})`);
    const layers = this.layers.map(({ k, v }) => ({
      k: tf.slice(k, [b, 0, 0, 0], [1, k.shape[1], this.length, k.shape[3]]) as tf.Tensor4D,
      v: tf.slice(v, [b, 0, 0, 0], [1, v.shape[1], this.length, v.shape[3]]) as tf.Tensor4D,
    }));
    return new PromptCache(layers, [this.tokens[b].slice()]);
  }

  dispose(): void {
    for (const { k, v } of this.layers) {
      k.dispose();
      v.dispose();
    }
  }

  keep(): void {
    for (const { k, v } of this.layers) {
      tf.keep(k);
      tf.keep(v);
    }
  }
}

export interface BlockParams {
  ln1g: tf.Variable;
  ln1b: tf.Variable;
  wq: tf.Variable;
  wk: tf.Variable;
  wv: tf.Variable;
  wo: tf.Variable;
  ln2g: tf.Variable;
  ln2b: tf.Variable;
  wUp: tf.Variable;
  bUp: tf.Variable;
  wDown: tf.Variable;
  bDown: tf.Variable;
}

export interface ForwardResult {
  /** [batch, newTokens, vocab] */
  logits: tf.Tensor3D;
  /** Key/values covering pastLen + newTokens positions, per layer. */
  cache: PromptCache;
}

/** GELU (tanh approximation) — smooth, unlike ReLU, so gradients are
 * well-defined everywhere and finite-difference checks are meaningful. */
function gelu(x: tf.Tensor): tf.Tensor {
  const cubed = tf.mul(tf.mul(x, x), x);
  const inner = tf.mul(tf.add(x, tf.mul(cubed, 0.044715)), Math.sqrt(2 / Math.PI));
  return tf.mul(tf.mul(x, 0.5), tf.add(tf.tanh(inner), 1));
}

function layerNorm(x: tf.Tensor3D, gain: tf.Variable, bias: tf.Variable): tf.Tensor3D {
  const { mean, variance } = tf.moments(x, -1, true);
  return tf.add(tf.mul(tf.div(tf.sub(x, mean), tf.sqrt(tf.add(variance, 1e-5))), gain), bias) as tf.Tensor3D;
}

let nextModelId = 0;

export class TinyLM {
  readonly cfg: ModelConfig;
  /** Unique per-instance prefix so variable names never collide in the tf engine. */
  readonly id: string;
  readonly tokEmb: tf.Variable;
  readonly prevEmb: tf.Variable;
  readonly posEmb: tf.Variable;
  readonly blocks: BlockParams[];
  readonly lnFg: tf.Variable;
  readonly lnFb: tf.Variable;
  readonly head: tf.Variable;

  constructor(cfg: ModelConfig, init: (shape: number[]) => tf.Tensor) {
    if (cfg.width % cfg.heads !== 0) {
      throw new RangeError(`width ${cfg.width} not divisible by heads ${cfg.heads}`);
    }
    this.cfg = cfg;
    this.id = `m${nextModelId++}`;
    const d = cfg.width;
    const name = (s: string) => `${this.id}.${s}`;
    this.tokEmb = tf.variable(init([cfg.vocab, d]), true, name("tokEmb"));
    this.prevEmb = tf.variable(init([cfg.vocab, d]), true, name("prevEmb"));
    this.posEmb = tf.variable(init([cfg.context, d]), true, name("posEmb"));
    this.blocks = [];
    for (let l = 0; l < cfg.layers; l++) {
      this.blocks.push({
        ln1g: tf.variable(tf.ones([d]), true, name(`b${l}.ln1g`)),
        ln1b: tf.variable(tf.zeros([d]), true, name(`b${l}.ln1b`)),
        wq: tf.variable(init([d, d]), true, name(`b${l}.wq`)),
        wk: tf.variable(init([d, d]), true, name(`b${l}.wk`)),
        wv: tf.variable(init([d, d]), true, name(`b${l}.wv`)),
        wo: tf.variable(init([d, d]), true, name(`b${l}.wo`)),
        ln2g: tf.variable(tf.ones([d]), true, name(`b${l}.ln2g`)),
        ln2b: tf.variable(tf.zeros([d]), true, name(`b${l}.ln2b`)),
        wUp: tf.variable(init([d, 4 * d]), true, name(`b${l}.wUp`)),
        bUp: tf.variable(tf.zeros([4 * d]), true, name(`b${l}.bUp`)),
        wDown: tf.variable(init([4 * d, d]), true, name(`b${l}.wDown`)),
        bDown: tf.variable(tf.zeros([d]), true, name(`b${l}.bDown`)),
      });
    }
    this.lnFg = tf.variable(tf.ones([d]), true, name("lnFg"));
    this.lnFb = tf.variable(tf.zeros([d]), true, name("lnFb"));
    this.head = tf.variable(init([d, cfg.vocab]), true, name("head"));
  }

  /**
   * Fresh model with seeded Gaussian(0, 0.02) weight init, plus two
   * mimetic tweaks that make content-matching attention approximately
   * functional at initialization (so retrieval circuits sharpen during
   * training instead of having to emerge from scratch, which is far too
   * slow at toy scale): query/key projections start near a scaled
   * identity, and the previous-token embedding starts near the token
   * embedding so "token X here" aligns with "token X one position back".
   */
  static init(cfg: ModelConfig, seed: number | bigint): TinyLM {
    const rng = new Rng(seed);
    const model = new TinyLM(cfg, (shape) => {
      const n = shape.reduce((a, b) => a * b, 1);
      const data = new Float32Array(n);
      for (let i = 0; i < n; i++) data[i] = 0.02 * rng.gauss();
      return tf.tensor(data, shape);
    });
    tf.tidy(() => {
      const eye = tf.mul(tf.eye(cfg.width), 0.5);
      for (const b of model.blocks) {
        b.wq.assign(tf.add(b.wq, eye));
        b.wk.assign(tf.add(b.wk, eye));
      }
      model.prevEmb.assign(tf.add(tf.mul(model.prevEmb, 0.25), model.tokEmb));
    });
    return model;
  }

  variables(): tf.Variable[] {
    const vars: tf.Variable[] = [this.tokEmb, this.prevEmb, this.posEmb];
    for (const b of this.blocks) {
      vars.push(b.ln1g, b.ln1b, b.wq, b.wk, b.wv, b.wo, b.ln2g, b.ln2b, b.wUp, b.bUp, b.wDown, b.bDown);
    }
    vars.push(this.lnFg, this.lnFb, this.head);
    return vars;
  }

  /** Deep copy with independent variables (used to spawn the decode model). */
  clone(): TinyLM {
    const src = this.variables();
    const copy = new TinyLM(this.cfg, (shape) => tf.zeros(shape));
    const dst = copy.variables();
    for (let i = 0; i < src.length; i++) dst[i].assign(src[i]);
    return copy;
  }

  /** Release all parameter tensors (the instance is unusable afterwards). */
  dispose(): void {
    for (const v of this.variables()) v.dispose();
  }

  /** Exact content hash of all parameters (bit-level, not tolerance-based). */
  checksum(): string {
    const h = createHash("sha256");
    for (const v of this.variables()) {
      h.update(Buffer.from((v.dataSync() as Float32Array).buffer.slice(0)));
    }
    return h.digest("hex");
  }

  /** Float32 snapshots of every parameter, for exact-difference checks. */
  snapshot(): Float32Array[] {
    return this.variables().map((v) => new Float32Array(v.dataSync() as Float32Array));
  }

  /**
   * Run the transformer on `tokens` (shape [batch][newTokens]) appended
   * after an optional cached prefix. New positions attend causally to
   * the cache and to themselves; positional embeddings continue from
   * the cache length.
   *
   * Call inside tf.tidy (and PromptCache.keep() the cache if it must
   * outlive the tidy scope).
   */
  forward(tokens: number[][], past: PromptCache | null = null): ForwardResult {
    const batch = tokens.length;
    const T = tokens[0].length;
    for (const row of tokens) {
      if (row.length !== T) throw new RangeError("ragged token batch");
    }
    const pastLen = past ? past.length : 0;
    if (past && past.batch !== batch) {
      throw new RangeError(`cache batch ${past.batch} != token batch ${batch}`);
    }
    if (pastLen + T > this.cfg.context) {
      throw new RangeError(`sequence length ${pastLen + T} exceeds context ${this.cfg.context}`);
    }
    const { width: d, heads: H } = this.cfg;
    const hd = d / H;

    // Each position embeds its own token plus the preceding token (a
    // previous-token channel, so content-based retrieval of "the value
    // after this key" is expressible in a single attention layer). The
    // first position of the whole sequence has no predecessor and gets
    // a zero previous-token vector (one-hot of -1 is all zeros).
    const prevIds: number[] = [];
    for (let b = 0; b < batch; b++) {
      for (let i = 0; i < T; i++) {
        prevIds.push(i > 0 ? tokens[b][i - 1] : past ? past.tokens[b][pastLen - 1] : -1);
      }
    }
    // One-hot matmul rather than gather: identical result over a small
    // vocabulary, and its gradient is plain matmul (portable across
    // backends).
    const ids = tf.tensor2d(tokens, [batch, T], "int32");
    const oneHot = tf.oneHot(ids.reshape([batch * T]), this.cfg.vocab);
    const prevOneHot = tf.oneHot(tf.tensor1d(prevIds, "int32"), this.cfg.vocab);
    let x = tf.add(
      tf.matMul(oneHot, this.tokEmb),
      tf.matMul(prevOneHot, this.prevEmb),
    ).reshape([batch, T, d]) as tf.Tensor3D;
    const pos = tf.slice(this.posEmb, [pastLen, 0], [T, d]);
    x = tf.add(x, pos.reshape([1, T, d])) as tf.Tensor3D;

    // Additive causal mask: new position i (global pastLen+i) may attend
    // to key positions 0..pastLen+i.
    const S = pastLen + T;
    const maskData = new Float32Array(T * S);
    for (let i = 0; i < T; i++) {
      for (let j = 0; j < S; j++) maskData[i * S + j] = j <= pastLen + i ? 0 : -1e9;
    }
    const mask = tf.tensor(maskData, [1, 1, T, S]);

    const outLayers: { k: tf.Tensor4D; v: tf.Tensor4D }[] = [];
    for (let l = 0; l < this.cfg.layers; l++) {
      const b = this.blocks[l];
      const xn = layerNorm(x, b.ln1g, b.ln1b);
      const split = (w: tf.Variable) =>
        tf
          .matMul(xn.reshape([batch * T, d]), w)
          .reshape([batch, T, H, hd])
          .transpose([0, 2, 1, 3]) as tf.Tensor4D;
      const q = split(b.wq);
      let k = split(b.wk);
      let v = split(b.wv);
      if (past) {
        k = tf.concat([past.layers[l].k, k], 2) as tf.Tensor4D;
        v = tf.concat([past.layers[l].v, v], 2) as tf.Tensor4D;
      }
      outLayers.push({ k, v });
      const scores = tf.add(tf.div(tf.matMul(q, k, false, true), Math.sqrt(hd)), mask);
      const att = tf.softmax(scores, -1);
      const ctx = tf
        .matMul(att, v)
        .transpose([0, 2, 1, 3])
        .reshape([batch * T, d]);
      const attnOut = tf.matMul(ctx, b.wo).reshape([batch, T, d]) as tf.Tensor3D;
      x = tf.add(x, attnOut) as tf.Tensor3D;

      const xm = layerNorm(x, b.ln2g, b.ln2b);
      const hUp = gelu(tf.add(tf.matMul(xm.reshape([batch * T, d]), b.wUp), b.bUp));
      const mlpOut = tf.add(tf.matMul(hUp, b.wDown), b.bDown).reshape([batch, T, d]) as tf.Tensor3D;
      x = tf.add(x, mlpOut) as tf.Tensor3D;
    }

    const xf = layerNorm(x, this.lnFg, this.lnFb);
    const logits = tf.matMul(xf.reshape([batch * T, d]), this.head).reshape([batch, T, this.cfg.vocab]) as tf.Tensor3D;
    const coveredTokens = tokens.map((row, b) => (past ? [...past.tokens[b], ...row] : row.slice()));
    return { logits, cache: new PromptCache(outLayers, coveredTokens) };
  }
}

/**
 * Prefill a batch of prompts through `base` and return the resulting
 * per-layer key/values as constants. Runs outside any gradient scope,
 * so the cache carries no path back to the base parameters; consumers
 * may train against it freely.
 */
export function buildBaseCache(base: TinyLM, prompts: number[][]): PromptCache {
  const n = prompts[0].length;
  if (n > base.cfg.context) {
    throw new RangeError(`prompt length ${n} exceeds context ${base.cfg.context}`);
  }
  let built: PromptCache | null = null;
  tf.tidy(() => {
    const { cache } = base.forward(prompts);
    cache.keep();
    built = cache;
  });
  return built!;
}

/**
 * Greedy decoding. `incremental: true` reuses the KV cache across
 * steps (one new token per forward); `false` recomputes the whole
 * sequence every step. Both must generate identical tokens.
 *
 * An optional `past` cache (covering a strict prefix of `prompt`)
 * substitutes for recomputing those positions; `prompt` must still be
 * the full prompt so full-recompute mode can rebuild it.
 */
export function generate(
  model: TinyLM,
  prompt: number[],
  maxNew: number,
  opts: { incremental?: boolean; past?: PromptCache | null } = {},
): number[] {
  const incremental = opts.incremental ?? true;
  const injected = opts.past ?? null;
  if (injected && injected.batch !== 1) throw new RangeError("generate() takes a batch-1 cache");
  if (injected && injected.length >= prompt.length) {
    throw new RangeError(`injected cache (${injected.length}) must cover a strict prefix of the prompt (${prompt.length})`);
  }
  const out: number[] = [];
  if (maxNew <= 0) return out;
  if (incremental) {
    let cache: PromptCache | null = null;
    let next: number | null = null;
    tf.tidy(() => {
      if (injected) injected.keep();
      const fresh = prompt.slice(injected ? injected.length : 0);
      const res = model.forward([fresh], injected);
      res.cache.keep();
      cache = res.cache;
      next = (tf.argMax(tf.slice(res.logits, [0, fresh.length - 1, 0], [1, 1, model.cfg.vocab]), -1).dataSync() as Int32Array)[0];
    });
    for (let t = 0; t < maxNew; t++) {
      out.push(next!);
      if (t === maxNew - 1) break;
      const prev: PromptCache = cache!;
      tf.tidy(() => {
        const res = model.forward([[out[out.length - 1]]], prev);
        res.cache.keep();
        cache = res.cache;
        next = (tf.argMax(res.logits, -1).dataSync() as Int32Array)[0];
      });
      prev.dispose();
    }
    cache!.dispose();
  } else {
    for (let t = 0; t < maxNew; t++) {
      const seq = [...prompt, ...out];
      const next = tf.tidy(() => {
        const res = model.forward([seq]);
        return (tf.argMax(tf.slice(res.logits, [0, seq.length - 1, 0], [1, 1, model.cfg.vocab]), -1).dataSync() as Int32Array)[0];
      });
      out.push(next);
    }
  }
  return out;
}
