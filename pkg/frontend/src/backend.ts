/**
 * TensorFlow.js backend selection: prefer the WASM backend (roughly an
 * order of magnitude faster than the pure-JS CPU backend for this
 * workload), falling back to CPU if WASM is unavailable.
 */

import * as tf from "@tensorflow/tfjs";

let initialized: Promise<string> | null = null;

export function initBackend(): Promise<string> {
  initialized ??= (async () => {
    try {
      await import("@tensorflow/tfjs-backend-wasm");
      await tf.setBackend("wasm");
    } catch {
      await tf.setBackend("cpu");
    }
    await tf.ready();
    return tf.getBackend();
  })();
  return initialized;
}
