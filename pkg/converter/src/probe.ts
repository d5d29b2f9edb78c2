/**
 * Probe-input generation and engine invocation for conversion validation.
 * Probes are standard normal, generated by a SplitMix64 stream with
 * Box-Muller so any runtime can reproduce them from the seed.
 */

import { spawnSync } from 'node:child_process';
import { mkdtempSync, readFileSync, rmSync, writeFileSync } from 'node:fs';
import { tmpdir } from 'node:os';
import { join } from 'node:path';

import { IrDocument, irTensorValues } from './ir.js';
import { NdArray, forward, nd } from './runtime.js';

const MASK64 = (1n << 64n) - 1n;

function splitmix64(state: bigint): [bigint, bigint] {
  state = (state + 0x9e3779b97f4a7c15n) & MASK64;
  let z = state;
  z = ((z ^ (z >> 30n)) * 0xbf58476d1ce4e5b9n) & MASK64;
  z = ((z ^ (z >> 27n)) * 0x94d049bb133111ebn) & MASK64;
  return [state, z ^ (z >> 31n)];
}

export function normalProbe(shape: number[], seed: number): NdArray {
  const count = shape.reduce((a, b) => a * b, 1);
  const out = new Float64Array(count);
  let state = BigInt(seed) & MASK64;
  const unit = (): number => {
    let v: bigint;
    [state, v] = splitmix64(state);
    return Number((v >> 11n) + 1n) * 2 ** -53;
  };
  let i = 0;
  while (i < count) {
    const r = Math.sqrt(-2.0 * Math.log(unit()));
    const theta = 2.0 * Math.PI * unit();
    out[i++] = r * Math.cos(theta);
    if (i < count) out[i++] = r * Math.sin(theta);
  }
  return nd(shape, out);
}

export interface EngineOptions {
  /** command tokens, e.g. ["python3", "-m", "siglass"] */
  command: string[];
  /** extra PYTHONPATH entry for uninstalled source trees */
  pythonPath?: string;
}

/** Run the engine's forward pass on one input via the subprocess CLI. */
export function engineForward(
  irPath: string, input: NdArray, options: EngineOptions,
): NdArray[] {
  const dir = mkdtempSync(join(tmpdir(), 'onnx2ir-'));
  try {
    const inPath = join(dir, 'input.json');
    const outPath = join(dir, 'output.json');
    writeFileSync(inPath, JSON.stringify({ shape: input.shape, data: Array.from(input.data) }));
    const env = { ...process.env };
    if (options.pythonPath) {
      env.PYTHONPATH = options.pythonPath +
        (process.env.PYTHONPATH ? `:${process.env.PYTHONPATH}` : '');
    }
    const proc = spawnSync(
      options.command[0],
      [...options.command.slice(1), 'forward', '--model', irPath,
       '--input', inPath, '--out', outPath],
      { env, encoding: 'utf-8' },
    );
    if (proc.status !== 0) {
      throw new Error(`engine forward failed (${proc.status}): ${proc.stderr}`);
    }
    const payload = JSON.parse(readFileSync(outPath, 'utf-8'));
    return payload.outputs.map((t: { shape: number[] }) =>
      nd(t.shape, irTensorValues(t as never)),
    );
  } finally {
    rmSync(dir, { recursive: true, force: true });
  }
}

export function maxAbsDeviation(a: NdArray, b: NdArray): number {
  if (a.data.length !== b.data.length) {
    throw new Error(`output sizes differ: ${a.data.length} vs ${b.data.length}`);
  }
  let worst = 0;
  for (let i = 0; i < a.data.length; i++) {
    const d = Math.abs(a.data[i] - b.data[i]);
    if (d > worst) worst = d;
  }
  return worst;
}

export interface ProbeOutcome {
  count: number;
  maxDeviationVsEngine: number;
}

/** Compare this package's evaluator with the engine on random probes. */
export function runProbes(
  ir: IrDocument, irPath: string, probes: number, options: EngineOptions, seed = 7,
): ProbeOutcome {
  let worst = 0;
  for (let p = 0; p < probes; p++) {
    const input = normalProbe(ir.inputs[0].shape, seed + p);
    const ours = forward(ir, [input]);
    const theirs = engineForward(irPath, input, options);
    for (let k = 0; k < ours.length; k++) {
      worst = Math.max(worst, maxAbsDeviation(ours[k], theirs[k]));
    }
  }
  return { count: probes, maxDeviationVsEngine: worst };
}
