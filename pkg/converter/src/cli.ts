/**
 * convert <model.onnx> <out.json> [--probes N] [--engine "python3 -m siglass"]
 *
 * Exit codes: 0 converted (report on stdout), 3 unsupported operators,
 * 1 I/O or decode failure.
 */

import { readFileSync, writeFileSync } from 'node:fs';
import { dirname, join, resolve } from 'node:path';
import { fileURLToPath } from 'node:url';

import { convertModel } from './convert.js';
import { serializeIr } from './ir.js';
import { decodeModel } from './onnx.js';
import { runProbes } from './probe.js';

export function defaultEnginePythonPath(): string {
  // repository layout: converter/ sits beside the engine's src/
  return resolve(join(dirname(fileURLToPath(import.meta.url)), '..', '..', 'src'));
}

export function main(argv: string[]): number {
  const args = [...argv];
  let probes = 0;
  let engine = ['python3', '-m', 'siglass'];
  const positional: string[] = [];
  while (args.length) {
    const arg = args.shift()!;
    if (arg === '--probes') probes = Number(args.shift());
    else if (arg === '--engine') engine = String(args.shift()).split(/\s+/);
    else positional.push(arg);
  }
  if (positional.length !== 2) {
    console.error('usage: convert <model.onnx> <out.json> [--probes N] [--engine CMD]');
    return 1;
  }
  const [onnxPath, outPath] = positional;

  let buf: Uint8Array;
  try {
    buf = readFileSync(onnxPath);
  } catch (err) {
    console.error(`cannot read ${onnxPath}: ${(err as Error).message}`);
    return 1;
  }
  let result;
  try {
    result = convertModel(decodeModel(buf));
  } catch (err) {
    console.error(`decode failed: ${(err as Error).message}`);
    return 1;
  }
  const { ir, report } = result;
  if (!report.supported || ir === null) {
    console.log(JSON.stringify(report, null, 2));
    return 3;
  }
  writeFileSync(outPath, serializeIr(ir));
  if (probes > 0) {
    try {
      const outcome = runProbes(ir, outPath, probes, {
        command: engine,
        pythonPath: defaultEnginePythonPath(),
      });
      report.probe_count = outcome.count;
      report.max_deviation_vs_engine = outcome.maxDeviationVsEngine;
      if (outcome.maxDeviationVsEngine > 1e-5) {
        report.supported = false;
        report.notes.push('forward-pass deviation exceeds 1e-5');
      }
    } catch (err) {
      report.notes.push(`probe run failed: ${(err as Error).message}`);
      console.log(JSON.stringify(report, null, 2));
      return 1;
    }
  }
  console.log(JSON.stringify(report, null, 2));
  return report.supported ? 0 : 3;
}

if (process.argv[1] && resolve(process.argv[1]) === fileURLToPath(import.meta.url)) {
  process.exit(main(process.argv.slice(2)));
}
