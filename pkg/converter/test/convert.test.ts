/**
 * Round-trip validation: for each toy ONNX fixture the converted IR must
 * reproduce the source runtime's recorded outputs within 1e-5 max-abs on
 * 8 probes, both through this package's evaluator and through the engine's
 * forward pass invoked as a subprocess.
 */

import { mkdtempSync, readFileSync, rmSync, writeFileSync } from 'node:fs';
import { tmpdir } from 'node:os';
import { dirname, join, resolve } from 'node:path';
import { fileURLToPath } from 'node:url';
import { afterAll, describe, expect, it } from 'vitest';

import { convertModel } from '../src/convert.js';
import { serializeIr } from '../src/ir.js';
import { decodeModel } from '../src/onnx.js';
import { engineForward, maxAbsDeviation } from '../src/probe.js';
import { forward, nd } from '../src/runtime.js';
import { main as convertCli } from '../src/cli.js';

const HERE = dirname(fileURLToPath(import.meta.url));
const FIXTURES = resolve(HERE, '..', 'fixtures');
const ENGINE_SRC = resolve(HERE, '..', '..', 'src');
const TOLERANCE = 1e-5;

interface GoldenProbe {
  input: { shape: number[]; data: number[] };
  expected: { shape: number[]; data: number[] };
}

interface Golden {
  model: string;
  input_shape: number[];
  probes: GoldenProbe[];
}

const scratch = mkdtempSync(join(tmpdir(), 'convert-test-'));
afterAll(() => rmSync(scratch, { recursive: true, force: true }));

function loadFixture(name: string) {
  const buf = readFileSync(join(FIXTURES, `${name}.onnx`));
  const golden = JSON.parse(
    readFileSync(join(FIXTURES, `${name}.golden.json`), 'utf-8'),
  ) as Golden;
  return { buf, golden };
}

describe.each(['conv_relu', 'unet_mini', 'cam_head', 'misc_ops'])('fixture %s', (name) => {
  const { buf, golden } = loadFixture(name);
  const { ir, report } = convertModel(decodeModel(buf));

  it('converts with every node mapped', () => {
    expect(report.supported).toBe(true);
    expect(ir).not.toBeNull();
    expect(report.unsupported).toEqual([]);
    expect(Object.keys(report.node_map).length).toBeGreaterThan(0);
  });

  it('matches the source runtime on 8 probes (reference evaluator)', () => {
    expect(golden.probes).toHaveLength(8);
    let worst = 0;
    for (const probe of golden.probes) {
      const x = nd(probe.input.shape, Float64Array.from(probe.input.data));
      const got = forward(ir!, [x])[0];
      const want = nd(probe.expected.shape, Float64Array.from(probe.expected.data));
      expect(got.shape).toEqual(want.shape);
      worst = Math.max(worst, maxAbsDeviation(got, want));
    }
    expect(worst).toBeLessThanOrEqual(TOLERANCE);
  });

  it('matches the source runtime on 8 probes (engine forward)', { timeout: 120_000 }, () => {
    const irPath = join(scratch, `${name}.json`);
    writeFileSync(irPath, serializeIr(ir!));
    let worst = 0;
    for (const probe of golden.probes) {
      const x = nd(probe.input.shape, Float64Array.from(probe.input.data));
      const outs = engineForward(irPath, x, {
        command: ['python3', '-m', 'siglass'],
        pythonPath: ENGINE_SRC,
      });
      const want = nd(probe.expected.shape, Float64Array.from(probe.expected.data));
      worst = Math.max(worst, maxAbsDeviation(outs[0], want));
    }
    expect(worst).toBeLessThanOrEqual(TOLERANCE);
  });

  it('is idempotent', () => {
    const again = convertModel(decodeModel(buf));
    expect(serializeIr(again.ir!)).toBe(serializeIr(ir!));
  });
});

describe('unsupported operators', () => {
  it('reports the offending node and fails with exit code 3', () => {
    const buf = readFileSync(join(FIXTURES, 'tanh_model.onnx'));
    const { ir, report } = convertModel(decodeModel(buf));
    expect(ir).toBeNull();
    expect(report.supported).toBe(false);
    expect(report.unsupported).toHaveLength(1);
    expect(report.unsupported[0].op_type).toBe('Tanh');
    expect(report.unsupported[0].name).toBe('tanh');

    const out = join(scratch, 'tanh.json');
    const code = convertCli([join(FIXTURES, 'tanh_model.onnx'), out]);
    expect(code).toBe(3);
  });
});

describe('cli conversion with probes', () => {
  it('converts conv_relu and validates against the engine', { timeout: 120_000 }, () => {
    const out = join(scratch, 'cli_conv_relu.json');
    const code = convertCli([join(FIXTURES, 'conv_relu.onnx'), out, '--probes', '4']);
    expect(code).toBe(0);
    const doc = JSON.parse(readFileSync(out, 'utf-8'));
    expect(doc.ir_version).toBe(1);
    expect(doc.nodes).toHaveLength(3);
  });
});
