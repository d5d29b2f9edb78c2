/**
 * Wire-format decoding against hand-assembled byte sequences, so the
 * decoder is validated independently of the fixture generator.
 */

import { describe, expect, it } from 'vitest';

import { asInt, asString, fields, float32Values, int64Values } from '../src/proto.js';
import { decodeModel } from '../src/onnx.js';

describe('protobuf wire format', () => {
  it('decodes varint fields including negative int64', () => {
    // field 3 (varint) = 300: tag 0x18, payload 0xAC 0x02
    const buf = Uint8Array.from([0x18, 0xac, 0x02]);
    const [f] = [...fields(buf)];
    expect(f.field).toBe(3);
    expect(asInt(f)).toBe(300n);

    // field 1 (varint) = -2 as two's-complement 64-bit (10 bytes)
    const neg = Uint8Array.from([
      0x08, 0xfe, 0xff, 0xff, 0xff, 0xff, 0xff, 0xff, 0xff, 0xff, 0x01,
    ]);
    const [g] = [...fields(neg)];
    expect(asInt(g)).toBe(-2n);
  });

  it('decodes length-delimited strings', () => {
    // field 4 (LD) = "Relu": tag 0x22, len 4
    const buf = Uint8Array.from([0x22, 0x04, 0x52, 0x65, 0x6c, 0x75]);
    const [f] = [...fields(buf)];
    expect(f.field).toBe(4);
    expect(asString(f)).toBe('Relu');
  });

  it('accepts packed and unpacked repeated int64', () => {
    // packed: field 1 (LD) with varints [1, 2, 150]
    const packed = Uint8Array.from([0x0a, 0x04, 0x01, 0x02, 0x96, 0x01]);
    const [p] = [...fields(packed)];
    expect(int64Values(p).map(Number)).toEqual([1, 2, 150]);
    // unpacked: two separate varint fields
    const unpacked = Uint8Array.from([0x08, 0x01, 0x08, 0x02]);
    const vals = [...fields(unpacked)].flatMap((f) => int64Values(f).map(Number));
    expect(vals).toEqual([1, 2]);
  });

  it('decodes packed float32', () => {
    // field 7 (LD): two IEEE floats 1.0, -2.5
    const payload = new Uint8Array(8);
    const view = new DataView(payload.buffer);
    view.setFloat32(0, 1.0, true);
    view.setFloat32(4, -2.5, true);
    const buf = Uint8Array.from([0x3a, 0x08, ...payload]);
    const [f] = [...fields(buf)];
    expect(float32Values(f)).toEqual([1.0, -2.5]);
  });

  it('rejects truncated input', () => {
    expect(() => [...fields(Uint8Array.from([0x0a, 0x05, 0x01]))]).toThrow();
    expect(() => decodeModel(Uint8Array.from([0x3a]))).toThrow();
  });
});
