/**
 * Minimal protobuf wire-format reader: just enough to decode ONNX model
 * files without a protobuf dependency. Supports varint (0), 64-bit (1),
 * length-delimited (2) and 32-bit (5) wire types; packed and unpacked
 * repeated scalars.
 */

export interface WireField {
  field: number;
  wire: number;
  /** present for wire type 2 */
  data?: Uint8Array;
  /** present for wire type 0 */
  value?: bigint;
  /** present for wire types 1 and 5 (raw little-endian bytes) */
  fixed?: Uint8Array;
}

export class ProtoError extends Error {}

function readVarint(buf: Uint8Array, pos: number): [bigint, number] {
  let result = 0n;
  let shift = 0n;
  for (let i = 0; i < 10; i++) {
    if (pos >= buf.length) throw new ProtoError('truncated varint');
    const byte = buf[pos++];
    result |= BigInt(byte & 0x7f) << shift;
    if ((byte & 0x80) === 0) return [BigInt.asUintN(64, result), pos];
    shift += 7n;
  }
  throw new ProtoError('varint longer than 10 bytes');
}

/** Iterate the top-level fields of one message. */
export function* fields(buf: Uint8Array): Generator<WireField> {
  let pos = 0;
  while (pos < buf.length) {
    let key: bigint;
    [key, pos] = readVarint(buf, pos);
    const field = Number(key >> 3n);
    const wire = Number(key & 7n);
    if (field === 0) throw new ProtoError('field number 0');
    switch (wire) {
      case 0: {
        let value: bigint;
        [value, pos] = readVarint(buf, pos);
        yield { field, wire, value };
        break;
      }
      case 1: {
        if (pos + 8 > buf.length) throw new ProtoError('truncated fixed64');
        yield { field, wire, fixed: buf.subarray(pos, pos + 8) };
        pos += 8;
        break;
      }
      case 2: {
        let len: bigint;
        [len, pos] = readVarint(buf, pos);
        const n = Number(len);
        if (pos + n > buf.length) throw new ProtoError('truncated bytes field');
        yield { field, wire, data: buf.subarray(pos, pos + n) };
        pos += n;
        break;
      }
      case 5: {
        if (pos + 4 > buf.length) throw new ProtoError('truncated fixed32');
        yield { field, wire, fixed: buf.subarray(pos, pos + 4) };
        pos += 4;
        break;
      }
      default:
        throw new ProtoError(`unsupported wire type ${wire}`);
    }
  }
}

export function asInt(f: WireField): bigint {
  if (f.wire !== 0 || f.value === undefined) throw new ProtoError('expected varint');
  return BigInt.asIntN(64, f.value);
}

export function asBytes(f: WireField): Uint8Array {
  if (f.wire !== 2 || f.data === undefined) throw new ProtoError('expected bytes');
  return f.data;
}

export function asString(f: WireField): string {
  return new TextDecoder().decode(asBytes(f));
}

export function asFloat32(f: WireField): number {
  if (f.wire !== 5 || f.fixed === undefined) throw new ProtoError('expected fixed32');
  return new DataView(f.fixed.buffer, f.fixed.byteOffset, 4).getFloat32(0, true);
}

/** Packed (length-delimited) or single unpacked int64 values. */
export function int64Values(f: WireField): bigint[] {
  if (f.wire === 0) return [asInt(f)];
  const data = asBytes(f);
  const out: bigint[] = [];
  let pos = 0;
  while (pos < data.length) {
    let v: bigint;
    [v, pos] = readVarint(data, pos);
    out.push(BigInt.asIntN(64, v));
  }
  return out;
}

/** Packed or single unpacked float32 values. */
export function float32Values(f: WireField): number[] {
  if (f.wire === 5) return [asFloat32(f)];
  const data = asBytes(f);
  if (data.length % 4 !== 0) throw new ProtoError('bad packed float payload');
  const view = new DataView(data.buffer, data.byteOffset, data.byteLength);
  const out: number[] = [];
  for (let i = 0; i < data.length; i += 4) out.push(view.getFloat32(i, true));
  return out;
}
