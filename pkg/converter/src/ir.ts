/**
 * Target JSON IR (ir_version 1): the engine's model format. Weights are
 * row-major float64; tensors above the inline limit are emitted as base64
 * little-endian to keep documents compact.
 */

export interface IrTensor {
  name: string;
  shape: number[];
  data?: number[];
  data_b64?: string;
}

export interface IrNode {
  name: string;
  op_type: string;
  inputs: string[];
  outputs: string[];
  attrs: Record<string, unknown>;
}

export interface IrSignature {
  name: string;
  shape: number[];
}

export interface IrDocument {
  ir_version: 1;
  inputs: IrSignature[];
  outputs: IrSignature[];
  initializers: IrTensor[];
  nodes: IrNode[];
}

const INLINE_LIMIT = 64;

export function irTensor(name: string, shape: number[], values: Float64Array): IrTensor {
  if (values.length <= INLINE_LIMIT) {
    return { name, shape, data: Array.from(values) };
  }
  const bytes = new Uint8Array(values.length * 8);
  const view = new DataView(bytes.buffer);
  values.forEach((v, i) => view.setFloat64(i * 8, v, true));
  return { name, shape, data_b64: Buffer.from(bytes).toString('base64') };
}

export function irTensorValues(t: IrTensor): Float64Array {
  if (t.data_b64 !== undefined) {
    const raw = Buffer.from(t.data_b64, 'base64');
    const out = new Float64Array(raw.byteLength / 8);
    const view = new DataView(raw.buffer, raw.byteOffset, raw.byteLength);
    for (let i = 0; i < out.length; i++) out[i] = view.getFloat64(i * 8, true);
    return out;
  }
  if (t.data !== undefined) return Float64Array.from(t.data);
  throw new Error(`tensor '${t.name}' has no data`);
}

export function serializeIr(doc: IrDocument): string {
  return JSON.stringify(doc);
}
