/**
 * Decoders for the subset of ONNX protobuf messages the converter needs:
 * ModelProto, GraphProto, NodeProto, AttributeProto, TensorProto,
 * ValueInfoProto and the shape messages.
 */

import {
  ProtoError,
  WireField,
  asBytes,
  asFloat32,
  asInt,
  asString,
  fields,
  float32Values,
  int64Values,
} from './proto.js';

export const TensorDataType = {
  FLOAT: 1,
  INT64: 7,
  DOUBLE: 11,
} as const;

export interface OnnxTensor {
  name: string;
  dims: number[];
  dataType: number;
  raw?: Uint8Array;
  floatData: number[];
  doubleData: number[];
  int64Data: bigint[];
}

export interface OnnxAttribute {
  name: string;
  type: number;
  i?: bigint;
  f?: number;
  s?: string;
  ints: bigint[];
  floats: number[];
  tensor?: OnnxTensor;
}

export interface OnnxNode {
  name: string;
  opType: string;
  domain: string;
  inputs: string[];
  outputs: string[];
  attrs: Map<string, OnnxAttribute>;
}

export interface OnnxValueInfo {
  name: string;
  /** dim_value entries; dynamic dims (dim_param / 0) come through as 0 */
  dims: number[];
}

export interface OnnxGraph {
  name: string;
  nodes: OnnxNode[];
  initializers: OnnxTensor[];
  inputs: OnnxValueInfo[];
  outputs: OnnxValueInfo[];
}

export interface OnnxModel {
  irVersion: number;
  opsetVersion: number;
  graph: OnnxGraph;
}

function decodeTensor(buf: Uint8Array): OnnxTensor {
  const t: OnnxTensor = {
    name: '', dims: [], dataType: 0, floatData: [], doubleData: [], int64Data: [],
  };
  for (const f of fields(buf)) {
    switch (f.field) {
      case 1: t.dims.push(...int64Values(f).map(Number)); break;
      case 2: t.dataType = Number(asInt(f)); break;
      case 4: t.floatData.push(...float32Values(f)); break;
      case 7: t.int64Data.push(...int64Values(f)); break;
      case 8: t.name = asString(f); break;
      case 9: t.raw = asBytes(f); break;
      case 10: {
        if (f.wire === 1 && f.fixed) {
          t.doubleData.push(new DataView(f.fixed.buffer, f.fixed.byteOffset, 8).getFloat64(0, true));
        } else {
          const data = asBytes(f);
          const view = new DataView(data.buffer, data.byteOffset, data.byteLength);
          for (let i = 0; i < data.length; i += 8) t.doubleData.push(view.getFloat64(i, true));
        }
        break;
      }
      default: break; // segment/external data unsupported; ignored fields are benign
    }
  }
  return t;
}

/** Materialize tensor contents as float64 values. */
export function tensorValues(t: OnnxTensor): Float64Array {
  const count = t.dims.reduce((a, b) => a * b, 1);
  if (t.raw && t.raw.length > 0) {
    const view = new DataView(t.raw.buffer, t.raw.byteOffset, t.raw.byteLength);
    const out = new Float64Array(count);
    if (t.dataType === TensorDataType.FLOAT) {
      for (let i = 0; i < count; i++) out[i] = view.getFloat32(i * 4, true);
    } else if (t.dataType === TensorDataType.DOUBLE) {
      for (let i = 0; i < count; i++) out[i] = view.getFloat64(i * 8, true);
    } else if (t.dataType === TensorDataType.INT64) {
      for (let i = 0; i < count; i++) out[i] = Number(view.getBigInt64(i * 8, true));
    } else {
      throw new ProtoError(`tensor '${t.name}': unsupported data type ${t.dataType}`);
    }
    return out;
  }
  if (t.floatData.length) return Float64Array.from(t.floatData);
  if (t.doubleData.length) return Float64Array.from(t.doubleData);
  if (t.int64Data.length) return Float64Array.from(t.int64Data.map(Number));
  if (count === 0) return new Float64Array(0);
  throw new ProtoError(`tensor '${t.name}': no data payload`);
}

function decodeAttribute(buf: Uint8Array): OnnxAttribute {
  const a: OnnxAttribute = { name: '', type: 0, ints: [], floats: [] };
  for (const f of fields(buf)) {
    switch (f.field) {
      case 1: a.name = asString(f); break;
      case 2: a.f = asFloat32(f); break;
      case 3: a.i = asInt(f); break;
      case 4: a.s = asString(f); break;
      case 5: a.tensor = decodeTensor(asBytes(f)); break;
      case 7: a.floats.push(...float32Values(f)); break;
      case 8: a.ints.push(...int64Values(f)); break;
      case 20: a.type = Number(asInt(f)); break;
      default: break;
    }
  }
  return a;
}

function decodeNode(buf: Uint8Array): OnnxNode {
  const n: OnnxNode = {
    name: '', opType: '', domain: '', inputs: [], outputs: [], attrs: new Map(),
  };
  for (const f of fields(buf)) {
    switch (f.field) {
      case 1: n.inputs.push(asString(f)); break;
      case 2: n.outputs.push(asString(f)); break;
      case 3: n.name = asString(f); break;
      case 4: n.opType = asString(f); break;
      case 5: {
        const attr = decodeAttribute(asBytes(f));
        n.attrs.set(attr.name, attr);
        break;
      }
      case 7: n.domain = asString(f); break;
      default: break;
    }
  }
  return n;
}

function decodeValueInfo(buf: Uint8Array): OnnxValueInfo {
  const v: OnnxValueInfo = { name: '', dims: [] };
  for (const f of fields(buf)) {
    if (f.field === 1) v.name = asString(f);
    if (f.field === 2) {
      for (const tf of fields(asBytes(f))) {
        if (tf.field !== 1) continue; // tensor_type
        for (const tt of fields(asBytes(tf))) {
          if (tt.field !== 2) continue; // shape
          for (const sd of fields(asBytes(tt))) {
            if (sd.field !== 1) continue; // dim
            let value = 0;
            for (const d of fields(asBytes(sd))) {
              if (d.field === 1) value = Number(asInt(d));
            }
            v.dims.push(value);
          }
        }
      }
    }
  }
  return v;
}

function decodeGraph(buf: Uint8Array): OnnxGraph {
  const g: OnnxGraph = { name: '', nodes: [], initializers: [], inputs: [], outputs: [] };
  for (const f of fields(buf)) {
    switch (f.field) {
      case 1: g.nodes.push(decodeNode(asBytes(f))); break;
      case 2: g.name = asString(f); break;
      case 5: g.initializers.push(decodeTensor(asBytes(f))); break;
      case 11: g.inputs.push(decodeValueInfo(asBytes(f))); break;
      case 12: g.outputs.push(decodeValueInfo(asBytes(f))); break;
      default: break;
    }
  }
  return g;
}

export function decodeModel(buf: Uint8Array): OnnxModel {
  let irVersion = 0;
  let opsetVersion = 0;
  let graph: OnnxGraph | undefined;
  for (const f of fields(buf)) {
    switch (f.field) {
      case 1: irVersion = Number(asInt(f)); break;
      case 7: graph = decodeGraph(asBytes(f)); break;
      case 8: {
        let domain = '';
        let version = 0;
        for (const of of fields(asBytes(f))) {
          if (of.field === 1) domain = asString(of);
          if (of.field === 2) version = Number(asInt(of));
        }
        if (domain === '' || domain === 'ai.onnx') opsetVersion = version;
        break;
      }
      default: break;
    }
  }
  if (!graph) throw new ProtoError('model has no graph');
  return { irVersion, opsetVersion, graph };
}
