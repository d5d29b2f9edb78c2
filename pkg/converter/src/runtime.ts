/**
 * Reference evaluator for the IR operator registry: plain float64 loops,
 * NCHW layout. Used to cross-validate conversions against both the source
 * framework's recorded outputs and the engine's forward pass.
 */

import { IrDocument, IrNode, irTensorValues } from './ir.js';

export interface NdArray {
  shape: number[];
  data: Float64Array;
}

export function nd(shape: number[], data?: Float64Array): NdArray {
  const size = shape.reduce((a, b) => a * b, 1);
  if (data && data.length !== size) {
    throw new Error(`data length ${data.length} does not match shape ${shape}`);
  }
  return { shape: [...shape], data: data ?? new Float64Array(size) };
}

function strides(shape: number[]): number[] {
  const out = new Array(shape.length).fill(1);
  for (let i = shape.length - 2; i >= 0; i--) out[i] = out[i + 1] * shape[i + 1];
  return out;
}

function broadcastShapes(a: number[], b: number[]): number[] {
  const rank = Math.max(a.length, b.length);
  const out: number[] = [];
  for (let i = 0; i < rank; i++) {
    const da = a[a.length - rank + i] ?? 1;
    const db = b[b.length - rank + i] ?? 1;
    if (da !== db && da !== 1 && db !== 1) {
      throw new Error(`shapes [${a}] and [${b}] do not broadcast`);
    }
    out.push(Math.max(da, db));
  }
  return out;
}

function broadcastBinary(
  a: NdArray, b: NdArray, fn: (x: number, y: number) => number,
): NdArray {
  const shape = broadcastShapes(a.shape, b.shape);
  const out = nd(shape);
  const rank = shape.length;
  const sa = strides(a.shape);
  const sb = strides(b.shape);
  const idx = new Array(rank).fill(0);
  for (let flat = 0; flat < out.data.length; flat++) {
    let ia = 0;
    let ib = 0;
    for (let d = 0; d < rank; d++) {
      const dimA = a.shape[a.shape.length - rank + d] ?? 1;
      const dimB = b.shape[b.shape.length - rank + d] ?? 1;
      if (d >= rank - a.shape.length && dimA !== 1) ia += idx[d] * sa[d - (rank - a.shape.length)];
      if (d >= rank - b.shape.length && dimB !== 1) ib += idx[d] * sb[d - (rank - b.shape.length)];
    }
    out.data[flat] = fn(a.data[ia], b.data[ib]);
    for (let d = rank - 1; d >= 0; d--) {
      if (++idx[d] < shape[d]) break;
      idx[d] = 0;
    }
  }
  return out;
}

function map(a: NdArray, fn: (x: number) => number): NdArray {
  const out = nd(a.shape);
  for (let i = 0; i < a.data.length; i++) out.data[i] = fn(a.data[i]);
  return out;
}

interface ConvParams {
  strides: number[];
  pads: number[];
  dilations: number[];
  group: number;
}

function convParams(node: IrNode): ConvParams {
  const attrs = node.attrs as Record<string, number[] | number>;
  return {
    strides: (attrs.strides as number[]) ?? [1, 1],
    pads: (attrs.pads as number[]) ?? [0, 0, 0, 0],
    dilations: (attrs.dilations as number[]) ?? [1, 1],
    group: (attrs.group as number) ?? 1,
  };
}

function conv2d(x: NdArray, w: NdArray, bias: NdArray | null, p: ConvParams): NdArray {
  const [n, c, h, wd] = x.shape;
  const [m, cg, kh, kw] = w.shape;
  const [sh, sw] = p.strides;
  const [pt, pl] = p.pads;
  const [dh, dw] = p.dilations;
  const oh = Math.floor((h + p.pads[0] + p.pads[2] - dh * (kh - 1) - 1) / sh) + 1;
  const ow = Math.floor((wd + p.pads[1] + p.pads[3] - dw * (kw - 1) - 1) / sw) + 1;
  const out = nd([n, m, oh, ow]);
  const mg = m / p.group;
  for (let ni = 0; ni < n; ni++) {
    for (let mi = 0; mi < m; mi++) {
      const g = Math.floor(mi / mg);
      for (let oi = 0; oi < oh; oi++) {
        for (let oj = 0; oj < ow; oj++) {
          let acc = bias ? bias.data[mi] : 0.0;
          for (let ci = 0; ci < cg; ci++) {
            const xc = g * cg + ci;
            for (let ki = 0; ki < kh; ki++) {
              const yi = oi * sh - pt + ki * dh;
              if (yi < 0 || yi >= h) continue;
              for (let kj = 0; kj < kw; kj++) {
                const xj = oj * sw - pl + kj * dw;
                if (xj < 0 || xj >= wd) continue;
                acc +=
                  x.data[((ni * c + xc) * h + yi) * wd + xj] *
                  w.data[((mi * cg + ci) * kh + ki) * kw + kj];
              }
            }
          }
          out.data[((ni * m + mi) * oh + oi) * ow + oj] = acc;
        }
      }
    }
  }
  return out;
}

function convTranspose2d(x: NdArray, w: NdArray, bias: NdArray | null, p: ConvParams,
                         outputPadding: number[]): NdArray {
  const [n, c, h, wd] = x.shape;
  const [, mg, kh, kw] = w.shape;
  const m = mg * p.group;
  const [sh, sw] = p.strides;
  const fullH = (h - 1) * sh + kh + outputPadding[0];
  const fullW = (wd - 1) * sw + kw + outputPadding[1];
  const oh = fullH - p.pads[0] - p.pads[2];
  const ow = fullW - p.pads[1] - p.pads[3];
  const out = nd([n, m, oh, ow]);
  if (bias) {
    for (let ni = 0; ni < n; ni++) {
      for (let mi = 0; mi < m; mi++) {
        out.data.fill(bias.data[mi], ((ni * m + mi) * oh) * ow, ((ni * m + mi) * oh + oh) * ow);
      }
    }
  }
  const cg = c / p.group;
  for (let ni = 0; ni < n; ni++) {
    for (let g = 0; g < p.group; g++) {
      for (let ci = 0; ci < cg; ci++) {
        const xc = g * cg + ci;
        for (let i = 0; i < h; i++) {
          for (let j = 0; j < wd; j++) {
            const v = x.data[((ni * c + xc) * h + i) * wd + j];
            if (v === 0.0) continue;
            for (let ki = 0; ki < kh; ki++) {
              const oi = i * sh + ki - p.pads[0];
              if (oi < 0 || oi >= oh) continue;
              for (let kj = 0; kj < kw; kj++) {
                const oj = j * sw + kj - p.pads[1];
                if (oj < 0 || oj >= ow) continue;
                for (let mi = 0; mi < mg; mi++) {
                  out.data[((ni * m + g * mg + mi) * oh + oi) * ow + oj] +=
                    v * w.data[((xc * mg + mi) * kh + ki) * kw + kj];
                }
              }
            }
          }
        }
      }
    }
  }
  return out;
}

function pool(x: NdArray, node: IrNode, kind: 'max' | 'avg'): NdArray {
  const attrs = node.attrs as Record<string, number[] | number>;
  const [kh, kw] = attrs.kernel_shape as number[];
  const [sh, sw] = (attrs.strides as number[]) ?? [1, 1];
  const pads = (attrs.pads as number[]) ?? [0, 0, 0, 0];
  const countIncludePad = (attrs.count_include_pad as number) ?? 0;
  const [n, c, h, wd] = x.shape;
  const oh = Math.floor((h + pads[0] + pads[2] - kh) / sh) + 1;
  const ow = Math.floor((wd + pads[1] + pads[3] - kw) / sw) + 1;
  const out = nd([n, c, oh, ow]);
  for (let ni = 0; ni < n; ni++) {
    for (let ci = 0; ci < c; ci++) {
      for (let oi = 0; oi < oh; oi++) {
        for (let oj = 0; oj < ow; oj++) {
          let best = -Infinity;
          let sum = 0.0;
          let count = 0;
          for (let ki = 0; ki < kh; ki++) {
            const yi = oi * sh - pads[0] + ki;
            for (let kj = 0; kj < kw; kj++) {
              const xj = oj * sw - pads[1] + kj;
              if (yi < 0 || yi >= h || xj < 0 || xj >= wd) continue;
              const v = x.data[((ni * c + ci) * h + yi) * wd + xj];
              if (v > best) best = v;
              sum += v;
              count += 1;
            }
          }
          const denom = countIncludePad ? kh * kw : count;
          out.data[((ni * c + ci) * oh + oi) * ow + oj] = kind === 'max' ? best : sum / denom;
        }
      }
    }
  }
  return out;
}

function resolveReshape(inShape: number[], target: number[]): number[] {
  const total = inShape.reduce((a, b) => a * b, 1);
  const resolved = target.map((d, i) => (d === 0 ? inShape[i] : d));
  const negIdx = resolved.indexOf(-1);
  if (negIdx >= 0) {
    const rest = resolved.filter((d) => d !== -1).reduce((a, b) => a * b, 1);
    resolved[negIdx] = total / rest;
  }
  return resolved;
}

function transpose(x: NdArray, perm: number[]): NdArray {
  const outShape = perm.map((p) => x.shape[p]);
  const out = nd(outShape);
  const sIn = strides(x.shape);
  const sOut = strides(outShape);
  const idx = new Array(outShape.length).fill(0);
  for (let flat = 0; flat < out.data.length; flat++) {
    let src = 0;
    for (let d = 0; d < perm.length; d++) src += idx[d] * sIn[perm[d]];
    out.data[flat] = x.data[src];
    for (let d = outShape.length - 1; d >= 0; d--) {
      if (++idx[d] < outShape[d]) break;
      idx[d] = 0;
    }
  }
  return out;
}

function slice(x: NdArray, node: IrNode): NdArray {
  const attrs = node.attrs as Record<string, number[]>;
  const starts = attrs.starts;
  const ends = attrs.ends;
  const axes = attrs.axes ?? starts.map((_, i) => i);
  const steps = attrs.steps ?? starts.map(() => 1);
  const windows = x.shape.map((dim) => ({ start: 0, end: dim, step: 1 }));
  axes.forEach((axRaw, k) => {
    const ax = axRaw < 0 ? axRaw + x.shape.length : axRaw;
    const dim = x.shape[ax];
    let s = starts[k] < 0 ? starts[k] + dim : starts[k];
    let e = ends[k] < 0 ? ends[k] + dim : ends[k];
    s = Math.min(Math.max(s, 0), dim);
    e = Math.min(Math.max(e, 0), dim);
    windows[ax] = { start: s, end: e, step: steps[k] };
  });
  const outShape = windows.map((w) => Math.max(0, Math.ceil((w.end - w.start) / w.step)));
  const out = nd(outShape);
  const sIn = strides(x.shape);
  const idx = new Array(outShape.length).fill(0);
  for (let flat = 0; flat < out.data.length; flat++) {
    let src = 0;
    for (let d = 0; d < outShape.length; d++) {
      src += (windows[d].start + idx[d] * windows[d].step) * sIn[d];
    }
    out.data[flat] = x.data[src];
    for (let d = outShape.length - 1; d >= 0; d--) {
      if (++idx[d] < outShape[d]) break;
      idx[d] = 0;
    }
  }
  return out;
}

function upsampleNearest(x: NdArray, scales: number[]): NdArray {
  const outShape = x.shape.map((d, i) => d * scales[i]);
  const out = nd(outShape);
  const sIn = strides(x.shape);
  const idx = new Array(outShape.length).fill(0);
  for (let flat = 0; flat < out.data.length; flat++) {
    let src = 0;
    for (let d = 0; d < outShape.length; d++) src += Math.floor(idx[d] / scales[d]) * sIn[d];
    out.data[flat] = x.data[src];
    for (let d = outShape.length - 1; d >= 0; d--) {
      if (++idx[d] < outShape[d]) break;
      idx[d] = 0;
    }
  }
  return out;
}

function evalNode(node: IrNode, inputs: NdArray[]): NdArray {
  const attrs = node.attrs as Record<string, unknown>;
  switch (node.op_type) {
    case 'Conv':
      return conv2d(inputs[0], inputs[1], inputs[2] ?? null, convParams(node));
    case 'ConvTranspose':
      return convTranspose2d(
        inputs[0], inputs[1], inputs[2] ?? null, convParams(node),
        (attrs.output_padding as number[]) ?? [0, 0],
      );
    case 'Gemm': {
      let a = inputs[0];
      let b = inputs[1];
      if (attrs.transA) a = transpose(a, [1, 0]);
      if (attrs.transB) b = transpose(b, [1, 0]);
      const alpha = (attrs.alpha as number) ?? 1.0;
      const beta = (attrs.beta as number) ?? 1.0;
      const [n, k] = a.shape;
      const m = b.shape[1];
      const out = nd([n, m]);
      for (let i = 0; i < n; i++) {
        for (let j = 0; j < m; j++) {
          let acc = 0.0;
          for (let t = 0; t < k; t++) acc += a.data[i * k + t] * b.data[t * m + j];
          out.data[i * m + j] = alpha * acc;
        }
      }
      if (inputs[2]) {
        const scaled = map(inputs[2], (v) => beta * v);
        return broadcastBinary(out, scaled, (x, y) => x + y);
      }
      return out;
    }
    case 'MatMul': {
      const a = inputs[0];
      const b = inputs[1];
      const k = a.shape[a.shape.length - 1];
      const m = b.shape[1];
      const rows = a.data.length / k;
      const out = nd([...a.shape.slice(0, -1), m]);
      for (let i = 0; i < rows; i++) {
        for (let j = 0; j < m; j++) {
          let acc = 0.0;
          for (let t = 0; t < k; t++) acc += a.data[i * k + t] * b.data[t * m + j];
          out.data[i * m + j] = acc;
        }
      }
      return out;
    }
    case 'Add':
      return broadcastBinary(inputs[0], inputs[1], (x, y) => x + y);
    case 'Sub':
      return broadcastBinary(inputs[0], inputs[1], (x, y) => x - y);
    case 'Neg':
      return map(inputs[0], (x) => -x);
    case 'MulScalar': {
      const c = attrs.value as number;
      return map(inputs[0], (x) => c * x);
    }
    case 'Relu':
      return map(inputs[0], (x) => (x > 0 ? x : 0));
    case 'LeakyRelu': {
      const alpha = (attrs.alpha as number) ?? 0.01;
      return map(inputs[0], (x) => (x > 0 ? x : alpha * x));
    }
    case 'Abs':
      return map(inputs[0], (x) => (x > 0 ? x : -x));
    case 'Sigmoid':
      return map(inputs[0], (x) =>
        x >= 0 ? 1 / (1 + Math.exp(-x)) : Math.exp(x) / (1 + Math.exp(x)),
      );
    case 'MaxPool':
      return pool(inputs[0], node, 'max');
    case 'AveragePool':
      return pool(inputs[0], node, 'avg');
    case 'GlobalAveragePool': {
      const [n, c, h, w] = inputs[0].shape;
      const out = nd([n, c, 1, 1]);
      for (let ni = 0; ni < n; ni++) {
        for (let ci = 0; ci < c; ci++) {
          let acc = 0.0;
          const base = (ni * c + ci) * h * w;
          for (let i = 0; i < h * w; i++) acc += inputs[0].data[base + i];
          out.data[ni * c + ci] = acc / (h * w);
        }
      }
      return out;
    }
    case 'BatchNormalization': {
      const [x, scale, bias, mean, variance] = inputs;
      const eps = (attrs.epsilon as number) ?? 1e-5;
      const [n, c] = x.shape;
      const spatial = x.data.length / (n * c);
      const out = nd(x.shape);
      for (let ni = 0; ni < n; ni++) {
        for (let ci = 0; ci < c; ci++) {
          const g = scale.data[ci] / Math.sqrt(variance.data[ci] + eps);
          const h = bias.data[ci] - g * mean.data[ci];
          const base = (ni * c + ci) * spatial;
          for (let i = 0; i < spatial; i++) out.data[base + i] = g * x.data[base + i] + h;
        }
      }
      return out;
    }
    case 'Flatten': {
      const axis = (attrs.axis as number) ?? 1;
      const lead = inputs[0].shape.slice(0, axis).reduce((a, b) => a * b, 1);
      return nd([lead, inputs[0].data.length / lead], inputs[0].data);
    }
    case 'Reshape':
      return nd(resolveReshape(inputs[0].shape, attrs.shape as number[]), inputs[0].data);
    case 'Transpose': {
      const perm =
        (attrs.perm as number[]) ??
        inputs[0].shape.map((_, i) => inputs[0].shape.length - 1 - i);
      return transpose(inputs[0], perm);
    }
    case 'Concat': {
      const axisRaw = (attrs.axis as number) ?? 0;
      const axis = axisRaw < 0 ? axisRaw + inputs[0].shape.length : axisRaw;
      const outShape = [...inputs[0].shape];
      outShape[axis] = inputs.reduce((a, t) => a + t.shape[axis], 0);
      const out = nd(outShape);
      const outer = outShape.slice(0, axis).reduce((a, b) => a * b, 1);
      const inner = outShape.slice(axis + 1).reduce((a, b) => a * b, 1);
      let offset = 0;
      for (const t of inputs) {
        const block = t.shape[axis] * inner;
        for (let o = 0; o < outer; o++) {
          const src = o * block;
          const dst = o * outShape[axis] * inner + offset;
          out.data.set(t.data.subarray(src, src + block), dst);
        }
        offset += block;
      }
      return out;
    }
    case 'Slice':
      return slice(inputs[0], node);
    case 'UpsampleNearest':
      return upsampleNearest(inputs[0], attrs.scales as number[]);
    default:
      throw new Error(`runtime does not implement ${node.op_type}`);
  }
}

/** Forward pass over the IR document; returns outputs in declared order. */
export function forward(ir: IrDocument, inputs: NdArray[]): NdArray[] {
  const env = new Map<string, NdArray>();
  ir.inputs.forEach((sig, i) => {
    env.set(sig.name, inputs[i]);
  });
  for (const t of ir.initializers) {
    env.set(t.name, nd(t.shape, irTensorValues(t)));
  }
  for (const node of ir.nodes) {
    const args = node.inputs.map((name) => {
      const v = env.get(name);
      if (!v) throw new Error(`node '${node.name}': missing input '${name}'`);
      return v;
    });
    env.set(node.outputs[0], evalNode(node, args));
  }
  return ir.outputs.map((sig) => {
    const v = env.get(sig.name);
    if (!v) throw new Error(`missing graph output '${sig.name}'`);
    return v;
  });
}
